//! Interactive question answering over a knowledge graph.
//!
//! A tool-using agent turns a natural-language question into SPARQL. After
//! every tool call a clarification plugin scores how ambiguous the retrieved
//! entities or predicates are and, above a threshold, hints the agent to ask
//! the user before committing to a query.

pub mod ambiguity;
pub mod dialogue;
pub mod kg;
pub mod llm;
pub mod pipeline;
pub mod sparql;
pub mod toolbox;

pub use ambiguity::{AmbiguityKind, AmbiguityReport, ClarificationPlugin, Thresholds};
pub use dialogue::{run_session, Action, SessionConfig, SessionState, Transcript};
pub use kg::{EntityId, EntityRecord, KnowledgeGraph, Literal, LiteralKind, Term, Triple};
pub use sparql::{execute, parse, Query, ResultTable};
