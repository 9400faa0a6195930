//! A SPARQL subset: basic graph patterns, comparison filters, a single
//! ORDER BY key, LIMIT, DISTINCT and COUNT.
//!
//! That is enough for one- and two-hop lookups, conjunctions, compositions,
//! comparatives (`FILTER`) and superlatives (`ORDER BY ... LIMIT 1`).

mod exec;
mod parser;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{Literal, LiteralKind, Term};

pub use exec::{compare_terms, execute};
pub use parser::parse;

/// IRI that `ns:` expands to unless a query redeclares it. IRIs under this
/// base resolve to bare fixture ids (`ns:m.01` is the entity `m.01`).
pub const FIXTURE_NAMESPACE: &str = "http://rdf.freebase.com/ns/";
pub const XSD_NAMESPACE: &str = "http://www.w3.org/2001/XMLSchema#";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SparqlError {
    #[error("syntax error at {position}: expected {}, found {found}", expected.join(" | "))]
    Syntax { position: usize, expected: Vec<String>, found: String },
    #[error("unsupported feature at {position}: {feature}")]
    Unsupported { position: usize, feature: String },
    #[error("unknown prefix {0:?}")]
    UnknownPrefix(String),
    #[error("invalid query: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Iri {
    /// Resolved into the fixture id space.
    Local(String),
    Full(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PatternTerm {
    Var(String),
    Iri(Iri),
    Literal(Literal),
}

impl PatternTerm {
    pub fn var(&self) -> Option<&str> {
        match self {
            PatternTerm::Var(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TriplePattern {
    pub subject: PatternTerm,
    pub predicate: PatternTerm,
    pub object: PatternTerm,
}

impl TriplePattern {
    pub fn terms(&self) -> [&PatternTerm; 3] {
        [&self.subject, &self.predicate, &self.object]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CompareOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CompareOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "=",
            CompareOp::Ne => "!=",
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Filter {
    pub var: String,
    pub op: CompareOp,
    pub operand: PatternTerm,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OrderBy {
    pub var: String,
    pub descending: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QueryForm {
    Select,
    Count,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub prefixes: Vec<(String, String)>,
    pub form: QueryForm,
    pub distinct: bool,
    /// Projected variables; for COUNT, the single counted variable.
    pub projection: Vec<String>,
    pub patterns: Vec<TriplePattern>,
    pub filters: Vec<Filter>,
    pub order: Option<OrderBy>,
    pub limit: Option<usize>,
}

impl Query {
    /// Variables bound by the graph patterns, in first-occurrence order.
    pub fn pattern_vars(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for v in self.patterns.iter().flat_map(|p| p.terms()).filter_map(PatternTerm::var) {
            if !out.contains(&v) {
                out.push(v);
            }
        }
        out
    }

    pub(crate) fn validate(&self) -> Result<(), SparqlError> {
        if self.patterns.is_empty() {
            return Err(SparqlError::Invalid("WHERE clause has no triple patterns".into()));
        }
        if self.projection.is_empty() {
            return Err(SparqlError::Invalid("nothing projected".into()));
        }
        if self.limit == Some(0) {
            return Err(SparqlError::Invalid("LIMIT must be positive".into()));
        }
        let bound = self.pattern_vars();
        let used = self
            .projection
            .iter()
            .map(String::as_str)
            .chain(self.order.iter().map(|o| o.var.as_str()))
            .chain(self.filters.iter().flat_map(|f| std::iter::once(f.var.as_str()).chain(f.operand.var())));
        for v in used {
            if !bound.contains(&v) {
                return Err(SparqlError::Invalid(format!("variable ?{v} does not appear in any pattern")));
            }
        }
        Ok(())
    }

    fn fixture_prefix(&self) -> Option<&str> {
        let ns = self.prefixes.iter().rev().find(|(p, _)| p == "ns").map(|(_, iri)| iri.as_str());
        match ns {
            None | Some(FIXTURE_NAMESPACE) => Some("ns"),
            Some(_) => None,
        }
    }
}

/// Tabular query result. Rows are in the query's ORDER BY order, otherwise
/// sorted lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Term>>,
}

impl ResultTable {
    pub fn is_count(&self) -> bool {
        self.columns == ["count"] && self.rows.len() == 1
    }

    /// Answer set for scoring: canonical values of the first column.
    pub fn answer_set(&self) -> std::collections::BTreeSet<String> {
        self.rows.iter().filter_map(|r| r.first()).map(Term::canonical).collect()
    }
}

fn is_plain_local(local: &str) -> bool {
    !local.is_empty()
        && !local.ends_with('.')
        && !local.starts_with('.')
        && local.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
}

fn write_string(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\t' => f.write_str("\\t")?,
            '\r' => f.write_str("\\r")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

struct TermDisplay<'a> {
    term: &'a PatternTerm,
    fixture_prefix: Option<&'a str>,
}

impl fmt::Display for TermDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.term {
            PatternTerm::Var(v) => write!(f, "?{v}"),
            PatternTerm::Iri(Iri::Local(local)) => match self.fixture_prefix {
                Some(p) if is_plain_local(local) => write!(f, "{p}:{local}"),
                _ => write!(f, "<{FIXTURE_NAMESPACE}{local}>"),
            },
            PatternTerm::Iri(Iri::Full(iri)) => write!(f, "<{iri}>"),
            PatternTerm::Literal(lit) => {
                let v = lit.value();
                let bare_int = |s: &str| {
                    let b = s.strip_prefix('-').unwrap_or(s);
                    !b.is_empty() && b.chars().all(|c| c.is_ascii_digit())
                };
                let bare_float = |s: &str| {
                    let b = s.strip_prefix('-').unwrap_or(s);
                    match b.split_once('.') {
                        Some((i, d)) => {
                            i.chars().all(|c| c.is_ascii_digit())
                                && !d.is_empty()
                                && d.chars().all(|c| c.is_ascii_digit())
                        }
                        None => false,
                    }
                };
                match lit.kind() {
                    LiteralKind::Text => write_string(f, v),
                    LiteralKind::Integer if bare_int(v) => f.write_str(v),
                    LiteralKind::Float if bare_float(v) => f.write_str(v),
                    kind => {
                        write_string(f, v)?;
                        let dt = match kind {
                            LiteralKind::Integer => "integer",
                            LiteralKind::Float => "double",
                            _ => "dateTime",
                        };
                        write!(f, "^^<{XSD_NAMESPACE}{dt}>")
                    }
                }
            }
        }
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fixture_prefix = self.fixture_prefix();
        let t = |term| TermDisplay { term, fixture_prefix };
        for (prefix, iri) in &self.prefixes {
            writeln!(f, "PREFIX {prefix}: <{iri}>")?;
        }
        f.write_str("SELECT ")?;
        if self.distinct {
            f.write_str("DISTINCT ")?;
        }
        match self.form {
            QueryForm::Select => {
                let vars: Vec<String> = self.projection.iter().map(|v| format!("?{v}")).collect();
                f.write_str(&vars.join(" "))?;
            }
            QueryForm::Count => write!(f, "COUNT(?{})", self.projection[0])?,
        }
        f.write_str(" WHERE { ")?;
        for (i, p) in self.patterns.iter().enumerate() {
            if i > 0 {
                f.write_str(" . ")?;
            }
            write!(f, "{} {} {}", t(&p.subject), t(&p.predicate), t(&p.object))?;
        }
        for flt in &self.filters {
            write!(f, " FILTER(?{} {} {})", flt.var, flt.op.symbol(), t(&flt.operand))?;
        }
        f.write_str(" }")?;
        if let Some(o) = &self.order {
            write!(f, " ORDER BY {}(?{})", if o.descending { "DESC" } else { "ASC" }, o.var)?;
        }
        if let Some(n) = self.limit {
            write!(f, " LIMIT {n}")?;
        }
        Ok(())
    }
}
