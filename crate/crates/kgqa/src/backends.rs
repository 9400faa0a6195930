//! Wires a loaded graph and the configured model backends into a session
//! environment.
//!
//! Every mode uses the same four backend ids so a cassette recorded once
//! serves replay and mock runs: `agent`, `user`, `ppl` and `gen`. Mock mode
//! replays the agent and generator but scores perplexity with the
//! edit-distance mock and answers clarifications with the rule-based user.

use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context};
use kgqa_core::ambiguity::ClarificationPlugin;
use kgqa_core::dialogue::{PromptSet, SessionEnv};
use kgqa_core::kg::KnowledgeGraph;
use kgqa_core::llm::{
    Cassette, CassetteWriter, ChatBackend, MockPerplexity, PerplexityProvider, Recorder, RemoteBackend, ReplayBackend,
};
use kgqa_core::pipeline::UserSource;
use kgqa_core::toolbox::Toolbox;
use tracing::info;

use crate::config::{Config, LlmMode};

pub const AGENT_ID: &str = "agent";
pub const USER_ID: &str = "user";
pub const PPL_ID: &str = "ppl";
pub const GEN_ID: &str = "gen";

pub fn load_graph(cfg: &Config) -> anyhow::Result<Arc<KnowledgeGraph>> {
    let (Some(triples), Some(entities)) = (&cfg.graph.triples, &cfg.graph.entities) else {
        bail!("no graph configured; pass --triples and --entities or set [graph] in the config file");
    };
    let graph = KnowledgeGraph::load(triples, entities)
        .with_context(|| format!("loading graph from {} and {}", triples.display(), entities.display()))?;
    info!(triples = graph.triples().len(), "graph loaded");
    Ok(Arc::new(graph))
}

pub fn load_prompts(cfg: &Config) -> anyhow::Result<PromptSet> {
    let mut prompts = match &cfg.session.prompts_dir {
        Some(dir) => PromptSet::load(dir).with_context(|| format!("loading prompts from {}", dir.display()))?,
        None => PromptSet::builtin(),
    };
    if let Some(n) = cfg.session.max_exemplars {
        prompts = prompts.with_max_exemplars(n);
    }
    Ok(prompts)
}

/// Everything a command needs to run sessions.
#[derive(Clone)]
pub struct Runtime {
    pub graph: Arc<KnowledgeGraph>,
    pub env: SessionEnv,
    pub users: UserSource,
    pub gen: Arc<dyn ChatBackend>,
    pub mode: LlmMode,
}

struct Models {
    agent: Arc<dyn ChatBackend>,
    user: Arc<dyn ChatBackend>,
    ppl: Arc<dyn PerplexityProvider>,
    gen: Arc<dyn ChatBackend>,
}

fn cassette_path(cfg: &Config) -> anyhow::Result<&Path> {
    cfg.llm
        .cassette
        .as_deref()
        .with_context(|| format!("mode {} needs a cassette; pass --cassette or set llm.cassette", cfg.llm.mode))
}

fn models(cfg: &Config) -> anyhow::Result<Models> {
    Ok(match cfg.llm.mode {
        LlmMode::Remote => {
            let remote = Arc::new(RemoteBackend::new(cfg.remote()));
            Models { agent: remote.clone(), user: remote.clone(), ppl: remote.clone(), gen: remote }
        }
        LlmMode::Record => {
            let writer = CassetteWriter::open(cassette_path(cfg)?)?;
            let remote = Arc::new(RemoteBackend::new(cfg.remote()));
            let chat = |id: &str| -> Arc<dyn ChatBackend> { Arc::new(Recorder::new(id, remote.clone(), writer.clone())) };
            Models {
                agent: chat(AGENT_ID),
                user: chat(USER_ID),
                ppl: Arc::new(Recorder::new(PPL_ID, remote.clone(), writer.clone())),
                gen: chat(GEN_ID),
            }
        }
        LlmMode::Replay | LlmMode::Mock => {
            let path = cassette_path(cfg)?;
            let cassette = Arc::new(Cassette::load(path).with_context(|| format!("loading cassette {}", path.display()))?);
            let replay = |id: &str| Arc::new(ReplayBackend::new(id, cassette.clone()));
            Models { agent: replay(AGENT_ID), user: replay(USER_ID), ppl: replay(PPL_ID), gen: replay(GEN_ID) }
        }
    })
}

/// The backend that rewrites clarified questions.
pub fn gen_backend(cfg: &Config) -> anyhow::Result<Arc<dyn ChatBackend>> {
    Ok(models(cfg)?.gen)
}

impl Runtime {
    pub fn new(cfg: &Config, graph: Arc<KnowledgeGraph>) -> anyhow::Result<Self> {
        let prompts = Arc::new(load_prompts(cfg)?);
        let m = models(cfg)?;
        let (ppl, users): (Arc<dyn PerplexityProvider>, _) = if cfg.llm.mode == LlmMode::Mock {
            (Arc::new(MockPerplexity), UserSource::RuleBased(graph.clone()))
        } else {
            (m.ppl, UserSource::Llm { backend: m.user, instruction: prompts.user_instruction.clone() })
        };
        let env = SessionEnv {
            config: cfg.session_config(),
            toolbox: Toolbox::new(graph.clone()).with_k(cfg.session.tool_k),
            plugin: ClarificationPlugin::bayesian(cfg.thresholds()?, ppl),
            agent: m.agent,
            prompts,
        };
        Ok(Self { graph, env, users, gen: m.gen, mode: cfg.llm.mode })
    }

    pub fn from_config(cfg: &Config) -> anyhow::Result<Self> {
        Self::new(cfg, load_graph(cfg)?)
    }
}
