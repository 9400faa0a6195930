//! Service and CLI configuration: a TOML file plus environment overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use anyhow::{bail, Context};
use kgqa_core::ambiguity::Thresholds;
use kgqa_core::dialogue::{SessionConfig, DEFAULT_TURN_BUDGET, MAX_PARSE_ATTEMPTS};
use kgqa_core::llm::RemoteConfig;
use kgqa_core::toolbox::DEFAULT_K;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmMode {
    Remote,
    Record,
    #[default]
    Replay,
    Mock,
}

impl FromStr for LlmMode {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "remote" => LlmMode::Remote,
            "record" => LlmMode::Record,
            "replay" => LlmMode::Replay,
            "mock" => LlmMode::Mock,
            other => bail!("unknown LLM mode {other:?}; expected remote, record, replay or mock"),
        })
    }
}

impl fmt::Display for LlmMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LlmMode::Remote => "remote",
            LlmMode::Record => "record",
            LlmMode::Replay => "replay",
            LlmMode::Mock => "mock",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSection {
    pub triples: Option<PathBuf>,
    pub entities: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdSection {
    pub entity: f64,
    pub intent: f64,
}

impl Default for ThresholdSection {
    fn default() -> Self {
        let t = Thresholds::default();
        Self { entity: t.entity, intent: t.intent }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionSection {
    pub turn_budget: usize,
    pub max_parse_attempts: usize,
    pub tool_k: usize,
    pub parallelism: usize,
    /// Directory with replacement prompt files; built-in prompts otherwise.
    pub prompts_dir: Option<PathBuf>,
    pub max_exemplars: Option<usize>,
}

impl Default for SessionSection {
    fn default() -> Self {
        Self {
            turn_budget: DEFAULT_TURN_BUDGET,
            max_parse_attempts: MAX_PARSE_ATTEMPTS,
            tool_k: DEFAULT_K,
            parallelism: 4,
            prompts_dir: None,
            max_exemplars: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub mode: LlmMode,
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub ppl_model: Option<String>,
    pub cassette: Option<PathBuf>,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    pub context_budget: Option<usize>,
}

impl Default for LlmSection {
    fn default() -> Self {
        let r = RemoteConfig::new("http://localhost:8000/v1", "gpt-4o");
        Self {
            mode: LlmMode::default(),
            base_url: r.base_url,
            model: r.model,
            api_key: None,
            ppl_model: None,
            cassette: None,
            max_retries: r.max_retries,
            backoff_ms: r.backoff.as_millis() as u64,
            timeout_secs: r.timeout.as_secs(),
            max_in_flight: r.max_in_flight,
            context_budget: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerSection {
    pub port: u16,
    /// Upper bound on `wait_ms` for event long-polls.
    pub max_wait_ms: u64,
    /// How long a suspended session waits for a clarification.
    pub clarification_timeout_secs: u64,
}

impl Default for ServerSection {
    fn default() -> Self {
        Self { port: 8080, max_wait_ms: 30_000, clarification_timeout_secs: 1800 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub graph: GraphSection,
    pub thresholds: ThresholdSection,
    pub session: SessionSection,
    pub llm: LlmSection,
    pub server: ServerSection,
}

/// Environment variables that override the `[llm]` section.
pub const ENV_KEYS: [&str; 5] = ["LLM_BASE_URL", "LLM_MODEL", "LLM_API_KEY", "PPL_MODEL", "LLM_MODE"];

impl Config {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` if given (defaults otherwise), applies the process
    /// environment and validates. Relative paths in the file are resolved
    /// against the file's directory.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                let mut cfg = Self::parse(&text).with_context(|| format!("parsing config {}", p.display()))?;
                cfg.resolve_relative(p.parent().unwrap_or(Path::new(".")));
                cfg
            }
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> anyhow::Result<()> {
        let get = |k: &str| get(k).filter(|v| !v.is_empty());
        if let Some(v) = get("LLM_BASE_URL") {
            self.llm.base_url = v;
        }
        if let Some(v) = get("LLM_MODEL") {
            self.llm.model = v;
        }
        if let Some(v) = get("LLM_API_KEY") {
            self.llm.api_key = Some(v);
        }
        if let Some(v) = get("PPL_MODEL") {
            self.llm.ppl_model = Some(v);
        }
        if let Some(v) = get("LLM_MODE") {
            self.llm.mode = v.parse()?;
        }
        Ok(())
    }

    fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p.as_mut().filter(|p| p.is_relative()) {
                *path = base.join(&*path);
            }
        };
        fix(&mut self.graph.triples);
        fix(&mut self.graph.entities);
        fix(&mut self.llm.cassette);
        fix(&mut self.session.prompts_dir);
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.thresholds()?;
        if self.session.turn_budget == 0 || self.session.tool_k == 0 || self.session.max_parse_attempts == 0 {
            bail!("turn_budget, tool_k and max_parse_attempts must be positive");
        }
        Ok(())
    }

    pub fn thresholds(&self) -> anyhow::Result<Thresholds> {
        Ok(Thresholds::new(self.thresholds.entity, self.thresholds.intent)?)
    }

    pub fn session_config(&self) -> SessionConfig {
        SessionConfig { turn_budget: self.session.turn_budget, max_parse_attempts: self.session.max_parse_attempts }
    }

    pub fn remote(&self) -> RemoteConfig {
        let mut r = RemoteConfig::new(self.llm.base_url.clone(), self.llm.model.clone());
        r.api_key = self.llm.api_key.clone();
        r.ppl_model = self.llm.ppl_model.clone();
        r.max_retries = self.llm.max_retries;
        r.backoff = Duration::from_millis(self.llm.backoff_ms);
        r.timeout = Duration::from_secs(self.llm.timeout_secs);
        r.max_in_flight = self.llm.max_in_flight;
        if let Some(b) = self.llm.context_budget {
            r.context_budget = b;
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_thresholds_and_mode() {
        let cfg = Config::default();
        assert_eq!((cfg.thresholds.entity, cfg.thresholds.intent), (0.6, 0.8));
        assert_eq!(cfg.session.tool_k, 10);
        assert_eq!(cfg.llm.mode, LlmMode::Replay);
    }

    #[test]
    fn file_values_and_env_overrides() {
        let mut cfg = Config::parse(
            "[thresholds]\nentity = 0.7\n[llm]\nmode = \"mock\"\nmodel = \"from-file\"\n[session]\ntool_k = 5\n",
        )
        .unwrap();
        assert_eq!((cfg.thresholds.entity, cfg.thresholds.intent), (0.7, 0.8));
        cfg.apply_env(|k| match k {
            "LLM_MODEL" => Some("from-env".into()),
            "LLM_MODE" => Some("Remote".into()),
            "LLM_API_KEY" => Some(String::new()),
            _ => None,
        })
        .unwrap();
        assert_eq!(cfg.llm.model, "from-env");
        assert_eq!(cfg.llm.mode, LlmMode::Remote);
        assert_eq!(cfg.llm.api_key, None);
        assert_eq!(cfg.session.tool_k, 5);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(Config::parse("[thresholds]\nentity = 1.5\n").is_err());
        assert!(Config::parse("[session]\nturn_budget = 0\n").is_err());
        assert!(Config::parse("[llm]\nmode = \"live\"\n").is_err());
        assert!(Config::parse("[nope]\n").is_err());
        let mut cfg = Config::default();
        assert!(cfg.apply_env(|k| (k == "LLM_MODE").then(|| "live".into())).is_err());
    }
}
