//! Command line definitions and their implementations.

use std::fs;
use std::io::{self, BufRead, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use kgqa_core::dialogue::{run_session, Clarifier, EventKind, SessionEvent};
use kgqa_core::pipeline::io::{self as pio, ScoreRow};
use kgqa_core::pipeline::{
    build_unambiguous_item, dataset_stats, evaluate_dataset, grid_search, parse_grid, EvalItem, UnAmbItem,
};

use crate::backends::{gen_backend, load_graph, Runtime};
use crate::config::{Config, LlmMode};
use crate::server::{self, Hub};

#[derive(Debug, Parser)]
#[command(name = "kgqa", version, about = "Interactive question answering over a knowledge graph")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, global = true, env = "KGQA_CONFIG")]
    pub config: Option<PathBuf>,
    /// Triples file (tab-separated subject, predicate, object).
    #[arg(long, global = true)]
    pub triples: Option<PathBuf>,
    /// Entity records (JSON Lines).
    #[arg(long, global = true)]
    pub entities: Option<PathBuf>,
    /// Model backend mode: remote, record, replay or mock.
    #[arg(long, global = true)]
    pub mode: Option<LlmMode>,
    /// Cassette file for record, replay and mock modes.
    #[arg(long, global = true)]
    pub cassette: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and validate a graph, then print its size.
    Load,
    /// Answer one question.
    Ask {
        question: String,
        /// Read clarification responses from standard input.
        #[arg(long)]
        interactive: bool,
        /// Gold SPARQL for the simulated user when not interactive.
        #[arg(long)]
        gold: Option<String>,
        /// Write the full transcript as JSON.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Run a dataset through simulated sessions and score it.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        /// Output directory for the report, per-item CSV, scores and transcripts.
        #[arg(long, default_value = "runs/eval")]
        out: PathBuf,
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Sweep one threshold at a time with the other held at 0.5.
    Grid {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "0.5:0.9:0.1")]
        entity: String,
        #[arg(long, default_value = "0.5:0.9:0.1")]
        intent: String,
        /// CSV output; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Rewrite clarified questions into unambiguous ones.
    BuildUnamb {
        #[arg(long)]
        transcripts: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize an unambiguous dataset.
    Stats {
        #[arg(long)]
        unamb: PathBuf,
    },
    /// Run the HTTP session service.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
    /// Histogram of ambiguity scores per kind.
    PlotDist {
        /// A `scores.jsonl` written by eval, or a transcripts directory.
        #[arg(long)]
        reports: PathBuf,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl GlobalArgs {
    pub fn config(&self) -> anyhow::Result<Config> {
        let mut cfg = Config::load(self.config.as_deref())?;
        if let Some(p) = &self.triples {
            cfg.graph.triples = Some(p.clone());
        }
        if let Some(p) = &self.entities {
            cfg.graph.entities = Some(p.clone());
        }
        if let Some(m) = self.mode {
            cfg.llm.mode = m;
        }
        if let Some(p) = &self.cassette {
            cfg.llm.cassette = Some(p.clone());
        }
        Ok(cfg)
    }
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn describe(e: &SessionEvent) -> String {
    let field = |k: &str| e.payload.get(k).map(String::as_str).unwrap_or("");
    match e.kind {
        EventKind::Thought => format!("thought: {}", field("text")),
        EventKind::ToolCall => format!("call: {}", field("call")),
        EventKind::Observation => format!("observation: {}", field("text")),
        EventKind::Hint => format!("hint: {} score {} (threshold {})", field("kind"), field("score"), field("threshold")),
        EventKind::ClarificationRequest => format!("agent asks: {}", field("text")),
        EventKind::ClarificationResponse => format!("user: {}", field("text")),
        EventKind::FinalAnswer => format!("final: {}\nanswers: {}", field("sparql"), field("answers")),
        EventKind::Error => format!("error: {}", field("reason")),
    }
}

struct StdinClarifier;

impl Clarifier for StdinClarifier {
    fn respond(&mut self, _request: &str) -> Result<String, String> {
        print!("> ");
        io::stdout().flush().map_err(|e| e.to_string())?;
        let mut line = String::new();
        match io::stdin().lock().read_line(&mut line) {
            Ok(0) => Err("standard input closed".into()),
            Ok(_) => Ok(line.trim().to_string()),
            Err(e) => Err(e.to_string()),
        }
    }
}

struct NoClarifier;

impl Clarifier for NoClarifier {
    fn respond(&mut self, _request: &str) -> Result<String, String> {
        Err("no clarification source; pass --interactive or --gold".into())
    }
}

fn load(cfg: &Config) -> anyhow::Result<()> {
    let graph = load_graph(cfg)?;
    println!("triples: {}", graph.triples().len());
    println!("entities: {}", graph.entity_count());
    println!("predicates: {}", graph.predicates().count());
    Ok(())
}

fn ask(cfg: &Config, question: &str, interactive: bool, gold: Option<String>, transcript: Option<&Path>) -> anyhow::Result<()> {
    let rt = Runtime::from_config(cfg)?;
    let mut clarifier: Box<dyn Clarifier> = match (&gold, interactive) {
        (_, true) => Box::new(StdinClarifier),
        (Some(g), false) => rt.users.for_item(g),
        (None, false) => Box::new(NoClarifier),
    };
    let listener = Arc::new(|e: &SessionEvent| println!("{}", describe(e)));
    let t = run_session(question, &rt.env, clarifier.as_mut(), gold, Some(listener));
    if let Some(path) = transcript {
        pio::write_json(path, &t)?;
    }
    if let Some(reason) = &t.session.failure {
        bail!("session failed: {reason}");
    }
    Ok(())
}

fn dataset(path: &Path) -> anyhow::Result<Vec<EvalItem>> {
    let items: Vec<EvalItem> = pio::read_jsonl(path).with_context(|| format!("reading dataset {}", path.display()))?;
    if items.is_empty() {
        bail!("dataset {} is empty", path.display());
    }
    Ok(items)
}

fn eval(cfg: &Config, path: &Path, out: &Path, parallelism: Option<usize>) -> anyhow::Result<()> {
    let items = dataset(path)?;
    let rt = Runtime::from_config(cfg)?;
    let run = evaluate_dataset(&items, &rt.env, &rt.users, parallelism.unwrap_or(cfg.session.parallelism));
    fs::create_dir_all(out)?;
    pio::write_json(&out.join("report.json"), &run.report)?;
    fs::write(out.join("per_item.csv"), pio::per_item_csv(&run.report))?;
    pio::write_jsonl(&out.join("scores.jsonl"), &pio::score_rows(&run.transcripts))?;
    pio::save_transcripts(&out.join("transcripts"), &run.transcripts)?;

    let r = &run.report;
    println!("category,count,f1,rhits1,em");
    for (cat, a) in &r.per_category {
        println!("{cat},{},{:.4},{:.4},{:.4}", a.count, a.f1, a.rhits1, a.em);
    }
    println!("overall,{},{:.4},{:.4},{:.4}", r.overall.count, r.overall.f1, r.overall.rhits1, r.overall.em);
    println!(
        "mean clarifications: entity {:.2}, intent {:.2}",
        r.mean_entity_clarifications, r.mean_intent_clarifications
    );
    for (id, why) in &r.failures {
        eprintln!("failed {id}: {why}");
    }
    Ok(())
}

fn grid(cfg: &Config, path: &Path, entity: &str, intent: &str, out: Option<&Path>, parallelism: Option<usize>) -> anyhow::Result<()> {
    let items = dataset(path)?;
    let rt = Runtime::from_config(cfg)?;
    let points = grid_search(
        &items,
        &parse_grid(entity)?,
        &parse_grid(intent)?,
        &rt.env,
        &rt.users,
        parallelism.unwrap_or(cfg.session.parallelism),
    )?;
    emit(out, &pio::grid_csv(&points))
}

fn build_unamb(cfg: &Config, dir: &Path, out: &Path) -> anyhow::Result<()> {
    let transcripts = pio::load_transcripts(dir).with_context(|| format!("reading transcripts in {}", dir.display()))?;
    if transcripts.is_empty() {
        bail!("no transcripts in {}", dir.display());
    }
    let gen = gen_backend(cfg)?;
    let prompts = crate::backends::load_prompts(cfg)?;
    let items = transcripts
        .iter()
        .map(|t| build_unambiguous_item(&t.id, &t.transcript, gen.as_ref(), &prompts))
        .collect::<Result<Vec<_>, _>>()?;
    pio::write_jsonl(out, &items)?;
    print!("{}", dataset_stats(&items)?.to_csv());
    Ok(())
}

fn stats(path: &Path) -> anyhow::Result<()> {
    let items: Vec<UnAmbItem> = pio::read_jsonl(path).with_context(|| format!("reading {}", path.display()))?;
    print!("{}", dataset_stats(&items)?.to_csv());
    Ok(())
}

fn plot_dist(path: &Path, bins: usize, out: Option<&Path>) -> anyhow::Result<()> {
    if bins == 0 {
        bail!("--bins must be positive");
    }
    let rows: Vec<ScoreRow> = if path.is_dir() {
        pio::score_rows(&pio::load_transcripts(path)?)
    } else {
        pio::read_jsonl(path).with_context(|| format!("reading {}", path.display()))?
    };
    emit(out, &pio::distribution_csv(&pio::score_distribution(&rows, bins)))
}

fn serve(cfg: &Config, host: IpAddr, port: Option<u16>) -> anyhow::Result<()> {
    let rt = Runtime::from_config(cfg)?;
    let hub = Hub::new(rt.env, cfg.server.clone());
    let addr = SocketAddr::new(host, port.unwrap_or(cfg.server.port));
    tokio::runtime::Runtime::new()?.block_on(server::serve(hub, addr))
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = cli.global.config()?;
    match cli.command {
        Command::Load => load(&cfg),
        Command::Ask { question, interactive, gold, transcript } => {
            ask(&cfg, &question, interactive, gold, transcript.as_deref())
        }
        Command::Eval { dataset, out, parallelism } => eval(&cfg, &dataset, &out, parallelism),
        Command::Grid { dataset, entity, intent, out, parallelism } => {
            grid(&cfg, &dataset, &entity, &intent, out.as_deref(), parallelism)
        }
        Command::BuildUnamb { transcripts, out } => build_unamb(&cfg, &transcripts, &out),
        Command::Stats { unamb } => stats(&unamb),
        Command::Serve { port, host } => serve(&cfg, host, port),
        Command::PlotDist { reports, bins, out } => plot_dist(&reports, bins, out.as_deref()),
    }
}
