//! File formats: JSON Lines datasets and transcripts, CSV reports.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{GridPoint, Sweep, ItemTranscript, MetricsReport, PipelineError};
use crate::ambiguity::AmbiguityKind;
use crate::dialogue::ScoreRecord;

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| PipelineError::Format {
            path: path.display().to_string(),
            line: n + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), PipelineError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for row in rows {
        let line = serde_json::to_string(row).map_err(|e| PipelineError::InvalidArgument(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| PipelineError::InvalidArgument(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per item.
pub fn per_item_csv(report: &MetricsReport) -> String {
    let mut out = String::from("id,category,f1,rhits1,em,entity_clar,intent_clar,failed\n");
    for r in &report.per_item {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            csv_field(&r.id),
            r.category,
            r.f1,
            r.rhits1,
            r.em,
            r.entity_clarifications,
            r.intent_clarifications,
            r.failure.is_some()
        );
    }
    out
}

pub fn grid_csv(points: &[GridPoint]) -> String {
    let mut out = String::from("entity_t,intent_t,f1,mean_rounds,entity_rounds,intent_rounds,sweep\n");
    for p in points {
        let sweep = match p.sweep {
            Sweep::Entity => "entity",
            Sweep::Intent => "intent",
        };
        let _ = writeln!(
            out,
            "{:.1},{:.1},{},{},{},{},{sweep}",
            p.entity_threshold,
            p.intent_threshold,
            p.overall_f1,
            p.mean_clarification_rounds,
            p.mean_entity_rounds,
            p.mean_intent_rounds
        );
    }
    out
}

fn transcript_file(dir: &Path, id: &str) -> PathBuf {
    let safe: String = id.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect();
    dir.join(format!("{safe}.json"))
}

/// Writes one `<id>.json` per transcript.
pub fn save_transcripts(dir: &Path, transcripts: &[ItemTranscript]) -> Result<(), PipelineError> {
    fs::create_dir_all(dir)?;
    for t in transcripts {
        write_json(&transcript_file(dir, &t.id), t)?;
    }
    Ok(())
}

/// Reads every `*.json` in `dir`, sorted by item id.
pub fn load_transcripts(dir: &Path) -> Result<Vec<ItemTranscript>, PipelineError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "json") {
            let text = fs::read_to_string(&path)?;
            out.push(serde_json::from_str::<ItemTranscript>(&text).map_err(|e| PipelineError::Format {
                path: path.display().to_string(),
                line: e.line(),
                reason: e.to_string(),
            })?);
        }
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

/// Ambiguity score of one plugin decision, tagged with its item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    #[serde(default)]
    pub id: String,
    #[serde(flatten)]
    pub record: ScoreRecord,
}

pub fn score_rows(transcripts: &[ItemTranscript]) -> Vec<ScoreRow> {
    transcripts
        .iter()
        .flat_map(|t| t.transcript.scores.iter().map(|r| ScoreRow { id: t.id.clone(), record: r.clone() }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub kind: AmbiguityKind,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Histogram of scores per kind over `bins` equal-width bins on [0, 1].
/// The last bin is closed so a score of 1.0 lands in it.
pub fn score_distribution(rows: &[ScoreRow], bins: usize) -> Vec<Bin> {
    let bins = bins.max(1);
    let mut out = Vec::with_capacity(2 * bins);
    for kind in [AmbiguityKind::Entity, AmbiguityKind::Intent] {
        let mut counts = vec![0usize; bins];
        for r in rows.iter().filter(|r| r.record.kind == kind) {
            let idx = ((r.record.score.clamp(0.0, 1.0) * bins as f64).floor() as usize).min(bins - 1);
            counts[idx] += 1;
        }
        for (i, count) in counts.into_iter().enumerate() {
            out.push(Bin { kind, lo: i as f64 / bins as f64, hi: (i + 1) as f64 / bins as f64, count });
        }
    }
    out
}

pub fn distribution_csv(bins: &[Bin]) -> String {
    let mut out = String::from("kind,bin_lo,bin_hi,count\n");
    for b in bins {
        let _ = writeln!(out, "{},{:.2},{:.2},{}", b.kind, b.lo, b.hi, b.count);
    }
    out
}
