//! Output files and log replay.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::experiment::TrialLogRecord;
use crate::summary::{summarize, SummaryRow, CSV_HEADER};

pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const TRIALS_JSONL: &str = "trials.jsonl";
pub const CONFIG_TOML: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub maximize: bool,
    pub rows: Vec<SummaryRow>,
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_line());
        s.push('\n');
    }
    s
}

pub fn trials_jsonl(log: &[TrialLogRecord]) -> anyhow::Result<String> {
    let mut s = String::new();
    for rec in log {
        s.push_str(&serde_json::to_string(rec)?);
        s.push('\n');
    }
    Ok(s)
}

fn write(path: &Path, contents: &str) -> anyhow::Result<()> {
    let mut f = fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    f.write_all(contents.as_bytes()).with_context(|| format!("cannot write {}", path.display()))
}

/// Writes the summary table (CSV and JSON), the trial log and the resolved
/// config into `dir`. Returns the paths written.
pub fn emit_outputs(
    dir: &Path,
    summary: &[SummaryRow],
    log: &[TrialLogRecord],
    cfg: &RunConfig,
) -> anyhow::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let file = SummaryFile { maximize: cfg.maximize, rows: summary.to_vec() };
    let outputs = [
        (SUMMARY_CSV, summary_csv(summary)),
        (SUMMARY_JSON, serde_json::to_string_pretty(&file)? + "\n"),
        (TRIALS_JSONL, trials_jsonl(log)?),
        (CONFIG_TOML, cfg.to_toml()?),
    ];
    let mut written = Vec::new();
    for (name, contents) in outputs {
        let path = dir.join(name);
        write(&path, &contents)?;
        written.push(path);
    }
    Ok(written)
}

pub fn read_log(path: &Path) -> anyhow::Result<Vec<TrialLogRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}: bad log record", path.display(), i + 1)))
        .collect()
}

/// Per-run best raw score, taken at the lowest successful objective.
pub fn best_scores(log: &[TrialLogRecord]) -> Vec<(String, Option<f64>)> {
    let mut order = Vec::new();
    let mut best: BTreeMap<&str, (String, Option<(f64, f64)>)> = BTreeMap::new();
    for rec in log {
        let entry = best.entry(&rec.run_id).or_insert_with(|| {
            order.push(rec.run_id.as_str());
            (rec.optimizer.clone(), None)
        });
        if rec.error.is_some() {
            continue;
        }
        if let (Some(obj), Some(raw)) = (rec.objective, rec.raw_score) {
            if entry.1.is_none_or(|(o, _)| obj < o) {
                entry.1 = Some((obj, raw));
            }
        }
    }
    order.into_iter().map(|id| best[id].clone()).map(|(label, b)| (label, b.map(|(_, raw)| raw))).collect()
}

pub fn summary_from_log(log: &[TrialLogRecord], maximize: bool) -> Vec<SummaryRow> {
    summarize(best_scores(log), maximize)
}

/// Recomputes the summary from a trial log and checks it against the
/// `summary.json` stored next to it.
pub fn replay(log_path: &Path) -> anyhow::Result<Vec<SummaryRow>> {
    let log = read_log(log_path)?;
    let summary_path = log_path.with_file_name(SUMMARY_JSON);
    let text = fs::read_to_string(&summary_path).with_context(|| format!("reading {}", summary_path.display()))?;
    let stored: SummaryFile =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", summary_path.display()))?;
    let recomputed = summary_from_log(&log, stored.maximize);
    ensure!(
        recomputed.len() == stored.rows.len(),
        "summary has {} rows but the log yields {}",
        stored.rows.len(),
        recomputed.len()
    );
    for (a, b) in recomputed.iter().zip(&stored.rows) {
        if a != b {
            bail!("summary mismatch for `{}`: stored {:?}, recomputed {:?}", b.optimizer, b, a);
        }
    }
    Ok(recomputed)
}
