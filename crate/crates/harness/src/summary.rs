//! Per-optimizer statistics over seeds.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub optimizer: String,
    pub mean: f64,
    /// Sample standard deviation across seeds (0 for a single seed).
    pub std: f64,
    pub max: f64,
    pub min: f64,
    pub median: f64,
}

pub const CSV_HEADER: &str = "optimizer,mean,std,max,min,median";

impl SummaryRow {
    pub fn from_scores(optimizer: impl Into<String>, scores: &[f64]) -> Option<Self> {
        if scores.is_empty() {
            return None;
        }
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let std = if scores.len() > 1 {
            (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut sorted = scores.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len().is_multiple_of(2) { (sorted[mid - 1] + sorted[mid]) / 2.0 } else { sorted[mid] };
        Some(SummaryRow {
            optimizer: optimizer.into(),
            mean,
            std,
            max: sorted[sorted.len() - 1],
            min: sorted[0],
            median,
        })
    }

    pub fn csv_line(&self) -> String {
        format!("{},{},{},{},{},{}", self.optimizer, self.mean, self.std, self.max, self.min, self.median)
    }
}

/// Groups per-seed best scores by optimizer label and orders rows best
/// first: descending mean when maximizing, ascending otherwise. Runs with no
/// successful evaluation contribute nothing.
pub fn summarize(scores: impl IntoIterator<Item = (String, Option<f64>)>, maximize: bool) -> Vec<SummaryRow> {
    let mut grouped: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (label, score) in scores {
        let entry = grouped.entry(label).or_default();
        entry.extend(score);
    }
    let mut rows: Vec<SummaryRow> =
        grouped.into_iter().filter_map(|(label, s)| SummaryRow::from_scores(label, &s)).collect();
    rows.sort_by(|a, b| {
        let by_mean = if maximize { b.mean.total_cmp(&a.mean) } else { a.mean.total_cmp(&b.mean) };
        match by_mean {
            Ordering::Equal => a.optimizer.cmp(&b.optimizer),
            other => other,
        }
    });
    rows
}
