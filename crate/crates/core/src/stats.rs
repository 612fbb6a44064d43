//! Accuracy aggregation, histograms, skewness and per-year summaries.
//!
//! Accuracies are fractions in [0, 1] throughout; percentages appear only in
//! formatted reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::predictor::{AttemptRecord, ConclusionRunResult, PaperRunResult, Strategy};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum StatsError {
    #[error("{0} needs at least one value")]
    Empty(&'static str),
    #[error("value {0} is outside [0, 1]")]
    OutOfRange(f64),
    #[error("skewness needs at least three values with nonzero variance")]
    Degenerate,
    #[error("no publication year for paper {0}")]
    MissingYear(String),
}

/// Correct attempts over all attempts.
pub fn conclusion_accuracy(attempts: &[AttemptRecord]) -> Result<f64, StatsError> {
    if attempts.is_empty() {
        return Err(StatsError::Empty("conclusion accuracy"));
    }
    let correct = attempts.iter().filter(|a| a.correct).count();
    Ok(correct as f64 / attempts.len() as f64)
}

/// Unweighted mean of conclusion accuracies.
pub fn paper_accuracy(conclusion_accuracies: &[f64]) -> Result<f64, StatsError> {
    mean(conclusion_accuracies).ok_or(StatsError::Empty("paper accuracy"))
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub strategy: Strategy,
    pub model_id: String,
    pub repeats: u32,
    pub mean_conclusion_accuracy: f64,
    pub mean_paper_accuracy: f64,
    pub n_conclusions: usize,
    pub n_papers: usize,
}

/// Groups conclusion results by paper and averages at both levels.
pub fn paper_results(results: &[ConclusionRunResult]) -> Vec<PaperRunResult> {
    let mut by_paper: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in results {
        by_paper.entry(&r.paper_id).or_default().push(r.accuracy);
    }
    by_paper
        .into_iter()
        .map(|(paper_id, accs)| PaperRunResult {
            paper_id: paper_id.to_string(),
            accuracy: mean(&accs).expect("groups are non-empty"),
            n_conclusions: accs.len(),
        })
        .collect()
}

pub fn summarize_run(
    strategy: Strategy,
    model_id: &str,
    repeats: u32,
    results: &[ConclusionRunResult],
) -> Result<AccuracySummary, StatsError> {
    let accs: Vec<f64> = results.iter().map(|r| r.accuracy).collect();
    let mean_conclusion = mean(&accs).ok_or(StatsError::Empty("run summary"))?;
    let papers = paper_results(results);
    let paper_accs: Vec<f64> = papers.iter().map(|p| p.accuracy).collect();
    Ok(AccuracySummary {
        strategy,
        model_id: model_id.to_string(),
        repeats,
        mean_conclusion_accuracy: mean_conclusion,
        mean_paper_accuracy: mean(&paper_accs).expect("non-empty"),
        n_conclusions: results.len(),
        n_papers: papers.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Fixed-width bins over [0, 1]; all bins are half-open except the last.
pub fn histogram(values: &[f64], bins: usize) -> Result<Histogram, StatsError> {
    assert!(bins > 0, "need at least one bin");
    let edges: Vec<f64> = (0..=bins).map(|i| i as f64 / bins as f64).collect();
    let mut counts = vec![0; bins];
    for &v in values {
        if !(0.0..=1.0).contains(&v) {
            return Err(StatsError::OutOfRange(v));
        }
        // compare against the rounded edges so that e.g. 0.3 lands in bin 3
        let bin = edges[1..bins].iter().take_while(|e| **e <= v).count();
        counts[bin] += 1;
    }
    Ok(Histogram {
        bin_edges: edges,
        counts,
    })
}

/// Adjusted Fisher–Pearson sample skewness.
pub fn skewness(values: &[f64]) -> Result<f64, StatsError> {
    let n = values.len();
    if n < 3 {
        return Err(StatsError::Degenerate);
    }
    let nf = n as f64;
    let m = values.iter().sum::<f64>() / nf;
    let m2 = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / nf;
    let m3 = values.iter().map(|v| (v - m).powi(3)).sum::<f64>() / nf;
    if m2 <= 0.0 {
        return Err(StatsError::Degenerate);
    }
    let g1 = m3 / m2.powf(1.5);
    Ok(g1 * (nf * (nf - 1.0)).sqrt() / (nf - 2.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearRow {
    pub year: i32,
    pub mean_paper_accuracy: f64,
    pub n_papers: usize,
}

/// Mean paper accuracy per publication year, ascending.
pub fn accuracy_by_year(
    papers: &[PaperRunResult],
    years: &BTreeMap<String, i32>,
) -> Result<Vec<YearRow>, StatsError> {
    let mut groups: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
    for p in papers {
        let year = years
            .get(&p.paper_id)
            .ok_or_else(|| StatsError::MissingYear(p.paper_id.clone()))?;
        groups.entry(*year).or_default().push(p.accuracy);
    }
    Ok(groups
        .into_iter()
        .map(|(year, accs)| YearRow {
            year,
            mean_paper_accuracy: mean(&accs).expect("non-empty"),
            n_papers: accs.len(),
        })
        .collect())
}
