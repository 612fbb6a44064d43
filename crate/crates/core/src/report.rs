//! Per-cell analysis and the CSV and markdown reports rendered from it.
//!
//! A cell is one predictor model run with one prompting strategy. Floats in
//! the analysis are rounded to twelve significant digits so that files are
//! byte-stable across platforms whose libm differ in the last ulp.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotator::AnnotationRecord;
use crate::predictor::{ConclusionRunResult, Strategy};
use crate::regression::{build_design_matrix, RegressionError, TopicScaling, REGRESSOR_NAMES};
use crate::stats::{
    accuracy_by_year, histogram, paper_results, skewness, summarize_run, AccuracySummary,
    Histogram, StatsError, YearRow,
};

pub const HISTOGRAM_BINS: usize = 10;

/// Header of the regression table.
pub const REGRESSION_HEADER: [&str; 6] = [
    "Variable",
    "Coefficient",
    "Std. Error",
    "t",
    "P>|t|",
    "Significance",
];

pub const REGRESSION_FOOTER: [&str; 5] = [
    "R^2",
    "Adj. R^2",
    "F-statistic",
    "Prob. (F-statistic)",
    "Observations",
];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("csv buffer: {0}")]
    Buffer(String),
}

/// Rounds to twelve significant digits.
pub fn stable(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

fn stable_opt(x: Option<f64>) -> Option<f64> {
    x.map(stable)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub name: String,
    pub coefficient: f64,
    pub std_error: f64,
    pub t: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RegressionOutcome {
    Fitted {
        rows: Vec<CoefficientRow>,
        r2: f64,
        adj_r2: f64,
        f_stat: f64,
        f_pvalue: f64,
        n: usize,
        df_resid: usize,
        condition_number: f64,
        excluded_refused: usize,
    },
    /// The model could not be estimated; the table is reported with NA values.
    Failed {
        reason: String,
        dependent_columns: Vec<String>,
        condition_number: Option<f64>,
        n: usize,
        excluded_refused: usize,
    },
}

impl RegressionOutcome {
    pub fn n(&self) -> usize {
        match self {
            RegressionOutcome::Fitted { n, .. } | RegressionOutcome::Failed { n, .. } => *n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAnalysis {
    pub cell: String,
    pub summary: AccuracySummary,
    pub conclusion_histogram: Histogram,
    pub paper_histogram: Histogram,
    /// `None` when there are fewer than three values or no spread.
    pub conclusion_skewness: Option<f64>,
    pub paper_skewness: Option<f64>,
    pub accuracy_by_year: Vec<YearRow>,
    pub topic_scale: TopicScaling,
    pub regression: RegressionOutcome,
}

/// Everything the analysis of one cell needs.
pub struct CellInput<'a> {
    pub cell: &'a str,
    pub strategy: Strategy,
    pub model_id: &'a str,
    pub repeats: u32,
    pub results: &'a [ConclusionRunResult],
    pub annotations: &'a [AnnotationRecord],
    pub years: &'a BTreeMap<String, i32>,
    pub topic_scale: TopicScaling,
}

pub fn analyze_cell(input: &CellInput<'_>) -> Result<CellAnalysis, ReportError> {
    let mut summary = summarize_run(input.strategy, input.model_id, input.repeats, input.results)?;
    summary.mean_conclusion_accuracy = stable(summary.mean_conclusion_accuracy);
    summary.mean_paper_accuracy = stable(summary.mean_paper_accuracy);

    let conclusion_accs: Vec<f64> = input.results.iter().map(|r| r.accuracy).collect();
    let papers = paper_results(input.results);
    let paper_accs: Vec<f64> = papers.iter().map(|p| p.accuracy).collect();

    let mut by_year = accuracy_by_year(&papers, input.years)?;
    for row in &mut by_year {
        row.mean_paper_accuracy = stable(row.mean_paper_accuracy);
    }

    Ok(CellAnalysis {
        cell: input.cell.to_string(),
        summary,
        conclusion_histogram: histogram(&conclusion_accs, HISTOGRAM_BINS)?,
        paper_histogram: histogram(&paper_accs, HISTOGRAM_BINS)?,
        conclusion_skewness: stable_opt(skewness(&conclusion_accs).ok()),
        paper_skewness: stable_opt(skewness(&paper_accs).ok()),
        accuracy_by_year: by_year,
        topic_scale: input.topic_scale,
        regression: regress(input),
    })
}

fn regress(input: &CellInput<'_>) -> RegressionOutcome {
    let accuracies: BTreeMap<String, f64> = input
        .results
        .iter()
        .map(|r| (r.conclusion_id.clone(), r.accuracy))
        .collect();
    // conclusions aborted during prediction have no accuracy to explain
    let annotations: Vec<AnnotationRecord> = input
        .annotations
        .iter()
        .filter(|a| accuracies.contains_key(&a.conclusion_id))
        .cloned()
        .collect();
    let excluded_refused = annotations.iter().filter(|a| !a.is_labeled()).count();
    let failed = |e: RegressionError, n: usize| {
        let (columns, cond) = match &e {
            RegressionError::RankDeficient {
                columns,
                condition_number,
            } => (columns.clone(), Some(stable(*condition_number))),
            _ => (Vec::new(), None),
        };
        RegressionOutcome::Failed {
            reason: e.to_string(),
            dependent_columns: columns,
            condition_number: cond,
            n,
            excluded_refused,
        }
    };
    let design = match build_design_matrix(&annotations, &accuracies, input.topic_scale) {
        Ok(d) => d,
        Err(e) => return failed(e, 0),
    };
    let n = design.n();
    match design.fit() {
        Ok(fit) => RegressionOutcome::Fitted {
            rows: (0..fit.names.len())
                .map(|i| CoefficientRow {
                    name: fit.names[i].clone(),
                    coefficient: stable(fit.coefficients[i]),
                    std_error: stable(fit.standard_errors[i]),
                    t: stable(fit.t_stats[i]),
                    p_value: stable(fit.p_values[i]),
                })
                .collect(),
            r2: stable(fit.r2),
            adj_r2: stable(fit.adj_r2),
            f_stat: stable(fit.f_stat),
            f_pvalue: stable(fit.f_pvalue),
            n: fit.n,
            df_resid: fit.df_resid,
            condition_number: stable(fit.condition_number),
            excluded_refused,
        },
        Err(e) => failed(e, n),
    }
}

pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, ReportError> {
    let bytes = w.into_inner().map_err(|e| ReportError::Buffer(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| ReportError::Buffer(e.to_string()))
}

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

pub fn accuracy_summary_csv(cells: &[CellAnalysis]) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "Model",
        "Strategy",
        "Repeats",
        "Conclusion Acc. (%)",
        "Paper Acc. (%)",
        "Conclusions",
        "Papers",
    ])?;
    for c in cells {
        let s = &c.summary;
        w.write_record([
            s.model_id.clone(),
            s.strategy.to_string(),
            s.repeats.to_string(),
            pct(s.mean_conclusion_accuracy),
            pct(s.mean_paper_accuracy),
            s.n_conclusions.to_string(),
            s.n_papers.to_string(),
        ])?;
    }
    finish(w)
}

/// Fifteen coefficient rows followed by five fit statistics.
pub fn regression_csv(outcome: &RegressionOutcome) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REGRESSION_HEADER)?;
    let footer: [String; 5] = match outcome {
        RegressionOutcome::Fitted {
            rows,
            r2,
            adj_r2,
            f_stat,
            f_pvalue,
            n,
            ..
        } => {
            for r in rows {
                w.write_record([
                    r.name.clone(),
                    format!("{:.4}", r.coefficient),
                    format!("{:.4}", r.std_error),
                    format!("{:.3}", r.t),
                    format!("{:.3}", r.p_value),
                    significance_stars(r.p_value).to_string(),
                ])?;
            }
            [
                format!("{r2:.3}"),
                format!("{adj_r2:.3}"),
                format!("{f_stat:.3}"),
                format!("{f_pvalue:.3}"),
                n.to_string(),
            ]
        }
        RegressionOutcome::Failed {
            dependent_columns,
            n,
            ..
        } => {
            let dependent: BTreeSet<&str> = dependent_columns.iter().map(String::as_str).collect();
            for name in REGRESSOR_NAMES {
                let flag = if dependent.contains(name) { "dependent" } else { "" };
                w.write_record([name, "NA", "NA", "NA", "NA", flag])?;
            }
            ["NA".into(), "NA".into(), "NA".into(), "NA".into(), n.to_string()]
        }
    };
    for (label, value) in REGRESSION_FOOTER.iter().zip(footer) {
        w.write_record([label.to_string(), value, String::new(), String::new(), String::new(), String::new()])?;
    }
    finish(w)
}

pub fn histogram_csv(h: &Histogram) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["Bin Low", "Bin High", "Count"])?;
    for (i, count) in h.counts.iter().enumerate() {
        w.write_record([
            format!("{:.1}", h.bin_edges[i]),
            format!("{:.1}", h.bin_edges[i + 1]),
            count.to_string(),
        ])?;
    }
    finish(w)
}

pub fn accuracy_by_year_csv(rows: &[YearRow]) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["Year", "Paper Acc. (%)", "Papers"])?;
    for r in rows {
        w.write_record([r.year.to_string(), pct(r.mean_paper_accuracy), r.n_papers.to_string()])?;
    }
    finish(w)
}

fn opt3(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".into(), |v| format!("{v:.3}"))
}

pub fn summary_markdown(run_id: &str, cells: &[CellAnalysis]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Run {run_id}\n");
    let _ = writeln!(out, "| Model | Strategy | Repeats | Conclusion Acc. (%) | Paper Acc. (%) | Conclusions | Papers |");
    let _ = writeln!(out, "|---|---|---|---|---|---|---|");
    for c in cells {
        let s = &c.summary;
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} |",
            s.model_id,
            s.strategy,
            s.repeats,
            pct(s.mean_conclusion_accuracy),
            pct(s.mean_paper_accuracy),
            s.n_conclusions,
            s.n_papers
        );
    }
    for c in cells {
        let _ = writeln!(out, "\n## {}\n", c.cell);
        let _ = writeln!(
            out,
            "Skewness of conclusion accuracy: {}; of paper accuracy: {}.",
            opt3(c.conclusion_skewness),
            opt3(c.paper_skewness)
        );
        match &c.regression {
            RegressionOutcome::Fitted {
                r2,
                adj_r2,
                f_stat,
                f_pvalue,
                n,
                condition_number,
                excluded_refused,
                ..
            } => {
                let _ = writeln!(
                    out,
                    "Regression ({} topics): n = {n}, R^2 = {r2:.3}, adj. R^2 = {adj_r2:.3}, \
                     F = {f_stat:.3} (p = {f_pvalue:.3}), condition number {condition_number:.3e}, \
                     {excluded_refused} refused annotations excluded.",
                    topic_scale_name(c.topic_scale)
                );
            }
            RegressionOutcome::Failed {
                reason,
                dependent_columns,
                condition_number,
                n,
                ..
            } => {
                let _ = writeln!(
                    out,
                    "Regression ({} topics) not estimated on n = {n}: {reason}.",
                    topic_scale_name(c.topic_scale)
                );
                if !dependent_columns.is_empty() {
                    let _ = writeln!(out, "Dependent columns: {}.", dependent_columns.join(", "));
                }
                if let Some(k) = condition_number {
                    let _ = writeln!(out, "Condition number: {k:.3e}.");
                }
            }
        }
    }
    out
}

fn topic_scale_name(s: TopicScaling) -> &'static str {
    match s {
        TopicScaling::Normalized => "normalized",
        TopicScaling::Raw => "raw",
    }
}
