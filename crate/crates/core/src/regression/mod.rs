//! Design matrix for the topic–sentiment regression and an OLS engine with
//! classical inference.

pub mod distributions;
pub mod linalg;
pub mod ols;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotator::AnnotationRecord;
pub use distributions::{f_sf, student_t_sf, student_t_two_sided, DistributionError};
pub use linalg::Matrix;
pub use ols::{adjusted_r2, f_from_r2, ols_fit, OlsResult};

pub const REGRESSOR_NAMES: [&str; 15] = [
    "Constant",
    "Gender",
    "Ethnicity",
    "Social Norms",
    "Ethical Dilemmas",
    "Age",
    "Socioeconomic Status",
    "Other Topics",
    "Gender × Favorability",
    "Ethnicity × Sentiment",
    "Social Norms × Sentiment",
    "Ethical Dilemmas × Sentiment",
    "Age × Sentiment",
    "Socioeconomic Status × Sentiment",
    "Other Topics × Sentiment",
];

#[derive(Debug, Error, PartialEq)]
pub enum RegressionError {
    #[error("design is {rows}×{cols} with {names} names and {response} responses")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        names: usize,
        response: usize,
    },
    #[error("first column must be the constant")]
    MissingConstant,
    #[error("{n} observations cannot identify {p} coefficients")]
    TooFewObservations { n: usize, p: usize },
    #[error("design or response contains non-finite values")]
    NonFinite,
    #[error("response has zero variance")]
    ConstantResponse,
    #[error("design is rank deficient (condition number {condition_number:.3e}); dependent columns: {}", columns.join(", "))]
    RankDeficient {
        columns: Vec<String>,
        condition_number: f64,
    },
    #[error("annotation for {0} is missing a label")]
    MissingLabel(String),
    #[error("no accuracy for conclusion {0}")]
    MissingAccuracy(String),
    #[error("accuracy {value} for {conclusion_id} is outside [0, 1]")]
    AccuracyOutOfRange { conclusion_id: String, value: f64 },
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}

/// How topic percentages become regressors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopicScaling {
    /// Rescaled percentages divided by 100; the seven columns sum to one.
    #[default]
    Normalized,
    /// Percentages as returned by the labeler, before rescaling, divided by 100.
    Raw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub names: Vec<String>,
    pub conclusion_ids: Vec<String>,
    pub x: Matrix,
    pub y: Vec<f64>,
    /// Refused annotations left out of the design.
    pub excluded_refused: usize,
}

impl DesignMatrix {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn fit(&self) -> Result<OlsResult, RegressionError> {
        ols_fit(&self.x, &self.y, &self.names)
    }
}

/// One design row: constant, seven topic fractions, seven interactions.
pub fn design_row(topics: [f64; 7], sentiment: i8, favorability: i8) -> [f64; 15] {
    let mut row = [0.0; 15];
    row[0] = 1.0;
    row[1..8].copy_from_slice(&topics);
    row[8] = topics[0] * favorability as f64;
    for i in 1..7 {
        row[8 + i] = topics[i] * sentiment as f64;
    }
    row
}

/// Builds the design from labeled annotations and per-conclusion accuracies.
///
/// Refused annotations are dropped and counted. Row order follows the
/// annotation order.
pub fn build_design_matrix(
    annotations: &[AnnotationRecord],
    accuracies: &BTreeMap<String, f64>,
    scaling: TopicScaling,
) -> Result<DesignMatrix, RegressionError> {
    let mut rows = Vec::new();
    let mut ids = Vec::new();
    let mut y = Vec::new();
    let mut excluded = 0;
    for a in annotations {
        if !a.is_labeled() {
            excluded += 1;
            continue;
        }
        let missing = || RegressionError::MissingLabel(a.conclusion_id.clone());
        let topics = a.topics.ok_or_else(missing)?;
        let sentiment = a.sentiment.ok_or_else(missing)?;
        let favorability = a.gender_favorability.ok_or_else(missing)?;
        let factor = match scaling {
            TopicScaling::Normalized => 1.0 / 100.0,
            TopicScaling::Raw => a.raw_topic_sum.ok_or_else(missing)? / 100.0 / 100.0,
        };
        let acc = *accuracies
            .get(&a.conclusion_id)
            .ok_or_else(|| RegressionError::MissingAccuracy(a.conclusion_id.clone()))?;
        if !(0.0..=1.0).contains(&acc) {
            return Err(RegressionError::AccuracyOutOfRange {
                conclusion_id: a.conclusion_id.clone(),
                value: acc,
            });
        }
        rows.push(design_row(topics.as_array().map(|v| v * factor), sentiment, favorability));
        ids.push(a.conclusion_id.clone());
        y.push(acc);
    }
    let x = if rows.is_empty() {
        Matrix::zeros(0, REGRESSOR_NAMES.len())
    } else {
        Matrix::from_rows(&rows)
    };
    Ok(DesignMatrix {
        names: REGRESSOR_NAMES.iter().map(|s| s.to_string()).collect(),
        conclusion_ids: ids,
        x,
        y,
        excluded_refused: excluded,
    })
}
