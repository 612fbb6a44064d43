//! Ordinary least squares with classical (homoskedastic) inference.

use serde::{Deserialize, Serialize};

use super::distributions::{f_sf, student_t_two_sided};
use super::linalg::{dot, invert_upper, norm, singular_values, solve_upper, Matrix, Qr};
use super::RegressionError;

/// Columns whose QR pivot falls below this fraction of their own norm are
/// treated as linear combinations of the columns before them.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsResult {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    /// Two-sided.
    pub p_values: Vec<f64>,
    pub residuals: Vec<f64>,
    pub fitted: Vec<f64>,
    pub r2: f64,
    pub adj_r2: f64,
    pub f_stat: f64,
    pub f_pvalue: f64,
    pub n: usize,
    /// Regressors excluding the constant.
    pub k: usize,
    pub df_resid: usize,
    pub sse: f64,
    pub tss: f64,
    /// 2-norm condition number of the design matrix.
    pub condition_number: f64,
}

/// 1 − (1 − R²)(n − 1)/(n − k − 1).
pub fn adjusted_r2(r2: f64, n: usize, k: usize) -> f64 {
    1.0 - (1.0 - r2) * (n as f64 - 1.0) / (n as f64 - k as f64 - 1.0)
}

/// Overall F statistic from R²: (R²/k) / ((1 − R²)/(n − k − 1)).
pub fn f_from_r2(r2: f64, n: usize, k: usize) -> f64 {
    (r2 / k as f64) / ((1.0 - r2) / (n as f64 - k as f64 - 1.0))
}

fn condition_number(r: &[Vec<f64>]) -> f64 {
    let sv = singular_values(r);
    match (sv.first(), sv.last()) {
        (Some(&max), Some(&min)) if min > 0.0 => max / min,
        _ => f64::INFINITY,
    }
}

/// Fits y = Xβ + ε by Householder QR.
///
/// The first column of `x` must be the constant; `k` counts the rest.
pub fn ols_fit(x: &Matrix, y: &[f64], names: &[String]) -> Result<OlsResult, RegressionError> {
    let n = x.rows();
    let p = x.cols();
    if names.len() != p || y.len() != n {
        return Err(RegressionError::ShapeMismatch {
            rows: n,
            cols: p,
            names: names.len(),
            response: y.len(),
        });
    }
    if p == 0 || x.column(0).iter().any(|&v| v != 1.0) {
        return Err(RegressionError::MissingConstant);
    }
    if n <= p {
        return Err(RegressionError::TooFewObservations { n, p });
    }
    if x.max_abs().is_nan() || y.iter().any(|v| !v.is_finite()) {
        return Err(RegressionError::NonFinite);
    }

    let qr = Qr::factor(x, y);
    let cond = condition_number(&qr.r);
    for j in 0..p {
        let col_norm = norm(x.column(j));
        if qr.r[j][j].abs() <= RANK_TOLERANCE * col_norm.max(f64::MIN_POSITIVE) {
            return Err(dependent_columns(&qr.r, j, names, cond));
        }
    }

    let beta = solve_upper(&qr.r, &qr.qty[..p]).expect("pivots checked above");
    let fitted = x.mul_vec(&beta);
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let sse = dot(&residuals, &residuals);
    let mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if tss == 0.0 {
        return Err(RegressionError::ConstantResponse);
    }

    let df_resid = n - p;
    let k = p - 1;
    let sigma2 = sse / df_resid as f64;
    let r_inv = invert_upper(&qr.r).expect("pivots checked above");
    let standard_errors: Vec<f64> = r_inv
        .iter()
        .map(|row| (sigma2 * dot(row, row)).sqrt())
        .collect();
    let t_stats: Vec<f64> = beta
        .iter()
        .zip(&standard_errors)
        .map(|(&b, &se)| {
            if se > 0.0 {
                b / se
            } else if b == 0.0 {
                0.0
            } else {
                b.signum() * f64::INFINITY
            }
        })
        .collect();
    let p_values = t_stats
        .iter()
        .map(|&t| student_t_two_sided(t, df_resid as f64))
        .collect::<Result<Vec<_>, _>>()?;

    let r2 = (1.0 - sse / tss).clamp(0.0, 1.0);
    let adj_r2 = adjusted_r2(r2, n, k);
    let (f_stat, f_pvalue) = if k == 0 {
        (f64::NAN, f64::NAN)
    } else {
        let f = ((tss - sse) / k as f64) / (sse / df_resid as f64);
        let f = if f.is_nan() { f64::INFINITY } else { f.max(0.0) };
        (f, f_sf(f, k as f64, df_resid as f64)?)
    };

    Ok(OlsResult {
        names: names.to_vec(),
        coefficients: beta,
        standard_errors,
        t_stats,
        p_values,
        residuals,
        fitted,
        r2,
        adj_r2,
        f_stat,
        f_pvalue,
        n,
        k,
        df_resid,
        sse,
        tss,
        condition_number: cond,
    })
}

/// Names column `j` and the earlier columns it is a combination of.
fn dependent_columns(r: &[Vec<f64>], j: usize, names: &[String], cond: f64) -> RegressionError {
    let head: Vec<Vec<f64>> = r[..j].iter().map(|row| row[..j].to_vec()).collect();
    let rhs: Vec<f64> = r[..j].iter().map(|row| row[j]).collect();
    let mut columns = Vec::new();
    if let Some(c) = solve_upper(&head, &rhs) {
        let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (i, v) in c.iter().enumerate() {
            if scale > 0.0 && v.abs() > 1e-6 * scale {
                columns.push(names[i].clone());
            }
        }
    }
    columns.push(names[j].clone());
    RegressionError::RankDeficient {
        columns,
        condition_number: cond,
    }
}
