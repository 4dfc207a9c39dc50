//! Univariate autoregressions with AIC order selection, used to prewhiten
//! components before testing cross correlations.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, StageContext};
use crate::linalg::least_squares;
use crate::series::TimeSeriesMatrix;

pub const DEFAULT_MAX_AR_ORDER: usize = 5;

/// `y_t = intercept + sum_i coefficients[i] y_{t-1-i} + e_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub order: usize,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub noise_variance: f64,
    /// First index of the sample the model was fitted on.
    pub fit_start: usize,
}

impl ArModel {
    /// Residuals `e_t` for `t = start..n`; `start` must be at least the order.
    pub fn residuals(&self, y: &[f64], start: usize) -> Vec<f64> {
        (start.max(self.order)..y.len())
            .map(|t| y[t] - self.predict_at(y, t))
            .collect()
    }

    fn predict_at(&self, y: &[f64], t: usize) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .enumerate()
                .map(|(i, c)| c * y[t - 1 - i])
                .sum::<f64>()
    }

    /// One-step prediction from the end of `history`.
    pub fn predict_next(&self, history: &[f64]) -> f64 {
        self.predict_at(history, history.len())
    }
}

fn lag_design(y: &[f64], start: usize, order: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let rows = y.len() - start;
    let x = DMatrix::from_fn(rows, order + 1, |r, c| if c == 0 { 1.0 } else { y[start + r - c] });
    let target = DMatrix::from_fn(rows, 1, |r, _| y[start + r]);
    (x, target)
}

/// Fits AR(0..=max_order) by conditional least squares on the common sample
/// `t = max_order..n` and keeps the order minimizing
/// `n_eff log(sigma^2) + 2 order`. Ties go to the smaller order.
pub fn fit_ar(y: &[f64], max_order: usize) -> Result<ArModel> {
    let n = y.len();
    if n <= 10 * max_order || n < 2 {
        return Err(Error::range("series length", n, format!("> 10 * max_order = {}", 10 * max_order)));
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if !(var > f64::EPSILON * f64::EPSILON * (1.0 + mean * mean)) {
        return Err(Error::DegenerateVariance("series is constant".into()));
    }

    let start = max_order;
    let n_eff = (n - start) as f64;
    let mut best: Option<(f64, ArModel)> = None;
    for order in 0..=max_order {
        let (x, target) = lag_design(y, start, order);
        let fit = least_squares(&x, &target)?;
        let rss = fit.residuals.norm_squared();
        let sigma2 = (rss / n_eff).max(f64::MIN_POSITIVE);
        let aic = n_eff * sigma2.ln() + 2.0 * order as f64;
        let model = ArModel {
            order,
            coefficients: fit.coef.iter().skip(1).copied().collect(),
            intercept: fit.coef[0],
            noise_variance: sigma2,
            fit_start: start,
        };
        if best.as_ref().is_none_or(|(b, _)| aic < *b) {
            best = Some((aic, model));
        }
    }
    Ok(best.expect("order 0 always fitted").1)
}

/// Replaces each column by its AR residuals. All columns are cut to the
/// common length `n - max_order`.
pub fn prewhiten(z: &TimeSeriesMatrix, max_order: usize) -> Result<TimeSeriesMatrix> {
    let n = z.n();
    let mut columns = Vec::with_capacity(z.p());
    for j in 0..z.p() {
        let col = z.column(j);
        let model = fit_ar(&col, max_order).stage(format!("prewhitening column {}", j + 1))?;
        columns.push(model.residuals(&col, max_order));
    }
    let rows = n - max_order;
    TimeSeriesMatrix::new(
        DMatrix::from_fn(rows, z.p(), |t, j| columns[j][t]),
        z.names().to_vec(),
    )
}
