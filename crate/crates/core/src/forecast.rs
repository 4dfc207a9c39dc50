//! VAR fitting, coefficient restriction and an expanding-window comparison
//! of direct VAR forecasts with forecasts made group by group on the
//! segmented series.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, StageContext};
use crate::grouping::{segment, SegmentConfig};
use crate::linalg::least_squares;
use crate::prewhiten::{fit_ar, ArModel, DEFAULT_MAX_AR_ORDER};
use crate::series::TimeSeriesMatrix;

pub const DEFAULT_T_THRESHOLD: f64 = 2.0;
pub const DEFAULT_VAR_MAX_ORDER: usize = 5;

/// `y_t = intercept + sum_l coefficients[l] y_{t-1-l} + e_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarModel {
    pub order: usize,
    pub coefficients: Vec<DMatrix<f64>>,
    pub intercept: DVector<f64>,
    /// Retained coefficients after restriction; `None` for a full model.
    pub mask: Option<Vec<DMatrix<bool>>>,
    pub noise_covariance: DMatrix<f64>,
    /// First row of the estimation sample.
    pub fit_start: usize,
}

impl VarModel {
    pub fn dim(&self) -> usize {
        self.intercept.len()
    }

    /// Scalar AR model as a one-dimensional VAR.
    pub fn from_ar(ar: &ArModel) -> Self {
        Self {
            order: ar.order,
            coefficients: ar.coefficients.iter().map(|c| DMatrix::from_element(1, 1, *c)).collect(),
            intercept: DVector::from_element(1, ar.intercept),
            mask: None,
            noise_covariance: DMatrix::from_element(1, 1, ar.noise_variance),
            fit_start: ar.fit_start,
        }
    }

    fn step(&self, lags: &[DVector<f64>]) -> DVector<f64> {
        let mut out = self.intercept.clone();
        for (l, phi) in self.coefficients.iter().enumerate() {
            out += phi * &lags[lags.len() - 1 - l];
        }
        out
    }

    /// Companion form `(F, c)` with `s_{t} = F s_{t-1} + c` on the stacked
    /// state `(y_t, ..., y_{t-order+1})`.
    pub fn companion(&self) -> (DMatrix<f64>, DVector<f64>) {
        let p = self.dim();
        let k = self.order.max(1);
        let mut f = DMatrix::zeros(p * k, p * k);
        for (l, phi) in self.coefficients.iter().enumerate() {
            f.view_mut((0, l * p), (p, p)).copy_from(phi);
        }
        for l in 1..k {
            f.view_mut((l * p, (l - 1) * p), (p, p)).fill_with_identity();
        }
        let mut c = DVector::zeros(p * k);
        c.rows_mut(0, p).copy_from(&self.intercept);
        (f, c)
    }
}

fn design(y: &DMatrix<f64>, start: usize, order: usize) -> DMatrix<f64> {
    let p = y.ncols();
    let rows = y.nrows() - start;
    DMatrix::from_fn(rows, 1 + p * order, |r, c| {
        if c == 0 {
            1.0
        } else {
            let lag = (c - 1) / p + 1;
            y[(start + r - lag, (c - 1) % p)]
        }
    })
}

fn unpack(coef: &DMatrix<f64>, p: usize, order: usize) -> (DVector<f64>, Vec<DMatrix<f64>>) {
    let intercept = coef.row(0).transpose();
    let phis = (0..order)
        .map(|l| DMatrix::from_fn(p, p, |i, j| coef[(1 + l * p + j, i)]))
        .collect();
    (intercept, phis)
}

/// Fits VAR(0..=max_order) by least squares on the common sample
/// `t = max_order..n` and keeps the order minimizing
/// `n_eff log det(Sigma) + 2 (p^2 order + p)`.
pub fn fit_var(y: &DMatrix<f64>, max_order: usize) -> Result<VarModel> {
    let (n, p) = y.shape();
    if p == 0 || n <= p * max_order + 10 {
        return Err(Error::range("n", n, format!("> p * max_order + 10 = {}", p * max_order + 10)));
    }
    let start = max_order;
    let target = y.rows(start, n - start).into_owned();
    let n_eff = (n - start) as f64;
    let mut best: Option<(f64, VarModel)> = None;
    for order in 0..=max_order {
        let fit = least_squares(&design(y, start, order), &target)?;
        let sigma = fit.residuals.transpose() * &fit.residuals / n_eff;
        let det = sigma.determinant();
        if !(det > 0.0) {
            return Err(Error::Conditioning(format!("residual covariance determinant {det:e} at order {order}")));
        }
        let aic = n_eff * det.ln() + 2.0 * (p * p * order + p) as f64;
        let (intercept, coefficients) = unpack(&fit.coef, p, order);
        let model = VarModel {
            order,
            coefficients,
            intercept,
            mask: None,
            noise_covariance: sigma,
            fit_start: start,
        };
        if best.as_ref().is_none_or(|(b, _)| aic < *b) {
            best = Some((aic, model));
        }
    }
    Ok(best.expect("order 0 always fitted").1)
}

/// Zeroes lag coefficients whose t-statistic is below `t_threshold` in
/// absolute value and refits each equation on its surviving regressors.
/// Intercepts are always kept.
pub fn restrict_var(model: &VarModel, y: &DMatrix<f64>, t_threshold: f64) -> Result<VarModel> {
    if t_threshold <= 0.0 || model.order == 0 {
        return Ok(model.clone());
    }
    let (n, p) = y.shape();
    if p != model.dim() {
        return Err(Error::InvalidInput(format!("model has dimension {}, data {p}", model.dim())));
    }
    let start = model.fit_start.max(model.order);
    if n <= start {
        return Err(Error::range("n", n, format!("> {start}")));
    }
    let x = design(y, start, model.order);
    let target = y.rows(start, n - start).into_owned();
    let full = least_squares(&x, &target)?;
    let k = x.ncols();
    let dof = (x.nrows() as f64 - k as f64).max(1.0);

    let mut coef = DMatrix::zeros(k, p);
    let mut mask = vec![DMatrix::from_element(p, p, false); model.order];
    let mut residuals = DMatrix::zeros(x.nrows(), p);
    for eq in 0..p {
        let sigma2 = full.residuals.column(eq).norm_squared() / dof;
        let mut keep = vec![0usize];
        for c in 1..k {
            let se = (sigma2 * full.gram_inv[(c, c)]).sqrt();
            let t = if se > 0.0 { full.coef[(c, eq)] / se } else { f64::INFINITY };
            if t.abs() >= t_threshold {
                keep.push(c);
            }
        }
        let xs = x.select_columns(&keep);
        let fit = least_squares(&xs, &target.columns(eq, 1).into_owned())?;
        for (idx, &c) in keep.iter().enumerate() {
            coef[(c, eq)] = fit.coef[(idx, 0)];
            if c > 0 {
                let lag = (c - 1) / p;
                mask[lag][(eq, (c - 1) % p)] = true;
            }
        }
        residuals.set_column(eq, &fit.residuals.column(0));
    }
    let (intercept, coefficients) = unpack(&coef, p, model.order);
    Ok(VarModel {
        order: model.order,
        coefficients,
        intercept,
        mask: Some(mask),
        noise_covariance: residuals.transpose() * &residuals / x.nrows() as f64,
        fit_start: start,
    })
}

/// Forecasts `horizon` steps past the end of `history`, feeding earlier
/// forecasts back in as if observed. Returns the last step.
pub fn forecast(model: &VarModel, history: &DMatrix<f64>, horizon: usize) -> Result<DVector<f64>> {
    Ok(forecast_path(model, history, horizon)?.pop().expect("horizon >= 1"))
}

/// Forecasts for steps `1..=horizon`.
pub fn forecast_path(model: &VarModel, history: &DMatrix<f64>, horizon: usize) -> Result<Vec<DVector<f64>>> {
    if horizon == 0 {
        return Err(Error::range("horizon", 0, ">= 1"));
    }
    if history.nrows() < model.order {
        return Err(Error::range("history length", history.nrows(), format!(">= order {}", model.order)));
    }
    if history.ncols() != model.dim() {
        return Err(Error::InvalidInput(format!("history has {} columns, model {}", history.ncols(), model.dim())));
    }
    let first = history.nrows() - model.order;
    let mut lags: Vec<DVector<f64>> = (first..history.nrows()).map(|t| history.row(t).transpose()).collect();
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let next = model.step(&lags);
        lags.push(next.clone());
        out.push(next);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ForecastMethod {
    Var { max_order: usize },
    Rvar { max_order: usize, t_threshold: f64 },
    /// Segment, then forecast singleton groups with AR and larger groups with
    /// VAR, and map back through the inverse transform.
    Segmentation {
        config: SegmentConfig,
        var_max_order: usize,
        ar_max_order: usize,
    },
}

impl ForecastMethod {
    pub fn var() -> Self {
        ForecastMethod::Var {
            max_order: DEFAULT_VAR_MAX_ORDER,
        }
    }

    pub fn rvar() -> Self {
        ForecastMethod::Rvar {
            max_order: DEFAULT_VAR_MAX_ORDER,
            t_threshold: DEFAULT_T_THRESHOLD,
        }
    }

    pub fn segmentation(config: SegmentConfig) -> Self {
        ForecastMethod::Segmentation {
            config,
            var_max_order: DEFAULT_VAR_MAX_ORDER,
            ar_max_order: DEFAULT_MAX_AR_ORDER,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ForecastMethod::Var { .. } => "VAR",
            ForecastMethod::Rvar { .. } => "RVAR",
            ForecastMethod::Segmentation { .. } => "Segmentation",
        }
    }

    /// One- and two-step forecasts from a training window.
    fn predict(&self, train: &DMatrix<f64>) -> Result<[DVector<f64>; 2]> {
        let p = train.ncols();
        let n = train.nrows();
        // flat columns carry no information; forecast them as their value
        let live: Vec<usize> = (0..p)
            .filter(|&j| {
                let c = train.column(j);
                c.max() > c.min()
            })
            .collect();
        let mut out = [train.row(n - 1).transpose(), train.row(n - 1).transpose()];
        if live.is_empty() {
            return Ok(out);
        }
        let sub = train.select_columns(&live);
        let path = match self {
            ForecastMethod::Var { max_order } => forecast_path(&fit_var(&sub, *max_order)?, &sub, 2)?,
            ForecastMethod::Rvar { max_order, t_threshold } => {
                let full = fit_var(&sub, *max_order)?;
                forecast_path(&restrict_var(&full, &sub, *t_threshold)?, &sub, 2)?
            }
            ForecastMethod::Segmentation {
                config,
                var_max_order,
                ar_max_order,
            } => segmented_path(&sub, config, *var_max_order, *ar_max_order)?,
        };
        for (h, v) in path.iter().enumerate() {
            for (k, &j) in live.iter().enumerate() {
                out[h][j] = v[k];
            }
        }
        Ok(out)
    }
}

fn segmented_path(train: &DMatrix<f64>, cfg: &SegmentConfig, var_max: usize, ar_max: usize) -> Result<Vec<DVector<f64>>> {
    let y = TimeSeriesMatrix::from_values(train.clone())?;
    let res = segment(&y, cfg)?;
    let x = res.x_hat.values();
    let p = x.ncols();
    let mut xf = [DVector::zeros(p), DVector::zeros(p)];
    for range in res.x_groups() {
        let block = x.columns(range.start, range.len()).into_owned();
        let model = if range.len() == 1 {
            VarModel::from_ar(&fit_ar(block.as_slice(), ar_max)?)
        } else {
            fit_var(&block, var_max)?
        };
        let path = forecast_path(&model, &block, 2)?;
        for h in 0..2 {
            xf[h].rows_mut(range.start, range.len()).copy_from(&path[h]);
        }
    }
    let inv = res.inverse_transform()?;
    Ok(xf.iter().map(|v| &inv * v).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastConfig {
    /// Number of post-sample points evaluated at each horizon.
    pub holdout: usize,
    /// Fit on `y_t - y_{t-lag}` and undo the differencing afterwards.
    pub seasonal_lag: Option<usize>,
}

/// Per-series and aggregate mean squared errors for one method. Index 0 of
/// each array is the one-step horizon, index 1 the two-step horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub method: String,
    pub per_series_mse: [Vec<f64>; 2],
    pub mean_mse: [f64; 2],
    pub sd_mse: [f64; 2],
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Expanding-window post-sample comparison.
///
/// The last `holdout` observations are forecast one and two steps ahead,
/// each from a model refitted on all data strictly before the forecast
/// origin.
pub fn rolling_compare(y: &TimeSeriesMatrix, cfg: &ForecastConfig, methods: &[ForecastMethod]) -> Result<Vec<ForecastReport>> {
    let n = y.n();
    let p = y.p();
    let d = cfg.holdout;
    if d < 2 || 2 * d > n {
        return Err(Error::range("holdout", d, format!("2..={}", n / 2)));
    }
    let lag = cfg.seasonal_lag.unwrap_or(0);
    if cfg.seasonal_lag == Some(0) || lag + d + 2 > n {
        return Err(Error::range("seasonal lag", lag, format!("1..{}", n - d - 2)));
    }
    let vals = y.values();
    let work = if lag > 0 {
        y.seasonal_difference(lag)?.into_values()
    } else {
        vals.clone()
    };

    let first_origin = n - d - 1;
    let mut reports = Vec::with_capacity(methods.len());
    for method in methods {
        let preds: Vec<(usize, [DVector<f64>; 2])> = (first_origin..n)
            .into_par_iter()
            .map(|origin| {
                let train = work.rows(0, origin - lag).into_owned();
                let [w1, w2] = method
                    .predict(&train)
                    .stage(format!("{} window ending at row {origin}", method.label()))?;
                if lag == 0 {
                    return Ok((origin, [w1, w2]));
                }
                let y1 = w1 + vals.row(origin - lag).transpose();
                let base2 = if lag > 1 {
                    vals.row(origin + 1 - lag).transpose()
                } else {
                    y1.clone()
                };
                let y2 = w2 + base2;
                Ok((origin, [y1, y2]))
            })
            .collect::<Result<_>>()?;

        let mut sse = [vec![0.0; p], vec![0.0; p]];
        for (origin, pred) in &preds {
            for h in 0..2 {
                let target = origin + h;
                if target >= n - d && target < n {
                    for i in 0..p {
                        sse[h][i] += (pred[h][i] - vals[(target, i)]).powi(2);
                    }
                }
            }
        }
        let per_series_mse = sse.map(|s| s.iter().map(|v| v / d as f64).collect::<Vec<_>>());
        let (m1, s1) = mean_sd(&per_series_mse[0]);
        let (m2, s2) = mean_sd(&per_series_mse[1]);
        reports.push(ForecastReport {
            method: method.label().to_string(),
            per_series_mse,
            mean_mse: [m1, m2],
            sd_mse: [s1, s2],
        });
    }
    Ok(reports)
}

/// One row per series plus `mean` and `sd` rows; columns are
/// `<method>_h1, <method>_h2` per method.
pub fn reports_csv(reports: &[ForecastReport], names: &[String]) -> String {
    let mut out = String::from("series");
    for r in reports {
        let _ = write!(out, ",{m}_h1,{m}_h2", m = r.method);
    }
    out.push('\n');
    for (i, name) in names.iter().enumerate() {
        out.push_str(name);
        for r in reports {
            let _ = write!(out, ",{},{}", r.per_series_mse[0][i], r.per_series_mse[1][i]);
        }
        out.push('\n');
    }
    for (label, pick) in [("mean", 0), ("sd", 1)] {
        out.push_str(label);
        for r in reports {
            let v = if pick == 0 { r.mean_mse } else { r.sd_mse };
            let _ = write!(out, ",{},{}", v[0], v[1]);
        }
        out.push('\n');
    }
    out
}
