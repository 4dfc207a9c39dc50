//! Lag-aggregated autocovariance matrices.
//!
//! Three estimators share one type: the plug-in sum
//! `I + sum_k S(k) S(k)'`, the same sum over hard-thresholded autocovariances
//! for large `p`, and a conditional second-moment version aimed at
//! volatility segmentation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{autocov_of_centered, TimeSeriesMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WFlavor {
    Plugin,
    Thresholded,
    Volatility,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WMatrix {
    pub matrix: DMatrix<f64>,
    pub k0: usize,
    pub flavor: WFlavor,
    /// Resolved threshold level, present for the thresholded flavor.
    pub threshold_u: Option<f64>,
}

/// How the entrywise threshold level `u` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ThresholdConfig {
    #[default]
    None,
    Fixed { u: f64 },
    /// `u = M p^exponent / sqrt(n)`.
    Polynomial { m: f64, exponent: f64 },
    /// `u = M sqrt(log(p) / n)`.
    Logarithmic { m: f64 },
}

impl ThresholdConfig {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ThresholdConfig::None => Ok(()),
            ThresholdConfig::Fixed { u } if u >= 0.0 && u.is_finite() => Ok(()),
            ThresholdConfig::Fixed { u } => Err(Error::range("threshold u", u, ">= 0")),
            ThresholdConfig::Polynomial { m, exponent } if m > 0.0 && exponent.is_finite() => Ok(()),
            ThresholdConfig::Polynomial { m, .. } => Err(Error::range("threshold M", m, "> 0")),
            ThresholdConfig::Logarithmic { m } if m > 0.0 => Ok(()),
            ThresholdConfig::Logarithmic { m } => Err(Error::range("threshold M", m, "> 0")),
        }
    }

    /// Threshold level for a sample of size `n` in dimension `p`.
    pub fn resolve(&self, n: usize, p: usize) -> Result<f64> {
        self.validate()?;
        let (n, p) = (n as f64, p as f64);
        Ok(match *self {
            ThresholdConfig::None => 0.0,
            ThresholdConfig::Fixed { u } => u,
            ThresholdConfig::Polynomial { m, exponent } => m * p.powf(exponent) / n.sqrt(),
            ThresholdConfig::Logarithmic { m } => m * (p.ln() / n).sqrt(),
        })
    }
}

fn check_horizon(y: &TimeSeriesMatrix, k0: usize) -> Result<()> {
    if k0 == 0 || k0 >= y.n() {
        return Err(Error::range("k0", k0, format!("1..n with n = {}", y.n())));
    }
    Ok(())
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn aggregate(y: &TimeSeriesMatrix, k0: usize, u: f64) -> DMatrix<f64> {
    let c = y.centered();
    let p = y.p();
    let mut w = DMatrix::identity(p, p);
    for k in 1..=k0 {
        let s = threshold_matrix(&autocov_of_centered(&c, k), u);
        w += &s * s.transpose();
    }
    symmetrize(w)
}

/// Plug-in estimator `I + sum_{k=1}^{k0} S(k) S(k)'`. The input is expected
/// to be standardized already.
pub fn build_w_plugin(y: &TimeSeriesMatrix, k0: usize) -> Result<WMatrix> {
    check_horizon(y, k0)?;
    Ok(WMatrix {
        matrix: aggregate(y, k0, 0.0),
        k0,
        flavor: WFlavor::Plugin,
        threshold_u: None,
    })
}

/// Hard threshold: entries with `|s_ij| < u` become zero, entries equal to
/// `u` survive.
pub fn threshold_matrix(s: &DMatrix<f64>, u: f64) -> DMatrix<f64> {
    s.map(|v| if v.abs() >= u { v } else { 0.0 })
}

/// Aggregate over thresholded autocovariances. With no threshold this is the
/// plug-in estimator exactly.
pub fn build_w_thresholded(y: &TimeSeriesMatrix, k0: usize, cfg: &ThresholdConfig) -> Result<WMatrix> {
    if matches!(cfg, ThresholdConfig::None) {
        return build_w_plugin(y, k0);
    }
    check_horizon(y, k0)?;
    let u = cfg.resolve(y.n(), y.p())?;
    Ok(WMatrix {
        matrix: aggregate(y, k0, u),
        k0,
        flavor: WFlavor::Thresholded,
        threshold_u: Some(u),
    })
}

/// Volatility estimator: for every ball `{x: |x| <= |y_s|}` and every lag
/// `k <= k0`, square the uncentered moment
/// `(n-k)^{-1} sum_{t>k} y_t y_t' 1(|y_{t-k}| in ball)` and sum.
///
/// Balls are the distinct radii among the observation norms.
pub fn build_w_volatility(y: &TimeSeriesMatrix, k0: usize) -> Result<WMatrix> {
    check_horizon(y, k0)?;
    let n = y.n();
    let p = y.p();
    let vals = y.values();
    let norms: Vec<f64> = vals.row_iter().map(|r| r.norm()).collect();
    let mut radii = norms.clone();
    radii.sort_by(f64::total_cmp);
    radii.dedup();

    let outer: Vec<DMatrix<f64>> = vals
        .row_iter()
        .map(|r| r.transpose() * r)
        .collect();

    let mut w = DMatrix::zeros(p, p);
    for k in 1..=k0 {
        // t runs over k..n (0-based); the conditioning value is |y_{t-k}|
        let mut by_norm: Vec<usize> = (k..n).collect();
        by_norm.sort_by(|&a, &b| norms[a - k].total_cmp(&norms[b - k]));
        let scale = 1.0 / (n - k) as f64;
        let mut acc = DMatrix::zeros(p, p);
        let mut next = 0;
        for &r in &radii {
            while next < by_norm.len() && norms[by_norm[next] - k] <= r {
                acc += &outer[by_norm[next]];
                next += 1;
            }
            let m = &acc * scale;
            w += &m * &m;
        }
    }
    Ok(WMatrix {
        matrix: symmetrize(w),
        k0,
        flavor: WFlavor::Volatility,
        threshold_u: None,
    })
}

/// `tr(W) - p`, the lag-aggregated squared autocorrelation mass.
pub fn predictive_strength(w: &WMatrix) -> Result<f64> {
    if w.flavor == WFlavor::Volatility {
        return Err(Error::Contract("predictive strength is undefined for the volatility estimator".into()));
    }
    Ok(w.matrix.trace() - w.matrix.nrows() as f64)
}
