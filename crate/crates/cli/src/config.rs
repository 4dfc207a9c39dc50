use std::path::PathBuf;

use clap::{Args, ValueEnum};
use tsseg::grouping::{DEFAULT_C0, DEFAULT_K0};
use tsseg::prewhiten::DEFAULT_MAX_AR_ORDER;
use tsseg::{SegmentConfig, TestMethod, ThresholdConfig};

pub const DEFAULT_BETA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Ratio,
    Fdr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HeaderArg {
    /// Treat the first row as a header if any cell is not a number.
    Auto,
    Yes,
    No,
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// CSV file with one observation per row.
    pub input: PathBuf,

    #[arg(long, value_enum, default_value_t = HeaderArg::Auto)]
    pub header: HeaderArg,

    /// Replace the data by its lag-L difference before fitting.
    #[arg(long = "seasonal-diff", value_name = "L")]
    pub seasonal_diff: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SegmentArgs {
    /// Number of lags aggregated in the eigen step.
    #[arg(long, default_value_t = DEFAULT_K0)]
    pub k0: usize,

    /// Largest cross-correlation lag tested [default: max(1, round(10 log10(n/p)))].
    #[arg(long)]
    pub m: Option<usize>,

    #[arg(long, value_enum, default_value_t = MethodArg::Ratio)]
    pub method: MethodArg,

    /// Fraction of pairs searched by the ratio rule.
    #[arg(long, default_value_t = DEFAULT_C0)]
    pub c0: f64,

    /// False discovery rate for the fdr rule.
    #[arg(long, default_value_t = DEFAULT_BETA)]
    pub beta: f64,

    /// none | fixed:U | log:M | poly:M,E
    #[arg(long, default_value = "none", value_parser = parse_threshold)]
    pub threshold: ThresholdConfig,

    /// Largest AR order used for prewhitening.
    #[arg(long = "max-ar", default_value_t = DEFAULT_MAX_AR_ORDER)]
    pub max_ar: usize,
}

impl SegmentArgs {
    pub fn config(&self) -> SegmentConfig {
        let method = match self.method {
            MethodArg::Ratio => TestMethod::Ratio { c0: self.c0 },
            MethodArg::Fdr => TestMethod::Fdr { beta: self.beta },
        };
        SegmentConfig {
            k0: self.k0,
            m: self.m,
            method,
            threshold: self.threshold,
            max_ar: self.max_ar,
            edge_cap: None,
        }
    }
}

fn number(s: &str) -> Result<f64, String> {
    s.trim().parse::<f64>().map_err(|_| format!("'{s}' is not a number"))
}

pub fn parse_threshold(s: &str) -> Result<ThresholdConfig, String> {
    let (mode, rest) = s.split_once(':').unwrap_or((s, ""));
    let cfg = match (mode.trim(), rest) {
        ("none", "") => ThresholdConfig::None,
        ("fixed", u) => ThresholdConfig::Fixed { u: number(u)? },
        ("log", m) => ThresholdConfig::Logarithmic { m: number(m)? },
        ("poly", args) => {
            let (m, e) = args
                .split_once(',')
                .ok_or_else(|| "poly threshold needs M,E".to_string())?;
            ThresholdConfig::Polynomial {
                m: number(m)?,
                exponent: number(e)?,
            }
        }
        _ => return Err(format!("unknown threshold '{s}'; expected none, fixed:U, log:M or poly:M,E")),
    };
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}
