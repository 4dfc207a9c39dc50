//! Segmentation of a weakly stationary multivariate time series into
//! lower-dimensional subseries that are uncorrelated with each other at all
//! lags.
//!
//! The pipeline standardizes the data, eigen-decomposes a lag-aggregated
//! autocovariance matrix, prewhitens the transformed components and groups
//! them by testing their pairwise cross correlations. Around that core the
//! crate provides thresholded and volatility variants of the aggregated
//! matrix, an expanding-window forecasting comparison and a Monte Carlo lab
//! for the latent block designs used to benchmark recovery.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod forecast;
pub mod grouping;
pub mod linalg;
pub mod prewhiten;
pub mod series;
pub mod simulation;
pub mod wmatrix;

pub use error::{Error, ErrorKind, Result};
pub use forecast::{
    fit_var, forecast, forecast_path, reports_csv, restrict_var, rolling_compare,
    ForecastConfig, ForecastMethod, ForecastReport, VarModel,
};
pub use grouping::{
    fdr_select, max_cross_corr_stat, ratio_select, segment, segment_volatility, simes_pvalue,
    union_groups, ConnectivityGraph, GroupPartition, PairStatistic, SegmentConfig,
    SegmentationDocument, SegmentationResult, TestMethod,
};
pub use linalg::{
    distance_d, distance_d_general, inv_sqrt, mean_error_dbar, sym_eigen, EigenDecomposition,
    SubspaceBasis,
};
pub use nalgebra::{DMatrix, DVector};
pub use prewhiten::{fit_ar, prewhiten, ArModel};
pub use series::{
    cross_corr, load_csv, parse_csv, sample_autocov, standardize, LaggedCovariance,
    TimeSeriesMatrix,
};
pub use simulation::{
    classify, generate, monte_carlo, replicate, table_csv, Classification, LatentDesign,
    MonteCarloReport, ReplicationOutcome, Simulated,
};
pub use wmatrix::{
    build_w_plugin, build_w_thresholded, build_w_volatility, predictive_strength,
    threshold_matrix, ThresholdConfig, WFlavor, WMatrix,
};
