//! Grouping of transformed components into uncorrelated subseries.
//!
//! After the eigen step the components of `z_t = Gamma' y_t` are prewhitened
//! and every pair is summarized by its cross correlations over lags
//! `-m..=m`. Pairs judged connected (by the ratio of sorted maximum
//! correlations, or by FDR over Simes p-values) are merged with union-find,
//! and the eigenvector columns are permuted so each group is contiguous.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, StageContext};
use crate::linalg::{sym_eigen, EigenDecomposition};
use crate::prewhiten::{prewhiten, DEFAULT_MAX_AR_ORDER};
use crate::series::{standardize, CrossCorrelator, TimeSeriesMatrix};
use crate::wmatrix::{build_w_thresholded, build_w_volatility, predictive_strength, ThresholdConfig, WFlavor, WMatrix};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_C0: f64 = 0.75;
pub const DEFAULT_K0: usize = 5;

/// Denominator floor in the ratio search.
const RATIO_FLOOR: f64 = 1e-12;

/// Level used to decide the single pair when `p = 2` under the ratio rule,
/// where there are no ratios to compare.
pub const SINGLE_PAIR_LEVEL: f64 = 0.05;

/// How connected pairs are identified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum TestMethod {
    /// Largest gap in the descending maximum cross correlations, searched
    /// over the first `c0` fraction of pairs.
    Ratio { c0: f64 },
    /// Benjamini-Hochberg cut at rate `beta` on per-pair Simes p-values.
    Fdr { beta: f64 },
}

impl Default for TestMethod {
    fn default() -> Self {
        TestMethod::Ratio { c0: DEFAULT_C0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentConfig {
    pub k0: usize,
    /// Largest lag tested; `None` means `max(1, round(10 log10(n / p)))`.
    pub m: Option<usize>,
    pub method: TestMethod,
    pub threshold: ThresholdConfig,
    pub max_ar: usize,
    /// Upper bound on the number of connected pairs, applied after selection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_cap: Option<usize>,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            k0: DEFAULT_K0,
            m: None,
            method: TestMethod::default(),
            threshold: ThresholdConfig::None,
            max_ar: DEFAULT_MAX_AR_ORDER,
            edge_cap: None,
        }
    }
}

impl SegmentConfig {
    pub fn validate(&self) -> Result<()> {
        match self.method {
            TestMethod::Ratio { c0 } if !(c0 > 0.0 && c0 <= 1.0) => {
                return Err(Error::range("c0", c0, "(0, 1]"));
            }
            TestMethod::Fdr { beta } if !(beta > 0.0 && beta < 1.0) => {
                return Err(Error::range("beta", beta, "(0, 1)"));
            }
            _ => {}
        }
        if self.k0 == 0 {
            return Err(Error::range("k0", 0, ">= 1"));
        }
        if self.m == Some(0) {
            return Err(Error::range("m", 0, ">= 1"));
        }
        self.threshold.validate()
    }

    pub fn resolve_m(&self, n: usize, p: usize) -> usize {
        self.m.unwrap_or_else(|| default_max_lag(n, p))
    }
}

/// `max(1, round(10 log10(n / p)))`.
pub fn default_max_lag(n: usize, p: usize) -> usize {
    let m = (10.0 * (n as f64 / p as f64).log10()).round();
    if m.is_finite() && m >= 1.0 {
        m as usize
    } else {
        1
    }
}

/// Summary of one tested pair `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStatistic {
    pub i: usize,
    pub j: usize,
    /// Maximum absolute cross correlation over `|h| <= m`.
    #[serde(rename = "L")]
    pub max_corr: f64,
    #[serde(rename = "h_star")]
    pub argmax_lag: isize,
    #[serde(rename = "P")]
    pub pvalue: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityGraph {
    pub p: usize,
    /// Connected pairs, `i < j`, in selection order.
    pub edges: Vec<(usize, usize)>,
    /// One record per pair, in `(i, j)` lexicographic order.
    pub statistics: Vec<PairStatistic>,
}

impl ConnectivityGraph {
    pub fn statistic(&self, i: usize, j: usize) -> Option<&PairStatistic> {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.statistics.iter().find(|s| s.i == i && s.j == j)
    }
}

/// Disjoint groups covering `0..p`, each ascending, ordered by first member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPartition {
    groups: Vec<Vec<usize>>,
}

impl GroupPartition {
    pub fn new(mut groups: Vec<Vec<usize>>) -> Result<Self> {
        let p: usize = groups.iter().map(Vec::len).sum();
        let mut seen = vec![false; p];
        for g in &mut groups {
            if g.is_empty() {
                return Err(Error::InvalidInput("empty group".into()));
            }
            g.sort_unstable();
            for &i in g.iter() {
                if i >= p || seen[i] {
                    return Err(Error::InvalidInput(format!("groups do not partition 0..{p} (index {i})")));
                }
                seen[i] = true;
            }
        }
        groups.sort_by_key(|g| g[0]);
        Ok(Self { groups })
    }

    pub fn singletons(p: usize) -> Self {
        Self {
            groups: (0..p).map(|i| vec![i]).collect(),
        }
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn p(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    /// Members listed group by group.
    pub fn order(&self) -> Vec<usize> {
        self.groups.iter().flatten().copied().collect()
    }
}

/// Output of [`segment`].
#[derive(Debug, Clone)]
pub struct SegmentationResult {
    /// Orthonormal eigenvectors of the aggregated matrix, eigenvalue order.
    pub gamma: DMatrix<f64>,
    pub whitener: DMatrix<f64>,
    /// Rows are the permuted eigenvectors times the whitener, so
    /// `x_t = transform_b y_t` has each group contiguous.
    pub transform_b: DMatrix<f64>,
    /// Descending, aligned with the columns of `gamma`.
    pub eigenvalues: DVector<f64>,
    /// Groups of component indices (columns of `gamma`).
    pub partition: GroupPartition,
    pub graph: ConnectivityGraph,
    /// Component order of `x_hat`: `x_hat` column `c` is component `order[c]`.
    pub order: Vec<usize>,
    pub x_hat: TimeSeriesMatrix,
    /// Prewhitened components in eigenvalue order.
    pub prewhitened: TimeSeriesMatrix,
    pub w: WMatrix,
    pub config: SegmentConfig,
    /// Resolved maximum lag.
    pub m: usize,
    pub omega_y: Option<f64>,
    pub omega_x: Option<f64>,
}

impl SegmentationResult {
    /// Column ranges of `x_hat` belonging to each group.
    pub fn x_groups(&self) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.partition
            .groups()
            .iter()
            .map(|g| {
                let r = start..start + g.len();
                start = r.end;
                r
            })
            .collect()
    }

    /// Eigenvector columns of one group, as a `p x |group|` matrix.
    pub fn group_basis(&self, group: usize) -> DMatrix<f64> {
        let members = &self.partition.groups()[group];
        DMatrix::from_fn(self.gamma.nrows(), members.len(), |r, c| self.gamma[(r, members[c])])
    }

    /// `transform_b^{-1}`, mapping segmented coordinates back to the data.
    pub fn inverse_transform(&self) -> Result<DMatrix<f64>> {
        self.transform_b
            .clone()
            .try_inverse()
            .ok_or(Error::Singular { eigenvalue: 0.0, floor: 0.0 })
    }
}

fn lag_correlations(cc: &CrossCorrelator, i: usize, j: usize, m: usize) -> Result<Vec<f64>> {
    let m = m as isize;
    (-m..=m).map(|h| cc.corr(i, j, h)).collect()
}

fn max_of_lags(rhos: &[f64], m: usize) -> (f64, isize) {
    // scan 0, 1, -1, 2, -2, ...: the first strict maximum wins
    let mut best = (rhos[m].abs(), 0isize);
    for s in 1..=m {
        for h in [s as isize, -(s as isize)] {
            let v = rhos[(m as isize + h) as usize].abs();
            if v > best.0 {
                best = (v, h);
            }
        }
    }
    best
}

/// Maximum absolute cross correlation between columns `i` and `j` over
/// lags `|h| <= m`, with the lag attaining it.
///
/// Among equal maxima the smallest `|h|` wins, and `h >= 0` beats `-h`.
pub fn max_cross_corr_stat(zw: &TimeSeriesMatrix, i: usize, j: usize, m: usize) -> Result<(f64, isize)> {
    if m >= zw.n() {
        return Err(Error::range("m", m, format!("< n = {}", zw.n())));
    }
    if i >= zw.p() || j >= zw.p() {
        return Err(Error::range("column", i.max(j), format!("< p = {}", zw.p())));
    }
    let cc = CrossCorrelator::new(zw);
    Ok(max_of_lags(&lag_correlations(&cc, i, j, m)?, m))
}

/// Index `r` (1-based) maximizing `L_r / L_{r+1}` over `1 <= r < c0 p0`,
/// for maxima sorted descending. Ties go to the smallest `r`.
pub fn ratio_select(l_sorted: &[f64], c0: f64) -> Result<usize> {
    let p0 = l_sorted.len();
    if p0 < 2 {
        return Err(Error::range("number of pairs", p0, ">= 2"));
    }
    if !(c0 > 0.0 && c0 <= 1.0) {
        return Err(Error::range("c0", c0, "(0, 1]"));
    }
    // largest j with j < c0 p0, within 1..p0-1
    let bound = c0 * p0 as f64;
    let upper = ((bound.ceil() as usize).saturating_sub(1)).clamp(1, p0 - 1);
    let mut best = (f64::NEG_INFINITY, 1);
    for j in 1..=upper {
        let ratio = l_sorted[j - 1] / l_sorted[j].max(RATIO_FLOOR);
        if ratio > best.0 {
            best = (ratio, j);
        }
    }
    Ok(best.1)
}

/// Two-sided normal p-value `2 Phi(-sqrt(n) |rho|)`.
pub fn correlation_pvalue(rho: f64, n: usize) -> f64 {
    libm::erfc((n as f64).sqrt() * rho.abs() / std::f64::consts::SQRT_2)
}

/// Simes combination `min_j p_(j) K / j` of `K` p-values, capped at one.
pub fn simes_combine(pvalues: &[f64]) -> f64 {
    let mut sorted = pvalues.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(idx, p)| p * k / (idx + 1) as f64)
        .fold(1.0_f64, f64::min)
}

/// Simes p-value for "no cross correlation at any of the given lags", from
/// the lag correlations of two prewhitened series of length `n`.
pub fn simes_pvalue(rhos: &[f64], n: usize) -> f64 {
    let p: Vec<f64> = rhos.iter().map(|r| correlation_pvalue(*r, n)).collect();
    simes_combine(&p)
}

/// Benjamini-Hochberg cut: the largest `k` with `P_(k) <= k beta / p0`, or 0.
pub fn fdr_select(p_sorted: &[f64], beta: f64) -> usize {
    let p0 = p_sorted.len() as f64;
    p_sorted
        .iter()
        .enumerate()
        .rev()
        .find(|(idx, p)| **p <= (idx + 1) as f64 * beta / p0)
        .map_or(0, |(idx, _)| idx + 1)
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins so roots are group minima
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Connected components of the graph on `0..p` with the given edges.
pub fn union_groups(p: usize, edges: &[(usize, usize)]) -> Result<GroupPartition> {
    let mut dsu = DisjointSet::new(p);
    for &(a, b) in edges {
        if a >= p || b >= p {
            return Err(Error::range("edge endpoint", a.max(b), format!("< p = {p}")));
        }
        dsu.union(a, b);
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; p];
    for i in 0..p {
        let root = dsu.find(i);
        if slot[root] == usize::MAX {
            slot[root] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[root]].push(i);
    }
    GroupPartition::new(groups)
}

fn pair_statistics(zw: &TimeSeriesMatrix, m: usize) -> Result<Vec<PairStatistic>> {
    let cc = CrossCorrelator::new(zw);
    let n = zw.n();
    let p = zw.p();
    let pairs: Vec<(usize, usize)> = (0..p).flat_map(|i| (i + 1..p).map(move |j| (i, j))).collect();
    pairs
        .par_iter()
        .map(|&(i, j)| {
            let rhos = lag_correlations(&cc, i, j, m)?;
            let (max_corr, argmax_lag) = max_of_lags(&rhos, m);
            Ok(PairStatistic {
                i,
                j,
                max_corr,
                argmax_lag,
                pvalue: Some(simes_pvalue(&rhos, n)),
            })
        })
        .collect()
}

fn select_edges(stats: &[PairStatistic], method: TestMethod, cap: Option<usize>) -> Result<Vec<(usize, usize)>> {
    let mut ranked: Vec<&PairStatistic> = stats.iter().collect();
    let count = match method {
        TestMethod::Ratio { c0 } => {
            ranked.sort_by(|a, b| b.max_corr.total_cmp(&a.max_corr).then((a.i, a.j).cmp(&(b.i, b.j))));
            match ranked.len() {
                0 => 0,
                1 => usize::from(ranked[0].pvalue.unwrap_or(1.0) <= SINGLE_PAIR_LEVEL),
                _ => {
                    let l: Vec<f64> = ranked.iter().map(|s| s.max_corr).collect();
                    ratio_select(&l, c0)?
                }
            }
        }
        TestMethod::Fdr { beta } => {
            ranked.sort_by(|a, b| {
                let (pa, pb) = (a.pvalue.unwrap_or(1.0), b.pvalue.unwrap_or(1.0));
                pa.total_cmp(&pb).then((a.i, a.j).cmp(&(b.i, b.j)))
            });
            let p: Vec<f64> = ranked.iter().map(|s| s.pvalue.unwrap_or(1.0)).collect();
            fdr_select(&p, beta)
        }
    };
    let count = cap.map_or(count, |c| count.min(c));
    Ok(ranked.iter().take(count).map(|s| (s.i, s.j)).collect())
}

struct Pipeline<'a> {
    y: &'a TimeSeriesMatrix,
    cfg: &'a SegmentConfig,
    m: usize,
}

impl<'a> Pipeline<'a> {
    fn new(y: &'a TimeSeriesMatrix, cfg: &'a SegmentConfig) -> Result<Self> {
        cfg.validate().stage("config")?;
        let (n, p) = (y.n(), y.p());
        let m = cfg.resolve_m(n, p);
        let need = (4 * m).max(10 * cfg.max_ar).max(cfg.k0 + 1);
        if n <= need {
            return Err(Error::range("n", n, format!("> max(4m, 10 max_ar, k0 + 1) = {need}"))).stage("config");
        }
        Ok(Self { y, cfg, m })
    }

    fn run(
        &self,
        build: impl FnOnce(&TimeSeriesMatrix) -> Result<WMatrix>,
        components: impl FnOnce(DMatrix<f64>) -> DMatrix<f64>,
    ) -> Result<SegmentationResult> {
        let (ystd, whitener) = standardize(self.y).stage("standardize")?;
        let w = build(&ystd).stage("aggregate autocovariance")?;
        let EigenDecomposition {
            eigenvalues,
            eigenvectors: gamma,
        } = sym_eigen(&w.matrix).stage("eigen-decomposition")?;

        let z = components(ystd.values() * &gamma);
        let z = TimeSeriesMatrix::from_values(z).stage("components")?;
        let zw = prewhiten(&z, self.cfg.max_ar).stage("prewhiten")?;
        let statistics = pair_statistics(&zw, self.m).stage("cross correlation")?;
        let edges = select_edges(&statistics, self.cfg.method, self.cfg.edge_cap).stage("edge selection")?;
        let partition = union_groups(self.y.p(), &edges)?;

        let order = partition.order();
        let permuted = DMatrix::from_fn(gamma.nrows(), gamma.ncols(), |r, c| gamma[(r, order[c])]);
        let transform_b = permuted.transpose() * &whitener;
        let x_hat = TimeSeriesMatrix::new(
            self.y.values() * transform_b.transpose(),
            (1..=self.y.p()).map(|j| format!("x{j}")).collect(),
        )?;

        let (omega_y, omega_x) = if w.flavor == WFlavor::Volatility {
            (None, None)
        } else {
            let wx = build_w_thresholded(&x_hat, self.cfg.k0, &self.cfg.threshold).stage("omega")?;
            (Some(predictive_strength(&w)?), Some(predictive_strength(&wx)?))
        };
        if let (Some(oy), Some(ox)) = (omega_y, omega_x) {
            if (oy - ox).abs() > 1e-6 * (1.0 + oy.abs()) {
                log::warn!("predictive strength differs between y ({oy}) and x ({ox})");
            }
        }

        Ok(SegmentationResult {
            gamma,
            whitener,
            transform_b,
            eigenvalues,
            partition,
            graph: ConnectivityGraph {
                p: self.y.p(),
                edges,
                statistics,
            },
            order,
            x_hat,
            prewhitened: zw,
            w,
            config: self.cfg.clone(),
            m: self.m,
            omega_y,
            omega_x,
        })
    }
}

/// Full segmentation: standardize, aggregate lagged autocovariances,
/// eigen-decompose, prewhiten the components, test pairs and group.
pub fn segment(y: &TimeSeriesMatrix, cfg: &SegmentConfig) -> Result<SegmentationResult> {
    let pipeline = Pipeline::new(y, cfg)?;
    pipeline.run(|ystd| build_w_thresholded(ystd, cfg.k0, &cfg.threshold), |z| z)
}

/// Volatility variant: the eigen step uses the conditional second-moment
/// estimator and pairs are tested on the squared components.
pub fn segment_volatility(y: &TimeSeriesMatrix, cfg: &SegmentConfig) -> Result<SegmentationResult> {
    let pipeline = Pipeline::new(y, cfg)?;
    pipeline.run(|ystd| build_w_volatility(ystd, cfg.k0), |z| z.map(|v| v * v))
}

/// Serialized form of a [`SegmentationResult`]. Matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationDocument {
    pub schema_version: u32,
    pub n: usize,
    pub p: usize,
    pub names: Vec<String>,
    pub flavor: WFlavor,
    pub config: SegmentConfig,
    pub m: usize,
    pub gamma: Vec<Vec<f64>>,
    pub whitener: Vec<Vec<f64>>,
    #[serde(rename = "transform_B")]
    pub transform_b: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub order: Vec<usize>,
    pub groups: Vec<Vec<usize>>,
    /// Connected pairs with their statistics.
    pub edges: Vec<PairStatistic>,
    /// Every tested pair.
    pub pairs: Vec<PairStatistic>,
    pub omega: Omega,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Omega {
    pub y: Option<f64>,
    pub x: Option<f64>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Parse("ragged matrix".into()));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl SegmentationDocument {
    pub fn from_result(res: &SegmentationResult, names: &[String]) -> Self {
        let edges = res
            .graph
            .edges
            .iter()
            .filter_map(|&(i, j)| res.graph.statistic(i, j).cloned())
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            n: res.x_hat.n(),
            p: res.x_hat.p(),
            names: names.to_vec(),
            flavor: res.w.flavor,
            config: res.config.clone(),
            m: res.m,
            gamma: rows_of(&res.gamma),
            whitener: rows_of(&res.whitener),
            transform_b: rows_of(&res.transform_b),
            eigenvalues: res.eigenvalues.iter().copied().collect(),
            order: res.order.clone(),
            groups: res.partition.groups().to_vec(),
            edges,
            pairs: res.graph.statistics.clone(),
            omega: Omega {
                y: res.omega_y,
                x: res.omega_x,
            },
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(s)?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse(format!("unsupported schema_version {}", doc.schema_version)));
        }
        Ok(doc)
    }

    pub fn transform_b_matrix(&self) -> Result<DMatrix<f64>> {
        matrix_from_rows(&self.transform_b)
    }

    pub fn gamma_matrix(&self) -> Result<DMatrix<f64>> {
        matrix_from_rows(&self.gamma)
    }

    pub fn partition(&self) -> Result<GroupPartition> {
        GroupPartition::new(self.groups.clone())
    }
}
