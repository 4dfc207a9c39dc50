//! Latent block designs, classification of recovered segmentations and the
//! replicated Monte Carlo runner.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, StageContext};
use crate::grouping::{segment, GroupPartition, SegmentConfig, SegmentationResult};
use crate::linalg::{distance_d_general, mean_error_dbar};
use crate::series::TimeSeriesMatrix;

pub const DEFAULT_BURN_IN: usize = 500;

/// `eta_t = sum_i ar[i] eta_{t-1-i} + e_t + sum_j ma[j] e_{t-1-j}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arma {
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
}

impl Arma {
    pub fn new(ar: &[f64], ma: &[f64]) -> Self {
        Self {
            ar: ar.to_vec(),
            ma: ma.to_vec(),
        }
    }

    /// Spectral radius of the AR companion matrix.
    pub fn ar_spectral_radius(&self) -> f64 {
        let k = self.ar.len();
        if k == 0 {
            return 0.0;
        }
        let companion = DMatrix::from_fn(k, k, |r, c| {
            if r == 0 {
                self.ar[c]
            } else if r == c + 1 {
                1.0
            } else {
                0.0
            }
        });
        companion
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    fn simulate(&self, len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut eta = vec![0.0; len];
        let mut eps = vec![0.0; len];
        for t in 0..len {
            let e: f64 = StandardNormal.sample(rng);
            eps[t] = e;
            let mut v = e;
            for (i, a) in self.ar.iter().enumerate() {
                if t > i {
                    v += a * eta[t - 1 - i];
                }
            }
            for (j, b) in self.ma.iter().enumerate() {
                if t > j {
                    v += b * eps[t - 1 - j];
                }
            }
            eta[t] = v;
        }
        eta
    }
}

/// A block of `size` components `x_{i,t} = eta_{t+i}` driven by one ARMA
/// recursion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentBlock {
    pub size: usize,
    pub arma: Arma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignName {
    Example5,
    Example6,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentDesign {
    pub name: DesignName,
    pub blocks: Vec<LatentBlock>,
    pub burn_in: usize,
}

fn eta1() -> Arma {
    Arma::new(&[0.5, 0.3], &[-0.9, 0.3, 1.2, 1.3])
}
fn eta2() -> Arma {
    Arma::new(&[0.8, -0.5], &[1.0, 0.8, 1.8])
}
fn eta3() -> Arma {
    Arma::new(&[-0.7, -0.5], &[-1.0, -0.8])
}
fn eta4() -> Arma {
    Arma::new(&[-0.4, 0.5], &[1.0, 0.8, 1.5, 1.8])
}
fn eta5() -> Arma {
    Arma::new(&[0.85, -0.3], &[1.0, 0.5, 1.2])
}

impl LatentDesign {
    /// Six components in blocks of 3, 2 and 1.
    pub fn example5() -> Self {
        Self {
            name: DesignName::Example5,
            blocks: vec![
                LatentBlock { size: 3, arma: eta1() },
                LatentBlock { size: 2, arma: eta2() },
                LatentBlock { size: 1, arma: eta3() },
            ],
            burn_in: DEFAULT_BURN_IN,
        }
    }

    /// Twenty components in blocks of 6, 5, 4, 3 and 2.
    pub fn example6() -> Self {
        Self {
            name: DesignName::Example6,
            blocks: vec![
                LatentBlock { size: 6, arma: eta1() },
                LatentBlock { size: 5, arma: eta4() },
                LatentBlock { size: 4, arma: eta5() },
                LatentBlock { size: 3, arma: eta2() },
                LatentBlock { size: 2, arma: eta3() },
            ],
            burn_in: DEFAULT_BURN_IN,
        }
    }

    pub fn custom(blocks: Vec<LatentBlock>) -> Result<Self> {
        let d = Self {
            name: DesignName::Custom,
            blocks,
            burn_in: DEFAULT_BURN_IN,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "example5" => Ok(Self::example5()),
            "example6" => Ok(Self::example6()),
            other => Err(Error::InvalidInput(format!("unknown design {other:?} (example5, example6)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() || self.blocks.iter().any(|b| b.size == 0) {
            return Err(Error::Design("every block needs at least one component".into()));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            let rho = b.arma.ar_spectral_radius();
            if !(rho < 1.0) {
                return Err(Error::Design(format!(
                    "block {} recursion is not causal (companion spectral radius {rho:.4})",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.blocks.iter().map(|b| b.size).sum()
    }

    pub fn q(&self) -> usize {
        self.blocks.len()
    }

    pub fn truth(&self) -> GroupPartition {
        let mut start = 0;
        let groups = self
            .blocks
            .iter()
            .map(|b| {
                let g: Vec<usize> = (start..start + b.size).collect();
                start += b.size;
                g
            })
            .collect();
        GroupPartition::new(groups).expect("contiguous blocks partition 0..p")
    }

    pub fn label(&self) -> &'static str {
        match self.name {
            DesignName::Example5 => "example5",
            DesignName::Example6 => "example6",
            DesignName::Custom => "custom",
        }
    }
}

/// One simulated sample.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub y: TimeSeriesMatrix,
    /// Latent series, `y_t = a_true x_t`.
    pub x: DMatrix<f64>,
    pub a_true: DMatrix<f64>,
    pub truth: GroupPartition,
}

/// Draws the mixing matrix with `U(-3, 3)` entries, then the latent blocks,
/// and mixes them. Deterministic in `seed`.
pub fn generate(design: &LatentDesign, n: usize, seed: u64) -> Result<Simulated> {
    design.validate()?;
    if n < 50 {
        return Err(Error::range("n", n, ">= 50"));
    }
    let p = design.p();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unif = Uniform::new(-3.0, 3.0).map_err(|e| Error::Design(e.to_string()))?;
    let a_true = DMatrix::from_row_iterator(p, p, (0..p * p).map(|_| unif.sample(&mut rng)));

    let mut x = DMatrix::zeros(n, p);
    let mut col = 0;
    for block in &design.blocks {
        let len = design.burn_in + n + block.size - 1;
        let eta = block.arma.simulate(len, &mut rng);
        for i in 0..block.size {
            for t in 0..n {
                x[(t, col + i)] = eta[design.burn_in + t + i];
            }
        }
        col += block.size;
    }
    let y = TimeSeriesMatrix::from_values(&x * a_true.transpose())?;
    Ok(Simulated {
        y,
        x,
        a_true,
        truth: design.truth(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Classification {
    Correct,
    /// Fewer groups than the truth, each estimated group a union of true ones.
    Incomplete { q_hat: usize },
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub classification: Classification,
    /// Mean subspace error, present exactly when the outcome is correct.
    pub dbar: Option<f64>,
    pub seed: u64,
}

fn columns(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), idx.len(), |r, c| m[(r, idx[c])])
}

/// Compares an estimated segmentation with the truth.
///
/// True subspaces are taken in the standardized coordinates, i.e. the
/// columns of `whitener * a_true`. Correct means the group count and the
/// multiset of group sizes match. Incomplete means fewer groups, where
/// assigning each true group to its nearest estimated group accounts for
/// every estimated group's size exactly.
pub fn classify(result: &SegmentationResult, truth: &GroupPartition, a_true: &DMatrix<f64>, seed: u64) -> Result<ReplicationOutcome> {
    if truth.p() != result.partition.p() || a_true.nrows() != truth.p() {
        return Err(Error::InvalidInput("estimate and truth differ in dimension".into()));
    }
    let normalized = &result.whitener * a_true;
    let true_spaces: Vec<DMatrix<f64>> = truth.groups().iter().map(|g| columns(&normalized, g)).collect();
    let est_spaces: Vec<DMatrix<f64>> = (0..result.partition.len()).map(|g| result.group_basis(g)).collect();
    let (q, q_hat) = (true_spaces.len(), est_spaces.len());

    let mut true_sizes = truth.sizes();
    let mut est_sizes = result.partition.sizes();
    true_sizes.sort_unstable();
    est_sizes.sort_unstable();

    let outcome = |classification, dbar| ReplicationOutcome {
        classification,
        dbar,
        seed,
    };

    if q_hat == q && true_sizes == est_sizes {
        let dbar = mean_error_dbar(&est_spaces, &true_spaces)?;
        return Ok(outcome(Classification::Correct, Some(dbar)));
    }
    if q_hat < q {
        let mut absorbed = vec![0usize; q_hat];
        for t in &true_spaces {
            let mut best = (f64::INFINITY, 0);
            for (i, e) in est_spaces.iter().enumerate() {
                let d = distance_d_general(t, e)?;
                if d < best.0 {
                    best = (d, i);
                }
            }
            absorbed[best.1] += t.ncols();
        }
        if absorbed.iter().zip(&est_spaces).all(|(a, e)| *a == e.ncols()) {
            return Ok(outcome(Classification::Incomplete { q_hat }, None));
        }
    }
    Ok(outcome(Classification::Other, None))
}

/// Aggregated Monte Carlo outcome for one design and sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub design: String,
    pub n: usize,
    pub reps: usize,
    pub master_seed: u64,
    pub correct: f64,
    pub incomplete: f64,
    pub incomplete_q_minus_1: f64,
    pub other: f64,
    /// Number of incomplete replications per estimated group count.
    pub incomplete_by_q_hat: BTreeMap<usize, usize>,
    /// (min, q1, median, q3, max) of the mean subspace error over correct
    /// replications.
    pub dbar_quantiles: Option<[f64; 5]>,
    pub outcomes: Vec<ReplicationOutcome>,
}

impl MonteCarloReport {
    pub fn dbar_values(&self) -> Vec<f64> {
        self.outcomes.iter().filter_map(|o| o.dbar).collect()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `rep` under `master`.
pub fn replication_seed(master: u64, rep: usize) -> u64 {
    splitmix64(master ^ splitmix64(rep as u64))
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn five_number_summary(values: &[f64]) -> Option<[f64; 5]> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some([0.0, 0.25, 0.5, 0.75, 1.0].map(|q| quantile(&v, q)))
}

/// Runs one replication with an explicit seed.
pub fn replicate(design: &LatentDesign, n: usize, seed: u64, cfg: &SegmentConfig) -> Result<ReplicationOutcome> {
    let sim = generate(design, n, seed)?;
    let res = segment(&sim.y, cfg)?;
    classify(&res, &sim.truth, &sim.a_true, seed)
}

/// Replicates `generate -> segment -> classify` with per-replication seeds
/// derived from `master_seed`. Replications run in parallel; the report does
/// not depend on scheduling.
pub fn monte_carlo(design: &LatentDesign, n: usize, reps: usize, master_seed: u64, cfg: &SegmentConfig) -> Result<MonteCarloReport> {
    if reps == 0 {
        return Err(Error::range("reps", 0, ">= 1"));
    }
    design.validate()?;
    let outcomes: Vec<ReplicationOutcome> = (0..reps)
        .into_par_iter()
        .map(|rep| replicate(design, n, replication_seed(master_seed, rep), cfg).stage(format!("replication {rep}")))
        .collect::<Result<_>>()?;

    let q = design.q();
    let mut correct = 0;
    let mut incomplete = 0;
    let mut q_minus_1 = 0;
    let mut other = 0;
    let mut by_q_hat = BTreeMap::new();
    for o in &outcomes {
        match o.classification {
            Classification::Correct => correct += 1,
            Classification::Incomplete { q_hat } => {
                incomplete += 1;
                *by_q_hat.entry(q_hat).or_insert(0) += 1;
                if q_hat + 1 == q {
                    q_minus_1 += 1;
                }
            }
            Classification::Other => other += 1,
        }
    }
    let frac = |k: usize| k as f64 / reps as f64;
    let dbar: Vec<f64> = outcomes.iter().filter_map(|o| o.dbar).collect();
    Ok(MonteCarloReport {
        design: design.label().to_string(),
        n,
        reps,
        master_seed,
        correct: frac(correct),
        incomplete: frac(incomplete),
        incomplete_q_minus_1: frac(q_minus_1),
        other: frac(other),
        incomplete_by_q_hat: by_q_hat,
        dbar_quantiles: five_number_summary(&dbar),
        outcomes,
    })
}

/// Proportion table with one column per sample size.
pub fn table_csv(reports: &[MonteCarloReport]) -> String {
    let mut out = String::from("n");
    for r in reports {
        let _ = write!(out, ",{}", r.n);
    }
    out.push('\n');
    type Row = (&'static str, fn(&MonteCarloReport) -> f64);
    let rows: [Row; 4] = [
        ("correct", |r| r.correct),
        ("incomplete", |r| r.incomplete),
        ("incomplete_q_minus_1", |r| r.incomplete_q_minus_1),
        ("other", |r| r.other),
    ];
    for (label, get) in rows {
        out.push_str(label);
        for r in reports {
            let _ = write!(out, ",{:.3}", get(r));
        }
        out.push('\n');
    }
    out
}
