//! Dense symmetric eigen-analysis, inverse square roots, subspace distances
//! and the small least-squares solver shared by the AR and VAR fits.
//!
//! The eigen solver is nalgebra's `SymmetricEigen`; this module adds the
//! ordering and sign conventions that make results reproducible.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use crate::error::{Error, Result};

/// Relative eigenvalue floor below which a covariance is treated as singular.
pub const EIGEN_FLOOR: f64 = 1e-10;

const SYMMETRY_TOL: f64 = 1e-8;
const SIGN_TIE_TOL: f64 = 1e-12;

pub(crate) fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Eigenvalues sorted descending with matching orthonormal eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub eigenvalues: DVector<f64>,
    /// Column `i` pairs with `eigenvalues[i]`.
    pub eigenvectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `V diag(f(λ)) V'`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let v = &self.eigenvectors;
        let scaled = DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * f(self.eigenvalues[j]));
        &scaled * v.transpose()
    }
}

/// Eigen-decomposition of a symmetric matrix.
///
/// Eigenvalues come out descending. Equal eigenvalues keep the order the
/// backend produced them in, so under ties only the spanned subspace is
/// reproducible. Each eigenvector is signed so its largest-magnitude entry
/// is positive; near-ties in magnitude go to the lowest index.
pub fn sym_eigen(s: &DMatrix<f64>) -> Result<EigenDecomposition> {
    if !s.is_square() {
        return Err(Error::Contract(format!(
            "eigen-decomposition needs a square matrix, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    let scale = max_abs(s);
    let asym = max_abs(&(s - s.transpose()));
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::Contract(format!(
            "matrix is not symmetric (max |S - S'| = {asym:e})"
        )));
    }
    let p = s.nrows();
    if p == 0 {
        return Ok(EigenDecomposition {
            eigenvalues: DVector::zeros(0),
            eigenvectors: DMatrix::zeros(0, 0),
        });
    }
    let sym = (s + s.transpose()) * 0.5;
    let SymmetricEigen {
        eigenvalues,
        eigenvectors,
    } = SymmetricEigen::new(sym);

    let mut order: Vec<usize> = (0..p).collect();
    // stable sort keeps backend order among exact ties
    order.sort_by(|&a, &b| eigenvalues[b].total_cmp(&eigenvalues[a]));

    let mut values = DVector::zeros(p);
    let mut vectors = DMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eigenvalues[src];
        let mut col = eigenvectors.column(src).into_owned();
        let peak = col.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let lead = col
            .iter()
            .position(|v| v.abs() >= peak - SIGN_TIE_TOL * peak.max(1.0))
            .unwrap_or(0);
        if col[lead] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    Ok(EigenDecomposition {
        eigenvalues: values,
        eigenvectors: vectors,
    })
}

fn check_floor(values: &DVector<f64>) -> Result<()> {
    let max = values.max();
    let min = values.min();
    let floor = EIGEN_FLOOR * max.max(0.0);
    if max <= 0.0 || min < floor {
        return Err(Error::Singular {
            eigenvalue: min,
            floor,
        });
    }
    Ok(())
}

/// Symmetric inverse square root `S^{-1/2}` of a positive definite matrix.
pub fn inv_sqrt(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eigen(s)?;
    check_floor(&eig.eigenvalues)?;
    let r = eig.reconstruct_with(|l| 1.0 / l.sqrt());
    Ok((&r + r.transpose()) * 0.5)
}

/// A `p x r` matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    matrix: DMatrix<f64>,
}

impl SubspaceBasis {
    /// Wraps a matrix that already has orthonormal columns.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let r = matrix.ncols();
        let gram = matrix.transpose() * &matrix;
        let err = max_abs(&(gram - DMatrix::identity(r, r)));
        if err > 1e-8 {
            return Err(Error::Contract(format!(
                "basis columns are not orthonormal (max |H'H - I| = {err:e})"
            )));
        }
        Ok(Self { matrix })
    }

    /// Orthonormal basis for the column span of a full-rank matrix.
    pub fn from_span(h: &DMatrix<f64>) -> Result<Self> {
        let r = h.ncols();
        if r > h.nrows() {
            return Err(Error::Contract("more spanning vectors than dimensions".into()));
        }
        let qr = h.clone().qr();
        let diag = qr.r().diagonal().map(f64::abs);
        if r > 0 && !(diag.min() > EIGEN_FLOOR * diag.max()) {
            return Err(Error::Contract("spanning matrix is rank deficient".into()));
        }
        Ok(Self { matrix: qr.q() })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn rank(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// `1 - tr(P_a P_b) / r_a` for orthonormal `qa` of rank `r_a <= r_b`,
/// computed as the squared residual of projecting `qa` onto `qb`, which
/// stays accurate when the subspaces nearly coincide.
fn distance_orthonormal(qa: &DMatrix<f64>, qb: &DMatrix<f64>) -> f64 {
    let residual = qa - qb * (qb.transpose() * qa);
    (residual.norm_squared() / qa.ncols() as f64).clamp(0.0, 1.0).sqrt()
}

/// Grassmann distance `sqrt(1 - tr(H1 H1' H2 H2') / r)` between two subspaces
/// of equal dimension.
pub fn distance_d(h1: &SubspaceBasis, h2: &SubspaceBasis) -> Result<f64> {
    if h1.rank() != h2.rank() {
        return Err(Error::Contract(format!(
            "rank mismatch {} vs {}; use distance_d_general",
            h1.rank(),
            h2.rank()
        )));
    }
    if h1.ambient_dim() != h2.ambient_dim() {
        return Err(Error::Contract("bases live in different dimensions".into()));
    }
    if h1.rank() == 0 {
        return Err(Error::Contract("empty subspace".into()));
    }
    Ok(distance_orthonormal(h1.matrix(), h2.matrix()))
}

/// Distance between spans of possibly different dimension,
/// `sqrt(1 - tr(P1 P2) / min(r1, r2))`. Zero when one span contains the other.
pub fn distance_d_general(h1: &DMatrix<f64>, h2: &DMatrix<f64>) -> Result<f64> {
    if h1.nrows() != h2.nrows() {
        return Err(Error::Contract("matrices live in different dimensions".into()));
    }
    if h1.ncols() == 0 || h2.ncols() == 0 {
        return Err(Error::Contract("empty subspace".into()));
    }
    let q1 = SubspaceBasis::from_span(h1)?;
    let q2 = SubspaceBasis::from_span(h2)?;
    let (qa, qb) = if q1.rank() <= q2.rank() { (&q1, &q2) } else { (&q2, &q1) };
    Ok(distance_orthonormal(qa.matrix(), qb.matrix()))
}

/// Average distance between estimated and true subspaces after matching each
/// true subspace to an estimate of the same rank.
///
/// Matching is greedy: all equal-rank pairs are ranked by distance and
/// accepted smallest first, each estimate used once.
pub fn mean_error_dbar(estimate: &[DMatrix<f64>], truth: &[DMatrix<f64>]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::NotCorrectSpecification(format!(
            "{} estimated groups vs {} true groups",
            estimate.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::NotCorrectSpecification("no groups".into()));
    }
    let mut est_ranks: Vec<usize> = estimate.iter().map(|m| m.ncols()).collect();
    let mut true_ranks: Vec<usize> = truth.iter().map(|m| m.ncols()).collect();
    est_ranks.sort_unstable();
    true_ranks.sort_unstable();
    if est_ranks != true_ranks {
        return Err(Error::NotCorrectSpecification(format!(
            "rank multisets differ: {est_ranks:?} vs {true_ranks:?}"
        )));
    }

    let mut candidates = Vec::new();
    for (j, t) in truth.iter().enumerate() {
        for (i, e) in estimate.iter().enumerate() {
            if t.ncols() == e.ncols() {
                candidates.push((distance_d_general(t, e)?, j, i));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut truth_done = vec![false; truth.len()];
    let mut est_used = vec![false; estimate.len()];
    let mut total = 0.0;
    for (d, j, i) in candidates {
        if truth_done[j] || est_used[i] {
            continue;
        }
        truth_done[j] = true;
        est_used[i] = true;
        total += d;
    }
    Ok(total / truth.len() as f64)
}

/// Ordinary least squares fit of every column of `y` on the regressors `x`.
pub(crate) struct LeastSquares {
    /// `k x m` coefficients, one column per response.
    pub coef: DMatrix<f64>,
    pub residuals: DMatrix<f64>,
    /// `(X'X)^{-1}`, needed for standard errors.
    pub gram_inv: DMatrix<f64>,
}

pub(crate) fn least_squares(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<LeastSquares> {
    let k = x.ncols();
    let gram = x.transpose() * x;
    if k > 0 {
        let eig = SymmetricEigen::new(gram.clone());
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if !(max > 0.0) || min < 1e-12 * max {
            return Err(Error::Conditioning(format!(
                "regressor Gram matrix eigenvalues span [{min:e}, {max:e}]"
            )));
        }
    }
    let chol = gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Conditioning("regressor Gram matrix is not positive definite".into()))?;
    let coef = chol.solve(&(x.transpose() * y));
    let residuals = y - x * &coef;
    let gram_inv = chol.inverse();
    Ok(LeastSquares {
        coef,
        residuals,
        gram_inv,
    })
}
