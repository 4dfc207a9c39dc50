//! Brute-force reference implementations shared by the integration tests.
//! Everything here is written with plain loops and avoids the crate's own
//! helpers so agreement is meaningful.
#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use tsseg::grouping::{correlation_pvalue, simes_combine};
use tsseg::{
    build_w_plugin, distance_d, distance_d_general, fdr_select, max_cross_corr_stat, ratio_select,
    sample_autocov, simes_pvalue, threshold_matrix, union_groups, DMatrix, SubspaceBasis,
    TimeSeriesMatrix,
};

pub const ORACLE_TOL: f64 = 1e-10;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(n: usize, p: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(rng))
}

/// Rows are observations.
pub type Rows = Vec<Vec<f64>>;

pub fn to_rows(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

pub fn max_diff(a: &DMatrix<f64>, b: &Rows) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, row) in b.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            worst = worst.max((a[(i, j)] - v).abs());
        }
    }
    worst
}

pub fn autocov(y: &Rows, k: usize) -> Rows {
    let n = y.len();
    let p = y[0].len();
    let mut mean = vec![0.0; p];
    for row in y {
        for j in 0..p {
            mean[j] += row[j] / n as f64;
        }
    }
    let mut s = vec![vec![0.0; p]; p];
    for a in 0..p {
        for b in 0..p {
            let mut acc = 0.0;
            for t in 0..n - k {
                acc += (y[t + k][a] - mean[a]) * (y[t][b] - mean[b]);
            }
            s[a][b] = acc / n as f64;
        }
    }
    s
}

pub fn w_plugin(y: &Rows, k0: usize) -> Rows {
    let p = y[0].len();
    let mut w: Rows = (0..p).map(|i| (0..p).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for k in 1..=k0 {
        let s = autocov(y, k);
        for a in 0..p {
            for b in 0..p {
                for c in 0..p {
                    w[a][b] += s[a][c] * s[b][c];
                }
            }
        }
    }
    w
}

pub fn threshold(s: &Rows, u: f64) -> Rows {
    s.iter()
        .map(|r| r.iter().map(|&v| if v.abs() < u { 0.0 } else { v }).collect())
        .collect()
}

/// Complementary error function: power series below 2, continued fraction
/// above.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 2.0 {
        let mut term = x;
        let mut sum = x;
        let mut k = 0.0;
        loop {
            k += 1.0;
            term *= -x * x / k;
            let add = term / (2.0 * k + 1.0);
            sum += add;
            if add.abs() < 1e-18 {
                break;
            }
        }
        1.0 - 2.0 / std::f64::consts::PI.sqrt() * sum
    } else {
        let mut frac = x;
        for k in (1..200).rev() {
            frac = x + (k as f64 / 2.0) / frac;
        }
        (-x * x).exp() / std::f64::consts::PI.sqrt() / frac
    }
}

pub fn cross_corr(y: &Rows, i: usize, j: usize, h: isize) -> f64 {
    let n = y.len();
    let mi = y.iter().map(|r| r[i]).sum::<f64>() / n as f64;
    let mj = y.iter().map(|r| r[j]).sum::<f64>() / n as f64;
    let si: f64 = y.iter().map(|r| (r[i] - mi).powi(2)).sum();
    let sj: f64 = y.iter().map(|r| (r[j] - mj).powi(2)).sum();
    let mut num = 0.0;
    for t in 0..n as isize {
        let s = t + h;
        if s >= 0 && s < n as isize {
            num += (y[s as usize][i] - mi) * (y[t as usize][j] - mj);
        }
    }
    num / (si * sj).sqrt()
}

pub fn simes(rhos: &[f64], n: usize) -> f64 {
    let mut p: Vec<f64> = rhos.iter().map(|r| erfc((n as f64).sqrt() * r.abs() / 2f64.sqrt())).collect();
    p.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = p.len() as f64;
    let mut best: f64 = 1.0;
    for (idx, v) in p.iter().enumerate() {
        best = best.min(v * k / (idx as f64 + 1.0));
    }
    best
}

pub fn fdr(p_sorted: &[f64], beta: f64) -> usize {
    let p0 = p_sorted.len();
    let mut d = 0;
    for k in 1..=p0 {
        if p_sorted[k - 1] <= k as f64 * beta / p0 as f64 {
            d = k;
        }
    }
    d
}

pub fn ratio(l: &[f64], c0: f64) -> usize {
    let p0 = l.len();
    let mut best = 1;
    let mut best_ratio = f64::NEG_INFINITY;
    let mut j = 1;
    while j < p0 && (j as f64) < c0 * p0 as f64 {
        let r = l[j - 1] / l[j].max(1e-12);
        if r > best_ratio {
            best_ratio = r;
            best = j;
        }
        j += 1;
    }
    best
}

/// Connected components by breadth-first search, each sorted, ordered by
/// smallest member.
pub fn components(p: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; p];
    let mut out = Vec::new();
    for s in 0..p {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut queue = vec![s];
        let mut comp = Vec::new();
        while let Some(v) = queue.pop() {
            comp.push(v);
            for &(a, b) in edges {
                for (x, y) in [(a, b), (b, a)] {
                    if x == v && !seen[y] {
                        seen[y] = true;
                        queue.push(y);
                    }
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Modified Gram-Schmidt on the columns.
pub fn orthonormalize(h: &DMatrix<f64>) -> DMatrix<f64> {
    let mut q = h.clone();
    for j in 0..q.ncols() {
        for i in 0..j {
            let d = q.column(i).dot(&q.column(j));
            let qi = q.column(i).into_owned();
            let mut cj = q.column_mut(j);
            cj -= qi * d;
        }
        let norm = q.column(j).norm();
        q.column_mut(j).unscale_mut(norm);
    }
    q
}

/// Distance from the sines of the principal angles, taken as singular
/// values of the smaller basis with its projection on the larger removed.
pub fn subspace_distance(h1: &DMatrix<f64>, h2: &DMatrix<f64>) -> f64 {
    let (a, b) = if h1.ncols() <= h2.ncols() { (h1, h2) } else { (h2, h1) };
    let qa = orthonormalize(a);
    let qb = orthonormalize(b);
    let mut residual = qa.clone();
    for j in 0..residual.ncols() {
        for i in 0..qb.ncols() {
            let d = qb.column(i).dot(&qa.column(j));
            let qi = qb.column(i).into_owned();
            let mut c = residual.column_mut(j);
            c -= qi * d;
        }
    }
    let sines = residual.singular_values();
    let sum: f64 = sines.iter().map(|s| s * s).sum();
    (sum / qa.ncols() as f64).sqrt()
}

/// Worst discrepancy per component over `instances` random cases.
pub struct OracleOutcome {
    pub name: &'static str,
    pub worst: f64,
    pub mismatches: usize,
}

impl OracleOutcome {
    pub fn passed(&self) -> bool {
        self.worst <= ORACLE_TOL && self.mismatches == 0
    }
}

fn outcome(name: &'static str, worst: f64, mismatches: usize) -> OracleOutcome {
    OracleOutcome { name, worst, mismatches }
}

pub fn check_autocov(instances: usize, seed: u64) -> OracleOutcome {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = r.random_range(10..=200);
        let p = r.random_range(1..=4);
        let y = gaussian(n, p, &mut r);
        let ts = TimeSeriesMatrix::from_values(y.clone()).unwrap();
        let k = r.random_range(0..6);
        let got = sample_autocov(&ts, k).unwrap().matrix;
        worst = worst.max(max_diff(&got, &autocov(&to_rows(&y), k)));
    }
    outcome("sample_autocov", worst, 0)
}

pub fn check_w_plugin(instances: usize, seed: u64) -> OracleOutcome {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = r.random_range(10..=200);
        let p = r.random_range(1..=4);
        let k0 = r.random_range(1..=5);
        let y = gaussian(n, p, &mut r);
        let ts = TimeSeriesMatrix::from_values(y.clone()).unwrap();
        let got = build_w_plugin(&ts, k0).unwrap().matrix;
        worst = worst.max(max_diff(&got, &w_plugin(&to_rows(&y), k0)));
    }
    outcome("build_w_plugin", worst, 0)
}

pub fn check_threshold(instances: usize, seed: u64) -> OracleOutcome {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let p = r.random_range(1..=4);
        let s = gaussian(p, p, &mut r);
        // pick u on an entry half the time so the boundary is exercised
        let u = if r.random_bool(0.5) {
            s[(r.random_range(0..p), r.random_range(0..p))].abs()
        } else {
            r.random_range(0.0..1.5)
        };
        worst = worst.max(max_diff(&threshold_matrix(&s, u), &threshold(&to_rows(&s), u)));
    }
    outcome("threshold_matrix", worst, 0)
}

pub fn check_simes(instances: usize, seed: u64) -> OracleOutcome {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = r.random_range(20..=200);
        let p = r.random_range(2..=4);
        let m = r.random_range(1..=5);
        let mut y = gaussian(n, p, &mut r);
        // inject some cross dependence so small p-values occur
        for t in 1..n {
            y[(t, 1)] += 0.4 * y[(t - 1, 0)];
        }
        let rows = to_rows(&y);
        let rhos: Vec<f64> = (-(m as isize)..=m as isize).map(|h| cross_corr(&rows, 0, 1, h)).collect();
        worst = worst.max((simes_pvalue(&rhos, n) - simes(&rhos, n)).abs());
        for rho in &rhos {
            worst = worst.max((correlation_pvalue(*rho, n) - erfc((n as f64).sqrt() * rho.abs() / 2f64.sqrt())).abs());
        }
        let mut pv: Vec<f64> = (0..5).map(|_| r.random::<f64>()).collect();
        let direct = simes_combine(&pv);
        pv.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let k = pv.len() as f64;
        let brute = pv.iter().enumerate().map(|(i, v)| v * k / (i as f64 + 1.0)).fold(1.0, f64::min);
        worst = worst.max((direct - brute).abs());

        let ts = TimeSeriesMatrix::from_values(y).unwrap();
        let (l, _) = max_cross_corr_stat(&ts, 0, 1, m).unwrap();
        let brute_l = rhos.iter().map(|v| v.abs()).fold(0.0, f64::max);
        worst = worst.max((l - brute_l).abs());
    }
    outcome("simes_pvalue", worst, 0)
}

pub fn check_fdr(instances: usize, seed: u64) -> OracleOutcome {
    let mut r = rng(seed);
    let mut mismatches = 0;
    for _ in 0..instances {
        let p0 = r.random_range(1..=6);
        let beta = r.random_range(0.001..0.5);
        let mut pv: Vec<f64> = (0..p0)
            .map(|_| if r.random_bool(0.4) { r.random_range(0.0..0.01) } else { r.random::<f64>() })
            .collect();
        pv.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if fdr_select(&pv, beta) != fdr(&pv, beta) {
            mismatches += 1;
        }
    }
    outcome("fdr_select", 0.0, mismatches)
}

pub fn check_ratio(instances: usize, seed: u64) -> OracleOutcome {
    let mut r = rng(seed);
    let mut mismatches = 0;
    for _ in 0..instances {
        let p0 = r.random_range(2..=6);
        let c0 = if r.random_bool(0.5) { 0.75 } else { r.random_range(0.05..=1.0) };
        let mut l: Vec<f64> = (0..p0).map(|_| r.random::<f64>()).collect();
        l.sort_by(|a, b| b.partial_cmp(a).unwrap());
        if ratio_select(&l, c0).unwrap() != ratio(&l, c0) {
            mismatches += 1;
        }
    }
    outcome("ratio_select", 0.0, mismatches)
}

pub fn check_union(instances: usize, seed: u64) -> OracleOutcome {
    let mut r = rng(seed);
    let mut mismatches = 0;
    for _ in 0..instances {
        let p = r.random_range(1..=4);
        let pairs: Vec<(usize, usize)> = (0..p).flat_map(|i| (i + 1..p).map(move |j| (i, j))).collect();
        let edges: Vec<(usize, usize)> = pairs.into_iter().filter(|_| r.random_bool(0.35)).collect();
        let mut got: Vec<Vec<usize>> = union_groups(p, &edges)
            .unwrap()
            .groups()
            .iter()
            .map(|g| {
                let mut g = g.clone();
                g.sort_unstable();
                g
            })
            .collect();
        got.sort();
        if got != components(p, &edges) {
            mismatches += 1;
        }
    }
    outcome("union_groups", 0.0, mismatches)
}

pub fn check_distances(instances: usize, seed: u64) -> OracleOutcome {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let p = r.random_range(2..=4);
        let r1 = r.random_range(1..=p);
        let r2 = r.random_range(1..=p);
        let h1 = gaussian(p, r1, &mut r);
        let h2 = gaussian(p, r2, &mut r);
        worst = worst.max((distance_d_general(&h1, &h2).unwrap() - subspace_distance(&h1, &h2)).abs());
        let h3 = gaussian(p, r1, &mut r);
        let b1 = SubspaceBasis::new(orthonormalize(&h1)).unwrap();
        let b3 = SubspaceBasis::new(orthonormalize(&h3)).unwrap();
        worst = worst.max((distance_d(&b1, &b3).unwrap() - subspace_distance(&h1, &h3)).abs());
    }
    outcome("distance metrics", worst, 0)
}

pub fn oracle_suite(instances: usize, seed: u64) -> Vec<OracleOutcome> {
    vec![
        check_autocov(instances, seed),
        check_w_plugin(instances, seed + 1),
        check_threshold(instances, seed + 2),
        check_simes(instances, seed + 3),
        check_fdr(instances, seed + 4),
        check_ratio(instances, seed + 5),
        check_union(instances, seed + 6),
        check_distances(instances, seed + 7),
    ]
}

/// Latent block VAR(1) with blocks of sizes 3, 2, 1, fixed and clearly
/// distinct dynamics and independent standard normal innovations, mixed by
/// a `U(-3, 3)` matrix. The blocks are exactly uncorrelated at all lags.
pub fn block_var(n: usize, seed: u64) -> TimeSeriesMatrix {
    let mut r = rng(seed);
    let phi = DMatrix::from_row_slice(6, 6, &[
        0.8, 0.3, 0.0, 0.0, 0.0, 0.0,
        -0.3, 0.8, 0.0, 0.0, 0.0, 0.0,
        0.2, 0.2, 0.5, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, -0.7, 0.4, 0.0,
        0.0, 0.0, 0.0, -0.4, -0.7, 0.0,
        0.0, 0.0, 0.0, 0.0, 0.0, 0.3,
    ]);
    let a = DMatrix::from_fn(6, 6, |_, _| r.random_range(-3.0..3.0));
    let burn = 500;
    let e = gaussian(n + burn, 6, &mut r);
    let mut x = DMatrix::zeros(n, 6);
    let mut prev = tsseg::DVector::zeros(6);
    for t in 0..n + burn {
        let next = &phi * &prev + e.row(t).transpose();
        if t >= burn {
            x.set_row(t - burn, &next.transpose());
        }
        prev = next;
    }
    TimeSeriesMatrix::from_values(x * a.transpose()).unwrap()
}
