//! Independent dense oracles shared by the integration tests.
#![allow(dead_code)]

use dspdhg::instances::{build_svm, synthetic_svm, LibsvmDataset};
use dspdhg::sampling::{draw_subset, stream_rng, Side};
use dspdhg::{BlockMatrix, BlockPartition, SaddleProblem};
use nalgebra::{DMatrix, DVector};

pub mod oracle_checks;

pub fn dense(a: &BlockMatrix) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.rows(), a.cols());
    for (i, j, v) in a.triplets() {
        d[(i, j)] += v;
    }
    d
}

pub fn svd_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().iter().fold(0.0f64, |a, &b| a.max(b))
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize == k {
            out.push((0..n).filter(|&i| mask & (1 << i) != 0).collect());
        }
    }
    out
}

fn expand(p: &BlockPartition, blocks: &[usize]) -> Vec<usize> {
    blocks.iter().flat_map(|&b| p.range(b)).collect()
}

/// Brute-force `max ||A_{IJ}||` over `r` row blocks and `s` column blocks
/// via dense SVD of every submatrix.
pub fn brute_lambda_rs(a: &BlockMatrix, r: usize, s: usize) -> f64 {
    let d = dense(a);
    let rp = a.row_partition();
    let cp = a.col_partition();
    let mut best = 0.0f64;
    for rows in subsets(rp.num_blocks(), r) {
        let ri = expand(rp, &rows);
        for cols in subsets(cp.num_blocks(), s) {
            let ci = expand(cp, &cols);
            let sub = d.select_rows(&ri).select_columns(&ci);
            best = best.max(svd_norm(&sub));
        }
    }
    best
}

pub fn brute_lambda_r(a: &BlockMatrix, r: usize) -> f64 {
    let d = dense(a);
    let rp = a.row_partition();
    subsets(rp.num_blocks(), r)
        .into_iter()
        .map(|rows| svd_norm(&d.select_rows(&expand(rp, &rows))))
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------- SVM

/// Small SVM with generic real features.
pub fn small_svm(n: usize, m: usize, seed: u64) -> (LibsvmDataset, SaddleProblem) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|_| (0..m).map(|j| (j, rng.random_range(-1.0..1.0))).collect())
        .collect();
    let labels: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let data = LibsvmDataset {
        samples,
        labels,
        dim: m,
    };
    let p = build_svm(&data, 1.0).unwrap();
    (data, p)
}

/// The desk-scale SVM used by the rate and protocol checks.
pub fn desk_svm() -> SaddleProblem {
    build_svm(&synthetic_svm(100, 100, 0.1, 1).unwrap(), 1.0).unwrap()
}

/// Hand-coded SVM pieces: `prox_{tau g}` and `prox_{sigma f*}` in closed form.
pub struct SvmOracle {
    pub a: DMatrix<f64>,
    pub m: usize,
    pub c: f64,
}

impl SvmOracle {
    pub fn new(problem: &SaddleProblem, c: f64) -> Self {
        Self {
            a: dense(problem.matrix()),
            m: problem.primal_dim() - 1,
            c,
        }
    }

    pub fn prox_g(&self, tau: f64, v: &DVector<f64>) -> DVector<f64> {
        let mut out = v.clone();
        for j in 0..self.m {
            out[j] = v[j] / (1.0 + tau);
        }
        out
    }

    /// `f*(y) = sum y_i` on `[-C, 0]`.
    pub fn prox_fstar_i(&self, sigma: f64, v: f64) -> f64 {
        (v - sigma).clamp(-self.c, 0.0)
    }
}

/// Textbook dense PDHG: `x+ = prox(x - tau A^T (2y - y_prev))`,
/// `y+ = prox(y + sigma A x+)`. Returns the iterates after each step.
pub fn dense_pdhg(
    o: &SvmOracle,
    tau: f64,
    sigma: f64,
    iters: usize,
) -> Vec<(DVector<f64>, DVector<f64>)> {
    let (nr, nc) = o.a.shape();
    let mut x = DVector::zeros(nc);
    let mut y = DVector::zeros(nr);
    let mut y_prev = DVector::zeros(nr);
    let mut out = Vec::new();
    for _ in 0..iters {
        let ybar = &y * 2.0 - &y_prev;
        x = o.prox_g(tau, &(&x - o.a.transpose() * ybar * tau));
        let ax = &o.a * &x;
        let y_new = DVector::from_fn(nr, |i, _| o.prox_fstar_i(sigma, y[i] + sigma * ax[i]));
        y_prev = std::mem::replace(&mut y, y_new);
        out.push((x.clone(), y.clone()));
    }
    out
}

/// Dense SPDHG with full primal update and dual blocks drawn from the same
/// counter-based stream the library uses: `ybar = y + (y+ - y)/q`.
pub fn dense_spdhg(
    o: &SvmOracle,
    tau: f64,
    sigma: f64,
    r: usize,
    seed: u64,
    iters: usize,
) -> Vec<(DVector<f64>, DVector<f64>)> {
    let (nr, nc) = o.a.shape();
    let q = r as f64 / nr as f64;
    let mut x = DVector::zeros(nc);
    let mut y = DVector::zeros(nr);
    let mut ybar = DVector::zeros(nr);
    let mut out = Vec::new();
    for k in 0..iters {
        x = o.prox_g(tau, &(&x - o.a.transpose() * &ybar * tau));
        let ax = &o.a * &x;
        let t = draw_subset(&mut stream_rng(seed, k as u64, Side::Dual), nr, r).unwrap();
        let mut y_new = y.clone();
        for &i in &t {
            y_new[i] = o.prox_fstar_i(sigma, y[i] + sigma * ax[i]);
        }
        ybar = &y_new + (&y_new - &y) / q;
        y = y_new;
        out.push((x.clone(), y.clone()));
    }
    out
}

/// SVM optimum by active-set enumeration of the dual
/// `max sum a - 1/2 a^T K a` s.t. `0 <= a <= C`, `b^T a = 0`, with
/// `K_ik = b_i b_k <x_i, x_k>`. Returns `(objective, w, d)`.
pub fn svm_dual_enumeration(data: &LibsvmDataset, c: f64) -> (f64, Vec<f64>, f64) {
    let n = data.len();
    let m = data.dim;
    let mut feats = DMatrix::<f64>::zeros(n, m);
    for (i, s) in data.samples.iter().enumerate() {
        for &(j, v) in s {
            feats[(i, j)] = v;
        }
    }
    let b = DVector::from_vec(data.labels.clone());
    let g = &feats * feats.transpose();
    let k = DMatrix::from_fn(n, n, |i, j| b[i] * b[j] * g[(i, j)]);
    let mut best: Option<(f64, DVector<f64>)> = None;
    let total = 3usize.pow(n as u32);
    for code in 0..total {
        // 0: at zero, 1: at C, 2: free
        let mut st = vec![0; n];
        let mut cc = code;
        for s in st.iter_mut() {
            *s = cc % 3;
            cc /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| st[i] == 2).collect();
        let mut alpha = DVector::from_fn(n, |i, _| if st[i] == 1 { c } else { 0.0 });
        if !free.is_empty() {
            let f = free.len();
            let mut kkt = DMatrix::zeros(f + 1, f + 1);
            let mut rhs = DVector::zeros(f + 1);
            for (a, &i) in free.iter().enumerate() {
                for (bb, &j) in free.iter().enumerate() {
                    kkt[(a, bb)] = k[(i, j)];
                }
                kkt[(a, f)] = b[i];
                kkt[(f, a)] = b[i];
                let fixed: f64 = (0..n).filter(|j| st[*j] != 2).map(|j| k[(i, j)] * alpha[j]).sum();
                rhs[a] = 1.0 - fixed;
            }
            rhs[f] = -(0..n).filter(|j| st[*j] != 2).map(|j| b[j] * alpha[j]).sum::<f64>();
            let Some(sol) = kkt.lu().solve(&rhs) else { continue };
            for (a, &i) in free.iter().enumerate() {
                alpha[i] = sol[a];
            }
        }
        let feasible = alpha.iter().all(|&v| v >= -1e-12 && v <= c + 1e-12) && b.dot(&alpha).abs() < 1e-10;
        if !feasible {
            continue;
        }
        let val = alpha.sum() - 0.5 * alpha.dot(&(&k * &alpha));
        if best.as_ref().is_none_or(|(v, _)| val > *v) {
            best = Some((val, alpha));
        }
    }
    let (val, alpha) = best.expect("some feasible active set");
    let w = feats.transpose() * alpha.component_mul(&b);
    // intercept from a free support vector, else the midpoint of the feasible range
    let margin = |i: usize| b[i] - (feats.row(i) * &w)[0];
    let free: Vec<usize> = (0..n).filter(|&i| alpha[i] > 1e-9 && alpha[i] < c - 1e-9).collect();
    let d = if let Some(&i) = free.first() {
        margin(i)
    } else {
        f64::NAN
    };
    (val, w.iter().copied().collect(), d)
}

// ---------------------------------------------------------------- MPC

/// Equality-constrained box QP `min sum w_i x_i^2` s.t. `M x = c`,
/// `lo <= x <= hi`, by enumerating which coordinates sit at a bound.
/// Returns the optimal value and point.
pub fn box_qp_enumeration(
    w: &[f64],
    m: &DMatrix<f64>,
    c: &DVector<f64>,
    lo: &[f64],
    hi: &[f64],
) -> (f64, DVector<f64>) {
    let n = w.len();
    let rows = m.nrows();
    let total = 3usize.pow(n as u32);
    let mut best: Option<(f64, DVector<f64>)> = None;
    for code in 0..total {
        let mut st = vec![0; n];
        let mut cc = code;
        for s in st.iter_mut() {
            *s = cc % 3;
            cc /= 3;
        }
        let mut x = DVector::from_fn(n, |i, _| match st[i] {
            0 => lo[i],
            1 => hi[i],
            _ => 0.0,
        });
        let free: Vec<usize> = (0..n).filter(|&i| st[i] == 2).collect();
        let f = free.len();
        let mut kkt = DMatrix::zeros(f + rows, f + rows);
        let mut rhs = DVector::zeros(f + rows);
        for (a, &i) in free.iter().enumerate() {
            kkt[(a, a)] = 2.0 * w[i];
            for r in 0..rows {
                kkt[(a, f + r)] = m[(r, i)];
                kkt[(f + r, a)] = m[(r, i)];
            }
        }
        let fixed = m * &x;
        for r in 0..rows {
            rhs[f + r] = c[r] - fixed[r];
        }
        let svd = kkt.clone().svd(true, true);
        let Ok(sol) = svd.solve(&rhs, 1e-12) else { continue };
        if (&kkt * &sol - &rhs).amax() > 1e-9 {
            continue;
        }
        for (a, &i) in free.iter().enumerate() {
            x[i] = sol[a];
        }
        if (0..n).any(|i| x[i] < lo[i] - 1e-12 || x[i] > hi[i] + 1e-12) {
            continue;
        }
        if (m * &x - c).amax() > 1e-9 {
            continue;
        }
        let val: f64 = (0..n).map(|i| w[i] * x[i] * x[i]).sum();
        if best.as_ref().is_none_or(|(v, _)| val < *v) {
            best = Some((val, x));
        }
    }
    best.expect("feasible MPC instance")
}

// ---------------------------------------------------------------- fitting

/// Least-squares slope and R^2 of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, r2)
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
