//! Problem families: soft-margin SVM from LIBSVM data and synthetic MPC.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::blockops::{BlockMatrix, BlockPartition};
use crate::error::{check_len, open_file, Error, Result};
use crate::problem::{PrimalLoss, SaddleProblem};
use crate::prox::ProxAtom;
use crate::sampling::draw_subset;

pub const MAX_STABILITY_DRAWS: usize = 1000;

/// Binary classification data with sparse features.
#[derive(Debug, Clone, PartialEq)]
pub struct LibsvmDataset {
    /// per sample `(feature index, value)`, 0-based and strictly increasing
    pub samples: Vec<Vec<(usize, f64)>>,
    pub labels: Vec<f64>,
    pub dim: usize,
}

impl LibsvmDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.samples.iter().map(Vec::len).sum()
    }
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| Error::parse(line, format!("bad {what} '{tok}'")))
}

/// Parses LIBSVM text: `label idx:val idx:val ...` with 1-based indices.
/// Two-valued labels other than `±1` are mapped smaller to `-1`, larger to `+1`.
pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<LibsvmDataset> {
    let mut samples = Vec::new();
    let mut raw_labels = Vec::new();
    let mut dim = 0;
    for (k, line) in reader.lines().enumerate() {
        let line_no = k + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut toks = content.split_whitespace();
        let label: f64 = parse_num(toks.next().unwrap(), line_no, "label")?;
        if !label.is_finite() {
            return Err(Error::parse(line_no, "label is not finite"));
        }
        let mut feats: Vec<(usize, f64)> = Vec::new();
        for tok in toks {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| Error::parse(line_no, format!("expected idx:val, got '{tok}'")))?;
            let idx: usize = parse_num(i, line_no, "feature index")?;
            if idx == 0 {
                return Err(Error::parse(line_no, "feature indices are 1-based"));
            }
            let val: f64 = parse_num(v, line_no, "feature value")?;
            if !val.is_finite() {
                return Err(Error::parse(line_no, format!("feature value '{v}' is not finite")));
            }
            feats.push((idx - 1, val));
        }
        feats.sort_by_key(|f| f.0);
        if feats.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::parse(line_no, "duplicate feature index"));
        }
        if let Some(&(last, _)) = feats.last() {
            dim = dim.max(last + 1);
        }
        samples.push(feats);
        raw_labels.push(label);
    }
    let labels = map_labels(&raw_labels)?;
    Ok(LibsvmDataset {
        samples,
        labels,
        dim,
    })
}

fn map_labels(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.iter().all(|&l| l == 1.0 || l == -1.0) {
        return Ok(raw.to_vec());
    }
    let mut distinct: Vec<f64> = raw.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    match distinct.as_slice() {
        [lo, hi] => Ok(raw
            .iter()
            .map(|&l| if l == *lo { -1.0 } else if l == *hi { 1.0 } else { unreachable!() })
            .collect()),
        _ => Err(Error::invalid(format!(
            "labels are not binary: {} distinct values",
            distinct.len()
        ))),
    }
}

pub fn load_libsvm(path: impl AsRef<Path>) -> Result<LibsvmDataset> {
    parse_libsvm(BufReader::new(open_file(path.as_ref())?))
}

pub fn write_libsvm<W: Write>(data: &LibsvmDataset, mut w: W) -> Result<()> {
    for (feats, &label) in data.samples.iter().zip(&data.labels) {
        write!(w, "{label:+}")?;
        for &(i, v) in feats {
            write!(w, " {}:{v:?}", i + 1)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Soft-margin SVM `min 1/2 |w|^2 + C sum_i max(0, 1 - b_i (w^T a_i + d))`
/// with `x = (w, d)`, row `i` of `A` equal to `(b_i a_i^T, b_i)`, primal blocks
/// per coordinate and dual blocks per sample.
pub fn build_svm(data: &LibsvmDataset, c: f64) -> Result<SaddleProblem> {
    if data.is_empty() {
        return Err(Error::invalid("dataset has no samples"));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid(format!("penalty C = {c} must be positive")));
    }
    let n = data.len();
    let m = data.dim;
    check_len(n, data.labels.len(), "labels")?;
    if let Some(b) = data.labels.iter().find(|&&b| b != 1.0 && b != -1.0) {
        return Err(Error::invalid(format!("label {b} is not -1 or +1")));
    }
    let mut triplets = Vec::with_capacity(data.nnz() + n);
    for (i, (feats, &b)) in data.samples.iter().zip(&data.labels).enumerate() {
        for &(j, v) in feats {
            triplets.push((i, j, b * v));
        }
        triplets.push((i, m, b));
    }
    let a = BlockMatrix::from_triplets(
        BlockPartition::singletons(n)?,
        BlockPartition::singletons(m + 1)?,
        triplets,
    )?;
    let mut g: Vec<ProxAtom> = (0..m).map(|_| ProxAtom::half_square(1)).collect();
    g.push(ProxAtom::zero(1));
    let fstar = (0..n)
        .map(|_| ProxAtom::linear_over_box(vec![1.0], vec![-c], vec![0.0]))
        .collect::<Result<Vec<_>>>()?;
    let f = (0..n)
        .map(|_| PrimalLoss::Hinge { penalty: c, dim: 1 })
        .collect();
    Ok(SaddleProblem::new(a, g, fstar, Some(f))?.with_name(format!("svm n={n} m={m} C={c}")))
}

/// Random sparse binary features with labels from a noisy hyperplane.
pub fn synthetic_svm(n: usize, m: usize, density: f64, seed: u64) -> Result<LibsvmDataset> {
    if n == 0 || m == 0 {
        return Err(Error::invalid("synthetic SVM needs n, m >= 1"));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::invalid(format!("density {density} must lie in (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut samples = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n);
    for _ in 0..n {
        let mut feats: Vec<(usize, f64)> = (0..m)
            .filter(|_| rng.random::<f64>() < density)
            .map(|j| (j, 1.0))
            .collect();
        if feats.is_empty() {
            feats.push((rng.random_range(0..m as u64) as usize, 1.0));
        }
        let noise: f64 = StandardNormal.sample(&mut rng);
        scores.push(feats.iter().map(|&(j, v)| w[j] * v).sum::<f64>() + 0.5 * noise);
        samples.push(feats);
    }
    let mut sorted = scores.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[n / 2];
    let labels = scores
        .iter()
        .map(|&s| if s >= median { 1.0 } else { -1.0 })
        .collect();
    Ok(LibsvmDataset {
        samples,
        labels,
        dim: m,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MpcSpec {
    pub nx: usize,
    pub nu: usize,
    pub horizon: usize,
    pub seed: u64,
}

/// A generated MPC instance: system, costs and bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcInstance {
    pub spec: MpcSpec,
    /// row-major `nx x nx`
    pub a_sys: Vec<f64>,
    /// row-major `nx x nu`
    pub b_sys: Vec<f64>,
    pub h: Vec<f64>,
    pub r: Vec<f64>,
    pub x_bound: Vec<f64>,
    pub u_bound: Vec<f64>,
    pub x_init: Vec<f64>,
    pub stability_draws: usize,
    pub spectral_radius: f64,
}

// one RNG stream per generated field
const STREAM_A: u64 = 10;
const STREAM_B: u64 = 11;
const STREAM_H_POS: u64 = 12;
const STREAM_H_VAL: u64 = 13;
const STREAM_XBAR: u64 = 14;
const STREAM_UBAR: u64 = 15;
const STREAM_XINIT: u64 = 16;

fn field_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn spectral_radius(a: &[f64], n: usize) -> f64 {
    DMatrix::from_row_slice(n, n, a)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

fn uniform_positive(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    loop {
        let v = rng.random_range(lo..hi);
        if v > 0.0 {
            return v;
        }
    }
}

impl MpcInstance {
    pub fn generate(spec: MpcSpec) -> Result<Self> {
        let MpcSpec { nx, nu, horizon, seed } = spec;
        if nx == 0 || nu == 0 || horizon == 0 {
            return Err(Error::invalid("MPC dimensions and horizon must be >= 1"));
        }
        let noise = Normal::new(0.0, 0.1).expect("valid normal");
        let mut rng = field_rng(seed, STREAM_A);
        let mut accepted = None;
        for draw in 1..=MAX_STABILITY_DRAWS {
            let mut a: Vec<f64> = (0..nx * nx).map(|_| noise.sample(&mut rng)).collect();
            for i in 0..nx {
                a[i * nx + i] += 0.5;
            }
            let rho = spectral_radius(&a, nx);
            if rho < 1.0 {
                accepted = Some((a, draw, rho));
                break;
            }
        }
        let Some((a_sys, stability_draws, rho)) = accepted else {
            return Err(Error::Numerical(format!(
                "no stable system matrix after {MAX_STABILITY_DRAWS} draws"
            )));
        };

        let mut rng = field_rng(seed, STREAM_B);
        let b_sys = (0..nx * nu).map(|_| StandardNormal.sample(&mut rng)).collect();

        let nonzero = (0.7 * nx as f64).round() as usize;
        let mut h = vec![0.0; nx];
        if nonzero > 0 {
            let positions = draw_subset(&mut field_rng(seed, STREAM_H_POS), nx, nonzero)?;
            let mut rng = field_rng(seed, STREAM_H_VAL);
            for i in positions {
                h[i] = uniform_positive(&mut rng, 0.0, 10.0);
            }
        }

        let mut rng = field_rng(seed, STREAM_XBAR);
        let x_bound: Vec<f64> = (0..nx).map(|_| rng.random_range(1.0..2.0)).collect();
        let mut rng = field_rng(seed, STREAM_UBAR);
        let u_bound = (0..nu).map(|_| uniform_positive(&mut rng, 0.0, 0.1)).collect();
        let mut rng = field_rng(seed, STREAM_XINIT);
        let x_init = x_bound
            .iter()
            .map(|&b| rng.random_range(-0.5 * b..0.5 * b))
            .collect();

        Ok(Self {
            spec,
            a_sys,
            b_sys,
            h,
            r: vec![0.1; nu],
            x_bound,
            u_bound,
            x_init,
            stability_draws,
            spectral_radius: rho,
        })
    }

    /// `A_sys x_init`, the constant of the first dynamics constraint.
    pub fn first_constant(&self) -> Vec<f64> {
        let nx = self.spec.nx;
        (0..nx)
            .map(|i| (0..nx).map(|j| self.a_sys[i * nx + j] * self.x_init[j]).sum())
            .collect()
    }

    /// Saddle formulation with primal blocks `x_1..x_T, u_0..u_{T-1}` and one
    /// dual block per dynamics constraint `x_{t+1} - A x_t - B u_t = c_t`.
    pub fn to_problem(&self) -> Result<SaddleProblem> {
        let MpcSpec { nx, nu, horizon: t_len, .. } = self.spec;
        let state = |t: usize| (t - 1) * nx; // column offset of x_t, t >= 1
        let control = |t: usize| t_len * nx + t * nu; // offset of u_t
        let mut triplets = Vec::new();
        for t in 0..t_len {
            let row0 = t * nx;
            for i in 0..nx {
                triplets.push((row0 + i, state(t + 1) + i, 1.0));
                if t >= 1 {
                    for j in 0..nx {
                        triplets.push((row0 + i, state(t) + j, -self.a_sys[i * nx + j]));
                    }
                }
                for j in 0..nu {
                    triplets.push((row0 + i, control(t) + j, -self.b_sys[i * nu + j]));
                }
            }
        }
        let mut col_sizes = vec![nx; t_len];
        col_sizes.extend(std::iter::repeat_n(nu, t_len));
        let a = BlockMatrix::from_triplets(
            BlockPartition::uniform(t_len * nx, nx)?,
            BlockPartition::from_sizes(&col_sizes)?,
            triplets,
        )?;

        let neg = |v: &[f64]| v.iter().map(|b| -b).collect::<Vec<_>>();
        let mut g = Vec::with_capacity(2 * t_len);
        for _ in 0..t_len {
            g.push(ProxAtom::diag_quad_over_box(
                self.h.clone(),
                neg(&self.x_bound),
                self.x_bound.clone(),
            )?);
        }
        for _ in 0..t_len {
            g.push(ProxAtom::diag_quad_over_box(
                self.r.clone(),
                neg(&self.u_bound),
                self.u_bound.clone(),
            )?);
        }
        let c0 = self.first_constant();
        let mut fstar = Vec::with_capacity(t_len);
        let mut f = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let c = if t == 0 { c0.clone() } else { vec![0.0; nx] };
            fstar.push(ProxAtom::linear_over_box(
                c.clone(),
                vec![f64::NEG_INFINITY; nx],
                vec![f64::INFINITY; nx],
            )?);
            f.push(PrimalLoss::EqualTo { target: c });
        }
        let offset: f64 = self
            .h
            .iter()
            .zip(&self.x_init)
            .map(|(h, x)| h * x * x)
            .sum();
        Ok(SaddleProblem::new(a, g, fstar, Some(f))?
            .with_objective_offset(offset)
            .with_name(format!(
                "mpc nx={nx} nu={nu} T={t_len} seed={}",
                self.spec.seed
            )))
    }
}

pub fn gen_mpc(spec: MpcSpec) -> Result<SaddleProblem> {
    MpcInstance::generate(spec)?.to_problem()
}
