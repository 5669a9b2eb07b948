//! Block-partitioned sparse operators.
//!
//! A [`BlockMatrix`] stores its entries twice, once compressed by column and
//! once compressed by row, so that both `A^j delta_j` (a primal block touching
//! a column slice) and `A_i^T delta_i` (a dual block touching a row slice) cost
//! time proportional to the nonzeros they touch.

use std::io::{BufRead, Write};
use std::ops::Range;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};
use crate::vecops::{mix64, norm, norm_sq};

/// Default number of submatrices `lambda_rs` is allowed to enumerate.
pub const DEFAULT_ENUM_BUDGET: u64 = 10_000;
pub const NORM_TOL: f64 = 1e-9;
pub const NORM_MAX_ITER: usize = 5000;
/// Operators with at most this many entries get an exact dense SVD.
pub const DENSE_SVD_LIMIT: usize = 40_000;

/// Contiguous partition of `0..dim` into blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    offsets: Vec<usize>,
}

impl BlockPartition {
    pub fn new(offsets: Vec<usize>) -> Result<Self> {
        if offsets.len() < 2 {
            return Err(Error::InvalidPartition(
                "need at least one block (two offsets)".into(),
            ));
        }
        if offsets[0] != 0 {
            return Err(Error::InvalidPartition("first offset must be 0".into()));
        }
        if let Some(w) = offsets.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidPartition(format!(
                "offsets must be strictly increasing ({} >= {})",
                w[0], w[1]
            )));
        }
        Ok(Self { offsets })
    }

    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        offsets.push(0);
        let mut acc = 0;
        for &s in sizes {
            acc += s;
            offsets.push(acc);
        }
        Self::new(offsets)
    }

    /// One block per coordinate.
    pub fn singletons(dim: usize) -> Result<Self> {
        Self::new((0..=dim).collect())
    }

    /// Equal blocks of `size` coordinates; `dim` must be a multiple of `size`.
    pub fn uniform(dim: usize, size: usize) -> Result<Self> {
        if size == 0 || !dim.is_multiple_of(size) {
            return Err(Error::InvalidPartition(format!(
                "cannot split {dim} into blocks of {size}"
            )));
        }
        Self::new((0..=dim / size).map(|b| b * size).collect())
    }

    pub fn num_blocks(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    #[inline]
    pub fn range(&self, block: usize) -> Range<usize> {
        self.offsets[block]..self.offsets[block + 1]
    }

    pub fn block_size(&self, block: usize) -> usize {
        self.offsets[block + 1] - self.offsets[block]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Block containing coordinate `idx`.
    pub fn block_of(&self, idx: usize) -> Option<usize> {
        if idx >= self.dim() {
            return None;
        }
        Some(self.offsets.partition_point(|&o| o <= idx) - 1)
    }

    pub(crate) fn check_block(&self, block: usize) -> Result<()> {
        if block >= self.num_blocks() {
            return Err(Error::BlockOutOfRange {
                index: block,
                count: self.num_blocks(),
            });
        }
        Ok(())
    }
}

/// Compressed sparse storage (either by row or by column).
#[derive(Debug, Clone, PartialEq)]
struct Compressed {
    ptr: Vec<usize>,
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl Compressed {
    /// Builds from `(major, minor, value)` triplets sorted by `(major, minor)`.
    fn from_sorted(n_major: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut ptr = vec![0usize; n_major + 1];
        for &(maj, _, _) in entries {
            ptr[maj + 1] += 1;
        }
        for i in 0..n_major {
            ptr[i + 1] += ptr[i];
        }
        Self {
            ptr,
            idx: entries.iter().map(|e| e.1).collect(),
            val: entries.iter().map(|e| e.2).collect(),
        }
    }

    #[inline]
    fn lane(&self, major: usize) -> (&[usize], &[f64]) {
        let r = self.ptr[major]..self.ptr[major + 1];
        (&self.idx[r.clone()], &self.val[r])
    }
}

/// Sparse linear operator `A: X -> Y` with a row (dual) and column (primal)
/// block partition.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    rows: usize,
    cols: usize,
    row_partition: BlockPartition,
    col_partition: BlockPartition,
    by_row: Compressed,
    by_col: Compressed,
    row_block_nnz: Vec<usize>,
    col_block_nnz: Vec<usize>,
}

impl BlockMatrix {
    /// Builds the operator from coordinate triplets (0-based). Duplicate
    /// coordinates are summed; explicit zeros are dropped.
    pub fn from_triplets(
        row_partition: BlockPartition,
        col_partition: BlockPartition,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let rows = row_partition.dim();
        let cols = col_partition.dim();
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (i, j, v) in triplets {
            if i >= rows || j >= cols {
                return Err(Error::invalid(format!(
                    "entry ({i}, {j}) outside {rows}x{cols} operator"
                )));
            }
            if !v.is_finite() {
                return Err(Error::invalid(format!("non-finite entry at ({i}, {j})")));
            }
            entries.push((i, j, v));
        }
        entries.sort_by_key(|a| (a.0, a.1));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for e in entries {
            match merged.last_mut() {
                Some(last) if last.0 == e.0 && last.1 == e.1 => last.2 += e.2,
                _ => merged.push(e),
            }
        }
        merged.retain(|e| e.2 != 0.0);

        let by_row = Compressed::from_sorted(rows, &merged);
        let mut transposed: Vec<(usize, usize, f64)> =
            merged.iter().map(|&(i, j, v)| (j, i, v)).collect();
        transposed.sort_by_key(|a| (a.0, a.1));
        let by_col = Compressed::from_sorted(cols, &transposed);

        let row_block_nnz = (0..row_partition.num_blocks())
            .map(|b| {
                let r = row_partition.range(b);
                by_row.ptr[r.end] - by_row.ptr[r.start]
            })
            .collect();
        let col_block_nnz = (0..col_partition.num_blocks())
            .map(|b| {
                let r = col_partition.range(b);
                by_col.ptr[r.end] - by_col.ptr[r.start]
            })
            .collect();

        Ok(Self {
            rows,
            cols,
            row_partition,
            col_partition,
            by_row,
            by_col,
            row_block_nnz,
            col_block_nnz,
        })
    }

    /// Dense row-major constructor, mostly for tests and tiny fixtures.
    pub fn from_dense(
        row_partition: BlockPartition,
        col_partition: BlockPartition,
        dense: &[Vec<f64>],
    ) -> Result<Self> {
        check_len(row_partition.dim(), dense.len(), "dense rows")?;
        let mut trip = Vec::new();
        for (i, row) in dense.iter().enumerate() {
            check_len(col_partition.dim(), row.len(), "dense cols")?;
            for (j, &v) in row.iter().enumerate() {
                trip.push((i, j, v));
            }
        }
        Self::from_triplets(row_partition, col_partition, trip)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.by_row.val.len()
    }

    pub fn row_partition(&self) -> &BlockPartition {
        &self.row_partition
    }

    pub fn col_partition(&self) -> &BlockPartition {
        &self.col_partition
    }

    /// Nonzeros in the column slice `A^j`.
    pub fn col_block_nnz(&self, block: usize) -> usize {
        self.col_block_nnz[block]
    }

    /// Nonzeros in the row slice `A_i`.
    pub fn row_block_nnz(&self, block: usize) -> usize {
        self.row_block_nnz[block]
    }

    /// Entries of row `i` as `(column indices, values)`, columns ascending.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        self.by_row.lane(i)
    }

    /// Entries of column `j` as `(row indices, values)`, rows ascending.
    pub fn col(&self, j: usize) -> (&[usize], &[f64]) {
        self.by_col.lane(j)
    }

    /// Iterates `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| {
            let (idx, val) = self.row(i);
            idx.iter().zip(val).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.cols]; self.rows];
        for (i, j, v) in self.triplets() {
            d[i][j] = v;
        }
        d
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.rows];
        self.matvec_into(x, &mut out)?;
        Ok(out)
    }

    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_len(self.cols, x.len(), "matvec input")?;
        check_len(self.rows, out.len(), "matvec output")?;
        for (i, o) in out.iter_mut().enumerate() {
            let (idx, val) = self.by_row.lane(i);
            *o = idx.iter().zip(val).map(|(&j, &v)| v * x[j]).sum();
        }
        Ok(())
    }

    pub fn rmatvec(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.cols];
        self.rmatvec_into(y, &mut out)?;
        Ok(out)
    }

    pub fn rmatvec_into(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        check_len(self.rows, y.len(), "rmatvec input")?;
        check_len(self.cols, out.len(), "rmatvec output")?;
        for (j, o) in out.iter_mut().enumerate() {
            let (idx, val) = self.by_col.lane(j);
            *o = idx.iter().zip(val).map(|(&i, &v)| v * y[i]).sum();
        }
        Ok(())
    }

    /// `cache += scale * sum_{j in changed} A^j delta_j`.
    ///
    /// `delta` is a full primal-length vector; only coordinates inside the
    /// listed column blocks are read.
    pub fn incremental_matvec_update(
        &self,
        cache: &mut [f64],
        changed: &[usize],
        delta: &[f64],
        scale: f64,
    ) -> Result<()> {
        check_len(self.rows, cache.len(), "dual cache")?;
        check_len(self.cols, delta.len(), "primal delta")?;
        for &b in changed {
            self.col_partition.check_block(b)?;
        }
        for &b in changed {
            self.add_col_block(cache, b, delta, scale);
        }
        Ok(())
    }

    /// `cache += scale * sum_{i in changed} A_i^T delta_i`.
    pub fn incremental_rmatvec_update(
        &self,
        cache: &mut [f64],
        changed: &[usize],
        delta: &[f64],
        scale: f64,
    ) -> Result<()> {
        check_len(self.cols, cache.len(), "primal cache")?;
        check_len(self.rows, delta.len(), "dual delta")?;
        for &b in changed {
            self.row_partition.check_block(b)?;
        }
        for &b in changed {
            self.add_row_block(cache, b, delta, scale);
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn add_col_block(&self, cache: &mut [f64], block: usize, delta: &[f64], scale: f64) {
        for j in self.col_partition.range(block) {
            let d = delta[j];
            if d == 0.0 {
                continue;
            }
            let (idx, val) = self.by_col.lane(j);
            for (&i, &v) in idx.iter().zip(val) {
                cache[i] += scale * v * d;
            }
        }
    }

    #[inline]
    pub(crate) fn add_row_block(&self, cache: &mut [f64], block: usize, delta: &[f64], scale: f64) {
        for i in self.row_partition.range(block) {
            let d = delta[i];
            if d == 0.0 {
                continue;
            }
            let (idx, val) = self.by_row.lane(i);
            for (&j, &v) in idx.iter().zip(val) {
                cache[j] += scale * v * d;
            }
        }
    }

    /// Estimate of the largest singular value.
    pub fn spectral_norm(&self, tol: f64, max_iter: usize, seed: u64) -> NormEstimate {
        let sub = SubOperator::full(self);
        sub.spectral_norm(tol, max_iter, seed)
    }

    /// Norm of the submatrix `A_{IJ}` for row blocks `I` and column blocks `J`.
    pub fn submatrix_norm(
        &self,
        row_blocks: &[usize],
        col_blocks: &[usize],
        tol: f64,
        max_iter: usize,
        seed: u64,
    ) -> Result<NormEstimate> {
        for &b in row_blocks {
            self.row_partition.check_block(b)?;
        }
        for &b in col_blocks {
            self.col_partition.check_block(b)?;
        }
        Ok(SubOperator::restrict(self, row_blocks, col_blocks).spectral_norm(tol, max_iter, seed))
    }

    /// `Lambda_{r,s}`: largest norm over all `r` row blocks x `s` column blocks.
    ///
    /// Enumerates exhaustively when `C(n,r) * C(m,s) <= enum_budget`,
    /// otherwise returns `||A||`, which bounds every submatrix norm.
    pub fn lambda_rs(&self, r: usize, s: usize, enum_budget: u64) -> Result<BlockConstant> {
        let n = self.row_partition.num_blocks();
        let m = self.col_partition.num_blocks();
        if r == 0 || r > n {
            return Err(Error::invalid(format!("r = {r} must lie in 1..={n}")));
        }
        if s == 0 || s > m {
            return Err(Error::invalid(format!("s = {s} must lie in 1..={m}")));
        }
        let count = binomial(n, r).saturating_mul(binomial(m, s));
        if count > enum_budget as u128 {
            let est = self.spectral_norm(NORM_TOL, NORM_MAX_ITER, 0);
            return Ok(BlockConstant {
                value: est.value,
                exact: false,
                iterations: est.iterations,
            });
        }
        let mut best = 0.0f64;
        let mut iterations = 0;
        let mut index = 0u64;
        let mut rows = (0..r).collect::<Vec<_>>();
        loop {
            let mut cols = (0..s).collect::<Vec<_>>();
            loop {
                let est = SubOperator::restrict(self, &rows, &cols).spectral_norm(
                    NORM_TOL,
                    NORM_MAX_ITER,
                    mix64(index),
                );
                best = best.max(est.value);
                iterations += est.iterations;
                index += 1;
                if !next_combination(&mut cols, m) {
                    break;
                }
            }
            if !next_combination(&mut rows, n) {
                break;
            }
        }
        Ok(BlockConstant {
            value: best,
            exact: true,
            iterations,
        })
    }

    /// `Lambda_r`: largest norm over all row restrictions `A_I`, `|I| = r`.
    pub fn lambda_r(&self, r: usize, enum_budget: u64) -> Result<BlockConstant> {
        let n = self.row_partition.num_blocks();
        let m = self.col_partition.num_blocks();
        if r == 0 || r > n {
            return Err(Error::invalid(format!("r = {r} must lie in 1..={n}")));
        }
        if binomial(n, r) > enum_budget as u128 {
            let est = self.spectral_norm(NORM_TOL, NORM_MAX_ITER, 0);
            return Ok(BlockConstant {
                value: est.value,
                exact: false,
                iterations: est.iterations,
            });
        }
        let all_cols: Vec<usize> = (0..m).collect();
        let mut rows = (0..r).collect::<Vec<_>>();
        let mut best = 0.0f64;
        let mut iterations = 0;
        let mut index = 0u64;
        loop {
            let est = SubOperator::restrict(self, &rows, &all_cols).spectral_norm(
                NORM_TOL,
                NORM_MAX_ITER,
                mix64(index),
            );
            best = best.max(est.value);
            iterations += est.iterations;
            index += 1;
            if !next_combination(&mut rows, n) {
                break;
            }
        }
        Ok(BlockConstant {
            value: best,
            exact: true,
            iterations,
        })
    }

    /// All three step-size constants for sampling sizes `(r, s)`.
    pub fn norm_report(&self, r: usize, s: usize, enum_budget: u64) -> Result<NormReport> {
        let full = self.spectral_norm(NORM_TOL, NORM_MAX_ITER, 0);
        let lr = self.lambda_r(r, enum_budget)?;
        let lrs = self.lambda_rs(r, s, enum_budget)?;
        Ok(NormReport {
            lambda: full.value,
            lambda_r: lr.value,
            lambda_rs: lrs.value,
            lambda_converged: full.converged,
            lambda_r_exact: lr.exact,
            lambda_rs_exact: lrs.exact,
            iterations_used: full.iterations + lr.iterations + lrs.iterations,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// A block operator constant and whether it was computed exhaustively.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockConstant {
    pub value: f64,
    pub exact: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormReport {
    /// `||A||`.
    pub lambda: f64,
    pub lambda_r: f64,
    pub lambda_rs: f64,
    pub lambda_converged: bool,
    pub lambda_r_exact: bool,
    pub lambda_rs_exact: bool,
    pub iterations_used: usize,
}

/// Compact row-compressed copy of a submatrix, reindexed to local columns.
struct SubOperator {
    rows: usize,
    cols: usize,
    ptr: Vec<usize>,
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl SubOperator {
    fn full(a: &BlockMatrix) -> Self {
        Self {
            rows: a.rows,
            cols: a.cols,
            ptr: a.by_row.ptr.clone(),
            idx: a.by_row.idx.clone(),
            val: a.by_row.val.clone(),
        }
    }

    fn restrict(a: &BlockMatrix, row_blocks: &[usize], col_blocks: &[usize]) -> Self {
        let mut local = vec![usize::MAX; a.cols];
        let mut cols = 0;
        for &b in col_blocks {
            for j in a.col_partition.range(b) {
                local[j] = cols;
                cols += 1;
            }
        }
        let mut ptr = vec![0];
        let mut idx = Vec::new();
        let mut val = Vec::new();
        for &b in row_blocks {
            for i in a.row_partition.range(b) {
                let (ri, rv) = a.row(i);
                for (&j, &v) in ri.iter().zip(rv) {
                    if local[j] != usize::MAX {
                        idx.push(local[j]);
                        val.push(v);
                    }
                }
                ptr.push(idx.len());
            }
        }
        Self {
            rows: ptr.len() - 1,
            cols,
            ptr,
            idx,
            val,
        }
    }

    /// Dense SVD for small operators, power iteration on `B^T B` otherwise.
    /// Power iteration converges from below, so the SVD path is preferred
    /// whenever it is affordable.
    fn spectral_norm(&self, tol: f64, max_iter: usize, seed: u64) -> NormEstimate {
        if self.val.is_empty() || self.cols == 0 {
            return NormEstimate {
                value: 0.0,
                converged: true,
                iterations: 0,
            };
        }
        if self.rows * self.cols <= DENSE_SVD_LIMIT {
            let mut d = DMatrix::<f64>::zeros(self.rows, self.cols);
            for i in 0..self.rows {
                for k in self.ptr[i]..self.ptr[i + 1] {
                    d[(i, self.idx[k])] += self.val[k];
                }
            }
            let value = d.singular_values().iter().fold(0.0f64, |m, &v| m.max(v));
            return NormEstimate {
                value,
                converged: true,
                iterations: 1,
            };
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v: Vec<f64> = (0..self.cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        let nv = norm(&v);
        v.iter_mut().for_each(|e| *e /= nv);
        let mut w = vec![0.0; self.rows];
        let mut u = vec![0.0; self.cols];
        let mut prev = 0.0;
        let mut rayleigh = 0.0;
        for it in 1..=max_iter {
            for i in 0..self.rows {
                let r = self.ptr[i]..self.ptr[i + 1];
                w[i] = self.idx[r.clone()]
                    .iter()
                    .zip(&self.val[r])
                    .map(|(&j, &a)| a * v[j])
                    .sum();
            }
            rayleigh = norm_sq(&w);
            u.iter_mut().for_each(|e| *e = 0.0);
            for i in 0..self.rows {
                let r = self.ptr[i]..self.ptr[i + 1];
                for (&j, &a) in self.idx[r.clone()].iter().zip(&self.val[r]) {
                    u[j] += a * w[i];
                }
            }
            let nu = norm(&u);
            if nu == 0.0 {
                return NormEstimate {
                    value: rayleigh.sqrt(),
                    converged: true,
                    iterations: it,
                };
            }
            if it > 1 && (rayleigh - prev).abs() < tol * rayleigh {
                return NormEstimate {
                    value: rayleigh.sqrt(),
                    converged: true,
                    iterations: it,
                };
            }
            prev = rayleigh;
            for (vj, uj) in v.iter_mut().zip(&u) {
                *vj = uj / nu;
            }
        }
        NormEstimate {
            value: rayleigh.sqrt(),
            converged: false,
            iterations: max_iter,
        }
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
        if acc == u128::MAX {
            return acc;
        }
    }
    acc
}

/// Advances a sorted k-combination of `0..n` in lexicographic order.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for t in i + 1..k {
                c[t] = c[t - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Coordinate-format entries read from a Matrix Market file (0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateMatrix {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

/// Writes `A` as `%%MatrixMarket matrix coordinate real general`.
/// Values use the shortest round-trip representation.
pub fn write_matrix_market<W: Write>(a: &BlockMatrix, mut w: W) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", a.rows(), a.cols(), a.nnz())?;
    for (i, j, v) in a.triplets() {
        writeln!(w, "{} {} {:?}", i + 1, j + 1, v)?;
    }
    Ok(())
}

/// Reads a real (or integer/pattern) general coordinate Matrix Market stream.
pub fn read_matrix_market<R: BufRead>(r: R) -> Result<CoordinateMatrix> {
    read_matrix_market_lines(r.lines().enumerate().map(|(n, l)| (n + 1, l)))
}

pub(crate) fn read_matrix_market_lines<I>(mut lines: I) -> Result<CoordinateMatrix>
where
    I: Iterator<Item = (usize, std::io::Result<String>)>,
{
    let (first_no, first) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty Matrix Market stream"))?;
    let first = first?;
    let banner: Vec<String> = first.split_whitespace().map(|s| s.to_lowercase()).collect();
    if banner.len() < 5 || banner[0] != "%%matrixmarket" || banner[1] != "matrix" {
        return Err(Error::parse(first_no, "missing %%MatrixMarket matrix banner"));
    }
    if banner[2] != "coordinate" {
        return Err(Error::parse(first_no, "only coordinate format is supported"));
    }
    let pattern = match banner[3].as_str() {
        "real" | "integer" => false,
        "pattern" => true,
        other => return Err(Error::parse(first_no, format!("unsupported field '{other}'"))),
    };
    if banner[4] != "general" {
        return Err(Error::parse(first_no, "only general symmetry is supported"));
    }

    let mut size: Option<(usize, usize, usize)> = None;
    let mut entries = Vec::new();
    for (line_no, line) in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let tok: Vec<&str> = t.split_whitespace().collect();
        let parse_usize = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::parse(line_no, format!("bad integer '{s}': {e}")))
        };
        match size {
            None => {
                if tok.len() != 3 {
                    return Err(Error::parse(line_no, "expected 'rows cols nnz'"));
                }
                size = Some((parse_usize(tok[0])?, parse_usize(tok[1])?, parse_usize(tok[2])?));
            }
            Some((rows, cols, _)) => {
                let want = if pattern { 2 } else { 3 };
                if tok.len() != want {
                    return Err(Error::parse(line_no, format!("expected {want} fields")));
                }
                let i = parse_usize(tok[0])?;
                let j = parse_usize(tok[1])?;
                if i == 0 || j == 0 || i > rows || j > cols {
                    return Err(Error::parse(line_no, format!("index ({i}, {j}) out of range")));
                }
                let v = if pattern {
                    1.0
                } else {
                    tok[2]
                        .parse::<f64>()
                        .map_err(|e| Error::parse(line_no, format!("bad value '{}': {e}", tok[2])))?
                };
                entries.push((i - 1, j - 1, v));
            }
        }
    }
    let (rows, cols, nnz) = size.ok_or_else(|| Error::parse(first_no, "missing size line"))?;
    if entries.len() != nnz {
        return Err(Error::parse(
            first_no,
            format!("declared {nnz} entries, found {}", entries.len()),
        ));
    }
    Ok(CoordinateMatrix { rows, cols, entries })
}
