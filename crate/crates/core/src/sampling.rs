//! Uniform fixed-cardinality block samplings.
//!
//! Random streams are counter based: the generator for iteration `k` on a
//! given side is ChaCha8 keyed by the run seed, with the side as stream id and
//! the word position set to `k << 32`. Any draw can be reproduced from
//! `(seed, iteration, side)` alone, and primal and dual draws never share
//! words.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Primal,
    Dual,
}

impl Side {
    fn stream(self) -> u64 {
        match self {
            Side::Primal => 1,
            Side::Dual => 2,
        }
    }
}

/// Generator for one `(seed, iteration, side)` triple.
pub fn stream_rng(seed: u64, iteration: u64, side: Side) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(side.stream());
    rng.set_word_pos((iteration as u128) << 32);
    rng
}

/// Realized sampling sizes for both sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplingPlan {
    /// primal block count
    pub m: usize,
    /// dual block count
    pub n: usize,
    pub s: usize,
    pub r: usize,
    pub seed: u64,
}

impl SamplingPlan {
    pub fn new(m: usize, n: usize, s: usize, r: usize, seed: u64) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::invalid("block counts must be positive"));
        }
        if s == 0 || s > m {
            return Err(Error::invalid(format!("primal sample size {s} not in 1..={m}")));
        }
        if r == 0 || r > n {
            return Err(Error::invalid(format!("dual sample size {r} not in 1..={n}")));
        }
        Ok(Self { m, n, s, r, seed })
    }

    /// Cardinalities `s = max(1, round(p m))`, `r = max(1, round(q n))`.
    pub fn from_probabilities(m: usize, n: usize, p: f64, q: f64, seed: u64) -> Result<Self> {
        for (name, v) in [("p", p), ("q", q)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::invalid(format!("{name} = {v} must lie in (0, 1]")));
            }
        }
        let s = ((p * m as f64).round() as usize).clamp(1, m.max(1));
        let r = ((q * n as f64).round() as usize).clamp(1, n.max(1));
        Self::new(m, n, s, r, seed)
    }

    /// Realized primal probability `s / m`.
    pub fn p(&self) -> f64 {
        self.s as f64 / self.m as f64
    }

    /// Realized dual probability `r / n`.
    pub fn q(&self) -> f64 {
        self.r as f64 / self.n as f64
    }
}

/// Uniform `k`-subset of `0..universe`, sorted ascending (partial Fisher-Yates).
pub fn draw_subset<R: Rng + ?Sized>(rng: &mut R, universe: usize, k: usize) -> Result<Vec<usize>> {
    let mut sampler = BlockSampler::new(universe, k)?;
    Ok(sampler.draw(rng).to_vec())
}

/// Reusable partial Fisher-Yates sampler. The permutation buffer is restored
/// to the identity after each draw so the output depends only on the RNG.
#[derive(Debug, Clone)]
pub struct BlockSampler {
    universe: usize,
    k: usize,
    perm: Vec<usize>,
    swaps: Vec<usize>,
    out: Vec<usize>,
}

impl BlockSampler {
    pub fn new(universe: usize, k: usize) -> Result<Self> {
        if k == 0 || k > universe {
            return Err(Error::invalid(format!(
                "subset size {k} not in 1..={universe}"
            )));
        }
        Ok(Self {
            universe,
            k,
            perm: (0..universe).collect(),
            swaps: Vec::with_capacity(k),
            out: Vec::with_capacity(k),
        })
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> &[usize] {
        self.out.clear();
        if self.k == self.universe {
            self.out.extend(0..self.universe);
            return &self.out;
        }
        self.swaps.clear();
        for i in 0..self.k {
            // u64 range keeps the stream identical on 32- and 64-bit targets
            let j = i + rng.random_range(0..(self.universe - i) as u64) as usize;
            self.perm.swap(i, j);
            self.swaps.push(j);
        }
        self.out.extend_from_slice(&self.perm[..self.k]);
        for i in (0..self.k).rev() {
            self.perm.swap(i, self.swaps[i]);
        }
        self.out.sort_unstable();
        &self.out
    }
}
