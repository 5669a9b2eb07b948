//! Separable convex atoms with closed-form proximal maps.

use crate::error::{check_len, Error, Result};

/// Slack applied to box indicators when evaluating points that came out of a
/// prox (or averages of such points).
pub const FEASIBILITY_SLACK: f64 = 1e-12;

/// A convex function on one block.
///
/// Quadratic weights use the convention `value = sum_i w_i x_i^2` (no 1/2).
/// Box bounds may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub enum ProxAtom {
    Zero { dim: usize },
    DiagQuadratic { weights: Vec<f64> },
    LinearOverBox { slope: Vec<f64>, lo: Vec<f64>, hi: Vec<f64> },
    DiagQuadOverBox { weights: Vec<f64>, lo: Vec<f64>, hi: Vec<f64> },
    /// `1/2 ||x||^2`
    HalfSquare { dim: usize },
}

fn check_box(lo: &[f64], hi: &[f64]) -> Result<()> {
    check_len(lo.len(), hi.len(), "box bounds")?;
    for (k, (&l, &h)) in lo.iter().zip(hi).enumerate() {
        if l.is_nan() || h.is_nan() || l > h || l == f64::INFINITY || h == f64::NEG_INFINITY {
            return Err(Error::invalid(format!("invalid box [{l}, {h}] at coordinate {k}")));
        }
    }
    Ok(())
}

fn check_weights(w: &[f64]) -> Result<()> {
    if let Some(k) = w.iter().position(|&v| !(v.is_finite() && v >= 0.0)) {
        return Err(Error::invalid(format!("weight {} at coordinate {k} must be finite and >= 0", w[k])));
    }
    Ok(())
}

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if let Some(k) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("{what} at coordinate {k} is not finite")));
    }
    Ok(())
}

#[inline]
fn clamp(v: f64, lo: f64, hi: f64) -> f64 {
    // infinite sides never bind
    if v < lo {
        lo
    } else if v > hi {
        hi
    } else {
        v
    }
}

#[inline]
fn outside(v: f64, lo: f64, hi: f64, slack: f64) -> bool {
    let lo = if lo.is_finite() { lo - slack * lo.abs().max(1.0) } else { lo };
    let hi = if hi.is_finite() { hi + slack * hi.abs().max(1.0) } else { hi };
    v < lo || v > hi
}

impl ProxAtom {
    pub fn zero(dim: usize) -> Self {
        ProxAtom::Zero { dim }
    }

    pub fn half_square(dim: usize) -> Self {
        ProxAtom::HalfSquare { dim }
    }

    pub fn diag_quadratic(weights: Vec<f64>) -> Result<Self> {
        check_weights(&weights)?;
        Ok(ProxAtom::DiagQuadratic { weights })
    }

    pub fn linear_over_box(slope: Vec<f64>, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        check_len(slope.len(), lo.len(), "slope vs bounds")?;
        check_finite(&slope, "slope")?;
        check_box(&lo, &hi)?;
        Ok(ProxAtom::LinearOverBox { slope, lo, hi })
    }

    pub fn diag_quad_over_box(weights: Vec<f64>, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        check_len(weights.len(), lo.len(), "weights vs bounds")?;
        check_weights(&weights)?;
        check_box(&lo, &hi)?;
        Ok(ProxAtom::DiagQuadOverBox { weights, lo, hi })
    }

    /// Re-runs constructor validation (for atoms built as enum literals).
    pub fn validate(&self) -> Result<()> {
        match self {
            ProxAtom::Zero { .. } | ProxAtom::HalfSquare { .. } => Ok(()),
            ProxAtom::DiagQuadratic { weights } => check_weights(weights),
            ProxAtom::LinearOverBox { slope, lo, hi } => {
                check_len(slope.len(), lo.len(), "slope vs bounds")?;
                check_finite(slope, "slope")?;
                check_box(lo, hi)
            }
            ProxAtom::DiagQuadOverBox { weights, lo, hi } => {
                check_len(weights.len(), lo.len(), "weights vs bounds")?;
                check_weights(weights)?;
                check_box(lo, hi)
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ProxAtom::Zero { dim } | ProxAtom::HalfSquare { dim } => *dim,
            ProxAtom::DiagQuadratic { weights } => weights.len(),
            ProxAtom::LinearOverBox { slope, .. } => slope.len(),
            ProxAtom::DiagQuadOverBox { weights, .. } => weights.len(),
        }
    }

    /// `out = argmin_u atom(u) + 1/(2t) ||u - v||^2`.
    pub fn prox(&self, t: f64, v: &[f64], out: &mut [f64]) -> Result<()> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::invalid(format!("prox step must be positive, got {t}")));
        }
        check_len(self.dim(), v.len(), "prox input")?;
        check_len(self.dim(), out.len(), "prox output")?;
        self.prox_unchecked(t, v, out);
        Ok(())
    }

    pub fn prox_vec(&self, t: f64, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; v.len()];
        self.prox(t, v, &mut out)?;
        Ok(out)
    }

    /// As [`ProxAtom::prox`] without argument validation.
    #[inline]
    pub(crate) fn prox_unchecked(&self, t: f64, v: &[f64], out: &mut [f64]) {
        match self {
            ProxAtom::Zero { .. } => out.copy_from_slice(v),
            ProxAtom::HalfSquare { .. } => {
                let s = 1.0 / (1.0 + t);
                for (o, &x) in out.iter_mut().zip(v) {
                    *o = x * s;
                }
            }
            ProxAtom::DiagQuadratic { weights } => {
                for ((o, &x), &w) in out.iter_mut().zip(v).zip(weights) {
                    *o = x / (1.0 + 2.0 * t * w);
                }
            }
            ProxAtom::LinearOverBox { slope, lo, hi } => {
                for k in 0..v.len() {
                    out[k] = clamp(v[k] - t * slope[k], lo[k], hi[k]);
                }
            }
            ProxAtom::DiagQuadOverBox { weights, lo, hi } => {
                for k in 0..v.len() {
                    out[k] = clamp(v[k] / (1.0 + 2.0 * t * weights[k]), lo[k], hi[k]);
                }
            }
        }
    }

    /// Function value with strict box checks; `+inf` outside the domain.
    pub fn eval(&self, v: &[f64]) -> f64 {
        self.eval_with_slack(v, 0.0)
    }

    /// Function value where box violations up to `slack` (relative to
    /// `max(1, |bound|)`) are tolerated.
    pub fn eval_with_slack(&self, v: &[f64], slack: f64) -> f64 {
        debug_assert_eq!(v.len(), self.dim());
        match self {
            ProxAtom::Zero { .. } => 0.0,
            ProxAtom::HalfSquare { .. } => 0.5 * v.iter().map(|x| x * x).sum::<f64>(),
            ProxAtom::DiagQuadratic { weights } => {
                v.iter().zip(weights).map(|(x, w)| w * x * x).sum()
            }
            ProxAtom::LinearOverBox { slope, lo, hi } => {
                let mut acc = 0.0;
                for k in 0..v.len() {
                    if outside(v[k], lo[k], hi[k], slack) {
                        return f64::INFINITY;
                    }
                    acc += slope[k] * v[k];
                }
                acc
            }
            ProxAtom::DiagQuadOverBox { weights, lo, hi } => {
                let mut acc = 0.0;
                for k in 0..v.len() {
                    if outside(v[k], lo[k], hi[k], slack) {
                        return f64::INFINITY;
                    }
                    acc += weights[k] * v[k] * v[k];
                }
                acc
            }
        }
    }

    /// Checks that `prox(t, v)` is not beaten by small feasible perturbations
    /// of each coordinate. Cheap sanity probe used when assembling problems.
    pub fn prox_is_locally_optimal(&self, t: f64, v: &[f64]) -> bool {
        let Ok(p) = self.prox_vec(t, v) else {
            return false;
        };
        let objective = |u: &[f64]| {
            self.eval(u) + u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (2.0 * t)
        };
        let base = objective(&p);
        if !base.is_finite() {
            return false;
        }
        let mut probe = p.clone();
        for k in 0..p.len() {
            for h in [1e-4, -1e-4] {
                probe[k] = p[k] + h;
                let val = objective(&probe);
                if val.is_finite() && val < base - 1e-12 * base.abs().max(1.0) {
                    return false;
                }
            }
            probe[k] = p[k];
        }
        true
    }
}
