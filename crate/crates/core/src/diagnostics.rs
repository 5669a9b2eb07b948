//! Weighted norms, Lyapunov functionals and gap functionals.

use crate::blockops::BlockMatrix;
use crate::error::{check_len, Error, Result};
use crate::problem::{ExtendedReal, PrimalDualPoint, SaddleProblem};
use crate::vecops::{dot, norm_sq};

/// Scalars of the weighted norm `|z|_V^2 = |x|^2 / (tau p) + |y|^2 / (sigma q)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedMetric {
    pub tau: f64,
    pub sigma: f64,
    pub p: f64,
    pub q: f64,
}

impl WeightedMetric {
    pub fn new(tau: f64, sigma: f64, p: f64, q: f64) -> Self {
        Self { tau, sigma, p, q }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !(ok(self.tau) && ok(self.sigma) && ok(self.p) && ok(self.q)) || self.p > 1.0 || self.q > 1.0 {
            return Err(Error::invalid(format!("invalid metric {self:?}")));
        }
        Ok(())
    }

    /// `|x|^2_{tau^-1 P^-1}`
    pub fn primal_sq(&self, x: &[f64]) -> f64 {
        norm_sq(x) / (self.tau * self.p)
    }

    /// `|y|^2_{sigma^-1 Q^-1}`
    pub fn dual_sq(&self, y: &[f64]) -> f64 {
        norm_sq(y) / (self.sigma * self.q)
    }
}

pub fn v_norm_sq(metric: &WeightedMetric, z: &PrimalDualPoint) -> f64 {
    metric.primal_sq(&z.x) + metric.dual_sq(&z.y)
}

/// `V(dx, dy) = |dx|^2/4 + |dy|^2/4 + <A P^-1 dx, Q^-1 dy>` in the weighted norms.
pub fn lyapunov_v(metric: &WeightedMetric, a: &BlockMatrix, dx: &[f64], dy: &[f64]) -> Result<f64> {
    check_len(a.rows(), dy.len(), "dual increment")?;
    let adx = a.matvec(dx)?;
    Ok(0.25 * metric.primal_sq(dx)
        + 0.25 * metric.dual_sq(dy)
        + dot(&adx, dy) / (metric.p * metric.q))
}

/// `V_k(z) = |x|^2/2 + |y|^2/2 + |dy_k|^2/4 - <Ax, Q^-1 dy_k>` in the weighted norms,
/// where `dy_k = y^k - y^{k-1}`.
pub fn lyapunov_vk(
    metric: &WeightedMetric,
    a: &BlockMatrix,
    z: &PrimalDualPoint,
    dy_k: &[f64],
) -> Result<f64> {
    check_len(a.rows(), z.y.len(), "dual point")?;
    check_len(a.rows(), dy_k.len(), "dual increment")?;
    let ax = a.matvec(&z.x)?;
    Ok(0.5 * metric.primal_sq(&z.x) + 0.5 * metric.dual_sq(&z.y) + 0.25 * metric.dual_sq(dy_k)
        - dot(&ax, dy_k) / metric.q)
}

/// Smoothed gap
/// `G_mu(zbar, zdot) = sup_z H(zbar, z) - (mu/2) |z - zdot|_V^2`,
/// maximized block by block in closed form through the prox of each atom.
/// Returns `+inf` when `zbar` violates a domain constraint.
pub fn smoothed_gap(
    problem: &SaddleProblem,
    metric: &WeightedMetric,
    zbar: &PrimalDualPoint,
    zdot: &PrimalDualPoint,
    mu: f64,
) -> Result<f64> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::invalid(format!("mu must be positive, got {mu}")));
    }
    metric.validate()?;
    let a = problem.matrix();
    for z in [zbar, zdot] {
        check_len(problem.primal_dim(), z.x.len(), "primal point")?;
        check_len(problem.dual_dim(), z.y.len(), "dual point")?;
    }
    let lead = ExtendedReal::from_f64(problem.g_value(&zbar.x))
        .add(ExtendedReal::from_f64(problem.fstar_value(&zbar.y)));
    if lead == ExtendedReal::PosInf {
        return Ok(f64::INFINITY);
    }
    let axbar = a.matvec(&zbar.x)?;
    let atybar = a.rmatvec(&zbar.y)?;

    let cy = mu / (metric.sigma * metric.q);
    let cx = mu / (metric.tau * metric.p);
    let mut total = lead.to_f64();
    let mut arg = Vec::new();
    let mut out = Vec::new();

    for (i, atom) in problem.fstar_atoms().iter().enumerate() {
        let r = a.row_partition().range(i);
        let (yd, g) = (&zdot.y[r.clone()], &axbar[r]);
        arg.clear();
        arg.extend(yd.iter().zip(g).map(|(yd, g)| yd + g / cy));
        out.resize(arg.len(), 0.0);
        atom.prox_unchecked(1.0 / cy, &arg, &mut out);
        let dist: f64 = out.iter().zip(yd).map(|(a, b)| (a - b) * (a - b)).sum();
        total += dot(g, &out) - atom.eval(&out) - 0.5 * cy * dist;
    }
    for (j, atom) in problem.g_atoms().iter().enumerate() {
        let r = a.col_partition().range(j);
        let (xd, g) = (&zdot.x[r.clone()], &atybar[r]);
        arg.clear();
        arg.extend(xd.iter().zip(g).map(|(xd, g)| xd - g / cx));
        out.resize(arg.len(), 0.0);
        atom.prox_unchecked(1.0 / cx, &arg, &mut out);
        let dist: f64 = out.iter().zip(xd).map(|(a, b)| (a - b) * (a - b)).sum();
        total += -atom.eval(&out) - dot(&out, g) - 0.5 * cx * dist;
    }
    Ok(total)
}

/// Largest gap kernel value `H(zbar, z)` over the candidates: a lower bound on
/// the restricted gap of any set containing them.
pub fn restricted_gap(
    problem: &SaddleProblem,
    zbar: &PrimalDualPoint,
    candidates: &[PrimalDualPoint],
) -> Result<ExtendedReal> {
    if candidates.is_empty() {
        return Err(Error::invalid("restricted gap needs at least one candidate"));
    }
    let mut best = ExtendedReal::NegInf;
    for z in candidates {
        best = best.max(problem.gap_kernel(zbar, z)?);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockops::BlockPartition;
    use crate::prox::ProxAtom;

    fn tiny() -> SaddleProblem {
        let a = BlockMatrix::from_dense(
            BlockPartition::singletons(1).unwrap(),
            BlockPartition::singletons(1).unwrap(),
            &[vec![1.0]],
        )
        .unwrap();
        SaddleProblem::new(
            a,
            vec![ProxAtom::half_square(1)],
            vec![ProxAtom::linear_over_box(vec![0.0], vec![-1.0], vec![1.0]).unwrap()],
            None,
        )
        .unwrap()
    }

    fn pt(x: f64, y: f64) -> PrimalDualPoint {
        PrimalDualPoint::new(vec![x], vec![y])
    }

    #[test]
    fn v_norm_examples() {
        let m = WeightedMetric::new(1.0, 1.0, 1.0, 1.0);
        assert_eq!(v_norm_sq(&m, &pt(0.0, 0.0)), 0.0);
        assert_eq!(v_norm_sq(&m, &pt(3.0, 4.0)), 25.0);
        assert_eq!(v_norm_sq(&m, &pt(6.0, 8.0)), 100.0);
        let w = WeightedMetric::new(0.5, 0.25, 0.5, 1.0);
        assert_eq!(v_norm_sq(&w, &pt(1.0, 1.0)), 4.0 + 4.0);
    }

    #[test]
    fn lyapunov_trivial_cases() {
        let p = tiny();
        let m = WeightedMetric::new(0.5, 0.5, 1.0, 1.0);
        assert_eq!(lyapunov_v(&m, p.matrix(), &[0.0], &[0.0]).unwrap(), 0.0);
        let z = pt(1.0, 2.0);
        assert_eq!(lyapunov_vk(&m, p.matrix(), &z, &[0.0]).unwrap(), 0.5 * 2.0 + 0.5 * 8.0);
        // 1/4 * 2 + 1/4 * 8 + 1*2
        assert_eq!(lyapunov_v(&m, p.matrix(), &[1.0], &[2.0]).unwrap(), 4.5);
    }

    #[test]
    fn smoothed_gap_at_saddle_point() {
        // saddle point of x^2/2 + xy - i_[-1,1](y) is the origin
        let p = tiny();
        let m = WeightedMetric::new(1.0, 1.0, 1.0, 1.0);
        let z = pt(0.0, 0.0);
        let g1 = smoothed_gap(&p, &m, &z, &z, 1.0).unwrap();
        let g2 = smoothed_gap(&p, &m, &z, &z, 2.0).unwrap();
        assert!(g1 >= 0.0 && g2 <= g1 + 1e-15);
        let far = smoothed_gap(&p, &m, &z, &z, 1e8).unwrap();
        assert!(far.abs() < 1e-7);
    }

    #[test]
    fn smoothed_gap_infeasible_is_infinite() {
        let p = tiny();
        let m = WeightedMetric::new(1.0, 1.0, 1.0, 1.0);
        assert_eq!(smoothed_gap(&p, &m, &pt(0.0, 3.0), &pt(0.0, 0.0), 1.0).unwrap(), f64::INFINITY);
        assert!(smoothed_gap(&p, &m, &pt(0.0, 0.0), &pt(0.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn restricted_gap_properties() {
        let p = tiny();
        let zbar = pt(0.4, -0.3);
        assert_eq!(restricted_gap(&p, &zbar, std::slice::from_ref(&zbar)).unwrap(), ExtendedReal::Finite(0.0));
        let one = restricted_gap(&p, &zbar, &[pt(0.0, 0.0)]).unwrap().to_f64();
        assert!(one >= 0.0);
        let two = restricted_gap(&p, &zbar, &[pt(0.0, 0.0), pt(1.0, 1.0)]).unwrap().to_f64();
        assert!(two >= one);
        assert!(restricted_gap(&p, &zbar, &[]).is_err());
    }
}
