//! The saddle-point model `Phi(x, y) = g(x) + <Ax, y> - f*(y)` and the
//! optimality measures evaluated on it.

use std::fmt;

use crate::blockops::BlockMatrix;
use crate::error::{check_len, Error, Result};
use crate::prox::{ProxAtom, FEASIBILITY_SLACK};
use crate::vecops::{dot, norm_sq};

/// Value in `R ∪ {±∞}` plus an explicit marker for `∞ - ∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedReal {
    Finite(f64),
    PosInf,
    NegInf,
    Undefined,
}

impl ExtendedReal {
    pub fn from_f64(v: f64) -> Self {
        if v.is_nan() {
            ExtendedReal::Undefined
        } else if v == f64::INFINITY {
            ExtendedReal::PosInf
        } else if v == f64::NEG_INFINITY {
            ExtendedReal::NegInf
        } else {
            ExtendedReal::Finite(v)
        }
    }

    /// `f64` view; `Undefined` maps to NaN.
    pub fn to_f64(self) -> f64 {
        match self {
            ExtendedReal::Finite(v) => v,
            ExtendedReal::PosInf => f64::INFINITY,
            ExtendedReal::NegInf => f64::NEG_INFINITY,
            ExtendedReal::Undefined => f64::NAN,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedReal::Finite(v) => Some(v),
            _ => None,
        }
    }

    pub fn add(self, other: Self) -> Self {
        use ExtendedReal::*;
        match (self, other) {
            (Undefined, _) | (_, Undefined) => Undefined,
            (PosInf, NegInf) | (NegInf, PosInf) => Undefined,
            (PosInf, _) | (_, PosInf) => PosInf,
            (NegInf, _) | (_, NegInf) => NegInf,
            (Finite(a), Finite(b)) => Finite(a + b),
        }
    }

    pub fn neg(self) -> Self {
        use ExtendedReal::*;
        match self {
            Finite(a) => Finite(-a),
            PosInf => NegInf,
            NegInf => PosInf,
            Undefined => Undefined,
        }
    }

    pub fn sub(self, other: Self) -> Self {
        self.add(other.neg())
    }

    /// Larger of two values; `Undefined` is absorbing.
    pub fn max(self, other: Self) -> Self {
        use ExtendedReal::*;
        match (self, other) {
            (Undefined, _) | (_, Undefined) => Undefined,
            (PosInf, _) | (_, PosInf) => PosInf,
            (NegInf, x) | (x, NegInf) => x,
            (Finite(a), Finite(b)) => Finite(a.max(b)),
        }
    }
}

impl fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedReal::Finite(v) => write!(f, "{v:e}"),
            ExtendedReal::PosInf => f.write_str("inf"),
            ExtendedReal::NegInf => f.write_str("-inf"),
            ExtendedReal::Undefined => f.write_str("undefined"),
        }
    }
}

/// Primal-side `f_i`, used only for objective and feasibility reporting.
#[derive(Debug, Clone, PartialEq)]
pub enum PrimalLoss {
    /// `penalty * sum_k max(0, 1 - z_k)`
    Hinge { penalty: f64, dim: usize },
    /// Indicator of `{z = target}`; contributes zero to the reported value and
    /// its distance to the reported infeasibility.
    EqualTo { target: Vec<f64> },
}

impl PrimalLoss {
    pub fn dim(&self) -> usize {
        match self {
            PrimalLoss::Hinge { dim, .. } => *dim,
            PrimalLoss::EqualTo { target } => target.len(),
        }
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        match self {
            PrimalLoss::Hinge { penalty, .. } => {
                penalty * z.iter().map(|v| (1.0 - v).max(0.0)).sum::<f64>()
            }
            PrimalLoss::EqualTo { .. } => 0.0,
        }
    }

    pub fn violation_sq(&self, z: &[f64]) -> f64 {
        match self {
            PrimalLoss::Hinge { .. } => 0.0,
            PrimalLoss::EqualTo { target } => {
                z.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDualPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl PrimalDualPoint {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { x, y }
    }

    pub fn zeros(problem: &SaddleProblem) -> Self {
        Self {
            x: vec![0.0; problem.primal_dim()],
            y: vec![0.0; problem.dual_dim()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimalObjective {
    /// `sum_i f_i((Ax)_i) + sum_j g_j(x_j) + offset`, with equality indicators
    /// counted as zero. `None` when the problem carries no primal losses.
    pub value: Option<f64>,
    /// Euclidean distance of `Ax` to the equality constraint sets.
    pub infeasibility: f64,
}

/// Block-structured convex-concave saddle-point problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleProblem {
    matrix: BlockMatrix,
    g: Vec<ProxAtom>,
    fstar: Vec<ProxAtom>,
    f: Option<Vec<PrimalLoss>>,
    objective_offset: f64,
    pub name: String,
    pub source: String,
}

impl SaddleProblem {
    pub fn new(
        matrix: BlockMatrix,
        g: Vec<ProxAtom>,
        fstar: Vec<ProxAtom>,
        f: Option<Vec<PrimalLoss>>,
    ) -> Result<Self> {
        let cp = matrix.col_partition();
        let rp = matrix.row_partition();
        check_len(cp.num_blocks(), g.len(), "primal atoms vs column blocks")?;
        check_len(rp.num_blocks(), fstar.len(), "dual atoms vs row blocks")?;
        for (j, a) in g.iter().enumerate() {
            a.validate()?;
            check_len(cp.block_size(j), a.dim(), "primal atom dimension")?;
        }
        for (i, a) in fstar.iter().enumerate() {
            a.validate()?;
            check_len(rp.block_size(i), a.dim(), "dual atom dimension")?;
        }
        if let Some(f) = &f {
            check_len(rp.num_blocks(), f.len(), "primal losses vs row blocks")?;
            for (i, l) in f.iter().enumerate() {
                check_len(rp.block_size(i), l.dim(), "primal loss dimension")?;
            }
        }
        for (k, a) in g.iter().chain(&fstar).enumerate() {
            let probe: Vec<f64> = (0..a.dim()).map(|c| 0.37 * (c as f64 + 1.0) - 0.5).collect();
            if !a.prox_is_locally_optimal(0.73, &probe) {
                return Err(Error::Numerical(format!("atom {k} failed the prox optimality probe")));
            }
        }
        Ok(Self {
            matrix,
            g,
            fstar,
            f,
            objective_offset: 0.0,
            name: String::new(),
            source: String::new(),
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }

    /// Constant added to reported primal objectives.
    pub fn with_objective_offset(mut self, offset: f64) -> Self {
        self.objective_offset = offset;
        self
    }

    pub fn objective_offset(&self) -> f64 {
        self.objective_offset
    }

    pub fn matrix(&self) -> &BlockMatrix {
        &self.matrix
    }

    pub fn g_atoms(&self) -> &[ProxAtom] {
        &self.g
    }

    pub fn fstar_atoms(&self) -> &[ProxAtom] {
        &self.fstar
    }

    pub fn primal_losses(&self) -> Option<&[PrimalLoss]> {
        self.f.as_deref()
    }

    pub fn primal_dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn dual_dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn primal_blocks(&self) -> usize {
        self.g.len()
    }

    pub fn dual_blocks(&self) -> usize {
        self.fstar.len()
    }

    fn check_point(&self, z: &PrimalDualPoint) -> Result<()> {
        check_len(self.primal_dim(), z.x.len(), "primal point")?;
        check_len(self.dual_dim(), z.y.len(), "dual point")
    }

    /// `g(x)` with box slack [`FEASIBILITY_SLACK`].
    pub fn g_value(&self, x: &[f64]) -> f64 {
        let cp = self.matrix.col_partition();
        let mut acc = 0.0;
        for (j, a) in self.g.iter().enumerate() {
            acc += a.eval_with_slack(&x[cp.range(j)], FEASIBILITY_SLACK);
        }
        acc
    }

    /// `f*(y)` with box slack [`FEASIBILITY_SLACK`].
    pub fn fstar_value(&self, y: &[f64]) -> f64 {
        let rp = self.matrix.row_partition();
        let mut acc = 0.0;
        for (i, a) in self.fstar.iter().enumerate() {
            acc += a.eval_with_slack(&y[rp.range(i)], FEASIBILITY_SLACK);
        }
        acc
    }

    fn phi_with_product(&self, x: &[f64], y: &[f64], ax: &[f64]) -> ExtendedReal {
        ExtendedReal::from_f64(self.g_value(x))
            .add(ExtendedReal::Finite(dot(ax, y)))
            .sub(ExtendedReal::from_f64(self.fstar_value(y)))
    }

    /// `Phi(x, y)`.
    pub fn lagrangian(&self, x: &[f64], y: &[f64]) -> Result<ExtendedReal> {
        check_len(self.primal_dim(), x.len(), "primal point")?;
        check_len(self.dual_dim(), y.len(), "dual point")?;
        let ax = self.matrix.matvec(x)?;
        Ok(self.phi_with_product(x, y, &ax))
    }

    /// Gap kernel `H(zbar, z) = Phi(xbar, y) - Phi(x, ybar)`.
    pub fn gap_kernel(&self, zbar: &PrimalDualPoint, z: &PrimalDualPoint) -> Result<ExtendedReal> {
        self.check_point(zbar)?;
        self.check_point(z)?;
        let axbar = self.matrix.matvec(&zbar.x)?;
        let ax = self.matrix.matvec(&z.x)?;
        Ok(self
            .phi_with_product(&zbar.x, &z.y, &axbar)
            .sub(self.phi_with_product(&z.x, &zbar.y, &ax)))
    }

    /// Relative KKT residual with reference step `t`:
    ///
    /// `sqrt(|x - prox_{tg}(x - t A^T y)|^2 + |y - prox_{tf*}(y + t A x)|^2) / (1 + |x| + |y|)`.
    pub fn kkt_residual(&self, z: &PrimalDualPoint, ref_step: f64) -> Result<f64> {
        self.check_point(z)?;
        let ax = self.matrix.matvec(&z.x)?;
        let aty = self.matrix.rmatvec(&z.y)?;
        self.kkt_residual_with_products(z, &ax, &aty, ref_step)
    }

    /// As [`SaddleProblem::kkt_residual`] with `Ax` and `A^T y` supplied.
    pub fn kkt_residual_with_products(
        &self,
        z: &PrimalDualPoint,
        ax: &[f64],
        aty: &[f64],
        ref_step: f64,
    ) -> Result<f64> {
        if !(ref_step > 0.0 && ref_step.is_finite()) {
            return Err(Error::invalid(format!("reference step must be positive, got {ref_step}")));
        }
        self.check_point(z)?;
        check_len(self.dual_dim(), ax.len(), "Ax")?;
        check_len(self.primal_dim(), aty.len(), "A^T y")?;
        let t = ref_step;
        let cp = self.matrix.col_partition();
        let rp = self.matrix.row_partition();
        let mut acc = 0.0;
        let mut arg = Vec::new();
        let mut out = Vec::new();
        for (j, a) in self.g.iter().enumerate() {
            let r = cp.range(j);
            arg.clear();
            arg.extend(z.x[r.clone()].iter().zip(&aty[r.clone()]).map(|(x, g)| x - t * g));
            out.resize(arg.len(), 0.0);
            a.prox_unchecked(t, &arg, &mut out);
            acc += z.x[r].iter().zip(&out).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        for (i, a) in self.fstar.iter().enumerate() {
            let r = rp.range(i);
            arg.clear();
            arg.extend(z.y[r.clone()].iter().zip(&ax[r.clone()]).map(|(y, g)| y + t * g));
            out.resize(arg.len(), 0.0);
            a.prox_unchecked(t, &arg, &mut out);
            acc += z.y[r].iter().zip(&out).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        let scale = 1.0 + norm_sq(&z.x).sqrt() + norm_sq(&z.y).sqrt();
        Ok(acc.sqrt() / scale)
    }

    pub fn primal_objective(&self, x: &[f64]) -> Result<PrimalObjective> {
        check_len(self.primal_dim(), x.len(), "primal point")?;
        let ax = self.matrix.matvec(x)?;
        Ok(self.primal_objective_with_product(x, &ax))
    }

    pub fn primal_objective_with_product(&self, x: &[f64], ax: &[f64]) -> PrimalObjective {
        let Some(losses) = &self.f else {
            return PrimalObjective {
                value: None,
                infeasibility: 0.0,
            };
        };
        let rp = self.matrix.row_partition();
        let mut value = self.g_value(x) + self.objective_offset;
        let mut viol = 0.0;
        for (i, l) in losses.iter().enumerate() {
            let zi = &ax[rp.range(i)];
            value += l.value(zi);
            viol += l.violation_sq(zi);
        }
        PrimalObjective {
            value: Some(value),
            infeasibility: viol.sqrt(),
        }
    }
}

/// `|obj - obj*| / (1 + |obj*|)`
pub fn relative_error(objective: f64, reference: f64) -> f64 {
    (objective - reference).abs() / (1.0 + reference.abs())
}
