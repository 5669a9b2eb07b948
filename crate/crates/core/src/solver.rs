//! Doubly stochastic PDHG.
//!
//! Each iteration samples `s` primal blocks and `r` dual blocks, updates only
//! those blocks, and keeps `Ax`, `A^T y` and `A^T ybar` current through
//! incremental column/row updates. PDHG (`p = q = 1`) and SPDHG (`p = 1`) are
//! parameterizations of the same loop.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::blockops::{NormReport, DEFAULT_ENUM_BUDGET};
use crate::diagnostics::{smoothed_gap, WeightedMetric};
use crate::error::{check_len, Error, Result};
use crate::problem::{relative_error, PrimalDualPoint, PrimalLoss, SaddleProblem};
use crate::restart::RestartPolicy;
use crate::sampling::{stream_rng, BlockSampler, SamplingPlan, Side};
use crate::vecops::max_abs_diff;

/// Safety factor of the practical step rule.
pub const STEP_FACTOR: f64 = 0.99;
pub const CERTIFIED_GAMMA1_SQ: f64 = 0.499;
pub const CERTIFIED_GAMMA2_SQ: f64 = 0.5;
pub const DEFAULT_REFRESH_EVERY: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepMode {
    /// `sigma = 0.99 q / Lambda_{r,s}`, `tau = 0.99 p / Lambda_{r,s}`.
    Practical,
    /// Practical pair scaled down until `gamma1^2 <= 0.499` and `gamma2^2 <= 0.5`.
    Certified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pdhg,
    Spdhg,
    Dspdhg,
}

impl Method {
    /// Sampling probabilities this method actually uses.
    pub fn probabilities(self, p: f64, q: f64) -> (f64, f64) {
        match self {
            Method::Pdhg => (1.0, 1.0),
            Method::Spdhg => (1.0, q),
            Method::Dspdhg => (p, q),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Pdhg => "pdhg",
            Method::Spdhg => "spdhg",
            Method::Dspdhg => "dspdhg",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pdhg" => Ok(Method::Pdhg),
            "spdhg" => Ok(Method::Spdhg),
            "dspdhg" => Ok(Method::Dspdhg),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizes {
    pub tau: f64,
    pub sigma: f64,
    pub p: f64,
    pub q: f64,
    pub gamma1_sq: f64,
    pub gamma2_sq: f64,
    pub mode: StepMode,
}

/// `(gamma1^2, gamma2^2)` for uniform steps and probabilities.
pub fn gamma_values(norms: &NormReport, p: f64, q: f64, tau: f64, sigma: f64) -> (f64, f64) {
    let ts = (tau * sigma).sqrt();
    (
        norms.lambda_rs * ts / (p * q).sqrt(),
        norms.lambda_r * ts * (p / q).sqrt(),
    )
}

pub fn compute_stepsizes(norms: &NormReport, p: f64, q: f64, mode: StepMode) -> Result<StepSizes> {
    for (name, v) in [("p", p), ("q", q)] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::invalid(format!("{name} = {v} must lie in (0, 1]")));
        }
    }
    if !(norms.lambda_rs > 0.0 && norms.lambda_r > 0.0) {
        return Err(Error::invalid("operator constants must be positive"));
    }
    let mut sigma = STEP_FACTOR * q / norms.lambda_rs;
    let mut tau = STEP_FACTOR * p / norms.lambda_rs;
    let (mut g1, mut g2) = gamma_values(norms, p, q, tau, sigma);
    if mode == StepMode::Certified {
        // gamma^2 is linear in sqrt(tau sigma), so scaling both steps by rho scales it by rho
        let rho = (CERTIFIED_GAMMA1_SQ / g1).min(CERTIFIED_GAMMA2_SQ / g2).min(1.0) * (1.0 - 1e-12);
        tau *= rho;
        sigma *= rho;
        (g1, g2) = gamma_values(norms, p, q, tau, sigma);
        debug_assert!(g1 <= CERTIFIED_GAMMA1_SQ && g2 <= CERTIFIED_GAMMA2_SQ);
    }
    Ok(StepSizes {
        tau,
        sigma,
        p,
        q,
        gamma1_sq: g1,
        gamma2_sq: g2,
        mode,
    })
}

/// Iterates, cached operator products and ergodic accumulators.
#[derive(Debug, Clone)]
pub struct SolverState {
    x: Vec<f64>,
    y: Vec<f64>,
    /// `y^k - y^{k-1}`, supported on the last dual sample
    dy: Vec<f64>,
    ax: Vec<f64>,
    aty: Vec<f64>,
    /// `A^T (y^k + dy / q)`
    atybar: Vec<f64>,
    k: u64,
    // ergodic sums are flushed lazily: block b's current value has been
    // counted for iterates since[b]+1 ..= ergodic_count
    sum_x: Vec<f64>,
    sum_y: Vec<f64>,
    since_x: Vec<u64>,
    since_y: Vec<u64>,
    ergodic_count: u64,
}

impl SolverState {
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn dy(&self) -> &[f64] {
        &self.dy
    }

    pub fn ax(&self) -> &[f64] {
        &self.ax
    }

    pub fn aty(&self) -> &[f64] {
        &self.aty
    }

    pub fn atybar(&self) -> &[f64] {
        &self.atybar
    }

    pub fn iteration(&self) -> u64 {
        self.k
    }

    pub fn ergodic_count(&self) -> u64 {
        self.ergodic_count
    }

    pub fn point(&self) -> PrimalDualPoint {
        PrimalDualPoint::new(self.x.clone(), self.y.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Ready,
    PrimalDone,
}

/// Quantities from one probed iteration; see [`Solver::probe_step`].
#[derive(Debug, Clone)]
pub struct VirtualProbe {
    pub x_hat: Vec<f64>,
    pub y_hat: Vec<f64>,
    pub x_bar: Vec<f64>,
    pub y_bar: Vec<f64>,
    /// `x_hat - x^k - P^{-1}(x^{k+1} - x^k)`
    pub u: Vec<f64>,
    /// `y_hat - y^k - Q^{-1}(y^{k+1} - y^k)`
    pub v: Vec<f64>,
}

#[derive(Clone)]
pub struct Solver<'a> {
    problem: &'a SaddleProblem,
    steps: StepSizes,
    plan: SamplingPlan,
    state: SolverState,
    primal_sampler: BlockSampler,
    dual_sampler: BlockSampler,
    phase: Phase,
    s_blocks: Vec<usize>,
    t_blocks: Vec<usize>,
    prev_t_blocks: Vec<usize>,
    delta_x: Vec<f64>,
    delta_y: Vec<f64>,
    /// `sum_{j in S} A^j delta_j`, nonzero only on `touched`
    w: Vec<f64>,
    touched: Vec<usize>,
    row_mark: Vec<bool>,
    arg: Vec<f64>,
    out: Vec<f64>,
    cost_units: f64,
    refresh_every: u64,
    last_refresh: u64,
}

impl<'a> Solver<'a> {
    pub fn new(
        problem: &'a SaddleProblem,
        steps: StepSizes,
        plan: SamplingPlan,
        start: &PrimalDualPoint,
    ) -> Result<Self> {
        check_len(problem.primal_blocks(), plan.m, "plan primal blocks")?;
        check_len(problem.dual_blocks(), plan.n, "plan dual blocks")?;
        check_len(problem.primal_dim(), start.x.len(), "initial x")?;
        check_len(problem.dual_dim(), start.y.len(), "initial y")?;
        if !(steps.tau > 0.0 && steps.sigma > 0.0) {
            return Err(Error::invalid("step sizes must be positive"));
        }
        if (steps.p - plan.p()).abs() > 1e-15 || (steps.q - plan.q()).abs() > 1e-15 {
            return Err(Error::invalid(format!(
                "step sizes built for (p, q) = ({}, {}) but plan realizes ({}, {})",
                steps.p,
                steps.q,
                plan.p(),
                plan.q()
            )));
        }
        let a = problem.matrix();
        let nx = problem.primal_dim();
        let ny = problem.dual_dim();
        let state = SolverState {
            x: start.x.clone(),
            y: start.y.clone(),
            dy: vec![0.0; ny],
            ax: a.matvec(&start.x)?,
            aty: a.rmatvec(&start.y)?,
            atybar: a.rmatvec(&start.y)?,
            k: 0,
            sum_x: vec![0.0; nx],
            sum_y: vec![0.0; ny],
            since_x: vec![0; plan.m],
            since_y: vec![0; plan.n],
            ergodic_count: 0,
        };
        Ok(Self {
            problem,
            steps,
            plan,
            state,
            primal_sampler: BlockSampler::new(plan.m, plan.s)?,
            dual_sampler: BlockSampler::new(plan.n, plan.r)?,
            phase: Phase::Ready,
            s_blocks: Vec::with_capacity(plan.s),
            t_blocks: Vec::with_capacity(plan.r),
            prev_t_blocks: Vec::with_capacity(plan.r),
            delta_x: vec![0.0; nx],
            delta_y: vec![0.0; ny],
            w: vec![0.0; ny],
            touched: Vec::new(),
            row_mark: vec![false; ny],
            arg: Vec::new(),
            out: Vec::new(),
            cost_units: 0.0,
            refresh_every: DEFAULT_REFRESH_EVERY,
            last_refresh: 0,
        })
    }

    /// Full cache recompute every `every` iterations; 0 disables it.
    pub fn with_refresh_every(mut self, every: u64) -> Self {
        self.refresh_every = every;
        self
    }

    /// Replaces the sampling seed; later draws use the new stream.
    pub fn set_seed(&mut self, seed: u64) {
        self.plan.seed = seed;
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn steps(&self) -> &StepSizes {
        &self.steps
    }

    pub fn plan(&self) -> &SamplingPlan {
        &self.plan
    }

    pub fn problem(&self) -> &SaddleProblem {
        self.problem
    }

    pub fn cost_units(&self) -> f64 {
        self.cost_units
    }

    pub fn metric(&self) -> WeightedMetric {
        WeightedMetric::new(self.steps.tau, self.steps.sigma, self.steps.p, self.steps.q)
    }

    /// Last primal sample `S^{k}`.
    pub fn last_primal_sample(&self) -> &[usize] {
        &self.s_blocks
    }

    /// Last dual sample `T^{k}`.
    pub fn last_dual_sample(&self) -> &[usize] {
        &self.prev_t_blocks
    }

    fn unit_cost(&self, nnz: usize, frac: f64) -> f64 {
        let total = self.problem.matrix().nnz();
        if total == 0 {
            0.5 * frac
        } else {
            nnz as f64 / (2.0 * total as f64)
        }
    }

    /// Primal half of one iteration: sample `S`, prox the sampled blocks and
    /// update `Ax`.
    pub fn primal_half_step(&mut self) -> Result<()> {
        if self.phase != Phase::Ready {
            return Err(Error::invalid("primal half-step called twice"));
        }
        let a = self.problem.matrix();
        let cp = a.col_partition();
        let tau = self.steps.tau;
        let c = self.state.ergodic_count;

        let mut rng = stream_rng(self.plan.seed, self.state.k, Side::Primal);
        self.s_blocks.clear();
        self.s_blocks
            .extend_from_slice(self.primal_sampler.draw(&mut rng));

        let mut nnz = 0;
        for &j in &self.s_blocks {
            let r = cp.range(j);
            self.arg.clear();
            self.arg.extend(
                self.state.x[r.clone()]
                    .iter()
                    .zip(&self.state.atybar[r.clone()])
                    .map(|(x, g)| x - tau * g),
            );
            self.out.resize(self.arg.len(), 0.0);
            self.problem.g_atoms()[j].prox_unchecked(tau, &self.arg, &mut self.out);

            let held = (c - self.state.since_x[j]) as f64;
            for (off, col) in r.clone().enumerate() {
                let old = self.state.x[col];
                self.state.sum_x[col] += old * held;
                self.delta_x[col] = self.out[off] - old;
                self.state.x[col] = self.out[off];
            }
            self.state.since_x[j] = c;
            nnz += a.col_block_nnz(j);

            for col in r {
                let d = self.delta_x[col];
                if d == 0.0 {
                    continue;
                }
                let (rows, vals) = a.col(col);
                for (&i, &v) in rows.iter().zip(vals) {
                    if !self.row_mark[i] {
                        self.row_mark[i] = true;
                        self.touched.push(i);
                    }
                    self.w[i] += v * d;
                }
            }
        }
        for &i in &self.touched {
            self.state.ax[i] += self.w[i];
        }
        self.cost_units += self.unit_cost(nnz, self.plan.p());
        self.phase = Phase::PrimalDone;
        Ok(())
    }

    /// Dual half: sample `T`, prox with `A xbar = Ax + (1/p - 1) w`, then
    /// roll `A^T y` and `A^T ybar` forward.
    pub fn dual_half_step(&mut self) -> Result<()> {
        if self.phase != Phase::PrimalDone {
            return Err(Error::invalid("dual half-step requires a primal half-step first"));
        }
        let a = self.problem.matrix();
        let rp = a.row_partition();
        let sigma = self.steps.sigma;
        let extra = 1.0 / self.steps.p - 1.0;
        let inv_q = 1.0 / self.steps.q;
        let c = self.state.ergodic_count;

        let mut rng = stream_rng(self.plan.seed, self.state.k, Side::Dual);
        self.t_blocks.clear();
        self.t_blocks.extend_from_slice(self.dual_sampler.draw(&mut rng));

        let mut nnz = 0;
        for &i in &self.t_blocks {
            let r = rp.range(i);
            self.arg.clear();
            for row in r.clone() {
                let axbar = self.state.ax[row] + extra * self.w[row];
                self.arg.push(self.state.y[row] + sigma * axbar);
            }
            self.out.resize(self.arg.len(), 0.0);
            self.problem.fstar_atoms()[i].prox_unchecked(sigma, &self.arg, &mut self.out);

            let held = (c - self.state.since_y[i]) as f64;
            for (off, row) in r.enumerate() {
                let old = self.state.y[row];
                self.state.sum_y[row] += old * held;
                self.delta_y[row] = self.out[off] - old;
                self.state.y[row] = self.out[off];
            }
            self.state.since_y[i] = c;
            nnz += a.row_block_nnz(i);
        }

        // drop the previous dy from A^T ybar, then install the new one
        for &i in &self.prev_t_blocks {
            a.add_row_block(&mut self.state.atybar, i, &self.state.dy, -inv_q);
            for row in rp.range(i) {
                self.state.dy[row] = 0.0;
            }
        }
        for &i in &self.t_blocks {
            for row in rp.range(i) {
                let d = self.delta_y[row];
                self.state.dy[row] = d;
                if d == 0.0 {
                    continue;
                }
                let (cols, vals) = a.row(row);
                for (&j, &v) in cols.iter().zip(vals) {
                    self.state.aty[j] += v * d;
                    self.state.atybar[j] += (1.0 + inv_q) * v * d;
                }
            }
        }

        for &i in &self.touched {
            self.w[i] = 0.0;
            self.row_mark[i] = false;
        }
        self.touched.clear();
        let cp = a.col_partition();
        for &j in &self.s_blocks {
            for col in cp.range(j) {
                self.delta_x[col] = 0.0;
            }
        }
        for &i in &self.t_blocks {
            for row in rp.range(i) {
                self.delta_y[row] = 0.0;
            }
        }
        std::mem::swap(&mut self.prev_t_blocks, &mut self.t_blocks);

        self.state.k += 1;
        self.state.ergodic_count += 1;
        self.cost_units += self.unit_cost(nnz, self.plan.q());
        self.phase = Phase::Ready;

        if self.refresh_every > 0 && self.state.k - self.last_refresh >= self.refresh_every {
            self.refresh_caches()?;
        }
        Ok(())
    }

    /// One full DSPDHG iteration.
    pub fn step(&mut self) -> Result<()> {
        self.primal_half_step()?;
        self.dual_half_step()
    }

    fn fresh_caches(&self) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let a = self.problem.matrix();
        let ax = a.matvec(&self.state.x)?;
        let aty = a.rmatvec(&self.state.y)?;
        let inv_q = 1.0 / self.steps.q;
        let ybar: Vec<f64> = self
            .state
            .y
            .iter()
            .zip(&self.state.dy)
            .map(|(y, d)| y + inv_q * d)
            .collect();
        let atybar = a.rmatvec(&ybar)?;
        Ok((ax, aty, atybar))
    }

    /// Largest relative deviation of the cached products from a fresh
    /// recomputation, measured as `max |cache - fresh| / max(1, max |fresh|)`.
    pub fn cache_drift(&self) -> Result<f64> {
        if self.phase != Phase::Ready {
            return Err(Error::invalid("caches are only consistent between iterations"));
        }
        let (ax, aty, atybar) = self.fresh_caches()?;
        let rel = |cache: &[f64], fresh: &[f64]| {
            let scale = fresh.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            max_abs_diff(cache, fresh) / scale
        };
        Ok(rel(&self.state.ax, &ax)
            .max(rel(&self.state.aty, &aty))
            .max(rel(&self.state.atybar, &atybar)))
    }

    pub fn refresh_caches(&mut self) -> Result<()> {
        let (ax, aty, atybar) = self.fresh_caches()?;
        self.state.ax = ax;
        self.state.aty = aty;
        self.state.atybar = atybar;
        self.last_refresh = self.state.k;
        Ok(())
    }

    /// Average of the iterates accumulated since the last restart.
    pub fn ergodic_average(&self) -> Option<PrimalDualPoint> {
        let count = self.state.ergodic_count;
        if count == 0 {
            return None;
        }
        let a = self.problem.matrix();
        let inv = 1.0 / count as f64;
        let mut x = self.state.sum_x.clone();
        for (j, &since) in self.state.since_x.iter().enumerate() {
            let held = (count - since) as f64;
            for col in a.col_partition().range(j) {
                x[col] = (x[col] + self.state.x[col] * held) * inv;
            }
        }
        let mut y = self.state.sum_y.clone();
        for (i, &since) in self.state.since_y.iter().enumerate() {
            let held = (count - since) as f64;
            for row in a.row_partition().range(i) {
                y[row] = (y[row] + self.state.y[row] * held) * inv;
            }
        }
        Some(PrimalDualPoint::new(x, y))
    }

    /// Restarts the method from `point`: `dy = 0`, ergodic sums cleared and
    /// caches rebuilt. The iteration counter keeps running.
    pub fn restart_from(&mut self, point: &PrimalDualPoint) -> Result<()> {
        if self.phase != Phase::Ready {
            return Err(Error::invalid("cannot restart in the middle of an iteration"));
        }
        check_len(self.problem.primal_dim(), point.x.len(), "restart x")?;
        check_len(self.problem.dual_dim(), point.y.len(), "restart y")?;
        self.state.x.copy_from_slice(&point.x);
        self.state.y.copy_from_slice(&point.y);
        self.state.dy.iter_mut().for_each(|v| *v = 0.0);
        self.prev_t_blocks.clear();
        self.state.sum_x.iter_mut().for_each(|v| *v = 0.0);
        self.state.sum_y.iter_mut().for_each(|v| *v = 0.0);
        self.state.since_x.iter_mut().for_each(|v| *v = 0);
        self.state.since_y.iter_mut().for_each(|v| *v = 0);
        self.state.ergodic_count = 0;
        self.refresh_caches()
    }

    /// Relative KKT residual of the current iterate.
    pub fn relkkt(&self, ref_step: f64) -> Result<f64> {
        self.problem.kkt_residual(&self.state.point(), ref_step)
    }

    /// Full primal prox `x_hat^{k+1}` from the current state (test helper,
    /// costs a full pass).
    pub fn virtual_primal_update(&self) -> Vec<f64> {
        let cp = self.problem.matrix().col_partition();
        let tau = self.steps.tau;
        let arg: Vec<f64> = self
            .state
            .x
            .iter()
            .zip(&self.state.atybar)
            .map(|(x, g)| x - tau * g)
            .collect();
        let mut out = vec![0.0; arg.len()];
        for (j, atom) in self.problem.g_atoms().iter().enumerate() {
            let r = cp.range(j);
            atom.prox_unchecked(tau, &arg[r.clone()], &mut out[r]);
        }
        out
    }

    /// Full dual prox `y_hat = prox_{sigma f*}(y + sigma A xbar)` for a given
    /// extrapolated primal point.
    pub fn virtual_dual_update(&self, x_bar: &[f64]) -> Result<Vec<f64>> {
        let axbar = self.problem.matrix().matvec(x_bar)?;
        Ok(self.dual_prox_all(&axbar))
    }

    fn dual_prox_all(&self, axbar: &[f64]) -> Vec<f64> {
        let a = self.problem.matrix();
        let sigma = self.steps.sigma;
        let arg: Vec<f64> = self
            .state
            .y
            .iter()
            .zip(axbar)
            .map(|(y, g)| y + sigma * g)
            .collect();
        let mut out = vec![0.0; arg.len()];
        for (i, atom) in self.problem.fstar_atoms().iter().enumerate() {
            let r = a.row_partition().range(i);
            atom.prox_unchecked(sigma, &arg[r.clone()], &mut out[r]);
        }
        out
    }

    /// Runs one iteration and reports the virtual full updates and the
    /// residuals `u^k`, `v^k` alongside the realized step.
    pub fn probe_step(&mut self) -> Result<VirtualProbe> {
        let inv_p = 1.0 / self.steps.p;
        let inv_q = 1.0 / self.steps.q;
        let x_old = self.state.x.clone();
        let y_old = self.state.y.clone();
        let x_hat = self.virtual_primal_update();

        self.primal_half_step()?;
        let x_bar: Vec<f64> = self
            .state
            .x
            .iter()
            .zip(&x_old)
            .map(|(xn, xo)| xn + (inv_p - 1.0) * (xn - xo))
            .collect();
        // same arithmetic as the dual half-step, so realized blocks agree bitwise
        let axbar: Vec<f64> = self
            .state
            .ax
            .iter()
            .zip(&self.w)
            .map(|(ax, w)| ax + (inv_p - 1.0) * w)
            .collect();
        let y_hat = self.dual_prox_all(&axbar);
        self.dual_half_step()?;

        let u = (0..x_old.len())
            .map(|c| x_hat[c] - x_old[c] - inv_p * (self.state.x[c] - x_old[c]))
            .collect();
        let v = (0..y_old.len())
            .map(|c| y_hat[c] - y_old[c] - inv_q * (self.state.y[c] - y_old[c]))
            .collect();
        let y_bar = (0..y_old.len())
            .map(|c| self.state.y[c] + inv_q * (self.state.y[c] - y_old[c]))
            .collect();
        Ok(VirtualProbe {
            x_hat,
            y_hat,
            x_bar,
            y_bar,
            u,
            v,
        })
    }
}

/// Settings for [`run`].
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// requested primal probability; realized value is `s/m`
    pub p: f64,
    pub q: f64,
    pub step_mode: StepMode,
    pub seed: u64,
    /// budget in cost units (one unit = one full `A` plus one full `A^T` product)
    pub max_cost: f64,
    pub max_iterations: Option<u64>,
    pub target_relkkt: Option<f64>,
    pub log_every: f64,
    pub refresh_every: u64,
    pub enum_budget: u64,
    pub restart: RestartPolicy,
    /// reference step of the KKT residual; defaults to `1/||A||`
    pub kkt_step: Option<f64>,
    pub reference_objective: Option<f64>,
    pub smoothed_gap_mu: Option<f64>,
    /// center point for the smoothed gap; the current iterate when absent
    pub gap_center: Option<PrimalDualPoint>,
    pub initial_point: Option<PrimalDualPoint>,
    pub report: ReportPoint,
}

/// Which point the log rows and the stopping test evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportPoint {
    /// Ergodic average of the current epoch (the output of the method);
    /// the epoch's starting point right after a restart.
    #[default]
    Average,
    /// Last iterate `z^k`.
    Iterate,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            p: 1.0,
            q: 1.0,
            step_mode: StepMode::Practical,
            seed: 0,
            max_cost: 1000.0,
            max_iterations: None,
            target_relkkt: None,
            log_every: 1.0,
            refresh_every: DEFAULT_REFRESH_EVERY,
            enum_budget: DEFAULT_ENUM_BUDGET,
            restart: RestartPolicy::None,
            kkt_step: None,
            reference_objective: None,
            smoothed_gap_mu: None,
            gap_center: None,
            initial_point: None,
            report: ReportPoint::Average,
        }
    }
}

impl RunOptions {
    pub fn for_method(method: Method, p: f64, q: f64) -> Self {
        let (p, q) = method.probabilities(p, q);
        Self {
            p,
            q,
            ..Self::default()
        }
    }
}

/// One row of the convergence log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub cost_units: f64,
    pub iteration: u64,
    pub epoch: u64,
    pub relkkt: f64,
    pub rel_error: Option<f64>,
    pub infeasibility: Option<f64>,
    pub smoothed_gap: Option<f64>,
    pub wall_seconds: f64,
    pub restart_flag: bool,
}

/// Realized run parameters, echoed into log headers.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSetup {
    pub plan: SamplingPlan,
    pub norms: NormReport,
    pub steps: StepSizes,
    pub kkt_step: f64,
}

/// Computes sampling sizes, operator constants and step sizes for `options`.
pub fn prepare(problem: &SaddleProblem, options: &RunOptions) -> Result<RunSetup> {
    let plan = SamplingPlan::from_probabilities(
        problem.primal_blocks(),
        problem.dual_blocks(),
        options.p,
        options.q,
        options.seed,
    )?;
    let norms = problem
        .matrix()
        .norm_report(plan.r, plan.s, options.enum_budget)?;
    setup_with_norms(problem, options, plan, norms)
}

/// As [`prepare`] with precomputed constants (they depend on `(r, s)` only).
pub fn setup_with_norms(
    problem: &SaddleProblem,
    options: &RunOptions,
    plan: SamplingPlan,
    norms: NormReport,
) -> Result<RunSetup> {
    let _ = problem;
    let steps = compute_stepsizes(&norms, plan.p(), plan.q(), options.step_mode)?;
    let kkt_step = match options.kkt_step {
        Some(t) => t,
        None if norms.lambda > 0.0 => 1.0 / norms.lambda,
        None => 1.0,
    };
    Ok(RunSetup {
        plan,
        norms,
        steps,
        kkt_step,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    ReachedTarget,
    BudgetExhausted,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub setup: RunSetup,
    pub records: Vec<IterationRecord>,
    /// point of the last log row
    pub final_point: PrimalDualPoint,
    pub last_iterate: PrimalDualPoint,
    pub status: RunStatus,
    pub restarts: u64,
    pub iterations: u64,
    pub cost_units: f64,
    pub wall_seconds: f64,
}

impl Trajectory {
    pub fn final_relkkt(&self) -> f64 {
        self.records.last().map(|r| r.relkkt).unwrap_or(f64::NAN)
    }
}

/// Runs DSPDHG without restarts.
pub fn run(problem: &SaddleProblem, options: &RunOptions) -> Result<Trajectory> {
    let setup = prepare(problem, options)?;
    drive(problem, options, setup)
}

/// Shared driver for plain and restarted runs; the policy comes from
/// `options.restart`.
pub fn drive(problem: &SaddleProblem, options: &RunOptions, setup: RunSetup) -> Result<Trajectory> {
    if !(options.log_every > 0.0) {
        return Err(Error::Config("log cadence must be positive".into()));
    }
    if !(options.max_cost >= 0.0) {
        return Err(Error::Config("budget must be nonnegative".into()));
    }
    options.restart.validate()?;
    let clock = Instant::now();
    let start = options
        .initial_point
        .clone()
        .unwrap_or_else(|| PrimalDualPoint::zeros(problem));
    let mut solver = Solver::new(problem, setup.steps, setup.plan, &start)?
        .with_refresh_every(options.refresh_every);
    let metric = solver.metric();
    let kkt_step = setup.kkt_step;
    let has_constraints = problem
        .primal_losses()
        .is_some_and(|l| l.iter().any(|l| matches!(l, PrimalLoss::EqualTo { .. })));

    let row = |solver: &Solver, point: &PrimalDualPoint, epoch: u64, relkkt: f64, flag: bool| -> Result<IterationRecord> {
        let ax = problem.matrix().matvec(&point.x)?;
        let obj = problem.primal_objective_with_product(&point.x, &ax);
        let rel_error = match (obj.value, options.reference_objective) {
            (Some(v), Some(r)) => Some(relative_error(v, r)),
            _ => None,
        };
        let infeasibility = has_constraints.then_some(obj.infeasibility);
        let smoothed = match options.smoothed_gap_mu {
            Some(mu) => {
                let center = options.gap_center.as_ref().unwrap_or(point);
                Some(smoothed_gap(problem, &metric, point, center, mu)?)
            }
            None => None,
        };
        Ok(IterationRecord {
            cost_units: solver.cost_units(),
            iteration: solver.state().iteration(),
            epoch,
            relkkt,
            rel_error,
            infeasibility,
            smoothed_gap: smoothed,
            wall_seconds: clock.elapsed().as_secs_f64(),
            restart_flag: flag,
        })
    };

    let mut records = Vec::new();
    let initial_kkt = problem.kkt_residual(&start, kkt_step)?;
    records.push(row(&solver, &start, 0, initial_kkt, false)?);
    let reached = |v: f64| options.target_relkkt.is_some_and(|t| v <= t);
    let mut status = if reached(initial_kkt) {
        RunStatus::ReachedTarget
    } else {
        RunStatus::BudgetExhausted
    };
    let mut epoch = 0u64;
    let mut epoch_start_kkt = initial_kkt;
    let mut next_log = options.log_every;
    let mut logged_last = true;
    let mut final_point = start.clone();
    let reported = |solver: &Solver| match options.report {
        ReportPoint::Iterate => solver.state().point(),
        ReportPoint::Average => solver
            .ergodic_average()
            .unwrap_or_else(|| solver.state().point()),
    };

    while status != RunStatus::ReachedTarget {
        if solver.cost_units() >= options.max_cost {
            break;
        }
        if options
            .max_iterations
            .is_some_and(|m| solver.state().iteration() >= m)
        {
            break;
        }
        solver.step()?;
        logged_last = false;

        let mut restarted = false;
        if let RestartPolicy::FixedK(k) = options.restart {
            if solver.state().ergodic_count() >= k {
                let avg = solver.ergodic_average().expect("nonempty epoch");
                solver.restart_from(&avg)?;
                epoch += 1;
                restarted = true;
            }
        }
        let checkpoint = solver.cost_units() >= next_log;
        if checkpoint {
            while next_log <= solver.cost_units() {
                next_log += options.log_every;
            }
        }
        if !(restarted || checkpoint) {
            continue;
        }

        let mut logged = None;
        if let RestartPolicy::AdaptiveKkt { factor } = options.restart {
            if !restarted {
                if let Some(avg) = solver.ergodic_average() {
                    let avg_kkt = problem.kkt_residual(&avg, kkt_step)?;
                    if avg_kkt <= factor * epoch_start_kkt {
                        solver.restart_from(&avg)?;
                        epoch += 1;
                        restarted = true;
                        epoch_start_kkt = avg_kkt;
                        logged = Some((avg, avg_kkt));
                    } else if options.report == ReportPoint::Average {
                        logged = Some((avg, avg_kkt));
                    }
                }
            }
        }
        let (point, relkkt) = match logged {
            Some(v) => v,
            None => {
                let point = reported(&solver);
                let relkkt = problem.kkt_residual(&point, kkt_step)?;
                (point, relkkt)
            }
        };
        if !relkkt.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite KKT residual at iteration {}",
                solver.state().iteration()
            )));
        }
        records.push(row(&solver, &point, epoch, relkkt, restarted)?);
        final_point = point;
        logged_last = true;
        if reached(relkkt) {
            status = RunStatus::ReachedTarget;
        }
    }
    if !logged_last {
        let point = reported(&solver);
        let relkkt = problem.kkt_residual(&point, kkt_step)?;
        if !relkkt.is_finite() {
            return Err(Error::Numerical("non-finite KKT residual at final point".into()));
        }
        records.push(row(&solver, &point, epoch, relkkt, false)?);
        final_point = point;
        if reached(relkkt) {
            status = RunStatus::ReachedTarget;
        }
    }

    Ok(Trajectory {
        setup,
        final_point,
        last_iterate: solver.state().point(),
        status,
        restarts: epoch,
        iterations: solver.state().iteration(),
        cost_units: solver.cost_units(),
        records,
        wall_seconds: clock.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockops::{BlockMatrix, BlockPartition};
    use crate::prox::ProxAtom;

    fn norms(lambda: f64, lambda_r: f64, lambda_rs: f64) -> NormReport {
        NormReport {
            lambda,
            lambda_r,
            lambda_rs,
            lambda_converged: true,
            lambda_r_exact: true,
            lambda_rs_exact: true,
            iterations_used: 0,
        }
    }

    #[test]
    fn pdhg_step_rule() {
        let s = compute_stepsizes(&norms(2.0, 2.0, 2.0), 1.0, 1.0, StepMode::Practical).unwrap();
        assert!((s.tau - 0.495).abs() < 1e-15);
        assert!((s.sigma - 0.495).abs() < 1e-15);
    }

    #[test]
    fn practical_gamma1_is_step_factor() {
        for (p, q) in [(0.1, 0.1), (0.3, 0.15), (1.0, 0.5), (0.2, 0.4)] {
            let s = compute_stepsizes(&norms(5.0, 4.0, 3.0), p, q, StepMode::Practical).unwrap();
            assert!((s.gamma1_sq - 0.99).abs() < 1e-12, "{p} {q}: {}", s.gamma1_sq);
        }
    }

    #[test]
    fn certified_meets_conditions() {
        for (p, q) in [(0.1, 0.1), (1.0, 0.5), (1.0, 1.0), (0.5, 0.05)] {
            let s = compute_stepsizes(&norms(5.0, 5.0, 5.0), p, q, StepMode::Certified).unwrap();
            assert!(s.gamma1_sq <= CERTIFIED_GAMMA1_SQ);
            assert!(s.gamma2_sq <= CERTIFIED_GAMMA2_SQ);
            let (g1, g2) = gamma_values(&norms(5.0, 5.0, 5.0), p, q, s.tau, s.sigma);
            assert!((g1 - s.gamma1_sq).abs() < 1e-15 && (g2 - s.gamma2_sq).abs() < 1e-15);
        }
    }

    #[test]
    fn stepsize_errors() {
        assert!(compute_stepsizes(&norms(0.0, 0.0, 0.0), 1.0, 1.0, StepMode::Practical).is_err());
        assert!(compute_stepsizes(&norms(1.0, 1.0, 1.0), 0.0, 1.0, StepMode::Practical).is_err());
    }

    fn small_problem() -> SaddleProblem {
        let a = BlockMatrix::from_dense(
            BlockPartition::singletons(3).unwrap(),
            BlockPartition::from_sizes(&[1, 2]).unwrap(),
            &[vec![1.0, 0.0, 2.0], vec![0.0, -1.0, 1.0], vec![0.5, 0.5, 0.0]],
        )
        .unwrap();
        let hinge = || ProxAtom::linear_over_box(vec![1.0], vec![-1.0], vec![0.0]).unwrap();
        SaddleProblem::new(
            a,
            vec![ProxAtom::half_square(1), ProxAtom::half_square(2)],
            vec![hinge(), hinge(), hinge()],
            None,
        )
        .unwrap()
    }

    #[test]
    fn unsampled_blocks_unchanged_and_caches_consistent() {
        let p = small_problem();
        let opts = RunOptions {
            p: 0.5,
            q: 0.34,
            seed: 5,
            ..RunOptions::default()
        };
        let setup = prepare(&p, &opts).unwrap();
        assert_eq!((setup.plan.s, setup.plan.r), (1, 1));
        let start = PrimalDualPoint::new(vec![0.3, -0.2, 0.1], vec![-0.5, -0.1, 0.0]);
        let mut s = Solver::new(&p, setup.steps, setup.plan, &start)
            .unwrap()
            .with_refresh_every(0);
        for _ in 0..50 {
            let before = s.state().x().to_vec();
            let ybefore = s.state().y().to_vec();
            s.step().unwrap();
            let sampled = s.last_primal_sample().to_vec();
            for j in 0..2 {
                if !sampled.contains(&j) {
                    for c in p.matrix().col_partition().range(j) {
                        assert_eq!(s.state().x()[c], before[c]);
                    }
                }
            }
            let tsampled = s.last_dual_sample().to_vec();
            for i in 0..3 {
                if !tsampled.contains(&i) {
                    assert_eq!(s.state().y()[i], ybefore[i]);
                }
            }
            assert!(s.cache_drift().unwrap() < 1e-12);
        }
    }

    #[test]
    fn ergodic_average_matches_explicit_mean() {
        let p = small_problem();
        let opts = RunOptions {
            p: 0.5,
            q: 0.67,
            seed: 11,
            ..RunOptions::default()
        };
        let setup = prepare(&p, &opts).unwrap();
        let mut s = Solver::new(&p, setup.steps, setup.plan, &PrimalDualPoint::zeros(&p)).unwrap();
        assert!(s.ergodic_average().is_none());
        let mut sx = [0.0; 3];
        let mut sy = [0.0; 3];
        for k in 1..=37 {
            s.step().unwrap();
            for c in 0..3 {
                sx[c] += s.state().x()[c];
                sy[c] += s.state().y()[c];
            }
            let avg = s.ergodic_average().unwrap();
            for c in 0..3 {
                assert!((avg.x[c] - sx[c] / k as f64).abs() < 1e-14);
                assert!((avg.y[c] - sy[c] / k as f64).abs() < 1e-14);
            }
        }
        let avg = s.ergodic_average().unwrap();
        s.restart_from(&avg).unwrap();
        assert_eq!(s.state().ergodic_count(), 0);
        assert!(s.state().dy().iter().all(|&v| v == 0.0));
        assert!(s.cache_drift().unwrap() < 1e-15);
    }

    #[test]
    fn half_steps_must_alternate() {
        let p = small_problem();
        let setup = prepare(&p, &RunOptions::default()).unwrap();
        let mut s = Solver::new(&p, setup.steps, setup.plan, &PrimalDualPoint::zeros(&p)).unwrap();
        assert!(s.dual_half_step().is_err());
        s.primal_half_step().unwrap();
        assert!(s.primal_half_step().is_err());
        assert!(s.cache_drift().is_err());
        s.dual_half_step().unwrap();
    }

    #[test]
    fn pdhg_probe_residuals_vanish() {
        let p = small_problem();
        let setup = prepare(&p, &RunOptions::default()).unwrap();
        let start = PrimalDualPoint::new(vec![0.3, -0.2, 0.1], vec![-0.5, -0.1, 0.0]);
        let mut s = Solver::new(&p, setup.steps, setup.plan, &start).unwrap();
        for _ in 0..5 {
            let probe = s.probe_step().unwrap();
            assert!(probe.u.iter().chain(&probe.v).all(|&e| e.abs() < 1e-15));
        }
    }

    #[test]
    fn zero_budget_logs_initial_row_only() {
        let p = small_problem();
        let opts = RunOptions {
            max_cost: 0.0,
            ..RunOptions::default()
        };
        let t = run(&p, &opts).unwrap();
        assert_eq!(t.records.len(), 1);
        assert_eq!(t.records[0].iteration, 0);
        assert_eq!(t.iterations, 0);
    }

    #[test]
    fn method_parsing() {
        assert_eq!("PDHG".parse::<Method>().unwrap(), Method::Pdhg);
        assert!("admm".parse::<Method>().is_err());
        assert_eq!(Method::Spdhg.probabilities(0.2, 0.3), (1.0, 0.3));
    }
}
