//! Restart policies and the epoch-length calculator.

use crate::error::{Error, Result};
use crate::problem::SaddleProblem;
use crate::solver::{drive, prepare, RunOptions, Trajectory};

pub const DEFAULT_RESTART_FACTOR: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum RestartPolicy {
    #[default]
    None,
    /// Restart from the ergodic average every `K` iterations.
    FixedK(u64),
    /// At logging checkpoints, restart from the ergodic average once its
    /// relative KKT residual is at most `factor` times the residual of the
    /// current epoch's starting point.
    AdaptiveKkt { factor: f64 },
}

impl RestartPolicy {
    pub fn adaptive() -> Self {
        RestartPolicy::AdaptiveKkt {
            factor: DEFAULT_RESTART_FACTOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            RestartPolicy::None => Ok(()),
            RestartPolicy::FixedK(0) => Err(Error::Config("epoch length must be at least 1".into())),
            RestartPolicy::FixedK(_) => Ok(()),
            RestartPolicy::AdaptiveKkt { factor } if factor > 0.0 && factor < 1.0 => Ok(()),
            RestartPolicy::AdaptiveKkt { factor } => Err(Error::Config(format!(
                "restart factor {factor} must lie in (0, 1)"
            ))),
        }
    }

    pub fn is_restarted(&self) -> bool {
        !matches!(self, RestartPolicy::None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochConstants {
    pub alpha: f64,
    pub beta: f64,
    pub gamma4_sq: f64,
    pub gamma5_sq: f64,
    pub mu: Option<f64>,
    pub zeta: Option<f64>,
}

impl EpochConstants {
    pub fn with_growth(mut self, mu: f64, zeta: f64) -> Self {
        self.mu = Some(mu);
        self.zeta = Some(zeta);
        self
    }
}

/// Correction constants for uniform probabilities; `norm_a` is `||A||`.
pub fn epoch_constants(p: f64, q: f64, tau: f64, sigma: f64, norm_a: f64) -> EpochConstants {
    let ts = (tau * sigma).sqrt();
    let gamma4_sq = (1.0 / p.sqrt() - p.sqrt()) * q.sqrt() * ts * norm_a;
    let gamma5_sq = p.sqrt() * (1.0 / q.sqrt() - q.sqrt()) * ts * norm_a;
    EpochConstants {
        alpha: (1.0 / p - 1.0).max(1.0 / q - 1.0),
        beta: gamma4_sq.max(gamma5_sq),
        gamma4_sq,
        gamma5_sq,
        mu: None,
        zeta: None,
    }
}

/// Smallest epoch length `K` for which the restarted scheme contracts,
/// given smoothed quadratic-growth parameters `mu` and `zeta`.
pub fn min_epoch_length(consts: &EpochConstants, gamma1_sq: f64) -> Result<u64> {
    let (mu, zeta) = match (consts.mu, consts.zeta) {
        (Some(mu), Some(zeta)) if mu > 0.0 && zeta > 0.0 => (mu, zeta),
        _ => {
            return Err(Error::invalid(
                "epoch length needs positive growth parameters mu and zeta",
            ))
        }
    };
    if !(gamma1_sq < 0.5) {
        return Err(Error::invalid(format!("gamma1^2 = {gamma1_sq} must be below 1/2")));
    }
    let (alpha, beta) = (consts.alpha, consts.beta);
    let t1 = (4.0 + 2.0 * beta) / mu;
    let t2 = 100.0 / zeta * (alpha * zeta + 5.0 * beta + 2.0 + 1.0 / (1.0 - 2.0 * gamma1_sq));
    let t3 = 400.0 * beta / zeta;
    let k = t1.max(t2).max(t3);
    // shave rounding noise so exact integers are not bumped up
    Ok((k * (1.0 - 1e-14)).ceil().max(1.0) as u64)
}

/// Runs with the given restart policy; `options.restart` is overridden.
pub fn restarted_run(
    problem: &SaddleProblem,
    options: &RunOptions,
    policy: RestartPolicy,
) -> Result<Trajectory> {
    let mut options = options.clone();
    options.restart = policy;
    let setup = prepare(problem, &options)?;
    drive(problem, &options, setup)
}
