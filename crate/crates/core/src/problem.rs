//! Problem descriptions and solver output shared by the Root and Rost
//! constructions.

use crate::error::{Error, Result};
use crate::fields::{BarrierKind, StoppingField};
use crate::forward::{DelayLaw, DelaySpec, ForwardTrace};
use crate::measures::{check_convex_order, LatticeMeasure};
use crate::scalar::{Mode, Scalar};
use crate::{solver_root, solver_rost};

/// A delayed embedding problem: start from `lambda`, wait for `delay`, then
/// embed `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem<S> {
    pub lambda: LatticeMeasure<S>,
    pub delay: DelaySpec<S>,
    pub mu: LatticeMeasure<S>,
    /// Physical duration of one walk step.
    pub time_step: S,
}

impl<S: Scalar> Problem<S> {
    /// Undelayed problem with unit time step.
    pub fn new(lambda: LatticeMeasure<S>, mu: LatticeMeasure<S>) -> Self {
        Self {
            lambda,
            delay: DelaySpec::none(),
            mu,
            time_step: S::one(),
        }
    }

    pub fn with_delay(mut self, delay: DelaySpec<S>) -> Self {
        self.delay = delay;
        self
    }

    pub fn with_time_step(mut self, time_step: S) -> Self {
        self.time_step = time_step;
        self
    }

    pub fn delay_law(&self) -> Result<DelayLaw<S>> {
        DelayLaw::resolve(&self.lambda, &self.delay, &self.time_step)
    }

    /// Resolve the delay and check `alpha_X <=_c mu`.
    pub(crate) fn prepare(&self) -> Result<DelayLaw<S>> {
        self.lambda.same_grid(&self.mu)?;
        self.mu.ensure_probability()?;
        let law = self.delay_law()?;
        let report = check_convex_order(&law.alpha_x(), &self.mu)?;
        if !report.ordered {
            return Err(Error::NotInConvexOrder {
                site: report.first_violation,
            });
        }
        Ok(law)
    }

    pub fn to_f64(&self) -> Result<Problem<f64>> {
        let delay = match &self.delay {
            DelaySpec::Deterministic(t) => DelaySpec::Deterministic(*t),
            DelaySpec::ExplicitSpaceTime(a) => DelaySpec::ExplicitSpaceTime(a.to_f64()),
            DelaySpec::FieldDelay { .. } => {
                return Err(Error::Unsupported(
                    "field delays cannot be converted between modes".into(),
                ))
            }
        };
        Ok(Problem {
            lambda: self.lambda.to_f64(),
            delay,
            mu: self.mu.to_f64(),
            time_step: self.time_step.to_f64(),
        })
    }
}

/// Stopping rule and iteration limits for the solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Stop once the mass still in play is at most `tol`. Zero asks for an
    /// exact embedding, which only rational runs can reach.
    pub tol: f64,
    /// Hard cap on materialized rows; `None` uses [`default_horizon`].
    pub max_horizon: Option<usize>,
    /// Always materialize at least this many rows.
    pub min_horizon: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_horizon: None,
            min_horizon: 0,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }

    pub(crate) fn reached<S: Scalar>(&self, residual: &S) -> bool {
        if S::MODE == Mode::Rational && self.tol == 0.0 {
            residual.is_zero()
        } else {
            residual.to_f64() <= self.tol
        }
    }
}

/// `8 w^2 ceil(ln(1/tol))` rows for a target spread over `w` sites.
pub fn default_horizon(width_sites: usize, tol: f64) -> usize {
    let w = width_sites.max(1);
    let logs = (1.0 / tol.max(1e-16)).ln().ceil().max(1.0) as usize;
    8 * w * w * logs
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub converged: bool,
    pub residual: f64,
    /// Last materialized row.
    pub horizon: usize,
    pub mode: Mode,
    /// Per-step decay factor of the residual over the final rows, when it
    /// could be estimated.
    pub decay_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution<S> {
    pub field: StoppingField<S>,
    pub trace: ForwardTrace<S>,
    pub diagnostics: Diagnostics,
}

impl<S: Scalar> Solution<S> {
    pub fn ensure_converged(self) -> Result<Self> {
        if self.diagnostics.converged {
            Ok(self)
        } else {
            Err(Error::ResidualTooLarge {
                residual: self.diagnostics.residual,
                horizon: self.diagnostics.horizon,
            })
        }
    }
}

/// Dispatch to the Root or Rost construction.
pub fn solve<S: Scalar>(problem: &Problem<S>, kind: BarrierKind, opts: &SolverOptions) -> Result<Solution<S>> {
    match kind {
        BarrierKind::Root => solver_root::build_root_field(problem, opts),
        BarrierKind::Rost => solver_rost::build_rost_field(problem, opts),
    }
}

/// Estimate the geometric decay of a residual history over its tail.
pub(crate) fn decay_rate(history: &[f64]) -> Option<f64> {
    let n = history.len();
    let span = 2 * (n / 8);
    if span == 0 {
        return None;
    }
    let a = history[n - 1 - span];
    let b = history[n - 1];
    if a <= 0.0 || b <= 0.0 {
        return None;
    }
    Some((b / a).powf(1.0 / span as f64))
}
