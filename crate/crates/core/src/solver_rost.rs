//! Rost fields of stopping probabilities.
//!
//! The construction is greedy: `nu_t`, the part of `mu` not yet embedded,
//! starts at `mu` and every cell stops as much free mass as it can,
//!
//! ```text
//! r_t(x) = min(nu_t(x), a_t(x)) / a_t(x),   nu_{t+1} = nu_t - r_t a_t.
//! ```
//!
//! At rows where the delay releases mass this is the density of
//! `alpha_t ∧ nu_t` with respect to the free mass, which is the largest
//! feasible choice. Cells without free mass get 1 while `nu_t(x) > 0`.

use std::ops::RangeInclusive;

use crate::error::{Error, Result};
use crate::fields::{BarrierKind, StoppingField, TailState};
use crate::forward::Propagator;
use crate::measures::LatticeMeasure;
use crate::problem::{decay_rate, default_horizon, Diagnostics, Problem, Solution, SolverOptions};
use crate::scalar::{Mode, Scalar};

/// Build the Rost field embedding `problem.mu` after the delay.
pub fn build_rost_field<S: Scalar>(problem: &Problem<S>, opts: &SolverOptions) -> Result<Solution<S>> {
    run(problem, opts, None).map(|(sol, _)| sol)
}

/// Rerun the construction with `r_t(x)` forced to `value` and the greedy
/// rule everywhere else. Returns the run and the target mass still missing
/// per site at the end.
pub fn perturbed_rost_run<S: Scalar>(
    problem: &Problem<S>,
    opts: &SolverOptions,
    t: usize,
    site: i64,
    value: S,
) -> Result<(Solution<S>, LatticeMeasure<S>)> {
    run(problem, opts, Some((t, site, value)))
}

fn run<S: Scalar>(
    problem: &Problem<S>,
    opts: &SolverOptions,
    forced: Option<(usize, i64, S)>,
) -> Result<(Solution<S>, LatticeMeasure<S>)> {
    let law = problem.prepare()?;
    let (lo, hi) = problem.mu.support_hull().ok_or(Error::EmptyMeasure)?;
    let sites: RangeInclusive<i64> = (lo - 2)..=(hi + 2);
    let idx = |x: i64| (x - lo + 2) as usize;
    let mut nu: Vec<S> = sites.clone().map(|x| problem.mu.mass_at(x)).collect();
    let mut spent = vec![false; nu.len()];
    let absorbing_ends = S::MODE == Mode::Float;
    let max_h = opts
        .max_horizon
        .unwrap_or_else(|| default_horizon((hi - lo + 1) as usize, opts.tol) + law.max_time());
    let min_h = opts.min_horizon.max(law.max_time());

    let mut field = StoppingField::new(BarrierKind::Rost, problem.lambda.grid().clone(), problem.time_step.clone(), sites.clone());
    let mut prop = Propagator::new(law);
    let mut history = Vec::new();
    loop {
        let t = prop.t();
        if let Some((x, _)) = prop.current_free().atoms().find(|(x, _)| !sites.contains(x)) {
            return Err(Error::MassEscaped { t, site: x });
        }
        let mut row = Vec::with_capacity(nu.len());
        for x in sites.clone() {
            let i = idx(x);
            let a = prop.current_free().mass_at(x);
            let edge = absorbing_ends && (x == lo || x == hi);
            let mut r = if edge {
                S::one()
            } else if spent[i] {
                S::zero()
            } else if a > S::zero() {
                (S::min_of(nu[i].clone(), a.clone()) / a.clone()).clamp_unit()
            } else if nu[i] > S::zero() {
                S::one()
            } else {
                S::zero()
            };
            let overridden = matches!(&forced, Some((ft, fx, _)) if *ft == t && *fx == x);
            if let Some((_, _, v)) = forced.as_ref().filter(|_| overridden) {
                r = v.clone();
            }
            if a > S::zero() {
                nu[i] = S::max_of(nu[i].clone() - r.clone() * a, S::zero());
            }
            if !edge && !overridden && r < S::one() {
                spent[i] = true;
                nu[i] = S::zero();
            }
            row.push(r);
        }
        prop.apply(|x| if sites.contains(&x) { row[idx(x)].clone() } else { S::zero() });
        field.push_row(row);
        let residual = prop.alive_after_last();
        history.push(residual.to_f64());
        if (opts.reached(&residual) && t >= min_h) || t >= max_h {
            break;
        }
    }
    let trace = prop.finish();
    for x in sites.clone() {
        let i = idx(x);
        let edge = absorbing_ends && (x == lo || x == hi);
        if edge || (!spent[i] && nu[i] > S::zero()) {
            field.set_tail(x, TailState::One);
        }
    }
    let missing = LatticeMeasure::from_atoms(
        problem.mu.grid().clone(),
        sites.clone().map(|x| (x, nu[idx(x)].clone())),
    )?;
    let residual = trace.residual().clone();
    let diagnostics = Diagnostics {
        converged: opts.reached(&residual),
        residual: residual.to_f64(),
        horizon: trace.horizon(),
        mode: S::MODE,
        decay_rate: decay_rate(&history),
    };
    Ok((
        Solution {
            field,
            trace,
            diagnostics,
        },
        missing,
    ))
}
