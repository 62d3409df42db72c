//! Root fields of stopping probabilities.
//!
//! The columns are driven by the expected local time budget
//! `L(x) = U_{alpha_X}(x) - U_mu(x)`. A site lets mass pass until the
//! accumulated local time `l_t(x)` would exceed `L(x)`, stops the overflow
//! fraction once, and stops everything afterwards:
//!
//! ```text
//! r_t(x) = 1 - min((L(x) - l_t(x)) / (spacing * a_t(x)), 1)
//! ```
//!
//! Cells that receive no free mass are set to 1 once the column's budget is
//! spent and to 0 before.

use crate::error::{Error, Result};
use crate::fields::{BarrierKind, StoppingField, TailState};
use crate::forward::Propagator;
use crate::problem::{decay_rate, default_horizon, Diagnostics, Problem, Solution, SolverOptions};
use crate::scalar::{Mode, Scalar};

/// Local-time slack below which a float column counts as exhausted.
const FLOAT_BUDGET_SLACK: f64 = 1e-12;

fn exhausted<S: Scalar>(rem: &S) -> bool {
    match S::MODE {
        Mode::Rational => rem.is_zero(),
        Mode::Float => rem.to_f64() <= FLOAT_BUDGET_SLACK,
    }
}

/// Build the Root field embedding `problem.mu` after the delay.
pub fn build_root_field<S: Scalar>(problem: &Problem<S>, opts: &SolverOptions) -> Result<Solution<S>> {
    let law = problem.prepare()?;
    let (lo, hi) = problem.mu.support_hull().ok_or(Error::EmptyMeasure)?;
    let sites = (lo - 2)..=(hi + 2);
    let budget: Vec<S> = sites
        .clone()
        .map(|x| {
            let l = law.alpha_x().potential_at(x) - problem.mu.potential_at(x);
            S::max_of(l, S::zero())
        })
        .collect();
    let idx = |x: i64| (x - lo + 2) as usize;
    let spacing = problem.lambda.grid().spacing.clone();
    let max_h = opts
        .max_horizon
        .unwrap_or_else(|| default_horizon((hi - lo + 1) as usize, opts.tol) + law.max_time());
    let min_h = opts.min_horizon.max(law.max_time());

    let mut field = StoppingField::new(BarrierKind::Root, problem.lambda.grid().clone(), problem.time_step.clone(), sites.clone());
    let mut fired = vec![false; budget.len()];
    let mut prop = Propagator::new(law);
    let mut history = Vec::new();
    loop {
        let t = prop.t();
        if let Some((x, _)) = prop.current_free().atoms().find(|(x, _)| !sites.contains(x)) {
            return Err(Error::MassEscaped { t, site: x });
        }
        let mut row = Vec::with_capacity(budget.len());
        for x in sites.clone() {
            let i = idx(x);
            let rem = budget[i].clone() - prop.current_local_time(x);
            let a = prop.current_free().mass_at(x);
            let r = if fired[i] || exhausted(&rem) {
                S::one()
            } else if a > S::zero() {
                let pass = S::min_of(rem / (spacing.clone() * a), S::one());
                (S::one() - pass).clamp_unit()
            } else {
                S::zero()
            };
            if r > S::zero() {
                fired[i] = true;
            }
            row.push(r);
        }
        prop.apply(|x| if sites.contains(&x) { row[idx(x)].clone() } else { S::zero() });
        field.push_row(row);
        let residual = prop.alive_after_last();
        history.push(residual.to_f64());
        let done = opts.reached(&residual) && t >= min_h;
        if done || t >= max_h {
            break;
        }
    }
    let trace = prop.finish();
    let h = trace.horizon();
    for x in sites.clone() {
        let i = idx(x);
        let rem = budget[i].clone() - trace.local_time_at(h + 1, x);
        if fired[i] || exhausted(&rem) {
            field.set_tail(x, TailState::One);
        }
    }
    let residual = trace.residual().clone();
    let diagnostics = Diagnostics {
        converged: opts.reached(&residual),
        residual: residual.to_f64(),
        horizon: h,
        mode: S::MODE,
        decay_rate: decay_rate(&history),
    };
    Ok(Solution {
        field,
        trace,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{extract_barriers, validate_field};
    use crate::forward::{propagate, DelaySpec, TimeIndex};
    use crate::measures::{Grid, LatticeMeasure};
    use crate::scalar::Rational;
    use num_traits::Zero;

    type Q = Rational;

    fn q(n: i64, d: i64) -> Q {
        Q::from_ratio(n, d)
    }

    fn d0() -> LatticeMeasure<Q> {
        LatticeMeasure::dirac(Grid::unit(), 0)
    }

    fn exact() -> SolverOptions {
        SolverOptions::with_tol(0.0)
    }

    #[test]
    fn paper_example() {
        let mu = LatticeMeasure::uniform(Grid::unit(), &[-2, 0, 2]);
        let sol = build_root_field(&Problem::new(d0(), mu.clone()), &exact()).unwrap();
        let f = &sol.field;
        assert_eq!(f.get(0, 0), q(0, 1));
        assert_eq!(f.get(1, 1), q(0, 1));
        assert_eq!(f.get(1, -1), q(0, 1));
        assert_eq!(f.get(2, 0), q(1, 3));
        assert_eq!(f.get(2, 2), q(1, 1));
        assert_eq!(f.get(2, -2), q(1, 1));
        assert_eq!(f.get(3, 1), q(0, 1));
        assert_eq!(f.get(4, 0), q(1, 1));
        assert_eq!(f.get(4, 2), q(1, 1));
        assert!(sol.diagnostics.converged);
        assert_eq!(sol.diagnostics.horizon, 4);
        assert!(sol.trace.residual().is_zero());
        assert_eq!(sol.trace.stopped_law(TimeIndex::Infinity).unwrap(), mu);
        assert!(validate_field(f).valid);
    }

    #[test]
    fn two_point_target() {
        let mu = LatticeMeasure::uniform(Grid::unit(), &[-1, 1]);
        let sol = build_root_field(&Problem::new(d0(), mu.clone()), &exact()).unwrap();
        assert_eq!(sol.field.get(0, 0), q(0, 1));
        assert_eq!(sol.field.get(1, 1), q(1, 1));
        assert_eq!(sol.field.get(1, -1), q(1, 1));
        assert_eq!(sol.diagnostics.horizon, 1);
        assert_eq!(sol.trace.stopped_law(TimeIndex::Infinity).unwrap(), mu);
    }

    #[test]
    fn target_equal_to_delay_law_stops_at_release() {
        let lambda = d0();
        let mu = lambda.evolve(2);
        let p = Problem::new(lambda, mu).with_delay(DelaySpec::Deterministic(2));
        let sol = build_root_field(&p, &exact()).unwrap();
        for (x, _) in sol.trace.free(2).atoms() {
            assert_eq!(sol.field.get(2, x), q(1, 1));
        }
        assert_eq!(sol.trace.stopped_ledger(), p.delay_law().unwrap().alpha().clone());
    }

    #[test]
    fn rejects_targets_out_of_order() {
        let lambda = LatticeMeasure::uniform(Grid::unit(), &[-2, 2]);
        let p = Problem::new(lambda, d0());
        assert!(matches!(build_root_field(&p, &exact()), Err(Error::NotInConvexOrder { .. })));
    }

    #[test]
    fn local_time_matches_budget() {
        let mu = LatticeMeasure::from_atoms(Grid::unit(), [(-3, q(1, 4)), (-1, q(1, 4)), (1, q(1, 4)), (3, q(1, 4))]).unwrap();
        let sol = build_root_field(&Problem::new(d0(), mu.clone()), &exact()).unwrap();
        assert!(sol.trace.residual().is_zero());
        for x in -5..=5 {
            let l = sol.trace.local_time_profile().get(&x).cloned().unwrap_or_else(Q::zero);
            assert_eq!(l, d0().potential_at(x) - mu.potential_at(x));
        }
    }

    #[test]
    fn partial_stops_are_terminal() {
        let mu = LatticeMeasure::from_atoms(Grid::unit(), [(-2, q(1, 5)), (0, q(2, 5)), (2, q(1, 5)), (-1, q(1, 10)), (1, q(1, 10))]).unwrap();
        let sol = build_root_field(&Problem::new(d0(), mu), &SolverOptions::with_tol(1e-12)).unwrap();
        let f = &sol.field;
        for t in 0..sol.diagnostics.horizon {
            for x in f.sites() {
                let r = f.get(t, x);
                if r > q(0, 1) && sol.trace.free_at(t, x) > q(0, 1) {
                    assert_eq!(f.get(t + 1, x), q(1, 1));
                }
            }
        }
        assert!(validate_field(f).valid);
    }

    #[test]
    fn unreachable_cells_do_not_affect_the_law() {
        let mu = LatticeMeasure::uniform(Grid::unit(), &[-2, 0, 2]);
        let sol = build_root_field(&Problem::new(d0(), mu.clone()), &exact()).unwrap();
        // (1,0) and (3,0) are never reached; flipping (3,0) keeps the structure
        let mut g = sol.field.clone();
        g.set(1, 0, q(0, 1));
        g.set(3, 0, q(1, 1));
        let tr = propagate(&d0(), &DelaySpec::none(), &g, 6).unwrap();
        assert_eq!(tr.stopped_law(TimeIndex::Infinity).unwrap(), mu);
        let (plus, minus) = extract_barriers(&sol.field).unwrap();
        assert!(minus.cells.is_subset(&plus.cells));
    }

    #[test]
    fn float_mode_matches_rational() {
        let mu = LatticeMeasure::uniform(Grid::unit(), &[-2, 0, 2]);
        let sol_q = build_root_field(&Problem::new(d0(), mu.clone()), &exact()).unwrap();
        let pf = Problem::new(d0(), mu).to_f64().unwrap();
        let sol_f = build_root_field(&pf, &SolverOptions::default()).unwrap();
        assert!(sol_f.diagnostics.converged);
        for t in 0..=4 {
            for x in -4..=4 {
                assert!((sol_q.field.get(t, x).to_f64() - sol_f.field.get(t, x)).abs() < 1e-12);
            }
        }
    }
}
