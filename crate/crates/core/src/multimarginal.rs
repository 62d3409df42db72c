//! Chains of delayed embeddings and barrier recovery from interpolating
//! potentials.
//!
//! Stage `k` embeds `mu_k` after the delay `rho_{k-1}`, the stopping time of
//! stage `k - 1`. The potentials `U_{mu_k,T}` of `X_{rho_k ∧ T}` determine
//! every stage's barrier.

use std::ops::RangeInclusive;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{BarrierKind, BarrierSet, StoppingField};
use crate::forward::{DelayLaw, DelaySpec, ForwardTrace, SpaceTimeMeasure, TimeIndex};
use crate::measures::{check_convex_order, LatticeMeasure, PotentialTable};
use crate::problem::{solve, Problem, Solution, SolverOptions};
use crate::scalar::{Mode, Scalar};

/// Solved stages of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainResult<S> {
    pub kind: BarrierKind,
    pub lambda: LatticeMeasure<S>,
    pub measures: Vec<LatticeMeasure<S>>,
    pub stages: Vec<Solution<S>>,
    /// Resolved delay of each stage; stage 1 uses the initial delay.
    pub delays: Vec<DelayLaw<S>>,
}

impl<S: Scalar> ChainResult<S> {
    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn fields(&self) -> impl Iterator<Item = &StoppingField<S>> + '_ {
        self.stages.iter().map(|s| &s.field)
    }

    pub fn traces(&self) -> impl Iterator<Item = &ForwardTrace<S>> + '_ {
        self.stages.iter().map(|s| &s.trace)
    }

    /// `alpha_k` for each stage.
    pub fn alphas(&self) -> impl Iterator<Item = &SpaceTimeMeasure<S>> + '_ {
        self.delays.iter().map(|d| d.alpha())
    }

    pub fn converged(&self) -> bool {
        self.stages.iter().all(|s| s.diagnostics.converged)
    }
}

/// Solve `lambda ≤_c mu_1 ≤_c ... ≤_c mu_n` stage by stage.
///
/// Each stage past the first is delayed by the previous stage's field,
/// capped at that stage's horizon with `opts.tol` as the allowed forced
/// release. Stage indices in errors are 1-based.
pub fn solve_chain<S: Scalar>(
    lambda: &LatticeMeasure<S>,
    initial_delay: &DelaySpec<S>,
    measures: &[LatticeMeasure<S>],
    kind: BarrierKind,
    time_step: &S,
    opts: &SolverOptions,
) -> Result<ChainResult<S>> {
    if measures.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    let mut prev = lambda.clone();
    for (k, mu) in measures.iter().enumerate() {
        prev.same_grid(mu)?;
        if k > 0 && !check_convex_order(&prev, mu)?.ordered {
            return Err(Error::ChainOrderViolation { stage: k + 1 });
        }
        prev = mu.clone();
    }

    let mut delay = initial_delay.clone();
    let mut stages = Vec::with_capacity(measures.len());
    let mut delays = Vec::with_capacity(measures.len());
    for (k, mu) in measures.iter().enumerate() {
        let problem = Problem {
            lambda: lambda.clone(),
            delay: delay.clone(),
            mu: mu.clone(),
            time_step: time_step.clone(),
        };
        let stage = k + 1;
        let law = problem.delay_law().map_err(|e| e.at_stage(stage))?;
        let sol = solve(&problem, kind, opts).map_err(|e| match e {
            Error::NotInConvexOrder { .. } if k > 0 => Error::ChainOrderViolation { stage },
            e => e.at_stage(stage),
        })?;
        delay = DelaySpec::FieldDelay {
            field: sol.field.clone(),
            prior: Box::new(delay),
            cap: sol.diagnostics.horizon,
            tolerance: opts.tol,
        };
        delays.push(law);
        stages.push(sol);
    }
    Ok(ChainResult {
        kind,
        lambda: lambda.clone(),
        measures: measures.to_vec(),
        stages,
        delays,
    })
}

/// `U_{mu_k,T}` for `k = 0..=n` and `T = 0..=tmax`, with `U_{mu_0,T} = U_lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialFamily<S> {
    pub kind: BarrierKind,
    pub window: RangeInclusive<i64>,
    pub tmax: usize,
    /// `tables[k][T]`.
    pub tables: Vec<Vec<PotentialTable<S>>>,
    /// `U_lambda` followed by `U_{mu_k}`.
    pub limits: Vec<PotentialTable<S>>,
    pub grid: crate::measures::Grid<S>,
    pub time_step: S,
}

impl<S: Scalar> PotentialFamily<S> {
    pub fn get(&self, k: usize, t: usize, site: i64) -> Option<&S> {
        self.tables.get(k)?.get(t)?.get(site)
    }

    /// CSV with columns `k,T,site,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,T,site,value\n");
        for (k, row) in self.tables.iter().enumerate() {
            for (t, table) in row.iter().enumerate() {
                for (y, v) in table.iter() {
                    out.push_str(&format!("{k},{t},{y},{}\n", v.to_text()));
                }
            }
        }
        out
    }
}

/// Evaluate the interpolating potentials of a chain. Every stage must
/// have materialized at least `tmax` rows.
pub fn interpolating_potentials<S: Scalar>(
    chain: &ChainResult<S>,
    window: RangeInclusive<i64>,
    tmax: usize,
) -> Result<PotentialFamily<S>> {
    if window.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let base = chain.lambda.potential(window.clone())?;
    let mut tables = vec![vec![base.clone(); tmax + 1]];
    for sol in &chain.stages {
        let row: Vec<_> = (0..=tmax)
            .into_par_iter()
            .map(|t| sol.trace.stopped_potential(TimeIndex::At(t), window.clone()))
            .collect::<Result<_>>()?;
        tables.push(row);
    }
    let mut limits = vec![base];
    for mu in &chain.measures {
        limits.push(mu.potential(window.clone())?);
    }
    let (grid, time_step) = match chain.stages.first() {
        Some(s) => (s.trace.grid().clone(), s.trace.time_step().clone()),
        None => (chain.lambda.grid().clone(), S::one()),
    };
    Ok(PotentialFamily {
        kind: chain.kind,
        window,
        tmax,
        tables,
        limits,
        grid,
        time_step,
    })
}

/// `tol_eq` used when none is given: exact in rational mode,
/// `1e-9` times the window width in float mode.
pub fn default_tol_eq<S: Scalar>(window: &RangeInclusive<i64>) -> f64 {
    match S::MODE {
        Mode::Rational => 0.0,
        Mode::Float => 1e-9 * (window.end() - window.start() + 1) as f64,
    }
}

fn nearly_equal<S: Scalar>(a: &S, b: &S, tol: f64) -> bool {
    match S::MODE {
        Mode::Rational if tol == 0.0 => a == b,
        _ => (a.clone() - b.clone()).abs().to_f64() <= tol,
    }
}

/// Equality sets of the potential family, one per stage.
///
/// Root: `(U_{mu_k,T} - U_{mu_{k-1},T})(y) = (U_{mu_k} - U_{mu_{k-1}})(y)`.
/// Rost: `U_{mu_k,T}(y) = U_{mu_{k-1},T}(y)`.
pub fn recover_barriers<S: Scalar>(family: &PotentialFamily<S>, kind: BarrierKind, tol_eq: f64) -> Vec<BarrierSet<S>> {
    (1..family.tables.len())
        .map(|k| {
            let mut cells = Vec::new();
            for t in 0..=family.tmax {
                let cur = &family.tables[k][t];
                let prev = &family.tables[k - 1][t];
                for y in family.window.clone() {
                    let (a, b) = (cur.get(y).expect("window"), prev.get(y).expect("window"));
                    let hit = match kind {
                        BarrierKind::Root => {
                            let lhs = a.clone() - b.clone();
                            let rhs = family.limits[k].get(y).expect("window").clone()
                                - family.limits[k - 1].get(y).expect("window").clone();
                            nearly_equal(&lhs, &rhs, tol_eq)
                        }
                        BarrierKind::Rost => nearly_equal(a, b, tol_eq),
                    };
                    if hit {
                        cells.push((t, y));
                    }
                }
            }
            let mut set = BarrierSet::from_cells(kind, family.grid.clone(), family.time_step.clone(), cells);
            set.horizon = family.tmax;
            set
        })
        .collect()
}

/// Cells where a recovered set and a stage field disagree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecoveryDiff {
    pub stage: usize,
    /// Recovered cells with `r < 1`.
    pub recovered_only: Vec<(usize, i64)>,
    /// Cells with `r = 1` missing from the recovered set.
    pub solver_only: Vec<(usize, i64)>,
    /// Disagreeing cells with `r` equal to 0 or 1, outside the band
    /// `plus \ minus`.
    pub outside_band: Vec<(usize, i64)>,
}

impl RecoveryDiff {
    pub fn within_band(&self) -> bool {
        self.outside_band.is_empty()
    }
}

/// Compare a recovered set with the stage field's `r = 1` cells on the
/// field's sites for rows `0..=recovered.horizon`.
pub fn diff_against_field<S: Scalar>(stage: usize, recovered: &BarrierSet<S>, field: &StoppingField<S>) -> RecoveryDiff {
    let mut diff = RecoveryDiff {
        stage,
        recovered_only: Vec::new(),
        solver_only: Vec::new(),
        outside_band: Vec::new(),
    };
    for t in 0..=recovered.horizon {
        for y in field.sites() {
            let r = field.get(t, y);
            let hit = recovered.contains(t, y);
            if hit == r.is_one() {
                continue;
            }
            if hit {
                diff.recovered_only.push((t, y));
            } else {
                diff.solver_only.push((t, y));
            }
            if r.is_zero() || r.is_one() {
                diff.outside_band.push((t, y));
            }
        }
    }
    diff
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::validate_field;
    use crate::measures::Grid;
    use crate::scalar::Rational;
    use crate::solver_root::build_root_field;
    use num_traits::Zero;

    type Q = Rational;

    fn q(n: i64, d: i64) -> Q {
        Q::from_ratio(n, d)
    }

    fn d0() -> LatticeMeasure<Q> {
        LatticeMeasure::dirac(Grid::unit(), 0)
    }

    fn chain_measures() -> Vec<LatticeMeasure<Q>> {
        vec![
            LatticeMeasure::uniform(Grid::unit(), &[-1, 1]),
            LatticeMeasure::uniform(Grid::unit(), &[-2, 0, 2]),
        ]
    }

    fn exact(min_horizon: usize) -> SolverOptions {
        SolverOptions {
            tol: 0.0,
            max_horizon: None,
            min_horizon,
        }
    }

    #[test]
    fn two_stage_root_chain() {
        let chain = solve_chain(&d0(), &DelaySpec::none(), &chain_measures(), BarrierKind::Root, &q(1, 1), &exact(0)).unwrap();
        assert!(chain.converged());
        let f1 = &chain.stages[0].field;
        assert_eq!(f1.get(1, 1), q(1, 1));
        assert_eq!(f1.get(1, -1), q(1, 1));
        let f2 = &chain.stages[1].field;
        assert_eq!(f2.get(2, 2), q(1, 1));
        assert_eq!(f2.get(2, -2), q(1, 1));
        // half the mass arriving at (2,0) must pass to reach the outer atoms
        assert_eq!(f2.get(2, 0), q(1, 3));
        for (k, mu) in chain_measures().iter().enumerate() {
            assert_eq!(&chain.stages[k].trace.stopped_law(TimeIndex::Infinity).unwrap(), mu);
            assert!(validate_field(&chain.stages[k].field).valid);
        }
        let a: Vec<_> = chain.alphas().collect();
        assert_eq!(
            a[1].clone(),
            chain.stages[0].trace.stopped_ledger()
        );
    }

    #[test]
    fn single_stage_matches_solver() {
        let mu = LatticeMeasure::uniform(Grid::unit(), &[-2, 0, 2]);
        let chain = solve_chain(&d0(), &DelaySpec::none(), std::slice::from_ref(&mu), BarrierKind::Root, &q(1, 1), &exact(0)).unwrap();
        let sol = build_root_field(&Problem::new(d0(), mu), &exact(0)).unwrap();
        assert_eq!(chain.stages[0], sol);
    }

    #[test]
    fn repeated_measure_stops_at_once() {
        let mu = LatticeMeasure::uniform(Grid::unit(), &[-1, 1]);
        for kind in [BarrierKind::Root, BarrierKind::Rost] {
            let chain = solve_chain(&d0(), &DelaySpec::none(), &[mu.clone(), mu.clone()], kind, &q(1, 1), &exact(0)).unwrap();
            assert!(chain.delays[1].forced_release().is_zero());
            assert_eq!(chain.stages[1].trace.stopped_ledger(), chain.stages[0].trace.stopped_ledger(), "{kind}");
        }
    }

    #[test]
    fn order_violation_reports_stage() {
        let ms = vec![
            LatticeMeasure::uniform(Grid::unit(), &[-2, 2]),
            LatticeMeasure::uniform(Grid::unit(), &[-1, 1]),
        ];
        let err = solve_chain(&d0(), &DelaySpec::none(), &ms, BarrierKind::Root, &q(1, 1), &exact(0)).unwrap_err();
        assert!(matches!(err, Error::ChainOrderViolation { stage: 2 }));
    }

    #[test]
    fn potentials_and_recovery() {
        let chain = solve_chain(&d0(), &DelaySpec::none(), &chain_measures(), BarrierKind::Root, &q(1, 1), &exact(6)).unwrap();
        let fam = interpolating_potentials(&chain, -4..=4, 6).unwrap();
        for t in 0..=6 {
            assert_eq!(fam.tables[0][t], d0().potential(-4..=4).unwrap());
        }
        for k in 1..=2 {
            for t in 0..6 {
                for y in -4..=4 {
                    assert!(fam.get(k, t, y) >= fam.get(k, t + 1, y));
                    assert!(fam.get(k - 1, t, y) >= fam.get(k, t, y));
                }
            }
        }
        let sets = recover_barriers(&fam, BarrierKind::Root, 0.0);
        for t in 1..=6 {
            assert!(sets[0].contains(t, 1) && sets[0].contains(t, -1));
        }
        for (k, set) in sets.iter().enumerate() {
            assert!(set.is_structured());
            let diff = diff_against_field(k + 1, set, &chain.stages[k].field);
            assert!(diff.within_band(), "{diff:?}");
        }
        assert!(fam.to_csv().starts_with("k,T,site,value\n"));
    }

    #[test]
    fn single_stage_recovery_detail() {
        let mu = LatticeMeasure::uniform(Grid::unit(), &[-2, 0, 2]);
        let chain = solve_chain(&d0(), &DelaySpec::none(), &[mu], BarrierKind::Root, &q(1, 1), &exact(6)).unwrap();
        let fam = interpolating_potentials(&chain, -4..=4, 6).unwrap();
        assert_eq!(fam.get(1, 2, 0), Some(&q(-1, 1)));
        let sets = recover_barriers(&fam, BarrierKind::Root, 0.0);
        assert!(!sets[0].contains(2, 0));
        assert!(sets[0].contains(4, 0));
    }

    #[test]
    fn rost_recovery_contains_plus_and_identical_measures_fill_grid() {
        let mu = LatticeMeasure::uniform(Grid::unit(), &[-1, 1]);
        let chain = solve_chain(&d0(), &DelaySpec::none(), &[mu.clone(), mu], BarrierKind::Rost, &q(1, 1), &exact(4)).unwrap();
        let fam = interpolating_potentials(&chain, -3..=3, 4).unwrap();
        let sets = recover_barriers(&fam, BarrierKind::Rost, 0.0);
        assert_eq!(sets[1].len(), 5 * 7);
        let (plus, _) = crate::fields::extract_barriers(&chain.stages[0].field).unwrap();
        for &(t, y) in &plus.cells {
            if t <= 4 {
                assert!(sets[0].contains(t, y), "({t},{y})");
            }
        }
    }
}
