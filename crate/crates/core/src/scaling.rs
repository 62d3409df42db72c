//! Lattice approximations of continuous problems.
//!
//! At level `N` the walk lives on `Z / sqrt(N)` and one step takes `1/N`
//! physical time. Atoms are split onto their two neighbouring sites with
//! weights that preserve the mean; uniform densities are first cut at the
//! grid sites and each piece is placed at its midpoint.

use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{ensure_valid, BarrierKind, StoppingField};
use crate::forward::{DelaySpec, TimeIndex};
use crate::measures::{check_convex_order, Grid, LatticeMeasure};
use crate::osp::verify_switching;
use crate::problem::{solve, Problem, SolverOptions};
use crate::scalar::Scalar;

/// A real number given as a JSON number or as a `p/q` or decimal string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RealValue {
    Number(f64),
    Text(String),
}

impl RealValue {
    /// JSON numbers are read through their shortest decimal form, so `0.3`
    /// becomes `3/10` in rational mode.
    pub fn parse<S: Scalar>(&self) -> Result<S> {
        match self {
            RealValue::Number(x) => S::parse_str(&format!("{x}")),
            RealValue::Text(s) => S::parse_str(s),
        }
    }
}

impl From<f64> for RealValue {
    fn from(x: f64) -> Self {
        RealValue::Number(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContinuousMeasure {
    /// `(position, weight)` pairs.
    Atoms(Vec<(RealValue, RealValue)>),
    /// Uniform law on `[a, b]`.
    Uniform { a: RealValue, b: RealValue },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousProblemSpec {
    pub lambda: ContinuousMeasure,
    pub mu: ContinuousMeasure,
    /// Deterministic physical delay.
    #[serde(default)]
    pub delay: Option<RealValue>,
    pub kind: BarrierKind,
}

/// A problem at level `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteProblem<S> {
    pub n: u64,
    pub kind: BarrierKind,
    pub problem: Problem<S>,
    /// `round(N t0)` for a deterministic delay `t0`.
    pub delay_steps: usize,
    /// `N t0 - delay_steps`.
    pub delay_rounding: f64,
}

fn spacing_for<S: Scalar>(n: u64) -> Result<S> {
    if n == 0 {
        return Err(Error::Parse("N must be at least 1".into()));
    }
    S::recip_sqrt(n).ok_or_else(|| Error::Unsupported(format!("1/sqrt({n}) is not rational; use float mode")))
}

fn split_atom<S: Scalar>(out: &mut LatticeMeasure<S>, position: S, mass: S) {
    let u = position / out.grid().spacing.clone();
    let k = S::floor_int(&u);
    let frac = u - S::from_int(k);
    if frac.is_zero() {
        out.add(k, mass);
    } else {
        out.add(k, (S::one() - frac.clone()) * mass.clone());
        out.add(k + 1, frac * mass);
    }
}

/// Project a continuous measure onto the grid.
pub fn project_measure<S: Scalar>(m: &ContinuousMeasure, grid: &Grid<S>) -> Result<LatticeMeasure<S>> {
    let mut out = LatticeMeasure::empty(grid.clone());
    match m {
        ContinuousMeasure::Atoms(atoms) => {
            if atoms.is_empty() {
                return Err(Error::EmptyMeasure);
            }
            for (x, w) in atoms {
                let w: S = w.parse()?;
                if w < S::zero() {
                    return Err(Error::NegativeMass {
                        site: 0,
                        mass: w.to_text(),
                    });
                }
                split_atom(&mut out, x.parse()?, w);
            }
        }
        ContinuousMeasure::Uniform { a, b } => {
            let (a, b): (S, S) = (a.parse()?, b.parse()?);
            if b <= a {
                return Err(Error::Parse("uniform law needs a < b".into()));
            }
            let h = grid.spacing.clone();
            let len = b.clone() - a.clone();
            let first = S::floor_int(&(a.clone() / h.clone()));
            let mut k = first;
            loop {
                let lo = S::max_of(S::from_int(k) * h.clone(), a.clone());
                let hi = S::min_of(S::from_int(k + 1) * h.clone(), b.clone());
                if lo >= b {
                    break;
                }
                if hi > lo {
                    let mid = (lo.clone() + hi.clone()) * S::from_ratio(1, 2);
                    split_atom(&mut out, mid, (hi - lo) / len.clone());
                }
                k += 1;
            }
        }
    }
    Ok(out)
}

/// Discretize at level `n`.
pub fn discretize<S: Scalar>(spec: &ContinuousProblemSpec, n: u64) -> Result<DiscreteProblem<S>> {
    let grid = Grid::new(spacing_for::<S>(n)?, S::zero())?;
    let lambda = project_measure(&spec.lambda, &grid)?;
    let mu = project_measure(&spec.mu, &grid)?;
    let (delay_steps, delay_rounding) = match &spec.delay {
        None => (0, 0.0),
        Some(t0) => {
            let t0 = t0.parse::<S>()?.to_f64();
            if t0 < 0.0 {
                return Err(Error::Parse("delay must be nonnegative".into()));
            }
            let steps = (n as f64 * t0).round();
            (steps as usize, n as f64 * t0 - steps)
        }
    };
    let problem = Problem {
        lambda,
        delay: DelaySpec::Deterministic(delay_steps),
        mu,
        time_step: S::from_ratio(1, n as i64),
    };
    let alpha_x = problem.delay_law()?.alpha_x();
    let report = check_convex_order(&alpha_x, &problem.mu)?;
    if !report.ordered {
        return Err(Error::OrderLostInDiscretization {
            site: report.first_violation,
        });
    }
    Ok(DiscreteProblem {
        n,
        kind: spec.kind,
        problem,
        delay_steps,
        delay_rounding,
    })
}

/// A barrier in continuous space-time, one time interval per column.
///
/// A Root column is `[start, ∞)` and a Rost column is `[0, end]`; `time`
/// holds the finite endpoint, `f64::INFINITY` for a Rost column that never
/// stops.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousBarrier {
    pub kind: BarrierKind,
    /// `(physical_x, time)` sorted by position.
    pub columns: Vec<(f64, f64)>,
}

impl ContinuousBarrier {
    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Keep the columns whose position satisfies `keep`.
    pub fn restrict(&self, keep: impl Fn(f64) -> bool) -> Self {
        Self {
            kind: self.kind,
            columns: self.columns.iter().copied().filter(|&(x, _)| keep(x)).collect(),
        }
    }

    /// CSV with columns `physical_x,physical_time`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("physical_x,physical_time\n");
        for (x, t) in &self.columns {
            out.push_str(&format!("{x},{t}\n"));
        }
        out
    }
}

/// `(plus, minus)` barriers of a level-`n` field.
///
/// A Root cell `(t, x)` covers the times `s` with `floor(n s) = t` and a
/// Rost cell those with `ceil(n s) = t`, so a Root column starts at `t / n`
/// for its first cell and a Rost column ends at `t / n` for its last. Column
/// tails decide whether columns continue past the materialized rows.
pub fn continuify_barrier<S: Scalar>(field: &StoppingField<S>, n: u64) -> Result<(ContinuousBarrier, ContinuousBarrier)> {
    if field.time_step() != &S::from_ratio(1, n as i64) {
        return Err(Error::GridMismatch);
    }
    ensure_valid(field)?;
    let h = field.horizon().map_or(0, |h| h + 1);
    let dt = 1.0 / n as f64;
    let mut plus = Vec::new();
    let mut minus = Vec::new();
    for x in field.sites() {
        let pos = field.grid().position(x).to_f64();
        let hits = |pred: &dyn Fn(&S) -> bool| -> Vec<usize> { (0..=h).filter(|&t| pred(&field.get(t, x))).collect() };
        let p = hits(&|r| *r > S::zero());
        let m = hits(&|r| r.is_one());
        match field.kind() {
            BarrierKind::Root => {
                if let Some(&t) = p.first() {
                    plus.push((pos, t as f64 * dt));
                }
                if let Some(&t) = m.first() {
                    minus.push((pos, t as f64 * dt));
                }
            }
            BarrierKind::Rost => {
                let end = |v: &[usize]| match v.last() {
                    Some(&t) if t == h => Some(f64::INFINITY),
                    Some(&t) => Some(t as f64 * dt),
                    None => None,
                };
                if let Some(t) = end(&p) {
                    plus.push((pos, t));
                }
                if let Some(t) = end(&m) {
                    minus.push((pos, t));
                }
            }
        }
    }
    let kind = field.kind();
    Ok((ContinuousBarrier { kind, columns: plus }, ContinuousBarrier { kind, columns: minus }))
}

/// Root's metric between continuous barriers of the same kind: the
/// Hausdorff distance of the images under `(t, x) -> (t/(1+t), x/(1+|x|))`.
///
/// Along a Root column the distance to the other set can only shrink as
/// time grows, and along a Rost column it can only grow, so each column's
/// supremum sits at its finite endpoint.
pub fn barrier_distance(a: &ContinuousBarrier, b: &ContinuousBarrier) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyBarrier);
    }
    if a.kind != b.kind {
        return Err(Error::Unsupported("barriers of different kinds".into()));
    }
    let image = |c: &ContinuousBarrier| -> Vec<(f64, f64)> {
        c.columns
            .iter()
            .map(|&(x, t)| {
                let ct = if t.is_infinite() { 1.0 } else { t / (1.0 + t) };
                (x / (1.0 + x.abs()), ct)
            })
            .collect()
    };
    let (ia, ib) = (image(a), image(b));
    let kind = a.kind;
    let directed = |p: &[(f64, f64)], q: &[(f64, f64)]| {
        p.iter()
            .map(|&(cx, ct)| {
                q.iter()
                    .map(|&(cy, cu)| {
                        let gap = match kind {
                            BarrierKind::Root => (cu - ct).max(0.0),
                            BarrierKind::Rost => (ct - cu).max(0.0),
                        };
                        (cx - cy).hypot(gap)
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    Ok(directed(&ia, &ib).max(directed(&ib, &ia)))
}

/// One level of a convergence experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n: u64,
    pub horizon: usize,
    pub residual: f64,
    pub converged: bool,
    /// `d_R(plus, minus)` at this level.
    pub plus_minus_distance: f64,
    /// `d_R` between this level's and the next level's minus barriers.
    pub d_r_to_next: Option<f64>,
    /// Sup distance of stopped potentials to the next level over the
    /// physical times and the coarsest window.
    pub potential_gap_to_next: Option<f64>,
    /// Largest switching-identity gap over the physical times.
    pub switching_gap: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// Minus barrier of each level.
    pub barriers: Vec<(u64, ContinuousBarrier)>,
}

impl ConvergenceReport {
    /// `d_R` along the levels is strictly decreasing.
    pub fn d_r_decreasing(&self) -> bool {
        let d: Vec<f64> = self.rows.iter().filter_map(|r| r.d_r_to_next).collect();
        d.windows(2).all(|w| w[1] < w[0])
    }

    /// CSV with columns `N,d_R_to_next,potential_gap,switching_gap`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("N,d_R_to_next,potential_gap,switching_gap\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.n,
                opt(r.d_r_to_next),
                opt(r.potential_gap_to_next),
                r.switching_gap
            ));
        }
        out
    }
}

struct Level<S> {
    dp: DiscreteProblem<S>,
    minus: ContinuousBarrier,
    row: ConvergenceRow,
    /// Stopped laws at each physical time.
    laws: Vec<LatticeMeasure<S>>,
}

/// `U_m(y)` at a physical point.
fn physical_potential<S: Scalar>(m: &LatticeMeasure<S>, y: f64) -> f64 {
    let g = m.grid();
    -m.atoms().map(|(x, w)| w.to_f64() * (y - g.position(x).to_f64()).abs()).sum::<f64>()
}

fn run_level<S: Scalar>(
    spec: &ContinuousProblemSpec,
    n: u64,
    times: &[f64],
    opts: &SolverOptions,
    switching_tol: f64,
) -> Result<Level<S>> {
    let dp = discretize::<S>(spec, n)?;
    let steps: Vec<usize> = times.iter().map(|t| (t * n as f64).round() as usize).collect();
    let longest = steps.iter().copied().max().unwrap_or(0);
    let level_opts = SolverOptions {
        min_horizon: opts.min_horizon.max(longest),
        ..opts.clone()
    };
    let sol = solve(&dp.problem, dp.kind, &level_opts)?;
    let (lo, hi) = dp.problem.mu.support_hull().ok_or(Error::EmptyMeasure)?;
    // columns off the target's support never stop any mass
    let g = dp.problem.mu.grid();
    let support: Vec<f64> = dp.problem.mu.atoms().map(|(x, _)| g.position(x).to_f64()).collect();
    let on_support = |x: f64| support.iter().any(|&s| (s - x).abs() < 1e-12);
    let (plus, minus) = continuify_barrier(&sol.field, n)?;
    let (plus, minus) = (plus.restrict(on_support), minus.restrict(on_support));
    let plus_minus_distance = if minus.is_empty() { 0.0 } else { barrier_distance(&plus, &minus)? };
    let window: RangeInclusive<i64> = lo..=hi;
    let mut switching_gap: f64 = 0.0;
    let mut laws = Vec::with_capacity(steps.len());
    for &t in &steps {
        let rep = verify_switching(&dp.problem, dp.kind, &sol.field, t, window.clone(), switching_tol)?;
        switching_gap = switching_gap.max(rep.max_abs_gap);
        laws.push(sol.trace.stopped_law(TimeIndex::At(t))?);
    }
    Ok(Level {
        row: ConvergenceRow {
            n,
            horizon: sol.diagnostics.horizon,
            residual: sol.diagnostics.residual,
            converged: sol.diagnostics.converged,
            plus_minus_distance,
            d_r_to_next: None,
            potential_gap_to_next: None,
            switching_gap,
        },
        dp,
        minus,
        laws,
    })
}

/// Solve at every level, check the switching identities at the physical
/// `times`, and compare consecutive levels.
pub fn convergence_experiment<S: Scalar>(
    spec: &ContinuousProblemSpec,
    ns: &[u64],
    times: &[f64],
    opts: &SolverOptions,
    switching_tol: f64,
) -> Result<ConvergenceReport> {
    let levels: Vec<Level<S>> = ns
        .par_iter()
        .map(|&n| run_level::<S>(spec, n, times, opts, switching_tol))
        .collect::<Result<_>>()?;
    let coarse = levels.first().map(|l| {
        let (lo, hi) = l.dp.problem.mu.support_hull().expect("nonempty target");
        let g = l.dp.problem.mu.grid();
        ((lo - 2)..=(hi + 2)).map(|x| g.position(x).to_f64()).collect::<Vec<_>>()
    });
    let mut rows: Vec<ConvergenceRow> = levels.iter().map(|l| l.row.clone()).collect();
    for i in 0..levels.len().saturating_sub(1) {
        let (a, b) = (&levels[i], &levels[i + 1]);
        if !a.minus.is_empty() && !b.minus.is_empty() {
            rows[i].d_r_to_next = Some(barrier_distance(&a.minus, &b.minus)?);
        }
        let points = coarse.as_deref().unwrap_or(&[]);
        let gap = a
            .laws
            .iter()
            .zip(&b.laws)
            .flat_map(|(la, lb)| points.iter().map(move |&y| (physical_potential(la, y) - physical_potential(lb, y)).abs()))
            .fold(0.0, f64::max);
        rows[i].potential_gap_to_next = Some(gap);
    }
    Ok(ConvergenceReport {
        rows,
        barriers: levels.into_iter().map(|l| (l.dp.n, l.minus)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    type Q = Rational;

    fn q(n: i64, d: i64) -> Q {
        Q::from_ratio(n, d)
    }

    fn atoms(a: &[(f64, f64)]) -> ContinuousMeasure {
        ContinuousMeasure::Atoms(a.iter().map(|&(x, w)| (x.into(), w.into())).collect())
    }

    fn uniform_spec(kind: BarrierKind) -> ContinuousProblemSpec {
        ContinuousProblemSpec {
            lambda: atoms(&[(0.0, 1.0)]),
            mu: ContinuousMeasure::Uniform { a: (-2.0).into(), b: 2.0.into() },
            delay: None,
            kind,
        }
    }

    #[test]
    fn atoms_on_grid_are_kept() {
        let grid = Grid::new(q(1, 2), q(0, 1)).unwrap();
        let m = project_measure::<Q>(&atoms(&[(-1.0, 0.5), (0.5, 0.5)]), &grid).unwrap();
        assert_eq!(m, LatticeMeasure::from_atoms(grid, [(-2, q(1, 2)), (1, q(1, 2))]).unwrap());
    }

    #[test]
    fn off_grid_atom_splits() {
        let m = project_measure::<Q>(&atoms(&[(0.3, 1.0)]), &Grid::unit()).unwrap();
        assert_eq!(m, LatticeMeasure::from_atoms(Grid::unit(), [(0, q(7, 10)), (1, q(3, 10))]).unwrap());
        let neg = project_measure::<Q>(&atoms(&[(-0.25, 1.0)]), &Grid::unit()).unwrap();
        assert_eq!(neg.summary().mean, Some(q(-1, 4)));
    }

    #[test]
    fn uniform_binning() {
        let dp = discretize::<Q>(&uniform_spec(BarrierKind::Root), 4).unwrap();
        let mu = &dp.problem.mu;
        assert_eq!(mu.total_mass(), q(1, 1));
        assert_eq!(mu.summary().mean, Some(q(0, 1)));
        assert_eq!(mu.mass_at(-4), q(1, 16));
        assert_eq!(mu.mass_at(4), q(1, 16));
        for x in -3..=3 {
            assert_eq!(mu.mass_at(x), q(1, 8));
        }
        assert_eq!(dp.problem.time_step, q(1, 4));
    }

    #[test]
    fn partial_cells_preserve_mean() {
        let spec = ContinuousMeasure::Uniform { a: (-0.3).into(), b: 1.1.into() };
        let m = project_measure::<Q>(&spec, &Grid::new(q(1, 2), q(0, 1)).unwrap()).unwrap();
        assert_eq!(m.total_mass(), q(1, 1));
        assert_eq!(m.summary().mean, Some(q(2, 5)));
    }

    #[test]
    fn rational_needs_perfect_square() {
        assert!(matches!(discretize::<Q>(&uniform_spec(BarrierKind::Root), 8), Err(Error::Unsupported(_))));
        assert!(discretize::<f64>(&uniform_spec(BarrierKind::Root), 8).is_ok());
    }

    #[test]
    fn order_loss_is_reported() {
        let spec = ContinuousProblemSpec {
            lambda: atoms(&[(-1.0, 0.5), (1.0, 0.5)]),
            mu: atoms(&[(0.0, 1.0)]),
            delay: None,
            kind: BarrierKind::Root,
        };
        assert!(matches!(discretize::<Q>(&spec, 1), Err(Error::OrderLostInDiscretization { .. })));
    }

    #[test]
    fn delay_rounds_to_steps() {
        let mut spec = uniform_spec(BarrierKind::Root);
        spec.delay = Some(0.3.into());
        let dp = discretize::<f64>(&spec, 16).unwrap();
        assert_eq!(dp.delay_steps, 5);
        assert!((dp.delay_rounding + 0.2).abs() < 1e-12);
    }

    #[test]
    fn continuified_cells() {
        let grid = Grid::new(q(1, 2), q(0, 1)).unwrap();
        let f = StoppingField::from_fn(BarrierKind::Root, grid.clone(), q(1, 4), 0..=0, 2, |t, _| if t == 2 { q(1, 1) } else { q(0, 1) })
            .with_natural_tails();
        let (plus, minus) = continuify_barrier(&f, 4).unwrap();
        assert_eq!(minus.columns, vec![(0.0, 0.5)]);
        assert_eq!(plus, minus);
        let empty = StoppingField::from_fn(BarrierKind::Root, grid, q(1, 4), 0..=0, 2, |_, _| q(0, 1));
        assert!(continuify_barrier(&empty, 4).unwrap().0.is_empty());
        assert!(continuify_barrier(&f, 16).is_err());

        let dp = discretize::<Q>(&uniform_spec(BarrierKind::Root), 4).unwrap();
        let sol = solve(&dp.problem, BarrierKind::Root, &SolverOptions::with_tol(0.0)).unwrap();
        let (plus, minus) = continuify_barrier(&sol.field, 4).unwrap();
        assert!(barrier_distance(&plus, &minus).unwrap() <= 0.25 + 1e-12);
    }

    /// Hausdorff distance of densely sampled compactified columns.
    fn sampled_distance(a: &ContinuousBarrier, b: &ContinuousBarrier) -> f64 {
        let sample = |c: &ContinuousBarrier| -> Vec<(f64, f64)> {
            let mut pts = Vec::new();
            for &(x, t) in &c.columns {
                let cx = x / (1.0 + x.abs());
                let ct = if t.is_infinite() { 1.0 } else { t / (1.0 + t) };
                let (lo, hi) = match c.kind {
                    BarrierKind::Root => (ct, 1.0),
                    BarrierKind::Rost => (0.0, ct),
                };
                for i in 0..=2000 {
                    pts.push((cx, lo + (hi - lo) * i as f64 / 2000.0));
                }
            }
            pts
        };
        let (pa, pb) = (sample(a), sample(b));
        let directed = |p: &[(f64, f64)], q: &[(f64, f64)]| {
            p.iter()
                .map(|&(x, t)| q.iter().map(|&(y, u)| (x - y).hypot(t - u)).fold(f64::INFINITY, f64::min))
                .fold(0.0, f64::max)
        };
        directed(&pa, &pb).max(directed(&pb, &pa))
    }

    #[test]
    fn barrier_distance_matches_sampling() {
        let cases = [
            (vec![(0.0, 1.0), (1.0, 0.25)], vec![(0.0, 3.0), (0.5, 0.0)]),
            (vec![(-1.0, 0.0)], vec![(1.0, 2.0), (-1.0, 5.0)]),
            (vec![(0.0, 0.5), (0.5, f64::INFINITY)], vec![(0.0, 4.0)]),
        ];
        for kind in [BarrierKind::Root, BarrierKind::Rost] {
            for (a, b) in &cases {
                let a = ContinuousBarrier { kind, columns: a.clone() };
                let b = ContinuousBarrier { kind, columns: b.clone() };
                let exact = barrier_distance(&a, &b).unwrap();
                assert!((exact - sampled_distance(&a, &b)).abs() < 1e-3, "{kind} {exact}");
                assert_eq!(barrier_distance(&a, &a).unwrap(), 0.0);
            }
        }
        let e = ContinuousBarrier { kind: BarrierKind::Root, columns: vec![] };
        assert!(matches!(barrier_distance(&e, &e), Err(Error::EmptyBarrier)));
    }

    #[test]
    fn identical_laws_give_immediate_barriers() {
        let spec = ContinuousProblemSpec {
            lambda: atoms(&[(-0.5, 0.5), (0.5, 0.5)]),
            mu: atoms(&[(-0.5, 0.5), (0.5, 0.5)]),
            delay: None,
            kind: BarrierKind::Root,
        };
        let rep = convergence_experiment::<f64>(&spec, &[4, 16, 64], &[0.5], &SolverOptions::default(), 1e-9).unwrap();
        for (_, b) in &rep.barriers {
            assert!(b.columns.iter().all(|&(_, t)| t == 0.0));
        }
        assert_eq!(rep.rows[0].d_r_to_next, Some(0.0));
        assert_eq!(rep.rows[1].d_r_to_next, Some(0.0));
    }

    #[test]
    fn small_rost_trend() {
        let rep = convergence_experiment::<f64>(&uniform_spec(BarrierKind::Rost), &[4, 16, 64], &[0.5], &SolverOptions::default(), 1e-9)
            .unwrap();
        assert!(rep.d_r_decreasing(), "{:?}", rep.rows);
        assert!(rep.rows.iter().all(|r| r.switching_gap <= 1e-9));
    }

    #[test]
    fn small_root_trend() {
        let rep = convergence_experiment::<f64>(&uniform_spec(BarrierKind::Root), &[4, 16, 64], &[0.5, 1.0], &SolverOptions::default(), 1e-9)
            .unwrap();
        assert!(rep.d_r_decreasing(), "{:?}", rep.rows);
        for r in &rep.rows {
            assert!(r.switching_gap <= 1e-9);
            assert!(r.plus_minus_distance <= 1.0 / r.n as f64 + 1e-12);
        }
        assert!(rep.to_csv().starts_with("N,d_R_to_next,potential_gap,switching_gap\n"));
    }

    #[test]
    fn spec_json_round_trip() {
        let text = r#"{"lambda":{"atoms":[[0,1]]},"mu":{"uniform":{"a":"-2","b":2}},"kind":"rost"}"#;
        let spec: ContinuousProblemSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec.kind, BarrierKind::Rost);
        assert!(spec.delay.is_none());
        let back: ContinuousProblemSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
    }
}
