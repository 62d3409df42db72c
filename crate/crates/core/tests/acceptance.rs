//! Acceptance run: one PASS/FAIL line per criterion.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skorokhod::fields::{reverse_field, validate_field};
use skorokhod::mc::{simulate, tv_distance};
use skorokhod::multimarginal::{diff_against_field, interpolating_potentials, recover_barriers, solve_chain};
use skorokhod::osp::{compare_stop_region, core_identity, interpolation_profile, osp_value_rost, verify_switching};
use skorokhod::scaling::{convergence_experiment, ContinuousMeasure, ContinuousProblemSpec};
use skorokhod::{
    extract_barriers, solve, BarrierKind, DelayLaw, DelaySpec, Grid, LatticeMeasure, Problem, Rational, Scalar,
    SolverOptions, SpaceTimeMeasure, StoppingField, TimeIndex,
};

type Q = Rational;

fn q(n: i64, d: i64) -> Q {
    Q::from_ratio(n, d)
}

fn unit() -> Grid<Q> {
    Grid::unit()
}

fn d0() -> LatticeMeasure<Q> {
    LatticeMeasure::dirac(unit(), 0)
}

fn paper_mu() -> LatticeMeasure<Q> {
    LatticeMeasure::uniform(unit(), &[-2, 0, 2])
}

struct Outcome {
    pass: bool,
    /// A failure that follows from the mathematics rather than the code.
    known: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, known: false, detail }
    }
}

fn random_law(rng: &mut ChaCha8Rng, sites: std::ops::RangeInclusive<i64>, max_atoms: usize) -> LatticeMeasure<Q> {
    let n = rng.random_range(1..=max_atoms);
    let mut weights = BTreeMap::new();
    while weights.len() < n {
        weights.insert(rng.random_range(sites.clone()), rng.random_range(1..=3i64));
    }
    let total: i64 = weights.values().sum();
    LatticeMeasure::from_atoms(unit(), weights.into_iter().map(|(x, w)| (x, q(w, total)))).unwrap()
}

/// A start law, a delay with at most three space-time atoms and a target
/// obtained from the released law by mean-preserving spreads inside
/// `[-6, 6]`.
fn random_problem(rng: &mut ChaCha8Rng) -> Problem<Q> {
    let lambda = random_law(rng, -2..=2, 3);
    let delay = if lambda.len() == 1 {
        let x0 = lambda.atoms().next().unwrap().0;
        match rng.random_range(0..4) {
            0 => DelaySpec::none(),
            1 => DelaySpec::Deterministic(1),
            2 => DelaySpec::Deterministic(2),
            _ => {
                let p = q(1, rng.random_range(2..=4));
                let half = (q(1, 1) - p.clone()) * q(1, 2);
                let entries = [((0, x0), p), ((1, x0 - 1), half.clone()), ((1, x0 + 1), half)];
                DelaySpec::ExplicitSpaceTime(SpaceTimeMeasure::from_entries(unit(), q(1, 1), entries).unwrap())
            }
        }
    } else {
        DelaySpec::none()
    };
    let alpha_x = DelayLaw::resolve(&lambda, &delay, &q(1, 1)).unwrap().alpha_x();
    let mut mass: BTreeMap<i64, Q> = alpha_x.atoms().map(|(x, m)| (x, m.clone())).collect();
    for _ in 0..rng.random_range(1..=4) {
        let atoms: Vec<_> = mass.keys().copied().collect();
        let x = atoms[rng.random_range(0..atoms.len())];
        let d = rng.random_range(1..=2);
        if x - d < -6 || x + d > 6 {
            continue;
        }
        let f = [q(1, 1), q(1, 2), q(1, 3)][rng.random_range(0..3)].clone();
        let moved = mass[&x].clone() * f;
        *mass.get_mut(&x).unwrap() -= moved.clone();
        for y in [x - d, x + d] {
            *mass.entry(y).or_insert_with(|| q(0, 1)) += moved.clone() * q(1, 2);
        }
        mass.retain(|_, m| !m.is_zero());
    }
    let mu = LatticeMeasure::from_atoms(unit(), mass).unwrap();
    Problem::new(lambda, mu).with_delay(delay)
}

#[derive(Default)]
struct Harness {
    instances: usize,
    rational_fail: usize,
    float_fail: usize,
    float_max_gap: f64,
    lt_rational: usize,
    lt_rational_fail: usize,
    lt_float: usize,
    lt_float_max: f64,
    reversed: usize,
    reversed_invalid: usize,
    stop_violations: usize,
    stop_cells: usize,
    elapsed: Duration,
}

fn local_time_gap<S: Scalar>(p: &Problem<S>, sol: &skorokhod::Solution<S>, window: std::ops::RangeInclusive<i64>) -> (bool, f64) {
    let alpha_x = sol.trace.delay().alpha_x();
    let mut exact = true;
    let mut gap: f64 = 0.0;
    for y in window {
        let d = sol.trace.local_time_at(sol.trace.horizon(), y) - (alpha_x.potential_at(y) - p.mu.potential_at(y));
        exact &= d.is_zero();
        gap = gap.max(d.abs().to_f64());
    }
    (exact, gap)
}

fn rost_symmetry<S: Scalar>(h: &mut Harness, p: &Problem<S>, field: &StoppingField<S>, t: usize, window: std::ops::RangeInclusive<i64>, tol: f64) {
    let rev = reverse_field(field, t).unwrap();
    h.reversed += 1;
    h.reversed_invalid += usize::from(!validate_field(&rev).valid);
    let grid = osp_value_rost(&p.delay_law().unwrap(), &p.mu, t, window).unwrap();
    let rep = compare_stop_region(&grid, &rev, tol);
    h.stop_violations += rep.violations.len();
    h.stop_cells += rep.checked;
}

fn run_harness(kind: BarrierKind, n: usize, seed: u64) -> Harness {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = Harness::default();
    let start = Instant::now();
    for _ in 0..n {
        let p = random_problem(&mut rng);
        let t = rng.random_range(0..=12usize);
        let window = p.mu.padded_window(2).unwrap();
        h.instances += 1;

        let opts = SolverOptions {
            tol: 0.0,
            max_horizon: Some(t.max(48)),
            min_horizon: t,
        };
        let sol = solve(&p, kind, &opts).unwrap();
        let rep = verify_switching(&p, kind, &sol.field, t, window.clone(), 0.0).unwrap();
        h.rational_fail += usize::from(!rep.pass);
        match kind {
            BarrierKind::Root if sol.trace.residual().is_zero() => {
                h.lt_rational += 1;
                h.lt_rational_fail += usize::from(!local_time_gap(&p, &sol, window.clone()).0);
            }
            BarrierKind::Rost => rost_symmetry(&mut h, &p, &sol.field, t, window.clone(), 0.0),
            _ => {}
        }

        let pf = p.to_f64().unwrap();
        let opts = SolverOptions {
            tol: 1e-12,
            max_horizon: None,
            min_horizon: t,
        };
        let sol = solve(&pf, kind, &opts).unwrap();
        let rep = verify_switching(&pf, kind, &sol.field, t, window.clone(), 1e-10).unwrap();
        h.float_fail += usize::from(!rep.pass);
        h.float_max_gap = h.float_max_gap.max(rep.max_abs_gap);
        match kind {
            BarrierKind::Root if sol.diagnostics.converged => {
                h.lt_float += 1;
                h.lt_float_max = h.lt_float_max.max(local_time_gap(&pf, &sol, window).1);
            }
            BarrierKind::Rost => rost_symmetry(&mut h, &pf, &sol.field, t, window, 1e-10),
            _ => {}
        }
    }
    h.elapsed = start.elapsed();
    h
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let sol = solve(&Problem::new(d0(), paper_mu()), BarrierKind::Root, &SolverOptions::with_tol(0.0)).unwrap();
    let elapsed = start.elapsed();
    let r = sol.field.get(2, 0);
    let ok = r == q(1, 3)
        && sol.diagnostics.horizon == 4
        && sol.trace.residual().is_zero()
        && sol.trace.stopped_law(TimeIndex::Infinity).unwrap() == paper_mu()
        && elapsed < Duration::from_secs(1);
    Outcome::new(ok, format!("r_2(0) = {r}, horizon {}, residual {}, {elapsed:.2?}", sol.diagnostics.horizon, sol.trace.residual()))
}

fn harness_outcome(h: &Harness) -> Outcome {
    let ok = h.rational_fail == 0 && h.float_fail == 0 && h.float_max_gap <= 1e-10 && h.elapsed < Duration::from_secs(60);
    Outcome::new(
        ok,
        format!(
            "{} instances, rational failures {}, float failures {}, max float gap {:.1e}, {:.1?}",
            h.instances, h.rational_fail, h.float_fail, h.float_max_gap, h.elapsed
        ),
    )
}

fn criterion_3(h: &Harness) -> Outcome {
    let mu = LatticeMeasure::from_atoms(unit(), [(-2, q(1, 4)), (0, q(1, 2)), (2, q(1, 4))]).unwrap();
    let p = Problem::new(d0(), mu.clone());
    let opts = SolverOptions {
        tol: 0.0,
        max_horizon: Some(8),
        min_horizon: 2,
    };
    let sol = solve(&p, BarrierKind::Rost, &opts).unwrap();
    let grid = osp_value_rost(&p.delay_law().unwrap(), &mu, 2, -4..=4).unwrap();
    let dp = grid.value(0, 0).unwrap().clone();
    // by hand: half stops at once, the rest spreads over {-2, 0, 2} by T = 2
    let beta_2 = LatticeMeasure::from_atoms(unit(), [(-2, q(1, 8)), (0, q(3, 4)), (2, q(1, 8))]).unwrap();
    let oracle = mu.potential_at(0) - beta_2.potential_at(0);
    let fwd = sol.trace.stopped_law(TimeIndex::At(2)).unwrap();
    let hand = dp == q(-1, 2) && oracle == q(-1, 2) && fwd == beta_2;
    let base = harness_outcome(h);
    Outcome::new(base.pass && hand, format!("{}; hand instance value {dp}", base.detail))
}

fn criterion_4(root: &Harness) -> Outcome {
    let ok = root.lt_rational > 0 && root.lt_rational_fail == 0 && root.lt_float > 0 && root.lt_float_max <= 1e-9;
    Outcome::new(
        ok,
        format!(
            "{} exact rational runs with {} mismatches, {} converged float runs with max gap {:.1e}",
            root.lt_rational, root.lt_rational_fail, root.lt_float, root.lt_float_max
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut bad = 0;
    for _ in 0..50 {
        let x = random_law(&mut rng, -4..=4, 3);
        let y = random_law(&mut rng, -4..=4, 3);
        let t = rng.random_range(0..=16);
        let seq = core_identity(&x, &y, t).unwrap();
        bad += usize::from(seq.iter().any(|v| *v != seq[0]));
    }
    Outcome::new(bad == 0, format!("50 pairs, {bad} with nonzero spread"))
}

/// Root field on `-8..=8` whose columns fire at a random row with a random
/// first probability.
fn random_root_field(rng: &mut ChaCha8Rng, rows: usize) -> StoppingField<Q> {
    let mut fire = BTreeMap::new();
    for x in -8..=8i64 {
        let t = rng.random_range(0..=rows + 1);
        let first = [q(1, 1), q(1, 2), q(1, 3), q(2, 5)][rng.random_range(0..4)].clone();
        fire.insert(x, (t, first));
    }
    StoppingField::from_fn(BarrierKind::Root, unit(), q(1, 1), -8..=8, rows, |t, x| {
        let (f, first) = &fire[&x];
        match t.cmp(f) {
            std::cmp::Ordering::Less => q(0, 1),
            std::cmp::Ordering::Equal => first.clone(),
            std::cmp::Ordering::Greater => q(1, 1),
        }
    })
    .with_natural_tails()
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut decreasing = 0;
    let mut not_constant = 0;
    let mut float_spread: f64 = 0.0;
    for _ in 0..100 {
        let rows = rng.random_range(2..=10);
        let sigma = random_root_field(&mut rng, rows);
        let other = random_root_field(&mut rng, rows);
        let lambda = random_law(&mut rng, -2..=2, 2);
        let delay = DelaySpec::Deterministic(rng.random_range(0..=2));
        let y = random_law(&mut rng, -3..=3, 2);
        let t = rng.random_range(0..=rows);
        let f = interpolation_profile(&lambda, &delay, &sigma, &other, &y, t).unwrap();
        decreasing += usize::from(f.windows(2).any(|w| w[1] < w[0]));
        let f = interpolation_profile(&lambda, &delay, &sigma, &sigma, &y, t).unwrap();
        not_constant += usize::from(f.iter().any(|v| *v != f[0]));
        let sf = sigma.to_f64();
        let ff = interpolation_profile(&lambda.to_f64(), &DelaySpec::Deterministic(delay_steps(&delay)), &sf, &sf, &y.to_f64(), t).unwrap();
        let (lo, hi) = ff.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        float_spread = float_spread.max(hi - lo);
    }
    Outcome::new(
        decreasing == 0 && not_constant == 0 && float_spread <= 1e-10,
        format!("100 pairs: {decreasing} decreasing profiles, {not_constant} non-constant Root/Root profiles, float spread {float_spread:.1e}"),
    )
}

fn delay_steps(d: &DelaySpec<Q>) -> usize {
    match d {
        DelaySpec::Deterministic(t) => *t,
        _ => unreachable!(),
    }
}

fn criterion_7(rost: &Harness) -> Outcome {
    let ok = rost.reversed > 0 && rost.reversed_invalid == 0 && rost.stop_violations == 0;
    Outcome::new(
        ok,
        format!(
            "{} reversed fields, {} invalid, {} stop-region violations over {} cells",
            rost.reversed, rost.reversed_invalid, rost.stop_violations, rost.stop_cells
        ),
    )
}

fn criterion_8() -> Outcome {
    let sol = solve(&Problem::new(d0(), paper_mu()), BarrierKind::Root, &SolverOptions::with_tol(0.0)).unwrap();
    let n = 200_000;
    let seed = 20_240_601;
    let cap = sol.diagnostics.horizon;
    let a = simulate(&d0(), &DelaySpec::none(), &sol.field, n, seed, cap).unwrap();
    let b = simulate(&d0(), &DelaySpec::none(), &sol.field, n, seed, cap).unwrap();
    let tv = tv_distance(&a, &paper_mu());
    let identical = a == b;
    // a path that never moves is the only one the sgn(0) = +1 form accepts
    let idle: u64 = a.counts.iter().filter(|((t, _), _)| *t == 0).map(|(_, c)| *c).sum();
    let moved = n - idle - a.censored;
    let attainable = tv <= 0.01 && identical && a.tanaka_failures_sgn_zero == 0;
    let plus_ok = a.tanaka_failures_sgn_plus == 0;
    let detail = format!(
        "TV {tv:.5}, reruns identical: {identical}, sgn(0)=0 failures {}, sgn(0)=+1 failures {} of {n} paths",
        a.tanaka_failures_sgn_zero, a.tanaka_failures_sgn_plus
    );
    if plus_ok {
        return Outcome::new(attainable, detail);
    }
    Outcome {
        pass: false,
        known: attainable && a.tanaka_failures_sgn_plus == moved,
        detail: format!(
            "{detail}; with sgn(0)=+1 a step from x adds 1 - xi instead of 1 to |X - x|, so every path that moves breaks it"
        ),
    }
}

fn criterion_9() -> Outcome {
    let measures = vec![LatticeMeasure::uniform(unit(), &[-1, 1]), paper_mu()];
    let tmax = 8;
    let opts = SolverOptions {
        tol: 0.0,
        max_horizon: None,
        min_horizon: tmax,
    };
    let chain = solve_chain(&d0(), &DelaySpec::none(), &measures, BarrierKind::Root, &q(1, 1), &opts).unwrap();
    let family = interpolating_potentials(&chain, -4..=4, tmax).unwrap();
    let sets = recover_barriers(&family, BarrierKind::Root, 0.0);
    let mut ok = chain.converged() && sets.len() == 2;
    let mut parts = Vec::new();
    for (k, set) in sets.iter().enumerate() {
        let diff = diff_against_field(k + 1, set, &chain.stages[k].field);
        ok &= diff.within_band();
        parts.push(format!(
            "stage {}: {} cells, {} recovered-only, {} solver-only, {} outside band",
            k + 1,
            set.len(),
            diff.recovered_only.len(),
            diff.solver_only.len(),
            diff.outside_band.len()
        ));
    }
    let stage2 = &chain.stages[1].field;
    let (plus, minus) = extract_barriers(stage2).unwrap();
    ok &= stage2.get(2, 0) == q(1, 3) && plus.contains(2, 0) && !minus.contains(2, 0);
    Outcome::new(ok, parts.join("; "))
}

fn criterion_10() -> Outcome {
    let spec = ContinuousProblemSpec {
        lambda: ContinuousMeasure::Atoms(vec![(0.0.into(), 1.0.into())]),
        mu: ContinuousMeasure::Uniform {
            a: (-2.0).into(),
            b: 2.0.into(),
        },
        delay: None,
        kind: BarrierKind::Root,
    };
    let start = Instant::now();
    let report =
        convergence_experiment::<f64>(&spec, &[4, 16, 64, 256], &[0.5, 1.0], &SolverOptions::with_tol(1e-12), 1e-9).unwrap();
    let elapsed = start.elapsed();
    let d: Vec<String> = report.rows.iter().filter_map(|r| r.d_r_to_next).map(|v| format!("{v:.4}")).collect();
    let max_gap = report.rows.iter().map(|r| r.switching_gap).fold(0.0, f64::max);
    let ok = report.d_r_decreasing()
        && d.len() == 3
        && max_gap <= 1e-9
        && report.rows.iter().all(|r| r.converged)
        && elapsed < Duration::from_secs(600);
    Outcome::new(ok, format!("d_R {}, max switching gap {max_gap:.1e}, {elapsed:.2?}", d.join(" > ")))
}

fn main() -> ExitCode {
    let root = run_harness(BarrierKind::Root, 200, 2);
    let rost = run_harness(BarrierKind::Rost, 200, 3);
    let outcomes = [
        criterion_1(),
        harness_outcome(&root),
        criterion_3(&rost),
        criterion_4(&root),
        criterion_5(),
        criterion_6(),
        criterion_7(&rost),
        criterion_8(),
        criterion_9(),
        criterion_10(),
    ];
    let mut unexpected = 0;
    for (i, o) in outcomes.iter().enumerate() {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let note = if o.known { " (not attainable)" } else { "" };
        println!("criterion {:>2}: {tag}{note}  {}", i + 1, o.detail);
        unexpected += usize::from(!o.pass && !o.known);
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
