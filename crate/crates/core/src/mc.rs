//! Seeded Monte Carlo simulation of field stopping on walk paths.
//!
//! Path `i` draws from a ChaCha8 stream selected by `(seed, i)`, so results
//! do not depend on thread count or scheduling. Waiting walks are released
//! at `(t, x)` with probability `alpha_t(x) / (alpha_t(x) + g_t(x))`, where
//! `g_t` is the waiting mass after release; this reproduces the law of
//! `(eta, X_eta)`. A released walk at `(t, x)` stops when a fresh uniform
//! draw falls below `r_t(x)`.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{ensure_valid, StoppingField};
use crate::forward::{propagate_law, DelayLaw, DelaySpec, TimeIndex};
use crate::measures::LatticeMeasure;
use crate::scalar::Scalar;

const PATHS_PER_TASK: usize = 4096;

/// Tallies of a simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalResult {
    pub n_paths: u64,
    pub seed: u64,
    pub cap: usize,
    /// Paths stopped at `(t, site)`.
    pub counts: BTreeMap<(usize, i64), u64>,
    /// Paths still alive after row `cap`, waiting or free.
    pub censored: u64,
    /// Visits to each site between release and stop, summed over paths.
    pub visit_sums: BTreeMap<i64, u64>,
    /// Per-site sums of squared per-path visit counts.
    pub visit_sq_sums: BTreeMap<i64, u64>,
    /// Paths on which the discrete Tanaka identity fails for some site with
    /// `sgn(0) = 0`.
    pub tanaka_failures_sgn_zero: u64,
    /// Same with `sgn(0) = +1`.
    pub tanaka_failures_sgn_plus: u64,
    /// Grid spacing; visit counts times spacing are local times.
    pub spacing: f64,
}

impl EmpiricalResult {
    fn empty(n_paths: u64, seed: u64, cap: usize, spacing: f64) -> Self {
        Self {
            n_paths,
            seed,
            cap,
            counts: BTreeMap::new(),
            censored: 0,
            visit_sums: BTreeMap::new(),
            visit_sq_sums: BTreeMap::new(),
            tanaka_failures_sgn_zero: 0,
            tanaka_failures_sgn_plus: 0,
            spacing,
        }
    }

    fn merge(mut self, other: Self) -> Self {
        for (k, v) in other.counts {
            *self.counts.entry(k).or_default() += v;
        }
        for (k, v) in other.visit_sums {
            *self.visit_sums.entry(k).or_default() += v;
        }
        for (k, v) in other.visit_sq_sums {
            *self.visit_sq_sums.entry(k).or_default() += v;
        }
        self.censored += other.censored;
        self.tanaka_failures_sgn_zero += other.tanaka_failures_sgn_zero;
        self.tanaka_failures_sgn_plus += other.tanaka_failures_sgn_plus;
        self
    }

    pub fn stopped_paths(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn censored_fraction(&self) -> f64 {
        if self.n_paths == 0 {
            0.0
        } else {
            self.censored as f64 / self.n_paths as f64
        }
    }

    /// Stopped paths per site.
    pub fn spatial_counts(&self) -> BTreeMap<i64, u64> {
        let mut out = BTreeMap::new();
        for (&(_, x), &c) in &self.counts {
            *out.entry(x).or_default() += c;
        }
        out
    }

    /// CSV with columns `t,site,count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,site,count\n");
        for ((t, x), c) in &self.counts {
            out.push_str(&format!("{t},{x},{c}\n"));
        }
        out
    }
}

struct Sampler {
    start_sites: Vec<i64>,
    start_cdf: Vec<f64>,
    /// Release probability of a waiting walk; 1 past the last release.
    release: HashMap<(usize, i64), f64>,
    last_release: usize,
    stop: Vec<Vec<f64>>,
    lo: i64,
    tails: Vec<f64>,
}

impl Sampler {
    fn new<S: Scalar>(law: &DelayLaw<S>, field: &StoppingField<S>, cap: usize) -> Self {
        let mut start_sites = Vec::new();
        let mut start_cdf = Vec::new();
        let mut acc = 0.0;
        for (x, m) in law.lambda().atoms() {
            acc += m.to_f64();
            start_sites.push(x);
            start_cdf.push(acc);
        }
        let mut release = HashMap::new();
        for ((t, x), a) in law.alpha().entries() {
            let a = a.to_f64();
            let g = law.pending(t).mass_at(x).to_f64();
            release.insert((t, x), if a + g > 0.0 { a / (a + g) } else { 1.0 });
        }
        let stop = (0..=cap)
            .map(|t| field.sites().map(|x| field.get(t, x).to_f64()).collect())
            .collect();
        let tails = field.sites().map(|x| field.get(cap + 1, x).to_f64()).collect();
        Self {
            start_sites,
            start_cdf,
            release,
            last_release: law.max_time(),
            stop,
            lo: *field.sites().start(),
            tails,
        }
    }

    fn start(&self, u: f64) -> i64 {
        let total = *self.start_cdf.last().expect("nonempty start law");
        let i = self.start_cdf.partition_point(|&c| c <= u * total);
        self.start_sites[i.min(self.start_sites.len() - 1)]
    }

    fn release_prob(&self, t: usize, x: i64) -> f64 {
        if t >= self.last_release {
            return 1.0;
        }
        self.release.get(&(t, x)).copied().unwrap_or(0.0)
    }

    fn stop_prob(&self, t: usize, x: i64) -> f64 {
        let Ok(i) = usize::try_from(x - self.lo) else {
            return 0.0;
        };
        match self.stop.get(t) {
            Some(row) => row.get(i).copied().unwrap_or(0.0),
            None => self.tails.get(i).copied().unwrap_or(0.0),
        }
    }
}

/// Check `L^x = |X_n - x| - |X_0 - x| - Σ sgn(X_s - x) ξ_{s+1}` for every
/// site touched by the path; `sgn_zero` is the value used at 0.
fn tanaka_holds(path: &[i64], sgn_zero: i64) -> bool {
    let (Some(&first), Some(&last)) = (path.first(), path.last()) else {
        return true;
    };
    let lo = *path.iter().min().expect("nonempty") - 1;
    let hi = *path.iter().max().expect("nonempty") + 1;
    (lo..=hi).all(|x| {
        let visits = path[..path.len() - 1].iter().filter(|&&p| p == x).count() as i64;
        let mut martingale = 0i64;
        for w in path.windows(2) {
            let d = w[0] - x;
            let sign = if d == 0 { sgn_zero } else { d.signum() };
            martingale += sign * (w[1] - w[0]);
        }
        visits == (last - x).abs() - (first - x).abs() - martingale
    })
}

fn simulate_path(sampler: &Sampler, seed: u64, index: u64, cap: usize, out: &mut EmpiricalResult) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mut x = sampler.start(rng.random::<f64>());
    let mut t = 0usize;
    loop {
        if rng.random::<f64>() < sampler.release_prob(t, x) {
            break;
        }
        if t == cap {
            out.censored += 1;
            return;
        }
        x += if rng.random::<bool>() { 1 } else { -1 };
        t += 1;
    }
    let mut path = vec![x];
    let mut visits: BTreeMap<i64, u64> = BTreeMap::new();
    let stopped = loop {
        if rng.random::<f64>() < sampler.stop_prob(t, x) {
            break true;
        }
        *visits.entry(x).or_default() += 1;
        if t == cap {
            break false;
        }
        x += if rng.random::<bool>() { 1 } else { -1 };
        t += 1;
        path.push(x);
    };
    if stopped {
        *out.counts.entry((t, x)).or_default() += 1;
    } else {
        out.censored += 1;
    }
    for (site, v) in visits {
        *out.visit_sums.entry(site).or_default() += v;
        *out.visit_sq_sums.entry(site).or_default() += v * v;
    }
    out.tanaka_failures_sgn_zero += u64::from(!tanaka_holds(&path, 0));
    out.tanaka_failures_sgn_plus += u64::from(!tanaka_holds(&path, 1));
}

/// Simulate `n_paths` walks started from `lambda`, released by `delay` and
/// stopped by `field`, for rows `0..=cap`.
pub fn simulate<S: Scalar>(
    lambda: &LatticeMeasure<S>,
    delay: &DelaySpec<S>,
    field: &StoppingField<S>,
    n_paths: u64,
    seed: u64,
    cap: usize,
) -> Result<EmpiricalResult> {
    if lambda.grid() != field.grid() {
        return Err(Error::GridMismatch);
    }
    ensure_valid(field)?;
    let law = DelayLaw::resolve(lambda, delay, field.time_step())?;
    let spacing = lambda.grid().spacing.to_f64();
    let sampler = Sampler::new(&law, field, cap);
    let tasks = n_paths.div_ceil(PATHS_PER_TASK as u64);
    let result = (0..tasks)
        .into_par_iter()
        .map(|task| {
            let mut part = EmpiricalResult::empty(0, seed, cap, spacing);
            let start = task * PATHS_PER_TASK as u64;
            let end = (start + PATHS_PER_TASK as u64).min(n_paths);
            for i in start..end {
                simulate_path(&sampler, seed, i, cap, &mut part);
            }
            part
        })
        .reduce(|| EmpiricalResult::empty(0, seed, cap, spacing), EmpiricalResult::merge);
    Ok(EmpiricalResult {
        n_paths,
        ..result
    })
}

/// `½ Σ_x |counts_x / n - target(x)|` over stopping sites. Censored paths
/// count as missing mass; an empty run is at distance `½ target.total`.
pub fn tv_distance<S: Scalar>(emp: &EmpiricalResult, target: &LatticeMeasure<S>) -> f64 {
    let n = emp.n_paths.max(1) as f64;
    let counts = emp.spatial_counts();
    let mut sites: Vec<i64> = counts.keys().copied().collect();
    sites.extend(target.atoms().map(|(x, _)| x));
    sites.sort_unstable();
    sites.dedup();
    let gap: f64 = sites
        .into_iter()
        .map(|x| {
            let e = counts.get(&x).copied().unwrap_or(0) as f64 / n;
            (e - target.mass_at(x).to_f64()).abs()
        })
        .sum();
    0.5 * gap
}

#[derive(Debug, Clone, PartialEq)]
pub struct TanakaSite {
    pub site: i64,
    /// Mean local time between release and stop.
    pub empirical: f64,
    /// `U_{alpha_X}(x) - U_beta(x)` for the exact stopped law `beta`.
    pub expected: f64,
    pub std_error: f64,
    /// `(empirical - expected) / std_error`; zero when both agree exactly.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TanakaReport {
    pub sites: Vec<TanakaSite>,
    pub result: EmpiricalResult,
}

impl TanakaReport {
    pub fn max_abs_z(&self) -> f64 {
        self.sites.iter().map(|s| s.z.abs()).fold(0.0, f64::max)
    }
}

/// Compare simulated local times with the expected local times of the
/// exact forward law on `window`.
pub fn tanaka_mc<S: Scalar>(
    lambda: &LatticeMeasure<S>,
    delay: &DelaySpec<S>,
    field: &StoppingField<S>,
    n_paths: u64,
    seed: u64,
    cap: usize,
    window: std::ops::RangeInclusive<i64>,
) -> Result<TanakaReport> {
    let result = simulate(lambda, delay, field, n_paths, seed, cap)?;
    let law = DelayLaw::resolve(lambda, delay, field.time_step())?;
    let trace = propagate_law(&law, field, cap);
    let beta = trace.stopped_law(TimeIndex::Infinity)?;
    let alpha_x = law.alpha_x();
    let n = result.n_paths.max(1) as f64;
    let h = result.spacing;
    let sites = window
        .map(|x| {
            let expected = (alpha_x.potential_at(x) - beta.potential_at(x)).to_f64();
            let sum = result.visit_sums.get(&x).copied().unwrap_or(0) as f64;
            let sq = result.visit_sq_sums.get(&x).copied().unwrap_or(0) as f64;
            let mean = sum / n;
            let var = (sq / n - mean * mean).max(0.0);
            let empirical = h * mean;
            let std_error = h * (var / n).sqrt();
            let diff = empirical - expected;
            let z = if std_error > 0.0 {
                diff / std_error
            } else if diff.abs() < 1e-12 {
                0.0
            } else {
                f64::INFINITY.copysign(diff)
            };
            TanakaSite {
                site: x,
                empirical,
                expected,
                std_error,
                z,
            }
        })
        .collect();
    Ok(TanakaReport { sites, result })
}
