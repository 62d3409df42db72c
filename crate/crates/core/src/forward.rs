//! Forward propagation of mass through a stopping field.
//!
//! Walks start from `lambda`, wait for a delay `eta`, and are then stopped at
//! `(t, x)` with probability `r_t(x)`. All quantities here are laws, never
//! paths: the free mass `a_t(x)`, the stopped ledger, and the expected local
//! time accumulated between delay and stop.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use crate::error::{Error, Result};
use crate::fields::{ensure_valid, StoppingField};
use crate::measures::{Grid, LatticeMeasure, PotentialTable};
use crate::scalar::{Mode, Scalar};

/// Mass on `(time step, site)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeMeasure<S> {
    grid: Grid<S>,
    time_step: S,
    entries: BTreeMap<(usize, i64), S>,
}

impl<S: Scalar> SpaceTimeMeasure<S> {
    pub fn new(grid: Grid<S>, time_step: S) -> Self {
        Self {
            grid,
            time_step,
            entries: BTreeMap::new(),
        }
    }

    pub fn from_entries<I>(grid: Grid<S>, time_step: S, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = ((usize, i64), S)>,
    {
        let mut m = Self::new(grid, time_step);
        for ((t, x), mass) in entries {
            if mass < S::zero() {
                return Err(Error::NegativeMass {
                    site: x,
                    mass: mass.to_text(),
                });
            }
            m.add(t, x, mass);
        }
        Ok(m)
    }

    pub fn grid(&self) -> &Grid<S> {
        &self.grid
    }

    pub fn time_step(&self) -> &S {
        &self.time_step
    }

    pub fn add(&mut self, t: usize, site: i64, mass: S) {
        if mass.is_zero() {
            return;
        }
        let e = self.entries.entry((t, site)).or_insert_with(S::zero);
        *e += mass;
        if e.is_zero() {
            self.entries.remove(&(t, site));
        }
    }

    pub fn mass_at(&self, t: usize, site: i64) -> S {
        self.entries.get(&(t, site)).cloned().unwrap_or_else(S::zero)
    }

    pub fn entries(&self) -> impl Iterator<Item = ((usize, i64), &S)> + '_ {
        self.entries.iter().map(|(k, v)| (*k, v))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn total_mass(&self) -> S {
        self.entries.values().fold(S::zero(), |a, m| a + m.clone())
    }

    pub fn max_time(&self) -> Option<usize> {
        self.entries.keys().map(|k| k.0).max()
    }

    /// `alpha({t} x .)`.
    pub fn slice(&self, t: usize) -> LatticeMeasure<S> {
        let mut m = LatticeMeasure::empty(self.grid.clone());
        for (&(s, x), v) in self.entries.range((t, i64::MIN)..=(t, i64::MAX)) {
            debug_assert_eq!(s, t);
            m.add(x, v.clone());
        }
        m
    }

    /// Law of the site, summed over time.
    pub fn spatial_marginal(&self) -> LatticeMeasure<S> {
        let mut m = LatticeMeasure::empty(self.grid.clone());
        for (&(_, x), v) in &self.entries {
            m.add(x, v.clone());
        }
        m
    }

    /// Entries with `t <= horizon`.
    pub fn up_to(&self, horizon: usize) -> Self {
        Self {
            grid: self.grid.clone(),
            time_step: self.time_step.clone(),
            entries: self
                .entries
                .range(..(horizon + 1, i64::MIN))
                .map(|(k, v)| (*k, v.clone()))
                .collect(),
        }
    }

    pub fn to_f64(&self) -> SpaceTimeMeasure<f64> {
        SpaceTimeMeasure {
            grid: Grid {
                spacing: self.grid.spacing.to_f64(),
                origin: self.grid.origin.to_f64(),
            },
            time_step: self.time_step.to_f64(),
            entries: self.entries.iter().map(|(k, v)| (*k, v.to_f64())).collect(),
        }
    }
}

/// How the delay `eta` is specified.
#[derive(Debug, Clone, PartialEq)]
pub enum DelaySpec<S> {
    /// `eta = t0` for every walk.
    Deterministic(usize),
    /// The joint law of `(eta, X_eta)` given directly.
    ExplicitSpaceTime(SpaceTimeMeasure<S>),
    /// `eta` is the stopping time of a field applied after an earlier delay,
    /// capped at `cap` steps. Mass still alive at the cap is released there;
    /// if that mass exceeds `tolerance` the delay is rejected.
    FieldDelay {
        field: StoppingField<S>,
        prior: Box<DelaySpec<S>>,
        cap: usize,
        tolerance: f64,
    },
}

impl<S> DelaySpec<S> {
    pub fn none() -> Self {
        DelaySpec::Deterministic(0)
    }
}

/// Resolved delay: the release law `alpha` together with the law of the
/// walks still waiting.
///
/// The waiting mass evolves as `g_0 = lambda - alpha_0`,
/// `g_t = K g_{t-1} - alpha_t` with `K` one free step. A delay is realizable
/// by a stopping time iff every `g_t` is nonnegative and `g` vanishes after
/// the last release.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayLaw<S> {
    lambda: LatticeMeasure<S>,
    alpha: SpaceTimeMeasure<S>,
    pending: Vec<LatticeMeasure<S>>,
    forced: S,
}

impl<S: Scalar> DelayLaw<S> {
    pub fn resolve(lambda: &LatticeMeasure<S>, spec: &DelaySpec<S>, time_step: &S) -> Result<Self> {
        match spec {
            DelaySpec::Deterministic(t0) => {
                let mut alpha = SpaceTimeMeasure::new(lambda.grid().clone(), time_step.clone());
                for (x, m) in lambda.evolve(*t0).atoms() {
                    alpha.add(*t0, x, m.clone());
                }
                Self::from_alpha(lambda, alpha)
            }
            DelaySpec::ExplicitSpaceTime(alpha) => Self::from_alpha(lambda, alpha.clone()),
            DelaySpec::FieldDelay {
                field,
                prior,
                cap,
                tolerance,
            } => {
                if lambda.grid() != field.grid() {
                    return Err(Error::GridMismatch);
                }
                ensure_valid(field)?;
                let prior = Self::resolve(lambda, prior, field.time_step())?;
                let trace = propagate_law(&prior, field, *cap);
                let mut alpha = trace.stopped_ledger();
                let mut forced = S::zero();
                for (x, m) in trace.alive(*cap).atoms().chain(prior.pending(*cap).atoms()) {
                    alpha.add(*cap, x, m.clone());
                    forced += m.clone();
                }
                if forced.to_f64() > *tolerance {
                    return Err(Error::ResidualTooLarge {
                        residual: forced.to_f64(),
                        horizon: *cap,
                    });
                }
                let mut law = Self::from_alpha(lambda, alpha)?;
                law.forced = forced;
                Ok(law)
            }
        }
    }

    /// Check realizability of a release law and record the waiting mass.
    pub fn from_alpha(lambda: &LatticeMeasure<S>, alpha: SpaceTimeMeasure<S>) -> Result<Self> {
        if lambda.grid() != alpha.grid() {
            return Err(Error::GridMismatch);
        }
        let t_max = alpha.max_time().unwrap_or(0);
        let mut pending = Vec::with_capacity(t_max + 1);
        let mut g = lambda.clone();
        for t in 0..=t_max {
            if t > 0 {
                g = g.step();
            }
            g = g
                .checked_sub(&alpha.slice(t))
                .map_err(|site| Error::InvalidDelay { t, site })?;
            pending.push(g.clone());
        }
        let leftover = g.total_mass();
        let drained = match S::MODE {
            Mode::Rational => leftover.is_zero(),
            Mode::Float => leftover.to_f64() <= 1e-9,
        };
        if !drained {
            let site = g.support_hull().map(|h| h.0).unwrap_or(0);
            return Err(Error::InvalidDelay { t: t_max, site });
        }
        *pending.last_mut().expect("at least one row") = LatticeMeasure::empty(lambda.grid().clone());
        Ok(Self {
            lambda: lambda.clone(),
            alpha,
            pending,
            forced: S::zero(),
        })
    }

    pub fn lambda(&self) -> &LatticeMeasure<S> {
        &self.lambda
    }

    pub fn alpha(&self) -> &SpaceTimeMeasure<S> {
        &self.alpha
    }

    pub fn grid(&self) -> &Grid<S> {
        self.lambda.grid()
    }

    pub fn time_step(&self) -> &S {
        self.alpha.time_step()
    }

    /// `alpha_t`.
    pub fn released(&self, t: usize) -> LatticeMeasure<S> {
        self.alpha.slice(t)
    }

    /// Walks still waiting for their delay at time `t`.
    pub fn pending(&self, t: usize) -> LatticeMeasure<S> {
        self.pending
            .get(t)
            .cloned()
            .unwrap_or_else(|| LatticeMeasure::empty(self.grid().clone()))
    }

    /// Last time at which mass is released.
    pub fn max_time(&self) -> usize {
        self.pending.len() - 1
    }

    /// Spatial law of `X_eta`.
    pub fn alpha_x(&self) -> LatticeMeasure<S> {
        self.alpha.spatial_marginal()
    }

    /// Mass released by force at a field delay's cap.
    pub fn forced_release(&self) -> &S {
        &self.forced
    }

    /// Law of `X_{eta ∧ T}`.
    pub fn truncated_law(&self, horizon: usize) -> LatticeMeasure<S> {
        let mut m = self.pending(horizon);
        m.add_measure(&self.alpha.up_to(horizon).spatial_marginal());
        m
    }

    /// `V_T(y) = -E|X_{eta ∧ T} - y|` on a window.
    pub fn v_alpha(&self, horizon: usize, window: RangeInclusive<i64>) -> Result<PotentialTable<S>> {
        self.truncated_law(horizon).potential(window)
    }
}

/// `alpha` for a delay spec.
pub fn delay_law_from_field<S: Scalar>(
    lambda: &LatticeMeasure<S>,
    prior: &DelaySpec<S>,
    time_step: &S,
) -> Result<SpaceTimeMeasure<S>> {
    Ok(DelayLaw::resolve(lambda, prior, time_step)?.alpha)
}

/// `V_T` for a delay spec.
pub fn v_alpha<S: Scalar>(
    lambda: &LatticeMeasure<S>,
    delay: &DelaySpec<S>,
    time_step: &S,
    horizon: usize,
    window: RangeInclusive<i64>,
) -> Result<PotentialTable<S>> {
    DelayLaw::resolve(lambda, delay, time_step)?.v_alpha(horizon, window)
}

/// A finite time index or the end of time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeIndex {
    At(usize),
    Infinity,
}

/// Per-step record of a forward run on rows `0..=horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<S> {
    delay: DelayLaw<S>,
    time_step: S,
    free: Vec<LatticeMeasure<S>>,
    stopped: Vec<LatticeMeasure<S>>,
    local_time: Vec<BTreeMap<i64, S>>,
    residual: S,
}

impl<S: Scalar> ForwardTrace<S> {
    pub fn horizon(&self) -> usize {
        self.free.len() - 1
    }

    pub fn grid(&self) -> &Grid<S> {
        self.delay.grid()
    }

    pub fn time_step(&self) -> &S {
        &self.time_step
    }

    pub fn delay(&self) -> &DelayLaw<S> {
        &self.delay
    }

    /// Free mass `a_t`; empty past the horizon.
    pub fn free(&self, t: usize) -> LatticeMeasure<S> {
        self.free
            .get(t)
            .cloned()
            .unwrap_or_else(|| LatticeMeasure::empty(self.grid().clone()))
    }

    pub fn free_at(&self, t: usize, site: i64) -> S {
        self.free.get(t).map_or_else(S::zero, |m| m.mass_at(site))
    }

    pub fn stopped(&self, t: usize) -> LatticeMeasure<S> {
        self.stopped
            .get(t)
            .cloned()
            .unwrap_or_else(|| LatticeMeasure::empty(self.grid().clone()))
    }

    pub fn stopped_at(&self, t: usize, site: i64) -> S {
        self.stopped.get(t).map_or_else(S::zero, |m| m.mass_at(site))
    }

    /// Free mass surviving the stopping decision at `t`.
    pub fn alive(&self, t: usize) -> LatticeMeasure<S> {
        self.free(t)
            .checked_sub(&self.stopped(t))
            .expect("stopped mass never exceeds free mass")
    }

    /// Cumulative local time `l_t` (physical units) for `t <= horizon + 1`.
    pub fn local_time(&self, t: usize) -> &BTreeMap<i64, S> {
        &self.local_time[t.min(self.local_time.len() - 1)]
    }

    pub fn local_time_at(&self, t: usize, site: i64) -> S {
        self.local_time(t).get(&site).cloned().unwrap_or_else(S::zero)
    }

    /// `l_horizon`: local time collected strictly before the last row.
    pub fn local_time_profile(&self) -> &BTreeMap<i64, S> {
        self.local_time(self.horizon())
    }

    /// Mass neither stopped by the horizon nor stopping at it, including
    /// walks still waiting for their delay.
    pub fn residual(&self) -> &S {
        &self.residual
    }

    /// Every stopped increment as a space-time measure.
    pub fn stopped_ledger(&self) -> SpaceTimeMeasure<S> {
        let mut m = SpaceTimeMeasure::new(self.grid().clone(), self.time_step.clone());
        for (t, row) in self.stopped.iter().enumerate() {
            for (x, v) in row.atoms() {
                m.add(t, x, v.clone());
            }
        }
        m
    }

    /// Law of `X_{rho ∧ T}`: stopped strictly before `T`, plus everything
    /// alive at `T` (free or still waiting) at its current site.
    pub fn stopped_law(&self, at: TimeIndex) -> Result<LatticeMeasure<S>> {
        match at {
            TimeIndex::At(t) => {
                if t > self.horizon() {
                    return Err(Error::HorizonExceeded {
                        requested: t,
                        horizon: self.horizon(),
                    });
                }
                let mut m = self.free(t);
                m.add_measure(&self.delay.pending(t));
                for row in &self.stopped[..t] {
                    m.add_measure(row);
                }
                Ok(m)
            }
            TimeIndex::Infinity => {
                let mut m = LatticeMeasure::empty(self.grid().clone());
                for row in &self.stopped {
                    m.add_measure(row);
                }
                Ok(m)
            }
        }
    }

    pub fn stopped_potential(&self, at: TimeIndex, window: RangeInclusive<i64>) -> Result<PotentialTable<S>> {
        self.stopped_law(at)?.potential(window)
    }

    /// CSV with columns `t,site,free_mass,stopped_mass,local_time`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,site,free_mass,stopped_mass,local_time\n");
        for t in 0..=self.horizon() {
            let mut sites: Vec<i64> = self.free[t].atoms().map(|(x, _)| x).collect();
            sites.extend(self.local_time[t].keys().copied());
            sites.sort_unstable();
            sites.dedup();
            for x in sites {
                out.push_str(&format!(
                    "{t},{x},{},{},{}\n",
                    self.free_at(t, x).to_text(),
                    self.stopped_at(t, x).to_text(),
                    self.local_time_at(t, x).to_text()
                ));
            }
        }
        out
    }
}

/// Step-by-step forward run where the caller chooses each row of stopping
/// probabilities after seeing the free mass. Solvers build fields with it.
pub(crate) struct Propagator<S: Scalar> {
    delay: DelayLaw<S>,
    free: Vec<LatticeMeasure<S>>,
    stopped: Vec<LatticeMeasure<S>>,
    local_time: Vec<BTreeMap<i64, S>>,
    current: LatticeMeasure<S>,
    last_alive: LatticeMeasure<S>,
}

impl<S: Scalar> Propagator<S> {
    pub(crate) fn new(delay: DelayLaw<S>) -> Self {
        let current = delay.released(0);
        let empty = LatticeMeasure::empty(delay.grid().clone());
        Self {
            delay,
            free: Vec::new(),
            stopped: Vec::new(),
            local_time: vec![BTreeMap::new()],
            current,
            last_alive: empty,
        }
    }

    /// Index of the row the next call to [`Propagator::apply`] fills.
    pub(crate) fn t(&self) -> usize {
        self.free.len()
    }

    pub(crate) fn current_free(&self) -> &LatticeMeasure<S> {
        &self.current
    }

    pub(crate) fn current_local_time(&self, site: i64) -> S {
        self.local_time
            .last()
            .and_then(|l| l.get(&site).cloned())
            .unwrap_or_else(S::zero)
    }

    /// Mass still in play after the last applied row.
    pub(crate) fn alive_after_last(&self) -> S {
        self.last_alive.total_mass() + self.delay.pending(self.t().saturating_sub(1)).total_mass()
    }

    /// Stop with probability `r(x)` on the current row and advance one step.
    pub(crate) fn apply(&mut self, r: impl Fn(i64) -> S) {
        let spacing = self.delay.grid().spacing.clone();
        let grid = self.delay.grid().clone();
        let mut stopped = LatticeMeasure::empty(grid.clone());
        let mut alive = LatticeMeasure::empty(grid);
        let mut lt = self.local_time.last().cloned().unwrap_or_default();
        for (x, m) in self.current.atoms() {
            let p = r(x);
            let keep = (S::one() - p.clone()) * m.clone();
            stopped.add(x, p * m.clone());
            if !keep.is_zero() {
                *lt.entry(x).or_insert_with(S::zero) += keep.clone() * spacing.clone();
            }
            alive.add(x, keep);
        }
        let t = self.t();
        let mut next = alive.step();
        next.add_measure(&self.delay.released(t + 1));
        self.free.push(std::mem::replace(&mut self.current, next));
        self.stopped.push(stopped);
        self.local_time.push(lt);
        self.last_alive = alive;
    }

    pub(crate) fn finish(self) -> ForwardTrace<S> {
        let h = self.free.len() - 1;
        let residual = self.last_alive.total_mass() + self.delay.pending(h).total_mass();
        ForwardTrace {
            time_step: self.delay.time_step().clone(),
            delay: self.delay,
            free: self.free,
            stopped: self.stopped,
            local_time: self.local_time,
            residual,
        }
    }
}

/// Run `lambda`, delayed by `delay`, through `field` for rows `0..=horizon`.
pub fn propagate<S: Scalar>(
    lambda: &LatticeMeasure<S>,
    delay: &DelaySpec<S>,
    field: &StoppingField<S>,
    horizon: usize,
) -> Result<ForwardTrace<S>> {
    if lambda.grid() != field.grid() {
        return Err(Error::GridMismatch);
    }
    ensure_valid(field)?;
    let law = DelayLaw::resolve(lambda, delay, field.time_step())?;
    Ok(propagate_law(&law, field, horizon))
}

/// As [`propagate`] for an already resolved delay; the field is not
/// validated.
pub fn propagate_law<S: Scalar>(law: &DelayLaw<S>, field: &StoppingField<S>, horizon: usize) -> ForwardTrace<S> {
    let mut p = Propagator::new(law.clone());
    for t in 0..=horizon {
        p.apply(|x| field.get(t, x));
    }
    p.finish()
}
