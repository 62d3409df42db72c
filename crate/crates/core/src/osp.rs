//! Finite-horizon optimal stopping on the lattice and the identities that
//! tie it to the forward constructions.
//!
//! [`backward_induction`] solves `sup_{tau <= T} E_y[G(tau, Y_tau)]` for a
//! simple symmetric walk `Y`. Row `t` of the value grid covers the window
//! widened by `t` sites on both sides, so values on the window at time 0 are
//! never affected by truncation.

use std::collections::BTreeSet;
use std::ops::RangeInclusive;

use crate::error::{Error, Result};
use crate::fields::{BarrierKind, StoppingField};
use crate::forward::{propagate, propagate_law, DelayLaw, DelaySpec, TimeIndex};
use crate::measures::{LatticeMeasure, PotentialTable};
use crate::problem::Problem;
use crate::scalar::{Mode, Scalar};

#[derive(Debug, Clone, PartialEq)]
struct ValueRow<S> {
    lo: i64,
    values: Vec<S>,
    /// `payoff - continuation`; absent on the terminal row.
    margins: Vec<Option<S>>,
}

/// Values and stop decisions of a backward induction.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrid<S> {
    horizon: usize,
    window: (i64, i64),
    rows: Vec<ValueRow<S>>,
}

impl<S: Scalar> ValueGrid<S> {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Sites covered at time 0.
    pub fn window(&self) -> RangeInclusive<i64> {
        self.window.0..=self.window.1
    }

    /// Sites covered on row `t`.
    pub fn row_window(&self, t: usize) -> RangeInclusive<i64> {
        let row = &self.rows[t];
        row.lo..=(row.lo + row.values.len() as i64 - 1)
    }

    fn index(&self, t: usize, site: i64) -> Option<usize> {
        let row = self.rows.get(t)?;
        let i = usize::try_from(site - row.lo).ok()?;
        (i < row.values.len()).then_some(i)
    }

    pub fn value(&self, t: usize, site: i64) -> Option<&S> {
        self.index(t, site).map(|i| &self.rows[t].values[i])
    }

    /// `payoff - continuation` at a non-terminal cell.
    pub fn margin(&self, t: usize, site: i64) -> Option<&S> {
        self.index(t, site).and_then(|i| self.rows[t].margins[i].as_ref())
    }

    /// Stopping is optimal; ties count as stop and the terminal row always
    /// stops.
    pub fn is_stop(&self, t: usize, site: i64) -> Option<bool> {
        let i = self.index(t, site)?;
        Some(match &self.rows[t].margins[i] {
            None => true,
            Some(m) => *m >= S::zero(),
        })
    }

    pub fn stop_region(&self) -> BTreeSet<(usize, i64)> {
        let mut out = BTreeSet::new();
        for t in 0..=self.horizon {
            for y in self.row_window(t) {
                if self.is_stop(t, y) == Some(true) {
                    out.insert((t, y));
                }
            }
        }
        out
    }

    /// Row 0 as a table over the window.
    pub fn initial_values(&self) -> PotentialTable<S> {
        PotentialTable::from_fn(self.window(), |y| self.value(0, y).cloned().expect("inside window"))
    }

    /// CSV with columns `t,site,value,stop_flag`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,site,value,stop_flag\n");
        for t in 0..=self.horizon {
            for y in self.row_window(t) {
                let v = self.value(t, y).expect("inside row");
                let stop = u8::from(self.is_stop(t, y) == Some(true));
                out.push_str(&format!("{t},{y},{},{stop}\n", v.to_text()));
            }
        }
        out
    }
}

/// `value(T, y) = G(T, y)`, `value(t, y) = max(G(t, y), average of value(t+1, y±1))`.
pub fn backward_induction<S: Scalar>(
    horizon: usize,
    window: RangeInclusive<i64>,
    payoff: impl Fn(usize, i64) -> S,
) -> Result<ValueGrid<S>> {
    if window.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let (a, b) = (*window.start(), *window.end());
    let half = S::from_ratio(1, 2);
    let span = |t: usize| (a - t as i64, b + t as i64);
    let mut rows: Vec<ValueRow<S>> = Vec::with_capacity(horizon + 1);
    let (lo, hi) = span(horizon);
    rows.push(ValueRow {
        lo,
        values: (lo..=hi).map(|y| payoff(horizon, y)).collect(),
        margins: vec![None; (hi - lo + 1) as usize],
    });
    for t in (0..horizon).rev() {
        let next = rows.last().expect("row pushed");
        let (lo, hi) = span(t);
        let mut values = Vec::with_capacity((hi - lo + 1) as usize);
        let mut margins = Vec::with_capacity(values.capacity());
        for y in lo..=hi {
            let left = &next.values[(y - 1 - next.lo) as usize];
            let right = &next.values[(y + 1 - next.lo) as usize];
            let cont = (left.clone() + right.clone()) * half.clone();
            let g = payoff(t, y);
            let m = g.clone() - cont.clone();
            values.push(if m >= S::zero() { g } else { cont });
            margins.push(Some(m));
        }
        rows.push(ValueRow { lo, values, margins });
    }
    rows.reverse();
    Ok(ValueGrid {
        horizon,
        window: (a, b),
        rows,
    })
}

/// Laws of `X_{eta ∧ s}` for `s = 0..=horizon`.
fn truncated_laws<S: Scalar>(law: &DelayLaw<S>, horizon: usize) -> Vec<LatticeMeasure<S>> {
    (0..=horizon).map(|s| law.truncated_law(s)).collect()
}

/// Root problem: payoff `V_{T-t} + U_beta - U_{alpha_X}` before `T` and
/// `V_0 = U_lambda` at `T`.
pub fn osp_value_root<S: Scalar>(
    law: &DelayLaw<S>,
    mu_beta: &LatticeMeasure<S>,
    horizon: usize,
    window: RangeInclusive<i64>,
) -> Result<ValueGrid<S>> {
    let v = truncated_laws(law, horizon);
    let alpha_x = law.alpha_x();
    backward_induction(horizon, window, |t, y| {
        let base = v[horizon - t].potential_at(y);
        if t < horizon {
            base + mu_beta.potential_at(y) - alpha_x.potential_at(y)
        } else {
            base
        }
    })
}

/// Rost problem: payoff `U_beta - V_{T-t}` at every `t <= T`.
pub fn osp_value_rost<S: Scalar>(
    law: &DelayLaw<S>,
    mu_beta: &LatticeMeasure<S>,
    horizon: usize,
    window: RangeInclusive<i64>,
) -> Result<ValueGrid<S>> {
    let v = truncated_laws(law, horizon);
    backward_induction(horizon, window, |t, y| {
        mu_beta.potential_at(y) - v[horizon - t].potential_at(y)
    })
}

/// Per-site comparison of a forward potential with a DP value.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingReport<S> {
    pub kind: BarrierKind,
    pub horizon: usize,
    /// `(site, forward - dp)`.
    pub gaps: Vec<(i64, S)>,
    pub max_abs_gap: f64,
    pub pass: bool,
}

/// Compare the forward side of the switching identity with the DP value on
/// `window`: `U_{beta_T}` for Root, `U_mu - U_{beta_T}` for Rost. The target
/// `mu` stands in for the stopped law of the field.
///
/// Rational runs pass only on exact equality; float runs pass when the
/// largest gap is at most `tol`.
pub fn verify_switching<S: Scalar>(
    problem: &Problem<S>,
    kind: BarrierKind,
    field: &StoppingField<S>,
    horizon: usize,
    window: RangeInclusive<i64>,
    tol: f64,
) -> Result<SwitchingReport<S>> {
    let trace = propagate(&problem.lambda, &problem.delay, field, horizon)?;
    let beta_t = trace.stopped_law(TimeIndex::At(horizon))?;
    let law = trace.delay();
    let grid = match kind {
        BarrierKind::Root => osp_value_root(law, &problem.mu, horizon, window.clone())?,
        BarrierKind::Rost => osp_value_rost(law, &problem.mu, horizon, window.clone())?,
    };
    let mut gaps = Vec::new();
    let mut max_abs_gap: f64 = 0.0;
    let mut exact = true;
    for y in window {
        let fwd = match kind {
            BarrierKind::Root => beta_t.potential_at(y),
            BarrierKind::Rost => problem.mu.potential_at(y) - beta_t.potential_at(y),
        };
        let gap = fwd - grid.value(0, y).cloned().expect("inside window");
        exact &= gap.is_zero();
        max_abs_gap = max_abs_gap.max(gap.abs().to_f64());
        gaps.push((y, gap));
    }
    let pass = match S::MODE {
        Mode::Rational => exact,
        Mode::Float => max_abs_gap <= tol,
    };
    Ok(SwitchingReport {
        kind,
        horizon,
        gaps,
        max_abs_gap,
        pass,
    })
}

/// `E|X_{T-s} - Y_s|` for `s = 0..=T` with independent free walks.
pub fn core_identity<S: Scalar>(x_law: &LatticeMeasure<S>, y_law: &LatticeMeasure<S>, horizon: usize) -> Result<Vec<S>> {
    x_law.same_grid(y_law)?;
    let xs: Vec<_> = (0..=horizon).scan(x_law.clone(), |m, i| {
        if i > 0 {
            *m = m.step();
        }
        Some(m.clone())
    }).collect();
    let mut y = y_law.clone();
    let mut out = Vec::with_capacity(horizon + 1);
    for s in 0..=horizon {
        if s > 0 {
            y = y.step();
        }
        out.push(xs[horizon - s].expected_distance(&y));
    }
    Ok(out)
}

/// `F(s) = E|X_{sigma ∧ (T - tau ∧ s)} - Y_{tau ∧ s}|` for `s = 0..=T`.
///
/// `X` starts from `x_lambda`, waits for `x_delay` and stops by `sigma`.
/// `Y` starts from `y_law` and at its time `t` stops with probability
/// `tau.get(T - t, Y_t)`; it is stopped at `T` regardless.
pub fn interpolation_profile<S: Scalar>(
    x_lambda: &LatticeMeasure<S>,
    x_delay: &DelaySpec<S>,
    sigma: &StoppingField<S>,
    tau: &StoppingField<S>,
    y_law: &LatticeMeasure<S>,
    horizon: usize,
) -> Result<Vec<S>> {
    y_law.same_grid(x_lambda)?;
    let xt = propagate(x_lambda, x_delay, sigma, horizon)?;
    let x_laws: Vec<_> = (0..=horizon)
        .map(|u| xt.stopped_law(TimeIndex::At(u)))
        .collect::<Result<_>>()?;
    let sites = y_law.support_hull().map_or(0..=-1, |(a, b)| (a - horizon as i64)..=(b + horizon as i64));
    let y_rule = StoppingField::from_fn(
        tau.kind().flipped(),
        tau.grid().clone(),
        tau.time_step().clone(),
        sites,
        horizon,
        |t, x| tau.get(horizon - t, x),
    );
    let y_delay = DelayLaw::resolve(y_law, &DelaySpec::none(), tau.time_step())?;
    let yt = propagate_law(&y_delay, &y_rule, horizon);
    // E|X_{sigma ∧ u} - y| = -U_{law_u}(y)
    let dist = |u: usize, y: i64| -x_laws[u].potential_at(y);
    let mut out = Vec::with_capacity(horizon + 1);
    let mut stopped_part = S::zero();
    for s in 0..=horizon {
        let mut alive_part = S::zero();
        for (y, m) in yt.free(s).atoms() {
            alive_part += m.clone() * dist(horizon - s, y);
        }
        out.push(stopped_part.clone() + alive_part);
        for (y, m) in yt.stopped(s).atoms() {
            stopped_part += m.clone() * dist(horizon - s, y);
        }
    }
    Ok(out)
}

/// `E[G(tau, Y_tau)]` for `Y` started from `start`, stopping at its time `t`
/// with probability `rule(t, Y_t)` and at `T` regardless.
pub fn evaluate_rule<S: Scalar>(
    start: &LatticeMeasure<S>,
    horizon: usize,
    rule: impl Fn(usize, i64) -> S,
    payoff: impl Fn(usize, i64) -> S,
) -> S {
    let mut acc = S::zero();
    let mut free = start.clone();
    for t in 0..=horizon {
        let mut alive = LatticeMeasure::empty(start.grid().clone());
        for (y, m) in free.atoms() {
            let p = if t == horizon { S::one() } else { rule(t, y) };
            acc += p.clone() * m.clone() * payoff(t, y);
            alive.add(y, (S::one() - p) * m.clone());
        }
        free = alive.step();
    }
    acc
}

/// Agreement between a DP stop region and a field read cell by cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopRegionReport {
    pub checked: usize,
    pub stop_cells: usize,
    /// Cells where stopping and continuing are equally good.
    pub tie_cells: usize,
    /// Cells where `r = 1` but the DP continues, or `r = 0` but stopping is
    /// strictly better.
    pub violations: Vec<(usize, i64)>,
}

/// Compare DP cell `(t, y)` for `t < T` with `field.get(t, y)`. Pass the
/// field reversed at `T`, so that the DP at time `t` meets the forward field
/// at time `T - t`. Margins within `tol` count as ties in float mode.
pub fn compare_stop_region<S: Scalar>(grid: &ValueGrid<S>, field: &StoppingField<S>, tol: f64) -> StopRegionReport {
    let tol = match S::MODE {
        Mode::Rational => 0.0,
        Mode::Float => tol,
    };
    let mut report = StopRegionReport {
        checked: 0,
        stop_cells: 0,
        tie_cells: 0,
        violations: Vec::new(),
    };
    for t in 0..grid.horizon() {
        for y in grid.row_window(t) {
            let m = grid.margin(t, y).expect("non-terminal row").to_f64();
            let r = field.get(t, y);
            report.checked += 1;
            let tie = m.abs() <= tol;
            let stop = m >= -tol;
            report.tie_cells += usize::from(tie);
            report.stop_cells += usize::from(stop);
            let strict_stop = m > tol;
            if (r.is_one() && !stop) || (r.is_zero() && strict_stop) {
                report.violations.push((t, y));
            }
        }
    }
    report
}
