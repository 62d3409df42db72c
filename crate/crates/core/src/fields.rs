//! Fields of stopping probabilities and the barriers they induce.
//!
//! A [`StoppingField`] stores `r_t(x)` densely for `t = 0..=horizon` over a
//! contiguous site range. Sites outside the range never stop. Beyond the
//! horizon each column continues with its [`TailState`].

use std::collections::{BTreeMap, BTreeSet};
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::Grid;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BarrierKind {
    Root,
    Rost,
}

impl BarrierKind {
    pub fn flipped(self) -> Self {
        match self {
            BarrierKind::Root => BarrierKind::Rost,
            BarrierKind::Rost => BarrierKind::Root,
        }
    }
}

impl std::fmt::Display for BarrierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BarrierKind::Root => f.write_str("root"),
            BarrierKind::Rost => f.write_str("rost"),
        }
    }
}

impl std::str::FromStr for BarrierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "root" => Ok(BarrierKind::Root),
            "rost" => Ok(BarrierKind::Rost),
            other => Err(Error::Parse(format!("unknown barrier kind `{other}`"))),
        }
    }
}

/// Value a column takes on every row past the materialized horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailState {
    One,
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoppingField<S> {
    kind: BarrierKind,
    grid: Grid<S>,
    time_step: S,
    lo: i64,
    width: usize,
    rows: Vec<Vec<S>>,
    tails: Vec<TailState>,
}

impl<S: Scalar> StoppingField<S> {
    /// Field with no materialized rows and zero tails on `sites`.
    pub fn new(kind: BarrierKind, grid: Grid<S>, time_step: S, sites: RangeInclusive<i64>) -> Self {
        let lo = *sites.start();
        let width = if sites.is_empty() {
            0
        } else {
            (sites.end() - sites.start() + 1) as usize
        };
        Self {
            kind,
            grid,
            time_step,
            lo,
            width,
            rows: Vec::new(),
            tails: vec![TailState::Zero; width],
        }
    }

    /// Materialize rows `0..=horizon` from a closure.
    pub fn from_fn(
        kind: BarrierKind,
        grid: Grid<S>,
        time_step: S,
        sites: RangeInclusive<i64>,
        horizon: usize,
        f: impl Fn(usize, i64) -> S,
    ) -> Self {
        let mut field = Self::new(kind, grid, time_step, sites);
        for t in 0..=horizon {
            let row = field.sites().map(|x| f(t, x)).collect();
            field.rows.push(row);
        }
        field
    }

    pub fn kind(&self) -> BarrierKind {
        self.kind
    }

    pub fn grid(&self) -> &Grid<S> {
        &self.grid
    }

    pub fn time_step(&self) -> &S {
        &self.time_step
    }

    pub fn sites(&self) -> RangeInclusive<i64> {
        self.lo..=(self.lo + self.width as i64 - 1)
    }

    pub fn contains_site(&self, site: i64) -> bool {
        site >= self.lo && site < self.lo + self.width as i64
    }

    /// Last materialized row; `None` for a field without rows.
    pub fn horizon(&self) -> Option<usize> {
        self.rows.len().checked_sub(1)
    }

    pub fn rows(&self) -> &[Vec<S>] {
        &self.rows
    }

    pub fn tails(&self) -> &[TailState] {
        &self.tails
    }

    pub fn tail(&self, site: i64) -> TailState {
        if self.contains_site(site) {
            self.tails[(site - self.lo) as usize]
        } else {
            TailState::Zero
        }
    }

    pub fn push_row(&mut self, row: Vec<S>) {
        assert_eq!(row.len(), self.width, "row width mismatch");
        self.rows.push(row);
    }

    pub fn set_tail(&mut self, site: i64, state: TailState) {
        assert!(self.contains_site(site), "site {site} outside field");
        self.tails[(site - self.lo) as usize] = state;
    }

    /// Overwrite one materialized cell.
    pub fn set(&mut self, t: usize, site: i64, value: S) {
        assert!(self.contains_site(site), "site {site} outside field");
        self.rows[t][(site - self.lo) as usize] = value;
    }

    /// `r_t(x)`, using tails past the horizon and zero outside the sites.
    pub fn get(&self, t: usize, site: i64) -> S {
        if !self.contains_site(site) {
            return S::zero();
        }
        let idx = (site - self.lo) as usize;
        match self.rows.get(t) {
            Some(row) => row[idx].clone(),
            None => match self.tails[idx] {
                TailState::One => S::one(),
                TailState::Zero => S::zero(),
            },
        }
    }

    /// Root columns that fired get tail One, every other column tail Zero.
    pub fn with_natural_tails(mut self) -> Self {
        for idx in 0..self.width {
            let fired = self.rows.iter().any(|r| r[idx] > S::zero());
            self.tails[idx] = if self.kind == BarrierKind::Root && fired {
                TailState::One
            } else {
                TailState::Zero
            };
        }
        self
    }

    /// Same field with a different kind tag (no validation).
    pub fn with_kind(mut self, kind: BarrierKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn to_f64(&self) -> StoppingField<f64> {
        StoppingField {
            kind: self.kind,
            grid: Grid {
                spacing: self.grid.spacing.to_f64(),
                origin: self.grid.origin.to_f64(),
            },
            time_step: self.time_step.to_f64(),
            lo: self.lo,
            width: self.width,
            rows: self
                .rows
                .iter()
                .map(|r| r.iter().map(|v| v.to_f64()).collect())
                .collect(),
            tails: self.tails.clone(),
        }
    }
}

/// Result of a structural check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructureReport {
    pub valid: bool,
    /// Smallest `(t, site)` cell that breaks the structure. A cell one row
    /// past the horizon stands for the column tail.
    pub first_violation: Option<(usize, i64)>,
}

/// Check the Root or Rost monotonicity of a field, including tails.
pub fn validate_field<S: Scalar>(f: &StoppingField<S>) -> StructureReport {
    let tail_row = f.rows.len();
    let mut worst: Option<(usize, i64)> = None;
    let mut note = |cell: (usize, i64)| {
        if worst.is_none_or(|w| cell < w) {
            worst = Some(cell);
        }
    };
    for (idx, site) in f.sites().enumerate() {
        let column = f.rows.iter().map(|r| &r[idx]);
        let tail = f.tails[idx];
        let mut bad = None;
        for (t, v) in column.clone().enumerate() {
            if *v < S::zero() || *v > S::one() {
                bad = Some(t);
                break;
            }
        }
        if let Some(t) = bad {
            note((t, site));
            continue;
        }
        match f.kind {
            BarrierKind::Root => {
                let fired = column.clone().position(|v| *v > S::zero());
                if let Some(t0) = fired {
                    let broken = column
                        .clone()
                        .enumerate()
                        .skip(t0 + 1)
                        .find(|(_, v)| !v.is_one())
                        .map(|(t, _)| t);
                    match broken {
                        Some(t) => note((t, site)),
                        None if tail == TailState::Zero => note((tail_row, site)),
                        None => {}
                    }
                }
            }
            BarrierKind::Rost => {
                let mut seen_partial = false;
                for (t, v) in column.clone().enumerate() {
                    if *v > S::zero() && seen_partial {
                        note((t, site));
                        break;
                    }
                    if !v.is_one() {
                        seen_partial = true;
                    }
                }
                if tail == TailState::One && seen_partial {
                    note((tail_row, site));
                }
            }
        }
    }
    StructureReport {
        valid: worst.is_none(),
        first_violation: worst,
    }
}

pub(crate) fn ensure_valid<S: Scalar>(f: &StoppingField<S>) -> Result<()> {
    let report = validate_field(f);
    match report.first_violation {
        None => Ok(()),
        Some((t, x)) => Err(Error::InvalidField(format!(
            "{} structure broken at t={t}, site={x}",
            f.kind
        ))),
    }
}

/// Finite set of space-time cells with a barrier kind.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierSet<S> {
    pub kind: BarrierKind,
    pub grid: Grid<S>,
    pub time_step: S,
    /// Rows the set was materialized on; used when closing the set.
    pub horizon: usize,
    pub cells: BTreeSet<(usize, i64)>,
}

impl<S: Scalar> BarrierSet<S> {
    pub fn from_cells(
        kind: BarrierKind,
        grid: Grid<S>,
        time_step: S,
        cells: impl IntoIterator<Item = (usize, i64)>,
    ) -> Self {
        let cells: BTreeSet<_> = cells.into_iter().collect();
        let horizon = cells.iter().map(|c| c.0).max().unwrap_or(0);
        Self {
            kind,
            grid,
            time_step,
            horizon,
            cells,
        }
    }

    pub fn contains(&self, t: usize, site: i64) -> bool {
        self.cells.contains(&(t, site))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Close under the kind's time monotonicity up to `horizon` rows.
    pub fn closure(&self, horizon: usize) -> Self {
        let mut columns: BTreeMap<i64, (usize, usize)> = BTreeMap::new();
        for &(t, x) in &self.cells {
            let e = columns.entry(x).or_insert((t, t));
            e.0 = e.0.min(t);
            e.1 = e.1.max(t);
        }
        let mut cells = BTreeSet::new();
        for (x, (first, last)) in columns {
            match self.kind {
                BarrierKind::Root => cells.extend((first..=horizon.max(last)).map(|t| (t, x))),
                BarrierKind::Rost => cells.extend((0..=last).map(|t| (t, x))),
            }
        }
        Self {
            kind: self.kind,
            grid: self.grid.clone(),
            time_step: self.time_step.clone(),
            horizon: horizon.max(self.horizon),
            cells,
        }
    }

    /// Check the kind's closure property on the materialized rows.
    pub fn is_structured(&self) -> bool {
        self.cells.iter().all(|&(t, x)| match self.kind {
            BarrierKind::Root => t >= self.horizon || self.cells.contains(&(t + 1, x)),
            BarrierKind::Rost => t == 0 || self.cells.contains(&(t - 1, x)),
        })
    }

    /// Physical `(time, position)` of every cell.
    pub fn physical_points(&self) -> Vec<(f64, f64)> {
        let dt = self.time_step.to_f64();
        self.cells
            .iter()
            .map(|&(t, x)| (t as f64 * dt, self.grid.position(x).to_f64()))
            .collect()
    }

    /// The set as a deterministic field on `sites`.
    pub fn to_field(&self, sites: RangeInclusive<i64>) -> StoppingField<S> {
        let mut f = StoppingField::from_fn(
            self.kind,
            self.grid.clone(),
            self.time_step.clone(),
            sites,
            self.horizon,
            |t, x| {
                if self.contains(t, x) {
                    S::one()
                } else {
                    S::zero()
                }
            },
        );
        if self.kind == BarrierKind::Root {
            for x in f.sites() {
                if self.contains(self.horizon, x) {
                    f.set_tail(x, TailState::One);
                }
            }
        }
        f
    }

    /// CSV lines `t,site,physical_time,physical_x`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,site,physical_time,physical_x\n");
        let dt = self.time_step.to_f64();
        for &(t, x) in &self.cells {
            out.push_str(&format!(
                "{t},{x},{},{}\n",
                t as f64 * dt,
                self.grid.position(x).to_f64()
            ));
        }
        out
    }
}

/// `(plus, minus)` barriers: cells with `r > 0` and cells with `r = 1`.
pub fn extract_barriers<S: Scalar>(
    f: &StoppingField<S>,
) -> Result<(BarrierSet<S>, BarrierSet<S>)> {
    ensure_valid(f)?;
    let mut plus = BTreeSet::new();
    let mut minus = BTreeSet::new();
    for (t, row) in f.rows.iter().enumerate() {
        for (x, v) in f.sites().zip(row) {
            if *v > S::zero() {
                plus.insert((t, x));
            }
            if v.is_one() {
                minus.insert((t, x));
            }
        }
    }
    let horizon = f.horizon().unwrap_or(0);
    let make = |cells| BarrierSet {
        kind: f.kind,
        grid: f.grid.clone(),
        time_step: f.time_step.clone(),
        horizon,
        cells,
    };
    Ok((make(plus), make(minus)))
}

/// Time reversal `out_t(x) = f_{T-t}(x)` for `t = 0..=T`; the kind flips.
///
/// Rows of a Rost input past its horizon use the column tail. The Root
/// output continues past `T` with ones exactly on the columns where the
/// input stopped at time zero.
pub fn reverse_field<S: Scalar>(f: &StoppingField<S>, horizon: usize) -> Result<StoppingField<S>> {
    ensure_valid(f)?;
    let kind = f.kind.flipped();
    let mut out = StoppingField::from_fn(
        kind,
        f.grid.clone(),
        f.time_step.clone(),
        f.sites(),
        horizon,
        |t, x| f.get(horizon - t, x),
    );
    if kind == BarrierKind::Root {
        for x in out.sites() {
            if f.get(0, x) > S::zero() {
                out.set_tail(x, TailState::One);
            }
        }
    }
    Ok(out)
}

/// Compactification `(t, x) -> (t/(1+t), x/(1+|x|))`.
pub fn compactify(t: f64, x: f64) -> (f64, f64) {
    (t / (1.0 + t), x / (1.0 + x.abs()))
}

/// Root's metric: Hausdorff distance between the compactified images of
/// two barriers, after closing both under their kind up to a shared
/// physical horizon.
pub fn root_metric<S: Scalar, U: Scalar>(a: &BarrierSet<S>, b: &BarrierSet<U>) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyBarrier);
    }
    let extent_a = a.horizon as f64 * a.time_step.to_f64();
    let extent_b = b.horizon as f64 * b.time_step.to_f64();
    let shared = extent_a.max(extent_b);
    let steps = |dt: f64| (shared / dt + 1e-9).floor() as usize;
    let a = a.closure(steps(a.time_step.to_f64()));
    let b = b.closure(steps(b.time_step.to_f64()));
    let pa = CompactCloud::new(&a.physical_points());
    let pb = CompactCloud::new(&b.physical_points());
    Ok(pa.directed(&pb).max(pb.directed(&pa)))
}

/// Compactified points grouped by column, for nearest-point queries.
struct CompactCloud {
    columns: Vec<(f64, Vec<f64>)>,
}

impl CompactCloud {
    fn new(points: &[(f64, f64)]) -> Self {
        let mut by_x: BTreeMap<u64, (f64, Vec<f64>)> = BTreeMap::new();
        for &(t, x) in points {
            let (ct, cx) = compactify(t, x);
            // order-preserving key for f64 in [-1, 1]
            let key = ((cx + 2.0) * (1u64 << 50) as f64) as u64;
            by_x.entry(key).or_insert((cx, Vec::new())).1.push(ct);
        }
        let columns = by_x
            .into_values()
            .map(|(cx, mut ts)| {
                ts.sort_by(f64::total_cmp);
                ts.dedup();
                (cx, ts)
            })
            .collect();
        Self { columns }
    }

    fn nearest(&self, ct: f64, cx: f64) -> f64 {
        let start = self.columns.partition_point(|(x, _)| *x < cx);
        let mut best = f64::INFINITY;
        let visit = |i: usize, best: &mut f64| -> bool {
            let (x, ts) = &self.columns[i];
            let dx = (x - cx).abs();
            if dx >= *best {
                return false;
            }
            let j = ts.partition_point(|t| *t < ct);
            let mut dt = f64::INFINITY;
            if j < ts.len() {
                dt = dt.min(ts[j] - ct);
            }
            if j > 0 {
                dt = dt.min(ct - ts[j - 1]);
            }
            *best = best.min(dx.hypot(dt));
            true
        };
        for i in start..self.columns.len() {
            if !visit(i, &mut best) {
                break;
            }
        }
        for i in (0..start).rev() {
            if !visit(i, &mut best) {
                break;
            }
        }
        best
    }

    fn directed(&self, other: &CompactCloud) -> f64 {
        let mut worst: f64 = 0.0;
        for (cx, ts) in &self.columns {
            for &ct in ts {
                worst = worst.max(other.nearest(ct, *cx));
            }
        }
        worst
    }
}
