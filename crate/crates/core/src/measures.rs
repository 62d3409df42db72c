//! Discrete measures on affine integer grids and their potentials.
//!
//! A [`LatticeMeasure`] places nonnegative mass on integer sites; site `k`
//! sits at physical position `origin + k * spacing`. The potential
//!
//! ```text
//! U_m(y) = - sum_x |y - x| m({x})
//! ```
//!
//! is always reported in physical units of length, so it scales with the
//! grid spacing.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use crate::error::{Error, Result};
use crate::scalar::{Mode, Scalar};

/// Float deficits smaller than this are treated as rounding noise when
/// subtracting measures.
pub const FLOAT_MASS_SLACK: f64 = 1e-12;

/// Physical embedding of the integer lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<S> {
    pub spacing: S,
    pub origin: S,
}

impl<S: Scalar> Grid<S> {
    pub fn new(spacing: S, origin: S) -> Result<Self> {
        if spacing <= S::zero() {
            return Err(Error::Parse("grid spacing must be positive".into()));
        }
        Ok(Self { spacing, origin })
    }

    /// Unit spacing, origin at zero.
    pub fn unit() -> Self {
        Self {
            spacing: S::one(),
            origin: S::zero(),
        }
    }

    pub fn position(&self, site: i64) -> S {
        self.origin.clone() + self.spacing.clone() * S::from_int(site)
    }

    pub fn distance(&self, a: i64, b: i64) -> S {
        self.spacing.clone() * S::from_int((a - b).abs())
    }
}

/// Finite (sub-)probability measure on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeMeasure<S> {
    grid: Grid<S>,
    atoms: BTreeMap<i64, S>,
}

impl<S: Scalar> LatticeMeasure<S> {
    pub fn empty(grid: Grid<S>) -> Self {
        Self {
            grid,
            atoms: BTreeMap::new(),
        }
    }

    pub fn dirac(grid: Grid<S>, site: i64) -> Self {
        let mut m = Self::empty(grid);
        m.atoms.insert(site, S::one());
        m
    }

    /// Build from `(site, mass)` pairs. Repeated sites accumulate, zero
    /// masses are dropped, negative masses are rejected.
    pub fn from_atoms<I>(grid: Grid<S>, atoms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (i64, S)>,
    {
        let mut m = Self::empty(grid);
        for (site, mass) in atoms {
            if mass < S::zero() {
                return Err(Error::NegativeMass {
                    site,
                    mass: mass.to_text(),
                });
            }
            m.add(site, mass);
        }
        Ok(m)
    }

    /// Uniform weights over the given sites.
    pub fn uniform(grid: Grid<S>, sites: &[i64]) -> Self {
        let w = S::from_ratio(1, sites.len() as i64);
        let mut m = Self::empty(grid);
        for &s in sites {
            m.add(s, w.clone());
        }
        m
    }

    pub fn grid(&self) -> &Grid<S> {
        &self.grid
    }

    pub fn mode(&self) -> Mode {
        S::MODE
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn mass_at(&self, site: i64) -> S {
        self.atoms.get(&site).cloned().unwrap_or_else(S::zero)
    }

    pub fn atoms(&self) -> impl Iterator<Item = (i64, &S)> + '_ {
        self.atoms.iter().map(|(k, v)| (*k, v))
    }

    /// Add mass at a site. Exact zeros never enter the atom map.
    pub fn add(&mut self, site: i64, mass: S) {
        if mass.is_zero() {
            return;
        }
        let entry = self.atoms.entry(site).or_insert_with(S::zero);
        *entry += mass;
        if entry.is_zero() {
            self.atoms.remove(&site);
        }
    }

    pub fn add_measure(&mut self, other: &Self) {
        for (site, mass) in other.atoms() {
            self.add(site, mass.clone());
        }
    }

    pub fn scaled(&self, factor: &S) -> Self {
        let mut m = Self::empty(self.grid.clone());
        for (site, mass) in self.atoms() {
            m.add(site, mass.clone() * factor.clone());
        }
        m
    }

    pub fn total_mass(&self) -> S {
        self.atoms.values().fold(S::zero(), |acc, m| acc + m.clone())
    }

    /// Smallest and largest site carrying mass.
    pub fn support_hull(&self) -> Option<(i64, i64)> {
        let lo = *self.atoms.keys().next()?;
        let hi = *self.atoms.keys().next_back()?;
        Some((lo, hi))
    }

    /// Support hull padded by `pad` sites on either side.
    pub fn padded_window(&self, pad: i64) -> Option<RangeInclusive<i64>> {
        self.support_hull().map(|(lo, hi)| (lo - pad)..=(hi + pad))
    }

    /// `U_m(y) = -sum |y - x| m({x})` at a single site.
    pub fn potential_at(&self, site: i64) -> S {
        let mut acc = S::zero();
        for (x, mass) in self.atoms() {
            acc += S::from_int((site - x).abs()) * mass.clone();
        }
        -(acc * self.grid.spacing.clone())
    }

    /// Potential tabulated on a window of sites.
    pub fn potential(&self, window: RangeInclusive<i64>) -> Result<PotentialTable<S>> {
        if self.atoms.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        if window.is_empty() {
            return Err(Error::EmptyWindow);
        }
        Ok(PotentialTable::from_fn(window, |y| self.potential_at(y)))
    }

    /// Potential on the default window: support hull padded by two sites.
    pub fn default_potential(&self) -> Result<PotentialTable<S>> {
        let window = self.padded_window(2).ok_or(Error::EmptyMeasure)?;
        self.potential(window)
    }

    /// Total mass and mean position (physical units). The mean is `None` for
    /// the zero measure.
    pub fn summary(&self) -> Summary<S> {
        let mass = self.total_mass();
        let mean = if mass.is_zero() {
            None
        } else {
            let first = self
                .atoms()
                .fold(S::zero(), |acc, (x, m)| acc + self.grid.position(x) * m.clone());
            Some(first / mass.clone())
        };
        Summary { mass, mean }
    }

    /// Check that the total mass is one (exactly in rational mode).
    pub fn ensure_probability(&self) -> Result<()> {
        let mass = self.total_mass();
        let gap = mass.clone() - S::one();
        let ok = match S::MODE {
            Mode::Rational => gap.is_zero(),
            Mode::Float => gap.abs().to_f64() <= 1e-12,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::NotProbability(mass.to_text()))
        }
    }

    /// One step of the free simple symmetric random walk: every atom splits
    /// in halves onto its two neighbours.
    pub fn step(&self) -> Self {
        let half = S::from_ratio(1, 2);
        let mut out = Self::empty(self.grid.clone());
        for (x, mass) in self.atoms() {
            let h = mass.clone() * half.clone();
            out.add(x - 1, h.clone());
            out.add(x + 1, h);
        }
        out
    }

    /// Law after `n` free steps.
    pub fn evolve(&self, n: usize) -> Self {
        (0..n).fold(self.clone(), |m, _| m.step())
    }

    /// `E|X - Y|` for independent `X ~ self`, `Y ~ other`, in physical units.
    pub fn expected_distance(&self, other: &Self) -> S {
        let mut acc = S::zero();
        for (x, mx) in self.atoms() {
            for (y, my) in other.atoms() {
                acc += S::from_int((x - y).abs()) * mx.clone() * my.clone();
            }
        }
        acc * self.grid.spacing.clone()
    }

    /// `self - other`, or the first site where the difference is negative.
    /// In float mode deficits within [`FLOAT_MASS_SLACK`] are snapped to zero.
    pub fn checked_sub(&self, other: &Self) -> std::result::Result<Self, i64> {
        let mut out = self.clone();
        for (site, mass) in other.atoms() {
            let left = out.mass_at(site) - mass.clone();
            if left < S::zero() {
                if S::MODE == Mode::Float && left.to_f64() >= -FLOAT_MASS_SLACK {
                    out.atoms.remove(&site);
                    continue;
                }
                return Err(site);
            }
            out.atoms.remove(&site);
            out.add(site, left);
        }
        Ok(out)
    }

    /// Convert to another arithmetic mode (lossy from rational to float).
    pub fn to_f64(&self) -> LatticeMeasure<f64> {
        LatticeMeasure {
            grid: Grid {
                spacing: self.grid.spacing.to_f64(),
                origin: self.grid.origin.to_f64(),
            },
            atoms: self.atoms().map(|(k, v)| (k, v.to_f64())).collect(),
        }
    }

    pub(crate) fn same_grid(&self, other: &Self) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Total mass and physical mean.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary<S> {
    pub mass: S,
    pub mean: Option<S>,
}

/// Potential values on a contiguous window of sites.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialTable<S> {
    lo: i64,
    values: Vec<S>,
}

impl<S: Scalar> PotentialTable<S> {
    pub fn from_fn(window: RangeInclusive<i64>, f: impl Fn(i64) -> S) -> Self {
        let lo = *window.start();
        Self {
            lo,
            values: window.map(f).collect(),
        }
    }

    pub fn window(&self) -> RangeInclusive<i64> {
        self.lo..=(self.lo + self.values.len() as i64 - 1)
    }

    pub fn get(&self, site: i64) -> Option<&S> {
        let idx = usize::try_from(site - self.lo).ok()?;
        self.values.get(idx)
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, &S)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, v)| (self.lo + i as i64, v))
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    /// Site-wise difference `self - other` on the common window.
    pub fn sub(&self, other: &Self) -> Self {
        let lo = self.lo.max(other.lo);
        let hi = (*self.window().end()).min(*other.window().end());
        Self::from_fn(lo..=hi, |y| {
            self.get(y).cloned().unwrap() - other.get(y).cloned().unwrap()
        })
    }

    /// Largest absolute site-wise gap to another table on the common window.
    pub fn max_abs_gap(&self, other: &Self) -> f64 {
        self.sub(other)
            .values
            .iter()
            .map(|v| v.abs().to_f64())
            .fold(0.0, f64::max)
    }
}

/// Outcome of a convex order comparison.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderReport {
    pub ordered: bool,
    pub equal_mass: bool,
    pub equal_mean: bool,
    /// Leftmost site with `U_a(y) < U_b(y)`.
    pub first_violation: Option<i64>,
    pub mode: Mode,
}

/// `a <=_c b`: equal masses, equal means and `U_a >= U_b` everywhere.
pub fn check_convex_order<S: Scalar>(
    a: &LatticeMeasure<S>,
    b: &LatticeMeasure<S>,
) -> Result<OrderReport> {
    let tol = match S::MODE {
        Mode::Rational => S::zero(),
        Mode::Float => S::from_f64(1e-12).unwrap(),
    };
    check_convex_order_within(a, b, &tol)
}

/// Convex order test where masses, means and potentials may differ by `tol`.
pub fn check_convex_order_within<S: Scalar>(
    a: &LatticeMeasure<S>,
    b: &LatticeMeasure<S>,
    tol: &S,
) -> Result<OrderReport> {
    a.same_grid(b)?;
    let sa = a.summary();
    let sb = b.summary();
    let equal_mass = (sa.mass.clone() - sb.mass.clone()).abs() <= *tol;
    let equal_mean = match (&sa.mean, &sb.mean) {
        (Some(x), Some(y)) => (x.clone() - y.clone()).abs() <= *tol,
        (None, None) => true,
        _ => false,
    };
    // U_a - U_b is affine between consecutive atoms of a + b, so the hull
    // condition reduces to the atoms themselves.
    let sites: std::collections::BTreeSet<i64> = a.atoms().chain(b.atoms()).map(|(x, _)| x).collect();
    let first_violation = sites
        .into_iter()
        .find(|&y| a.potential_at(y) < b.potential_at(y) - tol.clone());
    Ok(OrderReport {
        ordered: equal_mass && equal_mean && first_violation.is_none(),
        equal_mass,
        equal_mean,
        first_violation,
        mode: S::MODE,
    })
}

/// Pointwise minimum of atom masses.
pub fn measure_min<S: Scalar>(
    a: &LatticeMeasure<S>,
    b: &LatticeMeasure<S>,
) -> Result<LatticeMeasure<S>> {
    a.same_grid(b)?;
    let mut out = LatticeMeasure::empty(a.grid.clone());
    for (site, ma) in a.atoms() {
        let mb = b.mass_at(site);
        out.add(site, S::min_of(ma.clone(), mb));
    }
    Ok(out)
}
