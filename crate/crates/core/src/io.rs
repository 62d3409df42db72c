//! JSON files for measures, fields and delays.
//!
//! Every number is a string: `p/q` for rationals, the shortest round-trip
//! decimal for floats. Reading accepts either form in both modes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{BarrierKind, StoppingField, TailState};
use crate::forward::{DelaySpec, SpaceTimeMeasure};
use crate::measures::{Grid, LatticeMeasure};
use crate::scalar::{Mode, Scalar};

fn zero_text() -> String {
    "0".into()
}

/// `{spacing, origin, atoms: [[site, mass], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    pub spacing: String,
    #[serde(default = "zero_text")]
    pub origin: String,
    pub atoms: Vec<(i64, String)>,
}

/// Rows are sparse: `[t, [[site, r], ...]]`, with unlisted sites at zero.
/// The site range is the span of `tails`, which lists every column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    pub kind: BarrierKind,
    pub spacing: String,
    #[serde(default = "zero_text")]
    pub origin: String,
    pub time_step: String,
    pub rows: Vec<(usize, Vec<(i64, String)>)>,
    pub tails: Vec<(i64, TailState)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum DelayFile {
    Deterministic { t0: usize },
    /// `[t, site, mass]` triples.
    Explicit { entries: Vec<(usize, i64, String)> },
}

fn grid_from_text<S: Scalar>(spacing: &str, origin: &str) -> Result<Grid<S>> {
    Grid::new(S::parse_str(spacing)?, S::parse_str(origin)?)
}

pub fn measure_to_file<S: Scalar>(m: &LatticeMeasure<S>) -> MeasureFile {
    MeasureFile {
        mode: Some(S::MODE),
        spacing: m.grid().spacing.to_text(),
        origin: m.grid().origin.to_text(),
        atoms: m.atoms().map(|(site, v)| (site, v.to_text())).collect(),
    }
}

pub fn measure_from_file<S: Scalar>(f: &MeasureFile) -> Result<LatticeMeasure<S>> {
    let atoms = f
        .atoms
        .iter()
        .map(|(site, mass)| Ok((*site, S::parse_str(mass)?)))
        .collect::<Result<Vec<_>>>()?;
    LatticeMeasure::from_atoms(grid_from_text(&f.spacing, &f.origin)?, atoms)
}

/// Zero cells are left out of the rows.
pub fn field_to_file<S: Scalar>(f: &StoppingField<S>) -> FieldFile {
    let lo = *f.sites().start();
    FieldFile {
        mode: Some(S::MODE),
        kind: f.kind(),
        spacing: f.grid().spacing.to_text(),
        origin: f.grid().origin.to_text(),
        time_step: f.time_step().to_text(),
        rows: f
            .rows()
            .iter()
            .enumerate()
            .map(|(t, row)| {
                let cells = (lo..)
                    .zip(row)
                    .filter(|(_, v)| !v.is_zero())
                    .map(|(x, v)| (x, v.to_text()))
                    .collect();
                (t, cells)
            })
            .collect(),
        tails: f.sites().zip(f.tails().iter().copied()).collect(),
    }
}

pub fn field_from_file<S: Scalar>(f: &FieldFile) -> Result<StoppingField<S>> {
    let lo = f.tails.iter().map(|(x, _)| *x).min().ok_or(Error::EmptyWindow)?;
    let hi = f.tails.iter().map(|(x, _)| *x).max().ok_or(Error::EmptyWindow)?;
    let width = (hi - lo + 1) as usize;
    if f.tails.len() != width {
        return Err(Error::Parse(format!(
            "tails must list each site of {lo}..={hi} once, found {} entries",
            f.tails.len()
        )));
    }
    let horizon = f.rows.iter().map(|(t, _)| *t).max();
    let mut dense = vec![vec![S::zero(); width]; horizon.map_or(0, |h| h + 1)];
    for (t, cells) in &f.rows {
        for (x, v) in cells {
            if !(lo..=hi).contains(x) {
                return Err(Error::Parse(format!("row {t} names site {x} outside {lo}..={hi}")));
            }
            dense[*t][(x - lo) as usize] = S::parse_str(v)?;
        }
    }
    let mut field = StoppingField::new(f.kind, grid_from_text(&f.spacing, &f.origin)?, S::parse_str(&f.time_step)?, lo..=hi);
    for row in dense {
        field.push_row(row);
    }
    for (x, tail) in &f.tails {
        field.set_tail(*x, *tail);
    }
    Ok(field)
}

pub fn delay_to_file<S: Scalar>(d: &DelaySpec<S>) -> Result<DelayFile> {
    match d {
        DelaySpec::Deterministic(t0) => Ok(DelayFile::Deterministic { t0: *t0 }),
        DelaySpec::ExplicitSpaceTime(a) => Ok(DelayFile::Explicit {
            entries: a.entries().map(|((t, site), m)| (t, site, m.to_text())).collect(),
        }),
        DelaySpec::FieldDelay { .. } => Err(Error::Unsupported("field delays have no file form".into())),
    }
}

/// Explicit delays live on `grid` with physical step `time_step`.
pub fn delay_from_file<S: Scalar>(f: &DelayFile, grid: &Grid<S>, time_step: &S) -> Result<DelaySpec<S>> {
    match f {
        DelayFile::Deterministic { t0 } => Ok(DelaySpec::Deterministic(*t0)),
        DelayFile::Explicit { entries } => {
            let entries = entries
                .iter()
                .map(|(t, site, m)| Ok(((*t, *site), S::parse_str(m)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(DelaySpec::ExplicitSpaceTime(SpaceTimeMeasure::from_entries(
                grid.clone(),
                time_step.clone(),
                entries,
            )?))
        }
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Compact JSON with a trailing newline.
pub fn json_text<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string(value)?;
    text.push('\n');
    Ok(text)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, json_text(value)?)?;
    Ok(())
}

pub fn read_measure<S: Scalar>(path: &Path) -> Result<LatticeMeasure<S>> {
    measure_from_file(&read_json(path)?)
}

pub fn read_field<S: Scalar>(path: &Path) -> Result<StoppingField<S>> {
    field_from_file(&read_json(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;
    use proptest::prelude::*;

    type Q = Rational;

    proptest! {
        #[test]
        fn measure_round_trip(atoms in prop::collection::btree_map(-20i64..20, (1i64..50, 1i64..50), 1..8)) {
            let m = LatticeMeasure::<Q>::from_atoms(Grid::unit(), atoms.into_iter().map(|(x, (p, q))| (x, Q::from_ratio(p, q)))).unwrap();
            let text = serde_json::to_string(&measure_to_file(&m)).unwrap();
            let back: LatticeMeasure<Q> = measure_from_file(&serde_json::from_str(&text).unwrap()).unwrap();
            prop_assert_eq!(back, m);
        }

        #[test]
        fn float_measure_round_trip(atoms in prop::collection::btree_map(-20i64..20, 1e-9f64..1.0, 1..8)) {
            let m = LatticeMeasure::<f64>::from_atoms(Grid::new(0.125, 0.0).unwrap(), atoms.into_iter()).unwrap();
            let text = serde_json::to_string(&measure_to_file(&m)).unwrap();
            let back: LatticeMeasure<f64> = measure_from_file(&serde_json::from_str(&text).unwrap()).unwrap();
            prop_assert_eq!(back, m);
        }
    }

    #[test]
    fn field_round_trip() {
        let f = StoppingField::from_fn(BarrierKind::Root, Grid::<Q>::unit(), Q::from_ratio(1, 4), -2..=2, 3, |t, x| {
            if t >= 2 && x != 0 { Q::from_ratio(1, 1) } else if t == 2 { Q::from_ratio(1, 3) } else { Q::from_ratio(0, 1) }
        })
        .with_natural_tails();
        let text = serde_json::to_string(&field_to_file(&f)).unwrap();
        assert!(text.contains("\"1/3\""));
        let back: StoppingField<Q> = field_from_file(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn delay_round_trip() {
        let a = SpaceTimeMeasure::from_entries(Grid::<Q>::unit(), Q::from_ratio(1, 1), [((0, 0), Q::from_ratio(1, 2)), ((1, 1), Q::from_ratio(1, 4)), ((1, -1), Q::from_ratio(1, 4))]).unwrap();
        let d = DelaySpec::ExplicitSpaceTime(a);
        let text = serde_json::to_string(&delay_to_file(&d).unwrap()).unwrap();
        let back = delay_from_file(&serde_json::from_str(&text).unwrap(), &Grid::unit(), &Q::from_ratio(1, 1)).unwrap();
        assert_eq!(back, d);
        let det: DelayFile = serde_json::from_str(r#"{"type":"deterministic","t0":3}"#).unwrap();
        assert_eq!(delay_from_file::<Q>(&det, &Grid::unit(), &Q::from_ratio(1, 1)).unwrap(), DelaySpec::Deterministic(3));
    }

    #[test]
    fn malformed_files_are_rejected() {
        let bad = r#"{"spacing":"1","atoms":[[0,"one"]]}"#;
        let f: MeasureFile = serde_json::from_str(bad).unwrap();
        assert!(matches!(measure_from_file::<Q>(&f), Err(Error::Parse(_))));
        let neg = r#"{"spacing":"1","atoms":[[0,"-1/2"]]}"#;
        let f: MeasureFile = serde_json::from_str(neg).unwrap();
        assert!(matches!(measure_from_file::<Q>(&f), Err(Error::NegativeMass { .. })));
        let gap = r#"{"kind":"root","spacing":"1","time_step":"1","rows":[],"tails":[[0,"one"],[2,"zero"]]}"#;
        let f: FieldFile = serde_json::from_str(gap).unwrap();
        assert!(matches!(field_from_file::<Q>(&f), Err(Error::Parse(_))));
    }
}
