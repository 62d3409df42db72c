//! Root and Rost stopping-probability fields for embedding problems on
//! simple symmetric random walks, with the optimal stopping identities that
//! characterize them.
//!
//! A walk starts from `lambda`, waits for a delay `eta` and must then be
//! stopped so that it ends with law `mu`. [`solve`] builds a field
//! `r_t(x)` of stopping probabilities of Root type (stop late, everywhere
//! after a first stop) or Rost type (stop early). Everything can be
//! computed exactly over the rationals or quickly in `f64`.
//!
//! ```
//! use skorokhod::{solve, BarrierKind, Grid, LatticeMeasure, Problem, Rational, Scalar, SolverOptions};
//!
//! let lambda = LatticeMeasure::<Rational>::dirac(Grid::unit(), 0);
//! let mu = LatticeMeasure::uniform(Grid::unit(), &[-2, 0, 2]);
//! let sol = solve(&Problem::new(lambda, mu), BarrierKind::Root, &SolverOptions::with_tol(0.0)).unwrap();
//! assert_eq!(sol.field.get(2, 0), Rational::from_ratio(1, 3));
//! assert_eq!(sol.diagnostics.horizon, 4);
//! ```

pub mod error;
pub mod fields;
pub mod forward;
pub mod io;
pub mod mc;
pub mod measures;
pub mod multimarginal;
pub mod osp;
pub mod problem;
pub mod scalar;
pub mod scaling;
pub mod solver_root;
pub mod solver_rost;

pub use error::{Error, Result};
pub use fields::{
    extract_barriers, reverse_field, root_metric, validate_field, BarrierKind, BarrierSet, StoppingField,
    StructureReport, TailState,
};
pub use forward::{propagate, DelayLaw, DelaySpec, ForwardTrace, SpaceTimeMeasure, TimeIndex};
pub use measures::{check_convex_order, Grid, LatticeMeasure, OrderReport, PotentialTable};
pub use problem::{solve, Diagnostics, Problem, Solution, SolverOptions};
pub use scalar::{Mode, Rational, Scalar};

#[cfg(doctest)]
mod book {
    macro_rules! chapters {
        ($($name:ident => $path:literal),* $(,)?) => {
            $(
                #[doc = include_str!($path)]
                mod $name {}
            )*
        };
    }

    chapters! {
        introduction => "../../../book/src/introduction.md",
        measures => "../../../book/src/measures.md",
        fields => "../../../book/src/fields.md",
        solvers => "../../../book/src/solvers.md",
        switching => "../../../book/src/switching.md",
        chains => "../../../book/src/chains.md",
        monte_carlo => "../../../book/src/monte_carlo.md",
        scaling => "../../../book/src/scaling.md",
        cli => "../../../book/src/cli.md",
    }
}
