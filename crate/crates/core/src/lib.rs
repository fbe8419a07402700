//! Exact enumeration and counting for integral Apollonian circle packings.
//!
//! * [`descartes`]: the Descartes form, flips and root reduction.
//! * [`orbit`]: pruned walks over the Apollonian group orbit and circle counts.
//! * [`geometry`]: augmented curvature-center matrices, inversions and SVG output.
//! * [`arithmetic`]: prime curvatures and the orbit modulo primes.
//! * [`analysis`]: threshold series, exponent fits and reports.
//! * [`verify`]: the built-in invariant suite behind `apollonian verify`.
//! * [`cli`]: the `apollonian` command-line front end.

pub mod analysis;
pub mod arithmetic;
pub mod cli;
pub mod descartes;
pub mod error;
pub mod geometry;
pub mod orbit;
pub mod verify;

pub use descartes::{Curvature, PackingKind, Quadruple, RootQuadruple};
pub use error::{Error, Result};
