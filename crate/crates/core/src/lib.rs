//! Parabolic prescribed-scalar-curvature flows on flat tori.
//!
//! The equation is solved in three equivalent frames (radial `r`, the
//! rescaled time `t`, and the self-similar time `τ`), with blow-up
//! detection, stationary profiles, empirical checks of the a priori
//! inequalities, curve shortening flow as a source of exact solutions, and
//! the extension analysis at the blow-up radius.

// `!(x > 0.0)` is deliberate: NaN must fail every validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod csf;
pub mod diagnostics;
pub mod evolution;
pub mod extension;
pub mod frames;
pub mod grid;
pub mod par;
pub mod scenarios;
pub mod snapshot;
pub mod stationary;

pub use evolution::{evolve, EvolveError, EvolveOptions, Sampling, SourceTerm, Trajectory};
pub use frames::{Frame, FrameKind, TrivialSolution};
pub use grid::{GridSpec, ScalarField, TorusGrid};
pub use stationary::{solve_stationary, StationaryOptions, StationaryState};
