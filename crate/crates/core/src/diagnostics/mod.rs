//! Empirical checks of the a priori estimates along computed trajectories.
//!
//! Everything here is read-only over a [`Trajectory`] and deterministic.

mod ab;
mod harnack;
mod lyapunov;
mod simon;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ab::{ab_check, AbReport};
pub use harnack::{harnack_ratio, no_trend, HarnackSeries};
pub use lyapunov::{check_j_monotone, j_monotone_report, lyapunov_j, JMonotoneReport};
pub use simon::{
    nu_decay, randomized_gradient_checks, ConvexityCheck, GradientCheck, NuDecay, SimonEnergy,
};

use crate::evolution::{SourceError, SourceTerm, Trajectory};
use crate::frames::FrameKind;
use crate::grid::GridError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosticsError {
    #[error("field must be strictly positive (min {0:e})")]
    NotPositive(f64),
    #[error("expected a {expected:?} trajectory, found {found:?}")]
    WrongFrame { expected: FrameKind, found: FrameKind },
    #[error("trajectory needs at least {needed} samples, has {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error(
        "J increased between samples {index} and {next} (tau {tau0} -> {tau1}: {j0} -> {j1})",
        next = index + 1
    )]
    MonotonicityViolation {
        index: usize,
        tau0: f64,
        tau1: f64,
        j0: f64,
        j1: f64,
    },
    #[error("trajectory spans {span} but the Harnack shift is {h}")]
    SpanTooShort { span: f64, h: f64 },
    #[error("tail has not converged: max |nu| over the last quartile is {max_norm:e}")]
    TailNotConverged { max_norm: f64 },
    #[error("source term is not flagged monotone; the J estimate needs ∂f/∂τ ≥ 0")]
    NotMonotone,
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

pub(crate) fn require_frame(traj: &Trajectory, kinds: &[FrameKind]) -> Result<(), DiagnosticsError> {
    let found = traj.frame().kind();
    if kinds.contains(&found) {
        Ok(())
    } else {
        Err(DiagnosticsError::WrongFrame {
            expected: kinds[0],
            found,
        })
    }
}

/// Per-sample diagnostic summary of a τ-frame run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub tau: f64,
    pub j: f64,
    /// `−2∫ v⁻² (∂_τ v)²` from centered differences; the bound on `dJ/dτ`.
    pub dj_dtau_upper: f64,
    pub min_v: f64,
    pub max_v: f64,
    /// Worst integrated lower-barrier slack against all earlier samples.
    pub ab_margin: f64,
    /// Harnack quotient at this τ, when `τ + h` is inside the run.
    pub harnack_ratio: Option<f64>,
}

/// Builds one [`DiagnosticsRecord`] per sample of a τ-frame trajectory.
pub fn diagnostics_records(
    traj: &Trajectory,
    f: &SourceTerm,
    h: f64,
) -> Result<Vec<DiagnosticsRecord>, DiagnosticsError> {
    require_frame(traj, &[FrameKind::Tau])?;
    let n = traj.len();
    let js = lyapunov::j_values(traj, f)?;
    let uppers = lyapunov::dissipation_bounds(traj);
    let margins = ab::per_sample_margins(traj);
    let mu = traj.run_min().unwrap_or(f64::NAN);
    let harnack = harnack_ratio(traj, h, mu).ok();
    Ok((0..n)
        .map(|k| {
            let rec = traj.records()[k];
            DiagnosticsRecord {
                tau: rec.time,
                j: js[k],
                dj_dtau_upper: uppers[k],
                min_v: rec.min,
                max_v: rec.max,
                ab_margin: margins[k],
                harnack_ratio: harnack
                    .as_ref()
                    .and_then(|s| s.tau.iter().position(|&t| t == rec.time).map(|i| s.c_emp[i])),
            }
        })
        .collect())
}

/// Nonuniform three-point derivative at the middle sample.
pub(crate) fn centered_derivative(x: [f64; 3], y: [f64; 3]) -> f64 {
    let hm = x[1] - x[0];
    let hp = x[2] - x[1];
    (hm * hm * y[2] - hp * hp * y[0] + (hp * hp - hm * hm) * y[1]) / (hm * hp * (hm + hp))
}
