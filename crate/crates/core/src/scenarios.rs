//! Preset problems and the blow-up pipeline shared by the acceptance suite
//! and the command-line runner.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::csf::{csf_evolve_curvature, csf_to_torus_solution, ConvexCurve, CsfError, CsfOptions};
use crate::evolution::{
    evolve_to_blowup, fit_blowup, BlowupFit, EvolveError, EvolveOptions, SourceError, SourceTerm,
    Trajectory, DEFAULT_FIT_WINDOW,
};
use crate::extension::tail_times;
use crate::frames::{normalize_blowup, to_r_frame, to_tau_frame, Frame, FrameError, TrivialSolution};
use crate::grid::{GridError, ScalarField, TorusGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScenarioKind {
    TrivialOde,
    ConstantFTau,
    PerturbedF,
    CsfCircle,
    CsfEllipse,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("run ended at t = {time} without blowing up")]
    NoBlowup { time: f64 },
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error(transparent)]
    Csf(#[from] CsfError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Initial data, frame, source and end time of a PDE run.
#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub frame: Frame,
    pub initial: ScalarField,
    pub source: SourceTerm,
    pub t_end: f64,
}

/// The spatially constant blow-up: `n = 3`, `f ≡ ½`, `r₀ = u₀ = 1`, so
/// `ũ = 1/√(3/2 − t)` from `t₀ = ½`.
pub fn trivial_ode(points: usize) -> Result<(Preset, TrivialSolution), ScenarioError> {
    let sol = TrivialSolution::new(3, 0.5, 1.0, 1.0)?;
    let grid = TorusGrid::new(2, points, TAU)?;
    let u0 = sol.utilde_at(sol.t0())?;
    Ok((
        Preset {
            frame: Frame::t_frame(3, 1.0)?,
            initial: grid.constant(u0),
            source: SourceTerm::constant(0.5)?,
            t_end: 2.0 * sol.t1(),
        },
        sol,
    ))
}

/// τ-frame run with `f ≡ ½` from `v₀ = 1 + 0.3 cos θ₁` to `τ = 20`.
pub fn constant_f_tau(points: usize) -> Result<Preset, ScenarioError> {
    let grid = TorusGrid::new(2, points, TAU)?;
    Ok(Preset {
        frame: Frame::tau_frame(3, 1.0)?,
        initial: grid.field_from_fn(|x| 1.0 + 0.3 * x[0].cos()),
        source: SourceTerm::constant(0.5)?,
        t_end: 20.0,
    })
}

/// τ-frame run with `f = 1 + 0.1 cos θ₁` from `v₀ ≡ 1` to `τ = 20`.
pub fn perturbed_f(points: usize) -> Result<Preset, ScenarioError> {
    let grid = TorusGrid::new(2, points, TAU)?;
    Ok(Preset {
        frame: Frame::tau_frame(3, 1.0)?,
        initial: grid.constant(1.0),
        source: SourceTerm::field(grid.field_from_fn(|x| 1.0 + 0.1 * x[0].cos()))?,
        t_end: 20.0,
    })
}

pub fn csf_circle(points: usize) -> Result<ConvexCurve, ScenarioError> {
    Ok(ConvexCurve::circle(1.0, points)?)
}

/// Ellipse with axis ratio 2: `a = 2`, `b = 1`.
pub fn csf_ellipse(points: usize) -> Result<ConvexCurve, ScenarioError> {
    Ok(ConvexCurve::ellipse(2.0, 1.0, points)?)
}

/// Geometric sampling of the approach to blow-up, in `ε = 1 − r/r₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TailSampling {
    pub eps_max: f64,
    pub eps_min: f64,
    pub per_decade: usize,
}

impl Default for TailSampling {
    fn default() -> Self {
        Self {
            eps_max: 0.1,
            eps_min: 1e-6,
            per_decade: 10,
        }
    }
}

/// A t-frame run up to blow-up and its images in the other frames.
#[derive(Debug, Clone, PartialEq)]
pub struct BlowupRun {
    /// As integrated, including the state past the threshold.
    pub raw: Trajectory,
    pub fit: BlowupFit,
    /// Blow-up time used for the normalization.
    pub t1: f64,
    /// `t ↦ t/t₁`, `ũ ↦ √t₁ ũ`, samples before `t₁` only.
    pub normalized: Trajectory,
    pub tau: Trajectory,
    pub radial: Trajectory,
}

impl BlowupRun {
    /// `r₁` of the radial reconstruction.
    pub fn r1(&self) -> Option<f64> {
        self.normalized.frame().r1()
    }
}

fn build_run(raw: Trajectory, fit: BlowupFit, t1: f64) -> Result<BlowupRun, ScenarioError> {
    let before = raw.window(f64::NEG_INFINITY, t1 * (1.0 - 1e-15));
    let normalized = normalize_blowup(&before, t1)?;
    let tau = to_tau_frame(&normalized)?;
    let radial = to_r_frame(&normalized)?;
    Ok(BlowupRun {
        raw,
        fit,
        t1,
        normalized,
        tau,
        radial,
    })
}

/// Two passes of a t-frame run: the first fits `t₁`, the second adds the
/// tail times `t₁(1 − ε)^{n−2}` (radius `r₁(1 − ε)`) to the sampling.
pub fn blowup_pipeline(
    preset: &Preset,
    opts: &EvolveOptions,
    tail: &TailSampling,
) -> Result<BlowupRun, ScenarioError> {
    let mut probe = opts.clone();
    probe.sampling.every_step = true;
    probe.annotate = false;
    let first = run_to_blowup(preset, &probe)?;
    let fit = fit_blowup(&first, DEFAULT_FIT_WINDOW)?;
    let mut second = opts.clone();
    second
        .sampling
        .times
        .extend(tail_times(preset.frame.n(), tail.eps_max, tail.eps_min, tail.per_decade).iter().map(|t| t * fit.t1));
    let raw = run_to_blowup(preset, &second)?;
    let fit = fit_blowup(&raw, DEFAULT_FIT_WINDOW)?;
    build_run(raw, fit, fit.t1)
}

fn run_to_blowup(preset: &Preset, opts: &EvolveOptions) -> Result<Trajectory, ScenarioError> {
    match evolve_to_blowup(&preset.initial, &preset.frame, &preset.source, preset.t_end, opts) {
        Ok(t) => Ok(t),
        Err(EvolveError::InvalidInput(m)) if m.starts_with("no blow-up") => {
            Err(ScenarioError::NoBlowup { time: preset.t_end })
        }
        Err(e) => Err(e.into()),
    }
}

/// A CSF run lifted to the 2-torus, normalized with the exact extinction
/// time `A(0)/(2π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsfRun {
    pub curvature: Trajectory,
    pub lift: BlowupRun,
    /// `A(0)/(2π)`.
    pub extinction_time: f64,
}

pub fn csf_pipeline(
    curve: &ConvexCurve,
    opts: &CsfOptions,
    tail: &TailSampling,
) -> Result<CsfRun, ScenarioError> {
    let t1 = curve.extinction_time();
    let mut o = opts.clone();
    o.sampling
        .times
        .extend(tail_times(3, tail.eps_max, tail.eps_min, tail.per_decade).iter().map(|t| t * t1));
    let curvature = match csf_evolve_curvature(&curve.curvature(), t1 * (1.0 - 1e-15), &o) {
        Err(CsfError::Evolve(EvolveError::BlowupDetected { trajectory, .. })) => *trajectory,
        Ok(t) => {
            return Err(ScenarioError::NoBlowup {
                time: t.last().map_or(0.0, |s| s.time),
            })
        }
        Err(e) => return Err(e.into()),
    };
    let fit = fit_blowup(&curvature, DEFAULT_FIT_WINDOW)?;
    let lift = csf_to_torus_solution(&curvature)?;
    Ok(CsfRun {
        curvature,
        lift: build_run(lift, fit, t1)?,
        extinction_time: t1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        let (p, sol) = trivial_ode(8).unwrap();
        assert_eq!(p.frame.start_time().unwrap(), 0.5);
        assert_eq!(p.initial.max(), 1.0);
        assert_eq!(sol.t1(), 1.5);
        let c = constant_f_tau(8).unwrap();
        assert!((c.initial.max() - 1.3).abs() < 1e-12);
        let q = perturbed_f(8).unwrap();
        assert!((q.source.value_at(0.0).max() - 1.1).abs() < 1e-12);
        assert!((csf_ellipse(64).unwrap().extinction_time() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tail_levels_land_on_radii() {
        let (p, sol) = trivial_ode(8).unwrap();
        let opts = EvolveOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            ..EvolveOptions::default()
        };
        let tail = TailSampling {
            eps_max: 1e-1,
            eps_min: 1e-4,
            per_decade: 2,
        };
        let run = blowup_pipeline(&p, &opts, &tail).unwrap();
        assert!((run.t1 - sol.t1()).abs() < 1e-6);
        assert!((run.r1().unwrap() - sol.r1()).abs() < 1e-5);
        let r1 = run.r1().unwrap();
        for eps in [1e-1, 1e-2, 1e-3, 1e-4] {
            let target = r1 * (1.0 - eps);
            assert!(
                run.radial.times().iter().any(|r| (r - target).abs() < 1e-9 * r1),
                "missing r1(1-{eps}): t1 {} {:?}", run.t1, run.radial.times().iter().rev().take(6).map(|r| 1.0 - r / r1).collect::<Vec<_>>()
            );
        }
    }
}
