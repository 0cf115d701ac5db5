//! Curve shortening flow of strictly convex plane curves in the normal-angle
//! parameterization, and its lift to solutions on the 2-torus.
//!
//! A convex curve is described by its support function `S(θ) = n⃗·γ`, with
//! radius of curvature `ρ = S_θθ + S` and curvature `k = 1/ρ`. The flow is
//! `S_t = −k`, equivalently `k_t = k²(k_θθ + k)`, and the enclosed area drops
//! at the constant rate `2π`, so the curve vanishes at `t₁ = A(0)/(2π)`.
//!
//! The curvature equation is the t-frame equation on the circle with
//! `f ≡ 1`, so `ũ(θ₁, θ₂, t) = k(θ₁, t)` solves it on the 2-torus.

use std::f64::consts::{PI, TAU};
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evolution::rk::{self, Control, DriveError, OdeSystem, StepControl};
use crate::evolution::{
    evolve, output_times, residual, EvolveError, EvolveOptions, Sampling, SourceTerm, Trajectory,
    TrajectoryError,
};
use crate::frames::{Frame, FrameError};
use crate::grid::{GridError, ScalarField, TorusGrid};

/// Nominal inner radius of the frame attached to curvature trajectories. CSF
/// runs start at `t = 0` through `EvolveOptions::t_start`, so it never enters
/// the dynamics. It is small so that the frame stays valid after normalizing
/// by any extinction time above `LIFT_R0 / 2`.
pub const LIFT_R0: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CsfError {
    #[error("curve is not strictly convex: min radius of curvature {min_radius:e}")]
    NotConvex { min_radius: f64 },
    #[error("convexity lost at t = {time}: min radius of curvature {min_radius:e}")]
    ConvexityLost {
        time: f64,
        min_radius: f64,
        trajectory: Box<CurveTrajectory>,
    },
    #[error("curvature passed the threshold at t = {time} (max k = {max_curvature:e})")]
    BlowupDetected {
        time: f64,
        max_curvature: f64,
        trajectory: Box<CurveTrajectory>,
    },
    #[error("step size underflow at t = {time} (dt = {dt:e})")]
    StepUnderflow {
        time: f64,
        dt: f64,
        trajectory: Box<CurveTrajectory>,
    },
    #[error("step limit reached at t = {time}")]
    StepLimit {
        time: f64,
        trajectory: Box<CurveTrajectory>,
    },
    #[error("invalid curve-flow input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

impl CsfError {
    /// The samples stored before the run stopped, if any.
    pub fn partial(&self) -> Option<&CurveTrajectory> {
        match self {
            CsfError::ConvexityLost { trajectory, .. }
            | CsfError::BlowupDetected { trajectory, .. }
            | CsfError::StepUnderflow { trajectory, .. }
            | CsfError::StepLimit { trajectory, .. } => Some(trajectory),
            _ => None,
        }
    }

    pub fn into_partial(self) -> Option<CurveTrajectory> {
        match self {
            CsfError::ConvexityLost { trajectory, .. }
            | CsfError::BlowupDetected { trajectory, .. }
            | CsfError::StepUnderflow { trajectory, .. }
            | CsfError::StepLimit { trajectory, .. } => Some(*trajectory),
            _ => None,
        }
    }
}

fn check_circle_grid(grid: &TorusGrid) -> Result<(), CsfError> {
    if grid.dim() != 1 || (grid.period() - TAU).abs() > 1e-12 {
        return Err(CsfError::InvalidInput(format!(
            "curves live on the 1-torus of period 2π, got dim {} period {}",
            grid.dim(),
            grid.period()
        )));
    }
    Ok(())
}

/// The 1-torus of normal angles with `points` samples.
pub fn angle_grid(points: usize) -> Result<TorusGrid, GridError> {
    TorusGrid::new(1, points, TAU)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexCurve {
    support: ScalarField,
    radius: ScalarField,
}

impl ConvexCurve {
    pub fn new(support: ScalarField) -> Result<Self, CsfError> {
        check_circle_grid(support.grid())?;
        let rho = radius_values(&support);
        let radius = ScalarField::new(support.grid().clone(), rho)?;
        if !radius.is_positive() {
            return Err(CsfError::NotConvex {
                min_radius: radius.min(),
            });
        }
        let curve = Self { support, radius };
        let a = curve.area();
        if !(a > 0.0) {
            return Err(CsfError::InvalidInput(format!("enclosed area {a} is not positive")));
        }
        Ok(curve)
    }

    pub fn circle(radius: f64, points: usize) -> Result<Self, CsfError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(CsfError::InvalidInput(format!("radius {radius} must be positive")));
        }
        Self::new(angle_grid(points)?.constant(radius))
    }

    /// Centered ellipse with semi-axes `a` (along x) and `b`:
    /// `S(θ) = √(a² cos²θ + b² sin²θ)`.
    pub fn ellipse(a: f64, b: f64, points: usize) -> Result<Self, CsfError> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(CsfError::InvalidInput(format!("semi-axes {a}, {b} must be positive")));
        }
        let g = angle_grid(points)?;
        Self::new(g.field_from_fn(|x| (a * a * x[0].cos().powi(2) + b * b * x[0].sin().powi(2)).sqrt()))
    }

    pub fn support(&self) -> &ScalarField {
        &self.support
    }

    /// `ρ = S_θθ + S`.
    pub fn radius_of_curvature(&self) -> &ScalarField {
        &self.radius
    }

    pub fn curvature(&self) -> ScalarField {
        self.radius.map(|r| 1.0 / r).expect("positive radius")
    }

    /// `A = ½∫ S ρ dθ = ½∫ S² − S_θ² dθ`.
    pub fn area(&self) -> f64 {
        let s = self.support.values();
        let r = self.radius.values();
        let prod: Vec<f64> = s.iter().zip(r).map(|(a, b)| a * b).collect();
        0.5 * self.support.grid().integrate_values(&prod)
    }

    /// `L = ∫ ρ dθ`.
    pub fn length(&self) -> f64 {
        self.radius.integral()
    }

    /// `A(0)/(2π)`, when the flow extinguishes the curve.
    pub fn extinction_time(&self) -> f64 {
        self.area() / TAU
    }

    /// `(x, y) = S n⃗ + S_θ t⃗` with `n⃗ = (cos θ, sin θ)`, `t⃗ = (−sin θ, cos θ)`.
    pub fn boundary_points(&self) -> Vec<(f64, f64)> {
        let grid = self.support.grid();
        let ds = &grid.gradient_values(self.support.values())[0];
        let s = self.support.values();
        (0..s.len())
            .map(|i| {
                let th = grid.coordinates(i)[0];
                let (sn, cs) = th.sin_cos();
                (s[i] * cs - ds[i] * sn, s[i] * sn + ds[i] * cs)
            })
            .collect()
    }

    /// Max over θ of `|k · |x_θ| − 1|`, with `x_θ` the spectral derivative of
    /// the reconstructed boundary. Along a convex curve `|x_θ| = ρ`.
    pub fn duality_defect(&self) -> f64 {
        let grid = self.support.grid();
        let pts = self.boundary_points();
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let dx = &grid.gradient_values(&xs)[0];
        let dy = &grid.gradient_values(&ys)[0];
        let r = self.radius.values();
        (0..r.len())
            .map(|i| ((dx[i].hypot(dy[i])) / r[i] - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

fn radius_values(support: &ScalarField) -> Vec<f64> {
    let s = support.values();
    let lap = support.grid().laplacian_values(s);
    s.iter().zip(&lap).map(|(a, b)| a + b).collect()
}

/// Support function (up to translation) of the closed convex curve with
/// curvature `k`: solves `S_θθ + S = 1/k`, dropping the `m = ±1` modes.
pub fn support_from_curvature(k: &ScalarField) -> Result<ScalarField, CsfError> {
    check_circle_grid(k.grid())?;
    if !k.is_positive() {
        return Err(CsfError::NotConvex {
            min_radius: f64::NEG_INFINITY,
        });
    }
    let grid = k.grid();
    let rho: Vec<f64> = k.values().iter().map(|x| 1.0 / x).collect();
    let s = grid.apply_wave_multiplier(&rho, |m| {
        let m2 = (m[0] * m[0]) as f64;
        if m2 == 1.0 {
            0.0
        } else {
            1.0 / (1.0 - m2)
        }
    });
    Ok(ScalarField::new(grid.clone(), s)?)
}

/// Enclosed area of the curve with curvature `k`, via [`support_from_curvature`].
pub fn area_from_curvature(k: &ScalarField) -> Result<f64, CsfError> {
    let s = support_from_curvature(k)?;
    let prod: Vec<f64> = s.values().iter().zip(k.values()).map(|(a, b)| a / b).collect();
    Ok(0.5 * k.grid().integrate_values(&prod))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsfOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub min_dt: f64,
    pub max_steps: usize,
    /// Stop once `max k` passes this value.
    pub curvature_threshold: f64,
    pub sampling: Sampling,
}

impl Default for CsfOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            abs_tol: 1e-15,
            min_dt: 1e-15,
            max_steps: 10_000_000,
            curvature_threshold: 1e3,
            sampling: Sampling::default(),
        }
    }
}

impl CsfOptions {
    pub fn validate(&self) -> Result<(), CsfError> {
        self.to_evolve_options().validate()?;
        Ok(())
    }

    /// The same settings for the curvature formulation, started at `t = 0`.
    pub fn to_evolve_options(&self) -> EvolveOptions {
        EvolveOptions {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            blowup_threshold: self.curvature_threshold,
            min_dt: self.min_dt,
            max_steps: self.max_steps,
            t_start: Some(0.0),
            sampling: self.sampling.clone(),
            ..EvolveOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CurveTrajectory {
    times: Vec<f64>,
    curves: Vec<ConvexCurve>,
}

/// Per-sample summary of a curve run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub time: f64,
    pub area: f64,
    pub length: f64,
    pub min_curvature: f64,
    pub max_curvature: f64,
    /// `A(t) − A(0) + 2πt`.
    pub area_law_defect: f64,
}

impl CurveTrajectory {
    fn push(&mut self, time: f64, curve: ConvexCurve) {
        self.times.push(time);
        self.curves.push(curve);
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn curves(&self) -> &[ConvexCurve] {
        &self.curves
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<(f64, &ConvexCurve)> {
        Some((*self.times.last()?, self.curves.last()?))
    }

    pub fn records(&self) -> Vec<CurveRecord> {
        let a0 = self.curves.first().map_or(0.0, ConvexCurve::area);
        self.times
            .iter()
            .zip(&self.curves)
            .map(|(&t, c)| {
                let k = c.curvature();
                let area = c.area();
                CurveRecord {
                    time: t,
                    area,
                    length: c.length(),
                    min_curvature: k.min(),
                    max_curvature: k.max(),
                    area_law_defect: area - a0 + TAU * t,
                }
            })
            .collect()
    }

    /// `max_t |A(t) − A(0) + 2πt| / A(0)`.
    pub fn area_law_deviation(&self) -> f64 {
        let a0 = self.curves.first().map_or(f64::NAN, ConvexCurve::area);
        self.records()
            .iter()
            .map(|r| r.area_law_defect.abs() / a0)
            .fold(0.0, f64::max)
    }

    /// Curvature samples as a t-frame trajectory on the circle.
    pub fn curvature_trajectory(&self) -> Result<Trajectory, CsfError> {
        let frame = Frame::t_frame(3, LIFT_R0)?;
        Ok(Trajectory::from_samples(
            frame,
            self.times.iter().copied().zip(self.curves.iter().map(ConvexCurve::curvature)),
        )?)
    }

    /// Rows `t,theta,S,k`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,theta,S,k")?;
        for (t, c) in self.times.iter().zip(&self.curves) {
            let grid = c.support.grid();
            for (i, (s, r)) in c.support.values().iter().zip(c.radius.values()).enumerate() {
                writeln!(out, "{t:e},{:e},{s:e},{:e}", grid.coordinates(i)[0], 1.0 / r)?;
            }
        }
        Ok(())
    }

    /// Rows `t,x,y` of the reconstructed boundaries.
    pub fn write_boundary_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,x,y")?;
        for (t, c) in self.times.iter().zip(&self.curves) {
            for (x, y) in c.boundary_points() {
                writeln!(out, "{t:e},{x:e},{y:e}")?;
            }
        }
        Ok(())
    }
}

struct SupportFlow<'a> {
    grid: &'a TorusGrid,
}

impl OdeSystem for SupportFlow<'_> {
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> bool {
        let lap = self.grid.laplacian_values(y);
        for i in 0..y.len() {
            dy[i] = -1.0 / (lap[i] + y[i]);
        }
        dy.iter().all(|x| x.is_finite())
    }

    // S may change sign when the origin leaves the curve; convexity is
    // monitored on accepted steps instead
    fn admissible(&self, y: &[f64]) -> bool {
        y.iter().all(|x| x.is_finite())
    }
}

/// Integrates `S_t = −1/(S_θθ + S)` from `t = 0` to `t_end`.
pub fn csf_evolve_support(
    curve: &ConvexCurve,
    t_end: f64,
    opts: &CsfOptions,
) -> Result<CurveTrajectory, CsfError> {
    opts.validate()?;
    let t1 = curve.extinction_time();
    if !(t_end > 0.0 && t_end < t1) {
        return Err(CsfError::InvalidInput(format!(
            "t_end {t_end} must lie in (0, A(0)/2π = {t1})"
        )));
    }
    let grid = curve.support.grid();
    let sys = SupportFlow { grid };
    let ctl = StepControl {
        rel_tol: opts.rel_tol,
        abs_tol: opts.abs_tol,
        min_dt: opts.min_dt,
        max_dt: f64::INFINITY,
        initial_dt: None,
        max_steps: opts.max_steps,
    };
    let stops = output_times(0.0, t_end, &opts.sampling);
    let mut traj = CurveTrajectory::default();
    traj.push(0.0, curve.clone());
    enum Stop {
        Convexity(f64, f64),
        Blowup(f64, f64),
    }
    let mut stopped: Option<Stop> = None;

    let result = rk::integrate(
        &sys,
        0.0,
        curve.support.values().to_vec(),
        t_end,
        &ctl,
        &stops,
        |step, y| {
            let support = ScalarField::new(grid.clone(), y.to_vec()).expect("finite state");
            let rho = radius_values(&support);
            let min_rho = rho.iter().copied().fold(f64::INFINITY, f64::min);
            if !(min_rho > 0.0) {
                stopped = Some(Stop::Convexity(step.t, min_rho));
                return Control::Stop;
            }
            let max_k = 1.0 / min_rho;
            let crossed = max_k > opts.curvature_threshold;
            if opts.sampling.every_step || step.at_stop || crossed {
                let radius = ScalarField::new(grid.clone(), rho).expect("finite radius");
                traj.push(step.t, ConvexCurve { support, radius });
            }
            if crossed {
                stopped = Some(Stop::Blowup(step.t, max_k));
                return Control::Stop;
            }
            Control::Continue
        },
    );
    match (result, stopped) {
        (_, Some(Stop::Convexity(time, min_radius))) => Err(CsfError::ConvexityLost {
            time,
            min_radius,
            trajectory: Box::new(traj),
        }),
        (_, Some(Stop::Blowup(time, max_curvature))) => Err(CsfError::BlowupDetected {
            time,
            max_curvature,
            trajectory: Box::new(traj),
        }),
        (Ok(_), None) => Ok(traj),
        (Err((DriveError::Underflow { t, dt }, _, _)), None) => Err(CsfError::StepUnderflow {
            time: t,
            dt,
            trajectory: Box::new(traj),
        }),
        (Err((DriveError::StepLimit { t }, _, _)), None) => Err(CsfError::StepLimit {
            time: t,
            trajectory: Box::new(traj),
        }),
        (Err((DriveError::BadInitial, _, _)), None) => Err(CsfError::InvalidInput(
            "flow is not finite at the initial curve".into(),
        )),
    }
}

/// Integrates `k_t = k²(k_θθ + k)` from `t = 0`: the t-frame equation on the
/// circle with `f ≡ 1`.
pub fn csf_evolve_curvature(
    k0: &ScalarField,
    t_end: f64,
    opts: &CsfOptions,
) -> Result<Trajectory, CsfError> {
    check_circle_grid(k0.grid())?;
    let frame = Frame::t_frame(3, LIFT_R0)?;
    let f = SourceTerm::constant(1.0).expect("positive constant");
    Ok(evolve(k0, &frame, &f, t_end, &opts.to_evolve_options())?)
}

/// `k̃ = √(A(t)/π) · k`, with `A` recovered from `k` itself.
pub fn normalized_curvature(traj: &Trajectory) -> Result<Trajectory, CsfError> {
    let mut out = Trajectory::new(*traj.frame());
    for s in traj.samples() {
        let a = area_from_curvature(&s.field)?;
        out.push(s.time, s.field.scale((a / PI).sqrt())?)?;
    }
    Ok(out)
}

/// `max_θ |k̃ − 1|` per sample.
pub fn normalized_deviation(traj: &Trajectory) -> Result<Vec<(f64, f64)>, CsfError> {
    Ok(normalized_curvature(traj)?
        .samples()
        .iter()
        .map(|s| {
            let d = s.field.values().iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max);
            (s.time, d)
        })
        .collect())
}

/// Lifts a curvature trajectory to the 2-torus, `ũ(θ₁, θ₂, t) = k(θ₁, t)`,
/// as a t-frame solution with `f ≡ 1`.
pub fn csf_to_torus_solution(traj: &Trajectory) -> Result<Trajectory, CsfError> {
    let mut out = Trajectory::new(*traj.frame());
    let Some(first) = traj.first() else {
        return Ok(out);
    };
    check_circle_grid(first.field.grid())?;
    let n = first.field.grid().points_per_axis();
    let grid = TorusGrid::new(2, n, TAU)?;
    for s in traj.samples() {
        let k = s.field.values();
        let vals = (0..grid.len()).map(|idx| k[idx / n]).collect();
        out.push(s.time, ScalarField::new(grid.clone(), vals)?)?;
    }
    Ok(out)
}

/// Largest [`residual`] over consecutive samples closer than `gap_scale`
/// times the local time scale `1/max ũ²`; wider pairs measure the sampling,
/// not the solution. Returns the residual and the number of pairs used.
pub fn close_pair_residual(traj: &Trajectory, gap_scale: f64) -> Result<(f64, usize), CsfError> {
    let f = SourceTerm::constant(1.0).expect("positive constant");
    let s = traj.samples();
    let mut worst: f64 = 0.0;
    let mut used = 0;
    for w in s.windows(2) {
        let m = w[0].field.max().max(w[1].field.max());
        if (w[1].time - w[0].time) * m * m <= gap_scale {
            let r = residual(
                (w[0].time, &w[0].field),
                (w[1].time, &w[1].field),
                traj.frame(),
                &f,
            )?;
            worst = worst.max(r);
            used += 1;
        }
    }
    Ok((worst, used))
}

/// Sample times `t_j` and `t_j + gap_scale · 2(t₁ − t_j)` for a run
/// extinguishing at `t₁`, where `k² ≈ 1/(2(t₁ − t))`. Pass ten times the
/// same `gap_scale` to [`close_pair_residual`]: `max k²` can exceed the
/// circle value several times over while the curve is still eccentric.
pub fn paired_times(base: &[f64], t1: f64, gap_scale: f64) -> Vec<f64> {
    let mut out: Vec<f64> = base
        .iter()
        .flat_map(|&t| [t, t + gap_scale * 2.0 * (t1 - t).max(0.0)])
        .collect();
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}
