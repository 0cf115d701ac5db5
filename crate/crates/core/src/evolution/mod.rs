//! Method-of-lines integration of the equation in each frame:
//!
//! ```text
//! r-frame:  (n−1) r u_r = u²Δu + (n−1)(n−2)/2 · u + f u³
//! t-frame:  ũ_t = ũ²Δũ + f ũ³
//! τ-frame:  v_τ = v²Δv + f v³ − v/2
//! ```

mod blowup;
pub(crate) mod rk;
mod source;
mod trajectory;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use blowup::{
    estimate_blowup_time, fit_blowup, subsolution_blowup_tau, BlowupFit, DEFAULT_FIT_WINDOW,
    MIN_FIT_R_SQUARED,
};
pub(crate) use blowup::linear_fit;
pub use source::{SourceError, SourceKind, SourceTerm, SourceValue};
pub use trajectory::{Sample, SampleRecord, Trajectory, TrajectoryError};

use crate::frames::{Frame, FrameError, FrameKind};
use crate::grid::{GridError, ScalarField, TorusGrid};
use rk::{Control, DriveError, OdeSystem, StepControl};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvolveError {
    #[error("invalid evolve input: {0}")]
    InvalidInput(String),
    #[error("blow-up detected at time {time}: sup {sup:e} exceeded the threshold")]
    BlowupDetected {
        time: f64,
        sup: f64,
        trajectory: Box<Trajectory>,
    },
    #[error("step size underflow at time {time} (dt = {dt:e})")]
    StepUnderflow {
        time: f64,
        dt: f64,
        trajectory: Box<Trajectory>,
    },
    #[error("step limit reached at time {time}")]
    StepLimit {
        time: f64,
        trajectory: Box<Trajectory>,
    },
    #[error("blow-up fit rejected: {0}")]
    FitRejected(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

impl EvolveError {
    /// The trajectory computed before the run was cut short, if any.
    pub fn partial(&self) -> Option<&Trajectory> {
        match self {
            EvolveError::BlowupDetected { trajectory, .. }
            | EvolveError::StepUnderflow { trajectory, .. }
            | EvolveError::StepLimit { trajectory, .. } => Some(trajectory),
            _ => None,
        }
    }

    pub fn into_partial(self) -> Option<Trajectory> {
        match self {
            EvolveError::BlowupDetected { trajectory, .. }
            | EvolveError::StepUnderflow { trajectory, .. }
            | EvolveError::StepLimit { trajectory, .. } => Some(*trajectory),
            _ => None,
        }
    }
}

/// Which states get stored. The initial state and the final state are
/// always stored.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sampling {
    /// Store every accepted step.
    pub every_step: bool,
    /// Store at `t_start + k·interval`.
    pub interval: Option<f64>,
    /// Store at these times (those outside the run are ignored).
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub blowup_threshold: f64,
    pub min_dt: f64,
    pub max_dt: Option<f64>,
    pub initial_dt: Option<f64>,
    pub max_steps: usize,
    /// Start time; defaults to the frame time of `r0`.
    pub t_start: Option<f64>,
    pub sampling: Sampling,
    /// Fill in J and step residuals for the stored samples.
    pub annotate: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            blowup_threshold: 1e6,
            min_dt: 1e-14,
            max_dt: None,
            initial_dt: None,
            max_steps: 10_000_000,
            t_start: None,
            sampling: Sampling::default(),
            annotate: true,
        }
    }
}

impl EvolveOptions {
    pub fn validate(&self) -> Result<(), EvolveError> {
        let bad = |m: String| Err(EvolveError::InvalidInput(m));
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return bad(format!("rel_tol {} must lie in (0, 1)", self.rel_tol));
        }
        if !(self.abs_tol > 0.0 && self.abs_tol.is_finite()) {
            return bad(format!("abs_tol {} must be positive", self.abs_tol));
        }
        if !(self.blowup_threshold > 0.0) {
            return bad(format!(
                "blowup_threshold {} must be positive",
                self.blowup_threshold
            ));
        }
        if !(self.min_dt > 0.0 && self.min_dt.is_finite()) {
            return bad(format!("min_dt {} must be positive", self.min_dt));
        }
        if let Some(m) = self.max_dt {
            if !(m > self.min_dt) {
                return bad(format!("max_dt {m} must exceed min_dt"));
            }
        }
        if let Some(i) = self.sampling.interval {
            if !(i > 0.0 && i.is_finite()) {
                return bad(format!("sampling interval {i} must be positive"));
            }
        }
        Ok(())
    }
}

/// Right-hand side of the frame's equation at time `t`.
pub(crate) fn frame_rhs(
    grid: &TorusGrid,
    frame: &Frame,
    f: &SourceTerm,
    t: f64,
    y: &[f64],
    dy: &mut [f64],
) {
    let lap = grid.laplacian_values(y);
    let fv = f.value_at(t);
    match frame.kind() {
        FrameKind::T => {
            for i in 0..y.len() {
                let u = y[i];
                dy[i] = u * u * (lap[i] + fv.at(i) * u);
            }
        }
        FrameKind::Tau => {
            for i in 0..y.len() {
                let v = y[i];
                dy[i] = v * v * (lap[i] + fv.at(i) * v) - 0.5 * v;
            }
        }
        FrameKind::R => {
            let nf = frame.n() as f64;
            let a = frame.linear_coefficient();
            let denom = (nf - 1.0) * t;
            for i in 0..y.len() {
                let u = y[i];
                dy[i] = (u * u * (lap[i] + fv.at(i) * u) + a * u) / denom;
            }
        }
    }
}

struct FrameSystem<'a> {
    grid: &'a TorusGrid,
    frame: &'a Frame,
    f: &'a SourceTerm,
}

impl OdeSystem for FrameSystem<'_> {
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> bool {
        frame_rhs(self.grid, self.frame, self.f, t, y, dy);
        dy.iter().all(|x| x.is_finite())
    }
}

pub(crate) fn output_times(t0: f64, t_end: f64, sampling: &Sampling) -> Vec<f64> {
    let mut stops: Vec<f64> = sampling
        .times
        .iter()
        .copied()
        .filter(|&t| t > t0 && t < t_end)
        .collect();
    if let Some(h) = sampling.interval {
        let mut k = 1u64;
        loop {
            let t = t0 + k as f64 * h;
            if t >= t_end {
                break;
            }
            stops.push(t);
            k += 1;
        }
    }
    stops.push(t_end);
    stops.sort_by(f64::total_cmp);
    let tol = 1e-12 * t_end.abs().max(1.0);
    stops.dedup_by(|a, b| (*a - *b).abs() <= tol);
    stops
}

/// Integrates the frame's equation from `initial` to `t_end`.
///
/// Stops early with [`EvolveError::BlowupDetected`] once the sup of the
/// solution passes `opts.blowup_threshold`; the error carries every sample
/// stored so far, including the state that crossed the threshold.
pub fn evolve(
    initial: &ScalarField,
    frame: &Frame,
    f: &SourceTerm,
    t_end: f64,
    opts: &EvolveOptions,
) -> Result<Trajectory, EvolveError> {
    opts.validate()?;
    let grid = initial.grid();
    if !initial.is_positive() {
        return Err(EvolveError::InvalidInput(format!(
            "initial data must be positive (min {:e})",
            initial.min()
        )));
    }
    let t0 = match opts.t_start {
        Some(t) => t,
        None => frame.start_time()?,
    };
    if !(t_end > t0 && t_end.is_finite()) {
        return Err(EvolveError::InvalidInput(format!(
            "t_end {t_end} must lie beyond the start time {t0}"
        )));
    }
    match frame.kind() {
        FrameKind::R if t0 <= 0.0 => {
            return Err(EvolveError::InvalidInput("radial run must start at r > 0".into()))
        }
        FrameKind::T | FrameKind::Tau if t0 < 0.0 => {
            return Err(EvolveError::InvalidInput(format!(
                "start time {t0} must be nonnegative"
            )))
        }
        _ => {}
    }
    if let SourceValue::Field(fv) = f.value_at(t0) {
        grid.check(&fv)?;
    }

    let sys = FrameSystem { grid, frame, f };
    let ctl = StepControl {
        rel_tol: opts.rel_tol,
        abs_tol: opts.abs_tol,
        min_dt: opts.min_dt,
        max_dt: opts.max_dt.unwrap_or(f64::INFINITY),
        initial_dt: opts.initial_dt,
        max_steps: opts.max_steps,
    };
    let stops = output_times(t0, t_end, &opts.sampling);

    let mut traj = Trajectory::new(*frame);
    traj.push(t0, initial.clone())?;
    let mut blowup: Option<(f64, f64)> = None;
    let mut push_error: Option<TrajectoryError> = None;
    let to_field = |y: &[f64]| ScalarField::new(grid.clone(), y.to_vec());

    let result = rk::integrate(
        &sys,
        t0,
        initial.values().to_vec(),
        t_end,
        &ctl,
        &stops,
        |step, y| {
            let sup = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let crossed = sup > opts.blowup_threshold;
            if opts.sampling.every_step || step.at_stop || crossed {
                let pushed = to_field(y)
                    .map_err(TrajectoryError::from)
                    .and_then(|field| traj.push(step.t, field));
                if let Err(e) = pushed {
                    push_error = Some(e);
                    return Control::Stop;
                }
            }
            if crossed {
                blowup = Some((step.t, sup));
                return Control::Stop;
            }
            Control::Continue
        },
    );
    if let Some(e) = push_error {
        return Err(e.into());
    }
    let finish = |mut traj: Trajectory| {
        if opts.annotate {
            traj.annotate(f);
        }
        Box::new(traj)
    };
    match result {
        Ok((t, y)) => {
            if let Some((time, sup)) = blowup {
                return Err(EvolveError::BlowupDetected {
                    time,
                    sup,
                    trajectory: finish(traj),
                });
            }
            if traj.last().map(|s| s.time) != Some(t) {
                traj.push(t, to_field(&y)?)?;
            }
            Ok(*finish(traj))
        }
        Err((DriveError::Underflow { t, dt }, _, y)) => {
            if traj.last().map(|s| s.time) != Some(t) {
                if let Ok(field) = to_field(&y) {
                    let _ = traj.push(t, field);
                }
            }
            Err(EvolveError::StepUnderflow {
                time: t,
                dt,
                trajectory: finish(traj),
            })
        }
        Err((DriveError::StepLimit { t }, _, _)) => Err(EvolveError::StepLimit {
            time: t,
            trajectory: finish(traj),
        }),
        Err((DriveError::BadInitial, _, _)) => Err(EvolveError::InvalidInput(
            "right-hand side is not finite at the initial state".into(),
        )),
    }
}

/// Runs until the blow-up threshold is crossed and returns the trajectory.
/// Reaching `t_end` without blow-up is an error.
pub fn evolve_to_blowup(
    initial: &ScalarField,
    frame: &Frame,
    f: &SourceTerm,
    t_end: f64,
    opts: &EvolveOptions,
) -> Result<Trajectory, EvolveError> {
    match evolve(initial, frame, f, t_end, opts) {
        Err(EvolveError::BlowupDetected { trajectory, .. }) => Ok(*trajectory),
        Ok(traj) => Err(EvolveError::InvalidInput(format!(
            "no blow-up before t_end (final sup {:e})",
            traj.records().last().map_or(f64::NAN, |r| r.max)
        ))),
        Err(e) => Err(e),
    }
}

/// A posteriori defect of the frame's equation between two samples: the max
/// norm of `(y_b − y_a)/(t_b − t_a) − F(t_mid, (y_a + y_b)/2)`, divided by
/// `max(1, ‖F‖_max)` so that it stays meaningful as the solution grows.
pub fn residual(
    a: (f64, &ScalarField),
    b: (f64, &ScalarField),
    frame: &Frame,
    f: &SourceTerm,
) -> Result<f64, EvolveError> {
    let (ta, ya) = a;
    let (tb, yb) = b;
    let grid = ya.grid();
    grid.check(yb)?;
    let dt = tb - ta;
    if !(dt != 0.0 && dt.is_finite()) {
        return Err(EvolveError::InvalidInput(format!(
            "samples at {ta} and {tb} are not distinct"
        )));
    }
    let mid: Vec<f64> = ya
        .values()
        .iter()
        .zip(yb.values())
        .map(|(p, q)| 0.5 * (p + q))
        .collect();
    let mut rhs = vec![0.0; mid.len()];
    frame_rhs(grid, frame, f, 0.5 * (ta + tb), &mid, &mut rhs);
    let mut defect: f64 = 0.0;
    let mut scale: f64 = 1.0;
    for i in 0..mid.len() {
        let q = (yb.values()[i] - ya.values()[i]) / dt;
        defect = defect.max((q - rhs[i]).abs());
        scale = scale.max(rhs[i].abs());
    }
    Ok(defect / scale)
}
