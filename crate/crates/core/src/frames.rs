//! Changes of variables between the radial frame `(r, u)`, the frame
//! `(t, ũ)` where the equation becomes `ũ_t = ũ²Δũ + fũ³`, and the
//! self-similar frame `(τ, v)`.
//!
//! ```text
//! t = r^{n−2} / ((n−1)(n−2))      ũ = r^{1−n/2} u
//! τ = −log(1 − t)                  v = √(1 − t) ũ      (blow-up at t = 1)
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evolution::{Trajectory, TrajectoryError};
use crate::grid::{GridError, ScalarField};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrameError {
    #[error("ambient dimension n = {0} must be at least 3")]
    DimensionTooSmall(u32),
    #[error("{name} = {value} out of range: {reason}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("field must be strictly positive (min {0:e})")]
    NotPositive(f64),
    #[error("expected a {expected:?} trajectory, found {found:?}")]
    WrongFrame { expected: FrameKind, found: FrameKind },
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

fn out_of_range(name: &'static str, value: f64, reason: &'static str) -> FrameError {
    FrameError::OutOfRange {
        name,
        value,
        reason,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameKind {
    #[serde(rename = "R_FRAME")]
    R,
    #[serde(rename = "T_FRAME")]
    T,
    #[serde(rename = "TAU_FRAME")]
    Tau,
}

/// Which time variable a solution lives in, plus the data needed to map it
/// back to the radial frame.
///
/// `scale` records a blow-up normalization: frame time `t` corresponds to raw
/// time `scale · t` and `ũ_raw = ũ / √scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FrameRepr", into = "FrameRepr")]
pub struct Frame {
    kind: FrameKind,
    n: u32,
    r0: f64,
    t1: Option<f64>,
    scale: f64,
}

#[derive(Serialize, Deserialize)]
struct FrameRepr {
    kind: FrameKind,
    n: u32,
    r0: f64,
    #[serde(default)]
    t1: Option<f64>,
    #[serde(default = "one")]
    scale: f64,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<FrameRepr> for Frame {
    type Error = FrameError;
    fn try_from(r: FrameRepr) -> Result<Self, FrameError> {
        Frame::with_scale(r.kind, r.n, r.r0, r.t1, r.scale)
    }
}

impl From<Frame> for FrameRepr {
    fn from(f: Frame) -> Self {
        FrameRepr {
            kind: f.kind,
            n: f.n,
            r0: f.r0,
            t1: f.t1,
            scale: f.scale,
        }
    }
}

impl Frame {
    pub fn new(kind: FrameKind, n: u32, r0: f64, t1: Option<f64>) -> Result<Self, FrameError> {
        Self::with_scale(kind, n, r0, t1, 1.0)
    }

    pub fn with_scale(
        kind: FrameKind,
        n: u32,
        r0: f64,
        t1: Option<f64>,
        scale: f64,
    ) -> Result<Self, FrameError> {
        if n < 3 {
            return Err(FrameError::DimensionTooSmall(n));
        }
        if !(r0.is_finite() && r0 > 0.0) {
            return Err(out_of_range("r0", r0, "must be positive"));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(out_of_range("scale", scale, "must be positive"));
        }
        if kind == FrameKind::Tau && t1 != Some(1.0) {
            return Err(out_of_range(
                "t1",
                t1.unwrap_or(f64::NAN),
                "the tau frame needs blow-up normalized to t1 = 1",
            ));
        }
        if let Some(t1) = t1 {
            if !(t1.is_finite() && t1 > 0.0) {
                return Err(out_of_range("t1", t1, "must be positive"));
            }
            let r1 = t_to_r(t1 * scale, n)?;
            if !(r0 < r1) {
                return Err(out_of_range("r0", r0, "must lie below r1"));
            }
        }
        Ok(Self {
            kind,
            n,
            r0,
            t1,
            scale,
        })
    }

    pub fn r_frame(n: u32, r0: f64) -> Result<Self, FrameError> {
        Self::new(FrameKind::R, n, r0, None)
    }

    pub fn t_frame(n: u32, r0: f64) -> Result<Self, FrameError> {
        Self::new(FrameKind::T, n, r0, None)
    }

    pub fn tau_frame(n: u32, r0: f64) -> Result<Self, FrameError> {
        Self::new(FrameKind::Tau, n, r0, Some(1.0))
    }

    pub fn kind(&self) -> FrameKind {
        self.kind
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn t1(&self) -> Option<f64> {
        self.t1
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Blow-up radius implied by `t1`, if known.
    pub fn r1(&self) -> Option<f64> {
        self.t1.and_then(|t1| t_to_r(t1 * self.scale, self.n).ok())
    }

    /// The frame time corresponding to `r0`.
    pub fn start_time(&self) -> Result<f64, FrameError> {
        match self.kind {
            FrameKind::R => Ok(self.r0),
            FrameKind::T => Ok(r_to_t(self.r0, self.n)? / self.scale),
            FrameKind::Tau => t_to_tau(r_to_t(self.r0, self.n)? / self.scale),
        }
    }

    /// `A = (n−1)(n−2)/2`, the linear coefficient of the radial equation.
    pub fn linear_coefficient(&self) -> f64 {
        let n = self.n as f64;
        (n - 1.0) * (n - 2.0) / 2.0
    }

    fn retagged(&self, kind: FrameKind, t1: Option<f64>, scale: f64) -> Frame {
        Frame {
            kind,
            t1,
            scale,
            ..*self
        }
    }
}

fn check_n(n: u32) -> Result<f64, FrameError> {
    if n < 3 {
        Err(FrameError::DimensionTooSmall(n))
    } else {
        Ok(n as f64)
    }
}

pub fn r_to_t(r: f64, n: u32) -> Result<f64, FrameError> {
    let nf = check_n(n)?;
    if !(r.is_finite() && r > 0.0) {
        return Err(out_of_range("r", r, "must be positive"));
    }
    Ok(r.powf(nf - 2.0) / ((nf - 1.0) * (nf - 2.0)))
}

pub fn t_to_r(t: f64, n: u32) -> Result<f64, FrameError> {
    let nf = check_n(n)?;
    if !(t.is_finite() && t > 0.0) {
        return Err(out_of_range("t", t, "must be positive"));
    }
    Ok(((nf - 1.0) * (nf - 2.0) * t).powf(1.0 / (nf - 2.0)))
}

pub fn t_to_tau(t: f64) -> Result<f64, FrameError> {
    if !(0.0..1.0).contains(&t) {
        return Err(out_of_range("t", t, "must lie in [0, 1)"));
    }
    Ok(-(-t).ln_1p())
}

pub fn tau_to_t(tau: f64) -> Result<f64, FrameError> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(out_of_range("tau", tau, "must be finite and nonnegative"));
    }
    Ok(-(-tau).exp_m1())
}

fn require_positive(field: &ScalarField) -> Result<(), FrameError> {
    if field.is_positive() {
        Ok(())
    } else {
        Err(FrameError::NotPositive(field.min()))
    }
}

pub fn u_to_utilde(u: &ScalarField, r: f64, n: u32) -> Result<ScalarField, FrameError> {
    require_positive(u)?;
    r_to_t(r, n)?;
    Ok(u.scale(r.powf(1.0 - n as f64 / 2.0))?)
}

pub fn utilde_to_u(utilde: &ScalarField, r: f64, n: u32) -> Result<ScalarField, FrameError> {
    require_positive(utilde)?;
    r_to_t(r, n)?;
    Ok(utilde.scale(r.powf(n as f64 / 2.0 - 1.0))?)
}

pub fn utilde_to_v(utilde: &ScalarField, t: f64) -> Result<ScalarField, FrameError> {
    t_to_tau(t)?;
    Ok(utilde.scale((1.0 - t).sqrt())?)
}

pub fn v_to_utilde(v: &ScalarField, t: f64) -> Result<ScalarField, FrameError> {
    t_to_tau(t)?;
    Ok(v.scale(1.0 / (1.0 - t).sqrt())?)
}

/// Rescales a t-frame trajectory with blow-up time `t1_raw` so that blow-up
/// happens at `t = 1`: `t ↦ t/t1_raw`, `ũ ↦ √t1_raw · ũ`.
///
/// The source term must be rescaled to match; see
/// [`SourceTerm::time_rescaled`](crate::evolution::SourceTerm::time_rescaled).
pub fn normalize_blowup(traj: &Trajectory, t1_raw: f64) -> Result<Trajectory, FrameError> {
    let frame = traj.frame();
    if frame.kind() != FrameKind::T {
        return Err(FrameError::WrongFrame {
            expected: FrameKind::T,
            found: frame.kind(),
        });
    }
    if !(t1_raw.is_finite() && t1_raw > 0.0) {
        return Err(out_of_range("t1_raw", t1_raw, "must be positive"));
    }
    if let Some(last) = traj.last() {
        if !(t1_raw > last.time) {
            return Err(out_of_range(
                "t1_raw",
                t1_raw,
                "must exceed the last sample time",
            ));
        }
    }
    let scale = frame.scale() * t1_raw;
    let new_frame = Frame::with_scale(FrameKind::T, frame.n(), frame.r0(), Some(1.0), scale)?;
    let lambda = t1_raw.sqrt();
    let mut out = Trajectory::new(new_frame);
    for s in traj.samples() {
        out.push(s.time / t1_raw, s.field.scale(lambda)?)?;
    }
    Ok(out)
}

/// Maps a normalized t-frame trajectory (blow-up at 1) to the τ-frame.
pub fn to_tau_frame(traj: &Trajectory) -> Result<Trajectory, FrameError> {
    let frame = traj.frame();
    if frame.kind() != FrameKind::T {
        return Err(FrameError::WrongFrame {
            expected: FrameKind::T,
            found: frame.kind(),
        });
    }
    if frame.t1() != Some(1.0) {
        return Err(out_of_range(
            "t1",
            frame.t1().unwrap_or(f64::NAN),
            "normalize the blow-up time first",
        ));
    }
    let mut out = Trajectory::new(frame.retagged(FrameKind::Tau, Some(1.0), frame.scale()));
    for s in traj.samples() {
        out.push(t_to_tau(s.time)?, utilde_to_v(&s.field, s.time)?)?;
    }
    Ok(out)
}

/// Inverse of [`to_tau_frame`].
pub fn to_t_frame(traj: &Trajectory) -> Result<Trajectory, FrameError> {
    let frame = traj.frame();
    if frame.kind() != FrameKind::Tau {
        return Err(FrameError::WrongFrame {
            expected: FrameKind::Tau,
            found: frame.kind(),
        });
    }
    let mut out = Trajectory::new(frame.retagged(FrameKind::T, Some(1.0), frame.scale()));
    for s in traj.samples() {
        let t = tau_to_t(s.time)?;
        out.push(t, v_to_utilde(&s.field, t)?)?;
    }
    Ok(out)
}

/// Reconstructs the radial frame from a t-frame trajectory, undoing any
/// blow-up normalization. Samples at `t ≤ 0` have no radius and are dropped.
pub fn to_r_frame(traj: &Trajectory) -> Result<Trajectory, FrameError> {
    let frame = traj.frame();
    if frame.kind() != FrameKind::T {
        return Err(FrameError::WrongFrame {
            expected: FrameKind::T,
            found: frame.kind(),
        });
    }
    let n = frame.n();
    let scale = frame.scale();
    let mut out = Trajectory::new(frame.retagged(FrameKind::R, frame.t1(), scale));
    for s in traj.samples().iter().filter(|s| s.time > 0.0) {
        let r = t_to_r(s.time * scale, n)?;
        let raw = s.field.scale(1.0 / scale.sqrt())?;
        out.push(r, utilde_to_u(&raw, r, n)?)?;
    }
    Ok(out)
}

/// The spatially constant solution of the radial equation with constant
/// `f = f0` and `u(r0) = u0`:
///
/// ```text
/// u(r) = 1 / √(c0 · ((r1/r)^{n−2} − 1)),   c0 = 2 f0 / ((n−1)(n−2))
/// r1^{n−2} = (n−1)(n−2)/(2 f0) · u0^{−2} · r0^{n−2} + r0^{n−2}
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrivialSolution {
    n: u32,
    f0: f64,
    r0: f64,
    u0: f64,
    r1: f64,
    c0: f64,
}

impl TrivialSolution {
    pub fn new(n: u32, f0: f64, r0: f64, u0: f64) -> Result<Self, FrameError> {
        let nf = check_n(n)?;
        for (name, x) in [("f0", f0), ("r0", r0), ("u0", u0)] {
            if !(x.is_finite() && x > 0.0) {
                return Err(out_of_range(name, x, "must be positive"));
            }
        }
        let a = (nf - 1.0) * (nf - 2.0);
        let r0p = r0.powf(nf - 2.0);
        let r1 = (a / (2.0 * f0) / (u0 * u0) * r0p + r0p).powf(1.0 / (nf - 2.0));
        Ok(Self {
            n,
            f0,
            r0,
            u0,
            r1,
            c0: 2.0 * f0 / a,
        })
    }

    pub fn n(&self) -> u32 {
        self.n
    }
    pub fn f0(&self) -> f64 {
        self.f0
    }
    pub fn r0(&self) -> f64 {
        self.r0
    }
    pub fn u0(&self) -> f64 {
        self.u0
    }
    pub fn r1(&self) -> f64 {
        self.r1
    }
    pub fn c0(&self) -> f64 {
        self.c0
    }

    /// Blow-up time in the t-frame.
    pub fn t1(&self) -> f64 {
        r_to_t(self.r1, self.n).expect("validated parameters")
    }

    pub fn t0(&self) -> f64 {
        r_to_t(self.r0, self.n).expect("validated parameters")
    }

    /// `u(r)` for `r0 ≤ r < r1`.
    pub fn eval(&self, r: f64) -> Result<f64, FrameError> {
        if !(r >= self.r0 && r < self.r1) {
            return Err(out_of_range("r", r, "must lie in [r0, r1)"));
        }
        let q = (self.r1 / r).powf(self.n as f64 - 2.0) - 1.0;
        Ok(1.0 / (self.c0 * q).sqrt())
    }

    /// `ũ(t)` for `t0 ≤ t < t1`.
    pub fn utilde_at(&self, t: f64) -> Result<f64, FrameError> {
        let r = t_to_r(t, self.n)?;
        Ok(r.powf(1.0 - self.n as f64 / 2.0) * self.eval(r.max(self.r0))?)
    }

    /// The radial frame this solution starts in.
    pub fn frame(&self, kind: FrameKind) -> Result<Frame, FrameError> {
        match kind {
            FrameKind::Tau => Frame::tau_frame(self.n, self.r0),
            _ => Frame::new(kind, self.n, self.r0, None),
        }
    }
}

/// Constant stationary profile `1/√(2 f0)` for constant `f = f0`.
pub fn self_similar_constant(f0: f64) -> f64 {
    1.0 / (2.0 * f0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    fn grid() -> TorusGrid {
        TorusGrid::new(1, 8, TAU).unwrap()
    }

    #[test]
    fn r_to_t_examples() {
        assert!((r_to_t(2.0, 3).unwrap() - 1.0).abs() < 1e-15);
        assert!((r_to_t(6f64.sqrt(), 4).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(r_to_t(1.0, 2), Err(FrameError::DimensionTooSmall(2))));
    }

    #[test]
    fn t_to_tau_examples() {
        assert_eq!(t_to_tau(0.0).unwrap(), 0.0);
        assert!((t_to_tau(0.75).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert!(t_to_tau(1.0).is_err());
    }

    #[test]
    fn field_maps_examples() {
        let g = grid();
        let ut = u_to_utilde(&g.constant(6.0), 2.0, 4).unwrap();
        assert!((ut.values()[0] - 3.0).abs() < 1e-15);
        let ut = u_to_utilde(&g.constant(2.0), 4.0, 3).unwrap();
        assert!((ut.values()[0] - 1.0).abs() < 1e-15);
        assert!(u_to_utilde(&g.constant(0.0), 1.0, 3).is_err());
        let v = utilde_to_v(&g.constant(1.0 / 0.64f64.sqrt()), 0.36).unwrap();
        assert!((v.values()[0] - 1.0).abs() < 1e-15);
        assert_eq!(utilde_to_v(&g.constant(5.0), 0.0).unwrap(), g.constant(5.0));
        assert!(utilde_to_v(&g.constant(5.0), 1.0).is_err());
    }

    #[test]
    fn trivial_solution_examples() {
        let s = TrivialSolution::new(3, 0.5, 1.0, 1.0).unwrap();
        assert!((s.r1() - 3.0).abs() < 1e-14);
        assert!((s.c0() - 0.5).abs() < 1e-15);
        assert!((s.eval(2.0).unwrap() - 2.0).abs() < 1e-14);
        assert!((s.t1() - 1.5).abs() < 1e-14);
        assert!((s.t0() - 0.5).abs() < 1e-15);
        for r in [1.0, 1.5, 2.5, 2.999] {
            let q = ((s.r1() / r) - 1.0).sqrt();
            assert!((s.eval(r).unwrap() * q - 2f64.sqrt()).abs() < 1e-12);
        }
        assert!(s.eval(3.0).is_err());
        assert!(s.eval(0.5).is_err());
        // in the t-frame: ũ = 1/√(3/2 − t)
        for t in [0.5, 1.0, 1.4] {
            assert!((s.utilde_at(t).unwrap() - 1.0 / (1.5 - t).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn full_pipeline_at_r_equals_two() {
        let s = TrivialSolution::new(3, 0.5, 1.0, 1.0).unwrap();
        let g = grid();
        let u = g.constant(s.eval(2.0).unwrap());
        let ut = u_to_utilde(&u, 2.0, 3).unwrap();
        assert!((ut.values()[0] - 2f64.sqrt()).abs() < 1e-14);
        let t_raw = r_to_t(2.0, 3).unwrap();
        let tr = Trajectory::from_samples(Frame::t_frame(3, 1.0).unwrap(), [(t_raw, ut.clone())])
            .unwrap();
        let norm = normalize_blowup(&tr, s.t1()).unwrap();
        let sample = &norm.samples()[0];
        let v = utilde_to_v(&sample.field, sample.time).unwrap();
        let expect = (1.0 - t_raw / 1.5).sqrt() * 1.5f64.sqrt() * 2f64.sqrt();
        assert!((v.values()[0] - expect).abs() < 1e-12);
        // self-similar profile of the trivial solution
        assert!((v.values()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalize_blowup_identity_and_scaling() {
        let g = grid();
        let fr = Frame::t_frame(3, 1.0).unwrap();
        let tr = Trajectory::from_samples(
            fr,
            (1..5).map(|k| (k as f64 * 0.2, g.constant(1.0 / (1.0 - k as f64 * 0.2).sqrt()))),
        )
        .unwrap();
        let same = normalize_blowup(&tr, 1.0).unwrap();
        assert_eq!(same.samples(), tr.samples());
        assert!(normalize_blowup(&tr, 0.0).is_err());
        assert!(normalize_blowup(&tr, 0.5).is_err());
        let sc = normalize_blowup(&tr, 2.0).unwrap();
        for (a, b) in sc.samples().iter().zip(tr.samples()) {
            assert_eq!(a.time, b.time / 2.0);
            assert!((a.field.max() - 2f64.sqrt() * b.field.max()).abs() < 1e-14);
        }
        assert_eq!(sc.frame().scale(), 2.0);
    }

    #[test]
    fn frame_invariants() {
        assert!(Frame::new(FrameKind::Tau, 3, 1.0, None).is_err());
        assert!(Frame::new(FrameKind::Tau, 3, 1.0, Some(2.0)).is_err());
        // r1 = 2 for t1 = 1, n = 3
        assert!(Frame::new(FrameKind::T, 3, 2.5, Some(1.0)).is_err());
        assert!(Frame::new(FrameKind::T, 3, 1.5, Some(1.0)).is_ok());
        let fr = Frame::with_scale(FrameKind::Tau, 3, 1.0, Some(1.0), 1.5).unwrap();
        assert!((fr.r1().unwrap() - 3.0).abs() < 1e-14);
        let repr: FrameRepr = fr.into();
        assert_eq!(Frame::try_from(repr).unwrap(), fr);
    }

    #[test]
    fn tau_and_r_frame_roundtrip() {
        let g = grid();
        let s = TrivialSolution::new(3, 0.5, 1.0, 1.0).unwrap();
        let fr = Frame::t_frame(3, 1.0).unwrap();
        let raw = Trajectory::from_samples(
            fr,
            [0.5, 0.9, 1.2, 1.45].map(|t| (t, g.constant(s.utilde_at(t).unwrap()))),
        )
        .unwrap();
        let norm = normalize_blowup(&raw, s.t1()).unwrap();
        let tau = to_tau_frame(&norm).unwrap();
        for smp in tau.samples() {
            assert!((smp.field.max() - 1.0).abs() < 1e-12);
        }
        let back = to_t_frame(&tau).unwrap();
        for (a, b) in back.samples().iter().zip(norm.samples()) {
            assert!((a.time - b.time).abs() < 1e-14);
            assert!(a.field.max_abs_diff(&b.field).unwrap() < 1e-12);
        }
        let rr = to_r_frame(&norm).unwrap();
        for smp in rr.samples() {
            let u = s.eval(smp.time).unwrap();
            assert!((smp.field.max() - u).abs() < 1e-12 * u);
        }
        assert!(to_tau_frame(&raw).is_err());
    }

    #[test]
    fn trivial_solution_solves_radial_ode() {
        for (n, f0, r0, u0) in [(3, 0.5, 1.0, 1.0), (4, 1.3, 0.7, 2.0), (5, 0.2, 2.0, 0.4)] {
            let s = TrivialSolution::new(n, f0, r0, u0).unwrap();
            assert!((s.eval(r0).unwrap() - u0).abs() < 1e-12 * u0);
            let nf = n as f64;
            for k in 1..10 {
                let r = r0 + (s.r1() - r0) * k as f64 / 10.0;
                let h = 1e-5 * (s.r1() - r);
                let du = (s.eval(r + h).unwrap() - s.eval(r - h).unwrap()) / (2.0 * h);
                let u = s.eval(r).unwrap();
                let lhs = (nf - 1.0) * r * du;
                let rhs = (nf - 1.0) * (nf - 2.0) / 2.0 * u + f0 * u.powi(3);
                assert!((lhs - rhs).abs() <= 1e-6 * u.powi(3), "n={n} r={r}");
            }
        }
    }

    proptest! {
        #[test]
        fn scalar_roundtrips(r in 1e-3f64..1e3, n in 3u32..8, t in 0.0f64..0.999) {
            let back = t_to_r(r_to_t(r, n).unwrap(), n).unwrap();
            prop_assert!((back - r).abs() <= 1e-12 * r);
            let tb = tau_to_t(t_to_tau(t).unwrap()).unwrap();
            prop_assert!((tb - t).abs() <= 1e-14);
        }

        #[test]
        fn field_roundtrips(c in 1e-3f64..1e3, r in 0.1f64..10.0, n in 3u32..7, t in 0.0f64..0.99) {
            let g = grid();
            let u = g.field_from_fn(|x| c * (1.5 + x[0].sin()));
            let back = utilde_to_u(&u_to_utilde(&u, r, n).unwrap(), r, n).unwrap();
            prop_assert!(back.max_abs_diff(&u).unwrap() <= 1e-12 * u.max_abs());
            let vb = v_to_utilde(&utilde_to_v(&u, t).unwrap(), t).unwrap();
            prop_assert!(vb.max_abs_diff(&u).unwrap() <= 1e-12 * u.max_abs());
        }

        #[test]
        fn trivial_starts_at_u0(n in 3u32..7, f0 in 0.1f64..5.0, r0 in 0.2f64..5.0, u0 in 0.1f64..5.0) {
            let s = TrivialSolution::new(n, f0, r0, u0).unwrap();
            prop_assert!(s.r1() > r0);
            prop_assert!((s.eval(r0).unwrap() - u0).abs() <= 1e-10 * u0);
        }
    }
}
