//! Blow-up time estimation from the inverse-square law `sup ũ ~ c/√(t₁ − t)`.

use serde::{Deserialize, Serialize};

use super::{EvolveError, Trajectory};
use crate::frames::FrameKind;

pub const DEFAULT_FIT_WINDOW: f64 = 0.2;
pub const MIN_FIT_R_SQUARED: f64 = 0.999;
/// Required growth of `sup ũ` across the trajectory before a fit is tried.
const MIN_GROWTH: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupFit {
    pub t1: f64,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub samples_used: usize,
    pub growth: f64,
}

/// Blow-up time from the default fit over the last 20% of samples.
pub fn estimate_blowup_time(traj: &Trajectory) -> Result<f64, EvolveError> {
    fit_blowup(traj, DEFAULT_FIT_WINDOW).map(|f| f.t1)
}

/// Least-squares line through `(t, 1/sup²)` over the trailing
/// `window_fraction` of the samples; `t₁` is where the line hits zero.
pub fn fit_blowup(traj: &Trajectory, window_fraction: f64) -> Result<BlowupFit, EvolveError> {
    let reject = |m: String| Err(EvolveError::FitRejected(m));
    if traj.frame().kind() != FrameKind::T {
        return reject(format!(
            "expected a t-frame trajectory, found {:?}",
            traj.frame().kind()
        ));
    }
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return reject(format!("window fraction {window_fraction} not in (0, 1]"));
    }
    let sups = traj.sup_series();
    if sups.len() < 3 {
        return reject(format!("{} samples are too few", sups.len()));
    }
    let growth = sups[sups.len() - 1].1 / sups[0].1;
    if !(growth >= MIN_GROWTH) {
        return reject(format!("sup grew by only {growth:.3}x"));
    }
    let used = ((sups.len() as f64 * window_fraction).ceil() as usize).clamp(3, sups.len());
    let tail = &sups[sups.len() - used..];
    let pts: Vec<(f64, f64)> = tail.iter().map(|&(t, s)| (t, 1.0 / (s * s))).collect();
    let (slope, intercept, r_squared) = linear_fit(&pts);
    if !(slope < 0.0) {
        return reject(format!("1/sup² is not decreasing (slope {slope:e})"));
    }
    if !(r_squared >= MIN_FIT_R_SQUARED) {
        return reject(format!("R² = {r_squared:.6} below {MIN_FIT_R_SQUARED}"));
    }
    Ok(BlowupFit {
        t1: -intercept / slope,
        slope,
        intercept,
        r_squared,
        samples_used: used,
        growth,
    })
}

/// Ordinary least squares `y = slope·x + intercept`, returning R² as well.
/// Exactly collinear data gives R² = 1.
pub(crate) fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for &(x, y) in pts {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts
        .iter()
        .map(|&(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    (slope, intercept, r2)
}

/// Blow-up time of the scalar equation `v' = a v³ − v/2` started from `v0`
/// at `τ = 0`, with `a = 2·inf f`. With `y = v⁻²` it is linear,
/// `y' = y − 2a`, so `y = 2a + (y0 − 2a) e^τ`; blow-up needs `y0 < 2a`.
pub fn subsolution_blowup_tau(inf_f: f64, v0: f64) -> Option<f64> {
    let a = 2.0 * inf_f;
    let y0 = 1.0 / (v0 * v0);
    (inf_f > 0.0 && y0 < 2.0 * a).then(|| (2.0 * a / (2.0 * a - y0)).ln())
}
