//! Empirical Harnack quotient `C(τ) = sup v(τ) / (1/μ + inf v(τ + h))`.
//!
//! The constant in the estimate is not constructive, so boundedness is
//! tested as the absence of a trend: the maximum over the last quartile of
//! the series may not exceed twice the maximum over the first three.

use serde::{Deserialize, Serialize};

use super::{require_frame, DiagnosticsError};
use crate::evolution::Trajectory;
use crate::frames::FrameKind;

/// Allowed growth of the last quartile over the earlier maximum.
pub const TREND_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackSeries {
    pub h: f64,
    pub mu: f64,
    pub tau: Vec<f64>,
    pub c_emp: Vec<f64>,
    pub last_quartile_max: f64,
    pub earlier_max: f64,
    pub bounded: bool,
}

/// Last-quartile maximum against the maximum of the first three quartiles.
pub fn no_trend(series: &[f64]) -> (f64, f64, bool) {
    let n = series.len();
    let cut = (3 * n) / 4;
    let earlier = series[..cut.max(1)]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let last = series[cut.min(n - 1)..]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    (last, earlier, last <= TREND_FACTOR * earlier)
}

/// Quotient at every sample whose shifted time `τ + h` lies in the run;
/// `inf v(τ + h)` is linearly interpolated between samples.
pub fn harnack_ratio(traj: &Trajectory, h: f64, mu: f64) -> Result<HarnackSeries, DiagnosticsError> {
    require_frame(traj, &[FrameKind::Tau])?;
    let recs = traj.records();
    let (Some(first), Some(last)) = (recs.first(), recs.last()) else {
        return Err(DiagnosticsError::TooFewSamples {
            needed: 2,
            found: 0,
        });
    };
    let span = last.time - first.time;
    if !(h > 0.0) || span < h {
        return Err(DiagnosticsError::SpanTooShort { span, h });
    }
    if !(mu > 0.0) {
        return Err(DiagnosticsError::NotPositive(mu));
    }
    let times: Vec<f64> = recs.iter().map(|r| r.time).collect();
    let inf_at = |t: f64| -> f64 {
        let j = times.partition_point(|&x| x < t);
        if j < times.len() && times[j] == t || j == 0 {
            return recs[j.min(times.len() - 1)].min;
        }
        let (a, b) = (&recs[j - 1], &recs[j.min(recs.len() - 1)]);
        if b.time == a.time {
            return a.min;
        }
        let w = (t - a.time) / (b.time - a.time);
        (1.0 - w) * a.min + w * b.min
    };
    let mut tau = Vec::new();
    let mut c_emp = Vec::new();
    for r in recs.iter().take_while(|r| r.time + h <= last.time) {
        tau.push(r.time);
        c_emp.push(r.max / (1.0 / mu + inf_at(r.time + h)));
    }
    if c_emp.len() < 4 {
        return Err(DiagnosticsError::SpanTooShort { span, h });
    }
    let (last_quartile_max, earlier_max, bounded) = no_trend(&c_emp);
    Ok(HarnackSeries {
        h,
        mu,
        tau,
        c_emp,
        last_quartile_max,
        earlier_max,
        bounded,
    })
}
