//! Lower barrier on the time derivative: `t ∂_t ũ ≥ −ũ/2`, its integrated
//! form `ũ(t₂) ≥ √(t₁/t₂) ũ(t₁)`, and the sign of `z = t ∂_t w − w/2` with
//! `w = 1/ũ`.
//!
//! In the τ-frame the integrated form reads `v(τ₂) ≥ G(τ₁)/G(τ₂) · v(τ₁)`
//! with `G(τ) = √(e^τ − 1)`. In both frames the slack of a pair is
//! `(a_j − a_i)/g_j` with `a = g·field` and `g = √t` or `G(τ)`, so the worst
//! pair ending at `j` only needs the running maximum of `a` over earlier
//! samples.

use serde::{Deserialize, Serialize};

use super::{centered_derivative, require_frame, DiagnosticsError};
use crate::evolution::Trajectory;
use crate::frames::FrameKind;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbReport {
    /// Minimum integrated slack over all points and sample pairs.
    pub integrated_margin: f64,
    /// Times of the pair attaining it.
    pub worst_pair: Option<(f64, f64)>,
    pub pairs: usize,
    /// Minimum of `t ∂_t ũ + ũ/2` (or its τ-frame equivalent
    /// `(1 − e^{−τ}) ∂_τ v + v/2`) at interior samples.
    pub differential_margin: f64,
    /// Maximum of `z = t ∂_t w − w/2` at interior samples.
    pub z_max: f64,
}

/// Barrier weight of a sample: `√t` in the t-frame, `√(e^τ − 1)` in τ.
fn weight(kind: FrameKind, time: f64) -> f64 {
    match kind {
        FrameKind::Tau => time.exp_m1().max(0.0).sqrt(),
        _ => time.max(0.0).sqrt(),
    }
}

/// Worst integrated slack per sample against all earlier samples
/// (`+inf` for the first).
pub(crate) fn per_sample_margins(traj: &Trajectory) -> Vec<f64> {
    let kind = traj.frame().kind();
    let s = traj.samples();
    let len = s.first().map_or(0, |x| x.field.len());
    let w: Vec<f64> = s.iter().map(|x| weight(kind, x.time)).collect();
    let per_point: Vec<Vec<f64>> = par::map_range(len, |i| {
        let mut best = f64::NEG_INFINITY;
        s.iter()
            .enumerate()
            .map(|(k, smp)| {
                let a = w[k] * smp.field.values()[i];
                let m = if best == f64::NEG_INFINITY || w[k] == 0.0 {
                    f64::INFINITY
                } else {
                    (a - best) / w[k]
                };
                best = best.max(a);
                m
            })
            .collect()
    });
    (0..s.len())
        .map(|k| per_point.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min))
        .collect()
}

/// Evaluates the barrier inequalities on a t- or τ-frame trajectory.
pub fn ab_check(traj: &Trajectory) -> Result<AbReport, DiagnosticsError> {
    require_frame(traj, &[FrameKind::T, FrameKind::Tau])?;
    let kind = traj.frame().kind();
    let s = traj.samples();
    let n = s.len();
    if n < 2 {
        return Err(DiagnosticsError::TooFewSamples {
            needed: 2,
            found: n,
        });
    }
    let len = s[0].field.len();
    let w: Vec<f64> = s.iter().map(|x| weight(kind, x.time)).collect();

    // (margin, index of the earlier sample, index of the later sample)
    let worst: Vec<(f64, usize, usize)> = par::map_range(len, |i| {
        let mut best = f64::NEG_INFINITY;
        let mut best_k = 0;
        let mut out = (f64::INFINITY, 0, 0);
        for (k, smp) in s.iter().enumerate() {
            let a = w[k] * smp.field.values()[i];
            if best > f64::NEG_INFINITY && w[k] > 0.0 {
                let m = (a - best) / w[k];
                if m < out.0 {
                    out = (m, best_k, k);
                }
            }
            if a > best {
                best = a;
                best_k = k;
            }
        }
        out
    });
    let (integrated_margin, wi, wj) = worst
        .iter()
        .copied()
        .fold((f64::INFINITY, 0, 0), |acc, x| if x.0 < acc.0 { x } else { acc });

    // Differential form and z at interior samples, via the t-frame quantities
    // t ∂_t ũ + ũ/2 (scaled by √(1−t) in τ) and z = t ∂_t w − w/2.
    let interior: Vec<(f64, f64)> = par::map_range(n.saturating_sub(2), |m| {
        let k = m + 1;
        let x = [s[k - 1].time, s[k].time, s[k + 1].time];
        let mut dmin = f64::INFINITY;
        let mut zmax = f64::NEG_INFINITY;
        for i in 0..len {
            let y = [
                s[k - 1].field.values()[i],
                s[k].field.values()[i],
                s[k + 1].field.values()[i],
            ];
            let (d, z) = match kind {
                FrameKind::Tau => {
                    let tau = x[1];
                    let dv = centered_derivative(x, y);
                    let d = -(-tau).exp_m1() * dv + 0.5 * y[1];
                    // w = e^{−τ/2}/v and t∂_t = (e^τ − 1)∂_τ
                    let wv = |j: usize| (-0.5 * x[j]).exp() / y[j];
                    let dw = centered_derivative(x, [wv(0), wv(1), wv(2)]);
                    (d, tau.exp_m1() * dw - 0.5 * wv(1))
                }
                _ => {
                    let t = x[1];
                    let d = t * centered_derivative(x, y) + 0.5 * y[1];
                    let wv = y.map(|u| 1.0 / u);
                    (d, t * centered_derivative(x, wv) - 0.5 * wv[1])
                }
            };
            dmin = dmin.min(d);
            zmax = zmax.max(z);
        }
        (dmin, zmax)
    });

    Ok(AbReport {
        integrated_margin,
        worst_pair: integrated_margin
            .is_finite()
            .then(|| (s[wi].time, s[wj].time)),
        pairs: n * (n - 1) / 2,
        differential_margin: interior.iter().map(|x| x.0).fold(f64::INFINITY, f64::min),
        z_max: interior
            .iter()
            .map(|x| x.1)
            .fold(f64::NEG_INFINITY, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{Frame, TrivialSolution};
    use crate::grid::TorusGrid;
    use std::f64::consts::TAU;

    fn brute_force(traj: &Trajectory) -> f64 {
        let kind = traj.frame().kind();
        let s = traj.samples();
        let mut m = f64::INFINITY;
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                let (wi, wj) = (weight(kind, s[i].time), weight(kind, s[j].time));
                for p in 0..s[i].field.len() {
                    let lo = wi / wj * s[i].field.values()[p];
                    m = m.min(s[j].field.values()[p] - lo);
                }
            }
        }
        m
    }

    #[test]
    fn running_max_matches_all_pairs() {
        let g = TorusGrid::new(1, 8, TAU).unwrap();
        for kind in [FrameKind::T, FrameKind::Tau] {
            let fr = match kind {
                FrameKind::Tau => Frame::tau_frame(3, 1.0).unwrap(),
                _ => Frame::t_frame(3, 1.0).unwrap(),
            };
            let tr = Trajectory::from_samples(
                fr,
                (0..12).map(|k| {
                    let t = 0.05 + 0.07 * k as f64;
                    (t, g.field_from_fn(|x| 1.0 + 0.3 * (x[0] + 3.0 * t).sin() * (k % 3) as f64))
                }),
            )
            .unwrap();
            let r = ab_check(&tr).unwrap();
            assert!((r.integrated_margin - brute_force(&tr)).abs() < 1e-14);
        }
    }

    #[test]
    fn trivial_solution_margins_are_positive() {
        let s = TrivialSolution::new(3, 0.5, 1.0, 1.0).unwrap();
        let g = TorusGrid::new(1, 8, TAU).unwrap();
        let tr = Trajectory::from_samples(
            Frame::t_frame(3, 1.0).unwrap(),
            (0..100).map(|k| {
                let t = 0.5 + 0.0099 * k as f64;
                (t, g.constant(s.utilde_at(t).unwrap()))
            }),
        )
        .unwrap();
        let r = ab_check(&tr).unwrap();
        assert!(r.integrated_margin > 0.0);
        assert!(r.differential_margin > 0.0);
        assert!(r.z_max < 0.0);
    }

    #[test]
    fn time_constant_field_has_margin_half() {
        let g = TorusGrid::new(1, 8, TAU).unwrap();
        let tr = Trajectory::from_samples(
            Frame::t_frame(3, 1.0).unwrap(),
            (1..6).map(|k| (k as f64 * 0.1, g.constant(2.0))),
        )
        .unwrap();
        let r = ab_check(&tr).unwrap();
        assert!((r.differential_margin - 1.0).abs() < 1e-12);
        assert!(r.integrated_margin > 0.0);
    }
}
