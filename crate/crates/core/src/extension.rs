//! Behaviour of a blowing-up solution at the outer radius `r₁`: the profile
//! `ω = lim u·√((r₁/r)^{n−2} − 1)`, the arc length `r̃ = r̃₀ + ∫ u dr`, and
//! the mean curvature `H = (n−1)/(r u)` of the level sets.
//!
//! The radial frame is reconstructed from t- or τ-frame runs (see
//! [`crate::frames::to_r_frame`]); nothing here integrates in `r`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evolution::{linear_fit, Trajectory, TrajectoryError};
use crate::frames::{FrameError, FrameKind};
use crate::grid::{GridError, ScalarField};
use crate::par;
use crate::stationary::{solve_stationary, stationary_residual, StationaryOptions};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExtensionError {
    #[error("radius {r} must lie in (0, r1 = {r1})")]
    OutOfRange { r: f64, r1: f64 },
    #[error("fitted blow-up exponent {exponent} makes ∫u dr diverge at r1")]
    DivergentTail { exponent: f64 },
    #[error("expected an R_FRAME trajectory, found {0:?}")]
    WrongFrame(FrameKind),
    #[error("need at least {needed} samples below r1, found {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("field must be strictly positive (min {0:e})")]
    NotPositive(f64),
    #[error("invalid extension input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

fn check_n(n: u32) -> Result<f64, ExtensionError> {
    if n < 3 {
        return Err(ExtensionError::InvalidInput(format!("dimension n = {n} must be at least 3")));
    }
    Ok(n as f64)
}

/// `u · √((r₁/r)^{n−2} − 1)` pointwise.
pub fn omega_estimate(u: &ScalarField, r: f64, r1: f64, n: u32) -> Result<ScalarField, ExtensionError> {
    let nf = check_n(n)?;
    if !(r > 0.0 && r < r1 && r1.is_finite()) {
        return Err(ExtensionError::OutOfRange { r, r1 });
    }
    let w = ((r1 / r).powf(nf - 2.0) - 1.0).sqrt();
    Ok(u.scale(w)?)
}

/// Factor between the ω-estimate and the τ-frame field: the estimate equals
/// `√((n−1)(n−2)) · v` along the same solution.
pub fn omega_to_v_factor(n: u32) -> f64 {
    let nf = n as f64;
    ((nf - 1.0) * (nf - 2.0)).sqrt()
}

/// `sup_Σ H` with `H = (n−1)/(r u)`. Infinite if `u` is not positive.
pub fn boundary_mean_curvature(u: &ScalarField, r: f64, n: u32) -> f64 {
    let m = u.min();
    if !(m > 0.0 && r > 0.0) {
        return f64::INFINITY;
    }
    (n as f64 - 1.0) / (r * m)
}

/// `value ≈ prefactor · distance^exponent`, fitted in log-log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub samples_used: usize,
}

pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerFit, ExtensionError> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.0 > 0.0 && p.1 > 0.0)
        .map(|p| (p.0.ln(), p.1.ln()))
        .collect();
    if logs.len() < 3 {
        return Err(ExtensionError::TooFewSamples {
            needed: 3,
            found: logs.len(),
        });
    }
    let (slope, intercept, r2) = linear_fit(&logs);
    Ok(PowerFit {
        exponent: slope,
        prefactor: intercept.exp(),
        r_squared: r2,
        samples_used: logs.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtensionOptions {
    /// Levels `ε` at which `ω` is estimated, at `r = r₁(1 − ε)`.
    pub eps_levels: Vec<f64>,
    /// Exponent fits use samples with `r₁ − r ≤ fit_window · r₁`.
    pub fit_window: f64,
    /// Differences below this (relative to the estimate) count as converged.
    pub cauchy_floor: f64,
    /// Required shrink factor between successive level differences.
    pub cauchy_factor: f64,
    /// `r̃` tail reported beyond `r₁(1 − tail_eps)`.
    pub tail_eps: f64,
}

impl Default for ExtensionOptions {
    fn default() -> Self {
        Self {
            eps_levels: vec![1e-2, 1e-3, 1e-4],
            fit_window: 1e-2,
            cauchy_floor: 1e-9,
            cauchy_factor: 3.0,
            tail_eps: 1e-4,
        }
    }
}

/// Arc length `r̃(r) − r̃(r₀) = ∫_{r₀}^{r} u dr` per grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtildeProfile {
    pub r1: f64,
    /// Sample radii.
    pub r: Vec<f64>,
    /// Spatial max of the cumulative integral at each sample radius.
    pub rtilde: Vec<f64>,
    /// Fit of `sup u ≈ C (r₁ − r)^p`.
    pub u_fit: PowerFit,
    /// Exponent used for the part beyond the last sample.
    pub tail_exponent: f64,
    /// Spatial max of `∫_{r₀}^{r₁} u dr`, including the fitted tail beyond
    /// the last sample.
    pub total: f64,
    /// Fitted tail beyond the last sample (at the maximizing point).
    pub tail_beyond_samples: f64,
    /// Share of `total` beyond `r₁(1 − tail_eps)`.
    pub tail_fraction: f64,
    pub strictly_increasing: bool,
}

fn require_r_frame(traj: &Trajectory) -> Result<(), ExtensionError> {
    match traj.frame().kind() {
        FrameKind::R => Ok(()),
        k => Err(ExtensionError::WrongFrame(k)),
    }
}

fn samples_below(traj: &Trajectory, r1: f64) -> Vec<usize> {
    (0..traj.len()).filter(|&i| traj.samples()[i].time < r1).collect()
}

/// Fit of `sup u` against `r₁ − r` over the tail window.
pub fn fit_blowup_exponent(traj: &Trajectory, r1: f64, window: f64) -> Result<PowerFit, ExtensionError> {
    require_r_frame(traj)?;
    let s = traj.samples();
    let idx = samples_below(traj, r1);
    let mut pts: Vec<(f64, f64)> = idx
        .iter()
        .filter(|&&i| r1 - s[i].time <= window * r1)
        .map(|&i| (r1 - s[i].time, s[i].field.max()))
        .collect();
    if pts.len() < 3 {
        let from = idx.len() - (idx.len() / 5).max(3).min(idx.len());
        pts = idx[from..].iter().map(|&i| (r1 - s[i].time, s[i].field.max())).collect();
    }
    fit_power_law(&pts)
}

/// Integrates `u` in `r` per grid point with the trapezoid rule in
/// `σ = √(r₁ − r)`, where `u dr = −2σu dσ` stays bounded for the expected
/// `(r₁ − r)^{−1/2}` blow-up. The part beyond the last sample is the fitted
/// power law `∫ C (r₁ − r)^p dr`, finite only for `p > −1`.
pub fn rtilde(traj: &Trajectory, r1: f64, opts: &ExtensionOptions) -> Result<RtildeProfile, ExtensionError> {
    require_r_frame(traj)?;
    let s = traj.samples();
    let idx = samples_below(traj, r1);
    if idx.len() < 3 {
        return Err(ExtensionError::TooFewSamples {
            needed: 3,
            found: idx.len(),
        });
    }
    let u_fit = fit_blowup_exponent(traj, r1, opts.fit_window)?;
    let p = u_fit.exponent;
    if !(p > -1.0) {
        return Err(ExtensionError::DivergentTail { exponent: p });
    }
    // the tail uses the local rate over the last two decades of r₁ − r,
    // where slowly varying factors such as √r no longer bias the exponent
    let d_last = r1 - s[*idx.last().unwrap()].time;
    let near: Vec<(f64, f64)> = idx
        .iter()
        .map(|&i| (r1 - s[i].time, s[i].field.max()))
        .filter(|x| x.0 <= 100.0 * d_last)
        .collect();
    let tail_exponent = fit_power_law(&near).map_or(p, |f| f.exponent);
    if !(tail_exponent > -1.0) {
        return Err(ExtensionError::DivergentTail {
            exponent: tail_exponent,
        });
    }
    let len = s[idx[0]].field.len();
    let sigma: Vec<f64> = idx.iter().map(|&i| (r1 - s[i].time).sqrt()).collect();
    let r_cut = r1 * (1.0 - opts.tail_eps);
    let sigma_cut = (r1 - r_cut).sqrt();

    // per point: cumulative values, total, and the part beyond r_cut
    let per_point: Vec<(Vec<f64>, f64, f64, f64)> = par::map_range(len, |q| {
        let g: Vec<f64> = idx
            .iter()
            .zip(&sigma)
            .map(|(&i, sg)| 2.0 * sg * s[i].field.values()[q])
            .collect();
        let mut cum = vec![0.0; g.len()];
        let mut cut_value = None;
        for j in 1..g.len() {
            let (a, b) = (sigma[j - 1], sigma[j]);
            cum[j] = cum[j - 1] + 0.5 * (g[j - 1] + g[j]) * (a - b);
            if cut_value.is_none() && b <= sigma_cut {
                let w = (a - sigma_cut) / (a - b);
                let gc = (1.0 - w) * g[j - 1] + w * g[j];
                cut_value = Some(cum[j - 1] + 0.5 * (g[j - 1] + gc) * (a - sigma_cut));
            }
        }
        let d = sigma[sigma.len() - 1].powi(2);
        let u_last = s[*idx.last().unwrap()].field.values()[q];
        // C d^p = u_last  ⇒  ∫_0^d C x^p dx = u_last d / (p + 1)
        let tail = u_last * d / (tail_exponent + 1.0);
        let total = cum[cum.len() - 1] + tail;
        let beyond = match cut_value {
            Some(c) => total - c,
            // every sample is before r_cut: the fitted law covers the rest
            None => {
                let dc = r1 - r_cut;
                tail * (dc / d).powf(tail_exponent + 1.0)
            }
        };
        (cum, total, tail, beyond)
    });

    let (best, _) = per_point
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (q, x)| if x.1 > acc.1 { (q, x.1) } else { acc });
    let rt: Vec<f64> = (0..idx.len())
        .map(|j| per_point.iter().map(|x| x.0[j]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let strictly_increasing = per_point.iter().all(|x| x.0.windows(2).all(|w| w[1] > w[0]));
    Ok(RtildeProfile {
        r1,
        r: idx.iter().map(|&i| s[i].time).collect(),
        rtilde: rt,
        u_fit,
        tail_exponent,
        total: per_point[best].1,
        tail_beyond_samples: per_point[best].2,
        tail_fraction: per_point[best].3 / per_point[best].1,
        strictly_increasing,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmegaLevel {
    pub eps: f64,
    pub r: f64,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub sup_h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionReport {
    pub n: u32,
    pub r1: f64,
    pub levels: Vec<OmegaLevel>,
    /// `‖ω_{k+1} − ω_k‖_max` between successive levels.
    pub level_differences: Vec<f64>,
    pub cauchy: bool,
    /// Minimum of the ω-estimate over all samples: the run's `μ`.
    pub mu: f64,
    pub rtilde: RtildeProfile,
    /// `(r, sup H)` per sample.
    pub h_of_r: Vec<(f64, f64)>,
    /// Fit of `sup H ≈ C (r₁ − r)^q`.
    pub h_fit: PowerFit,
    /// `sup H` decreases along the levels.
    pub h_decreasing: bool,
    /// Deepest estimate divided by `√((n−1)(n−2))`: the τ-frame limit.
    pub v_limit_min: f64,
    pub v_limit_max: f64,
    /// Stationary residual of the τ-frame limit for `f(r₁)`, if given.
    pub limit_residual: Option<f64>,
    /// Distance from the τ-frame limit to the Newton solution started there.
    pub limit_newton_distance: Option<f64>,
}

/// Builds the report from an r-frame trajectory that reaches close to `r₁`.
/// The limit field is returned alongside for snapshotting.
pub fn extension_report(
    traj: &Trajectory,
    r1: f64,
    f_limit: Option<&ScalarField>,
    opts: &ExtensionOptions,
) -> Result<(ExtensionReport, ScalarField), ExtensionError> {
    require_r_frame(traj)?;
    let n = traj.frame().n();
    if opts.eps_levels.is_empty() || opts.eps_levels.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(ExtensionError::InvalidInput("eps levels must lie in (0, 1)".into()));
    }
    let first = traj.first().ok_or(ExtensionError::TooFewSamples { needed: 3, found: 0 })?;
    let mut fields = Vec::new();
    let mut levels = Vec::new();
    for &eps in &opts.eps_levels {
        let r = r1 * (1.0 - eps);
        let u = traj.interpolate(r).ok_or_else(|| {
            ExtensionError::InvalidInput(format!(
                "level eps = {eps} (r = {r}) is outside the sampled range starting at {}",
                first.time
            ))
        })?;
        let w = omega_estimate(&u, r, r1, n)?;
        levels.push(OmegaLevel {
            eps,
            r,
            min: w.min(),
            max: w.max(),
            mean: w.mean(),
            sup_h: boundary_mean_curvature(&u, r, n),
        });
        fields.push(w);
    }
    let level_differences: Vec<f64> = fields
        .windows(2)
        .map(|w| w[0].max_abs_diff(&w[1]))
        .collect::<Result<_, _>>()?;
    let floor = opts.cauchy_floor * fields[fields.len() - 1].max_abs();
    let cauchy = level_differences
        .windows(2)
        .all(|d| d[1] <= floor || d[1] * opts.cauchy_factor <= d[0]);

    let s = traj.samples();
    let idx = samples_below(traj, r1);
    let mu = idx
        .iter()
        .map(|&i| omega_estimate(&s[i].field, s[i].time, r1, n).map(|w| w.min()))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let h_of_r: Vec<(f64, f64)> = idx
        .iter()
        .map(|&i| (s[i].time, boundary_mean_curvature(&s[i].field, s[i].time, n)))
        .collect();
    let mut h_pts: Vec<(f64, f64)> = h_of_r
        .iter()
        .filter(|x| r1 - x.0 <= opts.fit_window * r1)
        .map(|&(r, h)| (r1 - r, h))
        .collect();
    if h_pts.len() < 3 {
        let from = h_of_r.len() - (h_of_r.len() / 5).max(3).min(h_of_r.len());
        h_pts = h_of_r[from..].iter().map(|&(r, h)| (r1 - r, h)).collect();
    }
    let h_fit = fit_power_law(&h_pts)?;
    let mut by_eps = levels.clone();
    by_eps.sort_by(|a, b| b.eps.total_cmp(&a.eps));
    let h_decreasing = by_eps.windows(2).all(|w| w[1].sup_h < w[0].sup_h);

    let limit = fields[fields.len() - 1].scale(1.0 / omega_to_v_factor(n))?;
    let (limit_residual, limit_newton_distance) = match f_limit {
        Some(f) => {
            let res = stationary_residual(&limit, f).ok();
            let dist = solve_stationary(f, &limit, &StationaryOptions::default())
                .ok()
                .and_then(|st| st.omega.max_abs_diff(&limit).ok());
            (res, dist)
        }
        None => (None, None),
    };
    let report = ExtensionReport {
        n,
        r1,
        levels,
        level_differences,
        cauchy,
        mu,
        rtilde: rtilde(traj, r1, opts)?,
        h_of_r,
        h_fit,
        h_decreasing,
        v_limit_min: limit.min(),
        v_limit_max: limit.max(),
        limit_residual,
        limit_newton_distance,
    };
    Ok((report, limit))
}

/// Normalized t-frame times `t = (1 − ε)^{n−2}` at which the radius is
/// `r₁(1 − ε)`, for `ε` running geometrically from `eps_max` down to
/// `eps_min` with `per_decade` points per decade (endpoints included).
pub fn tail_times(n: u32, eps_max: f64, eps_min: f64, per_decade: usize) -> Vec<f64> {
    let decades = (eps_max / eps_min).log10();
    let count = (decades * per_decade as f64).round().max(0.0) as usize;
    let mut out: Vec<f64> = (0..=count)
        .map(|j| {
            let eps = eps_max * 10f64.powf(-(j as f64) / per_decade as f64);
            (1.0 - eps).powi(n as i32 - 2)
        })
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{Frame, TrivialSolution};
    use crate::grid::TorusGrid;
    use std::f64::consts::TAU;

    fn trivial_r_run(sigmas: impl Iterator<Item = f64>) -> (Trajectory, TrivialSolution) {
        let s = TrivialSolution::new(3, 0.5, 1.0, 1.0).unwrap();
        let g = TorusGrid::new(1, 8, TAU).unwrap();
        let r1 = s.r1();
        let tr = Trajectory::from_samples(
            Frame::r_frame(3, 1.0).unwrap(),
            sigmas.map(|sg| {
                let r = (r1 - sg * sg).max(1.0);
                (r, g.constant(s.eval(r).unwrap()))
            }),
        )
        .unwrap();
        (tr, s)
    }

    /// `√2 ∫_1^3 √(r/(3−r)) dr` with `r = 3 sin²φ`.
    fn closed_form_total() -> f64 {
        let phi0 = (1.0f64 / 3.0).sqrt().asin();
        2f64.sqrt() * 3.0 * (std::f64::consts::FRAC_PI_2 - phi0 + phi0.sin() * phi0.cos())
    }

    #[test]
    fn trivial_estimate_is_root_two() {
        let s = TrivialSolution::new(3, 0.5, 1.0, 1.0).unwrap();
        let g = TorusGrid::new(2, 8, TAU).unwrap();
        for r in [1.0, 2.0, 2.97, 2.9999] {
            let w = omega_estimate(&g.constant(s.eval(r).unwrap()), r, 3.0, 3).unwrap();
            assert!((w.max() - 2f64.sqrt()).abs() < 1e-10);
        }
        assert!(matches!(
            omega_estimate(&g.constant(1.0), 3.0, 3.0, 3),
            Err(ExtensionError::OutOfRange { .. })
        ));
    }

    #[test]
    fn mean_curvature_examples() {
        let s = TrivialSolution::new(3, 0.5, 1.0, 1.0).unwrap();
        let g = TorusGrid::new(1, 8, TAU).unwrap();
        let h = boundary_mean_curvature(&g.constant(s.eval(2.97).unwrap()), 2.97, 3);
        let expected = 2.0 * (0.5f64 * (3.0 / 2.97 - 1.0)).sqrt() / 2.97;
        assert!((h - expected).abs() < 1e-12);
        assert!((h - 0.04786).abs() < 1e-5);
        assert_eq!(boundary_mean_curvature(&g.constant(1.0), 2.0, 3), 1.0);
    }

    #[test]
    fn rtilde_matches_closed_form() {
        let m = 4000;
        let top = 2f64.sqrt();
        let (tr, _) = trivial_r_run((0..m).map(|j| top * (1.0 - j as f64 / m as f64)));
        let p = rtilde(&tr, 3.0, &ExtensionOptions::default()).unwrap();
        assert!(p.strictly_increasing);
        assert!((p.total - closed_form_total()).abs() < 1e-6, "{}", p.total);
        assert!((p.u_fit.exponent + 0.5).abs() < 0.02);
    }

    #[test]
    fn constant_integrand() {
        let g = TorusGrid::new(1, 8, TAU).unwrap();
        let tr = Trajectory::from_samples(
            Frame::r_frame(3, 1.0).unwrap(),
            (0..=10).map(|j| (1.0 + 0.1 * j as f64, g.constant(0.7))),
        )
        .unwrap();
        let p = rtilde(&tr, 10.0, &ExtensionOptions::default()).unwrap();
        for (r, rt) in p.r.iter().zip(&p.rtilde) {
            // linear in r, hence quadratic in σ: trapezoid error ∝ (Δσ)²
            assert!((rt - 0.7 * (r - 1.0)).abs() < 1e-3);
        }
    }

    #[test]
    fn divergent_tail_is_rejected() {
        let g = TorusGrid::new(1, 8, TAU).unwrap();
        let tr = Trajectory::from_samples(
            Frame::r_frame(3, 1.0).unwrap(),
            (0..8).map(|j| {
                let d = 10f64.powi(-j);
                (2.0 - d, g.constant(d.powf(-1.2)))
            }),
        )
        .unwrap();
        assert!(matches!(
            rtilde(&tr, 2.0, &ExtensionOptions::default()),
            Err(ExtensionError::DivergentTail { .. })
        ));
    }

    #[test]
    fn report_on_closed_form() {
        let m = 2000;
        let top = 2f64.sqrt();
        // the levels r₁(1 − 10^{−k/10}) are sampled exactly, as runs do
        let (tr, _) = trivial_r_run(
            (0..m)
                .map(|j| top * (1.0 - j as f64 / m as f64))
                .filter(|&sg| sg > 0.4)
                .chain((14..=60).map(|k| (3.0 * 10f64.powf(-(k as f64) / 10.0)).sqrt())),
        );
        let g = TorusGrid::new(1, 8, TAU).unwrap();
        let (rep, limit) =
            extension_report(&tr, 3.0, Some(&g.constant(0.5)), &ExtensionOptions::default()).unwrap();
        assert!(rep.cauchy);
        assert!((rep.mu - 2f64.sqrt()).abs() < 1e-9);
        assert!((rep.h_fit.exponent - 0.5).abs() < 0.05);
        assert!(rep.h_decreasing);
        assert!((limit.max() - 1.0).abs() < 1e-9);
        assert!(rep.limit_residual.unwrap() < 1e-8);
    }

    #[test]
    fn tail_times_hit_levels() {
        let t = tail_times(3, 1e-2, 1e-4, 1);
        assert_eq!(t.len(), 3);
        assert!((t[0] - 0.99).abs() < 1e-15 && (t[2] - 0.9999).abs() < 1e-15);
        let t4 = tail_times(4, 1e-1, 1e-1, 3);
        assert!((t4[0] - 0.81).abs() < 1e-15);
    }
}
