//! The functional `J(v) = ∫ |∇v|² − f v² + log v`, non-increasing along the
//! τ-frame flow when `f` is nondecreasing in time. Along a solution
//! `dJ/dτ = −2∫ v⁻² (∂_τ v)² − ∫ (∂_τ f) v²`.

use serde::{Deserialize, Serialize};

use super::{require_frame, DiagnosticsError};
use crate::evolution::{SourceTerm, Trajectory};
use crate::frames::FrameKind;
use crate::grid::ScalarField;
use crate::par;

/// Relative tolerance on `J(τ_{k+1}) ≤ J(τ_k)`.
const MONOTONE_REL_TOL: f64 = 1e-6;
/// Allowance for the difference-quotient error in the quantitative form,
/// relative to the size of the two sides.
const QUANTITATIVE_REL_SLACK: f64 = 1e-2;

pub fn lyapunov_j(v: &ScalarField, f: &ScalarField) -> Result<f64, DiagnosticsError> {
    let grid = v.grid();
    grid.check(f)?;
    if !v.is_positive() {
        return Err(DiagnosticsError::NotPositive(v.min()));
    }
    let grads = grid.gradient_values(v.values());
    let (vv, fv) = (v.values(), f.values());
    let sum = par::ordered_sum(vv.len(), |i| {
        let g2: f64 = grads.iter().map(|g| g[i] * g[i]).sum();
        g2 - fv[i] * vv[i] * vv[i] + vv[i].ln()
    });
    Ok(sum * grid.cell_volume())
}

pub(crate) fn j_values(traj: &Trajectory, f: &SourceTerm) -> Result<Vec<f64>, DiagnosticsError> {
    let samples = traj.samples();
    par::map_range(samples.len(), |k| {
        let s = &samples[k];
        let fv = f.value_at(s.time).to_field(s.field.grid());
        lyapunov_j(&s.field, &fv)
    })
    .into_iter()
    .collect()
}

/// `−2∫ v⁻² (∂_τ v)²` at each sample (one-sided at the ends).
pub(crate) fn dissipation_bounds(traj: &Trajectory) -> Vec<f64> {
    let s = traj.samples();
    let n = s.len();
    par::map_range(n, |k| {
        if n < 2 {
            return 0.0;
        }
        let grid = s[k].field.grid();
        let vk = s[k].field.values();
        let dv: Vec<f64> = if k == 0 || k + 1 == n {
            let (a, b) = if k == 0 { (0, 1) } else { (n - 2, n - 1) };
            let dt = s[b].time - s[a].time;
            (0..vk.len())
                .map(|i| (s[b].field.values()[i] - s[a].field.values()[i]) / dt)
                .collect()
        } else {
            let x = [s[k - 1].time, s[k].time, s[k + 1].time];
            (0..vk.len())
                .map(|i| {
                    super::centered_derivative(
                        x,
                        [s[k - 1].field.values()[i], vk[i], s[k + 1].field.values()[i]],
                    )
                })
                .collect()
        };
        -2.0 * grid.integrate_values(
            &(0..vk.len())
                .map(|i| dv[i] * dv[i] / (vk[i] * vk[i]))
                .collect::<Vec<_>>(),
        )
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JMonotoneReport {
    pub pairs_checked: usize,
    pub j_first: f64,
    pub j_last: f64,
    /// Largest `(J_{k+1} − J_k)/|J_k|` over consecutive pairs.
    pub worst_relative_increase: f64,
    /// First pair violating monotonicity beyond the tolerance.
    pub violation: Option<usize>,
    /// Largest `ΔJ/Δτ + 2∫ v_mid⁻² (Δv/Δτ)²`, which should be ≤ 0.
    pub worst_quantitative_excess: f64,
    pub quantitative_holds: bool,
    /// Smallest `J − (−sup f · M² · Vol + log μ · Vol)`, with `μ`, `M` the run
    /// minimum and maximum.
    pub lower_bound_margin: f64,
    pub j_series: Vec<(f64, f64)>,
}

impl JMonotoneReport {
    pub fn monotone(&self) -> bool {
        self.violation.is_none()
    }
}

/// Evaluates monotonicity of J without failing; see [`check_j_monotone`].
pub fn j_monotone_report(
    traj: &Trajectory,
    f: &SourceTerm,
) -> Result<JMonotoneReport, DiagnosticsError> {
    require_frame(traj, &[FrameKind::Tau])?;
    if traj.len() < 2 {
        return Err(DiagnosticsError::TooFewSamples {
            needed: 2,
            found: traj.len(),
        });
    }
    let js = j_values(traj, f)?;
    let s = traj.samples();
    let grid = s[0].field.grid();
    let vol = grid.volume();
    let mu = traj.run_min().unwrap_or(f64::NAN);
    let big_m = traj.run_max().unwrap_or(f64::NAN);

    let mut worst_inc = f64::NEG_INFINITY;
    let mut violation = None;
    for k in 0..js.len() - 1 {
        let inc = js[k + 1] - js[k];
        let rel = inc / js[k].abs().max(f64::MIN_POSITIVE);
        worst_inc = worst_inc.max(rel);
        if inc > MONOTONE_REL_TOL * js[k].abs() && violation.is_none() {
            violation = Some(k);
        }
    }

    let excess: Vec<(f64, f64)> = par::map_range(js.len() - 1, |k| {
        let dt = s[k + 1].time - s[k].time;
        let (a, b) = (s[k].field.values(), s[k + 1].field.values());
        let diss: Vec<f64> = (0..a.len())
            .map(|i| {
                let q = (b[i] - a[i]) / dt;
                let m = 0.5 * (a[i] + b[i]);
                q * q / (m * m)
            })
            .collect();
        let d = 2.0 * grid.integrate_values(&diss);
        let dj = (js[k + 1] - js[k]) / dt;
        (dj + d, dj.abs() + d)
    });
    let worst_excess = excess.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
    let quantitative_holds = excess
        .iter()
        .zip(&js)
        .all(|(&(e, size), j)| e <= QUANTITATIVE_REL_SLACK * size + MONOTONE_REL_TOL * j.abs());

    let lower_bound_margin = s
        .iter()
        .zip(&js)
        .map(|(smp, j)| {
            let sup_f = f.value_at(smp.time).max();
            j - (-sup_f * big_m * big_m * vol + mu.ln() * vol)
        })
        .fold(f64::INFINITY, f64::min);

    Ok(JMonotoneReport {
        pairs_checked: js.len() - 1,
        j_first: js[0],
        j_last: js[js.len() - 1],
        worst_relative_increase: worst_inc,
        violation,
        worst_quantitative_excess: worst_excess,
        quantitative_holds,
        lower_bound_margin,
        j_series: s.iter().map(|x| x.time).zip(js.iter().copied()).collect(),
    })
}

/// Asserts `J(τ_{k+1}) ≤ J(τ_k) + 1e−6·|J(τ_k)|` on every consecutive pair.
pub fn check_j_monotone(
    traj: &Trajectory,
    f: &SourceTerm,
) -> Result<JMonotoneReport, DiagnosticsError> {
    if !f.monotone_flag() {
        return Err(DiagnosticsError::NotMonotone);
    }
    let report = j_monotone_report(traj, f)?;
    if let Some(k) = report.violation {
        let (a, b) = (report.j_series[k], report.j_series[k + 1]);
        return Err(DiagnosticsError::MonotonicityViolation {
            index: k,
            tau0: a.0,
            tau1: b.0,
            j0: a.1,
            j1: b.1,
        });
    }
    Ok(report)
}
