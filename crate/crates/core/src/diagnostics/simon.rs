//! The gradient structure behind convergence to the stationary profile.
//!
//! Writing `v = ω e^ν` with `ω̃ = log ω` and `V = e^{ω̃+ν}`, the energy is
//!
//! ```text
//! 𝓔(ν) = ∫ E(ν, ∇ν),  E(z, p) = ½ (e^{2(ω̃+z)} (|p + ∇ω̃|² − f) + z)
//!      = ½ ∫ |∇V|² − f V² + ν
//! ```
//!
//! and `𝓜(ν) = VΔV + fV² − ½` satisfies `⟨𝓜(ν), ξ⟩ = −d/ds 𝓔(ν + sξ)` at
//! `s = 0`. The Hessian of `E` in `p` is `e^{2ω̃}`, bounded below by `μ²`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{require_frame, DiagnosticsError};
use crate::evolution::{SourceTerm, Trajectory};
use crate::frames::FrameKind;
use crate::grid::{ScalarField, TorusGrid};
use crate::par;
use crate::stationary::StationaryState;

/// Finite-difference steps in `s`, combined by Richardson extrapolation.
const FD_STEPS: [f64; 2] = [1e-4, 1e-5];
/// Below this size both sides count as zero for the relative error.
const ZERO_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SimonEnergy {
    omega_tilde: ScalarField,
    f_t1: ScalarField,
    c_convexity: f64,
    grad_omega_tilde: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    /// `⟨𝓜(ν), ξ⟩`.
    pub lhs: f64,
    /// Richardson-extrapolated `−d/ds 𝓔(ν + sξ)`.
    pub rhs: f64,
    /// The two raw centered differences.
    pub rhs_steps: [f64; 2],
    pub relative_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexityCheck {
    pub mu: f64,
    /// Minimum over points of `e^{2ω̃}|p|² − μ²|p|²`.
    pub min_slack: f64,
    /// Largest mismatch between the second difference of `E` in `s` and
    /// `e^{2ω̃}|p|²`.
    pub max_fd_mismatch: f64,
    pub holds: bool,
}

impl SimonEnergy {
    pub fn new(omega: &ScalarField, f_t1: &ScalarField) -> Result<Self, DiagnosticsError> {
        omega.grid().check(f_t1)?;
        if !omega.is_positive() {
            return Err(DiagnosticsError::NotPositive(omega.min()));
        }
        let omega_tilde = omega.map(f64::ln)?;
        let grad = omega.grid().gradient_values(omega_tilde.values());
        let mu = omega.min();
        Ok(Self {
            c_convexity: mu * mu,
            omega_tilde,
            f_t1: f_t1.clone(),
            grad_omega_tilde: grad,
        })
    }

    pub fn from_stationary(state: &StationaryState) -> Result<Self, DiagnosticsError> {
        Self::new(&state.omega, &state.f_used)
    }

    pub fn omega_tilde(&self) -> &ScalarField {
        &self.omega_tilde
    }

    pub fn f_t1(&self) -> &ScalarField {
        &self.f_t1
    }

    /// `μ²`, with `μ = min ω`.
    pub fn c_convexity(&self) -> f64 {
        self.c_convexity
    }

    fn grid(&self) -> &TorusGrid {
        self.omega_tilde.grid()
    }

    fn big_v(&self, nu: &[f64]) -> Vec<f64> {
        let w = self.omega_tilde.values();
        (0..nu.len()).map(|i| (w[i] + nu[i]).exp()).collect()
    }

    /// `𝓔(ν) = ½∫ |∇V|² − fV² + ν`. The gradient is the spectral one, whose
    /// adjoint is the Laplacian used in [`Self::mcal`], so the identity with
    /// `𝓜` holds at the discrete level up to the Nyquist modes of `V`.
    pub fn energy(&self, nu: &ScalarField) -> Result<f64, DiagnosticsError> {
        self.grid().check(nu)?;
        let grid = self.grid();
        let v = self.big_v(nu.values());
        let gv = grid.gradient_values(&v);
        let (f, z) = (self.f_t1.values(), nu.values());
        let sum = par::ordered_sum(z.len(), |i| {
            let g2: f64 = gv.iter().map(|g| g[i] * g[i]).sum();
            0.5 * (g2 - f[i] * v[i] * v[i] + z[i])
        });
        Ok(sum * grid.cell_volume())
    }

    /// `𝓔(ν + hξ) − 𝓔(ν − hξ)`, formed from `D = V₊ − V₋ = 2V sinh(hξ)` and
    /// `S = V₊ + V₋` so that the rounding error is relative to the difference
    /// rather than to `𝓔` itself.
    fn energy_difference(&self, nu: &ScalarField, xi: &ScalarField, h: f64) -> Result<f64, DiagnosticsError> {
        let grid = self.grid();
        let v = self.big_v(nu.values());
        let x = xi.values();
        let d: Vec<f64> = (0..v.len()).map(|i| 2.0 * v[i] * (h * x[i]).sinh()).collect();
        let s: Vec<f64> = (0..v.len()).map(|i| 2.0 * v[i] * (h * x[i]).cosh()).collect();
        let (gd, gs) = (grid.gradient_values(&d), grid.gradient_values(&s));
        let f = self.f_t1.values();
        let sum = par::ordered_sum(v.len(), |i| {
            let g: f64 = gd.iter().zip(&gs).map(|(a, b)| a[i] * b[i]).sum();
            0.5 * (g - f[i] * d[i] * s[i]) + h * x[i]
        });
        Ok(sum * grid.cell_volume())
    }

    /// `𝓜(ν) = VΔV + fV² − ½` with `V = e^{ω̃+ν}`.
    pub fn mcal(&self, nu: &ScalarField) -> Result<ScalarField, DiagnosticsError> {
        self.grid().check(nu)?;
        let v = self.big_v(nu.values());
        let lap = self.grid().laplacian_values(&v);
        let f = self.f_t1.values();
        let vals = (0..v.len())
            .map(|i| v[i] * lap[i] + f[i] * v[i] * v[i] - 0.5)
            .collect();
        Ok(ScalarField::new(self.grid().clone(), vals)?)
    }

    pub fn gradient_check(
        &self,
        nu: &ScalarField,
        xi: &ScalarField,
    ) -> Result<GradientCheck, DiagnosticsError> {
        let grid = self.grid();
        let lhs = grid.inner_product(&self.mcal(nu)?, xi)?;
        grid.check(xi)?;
        let diff = |h: f64| -> Result<f64, DiagnosticsError> {
            Ok(-self.energy_difference(nu, xi, h)? / (2.0 * h))
        };
        let d1 = diff(FD_STEPS[0])?;
        let d2 = diff(FD_STEPS[1])?;
        let r2 = (FD_STEPS[0] / FD_STEPS[1]).powi(2);
        let rhs = (r2 * d2 - d1) / (r2 - 1.0);
        let scale = lhs.abs().max(rhs.abs());
        let relative_error = if scale < ZERO_FLOOR {
            0.0
        } else {
            (lhs - rhs).abs() / scale
        };
        Ok(GradientCheck {
            lhs,
            rhs,
            rhs_steps: [d1, d2],
            relative_error,
        })
    }

    /// Checks `∂²_s E(q, 0, s p) = e^{2ω̃}|p|² ≥ μ²|p|²` pointwise for the
    /// vector field `p` (one component per axis).
    pub fn convexity_check(&self, p: &[ScalarField]) -> Result<ConvexityCheck, DiagnosticsError> {
        let grid = self.grid();
        if p.len() != grid.dim() {
            return Err(DiagnosticsError::TooFewSamples {
                needed: grid.dim(),
                found: p.len(),
            });
        }
        for c in p {
            grid.check(c)?;
        }
        let (w, f) = (self.omega_tilde.values(), self.f_t1.values());
        let mu2 = self.c_convexity;
        let density = |i: usize, s: f64| -> f64 {
            let q2: f64 = p
                .iter()
                .zip(&self.grad_omega_tilde)
                .map(|(pc, gw)| (s * pc.values()[i] + gw[i]).powi(2))
                .sum();
            0.5 * (2.0 * w[i]).exp() * (q2 - f[i])
        };
        let mut min_slack = f64::INFINITY;
        let mut max_mismatch: f64 = 0.0;
        let mut holds = true;
        for i in 0..grid.len() {
            let p2: f64 = p.iter().map(|c| c.values()[i].powi(2)).sum();
            let hess = (2.0 * w[i]).exp() * p2;
            let bound = mu2 * p2;
            holds &= hess >= bound;
            min_slack = min_slack.min(hess - bound);
            // E is quadratic in s, so the unit second difference is exact up to rounding
            let fd = density(i, 1.0) + density(i, -1.0) - 2.0 * density(i, 0.0);
            max_mismatch = max_mismatch.max((fd - hess).abs() / hess.max(1.0));
        }
        Ok(ConvexityCheck {
            mu: mu2.sqrt(),
            min_slack,
            max_fd_mismatch: max_mismatch,
            holds,
        })
    }
}

/// Random smooth field: a few low Fourier modes, scaled to max norm `amp`.
pub(crate) fn random_smooth_field(grid: &TorusGrid, rng: &mut ChaCha8Rng, amp: f64) -> ScalarField {
    let dim = grid.dim();
    let w = std::f64::consts::TAU / grid.period();
    let terms: Vec<(Vec<f64>, f64, f64)> = (0..6)
        .map(|_| {
            let k: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3i32..=3) as f64 * w).collect();
            (k, rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(-1.0..1.0))
        })
        .collect();
    let c0: f64 = rng.gen_range(-0.5..0.5);
    let raw = grid.field_from_fn(|x| {
        c0 + terms
            .iter()
            .map(|(k, ph, a)| {
                let arg: f64 = k.iter().zip(x).map(|(ki, xi)| ki * xi).sum();
                a * (arg + ph).cos()
            })
            .sum::<f64>()
    });
    let m = raw.max_abs().max(1e-300);
    raw.scale(amp / m).expect("finite scaling")
}

/// Runs `count` gradient checks with random `(ν, ξ)` of max norm `amp`.
pub fn randomized_gradient_checks(
    energy: &SimonEnergy,
    count: usize,
    seed: u64,
    amp: f64,
) -> Result<Vec<GradientCheck>, DiagnosticsError> {
    let grid = energy.grid().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(ScalarField, ScalarField)> = (0..count)
        .map(|_| {
            let nu = random_smooth_field(&grid, &mut rng, amp);
            let xi = random_smooth_field(&grid, &mut rng, amp);
            (nu, xi)
        })
        .collect();
    par::map_range(pairs.len(), |k| energy.gradient_check(&pairs[k].0, &pairs[k].1))
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuDecay {
    /// Fitted slope of `log ‖ν‖_max` over the tail (`−inf` if `ν ≡ 0`).
    pub rate: f64,
    pub final_norm: f64,
    pub certified: bool,
    pub norms: Vec<(f64, f64)>,
    /// `max (‖(f − f_{t₁}) v²‖ e^{τ − T})` over the tail, `T` its start.
    pub f_decay_delta: f64,
    /// No growth trend in `‖(f − f_{t₁}) v²‖ e^{τ}` over the tail.
    pub f_decay_holds: bool,
}

/// Convergence threshold on the final `‖ν‖_max`.
pub const NU_CERTIFY: f64 = 1e-4;
/// Required `max ‖ν‖` over the last quartile before the tail is analysed.
pub const NU_TAIL_MAX: f64 = 0.5;

/// Decay of `ν = log(v/ω)` over the last quartile of a τ-frame run.
pub fn nu_decay(
    traj: &Trajectory,
    omega: &StationaryState,
    f: &SourceTerm,
) -> Result<NuDecay, DiagnosticsError> {
    require_frame(traj, &[FrameKind::Tau])?;
    let s = traj.samples();
    if s.len() < 4 {
        return Err(DiagnosticsError::TooFewSamples {
            needed: 4,
            found: s.len(),
        });
    }
    let om = omega.omega.values();
    let norms: Vec<(f64, f64)> = par::map_range(s.len(), |k| {
        let v = s[k].field.values();
        let m = (0..v.len()).fold(0.0f64, |m, i| m.max((v[i] / om[i]).ln().abs()));
        (s[k].time, m)
    });
    let tail = &norms[(3 * norms.len()) / 4..];
    let max_norm = tail.iter().map(|x| x.1).fold(0.0, f64::max);
    if !(max_norm < NU_TAIL_MAX) {
        return Err(DiagnosticsError::TailNotConverged { max_norm });
    }
    let final_norm = norms[norms.len() - 1].1;
    let pts: Vec<(f64, f64)> = tail
        .iter()
        .filter(|x| x.1 > 0.0)
        .map(|&(t, m)| (t, m.ln()))
        .collect();
    let rate = if pts.len() < 2 {
        f64::NEG_INFINITY
    } else {
        crate::evolution::linear_fit(&pts).0
    };

    let tail_start = (3 * s.len()) / 4;
    let t0 = s[tail_start].time;
    let limit = f.limit();
    let q: Vec<f64> = s[tail_start..]
        .iter()
        .map(|smp| {
            let fv = f.value_at(smp.time);
            let v = smp.field.values();
            let qn = (0..v.len()).fold(0.0f64, |m, i| {
                m.max(((fv.at(i) - limit.at(i)) * v[i] * v[i]).abs())
            });
            qn * (smp.time - t0).exp()
        })
        .collect();
    let f_decay_delta = q.iter().copied().fold(0.0, f64::max);
    let f_decay_holds = f_decay_delta == 0.0 || super::no_trend(&q).2;

    Ok(NuDecay {
        rate,
        final_norm,
        certified: rate < 0.0 && final_norm <= NU_CERTIFY,
        norms,
        f_decay_delta,
        f_decay_holds,
    })
}
