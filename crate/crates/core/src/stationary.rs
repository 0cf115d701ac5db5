//! Positive solutions of `Δω + fω − 1/(2ω) = 0` by damped Newton.
//!
//! The Newton system `(Δ + f + 1/(2v²)) δ = −F(v)` is solved matrix-free by
//! restarted GMRES, right-preconditioned with the spectral inverse of
//! `Δ − c̄`, where `c̄` is the mean of `f + 1/(2v²)`. That operator is
//! negative definite, so the preconditioner always exists, and the
//! preconditioned spectrum lies in `[−1, 1]` up to the variation of `c`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridError, ScalarField, TorusGrid};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StationaryError {
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("line search could not keep the iterate above {floor:e} at iteration {iteration}")]
    PositivityLoss { iteration: usize, floor: f64 },
    #[error("invalid stationary input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationaryOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub positivity_floor: f64,
    pub gmres_restart: usize,
    pub gmres_max_iters: usize,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 100,
            positivity_floor: 1e-6,
            gmres_restart: 60,
            gmres_max_iters: 3000,
        }
    }
}

/// A certified positive profile.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryState {
    pub omega: ScalarField,
    pub residual_norm: f64,
    pub f_used: ScalarField,
    pub iterations: usize,
    /// Max-norm residual before each Newton step and after the last one.
    pub residual_history: Vec<f64>,
}

/// JSON-friendly summary of a [`StationaryState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryMeta {
    pub residual_norm: f64,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub omega_min: f64,
    pub omega_max: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub f_mean: f64,
}

impl StationaryState {
    pub fn meta(&self) -> StationaryMeta {
        StationaryMeta {
            residual_norm: self.residual_norm,
            iterations: self.iterations,
            residual_history: self.residual_history.clone(),
            omega_min: self.omega.min(),
            omega_max: self.omega.max(),
            f_min: self.f_used.min(),
            f_max: self.f_used.max(),
            f_mean: self.f_used.mean(),
        }
    }
}

fn residual_values(grid: &TorusGrid, v: &[f64], f: &[f64]) -> Vec<f64> {
    let lap = grid.laplacian_values(v);
    (0..v.len())
        .map(|i| lap[i] + f[i] * v[i] - 0.5 / v[i])
        .collect()
}

fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Max norm of `Δv + fv − 1/(2v)`.
pub fn stationary_residual(candidate: &ScalarField, f: &ScalarField) -> Result<f64, StationaryError> {
    candidate.grid().check(f)?;
    if !candidate.is_positive() {
        return Err(StationaryError::InvalidInput(format!(
            "candidate must be positive (min {:e})",
            candidate.min()
        )));
    }
    Ok(max_abs(&residual_values(
        candidate.grid(),
        candidate.values(),
        f.values(),
    )))
}

/// The constant `1/√(2 mean f)`, exact when `f` is constant.
pub fn default_guess(f: &ScalarField) -> ScalarField {
    f.grid().constant(1.0 / (2.0 * f.mean()).sqrt())
}

pub fn solve_stationary(
    f: &ScalarField,
    initial_guess: &ScalarField,
    opts: &StationaryOptions,
) -> Result<StationaryState, StationaryError> {
    let grid = f.grid();
    grid.check(initial_guess)?;
    if !f.is_positive() {
        return Err(StationaryError::InvalidInput(format!(
            "f must be positive (min {:e})",
            f.min()
        )));
    }
    if !initial_guess.is_positive() {
        return Err(StationaryError::InvalidInput(format!(
            "initial guess must be positive (min {:e})",
            initial_guess.min()
        )));
    }
    if !(opts.tol > 0.0 && opts.positivity_floor > 0.0 && opts.gmres_restart > 0) {
        return Err(StationaryError::InvalidInput(
            "tol, positivity_floor and gmres_restart must be positive".into(),
        ));
    }

    let fv = f.values();
    let mut v = initial_guess.values().to_vec();
    let mut res = residual_values(grid, &v, fv);
    let mut norm = max_abs(&res);
    let mut history = vec![norm];
    let mut iterations = 0;

    while norm > opts.tol {
        if iterations >= opts.max_iters {
            return Err(StationaryError::NoConvergence {
                iterations,
                residual: norm,
            });
        }
        iterations += 1;
        let c: Vec<f64> = (0..v.len()).map(|i| fv[i] + 0.5 / (v[i] * v[i])).collect();
        let c_bar = c.iter().sum::<f64>() / c.len() as f64;
        let rhs: Vec<f64> = res.iter().map(|r| -r).collect();
        let forcing = norm.clamp(1e-14, 1e-2);
        let delta = gmres(
            |x| {
                let lap = grid.laplacian_values(x);
                (0..x.len()).map(|i| lap[i] + c[i] * x[i]).collect()
            },
            |x| grid.apply_laplacian_function(x, |lap| 1.0 / (lap - c_bar)),
            &rhs,
            forcing,
            opts.gmres_restart,
            opts.gmres_max_iters,
        );

        let mut lambda = 1.0;
        let mut positive_seen = false;
        let accepted = loop {
            let trial: Vec<f64> = v.iter().zip(&delta).map(|(a, d)| a + lambda * d).collect();
            if trial.iter().all(|&x| x >= opts.positivity_floor && x.is_finite()) {
                positive_seen = true;
                let tres = residual_values(grid, &trial, fv);
                let tnorm = max_abs(&tres);
                if tnorm < norm {
                    break Some((trial, tres, tnorm));
                }
            }
            lambda *= 0.5;
            if lambda < 1e-12 {
                break None;
            }
        };
        match accepted {
            Some((trial, tres, tnorm)) => {
                v = trial;
                res = tres;
                norm = tnorm;
                history.push(norm);
            }
            None if !positive_seen => {
                return Err(StationaryError::PositivityLoss {
                    iteration: iterations,
                    floor: opts.positivity_floor,
                })
            }
            None => {
                return Err(StationaryError::NoConvergence {
                    iterations,
                    residual: norm,
                })
            }
        }
    }

    Ok(StationaryState {
        omega: ScalarField::new(grid.clone(), v)?,
        residual_norm: norm,
        f_used: f.clone(),
        iterations,
        residual_history: history,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Restarted right-preconditioned GMRES for `A x = b` from `x = 0`, stopping
/// at `‖b − A x‖₂ ≤ rel_tol·‖b‖₂`.
fn gmres<A, P>(op: A, precond: P, b: &[f64], rel_tol: f64, restart: usize, max_iters: usize) -> Vec<f64>
where
    A: Fn(&[f64]) -> Vec<f64>,
    P: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let mut x = vec![0.0; n];
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return x;
    }
    let target = rel_tol * b_norm;
    let mut total = 0;
    loop {
        let ax = op(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let beta = norm2(&r);
        if beta <= target || total >= max_iters {
            return x;
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h: Vec<Vec<f64>> = Vec::new();
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<f64> = Vec::new();
        let mut g = vec![beta];
        let mut k_used = 0;
        for j in 0..restart {
            total += 1;
            let mut w = op(&precond(&basis[j]));
            let mut col = vec![0.0; j + 2];
            // modified Gram-Schmidt, applied twice for stability
            for _ in 0..2 {
                for (i, q) in basis.iter().enumerate() {
                    let hij = dot(&w, q);
                    col[i] += hij;
                    for (wk, qk) in w.iter_mut().zip(q) {
                        *wk -= hij * qk;
                    }
                }
            }
            let wn = norm2(&w);
            col[j + 1] = wn;
            for i in 0..j {
                let t = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            let d = col[j].hypot(col[j + 1]);
            let (c, s) = if d == 0.0 { (1.0, 0.0) } else { (col[j] / d, col[j + 1] / d) };
            cs.push(c);
            sn.push(s);
            col[j] = d;
            col[j + 1] = 0.0;
            g.push(-s * g[j]);
            g[j] *= c;
            h.push(col);
            k_used = j + 1;
            if g[j + 1].abs() <= target || wn == 0.0 || total >= max_iters {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }
        // back substitution on the triangular factor
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for (l, yl) in y.iter().enumerate().skip(i + 1) {
                s -= h[l][i] * yl;
            }
            y[i] = s / h[i][i];
        }
        let mut z = vec![0.0; n];
        for (yi, q) in y.iter().zip(&basis) {
            for (zk, qk) in z.iter_mut().zip(q) {
                *zk += yi * qk;
            }
        }
        let dz = precond(&z);
        for (xk, d) in x.iter_mut().zip(dz) {
            *xk += d;
        }
    }
}
