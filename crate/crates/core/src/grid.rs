//! Periodic uniform grids on the flat torus and the fields that live on them.
//!
//! The torus `[0, L)^d` carries the flat metric, so the Laplace–Beltrami
//! operator is the ordinary Laplacian. All differential operators are applied
//! spectrally: a field is transformed with an FFT along every axis, multiplied
//! by the operator symbol, and transformed back. For an even number of points
//! `N` per axis the wavenumbers are `0, 1, …, N/2 − 1, ±N/2, −N/2 + 1, …, −1`
//! (times `2π/L`). The Nyquist mode keeps its `(N/2)²` symbol in the Laplacian
//! and is dropped from first derivatives.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par;

/// Upper bound on the total number of grid points.
const MAX_POINTS: usize = 1 << 24;

/// Number of FFT lines handed to one task.
const LINES_PER_TASK: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: operation is on {expected}, field is on {found}")]
    GridMismatch { expected: GridSpec, found: GridSpec },
    #[error("expected {expected} values, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
}

/// Plain description of a grid: what gets written into snapshot headers and
/// configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub points_per_axis: usize,
    pub period: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            dim: 2,
            points_per_axis: 64,
            period: std::f64::consts::TAU,
        }
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}-torus with {} points/axis, period {}",
            self.dim, self.points_per_axis, self.period
        )
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), GridError> {
        if self.dim == 0 {
            return Err(GridError::InvalidGrid("dimension must be at least 1".into()));
        }
        if self.points_per_axis < 8 || !self.points_per_axis.is_multiple_of(2) {
            return Err(GridError::InvalidGrid(format!(
                "points per axis must be even and >= 8, got {}",
                self.points_per_axis
            )));
        }
        if !(self.period.is_finite() && self.period > 0.0) {
            return Err(GridError::InvalidGrid(format!(
                "period must be positive, got {}",
                self.period
            )));
        }
        let total = (0..self.dim).try_fold(1usize, |acc, _| acc.checked_mul(self.points_per_axis));
        match total {
            Some(t) if t <= MAX_POINTS => Ok(()),
            _ => Err(GridError::InvalidGrid(format!(
                "{} exceeds {MAX_POINTS} points",
                self
            ))),
        }
    }
}

struct Inner {
    spec: GridSpec,
    len: usize,
    cell_volume: f64,
    /// Scaled first-derivative wavenumber per axis index, Nyquist zeroed.
    deriv_wave: Vec<f64>,
    /// Laplacian symbol `-|k|²` per flat index.
    lap_symbol: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Uniform periodic grid on the flat torus `[0, period)^dim`.
///
/// Cloning is cheap; clones share FFT plans and symbol tables. Two grids are
/// equal when their [`GridSpec`]s are.
#[derive(Clone)]
pub struct TorusGrid {
    inner: Arc<Inner>,
}

impl fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("TorusGrid").field(&self.inner.spec).finish()
    }
}

impl PartialEq for TorusGrid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner) || self.inner.spec == other.inner.spec
    }
}

#[derive(Clone, Copy)]
enum Direction {
    Forward,
    Inverse,
}

impl TorusGrid {
    pub fn new(dim: usize, points_per_axis: usize, period: f64) -> Result<Self, GridError> {
        Self::from_spec(GridSpec {
            dim,
            points_per_axis,
            period,
        })
    }

    pub fn from_spec(spec: GridSpec) -> Result<Self, GridError> {
        spec.validate()?;
        let n = spec.points_per_axis;
        let len = n.pow(spec.dim as u32);
        let scale = std::f64::consts::TAU / spec.period;
        let signed = |j: usize| -> f64 {
            if j <= n / 2 {
                j as f64
            } else {
                j as f64 - n as f64
            }
        };
        let deriv_wave = (0..n)
            .map(|j| if j == n / 2 { 0.0 } else { scale * signed(j) })
            .collect();
        let sq: Vec<f64> = (0..n).map(|j| (scale * signed(j)).powi(2)).collect();
        let lap_symbol = (0..len)
            .map(|idx| {
                let mut rest = idx;
                let mut acc = 0.0;
                for _ in 0..spec.dim {
                    acc += sq[rest % n];
                    rest /= n;
                }
                -acc
            })
            .collect();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        Ok(Self {
            inner: Arc::new(Inner {
                spec,
                len,
                cell_volume: (spec.period / n as f64).powi(spec.dim as i32),
                deriv_wave,
                lap_symbol,
                forward,
                inverse,
            }),
        })
    }

    pub fn spec(&self) -> GridSpec {
        self.inner.spec
    }

    pub fn dim(&self) -> usize {
        self.inner.spec.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.inner.spec.points_per_axis
    }

    pub fn period(&self) -> f64 {
        self.inner.spec.period
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.inner.len
    }

    pub fn is_empty(&self) -> bool {
        self.inner.len == 0
    }

    /// Quadrature weight of one grid point.
    pub fn cell_volume(&self) -> f64 {
        self.inner.cell_volume
    }

    /// Total volume by quadrature (`len · cell_volume`).
    pub fn volume(&self) -> f64 {
        self.inner.len as f64 * self.inner.cell_volume
    }

    /// Grid spacing along every axis.
    pub fn spacing(&self) -> f64 {
        self.period() / self.points_per_axis() as f64
    }

    /// Coordinates of the point with flat (row-major) index `idx`; axis 0 is
    /// the slowest-varying one.
    pub fn coordinates(&self, idx: usize) -> Vec<f64> {
        let n = self.points_per_axis();
        let h = self.spacing();
        let mut out = vec![0.0; self.dim()];
        let mut rest = idx;
        for a in (0..self.dim()).rev() {
            out[a] = (rest % n) as f64 * h;
            rest /= n;
        }
        out
    }

    /// Index along `axis` of the point with flat index `idx`.
    fn axis_index(&self, idx: usize, axis: usize) -> usize {
        let n = self.points_per_axis();
        (idx / n.pow((self.dim() - 1 - axis) as u32)) % n
    }

    pub fn constant(&self, value: f64) -> ScalarField {
        ScalarField {
            grid: self.clone(),
            values: vec![value; self.len()],
        }
    }

    /// Samples `f` at every grid point. Panics if `f` returns a non-finite value.
    pub fn field_from_fn<F>(&self, f: F) -> ScalarField
    where
        F: Fn(&[f64]) -> f64 + Sync + Send,
    {
        let values = par::map_range(self.len(), |i| f(&self.coordinates(i)));
        ScalarField::new(self.clone(), values).expect("field_from_fn produced non-finite values")
    }

    pub fn check(&self, field: &ScalarField) -> Result<(), GridError> {
        if field.grid != *self {
            return Err(GridError::GridMismatch {
                expected: self.spec(),
                found: field.grid.spec(),
            });
        }
        Ok(())
    }

    fn transform(&self, buf: &mut [Complex<f64>], dir: Direction) {
        let n = self.points_per_axis();
        let dim = self.dim();
        let len = self.len();
        let plan = match dir {
            Direction::Forward => &self.inner.forward,
            Direction::Inverse => &self.inner.inverse,
        };
        for axis in 0..dim {
            let stride = n.pow((dim - 1 - axis) as u32);
            if stride == 1 {
                par::for_each_chunk_mut(buf, n * LINES_PER_TASK, |_, c| plan.process(c));
                continue;
            }
            // Gather lines along `axis` into contiguous storage, transform, scatter.
            let mut lines = vec![Complex::default(); len];
            {
                let src: &[Complex<f64>] = buf;
                par::for_each_chunk_mut(&mut lines, n * LINES_PER_TASK, |ci, chunk| {
                    for (k, line) in chunk.chunks_mut(n).enumerate() {
                        let l = ci * LINES_PER_TASK + k;
                        let base = (l / stride) * n * stride + l % stride;
                        for (j, z) in line.iter_mut().enumerate() {
                            *z = src[base + j * stride];
                        }
                    }
                    plan.process(chunk);
                });
            }
            for (l, line) in lines.chunks(n).enumerate() {
                let base = (l / stride) * n * stride + l % stride;
                for (j, z) in line.iter().enumerate() {
                    buf[base + j * stride] = *z;
                }
            }
        }
    }

    fn forward(&self, values: &[f64]) -> Vec<Complex<f64>> {
        let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.transform(&mut buf, Direction::Forward);
        buf
    }

    fn inverse_real(&self, mut buf: Vec<Complex<f64>>) -> Vec<f64> {
        self.transform(&mut buf, Direction::Inverse);
        let norm = 1.0 / self.len() as f64;
        buf.into_iter().map(|z| z.re * norm).collect()
    }

    /// Multiplies the spectrum of `values` by `symbol(flat_index)`.
    fn apply_symbol<F>(&self, values: &[f64], symbol: F) -> Vec<f64>
    where
        F: Fn(usize) -> Complex<f64> + Sync + Send,
    {
        let mut spec = self.forward(values);
        par::for_each_chunk_mut(&mut spec, par::REDUCE_CHUNK, |ci, chunk| {
            let lo = ci * par::REDUCE_CHUNK;
            for (k, z) in chunk.iter_mut().enumerate() {
                *z *= symbol(lo + k);
            }
        });
        self.inverse_real(spec)
    }

    /// Spectral Laplacian on raw values (length must equal `len()`).
    pub(crate) fn laplacian_values(&self, values: &[f64]) -> Vec<f64> {
        debug_assert_eq!(values.len(), self.len());
        let sym = &self.inner.lap_symbol;
        self.apply_symbol(values, |i| Complex::new(sym[i], 0.0))
    }

    /// Spectral partial derivatives on raw values, one vector per axis.
    pub(crate) fn gradient_values(&self, values: &[f64]) -> Vec<Vec<f64>> {
        let spec = self.forward(values);
        (0..self.dim())
            .map(|axis| {
                let mut s = spec.clone();
                for (i, z) in s.iter_mut().enumerate() {
                    let k = self.inner.deriv_wave[self.axis_index(i, axis)];
                    *z *= Complex::new(0.0, k);
                }
                self.inverse_real(s)
            })
            .collect()
    }

    /// Applies a real spectral multiplier given as a function of the integer
    /// wavenumbers (unscaled, signed, one per axis). Used for operators that
    /// are not plain Laplacian powers, such as `(1 + ∂θθ)⁻¹` on curves.
    pub(crate) fn apply_wave_multiplier<F>(&self, values: &[f64], multiplier: F) -> Vec<f64>
    where
        F: Fn(&[i64]) -> f64 + Sync + Send,
    {
        let n = self.points_per_axis();
        let dim = self.dim();
        let mut ks = vec![0i64; dim];
        let table: Vec<f64> = (0..self.len())
            .map(|idx| {
                let mut rest = idx;
                for a in (0..dim).rev() {
                    let j = rest % n;
                    ks[a] = if j <= n / 2 { j as i64 } else { j as i64 - n as i64 };
                    rest /= n;
                }
                multiplier(&ks)
            })
            .collect();
        self.apply_symbol(values, |idx| Complex::new(table[idx], 0.0))
    }

    /// Applies `g(−|k|²)`, a function of the Laplacian symbol.
    pub(crate) fn apply_laplacian_function<F>(&self, values: &[f64], g: F) -> Vec<f64>
    where
        F: Fn(f64) -> f64 + Sync + Send,
    {
        let sym = &self.inner.lap_symbol;
        self.apply_symbol(values, |i| Complex::new(g(sym[i]), 0.0))
    }

    pub(crate) fn integrate_values(&self, values: &[f64]) -> f64 {
        par::ordered_sum(values.len(), |i| values[i]) * self.cell_volume()
    }

    /// Δ(field). Exact on every resolved Fourier mode.
    pub fn laplacian(&self, field: &ScalarField) -> Result<ScalarField, GridError> {
        self.check(field)?;
        Ok(ScalarField {
            grid: self.clone(),
            values: self.laplacian_values(&field.values),
        })
    }

    /// Spectral gradient, one component field per axis.
    pub fn gradient(&self, field: &ScalarField) -> Result<Vec<ScalarField>, GridError> {
        self.check(field)?;
        Ok(self
            .gradient_values(&field.values)
            .into_iter()
            .map(|values| ScalarField {
                grid: self.clone(),
                values,
            })
            .collect())
    }

    /// Quadrature `∫ field dV`; spectrally exact for band-limited integrands.
    pub fn integrate(&self, field: &ScalarField) -> Result<f64, GridError> {
        self.check(field)?;
        Ok(self.integrate_values(&field.values))
    }

    /// Quadrature inner product `∫ a·b dV`.
    pub fn inner_product(&self, a: &ScalarField, b: &ScalarField) -> Result<f64, GridError> {
        self.check(a)?;
        self.check(b)?;
        let (x, y) = (&a.values, &b.values);
        Ok(par::ordered_sum(x.len(), |i| x[i] * y[i]) * self.cell_volume())
    }

    /// Green's operator: the mean-zero `φ` with `Δφ = ρ − mean(ρ)`.
    ///
    /// `−greens_solve` is the positive Green's operator of `−Δ`, so composing
    /// with [`TorusGrid::laplacian`] gives `v = greens_solve(Δv) + mean(v)`.
    pub fn greens_solve(&self, rho: &ScalarField) -> Result<ScalarField, GridError> {
        self.check(rho)?;
        let sym = &self.inner.lap_symbol;
        let values = self.apply_symbol(&rho.values, |i| {
            if sym[i] == 0.0 {
                Complex::new(0.0, 0.0)
            } else {
                Complex::new(1.0 / sym[i], 0.0)
            }
        });
        Ok(ScalarField {
            grid: self.clone(),
            values,
        })
    }
}

/// Real values on a [`TorusGrid`], one per grid point in row-major order.
///
/// Values are finite: every constructor and fallible transformation checks it.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: TorusGrid,
    values: Vec<f64>,
}

fn check_finite(values: &[f64]) -> Result<(), GridError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(GridError::NonFinite {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

impl ScalarField {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::LengthMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        check_finite(&values)?;
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_positive(&self) -> bool {
        self.values.iter().all(|&v| v > 0.0)
    }

    pub fn integral(&self) -> f64 {
        self.grid.integrate_values(&self.values)
    }

    pub fn mean(&self) -> f64 {
        self.integral() / self.grid.volume()
    }

    pub fn laplacian(&self) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.grid.laplacian_values(&self.values),
        }
    }

    pub fn gradient(&self) -> Vec<ScalarField> {
        self.grid
            .gradient(self)
            .expect("field is on its own grid")
    }

    /// Pointwise map; fails if the result is not finite.
    pub fn map<F>(&self, f: F) -> Result<ScalarField, GridError>
    where
        F: Fn(f64) -> f64,
    {
        ScalarField::new(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_with<F>(&self, other: &ScalarField, f: F) -> Result<ScalarField, GridError>
    where
        F: Fn(f64, f64) -> f64,
    {
        self.grid.check(other)?;
        ScalarField::new(
            self.grid.clone(),
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn scale(&self, c: f64) -> Result<ScalarField, GridError> {
        self.map(|v| c * v)
    }

    /// `‖self − other‖_∞`.
    pub fn max_abs_diff(&self, other: &ScalarField) -> Result<f64, GridError> {
        self.grid.check(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, TAU};

    fn grid2(n: usize) -> TorusGrid {
        TorusGrid::new(2, n, TAU).unwrap()
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(TorusGrid::new(0, 16, TAU).is_err());
        assert!(TorusGrid::new(1, 6, TAU).is_err());
        assert!(TorusGrid::new(1, 15, TAU).is_err());
        assert!(TorusGrid::new(1, 16, -1.0).is_err());
        assert!(TorusGrid::new(8, 64, TAU).is_err());
    }

    #[test]
    fn volume_is_product_of_periods() {
        let g = TorusGrid::new(3, 8, 1.5).unwrap();
        assert!((g.volume() - 1.5f64.powi(3)).abs() < 1e-14);
        let one = g.constant(1.0);
        assert!((g.integrate(&one).unwrap() - 3.375).abs() < 1e-13);
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        let g = grid2(64);
        let lap = g.laplacian(&g.constant(1.0)).unwrap();
        assert!(lap.max_abs() <= 1e-12);
    }

    #[test]
    fn laplacian_of_cos_theta1() {
        let g = grid2(64);
        let f = g.field_from_fn(|x| x[0].cos());
        let lap = f.laplacian();
        let expected = f.scale(-1.0).unwrap();
        assert!(lap.max_abs_diff(&expected).unwrap() < 1e-12);
    }

    #[test]
    fn laplacian_of_separable_product() {
        let g = grid2(64);
        let f = g.field_from_fn(|x| (2.0 * x[0]).cos() * (3.0 * x[1]).cos());
        let expected = f.scale(-13.0).unwrap();
        assert!(f.laplacian().max_abs_diff(&expected).unwrap() < 1e-11);
    }

    #[test]
    fn axis_zero_is_slowest() {
        let g = TorusGrid::new(2, 8, TAU).unwrap();
        let c = g.coordinates(1);
        assert_eq!(c[0], 0.0);
        assert!((c[1] - TAU / 8.0).abs() < 1e-15);
        let c = g.coordinates(8);
        assert!((c[0] - TAU / 8.0).abs() < 1e-15);
    }

    #[test]
    fn integrals_of_simple_fields() {
        let g = grid2(64);
        assert!((g.integrate(&g.constant(1.0)).unwrap() - 4.0 * PI * PI).abs() < 1e-12);
        let c = g.field_from_fn(|x| x[0].cos());
        assert!(g.integrate(&c).unwrap().abs() < 1e-12);
        let c2 = g.field_from_fn(|x| x[0].cos().powi(2));
        assert!((g.integrate(&c2).unwrap() - 2.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn greens_solve_examples() {
        let g = grid2(32);
        assert!(g.greens_solve(&g.constant(3.0)).unwrap().max_abs() < 1e-14);
        let rho = g.field_from_fn(|x| x[0].cos());
        let phi = g.greens_solve(&rho).unwrap();
        assert!(phi.max_abs_diff(&rho.scale(-1.0).unwrap()).unwrap() < 1e-13);
    }

    #[test]
    fn greens_identity_reproduces_field() {
        let g = grid2(32);
        let v = g.field_from_fn(|x| 2.0 + x[0].cos());
        let lap = v.laplacian();
        let phi = g.greens_solve(&lap).unwrap();
        let rebuilt = phi.map(|p| p + v.mean()).unwrap();
        assert!(rebuilt.max_abs_diff(&v).unwrap() <= 1e-10);
    }

    #[test]
    fn mismatched_grid_is_rejected() {
        let a = grid2(16);
        let b = grid2(32);
        let f = b.constant(1.0);
        assert!(matches!(a.laplacian(&f), Err(GridError::GridMismatch { .. })));
        assert!(matches!(a.integrate(&f), Err(GridError::GridMismatch { .. })));
    }

    #[test]
    fn gradient_of_sin() {
        let g = grid2(32);
        let f = g.field_from_fn(|x| (2.0 * x[1]).sin());
        let grad = f.gradient();
        assert!(grad[0].max_abs() < 1e-13);
        let expected = g.field_from_fn(|x| 2.0 * (2.0 * x[1]).cos());
        assert!(grad[1].max_abs_diff(&expected).unwrap() < 1e-12);
    }

    #[test]
    fn non_finite_values_rejected() {
        let g = TorusGrid::new(1, 8, TAU).unwrap();
        let mut v = vec![1.0; 8];
        v[3] = f64::NAN;
        assert!(matches!(
            ScalarField::new(g.clone(), v),
            Err(GridError::NonFinite { index: 3, .. })
        ));
        assert!(g.constant(1.0).map(|x| x / 0.0).is_err());
    }

    #[test]
    fn eigenvalues_on_nontrivial_period() {
        let period = 3.0;
        let g = TorusGrid::new(1, 64, period).unwrap();
        for k in 1..=16 {
            let w = TAU * k as f64 / period;
            let f = g.field_from_fn(|x| (w * x[0]).cos());
            let lap = f.laplacian();
            // Rayleigh quotient on the sampled eigenfunction
            let num = g.inner_product(&lap, &f).unwrap();
            let den = g.inner_product(&f, &f).unwrap();
            let rel = (num / den + w * w).abs() / (w * w);
            assert!(rel < 1e-10, "k={k} rel={rel}");
        }
    }
}
