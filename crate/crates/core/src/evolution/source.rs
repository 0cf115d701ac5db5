//! The reaction coefficient `f` of the evolution equations.
//!
//! On the flat torus the background scalar curvature vanishes, so `f` is
//! `r²R/2` directly. It may depend on the frame's time variable; the
//! convergence theory wants it positive, nondecreasing in time and
//! approaching a limit profile `f_{t₁}` exponentially fast.

use std::borrow::Cow;

use thiserror::Error;

use crate::grid::{GridError, ScalarField, TorusGrid};

/// Floor applied to interpolated tabulated values.
const TABULATED_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SourceError {
    #[error("source term must be strictly positive: {0}")]
    NotPositive(String),
    #[error("source term is not monotone: f decreased by {drop:e} between t={t0} and t={t1}")]
    NotMonotone { t0: f64, t1: f64, drop: f64 },
    #[error("invalid source term: {0}")]
    Invalid(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceKind {
    Constant(f64),
    /// `f(p, s) = profile(p) · (1 − amplitude · e^{−rate·s})`.
    Separable {
        profile: ScalarField,
        amplitude: f64,
        rate: f64,
    },
    /// Fields at increasing times, linearly interpolated and held constant
    /// outside the table.
    Tabulated {
        times: Vec<f64>,
        fields: Vec<ScalarField>,
    },
}

/// `f` evaluated at one time: either a constant or a field.
#[derive(Debug, Clone)]
pub enum SourceValue<'a> {
    Scalar(f64),
    Field(Cow<'a, ScalarField>),
}

impl SourceValue<'_> {
    /// Value at grid point `i`.
    #[inline]
    pub fn at(&self, i: usize) -> f64 {
        match self {
            SourceValue::Scalar(c) => *c,
            SourceValue::Field(f) => f.values()[i],
        }
    }

    pub fn min(&self) -> f64 {
        match self {
            SourceValue::Scalar(c) => *c,
            SourceValue::Field(f) => f.min(),
        }
    }

    pub fn max(&self) -> f64 {
        match self {
            SourceValue::Scalar(c) => *c,
            SourceValue::Field(f) => f.max(),
        }
    }

    pub fn to_field(&self, grid: &TorusGrid) -> ScalarField {
        match self {
            SourceValue::Scalar(c) => grid.constant(*c),
            SourceValue::Field(f) => f.as_ref().clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceTerm {
    kind: SourceKind,
    monotone_flag: bool,
    limit_field: Option<ScalarField>,
}

impl SourceTerm {
    pub fn constant(value: f64) -> Result<Self, SourceError> {
        if !(value.is_finite() && value > 0.0) {
            return Err(SourceError::NotPositive(format!("constant {value}")));
        }
        Ok(Self {
            kind: SourceKind::Constant(value),
            monotone_flag: true,
            limit_field: None,
        })
    }

    /// `f ≡ 0`. Outside the positive regime the theory needs; only useful as
    /// a solver smoke test.
    pub fn vanishing() -> Self {
        Self {
            kind: SourceKind::Constant(0.0),
            monotone_flag: true,
            limit_field: None,
        }
    }

    /// Time-independent spatial profile.
    pub fn field(profile: ScalarField) -> Result<Self, SourceError> {
        Self::separable(profile, 0.0, 0.0)
    }

    pub fn separable(profile: ScalarField, amplitude: f64, rate: f64) -> Result<Self, SourceError> {
        if !profile.is_positive() {
            return Err(SourceError::NotPositive(format!(
                "profile minimum {}",
                profile.min()
            )));
        }
        if !(amplitude.is_finite() && amplitude < 1.0) {
            return Err(SourceError::NotPositive(format!(
                "amplitude {amplitude} must be below 1"
            )));
        }
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(SourceError::Invalid(format!("rate {rate} must be >= 0")));
        }
        Ok(Self {
            monotone_flag: amplitude >= 0.0,
            limit_field: Some(profile.clone()),
            kind: SourceKind::Separable {
                profile,
                amplitude,
                rate,
            },
        })
    }

    /// Tabulated source. `monotone_flag` is an assertion that gets checked
    /// against the table, not trusted.
    pub fn tabulated(
        times: Vec<f64>,
        fields: Vec<ScalarField>,
        monotone_flag: bool,
        limit_field: Option<ScalarField>,
    ) -> Result<Self, SourceError> {
        if times.is_empty() || times.len() != fields.len() {
            return Err(SourceError::Invalid(format!(
                "{} times for {} fields",
                times.len(),
                fields.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SourceError::Invalid("table times must increase".into()));
        }
        let grid = fields[0].grid().clone();
        for f in &fields {
            grid.check(f)?;
            if !f.is_positive() {
                return Err(SourceError::NotPositive(format!("table minimum {}", f.min())));
            }
        }
        let term = Self {
            kind: SourceKind::Tabulated { times, fields },
            monotone_flag,
            limit_field,
        };
        if monotone_flag {
            if let SourceKind::Tabulated { times, .. } = &term.kind {
                term.check_monotone(times)?;
            }
        }
        Ok(term)
    }

    pub fn kind(&self) -> &SourceKind {
        &self.kind
    }

    pub fn monotone_flag(&self) -> bool {
        self.monotone_flag
    }

    /// Is `f` independent of time?
    pub fn is_static(&self) -> bool {
        match &self.kind {
            SourceKind::Constant(_) => true,
            SourceKind::Separable {
                amplitude, rate, ..
            } => *amplitude == 0.0 || *rate == 0.0,
            SourceKind::Tabulated { times, .. } => times.len() == 1,
        }
    }

    pub fn value_at(&self, t: f64) -> SourceValue<'_> {
        match &self.kind {
            SourceKind::Constant(c) => SourceValue::Scalar(*c),
            SourceKind::Separable {
                profile,
                amplitude,
                rate,
            } => {
                let factor = 1.0 - amplitude * (-rate * t).exp();
                if factor == 1.0 {
                    SourceValue::Field(Cow::Borrowed(profile))
                } else {
                    SourceValue::Field(Cow::Owned(
                        profile.scale(factor).expect("finite scaling"),
                    ))
                }
            }
            SourceKind::Tabulated { times, fields } => {
                let (i, w) = bracket(times, t);
                if w == 0.0 {
                    return SourceValue::Field(Cow::Borrowed(&fields[i]));
                }
                let f = fields[i]
                    .zip_with(&fields[i + 1], |a, b| ((1.0 - w) * a + w * b).max(TABULATED_FLOOR))
                    .expect("table fields share a grid");
                SourceValue::Field(Cow::Owned(f))
            }
        }
    }

    /// `∂f/∂t` at time `t` (one-sided inside a table interval).
    pub fn time_derivative_at(&self, t: f64) -> SourceValue<'_> {
        match &self.kind {
            SourceKind::Constant(_) => SourceValue::Scalar(0.0),
            SourceKind::Separable {
                profile,
                amplitude,
                rate,
            } => {
                let d = amplitude * rate * (-rate * t).exp();
                SourceValue::Field(Cow::Owned(profile.scale(d).expect("finite scaling")))
            }
            SourceKind::Tabulated { times, fields } => {
                if times.len() == 1 || t < times[0] || t >= times[times.len() - 1] {
                    return SourceValue::Scalar(0.0);
                }
                let (i, _) = bracket(times, t);
                let dt = times[i + 1] - times[i];
                SourceValue::Field(Cow::Owned(
                    fields[i + 1]
                        .zip_with(&fields[i], |b, a| (b - a) / dt)
                        .expect("table fields share a grid"),
                ))
            }
        }
    }

    /// The limit profile `f_{t₁}` as time goes to infinity.
    pub fn limit(&self) -> SourceValue<'_> {
        if let Some(l) = &self.limit_field {
            return SourceValue::Field(Cow::Borrowed(l));
        }
        match &self.kind {
            SourceKind::Constant(c) => SourceValue::Scalar(*c),
            SourceKind::Separable { profile, .. } => SourceValue::Field(Cow::Borrowed(profile)),
            SourceKind::Tabulated { fields, .. } => {
                SourceValue::Field(Cow::Borrowed(&fields[fields.len() - 1]))
            }
        }
    }

    /// The source seen after the time change `t = factor · s`.
    pub fn time_rescaled(&self, factor: f64) -> SourceTerm {
        let kind = match &self.kind {
            SourceKind::Constant(c) => SourceKind::Constant(*c),
            SourceKind::Separable {
                profile,
                amplitude,
                rate,
            } => SourceKind::Separable {
                profile: profile.clone(),
                amplitude: *amplitude,
                rate: rate * factor,
            },
            SourceKind::Tabulated { times, fields } => SourceKind::Tabulated {
                times: times.iter().map(|t| t / factor).collect(),
                fields: fields.clone(),
            },
        };
        SourceTerm {
            kind,
            monotone_flag: self.monotone_flag,
            limit_field: self.limit_field.clone(),
        }
    }

    /// Checks `f(t_{k+1}) ≥ f(t_k)` pointwise (within 1e-12) on the given times.
    pub fn check_monotone(&self, times: &[f64]) -> Result<(), SourceError> {
        let mut prev: Option<(f64, SourceValue<'_>)> = None;
        for &t in times {
            let cur = self.value_at(t);
            if let Some((t0, p)) = &prev {
                let n = match (&cur, p) {
                    (SourceValue::Field(f), _) | (_, SourceValue::Field(f)) => f.len(),
                    _ => 1,
                };
                let drop = (0..n).map(|i| p.at(i) - cur.at(i)).fold(f64::NEG_INFINITY, f64::max);
                if drop > 1e-12 {
                    return Err(SourceError::NotMonotone {
                        t0: *t0,
                        t1: t,
                        drop,
                    });
                }
            }
            prev = Some((t, cur));
        }
        Ok(())
    }

    /// Sup norms of `f − f_{t₁}` and `e^{s}·∂f/∂s` at the given times (the
    /// `i = 0, 1` members of the decay condition).
    pub fn decay_norms(&self, times: &[f64]) -> Vec<(f64, f64, f64)> {
        let limit = self.limit();
        times
            .iter()
            .map(|&t| {
                let v = self.value_at(t);
                let d = self.time_derivative_at(t);
                let n = match (&v, &limit, &d) {
                    (SourceValue::Field(f), _, _)
                    | (_, SourceValue::Field(f), _)
                    | (_, _, SourceValue::Field(f)) => f.len(),
                    _ => 1,
                };
                let mut n0: f64 = 0.0;
                let mut n1: f64 = 0.0;
                for i in 0..n {
                    n0 = n0.max((v.at(i) - limit.at(i)).abs());
                    n1 = n1.max((t.exp() * d.at(i)).abs());
                }
                (t, n0, n1)
            })
            .collect()
    }
}

/// Table interval containing `t`: index `i` and weight `w` of `i + 1`.
fn bracket(times: &[f64], t: f64) -> (usize, f64) {
    let last = times.len() - 1;
    if t <= times[0] || last == 0 {
        return (0, 0.0);
    }
    if t >= times[last] {
        return (last, 0.0);
    }
    let i = times.partition_point(|&x| x <= t) - 1;
    (i, (t - times[i]) / (times[i + 1] - times[i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn grid() -> TorusGrid {
        TorusGrid::new(1, 16, TAU).unwrap()
    }

    #[test]
    fn constant_must_be_positive() {
        assert!(SourceTerm::constant(0.0).is_err());
        assert!(SourceTerm::constant(-1.0).is_err());
        assert!(SourceTerm::constant(0.5).unwrap().is_static());
    }

    #[test]
    fn separable_approaches_profile_monotonically() {
        let g = grid();
        let p = g.field_from_fn(|x| 1.0 + 0.1 * x[0].cos());
        let f = SourceTerm::separable(p.clone(), 0.5, 2.0).unwrap();
        assert!(f.monotone_flag());
        let times: Vec<f64> = (0..50).map(|k| k as f64 * 0.1).collect();
        f.check_monotone(&times).unwrap();
        let late = f.value_at(30.0).to_field(&g);
        assert!(late.max_abs_diff(&p).unwrap() < 1e-20 + 1e-25);
        // e^s · ∂f/∂s = a·r·e^{(1−r)s}·profile: bounded for r ≥ 1
        let norms = f.decay_norms(&[0.0, 5.0]);
        assert!(norms[1].1 < norms[0].1);
    }

    #[test]
    fn tabulated_interpolates_and_flags_violations() {
        let g = grid();
        let a = g.constant(1.0);
        let b = g.constant(2.0);
        let f = SourceTerm::tabulated(vec![0.0, 1.0], vec![a.clone(), b.clone()], true, None).unwrap();
        let mid = f.value_at(0.25);
        assert!((mid.at(3) - 1.25).abs() < 1e-15);
        assert_eq!(f.value_at(-1.0).at(0), 1.0);
        assert_eq!(f.value_at(5.0).at(0), 2.0);
        assert!((f.time_derivative_at(0.5).at(0) - 1.0).abs() < 1e-15);
        let bad = SourceTerm::tabulated(vec![0.0, 1.0], vec![b, a], true, None);
        assert!(matches!(bad, Err(SourceError::NotMonotone { .. })));
    }

    #[test]
    fn rescaling_time_matches_composition() {
        let g = grid();
        let p = g.constant(1.0);
        let f = SourceTerm::separable(p, 0.3, 1.5).unwrap();
        let fr = f.time_rescaled(2.0);
        for s in [0.0, 0.3, 1.7] {
            assert!((fr.value_at(s).at(0) - f.value_at(2.0 * s).at(0)).abs() < 1e-15);
        }
    }
}
