use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::source::SourceTerm;
use crate::frames::{Frame, FrameKind};
use crate::grid::{GridError, ScalarField};
use crate::par;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("sample times must strictly increase: {time} follows {previous}")]
    NotIncreasing { previous: f64, time: f64 },
    #[error("sample at time {time} is not strictly positive (min {min:e})")]
    NotPositive { time: f64, min: f64 },
    #[error("trajectory has no samples")]
    Empty,
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub time: f64,
    pub field: ScalarField,
}

/// Scalar summary of one sample. `j` and `residual` are filled in by
/// [`Trajectory::annotate`]; `residual` measures the step from the previous
/// sample and is absent for the first one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub time: f64,
    pub min: f64,
    pub max: f64,
    pub j: Option<f64>,
    pub residual: Option<f64>,
}

/// Time samples of a positive solution in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    frame: Frame,
    samples: Vec<Sample>,
    records: Vec<SampleRecord>,
}

impl Trajectory {
    pub fn new(frame: Frame) -> Self {
        Self {
            frame,
            samples: Vec::new(),
            records: Vec::new(),
        }
    }

    pub fn from_samples<I>(frame: Frame, samples: I) -> Result<Self, TrajectoryError>
    where
        I: IntoIterator<Item = (f64, ScalarField)>,
    {
        let mut traj = Self::new(frame);
        for (t, f) in samples {
            traj.push(t, f)?;
        }
        Ok(traj)
    }

    pub fn push(&mut self, time: f64, field: ScalarField) -> Result<(), TrajectoryError> {
        if let Some(last) = self.samples.last() {
            if !(time > last.time) {
                return Err(TrajectoryError::NotIncreasing {
                    previous: last.time,
                    time,
                });
            }
            last.field.grid().check(&field)?;
        }
        if !time.is_finite() {
            return Err(TrajectoryError::NotIncreasing {
                previous: self.samples.last().map_or(f64::NEG_INFINITY, |s| s.time),
                time,
            });
        }
        let min = field.min();
        if !(min > 0.0) {
            return Err(TrajectoryError::NotPositive { time, min });
        }
        self.records.push(SampleRecord {
            time,
            min,
            max: field.max(),
            j: None,
            residual: None,
        });
        self.samples.push(Sample { time, field });
        Ok(())
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first(&self) -> Option<&Sample> {
        self.samples.first()
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.time).collect()
    }

    /// `(time, sup field)` for each sample.
    pub fn sup_series(&self) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.time, r.max)).collect()
    }

    /// Smallest value attained anywhere along the run.
    pub fn run_min(&self) -> Option<f64> {
        self.records.iter().map(|r| r.min).reduce(f64::min)
    }

    pub fn run_max(&self) -> Option<f64> {
        self.records.iter().map(|r| r.max).reduce(f64::max)
    }

    /// Linear interpolation between the bracketing samples.
    pub fn interpolate(&self, time: f64) -> Option<ScalarField> {
        let first = self.samples.first()?;
        let last = self.samples.last()?;
        if time < first.time || time > last.time {
            return None;
        }
        let i = self.samples.partition_point(|s| s.time <= time);
        if i == 0 {
            return Some(first.field.clone());
        }
        let a = &self.samples[i - 1];
        if a.time == time || i == self.samples.len() {
            return Some(a.field.clone());
        }
        let b = &self.samples[i];
        let w = (time - a.time) / (b.time - a.time);
        a.field.zip_with(&b.field, |x, y| (1.0 - w) * x + w * y).ok()
    }

    /// Every `stride`-th sample, always keeping the last.
    pub fn thinned(&self, stride: usize) -> Trajectory {
        let stride = stride.max(1);
        let n = self.samples.len();
        let keep: Vec<usize> = (0..n)
            .filter(|&i| i % stride == 0 || i + 1 == n)
            .collect();
        Trajectory {
            frame: self.frame,
            samples: keep.iter().map(|&i| self.samples[i].clone()).collect(),
            records: keep.iter().map(|&i| self.records[i]).collect(),
        }
    }

    /// Samples whose time lies in `[t0, t1]`.
    pub fn window(&self, t0: f64, t1: f64) -> Trajectory {
        let keep: Vec<usize> = (0..self.samples.len())
            .filter(|&i| (t0..=t1).contains(&self.samples[i].time))
            .collect();
        Trajectory {
            frame: self.frame,
            samples: keep.iter().map(|&i| self.samples[i].clone()).collect(),
            records: keep.iter().map(|&i| self.records[i]).collect(),
        }
    }

    /// Fills in J and the step residual of every sample. J is the functional
    /// of the τ-frame and is only recorded for that frame.
    pub fn annotate(&mut self, f: &SourceTerm) {
        let frame = self.frame;
        let samples = &self.samples;
        let extra: Vec<(Option<f64>, Option<f64>)> = par::map_range(samples.len(), |i| {
            let s = &samples[i];
            let j = (frame.kind() == FrameKind::Tau).then(|| {
                let fv = f.value_at(s.time).to_field(s.field.grid());
                crate::diagnostics::lyapunov_j(&s.field, &fv).unwrap_or(f64::NAN)
            });
            let res = (i > 0).then(|| {
                let p = &samples[i - 1];
                super::residual((p.time, &p.field), (s.time, &s.field), &frame, f)
                    .unwrap_or(f64::NAN)
            });
            (j, res)
        });
        for (r, (j, res)) in self.records.iter_mut().zip(extra) {
            r.j = j;
            r.residual = res;
        }
    }

    /// Largest recorded step residual.
    pub fn max_residual(&self) -> Option<f64> {
        self.records
            .iter()
            .filter_map(|r| r.residual)
            .reduce(f64::max)
    }

    /// Scalar time series as CSV: `time,min,max,J,residual`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "time,min,max,J,residual")?;
        let opt = |x: Option<f64>| x.map_or_else(String::new, |v| format!("{v:?}"));
        for r in &self.records {
            writeln!(
                out,
                "{:?},{:?},{:?},{},{}",
                r.time,
                r.min,
                r.max,
                opt(r.j),
                opt(r.residual)
            )?;
        }
        Ok(())
    }
}
