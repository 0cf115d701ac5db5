//! Scenario pipelines behind each subcommand. Every run is computed in
//! memory first; artifacts are written only once the whole batch succeeded.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt::Write as _;

use pscurv::csf::{
    close_pair_residual, csf_evolve_curvature, csf_evolve_support, csf_to_torus_solution,
    normalized_deviation, paired_times, CsfError, CurveTrajectory,
};
use pscurv::diagnostics::{
    ab_check, diagnostics_records, harnack_ratio, j_monotone_report, lyapunov_j, nu_decay,
    randomized_gradient_checks, DiagnosticsError, SimonEnergy,
};
use pscurv::evolution::{evolve, residual, EvolveError, SourceTerm, Trajectory};
use pscurv::extension::{extension_report, omega_to_v_factor, tail_times, ExtensionError};
use pscurv::frames::{self_similar_constant, t_to_tau, FrameError, TrivialSolution};
use pscurv::scenarios::{blowup_pipeline, csf_pipeline, BlowupRun, ScenarioError};
use pscurv::snapshot::{self, SnapshotError};
use pscurv::stationary::{default_guess, StationaryError};
use pscurv::grid::GridError;
use pscurv::{solve_stationary, Frame, FrameKind, ScalarField, StationaryState, TorusGrid};
use thiserror::Error;

use crate::config::{is_csf, ConfigError, CurveConfig, ExperimentConfig, PdeSetup, Profile, SnapshotFormat};
use crate::report::Report;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error(transparent)]
    Csf(#[from] CsfError),
    #[error(transparent)]
    Stationary(#[from] StationaryError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Extension(#[from] ExtensionError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("blow-up run has no r1")]
    NoRadius,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Evolve,
    Stationary,
    Csf,
    Diagnose,
    Extend,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Evolve => "evolve",
            Command::Stationary => "stationary",
            Command::Csf => "csf",
            Command::Diagnose => "diagnose",
            Command::Extend => "extend",
        }
    }
}

/// A file to write into the run directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: Report,
    pub artifacts: Vec<Artifact>,
}

/// Rejects scenario/command pairs that have nothing to run, before any
/// computation or output.
pub fn check_applicable(cmd: Command, cfg: &ExperimentConfig) -> Result<(), ConfigError> {
    let csf = is_csf(cfg.scenario);
    let kind = (!csf).then(|| cfg.pde_setup().map(|s| s.preset.frame.kind())).transpose()?;
    let bad = |reason: &str| ConfigError::Invalid {
        field: "scenario".into(),
        reason: reason.into(),
    };
    match cmd {
        Command::Csf if !csf => Err(bad("the csf command needs CSF_CIRCLE or CSF_ELLIPSE")),
        Command::Extend if !(csf || kind == Some(FrameKind::T)) => {
            Err(bad("the extend command needs a t-frame blow-up run or a curve scenario"))
        }
        Command::Diagnose if kind == Some(FrameKind::R) => {
            Err(bad("the diagnose command needs a t-frame, τ-frame or curve scenario"))
        }
        _ => Ok(()),
    }
}

pub fn run(cmd: Command, cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let mut out = match cmd {
        Command::Evolve if is_csf(cfg.scenario) => csf_cmd(cfg)?,
        Command::Evolve => evolve_cmd(cfg)?,
        Command::Stationary => stationary_cmd(cfg)?,
        Command::Csf => csf_cmd(cfg)?,
        Command::Diagnose => diagnose_cmd(cfg)?,
        Command::Extend => extend_cmd(cfg)?,
    };
    out.report.command = cmd.name().into();
    out.report.disable(&cfg.checks.disabled);
    out.artifacts.push(Artifact {
        name: "config.toml".into(),
        bytes: cfg.to_toml().into_bytes(),
    });
    Ok(out)
}

// ---- helpers ------------------------------------------------------------

fn traj_csv(name: &str, traj: &Trajectory, stride: usize) -> Artifact {
    let mut bytes = Vec::new();
    traj.thinned(stride).write_csv(&mut bytes).expect("writing to memory");
    Artifact {
        name: name.into(),
        bytes,
    }
}

fn curve_csvs(traj: &CurveTrajectory) -> Vec<Artifact> {
    let mut support = Vec::new();
    traj.write_csv(&mut support).expect("writing to memory");
    let mut boundary = Vec::new();
    traj.write_boundary_csv(&mut boundary).expect("writing to memory");
    vec![
        Artifact {
            name: "curve_support.csv".into(),
            bytes: support,
        },
        Artifact {
            name: "curve_boundary.csv".into(),
            bytes: boundary,
        },
    ]
}

fn snapshots(stem: &str, field: &ScalarField, format: SnapshotFormat) -> Result<Vec<Artifact>, RunError> {
    let mut out = Vec::new();
    if matches!(format, SnapshotFormat::Binary | SnapshotFormat::Both) {
        let mut bytes = Vec::new();
        snapshot::write_binary(field, &mut bytes)?;
        out.push(Artifact {
            name: format!("{stem}.bin"),
            bytes,
        });
    }
    if matches!(format, SnapshotFormat::Csv | SnapshotFormat::Both) {
        let mut bytes = Vec::new();
        snapshot::write_csv(field, &mut bytes)?;
        out.push(Artifact {
            name: format!("{stem}.csv"),
            bytes,
        });
    }
    Ok(out)
}

fn max_dev(field: &ScalarField, target: f64) -> f64 {
    (field.max() - target).abs().max((field.min() - target).abs())
}

/// Closed form for a t-frame run with constant source and constant data.
fn closed_form(setup: &PdeSetup) -> Option<TrivialSolution> {
    let frame = &setup.preset.frame;
    let Profile::Constant { value: f0 } = setup.source_profile else {
        return None;
    };
    let init = &setup.preset.initial;
    if frame.kind() != FrameKind::T || init.max() != init.min() {
        return None;
    }
    let u0 = init.max() * frame.r0().powf(frame.n() as f64 / 2.0 - 1.0);
    TrivialSolution::new(frame.n(), f0, frame.r0(), u0).ok()
}

fn source_field(setup: &PdeSetup) -> ScalarField {
    setup.source_profile.field(setup.preset.initial.grid())
}

/// Evolution that keeps the partial trajectory when the run blows up.
fn evolve_keep_partial(setup: &PdeSetup) -> Result<(Trajectory, Option<f64>), RunError> {
    let p = &setup.preset;
    match evolve(&p.initial, &p.frame, &p.source, p.t_end, &setup.solver) {
        Ok(t) => Ok((t, None)),
        Err(EvolveError::BlowupDetected { time, trajectory, .. }) => Ok((*trajectory, Some(time))),
        Err(e) => Err(e.into()),
    }
}

fn solve_for(f: &ScalarField, cfg: &ExperimentConfig) -> Result<StationaryState, RunError> {
    Ok(solve_stationary(f, &default_guess(f), &cfg.stationary.options())?)
}

/// The blow-up of a t-frame PDE scenario or the lift of a curve scenario,
/// with the source `f(t₁)` on the lift grid.
fn blowup_source(cfg: &ExperimentConfig) -> Result<(BlowupRun, ScalarField, SourceTerm), RunError> {
    if is_csf(cfg.scenario) {
        let setup = cfg.csf_setup()?;
        let run = csf_pipeline(&setup.curve, &setup.options, &cfg.tail())?;
        let grid = run.lift.tau.first().expect("non-empty lift").field.grid().clone();
        Ok((run.lift, grid.constant(1.0), SourceTerm::constant(1.0).expect("positive")))
    } else {
        let setup = cfg.pde_setup()?;
        let run = blowup_pipeline(&setup.preset, &setup.solver, &cfg.tail())?;
        Ok((run, source_field(&setup), setup.preset.source.clone()))
    }
}

// ---- evolve ---------------------------------------------------------------

fn evolve_cmd(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let setup = cfg.pde_setup()?;
    let mut rep = Report::new("evolve", cfg.scenario, cfg.seed);
    let stride = cfg.output.stride;
    let mut artifacts = Vec::new();
    let blowup = if setup.preset.frame.kind() == FrameKind::T {
        match blowup_pipeline(&setup.preset, &setup.solver, &cfg.tail()) {
            Ok(run) => Some(run),
            Err(ScenarioError::NoBlowup { .. }) => None,
            Err(e) => return Err(e.into()),
        }
    } else {
        None
    };
    if let Some(run) = blowup {
        blowup_checks(&mut rep, &run, &setup, cfg)?;
        artifacts.push(traj_csv("trajectory_t.csv", &run.raw, stride));
        artifacts.push(traj_csv("trajectory_normalized.csv", &run.normalized, stride));
        artifacts.push(traj_csv("trajectory_tau.csv", &run.tau, stride));
        artifacts.push(traj_csv("trajectory_r.csv", &run.radial, stride));
        let last = &run.normalized.last().expect("non-empty run").field;
        artifacts.extend(snapshots("final", last, cfg.output.snapshots)?);
    } else {
        let (traj, blew) = evolve_keep_partial(&setup)?;
        let last = traj.last().expect("non-empty run");
        rep.value("final_time", last.time);
        rep.value("blowup_time", blew.unwrap_or(f64::NAN));
        rep.at_least("positivity", traj.run_min().unwrap_or(f64::NAN), f64::MIN_POSITIVE, "run minimum of the solution");
        if setup.preset.frame.kind() == FrameKind::Tau {
            let ab = ab_check(&traj)?;
            rep.value("ab_pairs", ab.pairs as f64);
            rep.at_least("ab_margin", ab.integrated_margin, -1e-8, "integrated lower barrier slack");
        }
        rep.value("max_residual", traj.max_residual().unwrap_or(f64::NAN));
        rep.series("sup", traj.sup_series());
        artifacts.push(traj_csv("trajectory.csv", &traj, stride));
        artifacts.extend(snapshots("final", &last.field, cfg.output.snapshots)?);
    }
    Ok(Outcome { report: rep, artifacts })
}

fn blowup_checks(rep: &mut Report, run: &BlowupRun, setup: &PdeSetup, cfg: &ExperimentConfig) -> Result<(), RunError> {
    rep.value("t1", run.t1);
    rep.value("fit_r_squared", run.fit.r_squared);
    rep.value("fit_samples", run.fit.samples_used as f64);
    rep.value("r1", run.r1().unwrap_or(f64::NAN));
    rep.value("max_residual", run.raw.max_residual().unwrap_or(f64::NAN));
    rep.series("sup", run.raw.sup_series());
    rep.series("sup_v", run.tau.sup_series());
    let ab = ab_check(&run.normalized)?;
    rep.value("ab_pairs", ab.pairs as f64);
    rep.value("ab_differential_margin", ab.differential_margin);
    rep.at_least("ab_margin", ab.integrated_margin, -1e-8, "integrated lower barrier slack, normalized t-frame");
    rep.at_least(
        "positivity",
        run.raw.run_min().unwrap_or(f64::NAN),
        f64::MIN_POSITIVE,
        "run minimum of the solution",
    );
    let Some(sol) = closed_form(setup) else {
        return Ok(());
    };
    rep.at_most("z_max", ab.z_max, 1e-8, "max of t w_t - w/2 with w = 1/u");
    let horizon = 0.9 * sol.t1();
    let mut worst: f64 = 0.0;
    for s in run.raw.samples().iter().filter(|s| s.time <= horizon) {
        let exact = sol.utilde_at(s.time)?;
        worst = worst.max(max_dev(&s.field, exact) / exact);
    }
    rep.at_most("closed_form_rel_err", worst, 1e-6, "max relative error to 0.9 t1");
    rep.value("t1_exact", sol.t1());
    rep.at_most("blowup_time", (run.t1 - sol.t1()).abs(), 1e-4, format!("fitted t1 {:.9}", run.t1));
    let r1 = run.r1().unwrap_or(f64::NAN);
    let f = source_field(setup);
    let (ext, _) = extension_report(&run.radial, r1, Some(&f), &cfg.extension)?;
    let exact = omega_to_v_factor(sol.n()) * self_similar_constant(sol.f0());
    omega_levels(rep, &ext.levels);
    let dev = ext
        .levels
        .iter()
        .map(|l| (l.min - exact).abs().max((l.max - exact).abs()))
        .fold(0.0, f64::max);
    rep.at_most("omega_estimate", dev, 1e-6, format!("estimates against {exact:.12}"));
    Ok(())
}

fn omega_levels(rep: &mut Report, levels: &[pscurv::extension::OmegaLevel]) {
    for l in levels {
        rep.value(&format!("omega_estimate_min@eps={:e}", l.eps), l.min);
        rep.value(&format!("omega_estimate_max@eps={:e}", l.eps), l.max);
    }
}

// ---- stationary -----------------------------------------------------------

struct SweepPoint {
    f0: f64,
    closed_form_err: f64,
    self_similar_residual: f64,
}

fn sweep_point(grid: &TorusGrid, frame: &Frame, f0: f64, cfg: &ExperimentConfig) -> Result<SweepPoint, RunError> {
    let st = solve_for(&grid.constant(f0), cfg)?;
    let src = SourceTerm::constant(f0).expect("validated positive");
    let mut worst: f64 = 0.0;
    for t in [0.0f64, 0.25, 0.5, 0.75, 0.9] {
        let dt = 1e-5 * (1.0 - t);
        let a = st.omega.scale(1.0 / (1.0 - t).sqrt()).expect("finite");
        let b = st.omega.scale(1.0 / (1.0 - t - dt).sqrt()).expect("finite");
        worst = worst.max(residual((t, &a), (t + dt, &b), frame, &src)?);
    }
    Ok(SweepPoint {
        f0,
        closed_form_err: max_dev(&st.omega, self_similar_constant(f0)),
        self_similar_residual: worst,
    })
}

#[cfg(feature = "parallel")]
fn sweep(grid: &TorusGrid, frame: &Frame, cfg: &ExperimentConfig) -> Result<Vec<SweepPoint>, RunError> {
    use rayon::prelude::*;
    cfg.stationary
        .constants
        .par_iter()
        .map(|&f0| sweep_point(grid, frame, f0, cfg))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn sweep(grid: &TorusGrid, frame: &Frame, cfg: &ExperimentConfig) -> Result<Vec<SweepPoint>, RunError> {
    cfg.stationary.constants.iter().map(|&f0| sweep_point(grid, frame, f0, cfg)).collect()
}

fn stationary_cmd(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let (f, constant, frame) = if is_csf(cfg.scenario) {
        let grid = TorusGrid::new(2, cfg.points(), std::f64::consts::TAU)?;
        (grid.constant(1.0), Some(1.0), Frame::t_frame(3, 1.0)?)
    } else {
        let setup = cfg.pde_setup()?;
        let c = match setup.source_profile {
            Profile::Constant { value } => Some(value),
            _ => None,
        };
        let fr = setup.preset.frame;
        (source_field(&setup), c, Frame::t_frame(fr.n(), fr.r0())?)
    };
    let mut rep = Report::new("stationary", cfg.scenario, cfg.seed);
    let st = solve_for(&f, cfg)?;
    let meta = st.meta();
    rep.value("iterations", meta.iterations as f64);
    rep.value("omega_min", meta.omega_min);
    rep.value("omega_max", meta.omega_max);
    rep.series(
        "newton_residual",
        meta.residual_history.iter().enumerate().map(|(k, r)| (k as f64, *r)),
    );
    rep.at_most("newton_residual", meta.residual_norm, cfg.stationary.tol, "max-norm residual of the solution");
    rep.at_least("positivity", meta.omega_min, f64::MIN_POSITIVE, "minimum of omega");
    if let Some(f0) = constant {
        rep.at_most(
            "closed_form",
            max_dev(&st.omega, self_similar_constant(f0)),
            1e-10,
            format!("against 1/sqrt(2 f) = {:.12}", self_similar_constant(f0)),
        );
    }
    let points = sweep(f.grid(), &frame, cfg)?;
    let mut worst_const: f64 = 0.0;
    let mut worst_res: f64 = 0.0;
    for p in &points {
        rep.value(&format!("sweep_closed_form_err@f={}", p.f0), p.closed_form_err);
        rep.value(&format!("sweep_self_similar_residual@f={}", p.f0), p.self_similar_residual);
        worst_const = worst_const.max(p.closed_form_err);
        worst_res = worst_res.max(p.self_similar_residual);
    }
    if !points.is_empty() {
        rep.at_most("sweep_closed_form", worst_const, 1e-10, format!("{} constant sources", points.len()));
        rep.at_most(
            "sweep_self_similar_residual",
            worst_res,
            1e-8,
            "t-frame residual of omega / sqrt(1 - t)",
        );
    }
    let artifacts = snapshots("omega", &st.omega, cfg.output.snapshots)?;
    Ok(Outcome { report: rep, artifacts })
}

// ---- csf ------------------------------------------------------------------

fn csf_cmd(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let setup = cfg.csf_setup()?;
    let (curve, opts) = (&setup.curve, &setup.options);
    let t1 = curve.extinction_time();
    let mut rep = Report::new("csf", cfg.scenario, cfg.seed);
    rep.value("extinction_time", t1);
    rep.value("initial_area", curve.area());

    let support = match csf_evolve_support(curve, 0.999 * t1, opts) {
        Ok(t) => t,
        Err(CsfError::BlowupDetected { trajectory, .. }) => *trajectory,
        Err(e) => return Err(e.into()),
    };
    let records = support.records();
    rep.at_most(
        "area_law",
        support.area_law_deviation() / curve.area(),
        1e-4,
        "max |A(t) - A(0) + 2 pi t| / A(0)",
    );
    let duality = support.curves().iter().map(|c| c.duality_defect()).fold(0.0, f64::max);
    rep.at_most("duality", duality, 1e-8, "support function against its curvature reconstruction");
    let min_k = records.iter().map(|r| r.min_curvature).fold(f64::INFINITY, f64::min);
    rep.at_least("convexity", min_k, f64::MIN_POSITIVE, "minimum curvature over the run");
    rep.series("area", records.iter().map(|r| (r.time, r.area)));

    if let CurveConfig::Circle { radius } = cfg.curve_config() {
        let k = csf_evolve_curvature(&curve.curvature(), 0.99 * t1, opts)?;
        let err = k
            .samples()
            .iter()
            .map(|s| max_dev(&s.field, 1.0 / (radius * radius - 2.0 * s.time).sqrt()))
            .fold(0.0, f64::max);
        rep.at_most("circle_curvature", err, 1e-6, "against 1/sqrt(R^2 - 2t) to 0.99 t1");
    }

    let run = csf_pipeline(curve, opts, &cfg.tail())?;
    let dev = normalized_deviation(&run.curvature)?;
    rep.series("kt_deviation", dev.iter().copied());
    let late = dev.iter().filter(|(t, _)| *t >= 0.99 * t1).map(|x| x.1).fold(f64::NAN, f64::max);
    rep.at_most("kt_convergence", late, 0.05, "max |k~ - 1| from 0.99 t1 on");
    rep.value("fitted_extinction_time", run.lift.fit.t1);
    rep.at_most(
        "extinction_fit",
        (run.lift.fit.t1 - t1).abs() / t1,
        1e-3,
        "relative error of the fitted extinction time",
    );
    let v = run.lift.tau.last().expect("non-empty lift");
    rep.value("v_limit_tau", v.time);
    rep.value("v_limit_min", v.field.min());
    rep.value("v_limit_max", v.field.max());
    rep.at_most(
        "v_limit",
        max_dev(&v.field, FRAC_1_SQRT_2),
        1e-3,
        format!("|v - 1/sqrt2| at tau {:.3}", v.time),
    );
    rep.series("sup_v", run.lift.tau.sup_series());

    let g = 1e-5;
    let base: Vec<f64> = (1..100).map(|k| k as f64 * 0.01 * t1).collect();
    let mut popts = opts.clone();
    popts.sampling.interval = None;
    popts.sampling.times = paired_times(&base, t1, g);
    let kp = csf_evolve_curvature(&curve.curvature(), 0.999 * t1, &popts)?;
    let (res, pairs) = close_pair_residual(&csf_to_torus_solution(&kp)?, 10.0 * g)?;
    rep.value("lift_residual_pairs", pairs as f64);
    rep.at_most("lift_residual", res, 1e-6, format!("torus lift residual over {pairs} close pairs"));

    let stride = cfg.output.stride;
    let mut artifacts = curve_csvs(&support);
    artifacts.push(traj_csv("curvature.csv", &run.curvature, stride));
    artifacts.push(traj_csv("lift_tau.csv", &run.lift.tau, stride));
    artifacts.extend(snapshots("lift_final", &v.field, cfg.output.snapshots)?);
    Ok(Outcome { report: rep, artifacts })
}

// ---- diagnose -------------------------------------------------------------

/// Tail `‖ν‖_max` below which a run counts as already on its stationary
/// profile: a fitted `t₁` good to ~1e−14 shows up in `v` as ~1e−14/ε, about
/// 1e−8 at the deepest default level.
const NU_ROUNDOFF: f64 = 1e-8;

fn diagnose_cmd(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let mut rep = Report::new("diagnose", cfg.scenario, cfg.seed);
    let mut artifacts = Vec::new();
    let stride = cfg.output.stride;
    // τ-frame run, f on its grid, f as a source term, τ-frame blow-up
    let (tau, f, src, blew) = if is_csf(cfg.scenario) || cfg.pde_setup()?.preset.frame.kind() == FrameKind::T {
        let (run, f, src) = blowup_source(cfg)?;
        if !is_csf(cfg.scenario) && closed_form(&cfg.pde_setup()?).is_some() {
            let ab = ab_check(&run.normalized)?;
            rep.at_most("z_max", ab.z_max, 1e-8, "max of t w_t - w/2 with w = 1/u");
        }
        artifacts.push(traj_csv("trajectory_normalized.csv", &run.normalized, stride));
        // past the deepest planned level only the detection step remains,
        // where the error of the fitted t₁ dominates the normalization
        let t = cfg.tail();
        let deepest = tail_times(run.normalized.frame().n(), t.eps_max, t.eps_min, t.per_decade);
        let tau_max = t_to_tau(*deepest.last().expect("non-empty tail"))? + 1e-3;
        (run.tau.window(f64::NEG_INFINITY, tau_max), f, src, None)
    } else {
        let setup = cfg.pde_setup()?;
        let (traj, blew) = evolve_keep_partial(&setup)?;
        (traj, source_field(&setup), setup.preset.source.clone(), blew)
    };
    artifacts.push(traj_csv("trajectory_tau.csv", &tau, stride));

    let ab = ab_check(&tau)?;
    rep.value("ab_pairs", ab.pairs as f64);
    rep.at_least("ab_margin", ab.integrated_margin, -1e-8, "integrated lower barrier slack, tau-frame");

    let j = j_monotone_report(&tau, &src)?;
    rep.series("J", j.j_series.iter().copied());
    rep.value("j_first", j.j_first);
    rep.value("j_last", j.j_last);
    rep.value("j_lower_bound_margin", j.lower_bound_margin);
    rep.at_most(
        "j_monotone",
        j.worst_relative_increase,
        1e-6,
        format!("worst relative increase over {} pairs", j.pairs_checked),
    );
    rep.flag(
        "j_dissipation",
        j.quantitative_holds,
        format!("worst excess of dJ + 2 int v^-2 v_tau^2: {:.3e}", j.worst_quantitative_excess),
    );

    let st = solve_for(&f, cfg)?;
    rep.value("omega_min", st.omega.min());
    rep.value("omega_max", st.omega.max());
    artifacts.extend(snapshots("omega", &st.omega, cfg.output.snapshots)?);
    let last = tau.last().expect("non-empty run");
    if !is_csf(cfg.scenario) && cfg.pde_setup()?.preset.frame.kind() == FrameKind::Tau {
        let t_end = cfg.pde_setup()?.preset.t_end;
        let dist = last.field.max_abs_diff(&st.omega)?;
        let detail = match blew {
            Some(t) => format!("blew up at tau {t:.4}; distance at the last sample {dist:.3e}"),
            None => format!("distance at tau {:.3}", last.time),
        };
        let reached = blew.is_none() && last.time >= t_end - 1e-9;
        rep.at_most("convergence", if reached { dist } else { f64::NAN }, 1e-4, detail);
        let j_omega = lyapunov_j(&st.omega, &f)?;
        rep.value("j_omega", j_omega);
        rep.at_most(
            "j_limit",
            if reached { (j.j_last - j_omega).abs() } else { f64::NAN },
            1e-4,
            format!("J at the end {:.9} against J(omega) {j_omega:.9}", j.j_last),
        );
    }
    rep.value("blowup_tau", blew.unwrap_or(f64::NAN));

    let h = cfg.diagnostics.harnack_h;
    match harnack_ratio(&tau, h, tau.run_min().unwrap_or(f64::NAN)) {
        Ok(s) => {
            rep.series("harnack", s.tau.iter().copied().zip(s.c_emp.iter().copied()));
            rep.flag(
                "harnack_bounded",
                s.bounded,
                format!("last quartile max {:.4} against earlier max {:.4}", s.last_quartile_max, s.earlier_max),
            );
        }
        Err(e) => rep.flag("harnack_bounded", false, e.to_string()),
    }

    let energy = SimonEnergy::from_stationary(&st)?;
    let d = &cfg.diagnostics;
    let grads = randomized_gradient_checks(&energy, d.simon_pairs, cfg.seed, d.simon_amplitude)?;
    let worst = grads.iter().map(|c| c.relative_error).fold(0.0, f64::max);
    rep.at_most("simon_gradient", worst, 1e-5, format!("{} random pairs, seed {}", grads.len(), cfg.seed));
    let grid = st.omega.grid();
    let dim = grid.dim();
    let p: Vec<ScalarField> = (0..dim)
        .map(|i| grid.field_from_fn(|x| (x[i] + i as f64).sin() + 0.3 * x[(i + 1) % dim].cos()))
        .collect();
    let conv = energy.convexity_check(&p)?;
    rep.at_least("simon_convexity", if conv.holds { conv.min_slack } else { f64::NAN }, 0.0, "min of (e^{2w} - mu^2)|p|^2");

    match nu_decay(&tau, &st, &src) {
        Ok(nu) => {
            rep.series("nu_norm", nu.norms.iter().copied());
            rep.value("nu_final", nu.final_norm);
            let peak = nu.norms.iter().map(|x| x.1).fold(0.0, f64::max);
            if peak <= NU_ROUNDOFF {
                // ν ≡ 0 up to rounding: the run sits on ω and a slope is noise
                rep.at_most("nu_decay_rate", peak, NU_ROUNDOFF, "nu at round-off over the whole tail");
            } else {
                rep.below("nu_decay_rate", nu.rate, 0.0, format!("fitted rate, final norm {:.3e}", nu.final_norm));
            }
        }
        Err(e) => rep.flag("nu_decay_rate", false, e.to_string()),
    }
    rep.series("sup_v", tau.sup_series());

    let records = diagnostics_records(&tau, &src, h)?;
    let mut csv = String::from("tau,J,dJ_upper,min_v,max_v,ab_margin,harnack\n");
    for r in records.iter().step_by(stride) {
        let hr = r.harnack_ratio.map_or_else(String::new, |x| format!("{x:?}"));
        writeln!(
            csv,
            "{:?},{:?},{:?},{:?},{:?},{:?},{hr}",
            r.tau, r.j, r.dj_dtau_upper, r.min_v, r.max_v, r.ab_margin
        )
        .expect("writing to memory");
    }
    artifacts.push(Artifact {
        name: "diagnostics.csv".into(),
        bytes: csv.into_bytes(),
    });
    Ok(Outcome { report: rep, artifacts })
}

// ---- extend ---------------------------------------------------------------

fn extend_cmd(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let mut rep = Report::new("extend", cfg.scenario, cfg.seed);
    let (run, f, _) = blowup_source(cfg)?;
    let r1 = run.r1().ok_or(RunError::NoRadius)?;
    let (ext, _) = extension_report(&run.radial, r1, Some(&f), &cfg.extension)?;
    let (deep, limit) = extension_report(&run.radial, r1, Some(&f), &cfg.limit_extension())?;
    rep.value("r1", r1);
    omega_levels(&mut rep, &deep.levels);
    rep.value("v_limit_min", deep.v_limit_min);
    rep.value("v_limit_max", deep.v_limit_max);
    rep.value("limit_newton_distance", deep.limit_newton_distance.unwrap_or(f64::NAN));
    rep.value("mu", ext.mu);
    rep.value("rtilde_total", ext.rtilde.total);
    rep.series("sup_H", ext.h_of_r.iter().copied());
    rep.series("rtilde", ext.rtilde.r.iter().copied().zip(ext.rtilde.rtilde.iter().copied()));
    rep.flag(
        "omega_cauchy",
        ext.cauchy,
        format!("level differences {:?}", ext.level_differences.iter().map(|d| format!("{d:.2e}")).collect::<Vec<_>>()),
    );
    rep.flag(
        "rtilde_finite",
        ext.rtilde.total.is_finite() && ext.rtilde.strictly_increasing,
        format!("total {:.9}, strictly increasing {}", ext.rtilde.total, ext.rtilde.strictly_increasing),
    );
    rep.at_most(
        "rtilde_exponent",
        (ext.rtilde.u_fit.exponent + 0.5).abs(),
        0.02,
        format!("blow-up exponent {:.5}", ext.rtilde.u_fit.exponent),
    );
    rep.below(
        "rtilde_tail_fraction",
        ext.rtilde.tail_fraction,
        0.01,
        format!("share of r~ beyond r1 (1 - {:e})", cfg.extension.tail_eps),
    );
    rep.at_most(
        "h_exponent",
        (ext.h_fit.exponent - 0.5).abs(),
        0.05,
        format!("sup H exponent {:.5}", ext.h_fit.exponent),
    );
    rep.flag("h_decreasing", ext.h_decreasing, "sup H along the levels");
    if let Some(res) = deep.limit_residual {
        let eps = deep.levels.last().map_or(f64::NAN, |l| l.eps);
        rep.at_most("limit_residual", res, 1e-6, format!("stationary residual of the tau-frame limit at eps {eps:e}"));
    }
    if !is_csf(cfg.scenario) {
        if let Some(sol) = closed_form(&cfg.pde_setup()?) {
            let exact = omega_to_v_factor(sol.n()) * self_similar_constant(sol.f0());
            let dev = ext
                .levels
                .iter()
                .map(|l| (l.min - exact).abs().max((l.max - exact).abs()))
                .fold(0.0, f64::max);
            rep.at_most("omega_estimate", dev, 1e-6, format!("estimates against {exact:.12}"));
        }
    }
    let mut artifacts = vec![traj_csv("trajectory_r.csv", &run.radial, cfg.output.stride)];
    artifacts.extend(snapshots("v_limit", &limit, cfg.output.snapshots)?);
    Ok(Outcome { report: rep, artifacts })
}
