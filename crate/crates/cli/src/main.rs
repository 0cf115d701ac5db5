//! `pscurv`: run experiments on the prescribed-scalar-curvature flow and
//! aggregate their reports.
//!
//! Exit status: 0 when every enabled check passed, 1 when one failed, 2 for
//! configuration errors (nothing is written), 3 for solver or I/O errors,
//! 4 when `report` finds no run reports.

// `!(x > 0.0)` is deliberate: NaN must fail every validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod report;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;
use report::{ReportError, Report};
use run::{Command, Outcome, RunError};

#[derive(Debug, Parser)]
#[command(name = "pscurv", version, about = "Prescribed scalar curvature flow experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Integrate a scenario; t-frame runs are taken through blow-up.
    Evolve(RunArgs),
    /// Solve the stationary equation and sweep constant sources.
    Stationary(RunArgs),
    /// Curve shortening flow and its torus lift.
    Csf(RunArgs),
    /// Aronson-Benilan, Lyapunov, Harnack and Simon checks on a τ-frame run.
    Diagnose(RunArgs),
    /// ω-estimates, arc length and boundary mean curvature at the blow-up radius.
    Extend(RunArgs),
    /// Aggregate the JSON reports under a run directory.
    Report {
        /// Run directory to scan recursively.
        dir: PathBuf,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root; each run writes into `<out>/<SCENARIO>/`.
    #[arg(long, env = "PSCURV_OUT_ROOT", default_value = "pscurv-runs")]
    out: PathBuf,
    /// Seed for the randomized checks.
    #[arg(long)]
    seed: Option<u64>,
    /// Scenario to run; repeat to run a batch in parallel.
    #[arg(long = "scenario", value_name = "NAME")]
    scenarios: Vec<String>,
    /// Override a configuration key, e.g. `--set grid.points_per_axis=32`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl RunArgs {
    /// One validated configuration per requested scenario. Command-line flags
    /// are applied after the file and `--set`.
    fn configs(&self, cmd: Command) -> Result<Vec<ExperimentConfig>, anyhow::Error> {
        let mut base = self.overrides.clone();
        if let Some(seed) = self.seed {
            base.push(format!("seed={seed}"));
        }
        let mut names: Vec<Option<&str>> = self.scenarios.iter().map(|s| Some(s.as_str())).collect();
        names.dedup();
        if names.is_empty() {
            names.push(None);
        }
        let mut out = Vec::new();
        for name in names {
            let mut ov = base.clone();
            if let Some(n) = name {
                ov.push(format!("scenario=\"{n}\""));
            }
            let cfg = ExperimentConfig::load(self.config.as_deref(), &ov)?;
            run::check_applicable(cmd, &cfg)?;
            if out.iter().any(|c: &ExperimentConfig| c.scenario == cfg.scenario) {
                continue;
            }
            out.push(cfg);
        }
        Ok(out)
    }
}

#[cfg(feature = "parallel")]
fn run_all(cmd: Command, cfgs: &[ExperimentConfig]) -> Vec<Result<Outcome, RunError>> {
    use rayon::prelude::*;
    cfgs.par_iter().map(|c| run::run(cmd, c)).collect()
}

#[cfg(not(feature = "parallel"))]
fn run_all(cmd: Command, cfgs: &[ExperimentConfig]) -> Vec<Result<Outcome, RunError>> {
    cfgs.iter().map(|c| run::run(cmd, c)).collect()
}

fn scenario_dir(out: &Path, r: &Report) -> PathBuf {
    let name = serde_json::to_string(&r.scenario).expect("enum serializes");
    out.join(name.trim_matches('"'))
}

fn write_outcome(out: &Path, o: &Outcome) -> anyhow::Result<PathBuf> {
    let dir = scenario_dir(out, &o.report);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    for a in &o.artifacts {
        let path = dir.join(&a.name);
        std::fs::write(&path, &a.bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    let path = dir.join(format!("{}.json", o.report.command));
    std::fs::write(&path, o.report.to_json()).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn execute(cmd: Command, args: &RunArgs) -> ExitCode {
    let cfgs = match args.configs(cmd) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let mut outcomes = Vec::new();
    for (cfg, res) in cfgs.iter().zip(run_all(cmd, &cfgs)) {
        match res {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                eprintln!("error: {:?} {}: {e}", cfg.scenario, cmd.name());
                return ExitCode::from(3);
            }
        }
    }
    let mut written = Vec::new();
    for o in &outcomes {
        match write_outcome(&args.out, o) {
            Ok(p) => written.push((p, o.report.clone())),
            Err(e) => {
                eprintln!("error: {e:#}");
                return ExitCode::from(3);
            }
        }
    }
    print!("{}", report::summary_table(&written));
    for (p, _) in &written {
        println!("report: {}", p.display());
    }
    if outcomes.iter().any(|o| o.report.failed()) {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match &cli.command {
        Cmd::Evolve(a) => (Command::Evolve, a),
        Cmd::Stationary(a) => (Command::Stationary, a),
        Cmd::Csf(a) => (Command::Csf, a),
        Cmd::Diagnose(a) => (Command::Diagnose, a),
        Cmd::Extend(a) => (Command::Extend, a),
        Cmd::Report { dir } => {
            return match report::aggregate(dir) {
                Ok(table) => {
                    print!("{table}");
                    ExitCode::SUCCESS
                }
                Err(e @ ReportError::MissingArtifacts(_)) => {
                    eprintln!("error: {e}");
                    ExitCode::from(4)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(3)
                }
            };
        }
    };
    execute(cmd, args)
}
