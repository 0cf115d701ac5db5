//! Acceptance criteria. Each test prints one `[PASS]`/`[FAIL]` line with the
//! measured values and then asserts the criterion as stated.

use std::f64::consts::{PI, TAU};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use pscurv::csf::{
    close_pair_residual, csf_evolve_curvature, csf_evolve_support, csf_to_torus_solution,
    normalized_deviation, paired_times, ConvexCurve, CsfError, CsfOptions,
};
use pscurv::diagnostics::{
    ab_check, harnack_ratio, j_monotone_report, nu_decay, randomized_gradient_checks, SimonEnergy,
};
use pscurv::evolution::{evolve, residual, EvolveError, EvolveOptions, Sampling, SourceTerm, Trajectory};
use pscurv::extension::{extension_report, ExtensionOptions};
use pscurv::frames::{Frame, TrivialSolution};
use pscurv::scenarios::{
    blowup_pipeline, constant_f_tau, csf_ellipse, csf_pipeline, perturbed_f, trivial_ode,
    BlowupRun, CsfRun, TailSampling,
};
use pscurv::stationary::{default_guess, solve_stationary, StationaryOptions, StationaryState};
use pscurv::{ScalarField, TorusGrid};

const TRIVIAL_POINTS: usize = 64;
const TAU_POINTS: usize = 32;
const CSF_POINTS: usize = 128;

fn report(id: u32, name: &str, ok: bool, detail: String) {
    let tag = if ok { "PASS" } else { "FAIL" };
    println!("[{tag}] {id}. {name}: {detail}");
}

struct Trivial {
    run: BlowupRun,
    sol: TrivialSolution,
    elapsed: Duration,
}

fn trivial() -> &'static Trivial {
    static CELL: OnceLock<Trivial> = OnceLock::new();
    CELL.get_or_init(|| {
        let (preset, sol) = trivial_ode(TRIVIAL_POINTS).unwrap();
        let opts = EvolveOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            sampling: Sampling {
                interval: Some(0.01),
                ..Sampling::default()
            },
            ..EvolveOptions::default()
        };
        let start = Instant::now();
        let run = blowup_pipeline(&preset, &opts, &TailSampling::default()).unwrap();
        Trivial {
            run,
            sol,
            elapsed: start.elapsed(),
        }
    })
}

/// Run 3: τ-frame, `f ≡ ½`, `v₀ = 1 + 0.3 cos θ₁`, to `τ = 20`.
fn run3() -> &'static (Trajectory, SourceTerm) {
    static CELL: OnceLock<(Trajectory, SourceTerm)> = OnceLock::new();
    CELL.get_or_init(|| {
        let p = constant_f_tau(TAU_POINTS).unwrap();
        let opts = EvolveOptions {
            sampling: Sampling {
                interval: Some(0.1),
                ..Sampling::default()
            },
            ..EvolveOptions::default()
        };
        let traj = evolve(&p.initial, &p.frame, &p.source, p.t_end, &opts).unwrap();
        (traj, p.source)
    })
}

/// τ-frame run with `f = 1 + 0.1 cos θ₁` from `v₀ ≡ 1`, up to `τ = 20` or
/// blow-up, whichever comes first.
fn perturbed() -> &'static (Trajectory, Option<f64>) {
    static CELL: OnceLock<(Trajectory, Option<f64>)> = OnceLock::new();
    CELL.get_or_init(|| {
        let p = perturbed_f(TAU_POINTS).unwrap();
        let opts = EvolveOptions {
            sampling: Sampling {
                interval: Some(0.02),
                ..Sampling::default()
            },
            ..EvolveOptions::default()
        };
        match evolve(&p.initial, &p.frame, &p.source, p.t_end, &opts) {
            Ok(t) => (t, None),
            Err(EvolveError::BlowupDetected { time, trajectory, .. }) => (*trajectory, Some(time)),
            Err(e) => panic!("{e}"),
        }
    })
}

/// Run 6: the 2:1 ellipse, lifted to the 2-torus.
fn ellipse() -> &'static CsfRun {
    static CELL: OnceLock<CsfRun> = OnceLock::new();
    CELL.get_or_init(|| {
        let curve = csf_ellipse(CSF_POINTS).unwrap();
        let t1 = curve.extinction_time();
        let opts = CsfOptions {
            sampling: Sampling {
                interval: Some(0.01 * t1),
                ..Sampling::default()
            },
            ..CsfOptions::default()
        };
        csf_pipeline(&curve, &opts, &TailSampling::default()).unwrap()
    })
}

fn stationary_for(f: &ScalarField) -> StationaryState {
    solve_stationary(f, &default_guess(f), &StationaryOptions::default()).unwrap()
}

#[test]
fn criterion_1_trivial_blowup() {
    let t = trivial();
    let horizon = 0.9 * t.sol.t1();
    let mut worst: f64 = 0.0;
    for s in t.run.raw.samples().iter().filter(|s| s.time <= horizon) {
        let exact = t.sol.utilde_at(s.time).unwrap();
        worst = worst.max((s.field.max() - exact).abs() / exact);
        worst = worst.max((s.field.min() - exact).abs() / exact);
    }
    let t1_err = (t.run.t1 - 1.5).abs();
    let secs = t.elapsed.as_secs_f64();
    let ok = worst <= 1e-6 && t1_err <= 1e-4 && secs <= 10.0;
    report(
        1,
        "trivial blow-up",
        ok,
        format!("max rel err {worst:.2e} to 0.9 t1, t1 = {:.9} (err {t1_err:.2e}), {secs:.2} s (two passes)", t.run.t1),
    );
    assert!(ok);
}

#[test]
fn criterion_2_stationary_constants() {
    let grid = TorusGrid::new(2, TAU_POINTS, TAU).unwrap();
    let frame = Frame::t_frame(3, 1.0).unwrap();
    let mut worst_const: f64 = 0.0;
    let mut worst_res: f64 = 0.0;
    for f0 in [0.5, 1.0, 2.0] {
        let f = grid.constant(f0);
        let st = stationary_for(&f);
        let exact = 1.0 / (2.0 * f0).sqrt();
        worst_const = worst_const.max((st.omega.max() - exact).abs()).max((st.omega.min() - exact).abs());
        let src = SourceTerm::constant(f0).unwrap();
        for t in [0.0f64, 0.25, 0.5, 0.75, 0.9] {
            let dt = 1e-5 * (1.0 - t);
            let a = st.omega.scale(1.0 / (1.0 - t).sqrt()).unwrap();
            let b = st.omega.scale(1.0 / (1.0 - t - dt).sqrt()).unwrap();
            worst_res = worst_res.max(residual((t, &a), (t + dt, &b), &frame, &src).unwrap());
        }
    }
    let ok = worst_const <= 1e-10 && worst_res <= 1e-8;
    report(
        2,
        "stationary constants",
        ok,
        format!("max |omega - 1/sqrt(2f)| {worst_const:.2e}, self-similar residual {worst_res:.2e}"),
    );
    assert!(ok);
}

#[test]
fn criterion_3_convergence_to_omega() {
    let (traj, f) = run3();
    let last = traj.last().unwrap();
    let dist = last.field.values().iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    let j = j_monotone_report(traj, f).unwrap();
    let target = -2.0 * PI * PI;
    let j_gap = (j.j_last - target).abs();
    let ok = last.time >= 20.0 - 1e-12 && dist <= 1e-4 && j.monotone() && j_gap <= 1e-4;
    report(
        3,
        "convergence to omega = 1",
        ok,
        format!(
            "tau {:.2}: ||v - 1|| = {dist:.3e}, v in [{:.3e}, {:.3e}]; J monotone {} (worst rel increase {:.1e}), J_last {:.6} vs -2pi^2 (gap {j_gap:.2e})",
            last.time,
            last.field.min(),
            last.field.max(),
            j.monotone(),
            j.worst_relative_increase,
            j.j_last
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_4_aronson_benilan() {
    let runs: [(&str, &Trajectory); 4] = [
        ("trivial", &trivial().run.normalized),
        ("run 3", &run3().0),
        ("perturbed f", &perturbed().0),
        ("CSF ellipse lift", &ellipse().lift.normalized),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, traj) in runs {
        let r = ab_check(traj).unwrap();
        ok &= r.integrated_margin >= -1e-8;
        parts.push(format!("{name} slack {:.2e} ({} pairs)", r.integrated_margin, r.pairs));
    }
    let z = ab_check(&trivial().run.normalized).unwrap().z_max;
    ok &= z <= 1e-8;
    parts.push(format!("trivial z_max {z:.2e}"));
    report(4, "Aronson-Benilan", ok, parts.join("; "));
    assert!(ok);
}

#[test]
fn criterion_5_harnack() {
    let (ptraj, blowup) = perturbed();
    let p = harnack_ratio(ptraj, 1.0, ptraj.run_min().unwrap());
    let e = harnack_ratio(&ellipse().lift.tau, 1.0, ellipse().lift.tau.run_min().unwrap());
    let describe = |r: &Result<pscurv::diagnostics::HarnackSeries, _>| match r {
        Ok(s) => format!(
            "last quartile {:.4} vs earlier {:.4} over {} points",
            s.last_quartile_max,
            s.earlier_max,
            s.c_emp.len()
        ),
        Err(e) => format!("{e}"),
    };
    let ok = matches!(&p, Ok(s) if s.bounded) && matches!(&e, Ok(s) if s.bounded);
    report(
        5,
        "Harnack boundedness",
        ok,
        format!(
            "perturbed f (blow-up at tau {}): {}; CSF ellipse: {}",
            blowup.map_or("none".into(), |t| format!("{t:.3}")),
            describe(&p),
            describe(&e)
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_6_curve_shortening() {
    let mut ok = true;
    let mut parts = Vec::new();

    let circle = ConvexCurve::circle(1.0, 64).unwrap();
    let t1c = circle.extinction_time();
    let opts = CsfOptions {
        sampling: Sampling {
            interval: Some(0.01 * t1c),
            ..Sampling::default()
        },
        ..CsfOptions::default()
    };
    let kc = csf_evolve_curvature(&circle.curvature(), 0.99 * t1c, &opts).unwrap();
    let circ_err = kc
        .samples()
        .iter()
        .map(|s| {
            let exact = 1.0 / (1.0 - 2.0 * s.time).sqrt();
            (s.field.max() - exact).abs().max((s.field.min() - exact).abs())
        })
        .fold(0.0, f64::max);
    ok &= circ_err <= 1e-6;
    parts.push(format!("circle k err {circ_err:.2e}"));

    let curve = csf_ellipse(CSF_POINTS).unwrap();
    let t1 = curve.extinction_time();
    let st = match csf_evolve_support(&curve, 0.999 * t1, &opts_with_interval(0.01 * t1)) {
        Ok(t) => t,
        Err(CsfError::BlowupDetected { trajectory, .. }) => *trajectory,
        Err(e) => panic!("{e}"),
    };
    let area = st.area_law_deviation() / curve.area();
    ok &= area <= 1e-4;
    parts.push(format!("area law {area:.2e} A(0)"));

    let dev = normalized_deviation(&ellipse().curvature).unwrap();
    let at = dev
        .iter()
        .filter(|(t, _)| *t >= 0.99 * t1)
        .map(|x| x.1)
        .fold(f64::INFINITY, f64::min);
    let later_max = dev.iter().filter(|(t, _)| *t >= 0.99 * t1).map(|x| x.1).fold(0.0, f64::max);
    ok &= later_max <= 0.05;
    parts.push(format!("ellipse |k~ - 1| after 0.99 t1 in [{at:.4}, {later_max:.4}]"));

    let g = 1e-5;
    let base: Vec<f64> = (1..100).map(|k| k as f64 * 0.01 * t1).collect();
    let popts = CsfOptions {
        sampling: Sampling {
            times: paired_times(&base, t1, g),
            ..Sampling::default()
        },
        ..CsfOptions::default()
    };
    let kp = csf_evolve_curvature(&curve.curvature(), 0.999 * t1, &popts).unwrap();
    let (res, pairs) = close_pair_residual(&csf_to_torus_solution(&kp).unwrap(), 10.0 * g).unwrap();
    ok &= res <= 1e-6 && pairs >= 50;
    parts.push(format!("lift residual {res:.2e} over {pairs} pairs"));

    let v = ellipse().lift.tau.last().unwrap();
    let lim = (v.field.max() - 0.5f64.sqrt()).abs().max((v.field.min() - 0.5f64.sqrt()).abs());
    ok &= lim <= 1e-3;
    parts.push(format!("v-limit at tau {:.2}: |v - 1/sqrt2| {lim:.2e}", v.time));

    report(6, "curve shortening flow", ok, parts.join("; "));
    assert!(ok);
}

fn opts_with_interval(dt: f64) -> CsfOptions {
    CsfOptions {
        sampling: Sampling {
            interval: Some(dt),
            ..Sampling::default()
        },
        ..CsfOptions::default()
    }
}

#[test]
fn criterion_7_simon_structure() {
    let grid = TorusGrid::new(2, TAU_POINTS, TAU).unwrap();
    let f = grid.field_from_fn(|x| 1.0 + 0.1 * x[0].cos());
    let energy = SimonEnergy::from_stationary(&stationary_for(&f)).unwrap();
    let checks = randomized_gradient_checks(&energy, 100, 2024, 0.1).unwrap();
    let grad = checks.iter().map(|c| c.relative_error).fold(0.0, f64::max);
    let p = vec![
        grid.field_from_fn(|x| x[1].sin() + 0.3 * x[0].cos()),
        grid.field_from_fn(|x| 0.5 + x[0].cos() * x[1].cos()),
    ];
    let conv = energy.convexity_check(&p).unwrap();

    let (t3, f3) = run3();
    let om3 = stationary_for(&t3.first().unwrap().field.grid().constant(0.5));
    let d3 = nu_decay(t3, &om3, f3);

    let lift = &ellipse().lift.tau;
    let one = SourceTerm::constant(1.0).unwrap();
    let om6 = stationary_for(&lift.first().unwrap().field.grid().constant(1.0));
    let d6 = nu_decay(lift, &om6, &one);

    let describe = |d: &Result<pscurv::diagnostics::NuDecay, _>| match d {
        Ok(d) => format!("rate {:.3}, final {:.2e}", d.rate, d.final_norm),
        Err(e) => format!("{e}"),
    };
    let ok = grad <= 1e-5
        && conv.holds
        && conv.min_slack >= 0.0
        && matches!(&d3, Ok(d) if d.rate < 0.0)
        && matches!(&d6, Ok(d) if d.rate < 0.0);
    report(
        7,
        "Simon structure",
        ok,
        format!(
            "gradient identity max rel err {grad:.2e} (100 pairs); convexity slack {:.2e}; run 3 nu: {}; run 6 nu: {}",
            conv.min_slack,
            describe(&d3),
            describe(&d6)
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_8_extension() {
    let run = &trivial().run;
    let r1 = run.r1().unwrap();
    let (rep, _) = extension_report(&run.radial, r1, None, &ExtensionOptions::default()).unwrap();
    let u_exp = rep.rtilde.u_fit.exponent;
    let h_exp = rep.h_fit.exponent;
    let ok = rep.cauchy
        && rep.rtilde.total.is_finite()
        && (u_exp + 0.5).abs() <= 0.02
        && (h_exp - 0.5).abs() <= 0.05
        && rep.h_decreasing;
    report(
        8,
        "extension",
        ok,
        format!(
            "level diffs {:?}, Cauchy {}; r~ total {:.6}, u exponent {u_exp:.4}; sup H exponent {h_exp:.4}, decreasing {}",
            rep.level_differences.iter().map(|d| format!("{d:.1e}")).collect::<Vec<_>>(),
            rep.cauchy,
            rep.rtilde.total,
            rep.h_decreasing
        ),
    );
    assert!(ok);
}
