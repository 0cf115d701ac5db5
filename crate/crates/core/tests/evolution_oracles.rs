use std::f64::consts::TAU;

use pscurv::evolution::{
    estimate_blowup_time, evolve, evolve_to_blowup, residual, subsolution_blowup_tau, EvolveError,
    EvolveOptions, Sampling, SourceTerm,
};
use pscurv::frames::{normalize_blowup, Frame};
use pscurv::scenarios::{constant_f_tau, trivial_ode};
use pscurv::TorusGrid;

fn sampled(interval: f64) -> EvolveOptions {
    EvolveOptions {
        rel_tol: 1e-10,
        abs_tol: 1e-12,
        sampling: Sampling {
            interval: Some(interval),
            ..Sampling::default()
        },
        ..EvolveOptions::default()
    }
}

/// Classical RK4 on `v' = a v³ − v/2` until `v` passes `cap`, with the step
/// shrunk as `v` grows so that `a v² dt` stays small.
fn scalar_blowup_time(a: f64, v0: f64, cap: f64) -> f64 {
    let rhs = |v: f64| a * v * v * v - 0.5 * v;
    let (mut t, mut v) = (0.0, v0);
    while v < cap {
        let dt = 1e-4 / (1.0 + a * v * v);
        let k1 = rhs(v);
        let k2 = rhs(v + 0.5 * dt * k1);
        let k3 = rhs(v + 0.5 * dt * k2);
        let k4 = rhs(v + dt * k3);
        v += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += dt;
    }
    t
}

#[test]
fn subsolution_oracle_blows_up_on_time() {
    for inf_f in [0.5f64, 0.9, 2.0] {
        let grid = TorusGrid::new(2, 16, TAU).unwrap();
        let v0 = 1.0 / (2.0 * inf_f).sqrt();
        let a = 2.0 * inf_f;
        let closed = subsolution_blowup_tau(inf_f, v0).unwrap();
        assert!((closed - 2f64.ln()).abs() < 1e-14);
        let scalar = scalar_blowup_time(a, v0, 1e6);
        assert!((scalar - closed).abs() < 1e-6 * closed, "{scalar} vs {closed}");

        let frame = Frame::tau_frame(3, 1.0).unwrap();
        let start = frame.start_time().unwrap();
        let err = evolve(
            &grid.constant(v0),
            &frame,
            &SourceTerm::constant(a).unwrap(),
            10.0,
            &EvolveOptions::default(),
        )
        .unwrap_err();
        let EvolveError::BlowupDetected { time, .. } = err else {
            panic!("expected blow-up, got {err}");
        };
        let elapsed = time - start;
        assert!((elapsed - scalar).abs() <= 0.01 * scalar, "{elapsed} vs {scalar}");
    }
}

#[test]
fn trivial_run_normalizes_with_small_residual() {
    let (p, sol) = trivial_ode(16).unwrap();
    let traj = evolve_to_blowup(&p.initial, &p.frame, &p.source, p.t_end, &sampled(1e-3)).unwrap();
    let t1 = estimate_blowup_time(&traj).unwrap();
    assert!((t1 - sol.t1()).abs() < 1e-4);
    let norm = normalize_blowup(&traj.window(0.0, 0.9 * sol.t1()), sol.t1()).unwrap();
    let s = norm.samples();
    let worst = s
        .windows(2)
        .map(|w| residual((w[0].time, &w[0].field), (w[1].time, &w[1].field), norm.frame(), &p.source).unwrap())
        .fold(0.0, f64::max);
    assert!(worst < 1e-5, "{worst}");
    let eps = 0.2;
    let last = norm.interpolate(1.0 - eps).unwrap();
    let raw = traj.interpolate(sol.t1() * (1.0 - eps)).unwrap();
    assert!((last.max() - sol.t1().sqrt() * raw.max()).abs() < 1e-12 * last.max());
}

#[test]
fn residual_catches_a_corrupted_sample() {
    let (p, _) = trivial_ode(8).unwrap();
    let traj = evolve(&p.initial, &p.frame, &p.source, 1.0, &sampled(1e-3)).unwrap();
    let s = traj.samples();
    let k = s.len() / 2;
    let good = residual((s[k].time, &s[k].field), (s[k + 1].time, &s[k + 1].field), &p.frame, &p.source).unwrap();
    let bad_field = s[k + 1].field.scale(1.1).unwrap();
    let bad = residual((s[k].time, &s[k].field), (s[k + 1].time, &bad_field), &p.frame, &p.source).unwrap();
    assert!(good < 1e-6, "{good}");
    assert!(bad > 1e-2, "{bad}");
}

#[test]
fn sup_stays_bounded_and_positive_on_constant_source_run() {
    let p = constant_f_tau(16).unwrap();
    let traj = evolve(&p.initial, &p.frame, &p.source, p.t_end, &sampled(0.1)).unwrap();
    let start = traj.records()[0].max;
    assert!(traj.records().iter().all(|r| r.min > 0.0));
    assert!(traj.run_max().unwrap() <= 10.0 * start);
}

#[test]
fn sampling_does_not_change_the_solution() {
    let (p, _) = trivial_ode(8).unwrap();
    let coarse = evolve(&p.initial, &p.frame, &p.source, 1.2, &sampled(0.1)).unwrap();
    let fine = evolve(&p.initial, &p.frame, &p.source, 1.2, &sampled(0.01)).unwrap();
    let a = coarse.last().unwrap().field.max();
    let b = fine.last().unwrap().field.max();
    assert!((a - b).abs() < 1e-8 * a, "{a} vs {b}");
}
