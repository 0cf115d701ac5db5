//! Dormand–Prince 5(4) with FSAL and a PI step controller.
//!
//! Positivity is enforced by rejecting the step: if any stage leaves the
//! admissible set, or the right-hand side is not finite, the step is halved
//! and retried.

pub(crate) trait OdeSystem: Sync {
    /// Writes `dy = F(t, y)`. Returns `false` if the evaluation failed.
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> bool;

    fn admissible(&self, y: &[f64]) -> bool {
        y.iter().all(|&x| x > 0.0 && x.is_finite())
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct StepControl {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub min_dt: f64,
    pub max_dt: f64,
    pub initial_dt: Option<f64>,
    pub max_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum DriveError {
    Underflow { t: f64, dt: f64 },
    StepLimit { t: f64 },
    BadInitial,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Accepted {
    pub t: f64,
    pub dt: f64,
    /// The step landed on a requested output time.
    pub at_stop: bool,
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;

/// Integrates from `(t0, y0)` to `t_end`, landing exactly on each time in
/// `stops` (sorted, inside `(t0, t_end]`). `observe` sees every accepted
/// step and may stop the run. Returns the final time and state.
pub(crate) fn integrate<S, O>(
    sys: &S,
    t0: f64,
    y0: Vec<f64>,
    t_end: f64,
    ctl: &StepControl,
    stops: &[f64],
    mut observe: O,
) -> Result<(f64, Vec<f64>), (DriveError, f64, Vec<f64>)>
where
    S: OdeSystem,
    O: FnMut(Accepted, &[f64]) -> Control,
{
    let n = y0.len();
    let mut y = y0;
    let mut t = t0;
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    if !sys.admissible(&y) || !sys.rhs(t, &y, &mut k[0]) {
        return Err((DriveError::BadInitial, t, y));
    }
    let mut h = ctl
        .initial_dt
        .unwrap_or_else(|| initial_step(&y, &k[0], ctl))
        .min(ctl.max_dt)
        .min(t_end - t0);
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut fac_old: f64 = 1e-4;
    let mut rejected_last = false;
    let mut steps = 0usize;
    let mut next_stop = 0usize;
    let expo1 = 0.2 - BETA * 0.75;

    while t < t_end {
        while next_stop < stops.len() && stops[next_stop] <= t {
            next_stop += 1;
        }
        let target = stops.get(next_stop).copied().unwrap_or(t_end).min(t_end);
        if h < ctl.min_dt {
            return Err((DriveError::Underflow { t, dt: h }, t, y));
        }
        if steps >= ctl.max_steps {
            return Err((DriveError::StepLimit { t }, t, y));
        }
        let mut dt = h.min(ctl.max_dt);
        let mut landing = false;
        // land exactly, and avoid leaving a sliver before the target
        if t + dt >= target - 1e-3 * dt {
            dt = target - t;
            landing = true;
        }

        let mut ok = true;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, a) in A[s][..s].iter().enumerate() {
                    if *a != 0.0 {
                        acc += a * k[j][i];
                    }
                }
                stage[i] = y[i] + dt * acc;
            }
            if !sys.admissible(&stage) {
                ok = false;
                break;
            }
            if !sys.rhs(t + C[s] * dt, &stage, &mut k[s]) {
                ok = false;
                break;
            }
            if s == 6 {
                y_new.copy_from_slice(&stage);
            }
        }
        steps += 1;
        if !ok {
            h = 0.5 * dt;
            rejected_last = true;
            continue;
        }

        let mut err: f64 = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for (j, w) in E.iter().enumerate() {
                if *w != 0.0 {
                    e += w * k[j][i];
                }
            }
            let sc = ctl.abs_tol + ctl.rel_tol * y[i].abs().max(y_new[i].abs());
            err = err.max((dt * e).abs() / sc);
        }
        if !err.is_finite() {
            h = 0.5 * dt;
            rejected_last = true;
            continue;
        }

        let fac11 = err.max(1e-300).powf(expo1);
        if err <= 1.0 {
            let fac = (fac11 / fac_old.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = dt / fac;
            if rejected_last {
                h_new = h_new.min(dt);
            }
            fac_old = err.max(1e-4);
            rejected_last = false;
            t = if landing { target } else { t + dt };
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6);
            h = if landing { h_new.max(h) } else { h_new };
            let info = Accepted {
                t,
                dt,
                at_stop: landing,
            };
            if observe(info, &y) == Control::Stop {
                break;
            }
        } else {
            h = dt / (fac11 / SAFETY).min(1.0 / FAC_MIN);
            rejected_last = true;
        }
    }
    Ok((t, y))
}

/// Starting step from the scaled norms of `y` and `F(y)`.
fn initial_step(y: &[f64], dy: &[f64], ctl: &StepControl) -> f64 {
    let mut d0: f64 = 0.0;
    let mut d1: f64 = 0.0;
    for (a, b) in y.iter().zip(dy) {
        let sc = ctl.abs_tol + ctl.rel_tol * a.abs();
        d0 = d0.max(a.abs() / sc);
        d1 = d1.max(b.abs() / sc);
    }
    let h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h.max(ctl.min_dt * 10.0)
}
