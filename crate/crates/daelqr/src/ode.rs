//! Adaptive Dormand-Prince 5(4) integration with exact landing on
//! requested output times.
//!
//! The pair provides a 5th-order propagated solution with an embedded
//! 4th-order error estimate and first-same-as-last stage reuse. Output
//! times are hit exactly by clamping the step, so no interpolation error
//! enters the stored trajectories.

use nalgebra::DVector;

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];

const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
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

// 5th-order weights coincide with the last tableau row (FSAL).
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];

const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Controls for the adaptive stepper.
#[derive(Debug, Clone)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step size (also bounds the spacing of stored
    /// dense-output samples when the caller records accepted steps).
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-9,
            atol: 1e-12,
            h_max: f64::INFINITY,
            max_steps: 50_000_000,
        }
    }
}

impl OdeOptions {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        OdeOptions {
            rtol,
            atol,
            ..OdeOptions::default()
        }
    }

    pub fn h_max(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }
}

/// Whether the caller wants to keep integrating after an accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepFlow {
    Continue,
    Stop,
}

fn error_norm(
    err: &DVector<f64>,
    y: &DVector<f64>,
    y_new: &DVector<f64>,
    opts: &OdeOptions,
) -> f64 {
    let n = err.len();
    if n == 0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
        let q = err[i] / sc;
        acc += q * q;
    }
    (acc / n as f64).sqrt()
}

fn initial_step<F>(
    f: &mut F,
    t0: f64,
    y0: &DVector<f64>,
    f0: &DVector<f64>,
    span: f64,
    opts: &OdeOptions,
) -> f64
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
{
    let n = y0.len();
    if n == 0 {
        return span.min(opts.h_max);
    }
    let sc: Vec<f64> = (0..n)
        .map(|i| opts.atol + opts.rtol * y0[i].abs())
        .collect();
    let rms = |v: &DVector<f64>| {
        let s: f64 = (0..n).map(|i| (v[i] / sc[i]).powi(2)).sum();
        (s / n as f64).sqrt()
    };
    let d0 = rms(y0);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-10 || d1 < 1e-10 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(span).min(opts.h_max);
    let y1 = y0 + f0 * h0;
    let f1 = f(t0 + h0, &y1);
    let d2 = rms(&(&f1 - f0)) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span).min(opts.h_max)
}

/// Core adaptive loop. Integrates from `t0` towards `t_end`, calling
/// `on_accept(t, y, f(t, y))` after every accepted step; the callback can
/// stop the integration early. Returns the final `(t, y)`.
pub fn integrate_adaptive<F, G>(
    mut f: F,
    t0: f64,
    y0: DVector<f64>,
    t_end: f64,
    opts: &OdeOptions,
    mut on_accept: G,
) -> Result<(f64, DVector<f64>)>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
    G: FnMut(f64, &DVector<f64>, &DVector<f64>) -> StepFlow,
{
    if t_end <= t0 || t_end.is_nan() || t0.is_nan() {
        return Err(Error::IntegrationFailure {
            t: t0,
            reason: format!("non-positive integration span [{t0}, {t_end}]"),
        });
    }
    let dim = y0.len();
    let mut t = t0;
    let mut y = y0;
    let mut k: Vec<DVector<f64>> = (0..7).map(|_| DVector::zeros(dim)).collect();
    k[0] = f(t, &y);
    if on_accept(t, &y, &k[0]) == StepFlow::Stop {
        return Ok((t, y));
    }
    let mut h = initial_step(&mut f, t, &y, &k[0], t_end - t0, opts);
    let mut rejected = false;

    for _ in 0..opts.max_steps {
        if t >= t_end {
            return Ok((t, y));
        }
        h = h.min(opts.h_max).min(t_end - t);
        let h_floor = 1e-14 * t.abs().max(1.0);
        if h < h_floor {
            return Err(Error::IntegrationFailure {
                t,
                reason: format!("step size underflow (h = {h:e})"),
            });
        }

        for s in 1..7 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate().take(s) {
                if A[s][j] != 0.0 {
                    ys.axpy(h * A[s][j], kj, 1.0);
                }
            }
            k[s] = f(t + C[s] * h, &ys);
        }

        let mut y_new = y.clone();
        let mut err = DVector::zeros(dim);
        for (s, ks) in k.iter().enumerate() {
            if B5[s] != 0.0 {
                y_new.axpy(h * B5[s], ks, 1.0);
            }
            let d = B5[s] - B4[s];
            if d != 0.0 {
                err.axpy(h * d, ks, 1.0);
            }
        }

        let err_norm = error_norm(&err, &y, &y_new, opts);
        if err_norm <= 1.0 {
            t += h;
            y = y_new;
            k[0] = k[6].clone(); // FSAL
            if on_accept(t, &y, &k[0]) == StepFlow::Stop {
                return Ok((t, y));
            }
            let fac_max = if rejected { 1.0 } else { 5.0 };
            let fac = if err_norm == 0.0 {
                fac_max
            } else {
                (0.9 * err_norm.powf(-0.2)).clamp(0.2, fac_max)
            };
            h *= fac;
            rejected = false;
        } else {
            h *= (0.9 * err_norm.powf(-0.2)).clamp(0.2, 1.0);
            rejected = true;
        }
    }
    Err(Error::IntegrationFailure {
        t,
        reason: "step budget exhausted".into(),
    })
}

/// Integrate `y' = f(t, y)` from `grid[0]` with `y(grid[0]) = y0`,
/// returning the solution at every grid point. Grid points are hit
/// exactly; the grid must be strictly increasing.
pub fn integrate_to_grid<F>(
    mut f: F,
    grid: &[f64],
    y0: DVector<f64>,
    opts: &OdeOptions,
) -> Result<Vec<DVector<f64>>>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
{
    if grid.is_empty() {
        return Err(Error::GridTooCoarse {
            points: 0,
            needed: 1,
        });
    }
    for w in grid.windows(2) {
        if w[1] <= w[0] || w[1].is_nan() || w[0].is_nan() {
            return Err(Error::IntegrationFailure {
                t: w[0],
                reason: "grid is not strictly increasing".into(),
            });
        }
    }
    let mut out = Vec::with_capacity(grid.len());
    out.push(y0.clone());
    if grid.len() == 1 {
        return Ok(out);
    }
    if y0.is_empty() {
        out.resize(grid.len(), y0);
        return Ok(out);
    }

    // March target by target; clamping inside integrate_adaptive lands each
    // segment end exactly.
    let mut y = y0;
    for w in grid.windows(2) {
        let (t_a, t_b) = (w[0], w[1]);
        let (_, y_b) = integrate_adaptive(&mut f, t_a, y, t_b, opts, |_, _, _| StepFlow::Continue)?;
        out.push(y_b.clone());
        y = y_b;
    }
    Ok(out)
}
