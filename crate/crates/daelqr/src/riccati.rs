//! The differential Riccati equation of the augmented problem, its
//! stationary limit, and the algebraic residual.
//!
//! The flow starts from `P(0) = 0` and follows
//!
//! ```text
//! P' = A' P + P A + Q - (P b + h) r^{-1} (P b + h)',
//! ```
//!
//! written here for the augmented data. The state is stored in packed
//! lower-triangular form, so symmetry is enforced structurally at every
//! stage rather than repaired after the fact.

use nalgebra::{DMatrix, DVector};

use crate::augment::AugmentedSystem;
use crate::error::{Error, Result};
use crate::linalg;
use crate::ode::{integrate_adaptive, OdeOptions, StepFlow};
use crate::tol::Tolerances;

/// Derivative norm below which the flow counts as stationary, relative to
/// `max(1, |P|)`.
const STATIONARY_TOL: f64 = 1e-10;
/// Time cap for the stationary-limit search.
const T_MAX: f64 = 1e3;
/// Stored samples per unit horizon are bounded below by this step cap.
const DENSE_STEPS: f64 = 512.0;

fn pack(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows();
    let mut v = DVector::zeros(n * (n + 1) / 2);
    let mut idx = 0;
    for j in 0..n {
        for i in j..n {
            v[idx] = m[(i, j)];
            idx += 1;
        }
    }
    v
}

fn unpack(v: &DVector<f64>, n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let mut idx = 0;
    for j in 0..n {
        for i in j..n {
            m[(i, j)] = v[idx];
            m[(j, i)] = v[idx];
            idx += 1;
        }
    }
    m
}

fn dre_rhs(aug: &AugmentedSystem, p: &DMatrix<f64>) -> DMatrix<f64> {
    let a = aug.a_hat();
    let q = aug.q_hat();
    let gain = p * aug.b_hat() + aug.h_hat();
    a.transpose() * p + p * a + q - &gain * gain.transpose() / aug.r_hat()
}

/// Frobenius norm of the algebraic Riccati residual at `p`.
pub fn are_residual(aug: &AugmentedSystem, p: &DMatrix<f64>) -> f64 {
    dre_rhs(aug, p).norm()
}

/// Stationary solution with its convergence record.
#[derive(Debug, Clone)]
pub struct PInfinity {
    pub matrix: DMatrix<f64>,
    /// Time at which the flow was declared stationary.
    pub terminal_time: f64,
    /// Derivative norm at that time.
    pub derivative_norm: f64,
    /// Algebraic residual after Newton refinement.
    pub are_residual: f64,
    pub newton_iterations: usize,
}

/// Dense record of the Riccati flow on `[0, T]`.
///
/// Values and exact slopes (right-hand-side evaluations) are kept at every
/// accepted step, so evaluation anywhere in the horizon is a local cubic
/// Hermite interpolation.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    grid: Vec<f64>,
    values: Vec<DMatrix<f64>>,
    slopes: Vec<DMatrix<f64>>,
}

impl RiccatiSolution {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[DMatrix<f64>] {
        &self.values
    }

    pub fn horizon(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    /// `P` at the end of the integrated horizon.
    pub fn final_p(&self) -> &DMatrix<f64> {
        self.values.last().unwrap()
    }

    /// Cubic Hermite evaluation at `t` in `[0, horizon]` (a hair of slack
    /// is tolerated for stage times produced by the integrator).
    pub fn eval(&self, t: f64) -> Result<DMatrix<f64>> {
        let t_max = self.horizon();
        let slack = 1e-9 * t_max.max(1.0);
        if t < -slack || t > t_max + slack {
            return Err(Error::TimeOutOfRange {
                t,
                min: 0.0,
                max: t_max,
            });
        }
        let t = t.clamp(0.0, t_max);
        let idx = self
            .grid
            .partition_point(|&g| g <= t)
            .clamp(1, self.grid.len() - 1);
        let (t0, t1) = (self.grid[idx - 1], self.grid[idx]);
        let h = t1 - t0;
        let theta = if h > 0.0 { (t - t0) / h } else { 0.0 };
        let (p0, p1) = (&self.values[idx - 1], &self.values[idx]);
        let (d0, d1) = (&self.slopes[idx - 1], &self.slopes[idx]);
        let t2 = theta * theta;
        let t3 = t2 * theta;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + theta;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        Ok(p0 * h00 + d0 * (h10 * h) + p1 * h01 + d1 * (h11 * h))
    }

    /// Check the order and cone properties expected of the flow: every
    /// sample positive semidefinite and non-decreasing along the grid,
    /// within an eigenvalue floor of `-1e-8 |P|`.
    pub fn check_monotone_psd(&self) -> Result<()> {
        let scale = self
            .values
            .iter()
            .map(|p| p.norm())
            .fold(0.0f64, f64::max)
            .max(1e-300);
        let floor = -1e-8 * scale;
        for (i, p) in self.values.iter().enumerate() {
            if linalg::min_symmetric_eigenvalue(p) < floor {
                return Err(Error::InternalConsistency {
                    context: "riccati flow".into(),
                    detail: format!("P(t_{i}) is indefinite beyond the tolerance floor"),
                });
            }
        }
        for i in 1..self.values.len() {
            let diff = &self.values[i] - &self.values[i - 1];
            if linalg::min_symmetric_eigenvalue(&diff) < floor {
                return Err(Error::InternalConsistency {
                    context: "riccati flow".into(),
                    detail: format!("P is decreasing between samples {} and {}", i - 1, i),
                });
            }
        }
        Ok(())
    }
}

/// Integrate the Riccati flow from `P(0) = 0` over `[0, t_final]`.
///
/// Requires the value assumptions (transformed weight positive
/// semidefinite, stabilizable pair, positive control weight); with an
/// indefinite weight the flow has no finite-escape guarantee, so the call
/// refuses rather than integrating blindly.
pub fn integrate_dre(
    aug: &AugmentedSystem,
    t_final: f64,
    tol: &Tolerances,
) -> Result<RiccatiSolution> {
    if t_final <= 0.0 || !t_final.is_finite() {
        return Err(Error::InvalidHorizon(t_final));
    }
    aug.ensure_value_assumptions(tol)?;
    let n = aug.n_hat();
    if n == 0 {
        return Ok(RiccatiSolution {
            grid: vec![0.0, t_final],
            values: vec![DMatrix::zeros(0, 0); 2],
            slopes: vec![DMatrix::zeros(0, 0); 2],
        });
    }

    let opts = OdeOptions::with_tolerances(1e-10, 1e-13).h_max(t_final / DENSE_STEPS);
    let mut grid = Vec::new();
    let mut values = Vec::new();
    let mut slopes = Vec::new();
    integrate_adaptive(
        |_, y: &DVector<f64>| pack(&dre_rhs(aug, &unpack(y, n))),
        0.0,
        DVector::zeros(n * (n + 1) / 2),
        t_final,
        &opts,
        |t, y, dy| {
            grid.push(t);
            values.push(unpack(y, n));
            slopes.push(unpack(dy, n));
            StepFlow::Continue
        },
    )?;
    Ok(RiccatiSolution {
        grid,
        values,
        slopes,
    })
}

/// Newton refinement of an approximate stationary solution: freeze the
/// gain, solve the resulting Lyapunov equation, repeat while the residual
/// improves. Falls back to the input when the frozen loop is not stable.
fn newton_refine(aug: &AugmentedSystem, start: DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let mut best = start.clone();
    let mut best_res = are_residual(aug, &best);
    let mut p = start;
    let mut iterations = 0;
    for _ in 0..50 {
        let gain = (p.transpose() * aug.b_hat() + aug.h_hat()).transpose() / aug.r_hat();
        let a_closed = aug.a_hat() - aug.b_hat() * &gain;
        if linalg::spectral_abscissa(&a_closed) >= 0.0 {
            break;
        }
        let w = aug.q_hat() + gain.transpose() * &gain * aug.r_hat()
            - gain.transpose() * aug.h_hat().transpose()
            - aug.h_hat() * &gain;
        let next = match linalg::solve_lyapunov(&a_closed, &w) {
            Ok(x) => x,
            Err(_) => break,
        };
        iterations += 1;
        let res = are_residual(aug, &next);
        let stalled = res >= best_res;
        if res < best_res {
            best_res = res;
            best = next.clone();
        }
        p = next;
        if stalled || best_res <= 1e-15 * aug.s_hat().norm().max(1.0) {
            break;
        }
    }
    (best, iterations)
}

/// Stationary limit of the Riccati flow: integrate until the derivative
/// norm drops below `1e-10 max(1, |P|)`, then polish with Newton steps on
/// the algebraic equation.
pub fn p_infinity(aug: &AugmentedSystem, tol: &Tolerances) -> Result<PInfinity> {
    aug.ensure_value_assumptions(tol)?;
    let n = aug.n_hat();
    if n == 0 {
        return Ok(PInfinity {
            matrix: DMatrix::zeros(0, 0),
            terminal_time: 0.0,
            derivative_norm: 0.0,
            are_residual: 0.0,
            newton_iterations: 0,
        });
    }

    let stationary =
        |p: &DMatrix<f64>, dp: &DMatrix<f64>| dp.norm() <= STATIONARY_TOL * p.norm().max(1.0);

    let zero = DMatrix::zeros(n, n);
    let rhs0 = dre_rhs(aug, &zero);
    if stationary(&zero, &rhs0) {
        let (matrix, newton_iterations) = newton_refine(aug, zero);
        let res = are_residual(aug, &matrix);
        return Ok(PInfinity {
            matrix,
            terminal_time: 0.0,
            derivative_norm: rhs0.norm(),
            are_residual: res,
            newton_iterations,
        });
    }

    let opts = OdeOptions::with_tolerances(1e-10, 1e-13).h_max(0.25);
    let mut last_p = zero;
    let mut last_dnorm = rhs0.norm();
    let mut converged = false;
    let (t_end, _) = integrate_adaptive(
        |_, y: &DVector<f64>| pack(&dre_rhs(aug, &unpack(y, n))),
        0.0,
        DVector::zeros(n * (n + 1) / 2),
        T_MAX,
        &opts,
        |_, y, dy| {
            last_p = unpack(y, n);
            let dp = unpack(dy, n);
            last_dnorm = dp.norm();
            if stationary(&last_p, &dp) {
                converged = true;
                StepFlow::Stop
            } else {
                StepFlow::Continue
            }
        },
    )?;
    if !converged {
        return Err(Error::NoConvergence {
            t_max: T_MAX,
            derivative_norm: last_dnorm,
        });
    }
    let (matrix, newton_iterations) = newton_refine(aug, last_p);
    let res = are_residual(aug, &matrix);
    Ok(PInfinity {
        matrix,
        terminal_time: t_end,
        derivative_norm: last_dnorm,
        are_residual: res,
        newton_iterations,
    })
}
