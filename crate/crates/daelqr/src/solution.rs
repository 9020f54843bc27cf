//! The solution map of the system: integrate the differential part,
//! evaluate the algebraic part from input derivatives, and verify the
//! result against the defining equation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ode::{integrate_to_grid, OdeOptions};
use crate::qwf::QwfSystem;
use crate::signal::ControlSignal;
use crate::tol::Tolerances;

/// A state trajectory sampled on a time grid, together with the input
/// values that produced it.
#[derive(Debug, Clone)]
pub struct Trajectory {
    grid: Vec<f64>,
    states: Vec<DVector<f64>>,
    inputs: Vec<f64>,
    n_j: usize,
}

impl Trajectory {
    pub fn new(grid: Vec<f64>, states: Vec<DVector<f64>>, inputs: Vec<f64>, n_j: usize) -> Self {
        assert_eq!(grid.len(), states.len());
        assert_eq!(grid.len(), inputs.len());
        Trajectory {
            grid,
            states,
            inputs,
            n_j,
        }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Differential part of the state at grid index `i`.
    pub fn x_j(&self, i: usize) -> DVector<f64> {
        self.states[i].rows(0, self.n_j).into_owned()
    }

    /// Algebraic part of the state at grid index `i`.
    pub fn x_n(&self, i: usize) -> DVector<f64> {
        let n = self.states[i].len();
        self.states[i].rows(self.n_j, n - self.n_j).into_owned()
    }

    /// States as a `(grid length) x n` matrix, one row per sample.
    pub fn state_matrix(&self) -> DMatrix<f64> {
        let rows = self.grid.len();
        let cols = self.states.first().map_or(0, |s| s.len());
        DMatrix::from_fn(rows, cols, |i, j| self.states[i][j])
    }

    /// Largest pointwise distance to another trajectory on the same grid.
    pub fn sup_distance(&self, other: &Trajectory) -> f64 {
        self.states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max)
    }
}

/// Uniform grid over `[0, t_end]` with `steps` intervals.
pub fn uniform_grid(t_end: f64, steps: usize) -> Vec<f64> {
    let steps = steps.max(1);
    (0..=steps)
        .map(|i| t_end * i as f64 / steps as f64)
        .collect()
}

/// Default output grid: uniform with at least 500 points on the horizon,
/// so repeated runs are bit-for-bit comparable.
pub fn default_grid(t_end: f64) -> Vec<f64> {
    uniform_grid(t_end, 500)
}

/// Residual of a trajectory against the defining equation, measured with
/// central differences on a uniform grid.
#[derive(Debug, Clone)]
pub struct ResidualReport {
    /// Max over interior grid points of `|D_h(Ex) - Ax - bu|`.
    pub max_residual: f64,
    /// Grid index attaining the maximum.
    pub argmax: usize,
    /// Grid step.
    pub h: f64,
    /// `h^2`, the magnitude an exact solution's residual scales with: the
    /// central difference of a smooth function is accurate to second order.
    pub h_squared: f64,
}

impl std::fmt::Display for ResidualReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "max residual {:.3e} at index {} (h = {:.3e}, h^2 = {:.3e})",
            self.max_residual, self.argmax, self.h, self.h_squared
        )
    }
}

/// Solve the system for a feasible pair of initial value and input.
///
/// The differential part is integrated with an adaptive embedded pair;
/// the algebraic part is evaluated pointwise from the input derivatives,
/// so it is exact up to the polynomial arithmetic of the signal.
///
/// Fails when `(x0, u)` is not feasible: `x0` must lie in the consistency
/// space and the input derivatives at zero must match the parameters
/// pinned by `x0`.
pub fn solve_dae(
    sys: &QwfSystem,
    x0: &DVector<f64>,
    u: &ControlSignal,
    grid: &[f64],
    tol: &Tolerances,
) -> Result<Trajectory> {
    sys.ensure_valid(tol)?;
    if grid.is_empty() {
        return Err(Error::GridTooCoarse {
            points: 0,
            needed: 1,
        });
    }
    let basis = sys.consistency_basis(tol)?;
    let omega = basis.omega().omega;
    let n_j = sys.n_j();

    // Matching conditions: 0 is membership in the consistency space,
    // i >= 1 pins the input derivative of order i-1 at t = 0.
    let check = sys.is_consistent(x0, tol)?;
    let mut failed = Vec::new();
    let mut details = Vec::new();
    if !check.consistent {
        failed.push(0);
        details.push(format!("x0 residual {:.3e}", check.residual));
    }
    let params = basis.f_dagger() * x0;
    let u_at_zero = u.eval_derivatives(0.0, omega)?;
    for i in 0..omega {
        let pinned = params[n_j + i];
        if (u_at_zero[i] - pinned).abs() > tol.consistency {
            failed.push(i + 1);
            details.push(format!(
                "u^({i})(0) = {:.6e}, pinned to {:.6e}",
                u_at_zero[i], pinned
            ));
        }
    }
    if !failed.is_empty() {
        return Err(Error::InconsistentInitialPair {
            failed,
            detail: details.join("; "),
        });
    }

    // Differential part: x_J' = J x_J + b_J u.
    let x_j0 = params.rows(0, n_j).into_owned();
    let opts = OdeOptions::with_tolerances(1e-9, 1e-12);
    let u_ref = u;
    let x_j_path = integrate_to_grid(
        move |t, x: &DVector<f64>| sys.j() * x + sys.b_j() * u_ref.eval(t).unwrap_or(f64::NAN),
        grid,
        x_j0,
        &opts,
    )?;

    // Algebraic part: x_N = -[b_N, K] (u, u', ..., u^(omega)).
    let mut states = Vec::with_capacity(grid.len());
    let mut inputs = Vec::with_capacity(grid.len());
    for (idx, &t) in grid.iter().enumerate() {
        let derivs = u.eval_derivatives(t, omega)?;
        let mut x = DVector::zeros(sys.dim());
        x.rows_mut(0, n_j).copy_from(&x_j_path[idx]);
        let mut x_n = sys.b_n() * (-derivs[0]);
        for (i, d) in derivs.iter().enumerate().skip(1) {
            x_n -= basis.kalman().column(i - 1) * *d;
        }
        x.rows_mut(n_j, sys.n_n()).copy_from(&x_n);
        states.push(x);
        inputs.push(derivs[0]);
    }
    Ok(Trajectory::new(grid.to_vec(), states, inputs, n_j))
}

/// Independent residual check of a trajectory on a uniform grid: the
/// central difference of `E x` must match `A x + b u` at interior points
/// up to the discretisation error of order `h^2`.
pub fn verify_solution(
    sys: &QwfSystem,
    traj: &Trajectory,
    u: &ControlSignal,
) -> Result<ResidualReport> {
    let grid = traj.grid();
    if grid.len() < 3 {
        return Err(Error::GridTooCoarse {
            points: grid.len(),
            needed: 3,
        });
    }
    let h = grid[1] - grid[0];
    for (i, w) in grid.windows(2).enumerate() {
        let dev = (w[1] - w[0] - h).abs();
        if dev > 1e-9 * h.abs().max(1e-12) {
            return Err(Error::NonUniformGrid {
                deviation: dev,
                index: i + 1,
            });
        }
    }

    let e = sys.e_matrix();
    let a = sys.a_matrix();
    let b = sys.b_vector();
    let mut max_residual = 0.0;
    let mut argmax = 0;
    for (i, &t) in grid.iter().enumerate().take(grid.len() - 1).skip(1) {
        let d_ex = (&e * &traj.states()[i + 1] - &e * &traj.states()[i - 1]) / (2.0 * h);
        let rhs = &a * &traj.states()[i] + &b * u.eval(t)?;
        let r = (d_ex - rhs).norm();
        if r > max_residual {
            max_residual = r;
            argmax = i;
        }
    }
    Ok(ResidualReport {
        max_residual,
        argmax,
        h,
        h_squared: h * h,
    })
}
