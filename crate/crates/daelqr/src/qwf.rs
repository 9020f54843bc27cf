//! Single-input systems in quasi-Weierstrass form and their consistency
//! structure.
//!
//! A system couples an ordinary differential part `(J, b_J)` with a
//! nilpotent algebraic part `(N, b_N)`:
//!
//! ```text
//! d/dt [ I  0 ] x = [ J  0 ] x + [ b_J ] u,      x = (x_J, x_N).
//!      [ 0  N ]     [ 0  I ]     [ b_N ]
//! ```
//!
//! The input index counts how many derivatives of `u` a solution involves,
//! and the Kalman-like matrix built from `N b_N, N^2 b_N, ...` spans the
//! algebraic part of the space of consistent initial values.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::tol::Tolerances;

/// The quadruple `(J, N, b_J, b_N)` with `N` nilpotent.
#[derive(Debug, Clone, PartialEq)]
pub struct QwfSystem {
    j: DMatrix<f64>,
    n: DMatrix<f64>,
    b_j: DVector<f64>,
    b_n: DVector<f64>,
}

/// The input index: the largest `i` with `N^i b_N != 0`, or zero when
/// already `N b_N = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct InputIndex {
    pub omega: usize,
}

impl std::fmt::Display for InputIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.omega)
    }
}

/// One named invariant with its outcome.
#[derive(Debug, Clone, Serialize)]
pub struct InvariantCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Outcome of checking every structural invariant of a system.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<InvariantCheck>,
    /// Smallest `i` with `N^i = 0` within tolerance, when one exists.
    pub nilpotency_index: Option<usize>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for check in &self.checks {
            writeln!(
                f,
                "  [{}] {}: {}",
                if check.passed { "ok" } else { "FAIL" },
                check.name,
                check.detail
            )?;
        }
        if let Some(idx) = self.nilpotency_index {
            writeln!(f, "  nilpotency index: {idx}")?;
        }
        Ok(())
    }
}

/// Kalman-like matrix `K`, consistency-space basis `F` and a left inverse.
///
/// `F = blkdiag(I, -K)` spans the consistent initial values; the stored
/// left inverse is the Moore-Penrose choice unless replaced through
/// [`ConsistencyBasis::with_left_inverse`].
#[derive(Debug, Clone)]
pub struct ConsistencyBasis {
    omega: InputIndex,
    kalman: DMatrix<f64>,
    f: DMatrix<f64>,
    f_dagger: DMatrix<f64>,
}

impl ConsistencyBasis {
    pub fn omega(&self) -> InputIndex {
        self.omega
    }

    /// `K = [N b_N, ..., N^omega b_N]`, an `n_N x omega` matrix.
    pub fn kalman(&self) -> &DMatrix<f64> {
        &self.kalman
    }

    /// Basis of the consistency space, `n x (n_J + omega)`.
    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    /// Left inverse of [`Self::f`].
    pub fn f_dagger(&self) -> &DMatrix<f64> {
        &self.f_dagger
    }

    /// Dimension of the consistency space.
    pub fn dim(&self) -> usize {
        self.f.ncols()
    }

    /// Replace the stored left inverse, e.g. to explore the family of
    /// equivalent parametrisations. Fails if `left * F != I`.
    pub fn with_left_inverse(mut self, left: DMatrix<f64>, tol: &Tolerances) -> Result<Self> {
        if left.shape() != (self.f.ncols(), self.f.nrows()) {
            return Err(Error::dim(format!(
                "left inverse must be {}x{}",
                self.f.ncols(),
                self.f.nrows()
            )));
        }
        let defect = linalg::left_inverse_defect(&left, &self.f);
        let scale = (left.norm() * self.f.norm()).max(1.0);
        if defect > tol.rank * scale {
            return Err(Error::NotALeftInverse { defect });
        }
        self.f_dagger = left;
        Ok(self)
    }
}

/// Result of testing an initial value against the consistency space.
#[derive(Debug, Clone)]
pub struct ConsistencyCheck {
    pub consistent: bool,
    /// `|(I - F F^+) x0|`, the distance witness.
    pub residual: f64,
    /// Free parameters `(x_J(0), u(0), ..., u^(omega-1)(0)) = F^+ x0`,
    /// present when consistent.
    pub parameters: Option<DVector<f64>>,
}

impl QwfSystem {
    /// Build a system, checking shapes and nilpotency of `N`.
    pub fn new(
        j: DMatrix<f64>,
        n: DMatrix<f64>,
        b_j: DVector<f64>,
        b_n: DVector<f64>,
        tol: &Tolerances,
    ) -> Result<Self> {
        if j.nrows() != j.ncols() {
            return Err(Error::dim(format!(
                "J must be square, got {}x{}",
                j.nrows(),
                j.ncols()
            )));
        }
        if n.nrows() != n.ncols() {
            return Err(Error::dim(format!(
                "N must be square, got {}x{}",
                n.nrows(),
                n.ncols()
            )));
        }
        if b_j.len() != j.nrows() {
            return Err(Error::dim(format!(
                "b_J has length {}, expected {}",
                b_j.len(),
                j.nrows()
            )));
        }
        if b_n.len() != n.nrows() {
            return Err(Error::dim(format!(
                "b_N has length {}, expected {}",
                b_n.len(),
                n.nrows()
            )));
        }
        if j.nrows() + n.nrows() == 0 {
            return Err(Error::InvalidSystem(
                "total dimension must be at least 1".into(),
            ));
        }
        let sys = QwfSystem { j, n, b_j, b_n };
        match sys.nilpotency_index(tol) {
            Some(_) => Ok(sys),
            None => {
                let p = sys.n_n();
                Err(Error::NotNilpotent {
                    power: p,
                    norm: linalg::matrix_power(&sys.n, p).norm(),
                    tolerance: tol.nilpotency * sys.n.norm().powi(p as i32).max(1.0),
                })
            }
        }
    }

    /// An ordinary differential system, i.e. one with empty algebraic part.
    pub fn ode(j: DMatrix<f64>, b_j: DVector<f64>, tol: &Tolerances) -> Result<Self> {
        QwfSystem::new(j, DMatrix::zeros(0, 0), b_j, DVector::zeros(0), tol)
    }

    pub fn n_j(&self) -> usize {
        self.j.nrows()
    }

    pub fn n_n(&self) -> usize {
        self.n.nrows()
    }

    /// Total state dimension `n = n_J + n_N`.
    pub fn dim(&self) -> usize {
        self.n_j() + self.n_n()
    }

    pub fn j(&self) -> &DMatrix<f64> {
        &self.j
    }

    pub fn nilpotent(&self) -> &DMatrix<f64> {
        &self.n
    }

    pub fn b_j(&self) -> &DVector<f64> {
        &self.b_j
    }

    pub fn b_n(&self) -> &DVector<f64> {
        &self.b_n
    }

    /// `E = blkdiag(I, N)`.
    pub fn e_matrix(&self) -> DMatrix<f64> {
        let (n_j, n) = (self.n_j(), self.dim());
        let mut e = DMatrix::zeros(n, n);
        for i in 0..n_j {
            e[(i, i)] = 1.0;
        }
        e.view_mut((n_j, n_j), (self.n_n(), self.n_n()))
            .copy_from(&self.n);
        e
    }

    /// `A = blkdiag(J, I)`.
    pub fn a_matrix(&self) -> DMatrix<f64> {
        let (n_j, n) = (self.n_j(), self.dim());
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (n_j, n_j)).copy_from(&self.j);
        for i in n_j..n {
            a[(i, i)] = 1.0;
        }
        a
    }

    /// `b = (b_J, b_N)` stacked.
    pub fn b_vector(&self) -> DVector<f64> {
        let mut b = DVector::zeros(self.dim());
        b.rows_mut(0, self.n_j()).copy_from(&self.b_j);
        b.rows_mut(self.n_j(), self.n_n()).copy_from(&self.b_n);
        b
    }

    /// Smallest `i <= n_N` with `|N^i| <= nilpotency_tol * max(1, |N|^i)`,
    /// or `None` when `N` is not nilpotent within tolerance.
    pub fn nilpotency_index(&self, tol: &Tolerances) -> Option<usize> {
        let n_n = self.n_n();
        let norm_n = self.n.norm();
        let mut acc = DMatrix::<f64>::identity(n_n, n_n);
        for i in 0..=n_n {
            if acc.norm() <= tol.nilpotency * norm_n.powi(i as i32).max(1.0) {
                return Some(i);
            }
            if i < n_n {
                acc = &acc * &self.n;
            }
        }
        None
    }

    /// Run every structural invariant and report the outcome.
    pub fn validate(&self, tol: &Tolerances) -> ValidationReport {
        let mut checks = Vec::new();
        checks.push(InvariantCheck {
            name: "dimensions".into(),
            passed: true,
            detail: format!(
                "n_J = {}, n_N = {}, n = {}",
                self.n_j(),
                self.n_n(),
                self.dim()
            ),
        });
        checks.push(InvariantCheck {
            name: "total dimension >= 1".into(),
            passed: self.dim() >= 1,
            detail: format!("n = {}", self.dim()),
        });

        let nilpotency_index = self.nilpotency_index(tol);
        let power = linalg::matrix_power(&self.n, self.n_n()).norm();
        checks.push(InvariantCheck {
            name: "N nilpotent".into(),
            passed: nilpotency_index.is_some(),
            detail: format!("|N^{}| = {:.3e}", self.n_n(), power),
        });

        // Regularity sanity: det(lambda E - A) at a generic sample must be
        // clearly nonzero; the block structure guarantees this whenever N is
        // nilpotent, so a failure flags broken assembly, not user error.
        let mut rng = ChaCha8Rng::seed_from_u64(0x005e_ed01);
        let lambda: f64 = rng.random_range(1.5..2.5);
        let pencil = self.e_matrix() * lambda - self.a_matrix();
        let det = pencil.determinant();
        let hadamard: f64 = (0..pencil.nrows())
            .map(|i| pencil.row(i).norm().max(1e-300))
            .product();
        checks.push(InvariantCheck {
            name: "pencil regular".into(),
            passed: det.abs() > tol.rank * hadamard,
            detail: format!("|det({lambda:.3} E - A)| = {:.3e}", det.abs()),
        });

        ValidationReport {
            checks,
            nilpotency_index,
        }
    }

    /// Error unless [`Self::validate`] passes everything.
    pub fn ensure_valid(&self, tol: &Tolerances) -> Result<()> {
        let report = self.validate(tol);
        if report.is_valid() {
            Ok(())
        } else {
            let failed: Vec<&str> = report
                .checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| c.name.as_str())
                .collect();
            Err(Error::InvalidSystem(failed.join(", ")))
        }
    }

    /// The input index, with zero tests made scale-aware:
    /// `N^i b_N` counts as zero when its norm is at most
    /// `zero_vector_tol * max(1, |N|^i |b_N|)`.
    pub fn input_index(&self, tol: &Tolerances) -> InputIndex {
        let n_n = self.n_n();
        if n_n == 0 {
            return InputIndex { omega: 0 };
        }
        let norm_n = self.n.norm();
        let norm_b = self.b_n.norm();
        let is_zero = |v: &DVector<f64>, i: usize| {
            v.norm() <= tol.zero_vector * (norm_n.powi(i as i32) * norm_b).max(1.0)
        };
        let mut v = &self.n * &self.b_n;
        if is_zero(&v, 1) {
            return InputIndex { omega: 0 };
        }
        // N^{i+1} b_N = N (N^i b_N), so the sequence stays zero once it hits
        // zero; the index is also capped by nilpotency at n_N - 1.
        let mut omega = 1;
        while omega < n_n - 1 {
            let next = &self.n * &v;
            if is_zero(&next, omega + 1) {
                break;
            }
            v = next;
            omega += 1;
        }
        InputIndex { omega }
    }

    /// Kalman-like matrix, consistency-space basis and its Moore-Penrose
    /// left inverse.
    pub fn consistency_basis(&self, tol: &Tolerances) -> Result<ConsistencyBasis> {
        let omega = self.input_index(tol);
        let (n_j, n_n, n) = (self.n_j(), self.n_n(), self.dim());
        let mut kalman = DMatrix::zeros(n_n, omega.omega);
        let mut v = self.b_n.clone();
        for i in 0..omega.omega {
            v = &self.n * &v;
            kalman.set_column(i, &v);
        }
        let k_rank = linalg::rank(&kalman, tol);
        if k_rank != omega.omega {
            return Err(Error::InternalConsistency {
                context: "consistency_basis".into(),
                detail: format!(
                    "Kalman-like matrix has rank {k_rank}, expected {}",
                    omega.omega
                ),
            });
        }
        let mut f = DMatrix::zeros(n, n_j + omega.omega);
        for i in 0..n_j {
            f[(i, i)] = 1.0;
        }
        f.view_mut((n_j, n_j), (n_n, omega.omega))
            .copy_from(&(-&kalman));
        let f_dagger = linalg::pseudo_inverse(&f, tol);
        Ok(ConsistencyBasis {
            omega,
            kalman,
            f,
            f_dagger,
        })
    }

    /// Does `x0` lie in the consistency space? On success the free
    /// parameters `F^+ x0` are returned as well.
    pub fn is_consistent(&self, x0: &DVector<f64>, tol: &Tolerances) -> Result<ConsistencyCheck> {
        if x0.len() != self.dim() {
            return Err(Error::dim(format!(
                "initial value has length {}, expected {}",
                x0.len(),
                self.dim()
            )));
        }
        let basis = self.consistency_basis(tol)?;
        let params = basis.f_dagger() * x0;
        let residual = (x0 - basis.f() * &params).norm();
        let consistent = residual <= tol.consistency * x0.norm().max(1.0);
        Ok(ConsistencyCheck {
            consistent,
            residual,
            parameters: consistent.then_some(params),
        })
    }
}
