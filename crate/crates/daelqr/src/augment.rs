//! Reduction of the differential-algebraic problem to an ordinary one:
//! the augmented dynamics in the state `(x_J, u, ..., u^(omega-1))` with
//! input `u^(omega)`, the congruent transformation of the cost matrix,
//! and the standing assumptions for the optimal control problem.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::qwf::{ConsistencyBasis, InputIndex, QwfSystem};
use crate::tol::Tolerances;

/// Symmetric weighting matrix on `(x, u)` with named block views.
#[derive(Debug, Clone)]
pub struct CostWeights {
    s: DMatrix<f64>,
    n_j: usize,
    n_n: usize,
    asymmetry: f64,
}

impl CostWeights {
    /// Ingest a weight matrix, symmetrizing it. The original deviation
    /// from symmetry is kept for diagnostics.
    pub fn new(s: DMatrix<f64>, n_j: usize, n_n: usize) -> Result<Self> {
        let n = n_j + n_n;
        if s.shape() != (n + 1, n + 1) {
            return Err(Error::dim(format!(
                "weight matrix must be {}x{}, got {}x{}",
                n + 1,
                n + 1,
                s.nrows(),
                s.ncols()
            )));
        }
        let asymmetry = (&s - s.transpose()).norm() / s.norm().max(1.0);
        let s = (&s + s.transpose()) * 0.5;
        Ok(CostWeights {
            s,
            n_j,
            n_n,
            asymmetry,
        })
    }

    /// The identity weight: integrated `|x|^2 + u^2`.
    pub fn identity(n_j: usize, n_n: usize) -> Self {
        CostWeights {
            s: DMatrix::identity(n_j + n_n + 1, n_j + n_n + 1),
            n_j,
            n_n,
            asymmetry: 0.0,
        }
    }

    pub fn s(&self) -> &DMatrix<f64> {
        &self.s
    }

    /// Relative asymmetry of the matrix as supplied.
    pub fn asymmetry(&self) -> f64 {
        self.asymmetry
    }

    pub fn q_j(&self) -> DMatrix<f64> {
        self.s.view((0, 0), (self.n_j, self.n_j)).into_owned()
    }

    pub fn q_jn(&self) -> DMatrix<f64> {
        self.s
            .view((0, self.n_j), (self.n_j, self.n_n))
            .into_owned()
    }

    pub fn q_n(&self) -> DMatrix<f64> {
        self.s
            .view((self.n_j, self.n_j), (self.n_n, self.n_n))
            .into_owned()
    }

    pub fn h_j(&self) -> DVector<f64> {
        let n = self.n_j + self.n_n;
        self.s.view((0, n), (self.n_j, 1)).column(0).into_owned()
    }

    pub fn h_n(&self) -> DVector<f64> {
        let n = self.n_j + self.n_n;
        self.s
            .view((self.n_j, n), (self.n_n, 1))
            .column(0)
            .into_owned()
    }

    pub fn r(&self) -> f64 {
        let n = self.n_j + self.n_n;
        self.s[(n, n)]
    }

    /// Stage cost `(x, u)' S (x, u)`.
    pub fn stage_cost(&self, x: &DVector<f64>, u: f64) -> f64 {
        let n = self.n_j + self.n_n;
        let mut z = DVector::zeros(n + 1);
        z.rows_mut(0, n).copy_from(x);
        z[n] = u;
        (z.transpose() * &self.s * z)[(0, 0)]
    }
}

/// The equivalent ordinary system and its transformed cost.
///
/// For input index `omega >= 1` the state is
/// `(x_J, u, ..., u^(omega-1))` of dimension `n_hat = n_J + omega` with
/// input `u^(omega)`; for `omega = 0` the pair reduces to `(J, b_J)`.
/// The algebraic state is recovered through the output map
/// `x_N = -[0, b_N, K] (x_hat, u_hat)`.
#[derive(Debug, Clone)]
pub struct AugmentedSystem {
    a_hat: DMatrix<f64>,
    b_hat: DVector<f64>,
    output_map: DMatrix<f64>,
    s_hat: DMatrix<f64>,
    omega: InputIndex,
    n_j: usize,
}

impl AugmentedSystem {
    pub fn n_hat(&self) -> usize {
        self.a_hat.nrows()
    }

    pub fn omega(&self) -> InputIndex {
        self.omega
    }

    pub fn n_j(&self) -> usize {
        self.n_j
    }

    pub fn a_hat(&self) -> &DMatrix<f64> {
        &self.a_hat
    }

    pub fn b_hat(&self) -> &DVector<f64> {
        &self.b_hat
    }

    /// `x_N = output_map * (x_hat, u_hat)`, an `n_N x (n_hat + 1)` matrix.
    pub fn output_map(&self) -> &DMatrix<f64> {
        &self.output_map
    }

    pub fn s_hat(&self) -> &DMatrix<f64> {
        &self.s_hat
    }

    pub fn q_hat(&self) -> DMatrix<f64> {
        let n = self.n_hat();
        self.s_hat.view((0, 0), (n, n)).into_owned()
    }

    pub fn h_hat(&self) -> DVector<f64> {
        let n = self.n_hat();
        self.s_hat.view((0, n), (n, 1)).column(0).into_owned()
    }

    pub fn r_hat(&self) -> f64 {
        let n = self.n_hat();
        self.s_hat[(n, n)]
    }

    /// The reconstruction matrix `G` with `x = G (x_hat, u_hat)`:
    /// identity on `x_J` stacked over the output map.
    pub fn g_matrix(&self) -> DMatrix<f64> {
        let n_n = self.output_map.nrows();
        let cols = self.n_hat() + 1;
        let mut g = DMatrix::zeros(self.n_j + n_n, cols);
        for i in 0..self.n_j {
            g[(i, i)] = 1.0;
        }
        g.view_mut((self.n_j, 0), (n_n, cols))
            .copy_from(&self.output_map);
        g
    }

    /// Assemble the full state from augmented state and input.
    pub fn full_state(&self, x_hat: &DVector<f64>, u_hat: f64) -> DVector<f64> {
        let mut z = DVector::zeros(self.n_hat() + 1);
        z.rows_mut(0, self.n_hat()).copy_from(x_hat);
        z[self.n_hat()] = u_hat;
        self.g_matrix() * z
    }

    /// Transformed stage cost `(x_hat, u_hat)' S_hat (x_hat, u_hat)`.
    pub fn stage_cost(&self, x_hat: &DVector<f64>, u_hat: f64) -> f64 {
        let n = self.n_hat();
        let mut z = DVector::zeros(n + 1);
        z.rows_mut(0, n).copy_from(x_hat);
        z[n] = u_hat;
        (z.transpose() * &self.s_hat * z)[(0, 0)]
    }

    /// Error unless the assumptions backing the value theory hold: the
    /// transformed weight is positive semidefinite, the augmented pair is
    /// stabilizable, and the scalar control weight is strictly positive.
    pub fn ensure_value_assumptions(&self, tol: &Tolerances) -> Result<()> {
        let mut failures = Vec::new();
        if !linalg::is_positive_semidefinite(&self.s_hat, tol) {
            failures.push(format!(
                "transformed weight indefinite (min eigenvalue {:.3e})",
                linalg::min_symmetric_eigenvalue(&self.s_hat)
            ));
        }
        if !linalg::is_stabilizable(&self.a_hat, &self.b_hat, tol) {
            failures.push("augmented pair not stabilizable".into());
        }
        if self.r_hat() <= tol.scalar_positive || self.r_hat().is_nan() {
            failures.push(format!(
                "control weight r_hat = {:.3e} not positive",
                self.r_hat()
            ));
        }
        if failures.is_empty() {
            Ok(())
        } else {
            Err(Error::AssumptionViolation(failures.join("; ")))
        }
    }
}

/// Augmented dynamics `(A_hat, b_hat)` alone, without cost data.
pub(crate) fn augmented_dynamics(sys: &QwfSystem, omega: usize) -> (DMatrix<f64>, DVector<f64>) {
    let n_j = sys.n_j();
    if omega == 0 {
        return (sys.j().clone(), sys.b_j().clone());
    }
    let n_hat = n_j + omega;
    let mut a_hat = DMatrix::zeros(n_hat, n_hat);
    a_hat.view_mut((0, 0), (n_j, n_j)).copy_from(sys.j());
    a_hat.view_mut((0, n_j), (n_j, 1)).copy_from(sys.b_j());
    for i in 0..omega - 1 {
        a_hat[(n_j + i, n_j + i + 1)] = 1.0;
    }
    let mut b_hat = DVector::zeros(n_hat);
    b_hat[n_hat - 1] = 1.0;
    (a_hat, b_hat)
}

/// The congruence `(x, u) = M (x_hat, u_hat)` mapping augmented
/// coordinates to original ones.
fn congruence_map(sys: &QwfSystem, basis: &ConsistencyBasis) -> DMatrix<f64> {
    let (n_j, n_n, n) = (sys.n_j(), sys.n_n(), sys.dim());
    let omega = basis.omega().omega;
    let cols = n_j + 1 + omega;
    let mut m = DMatrix::zeros(n + 1, cols);
    for i in 0..n_j {
        m[(i, i)] = 1.0;
    }
    m.view_mut((n_j, n_j), (n_n, 1)).copy_from(&(-sys.b_n()));
    m.view_mut((n_j, n_j + 1), (n_n, omega))
        .copy_from(&(-basis.kalman()));
    m[(n, n_j)] = 1.0;
    m
}

/// Transformed weight through the explicit block formula.
fn s_hat_blocks(sys: &QwfSystem, weights: &CostWeights, basis: &ConsistencyBasis) -> DMatrix<f64> {
    let n_j = sys.n_j();
    let omega = basis.omega().omega;
    let k = basis.kalman();
    let (q_j, q_jn, q_n) = (weights.q_j(), weights.q_jn(), weights.q_n());
    let (h_j, h_n, r) = (weights.h_j(), weights.h_n(), weights.r());
    let b_n = sys.b_n();

    let dim = n_j + 1 + omega;
    let mut s = DMatrix::zeros(dim, dim);
    s.view_mut((0, 0), (n_j, n_j)).copy_from(&q_j);

    let top_mid = &h_j - &q_jn * b_n;
    s.view_mut((0, n_j), (n_j, 1)).copy_from(&top_mid);
    s.view_mut((n_j, 0), (1, n_j))
        .copy_from(&top_mid.transpose());

    let top_right = -(&q_jn * k);
    s.view_mut((0, n_j + 1), (n_j, omega)).copy_from(&top_right);
    s.view_mut((n_j + 1, 0), (omega, n_j))
        .copy_from(&top_right.transpose());

    s[(n_j, n_j)] = r + (b_n.transpose() * &q_n * b_n)[(0, 0)] - 2.0 * b_n.dot(&h_n);

    let mid_right = (b_n.transpose() * &q_n - h_n.transpose()) * k;
    s.view_mut((n_j, n_j + 1), (1, omega)).copy_from(&mid_right);
    s.view_mut((n_j + 1, n_j), (omega, 1))
        .copy_from(&mid_right.transpose());

    s.view_mut((n_j + 1, n_j + 1), (omega, omega))
        .copy_from(&(k.transpose() * &q_n * k));
    s
}

/// Build the augmented system and its transformed cost, cross-checking
/// the explicit block formula against the congruence `M' S M`.
pub fn build_augmented(
    sys: &QwfSystem,
    weights: &CostWeights,
    tol: &Tolerances,
) -> Result<AugmentedSystem> {
    sys.ensure_valid(tol)?;
    if weights.s().nrows() != sys.dim() + 1 {
        return Err(Error::dim(format!(
            "weight matrix is {}x{} but the system has dimension {}",
            weights.s().nrows(),
            weights.s().ncols(),
            sys.dim()
        )));
    }
    let basis = sys.consistency_basis(tol)?;
    let omega = basis.omega();
    let (a_hat, b_hat) = augmented_dynamics(sys, omega.omega);

    let m = congruence_map(sys, &basis);
    let s_congruent = m.transpose() * weights.s() * &m;
    let s_explicit = s_hat_blocks(sys, weights, &basis);
    let defect = (&s_congruent - &s_explicit).norm();
    if defect > tol.cross_check * weights.s().norm().max(1.0) {
        return Err(Error::InternalConsistency {
            context: "build_augmented".into(),
            detail: format!("block formula and congruence differ by {defect:.3e}"),
        });
    }
    let s_hat = (&s_congruent + s_congruent.transpose()) * 0.5;

    // x_N = -[0, b_N, K] (x_hat, u_hat)
    let n_j = sys.n_j();
    let mut output_map = DMatrix::zeros(sys.n_n(), a_hat.nrows() + 1);
    output_map
        .view_mut((0, n_j), (sys.n_n(), 1))
        .copy_from(&(-sys.b_n()));
    output_map
        .view_mut((0, n_j + 1), (sys.n_n(), omega.omega))
        .copy_from(&(-basis.kalman()));

    Ok(AugmentedSystem {
        a_hat,
        b_hat,
        output_map,
        s_hat,
        omega,
        n_j,
    })
}

/// The five standing assumptions, each with a reproducible verdict.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    /// Transformed weight positive semidefinite.
    pub a1_psd: bool,
    /// `(J, b_J)` stabilizable.
    pub a2_stabilizable: bool,
    /// Scalar control weight strictly positive.
    pub a3_rhat_positive: bool,
    /// `(A_hat, Q_hat)` observable.
    pub a4_observable: bool,
    /// `rank S_hat = rank Q_hat + 1`.
    pub a5_rank: bool,
    pub diagnostics: AssumptionDiagnostics,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionDiagnostics {
    pub min_eigenvalue_s_hat: f64,
    pub r_hat: f64,
    pub rank_s_hat: usize,
    pub rank_q_hat: usize,
    pub n_hat: usize,
}

impl AssumptionReport {
    /// A1-A3: enough for a finite quadratic value function.
    pub fn value_assumptions_hold(&self) -> bool {
        self.a1_psd && self.a2_stabilizable && self.a3_rhat_positive
    }

    /// A1-A5: value function additionally positive definite.
    pub fn all_hold(&self) -> bool {
        self.value_assumptions_hold() && self.a4_observable && self.a5_rank
    }
}

impl std::fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mark = |b: bool| if b { "ok" } else { "FAIL" };
        writeln!(
            f,
            "  [{}] A1: transformed weight PSD (min eig {:.3e})",
            mark(self.a1_psd),
            self.diagnostics.min_eigenvalue_s_hat
        )?;
        writeln!(
            f,
            "  [{}] A2: differential pair stabilizable",
            mark(self.a2_stabilizable)
        )?;
        writeln!(
            f,
            "  [{}] A3: control weight positive (r_hat = {:.6e})",
            mark(self.a3_rhat_positive),
            self.diagnostics.r_hat
        )?;
        writeln!(
            f,
            "  [{}] A4: augmented pair observable",
            mark(self.a4_observable)
        )?;
        writeln!(
            f,
            "  [{}] A5: rank S_hat = rank Q_hat + 1 ({} vs {} + 1)",
            mark(self.a5_rank),
            self.diagnostics.rank_s_hat,
            self.diagnostics.rank_q_hat
        )
    }
}

/// Evaluate the five assumptions for a built augmented system.
pub fn check_assumptions(
    aug: &AugmentedSystem,
    sys: &QwfSystem,
    tol: &Tolerances,
) -> AssumptionReport {
    let s_hat = aug.s_hat();
    let q_hat = aug.q_hat();
    let min_eig = linalg::min_symmetric_eigenvalue(s_hat);
    let rank_s_hat = linalg::rank(s_hat, tol);
    let rank_q_hat = linalg::rank(&q_hat, tol);
    AssumptionReport {
        a1_psd: linalg::is_positive_semidefinite(s_hat, tol),
        a2_stabilizable: linalg::is_stabilizable(sys.j(), sys.b_j(), tol),
        a3_rhat_positive: aug.r_hat() > tol.scalar_positive,
        a4_observable: linalg::is_observable(aug.a_hat(), &q_hat, tol),
        a5_rank: rank_s_hat == rank_q_hat + 1,
        diagnostics: AssumptionDiagnostics {
            min_eigenvalue_s_hat: min_eig,
            r_hat: aug.r_hat(),
            rank_s_hat,
            rank_q_hat,
            n_hat: aug.n_hat(),
        },
    }
}

/// Stabilizability in the behavioural sense, decided through the Hautus
/// rank condition on `(J, b_J)`. For positive input index the equivalent
/// condition on the augmented pair is evaluated as well and any
/// disagreement is reported as an internal tolerance failure.
pub fn behavioural_stabilizability(sys: &QwfSystem, tol: &Tolerances) -> Result<bool> {
    sys.ensure_valid(tol)?;
    let differential = linalg::is_stabilizable(sys.j(), sys.b_j(), tol);
    let omega = sys.input_index(tol);
    if omega.omega > 0 {
        let (a_hat, b_hat) = augmented_dynamics(sys, omega.omega);
        let augmented = linalg::is_stabilizable(&a_hat, &b_hat, tol);
        if augmented != differential {
            return Err(Error::InternalConsistency {
                context: "behavioural_stabilizability".into(),
                detail: format!(
                    "differential pair says {differential}, augmented pair says {augmented}"
                ),
            });
        }
    }
    Ok(differential)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qwf::QwfSystem;
    use nalgebra::{dmatrix, dvector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn upper_shift(n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| if j == i + 1 { 1.0 } else { 0.0 })
    }

    fn chain3() -> QwfSystem {
        QwfSystem::new(
            DMatrix::zeros(0, 0),
            upper_shift(3),
            DVector::zeros(0),
            dvector![0.0, 1.0, 0.0],
            &tol(),
        )
        .unwrap()
    }

    #[test]
    fn chain_system_augments_to_scalar_integrator() {
        let sys = chain3();
        let aug = build_augmented(&sys, &CostWeights::identity(0, 3), &tol()).unwrap();
        assert_eq!(aug.n_hat(), 1);
        assert_eq!(aug.a_hat(), &dmatrix![0.0]);
        assert_eq!(aug.b_hat(), &dvector![1.0]);
        assert_eq!(aug.s_hat(), &dmatrix![2.0, 0.0; 0.0, 1.0]);
        assert_eq!(aug.r_hat(), 1.0);
        assert_eq!(aug.h_hat(), dvector![0.0]);
    }

    #[test]
    fn chain_assumptions_all_hold() {
        let sys = chain3();
        let aug = build_augmented(&sys, &CostWeights::identity(0, 3), &tol()).unwrap();
        let report = check_assumptions(&aug, &sys, &tol());
        assert!(report.all_hold(), "{report}");
        assert_eq!(report.diagnostics.rank_s_hat, 2);
        assert_eq!(report.diagnostics.rank_q_hat, 1);
    }

    #[test]
    fn two_step_chain_has_the_block_and_shift_structure() {
        let t = tol();
        // n_J = 1 with a length-2 derivative chain: the first row carries
        // J and b_J, the chain rows shift, the input enters at the end.
        let sys = QwfSystem::new(
            dmatrix![-0.5],
            upper_shift(3),
            dvector![2.0],
            dvector![0.0, 0.0, 1.0],
            &t,
        )
        .unwrap();
        assert_eq!(sys.input_index(&t).omega, 2);
        let aug = build_augmented(&sys, &CostWeights::identity(1, 3), &t).unwrap();
        assert_eq!(aug.n_hat(), 3);
        assert_eq!(
            aug.a_hat(),
            &dmatrix![-0.5, 2.0, 0.0; 0.0, 0.0, 1.0; 0.0, 0.0, 0.0]
        );
        assert_eq!(aug.b_hat(), &dvector![0.0, 0.0, 1.0]);
        // x_N = -[0, b_N, K](x_hat, u_hat): K = [N b_N, N^2 b_N] = [e2, e1].
        assert_eq!(
            aug.output_map(),
            &dmatrix![0.0, 0.0, 0.0, -1.0;
                      0.0, 0.0, -1.0, 0.0;
                      0.0, -1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn omega_zero_reduction_of_the_weight() {
        let t = tol();
        let sys = QwfSystem::new(
            dmatrix![-1.0],
            DMatrix::zeros(1, 1),
            dvector![1.0],
            dvector![1.0],
            &t,
        )
        .unwrap();
        let aug = build_augmented(&sys, &CostWeights::identity(1, 1), &t).unwrap();
        assert_eq!(aug.n_hat(), 1);
        assert_eq!(aug.a_hat(), sys.j());
        assert_eq!(aug.b_hat(), sys.b_j());
        // Q_hat = Q_J = 1, h_hat = h_J - Q_JN b_N = 0, r_hat = r + Q_N = 2.
        assert_eq!(aug.s_hat(), &dmatrix![1.0, 0.0; 0.0, 2.0]);
    }

    #[test]
    fn unstable_uncontrollable_system_fails_a2() {
        let t = tol();
        let sys = QwfSystem::new(
            dmatrix![1.0],
            DMatrix::zeros(1, 1),
            dvector![0.0],
            dvector![1.0],
            &t,
        )
        .unwrap();
        let aug = build_augmented(&sys, &CostWeights::identity(1, 1), &t).unwrap();
        let report = check_assumptions(&aug, &sys, &t);
        assert!(!report.a2_stabilizable);
        assert!(aug.ensure_value_assumptions(&t).is_err());
    }

    #[test]
    fn zero_control_weight_fails_a3() {
        let t = tol();
        let sys = QwfSystem::new(
            dmatrix![-1.0],
            DMatrix::zeros(1, 1),
            dvector![1.0],
            dvector![1.0],
            &t,
        )
        .unwrap();
        // With omega = 0: r_hat = r + b_N' Q_N b_N - 2 h_N' b_N.
        // Choose r = 1, Q_N = 1, h_N = 1 so r_hat = 1 + 1 - 2 = 0.
        let mut s = DMatrix::<f64>::identity(3, 3);
        s[(1, 2)] = 1.0;
        s[(2, 1)] = 1.0;
        let weights = CostWeights::new(s, 1, 1).unwrap();
        let aug = build_augmented(&sys, &weights, &t).unwrap();
        assert!(aug.r_hat().abs() < 1e-14);
        let report = check_assumptions(&aug, &sys, &t);
        assert!(!report.a3_rhat_positive);
    }

    #[test]
    fn behavioural_stabilizability_cases() {
        let t = tol();
        // No differential part: vacuously stabilizable.
        assert!(behavioural_stabilizability(&chain3(), &t).unwrap());

        let make = |b: DVector<f64>| {
            QwfSystem::new(
                dmatrix![-1.0, 0.0; 0.0, 2.0],
                upper_shift(2),
                b,
                dvector![0.0, 1.0],
                &t,
            )
            .unwrap()
        };
        assert!(behavioural_stabilizability(&make(dvector![0.0, 1.0]), &t).unwrap());
        assert!(!behavioural_stabilizability(&make(dvector![1.0, 0.0]), &t).unwrap());
    }

    #[test]
    fn r_hat_is_the_leading_chain_weight() {
        let t = tol();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n_n = rng.random_range(2..=5);
            let sys = QwfSystem::new(
                DMatrix::zeros(0, 0),
                upper_shift(n_n),
                DVector::zeros(0),
                DVector::from_fn(n_n, |_, _| rng.random_range(-1.0..1.0)),
                &t,
            )
            .unwrap();
            let omega = sys.input_index(&t).omega;
            if omega == 0 {
                continue;
            }
            let g = DMatrix::from_fn(n_n + 1, n_n + 1, |_, _| rng.random_range(-1.0..1.0));
            let weights = CostWeights::new(&g.transpose() * &g, 0, n_n).unwrap();
            let aug = build_augmented(&sys, &weights, &t).unwrap();
            let v = crate::linalg::matrix_power(sys.nilpotent(), omega) * sys.b_n();
            let expect = (v.transpose() * weights.q_n() * &v)[(0, 0)];
            assert!((aug.r_hat() - expect).abs() <= 1e-12 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn psd_weights_stay_psd_after_transformation() {
        let t = tol();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let n_j = rng.random_range(0..=2);
            let n_n = rng.random_range(1..=4);
            let n = n_j + n_n;
            let sys = QwfSystem::new(
                DMatrix::from_fn(n_j, n_j, |_, _| rng.random_range(-1.0..1.0)),
                upper_shift(n_n),
                DVector::from_fn(n_j, |_, _| rng.random_range(-1.0..1.0)),
                DVector::from_fn(n_n, |_, _| rng.random_range(-1.0..1.0)),
                &t,
            )
            .unwrap();
            let g = DMatrix::from_fn(n + 1, n + 1, |_, _| rng.random_range(-1.0..1.0));
            let weights = CostWeights::new(&g.transpose() * &g, n_j, n_n).unwrap();
            let aug = build_augmented(&sys, &weights, &t).unwrap();
            assert!(linalg::is_positive_semidefinite(aug.s_hat(), &t));
        }
    }
}
