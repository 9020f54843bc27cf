//! Small dense linear-algebra helpers: numerical rank, pseudoinverse,
//! Hautus rank tests over the complex field, and a Lyapunov solver.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tol::Tolerances;

/// Singular values of `m`, largest first.
pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DVector::zeros(0);
    }
    m.clone().svd(false, false).singular_values
}

/// Numerical rank: singular values below
/// `tol.rank * sigma_max * max(rows, cols)` count as zero.
pub fn rank(m: &DMatrix<f64>, tol: &Tolerances) -> usize {
    let sv = singular_values(m);
    if sv.is_empty() {
        return 0;
    }
    let sigma_max = sv.max();
    let cutoff = tol.rank * sigma_max * m.nrows().max(m.ncols()) as f64;
    sv.iter().filter(|&&s| s > cutoff).count()
}

/// Moore-Penrose pseudoinverse with the shared rank cutoff.
pub fn pseudo_inverse(m: &DMatrix<f64>, tol: &Tolerances) -> DMatrix<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DMatrix::zeros(m.ncols(), m.nrows());
    }
    let svd = m.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    let cutoff = tol.rank * sigma_max * m.nrows().max(m.ncols()) as f64;
    let u = svd.u.as_ref().expect("svd with u");
    let vt = svd.v_t.as_ref().expect("svd with v_t");
    let mut inv_sigma = DMatrix::zeros(vt.nrows(), u.ncols());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            inv_sigma[(i, i)] = 1.0 / s;
        }
    }
    vt.transpose() * inv_sigma * u.transpose()
}

/// Check that `left * m = I` within `tol_abs`; returns the defect norm.
pub fn left_inverse_defect(left: &DMatrix<f64>, m: &DMatrix<f64>) -> f64 {
    let k = m.ncols();
    (left * m - DMatrix::<f64>::identity(k, k)).norm()
}

/// Real embedding of a complex matrix: `[[Re, -Im], [Im, Re]]`.
///
/// Its singular values are those of the complex matrix, each doubled, so
/// `rank_C(M) = rank_R(embedding) / 2`. This keeps every rank decision on
/// the one real SVD code path.
fn complex_rank(re: &DMatrix<f64>, im: &DMatrix<f64>, tol: &Tolerances) -> usize {
    let (r, c) = re.shape();
    let mut embed = DMatrix::zeros(2 * r, 2 * c);
    embed.view_mut((0, 0), (r, c)).copy_from(re);
    embed.view_mut((r, c), (r, c)).copy_from(re);
    embed.view_mut((0, c), (r, c)).copy_from(&(-im));
    embed.view_mut((r, 0), (r, c)).copy_from(im);
    let sv = singular_values(&embed);
    if sv.is_empty() {
        return 0;
    }
    let sigma_max = sv.max();
    // Rank cutoff against the logical (not embedded) dimensions.
    let cutoff = tol.rank * sigma_max * r.max(c) as f64;
    sv.iter().filter(|&&s| s > cutoff).count() / 2
}

/// Rank over C of `[lambda I - A, B]` for the Hautus controllability test.
pub fn hautus_rank_control(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    lambda: Complex<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let m = b.ncols();
    let mut re = DMatrix::zeros(n, n + m);
    let mut im = DMatrix::zeros(n, n + m);
    for i in 0..n {
        for j in 0..n {
            re[(i, j)] = -a[(i, j)];
        }
        re[(i, i)] += lambda.re;
        im[(i, i)] = lambda.im;
    }
    re.view_mut((0, n), (n, m)).copy_from(b);
    (re, im)
}

/// Hautus stabilizability of the pair `(a, b)`: full rank of
/// `[lambda I - a, b]` at every eigenvalue of `a` in the closed right
/// half-plane (boundary widened by `tol.hautus_boundary`).
pub fn is_stabilizable(a: &DMatrix<f64>, b: &DVector<f64>, tol: &Tolerances) -> bool {
    let n = a.nrows();
    if n == 0 {
        return true;
    }
    let b_mat = DMatrix::from_column_slice(n, 1, b.as_slice());
    for lambda in a.complex_eigenvalues().iter() {
        if lambda.re < -tol.hautus_boundary {
            continue;
        }
        let (re, im) = hautus_rank_control(a, &b_mat, *lambda);
        if complex_rank(&re, &im, tol) < n {
            return false;
        }
    }
    true
}

/// Hautus observability of the pair `(a, c)`: full rank of
/// `[lambda I - a; c]` at every eigenvalue of `a`.
pub fn is_observable(a: &DMatrix<f64>, c: &DMatrix<f64>, tol: &Tolerances) -> bool {
    let n = a.nrows();
    if n == 0 {
        return true;
    }
    let p = c.nrows();
    for lambda in a.complex_eigenvalues().iter() {
        let mut re = DMatrix::zeros(n + p, n);
        let mut im = DMatrix::zeros(n + p, n);
        for i in 0..n {
            for j in 0..n {
                re[(i, j)] = -a[(i, j)];
            }
            re[(i, i)] += lambda.re;
            im[(i, i)] = lambda.im;
        }
        re.view_mut((n, 0), (p, n)).copy_from(c);
        if complex_rank(&re, &im, tol) < n {
            return false;
        }
    }
    true
}

/// Eigenvalues of the symmetrized part of `m`, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    if m.nrows() == 0 {
        return DVector::zeros(0);
    }
    let sym = (m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    DVector::from_vec(ev)
}

/// Smallest eigenvalue of the symmetrized part of `m` (0 for empty input).
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let ev = symmetric_eigenvalues(m);
    if ev.is_empty() {
        0.0
    } else {
        ev[0]
    }
}

/// Is the symmetrized part of `m` positive semidefinite within the
/// scale-aware eigenvalue floor `-tol.psd * |m|`?
pub fn is_positive_semidefinite(m: &DMatrix<f64>, tol: &Tolerances) -> bool {
    let ev = symmetric_eigenvalues(m);
    if ev.is_empty() {
        return true;
    }
    let scale = ev.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()));
    ev[0] >= -tol.psd * scale.max(1e-300)
}

/// Largest real part over the spectrum of `m` (-inf for empty input).
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Solve the Lyapunov equation `A' X + X A = -W` for symmetric `W` through
/// the Kronecker linear system. Intended for the small matrices of this
/// crate; fails when `A` has eigenvalues summing to zero.
pub fn solve_lyapunov(a: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || w.shape() != (n, n) {
        return Err(Error::dim("lyapunov operands must be square of equal size"));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let at = a.transpose();
    let eye = DMatrix::<f64>::identity(n, n);
    let lhs = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = DVector::from_column_slice((-w).as_slice());
    let lu = lhs.lu();
    let x = lu.solve(&rhs).ok_or_else(|| Error::InternalConsistency {
        context: "lyapunov solve".into(),
        detail: "Kronecker system is singular".into(),
    })?;
    let x = DMatrix::from_column_slice(n, n, x.as_slice());
    Ok((&x + x.transpose()) * 0.5)
}

/// `m^k` by repeated multiplication.
pub fn matrix_power(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let n = m.nrows();
    let mut acc = DMatrix::<f64>::identity(n, n);
    for _ in 0..k {
        acc = &acc * m;
    }
    acc
}
