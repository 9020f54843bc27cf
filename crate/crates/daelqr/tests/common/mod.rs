//! Shared oracles and generators for the integration suites.
//!
//! Everything here is deliberately independent of the library's solution
//! paths: the matrix exponential is its own Pade implementation, the
//! dynamic-programming oracle discretises exactly and recurses backwards,
//! and the algebraic-equation enumeration goes through the Hamiltonian
//! eigenstructure.

#![allow(dead_code)]

use daelqr::prelude::*;
use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn upper_shift(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if j == i + 1 { 1.0 } else { 0.0 })
}

/// The golden three-dimensional derivative chain with identity weights.
pub fn chain3(tol: &Tolerances) -> (QwfSystem, CostWeights) {
    let sys = QwfSystem::new(
        DMatrix::zeros(0, 0),
        upper_shift(3),
        DVector::zeros(0),
        nalgebra::dvector![0.0, 1.0, 0.0],
        tol,
    )
    .unwrap();
    // The defining formula gives input index 1 here (N b_N = e1,
    // N^2 b_N = 0); the suite pins that value.
    assert_eq!(sys.input_index(tol).omega, 1);
    (sys, CostWeights::identity(0, 3))
}

/// Closed form of the golden Riccati flow `P' = 2 - P^2`, `P(0) = 0`.
pub fn chain3_p(t: f64) -> f64 {
    let s = 2.0f64.sqrt();
    s * ((2.0 * s * t).exp() - 1.0) / ((2.0 * s * t).exp() + 1.0)
}

/// Hermite fit of `scale * exp(rate t)` on `[0, t_end]`.
pub fn exp_fit(scale: f64, rate: f64, t_end: f64) -> ControlSignal {
    let n = ((t_end / 0.05).ceil() as usize).max(2);
    let nodes: Vec<f64> = (0..=n).map(|i| t_end * i as f64 / n as f64).collect();
    let stacks: Vec<Vec<f64>> = nodes
        .iter()
        .map(|&t| {
            (0..=4)
                .map(|j| scale * rate.powi(j) * (rate * t).exp())
                .collect()
        })
        .collect();
    ControlSignal::hermite_interpolant(&nodes, &stacks).unwrap()
}

/// Matrix exponential by Pade(6) with scaling and squaring.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let norm = a.norm();
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a / 2f64.powi(s);
    // Pade(6) coefficients for exp: c_k = (12-k)! 6! / (12! k! (6-k)!).
    let c = [
        1.0,
        0.5,
        5.0 / 44.0,
        1.0 / 66.0,
        1.0 / 792.0,
        1.0 / 15840.0,
        1.0 / 665280.0,
    ];
    let eye = DMatrix::<f64>::identity(n, n);
    let mut power = eye.clone();
    let mut num = eye.clone() * c[0];
    let mut den = eye * c[0];
    for (k, &ck) in c.iter().enumerate().skip(1) {
        power = &power * &scaled;
        num += &power * ck;
        if k % 2 == 0 {
            den += &power * ck;
        } else {
            den -= &power * ck;
        }
    }
    let mut result = den
        .lu()
        .solve(&num)
        .expect("pade denominator is invertible");
    for _ in 0..s {
        result = &result * &result;
    }
    result
}

/// Composite Simpson integral of samples on a uniform grid with an even
/// number of intervals.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    assert!(
        values.len() >= 3 && values.len() % 2 == 1,
        "need even interval count"
    );
    let mut acc = values[0] + values[values.len() - 1];
    for (i, v) in values.iter().enumerate().skip(1).take(values.len() - 2) {
        acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * h / 3.0
}

/// Quadrature of the running cost along a trajectory (Simpson).
pub fn quadrature_cost(weights: &CostWeights, traj: &Trajectory) -> f64 {
    let grid = traj.grid();
    let h = grid[1] - grid[0];
    let samples: Vec<f64> = (0..grid.len())
        .map(|i| weights.stage_cost(&traj.states()[i], traj.inputs()[i]))
        .collect();
    simpson(&samples, h)
}

/// A reproducible random system with positive semidefinite weights and a
/// strictly positive transformed control weight.
pub struct SystemSample {
    pub sys: QwfSystem,
    pub weights: CostWeights,
}

pub fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let qr = g.qr();
    qr.q()
}

/// Random nilpotent matrix: strictly upper triangular conjugated by an
/// orthogonal basis change (exactly nilpotent up to rounding).
fn random_nilpotent(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let mut upper = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            upper[(i, j)] = rng.random_range(-1.0..1.0);
        }
    }
    let q = random_orthogonal(rng, n);
    &q * upper * q.transpose()
}

/// Draw a system with `n_J <= 4`, `n_N in 1..=5`. With
/// `force_stabilizable` the differential block is shifted until strictly
/// stable, so the value assumptions can be guaranteed by construction.
pub fn random_system(
    rng: &mut ChaCha8Rng,
    tol: &Tolerances,
    force_stabilizable: bool,
) -> SystemSample {
    loop {
        let n_j = rng.random_range(0..=4);
        let n_n = rng.random_range(1..=5);
        let n = n_j + n_n;
        let mut j = DMatrix::from_fn(n_j, n_j, |_, _| rng.random_range(-1.0..1.0));
        if force_stabilizable && n_j > 0 {
            let abscissa = j
                .complex_eigenvalues()
                .iter()
                .map(|l| l.re)
                .fold(f64::NEG_INFINITY, f64::max);
            let margin: f64 = rng.random_range(0.1..0.8);
            for i in 0..n_j {
                j[(i, i)] -= abscissa + margin;
            }
        }
        let n_mat = random_nilpotent(rng, n_n);
        let b_j = DVector::from_fn(n_j, |_, _| rng.random_range(-1.0..1.0));
        let b_n = DVector::from_fn(n_n, |_, _| rng.random_range(-1.0..1.0));
        let sys = match QwfSystem::new(j, n_mat, b_j, b_n, tol) {
            Ok(s) => s,
            Err(_) => continue,
        };
        if sys.ensure_valid(tol).is_err() {
            continue;
        }
        let omega = sys.input_index(tol).omega;
        // Keep the leading chain vector well scaled so forcing the control
        // weight positive stays well conditioned.
        let lead = if omega >= 1 {
            let mut v = sys.b_n().clone();
            for _ in 0..omega {
                v = sys.nilpotent() * v;
            }
            v.norm()
        } else {
            1.0
        };
        if lead < 0.05 {
            continue;
        }

        let g = DMatrix::from_fn(n + 1, n + 1, |_, _| rng.random_range(-1.0..1.0));
        let s = g.transpose() * &g / (n + 1) as f64;
        let weights = CostWeights::new(s, n_j, n_n).unwrap();
        let aug = match build_augmented(&sys, &weights, tol) {
            Ok(a) => a,
            Err(_) => continue,
        };
        let target = 0.05;
        let weights = if aug.r_hat() < target {
            let mut s = weights.s().clone();
            if omega == 0 {
                s[(n, n)] += target - aug.r_hat();
            } else {
                let mut v = sys.b_n().clone();
                for _ in 0..omega {
                    v = sys.nilpotent() * v;
                }
                let c = (target - aug.r_hat()) / v.norm().powi(4);
                let bump = &v * v.transpose() * c;
                let mut block = s.view_mut((sys.n_j(), sys.n_j()), (n_n, n_n)).into_owned();
                block += bump;
                s.view_mut((sys.n_j(), sys.n_j()), (n_n, n_n))
                    .copy_from(&block);
            }
            CostWeights::new(s, sys.n_j(), n_n).unwrap()
        } else {
            weights
        };
        return SystemSample { sys, weights };
    }
}

/// Consistent initial value `F z` for random parameters `z`.
pub fn random_consistent_x0(
    rng: &mut ChaCha8Rng,
    sys: &QwfSystem,
    tol: &Tolerances,
) -> DVector<f64> {
    let basis = sys.consistency_basis(tol).unwrap();
    let z = DVector::from_fn(basis.dim(), |_, _| rng.random_range(-1.0..1.0));
    basis.f() * z
}

/// Exact zero-order-hold discretisation of the augmented problem over a
/// step `tau`: dynamics `(A_d, b_d)` and stage cost `S_d` through the
/// block-exponential construction.
pub struct ZohDiscretisation {
    pub a_d: DMatrix<f64>,
    pub b_d: DVector<f64>,
    pub q_d: DMatrix<f64>,
    pub m_d: DVector<f64>,
    pub r_d: f64,
}

pub fn discretise_zoh(aug: &AugmentedSystem, tau: f64) -> ZohDiscretisation {
    let n = aug.n_hat();
    let m = n + 1;
    // C = [A b; 0 0]: exp(C tau) = [A_d b_d; 0 1].
    let mut c = DMatrix::zeros(m, m);
    c.view_mut((0, 0), (n, n)).copy_from(aug.a_hat());
    c.view_mut((0, n), (n, 1)).copy_from(aug.b_hat());
    // Z = [-C' S; 0 C]: exp(Z tau) = [.., F2' S_d; 0, F2], S_d the exact
    // integral of the stage cost under a held input.
    let mut z = DMatrix::zeros(2 * m, 2 * m);
    z.view_mut((0, 0), (m, m)).copy_from(&(-c.transpose()));
    z.view_mut((0, m), (m, m)).copy_from(aug.s_hat());
    z.view_mut((m, m), (m, m)).copy_from(&c);
    let e = expm(&(z * tau));
    let f2 = e.view((m, m), (m, m)).into_owned();
    let g12 = e.view((0, m), (m, m)).into_owned();
    let s_d = f2.transpose() * g12;
    let s_d = (&s_d + s_d.transpose()) * 0.5;

    ZohDiscretisation {
        a_d: f2.view((0, 0), (n, n)).into_owned(),
        b_d: f2.view((0, n), (n, 1)).column(0).into_owned(),
        q_d: s_d.view((0, 0), (n, n)).into_owned(),
        m_d: s_d.view((0, n), (n, 1)).column(0).into_owned(),
        r_d: s_d[(n, n)],
    }
}

/// Backward dynamic-programming recursion on the discretised problem:
/// an independent route to the optimal value.
pub fn dp_value_oracle(aug: &AugmentedSystem, z0: &DVector<f64>, t_final: f64, tau: f64) -> f64 {
    let steps = (t_final / tau).round() as usize;
    let d = discretise_zoh(aug, tau);
    let n = aug.n_hat();
    if n == 0 {
        return 0.0;
    }
    let mut p = DMatrix::<f64>::zeros(n, n);
    let mut pa = DMatrix::<f64>::zeros(n, n);
    let mut apa = DMatrix::<f64>::zeros(n, n);
    let mut pb = DVector::<f64>::zeros(n);
    let mut lin = DVector::<f64>::zeros(n);
    for _ in 0..steps {
        pa.gemm(1.0, &p, &d.a_d, 0.0);
        apa.gemm_tr(1.0, &d.a_d, &pa, 0.0);
        pb.gemv(1.0, &p, &d.b_d, 0.0);
        lin.gemv_tr(1.0, &d.a_d, &pb, 0.0);
        lin += &d.m_d;
        let denom = d.r_d + d.b_d.dot(&pb);
        p.copy_from(&d.q_d);
        p += &apa;
        p.ger(-1.0 / denom, &lin, &lin, 1.0);
        for i in 0..n {
            for jj in 0..i {
                let avg = 0.5 * (p[(i, jj)] + p[(jj, i)]);
                p[(i, jj)] = avg;
                p[(jj, i)] = avg;
            }
        }
    }
    (z0.transpose() * p * z0)[(0, 0)]
}

/// Cost of a feasibly perturbed input: the optimal and perturbed
/// augmented states are integrated jointly (the perturbation enters
/// through the free top derivative, which keeps the pair feasible for the
/// same initial value), the perturbed solution is reconstructed, and its
/// running cost integrated by Simpson quadrature.
#[allow(clippy::too_many_arguments)]
pub fn perturbed_cost(
    sys: &QwfSystem,
    weights: &CostWeights,
    aug: &AugmentedSystem,
    sol: &RiccatiSolution,
    x0: &DVector<f64>,
    t_final: f64,
    tol: &Tolerances,
    v: impl Fn(f64) -> f64,
) -> f64 {
    let n_hat = aug.n_hat();
    let basis = sys.consistency_basis(tol).unwrap();
    let z0 = basis.f_dagger() * x0;
    let mut y0 = DVector::zeros(2 * n_hat);
    y0.rows_mut(0, n_hat).copy_from(&z0);
    y0.rows_mut(n_hat, n_hat).copy_from(&z0);

    let gain = |t: f64| {
        let p = sol.eval(t_final - t).unwrap();
        (p * aug.b_hat() + aug.h_hat()).transpose() / aug.r_hat()
    };
    let grid = uniform_grid(t_final, 1024);
    let opts = daelqr::ode::OdeOptions::with_tolerances(1e-9, 1e-12);
    let path = daelqr::ode::integrate_to_grid(
        |t, y: &DVector<f64>| {
            let xs = y.rows(0, n_hat).into_owned();
            let xp = y.rows(n_hat, n_hat).into_owned();
            let u_hat_star = -(&gain(t) * &xs)[0];
            let mut dy = DVector::zeros(2 * n_hat);
            dy.rows_mut(0, n_hat)
                .copy_from(&(aug.a_hat() * &xs + aug.b_hat() * u_hat_star));
            dy.rows_mut(n_hat, n_hat)
                .copy_from(&(aug.a_hat() * &xp + aug.b_hat() * (u_hat_star + v(t))));
            dy
        },
        &grid,
        y0,
        &opts,
    )
    .unwrap();

    let h = grid[1] - grid[0];
    let samples: Vec<f64> = grid
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let xs = path[i].rows(0, n_hat).into_owned();
            let xp = path[i].rows(n_hat, n_hat).into_owned();
            let u_hat_p = -(&gain(t) * &xs)[0] + v(t);
            let x_full = aug.full_state(&xp, u_hat_p);
            let u_p = if aug.omega().omega >= 1 {
                xp[sys.n_j()]
            } else {
                u_hat_p
            };
            weights.stage_cost(&x_full, u_p)
        })
        .collect();
    simpson(&samples, h)
}

/// All real symmetric solutions of the stationary Riccati equation for
/// small augmented problems, through the Hamiltonian eigenstructure
/// (dimension 1 by the quadratic formula, dimension 2 by invariant
/// subspaces).
pub fn enumerate_are_solutions(aug: &AugmentedSystem) -> Vec<DMatrix<f64>> {
    let n = aug.n_hat();
    let a = aug.a_hat();
    let b = aug.b_hat();
    let q = aug.q_hat();
    let h = aug.h_hat();
    let r = aug.r_hat();
    match n {
        1 => {
            // -b^2/r P^2 + 2(a - b h / r) P + q - h^2/r = 0.
            let (a, b, q, h) = (a[(0, 0)], b[0], q[(0, 0)], h[0]);
            let c2 = -b * b / r;
            let c1 = 2.0 * (a - b * h / r);
            let c0 = q - h * h / r;
            if c2.abs() < 1e-14 {
                if c1.abs() < 1e-14 {
                    return vec![];
                }
                return vec![DMatrix::from_element(1, 1, -c0 / c1)];
            }
            let disc = c1 * c1 - 4.0 * c2 * c0;
            if disc < 0.0 {
                return vec![];
            }
            let root = disc.sqrt();
            vec![
                DMatrix::from_element(1, 1, (-c1 + root) / (2.0 * c2)),
                DMatrix::from_element(1, 1, (-c1 - root) / (2.0 * c2)),
            ]
        }
        2 => {
            // Remove the cross term, then pair Hamiltonian eigenvectors.
            let a_t = a - b * h.transpose() / r;
            let q_t = &q - &h * h.transpose() / r;
            let r_t = b * b.transpose() / r;
            let mut ham = DMatrix::zeros(4, 4);
            ham.view_mut((0, 0), (2, 2)).copy_from(&a_t);
            ham.view_mut((0, 2), (2, 2)).copy_from(&(-&r_t));
            ham.view_mut((2, 0), (2, 2)).copy_from(&(-&q_t));
            ham.view_mut((2, 2), (2, 2)).copy_from(&(-a_t.transpose()));

            let eigs = ham.complex_eigenvalues();
            let vectors: Vec<DVector<Complex<f64>>> =
                eigs.iter().map(|&l| inverse_iteration(&ham, l)).collect();

            let mut out: Vec<DMatrix<f64>> = Vec::new();
            for i in 0..4 {
                for j in i + 1..4 {
                    // The subspace must be conjugation-closed for a real P.
                    let li = eigs[i];
                    let lj = eigs[j];
                    let both_real = li.im.abs() < 1e-9 && lj.im.abs() < 1e-9;
                    let conj_pair = (li - lj.conj()).norm() < 1e-7;
                    if !(both_real || conj_pair) {
                        continue;
                    }
                    let (vi, vj) = (&vectors[i], &vectors[j]);
                    let mut x = DMatrix::<Complex<f64>>::zeros(2, 2);
                    let mut y = DMatrix::<Complex<f64>>::zeros(2, 2);
                    for rix in 0..2 {
                        x[(rix, 0)] = vi[rix];
                        x[(rix, 1)] = vj[rix];
                        y[(rix, 0)] = vi[rix + 2];
                        y[(rix, 1)] = vj[rix + 2];
                    }
                    let Some(x_inv) = x.try_inverse() else {
                        continue;
                    };
                    let p_c = y * x_inv;
                    let p_re = DMatrix::from_fn(2, 2, |ri, ci| p_c[(ri, ci)].re);
                    let imag_norm: f64 = p_c.iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
                    if imag_norm > 1e-6 * (1.0 + p_re.norm()) {
                        continue;
                    }
                    let sym = (&p_re - p_re.transpose()).norm();
                    if sym > 1e-6 * (1.0 + p_re.norm()) {
                        continue;
                    }
                    let p_sym = (&p_re + p_re.transpose()) * 0.5;
                    if are_residual(aug, &p_sym) > 1e-6 * (1.0 + p_sym.norm_squared()) {
                        continue;
                    }
                    if out
                        .iter()
                        .all(|other| (other - &p_sym).norm() > 1e-6 * (1.0 + p_sym.norm()))
                    {
                        out.push(p_sym);
                    }
                }
            }
            out
        }
        _ => vec![],
    }
}

/// One eigenvector of a real matrix for a known eigenvalue, by shifted
/// inverse iteration in complex arithmetic.
fn inverse_iteration(m: &DMatrix<f64>, lambda: Complex<f64>) -> DVector<Complex<f64>> {
    let n = m.nrows();
    let shift = lambda + Complex::new(1e-10, 1e-10);
    let mc = DMatrix::from_fn(n, n, |i, j| {
        Complex::new(m[(i, j)], 0.0)
            - if i == j {
                shift
            } else {
                Complex::new(0.0, 0.0)
            }
    });
    let lu = mc.lu();
    let mut v = DVector::from_fn(n, |i, _| {
        Complex::new(1.0 + i as f64 * 0.3, 0.7 - i as f64 * 0.2)
    });
    v /= Complex::new(v.norm(), 0.0);
    for _ in 0..3 {
        if let Some(next) = lu.solve(&v) {
            let norm = next.norm();
            if norm.is_finite() && norm > 0.0 {
                v = next / Complex::new(norm, 0.0);
            }
        }
    }
    v
}
