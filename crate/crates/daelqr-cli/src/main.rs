//! Command-line driver: analyze system files, solve the optimal control
//! problem, dump Riccati flows, synthesize feedback laws and simulate.
//!
//! Exit codes: 0 success, 2 parse/usage error, 3 validation failure,
//! 4 inconsistent initial value, 5 assumption failure, 1 anything else.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde_json::json;

use daelqr::prelude::*;
use daelqr::riccati::PInfinity;
use daelqr::{io as dio, linalg};

#[derive(Parser)]
#[command(
    name = "daelqr",
    version,
    about = "Linear-quadratic optimal control for differential-algebraic systems",
    long_about = "Analysis and optimal control of single-input systems in \
                  quasi-Weierstrass form. The DAELQR_TOL environment variable \
                  rescales the numerical tolerance bundle (default 1e-10)."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a system file and report its structure and assumptions.
    Analyze {
        /// System description (JSON).
        path: PathBuf,
        /// Emit one JSON document instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Solve the optimal control problem and export the trajectory.
    Solve {
        path: PathBuf,
        #[command(flatten)]
        x0: X0Arg,
        /// Horizon: a positive number or "inf".
        #[arg(long)]
        horizon: String,
        /// Output grid step (default: window/500).
        #[arg(long)]
        dt: Option<f64>,
        /// Simulation window for infinite horizons (default 5).
        #[arg(long, default_value_t = 5.0)]
        window: f64,
        /// Trajectory CSV destination ("-" for stdout).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Summary JSON destination (default: stdout).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Integrate the Riccati flow and dump it, or report its limit.
    Riccati {
        path: PathBuf,
        /// Horizon: a positive number or "inf".
        #[arg(long)]
        horizon: String,
        /// CSV destination for the sampled flow ("-" for stdout).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Synthesize an optimal state feedback and certify regularity.
    Feedback {
        path: PathBuf,
        /// Scaling of the feedback family; must be nonzero.
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        alpha: f64,
        /// Replace the Moore-Penrose left inverse by
        /// pinv(G) + beta * (last row) x (kernel direction); requires the
        /// left kernel of G' to be one-dimensional.
        #[arg(long, allow_negative_numbers = true)]
        beta_ginv: Option<f64>,
        /// Simulate the closed loop and write the trajectory CSV here.
        #[arg(long)]
        simulate: Option<PathBuf>,
        #[command(flatten)]
        x0: X0Arg,
        /// Simulation window (with --simulate).
        #[arg(long, default_value_t = 5.0)]
        window: f64,
        /// Simulation grid step (default: window/500).
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Simulate the system with the input signal from the file.
    Simulate {
        path: PathBuf,
        #[command(flatten)]
        x0: X0Arg,
        /// End of the simulation window.
        #[arg(long, default_value_t = 5.0)]
        t_end: f64,
        /// Grid step (default: t_end/500).
        #[arg(long)]
        dt: Option<f64>,
        /// Trajectory CSV destination ("-" for stdout).
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct X0Arg {
    /// Initial value as a comma-separated list (falls back to the file's
    /// "x0" field).
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Parse(_)
        | Error::InvalidHorizon(_)
        | Error::Io(_)
        | Error::InvalidGrid(_)
        | Error::AlphaZero
        | Error::OmegaZeroFeedback => 2,
        Error::DimensionMismatch(_)
        | Error::InvalidSystem(_)
        | Error::NotNilpotent { .. }
        | Error::InvalidSignal(_) => 3,
        Error::InconsistentInitialValue { .. } | Error::InconsistentInitialPair { .. } => 4,
        Error::AssumptionViolation(_) => 5,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<()> {
    let tol = Tolerances::from_env();
    match cli.command {
        Command::Analyze { path, json } => analyze(&path, json, &tol),
        Command::Solve {
            path,
            x0,
            horizon,
            dt,
            window,
            output,
            summary,
        } => solve(&path, x0, &horizon, dt, window, output, summary, &tol),
        Command::Riccati {
            path,
            horizon,
            output,
        } => riccati_cmd(&path, &horizon, output, &tol),
        Command::Feedback {
            path,
            alpha,
            beta_ginv,
            simulate,
            x0,
            window,
            dt,
        } => feedback_cmd(&path, alpha, beta_ginv, simulate, x0, window, dt, &tol),
        Command::Simulate {
            path,
            x0,
            t_end,
            dt,
            output,
        } => simulate_cmd(&path, x0, t_end, dt, output, &tol),
    }
}

fn load(path: &PathBuf, tol: &Tolerances) -> Result<LoadedSystem> {
    let loaded = SystemFile::from_path(path)?.build(tol)?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    Ok(loaded)
}

fn parse_x0(arg: &X0Arg, loaded: &LoadedSystem) -> Result<DVector<f64>> {
    if let Some(text) = &arg.x0 {
        let values: std::result::Result<Vec<f64>, _> =
            text.split(',').map(|c| c.trim().parse::<f64>()).collect();
        let values = values.map_err(|e| Error::Parse(format!("bad --x0: {e}")))?;
        if values.len() != loaded.system.dim() {
            return Err(Error::DimensionMismatch(format!(
                "--x0 has {} entries, expected {}",
                values.len(),
                loaded.system.dim()
            )));
        }
        return Ok(DVector::from_vec(values));
    }
    loaded
        .x0
        .clone()
        .ok_or_else(|| Error::Parse("no --x0 given and no x0 field in the file".into()))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn fmt_matrix(m: &DMatrix<f64>, indent: &str) -> String {
    if m.nrows() == 0 || m.ncols() == 0 {
        return format!("{indent}(empty {}x{})", m.nrows(), m.ncols());
    }
    (0..m.nrows())
        .map(|i| {
            let cells: Vec<String> = (0..m.ncols())
                .map(|j| format!("{:>12.6}", m[(i, j)]))
                .collect();
            format!("{indent}[ {} ]", cells.join("  "))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn write_csv_to(path: &PathBuf, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    if path.as_os_str() == "-" {
        let stdout = std::io::stdout();
        let mut lock = stdout.lock();
        write(&mut lock)
    } else {
        let mut out = BufWriter::new(File::create(path)?);
        write(&mut out)
    }
}

fn grid_for(window: f64, dt: Option<f64>) -> Result<Vec<f64>> {
    if window <= 0.0 || !window.is_finite() {
        return Err(Error::InvalidGrid(format!(
            "window {window} must be positive"
        )));
    }
    let steps = match dt {
        Some(dt) if dt > 0.0 && dt < window => (window / dt).round() as usize,
        Some(dt) => {
            return Err(Error::InvalidGrid(format!(
                "dt {dt} must lie strictly between 0 and the window {window}"
            )))
        }
        None => 500,
    };
    Ok(uniform_grid(window, steps.max(1)))
}

fn analyze(path: &PathBuf, as_json: bool, tol: &Tolerances) -> Result<()> {
    let loaded = load(path, tol)?;
    let sys = &loaded.system;
    let report = sys.validate(tol);
    let omega = sys.input_index(tol);
    let basis = sys.consistency_basis(tol)?;
    let aug = build_augmented(sys, &loaded.weights, tol)?;
    let assumptions = check_assumptions(&aug, sys, tol);
    let stabilizable = behavioural_stabilizability(sys, tol)?;

    if as_json {
        let doc = json!({
            "validation": report,
            "input_index": omega.omega,
            "kalman_matrix": rows(basis.kalman()),
            "consistency_basis": rows(basis.f()),
            "consistency_left_inverse": rows(basis.f_dagger()),
            "augmented": {
                "n_hat": aug.n_hat(),
                "a_hat": rows(aug.a_hat()),
                "b_hat": aug.b_hat().iter().copied().collect::<Vec<f64>>(),
                "s_hat": rows(aug.s_hat()),
                "r_hat": aug.r_hat(),
            },
            "assumptions": assumptions,
            "behaviourally_stabilizable": stabilizable,
        });
        println!("{}", serde_json::to_string_pretty(&doc).expect("json"));
        return Ok(());
    }

    println!("== validation");
    print!("{report}");
    println!("== structure");
    println!("  input index omega = {omega}");
    if sys.n_n() == 0 {
        println!("  no algebraic part: classical regulator path, omega = 0");
    } else if omega.omega == 0 {
        println!("  input enters the algebraic part statically (omega = 0)");
    }
    println!(
        "  Kalman-like matrix K ({}x{}):",
        basis.kalman().nrows(),
        basis.kalman().ncols()
    );
    println!("{}", fmt_matrix(basis.kalman(), "    "));
    println!(
        "  consistency space = column span of F ({}x{}, dimension {}):",
        basis.f().nrows(),
        basis.f().ncols(),
        basis.dim()
    );
    println!("{}", fmt_matrix(basis.f(), "    "));
    println!("  left inverse of F:");
    println!("{}", fmt_matrix(basis.f_dagger(), "    "));
    println!("== augmented system (n_hat = {})", aug.n_hat());
    println!("  A_hat:");
    println!("{}", fmt_matrix(aug.a_hat(), "    "));
    let b_hat = DMatrix::from_column_slice(aug.n_hat(), 1, aug.b_hat().as_slice());
    println!("  b_hat:");
    println!("{}", fmt_matrix(&b_hat, "    "));
    println!("  S_hat:");
    println!("{}", fmt_matrix(aug.s_hat(), "    "));
    println!("== assumptions");
    print!("{assumptions}");
    println!(
        "  assumption report (JSON): {}",
        serde_json::to_string(&assumptions).expect("json")
    );
    println!("== stabilizability");
    println!("  behaviourally stabilizable: {stabilizable}");
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn solve(
    path: &PathBuf,
    x0_arg: X0Arg,
    horizon_text: &str,
    dt: Option<f64>,
    window: f64,
    output: Option<PathBuf>,
    summary_path: Option<PathBuf>,
    tol: &Tolerances,
) -> Result<()> {
    let loaded = load(path, tol)?;
    let sys = &loaded.system;
    let horizon = Horizon::parse(horizon_text)?;
    let x0 = parse_x0(&x0_arg, &loaded)?;
    let window = match horizon {
        Horizon::Finite(t) => t,
        Horizon::Infinite => window,
    };
    let grid = grid_for(window, dt)?;

    let consistency = sys.is_consistent(&x0, tol)?;
    let v = optimal_value(sys, &loaded.weights, &x0, horizon, tol)?;
    let (traj, _controls) = optimal_trajectory(sys, &loaded.weights, &x0, horizon, &grid, tol)?;

    let aug = build_augmented(sys, &loaded.weights, tol)?;
    let (p_final, are) = match horizon {
        Horizon::Finite(t) => (integrate_dre(&aug, t, tol)?.final_p().clone(), None),
        Horizon::Infinite => {
            let p = p_infinity(&aug, tol)?;
            (p.matrix.clone(), Some(p.are_residual))
        }
    };

    let dae_residual = residual_of(sys, &traj);

    if let Some(csv_path) = &output {
        write_csv_to(csv_path, |w| dio::write_trajectory_csv(w, &traj))?;
    }
    let summary = SolveSummary::new(
        v,
        horizon.to_string(),
        &p_final,
        dio::ResidualSummary {
            consistency: consistency.residual,
            dae_central_difference: dae_residual,
            are,
        },
    );
    match summary_path {
        Some(p) => std::fs::write(p, summary.to_json_pretty() + "\n")?,
        None => println!("{}", summary.to_json_pretty()),
    }
    Ok(())
}

/// Central-difference residual of a trajectory whose inputs are stored
/// pointwise (no signal object available).
fn residual_of(sys: &QwfSystem, traj: &Trajectory) -> Option<f64> {
    let grid = traj.grid();
    if grid.len() < 3 {
        return None;
    }
    let h = grid[1] - grid[0];
    let e = sys.e_matrix();
    let a = sys.a_matrix();
    let b = sys.b_vector();
    let mut max = 0.0f64;
    for i in 1..grid.len() - 1 {
        let d_ex = (&e * &traj.states()[i + 1] - &e * &traj.states()[i - 1]) / (2.0 * h);
        let rhs = &a * &traj.states()[i] + &b * traj.inputs()[i];
        max = max.max((d_ex - rhs).norm());
    }
    Some(max)
}

fn riccati_cmd(
    path: &PathBuf,
    horizon_text: &str,
    output: Option<PathBuf>,
    tol: &Tolerances,
) -> Result<()> {
    let loaded = load(path, tol)?;
    let aug = build_augmented(&loaded.system, &loaded.weights, tol)?;
    match Horizon::parse(horizon_text)? {
        Horizon::Finite(t) => {
            let sol = integrate_dre(&aug, t, tol)?;
            match &output {
                Some(p) => write_csv_to(p, |w| dio::write_riccati_csv(w, &sol))?,
                None => {
                    let stdout = std::io::stdout();
                    let mut lock = stdout.lock();
                    dio::write_riccati_csv(&mut lock, &sol)?;
                }
            }
            eprintln!(
                "sampled {} points on [0, {t}]; final P spectrum {:?}",
                sol.grid().len(),
                linalg::symmetric_eigenvalues(sol.final_p())
                    .iter()
                    .copied()
                    .collect::<Vec<_>>()
            );
        }
        Horizon::Infinite => {
            let PInfinity {
                matrix,
                terminal_time,
                derivative_norm,
                are_residual,
                newton_iterations,
            } = p_infinity(&aug, tol)?;
            let doc = json!({
                "p_infinity": rows(&matrix),
                "terminal_time": terminal_time,
                "derivative_norm": derivative_norm,
                "are_residual": are_residual,
                "newton_iterations": newton_iterations,
            });
            println!("{}", serde_json::to_string_pretty(&doc).expect("json"));
        }
    }
    Ok(())
}

/// `pinv(G)` with `beta` times the kernel direction added to the last
/// row: the one-parameter family of left inverses available when the left
/// kernel of `G'` is a line.
fn beta_left_inverse(g: &DMatrix<f64>, beta: f64, tol: &Tolerances) -> Result<DMatrix<f64>> {
    let n = g.nrows();
    let kernel_dim = n - linalg::rank(g, tol);
    if kernel_dim != 1 {
        return Err(Error::InvalidSystem(format!(
            "--beta-ginv needs a one-dimensional left kernel, got dimension {kernel_dim}"
        )));
    }
    // Orthogonal complement of the column span: project a basis sweep.
    let svd = g.clone().svd(true, false);
    let u = svd.u.as_ref().expect("svd with u");
    let range_cols = linalg::rank(g, tol);
    let mut kernel = DVector::zeros(n);
    'sweep: for seed in 0..n {
        let mut candidate = DVector::zeros(n);
        candidate[seed] = 1.0;
        for c in 0..range_cols {
            let col = u.column(c);
            let proj = candidate.dot(&col);
            candidate -= col * proj;
        }
        if candidate.norm() > 1e-8 {
            kernel = candidate.normalize();
            break 'sweep;
        }
    }
    if kernel.norm() < 0.5 {
        return Err(Error::InternalConsistency {
            context: "beta_left_inverse".into(),
            detail: "failed to build the kernel direction".into(),
        });
    }
    // Deterministic sign: largest-magnitude entry positive.
    let lead = kernel
        .iter()
        .cloned()
        .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
    if lead < 0.0 {
        kernel = -kernel;
    }
    let mut left = linalg::pseudo_inverse(g, tol);
    let last = left.nrows() - 1;
    let updated = left.row(last) + kernel.transpose() * beta;
    left.row_mut(last).copy_from(&updated);
    Ok(left)
}

#[allow(clippy::too_many_arguments)]
fn feedback_cmd(
    path: &PathBuf,
    alpha: f64,
    beta_ginv: Option<f64>,
    simulate: Option<PathBuf>,
    x0_arg: X0Arg,
    window: f64,
    dt: Option<f64>,
    tol: &Tolerances,
) -> Result<()> {
    let loaded = load(path, tol)?;
    let sys = &loaded.system;
    let custom = match beta_ginv {
        Some(beta) => {
            let aug = build_augmented(sys, &loaded.weights, tol)?;
            Some(beta_left_inverse(&aug.g_matrix(), beta, tol)?)
        }
        None => None,
    };
    let law = synthesize_feedback(sys, &loaded.weights, alpha, custom, tol)?;

    println!("== feedback law (alpha = {alpha})");
    println!("  gain on the augmented state (k_hat_alpha):");
    let k_hat = DMatrix::from_row_slice(1, law.k_hat_alpha.len(), law.k_hat_alpha.as_slice());
    println!("{}", fmt_matrix(&k_hat, "    "));
    println!("  left inverse G^+:");
    println!("{}", fmt_matrix(&law.g_dagger, "    "));
    println!("  state feedback row (u = k x):");
    let k_row = DMatrix::from_row_slice(1, law.k_row.len(), law.k_row.as_slice());
    println!("{}", fmt_matrix(&k_row, "    "));
    println!("  closed-loop matrix A + b k:");
    println!("{}", fmt_matrix(&law.closed_loop_a, "    "));
    println!("== regularity certificate");
    println!("  regular: {}", law.certificate.regular);
    println!(
        "  certificate (JSON): {}",
        serde_json::to_string(&law.certificate).expect("json")
    );

    if let Some(csv_path) = simulate {
        let x0 = parse_x0(&x0_arg, &loaded)?;
        let grid = grid_for(window, dt)?;
        let traj = simulate_closed_loop(sys, &law.k_row, &x0, &grid, tol)?;
        write_csv_to(&csv_path, |w| dio::write_trajectory_csv(w, &traj))?;
        eprintln!("closed-loop trajectory written ({} points)", grid.len());
    }
    Ok(())
}

fn simulate_cmd(
    path: &PathBuf,
    x0_arg: X0Arg,
    t_end: f64,
    dt: Option<f64>,
    output: Option<PathBuf>,
    tol: &Tolerances,
) -> Result<()> {
    let loaded = load(path, tol)?;
    let signal = loaded
        .signal
        .clone()
        .ok_or_else(|| Error::Parse("the file carries no input signal".into()))?;
    let x0 = parse_x0(&x0_arg, &loaded)?;
    let grid = grid_for(t_end, dt)?;
    let traj = solve_dae(&loaded.system, &x0, &signal, &grid, tol)?;
    let report = verify_solution(&loaded.system, &traj, &signal)?;
    match &output {
        Some(p) => write_csv_to(p, |w| dio::write_trajectory_csv(w, &traj))?,
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            dio::write_trajectory_csv(&mut lock, &traj)?;
        }
    }
    eprintln!("residual check: {report}");
    Ok(())
}
