//! Linear-quadratic optimal control for single-input differential-algebraic
//! systems in quasi-Weierstrass form.
//!
//! The toolkit takes a system split into a differential part `(J, b_J)` and
//! a nilpotent algebraic part `(N, b_N)` and answers the classical
//! regulator questions for it:
//!
//! * which initial values are consistent, and how much freedom the input
//!   carries ([`qwf`]);
//! * how to simulate a feasible pair and verify the result against the
//!   defining equation ([`solution`], [`signal`]);
//! * how the problem reduces to an ordinary one through the augmented
//!   state `(x_J, u, ..., u^(omega-1))` ([`augment`]);
//! * what the optimal cost and trajectory are, via the Riccati flow of the
//!   augmented problem ([`riccati`], [`feedback`]);
//! * how to realise the optimal control as a static state feedback with a
//!   certified-regular closed loop ([`feedback`]).
//!
//! # Example
//!
//! ```
//! use daelqr::prelude::*;
//! use nalgebra::{dvector, DMatrix, DVector};
//!
//! let tol = Tolerances::default();
//! // Pure derivative chain: N the 3x3 upper shift, b_N = e2.
//! let sys = QwfSystem::new(
//!     DMatrix::zeros(0, 0),
//!     DMatrix::from_fn(3, 3, |i, j| if j == i + 1 { 1.0 } else { 0.0 }),
//!     DVector::zeros(0),
//!     dvector![0.0, 1.0, 0.0],
//!     &tol,
//! )?;
//! let weights = CostWeights::identity(0, 3);
//! let v = optimal_value(&sys, &weights, &dvector![1.0, 0.0, 0.0], Horizon::Infinite, &tol)?;
//! assert!((v - 2.0f64.sqrt()).abs() < 1e-9);
//! # Ok::<(), daelqr::Error>(())
//! ```

pub mod augment;
pub mod error;
pub mod feedback;
pub mod guide;
pub mod io;
pub mod linalg;
pub mod ode;
pub mod qwf;
pub mod riccati;
pub mod signal;
pub mod solution;
pub mod tol;

pub use error::{Error, Result};


/// The names most programs need.
pub mod prelude {
    pub use crate::augment::{
        behavioural_stabilizability, build_augmented, check_assumptions, AssumptionReport,
        AugmentedSystem, CostWeights,
    };
    pub use crate::error::{Error, Result};
    pub use crate::feedback::{
        check_closed_loop_regular, optimal_trajectory, optimal_value, simulate_closed_loop,
        synthesize_feedback, FeedbackLaw, Horizon, RegularityCertificate,
    };
    pub use crate::io::{LoadedSystem, SolveSummary, SystemFile};
    pub use crate::qwf::{ConsistencyBasis, InputIndex, QwfSystem, ValidationReport};
    pub use crate::riccati::{are_residual, integrate_dre, p_infinity, RiccatiSolution};
    pub use crate::signal::{ControlSignal, Segment};
    pub use crate::solution::{default_grid, solve_dae, uniform_grid, verify_solution, Trajectory};
    pub use crate::tol::Tolerances;
}
