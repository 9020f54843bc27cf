//! File formats: the JSON system description and CSV exports.
//!
//! A system file carries the quadruple, the weight matrix, and optionally
//! an input signal and an initial value:
//!
//! ```json
//! {
//!   "n_J": 0, "n_N": 3,
//!   "J": [], "N": [[0,1,0],[0,0,1],[0,0,0]],
//!   "b_J": [], "b_N": [0,1,0],
//!   "S": [[1,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]],
//!   "x0": [1, 0, 0],
//!   "signal": [{ "t_start": 0.0, "coeffs": [0.0, 1.0] }]
//! }
//! ```
//!
//! Matrices are row-major arrays of rows. CSV output uses 17 significant
//! digits so doubles survive a round trip through text.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::augment::CostWeights;
use crate::error::{Error, Result};
use crate::linalg;
use crate::qwf::QwfSystem;
use crate::riccati::RiccatiSolution;
use crate::signal::{ControlSignal, Segment};
use crate::solution::Trajectory;
use crate::tol::Tolerances;

/// The on-disk JSON document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemFile {
    #[serde(rename = "n_J")]
    pub n_j: usize,
    #[serde(rename = "n_N")]
    pub n_n: usize,
    #[serde(rename = "J")]
    pub j: Vec<Vec<f64>>,
    #[serde(rename = "N")]
    pub n: Vec<Vec<f64>>,
    #[serde(rename = "b_J")]
    pub b_j: Vec<f64>,
    #[serde(rename = "b_N")]
    pub b_n: Vec<f64>,
    #[serde(rename = "S")]
    pub s: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<Vec<Segment>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

/// A parsed and validated system file.
#[derive(Debug, Clone)]
pub struct LoadedSystem {
    pub system: QwfSystem,
    pub weights: CostWeights,
    pub signal: Option<ControlSignal>,
    pub x0: Option<DVector<f64>>,
    /// Non-fatal observations, e.g. a weight matrix that needed
    /// symmetrization.
    pub warnings: Vec<String>,
}

fn rows_to_matrix(
    rows: &[Vec<f64>],
    nrows: usize,
    ncols: usize,
    name: &str,
) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::dim(format!(
            "{name} must be {nrows}x{ncols}, got {} rows of lengths {:?}",
            rows.len(),
            rows.iter().map(Vec::len).collect::<Vec<_>>()
        )));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

impl SystemFile {
    /// Parse a JSON document from disk. Syntax errors keep the line and
    /// column reported by the parser.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path)?;
        Self::from_str(&text)
    }

    /// Parse a JSON document from a string.
    #[allow(clippy::should_implement_trait)]
    pub fn from_str(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("line {}, column {}: {e}", e.line(), e.column())))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("system file serializes")
    }

    pub fn to_path(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_pretty() + "\n")?;
        Ok(())
    }

    /// Snapshot an in-memory system into the wire form.
    pub fn from_parts(
        sys: &QwfSystem,
        weights: &CostWeights,
        signal: Option<&ControlSignal>,
        x0: Option<&DVector<f64>>,
    ) -> Self {
        SystemFile {
            n_j: sys.n_j(),
            n_n: sys.n_n(),
            j: matrix_to_rows(sys.j()),
            n: matrix_to_rows(sys.nilpotent()),
            b_j: sys.b_j().iter().copied().collect(),
            b_n: sys.b_n().iter().copied().collect(),
            s: matrix_to_rows(weights.s()),
            signal: signal.map(|u| u.segments()),
            x0: x0.map(|v| v.iter().copied().collect()),
        }
    }

    /// Validate shapes and construct the in-memory objects.
    pub fn build(&self, tol: &Tolerances) -> Result<LoadedSystem> {
        let n = self.n_j + self.n_n;
        let j = rows_to_matrix(&self.j, self.n_j, self.n_j, "J")?;
        let n_mat = rows_to_matrix(&self.n, self.n_n, self.n_n, "N")?;
        if self.b_j.len() != self.n_j {
            return Err(Error::dim(format!(
                "b_J has length {}, expected {}",
                self.b_j.len(),
                self.n_j
            )));
        }
        if self.b_n.len() != self.n_n {
            return Err(Error::dim(format!(
                "b_N has length {}, expected {}",
                self.b_n.len(),
                self.n_n
            )));
        }
        let system = QwfSystem::new(
            j,
            n_mat,
            DVector::from_vec(self.b_j.clone()),
            DVector::from_vec(self.b_n.clone()),
            tol,
        )?;
        system.ensure_valid(tol)?;

        let s = rows_to_matrix(&self.s, n + 1, n + 1, "S")?;
        let weights = CostWeights::new(s, self.n_j, self.n_n)?;
        let mut warnings = Vec::new();
        if weights.asymmetry() > 1e-9 {
            warnings.push(format!(
                "weight matrix symmetrized; relative asymmetry was {:.3e}",
                weights.asymmetry()
            ));
        }

        let signal = match &self.signal {
            Some(segments) => Some(ControlSignal::from_segments(segments.clone(), tol)?),
            None => None,
        };
        let x0 = match &self.x0 {
            Some(values) => {
                if values.len() != n {
                    return Err(Error::dim(format!(
                        "x0 has length {}, expected {}",
                        values.len(),
                        n
                    )));
                }
                Some(DVector::from_vec(values.clone()))
            }
            None => None,
        };
        Ok(LoadedSystem {
            system,
            weights,
            signal,
            x0,
            warnings,
        })
    }
}

/// Format a double with 17 significant digits (lossless in text).
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write `t, x_1, ..., x_n, u` rows.
pub fn write_trajectory_csv<W: Write>(mut out: W, traj: &Trajectory) -> Result<()> {
    let n = traj.states().first().map_or(0, |s| s.len());
    let mut header = String::from("t");
    for i in 1..=n {
        header.push_str(&format!(",x_{i}"));
    }
    header.push_str(",u");
    writeln!(out, "{header}")?;
    for (i, &t) in traj.grid().iter().enumerate() {
        let mut row = format_f64(t);
        for v in traj.states()[i].iter() {
            row.push(',');
            row.push_str(&format_f64(*v));
        }
        row.push(',');
        row.push_str(&format_f64(traj.inputs()[i]));
        writeln!(out, "{row}")?;
    }
    Ok(())
}

/// Write `t, p_1_1, p_2_1, ..., p_n_n` rows (column-major vectorisation).
pub fn write_riccati_csv<W: Write>(mut out: W, sol: &RiccatiSolution) -> Result<()> {
    let n = sol.values().first().map_or(0, |p| p.nrows());
    let mut header = String::from("t");
    for j in 1..=n {
        for i in 1..=n {
            header.push_str(&format!(",p_{i}_{j}"));
        }
    }
    writeln!(out, "{header}")?;
    for (idx, &t) in sol.grid().iter().enumerate() {
        let mut row = format_f64(t);
        for j in 0..n {
            for i in 0..n {
                row.push(',');
                row.push_str(&format_f64(sol.values()[idx][(i, j)]));
            }
        }
        writeln!(out, "{row}")?;
    }
    Ok(())
}

/// Residual block of the solve summary.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualSummary {
    /// Distance of the initial value to the consistency space.
    pub consistency: f64,
    /// Central-difference residual of the produced trajectory, when the
    /// grid admits it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dae_central_difference: Option<f64>,
    /// Algebraic Riccati residual of the stationary solution (infinite
    /// horizon only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub are: Option<f64>,
}

/// JSON summary emitted beside a trajectory export.
#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    /// Optimal value of the problem.
    #[serde(rename = "V_T")]
    pub v: f64,
    /// Horizon as given (number or "inf").
    pub horizon: String,
    /// Eigenvalues of the final Riccati matrix, ascending.
    pub p_final_spectrum: Vec<f64>,
    pub residuals: ResidualSummary,
}

impl SolveSummary {
    pub fn new(
        v: f64,
        horizon: String,
        p_final: &DMatrix<f64>,
        residuals: ResidualSummary,
    ) -> Self {
        SolveSummary {
            v,
            horizon,
            p_final_spectrum: linalg::symmetric_eigenvalues(p_final)
                .iter()
                .copied()
                .collect(),
            residuals,
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}
