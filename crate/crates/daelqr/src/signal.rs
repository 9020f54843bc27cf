//! Scalar inputs as piecewise polynomials with exact derivatives.
//!
//! The solution formulas differentiate the input up to the input index, so
//! inputs are restricted to a class where derivatives of any order are
//! available in closed form. Each segment is a polynomial in local time
//! `t - t_start`; the segment starting at the final breakpoint extends to
//! infinity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qwf::InputIndex;
use crate::tol::Tolerances;

/// One polynomial piece, `c0 + c1 (t - t_start) + c2 (t - t_start)^2 + ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub t_start: f64,
    pub coeffs: Vec<f64>,
}

/// A piecewise-polynomial input signal on `t >= 0`.
///
/// At breakpoints the right limit is used, so initial data at `t = 0` is
/// always well defined. The stored smoothness order `m` certifies that
/// derivatives of orders `0..m-1` agree from both sides at every interior
/// breakpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    breakpoints: Vec<f64>,
    coefficients: Vec<Vec<f64>>,
    smoothness_order: usize,
}

fn poly_derivative_at(coeffs: &[f64], order: usize, tau: f64) -> f64 {
    if order >= coeffs.len() {
        return 0.0;
    }
    let n = coeffs.len() - order;
    let mut val = 0.0;
    for i in (0..n).rev() {
        let mut c = coeffs[i + order];
        for r in 1..=order {
            c *= (i + r) as f64;
        }
        val = val * tau + c;
    }
    val
}

/// Re-express `p(tau)` as a polynomial in `sigma = tau - shift`.
fn poly_shift(coeffs: &[f64], shift: f64) -> Vec<f64> {
    // Taylor coefficients at the new origin: q_j = p^(j)(shift) / j!.
    let mut out = Vec::with_capacity(coeffs.len());
    let mut factorial = 1.0;
    for j in 0..coeffs.len() {
        if j > 0 {
            factorial *= j as f64;
        }
        out.push(poly_derivative_at(coeffs, j, shift) / factorial);
    }
    out
}

fn trim_trailing_zeros(mut coeffs: Vec<f64>) -> Vec<f64> {
    while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
        coeffs.pop();
    }
    coeffs
}

impl ControlSignal {
    /// A single polynomial on all of `t >= 0`.
    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        let coeffs = trim_trailing_zeros(if coeffs.is_empty() { vec![0.0] } else { coeffs });
        let degree = coeffs.len() - 1;
        ControlSignal {
            breakpoints: vec![0.0],
            coefficients: vec![coeffs],
            // No junctions exist, so any order is matched vacuously; the
            // stored value keeps the representable order finite.
            smoothness_order: degree + 1,
        }
    }

    /// The zero signal.
    pub fn zero() -> Self {
        ControlSignal::polynomial(vec![0.0])
    }

    /// `c * t^k`.
    pub fn monomial(c: f64, k: usize) -> Self {
        let mut coeffs = vec![0.0; k + 1];
        coeffs[k] = c;
        ControlSignal::polynomial(coeffs)
    }

    /// Build from explicit segments, inferring the smoothness order from
    /// the derivative agreement actually present at the junctions.
    pub fn from_segments(segments: Vec<Segment>, tol: &Tolerances) -> Result<Self> {
        let signal = Self::assemble(segments)?;
        let cap = signal.max_degree() + 1;
        let mut m = 0;
        while m < cap && signal.junction_defect(m, tol) {
            m += 1;
        }
        Ok(ControlSignal {
            smoothness_order: m,
            ..signal
        })
    }

    /// Build from segments that are claimed to join with `C^{m-1}`
    /// smoothness; the claim is verified.
    pub fn with_smoothness(segments: Vec<Segment>, m: usize, tol: &Tolerances) -> Result<Self> {
        let signal = Self::assemble(segments)?;
        for order in 0..m {
            if !signal.junction_defect(order, tol) {
                return Err(Error::InvalidSignal(format!(
                    "segments do not join continuously at derivative order {order}"
                )));
            }
        }
        Ok(ControlSignal {
            smoothness_order: m,
            ..signal
        })
    }

    fn assemble(segments: Vec<Segment>) -> Result<ControlSignal> {
        if segments.is_empty() {
            return Err(Error::InvalidSignal("no segments".into()));
        }
        if segments[0].t_start.abs() > 1e-12 {
            return Err(Error::InvalidSignal(format!(
                "first segment must start at t = 0, got {}",
                segments[0].t_start
            )));
        }
        for w in segments.windows(2) {
            if w[1].t_start <= w[0].t_start || w[1].t_start.is_nan() {
                return Err(Error::InvalidSignal(
                    "segment start times must be strictly increasing".into(),
                ));
            }
        }
        let mut breakpoints: Vec<f64> = segments.iter().map(|s| s.t_start).collect();
        breakpoints[0] = 0.0;
        let coefficients = segments
            .into_iter()
            .map(|s| {
                trim_trailing_zeros(if s.coeffs.is_empty() {
                    vec![0.0]
                } else {
                    s.coeffs
                })
            })
            .collect();
        Ok(ControlSignal {
            breakpoints,
            coefficients,
            smoothness_order: 0,
        })
    }

    /// Do left and right derivatives of the given order agree at every
    /// interior breakpoint?
    fn junction_defect(&self, order: usize, tol: &Tolerances) -> bool {
        for i in 1..self.breakpoints.len() {
            let tau_left = self.breakpoints[i] - self.breakpoints[i - 1];
            let left = poly_derivative_at(&self.coefficients[i - 1], order, tau_left);
            let right = poly_derivative_at(&self.coefficients[i], order, 0.0);
            let scale = left.abs().max(right.abs()).max(1.0);
            if (left - right).abs() > tol.junction * scale {
                return false;
            }
        }
        true
    }

    /// Two-point Hermite interpolation: on each interval the polynomial of
    /// degree `2q + 1` matching the supplied derivative stacks
    /// `(f(t_i), f'(t_i), ..., f^(q)(t_i))` at both ends. Junctions share
    /// the node data, so the result is `C^q` by construction.
    pub fn hermite_interpolant(nodes: &[f64], derivatives: &[Vec<f64>]) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidSignal("need at least two nodes".into()));
        }
        if nodes.len() != derivatives.len() {
            return Err(Error::dim(format!(
                "{} nodes but {} derivative stacks",
                nodes.len(),
                derivatives.len()
            )));
        }
        if nodes[0].abs() > 1e-12 {
            return Err(Error::InvalidSignal("nodes must start at t = 0".into()));
        }
        let q_plus_1 = derivatives[0].len();
        if q_plus_1 == 0 || derivatives.iter().any(|d| d.len() != q_plus_1) {
            return Err(Error::InvalidSignal(
                "all nodes need the same nonempty derivative stack".into(),
            ));
        }
        for w in nodes.windows(2) {
            if w[1] <= w[0] || w[1].is_nan() || w[0].is_nan() {
                return Err(Error::InvalidSignal(
                    "nodes must be strictly increasing".into(),
                ));
            }
        }

        let mut breakpoints = Vec::with_capacity(nodes.len() - 1);
        let mut coefficients = Vec::with_capacity(nodes.len() - 1);
        for i in 0..nodes.len() - 1 {
            let h = nodes[i + 1] - nodes[i];
            coefficients.push(hermite_piece(&derivatives[i], &derivatives[i + 1], h));
            breakpoints.push(if i == 0 { 0.0 } else { nodes[i] });
        }
        Ok(ControlSignal {
            breakpoints,
            coefficients,
            smoothness_order: q_plus_1,
        })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn smoothness_order(&self) -> usize {
        self.smoothness_order
    }

    /// Largest polynomial degree over the segments.
    pub fn max_degree(&self) -> usize {
        self.coefficients
            .iter()
            .map(|c| c.len() - 1)
            .max()
            .unwrap_or(0)
    }

    /// Highest derivative order this representation can answer for.
    pub fn representable_order(&self) -> usize {
        self.smoothness_order + self.max_degree()
    }

    /// Export as segment records (the JSON wire form).
    pub fn segments(&self) -> Vec<Segment> {
        self.breakpoints
            .iter()
            .zip(&self.coefficients)
            .map(|(&t_start, coeffs)| Segment {
                t_start,
                coeffs: coeffs.clone(),
            })
            .collect()
    }

    fn segment_at(&self, t: f64) -> Result<usize> {
        if t < 0.0 || !t.is_finite() {
            return Err(Error::TimeOutOfRange {
                t,
                min: 0.0,
                max: f64::INFINITY,
            });
        }
        // Right-limit convention: at a breakpoint, the segment starting
        // there wins.
        let idx = self.breakpoints.partition_point(|&b| b <= t);
        Ok(idx.saturating_sub(1))
    }

    /// Signal value at `t`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        let i = self.segment_at(t)?;
        Ok(poly_derivative_at(
            &self.coefficients[i],
            0,
            t - self.breakpoints[i],
        ))
    }

    /// `(u(t), u'(t), ..., u^(k)(t))`, computed analytically.
    pub fn eval_derivatives(&self, t: f64, k: usize) -> Result<Vec<f64>> {
        if k > self.representable_order() {
            return Err(Error::DerivativeOrder {
                requested: k,
                representable: self.representable_order(),
            });
        }
        let i = self.segment_at(t)?;
        let tau = t - self.breakpoints[i];
        Ok((0..=k)
            .map(|order| poly_derivative_at(&self.coefficients[i], order, tau))
            .collect())
    }

    /// Membership in the class of inputs whose derivatives of orders
    /// `0..omega-1` vanish at `t = 0` (the residual freedom in the input).
    pub fn is_in_u0(&self, omega: InputIndex, tol: &Tolerances) -> Result<bool> {
        if omega.omega == 0 {
            return Ok(true);
        }
        let derivs = self.eval_derivatives(0.0, omega.omega - 1)?;
        Ok(derivs.iter().all(|d| d.abs() <= tol.u0_membership))
    }

    /// Pointwise sum; the result carries the weaker smoothness order.
    pub fn add(&self, other: &ControlSignal) -> ControlSignal {
        let mut merged: Vec<f64> = self
            .breakpoints
            .iter()
            .chain(other.breakpoints.iter())
            .copied()
            .collect();
        merged.sort_by(|a, b| a.partial_cmp(b).unwrap());
        merged.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);

        let pick = |sig: &ControlSignal, t_start: f64| -> Vec<f64> {
            let idx = sig.breakpoints.partition_point(|&b| b <= t_start + 1e-13) - 1;
            poly_shift(&sig.coefficients[idx], t_start - sig.breakpoints[idx])
        };
        let coefficients: Vec<Vec<f64>> = merged
            .iter()
            .map(|&t_start| {
                let a = pick(self, t_start);
                let b = pick(other, t_start);
                let mut sum = vec![0.0; a.len().max(b.len())];
                for (i, &c) in a.iter().enumerate() {
                    sum[i] += c;
                }
                for (i, &c) in b.iter().enumerate() {
                    sum[i] += c;
                }
                trim_trailing_zeros(sum)
            })
            .collect();
        ControlSignal {
            breakpoints: merged,
            coefficients,
            smoothness_order: self.smoothness_order.min(other.smoothness_order),
        }
    }

    /// Pointwise scaling.
    pub fn scale(&self, factor: f64) -> ControlSignal {
        ControlSignal {
            breakpoints: self.breakpoints.clone(),
            coefficients: self
                .coefficients
                .iter()
                .map(|c| c.iter().map(|x| x * factor).collect())
                .collect(),
            smoothness_order: self.smoothness_order,
        }
    }
}

/// Newton form with repeated nodes for the two-point Hermite problem,
/// expanded to monomial coefficients in local time.
fn hermite_piece(left: &[f64], right: &[f64], h: f64) -> Vec<f64> {
    let q1 = left.len();
    let m = 2 * q1;
    let z: Vec<f64> = (0..m).map(|i| if i < q1 { 0.0 } else { h }).collect();
    let value = |i: usize| if i < q1 { left[0] } else { right[0] };
    let deriv = |i: usize, order: usize| if i < q1 { left[order] } else { right[order] };

    // Divided-difference table; repeated nodes take f^(c)(z_i)/c!.
    let mut table: Vec<Vec<f64>> = vec![(0..m).map(value).collect()];
    let mut factorial = 1.0;
    for c in 1..m {
        factorial *= c as f64;
        let prev = &table[c - 1];
        let mut row = Vec::with_capacity(m - c);
        for i in 0..m - c {
            if (z[i + c] - z[i]).abs() == 0.0 {
                row.push(deriv(i, c) / factorial);
            } else {
                row.push((prev[i + 1] - prev[i]) / (z[i + c] - z[i]));
            }
        }
        table.push(row);
    }

    // Horner expansion of the Newton form into monomials.
    let mut poly = vec![table[m - 1][0]];
    for c in (0..m - 1).rev() {
        // poly <- poly * (tau - z_c) + a_c
        let mut next = vec![0.0; poly.len() + 1];
        for (i, &p) in poly.iter().enumerate() {
            next[i + 1] += p;
            next[i] -= p * z[c];
        }
        next[0] += table[c][0];
        poly = next;
    }
    trim_trailing_zeros(poly)
}
