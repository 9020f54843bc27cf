//! The tolerance bundle used by every rank, zero and definiteness decision.
//!
//! All thresholds are scale-aware: a quantity is compared against its own
//! natural magnitude, never against a bare constant. The defaults are chosen
//! for well-scaled double-precision data; the `DAELQR_TOL` environment
//! variable rescales the whole bundle relative to the reference rank
//! tolerance of `1e-10`.

/// Named tolerances with their default values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    /// `N^{n_N}` counts as zero when its norm is below
    /// `nilpotency * max(1, |N|^{n_N})`.
    pub nilpotency: f64,
    /// `N^i b_N` counts as zero when its norm is below
    /// `zero_vector * max(1, |N|^i |b_N|)`.
    pub zero_vector: f64,
    /// Singular values below `rank * sigma_max * max(rows, cols)` count as
    /// zero in every numerical rank decision.
    pub rank: f64,
    /// Eigenvalues with real part above `-hautus_boundary` belong to the
    /// closed right half-plane for the stabilizability tests.
    pub hautus_boundary: f64,
    /// A symmetric matrix counts as positive semidefinite when its smallest
    /// eigenvalue is at least `-psd * |S|`.
    pub psd: f64,
    /// Absolute threshold for strict positivity of the scalar control weight.
    pub scalar_positive: f64,
    /// Absolute agreement required of initial-value matching conditions.
    pub consistency: f64,
    /// Absolute threshold for derivative values at zero in the membership
    /// test of the zero-initial-data input class.
    pub u0_membership: f64,
    /// Relative agreement of one-sided derivatives at signal breakpoints.
    pub junction: f64,
    /// Relative agreement required of redundant internal computations.
    pub cross_check: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            nilpotency: 1e-12,
            zero_vector: 1e-12,
            rank: 1e-10,
            hautus_boundary: 1e-10,
            psd: 1e-10,
            scalar_positive: 1e-12,
            consistency: 1e-8,
            u0_membership: 1e-10,
            junction: 1e-10,
            cross_check: 1e-12,
        }
    }
}

impl Tolerances {
    /// Defaults, rescaled by `DAELQR_TOL` when set.
    ///
    /// The variable gives the rank tolerance; all other thresholds scale by
    /// the same factor so their relative strictness is preserved.
    pub fn from_env() -> Self {
        match std::env::var("DAELQR_TOL")
            .ok()
            .and_then(|v| v.parse::<f64>().ok())
        {
            Some(t) if t > 0.0 => Tolerances::default().scaled(t / 1e-10),
            _ => Tolerances::default(),
        }
    }

    /// Multiply every threshold by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Tolerances {
            nilpotency: self.nilpotency * factor,
            zero_vector: self.zero_vector * factor,
            rank: self.rank * factor,
            hautus_boundary: self.hautus_boundary * factor,
            psd: self.psd * factor,
            scalar_positive: self.scalar_positive * factor,
            consistency: self.consistency * factor,
            u0_membership: self.u0_membership * factor,
            junction: self.junction * factor,
            cross_check: self.cross_check * factor,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaling_preserves_ratios() {
        let t = Tolerances::default().scaled(10.0);
        assert_eq!(t.rank, 1e-9);
        assert_eq!(t.nilpotency, 1e-11);
        assert_eq!(t.consistency, 1e-7);
    }
}
