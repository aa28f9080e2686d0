//! Global tolerance table.
//!
//! Every rank decision, convergence test, and acceptance threshold in the
//! crate reads from one [`Tolerances`] value, and reports echo the values
//! actually used.

use serde::{Deserialize, Serialize};

/// Tolerances and iteration limits shared by all solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Singular values below `rank * max(1, sigma_max)` count as zero.
    pub rank: f64,
    /// Relative coefficient bound for a Poisson bracket to count as the
    /// zero polynomial.
    pub invariance_rel: f64,
    /// Relative-equilibrium residual: converged when
    /// `|F| <= releq * (1 + |grad h(x0)|)`.
    pub releq: f64,
    /// Gauss-Newton iteration cap for the relative-equilibrium solver.
    pub releq_max_iter: usize,
    /// Step norm beyond which a solve is reported as divergent.
    pub divergence: f64,
    /// Largest admissible principal angle between the radical of the
    /// restricted form and the group-orbit tangent.
    pub radical_angle: f64,
    /// Smallest admissible singular value of the restricted form on the slice.
    pub omega_min_sv: f64,
    /// Eigenvalues within `inertia` of zero count as null directions.
    pub inertia: f64,
    /// Implicit-midpoint inner solve residual bound.
    pub inner_residual: f64,
    /// Shooting residual: converged when `|closure| <= shoot * (1 + |z0|)`.
    pub shoot: f64,
    /// Gauss-Newton iteration cap for the shooting solver.
    pub shoot_max_iter: usize,
    /// Level-pinning accuracy for the seed amplitude, relative to epsilon.
    pub seed_level_rel: f64,
    /// Pattern-search initial step for the velocity-gauge search.
    pub gauge_step: f64,
    /// Pattern-search shrink factor.
    pub gauge_shrink: f64,
    /// Pattern search terminates below this step size.
    pub gauge_min_step: f64,
    /// Pattern search terminates after this many objective evaluations.
    pub gauge_max_evals: usize,
    /// Relative tolerance for the invariant-signature deduplication of
    /// orbit families.
    pub dedup_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank: 1e-10,
            invariance_rel: 1e-12,
            releq: 1e-12,
            releq_max_iter: 50,
            divergence: 1e6,
            radical_angle: 1e-8,
            omega_min_sv: 1e-8,
            inertia: 1e-10,
            inner_residual: 1e-13,
            shoot: 1e-8,
            shoot_max_iter: 30,
            seed_level_rel: 1e-2,
            gauge_step: 0.5,
            gauge_shrink: 0.5,
            gauge_min_step: 1e-8,
            gauge_max_evals: 200,
            dedup_rel: 1e-4,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_positive() {
        let t = Tolerances::default();
        for v in [
            t.rank,
            t.invariance_rel,
            t.releq,
            t.divergence,
            t.radical_angle,
            t.omega_min_sv,
            t.inertia,
            t.inner_residual,
            t.shoot,
            t.seed_level_rel,
            t.gauge_step,
            t.gauge_shrink,
            t.gauge_min_step,
            t.dedup_rel,
        ] {
            assert!(v > 0.0);
        }
    }

    #[test]
    fn json_roundtrip() {
        let t = Tolerances::default();
        let s = serde_json::to_string(&t).unwrap();
        let back: Tolerances = serde_json::from_str(&s).unwrap();
        assert_eq!(t, back);
    }
}
