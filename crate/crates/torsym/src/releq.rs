//! Relative equilibria: solve `d(h - <Phi|xi>)(x) = 0` for `(x, xi)`,
//! manage the velocity gauge freedom, and verify solutions dynamically.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::config::Tolerances;
use crate::flow;
use crate::linalg::{pinv_solve, LinalgError, Subspace};
use crate::poly::{PolyError, Polynomial};
use crate::scalar::Real;
use crate::symmetry::{self, InvarianceViolation, MomentMap, SymmetryError, TorusAction};

#[derive(Debug, Error)]
pub enum SystemBuildError<T: Real + std::fmt::Display> {
    #[error("hamiltonian has {h_vars} variables but the action lives on R^{expected}")]
    Dimension { h_vars: usize, expected: usize },
    #[error("hamiltonian is not invariant: {0}")]
    NotInvariant(InvarianceViolation<T>),
    #[error(transparent)]
    Symmetry(#[from] SymmetryError),
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("the trivial guess x0 = 0 needs explicit permission")]
    TrivialGuess,
    #[error("no convergence after {iterations} iterations (residual {residual})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("solver diverged (step norm {step_norm})")]
    Divergence { step_norm: f64 },
    #[error("guess has {found} coordinates, expected {expected}")]
    GuessDimension { expected: usize, found: usize },
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Symmetry(#[from] SymmetryError),
    #[error(transparent)]
    Flow(#[from] Box<flow::FlowError>),
}

impl From<flow::FlowError> for SolveError {
    fn from(e: flow::FlowError) -> Self {
        SolveError::Flow(Box::new(e))
    }
}

/// A torus-invariant polynomial Hamiltonian system; invariance is checked
/// at construction.
#[derive(Debug, Clone)]
pub struct SymmetricSystem<T> {
    label: String,
    action: TorusAction<T>,
    moment: MomentMap<T>,
    h: Polynomial<T>,
}

impl<T: Real + std::fmt::Display> SymmetricSystem<T> {
    pub fn new(
        label: impl Into<String>,
        action: TorusAction<T>,
        moment: MomentMap<T>,
        h: Polynomial<T>,
        tol: &Tolerances,
    ) -> Result<Self, SystemBuildError<T>> {
        if h.num_vars() != action.phase_dim() {
            return Err(SystemBuildError::Dimension {
                h_vars: h.num_vars(),
                expected: action.phase_dim(),
            });
        }
        symmetry::check_invariance(&h, &moment, tol)?
            .map_err(SystemBuildError::NotInvariant)?;
        Ok(Self { label: label.into(), action, moment, h })
    }
}

impl<T: Real> SymmetricSystem<T> {
    /// Builds without the invariance gate. Only negative controls want
    /// this; every solver in the crate assumes an invariant Hamiltonian.
    pub fn new_unchecked(
        label: impl Into<String>,
        action: TorusAction<T>,
        moment: MomentMap<T>,
        h: Polynomial<T>,
    ) -> Self {
        Self { label: label.into(), action, moment, h }
    }
}

impl<T: Real> SymmetricSystem<T> {
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dof(&self) -> usize {
        self.action.dof()
    }

    pub fn phase_dim(&self) -> usize {
        self.action.phase_dim()
    }

    pub fn torus_dim(&self) -> usize {
        self.action.torus_dim()
    }

    pub fn action(&self) -> &TorusAction<T> {
        &self.action
    }

    pub fn moment(&self) -> &MomentMap<T> {
        &self.moment
    }

    pub fn hamiltonian(&self) -> &Polynomial<T> {
        &self.h
    }

    /// The augmented Hamiltonian `h_xi = h - <Phi | xi>`.
    pub fn augmented_hamiltonian(&self, xi: &DVector<T>) -> Result<Polynomial<T>, SymmetryError> {
        let pairing = self.moment.pairing(xi)?;
        Ok(self.h.sub(&pairing)?)
    }

    /// Gradient of `h_xi` at a point without forming the polynomial.
    pub fn augmented_gradient(&self, x: &DVector<T>, xi: &DVector<T>) -> Result<DVector<T>, SymmetryError> {
        let mut g = self.h.gradient_at(x.as_slice())?;
        for (i, phi) in self.moment.components().iter().enumerate() {
            g -= phi.gradient_at(x.as_slice())?.scale(xi[i]);
        }
        Ok(g)
    }
}

/// A solved relative equilibrium.
#[derive(Debug, Clone)]
pub struct RelativeEquilibrium<T> {
    /// Point on the orbit.
    pub x: DVector<T>,
    /// Velocity, reported as the minimal-norm gauge representative.
    pub xi: DVector<T>,
    /// Momentum `mu = Phi(x)`.
    pub mu: DVector<T>,
    /// `|grad h(x) - sum_i xi_i grad Phi_i(x)|` at the solution.
    pub residual: T,
    /// Orthonormal basis of the isotropy algebra at `x`.
    pub isotropy: Subspace<T>,
    pub iterations: usize,
}

/// Options for the relative-equilibrium search.
#[derive(Debug, Clone, Default)]
pub struct ReleqOptions<T> {
    /// Append `Phi(x) = mu` as extra equations.
    pub pin_momentum: Option<DVector<T>>,
    /// Accept `x0 = 0`, which every system with `Phi(0) = 0` admits.
    pub allow_trivial: bool,
}

/// Gauss-Newton search for a relative equilibrium from the guess
/// `(x0, xi0)`, taking minimal-norm steps through the SVD pseudoinverse so
/// group-orbit and gauge degeneracies need no explicit pinning rows.
pub fn find_relative_equilibrium<T: Real>(
    system: &SymmetricSystem<T>,
    x0: &DVector<T>,
    xi0: &DVector<T>,
    opts: &ReleqOptions<T>,
    tol: &Tolerances,
) -> Result<RelativeEquilibrium<T>, SolveError> {
    let dim = system.phase_dim();
    let k = system.torus_dim();
    if x0.len() != dim {
        return Err(SolveError::GuessDimension { expected: dim, found: x0.len() });
    }
    if xi0.len() != k {
        return Err(SolveError::GuessDimension { expected: k, found: xi0.len() });
    }
    if x0.norm() == T::zero() && !opts.allow_trivial {
        return Err(SolveError::TrivialGuess);
    }

    let pin = opts.pin_momentum.as_ref();
    if let Some(mu) = pin {
        if mu.len() != k {
            return Err(SolveError::GuessDimension { expected: k, found: mu.len() });
        }
    }
    let rows = dim + if pin.is_some() { k } else { 0 };

    let grad_scale = system.h.gradient_at(x0.as_slice())?.norm();
    let converged_at = T::of(tol.releq) * (T::one() + grad_scale);

    let mut x = x0.clone();
    let mut xi = xi0.clone();
    let mut residual_vec = DVector::zeros(rows);
    let mut last_residual = T::of(f64::INFINITY);

    for iter in 0..=tol.releq_max_iter {
        // Residual: grad h_xi(x), then optional momentum rows.
        let g = system.augmented_gradient(&x, &xi)?;
        for i in 0..dim {
            residual_vec[i] = g[i];
        }
        if let Some(mu) = pin {
            let phi = system.moment.values(x.as_slice())?;
            for i in 0..k {
                residual_vec[dim + i] = phi[i] - mu[i];
            }
        }
        last_residual = residual_vec.norm();
        if last_residual <= converged_at {
            return finish(system, x, xi, iter, tol);
        }
        if iter == tol.releq_max_iter {
            break;
        }

        // Jacobian: [Hess h_xi(x) | -grad Phi_i(x)] plus pin rows
        // [grad Phi_i(x)^T | 0].
        let mut jac = DMatrix::zeros(rows, dim + k);
        let h_xi_hess = {
            let mut m = system.h.hessian_at(x.as_slice())?;
            for (i, phi) in system.moment.components().iter().enumerate() {
                m -= phi.hessian_at(x.as_slice())?.scale(xi[i]);
            }
            m
        };
        jac.view_mut((0, 0), (dim, dim)).copy_from(&h_xi_hess);
        for (i, phi) in system.moment.components().iter().enumerate() {
            let gp = phi.gradient_at(x.as_slice())?;
            for r in 0..dim {
                jac[(r, dim + i)] = -gp[r];
            }
            if pin.is_some() {
                for c in 0..dim {
                    jac[(dim + i, c)] = gp[c];
                }
            }
        }

        let step = pinv_solve(&jac, &residual_vec, tol.rank)?;
        if step.norm() > T::of(tol.divergence) {
            return Err(SolveError::Divergence {
                step_norm: step.norm().to_subset().unwrap_or(f64::NAN),
            });
        }
        for i in 0..dim {
            x[i] -= step[i];
        }
        for i in 0..k {
            xi[i] -= step[dim + i];
        }
    }

    Err(SolveError::NonConvergence {
        iterations: tol.releq_max_iter,
        residual: last_residual.to_subset().unwrap_or(f64::NAN),
    })
}

fn finish<T: Real>(
    system: &SymmetricSystem<T>,
    x: DVector<T>,
    mut xi: DVector<T>,
    iterations: usize,
    tol: &Tolerances,
) -> Result<RelativeEquilibrium<T>, SolveError> {
    let isotropy = system.action.isotropy_algebra(&x, tol)?;
    // Minimal-norm gauge representative: gauge shifts do not move the
    // residual since grad <Phi|eta>(x) = 0 for eta in the isotropy algebra.
    if isotropy.dim() > 0 {
        let b = isotropy.basis();
        xi -= b * (b.transpose() * &xi);
    }
    let residual = system.augmented_gradient(&x, &xi)?.norm();
    let mu = system.moment.values(x.as_slice())?;
    Ok(RelativeEquilibrium { x, xi, mu, residual, isotropy, iterations })
}

/// Dynamic verification: how far the flow of `h` from `x` strays from the
/// rigid group motion `group(t xi) x`.
#[derive(Debug, Clone)]
pub struct ReleqVerification<T> {
    /// `(dt, max deviation over [0, T])`, at the requested step and its half.
    pub deviations: Vec<(T, T)>,
    /// Fitted convergence order under step halving, when measurable.
    pub order: Option<T>,
    pub pass: bool,
    pub deviation_tol: f64,
}

/// Integrates the flow of `h` from `re.x` over `[0, horizon]` and compares
/// against the exact group motion at every sample, at `dt` and `dt/2`.
pub fn verify_relative_equilibrium<T: Real>(
    system: &SymmetricSystem<T>,
    re: &RelativeEquilibrium<T>,
    horizon: T,
    dt: T,
    deviation_tol: f64,
    tol: &Tolerances,
) -> Result<ReleqVerification<T>, SolveError> {
    let mut deviations = Vec::new();
    let mut step = dt;
    for _ in 0..2 {
        let traj = flow::flow(&system.h, &[], &re.x, horizon, step, tol)?;
        let mut worst = T::zero();
        for (i, &t) in traj.times.iter().enumerate() {
            let g = system.action.group_element(&re.xi.scale(t));
            let d = (&traj.states[i] - g * &re.x).norm();
            if d > worst {
                worst = d;
            }
        }
        deviations.push((step, worst));
        step *= T::of(0.5);
    }
    let floor = T::of(1e-12) * (T::one() + re.x.norm());
    let order = if deviations.iter().all(|&(_, d)| d <= floor) {
        None
    } else {
        let (_, d0) = deviations[0];
        let (_, d1) = deviations[1];
        if d1 > T::zero() {
            Some((d0 / d1).ln() / T::of(2.0).ln())
        } else {
            None
        }
    };
    let pass = deviations[0].1 <= T::of(deviation_tol);
    Ok(ReleqVerification { deviations, order, pass, deviation_tol })
}
