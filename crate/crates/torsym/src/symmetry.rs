//! Linear torus actions presented by integer weight matrices: generators,
//! moment maps, group elements, isotropy algebras, and invariance checks.
//!
//! A `k x n` integer weight matrix `W` defines the action of the torus
//! `R^k / 2pi Z^k` on `R^(2n)` in which generator `i` rotates the canonical
//! plane `(q_j, p_j)` at rate `W[i][j]`. The moment-map sign is fixed by the
//! identity `X_{Phi_i} = A_i z`, which under `X_f = J grad f` forces
//! `Phi_i = 1/2 sum_j W[i][j] (q_j^2 + p_j^2)`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::config::Tolerances;
use crate::linalg::{self, LinalgError, Subspace};
use crate::poly::{PolyError, Polynomial};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum SymmetryError {
    #[error("weight matrix must have at least one row and one column")]
    EmptyWeights,
    #[error("weight matrix rows have inconsistent lengths")]
    RaggedWeights,
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// A linear symplectic torus action on `R^(2n)`.
#[derive(Debug, Clone)]
pub struct TorusAction<T> {
    n: usize,
    weights: Vec<Vec<i64>>,
    generators: Vec<DMatrix<T>>,
}

/// The quadratic moment map of a torus action, one polynomial per generator.
#[derive(Debug, Clone)]
pub struct MomentMap<T> {
    components: Vec<Polynomial<T>>,
}

impl<T: Real> TorusAction<T> {
    /// Torus dimension `k`.
    pub fn torus_dim(&self) -> usize {
        self.weights.len()
    }

    /// Degrees of freedom `n`.
    pub fn dof(&self) -> usize {
        self.n
    }

    /// Phase-space dimension `2n`.
    pub fn phase_dim(&self) -> usize {
        2 * self.n
    }

    pub fn weights(&self) -> &[Vec<i64>] {
        &self.weights
    }

    pub fn generators(&self) -> &[DMatrix<T>] {
        &self.generators
    }

    /// Linear combination `sum_i xi_i A_i` of the generators.
    pub fn generator_combination(&self, xi: &DVector<T>) -> DMatrix<T> {
        assert_eq!(xi.len(), self.torus_dim());
        let mut m = DMatrix::zeros(self.phase_dim(), self.phase_dim());
        for (i, a) in self.generators.iter().enumerate() {
            m += a.scale(xi[i]);
        }
        m
    }

    /// Group element for the phase vector `theta`, a block rotation by
    /// `alpha_j = sum_i W[i][j] theta_i` in the plane `(q_j, p_j)`.
    ///
    /// Phases are reduced modulo `2pi` per torus coordinate, making the map
    /// `2pi`-periodic in every component.
    pub fn group_element(&self, theta: &DVector<T>) -> DMatrix<T> {
        assert_eq!(theta.len(), self.torus_dim());
        let two_pi = T::TAU();
        let n = self.n;
        let mut g = DMatrix::zeros(2 * n, 2 * n);
        for j in 0..n {
            let mut alpha = T::zero();
            for (i, row) in self.weights.iter().enumerate() {
                let reduced = euclid_mod(theta[i], two_pi);
                alpha += T::of(row[j] as f64) * reduced;
            }
            alpha = euclid_mod(alpha, two_pi);
            let (s, c) = alpha.sin_cos();
            g[(j, j)] = c;
            g[(j, n + j)] = s;
            g[(n + j, j)] = -s;
            g[(n + j, n + j)] = c;
        }
        g
    }

    /// Orthonormal basis of the isotropy algebra
    /// `{ eta in R^k : (sum_i eta_i A_i) x = 0 }`.
    pub fn isotropy_algebra(&self, x: &DVector<T>, tol: &Tolerances) -> Result<Subspace<T>, SymmetryError> {
        let k = self.torus_dim();
        let mut m = DMatrix::zeros(self.phase_dim(), k);
        for (i, a) in self.generators.iter().enumerate() {
            m.set_column(i, &(a * x));
        }
        let scale = T::one() + x.norm();
        // The null-space cut is relative to max(1, sigma_max); fold the
        // point scale into the tolerance directly.
        let eff = tol.rank * scale.to_subset().unwrap_or(1.0);
        Ok(linalg::null_space(&m, eff)?)
    }
}

fn euclid_mod<T: Real>(x: T, period: T) -> T {
    let mut r = x - (x / period).floor() * period;
    if r >= period {
        r -= period;
    }
    if r < T::zero() {
        r += period;
    }
    r
}

/// Reduces every component of a phase vector into `[0, 2pi)`.
pub fn normalize_phase<T: Real>(theta: &DVector<T>) -> DVector<T> {
    theta.map(|t| euclid_mod(t, T::TAU()))
}

impl<T: Real> MomentMap<T> {
    pub fn components(&self) -> &[Polynomial<T>] {
        &self.components
    }

    pub fn torus_dim(&self) -> usize {
        self.components.len()
    }

    /// Evaluates all components at a point.
    pub fn values(&self, z: &[T]) -> Result<DVector<T>, SymmetryError> {
        let mut v = DVector::zeros(self.components.len());
        for (i, phi) in self.components.iter().enumerate() {
            v[i] = phi.evaluate(z)?;
        }
        Ok(v)
    }

    /// The pairing `<Phi | xi> = sum_i xi_i Phi_i` as a polynomial.
    pub fn pairing(&self, xi: &DVector<T>) -> Result<Polynomial<T>, SymmetryError> {
        assert_eq!(xi.len(), self.components.len());
        let nv = self.components[0].num_vars();
        let mut acc = Polynomial::zero(nv);
        for (i, phi) in self.components.iter().enumerate() {
            acc = acc.add(&phi.scale(xi[i]))?;
        }
        Ok(acc)
    }

    /// Jacobian `d Phi(x)`, a `k x 2n` matrix of component gradients.
    pub fn jacobian_at(&self, x: &[T]) -> Result<DMatrix<T>, SymmetryError> {
        let k = self.components.len();
        let nv = self.components[0].num_vars();
        let mut m = DMatrix::zeros(k, nv);
        for (i, phi) in self.components.iter().enumerate() {
            let g = phi.gradient_at(x)?;
            for c in 0..nv {
                m[(i, c)] = g[c];
            }
        }
        Ok(m)
    }
}

/// Builds the torus action and its moment map from an integer weight matrix.
pub fn build_action<T: Real>(weights: &[Vec<i64>]) -> Result<(TorusAction<T>, MomentMap<T>), SymmetryError> {
    if weights.is_empty() || weights[0].is_empty() {
        return Err(SymmetryError::EmptyWeights);
    }
    let n = weights[0].len();
    if weights.iter().any(|row| row.len() != n) {
        return Err(SymmetryError::RaggedWeights);
    }
    let mut generators = Vec::with_capacity(weights.len());
    let mut components = Vec::with_capacity(weights.len());
    for row in weights {
        // A_i = J D_i with D_i = diag(w_1..w_n, w_1..w_n).
        let mut a = DMatrix::zeros(2 * n, 2 * n);
        let mut phi = Polynomial::zero(2 * n);
        for (j, &w) in row.iter().enumerate() {
            let wt = T::of(w as f64);
            a[(j, n + j)] = wt;
            a[(n + j, j)] = -wt;
            let half_w = T::of(0.5) * wt;
            phi = phi.add(&Polynomial::monomial(2 * n, half_w, &[(j, 2)])?)?;
            phi = phi.add(&Polynomial::monomial(2 * n, half_w, &[(n + j, 2)])?)?;
        }
        generators.push(a);
        components.push(phi);
    }
    Ok((
        TorusAction { n, weights: weights.to_vec(), generators },
        MomentMap { components },
    ))
}

/// Witness of a failed invariance check: the first nonvanishing bracket.
#[derive(Debug, Clone)]
pub struct InvarianceViolation<T> {
    pub component: usize,
    pub bracket: Polynomial<T>,
    pub max_coeff: T,
}

impl<T: Real + std::fmt::Display> std::fmt::Display for InvarianceViolation<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{{h, Phi_{}}} = {} (max coefficient {})",
            self.component + 1,
            self.bracket,
            self.max_coeff
        )
    }
}

/// Passes iff every bracket `{h, Phi_i}` vanishes with coefficients at most
/// `invariance_rel` relative to the largest coefficient of `h`.
pub fn check_invariance<T: Real>(
    h: &Polynomial<T>,
    moment: &MomentMap<T>,
    tol: &Tolerances,
) -> Result<Result<(), InvarianceViolation<T>>, SymmetryError> {
    let scale = h.max_abs_coeff();
    let cut = T::of(tol.invariance_rel) * if scale > T::one() { scale } else { T::one() };
    for (i, phi) in moment.components.iter().enumerate() {
        let bracket = h.poisson_bracket(phi)?;
        let worst = bracket.max_abs_coeff();
        if worst > cut {
            return Ok(Err(InvarianceViolation { component: i, bracket, max_coeff: worst }));
        }
    }
    Ok(Ok(()))
}
