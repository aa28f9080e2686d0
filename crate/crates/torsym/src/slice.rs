//! The symplectic slice at a relative equilibrium, the slice Hessian, its
//! inertia, and the velocity-gauge search.
//!
//! The slice is the maximal symplectic subspace of `ker dPhi(x)`, realized
//! as the Euclidean-orthogonal complement of the radical of the restricted
//! form. The radical must coincide with the group-orbit tangent
//! `T_x(G.x)`; that coincidence is checked, not assumed. The local model of
//! the invariant submanifold through `x` is the affine plane `x + range(P)`,
//! which agrees with it to second order — exactly what the Hessian and the
//! shooting seeds need.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::config::Tolerances;
use crate::linalg::{
    self, complement_within, max_principal_angle, min_singular_value, radical, restrict_form,
    Inertia, LinalgError, Subspace,
};
use crate::releq::{RelativeEquilibrium, SymmetricSystem};
use crate::scalar::Real;
use crate::symmetry::SymmetryError;

#[derive(Debug, Error)]
pub enum SliceError {
    #[error(
        "radical of the restricted form (dim {radical_dim}) does not match the orbit tangent \
         (dim {orbit_dim}, max principal angle {angle:e}); input is not torus-clean or the rank \
         tolerance failed"
    )]
    RadicalOrbitMismatch { radical_dim: usize, orbit_dim: usize, angle: f64 },
    #[error("restricted form is numerically degenerate (smallest singular value {0:e})")]
    DegenerateForm(f64),
    #[error("slice basis does not annihilate dPhi(x) (max entry {0:e})")]
    KernelViolation(f64),
    #[error("slice Hessian is not positive definite: inertia ({0}, {1}, {2})", .inertia.positive, .inertia.zero, .inertia.negative)]
    IndefiniteHessian { inertia: Inertia },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Symmetry(#[from] SymmetryError),
}

/// Geometry of the symplectic slice at a point: orthonormal basis `P`, the
/// restricted form `P^T J P`, and the dimensions that produced it.
#[derive(Debug, Clone)]
pub struct SliceGeometry<T> {
    pub basis: DMatrix<T>,
    pub omega: DMatrix<T>,
    pub kernel_dim: usize,
    pub orbit_dim: usize,
}

impl<T: Real> SliceGeometry<T> {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

/// The slice Hessian `P^T d^2(h - <Phi|xi>)(x) P` with its spectrum.
#[derive(Debug, Clone)]
pub struct SliceHessian<T> {
    pub matrix: DMatrix<T>,
    /// Eigenvalues, ascending.
    pub eigenvalues: DVector<T>,
    pub inertia: Inertia,
}

/// Geometry and Hessian bundled, as emitted by reports.
#[derive(Debug, Clone)]
pub struct SliceData<T> {
    pub geometry: SliceGeometry<T>,
    pub hessian: SliceHessian<T>,
}

/// Orthonormal basis of `ker dPhi(x)`.
pub fn kernel_dphi<T: Real>(
    system: &SymmetricSystem<T>,
    x: &DVector<T>,
    tol: &Tolerances,
) -> Result<Subspace<T>, SliceError> {
    let jac = system.moment().jacobian_at(x.as_slice())?;
    let scale = (T::one() + x.norm()).to_subset().unwrap_or(1.0);
    Ok(linalg::null_space(&jac, tol.rank * scale)?)
}

/// Orthonormalized span of the generator directions `A_i x`.
pub fn orbit_tangent<T: Real>(
    system: &SymmetricSystem<T>,
    x: &DVector<T>,
    tol: &Tolerances,
) -> Result<Subspace<T>, SliceError> {
    let k = system.torus_dim();
    let mut m = DMatrix::zeros(system.phase_dim(), k);
    for (i, a) in system.action().generators().iter().enumerate() {
        m.set_column(i, &(a * x));
    }
    let scale = (T::one() + x.norm()).to_subset().unwrap_or(1.0);
    Ok(Subspace::span(&m, tol.rank * scale)?)
}

/// Builds the symplectic slice at `re.x`: computes `ker dPhi(x)`, checks
/// that the radical of the restricted form is exactly the orbit tangent,
/// and returns the complement of the radical inside the kernel.
pub fn symplectic_slice<T: Real>(
    system: &SymmetricSystem<T>,
    re: &RelativeEquilibrium<T>,
    tol: &Tolerances,
) -> Result<SliceGeometry<T>, SliceError> {
    let kernel = kernel_dphi(system, &re.x, tol)?;
    symplectic_slice_from_kernel(system, re, &kernel, tol)
}

/// Slice construction from an explicitly given kernel basis.
///
/// The inertia of the slice Hessian is congruence-invariant, so any
/// orthonormal basis of `ker dPhi(x)` — for instance a randomly re-mixed
/// one — must produce the same signature; tests rely on this entry point.
pub fn symplectic_slice_from_kernel<T: Real>(
    system: &SymmetricSystem<T>,
    re: &RelativeEquilibrium<T>,
    kernel: &Subspace<T>,
    tol: &Tolerances,
) -> Result<SliceGeometry<T>, SliceError> {
    let orbit = orbit_tangent(system, &re.x, tol)?;
    let rad = radical(kernel, tol.rank)?;
    let angle = max_principal_angle(&rad, &orbit)?;
    if rad.dim() != orbit.dim() || angle > T::of(tol.radical_angle) {
        return Err(SliceError::RadicalOrbitMismatch {
            radical_dim: rad.dim(),
            orbit_dim: orbit.dim(),
            angle: angle.to_subset().unwrap_or(f64::NAN),
        });
    }

    let complement = complement_within(kernel, &rad, tol.rank)?;
    let basis = complement.into_basis();
    let omega = restrict_form(&basis);

    if basis.ncols() > 0 {
        let smin = min_singular_value(&omega);
        if smin < T::of(tol.omega_min_sv) {
            return Err(SliceError::DegenerateForm(smin.to_subset().unwrap_or(f64::NAN)));
        }
    }

    // Type invariant: the columns lie in ker dPhi(x).
    let jac = system.moment().jacobian_at(re.x.as_slice())?;
    let violation = (&jac * &basis).abs().max();
    if violation > T::of(1e-10) {
        return Err(SliceError::KernelViolation(violation.to_subset().unwrap_or(f64::NAN)));
    }

    Ok(SliceGeometry { basis, omega, kernel_dim: kernel.dim(), orbit_dim: orbit.dim() })
}

/// Slice Hessian of `h - <Phi|xi>` at `x` in the slice basis, with inertia.
pub fn slice_hessian<T: Real>(
    system: &SymmetricSystem<T>,
    x: &DVector<T>,
    xi: &DVector<T>,
    geometry: &SliceGeometry<T>,
    tol: &Tolerances,
) -> Result<SliceHessian<T>, SliceError> {
    let mut ambient = system.hamiltonian().hessian_at(x.as_slice()).map_err(SymmetryError::from)?;
    for (i, phi) in system.moment().components().iter().enumerate() {
        ambient -= phi.hessian_at(x.as_slice()).map_err(SymmetryError::from)?.scale(xi[i]);
    }
    let restricted = geometry.basis.transpose() * ambient * &geometry.basis;
    let sym = (&restricted + restricted.transpose()).scale(T::of(0.5));
    let eigenvalues = linalg::symmetric_eigenvalues(&sym)?;
    let inertia = linalg::inertia(&sym, tol.inertia)?;
    Ok(SliceHessian { matrix: sym, eigenvalues, inertia })
}

/// Geometry plus Hessian at the equilibrium's own velocity.
pub fn build_slice_data<T: Real>(
    system: &SymmetricSystem<T>,
    re: &RelativeEquilibrium<T>,
    tol: &Tolerances,
) -> Result<SliceData<T>, SliceError> {
    let geometry = symplectic_slice(system, re, tol)?;
    let hessian = slice_hessian(system, &re.x, &re.xi, &geometry, tol)?;
    Ok(SliceData { geometry, hessian })
}

/// Sample of the slice Hamiltonian `h_xi(x + P v) - h_xi(x)` at slice
/// coordinates `v`; zero with vanishing gradient at `v = 0`.
pub fn slice_hamiltonian_sample<T: Real>(
    system: &SymmetricSystem<T>,
    re: &RelativeEquilibrium<T>,
    geometry: &SliceGeometry<T>,
    v: &DVector<T>,
) -> Result<T, SliceError> {
    let h_xi = system.augmented_hamiltonian(&re.xi)?;
    let z = &re.x + &geometry.basis * v;
    let at_z = h_xi.evaluate(z.as_slice()).map_err(SymmetryError::from)?;
    let at_x = h_xi.evaluate(re.x.as_slice()).map_err(SymmetryError::from)?;
    Ok(at_z - at_x)
}

/// Result of the velocity-gauge search.
#[derive(Debug, Clone)]
pub struct GaugeSearch<T> {
    /// Chosen gauge representative of the velocity.
    pub xi: DVector<T>,
    /// Coefficients of the shift in the isotropy basis.
    pub coefficients: DVector<T>,
    pub hessian: SliceHessian<T>,
    /// Smallest slice-Hessian eigenvalue at the chosen gauge.
    pub lambda_min: T,
    pub definite: bool,
    pub evaluations: usize,
}

/// Searches the velocity gauge `xi + span(isotropy)` for the representative
/// whose slice Hessian has a balanced spectrum, reporting its inertia.
///
/// The gauge family is affine, `H(s) = H0 - sum_a s_a G_a`, so the search
/// normalizes the representative by minimizing the Frobenius distance of
/// `H(s)` from the identity with a compass pattern search (initial step and
/// shrink factor from the tolerance table). A gauge with indefinite
/// Hessian at the optimum is reported as `definite = false` ("no definite
/// gauge found"). When the isotropy algebra is trivial the equilibrium's
/// own velocity is returned unchanged.
pub fn optimize_velocity_gauge<T: Real>(
    system: &SymmetricSystem<T>,
    re: &RelativeEquilibrium<T>,
    geometry: &SliceGeometry<T>,
    tol: &Tolerances,
) -> Result<GaugeSearch<T>, SliceError> {
    let d = re.isotropy.dim();
    if d == 0 {
        let hessian = slice_hessian(system, &re.x, &re.xi, geometry, tol)?;
        let lambda_min = spectrum_min(&hessian);
        let definite = hessian.inertia.is_positive_definite();
        return Ok(GaugeSearch {
            xi: re.xi.clone(),
            coefficients: DVector::zeros(0),
            hessian,
            lambda_min,
            definite,
            evaluations: 0,
        });
    }

    let base = slice_hessian(system, &re.x, &re.xi, geometry, tol)?.matrix;
    let mut shifts = Vec::with_capacity(d);
    for a in 0..d {
        let eta = DVector::from_column_slice(re.isotropy.basis().column(a).as_slice());
        let pairing = system.moment().pairing(&eta)?;
        let amb = pairing.hessian_at(re.x.as_slice()).map_err(SymmetryError::from)?;
        shifts.push(geometry.basis.transpose() * amb * &geometry.basis);
    }

    let dim = geometry.dim();
    let objective = |s: &DVector<T>| -> T {
        let mut m = base.clone();
        for a in 0..d {
            m -= shifts[a].scale(s[a]);
        }
        let mut f = T::zero();
        for i in 0..dim {
            m[(i, i)] -= T::one();
        }
        for v in m.iter() {
            f += *v * *v;
        }
        f
    };

    let mut s = DVector::zeros(d);
    let mut best = objective(&s);
    let mut evals = 1usize;
    let mut step = T::of(tol.gauge_step);
    let min_step = T::of(tol.gauge_min_step);
    while step >= min_step && evals < tol.gauge_max_evals {
        let mut improved = false;
        let mut best_cand = s.clone();
        let mut best_val = best;
        for a in 0..d {
            for dir in [T::one(), -T::one()] {
                if evals >= tol.gauge_max_evals {
                    break;
                }
                let mut cand = s.clone();
                cand[a] += dir * step;
                let val = objective(&cand);
                evals += 1;
                if val < best_val {
                    best_val = val;
                    best_cand = cand;
                    improved = true;
                }
            }
        }
        if improved {
            s = best_cand;
            best = best_val;
        } else {
            step *= T::of(tol.gauge_shrink);
        }
    }

    let xi = &re.xi + re.isotropy.basis() * &s;
    let hessian = slice_hessian(system, &re.x, &xi, geometry, tol)?;
    let lambda_min = spectrum_min(&hessian);
    let definite = hessian.inertia.is_positive_definite();
    Ok(GaugeSearch { xi, coefficients: s, hessian, lambda_min, definite, evaluations: evals })
}

fn spectrum_min<T: Real>(h: &SliceHessian<T>) -> T {
    if h.eigenvalues.is_empty() {
        T::zero()
    } else {
        h.eigenvalues[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::releq::{find_relative_equilibrium, ReleqOptions};
    use crate::symmetry::build_action;
    use crate::poly::Polynomial;

    type P = Polynomial<f64>;

    fn action_var(n: usize, j: usize) -> P {
        let mut e1 = vec![0u32; 2 * n];
        e1[j] = 2;
        let mut e2 = vec![0u32; 2 * n];
        e2[n + j] = 2;
        P::from_terms(2 * n, &[(0.5, e1), (0.5, e2)]).unwrap()
    }

    fn osc11a() -> SymmetricSystem<f64> {
        let tol = Tolerances::default();
        let (action, moment) = build_action(&[vec![1, 1]]).unwrap();
        let i1 = action_var(2, 0);
        let i2 = action_var(2, 1);
        let h = i1
            .add(&i2.scale(2.0))
            .unwrap()
            .add(&i1.mul(&i1).unwrap())
            .unwrap()
            .add(&i2.mul(&i2).unwrap())
            .unwrap();
        SymmetricSystem::new("osc11a", action, moment, h, &tol).unwrap()
    }

    fn first_mode_re(sys: &SymmetricSystem<f64>) -> RelativeEquilibrium<f64> {
        let tol = Tolerances::default();
        let opts = ReleqOptions {
            pin_momentum: Some(DVector::from_vec(vec![0.045])),
            ..Default::default()
        };
        find_relative_equilibrium(
            sys,
            &DVector::from_vec(vec![0.31, 0.0, 0.0, 0.0]),
            &DVector::from_vec(vec![1.0]),
            &opts,
            &tol,
        )
        .unwrap()
    }

    fn origin_re(sys: &SymmetricSystem<f64>) -> RelativeEquilibrium<f64> {
        let tol = Tolerances::default();
        let opts = ReleqOptions { allow_trivial: true, ..Default::default() };
        find_relative_equilibrium(
            sys,
            &DVector::from_vec(vec![0.0; 4]),
            &DVector::from_vec(vec![0.0]),
            &opts,
            &tol,
        )
        .unwrap()
    }

    #[test]
    fn kernel_dimensions() {
        let sys = osc11a();
        let tol = Tolerances::default();
        let x = DVector::from_vec(vec![0.3, 0.0, 0.0, 0.0]);
        assert_eq!(kernel_dphi(&sys, &x, &tol).unwrap().dim(), 3);
        let zero = DVector::from_vec(vec![0.0; 4]);
        assert_eq!(kernel_dphi(&sys, &zero, &tol).unwrap().dim(), 4);
    }

    #[test]
    fn kernel_with_product_action() {
        let tol = Tolerances::default();
        let (action, moment) = build_action(&[vec![1, 0], vec![0, 1]]).unwrap();
        let h = action_var(2, 0).add(&action_var(2, 1)).unwrap();
        let sys = SymmetricSystem::new("prod", action, moment, h, &tol).unwrap();
        let x = DVector::from_vec(vec![0.3, 0.0, 0.0, 0.0]);
        assert_eq!(kernel_dphi(&sys, &x, &tol).unwrap().dim(), 3);
    }

    #[test]
    fn orbit_tangent_cases() {
        let sys = osc11a();
        let tol = Tolerances::default();
        let x = DVector::from_vec(vec![0.3, 0.0, 0.0, 0.0]);
        let orbit = orbit_tangent(&sys, &x, &tol).unwrap();
        assert_eq!(orbit.dim(), 1);
        // A1 x = -0.3 e_{p1}: the span is the p1 axis.
        let b = orbit.basis().column(0);
        assert!(b[0].abs() < 1e-14 && b[1].abs() < 1e-14 && b[3].abs() < 1e-14);
        assert!((b[2].abs() - 1.0).abs() < 1e-14);

        let zero = DVector::from_vec(vec![0.0; 4]);
        assert_eq!(orbit_tangent(&sys, &zero, &tol).unwrap().dim(), 0);
    }

    #[test]
    fn slice_at_first_mode() {
        let sys = osc11a();
        let tol = Tolerances::default();
        let re = first_mode_re(&sys);
        let geom = symplectic_slice(&sys, &re, &tol).unwrap();
        assert_eq!(geom.kernel_dim, 3);
        assert_eq!(geom.orbit_dim, 1);
        assert_eq!(geom.dim(), 2);
        // omega_V is the canonical 2x2 block up to basis orientation.
        let omega = &geom.omega;
        assert!((omega[(0, 0)].abs()).max(omega[(1, 1)].abs()) < 1e-12);
        assert!((omega[(0, 1)].abs() - 1.0).abs() < 1e-12);
        assert!((omega[(0, 1)] + omega[(1, 0)]).abs() < 1e-12);

        let hess = slice_hessian(&sys, &re.x, &re.xi, &geom, &tol).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![0.91, 0.91]));
        assert!((&hess.matrix - expected).abs().max() < 1e-10);
        assert_eq!(hess.inertia, Inertia { positive: 2, zero: 0, negative: 0 });
    }

    #[test]
    fn slice_at_origin_is_full_space() {
        let sys = osc11a();
        let tol = Tolerances::default();
        let re = origin_re(&sys);
        let geom = symplectic_slice(&sys, &re, &tol).unwrap();
        assert_eq!(geom.dim(), 4);
        assert_eq!(geom.kernel_dim, 4);
        assert_eq!(geom.orbit_dim, 0);

        // The slice Hessian is the ambient Hessian of h at 0 in this basis.
        let hess = slice_hessian(&sys, &re.x, &re.xi, &geom, &tol).unwrap();
        let ambient = sys.hamiltonian().hessian_at(&[0.0; 4]).unwrap();
        let expected = geom.basis.transpose() * ambient * &geom.basis;
        assert!((&hess.matrix - expected).abs().max() < 1e-14);
        assert_eq!(hess.inertia, Inertia { positive: 4, zero: 0, negative: 0 });
        let evs = &hess.eigenvalues;
        for (got, want) in evs.iter().zip([1.0, 1.0, 2.0, 2.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn inertia_invariant_under_kernel_remix() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let sys = osc11a();
        let tol = Tolerances::default();
        let re = first_mode_re(&sys);
        let kernel = kernel_dphi(&sys, &re.x, &tol).unwrap();
        let reference = {
            let geom = symplectic_slice_from_kernel(&sys, &re, &kernel, &tol).unwrap();
            slice_hessian(&sys, &re.x, &re.xi, &geom, &tol).unwrap().inertia
        };
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..5 {
            let raw = DMatrix::from_fn(kernel.dim(), kernel.dim(), |_, _| {
                rng.random_range(-1.0..1.0f64)
            });
            let q = raw.qr().q();
            let remixed = Subspace::from_orthonormal(kernel.basis() * q).unwrap();
            let geom = symplectic_slice_from_kernel(&sys, &re, &remixed, &tol).unwrap();
            let h = slice_hessian(&sys, &re.x, &re.xi, &geom, &tol).unwrap();
            assert_eq!(h.inertia, reference);
        }
    }

    #[test]
    fn gauge_search_balances_origin_spectrum() {
        let sys = osc11a();
        let tol = Tolerances::default();
        let re = origin_re(&sys);
        let geom = symplectic_slice(&sys, &re, &tol).unwrap();
        let search = optimize_velocity_gauge(&sys, &re, &geom, &tol).unwrap();
        assert!(search.definite);
        assert!((search.coefficients[0] - 0.5).abs() < 1e-6, "s = {}", search.coefficients[0]);
        assert!((search.lambda_min - 0.5).abs() < 1e-6, "lambda_min = {}", search.lambda_min);
        assert!(search.evaluations <= tol.gauge_max_evals);
    }

    #[test]
    fn gauge_search_trivial_isotropy_returns_input() {
        let sys = osc11a();
        let tol = Tolerances::default();
        let re = first_mode_re(&sys);
        let geom = symplectic_slice(&sys, &re, &tol).unwrap();
        let search = optimize_velocity_gauge(&sys, &re, &geom, &tol).unwrap();
        assert_eq!(search.evaluations, 0);
        assert_eq!(search.xi, re.xi);
        assert!(search.definite);
    }

    #[test]
    fn gauge_search_reports_indefinite() {
        // h = -I1 - I2 + I1^2 + I2^2 with weights (1, -1): the gauge shift
        // diag(s, -s, s, -s) can never make diag(-1,-1,-1,-1) definite.
        let tol = Tolerances::default();
        let (action, moment) = build_action(&[vec![1, -1]]).unwrap();
        let i1 = action_var(2, 0);
        let i2 = action_var(2, 1);
        let h = i1
            .scale(-1.0)
            .add(&i2.scale(-1.0))
            .unwrap()
            .add(&i1.mul(&i1).unwrap())
            .unwrap()
            .add(&i2.mul(&i2).unwrap())
            .unwrap();
        let sys = SymmetricSystem::new("rigged", action, moment, h, &tol).unwrap();
        let opts = ReleqOptions { allow_trivial: true, ..Default::default() };
        let re = find_relative_equilibrium(
            &sys,
            &DVector::from_vec(vec![0.0; 4]),
            &DVector::from_vec(vec![0.0]),
            &opts,
            &tol,
        )
        .unwrap();
        let geom = symplectic_slice(&sys, &re, &tol).unwrap();
        let search = optimize_velocity_gauge(&sys, &re, &geom, &tol).unwrap();
        assert!(!search.definite, "inertia {:?}", search.hessian.inertia);
    }

    #[test]
    fn sample_matches_quadratic_model() {
        let sys = osc11a();
        let tol = Tolerances::default();
        let re = first_mode_re(&sys);
        let geom = symplectic_slice(&sys, &re, &tol).unwrap();

        let zero = DVector::zeros(2);
        assert_eq!(slice_hamiltonian_sample(&sys, &re, &geom, &zero).unwrap(), 0.0);

        // Quadratic fit at small displacements recovers the 0.91 curvature.
        let sample = |d: f64| {
            slice_hamiltonian_sample(&sys, &re, &geom, &DVector::from_vec(vec![d, 0.0])).unwrap()
        };
        let d1 = 1e-3;
        let d2 = 2e-3;
        let (f1, f2) = (sample(d1), sample(d2));
        // Solve f = a d^2/2 + b d^4-ish by dropping the quartic: use the
        // Richardson combination (16 f1 - f2) eliminating the d^4 term.
        let a = (16.0 * f1 - f2) / (16.0 * d1 * d1 / 2.0 - d2 * d2 / 2.0);
        assert!((a - 0.91).abs() < 1e-5, "curvature {a}");

        // Central-difference gradient at 0 vanishes.
        let g = (sample(1e-5) - sample(-1e-5)) / 2e-5;
        assert!(g.abs() < 1e-10);
    }

    #[test]
    fn slice_dim_is_kernel_minus_orbit_and_even() {
        let sys = osc11a();
        let tol = Tolerances::default();
        for re in [first_mode_re(&sys), origin_re(&sys)] {
            let geom = symplectic_slice(&sys, &re, &tol).unwrap();
            assert_eq!(geom.dim(), geom.kernel_dim - geom.orbit_dim);
            assert_eq!(geom.dim() % 2, 0);
        }
    }
}
