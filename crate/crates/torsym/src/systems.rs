//! Built-in example systems.
//!
//! Each entry fixes the degrees of freedom, an integer weight matrix, and an
//! invariant polynomial Hamiltonian. These are the systems the test suites
//! and the CLI exercise by name.

use nalgebra::DVector;

use crate::config::Tolerances;
use crate::poly::Polynomial;
use crate::releq::SymmetricSystem;
use crate::scalar::Real;
use crate::symmetry::build_action;

/// The harmonic action `I_j = 1/2 (q_j^2 + p_j^2)` as a polynomial in `2n`
/// variables.
pub fn harmonic_action<T: Real>(n: usize, j: usize) -> Polynomial<T> {
    let mut e1 = vec![0u32; 2 * n];
    e1[j] = 2;
    let mut e2 = vec![0u32; 2 * n];
    e2[n + j] = 2;
    Polynomial::from_terms(2 * n, &[(T::of(0.5), e1), (T::of(0.5), e2)])
        .expect("well-formed action monomial")
}

/// A registry entry: everything needed to build the system and to serialize
/// a definition file for it.
pub struct Builtin<T> {
    pub name: &'static str,
    pub description: &'static str,
    pub dof: usize,
    pub weights: Vec<Vec<i64>>,
    pub hamiltonian: Polynomial<T>,
    pub experimental: bool,
}

/// Names of all registered systems, in registry order.
pub fn builtin_names() -> &'static [&'static str] {
    &["osc11a", "osc11b", "t2osc", "vortex3"]
}

/// Looks up a built-in system by name.
pub fn builtin<T: Real>(name: &str) -> Option<Builtin<T>> {
    match name {
        "osc11a" => {
            let i1 = harmonic_action::<T>(2, 0);
            let i2 = harmonic_action::<T>(2, 1);
            let h = i1
                .add(&i2.scale(T::of(2.0)))
                .unwrap()
                .add(&i1.mul(&i1).unwrap())
                .unwrap()
                .add(&i2.mul(&i2).unwrap())
                .unwrap();
            Some(Builtin {
                name: "osc11a",
                description: "two detuned oscillators with the diagonal circle action",
                dof: 2,
                weights: vec![vec![1, 1]],
                hamiltonian: h,
                experimental: false,
            })
        }
        "osc11b" => {
            // osc11a plus the invariant coupling 0.1 (q1 q2 + p1 p2), which
            // is not a function of the actions alone.
            let base = builtin::<T>("osc11a")?.hamiltonian;
            let coupling = Polynomial::from_terms(4, &[
                (T::of(0.1), vec![1, 1, 0, 0]),
                (T::of(0.1), vec![0, 0, 1, 1]),
            ])
            .unwrap();
            Some(Builtin {
                name: "osc11b",
                description: "osc11a with an invariant non-action coupling",
                dof: 2,
                weights: vec![vec![1, 1]],
                hamiltonian: base.add(&coupling).unwrap(),
                experimental: false,
            })
        }
        "t2osc" => {
            let i1 = harmonic_action::<T>(3, 0);
            let i2 = harmonic_action::<T>(3, 1);
            let i3 = harmonic_action::<T>(3, 2);
            let h = i1
                .add(&i2.scale(T::of(2.0)))
                .unwrap()
                .add(&i3.scale(T::of(3.0)))
                .unwrap()
                .add(&i1.mul(&i1).unwrap())
                .unwrap()
                .add(&i2.mul(&i2).unwrap())
                .unwrap()
                .add(&i3.mul(&i3).unwrap())
                .unwrap();
            Some(Builtin {
                name: "t2osc",
                description: "three oscillators with a rank-two torus action",
                dof: 3,
                weights: vec![vec![1, 1, 0], vec![0, 0, 1]],
                hamiltonian: h,
                experimental: false,
            })
        }
        "vortex3" => {
            // Three identical planar points with a rotation-invariant
            // polynomial pair interaction V(s) = s^2/2 - s on the squared
            // separations; the equilateral configuration is a relative
            // equilibrium of the diagonal circle action.
            let n = 3;
            let mut h = Polynomial::zero(2 * n);
            for a in 0..n {
                for b in (a + 1)..n {
                    let s = pair_separation_sq::<T>(n, a, b);
                    let v = s.mul(&s).unwrap().scale(T::of(0.5)).sub(&s).unwrap();
                    h = h.add(&v).unwrap();
                }
            }
            Some(Builtin {
                name: "vortex3",
                description: "three identical points with polynomial pair interaction \
                              under planar rotation (experimental)",
                dof: 3,
                weights: vec![vec![1, 1, 1]],
                hamiltonian: h,
                experimental: true,
            })
        }
        _ => None,
    }
}

/// `(q_a - q_b)^2 + (p_a - p_b)^2` in `2n` variables.
fn pair_separation_sq<T: Real>(n: usize, a: usize, b: usize) -> Polynomial<T> {
    let one = T::one();
    let two = T::of(2.0);
    Polynomial::from_terms(2 * n, &[
        (one, single(2 * n, a, 2)),
        (one, single(2 * n, b, 2)),
        (-two, double(2 * n, a, b)),
        (one, single(2 * n, n + a, 2)),
        (one, single(2 * n, n + b, 2)),
        (-two, double(2 * n, n + a, n + b)),
    ])
    .unwrap()
}

fn single(nv: usize, i: usize, e: u32) -> Vec<u32> {
    let mut v = vec![0u32; nv];
    v[i] = e;
    v
}

fn double(nv: usize, i: usize, j: usize) -> Vec<u32> {
    let mut v = vec![0u32; nv];
    v[i] = 1;
    v[j] = 1;
    v
}

/// Builds the `SymmetricSystem` for a registry entry.
pub fn build_builtin<T: Real + std::fmt::Display>(
    name: &str,
    tol: &Tolerances,
) -> Option<SymmetricSystem<T>> {
    let b = builtin::<T>(name)?;
    let (action, moment) = build_action(&b.weights).ok()?;
    SymmetricSystem::new(b.name, action, moment, b.hamiltonian, tol).ok()
}

/// An equilateral configuration for `vortex3` at circumradius `r`,
/// useful as a relative-equilibrium guess.
pub fn equilateral_guess<T: Real>(r: T) -> DVector<T> {
    let mut z = DVector::zeros(6);
    for a in 0..3 {
        let angle = T::TAU() * T::of(a as f64) / T::of(3.0);
        z[a] = r * angle.cos();
        z[3 + a] = r * angle.sin();
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::releq::{find_relative_equilibrium, verify_relative_equilibrium, ReleqOptions};
    use crate::symmetry::check_invariance;

    #[test]
    fn all_builtins_are_invariant_systems() {
        let tol = Tolerances::default();
        for name in builtin_names() {
            let sys = build_builtin::<f64>(name, &tol)
                .unwrap_or_else(|| panic!("builtin {name} must build"));
            assert!(
                check_invariance(sys.hamiltonian(), sys.moment(), &tol).unwrap().is_ok(),
                "{name} must be invariant"
            );
        }
    }

    #[test]
    fn registry_rejects_unknown() {
        assert!(builtin::<f64>("nosuch").is_none());
    }

    #[test]
    fn osc11a_matches_hand_coefficients() {
        let b = builtin::<f64>("osc11a").unwrap();
        // 1/2 q1^2 + q2^2 + quartic terms from I1^2 + I2^2.
        let h = &b.hamiltonian;
        assert_eq!(h.num_terms(), 10);
        let q1q1 = h.terms().find(|(e, _)| e == &[2, 0, 0, 0]).unwrap().1;
        assert_eq!(q1q1, 0.5);
        let q2q2 = h.terms().find(|(e, _)| e == &[0, 2, 0, 0]).unwrap().1;
        assert_eq!(q2q2, 1.0);
        let q1p1 = h.terms().find(|(e, _)| e == &[2, 0, 2, 0]).unwrap().1;
        assert_eq!(q1p1, 0.5);
    }

    #[test]
    fn vortex3_equilateral_is_relative_equilibrium() {
        let tol = Tolerances::default();
        let sys = build_builtin::<f64>("vortex3", &tol).unwrap();
        let guess = equilateral_guess(0.8);
        // Perturb slightly; the solver should come back to an equilateral
        // ring rotating rigidly.
        let mut x0 = guess.clone();
        x0[0] += 0.03;
        let re = find_relative_equilibrium(
            &sys,
            &x0,
            &DVector::from_vec(vec![0.5]),
            &ReleqOptions::default(),
            &tol,
        )
        .unwrap();
        assert!(re.residual <= 1e-10);
        let report = verify_relative_equilibrium(&sys, &re, 5.0, 1e-3, 1e-5, &tol).unwrap();
        assert!(report.pass, "deviations {:?}", report.deviations);
    }
}
