//! Symplectic time integration of polynomial Hamiltonian flows.
//!
//! The single integrator is the implicit midpoint rule, which is second
//! order, time reversible, and conserves every quadratic first integral up
//! to the inner-solve residual. Moment-map components are quadratic, so
//! moment conservation is a sharp test here rather than a drift bound.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::config::Tolerances;
use crate::linalg::hamiltonian_vector_field;
use crate::poly::{CompiledPoly, PolyError, Polynomial, PowerTable};
use crate::releq::SymmetricSystem;
use crate::scalar::Real;
use crate::symmetry::SymmetryError;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("midpoint inner solve failed at t = {t}: residual {residual}")]
    InnerSolveFailed { t: f64, residual: f64 },
    #[error("state became non-finite at t = {0}")]
    NonFiniteState(f64),
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Symmetry(#[from] SymmetryError),
}

/// Precompiled Hamiltonian vector field with its Jacobian, ready for
/// repeated midpoint steps.
pub struct HamiltonianFlow<T> {
    dim: usize,
    h: CompiledPoly<T>,
    field: Vec<CompiledPoly<T>>,
    field_jac: Vec<CompiledPoly<T>>,
    max_deg: u32,
}

impl<T: Real> HamiltonianFlow<T> {
    pub fn new(h: &Polynomial<T>) -> Result<Self, FlowError> {
        let dim = h.num_vars();
        let field_polys = hamiltonian_vector_field(h).map_err(|e| match e {
            crate::linalg::LinalgError::Poly(p) => FlowError::Poly(p),
            _ => FlowError::Poly(PolyError::OddVariableCount(dim)),
        })?;
        let mut field = Vec::with_capacity(dim);
        let mut field_jac = Vec::with_capacity(dim * dim);
        let mut max_deg = 1;
        for comp in &field_polys {
            for c in 0..dim {
                let d = comp.partial(c)?.compile();
                max_deg = max_deg.max(d.max_deg());
                field_jac.push(d);
            }
            let cp = comp.compile();
            max_deg = max_deg.max(cp.max_deg());
            field.push(cp);
        }
        let hc = h.compile();
        max_deg = max_deg.max(hc.max_deg());
        Ok(Self { dim, h: hc, field, field_jac, max_deg })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn power_table(&self) -> PowerTable<T> {
        PowerTable::new(self.dim, self.max_deg)
    }

    pub fn energy(&self, z: &DVector<T>) -> T {
        self.h.eval_at(z.as_slice())
    }

    /// Value of the Hamiltonian vector field at a point.
    pub fn field_at(&self, z: &DVector<T>) -> DVector<T> {
        let mut table = self.power_table();
        let mut out = DVector::zeros(self.dim);
        self.eval_field(z, &mut table, &mut out);
        out
    }

    fn eval_field(&self, z: &DVector<T>, table: &mut PowerTable<T>, out: &mut DVector<T>) {
        table.fill(z.as_slice());
        for i in 0..self.dim {
            out[i] = self.field[i].eval(table);
        }
    }

    fn eval_field_jac(&self, table: &PowerTable<T>, out: &mut DMatrix<T>) {
        for r in 0..self.dim {
            for c in 0..self.dim {
                out[(r, c)] = self.field_jac[r * self.dim + c].eval(table);
            }
        }
    }

    /// One implicit midpoint step `z' = z + dt X_h((z + z')/2)`, solved by
    /// Newton iteration with the exact polynomial Jacobian of the field and
    /// a fixed-point fallback when the Newton matrix is singular.
    pub fn step(&self, z: &DVector<T>, dt: T, tol: &Tolerances) -> Result<DVector<T>, FlowError> {
        let dim = self.dim;
        let mut table = self.power_table();
        let mut fx = DVector::zeros(dim);

        // Explicit Euler predictor.
        self.eval_field(z, &mut table, &mut fx);
        let mut zp = z + &fx * dt;

        let scale = T::one() + z.norm();
        let accept = T::of(tol.inner_residual) * scale;
        // Iterate past the acceptance bound while progress continues, so
        // quadratic invariants are conserved to round-off per step.
        let floor = T::of(1e-16) * scale;
        let half_dt = dt * T::of(0.5);

        let mut best_res = T::of(f64::INFINITY);
        let mut best_zp = zp.clone();
        let mut jac = DMatrix::zeros(dim, dim);
        let mut mid = DVector::zeros(dim);

        for _ in 0..40 {
            for i in 0..dim {
                mid[i] = (z[i] + zp[i]) * T::of(0.5);
            }
            self.eval_field(&mid, &mut table, &mut fx);
            let mut res = T::zero();
            for i in 0..dim {
                let g = zp[i] - z[i] - dt * fx[i];
                let a = g.abs();
                if a > res {
                    res = a;
                }
            }
            if res < best_res {
                best_res = res;
                best_zp.copy_from(&zp);
            } else if best_res <= accept {
                break;
            }
            if res <= floor {
                break;
            }

            // Newton matrix I - dt/2 DX at the midpoint (table still holds mid).
            self.eval_field_jac(&table, &mut jac);
            let mut newton = -&jac * half_dt;
            for i in 0..dim {
                newton[(i, i)] += T::one();
            }
            let mut g = DVector::zeros(dim);
            for i in 0..dim {
                g[i] = zp[i] - z[i] - dt * fx[i];
            }
            match newton.lu().solve(&g) {
                Some(delta) => zp -= delta,
                None => {
                    // Fixed-point fallback.
                    for i in 0..dim {
                        zp[i] = z[i] + dt * fx[i];
                    }
                }
            }
        }

        if !(best_res <= accept) {
            return Err(FlowError::InnerSolveFailed {
                t: 0.0,
                residual: best_res.to_subset().unwrap_or(f64::NAN),
            });
        }
        if best_zp.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::NonFiniteState(0.0));
        }
        Ok(best_zp)
    }
}

/// One implicit midpoint step of the flow of `h`.
pub fn implicit_midpoint_step<T: Real>(
    h: &Polynomial<T>,
    z: &DVector<T>,
    dt: T,
    tol: &Tolerances,
) -> Result<DVector<T>, FlowError> {
    HamiltonianFlow::new(h)?.step(z, dt, tol)
}

/// An integrated trajectory with sampled conserved quantities.
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<DVector<T>>,
    pub h_values: Vec<T>,
    /// Per-sample values of the requested invariants (moment components).
    pub invariant_values: Vec<Vec<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn final_state(&self) -> &DVector<T> {
        self.states.last().expect("trajectory has at least the initial sample")
    }

    /// Largest drift `|I_i(z_t) - I_i(z_0)|` over all samples, per invariant.
    pub fn max_invariant_drift(&self) -> Vec<T> {
        if self.invariant_values.is_empty() {
            return Vec::new();
        }
        let k = self.invariant_values[0].len();
        let first = &self.invariant_values[0];
        let mut worst = vec![T::zero(); k];
        for row in &self.invariant_values {
            for i in 0..k {
                let d = (row[i] - first[i]).abs();
                if d > worst[i] {
                    worst[i] = d;
                }
            }
        }
        worst
    }
}

fn plan_steps<T: Real>(total: T, dt: T) -> (usize, T) {
    let ratio = total / dt;
    let whole = ratio.floor();
    let mut steps = whole.to_subset().unwrap_or(0.0) as usize;
    let mut rem = total - T::of(steps as f64) * dt;
    // Absorb a remainder at round-off scale into the step count.
    if rem <= dt * T::of(1e-12) {
        rem = T::zero();
    } else if (dt - rem).abs() <= dt * T::of(1e-12) {
        steps += 1;
        rem = T::zero();
    }
    (steps, rem)
}

/// Integrates the flow of `h` over `[0, total]`, sampling every step and
/// recording `h` and the given invariants. A final partial step lands
/// exactly on `total`.
pub fn flow<T: Real>(
    h: &Polynomial<T>,
    invariants: &[Polynomial<T>],
    z0: &DVector<T>,
    total: T,
    dt: T,
    tol: &Tolerances,
) -> Result<Trajectory<T>, FlowError> {
    if dt <= T::zero() {
        return Err(FlowError::NonPositiveStep(dt.to_subset().unwrap_or(f64::NAN)));
    }
    let engine = HamiltonianFlow::new(h)?;
    let inv: Vec<CompiledPoly<T>> = invariants.iter().map(|p| p.compile()).collect();
    let sample = |z: &DVector<T>| -> Vec<T> { inv.iter().map(|p| p.eval_at(z.as_slice())).collect() };

    let (steps, rem) = plan_steps(total, dt);
    let mut times = Vec::with_capacity(steps + 2);
    let mut states = Vec::with_capacity(steps + 2);
    let mut h_values = Vec::with_capacity(steps + 2);
    let mut invariant_values = Vec::with_capacity(steps + 2);

    let mut t = T::zero();
    let mut z = z0.clone();
    times.push(t);
    h_values.push(engine.energy(&z));
    invariant_values.push(sample(&z));
    states.push(z.clone());

    for _ in 0..steps {
        z = engine.step(&z, dt, tol).map_err(|e| stamp_time(e, t))?;
        t += dt;
        times.push(t);
        h_values.push(engine.energy(&z));
        invariant_values.push(sample(&z));
        states.push(z.clone());
    }
    if rem > T::zero() {
        z = engine.step(&z, rem, tol).map_err(|e| stamp_time(e, t))?;
        times.push(total);
        h_values.push(engine.energy(&z));
        invariant_values.push(sample(&z));
        states.push(z.clone());
    }
    Ok(Trajectory { times, states, h_values, invariant_values })
}

fn stamp_time<T>(e: FlowError, t: T) -> FlowError
where
    T: Real,
{
    match e {
        FlowError::InnerSolveFailed { residual, .. } => FlowError::InnerSolveFailed {
            t: t.to_subset().unwrap_or(f64::NAN),
            residual,
        },
        FlowError::NonFiniteState(_) => FlowError::NonFiniteState(t.to_subset().unwrap_or(f64::NAN)),
        other => other,
    }
}

/// Endpoint of the flow of `h` after time `total`, without sampling.
pub fn flow_map<T: Real>(
    h: &Polynomial<T>,
    z0: &DVector<T>,
    total: T,
    dt: T,
    tol: &Tolerances,
) -> Result<DVector<T>, FlowError> {
    let engine = HamiltonianFlow::new(h)?;
    flow_map_with(&engine, z0, total, dt, tol)
}

/// Endpoint of the flow using an already-compiled engine.
pub fn flow_map_with<T: Real>(
    engine: &HamiltonianFlow<T>,
    z0: &DVector<T>,
    total: T,
    dt: T,
    tol: &Tolerances,
) -> Result<DVector<T>, FlowError> {
    if dt <= T::zero() {
        return Err(FlowError::NonPositiveStep(dt.to_subset().unwrap_or(f64::NAN)));
    }
    let (steps, rem) = plan_steps(total, dt);
    let mut z = z0.clone();
    let mut t = T::zero();
    for _ in 0..steps {
        z = engine.step(&z, dt, tol).map_err(|e| stamp_time(e, t))?;
        t += dt;
    }
    if rem > T::zero() {
        z = engine.step(&z, rem, tol).map_err(|e| stamp_time(e, t))?;
    }
    Ok(z)
}

/// Jacobian of the time-`total` flow map by central finite differences with
/// step `1e-6 (1 + |z0|)` per coordinate.
pub fn flow_jacobian<T: Real>(
    h: &Polynomial<T>,
    z0: &DVector<T>,
    total: T,
    dt: T,
    tol: &Tolerances,
) -> Result<DMatrix<T>, FlowError> {
    let engine = HamiltonianFlow::new(h)?;
    flow_jacobian_with(&engine, z0, total, dt, tol)
}

/// Flow-map Jacobian using an already-compiled engine.
pub fn flow_jacobian_with<T: Real>(
    engine: &HamiltonianFlow<T>,
    z0: &DVector<T>,
    total: T,
    dt: T,
    tol: &Tolerances,
) -> Result<DMatrix<T>, FlowError> {
    let dim = engine.dim();
    let delta = T::of(1e-6) * (T::one() + z0.norm());
    let mut jac = DMatrix::zeros(dim, dim);
    for c in 0..dim {
        let mut plus = z0.clone();
        plus[c] += delta;
        let mut minus = z0.clone();
        minus[c] -= delta;
        let zp = flow_map_with(engine, &plus, total, dt, tol)?;
        let zm = flow_map_with(engine, &minus, total, dt, tol)?;
        let inv = T::one() / (delta + delta);
        for r in 0..dim {
            jac[(r, c)] = (zp[r] - zm[r]) * inv;
        }
    }
    Ok(jac)
}

/// Outcome of checking the splitting of the flow of `h - <Phi|xi>` into the
/// group drift composed with the flow of `h`.
#[derive(Debug, Clone)]
pub struct FlowIdentityReport<T> {
    /// `(dt, max discrepancy over [0, T])` for each step size tried.
    pub discrepancies: Vec<(T, T)>,
    /// Fitted convergence order under step halving, when measurable.
    pub order: Option<T>,
    pub h_invariant: bool,
    pub pass: bool,
}

/// Verifies `flow_{h - <Phi|xi>}^t = group(-t xi) . flow_h^t` over `[0, T]`
/// at step sizes `dt, dt/2, dt/4`, reporting the maximum discrepancy and the
/// fitted convergence order.
///
/// The right-hand side uses the exact group element, which is the exact flow
/// of `-<Phi|xi>`.
pub fn verify_flow_identity<T: Real>(
    system: &SymmetricSystem<T>,
    xi: &DVector<T>,
    z0: &DVector<T>,
    total: T,
    dt: T,
    tol: &Tolerances,
) -> Result<FlowIdentityReport<T>, FlowError> {
    let h_invariant = crate::symmetry::check_invariance(system.hamiltonian(), system.moment(), tol)?
        .is_ok();
    let h_xi = system.augmented_hamiltonian(xi)?;

    let mut discrepancies = Vec::new();
    let mut step = dt;
    for _ in 0..3 {
        let left = flow(&h_xi, &[], z0, total, step, tol)?;
        let right = flow(system.hamiltonian(), &[], z0, total, step, tol)?;
        debug_assert_eq!(left.times.len(), right.times.len());
        let mut worst = T::zero();
        for (i, &t) in left.times.iter().enumerate() {
            let g = system.action().group_element(&(xi.scale(-t)));
            let expected = &g * &right.states[i];
            let d = (&left.states[i] - expected).norm();
            if d > worst {
                worst = d;
            }
        }
        discrepancies.push((step, worst));
        step *= T::of(0.5);
    }

    let floor = T::of(1e-12) * (T::one() + z0.norm());
    let below_floor = discrepancies.iter().all(|&(_, d)| d <= floor);
    let order = if below_floor {
        None
    } else {
        let mut rates = Vec::new();
        for w in discrepancies.windows(2) {
            let (_, d0) = w[0];
            let (_, d1) = w[1];
            if d1 > T::zero() {
                rates.push((d0 / d1).ln() / T::of(2.0).ln());
            }
        }
        if rates.is_empty() {
            None
        } else {
            let sum = rates.iter().fold(T::zero(), |a, &b| a + b);
            Some(sum / T::of(rates.len() as f64))
        }
    };

    let pass = h_invariant && (below_floor || order.map_or(false, |o| o >= T::of(1.9)));
    Ok(FlowIdentityReport { discrepancies, order, h_invariant, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Polynomial;

    type P = Polynomial<f64>;

    fn harmonic() -> P {
        P::from_terms(2, &[(0.5, vec![2, 0]), (0.5, vec![0, 2])]).unwrap()
    }

    #[test]
    fn midpoint_step_is_exact_rotation_formula() {
        // For h = 1/2(q^2+p^2) one midpoint step rotates by 2 atan(dt/2).
        let tol = Tolerances::default();
        let z = DVector::from_vec(vec![1.0, 0.0]);
        let dt = 0.1;
        let z1 = implicit_midpoint_step(&harmonic(), &z, dt, &tol).unwrap();
        let angle = 2.0 * (dt / 2.0_f64).atan();
        assert!((angle - 0.09991679144388552).abs() < 1e-15);
        let expected = DVector::from_vec(vec![angle.cos(), -angle.sin()]);
        assert!((z1 - expected).norm() < 1e-13);
    }

    #[test]
    fn constant_hamiltonian_fixes_state() {
        let tol = Tolerances::default();
        let h = P::constant(2, 4.2);
        let z = DVector::from_vec(vec![0.3, -0.7]);
        let z1 = implicit_midpoint_step(&h, &z, 0.25, &tol).unwrap();
        assert_eq!(z1, z);
    }

    #[test]
    fn step_is_time_reversible() {
        let tol = Tolerances::default();
        let h = P::from_terms(2, &[
            (0.5, vec![2, 0]),
            (0.5, vec![0, 2]),
            (0.25, vec![4, 0]),
        ])
        .unwrap();
        let engine = HamiltonianFlow::new(&h).unwrap();
        let z = DVector::from_vec(vec![0.9, -0.4]);
        let fwd = engine.step(&z, 0.05, &tol).unwrap();
        let back = engine.step(&fwd, -0.05, &tol).unwrap();
        assert!((back - z).norm() < 1e-12);
    }

    #[test]
    fn harmonic_period_closes() {
        let tol = Tolerances::default();
        let z0 = DVector::from_vec(vec![1.0, 0.0]);
        let traj = flow(&harmonic(), &[], &z0, 2.0 * std::f64::consts::PI, 1e-3, &tol).unwrap();
        assert!((traj.final_state() - &z0).norm() < 1e-5);
    }

    #[test]
    fn zero_horizon_returns_start() {
        let tol = Tolerances::default();
        let z0 = DVector::from_vec(vec![0.4, 0.2]);
        let end = flow_map(&harmonic(), &z0, 0.0, 0.1, &tol).unwrap();
        assert_eq!(end, z0);
    }

    #[test]
    fn partial_final_step_lands_on_horizon() {
        let tol = Tolerances::default();
        let z0 = DVector::from_vec(vec![1.0, 0.0]);
        let traj = flow(&harmonic(), &[], &z0, 0.25, 0.1, &tol).unwrap();
        assert_eq!(traj.times.len(), 4);
        assert!((traj.times.last().unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn quadratic_invariant_conserved_per_step() {
        let tol = Tolerances::default();
        // osc11a-type quartic Hamiltonian; Phi = I1 + I2 is quadratic.
        let i1 = P::from_terms(4, &[(0.5, vec![2, 0, 0, 0]), (0.5, vec![0, 0, 2, 0])]).unwrap();
        let i2 = P::from_terms(4, &[(0.5, vec![0, 2, 0, 0]), (0.5, vec![0, 0, 0, 2])]).unwrap();
        let h = i1
            .add(&i2.scale(2.0))
            .unwrap()
            .add(&i1.mul(&i1).unwrap())
            .unwrap()
            .add(&i2.mul(&i2).unwrap())
            .unwrap();
        let phi = i1.add(&i2).unwrap();
        let z0 = DVector::from_vec(vec![0.4, -0.3, 0.2, 0.5]);
        let before = phi.evaluate(z0.as_slice()).unwrap();
        let z1 = implicit_midpoint_step(&h, &z0, 0.01, &tol).unwrap();
        let after = phi.evaluate(z1.as_slice()).unwrap();
        assert!((after - before).abs() <= 1e-12);
    }

    #[test]
    fn flow_jacobian_matches_linear_theory() {
        // For the harmonic oscillator the flow Jacobian is the rotation matrix.
        let tol = Tolerances::default();
        let z0 = DVector::from_vec(vec![0.7, 0.1]);
        let t = 1.3;
        let jac = flow_jacobian(&harmonic(), &z0, t, 1e-3, &tol).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[
            t.cos(), t.sin(),
            -t.sin(), t.cos(),
        ]);
        assert!((&jac - expected).abs().max() < 1e-6);
        assert!((jac.determinant() - 1.0).abs() < 1e-6);

        let tiny = flow_jacobian(&harmonic(), &z0, 0.0, 1e-3, &tol).unwrap();
        assert!((tiny - DMatrix::<f64>::identity(2, 2)).abs().max() < 1e-10);
    }

    #[test]
    fn convergence_order_two() {
        let tol = Tolerances::default();
        let h = P::from_terms(2, &[
            (0.5, vec![2, 0]),
            (0.5, vec![0, 2]),
            (0.25, vec![4, 0]),
        ])
        .unwrap();
        let z0 = DVector::from_vec(vec![0.8, 0.0]);
        let reference = flow_map(&h, &z0, 2.0, 0.02 / 16.0, &tol).unwrap();
        let coarse = flow_map(&h, &z0, 2.0, 0.02, &tol).unwrap();
        let fine = flow_map(&h, &z0, 2.0, 0.01, &tol).unwrap();
        let e_coarse = (&coarse - &reference).norm();
        let e_fine = (&fine - &reference).norm();
        let order = (e_coarse / e_fine).log2();
        assert!((order - 2.0).abs() < 0.1, "fitted order {order}");
    }
}
