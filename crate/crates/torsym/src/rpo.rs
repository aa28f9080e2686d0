//! Relative periodic orbits near a relative equilibrium: slice-mode seeding,
//! multiple shooting in `(z0, T, theta)`, lifting between the full and
//! augmented flows, level-parameter continuation, and the desk-scale family
//! count.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::config::Tolerances;
use crate::flow::{flow, flow_jacobian_with, flow_map_with, FlowError, HamiltonianFlow};
use crate::linalg::{self, Inertia, LinalgError};
use crate::poly::{PolyError, Polynomial};
use crate::releq::RelativeEquilibrium;
use crate::releq::SymmetricSystem;
use crate::scalar::Real;
use crate::slice::{SliceGeometry, SliceHessian};
use crate::symmetry::{normalize_phase, SymmetryError};

#[derive(Debug, Error)]
pub enum RpoError {
    #[error("slice Hessian must be positive definite to seed modes, inertia ({}, {}, {})", .0.positive, .0.zero, .0.negative)]
    IndefiniteHessian(Inertia),
    #[error("mode index {mode} out of range: the slice carries {modes} modes")]
    ModeOutOfRange { mode: usize, modes: usize },
    #[error("level offset must be positive, got {0}")]
    NonPositiveLevel(f64),
    #[error("seed amplitude search failed to pin the level to {target}")]
    SeedLevelFailed { target: f64 },
    #[error("slice eigenfrequencies do not pair up (spectrum gap {0:e})")]
    UnpairedFrequencies(f64),
    #[error("shooting did not converge after {iterations} iterations (closure {closure})")]
    NonConvergence { iterations: usize, closure: f64 },
    #[error("period collapsed to {period} (below 10 dt = {floor})")]
    PeriodCollapse { period: f64, floor: f64 },
    #[error("lifted orbit failed re-verification (closure {0})")]
    LiftVerificationFailed(f64),
    #[error("continuation failed at the first level point: {0}")]
    FirstPointFailed(Box<RpoError>),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Symmetry(#[from] SymmetryError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Which Hamiltonian the shooting closure integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShootTarget {
    /// Close the flow of `h` against a group element.
    Full,
    /// Close the flow of `h - <Phi|xi>` against a group element.
    Augmented,
}

/// Options for the shooting solver.
#[derive(Debug, Clone)]
pub struct ShootOptions<T> {
    pub dt: T,
    /// Step for the finite-difference flow Jacobian; defaults to `4 dt`.
    pub dt_jacobian: Option<T>,
    pub target: ShootTarget,
}

impl<T: Real> ShootOptions<T> {
    pub fn new(dt: T) -> Self {
        Self { dt, dt_jacobian: None, target: ShootTarget::Full }
    }

    pub fn augmented(dt: T) -> Self {
        Self { dt, dt_jacobian: None, target: ShootTarget::Augmented }
    }

    fn jacobian_step(&self) -> T {
        self.dt_jacobian.unwrap_or(self.dt * T::of(4.0))
    }
}

/// Initial guess for the shooting solver.
#[derive(Debug, Clone)]
pub struct RpoSeed<T> {
    pub z0: DVector<T>,
    pub period: T,
    pub theta: DVector<T>,
    pub mode: usize,
    pub eps: T,
    /// Slice eigenfrequency that produced the seed period.
    pub frequency: T,
}

/// A converged relative periodic orbit.
#[derive(Debug, Clone)]
pub struct RelPeriodicOrbit<T> {
    pub z0: DVector<T>,
    pub period: T,
    /// Group phase in `[0, 2pi)^k`.
    pub theta: DVector<T>,
    /// Level offset `h_xi(z0) - h_xi(x)` actually attained.
    pub eps: T,
    /// Closure residual, the worse of the solver step and a half-step
    /// re-integration.
    pub residual: T,
    pub mode: usize,
    pub iterations: usize,
}

/// An `eps`-continuation branch anchored at a relative equilibrium.
#[derive(Debug, Clone)]
pub struct Family<T> {
    pub mode: usize,
    pub orbits: Vec<RelPeriodicOrbit<T>>,
    pub anchor_x: DVector<T>,
    pub anchor_xi: DVector<T>,
}

impl<T: Real> Family<T> {
    /// Continuity of the branch: consecutive starting points must not jump
    /// faster than the square-root growth of the level offset.
    pub fn is_continuous(&self, scale: T) -> bool {
        self.orbits.windows(2).all(|w| {
            let de = (w[1].eps - w[0].eps).abs();
            let dz = (&w[1].z0 - &w[0].z0).norm();
            dz <= T::of(10.0) * de.sqrt() * scale
        })
    }
}

/// Linearized slice dynamics: eigenfrequencies (ascending) of
/// `omega_V^{-1} H_V` with a representative real direction per mode.
pub fn slice_modes<T: Real>(
    geometry: &SliceGeometry<T>,
    hessian: &SliceHessian<T>,
) -> Result<Vec<(T, DVector<T>)>, RpoError> {
    if !hessian.inertia.is_positive_definite() {
        return Err(RpoError::IndefiniteHessian(hessian.inertia));
    }
    let dim = geometry.dim();
    let m = dim / 2;

    let (vals, vecs) = linalg::symmetric_eigen_sorted(&hessian.matrix)?;
    let mut sqrt_h: DMatrix<T> = DMatrix::zeros(dim, dim);
    let mut inv_sqrt_h: DMatrix<T> = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        let r = vals[i].sqrt();
        let col = vecs.column(i);
        for a in 0..dim {
            for b in 0..dim {
                sqrt_h[(a, b)] += r * col[a] * col[b];
                inv_sqrt_h[(a, b)] += col[a] * col[b] / r;
            }
        }
    }
    let omega_inv = geometry
        .omega
        .clone()
        .try_inverse()
        .ok_or(RpoError::Linalg(LinalgError::SvdFailed))?;
    let b = &sqrt_h * omega_inv * &sqrt_h;
    let b2: DMatrix<T> = &b * &b;
    let sym = (&b2 + b2.transpose()).scale(T::of(0.5));
    let (mu, u) = linalg::symmetric_eigen_sorted(&sym)?;

    // Eigenvalues of B^2 are -lambda^2, each lambda twice. Ascending order
    // pairs them up with the largest frequencies first.
    let scale = T::one() + mu.amax();
    let mut modes: Vec<(T, DVector<T>)> = Vec::with_capacity(m);
    for j in 0..m {
        let a = mu[2 * j];
        let bb = mu[2 * j + 1];
        if (a - bb).abs() > T::of(1e-6) * scale {
            return Err(RpoError::UnpairedFrequencies(
                (a - bb).abs().to_subset().unwrap_or(f64::NAN),
            ));
        }
        let mean = (a + bb) * T::of(0.5);
        let lambda = (-mean).max(T::zero()).sqrt();
        let mut dir = &inv_sqrt_h * u.column(2 * j);
        let n = dir.norm();
        dir /= n;
        modes.push((lambda, dir));
    }
    modes.reverse();
    Ok(modes)
}

/// Builds a shooting seed on slice mode `mode` at level offset `eps`:
/// the displacement is scaled by bisection so that
/// `h_xi(z0) - h_xi(x) = eps` within the configured relative accuracy,
/// the period is `2pi / lambda_mode`, and the phase is `T xi mod 2pi`.
pub fn seed_from_slice<T: Real>(
    system: &SymmetricSystem<T>,
    re: &RelativeEquilibrium<T>,
    geometry: &SliceGeometry<T>,
    hessian: &SliceHessian<T>,
    mode: usize,
    eps: T,
    tol: &Tolerances,
) -> Result<RpoSeed<T>, RpoError> {
    if eps <= T::zero() {
        return Err(RpoError::NonPositiveLevel(eps.to_subset().unwrap_or(f64::NAN)));
    }
    let modes = slice_modes(geometry, hessian)?;
    if mode >= modes.len() {
        return Err(RpoError::ModeOutOfRange { mode, modes: modes.len() });
    }
    let (lambda, dir) = &modes[mode];

    let h_xi = system.augmented_hamiltonian(&re.xi)?;
    let at_x = h_xi.evaluate(re.x.as_slice())?;
    let ambient_dir = &geometry.basis * dir;
    let level = |delta: T| -> Result<T, RpoError> {
        let z = &re.x + &ambient_dir * delta;
        Ok(h_xi.evaluate(z.as_slice())? - at_x)
    };

    // Quadratic model gives the starting amplitude; bisection pins the level.
    let curvature = (dir.transpose() * &hessian.matrix * dir)[(0, 0)];
    let mut lo = T::zero();
    let mut hi = (T::of(2.0) * eps / curvature).sqrt();
    let mut grow = 0;
    while level(hi)? < eps {
        hi *= T::of(2.0);
        grow += 1;
        if grow > 60 {
            return Err(RpoError::SeedLevelFailed { target: eps.to_subset().unwrap_or(f64::NAN) });
        }
    }
    let rel = T::of(tol.seed_level_rel);
    let mut delta = hi;
    for _ in 0..200 {
        delta = (lo + hi) * T::of(0.5);
        let v = level(delta)?;
        if ((v - eps) / eps).abs() <= rel {
            break;
        }
        if v < eps {
            lo = delta;
        } else {
            hi = delta;
        }
    }
    let attained = level(delta)?;
    if ((attained - eps) / eps).abs() > rel {
        return Err(RpoError::SeedLevelFailed { target: eps.to_subset().unwrap_or(f64::NAN) });
    }

    let period = T::TAU() / *lambda;
    let theta = normalize_phase(&(re.xi.scale(period)));
    Ok(RpoSeed {
        z0: &re.x + ambient_dir * delta,
        period,
        theta,
        mode,
        eps,
        frequency: *lambda,
    })
}

/// Gauss-Newton shooting for a relative periodic orbit from `seed`.
///
/// Unknowns are `(z0, T, theta)`; the residual stacks the closure
/// `flow_T(z0) - g(theta) z0`, the level pinning
/// `h_xi(z0) - h_xi(x) - eps`, a time-phase anchor along the field at the
/// seed, and one group-phase anchor per torus generator. Steps go through
/// the minimal-norm pseudoinverse, which silently absorbs exact
/// time/group resonances; any leftover resonant `(T, theta)` degeneracy is
/// normalized afterwards to the representative with the smallest phase.
pub fn shoot<T: Real>(
    system: &SymmetricSystem<T>,
    re: &RelativeEquilibrium<T>,
    seed: &RpoSeed<T>,
    opts: &ShootOptions<T>,
    tol: &Tolerances,
) -> Result<RelPeriodicOrbit<T>, RpoError> {
    let dim = system.phase_dim();
    let k = system.torus_dim();
    let flow_h = match opts.target {
        ShootTarget::Full => system.hamiltonian().clone(),
        ShootTarget::Augmented => system.augmented_hamiltonian(&re.xi)?,
    };
    let engine = HamiltonianFlow::new(&flow_h)?;
    let h_xi = system.augmented_hamiltonian(&re.xi)?;
    let level_at_x = h_xi.evaluate(re.x.as_slice())?;

    let anchor = seed.z0.clone();
    let field_anchor = engine.field_at(&anchor);
    let mut group_anchor = Vec::with_capacity(k);
    for a in system.action().generators() {
        group_anchor.push(a * &anchor);
    }

    let rows = dim + 2 + k;
    let cols = dim + 1 + k;
    let mut z0 = seed.z0.clone();
    let mut period = seed.period;
    let mut theta = seed.theta.clone();

    let mut best_full = T::of(f64::INFINITY);
    let mut best: Option<(DVector<T>, T, DVector<T>)> = None;
    let mut polish_left = 2;
    let floor = opts.dt * T::of(10.0);
    // Returned orbits must pin the level to 1e-10.
    let accept_level = T::of(1e-10) * (T::one() + seed.eps.abs());

    let mut iterations = 0;
    for iter in 0..=tol.shoot_max_iter {
        iterations = iter;
        if period < floor {
            return Err(RpoError::PeriodCollapse {
                period: period.to_subset().unwrap_or(f64::NAN),
                floor: floor.to_subset().unwrap_or(f64::NAN),
            });
        }
        let end = flow_map_with(&engine, &z0, period, opts.dt, tol)?;
        let g = system.action().group_element(&theta);
        let gz = &g * &z0;
        let closure_vec = &end - &gz;
        let closure = closure_vec.norm();
        let accept = T::of(tol.shoot) * (T::one() + z0.norm());

        // Residual vector: closure, level pinning, phase anchors.
        let mut r = DVector::zeros(rows);
        for i in 0..dim {
            r[i] = closure_vec[i];
        }
        let level_err = h_xi.evaluate(z0.as_slice())? - level_at_x - seed.eps;
        r[dim] = level_err;
        r[dim + 1] = field_anchor.dot(&(&z0 - &anchor));
        for a in 0..k {
            r[dim + 2 + a] = group_anchor[a].dot(&(&z0 - &anchor));
        }
        let full = r.norm();
        #[cfg(feature = "trace-shoot")]
        eprintln!(
            "shoot iter {iter}: closure {closure:?} level {level_err:?} full {full:?} T {period:?} theta {:?}",
            theta.as_slice()
        );

        if full < best_full {
            best_full = full;
            best = Some((z0.clone(), period, theta.clone()));
        }
        if closure <= accept && level_err.abs() <= accept_level {
            if polish_left == 0 {
                break;
            }
            polish_left -= 1;
        }
        if iter == tol.shoot_max_iter {
            break;
        }

        // Jacobian.
        let mut jac = DMatrix::zeros(rows, cols);
        let m = flow_jacobian_with(&engine, &z0, period, opts.jacobian_step(), tol)?;
        jac.view_mut((0, 0), (dim, dim)).copy_from(&(&m - &g));
        let field_end = engine.field_at(&end);
        for i in 0..dim {
            jac[(i, dim)] = field_end[i];
        }
        for a in 0..k {
            let col = system.action().generators()[a].clone() * &gz;
            for i in 0..dim {
                jac[(i, dim + 1 + a)] = -col[i];
            }
        }
        let grad_level = {
            let mut gl = system.hamiltonian().gradient_at(z0.as_slice())?;
            for (i, phi) in system.moment().components().iter().enumerate() {
                gl -= phi.gradient_at(z0.as_slice())?.scale(re.xi[i]);
            }
            gl
        };
        for c in 0..dim {
            jac[(dim, c)] = grad_level[c];
            jac[(dim + 1, c)] = field_anchor[c];
        }
        for a in 0..k {
            for c in 0..dim {
                jac[(dim + 2 + a, c)] = group_anchor[a][c];
            }
        }

        let step = linalg::pinv_solve(&jac, &r, tol.rank)?;
        for i in 0..dim {
            z0[i] -= step[i];
        }
        period -= step[dim];
        for a in 0..k {
            theta[a] -= step[dim + 1 + a];
        }
    }

    let (mut z0, mut period, mut theta) = best.expect("at least one iterate evaluated");
    let accept = T::of(tol.shoot) * (T::one() + z0.norm());
    {
        let end = flow_map_with(&engine, &z0, period, opts.dt, tol)?;
        let g = system.action().group_element(&theta);
        let closure = (&end - g * &z0).norm();
        let level_err = h_xi.evaluate(z0.as_slice())? - level_at_x - seed.eps;
        if closure > accept || level_err.abs() > accept_level {
            return Err(RpoError::NonConvergence {
                iterations,
                closure: closure.max(level_err.abs()).to_subset().unwrap_or(f64::NAN),
            });
        }
    }

    // Resonant (T, theta) representatives: when time shift and group shift
    // coincide on the orbit, the shooting Jacobian has null directions in
    // the (T, theta) block and the converged pair is one point of a family
    // of representations. Normalize to the smallest group phase by least
    // squares over the whole null space, then polish.
    let null_dirs = resonance_directions(system, &engine, &z0, period, &theta, opts, tol)?;
    if null_dirs.ncols() > 0 {
        let wrapped = wrap_to_pi(&theta);
        let v_theta = null_dirs.rows(1, k).into_owned();
        let s = linalg::pinv_solve(&v_theta, &wrapped, tol.rank)?;
        if s.norm() > T::of(1e-14) {
            let shift = &null_dirs * &s;
            period -= shift[0];
            for a in 0..k {
                theta[a] -= shift[1 + a];
            }
            // Polish passes keep the slid point on the solution set.
            for _ in 0..3 {
                let end = flow_map_with(&engine, &z0, period, opts.dt, tol)?;
                let g = system.action().group_element(&theta);
                let closure_vec = &end - &g * &z0;
                if closure_vec.norm() <= accept {
                    break;
                }
                let mut jac = DMatrix::zeros(dim, cols);
                let m = flow_jacobian_with(&engine, &z0, period, opts.jacobian_step(), tol)?;
                jac.view_mut((0, 0), (dim, dim)).copy_from(&(&m - &g));
                let field_end = engine.field_at(&end);
                for i in 0..dim {
                    jac[(i, dim)] = field_end[i];
                }
                let gz = &g * &z0;
                for a in 0..k {
                    let col = system.action().generators()[a].clone() * &gz;
                    for i in 0..dim {
                        jac[(i, dim + 1 + a)] = -col[i];
                    }
                }
                let step = linalg::pinv_solve(&jac, &DVector::from(closure_vec), tol.rank)?;
                for i in 0..dim {
                    z0[i] -= step[i];
                }
                period -= step[dim];
                for a in 0..k {
                    theta[a] -= step[dim + 1 + a];
                }
            }
        }
    }
    theta = normalize_phase(&theta);

    // Certificate: the residual is the worse of the solver-step closure and
    // an independent half-step re-integration, so it includes the O(dt^2)
    // discretization gap and not just the Gauss-Newton closure.
    let closure_full = closure_residual(&engine, system, &z0, period, &theta, opts.dt, tol)?;
    let closure_half =
        closure_residual(&engine, system, &z0, period, &theta, opts.dt * T::of(0.5), tol)?;
    let residual = closure_full.max(closure_half);
    let sanity = T::of(1e-3) * (T::one() + z0.norm());
    if residual > sanity {
        return Err(RpoError::NonConvergence {
            iterations,
            closure: residual.to_subset().unwrap_or(f64::NAN),
        });
    }

    let eps_attained = h_xi.evaluate(z0.as_slice())? - level_at_x;
    Ok(RelPeriodicOrbit {
        z0,
        period,
        theta,
        eps: eps_attained,
        residual,
        mode: seed.mode,
        iterations,
    })
}

fn closure_residual<T: Real>(
    engine: &HamiltonianFlow<T>,
    system: &SymmetricSystem<T>,
    z0: &DVector<T>,
    period: T,
    theta: &DVector<T>,
    dt: T,
    tol: &Tolerances,
) -> Result<T, RpoError> {
    let end = flow_map_with(engine, z0, period, dt, tol)?;
    let g = system.action().group_element(theta);
    Ok((end - g * z0).norm())
}

fn wrap_to_pi<T: Real>(theta: &DVector<T>) -> DVector<T> {
    theta.map(|t| {
        let tau = T::TAU();
        let mut r = t - (t / tau).floor() * tau;
        if r > T::PI() {
            r -= tau;
        }
        r
    })
}

/// Null directions of the closure in the `(T, theta)` block: combinations
/// of a period shift and a group-phase shift the closure cannot see, which
/// exist exactly when time shift and group shift coincide on the orbit.
/// Columns are `(delta T, delta theta)` vectors.
fn resonance_directions<T: Real>(
    system: &SymmetricSystem<T>,
    engine: &HamiltonianFlow<T>,
    z0: &DVector<T>,
    period: T,
    theta: &DVector<T>,
    opts: &ShootOptions<T>,
    tol: &Tolerances,
) -> Result<DMatrix<T>, RpoError> {
    let dim = system.phase_dim();
    let k = system.torus_dim();

    // Closure rows only: the degeneracy of interest moves (T, theta) while
    // keeping z0; phase rows do not constrain those directions anyway.
    let mut block = DMatrix::zeros(dim, 1 + k);
    let end = flow_map_with(engine, z0, period, opts.dt, tol)?;
    let field_end = engine.field_at(&end);
    for i in 0..dim {
        block[(i, 0)] = field_end[i];
    }
    let g = system.action().group_element(theta);
    let gz = &g * z0;
    for a in 0..k {
        let col = system.action().generators()[a].clone() * &gz;
        for i in 0..dim {
            block[(i, 1 + a)] = -col[i];
        }
    }

    let ns = linalg::null_space(&block, 1e-6)?;
    let keep: Vec<usize> = (0..ns.dim())
        .filter(|&c| {
            let v = ns.basis().column(c);
            let mut th = T::zero();
            for i in 0..k {
                th += v[1 + i] * v[1 + i];
            }
            th.sqrt() > T::of(1e-6)
        })
        .collect();
    let mut dirs = DMatrix::zeros(1 + k, keep.len());
    for (j, &c) in keep.iter().enumerate() {
        dirs.set_column(j, &ns.basis().column(c));
    }
    Ok(dirs)
}

/// Transfers an orbit of the augmented flow to the full flow: same starting
/// point and period, phase shifted by `T xi`, re-verified by direct
/// integration of `h`.
pub fn lift_orbit<T: Real>(
    system: &SymmetricSystem<T>,
    re: &RelativeEquilibrium<T>,
    orbit: &RelPeriodicOrbit<T>,
    dt: T,
    tol: &Tolerances,
) -> Result<RelPeriodicOrbit<T>, RpoError> {
    let theta = normalize_phase(&(&orbit.theta + re.xi.scale(orbit.period)));
    let engine = HamiltonianFlow::new(system.hamiltonian())?;
    let closure = closure_residual(&engine, system, &orbit.z0, orbit.period, &theta, dt, tol)?;
    // The lift certifies the phase relation; the input orbit's own residual
    // already carries the discretization level, so allow that scale here.
    let accept = (T::of(tol.shoot) * (T::one() + orbit.z0.norm()))
        .max(orbit.residual * T::of(4.0));
    if closure > accept {
        return Err(RpoError::LiftVerificationFailed(closure.to_subset().unwrap_or(f64::NAN)));
    }
    Ok(RelPeriodicOrbit { theta, residual: closure.max(orbit.residual), ..orbit.clone() })
}

/// Continues a family over an increasing level grid, seeding each solve
/// with the previous solution and re-anchoring the phase conditions there.
/// The family truncates at the first failed level; an empty family is an
/// error.
pub fn continue_family<T: Real>(
    system: &SymmetricSystem<T>,
    re: &RelativeEquilibrium<T>,
    geometry: &SliceGeometry<T>,
    hessian: &SliceHessian<T>,
    mode: usize,
    eps_grid: &[T],
    opts: &ShootOptions<T>,
    tol: &Tolerances,
) -> Result<Family<T>, RpoError> {
    let mut orbits: Vec<RelPeriodicOrbit<T>> = Vec::with_capacity(eps_grid.len());
    for (i, &eps) in eps_grid.iter().enumerate() {
        let seed = match orbits.last() {
            None => seed_from_slice(system, re, geometry, hessian, mode, eps, tol)?,
            Some(prev) => RpoSeed {
                z0: prev.z0.clone(),
                period: prev.period,
                theta: prev.theta.clone(),
                mode,
                eps,
                frequency: T::TAU() / prev.period,
            },
        };
        match shoot(system, re, &seed, opts, tol) {
            Ok(orbit) => orbits.push(orbit),
            Err(e) if i == 0 => return Err(RpoError::FirstPointFailed(Box::new(e))),
            Err(_) => break,
        }
    }
    Ok(Family { mode, orbits, anchor_x: re.x.clone(), anchor_xi: re.xi.clone() })
}

/// Invariant signature used to identify group translates of the same
/// family: period, energy, momentum, and orbit-averaged per-plane actions.
#[derive(Debug, Clone)]
pub struct OrbitSignature<T> {
    pub period: T,
    pub energy: T,
    pub momentum: Vec<T>,
    pub mean_actions: Vec<T>,
}

impl<T: Real> OrbitSignature<T> {
    fn as_vec(&self) -> Vec<T> {
        let mut v = vec![self.period, self.energy];
        v.extend_from_slice(&self.momentum);
        v.extend_from_slice(&self.mean_actions);
        v
    }

    /// Componentwise relative comparison at tolerance `rel`.
    pub fn matches(&self, other: &Self, rel: T) -> bool {
        let a = self.as_vec();
        let b = other.as_vec();
        a.len() == b.len()
            && a.iter().zip(&b).all(|(&x, &y)| {
                let scale = T::one().max(x.abs()).max(y.abs());
                (x - y).abs() <= rel * scale
            })
    }
}

/// Computes the invariant signature of an orbit by integrating one period.
pub fn orbit_signature<T: Real>(
    system: &SymmetricSystem<T>,
    orbit: &RelPeriodicOrbit<T>,
    dt: T,
    tol: &Tolerances,
) -> Result<OrbitSignature<T>, RpoError> {
    let n = system.dof();
    let mut invariants = Vec::with_capacity(n);
    for j in 0..n {
        let mut e1 = vec![0u32; 2 * n];
        e1[j] = 2;
        let mut e2 = vec![0u32; 2 * n];
        e2[n + j] = 2;
        invariants.push(Polynomial::from_terms(2 * n, &[
            (T::of(0.5), e1),
            (T::of(0.5), e2),
        ])?);
    }
    let traj = flow(system.hamiltonian(), &invariants, &orbit.z0, orbit.period, dt, tol)?;
    let samples = traj.invariant_values.len();
    let mut mean_actions = vec![T::zero(); n];
    for row in &traj.invariant_values {
        for j in 0..n {
            mean_actions[j] += row[j];
        }
    }
    let inv = T::one() / T::of(samples as f64);
    for v in &mut mean_actions {
        *v *= inv;
    }
    Ok(OrbitSignature {
        period: orbit.period,
        energy: system.hamiltonian().evaluate(orbit.z0.as_slice())?,
        momentum: system.moment().values(orbit.z0.as_slice())?.iter().copied().collect(),
        mean_actions,
    })
}

/// Result of the family count at one level offset.
#[derive(Debug)]
pub struct FamilyCount<T> {
    /// Number of distinct families certified.
    pub count: usize,
    /// Half the slice dimension: the expected lower bound.
    pub expected: usize,
    /// Whether the certified count fell short of the bound. A deficiency is
    /// reported, not an error: resonances may merge numerically detected
    /// families.
    pub deficient: bool,
    /// One certificate orbit per distinct family.
    pub certificates: Vec<(RelPeriodicOrbit<T>, OrbitSignature<T>)>,
    /// Modes whose shooting failed to converge.
    pub failed_modes: Vec<usize>,
}

/// Shoots every slice mode at level `eps` and counts distinct families by
/// invariant signature.
pub fn count_distinct_families<T: Real>(
    system: &SymmetricSystem<T>,
    re: &RelativeEquilibrium<T>,
    geometry: &SliceGeometry<T>,
    hessian: &SliceHessian<T>,
    eps: T,
    opts: &ShootOptions<T>,
    tol: &Tolerances,
) -> Result<FamilyCount<T>, RpoError> {
    let modes = slice_modes(geometry, hessian)?;
    let expected = geometry.dim() / 2;
    let mut certificates: Vec<(RelPeriodicOrbit<T>, OrbitSignature<T>)> = Vec::new();
    let mut failed_modes = Vec::new();
    for mode in 0..modes.len() {
        let seed = seed_from_slice(system, re, geometry, hessian, mode, eps, tol)?;
        match shoot(system, re, &seed, opts, tol) {
            Ok(orbit) => {
                let sig = orbit_signature(system, &orbit, opts.dt, tol)?;
                let rel = T::of(tol.dedup_rel);
                if !certificates.iter().any(|(_, s)| s.matches(&sig, rel)) {
                    certificates.push((orbit, sig));
                }
            }
            Err(_) => failed_modes.push(mode),
        }
    }
    let count = certificates.len();
    Ok(FamilyCount { count, expected, deficient: count < expected, certificates, failed_modes })
}
