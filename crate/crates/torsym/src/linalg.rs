//! Linear symplectic algebra: the canonical form, Hamiltonian vector fields,
//! restriction of the form to subspaces, radicals, and inertia of symmetric
//! matrices.
//!
//! Coordinates are ordered `(q1..qn, p1..pn)` everywhere, and the canonical
//! form is `J = [[0, I], [-I, 0]]` in that ordering. The sign convention for
//! Hamiltonian vector fields is fixed once: `X_f = J grad f`, which gives the
//! textbook equations `dq/dt = df/dp`, `dp/dt = -df/dq`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::poly::{PolyError, Polynomial};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("SVD failed to converge")]
    SvdFailed,
    #[error("eigendecomposition failed to converge")]
    EigenFailed,
    #[error("matrix is not symmetric (max asymmetry {0})")]
    NotSymmetric(f64),
    #[error("subspace basis is not orthonormal (deviation {0})")]
    NotOrthonormal(f64),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// The canonical form `J` on `R^(2n)` as an explicit matrix.
pub fn canonical_j<T: Real>(n: usize) -> DMatrix<T> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = T::one();
        j[(n + i, i)] = -T::one();
    }
    j
}

/// Applies `J` to every column of `m` without forming `J`.
pub fn j_times<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let n = m.nrows() / 2;
    assert_eq!(m.nrows(), 2 * n, "expected an even row count");
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for c in 0..m.ncols() {
        for i in 0..n {
            out[(i, c)] = m[(n + i, c)];
            out[(n + i, c)] = -m[(i, c)];
        }
    }
    out
}

/// Applies `J` to a vector.
pub fn j_times_vec<T: Real>(v: &DVector<T>) -> DVector<T> {
    let n = v.len() / 2;
    assert_eq!(v.len(), 2 * n, "expected an even length");
    let mut out = DVector::zeros(v.len());
    for i in 0..n {
        out[i] = v[n + i];
        out[n + i] = -v[i];
    }
    out
}

/// Componentwise Hamiltonian vector field `X_f = J grad f` as polynomials.
pub fn hamiltonian_vector_field<T: Real>(f: &Polynomial<T>) -> Result<Vec<Polynomial<T>>, LinalgError> {
    let nv = f.num_vars();
    if nv % 2 != 0 {
        return Err(LinalgError::Poly(PolyError::OddVariableCount(nv)));
    }
    let n = nv / 2;
    let mut field = Vec::with_capacity(nv);
    for i in 0..n {
        field.push(f.partial(n + i)?);
    }
    for i in 0..n {
        field.push(f.partial(i)?.neg());
    }
    Ok(field)
}

/// A subspace of `R^m` carried by an orthonormal basis matrix.
#[derive(Debug, Clone)]
pub struct Subspace<T> {
    basis: DMatrix<T>,
}

impl<T: Real> Subspace<T> {
    /// Wraps a basis that is already orthonormal; checked to 1e-12.
    pub fn from_orthonormal(basis: DMatrix<T>) -> Result<Self, LinalgError> {
        let dev = orthonormality_deviation(&basis);
        if dev > T::of(1e-12) {
            return Err(LinalgError::NotOrthonormal(dev.to_subset().unwrap_or(f64::NAN)));
        }
        Ok(Self { basis })
    }

    /// Orthonormal basis of the column span of `m`, with rank decided by
    /// singular values above `tol * max(1, sigma_max)`.
    pub fn span(m: &DMatrix<T>, tol: f64) -> Result<Self, LinalgError> {
        if m.ncols() == 0 {
            return Ok(Self { basis: DMatrix::zeros(m.nrows(), 0) });
        }
        let svd = m.clone().svd(true, false);
        let u = svd.u.ok_or(LinalgError::SvdFailed)?;
        let smax = svd.singular_values.max();
        let cut = T::of(tol) * if smax > T::one() { smax } else { T::one() };
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| svd.singular_values[i] > cut)
            .collect();
        let mut basis = DMatrix::zeros(m.nrows(), keep.len());
        for (j, &i) in keep.iter().enumerate() {
            basis.set_column(j, &u.column(i));
        }
        Ok(Self { basis })
    }

    /// The trivial subspace of `R^m`.
    pub fn trivial(ambient_dim: usize) -> Self {
        Self { basis: DMatrix::zeros(ambient_dim, 0) }
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn basis(&self) -> &DMatrix<T> {
        &self.basis
    }

    pub fn into_basis(self) -> DMatrix<T> {
        self.basis
    }

    /// Orthogonal projection of `v` onto the subspace.
    pub fn project(&self, v: &DVector<T>) -> DVector<T> {
        &self.basis * (self.basis.transpose() * v)
    }

    /// Whether every basis vector of `self` lies in `other` up to `tol`.
    pub fn contained_in(&self, other: &Subspace<T>, tol: f64) -> bool {
        for c in 0..self.dim() {
            let v = DVector::from_column_slice(self.basis.column(c).as_slice());
            let r = &v - other.project(&v);
            if r.norm() > T::of(tol) {
                return false;
            }
        }
        true
    }
}

/// Maximum deviation `|B^T B - I|` of a candidate orthonormal basis.
pub fn orthonormality_deviation<T: Real>(basis: &DMatrix<T>) -> T {
    let d = basis.ncols();
    let gram = basis.transpose() * basis;
    let mut dev = T::zero();
    for i in 0..d {
        for j in 0..d {
            let target = if i == j { T::one() } else { T::zero() };
            let e = (gram[(i, j)] - target).abs();
            if e > dev {
                dev = e;
            }
        }
    }
    dev
}

/// Orthonormal basis of `{ x : m x = 0 }`, with singular values at or below
/// `tol * max(1, sigma_max)` treated as zero.
pub fn null_space<T: Real>(m: &DMatrix<T>, tol: f64) -> Result<Subspace<T>, LinalgError> {
    let cols = m.ncols();
    if cols == 0 {
        return Ok(Subspace::trivial(0));
    }
    // Pad with zero rows so the thin SVD carries the full right factor.
    let work = if m.nrows() < cols {
        let mut padded = DMatrix::zeros(cols, cols);
        padded.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
        padded
    } else {
        m.clone()
    };
    let svd = work.svd(false, true);
    let v_t = svd.v_t.ok_or(LinalgError::SvdFailed)?;
    let smax = svd.singular_values.max();
    let cut = T::of(tol) * if smax > T::one() { smax } else { T::one() };
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= cut)
        .collect();
    let mut basis = DMatrix::zeros(cols, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        for r in 0..cols {
            basis[(r, j)] = v_t[(i, r)];
        }
    }
    Subspace::from_orthonormal(basis)
}

/// Restriction `P^T J P` of the canonical form to the columns of `p`.
pub fn restrict_form<T: Real>(p: &DMatrix<T>) -> DMatrix<T> {
    p.transpose() * j_times(p)
}

/// Radical of the canonical form restricted to a subspace:
/// `{ w in W : omega(w, W) = 0 }`, returned in ambient coordinates.
pub fn radical<T: Real>(w: &Subspace<T>, tol: f64) -> Result<Subspace<T>, LinalgError> {
    let omega = restrict_form(w.basis());
    let inner = null_space(&omega, tol)?;
    Subspace::from_orthonormal(w.basis() * inner.basis())
}

/// Orthogonal complement of `r` inside `w` (both orthonormal, `r` contained
/// in `w`), in ambient coordinates.
pub fn complement_within<T: Real>(
    w: &Subspace<T>,
    r: &Subspace<T>,
    tol: f64,
) -> Result<Subspace<T>, LinalgError> {
    if r.dim() == 0 {
        return Ok(w.clone());
    }
    let overlap = r.basis().transpose() * w.basis();
    let coords = null_space(&overlap, tol)?;
    Subspace::from_orthonormal(w.basis() * coords.basis())
}

/// Eigenvalue signature of a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Inertia {
    pub positive: usize,
    pub zero: usize,
    pub negative: usize,
}

impl Inertia {
    pub fn is_positive_definite(&self) -> bool {
        self.zero == 0 && self.negative == 0 && self.positive > 0
    }
}

/// Counts eigenvalues of the symmetric matrix `s` above `tol`, within
/// `[-tol, tol]`, and below `-tol`.
pub fn inertia<T: Real>(s: &DMatrix<T>, tol: f64) -> Result<Inertia, LinalgError> {
    let eig = symmetric_eigenvalues(s)?;
    let t = T::of(tol);
    let mut out = Inertia { positive: 0, zero: 0, negative: 0 };
    for &v in eig.iter() {
        if v > t {
            out.positive += 1;
        } else if v < -t {
            out.negative += 1;
        } else {
            out.zero += 1;
        }
    }
    Ok(out)
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues<T: Real>(s: &DMatrix<T>) -> Result<DVector<T>, LinalgError> {
    check_symmetric(s)?;
    let mut vals: Vec<T> = s.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).expect("eigenvalues are finite"));
    Ok(DVector::from_vec(vals))
}

/// Eigendecomposition of a symmetric matrix with eigenvalues ascending.
pub fn symmetric_eigen_sorted<T: Real>(
    s: &DMatrix<T>,
) -> Result<(DVector<T>, DMatrix<T>), LinalgError> {
    check_symmetric(s)?;
    let eig = s.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .expect("eigenvalues are finite")
    });
    let d = eig.eigenvalues.len();
    let mut vals = DVector::zeros(d);
    let mut vecs = DMatrix::zeros(d, d);
    for (j, &i) in order.iter().enumerate() {
        vals[j] = eig.eigenvalues[i];
        vecs.set_column(j, &eig.eigenvectors.column(i));
    }
    Ok((vals, vecs))
}

fn check_symmetric<T: Real>(s: &DMatrix<T>) -> Result<(), LinalgError> {
    let asym = (s - s.transpose()).abs().max();
    let scale = T::one() + s.abs().max();
    if asym > T::of(1e-9) * scale {
        return Err(LinalgError::NotSymmetric(asym.to_subset().unwrap_or(f64::NAN)));
    }
    Ok(())
}

/// Largest principal angle (radians) between two subspaces of equal
/// dimension with orthonormal bases. Zero-dimensional pairs have angle 0.
pub fn max_principal_angle<T: Real>(a: &Subspace<T>, b: &Subspace<T>) -> Result<T, LinalgError> {
    if a.dim() != b.dim() {
        return Ok(T::FRAC_PI_2());
    }
    if a.dim() == 0 {
        return Ok(T::zero());
    }
    let overlap = a.basis().transpose() * b.basis();
    let svd = overlap.svd(false, false);
    let mut smin = T::one();
    for &s in svd.singular_values.iter() {
        if s < smin {
            smin = s;
        }
    }
    let clamped = if smin > T::one() { T::one() } else { smin };
    Ok(clamped.acos())
}

/// Minimal-norm least-squares solve via the SVD pseudoinverse, truncating
/// singular values at `rank_tol * max(1, sigma_max)`.
pub fn pinv_solve<T: Real>(
    a: &DMatrix<T>,
    b: &DVector<T>,
    rank_tol: f64,
) -> Result<DVector<T>, LinalgError> {
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().ok_or(LinalgError::SvdFailed)?;
    let v_t = svd.v_t.as_ref().ok_or(LinalgError::SvdFailed)?;
    let smax = svd.singular_values.max();
    let cut = T::of(rank_tol) * if smax > T::one() { smax } else { T::one() };
    let mut y = u.transpose() * b;
    for i in 0..svd.singular_values.len() {
        let s = svd.singular_values[i];
        y[i] = if s > cut { y[i] / s } else { T::zero() };
    }
    Ok(v_t.transpose() * y)
}

/// Smallest singular value of a matrix.
pub fn min_singular_value<T: Real>(m: &DMatrix<T>) -> T {
    if m.ncols() == 0 || m.nrows() == 0 {
        return T::zero();
    }
    let svd = m.clone().svd(false, false);
    let mut smin = svd.singular_values[0];
    for &s in svd.singular_values.iter() {
        if s < smin {
            smin = s;
        }
    }
    // A wide or tall matrix hides extra null directions outside the thin SVD.
    if svd.singular_values.len() < m.ncols().min(m.nrows()) {
        T::zero()
    } else {
        smin
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(dim: usize, i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(dim);
        v[i] = 1.0;
        v
    }

    #[test]
    fn canonical_form_identities() {
        let j = canonical_j::<f64>(3);
        assert_eq!(j.transpose(), -&j);
        let j2 = &j * &j;
        assert_eq!(j2, -DMatrix::<f64>::identity(6, 6));
    }

    #[test]
    fn j_times_matches_matrix() {
        let j = canonical_j::<f64>(2);
        let m = DMatrix::from_fn(4, 3, |i, k| (i * 3 + k) as f64 - 5.0);
        assert_eq!(j_times(&m), &j * &m);
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(j_times_vec(&v), &j * &v);
    }

    #[test]
    fn field_of_harmonic_energy() {
        // f = 1/2(q1^2 + p1^2) -> X_f = (p1, -q1)
        let f = Polynomial::from_terms(2, &[(0.5, vec![2, 0]), (0.5, vec![0, 2])]).unwrap();
        let field = hamiltonian_vector_field(&f).unwrap();
        assert_eq!(field[0], Polynomial::variable(2, 1).unwrap());
        assert_eq!(field[1], Polynomial::variable(2, 0).unwrap().neg());
    }

    #[test]
    fn field_of_constant_is_zero() {
        let f = Polynomial::constant(4, 3.5);
        let field = hamiltonian_vector_field(&f).unwrap();
        assert!(field.iter().all(|c| c.is_zero()));
    }

    #[test]
    fn restrict_form_cases() {
        let n = 2;
        // Full identity basis reproduces J.
        let full = DMatrix::<f64>::identity(2 * n, 2 * n);
        assert_eq!(restrict_form(&full), canonical_j::<f64>(n));

        // Canonical pair (q2, p2): the 2x2 canonical block.
        let mut pair = DMatrix::zeros(4, 2);
        pair.set_column(0, &unit(4, 1));
        pair.set_column(1, &unit(4, 3));
        let omega = restrict_form(&pair);
        assert_eq!(omega, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));

        // Lagrangian plane (q1, q2): zero form.
        let mut lag = DMatrix::zeros(4, 2);
        lag.set_column(0, &unit(4, 0));
        lag.set_column(1, &unit(4, 1));
        assert_eq!(restrict_form(&lag), DMatrix::zeros(2, 2));
    }

    #[test]
    fn radical_cases() {
        let tol = 1e-10;
        // Symplectic plane: trivial radical.
        let mut pair = DMatrix::zeros(4, 2);
        pair.set_column(0, &unit(4, 1));
        pair.set_column(1, &unit(4, 3));
        let w = Subspace::from_orthonormal(pair).unwrap();
        assert_eq!(radical(&w, tol).unwrap().dim(), 0);

        // W = span{q2, p1, p2} in n=2: radical is span{p1}.
        let mut m = DMatrix::zeros(4, 3);
        m.set_column(0, &unit(4, 1));
        m.set_column(1, &unit(4, 2));
        m.set_column(2, &unit(4, 3));
        let w = Subspace::from_orthonormal(m).unwrap();
        let rad = radical(&w, tol).unwrap();
        assert_eq!(rad.dim(), 1);
        let v = DVector::from_column_slice(rad.basis().column(0).as_slice());
        assert!((v.abs() - unit(4, 2)).norm() < 1e-12);

        // Lagrangian plane: radical is the whole subspace.
        let mut lag = DMatrix::zeros(4, 2);
        lag.set_column(0, &unit(4, 0));
        lag.set_column(1, &unit(4, 1));
        let w = Subspace::from_orthonormal(lag).unwrap();
        assert_eq!(radical(&w, tol).unwrap().dim(), 2);
    }

    #[test]
    fn inertia_cases() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, -1.0, 0.0]));
        let i = inertia(&d, 1e-10).unwrap();
        assert_eq!(i, Inertia { positive: 1, zero: 1, negative: 1 });

        let id = DMatrix::<f64>::identity(5, 5);
        let i = inertia(&id, 1e-10).unwrap();
        assert_eq!(i, Inertia { positive: 5, zero: 0, negative: 0 });
        assert!(i.is_positive_definite());

        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![0.91, 0.91]));
        let i = inertia(&h, 1e-10).unwrap();
        assert_eq!(i, Inertia { positive: 2, zero: 0, negative: 0 });
    }

    #[test]
    fn inertia_congruence_invariance() {
        // Sylvester's law: inertia is invariant under S -> Q^T S Q.
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let raw = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0f64));
            let s = (&raw + raw.transpose()).scale(0.5);
            let before = inertia(&s, 1e-10).unwrap();
            // Random invertible congruence.
            let q = loop {
                let cand = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0f64));
                if cand.determinant().abs() > 0.1 {
                    break cand;
                }
            };
            let congruent = q.transpose() * &s * &q;
            let sym = (&congruent + congruent.transpose()).scale(0.5);
            let after = inertia(&sym, 1e-10).unwrap();
            assert_eq!(before, after);
        }
    }

    #[test]
    fn null_space_wide_and_tall() {
        // Wide: 1x4 row (0.3, 0, 0, 0) has a 3-dimensional null space.
        let m = DMatrix::from_row_slice(1, 4, &[0.3, 0.0, 0.0, 0.0]);
        let ns = null_space(&m, 1e-10).unwrap();
        assert_eq!(ns.dim(), 3);
        assert!((&m * ns.basis()).abs().max() < 1e-12);

        // Tall: rank-1 4x2.
        let m = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 2.0, 4.0, -1.0, -2.0, 0.5, 1.0]);
        let ns = null_space(&m, 1e-10).unwrap();
        assert_eq!(ns.dim(), 1);
        assert!((&m * ns.basis()).abs().max() < 1e-12);
    }

    #[test]
    fn subspace_span_orthonormalizes() {
        let m = DMatrix::from_row_slice(4, 3, &[
            1.0, 1.0, 0.0,
            1.0, 1.0, 0.0,
            0.0, 0.0, 2.0,
            0.0, 0.0, 0.0,
        ]);
        let s = Subspace::span(&m, 1e-10).unwrap();
        assert_eq!(s.dim(), 2);
        assert!(orthonormality_deviation(s.basis()) < 1e-12);
    }

    #[test]
    fn pinv_solve_minimal_norm() {
        // Underdetermined row: x + y = 2 has minimal-norm solution (1, 1).
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0]);
        let x = pinv_solve(&a, &b, 1e-10).unwrap();
        assert!((x - DVector::from_vec(vec![1.0, 1.0])).norm() < 1e-12);
    }

    #[test]
    fn principal_angle_detects_mismatch() {
        let a = Subspace::from_orthonormal(DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]))
            .unwrap();
        let b = Subspace::from_orthonormal(DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0]))
            .unwrap();
        let angle = max_principal_angle(&a, &b).unwrap();
        assert!((angle - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        let same = max_principal_angle(&a, &a).unwrap();
        assert!(same < 1e-8);
    }
}
