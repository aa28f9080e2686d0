//! Sparse multivariate polynomials over the canonical variables
//! `(q1..qn, p1..pn)`: exact arithmetic, differentiation, evaluation, and
//! the Poisson bracket.
//!
//! Coefficients are floating point but exponent bookkeeping is integral, so
//! structural identities (antisymmetry of the bracket, commutator of moment
//! components) hold exactly, not merely to round-off.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::scalar::Real;

/// Errors from polynomial arithmetic.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum PolyError {
    #[error("operand variable counts differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("variable index {index} out of range for {num_vars} variables")]
    VariableOutOfRange { index: usize, num_vars: usize },
    #[error("point has {found} coordinates, polynomial has {expected} variables")]
    PointDimension { expected: usize, found: usize },
    #[error("Poisson bracket requires an even variable count, got {0}")]
    OddVariableCount(usize),
}

/// A sparse polynomial in `num_vars` variables.
///
/// Terms map an exponent multi-index to a nonzero coefficient. The map never
/// stores a coefficient that is exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial<T> {
    num_vars: usize,
    terms: BTreeMap<Vec<u32>, T>,
}

impl<T: Real> Polynomial<T> {
    /// The zero polynomial.
    pub fn zero(num_vars: usize) -> Self {
        assert!(num_vars > 0, "polynomials need at least one variable");
        Self { num_vars, terms: BTreeMap::new() }
    }

    /// The constant polynomial `c`.
    pub fn constant(num_vars: usize, c: T) -> Self {
        let mut p = Self::zero(num_vars);
        p.add_term(&vec![0; num_vars], c);
        p
    }

    /// The coordinate polynomial `x_index`.
    pub fn variable(num_vars: usize, index: usize) -> Result<Self, PolyError> {
        if index >= num_vars {
            return Err(PolyError::VariableOutOfRange { index, num_vars });
        }
        let mut exps = vec![0u32; num_vars];
        exps[index] = 1;
        let mut p = Self::zero(num_vars);
        p.add_term(&exps, T::one());
        Ok(p)
    }

    /// Builds a polynomial from `(coefficient, exponents)` records.
    /// Repeated multi-indices are accumulated.
    pub fn from_terms(num_vars: usize, terms: &[(T, Vec<u32>)]) -> Result<Self, PolyError> {
        let mut p = Self::zero(num_vars);
        for (c, e) in terms {
            if e.len() != num_vars {
                return Err(PolyError::DimensionMismatch { left: num_vars, right: e.len() });
            }
            p.add_term(e, *c);
        }
        Ok(p)
    }

    /// Single-term builder: `coeff * prod x_i^(powers[i])` given as sparse
    /// `(variable, exponent)` pairs.
    pub fn monomial(num_vars: usize, coeff: T, powers: &[(usize, u32)]) -> Result<Self, PolyError> {
        let mut exps = vec![0u32; num_vars];
        for &(var, exp) in powers {
            if var >= num_vars {
                return Err(PolyError::VariableOutOfRange { index: var, num_vars });
            }
            exps[var] += exp;
        }
        let mut p = Self::zero(num_vars);
        p.add_term(&exps, coeff);
        Ok(p)
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Total degree of the polynomial (0 for the zero polynomial).
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    /// Largest coefficient magnitude (0 for the zero polynomial).
    pub fn max_abs_coeff(&self) -> T {
        self.terms
            .values()
            .fold(T::zero(), |m, &c| if c.abs() > m { c.abs() } else { m })
    }

    /// Iterates terms in the canonical (lexicographic multi-index) order.
    pub fn terms(&self) -> impl Iterator<Item = (&[u32], T)> + '_ {
        self.terms.iter().map(|(e, &c)| (e.as_slice(), c))
    }

    fn add_term(&mut self, exps: &[u32], c: T) {
        if c == T::zero() {
            return;
        }
        match self.terms.get_mut(exps) {
            Some(existing) => {
                *existing += c;
                if *existing == T::zero() {
                    self.terms.remove(exps);
                }
            }
            None => {
                self.terms.insert(exps.to_vec(), c);
            }
        }
    }

    fn check_same_vars(&self, other: &Self) -> Result<(), PolyError> {
        if self.num_vars != other.num_vars {
            return Err(PolyError::DimensionMismatch {
                left: self.num_vars,
                right: other.num_vars,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_same_vars(other)?;
        let mut out = self.clone();
        for (e, &c) in &other.terms {
            out.add_term(e, c);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_same_vars(other)?;
        let mut out = self.clone();
        for (e, &c) in &other.terms {
            out.add_term(e, -c);
        }
        Ok(out)
    }

    pub fn neg(&self) -> Self {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c = -*c;
        }
        out
    }

    pub fn scale(&self, s: T) -> Self {
        let mut out = Self::zero(self.num_vars);
        for (e, &c) in &self.terms {
            out.add_term(e, c * s);
        }
        out
    }

    /// Product of two polynomials.
    ///
    /// The operands are ordered canonically before expansion so that
    /// `mul(f, g)` and `mul(g, f)` accumulate bit-identical coefficients;
    /// the bracket's exact antisymmetry relies on this.
    pub fn mul(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_same_vars(other)?;
        let (a, b) = if canonical_le(self, other) { (self, other) } else { (other, self) };
        let mut out = Self::zero(self.num_vars);
        let mut exps = vec![0u32; self.num_vars];
        for (ea, &ca) in &a.terms {
            for (eb, &cb) in &b.terms {
                for i in 0..self.num_vars {
                    exps[i] = ea[i] + eb[i];
                }
                out.add_term(&exps, ca * cb);
            }
        }
        Ok(out)
    }

    /// Formal partial derivative with respect to variable `var`.
    pub fn partial(&self, var: usize) -> Result<Self, PolyError> {
        if var >= self.num_vars {
            return Err(PolyError::VariableOutOfRange { index: var, num_vars: self.num_vars });
        }
        let mut out = Self::zero(self.num_vars);
        for (e, &c) in &self.terms {
            if e[var] == 0 {
                continue;
            }
            let mut de = e.clone();
            de[var] -= 1;
            out.add_term(&de, c * T::of(e[var] as f64));
        }
        Ok(out)
    }

    /// Evaluates the polynomial at a point.
    pub fn evaluate(&self, z: &[T]) -> Result<T, PolyError> {
        if z.len() != self.num_vars {
            return Err(PolyError::PointDimension { expected: self.num_vars, found: z.len() });
        }
        let mut acc = T::zero();
        for (e, &c) in &self.terms {
            let mut term = c;
            for (i, &exp) in e.iter().enumerate() {
                for _ in 0..exp {
                    term *= z[i];
                }
            }
            acc += term;
        }
        Ok(acc)
    }

    /// Gradient vector at a point.
    pub fn gradient_at(&self, z: &[T]) -> Result<DVector<T>, PolyError> {
        let mut g = DVector::zeros(self.num_vars);
        for i in 0..self.num_vars {
            g[i] = self.partial(i)?.evaluate(z)?;
        }
        Ok(g)
    }

    /// Hessian matrix at a point; returned exactly symmetric.
    pub fn hessian_at(&self, z: &[T]) -> Result<DMatrix<T>, PolyError> {
        let n = self.num_vars;
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            let di = self.partial(i)?;
            for j in i..n {
                let v = di.partial(j)?.evaluate(z)?;
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        Ok(h)
    }

    /// Poisson bracket `{f, g} = sum_j df/dq_j dg/dp_j - df/dp_j dg/dq_j`
    /// in the ordering `(q1..qn, p1..pn)`.
    pub fn poisson_bracket(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_same_vars(other)?;
        if self.num_vars % 2 != 0 {
            return Err(PolyError::OddVariableCount(self.num_vars));
        }
        let n = self.num_vars / 2;
        let mut out = Self::zero(self.num_vars);
        for j in 0..n {
            let fq = self.partial(j)?;
            let fp = self.partial(n + j)?;
            let gq = other.partial(j)?;
            let gp = other.partial(n + j)?;
            out = out.add(&fq.mul(&gp)?)?;
            out = out.sub(&fp.mul(&gq)?)?;
        }
        Ok(out)
    }

    /// Compiles the polynomial into a flat form for repeated evaluation.
    pub fn compile(&self) -> CompiledPoly<T> {
        let mut coeffs = Vec::with_capacity(self.terms.len());
        let mut exps = Vec::with_capacity(self.terms.len() * self.num_vars);
        let mut max_deg = 1u32;
        for (e, &c) in &self.terms {
            coeffs.push(c);
            exps.extend_from_slice(e);
            for &x in e {
                max_deg = max_deg.max(x);
            }
        }
        CompiledPoly { num_vars: self.num_vars, coeffs, exps, max_deg }
    }
}

/// Total preorder on polynomials used to order `mul` operands canonically.
fn canonical_le<T: Real>(a: &Polynomial<T>, b: &Polynomial<T>) -> bool {
    if a.terms.len() != b.terms.len() {
        return a.terms.len() < b.terms.len();
    }
    for ((ea, ca), (eb, cb)) in a.terms.iter().zip(b.terms.iter()) {
        match ea.cmp(eb) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
        if ca != cb {
            return ca < cb;
        }
    }
    true
}

/// Flat coefficient/exponent arrays for the integrator hot path.
#[derive(Debug, Clone)]
pub struct CompiledPoly<T> {
    num_vars: usize,
    coeffs: Vec<T>,
    exps: Vec<u32>,
    max_deg: u32,
}

/// Reusable table of variable powers `z_i^e` for `e <= max_deg`.
#[derive(Debug, Clone)]
pub struct PowerTable<T> {
    num_vars: usize,
    max_deg: u32,
    powers: Vec<T>,
}

impl<T: Real> PowerTable<T> {
    pub fn new(num_vars: usize, max_deg: u32) -> Self {
        Self {
            num_vars,
            max_deg,
            powers: vec![T::one(); num_vars * (max_deg as usize + 1)],
        }
    }

    /// Fills the table with powers of the coordinates of `z`.
    pub fn fill(&mut self, z: &[T]) {
        debug_assert_eq!(z.len(), self.num_vars);
        let stride = self.max_deg as usize + 1;
        for (i, &zi) in z.iter().enumerate() {
            let row = &mut self.powers[i * stride..(i + 1) * stride];
            row[0] = T::one();
            for d in 1..stride {
                row[d] = row[d - 1] * zi;
            }
        }
    }

    #[inline]
    fn get(&self, var: usize, exp: u32) -> T {
        self.powers[var * (self.max_deg as usize + 1) + exp as usize]
    }
}

impl<T: Real> CompiledPoly<T> {
    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn max_deg(&self) -> u32 {
        self.max_deg
    }

    /// Evaluates against a power table already filled for the point.
    #[inline]
    pub fn eval(&self, table: &PowerTable<T>) -> T {
        let mut acc = T::zero();
        for (t, &c) in self.coeffs.iter().enumerate() {
            let mut term = c;
            let base = t * self.num_vars;
            for i in 0..self.num_vars {
                let e = self.exps[base + i];
                if e > 0 {
                    term *= table.get(i, e);
                }
            }
            acc += term;
        }
        acc
    }

    /// One-off evaluation allocating its own power table.
    pub fn eval_at(&self, z: &[T]) -> T {
        let mut table = PowerTable::new(self.num_vars, self.max_deg);
        table.fill(z);
        self.eval(&table)
    }
}

impl<T: Real + fmt::Display> fmt::Display for Polynomial<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let n = self.num_vars / 2;
        let canonical = self.num_vars % 2 == 0;
        let mut first = true;
        for (e, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{c}")?;
            for (i, &exp) in e.iter().enumerate() {
                if exp == 0 {
                    continue;
                }
                let name = if canonical {
                    if i < n { format!("q{}", i + 1) } else { format!("p{}", i - n + 1) }
                } else {
                    format!("x{}", i + 1)
                };
                if exp == 1 {
                    write!(f, " {name}")?;
                } else {
                    write!(f, " {name}^{exp}")?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type P = Polynomial<f64>;

    /// `1/2 (q_j^2 + p_j^2)` in `2n` variables.
    fn action_var(n: usize, j: usize) -> P {
        P::from_terms(2 * n, &[
            (0.5, {
                let mut e = vec![0; 2 * n];
                e[j] = 2;
                e
            }),
            (0.5, {
                let mut e = vec![0; 2 * n];
                e[n + j] = 2;
                e
            }),
        ])
        .unwrap()
    }

    #[test]
    fn square_of_variable() {
        let q1 = P::variable(4, 0).unwrap();
        let sq = q1.mul(&q1).unwrap();
        let expected = P::monomial(4, 1.0, &[(0, 2)]).unwrap();
        assert_eq!(sq, expected);
    }

    #[test]
    fn add_zero_is_identity() {
        let f = P::from_terms(4, &[(2.0, vec![1, 0, 1, 0]), (-0.5, vec![0, 0, 0, 3])]).unwrap();
        assert_eq!(f.add(&P::zero(4)).unwrap(), f);
    }

    #[test]
    fn square_of_harmonic_energy() {
        // (1/2 q1^2 + 1/2 p1^2)^2 = 1/4 q1^4 + 1/2 q1^2 p1^2 + 1/4 p1^4
        let i1 = action_var(1, 0);
        let sq = i1.mul(&i1).unwrap();
        let expected = P::from_terms(2, &[
            (0.25, vec![4, 0]),
            (0.5, vec![2, 2]),
            (0.25, vec![0, 4]),
        ])
        .unwrap();
        assert_eq!(sq, expected);
    }

    #[test]
    fn partial_derivatives() {
        let q1sq = P::monomial(4, 1.0, &[(0, 2)]).unwrap();
        assert_eq!(q1sq.partial(0).unwrap(), P::monomial(4, 2.0, &[(0, 1)]).unwrap());
        assert!(q1sq.partial(2).unwrap().is_zero());

        // d(q1^2 p2)/dp2 = q1^2
        let m = P::monomial(4, 1.0, &[(0, 2), (3, 1)]).unwrap();
        assert_eq!(m.partial(3).unwrap(), q1sq);
    }

    #[test]
    fn evaluate_and_gradient() {
        let q1sq = P::monomial(4, 1.0, &[(0, 2)]).unwrap();
        assert_eq!(q1sq.evaluate(&[3.0, 0.0, 0.0, 0.0]).unwrap(), 9.0);

        let h = action_var(2, 0);
        let g = h.gradient_at(&[0.3, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(g.as_slice(), &[0.3, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn hessian_of_harmonic_energy() {
        let h = action_var(2, 0);
        let hess = h.hessian_at(&[0.7, -0.2, 0.1, 0.4]).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0, 1.0, 0.0]));
        assert_eq!(hess, expected);
        assert_eq!(hess.transpose(), hess);
    }

    #[test]
    fn bracket_canonical_pair() {
        let q1 = P::variable(2, 0).unwrap();
        let p1 = P::variable(2, 1).unwrap();
        let b = q1.poisson_bracket(&p1).unwrap();
        assert_eq!(b, P::constant(2, 1.0));
    }

    #[test]
    fn bracket_self_is_exactly_zero() {
        let f = P::from_terms(4, &[
            (0.3, vec![2, 1, 0, 0]),
            (-1.7, vec![0, 0, 1, 2]),
            (0.9, vec![1, 1, 1, 1]),
        ])
        .unwrap();
        assert!(f.poisson_bracket(&f).unwrap().is_zero());
    }

    #[test]
    fn bracket_energy_with_position() {
        // {1/2(q1^2+p1^2), q1} = -p1
        let h = action_var(1, 0);
        let q1 = P::variable(2, 0).unwrap();
        let b = h.poisson_bracket(&q1).unwrap();
        assert_eq!(b, P::monomial(2, -1.0, &[(1, 1)]).unwrap());
    }

    #[test]
    fn bracket_antisymmetry_exact() {
        let f = P::from_terms(4, &[
            (0.37, vec![1, 2, 0, 1]),
            (-0.11, vec![0, 0, 2, 2]),
            (2.5, vec![3, 0, 0, 0]),
        ])
        .unwrap();
        let g = P::from_terms(4, &[
            (1.9, vec![0, 1, 1, 0]),
            (0.01, vec![2, 0, 0, 2]),
            (-0.6, vec![1, 1, 1, 1]),
        ])
        .unwrap();
        let fg = f.poisson_bracket(&g).unwrap();
        let gf = g.poisson_bracket(&f).unwrap();
        assert!(fg.add(&gf).unwrap().is_zero(), "bracket must be exactly antisymmetric");
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let f = P::zero(4);
        let g = P::zero(6);
        assert!(matches!(f.add(&g), Err(PolyError::DimensionMismatch { .. })));
        assert!(matches!(f.poisson_bracket(&g), Err(PolyError::DimensionMismatch { .. })));
    }

    #[test]
    fn no_stored_zero_terms() {
        let f = P::from_terms(2, &[(1.0, vec![1, 0]), (-1.0, vec![1, 0])]).unwrap();
        assert!(f.is_zero());
        let g = P::monomial(2, 3.0, &[(0, 1)]).unwrap();
        assert!(g.sub(&g).unwrap().is_zero());
        assert!(g.scale(0.0).is_zero());
    }

    #[test]
    fn compiled_matches_direct_evaluation() {
        let f = P::from_terms(4, &[
            (0.25, vec![4, 0, 0, 0]),
            (0.5, vec![2, 0, 2, 0]),
            (-1.0, vec![0, 1, 0, 3]),
            (3.0, vec![0, 0, 0, 0]),
        ])
        .unwrap();
        let c = f.compile();
        let z = [0.3, -1.2, 0.7, 0.9];
        let direct = f.evaluate(&z).unwrap();
        assert_eq!(c.eval_at(&z), direct);
    }

    #[test]
    fn display_uses_canonical_names() {
        let f = P::from_terms(4, &[(2.0, vec![2, 0, 0, 1])]).unwrap();
        assert_eq!(format!("{f}"), "2 q1^2 p2");
        assert_eq!(format!("{}", P::zero(2)), "0");
    }
}
