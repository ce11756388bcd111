//! Exact sparse multivariate polynomial arithmetic over big rationals, plus
//! polynomial vector fields. Terms are kept in graded-lexicographic order so
//! serialization and degree reporting are deterministic.

use crate::scalar::{Ctx, Real};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PolyError {
    #[error("ambient dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("variable index {idx} out of range for dimension {dim}")]
    IndexOutOfRange { idx: usize, dim: usize },
    #[error("substitution must assign all {dim} variables, got {got}")]
    IncompleteAssignment { dim: usize, got: usize },
    #[error("point dimension {got} does not match ambient dimension {dim}")]
    PointDimension { got: usize, dim: usize },
    #[error("parse error: {0}")]
    Parse(String),
}

/// Exponent vector; length equals the ambient dimension.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial(pub Vec<u32>);

impl Monomial {
    pub fn constant(n: usize) -> Self {
        Monomial(vec![0; n])
    }

    pub fn var(n: usize, i: usize) -> Self {
        let mut e = vec![0; n];
        e[i] = 1;
        Monomial(e)
    }

    pub fn total_degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn mul(&self, o: &Monomial) -> Monomial {
        debug_assert_eq!(self.0.len(), o.0.len());
        Monomial(self.0.iter().zip(&o.0).map(|(a, b)| a + b).collect())
    }
}

/// Graded-lexicographic: higher total degree first, ties broken by the
/// earlier variable carrying the larger exponent.
impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        match self.total_degree().cmp(&other.total_degree()) {
            Ordering::Equal => self.0.cmp(&other.0),
            ord => ord,
        }
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Sparse polynomial: monomial -> nonzero rational coefficient.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polynomial {
    dim: usize,
    terms: BTreeMap<Monomial, BigRational>,
}

impl Polynomial {
    pub fn zero(dim: usize) -> Self {
        Polynomial { dim, terms: BTreeMap::new() }
    }

    pub fn constant(dim: usize, c: BigRational) -> Self {
        let mut p = Self::zero(dim);
        if !c.is_zero() {
            p.terms.insert(Monomial::constant(dim), c);
        }
        p
    }

    pub fn one(dim: usize) -> Self {
        Self::constant(dim, BigRational::one())
    }

    pub fn var(dim: usize, i: usize) -> Self {
        assert!(i < dim);
        let mut p = Self::zero(dim);
        p.terms.insert(Monomial::var(dim, i), BigRational::one());
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::total_degree).max().unwrap_or(0)
    }

    /// Degree in a single variable.
    pub fn degree_in(&self, i: usize) -> u32 {
        self.terms.keys().map(|m| m.0[i]).max().unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &BigRational)> {
        self.terms.iter()
    }

    pub fn constant_term(&self) -> BigRational {
        self.terms
            .get(&Monomial::constant(self.dim))
            .cloned()
            .unwrap_or_else(BigRational::zero)
    }

    pub fn as_constant(&self) -> Option<BigRational> {
        if self.is_zero() {
            return Some(BigRational::zero());
        }
        if self.terms.len() == 1 {
            if let Some(c) = self.terms.get(&Monomial::constant(self.dim)) {
                return Some(c.clone());
            }
        }
        None
    }

    pub fn add_term(&mut self, m: Monomial, c: BigRational) {
        debug_assert_eq!(m.0.len(), self.dim);
        if c.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                let sum = o.get() + &c;
                if sum.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    fn check_dim(&self, o: &Polynomial) -> Result<(), PolyError> {
        if self.dim != o.dim {
            Err(PolyError::DimensionMismatch(self.dim, o.dim))
        } else {
            Ok(())
        }
    }

    pub fn add(&self, o: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_dim(o)?;
        let mut out = self.clone();
        for (m, c) in &o.terms {
            out.add_term(m.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, o: &Polynomial) -> Result<Polynomial, PolyError> {
        self.add(&o.neg())
    }

    pub fn neg(&self) -> Polynomial {
        Polynomial {
            dim: self.dim,
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c.clone())).collect(),
        }
    }

    pub fn scale(&self, q: &BigRational) -> Polynomial {
        if q.is_zero() {
            return Polynomial::zero(self.dim);
        }
        Polynomial {
            dim: self.dim,
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * q)).collect(),
        }
    }

    pub fn mul(&self, o: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_dim(o)?;
        let mut out = Polynomial::zero(self.dim);
        for (m1, c1) in &self.terms {
            for (m2, c2) in &o.terms {
                out.add_term(m1.mul(m2), c1 * c2);
            }
        }
        Ok(out)
    }

    pub fn mul_var_pow(&self, i: usize, e: u32) -> Polynomial {
        let mut out = Polynomial::zero(self.dim);
        for (m, c) in &self.terms {
            let mut m2 = m.clone();
            m2.0[i] += e;
            out.add_term(m2, c.clone());
        }
        out
    }

    pub fn pow(&self, e: u32) -> Polynomial {
        let mut acc = Polynomial::one(self.dim);
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base).expect("same dim");
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base).expect("same dim");
            }
        }
        acc
    }

    /// Exact composition: every variable of `self` is replaced by the
    /// corresponding polynomial (all in the target ambient dimension).
    pub fn substitute(&self, assignment: &[Polynomial]) -> Result<Polynomial, PolyError> {
        if assignment.len() != self.dim {
            return Err(PolyError::IncompleteAssignment { dim: self.dim, got: assignment.len() });
        }
        let out_dim = assignment.first().map(|p| p.dim).unwrap_or(0);
        for p in assignment {
            if p.dim != out_dim {
                return Err(PolyError::DimensionMismatch(out_dim, p.dim));
            }
        }
        let mut out = Polynomial::zero(out_dim);
        for (m, c) in &self.terms {
            let mut term = Polynomial::constant(out_dim, c.clone());
            for (i, &e) in m.0.iter().enumerate() {
                if e > 0 {
                    term = term.mul(&assignment[i].pow(e))?;
                }
            }
            out = out.add(&term)?;
        }
        Ok(out)
    }

    pub fn partial_derivative(&self, i: usize) -> Result<Polynomial, PolyError> {
        if i >= self.dim {
            return Err(PolyError::IndexOutOfRange { idx: i, dim: self.dim });
        }
        let mut out = Polynomial::zero(self.dim);
        for (m, c) in &self.terms {
            let e = m.0[i];
            if e > 0 {
                let mut m2 = m.clone();
                m2.0[i] -= 1;
                out.add_term(m2, c * BigRational::from_integer(BigInt::from(e)));
            }
        }
        Ok(out)
    }

    pub fn eval_exact(&self, point: &[BigRational]) -> Result<BigRational, PolyError> {
        if point.len() != self.dim {
            return Err(PolyError::PointDimension { got: point.len(), dim: self.dim });
        }
        let mut acc = BigRational::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for (i, &e) in m.0.iter().enumerate() {
                for _ in 0..e {
                    t *= &point[i];
                }
            }
            acc += t;
        }
        Ok(acc)
    }

    /// Arbitrary-precision float evaluation at the context precision.
    pub fn eval_float(&self, ctx: &Ctx, point: &[Real]) -> Result<Real, PolyError> {
        if point.len() != self.dim {
            return Err(PolyError::PointDimension { got: point.len(), dim: self.dim });
        }
        let mut acc = ctx.zero();
        for (m, c) in &self.terms {
            let mut t = ctx.from_rat(c);
            for (i, &e) in m.0.iter().enumerate() {
                if e > 0 {
                    t *= point[i].powi((e as i64).into());
                }
            }
            acc += t;
        }
        Ok(acc)
    }

    /// Remainder of division by (y0² + … + yn² − 1), eliminating powers of y0
    /// above the first: y0² ↦ 1 − Σ_{i≥1} y_i². The result is the canonical
    /// normal form, zero exactly on ideal members.
    pub fn reduce_mod_sphere(&self) -> Polynomial {
        let n = self.dim;
        // 1 - sum_{i>=1} y_i^2
        let mut subst = Polynomial::one(n);
        for i in 1..n {
            let mut sq = Polynomial::zero(n);
            sq.add_term(
                {
                    let mut m = Monomial::constant(n);
                    m.0[i] = 2;
                    m
                },
                -BigRational::one(),
            );
            subst = subst.add(&sq).expect("same dim");
        }
        let mut current = self.clone();
        loop {
            let mut reducible = Polynomial::zero(n);
            let mut rest = Polynomial::zero(n);
            for (m, c) in &current.terms {
                if m.0[0] >= 2 {
                    let mut m2 = m.clone();
                    m2.0[0] -= 2;
                    reducible.add_term(m2, c.clone());
                } else {
                    rest.add_term(m.clone(), c.clone());
                }
            }
            if reducible.is_zero() {
                return rest;
            }
            current = rest.add(&reducible.mul(&subst).expect("dim")).expect("dim");
        }
    }

    /// Rendering for debugging and artifact summaries.
    pub fn render(&self, names: &dyn Fn(usize) -> String) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        let mut parts = Vec::new();
        for (m, c) in self.terms.iter().rev() {
            let mut s = String::new();
            if m.total_degree() == 0 {
                s.push_str(&c.to_string());
            } else {
                if c.abs() != BigRational::one() || c.is_negative() {
                    if *c == -BigRational::one() {
                        s.push('-');
                    } else {
                        s.push_str(&format!("{}*", c));
                    }
                }
                let vars: Vec<String> = m
                    .0
                    .iter()
                    .enumerate()
                    .filter(|(_, &e)| e > 0)
                    .map(|(i, &e)| if e == 1 { names(i) } else { format!("{}^{}", names(i), e) })
                    .collect();
                s.push_str(&vars.join("*"));
            }
            parts.push(s);
        }
        parts.join(" + ").replace("+ -", "- ")
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.render(&|i| format!("x{}", i)))
    }
}

/// Vector field with polynomial components.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyVectorField {
    dim: usize,
    components: Vec<Polynomial>,
}

impl PolyVectorField {
    pub fn new(components: Vec<Polynomial>) -> Result<Self, PolyError> {
        let dim = components.len();
        for c in &components {
            if c.dim() != dim {
                return Err(PolyError::DimensionMismatch(dim, c.dim()));
            }
        }
        Ok(PolyVectorField { dim, components })
    }

    /// Field on `dim` variables whose component count differs from the
    /// variable count is not allowed; use ambient fields (n components on n
    /// variables).
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[Polynomial] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &Polynomial {
        &self.components[i]
    }

    pub fn degree(&self) -> u32 {
        self.components.iter().map(Polynomial::degree).max().unwrap_or(0)
    }

    pub fn eval_exact(&self, point: &[BigRational]) -> Result<Vec<BigRational>, PolyError> {
        self.components.iter().map(|c| c.eval_exact(point)).collect()
    }

    pub fn eval_float(&self, ctx: &Ctx, point: &[Real]) -> Result<Vec<Real>, PolyError> {
        self.components.iter().map(|c| c.eval_float(ctx, point)).collect()
    }

    pub fn total_terms(&self) -> usize {
        self.components.iter().map(Polynomial::num_terms).sum()
    }
}

// ---------------------------------------------------------------------------
// JSON schema:
// { "dimension": n, "components": [ { "terms": [ { "exponents": [..],
//   "coefficient": "p/q" } ] } ] }
// ---------------------------------------------------------------------------

pub fn rational_to_string(q: &BigRational) -> String {
    if q.denom() == &BigInt::one() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

pub fn rational_from_string(s: &str) -> Result<BigRational, PolyError> {
    let parse_int = |t: &str| -> Result<BigInt, PolyError> {
        t.trim()
            .parse::<BigInt>()
            .map_err(|_| PolyError::Parse(format!("bad integer `{t}`")))
    };
    match s.split_once('/') {
        Some((n, d)) => {
            let d = parse_int(d)?;
            if d.is_zero() {
                return Err(PolyError::Parse("zero denominator".into()));
            }
            Ok(BigRational::new(parse_int(n)?, d))
        }
        None => Ok(BigRational::from_integer(parse_int(s)?)),
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
struct TermJson {
    exponents: Vec<u32>,
    coefficient: String,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct PolyJson {
    terms: Vec<TermJson>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct FieldJson {
    dimension: usize,
    components: Vec<PolyJson>,
}

impl Polynomial {
    fn to_json(&self) -> PolyJson {
        PolyJson {
            // leading term first: reverse of the ascending BTreeMap order
            terms: self
                .terms
                .iter()
                .rev()
                .map(|(m, c)| TermJson { exponents: m.0.clone(), coefficient: rational_to_string(c) })
                .collect(),
        }
    }

    fn from_json(j: &PolyJson, dim: usize) -> Result<Polynomial, PolyError> {
        let mut p = Polynomial::zero(dim);
        for t in &j.terms {
            if t.exponents.len() != dim {
                return Err(PolyError::DimensionMismatch(dim, t.exponents.len()));
            }
            p.add_term(Monomial(t.exponents.clone()), rational_from_string(&t.coefficient)?);
        }
        Ok(p)
    }
}

impl PolyVectorField {
    pub fn to_json_string(&self) -> String {
        let j = FieldJson {
            dimension: self.dim,
            components: self.components.iter().map(|c| c.to_json()).collect(),
        };
        serde_json::to_string_pretty(&j).expect("field serializes")
    }

    pub fn from_json_str(s: &str) -> Result<PolyVectorField, PolyError> {
        let j: FieldJson =
            serde_json::from_str(s).map_err(|e| PolyError::Parse(e.to_string()))?;
        let components = j
            .components
            .iter()
            .map(|c| Polynomial::from_json(c, j.dimension))
            .collect::<Result<Vec<_>, _>>()?;
        if components.len() != j.dimension {
            return Err(PolyError::DimensionMismatch(j.dimension, components.len()));
        }
        PolyVectorField::new(components)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{rat, rat_i};

    fn x(dim: usize, i: usize) -> Polynomial {
        Polynomial::var(dim, i)
    }

    #[test]
    fn cancellation_to_zero() {
        let p = x(2, 0).add(&x(2, 0).neg()).unwrap();
        assert!(p.is_zero());
    }

    #[test]
    fn difference_of_squares() {
        let one = Polynomial::one(1);
        let p = x(1, 0).add(&one).unwrap();
        let q = x(1, 0).sub(&one).unwrap();
        let prod = p.mul(&q).unwrap();
        let expect = x(1, 0).pow(2).sub(&one).unwrap();
        assert_eq!(prod, expect);
    }

    #[test]
    fn degree_is_additive_for_products() {
        // randomized over a small seeded generator
        let mut seed = 42u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            (seed >> 33) as i64
        };
        for _ in 0..100 {
            let dim = 3;
            let mut a = Polynomial::zero(dim);
            let mut b = Polynomial::zero(dim);
            for _ in 0..4 {
                let m = Monomial(vec![
                    (next() % 4) as u32,
                    (next() % 4) as u32,
                    (next() % 4) as u32,
                ]);
                a.add_term(m, rat_i(next() % 7 - 3));
                let m = Monomial(vec![
                    (next() % 4) as u32,
                    (next() % 4) as u32,
                    (next() % 4) as u32,
                ]);
                b.add_term(m, rat_i(next() % 7 - 3));
            }
            if a.is_zero() || b.is_zero() {
                continue;
            }
            let prod = a.mul(&b).unwrap();
            assert_eq!(prod.degree(), a.degree() + b.degree());
        }
    }

    #[test]
    fn substitution_examples() {
        // x -> x+1 in x^2 gives x^2 + 2x + 1
        let p = x(1, 0).pow(2);
        let shifted = p.substitute(&[x(1, 0).add(&Polynomial::one(1)).unwrap()]).unwrap();
        let mut want = x(1, 0).pow(2);
        want = want.add(&x(1, 0).scale(&rat_i(2))).unwrap();
        want = want.add(&Polynomial::one(1)).unwrap();
        assert_eq!(shifted, want);

        // identity assignment
        let p = x(2, 0).mul(&x(2, 1)).unwrap();
        assert_eq!(p.substitute(&[x(2, 0), x(2, 1)]).unwrap(), p);
    }

    #[test]
    fn substitute_constants_matches_eval() {
        let p = x(2, 0).pow(3).add(&x(2, 1).scale(&rat(5, 3))).unwrap();
        let pt = [rat(7, 2), rat(-1, 4)];
        let by_subst = p
            .substitute(&[
                Polynomial::constant(0, pt[0].clone()),
                Polynomial::constant(0, pt[1].clone()),
            ])
            .unwrap();
        assert_eq!(by_subst.as_constant().unwrap(), p.eval_exact(&pt).unwrap());
    }

    #[test]
    fn derivative_examples() {
        let p = x(1, 0).pow(2);
        assert_eq!(p.partial_derivative(0).unwrap(), x(1, 0).scale(&rat_i(2)));
        let c = Polynomial::constant(2, rat_i(9));
        assert!(c.partial_derivative(1).unwrap().is_zero());
        assert!(matches!(
            x(1, 0).partial_derivative(3),
            Err(PolyError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn derivative_matches_finite_differences() {
        // |(p(x+h) - p(x-h)) / 2h - p'(x)| = O(h^2), checked by exact halving
        let p = x(1, 0)
            .pow(4)
            .add(&x(1, 0).pow(2).scale(&rat(-3, 7)))
            .unwrap()
            .add(&Polynomial::one(1))
            .unwrap();
        let dp = p.partial_derivative(0).unwrap();
        let x0 = rat(3, 5);
        let exact = dp.eval_exact(std::slice::from_ref(&x0)).unwrap();
        let diff_at = |h: BigRational| {
            let up = p.eval_exact(&[&x0 + &h]).unwrap();
            let dn = p.eval_exact(&[&x0 - &h]).unwrap();
            (up - dn) / (BigRational::from_integer(2.into()) * h)
        };
        let e1 = (diff_at(rat(1, 100)) - &exact).abs();
        let e2 = (diff_at(rat(1, 200)) - &exact).abs();
        // halving h shrinks the error by ~4 (second order)
        assert!(e2 * rat_i(3) < e1, "not O(h^2)");
    }

    #[test]
    fn eval_examples() {
        let p = x(1, 0).pow(2).sub(&Polynomial::one(1)).unwrap();
        assert_eq!(p.eval_exact(&[rat(3, 2)]).unwrap(), rat(5, 4));
        assert_eq!(Polynomial::zero(2).eval_exact(&[rat_i(1), rat_i(2)]).unwrap(), rat_i(0));
    }

    #[test]
    fn eval_float_agrees_with_exact_to_70_digits() {
        let ctx = Ctx::new(256);
        let p = x(2, 0)
            .pow(5)
            .add(&x(2, 1).pow(3).scale(&rat(22, 7)))
            .unwrap()
            .add(&Polynomial::constant(2, rat(-355, 113)))
            .unwrap();
        let pt_exact = [rat(13, 11), rat(-5, 9)];
        let exact = p.eval_exact(&pt_exact).unwrap();
        let pt_float: Vec<Real> = pt_exact.iter().map(|q| ctx.from_rat(q)).collect();
        let float = p.eval_float(&ctx, &pt_float).unwrap();
        let err = crate::scalar::abs(&(float - ctx.from_rat(&exact)));
        let bound = ctx.from_rat(&rat_i(1)) / ctx.int(10).powi(70.into());
        assert!(err < bound);
    }

    #[test]
    fn sphere_reduction_examples() {
        let n = 4; // variables y0..y3
        let mut sphere = Polynomial::constant(n, rat_i(-1));
        for i in 0..n {
            sphere = sphere.add(&x(n, i).pow(2)).unwrap();
        }
        assert!(sphere.reduce_mod_sphere().is_zero());

        let y0sq = x(n, 0).pow(2);
        let mut want = Polynomial::one(n);
        for i in 1..n {
            want = want.sub(&x(n, i).pow(2)).unwrap();
        }
        assert_eq!(y0sq.reduce_mod_sphere(), want);
    }

    #[test]
    fn sphere_reduction_idempotent_and_sound() {
        let n = 3;
        let p = x(n, 0)
            .pow(3)
            .mul(&x(n, 1))
            .unwrap()
            .add(&x(n, 2).pow(2).scale(&rat(3, 2)))
            .unwrap();
        let r = p.reduce_mod_sphere();
        assert_eq!(r.reduce_mod_sphere(), r);
        assert!(r.degree_in(0) <= 1);
        // p - r lies in the ideal: reduce(p - r) = 0
        assert!(p.sub(&r).unwrap().reduce_mod_sphere().is_zero());
    }

    #[test]
    fn sphere_reduction_agrees_on_sphere_points() {
        // rational points on the sphere via the stereographic image of
        // rational chart points
        let n = 3;
        let p = x(n, 0)
            .pow(4)
            .add(&x(n, 1).mul(&x(n, 2)).unwrap().scale(&rat(7, 3)))
            .unwrap();
        let r = p.reduce_mod_sphere();
        for (a, b) in [(rat(1, 2), rat(-2, 3)), (rat_i(3), rat(1, 7)), (rat_i(0), rat_i(0))] {
            let r2 = &a * &a + &b * &b;
            let denom = &r2 + rat_i(1);
            let y0 = (&r2 - rat_i(1)) / &denom;
            let y1 = &a * rat_i(2) / &denom;
            let y2 = &b * rat_i(2) / &denom;
            let pt = [y0, y1, y2];
            assert_eq!(p.eval_exact(&pt).unwrap(), r.eval_exact(&pt).unwrap());
        }
    }

    #[test]
    fn json_round_trip_is_canonical() {
        let f = PolyVectorField::new(vec![
            x(2, 0).pow(3).add(&x(2, 1).scale(&rat(-7, 2))).unwrap(),
            Polynomial::one(2),
        ])
        .unwrap();
        let s = f.to_json_string();
        let back = PolyVectorField::from_json_str(&s).unwrap();
        assert_eq!(f, back);
        assert_eq!(s, back.to_json_string());
    }

    #[test]
    fn grlex_leading_term_order() {
        let mut p = Polynomial::zero(2);
        p.add_term(Monomial(vec![1, 1]), rat_i(1));
        p.add_term(Monomial(vec![0, 3]), rat_i(1));
        p.add_term(Monomial(vec![2, 0]), rat_i(1));
        let order: Vec<Vec<u32>> = p.terms.keys().rev().map(|m| m.0.clone()).collect();
        // degree 3 first; within degree 2, x0^2 beats x0x1
        assert_eq!(order, vec![vec![0, 3], vec![2, 0], vec![1, 1]]);
    }
}
