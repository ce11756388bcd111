//! Dimension accounting for the Euler-embedding target manifold SO(N)×T^N:
//! the harmonic capacity N(n,d), the Lie-group dimension N(N−1)/2 + N, and the
//! headline 10^35 bound check. Everything is exact big-integer arithmetic.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EulerError {
    #[error("n must be at least 2, got {0}")]
    BadDimension(u64),
}

fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut num = BigUint::one();
    let mut den = BigUint::one();
    for i in 0..k {
        num *= BigUint::from(n - i);
        den *= BigUint::from(i + 1);
    }
    num / den
}

/// One summand binom(n−1+j, j)·(2j+n−1)/(j+n−1), which is always a positive
/// integer; the exact division is asserted.
pub fn capacity_term(n: u64, d_j: u64) -> Result<BigUint, EulerError> {
    if n < 2 {
        return Err(EulerError::BadDimension(n));
    }
    let j = d_j;
    let b = binomial(n - 1 + j, j);
    let num = &b * BigUint::from(2 * j + n - 1);
    let den = BigUint::from(j + n - 1);
    let q = &num / &den;
    assert!(
        (&q * &den) == num,
        "capacity term not integral for n={n}, j={j}"
    );
    Ok(q)
}

/// N(n,d) = Σ_{j=0}^{d+1} binom(n−1+j, j)·(2j+n−1)/(j+n−1), for n ≥ 2.
pub fn harmonic_capacity(n: u64, d: u64) -> Result<BigUint, EulerError> {
    let mut sum = BigUint::zero();
    for j in 0..=(d + 1) {
        sum += capacity_term(n, j)?;
    }
    Ok(sum)
}

/// dim(SO(N)×T^N) = N(N−1)/2 + N.
pub fn manifold_dimension(n_cap: &BigUint) -> BigUint {
    let one = BigUint::one();
    if n_cap.is_zero() {
        return BigUint::zero();
    }
    (n_cap * (n_cap - &one)) / BigUint::from(2u32) + n_cap
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct EmbeddingReport {
    pub n: u64,
    pub d: u64,
    pub capacity: String,
    pub dim_m: String,
    pub dim_m_scientific: String,
    pub headline_bound: String,
    pub headline_check: bool,
}

fn scientific(x: &BigUint) -> String {
    let s = x.to_string();
    if s.len() <= 1 {
        return format!("{s}e0");
    }
    let exp = s.len() - 1;
    let lead = &s[..1];
    let frac = &s[1..s.len().min(7)];
    format!("{lead}.{frac}e{exp}")
}

/// Exact report for a (dimension, degree) pair; `headline_check` compares
/// dim(M) against 10^35.
pub fn headline_report(n: u64, d: u64) -> Result<EmbeddingReport, EulerError> {
    let capacity = harmonic_capacity(n, d)?;
    let dim_m = manifold_dimension(&capacity);
    let bound = BigUint::from(10u32).pow(35);
    Ok(EmbeddingReport {
        n,
        d,
        capacity: capacity.to_string(),
        dim_m: dim_m.to_string(),
        dim_m_scientific: scientific(&dim_m),
        headline_bound: bound.to_string(),
        headline_check: dim_m <= bound,
    })
}
