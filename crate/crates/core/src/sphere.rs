//! Stereographic lift of polynomial vector fields from the chart ℝⁿ to the
//! unit sphere Sⁿ ⊂ ℝⁿ⁺¹: the pushforward in closed form with the
//! denominator-clearing prefactor (1−y0)^d, exact tangency and fixed-point
//! verification, and region lifting through the chart.
//!
//! With G_i := F_i(y/(1−y0))·(1−y0)^d and S := Σ y_i·G_i, the lifted field is
//!   X_0 = (1−y0)·S,   X_j = (1−y0)·G_j − y_j·S,
//! so ⟨X, y⟩ = S·(1 − |y|²) vanishes identically on the sphere and the north
//! pole (1, 0, …, 0) is a zero.

use crate::poly::{Monomial, PolyError, Polynomial, PolyVectorField};
use crate::scalar::{rat_i, Ctx, Real};
use num_rational::BigRational;
use num_traits::{One, Zero};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SphereError {
    #[error("polynomial error: {0}")]
    Poly(#[from] PolyError),
    #[error("prefactor degree {d} is below the field degree {deg}")]
    DegreeTooSmall { d: u32, deg: u32 },
    #[error("north pole has no chart preimage (y0 = 1)")]
    NorthPole,
    #[error("point is not on the sphere: |y|² − 1 = {0}")]
    OffSphere(String),
}

/// Inverse stereographic projection ℝⁿ → Sⁿ:
/// y0 = (r²−1)/(1+r²), y_k = 2x_k/(1+r²). Exact on rationals.
pub fn stereo(x: &[BigRational]) -> Vec<BigRational> {
    let r2: BigRational = x.iter().map(|v| v * v).sum();
    let denom = &r2 + BigRational::one();
    let mut y = Vec::with_capacity(x.len() + 1);
    y.push((&r2 - BigRational::one()) / &denom);
    for v in x {
        y.push(v * rat_i(2) / &denom);
    }
    y
}

/// Chart coordinates of a sphere point: x_k = y_k/(1−y0). Undefined at the
/// north pole.
pub fn stereo_inv(y: &[BigRational]) -> Result<Vec<BigRational>, SphereError> {
    let denom = BigRational::one() - &y[0];
    if denom.is_zero() {
        return Err(SphereError::NorthPole);
    }
    Ok(y[1..].iter().map(|v| v / &denom).collect())
}

/// Float versions for trajectory work.
pub fn stereo_float(ctx: &Ctx, x: &[Real]) -> Vec<Real> {
    let mut r2 = ctx.zero();
    for v in x {
        r2 += v.clone() * v;
    }
    let denom = r2.clone() + ctx.one();
    let mut y = Vec::with_capacity(x.len() + 1);
    y.push((r2 - ctx.one()) / &denom);
    for v in x {
        y.push(v.clone() * ctx.int(2) / &denom);
    }
    y
}

pub fn stereo_inv_float(ctx: &Ctx, y: &[Real]) -> Vec<Real> {
    let denom = ctx.one() - &y[0];
    y[1..].iter().map(|v| v.clone() / &denom).collect()
}

/// An ambient polynomial field on ℝⁿ⁺¹ tangent to Sⁿ, from lifting a chart
/// field of degree ≤ d.
#[derive(Debug, Clone)]
pub struct SphereField {
    pub ambient: PolyVectorField,
    pub source_degree: u32,
    pub chart_dim: usize,
}

/// Substitute x_i ↦ y_i/(1−y0) into a chart polynomial and clear
/// denominators with (1−y0)^d: each monomial of chart degree e picks up
/// (1−y0)^{d−e}.
fn clear_denominators(p: &Polynomial, d: u32, ambient: usize) -> Polynomial {
    let mut out = Polynomial::zero(ambient);
    // precompute (1−y0)^j
    let one_minus_y0 = {
        let mut q = Polynomial::one(ambient);
        q.add_term(Monomial::var(ambient, 0), -BigRational::one());
        q
    };
    let mut pows: Vec<Polynomial> = vec![Polynomial::one(ambient)];
    for j in 1..=d {
        pows.push(pows[(j - 1) as usize].mul(&one_minus_y0).expect("dim"));
    }
    for (m, c) in p.terms() {
        let e: u32 = m.total_degree();
        debug_assert!(e <= d);
        let mut mono = Monomial::constant(ambient);
        for (i, &exp) in m.0.iter().enumerate() {
            mono.0[i + 1] = exp;
        }
        let mut term = Polynomial::zero(ambient);
        term.add_term(mono, c.clone());
        out = out.add(&term.mul(&pows[(d - e) as usize]).expect("dim")).expect("dim");
    }
    out
}

/// Closed-form pushforward with prefactor: X := (1−y0)^d · φ_* P.
pub fn pushforward_closed_form(p: &PolyVectorField, d: u32) -> Result<SphereField, SphereError> {
    let n = p.dim();
    let deg = p.degree();
    if d < deg {
        return Err(SphereError::DegreeTooSmall { d, deg });
    }
    let ambient = n + 1;
    let g: Vec<Polynomial> =
        p.components().iter().map(|f| clear_denominators(f, d, ambient)).collect();
    // S = Σ y_i·G_i
    let mut s = Polynomial::zero(ambient);
    for (i, gi) in g.iter().enumerate() {
        s = s.add(&gi.mul_var_pow(i + 1, 1)).expect("dim");
    }
    let one_minus_y0 = {
        let mut q = Polynomial::one(ambient);
        q.add_term(Monomial::var(ambient, 0), -BigRational::one());
        q
    };
    let mut comps = Vec::with_capacity(ambient);
    comps.push(one_minus_y0.mul(&s).expect("dim"));
    for (j, gj) in g.iter().enumerate() {
        let a = one_minus_y0.mul(gj).expect("dim");
        let b = s.mul_var_pow(j + 1, 1);
        comps.push(a.sub(&b).expect("dim"));
    }
    Ok(SphereField {
        ambient: PolyVectorField::new(comps)?,
        source_degree: d,
        chart_dim: n,
    })
}

/// True iff ⟨X, y⟩ reduces to zero modulo the sphere ideal — the exact
/// tangency test.
pub fn verify_tangency(x: &PolyVectorField) -> bool {
    let n = x.dim();
    let mut inner = Polynomial::zero(n);
    for (i, c) in x.components().iter().enumerate() {
        inner = inner.add(&c.mul_var_pow(i, 1)).expect("dim");
    }
    inner.reduce_mod_sphere().is_zero()
}

/// Exact evaluation at the north pole (1, 0, …, 0).
pub fn north_pole_value(x: &PolyVectorField) -> Vec<BigRational> {
    let n = x.dim();
    let mut pole = vec![BigRational::zero(); n];
    pole[0] = BigRational::one();
    x.eval_exact(&pole).expect("dimension matches")
}

/// Reparametrization factor flavor: both rescale P by (1+r²)^{−d}, differing
/// only in the positive constant 2^d.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RepaFactor {
    /// 2^d/(1+r²)^d — the lift convention.
    TwoPow,
    /// 1/(1+r²)^d — the time-δ map convention.
    Plain,
}

/// Exact consistency check of the closed-form lift against the chain rule:
/// at each sample x, J_φ(x)·P̃(x) must equal X(φ(x)) in exact rational
/// arithmetic, where P̃ carries the chosen reparametrization factor.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ConsistencyReport {
    pub samples: usize,
    pub failures: usize,
    pub factor_two_pow: bool,
}

pub fn pushforward_consistency(
    p: &PolyVectorField,
    lifted: &SphereField,
    samples: &[Vec<BigRational>],
    factor: RepaFactor,
) -> Result<ConsistencyReport, SphereError> {
    let n = p.dim();
    let d = lifted.source_degree;
    let mut failures = 0usize;
    for x in samples {
        assert_eq!(x.len(), n);
        let r2: BigRational = x.iter().map(|v| v * v).sum();
        let denom = &r2 + BigRational::one();
        // P̃(x) = factor · P(x)
        let mut scale = BigRational::one();
        for _ in 0..d {
            scale /= &denom;
        }
        if factor == RepaFactor::TwoPow {
            for _ in 0..d {
                scale *= rat_i(2);
            }
        }
        let pv: Vec<BigRational> =
            p.eval_exact(x)?.into_iter().map(|v| v * &scale).collect();
        // J_φ rows: ∂y0/∂x_i = 4x_i/(1+r²)²; ∂y_k/∂x_i = 2δ_{ki}/(1+r²) − 4x_k x_i/(1+r²)²
        let denom2 = &denom * &denom;
        let mut jp = vec![BigRational::zero(); n + 1];
        for i in 0..n {
            jp[0] += &x[i] * rat_i(4) / &denom2 * &pv[i];
        }
        for k in 0..n {
            let mut acc = &pv[k] * rat_i(2) / &denom;
            for i in 0..n {
                acc -= &x[k] * &x[i] * rat_i(4) / &denom2 * &pv[i];
            }
            jp[k + 1] = acc;
        }
        // X at φ(x), rescaled when the factor omits 2^d: X corresponds to
        // the TwoPow convention exactly
        let y = stereo(x);
        let mut xv = lifted.ambient.eval_exact(&y)?;
        if factor == RepaFactor::Plain {
            let mut two_pow = BigRational::one();
            for _ in 0..d {
                two_pow *= rat_i(2);
            }
            for v in &mut xv {
                *v /= &two_pow;
            }
        }
        if jp != xv {
            failures += 1;
        }
    }
    Ok(ConsistencyReport {
        samples: samples.len(),
        failures,
        factor_two_pow: factor == RepaFactor::TwoPow,
    })
}

/// Report for one lift: the degree law, the exact tangency and pole checks.
#[derive(Debug, Clone, serde::Serialize)]
pub struct LiftReport {
    pub chart_dim: usize,
    pub source_degree: u32,
    pub lifted_degree: u32,
    pub tangent: bool,
    pub north_pole_zero: bool,
    pub consistency_samples: usize,
    pub consistency_failures: usize,
}

pub fn lift_with_report(
    p: &PolyVectorField,
    d: u32,
    samples: &[Vec<BigRational>],
) -> Result<(SphereField, LiftReport), SphereError> {
    let lifted = pushforward_closed_form(p, d)?;
    let tangent = verify_tangency(&lifted.ambient);
    let pole = north_pole_value(&lifted.ambient);
    let consistency =
        pushforward_consistency(p, &lifted, samples, RepaFactor::TwoPow)?;
    let report = LiftReport {
        chart_dim: p.dim(),
        source_degree: d,
        lifted_degree: lifted.ambient.degree(),
        tangent,
        north_pole_zero: pole.iter().all(|v| v.is_zero()),
        consistency_samples: consistency.samples,
        consistency_failures: consistency.failures,
    };
    Ok((lifted, report))
}

/// Sphere-region membership by chart pullback: a sphere point is inside iff
/// its chart preimage is; the north pole is outside by definition.
pub struct LiftedRegionProbe<'r> {
    pub region: &'r crate::pivp::RegionSpec,
    /// chart indices of ω and z1 among the chart coordinates
    pub omega_index: usize,
    pub z1_indices: [usize; 3],
}

impl LiftedRegionProbe<'_> {
    /// Margin through the chart; +1 near the pole (outside, chart-degenerate).
    pub fn margin(&self, ctx: &Ctx, y: &[Real]) -> Real {
        let gap = ctx.one() - &y[0];
        if gap <= ctx.pow2(-40) {
            return ctx.one();
        }
        let x = stereo_inv_float(ctx, y);
        let z1 = [
            x[self.z1_indices[0]].clone(),
            x[self.z1_indices[1]].clone(),
            x[self.z1_indices[2]].clone(),
        ];
        self.region.margin(ctx, &x[self.omega_index], &z1)
    }

    pub fn contains(&self, ctx: &Ctx, y: &[Real]) -> bool {
        use dashu_base::Sign;
        self.margin(ctx, y).sign() == Sign::Negative
    }
}
