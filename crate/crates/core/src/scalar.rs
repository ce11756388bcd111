//! Numeric substrate: exact rationals, the `a + b·π` coefficient ring used by
//! trigonometric arguments, the `a + b·√5` ring used for exact kernel evaluation,
//! and a precision context wrapping arbitrary-precision binary floats.

use dashu_float::round::mode::HalfEven;
use dashu_float::{Context, FBig};
use num_bigint::{BigInt, Sign};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

/// Arbitrary-precision binary float. Precision is carried by the value.
pub type Real = FBig<HalfEven, 2>;

/// One-stop rational constructors.
pub fn rat_i(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

pub fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn bigint_to_ibig(x: &BigInt) -> dashu_int::IBig {
    let (sign, bytes) = x.to_bytes_le();
    let mag = dashu_int::UBig::from_le_bytes(&bytes);
    match sign {
        Sign::Minus => -dashu_int::IBig::from(mag),
        _ => dashu_int::IBig::from(mag),
    }
}

/// Precision context: every conversion into `Real` goes through here so the
/// working precision is applied uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ctx {
    pub bits: usize,
}

impl Ctx {
    pub fn new(bits: usize) -> Self {
        assert!(bits >= 64, "precision must be at least 64 bits");
        Ctx { bits }
    }

    fn context(&self) -> Context<HalfEven> {
        Context::new(self.bits)
    }

    pub fn zero(&self) -> Real {
        Real::ZERO.with_precision(self.bits).value()
    }

    pub fn one(&self) -> Real {
        Real::ONE.with_precision(self.bits).value()
    }

    pub fn int(&self, n: i64) -> Real {
        Real::from(n).with_precision(self.bits).value()
    }

    pub fn from_bigint(&self, n: &BigInt) -> Real {
        Real::from(bigint_to_ibig(n)).with_precision(self.bits).value()
    }

    pub fn from_rat(&self, q: &BigRational) -> Real {
        let n = self.from_bigint(q.numer());
        let d = self.from_bigint(q.denom());
        n / d
    }

    pub fn pi(&self) -> Real {
        self.context().pi(None).value()
    }

    /// Evaluates `plain + pi_part·π`.
    pub fn from_pirat(&self, c: &PiRat) -> Real {
        let mut v = self.from_rat(&c.plain);
        if !c.pi_part.is_zero() {
            v += self.from_rat(&c.pi_part) * self.pi();
        }
        v
    }

    pub fn parse_decimal(&self, s: &str) -> Option<Real> {
        let d: dashu_float::DBig = s.parse().ok()?;
        let b = d.to_binary().value().with_rounding::<HalfEven>();
        Some(b.with_precision(self.bits).value())
    }

    /// Decimal string with enough digits to round-trip the working precision.
    pub fn to_decimal_string(&self, x: &Real) -> String {
        let digits = (self.bits as f64 * 0.30103).ceil() as usize + 2;
        let d = x
            .clone()
            .with_rounding::<HalfEven>()
            .to_decimal()
            .value()
            .with_precision(digits)
            .value();
        d.to_string()
    }

    pub fn to_f64(&self, x: &Real) -> f64 {
        x.to_f64().value()
    }

    /// 2^-k as a convenient tolerance scale.
    pub fn pow2(&self, k: i64) -> Real {
        if k >= 0 {
            self.int(2).powi(k.into())
        } else {
            self.one() / self.int(2).powi((-k).into())
        }
    }
}

/// Element of the ring ℚ + ℚ·π, the coefficient domain for trig arguments.
/// `sin(2πx)` has the x-coefficient `PiRat { plain: 0, pi_part: 2 }`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PiRat {
    pub plain: BigRational,
    pub pi_part: BigRational,
}

impl PiRat {
    pub fn zero() -> Self {
        PiRat { plain: BigRational::zero(), pi_part: BigRational::zero() }
    }

    pub fn from_rat(q: BigRational) -> Self {
        PiRat { plain: q, pi_part: BigRational::zero() }
    }

    pub fn pi_times(q: BigRational) -> Self {
        PiRat { plain: BigRational::zero(), pi_part: q }
    }

    pub fn is_zero(&self) -> bool {
        self.plain.is_zero() && self.pi_part.is_zero()
    }

    pub fn has_pi(&self) -> bool {
        !self.pi_part.is_zero()
    }

    pub fn add(&self, o: &PiRat) -> PiRat {
        PiRat { plain: &self.plain + &o.plain, pi_part: &self.pi_part + &o.pi_part }
    }

    pub fn scale(&self, q: &BigRational) -> PiRat {
        PiRat { plain: &self.plain * q, pi_part: &self.pi_part * q }
    }

    pub fn neg(&self) -> PiRat {
        PiRat { plain: -self.plain.clone(), pi_part: -self.pi_part.clone() }
    }
}

/// Element of ℚ(√5), used to evaluate the digit-indicator kernels exactly:
/// cos(2πm/5) lies in this field for every integer m.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sqrt5Rat {
    pub a: BigRational,
    pub b: BigRational,
}

impl Sqrt5Rat {
    pub fn zero() -> Self {
        Sqrt5Rat { a: BigRational::zero(), b: BigRational::zero() }
    }

    pub fn one() -> Self {
        Sqrt5Rat { a: BigRational::one(), b: BigRational::zero() }
    }

    pub fn from_rat(q: BigRational) -> Self {
        Sqrt5Rat { a: q, b: BigRational::zero() }
    }

    pub fn is_rational(&self) -> bool {
        self.b.is_zero()
    }

    pub fn as_rational(&self) -> Option<BigRational> {
        self.is_rational().then(|| self.a.clone())
    }

    pub fn add(&self, o: &Sqrt5Rat) -> Sqrt5Rat {
        Sqrt5Rat { a: &self.a + &o.a, b: &self.b + &o.b }
    }

    pub fn sub(&self, o: &Sqrt5Rat) -> Sqrt5Rat {
        Sqrt5Rat { a: &self.a - &o.a, b: &self.b - &o.b }
    }

    pub fn mul(&self, o: &Sqrt5Rat) -> Sqrt5Rat {
        // (a + b√5)(c + d√5) = ac + 5bd + (ad + bc)√5
        let five = rat_i(5);
        Sqrt5Rat {
            a: &self.a * &o.a + &(&self.b * &o.b) * &five,
            b: &self.a * &o.b + &self.b * &o.a,
        }
    }

    pub fn scale(&self, q: &BigRational) -> Sqrt5Rat {
        Sqrt5Rat { a: &self.a * q, b: &self.b * q }
    }

    pub fn pow(&self, mut e: u32) -> Sqrt5Rat {
        let mut base = self.clone();
        let mut acc = Sqrt5Rat::one();
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base);
            }
            base = base.mul(&base);
            e >>= 1;
        }
        acc
    }
}

/// Exact value of cos(π·q) when it lies in ℚ(√5), i.e. when the reduced
/// denominator of q divides 10. Returns None otherwise.
pub fn cos_pi_rational_sqrt5(q: &BigRational) -> Option<Sqrt5Rat> {
    // Reduce q modulo 2 (cosine has period 2π).
    let two = rat_i(2);
    let m = q - (q / &two).floor() * &two; // m in [0, 2)
    let denom = m.denom().clone();
    let d: i64 = denom.try_into().ok()?;
    if 10 % d != 0 {
        return None;
    }
    // m = j / 10 for integer j in [0, 20)
    let j_rat = &m * rat_i(10);
    debug_assert!(j_rat.is_integer());
    let j: i64 = j_rat.to_integer().try_into().ok()?;
    // cos(π j/10): supported j are multiples of 1 (π/10 grid). Values needed
    // here are those on the π/5 and π/2 grids; the half-integer grid gives 0.
    let table = |j: i64| -> Option<Sqrt5Rat> {
        // cos(π j / 10) for j in [0, 20)
        let quarter = rat(1, 4);
        match j {
            0 => Some(Sqrt5Rat::from_rat(rat_i(1))),
            5 => Some(Sqrt5Rat::from_rat(rat_i(0))),
            10 => Some(Sqrt5Rat::from_rat(rat_i(-1))),
            15 => Some(Sqrt5Rat::from_rat(rat_i(0))),
            // cos(π/5) = (1+√5)/4, cos(2π/5) = (−1+√5)/4
            2 => Some(Sqrt5Rat { a: quarter.clone(), b: quarter.clone() }),
            4 => Some(Sqrt5Rat { a: -quarter.clone(), b: quarter.clone() }),
            6 => Some(Sqrt5Rat { a: quarter.clone(), b: -quarter.clone() }),
            8 => Some(Sqrt5Rat { a: -quarter.clone(), b: -quarter.clone() }),
            12 => Some(Sqrt5Rat { a: -quarter.clone(), b: -quarter.clone() }),
            14 => Some(Sqrt5Rat { a: quarter.clone(), b: -quarter.clone() }),
            16 => Some(Sqrt5Rat { a: -quarter.clone(), b: quarter.clone() }),
            18 => Some(Sqrt5Rat { a: quarter.clone(), b: quarter.clone() }),
            _ => None, // odd tenths other than the π/2 grid need √(10±2√5)
        }
    };
    table(j.rem_euclid(20))
}

/// Exact value of sin(π·q) when rational or in ℚ(√5); sin on the π/5 grid is
/// not in ℚ(√5), so only the half-integer grid yields values here.
pub fn sin_pi_rational_sqrt5(q: &BigRational) -> Option<Sqrt5Rat> {
    // sin(πq) = cos(π(q − 1/2))
    cos_pi_rational_sqrt5(&(q - rat(1, 2)))
}

/// Exact trig value descriptor: angle = plain + π·pi_mult (radians).
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TrigAngle {
    pub plain: String,
    pub pi_mult: String,
}

/// An exactly-described scalar: either a polynomial in π with rational
/// coefficients, or sin/cos of an exactly-described angle. This is the value
/// language for constructible initial points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExactVal {
    /// coeffs[k] multiplies π^k.
    PiPoly(Vec<BigRational>),
    /// sin or cos of (plain + π·pi_mult).
    Trig { is_sin: bool, plain: BigRational, pi_mult: BigRational },
}

impl ExactVal {
    pub fn rational(q: BigRational) -> Self {
        ExactVal::PiPoly(vec![q])
    }

    pub fn zero() -> Self {
        ExactVal::rational(BigRational::zero())
    }

    pub fn as_rational(&self) -> Option<BigRational> {
        match self {
            ExactVal::PiPoly(c) => {
                if c.iter().skip(1).all(|x| x.is_zero()) {
                    Some(c.first().cloned().unwrap_or_else(BigRational::zero))
                } else {
                    None
                }
            }
            ExactVal::Trig { is_sin, plain, pi_mult } if plain.is_zero() => {
                let v = if *is_sin {
                    sin_pi_rational_sqrt5(pi_mult)
                } else {
                    cos_pi_rational_sqrt5(pi_mult)
                };
                v.and_then(|s| s.as_rational())
            }
            _ => None,
        }
    }

    pub fn eval(&self, ctx: &Ctx) -> Real {
        match self {
            ExactVal::PiPoly(coeffs) => {
                let pi = ctx.pi();
                let mut acc = ctx.zero();
                for c in coeffs.iter().rev() {
                    acc = acc * &pi + ctx.from_rat(c);
                }
                acc
            }
            ExactVal::Trig { is_sin, plain, pi_mult } => {
                let angle = ctx.from_rat(plain) + ctx.from_rat(pi_mult) * ctx.pi();
                if *is_sin {
                    angle.sin()
                } else {
                    angle.cos()
                }
            }
        }
    }
}

/// Absolute value helper for `Real`.
pub fn abs(x: &Real) -> Real {
    if x.sign() == dashu_base::Sign::Negative {
        -x.clone()
    } else {
        x.clone()
    }
}

/// max over an iterator of Reals (None when empty).
pub fn max_all<I: IntoIterator<Item = Real>>(it: I) -> Option<Real> {
    let mut best: Option<Real> = None;
    for v in it {
        best = Some(match best {
            None => v,
            Some(b) => {
                if v > b {
                    v
                } else {
                    b
                }
            }
        });
    }
    best
}

/// Round a Real to the nearest BigInt.
pub fn round_to_bigint(x: &Real) -> BigInt {
    let half = Real::from(1) / Real::from(2);
    let shifted = if x.sign() == dashu_base::Sign::Negative {
        x.clone() - half
    } else {
        x.clone() + half
    };
    use dashu_base::Abs;
    let ib = shifted.trunc().to_int().value();
    let sign = ib.sign();
    let mag: dashu_int::UBig = ib.abs().try_into().expect("abs is nonnegative");
    let bytes = mag.to_le_bytes();
    let big = BigInt::from_bytes_le(Sign::Plus, &bytes);
    match sign {
        dashu_base::Sign::Negative => -big,
        dashu_base::Sign::Positive => big,
    }
}

/// Convert an exact rational bound to a Real at the given precision.
pub fn rational_is_nonneg(q: &BigRational) -> bool {
    !q.is_negative()
}
