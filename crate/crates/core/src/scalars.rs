//! Exact scalars: Gaussian rationals `ℚ(i)` and a π-graded extension.
//!
//! Every kernel coefficient produced by the pipeline is a Gaussian rational
//! times an integer power of π, so π is carried as a grading and never
//! evaluated.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use num_bigint::{BigInt, Sign};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::{self, Deserializer};
use serde::ser::{SerializeStruct, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Arbitrary precision rational with denominator kept positive and reduced.
pub type Rational = BigRational;

pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn rat_int(num: i64) -> Rational {
    Rational::from_integer(BigInt::from(num))
}

/// `re + i·im` with exact rational parts.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct GaussianRational {
    pub re: Rational,
    pub im: Rational,
}

impl GaussianRational {
    pub fn new(re: Rational, im: Rational) -> Self {
        Self { re, im }
    }

    pub fn from_ints(re: i64, im: i64) -> Self {
        Self::new(rat_int(re), rat_int(im))
    }

    pub fn real(re: Rational) -> Self {
        Self::new(re, Rational::zero())
    }

    pub fn from_ratio(num: i64, den: i64) -> Self {
        Self::real(rat(num, den))
    }

    pub fn i() -> Self {
        Self::from_ints(0, 1)
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn one() -> Self {
        Self::from_ints(1, 0)
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.re.is_one() && self.im.is_zero()
    }

    pub fn is_real(&self) -> bool {
        self.im.is_zero()
    }

    pub fn conj(&self) -> Self {
        Self::new(self.re.clone(), -self.im.clone())
    }

    /// `|z|²`
    pub fn norm_sqr(&self) -> Rational {
        &self.re * &self.re + &self.im * &self.im
    }

    pub fn scale(&self, k: &Rational) -> Self {
        Self::new(&self.re * k, &self.im * k)
    }

    /// Multiplication by `i`.
    pub fn mul_i(&self) -> Self {
        Self::new(-self.im.clone(), self.re.clone())
    }

    pub fn inv(&self) -> Result<Self> {
        if self.is_zero() {
            return Err(Error::DivisionByZero);
        }
        let n = self.norm_sqr();
        Ok(Self::new(&self.re / &n, -(&self.im / &n)))
    }

    pub fn checked_div(&self, rhs: &Self) -> Result<Self> {
        Ok(self * &rhs.inv()?)
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..e {
            acc = &acc * self;
        }
        acc
    }

    /// Principal square root (argument in `(-π/2, π/2]`), when it lies in `ℚ(i)`.
    pub fn exact_sqrt(&self) -> Result<Self> {
        if self.is_zero() {
            return Ok(Self::zero());
        }
        // (x + iy)² = a + ib  ⇒  x² = (a + |z|)/2, y = b/(2x)
        let modulus = rational_sqrt(&self.norm_sqr()).ok_or(Error::InexactRoot)?;
        let half = rat(1, 2);
        let x2 = (&self.re + &modulus) * &half;
        if x2.is_zero() {
            // purely negative real: root is i·sqrt(-a)
            let y = rational_sqrt(&(-self.re.clone())).ok_or(Error::InexactRoot)?;
            return Ok(Self::new(Rational::zero(), y));
        }
        let x = rational_sqrt(&x2).ok_or(Error::InexactRoot)?;
        let y = &self.im / (&x * rat_int(2));
        Ok(Self::new(x, y))
    }

    pub fn to_complex(&self) -> num_complex::Complex64 {
        num_complex::Complex64::new(
            self.re.to_f64().unwrap_or(f64::NAN),
            self.im.to_f64().unwrap_or(f64::NAN),
        )
    }
}

/// Square root of a nonnegative rational, if exact.
pub fn rational_sqrt(q: &Rational) -> Option<Rational> {
    if q.is_negative() {
        return None;
    }
    let n = q.numer();
    let d = q.denom();
    let sn = n.sqrt();
    let sd = d.sqrt();
    if &(&sn * &sn) == n && &(&sd * &sd) == d {
        Some(Rational::new(sn, sd))
    } else {
        None
    }
}

impl From<i64> for GaussianRational {
    fn from(v: i64) -> Self {
        Self::from_ints(v, 0)
    }
}

impl From<Rational> for GaussianRational {
    fn from(v: Rational) -> Self {
        Self::real(v)
    }
}

macro_rules! forward_binop {
    ($tr:ident, $method:ident, $body:expr) => {
        impl<'a> $tr<&'a GaussianRational> for &'a GaussianRational {
            type Output = GaussianRational;
            fn $method(self, rhs: &'a GaussianRational) -> GaussianRational {
                let f: fn(&GaussianRational, &GaussianRational) -> GaussianRational = $body;
                f(self, rhs)
            }
        }
        impl $tr<GaussianRational> for GaussianRational {
            type Output = GaussianRational;
            fn $method(self, rhs: GaussianRational) -> GaussianRational {
                (&self).$method(&rhs)
            }
        }
        impl<'a> $tr<&'a GaussianRational> for GaussianRational {
            type Output = GaussianRational;
            fn $method(self, rhs: &'a GaussianRational) -> GaussianRational {
                (&self).$method(rhs)
            }
        }
    };
}

forward_binop!(Add, add, |a, b| GaussianRational::new(&a.re + &b.re, &a.im + &b.im));
forward_binop!(Sub, sub, |a, b| GaussianRational::new(&a.re - &b.re, &a.im - &b.im));
forward_binop!(Mul, mul, |a, b| {
    if a.im.is_zero() && b.im.is_zero() {
        return GaussianRational::real(&a.re * &b.re);
    }
    GaussianRational::new(
        &a.re * &b.re - &a.im * &b.im,
        &a.re * &b.im + &a.im * &b.re,
    )
});

impl AddAssign<&GaussianRational> for GaussianRational {
    fn add_assign(&mut self, rhs: &GaussianRational) {
        self.re += &rhs.re;
        self.im += &rhs.im;
    }
}

impl SubAssign<&GaussianRational> for GaussianRational {
    fn sub_assign(&mut self, rhs: &GaussianRational) {
        self.re -= &rhs.re;
        self.im -= &rhs.im;
    }
}

impl MulAssign<&GaussianRational> for GaussianRational {
    fn mul_assign(&mut self, rhs: &GaussianRational) {
        *self = &*self * rhs;
    }
}

impl Neg for GaussianRational {
    type Output = GaussianRational;
    fn neg(self) -> GaussianRational {
        GaussianRational::new(-self.re, -self.im)
    }
}

impl Neg for &GaussianRational {
    type Output = GaussianRational;
    fn neg(self) -> GaussianRational {
        GaussianRational::new(-self.re.clone(), -self.im.clone())
    }
}

fn fmt_rational(q: &Rational, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if q.denom().is_one() {
        write!(f, "{}", q.numer())
    } else {
        write!(f, "{}/{}", q.numer(), q.denom())
    }
}

impl fmt::Display for GaussianRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.re.is_zero(), self.im.is_zero()) {
            (_, true) => fmt_rational(&self.re, f),
            (true, false) => {
                fmt_rational(&self.im, f)?;
                write!(f, "i")
            }
            (false, false) => {
                write!(f, "(")?;
                fmt_rational(&self.re, f)?;
                if self.im.is_negative() {
                    write!(f, " - ")?;
                    fmt_rational(&-self.im.clone(), f)?;
                } else {
                    write!(f, " + ")?;
                    fmt_rational(&self.im, f)?;
                }
                write!(f, "i)")
            }
        }
    }
}

impl fmt::Debug for GaussianRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// `coeff · π^pi_power`. Zero is always stored with `pi_power = 0`.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct PiScaled {
    coeff: GaussianRational,
    pi_power: i32,
}

impl PiScaled {
    pub fn new(coeff: GaussianRational, pi_power: i32) -> Self {
        if coeff.is_zero() {
            Self::default()
        } else {
            Self { coeff, pi_power }
        }
    }

    pub fn rational(coeff: GaussianRational) -> Self {
        Self::new(coeff, 0)
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn coeff(&self) -> &GaussianRational {
        &self.coeff
    }

    pub fn pi_power(&self) -> i32 {
        self.pi_power
    }

    pub fn is_zero(&self) -> bool {
        self.coeff.is_zero()
    }

    pub fn checked_add(&self, rhs: &Self) -> Result<Self> {
        if self.is_zero() {
            return Ok(rhs.clone());
        }
        if rhs.is_zero() {
            return Ok(self.clone());
        }
        if self.pi_power != rhs.pi_power {
            return Err(Error::PiGrading {
                left: self.pi_power,
                right: rhs.pi_power,
            });
        }
        Ok(Self::new(&self.coeff + &rhs.coeff, self.pi_power))
    }

    pub fn checked_sub(&self, rhs: &Self) -> Result<Self> {
        self.checked_add(&-rhs)
    }

    pub fn checked_div(&self, rhs: &Self) -> Result<Self> {
        let c = self.coeff.checked_div(&rhs.coeff)?;
        Ok(Self::new(c, self.pi_power - rhs.pi_power))
    }

    pub fn scale(&self, k: &GaussianRational) -> Self {
        Self::new(&self.coeff * k, self.pi_power)
    }

    /// Principal square root; fails with [`Error::InexactRoot`] when the
    /// π-power is odd or the coefficient has no root in `ℚ(i)`.
    pub fn exact_sqrt(&self) -> Result<Self> {
        if self.pi_power % 2 != 0 {
            return Err(Error::InexactRoot);
        }
        Ok(Self::new(self.coeff.exact_sqrt()?, self.pi_power / 2))
    }

    pub fn to_complex(&self) -> num_complex::Complex64 {
        self.coeff.to_complex() * std::f64::consts::PI.powi(self.pi_power)
    }
}

impl Mul for &PiScaled {
    type Output = PiScaled;
    fn mul(self, rhs: &PiScaled) -> PiScaled {
        PiScaled::new(&self.coeff * &rhs.coeff, self.pi_power + rhs.pi_power)
    }
}

impl Mul for PiScaled {
    type Output = PiScaled;
    fn mul(self, rhs: PiScaled) -> PiScaled {
        &self * &rhs
    }
}

impl Neg for &PiScaled {
    type Output = PiScaled;
    fn neg(self) -> PiScaled {
        PiScaled::new(-&self.coeff, self.pi_power)
    }
}

impl fmt::Display for PiScaled {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.pi_power == 0 {
            write!(f, "{}", self.coeff)
        } else {
            write!(f, "{}·π^{}", self.coeff, self.pi_power)
        }
    }
}

impl fmt::Debug for PiScaled {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

// ---- serialization -------------------------------------------------------

/// `[numerator, denominator]` as decimal strings.
pub fn rational_to_json(q: &Rational) -> [String; 2] {
    [q.numer().to_string(), q.denom().to_string()]
}

#[derive(Deserialize)]
#[serde(untagged)]
enum IntLit {
    Int(i64),
    Str(String),
}

impl IntLit {
    fn to_bigint(&self) -> std::result::Result<BigInt, String> {
        match self {
            IntLit::Int(v) => Ok(BigInt::from(*v)),
            IntLit::Str(s) => s
                .trim()
                .parse::<BigInt>()
                .map_err(|e| format!("bad integer literal {s:?}: {e}")),
        }
    }
}

/// Reads `[num, den]`, each entry a JSON integer or a decimal string.
pub fn deserialize_rational<'de, D: Deserializer<'de>>(
    d: D,
) -> std::result::Result<Rational, D::Error> {
    let [n, den] = <[IntLit; 2]>::deserialize(d)?;
    let n = n.to_bigint().map_err(de::Error::custom)?;
    let den = den.to_bigint().map_err(de::Error::custom)?;
    if den.sign() == Sign::NoSign {
        return Err(de::Error::custom("zero denominator"));
    }
    Ok(Rational::new(n, den))
}

#[derive(Deserialize)]
struct GaussianRepr {
    #[serde(deserialize_with = "deserialize_rational")]
    re: Rational,
    #[serde(deserialize_with = "deserialize_rational")]
    im: Rational,
}

#[derive(Deserialize)]
struct PiScaledRepr {
    #[serde(deserialize_with = "deserialize_rational")]
    re: Rational,
    #[serde(deserialize_with = "deserialize_rational")]
    im: Rational,
    pi_power: i32,
}

impl Serialize for GaussianRational {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("GaussianRational", 2)?;
        st.serialize_field("re", &rational_to_json(&self.re))?;
        st.serialize_field("im", &rational_to_json(&self.im))?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for GaussianRational {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = GaussianRepr::deserialize(d)?;
        Ok(GaussianRational::new(r.re, r.im))
    }
}

impl Serialize for PiScaled {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("PiScaled", 3)?;
        st.serialize_field("re", &rational_to_json(&self.coeff.re))?;
        st.serialize_field("im", &rational_to_json(&self.coeff.im))?;
        st.serialize_field("pi_power", &self.pi_power)?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for PiScaled {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = PiScaledRepr::deserialize(d)?;
        Ok(PiScaled::new(GaussianRational::new(r.re, r.im), r.pi_power))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(re: i64, im: i64) -> GaussianRational {
        GaussianRational::from_ints(re, im)
    }

    #[test]
    fn gaussian_products() {
        assert_eq!(&g(1, 1) * &g(1, -1), g(2, 0));
        assert_eq!(g(0, 2).pow(2), g(-4, 0));
        let half_i = GaussianRational::new(Rational::zero(), rat(-1, 2));
        assert_eq!(g(0, 2).inv().unwrap(), half_i);
        assert_eq!(g(3, -4).conj(), g(3, 4));
    }

    #[test]
    fn division_by_zero_is_an_error() {
        assert!(matches!(g(1, 0).checked_div(&g(0, 0)), Err(Error::DivisionByZero)));
    }

    #[test]
    fn pi_scaled_arithmetic() {
        let a = PiScaled::new(GaussianRational::from_ratio(1, 2), -2);
        let b = PiScaled::new(g(2, 0), 2);
        assert_eq!(&a * &b, PiScaled::rational(g(1, 0)));
        assert!(matches!(
            a.checked_add(&PiScaled::rational(g(1, 0))),
            Err(Error::PiGrading { left: -2, right: 0 })
        ));
        assert_eq!(a.checked_add(&a).unwrap(), PiScaled::new(g(1, 0), -2));
        assert_eq!(PiScaled::new(g(0, 0), 5).pi_power(), 0);
    }

    #[test]
    fn n1_hessian_over_two_pi_i() {
        // diag(2i, 2i) ⊕ [[0,-1],[-1,0]] scaled by 1/(2πi): det = (1/4)π⁻⁴
        let two_pi_i = PiScaled::new(g(0, 2), 1);
        let mut det = PiScaled::rational(g(1, 0));
        for _ in 0..2 {
            det = &det * &PiScaled::rational(g(0, 2)).checked_div(&two_pi_i).unwrap();
        }
        let anti = PiScaled::rational(g(-1, 0)).checked_div(&(&two_pi_i * &two_pi_i)).unwrap();
        det = &det * &anti;
        assert_eq!(det, PiScaled::new(GaussianRational::from_ratio(1, 4), -4));
    }

    #[test]
    fn exact_square_roots() {
        let q = PiScaled::new(GaussianRational::from_ratio(1, 4), -4);
        assert_eq!(q.exact_sqrt().unwrap(), PiScaled::new(GaussianRational::from_ratio(1, 2), -2));
        assert_eq!(g(-4, 0).exact_sqrt().unwrap(), g(0, 2));
        assert!(matches!(g(2, 0).exact_sqrt(), Err(Error::InexactRoot)));
        assert_eq!(g(3, 4).exact_sqrt().unwrap(), g(2, 1));
        assert_eq!(g(0, 2).exact_sqrt().unwrap(), g(1, 1));
        assert_eq!(g(0, -2).exact_sqrt().unwrap(), g(1, -1));
        assert!(matches!(PiScaled::new(g(4, 0), 1).exact_sqrt(), Err(Error::InexactRoot)));
    }

    #[test]
    fn json_shapes() {
        let v = PiScaled::new(GaussianRational::from_ratio(-1, 1), -2);
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"{"re":["-1","1"],"im":["0","1"],"pi_power":-2}"#);
        let back: PiScaled = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
        let lit: GaussianRational = serde_json::from_str(r#"{"re":[2,6],"im":["0","1"]}"#).unwrap();
        assert_eq!(lit, GaussianRational::from_ratio(1, 3));
    }
}
