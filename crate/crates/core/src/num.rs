//! Exact numbers: big rationals, canonical dyadic rationals, and certified
//! brackets for fractional powers.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Arbitrary-precision rational. Always normalised (gcd 1, positive denominator).
pub type Rational = num_rational::BigRational;

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// `2^e` for any integer exponent.
pub fn pow2(e: i64) -> Rational {
    let m = BigInt::one() << e.unsigned_abs() as usize;
    if e >= 0 {
        Rational::from_integer(m)
    } else {
        Rational::new(BigInt::one(), m)
    }
}

/// Renders `p/q`, or `p` for integers.
pub fn fmt_rational(q: &Rational) -> String {
    if q.denom().is_one() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::Parse(format!("not a rational: {s:?}"));
    match s.split_once('/') {
        Some((p, q)) => {
            let p = BigInt::from_str(p.trim()).map_err(|_| bad())?;
            let q = BigInt::from_str(q.trim()).map_err(|_| bad())?;
            if q.is_zero() {
                return Err(bad());
            }
            Ok(Rational::new(p, q))
        }
        None => Ok(Rational::from_integer(BigInt::from_str(s).map_err(|_| bad())?)),
    }
}

/// Serde adapter writing rationals as `"p/q"` strings.
pub mod serde_rational {
    use super::*;

    pub fn serialize<S: Serializer>(q: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&fmt_rational(q))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Rational, D::Error> {
        let s = String::deserialize(d)?;
        parse_rational(&s).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter for vectors of rationals as `"p/q"` strings.
pub mod serde_rational_vec {
    use super::*;

    pub fn serialize<S: Serializer>(qs: &[Rational], s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(qs.iter().map(fmt_rational))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Rational>, D::Error> {
        let v = Vec::<String>::deserialize(d)?;
        v.iter().map(|s| parse_rational(s).map_err(serde::de::Error::custom)).collect()
    }
}

/// `floor(log2 q)` for `q > 0`.
pub fn floor_log2(q: &Rational) -> i64 {
    debug_assert!(q.is_positive());
    let n = q.numer().bits() as i64;
    let d = q.denom().bits() as i64;
    let mut e = n - d;
    // 2^e <= q < 2^(e+1) after at most one correction
    if *q < pow2(e) {
        e -= 1;
    } else if *q >= pow2(e + 1) {
        e += 1;
    }
    e
}

/// `ceil(log2 q)` for `q > 0`.
pub fn ceil_log2(q: &Rational) -> i64 {
    let f = floor_log2(q);
    if pow2(f) == *q {
        f
    } else {
        f + 1
    }
}

/// Exact base-2 logarithm when `q` is a power of two.
pub fn exact_log2(q: &Rational) -> Option<i64> {
    if !q.is_positive() {
        return None;
    }
    let f = floor_log2(q);
    (pow2(f) == *q).then_some(f)
}

/// A dyadic rational `mantissa * 2^exponent` in canonical form: the mantissa is
/// odd, or zero with exponent zero.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DyadicRational {
    mantissa: BigInt,
    exponent: i64,
}

impl DyadicRational {
    pub fn new(mantissa: BigInt, exponent: i64) -> Self {
        if mantissa.is_zero() {
            return Self { mantissa, exponent: 0 };
        }
        let tz = mantissa.trailing_zeros().unwrap_or(0);
        Self { mantissa: mantissa >> tz as usize, exponent: exponent + tz as i64 }
    }

    pub fn from_int(n: i64) -> Self {
        Self::new(BigInt::from(n), 0)
    }

    pub fn mantissa(&self) -> &BigInt {
        &self.mantissa
    }

    pub fn exponent(&self) -> i64 {
        self.exponent
    }

    pub fn to_rational(&self) -> Rational {
        Rational::from_integer(self.mantissa.clone()) * pow2(self.exponent)
    }

    /// `None` unless the denominator of `q` is a power of two.
    pub fn from_rational(q: &Rational) -> Option<Self> {
        let d = q.denom();
        let tz = d.trailing_zeros().unwrap_or(0);
        if (d >> tz as usize) != BigInt::one() {
            return None;
        }
        Some(Self::new(q.numer().clone(), -(tz as i64)))
    }
}

impl Ord for DyadicRational {
    fn cmp(&self, other: &Self) -> Ordering {
        self.to_rational().cmp(&other.to_rational())
    }
}

impl PartialOrd for DyadicRational {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for DyadicRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}*2^{}", self.mantissa, self.exponent)
    }
}

/// JSON form `[mantissa, exponent]`; the mantissa becomes a decimal string once
/// it no longer fits in 64 bits.
impl Serialize for DyadicRational {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeTuple;
        let mut t = s.serialize_tuple(2)?;
        match self.mantissa.to_i64() {
            Some(m) => t.serialize_element(&m)?,
            None => t.serialize_element(&self.mantissa.to_string())?,
        }
        t.serialize_element(&self.exponent)?;
        t.end()
    }
}

impl<'de> Deserialize<'de> for DyadicRational {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Mant {
            Int(i64),
            Str(String),
        }
        let (m, e): (Mant, i64) = Deserialize::deserialize(d)?;
        let m = match m {
            Mant::Int(i) => BigInt::from(i),
            Mant::Str(s) => BigInt::from_str(&s).map_err(serde::de::Error::custom)?,
        };
        Ok(DyadicRational::new(m, e))
    }
}

/// A certified enclosure `lo <= x <= hi` of a real number.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bracket {
    pub lo: Rational,
    pub hi: Rational,
}

impl Bracket {
    pub fn exact(q: Rational) -> Self {
        Self { lo: q.clone(), hi: q }
    }

    pub fn is_exact(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, q: &Rational) -> bool {
        &self.lo <= q && q <= &self.hi
    }

    /// Product of two nonnegative enclosures.
    pub fn mul_nonneg(&self, other: &Bracket) -> Bracket {
        Bracket { lo: &self.lo * &other.lo, hi: &self.hi * &other.hi }
    }

    pub fn scale_nonneg(&self, k: &Rational) -> Bracket {
        Bracket { lo: &self.lo * k, hi: &self.hi * k }
    }

    pub fn add(&self, other: &Bracket) -> Bracket {
        Bracket { lo: &self.lo + &other.lo, hi: &self.hi + &other.hi }
    }

    /// Enclosure of `1/x` for a positive enclosure.
    pub fn recip_pos(&self) -> Bracket {
        Bracket { lo: self.hi.recip(), hi: self.lo.recip() }
    }

    /// Enclosure of `x / y` for a nonnegative `x` and positive `y`.
    pub fn div_pos(&self, other: &Bracket) -> Bracket {
        Bracket { lo: &self.lo / &other.hi, hi: &self.hi / &other.lo }
    }
}

/// `Option<Rational>` as `"p/q"` or null.
pub mod serde_rational_opt {
    use super::*;

    pub fn serialize<S: Serializer>(q: &Option<Rational>, s: S) -> std::result::Result<S::Ok, S::Error> {
        q.as_ref().map(fmt_rational).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Rational>, D::Error> {
        let s: Option<String> = Deserialize::deserialize(d)?;
        s.map(|s| parse_rational(&s).map_err(serde::de::Error::custom)).transpose()
    }
}

/// Bits of binary precision used when bracketing irrational roots.
pub const ROOT_PRECISION_BITS: u64 = 64;

/// Certified enclosure of `x^(1/n)` for `x >= 0`, exact whenever the root is
/// rational.
pub fn nth_root_bracket(x: &Rational, n: u32) -> Bracket {
    assert!(n >= 1, "root degree must be positive");
    assert!(!x.is_negative(), "root of a negative number");
    if x.is_zero() || n == 1 {
        return Bracket::exact(x.clone());
    }
    if let (Some(p), Some(q)) = (exact_root(x.numer(), n), exact_root(x.denom(), n)) {
        return Bracket::exact(Rational::new(p, q));
    }
    // floor((x * 2^(n*P))^(1/n)) / 2^P <= x^(1/n) < (that + 1) / 2^P
    let p = ROOT_PRECISION_BITS;
    let scaled = (x.numer() << (p * n as u64) as usize) / x.denom();
    let r = scaled.magnitude().nth_root(n);
    let r = BigInt::from_biguint(Sign::Plus, r);
    let den = BigInt::one() << p as usize;
    Bracket { lo: Rational::new(r.clone(), den.clone()), hi: Rational::new(r + 1, den) }
}

fn exact_root(v: &BigInt, n: u32) -> Option<BigInt> {
    let m: &BigUint = v.magnitude();
    let r = m.nth_root(n);
    (num_traits::pow(r.clone(), n as usize) == *m).then(|| BigInt::from_biguint(Sign::Plus, r))
}

/// Certified enclosure of `x^e` for `x > 0` and rational `e = p/q`.
pub fn pow_bracket(x: &Rational, e: &Rational) -> Bracket {
    assert!(x.is_positive(), "fractional power of a nonpositive number");
    let p = e.numer().to_i64().expect("exponent numerator out of range");
    let q = e.denom().to_u32().expect("exponent denominator out of range");
    let base = if p >= 0 { x.clone() } else { x.recip() };
    let powered = num_traits::pow(base, p.unsigned_abs() as usize);
    nth_root_bracket(&powered, q)
}

/// Least common multiple of the denominators.
pub fn common_denominator<'a>(qs: impl IntoIterator<Item = &'a Rational>) -> BigInt {
    qs.into_iter().fold(BigInt::one(), |acc, q| acc.lcm(q.denom()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dyadic_canonical_form() {
        let d = DyadicRational::new(BigInt::from(12), -3);
        assert_eq!(d.mantissa(), &BigInt::from(3));
        assert_eq!(d.exponent(), -1);
        assert_eq!(d.to_rational(), ratio(3, 2));
        let z = DyadicRational::new(BigInt::zero(), 7);
        assert_eq!(z.exponent(), 0);
        assert!(DyadicRational::from_rational(&ratio(1, 3)).is_none());
        assert_eq!(DyadicRational::from_rational(&ratio(5, 8)).unwrap().exponent(), -3);
    }

    #[test]
    fn dyadic_json_uses_strings_beyond_64_bits() {
        let small = DyadicRational::new(BigInt::from(-5), 2);
        assert_eq!(serde_json::to_string(&small).unwrap(), "[-5,2]");
        let big = DyadicRational::new((BigInt::from(1) << 70usize) + 1, -2);
        let s = serde_json::to_string(&big).unwrap();
        assert_eq!(s, "[\"1180591620717411303425\",-2]");
        assert_eq!(serde_json::from_str::<DyadicRational>(&s).unwrap(), big);
        let back: DyadicRational = serde_json::from_str("[\"3541\", -2]").unwrap();
        assert_eq!(back.to_rational(), ratio(3541, 4));
    }

    #[test]
    fn rational_text_round_trip() {
        for q in [ratio(-7, 3), int(5), ratio(0, 1)] {
            assert_eq!(parse_rational(&fmt_rational(&q)).unwrap(), q);
        }
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
    }

    #[test]
    fn logs() {
        assert_eq!(floor_log2(&ratio(3, 1)), 1);
        assert_eq!(ceil_log2(&ratio(3, 1)), 2);
        assert_eq!(floor_log2(&ratio(1, 3)), -2);
        assert_eq!(ceil_log2(&int(4)), 2);
        assert_eq!(exact_log2(&ratio(1, 8)), Some(-3));
        assert_eq!(exact_log2(&ratio(3, 8)), None);
    }

    #[test]
    fn roots_exact_when_rational() {
        assert!(nth_root_bracket(&ratio(9, 4), 2).is_exact());
        assert_eq!(nth_root_bracket(&ratio(9, 4), 2).lo, ratio(3, 2));
        let b = nth_root_bracket(&int(2), 2);
        assert!(&b.lo * &b.lo < int(2) && &b.hi * &b.hi > int(2));
        let w = pow_bracket(&int(2), &ratio(-1, 2));
        assert!(w.lo < w.hi && w.hi < ratio(71, 100) && w.lo > ratio(70, 100));
    }

    proptest! {
        #[test]
        fn root_bracket_encloses(n in 1u32..5, p in 1i64..10_000, q in 1i64..1000) {
            let x = ratio(p, q);
            let b = nth_root_bracket(&x, n);
            prop_assert!(num_traits::pow(b.lo.clone(), n as usize) <= x);
            prop_assert!(num_traits::pow(b.hi.clone(), n as usize) >= x);
        }

        #[test]
        fn dyadic_order_matches_value(a in -1000i64..1000, ea in -8i64..8, b in -1000i64..1000, eb in -8i64..8) {
            let x = DyadicRational::new(BigInt::from(a), ea);
            let y = DyadicRational::new(BigInt::from(b), eb);
            prop_assert_eq!(x.cmp(&y), x.to_rational().cmp(&y.to_rational()));
        }
    }
}
