//! Exact real arithmetic for the whole crate.
//!
//! A [`Scalar`] is an element `(a + b·√d)/c` of a real quadratic field with
//! big-integer coefficients; rationals are the case `b = 0`. Every comparison
//! is decided with integer arithmetic, so half-open interval tests such as
//! `x ∈ [0,½)` never misclassify a point.
//!
//! Only one radicand may appear in a computation. Mixing `√2` with `√3` is a
//! checked error on the `try_*` methods and a panic on the operator impls.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// `(a + b·√d) / c`, normalized: `c > 0`, `gcd(a,b,c) = 1`, and `d = 0`
/// exactly when `b = 0`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Scalar {
    a: BigInt,
    b: BigInt,
    c: BigInt,
    d: u32,
}

/// Result of carrying a real number into the fundamental domain `[0,½]` of
/// the group `G = {t ↦ r·t + n}`: `input = integer_part + orientation·reduced`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GReduction {
    pub reduced: Scalar,
    pub orientation: i8,
    pub integer_part: BigInt,
}

fn squarefree_split(d: u32) -> (u32, u32) {
    // d = k²·e with e squarefree; returns (k, e)
    let mut k = 1u32;
    let mut e = d;
    let mut p = 2u32;
    while p.saturating_mul(p) <= e {
        while e.is_multiple_of(p * p) {
            e /= p * p;
            k *= p;
        }
        p += 1;
    }
    (k, e)
}

impl Scalar {
    fn normalized(mut a: BigInt, mut b: BigInt, mut c: BigInt, mut d: u32) -> Scalar {
        assert!(!c.is_zero(), "zero denominator");
        if b.is_zero() || d == 0 {
            b = BigInt::zero();
            d = 0;
        }
        if c.is_negative() {
            a = -a;
            b = -b;
            c = -c;
        }
        let g = a.gcd(&b).gcd(&c);
        if !g.is_one() {
            a /= &g;
            b /= &g;
            c /= &g;
        }
        Scalar { a, b, c, d }
    }

    pub fn zero() -> Scalar {
        Scalar::from_int(0)
    }

    pub fn one() -> Scalar {
        Scalar::from_int(1)
    }

    pub fn half() -> Scalar {
        Scalar::ratio(1, 2)
    }

    pub fn from_int(n: i64) -> Scalar {
        Scalar { a: BigInt::from(n), b: BigInt::zero(), c: BigInt::one(), d: 0 }
    }

    pub fn from_bigint(n: BigInt) -> Scalar {
        Scalar { a: n, b: BigInt::zero(), c: BigInt::one(), d: 0 }
    }

    /// `p/q`; panics when `q = 0`.
    pub fn ratio(p: i64, q: i64) -> Scalar {
        Scalar::big_ratio(BigInt::from(p), BigInt::from(q))
    }

    pub fn big_ratio(p: BigInt, q: BigInt) -> Scalar {
        Scalar::normalized(p, BigInt::zero(), q, 0)
    }

    /// `(a + b·√d)/c`. Square factors of `d` are pulled into `b`; a perfect
    /// square `d` yields a rational.
    pub fn quadratic(a: BigInt, b: BigInt, d: u32, c: BigInt) -> Result<Scalar> {
        if c.is_zero() {
            return Err(Error::Domain("zero denominator".into()));
        }
        if d == 0 {
            return Ok(Scalar::normalized(a, BigInt::zero(), c, 0));
        }
        let (k, e) = squarefree_split(d);
        let b = b * BigInt::from(k);
        if e == 1 {
            return Ok(Scalar::normalized(a + b, BigInt::zero(), c, 0));
        }
        Ok(Scalar::normalized(a, b, c, e))
    }

    /// `√d` itself.
    pub fn sqrt_of(d: u32) -> Result<Scalar> {
        Scalar::quadratic(BigInt::zero(), BigInt::one(), d, BigInt::one())
    }

    pub fn is_rational(&self) -> bool {
        self.b.is_zero()
    }

    /// Radicand of the field this scalar lives in (0 for rationals).
    pub fn radicand(&self) -> u32 {
        self.d
    }

    /// Coefficients `(a, b, c, d)` of `(a + b·√d)/c`.
    pub fn parts(&self) -> (&BigInt, &BigInt, &BigInt, u32) {
        (&self.a, &self.b, &self.c, self.d)
    }

    /// Numerator and denominator of a rational scalar.
    pub fn as_ratio(&self) -> Option<(&BigInt, &BigInt)> {
        self.is_rational().then_some((&self.a, &self.c))
    }

    pub fn denominator(&self) -> &BigInt {
        &self.c
    }

    fn field_with(&self, other: &Scalar) -> Result<u32> {
        common_field(self.d, other.d)
    }

    pub fn try_add(&self, o: &Scalar) -> Result<Scalar> {
        let d = self.field_with(o)?;
        if self.c == o.c {
            return Ok(Scalar::normalized(&self.a + &o.a, &self.b + &o.b, self.c.clone(), d));
        }
        Ok(Scalar::normalized(
            &self.a * &o.c + &o.a * &self.c,
            &self.b * &o.c + &o.b * &self.c,
            &self.c * &o.c,
            d,
        ))
    }

    pub fn try_sub(&self, o: &Scalar) -> Result<Scalar> {
        self.try_add(&-o)
    }

    pub fn try_mul(&self, o: &Scalar) -> Result<Scalar> {
        let d = self.field_with(o)?;
        let dd = BigInt::from(d);
        Ok(Scalar::normalized(
            &self.a * &o.a + &self.b * &o.b * &dd,
            &self.a * &o.b + &self.b * &o.a,
            &self.c * &o.c,
            d,
        ))
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn recip(&self) -> Option<Scalar> {
        if self.is_zero() {
            return None;
        }
        // c/(a + b√d) = c(a − b√d)/(a² − b²d)
        let norm = &self.a * &self.a - &self.b * &self.b * BigInt::from(self.d);
        Some(Scalar::normalized(&self.c * &self.a, -(&self.c * &self.b), norm, self.d))
    }

    pub fn try_div(&self, o: &Scalar) -> Result<Scalar> {
        self.field_with(o)?;
        let inv = o.recip().ok_or_else(|| Error::Domain("division by zero".into()))?;
        self.try_mul(&inv)
    }

    pub fn mul_int(&self, k: i64) -> Scalar {
        let k = BigInt::from(k);
        Scalar::normalized(&self.a * &k, &self.b * &k, self.c.clone(), self.d)
    }

    pub fn mul_bigint(&self, k: &BigInt) -> Scalar {
        Scalar::normalized(&self.a * k, &self.b * k, self.c.clone(), self.d)
    }

    pub fn add_int(&self, k: i64) -> Scalar {
        Scalar::normalized(&self.a + BigInt::from(k) * &self.c, self.b.clone(), self.c.clone(), self.d)
    }

    pub fn is_zero(&self) -> bool {
        self.a.is_zero() && self.b.is_zero()
    }

    /// Sign of the real number, decided exactly.
    pub fn signum(&self) -> i8 {
        sign_of_surd(&self.a, &self.b, self.d)
    }

    pub fn is_negative(&self) -> bool {
        self.signum() < 0
    }

    pub fn is_positive(&self) -> bool {
        self.signum() > 0
    }

    pub fn abs(&self) -> Scalar {
        if self.is_negative() {
            -self
        } else {
            self.clone()
        }
    }

    /// Greatest integer `≤ self`.
    pub fn floor(&self) -> BigInt {
        if self.b.is_zero() {
            return self.a.div_floor(&self.c);
        }
        // b√d is irrational, so ⌊(a + b√d)/c⌋ = ⌊(a + ⌊b√d⌋)/c⌋.
        (&self.a + floor_surd(&self.b, self.d)).div_floor(&self.c)
    }

    /// `self − ⌊self⌋ ∈ [0,1)`.
    pub fn frac(&self) -> Scalar {
        let fl = self.floor();
        Scalar::normalized(&self.a - fl * &self.c, self.b.clone(), self.c.clone(), self.d)
    }

    /// Reduction of a value known to lie in `[-1, 2)` into `[0,1)` with at
    /// most one integer shift; cheaper than [`Scalar::frac`].
    pub fn wrap_unit(&self) -> Scalar {
        if self.is_negative() {
            self.add_int(1)
        } else if *self >= Scalar::one() {
            self.add_int(-1)
        } else {
            self.clone()
        }
    }

    /// Decimal rendering rounded to `digits` places. Exact: no floats.
    pub fn to_decimal(&self, digits: usize) -> String {
        let scale = BigInt::from(10u32).pow(digits as u32);
        let scaled = self.mul_bigint(&scale);
        // round half up
        let rounded = Scalar::normalized(
            &scaled.a * BigInt::from(2) + &scaled.c,
            &scaled.b * BigInt::from(2),
            &scaled.c * BigInt::from(2),
            scaled.d,
        )
        .floor();
        let neg = rounded.is_negative();
        let mag = rounded.abs().to_string();
        let body = if digits == 0 {
            mag
        } else {
            let padded = format!("{:0>width$}", mag, width = digits + 1);
            let (ip, fp) = padded.split_at(padded.len() - digits);
            format!("{ip}.{fp}")
        };
        if neg {
            format!("-{body}")
        } else {
            body
        }
    }

    /// Nearest double; for reports and plotting only.
    pub fn to_f64(&self) -> f64 {
        self.to_decimal(20).parse().unwrap_or(f64::NAN)
    }

    pub fn min(self, o: Scalar) -> Scalar {
        if o < self {
            o
        } else {
            self
        }
    }

    pub fn max(self, o: Scalar) -> Scalar {
        if o > self {
            o
        } else {
            self
        }
    }
}

/// Field shared by two radicands (0 means rational).
pub fn common_field(d1: u32, d2: u32) -> Result<u32> {
    match (d1, d2) {
        (0, d) | (d, 0) => Ok(d),
        (x, y) if x == y => Ok(x),
        (x, y) => Err(Error::MixedSurd(x, y)),
    }
}

/// Check that all scalars live in one quadratic field; returns its radicand.
pub fn session_field<'a>(xs: impl IntoIterator<Item = &'a Scalar>) -> Result<u32> {
    xs.into_iter().try_fold(0, |acc, x| common_field(acc, x.d))
}

fn sign_of_surd(a: &BigInt, b: &BigInt, d: u32) -> i8 {
    let sa = sgn(a);
    let sb = sgn(b);
    if sb == 0 || d == 0 {
        return sa;
    }
    if sa == 0 || sa == sb {
        return sb;
    }
    // opposite signs: compare a² with b²d
    let lhs = a * a;
    let rhs = b * b * BigInt::from(d);
    match lhs.cmp(&rhs) {
        Ordering::Greater => sa,
        Ordering::Less => sb,
        Ordering::Equal => 0,
    }
}

fn sgn(x: &BigInt) -> i8 {
    match x.sign() {
        Sign::Minus => -1,
        Sign::NoSign => 0,
        Sign::Plus => 1,
    }
}

/// `⌊b·√d⌋` for non-square `d`.
fn floor_surd(b: &BigInt, d: u32) -> BigInt {
    let sq = (b * b * BigInt::from(d)).sqrt();
    if b.is_negative() {
        -sq - 1
    } else {
        sq
    }
}

/// Carry `t` into `[0,½]` by an element of `G`; ties (`t ≡ ½` or `t ∈ ℤ`)
/// take orientation `+1`.
pub fn reduce_mod_g(t: &Scalar) -> GReduction {
    let n = t.floor();
    let frac = Scalar::normalized(&t.a - &n * &t.c, t.b.clone(), t.c.clone(), t.d);
    if frac <= Scalar::half() {
        GReduction { reduced: frac, orientation: 1, integer_part: n }
    } else {
        GReduction { reduced: Scalar::one() - &frac, orientation: -1, integer_part: n + 1 }
    }
}

/// Greatest integer `≤ x/y`; `y` must be positive.
pub fn floor_quotient(x: &Scalar, y: &Scalar) -> Result<BigInt> {
    if !y.is_positive() {
        return Err(Error::Domain(format!("floor_quotient divisor {y} is not positive")));
    }
    Ok(x.try_div(y)?.floor())
}

impl Ord for Scalar {
    fn cmp(&self, other: &Self) -> Ordering {
        let diff = self.try_sub(other).expect("comparison across distinct quadratic fields");
        diff.signum().cmp(&0)
    }
}

impl PartialOrd for Scalar {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident, $f:ident) => {
        impl $tr<&Scalar> for &Scalar {
            type Output = Scalar;
            fn $m(self, o: &Scalar) -> Scalar {
                self.$f(o).unwrap_or_else(|e| panic!("{e}"))
            }
        }
        impl $tr<Scalar> for Scalar {
            type Output = Scalar;
            fn $m(self, o: Scalar) -> Scalar {
                (&self).$f(&o).unwrap_or_else(|e| panic!("{e}"))
            }
        }
        impl $tr<&Scalar> for Scalar {
            type Output = Scalar;
            fn $m(self, o: &Scalar) -> Scalar {
                (&self).$f(o).unwrap_or_else(|e| panic!("{e}"))
            }
        }
        impl $tr<Scalar> for &Scalar {
            type Output = Scalar;
            fn $m(self, o: Scalar) -> Scalar {
                self.$f(&o).unwrap_or_else(|e| panic!("{e}"))
            }
        }
    };
}

binop!(Add, add, try_add);
binop!(Sub, sub, try_sub);
binop!(Mul, mul, try_mul);
binop!(Div, div, try_div);

impl Neg for &Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar { a: -&self.a, b: -&self.b, c: self.c.clone(), d: self.d }
    }
}

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        -&self
    }
}

impl From<i64> for Scalar {
    fn from(n: i64) -> Scalar {
        Scalar::from_int(n)
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.b.is_zero() {
            if self.c.is_one() {
                write!(f, "{}", self.a)
            } else {
                write!(f, "{}/{}", self.a, self.c)
            }
        } else {
            let op = if self.b.is_negative() { '-' } else { '+' };
            write!(f, "({}{}{}*sqrt({}))/{}", self.a, op, self.b.abs(), self.d, self.c)
        }
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self} [≈{}]", self.to_decimal(6))
    }
}

fn parse_int(s: &str) -> Result<BigInt> {
    let s = s.strip_prefix('+').unwrap_or(s);
    BigInt::from_str(s).map_err(|_| Error::Parse(format!("bad integer {s:?}")))
}

fn parse_rational(s: &str) -> Result<Scalar> {
    if let Some((p, q)) = s.split_once('/') {
        let q = parse_int(q)?;
        if q.is_zero() {
            return Err(Error::Parse("zero denominator".into()));
        }
        return Ok(Scalar::big_ratio(parse_int(p)?, q));
    }
    if let Some((ip, fp)) = s.split_once('.') {
        if fp.is_empty() || !fp.bytes().all(|c| c.is_ascii_digit()) {
            return Err(Error::Parse(format!("bad decimal {s:?}")));
        }
        let neg = ip.starts_with('-');
        let ip = ip.trim_start_matches(['-', '+']);
        let ipv = if ip.is_empty() { BigInt::zero() } else { parse_int(ip)? };
        let scale = BigInt::from(10u32).pow(fp.len() as u32);
        let mut num = ipv * &scale + parse_int(fp)?;
        if neg {
            num = -num;
        }
        return Ok(Scalar::big_ratio(num, scale));
    }
    Ok(Scalar::from_bigint(parse_int(s)?))
}

/// Parses `"p/q"`, integers, finite decimals, or `"(a+b*sqrt(d))/c"`
/// (parentheses and `/c` optional, `b*` optional).
impl FromStr for Scalar {
    type Err = Error;

    fn from_str(raw: &str) -> Result<Scalar> {
        let s: String = raw.chars().filter(|c| !c.is_whitespace()).collect();
        if s.is_empty() {
            return Err(Error::Parse("empty scalar".into()));
        }
        let Some(sq) = s.find("sqrt(") else {
            return parse_rational(&s);
        };
        let (inner, c) = if let Some(rest) = s.strip_prefix('(') {
            match rest.rfind(")/") {
                Some(i) if i > sq => (&rest[..i], parse_int(&rest[i + 2..])?),
                _ => match rest.strip_suffix(')') {
                    Some(inner) if inner.ends_with(')') => (inner, BigInt::one()),
                    _ => return Err(Error::Parse(format!("unbalanced parentheses in {raw:?}"))),
                },
            }
        } else {
            (s.as_str(), BigInt::one())
        };
        let sq = inner
            .find("sqrt(")
            .ok_or_else(|| Error::Parse(format!("bad surd {raw:?}")))?;
        let tail = &inner[sq + 5..];
        let d_str = tail
            .strip_suffix(')')
            .ok_or_else(|| Error::Parse(format!("trailing text after sqrt in {raw:?}")))?;
        let d: u32 = d_str
            .parse()
            .map_err(|_| Error::Parse(format!("bad radicand {d_str:?}")))?;
        let prefix = &inner[..sq];
        let (a, b) = if let Some(coef) = prefix.strip_suffix('*') {
            match coef.rfind(['+', '-']).filter(|&i| i > 0) {
                Some(i) => (parse_int(&coef[..i])?, parse_int(&coef[i..])?),
                None => (BigInt::zero(), parse_int(coef)?),
            }
        } else if prefix.is_empty() || prefix == "+" {
            (BigInt::zero(), BigInt::one())
        } else if prefix == "-" {
            (BigInt::zero(), -BigInt::one())
        } else if let Some(a) = prefix.strip_suffix('+') {
            (parse_int(a)?, BigInt::one())
        } else if let Some(a) = prefix.strip_suffix('-') {
            (parse_int(a)?, -BigInt::one())
        } else {
            return Err(Error::Parse(format!("bad surd coefficient in {raw:?}")));
        };
        if c.is_zero() {
            return Err(Error::Parse("zero denominator".into()));
        }
        Scalar::quadratic(a, b, d, c)
    }
}

impl serde::Serialize for Scalar {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> serde::Deserialize<'de> for Scalar {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Scalar, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Small-integer conversion helper used by callers that know the value fits.
pub fn to_i64(n: &BigInt) -> Result<i64> {
    n.to_i64().ok_or_else(|| Error::Domain(format!("integer {n} does not fit in i64")))
}
