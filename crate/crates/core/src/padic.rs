//! Exact p-adic scalars: valuations, norms and fractional parts of rationals.
//!
//! The additive character is fixed to `psi(x) = exp(2 pi i {x}_p)`, which is
//! trivial on `Z_p` and nontrivial on `p^-1 Z_p`. Other characters `x -> psi(a x)`
//! are reached by rescaling `y`.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of residue tuples a brute-force enumeration may visit.
pub const DEFAULT_NAIVE_BUDGET: u64 = 50_000_000;

/// Largest modulus exponent accepted by the modular kernels: `p^L < 2^62`.
pub const MAX_MODULUS_BITS: u32 = 62;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimeContext {
    p: u64,
    naive_budget: u64,
}

impl PrimeContext {
    pub fn new(p: u64, naive_budget: u64) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::NotPrime(p));
        }
        if naive_budget == 0 {
            return Err(Error::ZeroBudget);
        }
        Ok(Self { p, naive_budget })
    }

    /// Context with the default enumeration budget.
    pub fn with_prime(p: u64) -> Result<Self> {
        Self::new(p, DEFAULT_NAIVE_BUDGET)
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn naive_budget(&self) -> u64 {
        self.naive_budget
    }

    pub fn p_big(&self) -> BigInt {
        BigInt::from(self.p)
    }

    /// `p^e` as a machine integer, `None` on overflow of the 62-bit modulus range.
    pub fn modulus(&self, e: u32) -> Option<u64> {
        checked_pow(self.p, e).filter(|&q| q < (1u64 << MAX_MODULUS_BITS))
    }

    /// Like [`modulus`](Self::modulus) but reports overflow as an error.
    pub fn modulus_or_err(&self, e: u32) -> Result<u64> {
        self.modulus(e).ok_or(Error::PrecisionOverflow { p: self.p, exponent: e })
    }

    /// `p^k` as an exact rational; `k` may be negative.
    pub fn power(&self, k: i64) -> BigRational {
        let base = num_traits::pow(self.p_big(), k.unsigned_abs() as usize);
        if k >= 0 {
            BigRational::from_integer(base)
        } else {
            BigRational::new(BigInt::one(), base)
        }
    }

    pub fn valuation(&self, x: &BigRational) -> Valuation {
        valuation(x, self)
    }

    pub fn fractional_part(&self, x: &BigRational) -> PhaseFraction {
        fractional_part(x, self)
    }
}

pub fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    if p < 4 {
        return true;
    }
    if p % 2 == 0 {
        return false;
    }
    let mut d = 3u64;
    while d.saturating_mul(d) <= p {
        if p % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

pub fn checked_pow(base: u64, e: u32) -> Option<u64> {
    base.checked_pow(e)
}

/// p-adic valuation; `Infinite` only for zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Valuation {
    Finite(i64),
    Infinite,
}

impl Valuation {
    pub fn finite(self) -> Option<i64> {
        match self {
            Valuation::Finite(v) => Some(v),
            Valuation::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Valuation::Infinite)
    }

    pub fn add(self, other: Valuation) -> Valuation {
        match (self, other) {
            (Valuation::Finite(a), Valuation::Finite(b)) => Valuation::Finite(a + b),
            _ => Valuation::Infinite,
        }
    }
}

impl fmt::Display for Valuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Valuation::Finite(v) => write!(f, "{v}"),
            Valuation::Infinite => write!(f, "inf"),
        }
    }
}

/// Multiplicity of `p` in a nonzero integer, together with the cofactor.
pub(crate) fn split_power(n: &BigInt, p: &BigInt) -> (i64, BigInt) {
    debug_assert!(!n.is_zero());
    let mut v = 0;
    let mut rest = n.clone();
    loop {
        let (q, r) = rest.div_rem(p);
        if !r.is_zero() {
            return (v, rest);
        }
        rest = q;
        v += 1;
    }
}

pub fn valuation(x: &BigRational, ctx: &PrimeContext) -> Valuation {
    if x.is_zero() {
        return Valuation::Infinite;
    }
    let p = ctx.p_big();
    let (vn, _) = split_power(x.numer(), &p);
    let (vd, _) = split_power(x.denom(), &p);
    Valuation::Finite(vn - vd)
}

/// The class `u / p^M mod Z_p`, with `M` minimal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PhaseFraction {
    pub level: u32,
    pub numer: u64,
}

impl PhaseFraction {
    pub const ZERO: PhaseFraction = PhaseFraction { level: 0, numer: 0 };

    /// Canonicalize `numer / p^level`, reducing the level while `p | numer`.
    pub fn new(numer: u64, level: u32, p: u64) -> Self {
        let modulus = p.pow(level);
        let mut numer = numer % modulus.max(1);
        let mut level = level;
        if numer == 0 {
            return Self::ZERO;
        }
        while level > 0 && numer % p == 0 {
            numer /= p;
            level -= 1;
        }
        Self { level, numer }
    }

    pub fn is_zero(&self) -> bool {
        self.level == 0
    }

    /// Index of this class among `p^level`-th roots of unity, for `level >= self.level`.
    pub fn index_at(&self, level: u32, p: u64) -> u64 {
        debug_assert!(level >= self.level);
        self.numer * p.pow(level - self.level)
    }

    pub fn add(&self, other: &PhaseFraction, p: u64) -> PhaseFraction {
        let level = self.level.max(other.level);
        let modulus = p.pow(level);
        let a = self.index_at(level, p);
        let b = other.index_at(level, p);
        PhaseFraction::new(((a as u128 + b as u128) % modulus as u128) as u64, level, p)
    }
}

pub fn fractional_part(x: &BigRational, ctx: &PrimeContext) -> PhaseFraction {
    let p = ctx.p_big();
    if x.is_zero() {
        return PhaseFraction::ZERO;
    }
    let (vd, unit_denom) = split_power(x.denom(), &p);
    if vd == 0 {
        return PhaseFraction::ZERO;
    }
    // Reduced fraction with p | denominator, so the numerator is a p-unit.
    let level = vd as u32;
    let modulus = num_traits::pow(p, level as usize);
    let inv = mod_inverse(&unit_denom, &modulus).expect("unit part of denominator is invertible");
    let u = (x.numer() * inv).mod_floor(&modulus);
    PhaseFraction {
        level,
        numer: u.to_u64().expect("phase numerator fits the modulus"),
    }
}

/// Inverse of `a` modulo `m`, when it exists.
pub fn mod_inverse(a: &BigInt, m: &BigInt) -> Option<BigInt> {
    let e = a.mod_floor(m).extended_gcd(m);
    if !e.gcd.is_one() {
        return None;
    }
    Some(e.x.mod_floor(m))
}

/// Image of a p-integral rational in `Z / modulus`, `modulus` a power of `p`.
pub fn residue_mod(x: &BigRational, modulus: u64) -> Option<u64> {
    let m = BigInt::from(modulus);
    if modulus == 1 {
        return Some(0);
    }
    let inv = mod_inverse(x.denom(), &m)?;
    (x.numer() * inv).mod_floor(&m).to_u64()
}

/// A rational together with its cached p-adic valuation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PAdicRational {
    value: BigRational,
    valuation: Valuation,
}

impl PAdicRational {
    pub fn new(value: BigRational, ctx: &PrimeContext) -> Self {
        let valuation = valuation(&value, ctx);
        Self { value, valuation }
    }

    pub fn from_integer(n: i64, ctx: &PrimeContext) -> Self {
        Self::new(BigRational::from_integer(n.into()), ctx)
    }

    /// `u / p^m`, the direction parameterisation used by the decay sweeps.
    pub fn from_direction(u: u64, m: u32, ctx: &PrimeContext) -> Self {
        Self::new(
            BigRational::from_integer(u.into()) * ctx.power(-(m as i64)),
            ctx,
        )
    }

    pub fn value(&self) -> &BigRational {
        &self.value
    }

    pub fn valuation(&self) -> Valuation {
        self.valuation
    }

    /// `-v`, clamped below at zero: the level at which `psi(self * z)` sees `z`.
    pub fn level(&self) -> u32 {
        match self.valuation {
            Valuation::Finite(v) if v < 0 => (-v) as u32,
            _ => 0,
        }
    }

    /// `|x|_p` as a float; for reporting only.
    pub fn norm(&self, ctx: &PrimeContext) -> f64 {
        match self.valuation {
            Valuation::Infinite => 0.0,
            Valuation::Finite(v) => (ctx.p() as f64).powi(-(v as i32)),
        }
    }
}

impl fmt::Display for PAdicRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", format_rational(&self.value))
    }
}

/// Renders `a/b`, or `a` when the denominator is one.
pub fn format_rational(x: &BigRational) -> String {
    if x.denom().is_one() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

/// Always renders `a/b`, as used by the JSON serializations.
pub fn format_rational_full(x: &BigRational) -> String {
    format!("{}/{}", x.numer(), x.denom())
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid rational literal {0:?}")]
pub struct RationalParseError(pub String);

/// Parses `a`, `a/b` or `a/p^m` (e.g. `2/3^4`).
pub fn parse_rational(text: &str) -> std::result::Result<BigRational, RationalParseError> {
    let err = || RationalParseError(text.to_string());
    let s = text.trim();
    let (num, den) = match s.split_once('/') {
        Some((a, b)) => (a.trim(), Some(b.trim())),
        None => (s, None),
    };
    let numer = BigInt::from_str(num).map_err(|_| err())?;
    let denom = match den {
        None => BigInt::one(),
        Some(d) => match d.split_once('^') {
            Some((base, exp)) => {
                let base = BigInt::from_str(base.trim()).map_err(|_| err())?;
                let exp: u32 = exp.trim().parse().map_err(|_| err())?;
                num_traits::pow(base, exp as usize)
            }
            None => BigInt::from_str(d).map_err(|_| err())?,
        },
    };
    if denom.is_zero() {
        return Err(err());
    }
    Ok(BigRational::new(numer, denom))
}

/// Serde adapter writing a rational as the string `a/b`.
pub mod rational_string {
    use num_rational::BigRational;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &BigRational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format_rational_full(x))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigRational, D::Error> {
        let text = String::deserialize(d)?;
        super::parse_rational(&text).map_err(serde::de::Error::custom)
    }

    pub mod option {
        use num_rational::BigRational;
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(x: &Option<BigRational>, s: S) -> Result<S::Ok, S::Error> {
            match x {
                Some(x) => s.serialize_some(&crate::padic::format_rational_full(x)),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<BigRational>, D::Error> {
            Option::<String>::deserialize(d)?
                .map(|t| crate::padic::parse_rational(&t).map_err(serde::de::Error::custom))
                .transpose()
        }
    }

    pub mod vec {
        use num_rational::BigRational;
        use serde::ser::SerializeSeq;
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(xs: &[BigRational], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(xs.len()))?;
            for x in xs {
                seq.serialize_element(&crate::padic::format_rational(x))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<BigRational>, D::Error> {
            Vec::<String>::deserialize(d)?
                .iter()
                .map(|t| crate::padic::parse_rational(t).map_err(serde::de::Error::custom))
                .collect()
        }
    }
}
