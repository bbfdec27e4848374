use std::fmt;

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::padic::{format_rational, parse_rational, PrimeContext};

/// `weight * 1_{center + p^radius_exp Z_p^n}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BallTerm {
    pub center: Vec<BigRational>,
    pub radius_exp: i64,
    pub weight: BigRational,
}

/// A Schwartz-Bruhat function: a finite rational combination of ball indicators.
/// Balls may overlap; the value is the sum of the terms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchwartzBruhat {
    n: usize,
    terms: Vec<BallTerm>,
}

impl SchwartzBruhat {
    pub fn new(n: usize, terms: Vec<BallTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidBall("no terms".into()));
        }
        for t in &terms {
            if t.center.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: t.center.len(),
                });
            }
            if t.weight.is_zero() {
                return Err(Error::InvalidBall("zero weight".into()));
            }
        }
        Ok(Self { n, terms })
    }

    /// The indicator of `Z_p^n`.
    pub fn trivial(n: usize) -> Self {
        Self {
            n,
            terms: vec![BallTerm {
                center: vec![BigRational::zero(); n],
                radius_exp: 0,
                weight: BigRational::one(),
            }],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[BallTerm] {
        &self.terms
    }

    pub fn is_trivial(&self) -> bool {
        *self == Self::trivial(self.n)
    }

    /// `sum |w_i| p^(-k_i n)`, an upper bound for the integral of `|phi|`.
    pub fn abs_mass_bound(&self, ctx: &PrimeContext) -> BigRational {
        self.terms
            .iter()
            .map(|t| t.weight.abs() * ctx.power(-t.radius_exp * self.n as i64))
            .sum()
    }

    /// Parses `c1,..,cn@k[*w]; ...`, e.g. `0@0` for the trivial weight or
    /// `1/3,0@1*2; 0,0@0*-1`.
    pub fn parse(text: &str, n: usize) -> Result<Self> {
        let mut terms = Vec::new();
        for raw in text.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let bad = || Error::InvalidBall(format!("cannot parse term {raw:?}"));
            let (center, rest) = raw.split_once('@').ok_or_else(bad)?;
            let (k, w) = match rest.split_once('*') {
                Some((k, w)) => (k, Some(w)),
                None => (rest, None),
            };
            let center = center
                .split(',')
                .map(|c| parse_rational(c).map_err(|_| bad()))
                .collect::<Result<Vec<_>>>()?;
            let radius_exp = k.trim().parse::<i64>().map_err(|_| bad())?;
            let weight = match w {
                Some(w) => parse_rational(w).map_err(|_| bad())?,
                None => BigRational::one(),
            };
            terms.push(BallTerm {
                center,
                radius_exp,
                weight,
            });
        }
        Self::new(n, terms)
    }
}

impl fmt::Display for SchwartzBruhat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            let c: Vec<String> = t.center.iter().map(format_rational).collect();
            write!(f, "{}@{}*{}", c.join(","), t.radius_exp, format_rational(&t.weight))?;
        }
        Ok(())
    }
}

impl Serialize for SchwartzBruhat {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for SchwartzBruhat {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let s = String::deserialize(deserializer)?;
        let n = s
            .split(';')
            .next()
            .and_then(|t| t.split_once('@'))
            .map(|(c, _)| c.split(',').count())
            .ok_or_else(|| D::Error::custom("empty Schwartz-Bruhat weight"))?;
        SchwartzBruhat::parse(&s, n).map_err(D::Error::custom)
    }
}
