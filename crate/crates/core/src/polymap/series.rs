use std::fmt;
use std::sync::Arc;

use num_rational::BigRational;
use num_traits::Zero;

use super::{Monomial, PolyMap, Polynomial};
use crate::error::{Error, Result};
use crate::padic::{valuation, PrimeContext, Valuation};

/// Total degree up to which a valuation floor is searched before giving up.
pub const MAX_SERIES_DEGREE: u32 = 4096;

type CoefficientFn = dyn Fn(&[u32]) -> BigRational + Send + Sync;
type FloorFn = dyn Fn(u32) -> i64 + Send + Sync;

/// A restricted power series in `n` variables, given by a coefficient oracle and
/// a nondecreasing valuation floor `g` with `v(a_I) >= g(|I|)`.
///
/// Only consumed through [`series_truncate`]; the floor is checked against every
/// coefficient the truncation emits.
#[derive(Clone)]
pub struct RestrictedSeries {
    n: usize,
    coefficient: Arc<CoefficientFn>,
    floor: Arc<FloorFn>,
}

impl RestrictedSeries {
    pub fn new<C, F>(n: usize, coefficient: C, floor: F) -> Self
    where
        C: Fn(&[u32]) -> BigRational + Send + Sync + 'static,
        F: Fn(u32) -> i64 + Send + Sync + 'static,
    {
        Self {
            n,
            coefficient: Arc::new(coefficient),
            floor: Arc::new(floor),
        }
    }

    /// A polynomial seen as a series; the floor is its minimal valuation up to
    /// its degree and unbounded beyond.
    pub fn from_polynomial(poly: Polynomial, ctx: &PrimeContext) -> Self {
        let n = poly.n();
        let degree = poly.total_degree();
        let floor_below = match poly.min_valuation(ctx) {
            Valuation::Finite(v) => v,
            Valuation::Infinite => i64::MAX,
        };
        let coeffs = poly.clone();
        Self::new(
            n,
            move |e| coeffs.coefficient(&Monomial(e.to_vec())),
            move |d| if d <= degree { floor_below } else { i64::MAX },
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coefficient(&self, exponent: &[u32]) -> BigRational {
        (self.coefficient)(exponent)
    }

    pub fn floor(&self, degree: u32) -> i64 {
        (self.floor)(degree)
    }
}

impl fmt::Debug for RestrictedSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RestrictedSeries")
            .field("n", &self.n)
            .field("floor(0)", &self.floor(0))
            .finish_non_exhaustive()
    }
}

/// Calls `visit` on every exponent vector of total degree `d` in `n` variables.
fn for_each_exponent(n: usize, d: u32, visit: &mut dyn FnMut(&[u32]) -> Result<()>) -> Result<()> {
    fn rec(buf: &mut Vec<u32>, n: usize, left: u32, visit: &mut dyn FnMut(&[u32]) -> Result<()>) -> Result<()> {
        if buf.len() == n - 1 {
            buf.push(left);
            let r = visit(buf);
            buf.pop();
            return r;
        }
        for e in (0..=left).rev() {
            buf.push(e);
            rec(buf, n, left - e, visit)?;
            buf.pop();
        }
        Ok(())
    }
    rec(&mut Vec::with_capacity(n), n, d, visit)
}

/// The polynomial made of all terms with `v(coefficient) < m`.
///
/// On `Z_p^n` the discarded tail lies in `p^m Z_p`, so every level-`m`
/// computation is unchanged.
pub fn series_truncate(s: &RestrictedSeries, m: i64, ctx: &PrimeContext) -> Result<Polynomial> {
    let cutoff = (0..=MAX_SERIES_DEGREE)
        .find(|&d| s.floor(d) >= m)
        .ok_or(Error::FloorNeverReaches {
            target: m,
            max_degree: MAX_SERIES_DEGREE,
        })?;
    let mut poly = Polynomial::zero(s.n);
    for d in 0..cutoff {
        let floor = s.floor(d);
        for_each_exponent(s.n, d, &mut |e| {
            let c = s.coefficient(e);
            if c.is_zero() {
                return Ok(());
            }
            let v = match valuation(&c, ctx) {
                Valuation::Finite(v) => v,
                Valuation::Infinite => unreachable!("nonzero coefficient"),
            };
            if v < floor {
                return Err(Error::FloorViolated {
                    exponent: e.to_vec(),
                    valuation: v,
                    floor,
                });
            }
            if v < m {
                poly.add_term(Monomial(e.to_vec()), c);
            }
            Ok(())
        })?;
    }
    Ok(poly)
}

/// Truncates each series at level `m` and bundles them into a map.
pub(crate) fn truncate_all(series: &[RestrictedSeries], m: i64, ctx: &PrimeContext) -> Result<PolyMap> {
    let n = series.first().map(|s| s.n).unwrap_or(0);
    if let Some(bad) = series.iter().find(|s| s.n != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: bad.n,
        });
    }
    let comps = series
        .iter()
        .map(|s| series_truncate(s, m, ctx))
        .collect::<Result<Vec<_>>>()?;
    PolyMap::new(n, comps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn ctx() -> PrimeContext {
        PrimeContext::with_prime(3).unwrap()
    }

    /// sum_i 3^i x^i with floor g(i) = i.
    fn geometric() -> RestrictedSeries {
        RestrictedSeries::new(
            1,
            |e| BigRational::from_integer(num_traits::pow(BigInt::from(3), e[0] as usize)),
            |d| d as i64,
        )
    }

    fn poly(terms: &[(u32, i64)]) -> Polynomial {
        Polynomial::from_terms(1, terms.iter().map(|&(e, c)| (vec![e], BigRational::from_integer(c.into()))))
    }

    #[test]
    fn truncation_examples() {
        assert_eq!(series_truncate(&geometric(), 2, &ctx()).unwrap(), poly(&[(0, 1), (1, 3)]));
        assert_eq!(series_truncate(&geometric(), 1, &ctx()).unwrap(), poly(&[(0, 1)]));
    }

    #[test]
    fn unit_coefficients_violate_the_floor() {
        let lying = RestrictedSeries::new(1, |_| BigRational::from_integer(1.into()), |d| d as i64);
        assert!(matches!(
            series_truncate(&lying, 3, &ctx()),
            Err(Error::FloorViolated { valuation: 0, floor: 1, .. })
        ));
        let honest = RestrictedSeries::new(1, |_| BigRational::from_integer(1.into()), |_| 0);
        assert!(matches!(series_truncate(&honest, 1, &ctx()), Err(Error::FloorNeverReaches { .. })));
    }

    #[test]
    fn truncations_agree_below_both_levels() {
        let s = RestrictedSeries::new(
            2,
            |e| BigRational::from_integer(num_traits::pow(BigInt::from(3), (e[0] + e[1]) as usize) * (e[0] + 2 * e[1] + 1)),
            |d| d as i64,
        );
        let c = ctx();
        let a = series_truncate(&s, 2, &c).unwrap();
        let b = series_truncate(&s, 4, &c).unwrap();
        for (m, coef) in b.terms() {
            if c.valuation(coef) < Valuation::Finite(2) {
                assert_eq!(&a.coefficient(m), coef);
            }
        }
        for (m, coef) in a.terms() {
            assert_eq!(&b.coefficient(m), coef);
        }
    }
}
