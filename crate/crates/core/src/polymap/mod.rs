//! Polynomial maps `f = (f_1, ..., f_r): Z_p^n -> Q_p^r` with exact rational
//! coefficients, their degree/valuation data, and Schwartz-Bruhat weights.

mod bruhat;
mod parse;
pub(crate) mod series;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_integer::binomial;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::padic::{
    format_rational, format_rational_full, parse_rational, residue_mod, valuation, PrimeContext,
    Valuation,
};

pub use bruhat::{BallTerm, SchwartzBruhat};
pub use parse::{parse_polymap, parse_polymap_infer, parse_polynomial, ParseError, ParseErrorKind};
pub use series::{series_truncate, RestrictedSeries};

/// Exponent vector, ordered graded-lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial(pub Vec<u32>);

impl Monomial {
    pub fn one(n: usize) -> Self {
        Monomial(vec![0; n])
    }

    pub fn var(n: usize, i: usize) -> Self {
        let mut e = vec![0; n];
        e[i] = 1;
        Monomial(e)
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Sparse multivariate polynomial over Q in `n` variables; zero coefficients are
/// never stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polynomial {
    n: usize,
    terms: BTreeMap<Monomial, BigRational>,
}

impl Polynomial {
    pub fn zero(n: usize) -> Self {
        Self {
            n,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n: usize, c: BigRational) -> Self {
        let mut p = Self::zero(n);
        p.add_term(Monomial::one(n), c);
        p
    }

    pub fn var(n: usize, i: usize) -> Self {
        let mut p = Self::zero(n);
        p.add_term(Monomial::var(n, i), BigRational::one());
        p
    }

    pub fn from_terms<I>(n: usize, terms: I) -> Self
    where
        I: IntoIterator<Item = (Vec<u32>, BigRational)>,
    {
        let mut p = Self::zero(n);
        for (e, c) in terms {
            assert_eq!(e.len(), n, "exponent vector length must equal n");
            p.add_term(Monomial(e), c);
        }
        p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn add_term(&mut self, m: Monomial, c: BigRational) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(m.clone()).or_insert_with(BigRational::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&m);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &BigRational)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, m: &Monomial) -> BigRational {
        self.terms.get(m).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn constant_term(&self) -> BigRational {
        self.coefficient(&Monomial::one(self.n))
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(|m| m.degree() == 0)
    }

    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn degree_in(&self, var: usize) -> u32 {
        self.terms.keys().map(|m| m.0[var]).max().unwrap_or(0)
    }

    /// Minimum valuation over all coefficients (`Infinite` for the zero polynomial).
    pub fn min_valuation(&self, ctx: &PrimeContext) -> Valuation {
        self.terms
            .values()
            .map(|c| valuation(c, ctx))
            .min()
            .unwrap_or(Valuation::Infinite)
    }

    /// `e(g)`: minimum valuation over the coefficients of `g - g(0)`.
    pub fn e_order(&self, ctx: &PrimeContext) -> Valuation {
        self.terms
            .iter()
            .filter(|(m, _)| m.degree() > 0)
            .map(|(_, c)| valuation(c, ctx))
            .min()
            .unwrap_or(Valuation::Infinite)
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.add(&other.scale(&-BigRational::one()))
    }

    pub fn scale(&self, c: &BigRational) -> Polynomial {
        if c.is_zero() {
            return Polynomial::zero(self.n);
        }
        Polynomial {
            n: self.n,
            terms: self.terms.iter().map(|(m, a)| (m.clone(), a * c)).collect(),
        }
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut out = Polynomial::zero(self.n);
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                let e = m1.0.iter().zip(&m2.0).map(|(a, b)| a + b).collect();
                out.add_term(Monomial(e), c1 * c2);
            }
        }
        out
    }

    pub fn pow(&self, mut e: u32) -> Polynomial {
        let mut base = self.clone();
        let mut acc = Polynomial::constant(self.n, BigRational::one());
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        acc
    }

    /// Exact evaluation at a rational point.
    pub fn eval(&self, x: &[BigRational]) -> BigRational {
        assert_eq!(x.len(), self.n);
        let mut acc = BigRational::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for (xi, &e) in x.iter().zip(&m.0) {
                if e > 0 {
                    t *= num_traits::pow(xi.clone(), e as usize);
                }
            }
            acc += t;
        }
        acc
    }

    /// Partial derivative with respect to `var`.
    pub fn derivative(&self, var: usize) -> Polynomial {
        let mut out = Polynomial::zero(self.n);
        for (m, c) in &self.terms {
            let e = m.0[var];
            if e == 0 {
                continue;
            }
            let mut d = m.0.clone();
            d[var] -= 1;
            out.add_term(Monomial(d), c * BigRational::from_integer(e.into()));
        }
        out
    }

    /// `g(a + scale * t)` with exact rational coefficients.
    pub fn substitute_affine(&self, a: &[BigRational], scale: &BigRational) -> Polynomial {
        assert_eq!(a.len(), self.n);
        let n = self.n;
        let mut out = Polynomial::zero(n);
        // Powers of scale and of each a_i, shared across monomials.
        let max_deg = (0..n).map(|i| self.degree_in(i)).max().unwrap_or(0) as usize;
        let scale_pows: Vec<BigRational> = (0..=max_deg)
            .scan(BigRational::one(), |acc, _| {
                let cur = acc.clone();
                *acc = &*acc * scale;
                Some(cur)
            })
            .collect();
        let a_pows: Vec<Vec<BigRational>> = a
            .iter()
            .map(|ai| {
                (0..=max_deg)
                    .scan(BigRational::one(), |acc, _| {
                        let cur = acc.clone();
                        *acc = &*acc * ai;
                        Some(cur)
                    })
                    .collect()
            })
            .collect();
        for (m, c) in &self.terms {
            // Expand prod_i (a_i + scale t_i)^{e_i} one variable at a time.
            let mut partial: Vec<(Vec<u32>, BigRational)> = vec![(vec![0; n], c.clone())];
            for i in 0..n {
                let e = m.0[i];
                if e == 0 {
                    continue;
                }
                let mut next = Vec::with_capacity(partial.len() * (e as usize + 1));
                for (exps, coef) in &partial {
                    for j in 0..=e {
                        let a_part = &a_pows[i][(e - j) as usize];
                        if a_part.is_zero() {
                            continue;
                        }
                        let b = BigRational::from_integer(binomial(BigInt::from(e), BigInt::from(j)));
                        let mut ex = exps.clone();
                        ex[i] = j;
                        next.push((ex, coef * b * a_part * &scale_pows[j as usize]));
                    }
                }
                partial = next;
            }
            for (ex, coef) in partial {
                out.add_term(Monomial(ex), coef);
            }
        }
        out
    }

    fn fmt_with(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (idx, (m, c)) in self.terms.iter().rev().enumerate() {
            let neg = c.is_negative();
            let abs = c.abs();
            if idx == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { "-" } else { "+" })?;
            }
            let vars: Vec<String> = m
                .0
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(i, &e)| {
                    if e == 1 {
                        format!("x{}", i + 1)
                    } else {
                        format!("x{}^{}", i + 1, e)
                    }
                })
                .collect();
            if vars.is_empty() {
                write!(f, "{}", format_rational(&abs))?;
            } else if abs.is_one() {
                write!(f, "{}", vars.join("*"))?;
            } else {
                write!(f, "{}*{}", format_rational(&abs), vars.join("*"))?;
            }
        }
        Ok(())
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_with(f)
    }
}

/// `h(t) = g(a + p^k t)`, expanded exactly. `k` may be negative.
pub fn shift_substitute(g: &Polynomial, a: &[BigRational], k: i64, ctx: &PrimeContext) -> Polynomial {
    g.substitute_affine(a, &ctx.power(k))
}

/// An `r`-tuple of polynomials in `n` variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyMap {
    n: usize,
    components: Vec<Polynomial>,
}

impl PolyMap {
    pub fn new(n: usize, components: Vec<Polynomial>) -> Result<Self> {
        if n == 0 {
            return Err(Error::DimensionMismatch { expected: 1, got: 0 });
        }
        if components.is_empty() {
            return Err(Error::DimensionMismatch { expected: 1, got: 0 });
        }
        for c in &components {
            if c.n() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: c.n(),
                });
            }
        }
        Ok(Self { n, components })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Polynomial] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &Polynomial {
        &self.components[i]
    }

    /// `B = max(0, -min v(coefficient))`: the denominator exponent to clear.
    pub fn valuation_bound(&self, ctx: &PrimeContext) -> u32 {
        self.components
            .iter()
            .filter_map(|c| c.min_valuation(ctx).finite())
            .map(|v| (-v).max(0) as u32)
            .max()
            .unwrap_or(0)
    }

    /// `y . f` as a single polynomial.
    pub fn pair(&self, y: &[BigRational]) -> Polynomial {
        assert_eq!(y.len(), self.r());
        let mut g = Polynomial::zero(self.n);
        for (yj, fj) in y.iter().zip(&self.components) {
            if !yj.is_zero() {
                g = g.add(&fj.scale(yj));
            }
        }
        g
    }

    pub fn eval(&self, x: &[BigRational]) -> Vec<BigRational> {
        self.components.iter().map(|c| c.eval(x)).collect()
    }

    pub fn degree_data(&self, ctx: &PrimeContext) -> DegreeData {
        degree_data(self, ctx)
    }
}

impl fmt::Display for PolyMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.components.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct PolyMapJson {
    n: usize,
    r: usize,
    components: Vec<Vec<(Vec<u32>, String)>>,
}

impl Serialize for PolyMap {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        PolyMapJson {
            n: self.n,
            r: self.r(),
            components: self
                .components
                .iter()
                .map(|c| {
                    c.terms()
                        .map(|(m, a)| (m.0.clone(), format_rational_full(a)))
                        .collect()
                })
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PolyMap {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = PolyMapJson::deserialize(deserializer)?;
        if raw.r != raw.components.len() {
            return Err(D::Error::custom("r does not match the number of components"));
        }
        let mut comps = Vec::with_capacity(raw.r);
        for terms in raw.components {
            let mut poly = Polynomial::zero(raw.n);
            for (e, c) in terms {
                if e.len() != raw.n {
                    return Err(D::Error::custom("exponent vector length differs from n"));
                }
                poly.add_term(Monomial(e), parse_rational(&c).map_err(D::Error::custom)?);
            }
            comps.push(poly);
        }
        PolyMap::new(raw.n, comps).map_err(D::Error::custom)
    }
}

/// Per-variable degrees `d_j(f_i)`, `d(f)` and `e(f_i)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeData {
    pub per_variable: Vec<Vec<u32>>,
    pub d_max: u32,
    pub e_orders: Vec<Valuation>,
}

pub fn degree_data(f: &PolyMap, ctx: &PrimeContext) -> DegreeData {
    let per_variable: Vec<Vec<u32>> = f
        .components
        .iter()
        .map(|c| (0..f.n).map(|j| c.degree_in(j)).collect())
        .collect();
    let d_max = per_variable.iter().flatten().copied().max().unwrap_or(0);
    let e_orders = f.components.iter().map(|c| c.e_order(ctx)).collect();
    DegreeData {
        per_variable,
        d_max,
        e_orders,
    }
}

/// `f_i(x)` known modulo `p^m Z_p`: the value is `residue / p^shift`, with
/// `residue` taken modulo `p^(m + shift)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaledResidue {
    pub residue: u64,
    pub shift: u32,
    pub modulus: u64,
}

/// `f(x)` to the precision at which `psi(y . f(x))` is exact for `v(y_j) >= -m`.
pub fn eval_mod(f: &PolyMap, x: &[u64], m: u32, ctx: &PrimeContext) -> Result<Vec<ScaledResidue>> {
    if x.len() != f.n {
        return Err(Error::DimensionMismatch {
            expected: f.n,
            got: x.len(),
        });
    }
    let b = f.valuation_bound(ctx);
    let modulus = ctx.modulus_or_err(m + b)?;
    let point: Vec<BigRational> = x.iter().map(|&v| BigRational::from_integer(v.into())).collect();
    let lift = ctx.power(b as i64);
    f.components
        .iter()
        .map(|c| {
            let v = c.eval(&point) * &lift;
            let residue = residue_mod(&v, modulus).expect("p^B f(x) is p-integral");
            Ok(ScaledResidue {
                residue,
                shift: b,
                modulus,
            })
        })
        .collect()
}

/// Whether `1, f_1, ..., f_r` are linearly independent over Q.
pub fn check_affine_independence(f: &PolyMap) -> bool {
    let mut rows: Vec<Polynomial> = Vec::with_capacity(f.r() + 1);
    rows.push(Polynomial::constant(f.n, BigRational::one()));
    rows.extend(f.components.iter().cloned());
    rank(&rows) == rows.len()
}

/// Rank over Q of polynomials viewed as coefficient vectors in the monomial basis.
fn rank(rows: &[Polynomial]) -> usize {
    let mut basis: Vec<(Monomial, Polynomial)> = Vec::new();
    for row in rows {
        let mut r = row.clone();
        for (pivot, b) in &basis {
            let c = r.coefficient(pivot);
            if !c.is_zero() {
                r = r.sub(&b.scale(&c));
            }
        }
        if let Some((m, c)) = r.terms.iter().next_back().map(|(m, c)| (m.clone(), c.clone())) {
            let normalized = r.scale(&c.recip());
            // Keep earlier basis vectors reduced against the new pivot.
            for (_, b) in basis.iter_mut() {
                let coef = b.coefficient(&m);
                if !coef.is_zero() {
                    *b = b.sub(&normalized.scale(&coef));
                }
            }
            basis.push((m, normalized));
        }
    }
    basis.len()
}
