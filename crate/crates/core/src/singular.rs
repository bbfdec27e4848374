//! Fiber counts of `f` modulo `p^m`, the level-`m` densities
//! `F_m(z) = N_m(z) p^(m (r - n))`, and the finite Fourier identity
//! `E_f(y) = sum_z N_m(z) p^(-m n) psi(y . z)` for `v(y) >= -m`.
//!
//! Maps with denominators (`B > 0`) are counted at the effective level `m + B`.
//! Targets are then stored as numerators `Z = p^B z mod p^(m + B)`, and the
//! density becomes `N p^(-(m + B) n) p^(m r)`.

use std::collections::{BTreeMap, HashMap};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expsum::{digit_vectors, eval_naive, EvalRequest};
use crate::histogram::PhaseHistogram;
use crate::modpoly::ModPoly;
use crate::padic::{format_rational, rational_string, residue_mod, valuation, PrimeContext, Valuation};
use crate::polymap::PolyMap;

/// Largest target space counted into a flat array by the brute-force counter.
const DENSE_KEY_LIMIT: u128 = 1 << 18;

/// Tables whose target space is at most this large list their zero rows too.
pub const FULL_TABLE_LIMIT: u128 = 1 << 16;

/// Number of preimages kept by [`count_fiber`] for the Jacobian evidence.
pub const SAMPLE_LIMIT: usize = 8;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountMethod {
    /// Brute force when `p^((m + B) n)` fits the budget, recursion otherwise.
    #[default]
    Auto,
    Naive,
    Recursive,
}

impl FromStr for CountMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "auto" => Ok(Self::Auto),
            "naive" => Ok(Self::Naive),
            "recursive" => Ok(Self::Recursive),
            other => Err(format!("unknown counting method {other:?}")),
        }
    }
}

/// `N_m(z)` for every target `z`, stored sparsely.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DensityTable {
    p: u64,
    level: u32,
    shift: u32,
    n: usize,
    r: usize,
    counts: BTreeMap<Vec<u64>, u128>,
}

/// One row of a density table: `z`, `N_m(z)` and `F_m(z)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DensityRow {
    #[serde(with = "rational_string::vec")]
    pub z: Vec<BigRational>,
    #[serde(rename = "N")]
    pub count: u128,
    #[serde(rename = "F", with = "rational_string")]
    pub density: BigRational,
}

impl DensityTable {
    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// `B`: targets are `Z / p^B`.
    pub fn shift(&self) -> u32 {
        self.shift
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// `p^(m + B)`, the modulus of the stored numerators.
    pub fn modulus(&self) -> u64 {
        self.p.pow(self.level + self.shift)
    }

    /// Number of possible targets, `p^((m + B) r)`, if it fits.
    pub fn target_space(&self) -> Option<u128> {
        (self.modulus() as u128).checked_pow(self.r as u32)
    }

    /// `N(Z)` for a numerator vector reduced mod `p^(m + B)`.
    pub fn count(&self, numerators: &[u64]) -> u128 {
        self.counts.get(numerators).copied().unwrap_or(0)
    }

    /// Nonzero entries in lexicographic order of the numerators.
    pub fn nonzero(&self) -> impl Iterator<Item = (&[u64], u128)> {
        self.counts.iter().map(|(k, &v)| (k.as_slice(), v))
    }

    pub fn total(&self) -> u128 {
        self.counts.values().sum()
    }

    /// `F_m(Z / p^B) = N p^(-(m + B) n) p^(m r)`.
    pub fn density(&self, numerators: &[u64]) -> BigRational {
        self.density_of(self.count(numerators))
    }

    fn density_of(&self, count: u128) -> BigRational {
        let exp = self.level as i64 * self.r as i64 - (self.level + self.shift) as i64 * self.n as i64;
        let p = BigInt::from(self.p);
        let pk = num_traits::pow(p, exp.unsigned_abs() as usize);
        let c = BigInt::from(count);
        if exp >= 0 {
            BigRational::from_integer(c * pk)
        } else {
            BigRational::new(c, pk)
        }
    }

    /// The target `z = Z / p^B` represented by a numerator vector.
    pub fn target(&self, numerators: &[u64]) -> Vec<BigRational> {
        let den = BigInt::from(self.p).pow(self.shift);
        numerators
            .iter()
            .map(|&z| BigRational::new(BigInt::from(z), den.clone()))
            .collect()
    }

    /// Rows in lexicographic order; zero rows are listed when requested and the
    /// target space has at most [`FULL_TABLE_LIMIT`] elements.
    pub fn rows(&self, include_zero: bool) -> Vec<DensityRow> {
        let row = |k: &[u64], c: u128| DensityRow {
            z: self.target(k),
            count: c,
            density: self.density_of(c),
        };
        let full = include_zero && self.target_space().is_some_and(|s| s <= FULL_TABLE_LIMIT);
        if !full {
            return self.counts.iter().map(|(k, &c)| row(k, c)).collect();
        }
        let modulus = self.modulus();
        let mut key = vec![0u64; self.r];
        let mut out = Vec::new();
        loop {
            out.push(row(&key, self.count(&key)));
            // Odometer with the last coordinate fastest, matching the map order.
            let mut i = self.r;
            loop {
                if i == 0 {
                    return out;
                }
                i -= 1;
                key[i] += 1;
                if key[i] < modulus {
                    break;
                }
                key[i] = 0;
            }
        }
    }

    /// `sum_{Z' = Z mod p^(level + B)} N(Z')`, the counts pushed down to a coarser level.
    pub fn aggregate_to(&self, level: u32) -> BTreeMap<Vec<u64>, u128> {
        let modulus = self.p.pow(level.min(self.level) + self.shift);
        let mut out = BTreeMap::new();
        for (k, &c) in &self.counts {
            let key: Vec<u64> = k.iter().map(|z| z % modulus).collect();
            *out.entry(key).or_insert(0) += c;
        }
        out
    }

    /// `sum_Z N(Z) p^(-(m + B) n) psi(y . Z / p^B)` as an exact histogram.
    pub fn fourier_transform(&self, y: &[BigRational], ctx: &PrimeContext) -> Result<PhaseHistogram> {
        if y.len() != self.r {
            return Err(Error::DimensionMismatch {
                expected: self.r,
                got: y.len(),
            });
        }
        let scale = ctx.power(-((self.level + self.shift) as i64) * self.n as i64);
        let mut h = PhaseHistogram::new(self.p, 0, scale);
        for (z, c) in self.nonzero() {
            let t: BigRational = self
                .target(z)
                .iter()
                .zip(y)
                .map(|(zi, yi)| zi * yi)
                .sum();
            h.accumulate(ctx.fractional_part(&t), &BigInt::from(c));
        }
        Ok(h)
    }
}

#[derive(Serialize, Deserialize)]
struct DensityTableRepr {
    p: u64,
    level: u32,
    shift: u32,
    n: usize,
    r: usize,
    rows: Vec<DensityRow>,
}

impl Serialize for DensityTable {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        DensityTableRepr {
            p: self.p,
            level: self.level,
            shift: self.shift,
            n: self.n,
            r: self.r,
            rows: self.rows(true),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DensityTable {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = DensityTableRepr::deserialize(deserializer)?;
        let modulus = repr
            .p
            .checked_pow(repr.level + repr.shift)
            .ok_or_else(|| D::Error::custom("modulus overflow"))?;
        let lift = BigRational::from_integer(BigInt::from(repr.p).pow(repr.shift));
        let mut counts = BTreeMap::new();
        for row in repr.rows {
            if row.z.len() != repr.r {
                return Err(D::Error::custom("row has the wrong number of targets"));
            }
            if row.count == 0 {
                continue;
            }
            let key = row
                .z
                .iter()
                .map(|z| residue_mod(&(z * &lift), modulus).ok_or_else(|| D::Error::custom("target is not p-integral")))
                .collect::<std::result::Result<Vec<u64>, _>>()?;
            counts.insert(key, row.count);
        }
        Ok(DensityTable {
            p: repr.p,
            level: repr.level,
            shift: repr.shift,
            n: repr.n,
            r: repr.r,
            counts,
        })
    }
}

/// `p^B f` reduced mod `p^(m + B)`, component by component.
struct FiberSetup {
    polys: Vec<ModPoly>,
    modulus: u64,
    /// `m + B`.
    depth: u32,
    shift: u32,
    n: usize,
    r: usize,
}

impl FiberSetup {
    fn new(f: &PolyMap, m: u32, ctx: &PrimeContext) -> Result<Self> {
        let shift = f.valuation_bound(ctx);
        let depth = m + shift;
        let modulus = ctx.modulus_or_err(depth)?;
        if (modulus as u128).checked_pow(f.n() as u32).is_none() {
            return Err(Error::PrecisionOverflow {
                p: ctx.p(),
                exponent: depth * f.n() as u32,
            });
        }
        let lift = ctx.power(shift as i64);
        let polys = f
            .components()
            .iter()
            .map(|c| ModPoly::from_polynomial(c, &lift, modulus).expect("p^B f has p-integral coefficients"))
            .collect();
        Ok(Self {
            polys,
            modulus,
            depth,
            shift,
            n: f.n(),
            r: f.r(),
        })
    }

    /// `p^((m + B) n)`.
    fn points(&self) -> u128 {
        (self.modulus as u128).pow(self.n as u32)
    }

    fn table(&self, p: u64, level: u32, counts: BTreeMap<Vec<u64>, u128>) -> DensityTable {
        DensityTable {
            p,
            level,
            shift: self.shift,
            n: self.n,
            r: self.r,
            counts,
        }
    }
}

/// Visits `(P_1(x), .., P_r(x))` for every `x` in `(Z / range)^n`.
fn for_each_point(polys: &[ModPoly], range: u64, out: &mut Vec<u64>, visit: &mut dyn FnMut(&[u64])) {
    match polys[0].n() {
        0 => {
            out.clear();
            out.extend(polys.iter().map(ModPoly::constant));
            visit(out);
        }
        1 => {
            for x in 0..range {
                out.clear();
                out.extend(polys.iter().map(|q| q.eval_univariate(x)));
                visit(out);
            }
        }
        _ => {
            for x in 0..range {
                let sub: Vec<ModPoly> = polys.iter().map(|q| q.partial_eval_first(x)).collect();
                for_each_point(&sub, range, out, visit);
            }
        }
    }
}

fn count_naive(s: &FiberSetup) -> BTreeMap<Vec<u64>, u128> {
    let modulus = s.modulus;
    let space = (modulus as u128).checked_pow(s.r as u32);
    let first_layer = |x: u64| -> Vec<ModPoly> { s.polys.iter().map(|q| q.partial_eval_first(x)).collect() };
    match space {
        Some(size) if size <= DENSE_KEY_LIMIT => {
            let size = size as usize;
            let index = |v: &[u64]| v.iter().fold(0usize, |acc, &z| acc * modulus as usize + z as usize);
            let dense = (0..modulus)
                .into_par_iter()
                .fold(
                    || vec![0u64; size],
                    |mut acc, x| {
                        let mut buf = Vec::with_capacity(s.r);
                        for_each_point(&first_layer(x), modulus, &mut buf, &mut |v| acc[index(v)] += 1);
                        acc
                    },
                )
                .reduce(
                    || vec![0u64; size],
                    |mut a, b| {
                        for (x, y) in a.iter_mut().zip(b) {
                            *x += y;
                        }
                        a
                    },
                );
            let mut out = BTreeMap::new();
            for (idx, c) in dense.into_iter().enumerate().filter(|(_, c)| *c > 0) {
                let mut key = vec![0u64; s.r];
                let mut rest = idx as u64;
                for slot in key.iter_mut().rev() {
                    *slot = rest % modulus;
                    rest /= modulus;
                }
                out.insert(key, c as u128);
            }
            out
        }
        _ => {
            let sparse = (0..modulus)
                .into_par_iter()
                .fold(HashMap::new, |mut acc: HashMap<Vec<u64>, u128>, x| {
                    let mut buf = Vec::with_capacity(s.r);
                    for_each_point(&first_layer(x), modulus, &mut buf, &mut |v| {
                        *acc.entry(v.to_vec()).or_insert(0) += 1;
                    });
                    acc
                })
                .reduce(HashMap::new, |mut a, b| {
                    for (k, v) in b {
                        *a.entry(k).or_insert(0) += v;
                    }
                    a
                });
            sparse.into_iter().collect()
        }
    }
}

/// Shared state of the ball-splitting counters.
struct Descent<'a> {
    p: u64,
    n: usize,
    depth: u32,
    digits: &'a [Vec<u64>],
    nodes: &'a AtomicU64,
    limit: u64,
}

impl Descent<'_> {
    fn tick(&self) -> Result<()> {
        if self.nodes.fetch_add(1, Ordering::Relaxed) >= self.limit {
            return Err(Error::SearchBudgetExceeded { limit: self.limit });
        }
        Ok(())
    }

    /// Measure of a depth-`k` ball in units of `p^(-(m + B) n)`.
    fn weight(&self, k: u32) -> u128 {
        (self.p as u128).pow((self.depth - k) * self.n as u32)
    }

    fn children(&self, polys: &[ModPoly]) -> impl Iterator<Item = Vec<ModPoly>> + '_ {
        let polys = polys.to_vec();
        self.digits
            .iter()
            .map(move |d| polys.iter().map(|q| q.shift(d, self.p)).collect())
    }

    /// Splits until every component is constant mod `p^(m + B)` on the ball.
    fn all_fibers(&self, polys: &[ModPoly], k: u32, acc: &mut HashMap<Vec<u64>, u128>) -> Result<()> {
        self.tick()?;
        if polys.iter().all(ModPoly::is_constant) {
            let key: Vec<u64> = polys.iter().map(ModPoly::constant).collect();
            *acc.entry(key).or_insert(0) += self.weight(k);
            return Ok(());
        }
        for child in self.children(polys) {
            self.all_fibers(&child, k + 1, acc)?;
        }
        Ok(())
    }

    /// Hensel-style descent towards one target: a ball is dropped as soon as some
    /// component is provably `!= target` on all of it.
    fn one_fiber(
        &self,
        polys: &[ModPoly],
        target: &[u64],
        k: u32,
        center: &[u64],
        found: &mut FiberHits,
    ) -> Result<()> {
        self.tick()?;
        let mut constant = true;
        for (q, &z) in polys.iter().zip(target) {
            let mu = q.nonconstant_valuation(self.p, self.depth);
            let pm = self.p.pow(mu);
            if q.constant() % pm != z % pm {
                return Ok(());
            }
            constant &= mu == self.depth;
        }
        if constant {
            found.count += self.weight(k);
            if found.samples.len() < SAMPLE_LIMIT {
                found.samples.push(center.to_vec());
            }
            return Ok(());
        }
        let step = self.p.pow(k);
        for (d, child) in self.digits.iter().zip(self.children(polys)) {
            let c: Vec<u64> = center.iter().zip(d).map(|(&a, &b)| a + step * b).collect();
            self.one_fiber(&child, target, k + 1, &c, found)?;
        }
        Ok(())
    }
}

#[derive(Default)]
struct FiberHits {
    count: u128,
    samples: Vec<Vec<u64>>,
}

fn count_recursive(s: &FiberSetup, ctx: &PrimeContext) -> Result<BTreeMap<Vec<u64>, u128>> {
    let digits = digit_vectors(ctx.p(), s.n);
    let nodes = AtomicU64::new(0);
    let descent = Descent {
        p: ctx.p(),
        n: s.n,
        depth: s.depth,
        digits: &digits,
        nodes: &nodes,
        limit: ctx.naive_budget(),
    };
    let mut acc = HashMap::new();
    if s.polys.iter().all(ModPoly::is_constant) {
        descent.all_fibers(&s.polys, 0, &mut acc)?;
    } else {
        descent.tick()?;
        let parts = descent
            .children(&s.polys)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|child| {
                let mut local = HashMap::new();
                descent.all_fibers(&child, 1, &mut local).map(|_| local)
            })
            .collect::<Result<Vec<_>>>()?;
        for part in parts {
            for (k, v) in part {
                *acc.entry(k).or_insert(0) += v;
            }
        }
    }
    Ok(acc.into_iter().collect())
}

/// `N_m(z)` for all `z`, choosing the method automatically.
pub fn count_fibers(f: &PolyMap, m: u32, ctx: &PrimeContext) -> Result<DensityTable> {
    count_fibers_with(f, m, CountMethod::Auto, ctx)
}

pub fn count_fibers_with(f: &PolyMap, m: u32, method: CountMethod, ctx: &PrimeContext) -> Result<DensityTable> {
    let s = FiberSetup::new(f, m, ctx)?;
    let within_budget = s.points() <= ctx.naive_budget() as u128;
    let counts = match method {
        CountMethod::Naive if !within_budget => {
            return Err(Error::BudgetExceeded {
                required: s.points(),
                available: ctx.naive_budget(),
            })
        }
        CountMethod::Naive => count_naive(&s),
        CountMethod::Auto if within_budget => count_naive(&s),
        CountMethod::Auto | CountMethod::Recursive => count_recursive(&s, ctx)?,
    };
    Ok(s.table(ctx.p(), m, counts))
}

/// The fiber over a single target, with a few preimages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiberCount {
    pub level: u32,
    pub shift: u32,
    /// `Z = p^B z mod p^(m + B)`.
    pub target: Vec<u64>,
    pub count: u128,
    #[serde(with = "rational_string")]
    pub density: BigRational,
    /// Preimages `x mod p^(m + B)`, lexicographically first among the leaf balls.
    pub samples: Vec<Vec<u64>>,
}

/// `N_m(z)` for one `z` by descent; `z` must lie in `p^(-B) Z_p`.
pub fn count_fiber(f: &PolyMap, z: &[BigRational], m: u32, ctx: &PrimeContext) -> Result<FiberCount> {
    if z.len() != f.r() {
        return Err(Error::DimensionMismatch {
            expected: f.r(),
            got: z.len(),
        });
    }
    let s = FiberSetup::new(f, m, ctx)?;
    let lift = ctx.power(s.shift as i64);
    let target = z
        .iter()
        .map(|zi| residue_mod(&(zi * &lift), s.modulus).ok_or_else(|| Error::NotIntegral(format_rational(zi))))
        .collect::<Result<Vec<u64>>>()?;

    let digits = digit_vectors(ctx.p(), s.n);
    let nodes = AtomicU64::new(0);
    let descent = Descent {
        p: ctx.p(),
        n: s.n,
        depth: s.depth,
        digits: &digits,
        nodes: &nodes,
        limit: ctx.naive_budget(),
    };
    let root = vec![0u64; s.n];
    let mut hits = FiberHits::default();
    let root_constant = s.polys.iter().all(ModPoly::is_constant);
    if root_constant {
        descent.one_fiber(&s.polys, &target, 0, &root, &mut hits)?;
    } else {
        descent.tick()?;
        let children: Vec<(Vec<u64>, Vec<ModPoly>)> = digits.iter().cloned().zip(descent.children(&s.polys)).collect();
        let parts = children
            .into_par_iter()
            .map(|(d, child)| {
                let mut local = FiberHits::default();
                descent.one_fiber(&child, &target, 1, &d, &mut local).map(|_| local)
            })
            .collect::<Result<Vec<_>>>()?;
        for part in parts {
            hits.count += part.count;
            let room = SAMPLE_LIMIT - hits.samples.len();
            hits.samples.extend(part.samples.into_iter().take(room));
        }
    }
    let table = s.table(ctx.p(), m, BTreeMap::new());
    Ok(FiberCount {
        level: m,
        shift: s.shift,
        density: table.density_of(hits.count),
        target,
        count: hits.count,
        samples: hits.samples,
    })
}

/// Residual `E_f(y) - sum_z N_m(z) p^(-m n) psi(y . z)`, reduced. The two sides
/// agree exactly whenever `v(y_j) >= -m`; smaller valuations are refused.
pub fn fourier_check(f: &PolyMap, y: &[BigRational], m: u32, ctx: &PrimeContext) -> Result<PhaseHistogram> {
    if y.len() != f.r() {
        return Err(Error::DimensionMismatch {
            expected: f.r(),
            got: y.len(),
        });
    }
    let required = y
        .iter()
        .map(|v| match valuation(v, ctx) {
            Valuation::Finite(v) if v < 0 => (-v) as u32,
            _ => 0,
        })
        .max()
        .unwrap_or(0);
    if required > m {
        return Err(Error::LevelTooLow { required, level: m });
    }
    let table = count_fibers(f, m, ctx)?;
    let direct = eval_naive(&EvalRequest::trivial(f.clone(), y.to_vec(), ctx.clone())?)?;
    let regrouped = table.fourier_transform(y, ctx)?;
    Ok(direct.sub(&regrouped).reduce())
}

/// Rank data of `p^B Df(x)` over `Z_p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JacobianSample {
    pub point: Vec<u64>,
    /// Valuations of the nonzero invariant factors, ascending.
    pub invariant_valuations: Vec<i64>,
    pub rank_mod_p: usize,
    /// Invariant factors of valuation below the working precision.
    pub rank_at_precision: usize,
    pub full_rank: bool,
}

/// Smith-form valuations of `p^B Df(x)`, by elimination on minimal-valuation pivots.
pub fn jacobian_sample(f: &PolyMap, x: &[u64], precision: u32, ctx: &PrimeContext) -> JacobianSample {
    let lift = ctx.power(f.valuation_bound(ctx) as i64);
    let point: Vec<BigRational> = x.iter().map(|&v| BigRational::from_integer(v.into())).collect();
    let mut rows: Vec<Vec<BigRational>> = f
        .components()
        .iter()
        .map(|c| (0..f.n()).map(|j| c.derivative(j).eval(&point) * &lift).collect())
        .collect();
    let mut vals = Vec::new();
    let mut cols: Vec<usize> = (0..f.n()).collect();
    while !rows.is_empty() && !cols.is_empty() {
        let mut best: Option<(i64, usize, usize)> = None;
        for (i, row) in rows.iter().enumerate() {
            for (cj, &j) in cols.iter().enumerate() {
                if let Valuation::Finite(v) = valuation(&row[j], ctx) {
                    if best.is_none_or(|(bv, _, _)| v < bv) {
                        best = Some((v, i, cj));
                    }
                }
            }
        }
        let Some((v, i, cj)) = best else { break };
        let j = cols.remove(cj);
        let pivot_row = rows.remove(i);
        for row in rows.iter_mut() {
            if row[j].is_zero() {
                continue;
            }
            let factor = &row[j] / &pivot_row[j];
            for &c in &cols {
                row[c] = &row[c] - &factor * &pivot_row[c];
            }
        }
        vals.push(v);
    }
    vals.sort_unstable();
    let rank_at_precision = vals.iter().filter(|&&v| v < precision as i64).count();
    JacobianSample {
        point: x.to_vec(),
        rank_mod_p: vals.iter().filter(|&&v| v <= 0).count(),
        rank_at_precision,
        full_rank: rank_at_precision == f.n().min(f.r()),
        invariant_valuations: vals,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelDensity {
    pub level: u32,
    pub count: u128,
    #[serde(with = "rational_string")]
    pub density: BigRational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StabilizationReport {
    pub p: u64,
    #[serde(with = "rational_string::vec")]
    pub target: Vec<BigRational>,
    pub window: (u32, u32),
    pub values: Vec<LevelDensity>,
    /// Smallest `m*` below the top of the window with `F_m` constant on `[m*, m1]`.
    pub stable_from: Option<u32>,
    pub stable: bool,
    /// Rank evidence at preimages mod `p^(m1 + B)`.
    pub jacobian: Vec<JacobianSample>,
    pub all_full_rank: bool,
}

/// `F_m(z)` over `m0..=m1`, with a stability flag and Jacobian ranks at sampled preimages.
pub fn stabilization_probe(
    f: &PolyMap,
    z: &[BigRational],
    m0: u32,
    m1: u32,
    ctx: &PrimeContext,
) -> Result<StabilizationReport> {
    if m0 == 0 || m0 > m1 {
        return Err(Error::InvalidRange(format!("levels {m0}..{m1}")));
    }
    let mut values = Vec::new();
    let mut top = None;
    for m in m0..=m1 {
        let fc = count_fiber(f, z, m, ctx)?;
        values.push(LevelDensity {
            level: m,
            count: fc.count,
            density: fc.density.clone(),
        });
        top = Some(fc);
    }
    let last = &values[values.len() - 1].density;
    let stable_from = values
        .iter()
        .rev()
        .take_while(|v| &v.density == last)
        .last()
        .map(|v| v.level)
        .filter(|&m| m < m1);
    let jacobian: Vec<JacobianSample> = top
        .map(|fc| fc.samples)
        .unwrap_or_default()
        .iter()
        .map(|x| jacobian_sample(f, x, m1, ctx))
        .collect();
    let all_full_rank = !jacobian.is_empty() && jacobian.iter().all(|j| j.full_rank);
    Ok(StabilizationReport {
        p: ctx.p(),
        target: z.to_vec(),
        window: (m0, m1),
        values,
        stable: stable_from.is_some(),
        stable_from,
        jacobian,
        all_full_rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polymap::parse_polymap;
    use num_traits::One;
    use proptest::prelude::*;

    fn ctx(p: u64) -> PrimeContext {
        PrimeContext::with_prime(p).unwrap()
    }

    fn q(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    /// Direct enumeration with exact rational evaluation.
    fn brute_counts(f: &PolyMap, m: u32, c: &PrimeContext) -> BTreeMap<Vec<u64>, u128> {
        let b = f.valuation_bound(c);
        let modulus = c.p().pow(m + b);
        let lift = c.power(b as i64);
        let mut out = BTreeMap::new();
        let total = modulus.pow(f.n() as u32);
        for idx in 0..total {
            let mut rest = idx;
            let x: Vec<BigRational> = (0..f.n())
                .map(|_| {
                    let d = rest % modulus;
                    rest /= modulus;
                    BigRational::from_integer(d.into())
                })
                .collect();
            let key: Vec<u64> = f
                .eval(&x)
                .iter()
                .map(|v| residue_mod(&(v * &lift), modulus).unwrap())
                .collect();
            *out.entry(key).or_insert(0) += 1;
        }
        out
    }

    #[test]
    fn square_mod_three() {
        let c = ctx(3);
        let t = count_fibers(&parse_polymap("x1^2", 1).unwrap(), 1, &c).unwrap();
        assert_eq!((t.count(&[0]), t.count(&[1]), t.count(&[2])), (1, 2, 0));
        let rows = t.rows(true);
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[2].count, 0);
        assert_eq!(rows[1].density, q(2, 1));
    }

    #[test]
    fn identity_and_constant() {
        let c = ctx(5);
        for m in 1..4 {
            let t = count_fibers(&parse_polymap("x1", 1).unwrap(), m, &c).unwrap();
            assert!((0..5u64.pow(m)).all(|z| t.count(&[z]) == 1));
            let t = count_fibers(&parse_polymap("7", 2).unwrap(), m, &c).unwrap();
            assert_eq!(t.nonzero().collect::<Vec<_>>(), vec![(&[7 % 5u64.pow(m)][..], 25u128.pow(m))]);
        }
    }

    #[test]
    fn methods_agree() {
        let c = ctx(3);
        let f = parse_polymap("x1^2*x2 + 3*x2; x1 - x2^3", 2).unwrap();
        let naive = count_fibers_with(&f, 2, CountMethod::Naive, &c).unwrap();
        let rec = count_fibers_with(&f, 2, CountMethod::Recursive, &c).unwrap();
        assert_eq!(naive, rec);
        assert_eq!(naive.counts, brute_counts(&f, 2, &c));
        let tight = PrimeContext::new(3, 10).unwrap();
        assert!(matches!(
            count_fibers_with(&f, 2, CountMethod::Naive, &tight),
            Err(Error::BudgetExceeded { .. })
        ));
        assert!(matches!(
            count_fibers_with(&f, 2, CountMethod::Recursive, &tight),
            Err(Error::SearchBudgetExceeded { limit: 10 })
        ));
    }

    #[test]
    fn denominators_use_effective_level() {
        let c = ctx(3);
        let f = parse_polymap("1/3*x1^2 + x1", 1).unwrap();
        let t = count_fibers(&f, 1, &c).unwrap();
        assert_eq!(t.shift(), 1);
        assert_eq!(t.total(), 9);
        assert_eq!(t.counts, brute_counts(&f, 1, &c));
        // F integrates to 1 against the counting measure on targets p^-1 Z / p Z.
        let mass: BigRational = t.nonzero().map(|(z, _)| t.density(z)).sum::<BigRational>() * c.power(-1);
        assert_eq!(mass, q(1, 1));
    }

    #[test]
    fn fourier_examples() {
        let c = ctx(3);
        let f = parse_polymap("x1^2", 1).unwrap();
        assert!(fourier_check(&f, &[q(1, 3)], 1, &c).unwrap().is_zero());
        let g = parse_polymap("x1^2; x2", 2).unwrap();
        assert!(fourier_check(&g, &[q(1, 3), q(2, 3)], 1, &c).unwrap().is_zero());
        assert_eq!(
            fourier_check(&f, &[q(1, 9)], 1, &c),
            Err(Error::LevelTooLow { required: 2, level: 1 })
        );
    }

    #[test]
    fn hensel_stabilization() {
        let c = ctx(3);
        let f = parse_polymap("x1^2", 1).unwrap();
        let rep = stabilization_probe(&f, &[q(1, 1)], 1, 4, &c).unwrap();
        assert!(rep.values.iter().all(|v| v.density == q(2, 1)));
        assert_eq!(rep.stable_from, Some(1));
        assert!(rep.all_full_rank);
        assert_eq!(rep.jacobian.len(), 2);

        let rep = stabilization_probe(&f, &[q(0, 1)], 1, 4, &c).unwrap();
        let got: Vec<BigRational> = rep.values.iter().map(|v| v.density.clone()).collect();
        let oracle: Vec<BigRational> = (1..=4)
            .map(|m| {
                let n = (0..3u64.pow(m)).filter(|x| (x * x) % 3u64.pow(m) == 0).count();
                q(n as i64, 1)
            })
            .collect();
        assert_eq!(got, oracle);
        assert!(!rep.stable);
        assert!(!rep.all_full_rank);

        let id = stabilization_probe(&parse_polymap("x1", 1).unwrap(), &[q(5, 1)], 1, 3, &c).unwrap();
        assert!(id.values.iter().all(|v| v.density == q(1, 1)) && id.stable);
    }

    #[test]
    fn jacobian_ranks() {
        let c = ctx(3);
        let f = parse_polymap("x1^2 + x2; 3*x2", 2).unwrap();
        let j = jacobian_sample(&f, &[1, 0], 4, &c);
        assert_eq!(j.invariant_valuations, vec![0, 1]);
        assert_eq!((j.rank_mod_p, j.rank_at_precision, j.full_rank), (1, 2, true));
        let j = jacobian_sample(&f, &[0, 0], 1, &c);
        assert_eq!(j.rank_at_precision, 1);
        assert!(!j.full_rank);
    }

    #[test]
    fn table_json_round_trip() {
        let c = ctx(3);
        let f = parse_polymap("1/3*x1^2; x1*x2", 2).unwrap();
        let t = count_fibers(&f, 1, &c).unwrap();
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(serde_json::from_str::<DensityTable>(&json).unwrap(), t);
    }

    fn arb_map() -> impl Strategy<Value = (String, usize)> {
        let term = (0u32..3, 0u32..3, -5i64..6);
        (prop::collection::vec(prop::collection::vec(term, 1..4), 1..3), 1usize..3).prop_map(|(comps, n)| {
            let text = comps
                .iter()
                .map(|terms| {
                    terms
                        .iter()
                        .map(|&(a, b, c)| {
                            if n == 1 {
                                format!("{c}*x1^{a}")
                            } else {
                                format!("{c}*x1^{a}*x2^{b}")
                            }
                        })
                        .collect::<Vec<_>>()
                        .join(" + ")
                })
                .collect::<Vec<_>>()
                .join("; ");
            (text, n)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn mass_and_refinement((text, n) in arb_map(), p in prop::sample::select(vec![2u64, 3, 5]), m in 1u32..3) {
            let c = ctx(p);
            let f = parse_polymap(&text, n).unwrap();
            let t = count_fibers(&f, m, &c).unwrap();
            prop_assert_eq!(t.total(), (p as u128).pow(m * n as u32));
            let finer = count_fibers(&f, m + 1, &c).unwrap();
            let pushed = finer.aggregate_to(m);
            for (z, cnt) in t.nonzero() {
                prop_assert_eq!(pushed.get(z).copied().unwrap_or(0), (p as u128).pow(n as u32) * cnt);
            }
            prop_assert_eq!(pushed.len(), t.nonzero().count());
            prop_assert_eq!(&t, &count_fibers_with(&f, m, CountMethod::Recursive, &c).unwrap());
        }

        #[test]
        fn fourier_residual_vanishes((text, n) in arb_map(), u in 0i64..40, w in 0i64..40, m in 1u32..3) {
            let c = ctx(3);
            let f = parse_polymap(&text, n).unwrap();
            let y: Vec<BigRational> = [u, w][..f.r()].iter().map(|&a| q(a, 3i64.pow(m))).collect();
            prop_assert!(fourier_check(&f, &y, m, &c).unwrap().is_zero());
        }

        #[test]
        fn single_fiber_matches_table((text, n) in arb_map(), m in 1u32..3) {
            let c = ctx(3);
            let f = parse_polymap(&text, n).unwrap();
            let t = count_fibers(&f, m, &c).unwrap();
            for (z, cnt) in t.nonzero() {
                let fc = count_fiber(&f, &t.target(z), m, &c).unwrap();
                prop_assert_eq!(fc.count, cnt);
                for x in &fc.samples {
                    let xs: Vec<BigRational> = x.iter().map(|&v| BigRational::from_integer(v.into())).collect();
                    let vals: Vec<u64> = f.eval(&xs).iter().map(|v| residue_mod(v, t.modulus()).unwrap()).collect();
                    prop_assert_eq!(&vals[..], z);
                }
            }
        }
    }

    #[test]
    fn rational_target_rejected() {
        let c = ctx(3);
        let f = parse_polymap("x1^2", 1).unwrap();
        assert!(matches!(count_fiber(&f, &[q(1, 3)], 2, &c), Err(Error::NotIntegral(_))));
        assert!(count_fiber(&f, &[q(1, 2)], 2, &c).is_ok());
        assert_eq!(
            stabilization_probe(&f, &[q(1, 1)], 3, 2, &c).unwrap_err(),
            Error::InvalidRange("levels 3..2".into())
        );
        let one = BigRational::one();
        assert_eq!(count_fiber(&f, &[one], 1, &c).unwrap().count, 2);
    }
}
