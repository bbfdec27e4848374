//! Exact sums of `p^M`-th roots of unity.
//!
//! A [`PhaseHistogram`] stores `s * sum_k c_k zeta^k` with `zeta = exp(2 pi i / p^M)`,
//! integer counts `c_k` and an exact rational scale `s`. Everything the evaluators
//! produce lives here; floating point only appears in [`PhaseHistogram::magnitude`].
//!
//! The only Z-linear relations among the powers of `zeta` are the orbit sums
//! `sum_t zeta^(j + t p^(M-1)) = 0`, so two count vectors at the same level
//! represent the same number iff they differ by a vector that is constant on every
//! orbit `{j + t p^(M-1)}`. [`PhaseHistogram::reduce`] makes the scale positive, picks
//! the representative whose minimum on every orbit is zero, drops to the lowest level that still
//! carries the value, and moves the content of the counts into the scale. The
//! result is a canonical form: equal values give structurally equal histograms.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::padic::{format_rational_full, parse_rational, PhaseFraction};

/// Above this many slots the dense layout is never used.
const DENSE_MAX_SLOTS: u64 = 1 << 20;
/// Dense layout once at least one slot in four is occupied.
const DENSE_LOAD_DENOMINATOR: u64 = 4;

/// Constant `C` of the magnitude error bound `|s| * sum |c_k| * eps * C`.
///
/// Covers the conversion of counts and scale to `f64`, rounding of the angle
/// `2 pi k / p^M`, libm `sin`/`cos` (at most one ulp each) and the compensated
/// summation of the real and imaginary parts.
pub const MAGNITUDE_ERROR_CONSTANT: f64 = 32.0;

#[derive(Debug, Clone)]
enum Counts {
    Sparse(BTreeMap<u64, BigInt>),
    Dense(Vec<BigInt>),
}

impl Counts {
    fn new() -> Self {
        Counts::Sparse(BTreeMap::new())
    }

    fn from_map(map: BTreeMap<u64, BigInt>, slots: u64) -> Self {
        let nnz = map.len() as u64;
        if slots <= DENSE_MAX_SLOTS && nnz * DENSE_LOAD_DENOMINATOR >= slots && slots > 1 {
            let mut dense = vec![BigInt::zero(); slots as usize];
            for (k, c) in map {
                dense[k as usize] = c;
            }
            Counts::Dense(dense)
        } else {
            Counts::Sparse(map)
        }
    }

    fn add(&mut self, k: u64, w: &BigInt) {
        match self {
            Counts::Sparse(map) => {
                let entry = map.entry(k).or_insert_with(BigInt::zero);
                *entry += w;
                if entry.is_zero() {
                    map.remove(&k);
                }
            }
            Counts::Dense(v) => v[k as usize] += w,
        }
    }

    fn iter(&self) -> Box<dyn Iterator<Item = (u64, &BigInt)> + '_> {
        match self {
            Counts::Sparse(map) => Box::new(map.iter().map(|(k, c)| (*k, c))),
            Counts::Dense(v) => Box::new(
                v.iter()
                    .enumerate()
                    .filter(|(_, c)| !c.is_zero())
                    .map(|(k, c)| (k as u64, c)),
            ),
        }
    }

    fn into_map(self) -> BTreeMap<u64, BigInt> {
        match self {
            Counts::Sparse(map) => map,
            Counts::Dense(v) => v
                .into_iter()
                .enumerate()
                .filter(|(_, c)| !c.is_zero())
                .map(|(k, c)| (k as u64, c))
                .collect(),
        }
    }

    fn is_empty(&self) -> bool {
        self.iter().next().is_none()
    }
}

/// Floating-point magnitude with a certified absolute error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Magnitude {
    pub value: f64,
    pub error: f64,
    /// The histogram is exactly zero; `value` is then exactly `0.0`.
    pub exact_zero: bool,
}

#[derive(Clone)]
pub struct PhaseHistogram {
    p: u64,
    level: u32,
    counts: Counts,
    scale: BigRational,
}

impl PhaseHistogram {
    /// Empty histogram at `level` with scale `scale`.
    pub fn new(p: u64, level: u32, scale: BigRational) -> Self {
        Self {
            p,
            level,
            counts: Counts::new(),
            scale,
        }
    }

    /// The canonical zero.
    pub fn zero(p: u64) -> Self {
        Self::new(p, 0, BigRational::one())
    }

    /// The constant `value` (level 0).
    pub fn constant(p: u64, value: BigRational) -> Self {
        let mut h = Self::new(p, 0, value);
        h.accumulate_index(0, &BigInt::one());
        h
    }

    /// `scale * zeta^phase`.
    pub fn monomial(p: u64, phase: PhaseFraction, scale: BigRational) -> Self {
        let mut h = Self::new(p, phase.level, scale);
        h.accumulate(phase, &BigInt::one());
        h
    }

    pub fn from_counts<I>(p: u64, level: u32, counts: I, scale: BigRational) -> Self
    where
        I: IntoIterator<Item = (u64, BigInt)>,
    {
        let slots = p.pow(level);
        let mut map = BTreeMap::new();
        for (k, c) in counts {
            assert!(k < slots, "phase index {k} out of range for level {level}");
            *map.entry(k).or_insert_with(BigInt::zero) += c;
        }
        map.retain(|_, c| !c.is_zero());
        Self {
            p,
            level,
            counts: Counts::from_map(map, slots),
            scale,
        }
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn scale(&self) -> &BigRational {
        &self.scale
    }

    pub fn count(&self, k: u64) -> BigInt {
        self.counts
            .iter()
            .find(|(i, _)| *i == k)
            .map(|(_, c)| c.clone())
            .unwrap_or_default()
    }

    /// Nonzero counts in increasing phase order.
    pub fn nonzero_counts(&self) -> Vec<(u64, BigInt)> {
        self.counts.iter().map(|(k, c)| (k, c.clone())).collect()
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.counts, Counts::Dense(_))
    }

    fn slots(&self) -> u64 {
        self.p.pow(self.level)
    }

    /// Re-expresses the histogram at a higher level.
    pub fn relevel(&mut self, level: u32) {
        if level <= self.level {
            return;
        }
        let factor = self.p.pow(level - self.level);
        let map = std::mem::replace(&mut self.counts, Counts::new()).into_map();
        self.level = level;
        let lifted = map.into_iter().map(|(k, c)| (k * factor, c)).collect();
        self.counts = Counts::from_map(lifted, self.slots());
    }

    /// Adds `w` to the class of `phase`, raising the level if needed.
    pub fn accumulate(&mut self, phase: PhaseFraction, w: &BigInt) {
        if phase.level > self.level {
            self.relevel(phase.level);
        }
        let k = phase.index_at(self.level, self.p);
        self.accumulate_index(k, w);
    }

    /// Adds `w` to index `k` at the current level.
    pub fn accumulate_index(&mut self, k: u64, w: &BigInt) {
        debug_assert!(k < self.slots().max(1));
        if w.is_zero() {
            return;
        }
        self.counts.add(k, w);
    }

    /// Pointwise count addition. Histograms with different scales are brought
    /// to a common scale first.
    pub fn merge(&mut self, other: &PhaseHistogram) {
        assert_eq!(self.p, other.p, "merging histograms over different primes");
        if other.counts.is_empty() || other.scale.is_zero() {
            return;
        }
        if self.counts.is_empty() || self.scale.is_zero() {
            *self = other.clone();
            return;
        }
        let level = self.level.max(other.level);
        self.relevel(level);
        if self.scale == other.scale {
            let factor = self.p.pow(level - other.level);
            for (k, c) in other.counts.iter() {
                self.counts.add(k * factor, c);
            }
            return;
        }
        // Common scale g / lcm(b1, b2) with g = gcd(a1, a2).
        let (a1, b1) = (self.scale.numer(), self.scale.denom());
        let (a2, b2) = (other.scale.numer(), other.scale.denom());
        let g = a1.gcd(a2);
        let l = b1.lcm(b2);
        let m1 = (a1 / &g) * (&l / b1);
        let m2 = (a2 / &g) * (&l / b2);
        let factor = self.p.pow(level - other.level);
        let mut map: BTreeMap<u64, BigInt> = std::mem::replace(&mut self.counts, Counts::new())
            .into_map()
            .into_iter()
            .map(|(k, c)| (k, c * &m1))
            .collect();
        for (k, c) in other.counts.iter() {
            *map.entry(k * factor).or_insert_with(BigInt::zero) += c * &m2;
        }
        map.retain(|_, c| !c.is_zero());
        self.scale = BigRational::new(g, l);
        self.counts = Counts::from_map(map, self.slots());
    }

    pub fn add(&self, other: &PhaseHistogram) -> PhaseHistogram {
        let mut out = self.clone();
        out.merge(other);
        out
    }

    pub fn sub(&self, other: &PhaseHistogram) -> PhaseHistogram {
        self.add(&other.scaled(&-BigRational::one()))
    }

    pub fn scaled(&self, factor: &BigRational) -> PhaseHistogram {
        let mut out = self.clone();
        out.scale = &out.scale * factor;
        out
    }

    /// Multiplication by `zeta^phase`.
    pub fn rotated(&self, phase: PhaseFraction) -> PhaseHistogram {
        let level = self.level.max(phase.level);
        let mut out = self.clone();
        out.relevel(level);
        let modulus = self.p.pow(level);
        let shift = phase.index_at(level, self.p);
        let map = std::mem::replace(&mut out.counts, Counts::new())
            .into_map()
            .into_iter()
            .map(|(k, c)| (((k as u128 + shift as u128) % modulus as u128) as u64, c))
            .collect();
        out.counts = Counts::from_map(map, modulus);
        out
    }

    /// Canonical form; see the module documentation. Idempotent.
    pub fn reduce(&self) -> PhaseHistogram {
        let p = self.p;
        if self.scale.is_zero() {
            return Self::zero(p);
        }
        let mut level = self.level;
        let mut map = self.counts.clone().into_map();
        // A positive scale makes "orbit minimum 0" a unique representative.
        let negative = self.scale.is_negative();
        if negative {
            for c in map.values_mut() {
                *c = -&*c;
            }
        }
        while level >= 1 && !map.is_empty() {
            let stride = p.pow(level - 1);
            let orbits: Vec<u64> = {
                let mut js: Vec<u64> = map.keys().map(|k| k % stride).collect();
                js.sort_unstable();
                js.dedup();
                js
            };
            for j in orbits {
                let min = (0..p)
                    .map(|t| map.get(&(j + t * stride)).cloned().unwrap_or_default())
                    .min()
                    .expect("p >= 2");
                if min.is_zero() {
                    continue;
                }
                for t in 0..p {
                    let k = j + t * stride;
                    let c = map.get(&k).cloned().unwrap_or_default() - &min;
                    if c.is_zero() {
                        map.remove(&k);
                    } else {
                        map.insert(k, c);
                    }
                }
            }
            if level == 1 {
                // Rational iff the counts at the primitive p-th roots agree.
                let c1 = map.get(&1).cloned().unwrap_or_default();
                if (2..p).all(|k| map.get(&k).cloned().unwrap_or_default() == c1) {
                    let c0 = map.get(&0).cloned().unwrap_or_default();
                    map.clear();
                    let v = c0 - c1;
                    if !v.is_zero() {
                        map.insert(0, v);
                    }
                    level = 0;
                }
                break;
            }
            if map.keys().all(|k| k % p == 0) {
                map = map.into_iter().map(|(k, c)| (k / p, c)).collect();
                level -= 1;
            } else {
                break;
            }
        }
        let base_scale = if negative { -&self.scale } else { self.scale.clone() };
        if map.is_empty() {
            return Self::zero(p);
        }
        if level == 0 {
            let c = map.remove(&0).expect("level-0 histogram has only index 0");
            return Self::constant(p, &base_scale * BigRational::from_integer(c));
        }
        let content = map
            .values()
            .fold(BigInt::zero(), |g, c| g.gcd(c));
        if !content.is_one() {
            for c in map.values_mut() {
                *c /= &content;
            }
        }
        let scale = &base_scale * BigRational::from_integer(content);
        Self {
            p,
            level,
            counts: Counts::from_map(map, p.pow(level)),
            scale,
        }
    }

    /// `|h|^2 = h * conj(h)`, exact and reduced. `None` when the reduced
    /// histogram has more than `max_terms` nonzero counts.
    pub fn norm_squared(&self, max_terms: usize) -> Option<PhaseHistogram> {
        let h = self.reduce();
        let entries = h.nonzero_counts();
        if entries.len() > max_terms {
            return None;
        }
        let scale = &h.scale * &h.scale;
        let slots = h.slots();
        let small: Option<Vec<(u64, i64)>> = entries.iter().map(|(k, c)| c.to_i64().map(|c| (*k, c))).collect();
        let fits = |v: &[(u64, i64)]| {
            let max = v.iter().map(|(_, c)| c.unsigned_abs() as u128).max().unwrap_or(0);
            max.checked_mul(max)
                .and_then(|sq| sq.checked_mul(v.len() as u128))
                .is_some_and(|total| total < 1u128 << 126)
        };
        let counts: Vec<(u64, BigInt)> = match small {
            Some(v) if fits(&v) => {
                let mut acc: BTreeMap<u64, i128> = BTreeMap::new();
                for &(i, a) in &v {
                    for &(j, b) in &v {
                        *acc.entry((i + slots - j) % slots).or_insert(0) += a as i128 * b as i128;
                    }
                }
                acc.into_iter().map(|(k, c)| (k, BigInt::from(c))).collect()
            }
            _ => {
                let mut acc: BTreeMap<u64, BigInt> = BTreeMap::new();
                for (i, a) in &entries {
                    for (j, b) in &entries {
                        *acc.entry((i + slots - j) % slots).or_insert_with(BigInt::zero) += a * b;
                    }
                }
                acc.into_iter().collect()
            }
        };
        Some(PhaseHistogram::from_counts(self.p, h.level, counts, scale).reduce())
    }

    /// The rational value when the histogram reduces to level 0.
    pub fn as_rational(&self) -> Option<BigRational> {
        let h = self.reduce();
        if h.level != 0 {
            return None;
        }
        Some(&h.scale * BigRational::from_integer(h.count(0)))
    }

    /// Exact zero test.
    pub fn is_zero(&self) -> bool {
        if self.scale.is_zero() || self.counts.is_empty() {
            return true;
        }
        self.reduce().counts.is_empty()
    }

    /// `(re, im)` of the represented value, by compensated summation.
    pub fn to_complex(&self) -> (f64, f64) {
        let n = self.slots() as f64;
        let mut re = Neumaier::default();
        let mut im = Neumaier::default();
        for (k, c) in self.counts.iter() {
            let c = c.to_f64().unwrap_or(f64::INFINITY);
            let (s, co) = angle(k as f64 / n).sin_cos();
            re.add(c * co);
            im.add(c * s);
        }
        let s = self.scale.to_f64().unwrap_or(f64::NAN);
        (s * re.total(), s * im.total())
    }

    /// `|s| * sum |c_k|`: the value obtained if every phase aligned.
    pub fn abs_weight(&self) -> f64 {
        let total: BigInt = self.counts.iter().map(|(_, c)| c.abs()).sum();
        self.scale.abs().to_f64().unwrap_or(f64::INFINITY) * total.to_f64().unwrap_or(f64::INFINITY)
    }

    /// Magnitude of the reduced value with error bound
    /// `|s| * sum |c_k| * f64::EPSILON * MAGNITUDE_ERROR_CONSTANT`.
    pub fn magnitude(&self) -> Magnitude {
        let reduced = self.reduce();
        if reduced.counts.is_empty() {
            return Magnitude {
                value: 0.0,
                error: 0.0,
                exact_zero: true,
            };
        }
        if reduced.level == 0 {
            let v = reduced.scale.abs().to_f64().unwrap_or(f64::INFINITY);
            return Magnitude {
                value: v,
                error: v * f64::EPSILON,
                exact_zero: false,
            };
        }
        let (re, im) = reduced.to_complex();
        Magnitude {
            value: re.hypot(im),
            error: reduced.abs_weight() * f64::EPSILON * MAGNITUDE_ERROR_CONSTANT,
            exact_zero: false,
        }
    }
}

fn angle(fraction: f64) -> f64 {
    // Map to (-1/2, 1/2] first so the angle stays small.
    let f = if fraction > 0.5 { fraction - 1.0 } else { fraction };
    std::f64::consts::TAU * f
}

#[derive(Default)]
struct Neumaier {
    sum: f64,
    compensation: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl PartialEq for PhaseHistogram {
    /// Structural equality of the stored representation; compare `reduce()`d
    /// histograms to test equality of values.
    fn eq(&self, other: &Self) -> bool {
        self.p == other.p
            && self.level == other.level
            && self.scale == other.scale
            && self.counts.iter().eq(other.counts.iter())
    }
}

impl Eq for PhaseHistogram {}

impl fmt::Debug for PhaseHistogram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhaseHistogram")
            .field("p", &self.p)
            .field("level", &self.level)
            .field("scale", &format_rational_full(&self.scale))
            .field("counts", &self.nonzero_counts())
            .finish()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CountRepr {
    Small(i64),
    Big(String),
}

#[derive(Serialize, Deserialize)]
struct HistogramJson {
    p: u64,
    #[serde(rename = "M")]
    level: u32,
    scale: String,
    counts: BTreeMap<u64, CountRepr>,
}

impl Serialize for PhaseHistogram {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let counts = self
            .counts
            .iter()
            .map(|(k, c)| {
                let repr = c
                    .to_i64()
                    .map(CountRepr::Small)
                    .unwrap_or_else(|| CountRepr::Big(c.to_string()));
                (k, repr)
            })
            .collect();
        HistogramJson {
            p: self.p,
            level: self.level,
            scale: format_rational_full(&self.scale),
            counts,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PhaseHistogram {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = HistogramJson::deserialize(deserializer)?;
        let scale = parse_rational(&raw.scale).map_err(D::Error::custom)?;
        let slots = raw
            .p
            .checked_pow(raw.level)
            .ok_or_else(|| D::Error::custom("level too large"))?;
        let mut counts = Vec::with_capacity(raw.counts.len());
        for (k, c) in raw.counts {
            if k >= slots {
                return Err(D::Error::custom(format!("phase index {k} out of range")));
            }
            let c = match c {
                CountRepr::Small(v) => BigInt::from(v),
                CountRepr::Big(s) => s.parse().map_err(D::Error::custom)?,
            };
            counts.push((k, c));
        }
        Ok(PhaseHistogram::from_counts(raw.p, raw.level, counts, scale))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    fn hist(p: u64, level: u32, counts: &[(u64, i64)], scale: BigRational) -> PhaseHistogram {
        PhaseHistogram::from_counts(p, level, counts.iter().map(|&(k, c)| (k, c.into())), scale)
    }

    #[test]
    fn accumulate_examples() {
        let one = BigInt::one();
        let mut h = PhaseHistogram::new(3, 1, q(1, 1));
        h.accumulate(PhaseFraction { level: 1, numer: 1 }, &one);
        assert_eq!(h.nonzero_counts(), vec![(1, one.clone())]);

        h.accumulate(PhaseFraction::ZERO, &one);
        assert_eq!(h.nonzero_counts(), vec![(0, one.clone()), (1, one.clone())]);

        let mut h = hist(3, 0, &[(0, 1)], q(1, 1));
        h.accumulate(PhaseFraction { level: 2, numer: 1 }, &one);
        assert_eq!(h.level(), 2);
        assert_eq!(h.nonzero_counts(), vec![(0, one.clone()), (1, one)]);
    }

    #[test]
    fn reduce_examples() {
        let full = hist(3, 1, &[(0, 1), (1, 1), (2, 1)], q(1, 1));
        assert_eq!(full.reduce(), PhaseHistogram::zero(3));

        let reduced = hist(3, 1, &[(0, 1), (1, 2)], q(1, 1));
        assert_eq!(reduced.reduce(), reduced);

        let orbit = hist(3, 2, &[(0, 1), (3, 1), (6, 1)], q(1, 1));
        assert_eq!(orbit.reduce(), PhaseHistogram::zero(3));
    }

    #[test]
    fn reduce_drops_levels_and_extracts_content() {
        // 2 zeta_9^3 = 2 zeta_3.
        let h = hist(3, 2, &[(3, 2)], q(1, 5));
        let r = h.reduce();
        assert_eq!(r.level(), 1);
        assert_eq!(r.nonzero_counts(), vec![(1, BigInt::one())]);
        assert_eq!(r.scale(), &q(2, 5));
        // -1 - zeta_3 = zeta_3^2.
        let h = hist(3, 1, &[(0, -1), (1, -1)], q(1, 1));
        assert_eq!(h.reduce(), hist(3, 1, &[(2, 1)], q(1, 1)));
        // {0:4} with scale 1/4 is the constant 1.
        assert_eq!(hist(5, 0, &[(0, 4)], q(1, 4)).reduce(), PhaseHistogram::constant(5, q(1, 1)));
    }

    #[test]
    fn zero_tests() {
        assert!(hist(3, 1, &[(0, 1), (1, 1), (2, 1)], q(1, 1)).is_zero());
        assert!(!hist(3, 1, &[(0, 1)], q(1, 1)).is_zero());
        assert!(hist(3, 1, &[(0, 1)], q(0, 1)).is_zero());
    }

    #[test]
    fn magnitude_examples() {
        let m = hist(3, 1, &[(0, 1), (1, 2)], q(1, 3)).magnitude();
        // Oracle: direct evaluation of 1 + 2 e^{2 pi i / 3}.
        let (s, c) = (std::f64::consts::TAU / 3.0).sin_cos();
        let direct = ((1.0 + 2.0 * c).powi(2) + (2.0 * s).powi(2)).sqrt() / 3.0;
        assert!((m.value - direct).abs() < 1e-15);
        assert!((m.value - 3f64.powf(-0.5)).abs() <= m.error.max(1e-15));

        let z = hist(3, 1, &[(0, 1), (1, 1), (2, 1)], q(1, 1)).magnitude();
        assert!(z.exact_zero);
        assert_eq!(z.value, 0.0);

        let one = hist(3, 0, &[(0, 4)], q(1, 4)).magnitude();
        assert_eq!(one.value, 1.0);
    }

    #[test]
    fn dense_fallback_is_transparent() {
        let counts: Vec<(u64, i64)> = (0..25).map(|k| (k, (k % 3) as i64 + 1)).collect();
        let h = hist(5, 2, &counts, q(1, 1));
        assert!(h.is_dense());
        let sparse = hist(5, 2, &[(1, 1)], q(1, 1));
        assert!(!sparse.is_dense());
        let merged = h.add(&sparse);
        assert_eq!(merged.count(1), BigInt::from(3));
        let json = serde_json::to_string(&merged).unwrap();
        let back: PhaseHistogram = serde_json::from_str(&json).unwrap();
        assert_eq!(back, merged);
    }

    #[test]
    fn json_layout() {
        let h = hist(3, 1, &[(0, 1), (1, 2)], q(1, 3));
        let json = serde_json::to_string(&h).unwrap();
        assert_eq!(json, r#"{"p":3,"M":1,"scale":"1/3","counts":{"0":1,"1":2}}"#);
    }

    #[test]
    fn merge_with_different_scales() {
        let a = hist(3, 1, &[(1, 1)], q(1, 3));
        let b = hist(3, 2, &[(3, 1)], q(1, 9));
        // (1/3 + 1/9) zeta_3
        let sum = a.add(&b).reduce();
        assert_eq!(sum, hist(3, 1, &[(1, 1)], q(4, 9)));
        assert!(a.sub(&a).is_zero());
    }

    #[test]
    fn exact_norm_squared() {
        // Quadratic Gauss sum mod 9, normalized: |E|^2 = 1/9.
        let mut h = PhaseHistogram::new(3, 2, q(1, 9));
        for x in 0..9u64 {
            h.accumulate_index(x * x % 9, &BigInt::one());
        }
        assert_eq!(h.norm_squared(1000).unwrap().as_rational(), Some(q(1, 9)));
        let z = hist(3, 1, &[(1, 1)], q(-2, 5));
        assert_eq!(z.norm_squared(10).unwrap().as_rational(), Some(q(4, 25)));
        assert_eq!(PhaseHistogram::zero(3).norm_squared(1).unwrap().as_rational(), Some(q(0, 1)));
        assert!(hist(3, 1, &[(1, 1)], q(1, 1)).as_rational().is_none());
    }

    #[test]
    fn reduce_is_sign_canonical() {
        // zeta + zeta^2 = -1 for p = 3.
        let pair = hist(3, 1, &[(1, 1), (2, 1)], q(1, 3));
        assert_eq!(pair.reduce(), PhaseHistogram::constant(3, q(-1, 3)));
        let neg = hist(3, 2, &[(1, 2)], q(-1, 5));
        let pos = hist(3, 2, &[(4, 1), (7, 1)], q(2, 5));
        assert_eq!(neg.reduce(), pos.reduce());
    }

    fn arb_hist(p: u64) -> impl Strategy<Value = PhaseHistogram> {
        let slots = p.pow(2);
        (
            prop::collection::vec((0..slots, -4i64..5), 0..12),
            -19i64..20,
            1i64..20,
        )
            .prop_filter("nonzero scale", |(_, a, _)| *a != 0)
            .prop_map(move |(counts, a, b)| hist(p, 2, &counts, q(a, b)))
    }

    proptest! {
        #[test]
        fn equal_values_reduce_identically(a in arb_hist(3), b in arb_hist(3)) {
            let diff = a.sub(&b);
            prop_assert_eq!(diff.is_zero(), a.reduce() == b.reduce());
            prop_assert_eq!(a.add(&b).sub(&b).reduce(), a.reduce());
        }

        #[test]
        fn reduce_is_idempotent_and_value_preserving(h in arb_hist(3)) {
            let r = h.reduce();
            prop_assert_eq!(r.reduce(), r.clone());
            let m1 = h.magnitude();
            let (re, im) = h.to_complex();
            let direct = re.hypot(im);
            prop_assert!((m1.value - direct).abs() <= m1.error + h.abs_weight() * 1e-13);
            if r.is_zero() {
                prop_assert!(direct <= h.abs_weight() * 1e-13 + 1e-300);
            }
        }

        #[test]
        fn accumulation_order_is_irrelevant(
            phases in prop::collection::vec((0u64..25, 0u32..3, -3i64..4), 1..20),
            seed in any::<u64>(),
        ) {
            let p = 5;
            let ops: Vec<(PhaseFraction, BigInt)> = phases
                .iter()
                .map(|&(u, lvl, w)| (PhaseFraction::new(u, lvl, p), BigInt::from(w)))
                .collect();
            let mut a = PhaseHistogram::new(p, 0, q(1, 1));
            for (ph, w) in &ops {
                a.accumulate(*ph, w);
            }
            let mut shuffled = ops.clone();
            let len = shuffled.len();
            let mut s = seed;
            for i in (1..len).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (s >> 33) as usize % (i + 1));
            }
            let mut b = PhaseHistogram::new(p, 0, q(1, 1));
            for (ph, w) in &shuffled {
                b.accumulate(*ph, w);
            }
            prop_assert_eq!(a.reduce(), b.reduce());
        }

        #[test]
        fn json_round_trip(h in arb_hist(2)) {
            let back: PhaseHistogram = serde_json::from_str(&serde_json::to_string(&h).unwrap()).unwrap();
            prop_assert_eq!(back, h);
        }
    }
}
