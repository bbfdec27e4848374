//! Exact evaluation of `E_{phi,f}(y) = \int phi(x) psi(y . f(x)) |dx|`.
//!
//! Each Schwartz-Bruhat ball `a + p^k Z_p^n` is pulled back to `Z_p^n` by
//! `x = a + p^k t`. On the unit ball, `g(t) = y . f(a + p^k t)` has coefficients of
//! valuation at least `-L`, so `psi(g(t))` only depends on `t mod p^L` and the
//! integral is the normalized finite sum
//! `p^(-L n) sum_{t mod p^L} exp(2 pi i G(t) / p^L)` with `G = p^L g`.
//!
//! [`eval_naive`] enumerates that sum. [`eval_recursive`] refines balls
//! `b + p^k Z_p^n` and stops early when the phase is provably constant on a ball
//! (P1) or the ball contributes a complete nontrivial character sum (P2).

use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::PhaseHistogram;
use crate::modpoly::ModPoly;
use crate::padic::{PAdicRational, PrimeContext, Valuation};
use crate::polymap::series::truncate_all;
use crate::polymap::{shift_substitute, PolyMap, Polynomial, RestrictedSeries, SchwartzBruhat};

/// Above this many phase classes the brute-force workers count into hash maps.
const DENSE_PHASE_LIMIT: u64 = 1 << 22;

#[derive(Debug, Clone)]
pub struct EvalRequest {
    f: PolyMap,
    phi: SchwartzBruhat,
    y: Vec<PAdicRational>,
    ctx: PrimeContext,
}

impl EvalRequest {
    pub fn new(f: PolyMap, phi: SchwartzBruhat, y: Vec<BigRational>, ctx: PrimeContext) -> Result<Self> {
        if y.len() != f.r() {
            return Err(Error::DimensionMismatch {
                expected: f.r(),
                got: y.len(),
            });
        }
        if phi.n() != f.n() {
            return Err(Error::DimensionMismatch {
                expected: f.n(),
                got: phi.n(),
            });
        }
        let y = y.into_iter().map(|v| PAdicRational::new(v, &ctx)).collect();
        Ok(Self { f, phi, y, ctx })
    }

    /// Request with the trivial weight `1_{Z_p^n}`.
    pub fn trivial(f: PolyMap, y: Vec<BigRational>, ctx: PrimeContext) -> Result<Self> {
        let phi = SchwartzBruhat::trivial(f.n());
        Self::new(f, phi, y, ctx)
    }

    pub fn f(&self) -> &PolyMap {
        &self.f
    }

    pub fn phi(&self) -> &SchwartzBruhat {
        &self.phi
    }

    pub fn y(&self) -> &[PAdicRational] {
        &self.y
    }

    pub fn ctx(&self) -> &PrimeContext {
        &self.ctx
    }

    /// `m = max(0, max_j -v(y_j))`, so that `|y| = p^m` when `m > 0`.
    pub fn level(&self) -> u32 {
        self.y.iter().map(PAdicRational::level).max().unwrap_or(0)
    }

    /// `B`, the coefficient denominator exponent of `f`.
    pub fn valuation_bound(&self) -> u32 {
        self.f.valuation_bound(&self.ctx)
    }

    /// `m + B`: an upper bound for the modulus exponent used on the unit ball.
    pub fn effective_level(&self) -> u32 {
        self.level() + self.valuation_bound()
    }

    fn y_values(&self) -> Vec<BigRational> {
        self.y.iter().map(|v| v.value().clone()).collect()
    }
}

/// Counters of the recursive evaluator. `leaves = p1 + p2`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruningStats {
    pub p1: u64,
    pub p2: u64,
    pub splits: u64,
    pub leaves: u64,
}

impl PruningStats {
    fn absorb(&mut self, other: &PruningStats) {
        self.p1 += other.p1;
        self.p2 += other.p2;
        self.splits += other.splits;
        self.leaves += other.leaves;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evaluation {
    /// Reduced (canonical) value.
    pub histogram: PhaseHistogram,
    pub stats: PruningStats,
}

/// One Schwartz-Bruhat ball pulled back to the unit ball.
#[derive(Debug, Clone)]
struct PulledBall {
    /// `w p^(-k n)`.
    weight: BigRational,
    /// `f_j(a + p^k t)`.
    components: Vec<Polynomial>,
}

/// `f` and `phi` with the ball substitutions done once, so many `y` can be
/// evaluated cheaply.
#[derive(Debug, Clone)]
pub struct PreparedIntegrand {
    n: usize,
    r: usize,
    balls: Vec<PulledBall>,
    ctx: PrimeContext,
}

/// The phase polynomial `G = p^L g` of one ball for one `y`.
struct BallPhase {
    weight: BigRational,
    level: u32,
    poly: ModPoly,
}

impl PreparedIntegrand {
    pub fn new(f: &PolyMap, phi: &SchwartzBruhat, ctx: &PrimeContext) -> Result<Self> {
        if phi.n() != f.n() {
            return Err(Error::DimensionMismatch {
                expected: f.n(),
                got: phi.n(),
            });
        }
        let n = f.n();
        let balls = phi
            .terms()
            .iter()
            .map(|t| PulledBall {
                weight: &t.weight * ctx.power(-t.radius_exp * n as i64),
                components: f
                    .components()
                    .iter()
                    .map(|c| shift_substitute(c, &t.center, t.radius_exp, ctx))
                    .collect(),
            })
            .collect();
        Ok(Self {
            n,
            r: f.r(),
            balls,
            ctx: ctx.clone(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.r
    }

    fn phases(&self, y: &[BigRational]) -> Result<Vec<BallPhase>> {
        if y.len() != self.r {
            return Err(Error::DimensionMismatch {
                expected: self.r,
                got: y.len(),
            });
        }
        self.balls
            .iter()
            .map(|ball| {
                let mut g = Polynomial::zero(self.n);
                for (yj, cj) in y.iter().zip(&ball.components) {
                    if !yj.is_zero() {
                        g = g.add(&cj.scale(yj));
                    }
                }
                let level = match g.min_valuation(&self.ctx) {
                    Valuation::Finite(v) if v < 0 => (-v) as u32,
                    _ => 0,
                };
                let modulus = self.ctx.modulus_or_err(level)?;
                let poly = ModPoly::from_polynomial(&g, &self.ctx.power(level as i64), modulus)
                    .expect("p^L g has p-integral coefficients");
                Ok(BallPhase {
                    weight: ball.weight.clone(),
                    level,
                    poly,
                })
            })
            .collect()
    }

    /// Brute-force evaluation; fails if some ball needs more than
    /// `naive_budget` points.
    pub fn eval_naive(&self, y: &[BigRational]) -> Result<PhaseHistogram> {
        let p = self.ctx.p();
        let phases = self.phases(y)?;
        for bp in &phases {
            let required = (bp.poly.modulus() as u128).checked_pow(self.n as u32).unwrap_or(u128::MAX);
            if required > self.ctx.naive_budget() as u128 {
                return Err(Error::BudgetExceeded {
                    required,
                    available: self.ctx.naive_budget(),
                });
            }
        }
        let mut total = PhaseHistogram::zero(p);
        for bp in phases {
            let counts = enumerate_phases(&bp.poly);
            let scale = bp.weight * self.ctx.power(-(bp.level as i64) * self.n as i64);
            let h = PhaseHistogram::from_counts(
                p,
                bp.level,
                counts.into_iter().map(|(k, c)| (k, BigInt::from(c))),
                scale,
            );
            total.merge(&h);
        }
        Ok(total.reduce())
    }

    /// Pruned ball-splitting evaluation; always exact.
    pub fn eval_recursive(&self, y: &[BigRational]) -> Result<Evaluation> {
        let p = self.ctx.p();
        let mut total = PhaseHistogram::zero(p);
        let mut stats = PruningStats::default();
        for bp in self.phases(y)? {
            let (h, s) = descend_ball(&bp, p, self.n);
            total.merge(&h);
            stats.absorb(&s);
        }
        Ok(Evaluation {
            histogram: total.reduce(),
            stats,
        })
    }
}

/// Phase counts of `poly` over `(Z / modulus)^n`; the first digit layer is split
/// across workers and merged by integer addition.
fn enumerate_phases(poly: &ModPoly) -> Vec<(u64, u64)> {
    let modulus = poly.modulus();
    if modulus <= DENSE_PHASE_LIMIT {
        let dense = (0..modulus)
            .into_par_iter()
            .fold(
                || vec![0u64; modulus as usize],
                |mut acc, x| {
                    poly.partial_eval_first(x)
                        .for_each_value(modulus, &mut |v| acc[v as usize] += 1);
                    acc
                },
            )
            .reduce(
                || vec![0u64; modulus as usize],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += y;
                    }
                    a
                },
            );
        dense
            .into_iter()
            .enumerate()
            .filter(|(_, c)| *c > 0)
            .map(|(k, c)| (k as u64, c))
            .collect()
    } else {
        let sparse = (0..modulus)
            .into_par_iter()
            .fold(HashMap::new, |mut acc: HashMap<u64, u64>, x| {
                poly.partial_eval_first(x)
                    .for_each_value(modulus, &mut |v| *acc.entry(v).or_insert(0) += 1);
                acc
            })
            .reduce(HashMap::new, merge_counts);
        let mut out: Vec<(u64, u64)> = sparse.into_iter().collect();
        out.sort_unstable();
        out
    }
}

fn merge_counts(mut a: HashMap<u64, u64>, b: HashMap<u64, u64>) -> HashMap<u64, u64> {
    for (k, v) in b {
        *a.entry(k).or_insert(0) += v;
    }
    a
}

/// Leaf counts per depth: `by_depth[k][phase]` counts P1 balls of measure `p^(-k n)`.
#[derive(Default)]
struct DepthAccumulator {
    by_depth: Vec<HashMap<u64, u64>>,
    stats: PruningStats,
}

impl DepthAccumulator {
    fn leaf(&mut self, depth: usize, phase: u64) {
        if self.by_depth.len() <= depth {
            self.by_depth.resize_with(depth + 1, HashMap::new);
        }
        *self.by_depth[depth].entry(phase).or_insert(0) += 1;
    }

    fn merge(mut self, other: DepthAccumulator) -> DepthAccumulator {
        if self.by_depth.len() < other.by_depth.len() {
            self.by_depth.resize_with(other.by_depth.len(), HashMap::new);
        }
        for (mine, theirs) in self.by_depth.iter_mut().zip(other.by_depth) {
            for (k, v) in theirs {
                *mine.entry(k).or_insert(0) += v;
            }
        }
        self.stats.absorb(&other.stats);
        self
    }
}

pub(crate) fn digit_vectors(p: u64, n: usize) -> Vec<Vec<u64>> {
    let mut out = vec![Vec::with_capacity(n)];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|v| {
                (0..p).map(move |d| {
                    let mut w = v.clone();
                    w.push(d);
                    w
                })
            })
            .collect();
    }
    out
}

/// Applies P1/P2 to the ball whose phase polynomial is `h`, splitting otherwise.
fn visit(h: &ModPoly, depth: usize, p: u64, digits: &[Vec<u64>], acc: &mut DepthAccumulator) {
    if h.is_constant() {
        acc.stats.p1 += 1;
        acc.stats.leaves += 1;
        acc.leaf(depth, h.constant());
        return;
    }
    let (nonlinear_zero, linear_nonzero) = h.linear_shape();
    if nonlinear_zero && linear_nonzero {
        acc.stats.p2 += 1;
        acc.stats.leaves += 1;
        return;
    }
    acc.stats.splits += 1;
    for d in digits {
        visit(&h.shift(d, p), depth + 1, p, digits, acc);
    }
}

fn descend_ball(bp: &BallPhase, p: u64, n: usize) -> (PhaseHistogram, PruningStats) {
    let digits = digit_vectors(p, n);
    let root = &bp.poly;
    let mut acc = DepthAccumulator::default();
    let root_is_leaf = root.is_constant() || {
        let (nl, lin) = root.linear_shape();
        nl && lin
    };
    if root_is_leaf {
        visit(root, 0, p, &digits, &mut acc);
    } else {
        acc.stats.splits += 1;
        let children = digits
            .par_iter()
            .map(|d| {
                let mut local = DepthAccumulator::default();
                visit(&root.shift(d, p), 1, p, &digits, &mut local);
                local
            })
            .reduce(DepthAccumulator::default, DepthAccumulator::merge);
        acc = acc.merge(children);
    }

    let depth = acc.by_depth.len().saturating_sub(1);
    let p_n = BigInt::from(p).pow(n as u32);
    let mut counts: HashMap<u64, BigInt> = HashMap::new();
    for (k, layer) in acc.by_depth.iter().enumerate() {
        let factor = num_traits::pow(p_n.clone(), depth - k);
        for (&phase, &c) in layer {
            *counts.entry(phase).or_insert_with(BigInt::zero) += BigInt::from(c) * &factor;
        }
    }
    let scale = &bp.weight / BigRational::from_integer(num_traits::pow(p_n, depth));
    let h = PhaseHistogram::from_counts(p, bp.level, counts, scale);
    (h, acc.stats)
}

/// Brute-force evaluation of the finite sum.
pub fn eval_naive(req: &EvalRequest) -> Result<PhaseHistogram> {
    PreparedIntegrand::new(&req.f, &req.phi, &req.ctx)?.eval_naive(&req.y_values())
}

/// Ball-splitting evaluation; equal to [`eval_naive`] as reduced histograms.
pub fn eval_recursive(req: &EvalRequest) -> Result<Evaluation> {
    PreparedIntegrand::new(&req.f, &req.phi, &req.ctx)?.eval_recursive(&req.y_values())
}

/// Evaluates a tuple of restricted power series by truncating at level `m + B`.
pub fn eval_series(
    series: &[RestrictedSeries],
    phi: &SchwartzBruhat,
    y: &[BigRational],
    ctx: &PrimeContext,
) -> Result<Evaluation> {
    if series.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: series.len(),
            got: y.len(),
        });
    }
    let m = y
        .iter()
        .map(|v| PAdicRational::new(v.clone(), ctx).level())
        .max()
        .unwrap_or(0) as i64;
    let b = series.iter().map(|s| (-s.floor(0)).max(0)).max().unwrap_or(0);
    let f = truncate_all(series, m + b, ctx)?;
    let req = EvalRequest::new(f, phi.clone(), y.to_vec(), ctx.clone())?;
    eval_recursive(&req)
}

/// The value `1` as a histogram; handy for comparisons.
pub fn unit(p: u64) -> PhaseHistogram {
    PhaseHistogram::constant(p, BigRational::one())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polymap::parse_polymap;
    use crate::padic::parse_rational;
    use proptest::prelude::*;

    fn q(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    fn ctx(p: u64) -> PrimeContext {
        PrimeContext::with_prime(p).unwrap()
    }

    fn req(map: &str, n: usize, y: &[&str], p: u64) -> EvalRequest {
        let f = parse_polymap(map, n).unwrap();
        let y = y.iter().map(|s| parse_rational(s).unwrap()).collect();
        EvalRequest::trivial(f, y, ctx(p)).unwrap()
    }

    /// Independent oracle: `p^(-L n) sum_t exp(2 pi i {g(t)}_p)` evaluated in
    /// floating point from exact rational values.
    fn complex_oracle(r: &EvalRequest) -> (f64, f64) {
        let c = r.ctx();
        let g = r.f().pair(&r.y_values());
        let level = match g.min_valuation(c) {
            Valuation::Finite(v) if v < 0 => (-v) as u32,
            _ => 0,
        };
        let n = r.f().n();
        let side = c.p().pow(level);
        let total = side.pow(n as u32);
        let (mut re, mut im) = (0.0, 0.0);
        for idx in 0..total {
            let mut rest = idx;
            let point: Vec<BigRational> = (0..n)
                .map(|_| {
                    let v = rest % side;
                    rest /= side;
                    q(v as i64, 1)
                })
                .collect();
            let ph = c.fractional_part(&g.eval(&point));
            let theta = std::f64::consts::TAU * ph.numer as f64 / c.p().pow(ph.level) as f64;
            re += theta.cos();
            im += theta.sin();
        }
        (re / total as f64, im / total as f64)
    }

    #[test]
    fn quadratic_at_one_third() {
        let r = req("x1^2", 1, &["1/3"], 3);
        let h = eval_naive(&r).unwrap();
        assert_eq!(h.level(), 1);
        assert_eq!(h.scale(), &q(1, 3));
        assert_eq!(h.nonzero_counts(), vec![(0, 1.into()), (1, 2.into())]);
        let m = h.magnitude();
        assert!((m.value - 3f64.powf(-0.5)).abs() < 1e-12);
        let (re, im) = complex_oracle(&r);
        assert!((m.value - re.hypot(im)).abs() < 1e-12);
        assert_eq!(eval_recursive(&r).unwrap().histogram, h);
    }

    #[test]
    fn linear_sums_vanish() {
        for (y, p) in [("1/3", 3), ("2/9", 3), ("4/25", 5), ("1/8", 2)] {
            let r = req("x1", 1, &[y], p);
            assert!(eval_naive(&r).unwrap().is_zero());
            let e = eval_recursive(&r).unwrap();
            assert!(e.histogram.is_zero());
            assert_eq!(e.stats, PruningStats { p1: 0, p2: 1, splits: 0, leaves: 1 });
        }
    }

    #[test]
    fn integral_y_gives_one() {
        let r = req("x1^3 + 2*x1*x2; x2^2 - 7", 2, &["2", "-5/4"], 3);
        assert_eq!(eval_naive(&r).unwrap(), unit(3));
        assert_eq!(eval_recursive(&r).unwrap().histogram, unit(3));
    }

    #[test]
    fn quadratic_at_one_ninth_prunes_units() {
        let r = req("x1^2", 1, &["1/9"], 3);
        let naive = eval_naive(&r).unwrap();
        let rec = eval_recursive(&r).unwrap();
        assert_eq!(rec.histogram, naive);
        assert!((rec.histogram.magnitude().value - 1.0 / 3.0).abs() < 1e-12);
        // Root splits; the two unit balls are P2, the ball at 0 is P1.
        assert_eq!(rec.stats, PruningStats { p1: 1, p2: 2, splits: 1, leaves: 3 });
    }

    #[test]
    fn constant_map_is_a_pure_phase() {
        let r = req("5/3", 1, &["1/3"], 3);
        let e = eval_recursive(&r).unwrap();
        assert_eq!(e.stats.p1, 1);
        assert_eq!(e.stats.splits, 0);
        let expected = PhaseHistogram::monomial(3, ctx(3).fractional_part(&q(5, 9)), q(1, 1));
        assert_eq!(e.histogram, expected.reduce());
    }

    #[test]
    fn naive_budget_is_enforced() {
        let f = parse_polymap("x1^2 + x2^2", 2).unwrap();
        let r = EvalRequest::trivial(f, vec![q(1, 3u32.pow(5) as i64)], PrimeContext::new(3, 1000).unwrap()).unwrap();
        assert_eq!(
            eval_naive(&r).unwrap_err(),
            Error::BudgetExceeded { required: 3u128.pow(10), available: 1000 }
        );
        // The recursion has no budget.
        assert!(eval_recursive(&r).is_ok());
    }

    #[test]
    fn request_levels() {
        let r = req("1/9*x1 + x1^2", 1, &["1/27"], 3);
        assert_eq!((r.level(), r.valuation_bound(), r.effective_level()), (3, 2, 5));
    }

    #[test]
    fn series_examples() {
        let c = ctx(3);
        let geometric = RestrictedSeries::new(
            1,
            |e| BigRational::from_integer(num_traits::pow(BigInt::from(3), e[0] as usize)),
            |d| d as i64,
        );
        let phi = SchwartzBruhat::trivial(1);
        let e = eval_series(&[geometric], &phi, &[q(1, 3)], &c).unwrap();
        // Oracle: sum over x mod 3 of psi((1 + 3x)/3) / 3 = psi(1/3).
        let (mut re, mut im) = (0.0, 0.0);
        for x in 0..3i64 {
            let ph = c.fractional_part(&q(1 + 3 * x, 3));
            let t = std::f64::consts::TAU * ph.numer as f64 / 3f64.powi(ph.level as i32);
            re += t.cos() / 3.0;
            im += t.sin() / 3.0;
        }
        let (hre, him) = e.histogram.to_complex();
        assert!((hre - re).abs() < 1e-12 && (him - im).abs() < 1e-12);
        assert_eq!(e.histogram, PhaseHistogram::monomial(3, c.fractional_part(&q(1, 3)), q(1, 1)));

        let one = RestrictedSeries::new(
            1,
            |e| if e[0] == 0 { q(1, 1) } else { q(0, 1) },
            |d| if d == 0 { 0 } else { i64::MAX },
        );
        let y = q(2, 9);
        let e = eval_series(&[one], &phi, &[y.clone()], &c).unwrap();
        assert_eq!(e.histogram, PhaseHistogram::monomial(3, c.fractional_part(&y), q(1, 1)));

        let stuck = RestrictedSeries::new(1, |_| q(1, 1), |_| 0);
        assert!(matches!(
            eval_series(&[stuck], &phi, &[q(1, 3)], &c),
            Err(Error::FloorNeverReaches { .. })
        ));
    }

    #[test]
    fn schwartz_bruhat_balls() {
        let c = ctx(3);
        let f = parse_polymap("x1^2", 1).unwrap();
        // 1_{Z_3} = sum of the three balls d + 3 Z_3.
        let split = SchwartzBruhat::parse("0@1; 1@1; 2@1", 1).unwrap();
        let whole = SchwartzBruhat::trivial(1);
        for y in [q(1, 9), q(2, 27), q(5, 3)] {
            let a = eval_naive(&EvalRequest::new(f.clone(), split.clone(), vec![y.clone()], c.clone()).unwrap()).unwrap();
            let b = eval_naive(&EvalRequest::new(f.clone(), whole.clone(), vec![y.clone()], c.clone()).unwrap()).unwrap();
            assert_eq!(a, b);
        }
        // A ball larger than Z_3 and one with a rational center.
        let phi = SchwartzBruhat::parse("1/3@-1*2; 1/3@0*-1", 1).unwrap();
        let r = EvalRequest::new(f, phi, vec![q(1, 9)], c).unwrap();
        assert_eq!(eval_naive(&r).unwrap(), eval_recursive(&r).unwrap().histogram);
    }

    fn arb_map(n: usize) -> impl Strategy<Value = String> {
        let term = (prop::collection::vec(0u32..3, n), -4i64..5, prop::sample::select(vec![1i64, 3, 9]), prop::sample::select(vec![1i64, 3, 9]));
        prop::collection::vec(term, 1..5).prop_map(move |terms| {
            terms
                .into_iter()
                .map(|(e, a, num_scale, den)| {
                    let vars: Vec<String> = e.iter().enumerate().map(|(i, k)| format!("x{}^{}", i + 1, k)).collect();
                    format!("({}/{})*{}", a * num_scale, den, vars.join("*"))
                })
                .collect::<Vec<_>>()
                .join(" + ")
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn recursive_matches_naive(map in arb_map(2), u in 0i64..27, m in 0u32..3) {
            let y = q(u, 3i64.pow(m));
            let f = parse_polymap(&map, 2).unwrap();
            let r = EvalRequest::trivial(f, vec![y], ctx(3)).unwrap();
            let naive = eval_naive(&r).unwrap();
            prop_assert_eq!(&eval_recursive(&r).unwrap().histogram, &naive);
            let (re, im) = complex_oracle(&r);
            let (hre, him) = naive.to_complex();
            prop_assert!((re - hre).abs() < 1e-9 && (im - him).abs() < 1e-9);
        }

        #[test]
        fn translation_covariance(map in arb_map(1), cnum in -10i64..10, u in 1i64..25) {
            let c = ctx(5);
            let f = parse_polymap(&map, 1).unwrap();
            let shifted = PolyMap::new(1, vec![f.component(0).add(&Polynomial::constant(1, q(cnum, 5)))]).unwrap();
            let y = q(u, 25);
            let base = eval_recursive(&EvalRequest::trivial(f, vec![y.clone()], c.clone()).unwrap()).unwrap().histogram;
            let moved = eval_recursive(&EvalRequest::trivial(shifted, vec![y.clone()], c.clone()).unwrap()).unwrap().histogram;
            let phase = c.fractional_part(&(y * q(cnum, 5)));
            prop_assert_eq!(moved, base.rotated(phase).reduce());
        }

        #[test]
        fn linearity_in_phi_and_mass_bound(map in arb_map(1), w1 in -3i64..4, w2 in 1i64..4, a in 0i64..9, u in 1i64..27) {
            prop_assume!(w1 != 0);
            let c = ctx(3);
            let f = parse_polymap(&map, 1).unwrap();
            let phi1 = SchwartzBruhat::parse(&format!("{a}@1"), 1).unwrap();
            let phi2 = SchwartzBruhat::parse("0@0", 1).unwrap();
            let both = SchwartzBruhat::parse(&format!("{a}@1*{w1}; 0@0*{w2}"), 1).unwrap();
            let y = vec![q(u, 27)];
            let e = |phi: &SchwartzBruhat| eval_recursive(&EvalRequest::new(f.clone(), phi.clone(), y.clone(), c.clone()).unwrap()).unwrap().histogram;
            let lhs = e(&both);
            let rhs = e(&phi1).scaled(&q(w1, 1)).add(&e(&phi2).scaled(&q(w2, 1))).reduce();
            prop_assert_eq!(&lhs, &rhs);
            let mag = lhs.magnitude();
            let bound: f64 = num_traits::ToPrimitive::to_f64(&both.abs_mass_bound(&c)).unwrap();
            prop_assert!(mag.value <= bound + mag.error + 1e-12);
        }
    }
}
