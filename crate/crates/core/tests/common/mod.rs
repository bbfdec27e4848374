//! Independent oracles and random instance generators for the acceptance suite.
//!
//! Nothing here calls the evaluators under test: maps are kept as plain term
//! lists and evaluated with BigInt arithmetic.

#![allow(dead_code)]

use std::f64::consts::PI;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use padic_expsum::{PolyMap, Polynomial};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Term = (Vec<u32>, BigRational);

#[derive(Debug, Clone)]
pub struct RawMap {
    pub n: usize,
    pub components: Vec<Vec<Term>>,
}

impl RawMap {
    pub fn to_polymap(&self) -> PolyMap {
        let comps = self
            .components
            .iter()
            .map(|terms| Polynomial::from_terms(self.n, terms.iter().cloned()))
            .collect();
        PolyMap::new(self.n, comps).unwrap()
    }

    pub fn r(&self) -> usize {
        self.components.len()
    }
}

pub fn q(a: i64, b: i64) -> BigRational {
    BigRational::new(a.into(), b.into())
}

pub fn vp_int(n: &BigInt, p: u64) -> u32 {
    let p = BigInt::from(p);
    let mut n = n.clone();
    let mut v = 0;
    while !n.is_zero() && (&n % &p).is_zero() {
        n /= &p;
        v += 1;
    }
    v
}

/// `v_p(x)`, `None` for zero.
pub fn vp(x: &BigRational, p: u64) -> Option<i64> {
    if x.is_zero() {
        return None;
    }
    Some(vp_int(x.numer(), p) as i64 - vp_int(x.denom(), p) as i64)
}

/// `{x}_p` as a float in `[0, 1)`.
pub fn frac_p(x: &BigRational, p: u64) -> f64 {
    let k = vp_int(x.denom(), p);
    if k == 0 {
        return 0.0;
    }
    let pk = BigInt::from(p).pow(k);
    let rest = x.denom() / &pk;
    // a / (p^k rest) = (a rest^-1 mod p^k) / p^k + integral part
    let inv = rest.extended_gcd(&pk).x.mod_floor(&pk);
    let num = (x.numer() * inv).mod_floor(&pk);
    num.to_f64().unwrap() / pk.to_f64().unwrap()
}

fn eval_terms(terms: &[Term], x: &[BigInt]) -> BigRational {
    let mut acc = BigRational::zero();
    for (e, c) in terms {
        let mut mono = BigInt::one();
        for (xi, &ei) in x.iter().zip(e) {
            mono *= xi.pow(ei);
        }
        acc += c * BigRational::from_integer(mono);
    }
    acc
}

pub fn eval_map(f: &RawMap, x: &[BigInt]) -> Vec<BigRational> {
    f.components.iter().map(|t| eval_terms(t, x)).collect()
}

fn for_each_residue(n: usize, modulus: u64, mut visit: impl FnMut(&[BigInt])) {
    let mut digits = vec![0u64; n];
    loop {
        let x: Vec<BigInt> = digits.iter().map(|&d| BigInt::from(d)).collect();
        visit(&x);
        let mut i = 0;
        loop {
            if i == n {
                return;
            }
            digits[i] += 1;
            if digits[i] < modulus {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

/// `\int_{Z_p^n} psi(y . f(x)) |dx|` by direct complex summation over `x mod p^K`,
/// where `K` clears every denominator of `y_j c` for every coefficient `c` of `f_j`.
pub fn direct_integral(f: &RawMap, y: &[BigRational], p: u64) -> (f64, f64) {
    let mut k = 0i64;
    for (yj, terms) in y.iter().zip(&f.components) {
        for (e, c) in terms {
            if e.iter().all(|&d| d == 0) {
                continue;
            }
            if let (Some(a), Some(b)) = (vp(yj, p), vp(c, p)) {
                k = k.max(-(a + b));
            }
        }
    }
    let modulus = p.pow(k as u32);
    let (mut re, mut im) = (0.0, 0.0);
    for_each_residue(f.n, modulus, |x| {
        let fx = eval_map(f, x);
        let mut phase = BigRational::zero();
        for (yj, v) in y.iter().zip(&fx) {
            phase += yj * v;
        }
        let t = 2.0 * PI * frac_p(&phase, p);
        re += t.cos();
        im += t.sin();
    });
    let vol = (modulus as f64).powi(f.n as i32);
    (re / vol, im / vol)
}

/// `#{x mod p^m : f(x) = z mod p^m}` for integral `f` and `z`.
pub fn brute_fiber(f: &RawMap, z: &[BigInt], m: u32, p: u64) -> u64 {
    let modulus = BigInt::from(p).pow(m);
    let mut count = 0;
    for_each_residue(f.n, p.pow(m), |x| {
        let hit = eval_map(f, x).iter().zip(z).all(|(v, zj)| {
            assert!(v.is_integer());
            (v.to_integer() - zj).mod_floor(&modulus).is_zero()
        });
        if hit {
            count += 1;
        }
    });
    count
}

/// Every `(f(x) mod p^m)` with multiplicity, keyed by the residue vector.
pub fn brute_table(f: &RawMap, m: u32, p: u64) -> std::collections::BTreeMap<Vec<u64>, u128> {
    let modulus = BigInt::from(p).pow(m);
    let mut out = std::collections::BTreeMap::new();
    for_each_residue(f.n, p.pow(m), |x| {
        let key: Vec<u64> = eval_map(f, x)
            .iter()
            .map(|v| v.to_integer().mod_floor(&modulus).to_u64().unwrap())
            .collect();
        *out.entry(key).or_insert(0) += 1;
    });
    out
}

/// `+-u p^v` with `u` a unit below `p^2`.
fn random_coefficient(rng: &mut ChaCha8Rng, p: u64, vmin: i64, vmax: i64) -> BigRational {
    let unit = loop {
        let u = rng.random_range(1..p * p);
        if u % p != 0 {
            break u as i64;
        }
    };
    let sign = if rng.random_bool(0.5) { 1 } else { -1 };
    let v = rng.random_range(vmin..=vmax);
    let pv = BigRational::from_integer(BigInt::from(p).pow(v.unsigned_abs() as u32));
    let c = BigRational::from_integer(BigInt::from(sign * unit));
    if v >= 0 { c * pv } else { c / pv }
}

fn random_exponents(rng: &mut ChaCha8Rng, n: usize, max_degree: u32) -> Vec<u32> {
    loop {
        let e: Vec<u32> = (0..n).map(|_| rng.random_range(0..=max_degree)).collect();
        let d: u32 = e.iter().sum();
        if (1..=max_degree).contains(&d) {
            return e;
        }
    }
}

/// Random map with `1..=3` nonconstant terms per component plus an optional constant.
pub fn random_map(rng: &mut ChaCha8Rng, p: u64, n: usize, r: usize, max_degree: u32, vals: (i64, i64)) -> RawMap {
    let components = (0..r)
        .map(|_| {
            let mut terms: Vec<Term> = (0..rng.random_range(1..=3))
                .map(|_| (random_exponents(rng, n, max_degree), random_coefficient(rng, p, vals.0, vals.1)))
                .collect();
            if rng.random_bool(0.3) {
                terms.push((vec![0; n], random_coefficient(rng, p, vals.0.max(0), vals.1)));
            }
            terms
        })
        .collect();
    RawMap { n, components }
}

/// `a / p^k` with `0 <= k <= max_level`, `|a| <= p^3`.
pub fn random_y(rng: &mut ChaCha8Rng, p: u64, r: usize, max_level: u32) -> Vec<BigRational> {
    let bound = p.pow(3) as i64;
    (0..r)
        .map(|_| {
            let k = rng.random_range(0..=max_level);
            let a = rng.random_range(-bound..=bound);
            BigRational::new(a.into(), BigInt::from(p).pow(k))
        })
        .collect()
}

pub fn abs2((re, im): (f64, f64)) -> f64 {
    re * re + im * im
}

