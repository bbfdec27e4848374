//! Decay of `sup_{|y| = p^m} |E_{phi,f}(y)|` in the level `m`.
//!
//! [`sup_at_level`] maximizes over primitive directions `y = u / p^m`
//! (`gcd(u_1, .., u_r, p) = 1`), [`fit_alpha`] fits the exponent of
//! `sup ~ c p^(alpha m)`, and [`degree_bound_report`] compares the data with
//! `|E(y)| <= c (-v(y))^(n-1) |y|^(-1/d(f))`.

use std::collections::BTreeSet;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expsum::PreparedIntegrand;
use crate::padic::{rational_string, PrimeContext, Valuation};
use crate::polymap::{check_affine_independence, PolyMap, SchwartzBruhat};

/// Default slack on the exponent comparison.
pub const DEFAULT_EPSILON: f64 = 0.1;

/// Largest reduced histogram for which `|E|^2` is computed exactly at the argmax.
const EXACT_SQUARE_TERMS: usize = 1 << 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Strategy {
    Exhaustive,
    /// `count` distinct primitive directions drawn uniformly with a seeded ChaCha8 stream.
    Sample { count: u64, seed: u64 },
}

impl Strategy {
    /// Parses `exhaustive` or `sample:N`.
    pub fn parse(text: &str, seed: u64) -> std::result::Result<Self, String> {
        match text.trim() {
            "exhaustive" => Ok(Strategy::Exhaustive),
            other => {
                let count = other
                    .strip_prefix("sample:")
                    .and_then(|c| c.parse::<u64>().ok())
                    .filter(|&c| c > 0)
                    .ok_or_else(|| format!("invalid strategy {other:?}; expected exhaustive or sample:N"))?;
                Ok(Strategy::Sample { count, seed })
            }
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Exhaustive => write!(f, "exhaustive"),
            Strategy::Sample { count, .. } => write!(f, "sample:{count}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRecord {
    pub level: u32,
    pub sup_magnitude: f64,
    pub sup_error: f64,
    /// Lexicographically smallest direction whose magnitude is within error of the max.
    pub argmax: Vec<u64>,
    pub exhaustive: bool,
    /// Every evaluated direction gave exactly zero.
    pub exact_zero: bool,
    pub directions: u64,
    /// `|E(argmax / p^m)|^2` when it is rational.
    #[serde(with = "rational_string::option")]
    pub sup_squared: Option<BigRational>,
}

struct DirectionValue {
    index: u64,
    value: f64,
    error: f64,
    zero: bool,
}

fn decode(index: u64, modulus: u64, r: usize) -> Vec<u64> {
    let mut u = vec![0u64; r];
    let mut rest = index;
    for slot in u.iter_mut().rev() {
        *slot = rest % modulus;
        rest /= modulus;
    }
    u
}

fn is_primitive(index: u64, modulus: u64, r: usize, p: u64) -> bool {
    decode(index, modulus, r).iter().any(|u| u % p != 0)
}

/// Maximizes `|E(u / p^m)|` over primitive `u mod p^m`.
pub fn sup_at_level(
    f: &PolyMap,
    phi: &SchwartzBruhat,
    m: u32,
    strategy: Strategy,
    ctx: &PrimeContext,
) -> Result<DecayRecord> {
    if m == 0 {
        return Err(Error::InvalidRange("decay levels start at 1".into()));
    }
    let p = ctx.p();
    let r = f.r();
    let modulus = ctx.modulus_or_err(m)?;
    let total = (modulus as u128).checked_pow(r as u32).unwrap_or(u128::MAX);
    let primitive_total = total - (total / (p as u128).pow(r as u32));
    let indices: Vec<u64> = match strategy {
        Strategy::Exhaustive => {
            if total > ctx.naive_budget() as u128 {
                return Err(Error::BudgetExceeded {
                    required: total,
                    available: ctx.naive_budget(),
                });
            }
            (0..total as u64).filter(|&i| is_primitive(i, modulus, r, p)).collect()
        }
        Strategy::Sample { count, seed } => {
            if count as u128 >= primitive_total && total <= ctx.naive_budget() as u128 {
                (0..total as u64).filter(|&i| is_primitive(i, modulus, r, p)).collect()
            } else {
                let total = u64::try_from(total).map_err(|_| Error::PrecisionOverflow {
                    p,
                    exponent: m * r as u32,
                })?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(m as u64);
                let want = (count as u128).min(primitive_total) as usize;
                let mut chosen = BTreeSet::new();
                while chosen.len() < want {
                    let i = rng.random_range(0..total);
                    if is_primitive(i, modulus, r, p) {
                        chosen.insert(i);
                    }
                }
                chosen.into_iter().collect()
            }
        }
    };
    let exhaustive = indices.len() as u128 == primitive_total;
    let prepared = PreparedIntegrand::new(f, phi, ctx)?;
    let y_of = |index: u64| -> Vec<BigRational> {
        decode(index, modulus, r)
            .into_iter()
            .map(|u| BigRational::from_integer(BigInt::from(u)) * ctx.power(-(m as i64)))
            .collect()
    };
    let values = indices
        .par_iter()
        .map(|&index| {
            let h = prepared.eval_recursive(&y_of(index))?.histogram;
            let mag = h.magnitude();
            Ok(DirectionValue {
                index,
                value: mag.value,
                error: mag.error,
                zero: mag.exact_zero,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let top = values
        .iter()
        .fold(None::<&DirectionValue>, |best, v| match best {
            Some(b) if b.value >= v.value => Some(b),
            _ => Some(v),
        })
        .expect("at least one primitive direction");
    let chosen = values
        .iter()
        .find(|v| v.value + v.error + top.error >= top.value)
        .expect("the maximum itself qualifies");
    let exact_zero = values.iter().all(|v| v.zero);
    let sup_squared = if exact_zero {
        Some(BigRational::zero())
    } else {
        prepared
            .eval_recursive(&y_of(chosen.index))?
            .histogram
            .norm_squared(EXACT_SQUARE_TERMS)
            .and_then(|h| h.as_rational())
    };
    Ok(DecayRecord {
        level: m,
        sup_magnitude: if exact_zero { 0.0 } else { top.value },
        sup_error: if exact_zero { 0.0 } else { top.error },
        argmax: decode(chosen.index, modulus, r),
        exhaustive,
        exact_zero,
        directions: values.len() as u64,
        sup_squared,
    })
}

/// `sup_at_level` for every `m` in `m0..=m1`.
pub fn sweep(
    f: &PolyMap,
    phi: &SchwartzBruhat,
    m0: u32,
    m1: u32,
    strategy: Strategy,
    ctx: &PrimeContext,
) -> Result<Vec<DecayRecord>> {
    if m0 == 0 || m0 > m1 {
        return Err(Error::InvalidRange(format!("levels {m0}..{m1}")));
    }
    if strategy == Strategy::Exhaustive {
        // Fail before any work if the top level cannot be enumerated.
        let total = ctx
            .modulus(m1)
            .and_then(|q| (q as u128).checked_pow(f.r() as u32))
            .unwrap_or(u128::MAX);
        if total > ctx.naive_budget() as u128 {
            return Err(Error::BudgetExceeded {
                required: total,
                available: ctx.naive_budget(),
            });
        }
    }
    (m0..=m1).map(|m| sup_at_level(f, phi, m, strategy, ctx)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Least-squares slope of `log_p(sup)` against `m`.
    pub alpha_hat: f64,
    pub intercept: f64,
    /// Euclidean norm of the fit residuals.
    pub residual: f64,
    pub window: (u32, u32),
    pub points: usize,
    pub d_f: u32,
    /// `-1/d(f)`; absent for constant maps.
    pub bound_exponent: Option<f64>,
    /// `max_m sup_m p^(m/d(f)) / m^(n-1)` over the window.
    pub c_hat: Option<f64>,
    pub c_hat_error: f64,
    /// `c_hat^2` exactly, when every level has a rational `sup^2` and `2m/d(f)` is integral.
    #[serde(with = "rational_string::option")]
    pub c_hat_squared_exact: Option<BigRational>,
    pub vanishing_levels: Vec<u32>,
    pub warnings: Vec<String>,
}

/// Fits `log_p sup = intercept + alpha m` over the records whose level lies in
/// `window` (all records when `None`). Exactly vanishing levels are excluded.
pub fn fit_alpha(
    records: &[DecayRecord],
    window: Option<(u32, u32)>,
    f: &PolyMap,
    ctx: &PrimeContext,
) -> Result<FitResult> {
    let in_window: Vec<&DecayRecord> = records
        .iter()
        .filter(|r| window.is_none_or(|(a, b)| (a..=b).contains(&r.level)))
        .collect();
    let vanishing_levels: Vec<u32> = in_window.iter().filter(|r| r.exact_zero).map(|r| r.level).collect();
    let usable: Vec<&&DecayRecord> = in_window.iter().filter(|r| !r.exact_zero && r.sup_magnitude > 0.0).collect();
    if usable.is_empty() && !vanishing_levels.is_empty() {
        return Err(Error::ExactVanishing);
    }
    if usable.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} nonvanishing level(s) in the window, need 2",
            usable.len()
        )));
    }
    let window = window.unwrap_or_else(|| {
        let lo = in_window.iter().map(|r| r.level).min().unwrap_or(0);
        let hi = in_window.iter().map(|r| r.level).max().unwrap_or(0);
        (lo, hi)
    });

    let p = ctx.p() as f64;
    let xs: Vec<f64> = usable.iter().map(|r| r.level as f64).collect();
    let ys: Vec<f64> = usable.iter().map(|r| r.sup_magnitude.ln() / p.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("the usable records share a single level".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let alpha_hat = sxy / sxx;
    let intercept = my - alpha_hat * mx;
    let residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - alpha_hat * x).powi(2))
        .sum::<f64>()
        .sqrt();

    let n = f.n() as u32;
    let d_f = f.degree_data(ctx).d_max;
    let mut warnings = Vec::new();
    if !check_affine_independence(f) {
        warnings.push("1, f_1, ..., f_r are linearly dependent: the degree bound is not claimed".into());
    }
    let (bound_exponent, c_hat, c_hat_error, c_hat_squared_exact) = if d_f == 0 {
        warnings.push("f is constant: no degree bound applies".into());
        (None, None, 0.0, None)
    } else {
        let factor = |m: u32| p.powf(m as f64 / d_f as f64) / (m as f64).powi(n as i32 - 1);
        let c_hat = in_window
            .iter()
            .map(|r| r.sup_magnitude * factor(r.level))
            .fold(0.0, f64::max);
        let c_hat_error = in_window
            .iter()
            .map(|r| r.sup_error * factor(r.level))
            .fold(0.0, f64::max);
        (
            Some(-1.0 / d_f as f64),
            Some(c_hat),
            c_hat_error,
            exact_c_hat_squared(&in_window, d_f, n, ctx),
        )
    };
    Ok(FitResult {
        alpha_hat,
        intercept,
        residual,
        window,
        points: usable.len(),
        d_f,
        bound_exponent,
        c_hat,
        c_hat_error,
        c_hat_squared_exact,
        vanishing_levels,
        warnings,
    })
}

/// `max_m sup_m^2 p^(2m/d) / m^(2(n-1))` in exact arithmetic, if available.
fn exact_c_hat_squared(records: &[&DecayRecord], d_f: u32, n: u32, ctx: &PrimeContext) -> Option<BigRational> {
    let mut best: Option<BigRational> = None;
    for r in records {
        if (2 * r.level) % d_f != 0 {
            return None;
        }
        let sq = r.sup_squared.as_ref()?;
        let m_pow = BigRational::from_integer(BigInt::from(r.level).pow(2 * (n - 1)));
        let ratio = sq * ctx.power((2 * r.level / d_f) as i64) / m_pow;
        if best.as_ref().is_none_or(|b| ratio > *b) {
            best = Some(ratio);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    /// `alpha_hat <= -1/d(f) + epsilon`.
    Consistent,
    Inconsistent,
    /// Every sup vanished exactly; the bound holds trivially.
    Vacuous,
    /// No fit or no bound to compare with.
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Verdict::Consistent => "CONSISTENT",
            Verdict::Inconsistent => "INCONSISTENT",
            Verdict::Vacuous => "VACUOUS",
            Verdict::Inconclusive => "INCONCLUSIVE",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRatio {
    pub level: u32,
    pub sup: f64,
    /// `sup p^(m/d(f)) / m^(n-1)`.
    pub ratio: f64,
    pub running_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeBoundReport {
    pub map: String,
    pub phi: String,
    pub hypothesis_holds: bool,
    pub banner: Option<String>,
    pub d_f: u32,
    /// `e(f_i)`: minimal valuation of the nonconstant coefficients; `None` for constant components.
    pub e_orders: Vec<Option<i64>>,
    pub bound_exponent: Option<f64>,
    pub epsilon: f64,
    pub ratios: Vec<LevelRatio>,
    pub c_hat: Option<f64>,
    #[serde(with = "rational_string::option")]
    pub c_hat_squared_exact: Option<BigRational>,
    pub alpha_hat: Option<f64>,
    pub verdict: Verdict,
    /// True when every level satisfies `sup <= c_hat m^(n-1) p^(-m/d(f))`; holds by construction of `c_hat`.
    pub bound_holds_with_c_hat: bool,
    pub notes: Vec<String>,
    pub fit: Option<FitResult>,
}

/// Compares the records with `c (-v(y))^(n-1) |y|^(-1/d(f))`. Degenerate inputs
/// produce banners and notes, never errors.
pub fn degree_bound_report(
    f: &PolyMap,
    phi: &SchwartzBruhat,
    records: &[DecayRecord],
    epsilon: f64,
    ctx: &PrimeContext,
) -> DegreeBoundReport {
    let hypothesis_holds = check_affine_independence(f);
    let banner = (!hypothesis_holds).then(|| {
        "HYPOTHESIS FAILED: 1, f_1, ..., f_r are affinely dependent; the degree bound does not apply".to_string()
    });
    let degrees = f.degree_data(ctx);
    let d_f = degrees.d_max;
    let n = f.n() as i32;
    let p = ctx.p() as f64;
    let e_orders = degrees
        .e_orders
        .iter()
        .map(|v| match v {
            Valuation::Finite(v) => Some(*v),
            Valuation::Infinite => None,
        })
        .collect();

    let mut ratios = Vec::new();
    let mut running = 0.0f64;
    if d_f > 0 {
        for r in records {
            let ratio = r.sup_magnitude * p.powf(r.level as f64 / d_f as f64) / (r.level as f64).powi(n - 1);
            running = running.max(ratio);
            ratios.push(LevelRatio {
                level: r.level,
                sup: r.sup_magnitude,
                ratio,
                running_max: running,
            });
        }
    }
    let mut notes = Vec::new();
    let fit = fit_alpha(records, None, f, ctx);
    let (verdict, fit) = match fit {
        _ if records.is_empty() => {
            notes.push("no records".into());
            (Verdict::Inconclusive, None)
        }
        Err(Error::ExactVanishing) => {
            notes.push("every sup vanishes exactly; the bound holds with any constant".into());
            (Verdict::Vacuous, None)
        }
        Err(e) => {
            notes.push(format!("no fit: {e}"));
            (Verdict::Inconclusive, None)
        }
        Ok(fit) => match fit.bound_exponent {
            None => {
                notes.push("constant map: no exponent to compare with".into());
                (Verdict::Inconclusive, Some(fit))
            }
            Some(b) if fit.alpha_hat <= b + epsilon => (Verdict::Consistent, Some(fit)),
            Some(_) => (Verdict::Inconsistent, Some(fit)),
        },
    };
    if let Some(fit) = &fit {
        if !fit.vanishing_levels.is_empty() {
            notes.push(format!("levels {:?} vanish exactly and were excluded from the fit", fit.vanishing_levels));
        }
    }
    let c_hat = (d_f > 0 && !records.is_empty()).then_some(running);
    let bound_holds_with_c_hat = c_hat.is_some_and(|c| ratios.iter().all(|r| r.ratio <= c));
    DegreeBoundReport {
        map: f.to_string(),
        phi: phi.to_string(),
        hypothesis_holds,
        banner,
        d_f,
        e_orders,
        bound_exponent: (d_f > 0).then(|| -1.0 / d_f as f64),
        epsilon,
        ratios,
        c_hat,
        c_hat_squared_exact: fit.as_ref().and_then(|f| f.c_hat_squared_exact.clone()),
        alpha_hat: fit.as_ref().map(|f| f.alpha_hat),
        verdict,
        bound_holds_with_c_hat,
        notes,
        fit,
    }
}

/// `c_hat` as a float from its exact square.
pub fn exact_c_hat(report: &DegreeBoundReport) -> Option<f64> {
    report.c_hat_squared_exact.as_ref().and_then(|s| s.to_f64()).map(f64::sqrt)
}
