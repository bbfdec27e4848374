//! Exact evaluation and decay analysis of p-adic exponential integrals
//!
//! ```text
//! E_{phi,f}(y) = \int_{Q_p^n} phi(x) psi(y . f(x)) |dx|
//! ```
//!
//! for polynomial maps `f: Z_p^n -> Q_p^r`, Schwartz-Bruhat weights `phi` and the
//! standard additive character `psi(x) = exp(2 pi i {x}_p)`.
//!
//! Values are computed exactly as sums of roots of unity ([`PhaseHistogram`]);
//! floating point only enters when a magnitude is reported.
//!
//! * [`padic`]: valuations, fractional parts, the prime context.
//! * [`histogram`]: the exact cyclotomic carrier.
//! * [`polymap`]: polynomial maps, degree data, restricted series, Schwartz-Bruhat functions.
//! * [`expsum`]: brute-force and pruned recursive evaluation.
//! * [`singular`]: fiber counts, level-`m` densities and the finite Fourier identity.
//! * [`decay`]: sup-norm sweeps, exponent fits and the degree bound report.

pub mod decay;
pub mod error;
pub mod expsum;
pub mod histogram;
mod modpoly;
pub mod padic;
pub mod polymap;
pub mod singular;

pub use decay::{
    degree_bound_report, fit_alpha, sup_at_level, sweep, DecayRecord, DegreeBoundReport, FitResult, Strategy, Verdict,
};
pub use error::{Error, Result};
pub use expsum::{eval_naive, eval_recursive, eval_series, EvalRequest, Evaluation, PreparedIntegrand, PruningStats};
pub use histogram::{Magnitude, PhaseHistogram};
pub use padic::{fractional_part, valuation, PAdicRational, PhaseFraction, PrimeContext, Valuation};
pub use polymap::{
    check_affine_independence, degree_data, eval_mod, parse_polymap, series_truncate, shift_substitute,
    DegreeData, PolyMap, Polynomial, RestrictedSeries, SchwartzBruhat,
};
pub use singular::{
    count_fiber, count_fibers, count_fibers_with, fourier_check, stabilization_probe, CountMethod, DensityTable,
    StabilizationReport,
};
