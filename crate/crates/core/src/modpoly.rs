//! Dense multivariate polynomials over `Z / p^L`.
//!
//! This is the arithmetic kernel shared by the brute-force enumerators and the
//! ball-splitting recursions. A polynomial with p-integral rational coefficients
//! is mapped into `Z / p^L` once; after that everything is machine arithmetic.

use std::sync::Arc;

use num_rational::BigRational;

use crate::polymap::Polynomial;
use crate::padic::residue_mod;

#[inline]
pub(crate) fn mulmod(a: u64, b: u64, m: u64) -> u64 {
    if m <= 1 << 32 {
        (a * b) % m
    } else {
        ((a as u128 * b as u128) % m as u128) as u64
    }
}

#[inline]
pub(crate) fn addmod(a: u64, b: u64, m: u64) -> u64 {
    let s = a + b;
    if s >= m {
        s - m
    } else {
        s
    }
}

/// Shape of a dense coefficient array; shared between a polynomial and all of its shifts.
#[derive(Debug)]
struct Layout {
    dims: Vec<usize>,
    strides: Vec<usize>,
    total_degree: Vec<u32>,
    /// Layout of the polynomial left after evaluating the first variable.
    tail: Option<Arc<Layout>>,
}

impl Layout {
    fn new(dims: Vec<usize>) -> Arc<Self> {
        let n = dims.len();
        let mut strides = vec![1usize; n];
        for i in (0..n.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * dims[i + 1];
        }
        let size: usize = dims.iter().product();
        let total_degree = (0..size)
            .map(|idx| {
                (0..n)
                    .map(|i| ((idx / strides[i]) % dims[i]) as u32)
                    .sum()
            })
            .collect();
        let tail = (n > 0).then(|| Layout::new(dims[1..].to_vec()));
        Arc::new(Self {
            dims,
            strides,
            total_degree,
            tail,
        })
    }

    fn size(&self) -> usize {
        self.total_degree.len()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ModPoly {
    layout: Arc<Layout>,
    coeffs: Vec<u64>,
    modulus: u64,
}

impl ModPoly {
    /// Image of `lift * poly` in `Z / modulus`; `None` if some coefficient of
    /// `lift * poly` is not p-integral.
    pub(crate) fn from_polynomial(poly: &Polynomial, lift: &BigRational, modulus: u64) -> Option<Self> {
        let n = poly.n();
        let dims: Vec<usize> = (0..n).map(|i| poly.degree_in(i) as usize + 1).collect();
        let layout = Layout::new(dims);
        let mut coeffs = vec![0u64; layout.size()];
        for (m, c) in poly.terms() {
            let idx: usize = m
                .exponents()
                .iter()
                .zip(&layout.strides)
                .map(|(&e, &s)| e as usize * s)
                .sum();
            coeffs[idx] = residue_mod(&(c * lift), modulus)?;
        }
        Some(Self {
            layout,
            coeffs,
            modulus,
        })
    }

    pub(crate) fn modulus(&self) -> u64 {
        self.modulus
    }

    pub(crate) fn n(&self) -> usize {
        self.layout.dims.len()
    }

    pub(crate) fn constant(&self) -> u64 {
        self.coeffs[0]
    }

    /// Every coefficient of positive degree vanishes.
    pub(crate) fn is_constant(&self) -> bool {
        self.coeffs[1..].iter().all(|&c| c == 0)
    }

    /// `(nonlinear part vanishes, some linear coefficient is nonzero)`.
    pub(crate) fn linear_shape(&self) -> (bool, bool) {
        let mut nonlinear_zero = true;
        let mut linear_nonzero = false;
        for (c, &d) in self.coeffs.iter().zip(&self.layout.total_degree) {
            if *c == 0 {
                continue;
            }
            match d {
                0 => {}
                1 => linear_nonzero = true,
                _ => {
                    nonlinear_zero = false;
                    break;
                }
            }
        }
        (nonlinear_zero, linear_nonzero)
    }

    /// Minimum p-adic valuation of the positive-degree coefficients, capped at
    /// `cap` (zero coefficients count as `cap`).
    pub(crate) fn nonconstant_valuation(&self, p: u64, cap: u32) -> u32 {
        let mut best = cap;
        for &c in &self.coeffs[1..] {
            if c == 0 {
                continue;
            }
            let mut v = 0;
            let mut x = c;
            while x % p == 0 && v < best {
                x /= p;
                v += 1;
            }
            best = best.min(v);
            if best == 0 {
                break;
            }
        }
        best
    }

    /// `P(delta + step * s)` as a polynomial in `s`.
    pub(crate) fn shift(&self, delta: &[u64], step: u64) -> ModPoly {
        let m = self.modulus;
        let layout = &self.layout;
        let mut c = self.coeffs.clone();
        let mut line = Vec::new();
        for (axis, &dim) in layout.dims.iter().enumerate() {
            if dim <= 1 {
                continue;
            }
            let stride = layout.strides[axis];
            let block = dim * stride;
            let d = delta[axis] % m;
            let steps: Vec<u64> = std::iter::successors(Some(1 % m), |&s| Some(mulmod(s, step, m)))
                .take(dim)
                .collect();
            for outer in (0..c.len()).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    line.clear();
                    line.extend((0..dim).map(|j| c[base + j * stride]));
                    if d != 0 {
                        for i in 0..dim - 1 {
                            for j in (i..dim - 1).rev() {
                                line[j] = addmod(line[j], mulmod(d, line[j + 1], m), m);
                            }
                        }
                    }
                    for j in 0..dim {
                        c[base + j * stride] = mulmod(line[j], steps[j], m);
                    }
                }
            }
        }
        ModPoly {
            layout: Arc::clone(&self.layout),
            coeffs: c,
            modulus: m,
        }
    }

    /// Substitutes `x_1 = x`, leaving a polynomial in the remaining variables.
    pub(crate) fn partial_eval_first(&self, x: u64) -> ModPoly {
        let m = self.modulus;
        let tail = Arc::clone(self.layout.tail.as_ref().expect("at least one variable"));
        let dim = self.layout.dims[0];
        let stride = self.layout.strides[0];
        let x = x % m;
        let mut out = vec![0u64; stride];
        for j in (0..dim).rev() {
            let slab = &self.coeffs[j * stride..(j + 1) * stride];
            for (o, &s) in out.iter_mut().zip(slab) {
                *o = addmod(mulmod(*o, x, m), s, m);
            }
        }
        ModPoly {
            layout: tail,
            coeffs: out,
            modulus: m,
        }
    }

    /// Horner evaluation of a univariate polynomial.
    pub(crate) fn eval_univariate(&self, x: u64) -> u64 {
        debug_assert_eq!(self.n(), 1);
        let m = self.modulus;
        let x = x % m;
        self.coeffs.iter().rev().fold(0, |acc, &c| addmod(mulmod(acc, x, m), c, m))
    }

    #[cfg(test)]
    pub(crate) fn eval(&self, x: &[u64]) -> u64 {
        let mut cur = self.clone();
        for &xi in x {
            cur = cur.partial_eval_first(xi);
        }
        cur.constant()
    }

    /// Calls `visit(value)` for every point of `(Z / range)^n`, in lexicographic order.
    pub(crate) fn for_each_value(&self, range: u64, visit: &mut dyn FnMut(u64)) {
        match self.n() {
            0 => visit(self.constant()),
            1 => {
                for x in 0..range {
                    visit(self.eval_univariate(x));
                }
            }
            _ => {
                for x in 0..range {
                    self.partial_eval_first(x).for_each_value(range, visit);
                }
            }
        }
    }
}
