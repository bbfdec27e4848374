//! Text grammar for polynomial maps.
//!
//! ```text
//! map    := expr (';' expr)*
//! expr   := ['+'|'-'] term (('+'|'-') term)*
//! term   := factor ('*' factor)*
//! factor := atom ('^' nat)*
//! atom   := rational | var | '(' expr ')'
//! rational := int ['/' int]
//! var    := 'x' int          (1-based, at most n)
//! ```

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use thiserror::Error;

use super::{PolyMap, Polynomial};

/// Largest exponent accepted after `^`.
pub const MAX_EXPONENT: u32 = 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at position {position}")]
pub struct ParseError {
    pub position: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("unexpected character {0:?}")]
    UnexpectedChar(char),
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("expected {0}")]
    Expected(&'static str),
    #[error("unknown variable x{0}")]
    UnknownVariable(usize),
    #[error("exponent overflow (maximum {MAX_EXPONENT})")]
    ExponentOverflow,
    #[error("division by zero in literal")]
    ZeroDenominator,
    #[error("empty map")]
    Empty,
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    n: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, kind: ParseErrorKind) -> Result<T, ParseError> {
        Err(ParseError {
            position: self.pos,
            kind,
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn digits(&mut self) -> Option<&'a str> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        (self.pos > start).then(|| std::str::from_utf8(&self.src[start..self.pos]).expect("ascii"))
    }

    fn expr(&mut self) -> Result<Polynomial, ParseError> {
        let mut acc = Polynomial::zero(self.n);
        let mut sign = if self.eat(b'-') {
            -BigRational::one()
        } else {
            self.eat(b'+');
            BigRational::one()
        };
        loop {
            let t = self.term()?;
            acc = acc.add(&t.scale(&sign));
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    sign = BigRational::one();
                }
                Some(b'-') => {
                    self.pos += 1;
                    sign = -BigRational::one();
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Polynomial, ParseError> {
        let mut acc = self.factor()?;
        while self.eat(b'*') {
            acc = acc.mul(&self.factor()?);
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Polynomial, ParseError> {
        let mut base = self.atom()?;
        while self.eat(b'^') {
            let at = self.pos;
            let Some(d) = self.digits() else {
                return self.err(ParseErrorKind::Expected("exponent"));
            };
            let e: u32 = match d.parse() {
                Ok(e) if e <= MAX_EXPONENT => e,
                _ => {
                    return Err(ParseError {
                        position: at,
                        kind: ParseErrorKind::ExponentOverflow,
                    })
                }
            };
            base = base.pow(e);
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Polynomial, ParseError> {
        match self.peek() {
            None => self.err(ParseErrorKind::UnexpectedEnd),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return self.err(ParseErrorKind::Expected("')'"));
                }
                Ok(e)
            }
            Some(b'x') => {
                let at = self.pos;
                self.pos += 1;
                let Some(d) = self.digits() else {
                    return self.err(ParseErrorKind::Expected("variable index"));
                };
                let i: usize = d.parse().unwrap_or(usize::MAX);
                if i == 0 || i > self.n {
                    return Err(ParseError {
                        position: at,
                        kind: ParseErrorKind::UnknownVariable(i),
                    });
                }
                Ok(Polynomial::var(self.n, i - 1))
            }
            Some(c) if c.is_ascii_digit() => {
                let numer: BigInt = self.digits().expect("digit present").parse().expect("digits");
                let mut denom = BigInt::one();
                // '/' only appears inside rational literals.
                if self.eat(b'/') {
                    let at = self.pos;
                    let Some(d) = self.digits() else {
                        return self.err(ParseErrorKind::Expected("denominator"));
                    };
                    denom = d.parse().expect("digits");
                    if denom.is_zero() {
                        return Err(ParseError {
                            position: at,
                            kind: ParseErrorKind::ZeroDenominator,
                        });
                    }
                }
                Ok(Polynomial::constant(self.n, BigRational::new(numer, denom)))
            }
            Some(b'-') => {
                self.pos += 1;
                Ok(self.atom()?.scale(&-BigRational::one()))
            }
            Some(c) => self.err(ParseErrorKind::UnexpectedChar(c as char)),
        }
    }
}

/// Parses a single polynomial in `x1..xn`.
pub fn parse_polynomial(text: &str, n: usize) -> Result<Polynomial, ParseError> {
    let mut parser = Parser {
        src: text.as_bytes(),
        pos: 0,
        n,
    };
    let poly = parser.expr()?;
    match parser.peek() {
        None => Ok(poly),
        Some(c) => parser.err(ParseErrorKind::UnexpectedChar(c as char)),
    }
}

/// Parses a `;`-separated list of polynomials in `x1..xn`.
pub fn parse_polymap(text: &str, n: usize) -> Result<PolyMap, ParseError> {
    let mut parser = Parser {
        src: text.as_bytes(),
        pos: 0,
        n,
    };
    if parser.peek().is_none() {
        return parser.err(ParseErrorKind::Empty);
    }
    let mut components = vec![parser.expr()?];
    loop {
        match parser.peek() {
            None => break,
            Some(b';') => {
                parser.pos += 1;
                if parser.peek().is_none() {
                    // Trailing separator.
                    break;
                }
                components.push(parser.expr()?);
            }
            Some(c) => return parser.err(ParseErrorKind::UnexpectedChar(c as char)),
        }
    }
    Ok(PolyMap::new(n, components).expect("n >= 1 and components nonempty"))
}

/// Parses a map, taking `n` to be the largest variable index mentioned (at least 1).
pub fn parse_polymap_infer(text: &str) -> Result<PolyMap, ParseError> {
    let bytes = text.as_bytes();
    let mut n = 1;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'x' {
            let start = i + 1;
            let mut j = start;
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            if let Ok(idx) = text[start..j].parse::<usize>() {
                n = n.max(idx);
            }
            i = j;
        } else {
            i += 1;
        }
    }
    parse_polymap(text, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    #[test]
    fn parse_examples() {
        let f = parse_polymap("x1^2", 1).unwrap();
        assert_eq!(f.components(), &[Polynomial::from_terms(1, [(vec![2], q(1, 1))])]);

        let f = parse_polymap("x1^2*x2; x2^3", 2).unwrap();
        assert_eq!(f.r(), 2);
        assert_eq!(f.component(0), &Polynomial::from_terms(2, [(vec![2, 1], q(1, 1))]));
        assert_eq!(f.component(1), &Polynomial::from_terms(2, [(vec![0, 3], q(1, 1))]));

        let f = parse_polymap("x1 + 1/3", 1).unwrap();
        assert_eq!(
            f.component(0),
            &Polynomial::from_terms(1, [(vec![1], q(1, 1)), (vec![0], q(1, 3))])
        );
    }

    #[test]
    fn parse_structure() {
        let f = parse_polymap("-(x1 - 2)^2 + 3*x1", 1).unwrap();
        assert_eq!(
            f.component(0),
            &Polynomial::from_terms(1, [(vec![2], q(-1, 1)), (vec![1], q(7, 1)), (vec![0], q(-4, 1))])
        );
        assert_eq!(parse_polymap("x1*x1 - x1^2 + 1", 1).unwrap().component(0).to_string(), "1");
        assert_eq!(parse_polymap_infer("x3 + x1").unwrap().n(), 3);
    }

    #[test]
    fn parse_errors() {
        assert_eq!(
            parse_polymap("x1 + x3", 2).unwrap_err(),
            ParseError { position: 5, kind: ParseErrorKind::UnknownVariable(3) }
        );
        assert_eq!(parse_polymap("x1 ^ 99999", 1).unwrap_err().kind, ParseErrorKind::ExponentOverflow);
        assert_eq!(parse_polymap("x1 +", 1).unwrap_err().kind, ParseErrorKind::UnexpectedEnd);
        assert_eq!(parse_polymap("x1 $ 2", 1).unwrap_err().kind, ParseErrorKind::UnexpectedChar('$'));
        assert_eq!(parse_polymap("(x1", 1).unwrap_err().kind, ParseErrorKind::Expected("')'"));
        assert_eq!(parse_polymap("1/0", 1).unwrap_err().kind, ParseErrorKind::ZeroDenominator);
        assert_eq!(parse_polymap("  ", 1).unwrap_err().kind, ParseErrorKind::Empty);
    }

    #[test]
    fn display_round_trips() {
        let f = parse_polymap("3*x1^2*x2 - 1/3*x2 + 7; x1", 2).unwrap();
        let again = parse_polymap(&f.to_string(), 2).unwrap();
        assert_eq!(again, f);
    }
}
