//! Text syntax for coefficients and fields, e.g. `sin(x)*d/dy + 0.5*x*d/dz`.
//!
//! ```text
//! expr   := ['+'|'-'] term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := '-' factor | atom ['^' ['-'] INT]
//! atom   := NUMBER | 'pi' | VAR | 'd/d' VAR | ('sin'|'cos') '(' expr ')' | '(' expr ')'
//! ```
//!
//! Variables are `x, y, z` for charts of dimension <= 3 and `x1 .. xn`
//! always. Division is only by constants. `sin`/`cos` arguments must be
//! integer combinations of `x_a` and `pi*x_a` plus a phase that is a multiple
//! of `pi/2`; anything else is outside the coefficient class and rejected.

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use thiserror::Error;

use super::coeff::{ChartCoeff, Scalar};
use super::field::VectorField;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("parse error at byte {pos}: {msg}")]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

fn err<T>(pos: usize, msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        pos,
        msg: msg.into(),
    })
}

/// Variable names used when rendering on an n-dimensional chart.
pub fn default_names(dim: usize) -> Vec<String> {
    if dim <= 3 {
        ["x", "y", "z"][..dim]
            .iter()
            .map(|s| s.to_string())
            .collect()
    } else {
        (1..=dim).map(|i| format!("x{}", i)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(Scalar),
    Ident(String),
    Sym(char),
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let b = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i] as char;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && i + 1 < b.len() && b[i + 1].is_ascii_digit()) {
            let start = i;
            while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.') {
                i += 1;
            }
            if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
                let mut j = i + 1;
                if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                    j += 1;
                }
                if j < b.len() && b[j].is_ascii_digit() {
                    while j < b.len() && b[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            out.push((start, Tok::Num(decimal(&src[start..i], start)?)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else if "+-*/^()".contains(c) {
            out.push((i, Tok::Sym(c)));
            i += 1;
        } else {
            return err(i, format!("unexpected character '{}'", c));
        }
    }
    Ok(out)
}

// Decimal literal to an exact rational.
fn decimal(s: &str, pos: usize) -> Result<Scalar, ParseError> {
    let (mant, exp) = match s.find(['e', 'E']) {
        Some(k) => (
            &s[..k],
            s[k + 1..].parse::<i32>().map_err(|_| ParseError {
                pos,
                msg: "bad exponent".into(),
            })?,
        ),
        None => (s, 0),
    };
    let (int_part, frac_part) = match mant.find('.') {
        Some(k) => (&mant[..k], &mant[k + 1..]),
        None => (mant, ""),
    };
    if frac_part.contains('.') {
        return err(pos, "malformed number");
    }
    let digits = format!("{}{}", int_part, frac_part);
    let num: i128 = digits.parse().map_err(|_| ParseError {
        pos,
        msg: "number too long".into(),
    })?;
    let scale = exp - frac_part.len() as i32;
    if scale.abs() > 30 {
        return Ok(Scalar::float(s.parse::<f64>().map_err(|_| ParseError {
            pos,
            msg: "malformed number".into(),
        })?));
    }
    let p = 10i128.pow(scale.unsigned_abs());
    Ok(if scale >= 0 {
        match num.checked_mul(p) {
            Some(v) => Scalar::ratio(v, 1),
            None => Scalar::float(s.parse::<f64>().unwrap_or(f64::NAN)),
        }
    } else {
        Scalar::ratio(num, p)
    })
}

#[derive(Clone, Debug)]
enum Val {
    C(ChartCoeff),
    F(VectorField),
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    names: &'a [String],
    dim: usize,
    end: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn var_index(&self, name: &str) -> Option<usize> {
        if let Some(k) = self.names.iter().position(|n| n == name) {
            return Some(k);
        }
        let rest = name.strip_prefix('x')?;
        let k: usize = rest.parse().ok()?;
        (k >= 1 && k <= self.dim).then(|| k - 1)
    }

    fn expr(&mut self) -> Result<Val, ParseError> {
        let mut acc = if self.eat('-') {
            let t = self.term()?;
            neg(t)
        } else {
            self.eat('+');
            self.term()?
        };
        loop {
            let at = self.here();
            if self.eat('+') {
                let t = self.term()?;
                acc = add(acc, t, at)?;
            } else if self.eat('-') {
                let t = self.term()?;
                acc = add(acc, neg(t), at)?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Val, ParseError> {
        let mut acc = self.factor()?;
        loop {
            let at = self.here();
            if self.eat('*') {
                let f = self.factor()?;
                acc = mul(acc, f, at)?;
            } else if self.peek() == Some(&Tok::Sym('/')) {
                self.pos += 1;
                let f = self.factor()?;
                acc = div(acc, f, at)?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn factor(&mut self) -> Result<Val, ParseError> {
        if self.eat('-') {
            return Ok(neg(self.factor()?));
        }
        let base = self.atom()?;
        let at = self.here();
        if self.eat('^') {
            let negative = self.eat('-');
            let k = match self.toks.get(self.pos) {
                Some((_, Tok::Num(Scalar::Exact(q)))) if q.is_integer() && *q.numer() >= 0 => {
                    q.numer().to_u32().unwrap_or(u32::MAX)
                }
                _ => {
                    return err(
                        self.here(),
                        "exponent must be a nonnegative integer literal",
                    )
                }
            };
            self.pos += 1;
            if k > 64 {
                return err(at, "exponent too large");
            }
            return match base {
                Val::C(c) if !negative => Ok(Val::C(c.pow(k))),
                Val::C(c) => match invert_constant(&c) {
                    Some(inv) => Ok(Val::C(inv.pow(k))),
                    None => err(at, "negative powers are only allowed for nonzero constants"),
                },
                Val::F(_) => err(at, "cannot raise a field to a power"),
            };
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Val, ParseError> {
        let at = self.here();
        let tok = match self.toks.get(self.pos) {
            Some((_, t)) => t.clone(),
            None => return err(at, "unexpected end of input"),
        };
        self.pos += 1;
        match tok {
            Tok::Num(s) => Ok(Val::C(ChartCoeff::constant(self.dim, s))),
            Tok::Sym('(') => {
                let v = self.expr()?;
                if !self.eat(')') {
                    return err(self.here(), "expected ')'");
                }
                Ok(v)
            }
            Tok::Sym(c) => err(at, format!("unexpected '{}'", c)),
            Tok::Ident(name) => {
                if name == "pi" {
                    return Ok(Val::C(ChartCoeff::pi_power(self.dim, 1)));
                }
                if name == "d" && self.peek() == Some(&Tok::Sym('/')) {
                    if let Some((_, Tok::Ident(dv))) = self.toks.get(self.pos + 1) {
                        if let Some(axis) = dv.strip_prefix('d').and_then(|v| self.var_index(v)) {
                            self.pos += 2;
                            return Ok(Val::F(VectorField::coordinate(self.dim, axis)));
                        }
                    }
                    return err(at, "expected d/d<variable>");
                }
                if name == "sin" || name == "cos" {
                    if !self.eat('(') {
                        return err(self.here(), "expected '(' after function name");
                    }
                    let arg_pos = self.here();
                    let arg = self.expr()?;
                    if !self.eat(')') {
                        return err(self.here(), "expected ')'");
                    }
                    let arg = match arg {
                        Val::C(c) => c,
                        Val::F(_) => return err(arg_pos, "trigonometric argument is a field"),
                    };
                    let (s, c) = trig_of_linear(&arg, self.dim).map_err(|m| ParseError {
                        pos: arg_pos,
                        msg: m,
                    })?;
                    return Ok(Val::C(if name == "sin" { s } else { c }));
                }
                match self.var_index(&name) {
                    Some(a) => Ok(Val::C(ChartCoeff::var(self.dim, a))),
                    None => err(at, format!("unknown identifier '{}'", name)),
                }
            }
        }
    }
}

fn neg(v: Val) -> Val {
    match v {
        Val::C(c) => Val::C(c.neg()),
        Val::F(f) => Val::F(f.neg()),
    }
}

fn add(a: Val, b: Val, at: usize) -> Result<Val, ParseError> {
    match (a, b) {
        (Val::C(x), Val::C(y)) => Ok(Val::C(x.add(&y))),
        (Val::F(x), Val::F(y)) => Ok(Val::F(x.add(&y))),
        _ => err(at, "cannot add a function and a field"),
    }
}

fn mul(a: Val, b: Val, at: usize) -> Result<Val, ParseError> {
    match (a, b) {
        (Val::C(x), Val::C(y)) => Ok(Val::C(x.mul(&y))),
        (Val::C(x), Val::F(f)) | (Val::F(f), Val::C(x)) => Ok(Val::F(f.times(&x))),
        _ => err(at, "cannot multiply two fields"),
    }
}

fn invert_constant(c: &ChartCoeff) -> Option<ChartCoeff> {
    match c.terms() {
        [t] if t.trig.is_empty() && t.degree() == 0 => {
            let r = t.coef.recip()?;
            Some(ChartCoeff::pi_power(c.dim(), -t.pi_pow).scale(r))
        }
        _ => None,
    }
}

fn div(a: Val, b: Val, at: usize) -> Result<Val, ParseError> {
    let inv = match &b {
        Val::C(c) => invert_constant(c),
        Val::F(_) => None,
    };
    match inv {
        Some(i) => mul(a, Val::C(i), at),
        None => err(at, "division is only by nonzero constants"),
    }
}

// sin and cos of an integer-linear argument, expanded by angle addition.
fn trig_of_linear(arg: &ChartCoeff, dim: usize) -> Result<(ChartCoeff, ChartCoeff), String> {
    let mut s = ChartCoeff::zero(dim);
    let mut c = ChartCoeff::one(dim);
    let mut parts: Vec<(usize, bool, i64)> = Vec::new();
    for t in arg.terms() {
        if !t.trig.is_empty() || t.degree() > 1 {
            return Err("trigonometric argument must be linear in the coordinates".into());
        }
        let q = t
            .coef
            .as_ratio()
            .ok_or_else(|| "trigonometric argument must have exact coefficients".to_string())?;
        if t.degree() == 0 {
            if t.pi_pow != 1 || !(q * Ratio::from_integer(2)).is_integer() {
                return Err("constant phase must be a multiple of pi/2".into());
            }
            let quarter = ((q * Ratio::from_integer(2)).numer().rem_euclid(4)) as u8;
            let (ps, pc) = match quarter {
                0 => (0, 1),
                1 => (1, 0),
                2 => (0, -1),
                _ => (-1, 0),
            };
            s = ChartCoeff::int(dim, ps);
            c = ChartCoeff::int(dim, pc);
            continue;
        }
        if !(t.pi_pow == 0 || t.pi_pow == 1) || !q.is_integer() {
            return Err("frequencies must be integers (optionally times pi)".into());
        }
        let axis = t.pows.iter().position(|&p| p == 1).unwrap();
        let k = q
            .numer()
            .to_i64()
            .ok_or_else(|| "frequency too large".to_string())?;
        parts.push((axis, t.pi_pow == 1, k));
    }
    for (axis, pi, k) in parts {
        if k.is_zero() {
            continue;
        }
        let sk = ChartCoeff::sin(dim, axis, k, pi);
        let ck = ChartCoeff::cos(dim, axis, k, pi);
        let ns = s.mul(&ck).add(&c.mul(&sk));
        let nc = c.mul(&ck).sub(&s.mul(&sk));
        s = ns;
        c = nc;
    }
    Ok((s, c))
}

fn run(src: &str, dim: usize) -> Result<Val, ParseError> {
    let toks = tokenize(src)?;
    let names = default_names(dim);
    let mut p = Parser {
        toks,
        pos: 0,
        names: &names,
        dim,
        end: src.len(),
    };
    if p.toks.is_empty() {
        return err(0, "empty expression");
    }
    let v = p.expr()?;
    if p.pos != p.toks.len() {
        return err(p.here(), "trailing input");
    }
    Ok(v)
}

/// Parse a scalar coefficient expression on an n-dimensional chart.
pub fn parse_coeff(src: &str, dim: usize) -> Result<ChartCoeff, ParseError> {
    match run(src, dim)? {
        Val::C(c) => Ok(c),
        Val::F(_) => err(0, "expected a function, found a vector field"),
    }
}

/// Parse a vector field expression on an n-dimensional chart. A bare `0`
/// denotes the zero field.
pub fn parse_field(src: &str, dim: usize) -> Result<VectorField, ParseError> {
    match run(src, dim)? {
        Val::F(f) => Ok(f),
        Val::C(c) if c.is_zero() => Ok(VectorField::zero(dim)),
        Val::C(_) => err(0, "expected a vector field (terms like f*d/dx)"),
    }
}
