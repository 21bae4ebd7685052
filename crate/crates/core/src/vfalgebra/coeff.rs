//! Symbolic chart coefficients: finite sums of scalar x monomial x trig
//! products, kept in a canonical form so structural equality is semantic
//! equality for the supported class.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;

use num_rational::Ratio;
use num_traits::{CheckedAdd, CheckedMul, One, Signed, ToPrimitive, Zero};

type Q = Ratio<i128>;

// Past this magnitude exact arithmetic would risk overflow on the next product.
const EXACT_LIMIT: i128 = 1 << 60;

/// Exact rational with a floating fallback once numerators grow too large.
#[derive(Clone, Copy, Debug)]
pub enum Scalar {
    Exact(Q),
    Float(f64),
}

impl Scalar {
    pub fn int(v: i64) -> Self {
        Scalar::Exact(Q::from_integer(v as i128))
    }

    pub fn ratio(num: i128, den: i128) -> Self {
        assert!(den != 0, "zero denominator");
        Scalar::Exact(Q::new(num, den)).demote()
    }

    pub fn float(v: f64) -> Self {
        Scalar::Float(v)
    }

    pub fn zero() -> Self {
        Scalar::Exact(Q::zero())
    }

    pub fn one() -> Self {
        Scalar::Exact(Q::one())
    }

    fn demote(self) -> Self {
        match self {
            Scalar::Exact(q) if q.numer().abs() > EXACT_LIMIT || q.denom().abs() > EXACT_LIMIT => {
                Scalar::Float(q.to_f64().unwrap_or(f64::NAN))
            }
            s => s,
        }
    }

    pub fn to_f64(self) -> f64 {
        match self {
            Scalar::Exact(q) => *q.numer() as f64 / *q.denom() as f64,
            Scalar::Float(v) => v,
        }
    }

    pub fn is_zero(self) -> bool {
        match self {
            Scalar::Exact(q) => q.is_zero(),
            Scalar::Float(v) => v == 0.0,
        }
    }

    pub fn is_exact(self) -> bool {
        matches!(self, Scalar::Exact(_))
    }

    pub fn as_ratio(self) -> Option<Q> {
        match self {
            Scalar::Exact(q) => Some(q),
            Scalar::Float(_) => None,
        }
    }

    pub fn add(self, other: Scalar) -> Scalar {
        match (self, other) {
            (Scalar::Exact(a), Scalar::Exact(b)) => match a.checked_add(&b) {
                Some(c) => Scalar::Exact(c).demote(),
                None => Scalar::Float(self.to_f64() + other.to_f64()),
            },
            _ => Scalar::Float(self.to_f64() + other.to_f64()),
        }
    }

    pub fn mul(self, other: Scalar) -> Scalar {
        match (self, other) {
            (Scalar::Exact(a), Scalar::Exact(b)) => match a.checked_mul(&b) {
                Some(c) => Scalar::Exact(c).demote(),
                None => Scalar::Float(self.to_f64() * other.to_f64()),
            },
            _ => Scalar::Float(self.to_f64() * other.to_f64()),
        }
    }

    pub fn neg(self) -> Scalar {
        match self {
            Scalar::Exact(q) => Scalar::Exact(-q),
            Scalar::Float(v) => Scalar::Float(-v),
        }
    }

    pub fn recip(self) -> Option<Scalar> {
        if self.is_zero() {
            return None;
        }
        Some(match self {
            Scalar::Exact(q) => Scalar::Exact(q.recip()),
            Scalar::Float(v) => Scalar::Float(1.0 / v),
        })
    }

    fn is_negative(self) -> bool {
        match self {
            Scalar::Exact(q) => q.is_negative(),
            Scalar::Float(v) => v < 0.0,
        }
    }
}

impl PartialEq for Scalar {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Scalar::Exact(a), Scalar::Exact(b)) => a == b,
            _ => self.to_f64() == other.to_f64(),
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Exact(q) if q.is_integer() => write!(f, "{}", q.numer()),
            Scalar::Exact(q) => write!(f, "{}/{}", q.numer(), q.denom()),
            Scalar::Float(v) => write!(f, "{:?}", v),
        }
    }
}

/// One trigonometric factor `sin(k x_a)` / `cos(k x_a)`, or with `pi` set,
/// `sin(k pi x_a)` / `cos(k pi x_a)`. Frequencies are always >= 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Trig {
    pub axis: usize,
    pub pi: bool,
    pub sin: bool,
    pub freq: u32,
}

impl Trig {
    fn slot(&self) -> (usize, bool) {
        (self.axis, self.pi)
    }

    fn omega(&self) -> f64 {
        if self.pi {
            self.freq as f64 * PI
        } else {
            self.freq as f64
        }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let a = self.omega() * x[self.axis];
        if self.sin {
            a.sin()
        } else {
            a.cos()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub coef: Scalar,
    pub pi_pow: i32,
    pub pows: Vec<u32>,
    pub trig: Vec<Trig>,
}

impl Term {
    fn key_cmp(&self, other: &Term) -> Ordering {
        self.pi_pow
            .cmp(&other.pi_pow)
            .then_with(|| self.pows.cmp(&other.pows))
            .then_with(|| self.trig.cmp(&other.trig))
    }

    fn same_key(&self, other: &Term) -> bool {
        self.key_cmp(other) == Ordering::Equal
    }

    pub fn degree(&self) -> u32 {
        self.pows.iter().sum()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let mut v = self.coef.to_f64() * PI.powi(self.pi_pow);
        for (a, &p) in self.pows.iter().enumerate() {
            if p > 0 {
                v *= x[a].powi(p as i32);
            }
        }
        for t in &self.trig {
            v *= t.eval(x);
        }
        v
    }
}

// sin/cos of a signed integer multiple, normalized: (sign, factor or constant one).
fn normalized(axis: usize, pi: bool, sin: bool, freq: i64) -> Option<(i64, Option<Trig>)> {
    if freq == 0 {
        return if sin { None } else { Some((1, None)) };
    }
    let sign = if sin && freq < 0 { -1 } else { 1 };
    Some((
        sign,
        Some(Trig {
            axis,
            pi,
            sin,
            freq: freq.unsigned_abs() as u32,
        }),
    ))
}

// Product-to-sum for two factors sharing an axis and base.
fn trig_product(a: Trig, b: Trig) -> Vec<(Scalar, Option<Trig>)> {
    let (f1, f2) = (a.freq as i64, b.freq as i64);
    let half = Scalar::ratio(1, 2);
    let parts: [(i64, bool, i64); 2] = match (a.sin, b.sin) {
        (true, true) => [(1, false, f1 - f2), (-1, false, f1 + f2)],
        (false, false) => [(1, false, f1 - f2), (1, false, f1 + f2)],
        (true, false) => [(1, true, f1 + f2), (1, true, f1 - f2)],
        (false, true) => [(1, true, f1 + f2), (1, true, f2 - f1)],
    };
    let mut out = Vec::new();
    for (s, sin, f) in parts {
        if let Some((sign, t)) = normalized(a.axis, a.pi, sin, f) {
            out.push((half.mul(Scalar::int(s * sign)), t));
        }
    }
    out
}

fn term_product(x: &Term, y: &Term) -> Vec<Term> {
    let coef = x.coef.mul(y.coef);
    if coef.is_zero() {
        return Vec::new();
    }
    let pows: Vec<u32> = x.pows.iter().zip(&y.pows).map(|(a, b)| a + b).collect();
    let mut partial: Vec<(Scalar, Vec<Trig>)> = vec![(coef, Vec::new())];
    let (mut i, mut j) = (0, 0);
    while i < x.trig.len() || j < y.trig.len() {
        let pick = match (x.trig.get(i), y.trig.get(j)) {
            (Some(a), Some(b)) => a.slot().cmp(&b.slot()),
            (Some(_), None) => Ordering::Less,
            _ => Ordering::Greater,
        };
        match pick {
            Ordering::Less => {
                for p in partial.iter_mut() {
                    p.1.push(x.trig[i]);
                }
                i += 1;
            }
            Ordering::Greater => {
                for p in partial.iter_mut() {
                    p.1.push(y.trig[j]);
                }
                j += 1;
            }
            Ordering::Equal => {
                let combos = trig_product(x.trig[i], y.trig[j]);
                let mut next = Vec::with_capacity(partial.len() * combos.len());
                for (c, fs) in &partial {
                    for (s, t) in &combos {
                        let mut f2 = fs.clone();
                        if let Some(t) = t {
                            f2.push(*t);
                        }
                        next.push((c.mul(*s), f2));
                    }
                }
                partial = next;
                i += 1;
                j += 1;
            }
        }
    }
    partial
        .into_iter()
        .map(|(coef, trig)| Term {
            coef,
            pi_pow: x.pi_pow + y.pi_pow,
            pows: pows.clone(),
            trig,
        })
        .collect()
}

/// A coefficient function on an n-dimensional chart.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartCoeff {
    dim: usize,
    terms: Vec<Term>,
}

impl ChartCoeff {
    pub fn zero(dim: usize) -> Self {
        ChartCoeff {
            dim,
            terms: Vec::new(),
        }
    }

    pub fn constant(dim: usize, c: Scalar) -> Self {
        Self::from_terms(
            dim,
            vec![Term {
                coef: c,
                pi_pow: 0,
                pows: vec![0; dim],
                trig: Vec::new(),
            }],
        )
    }

    pub fn int(dim: usize, v: i64) -> Self {
        Self::constant(dim, Scalar::int(v))
    }

    pub fn one(dim: usize) -> Self {
        Self::int(dim, 1)
    }

    /// `pi^p` as a coefficient.
    pub fn pi_power(dim: usize, p: i32) -> Self {
        Self::from_terms(
            dim,
            vec![Term {
                coef: Scalar::one(),
                pi_pow: p,
                pows: vec![0; dim],
                trig: Vec::new(),
            }],
        )
    }

    /// The coordinate function `x_axis`.
    pub fn var(dim: usize, axis: usize) -> Self {
        assert!(axis < dim);
        let mut pows = vec![0; dim];
        pows[axis] = 1;
        Self::from_terms(
            dim,
            vec![Term {
                coef: Scalar::one(),
                pi_pow: 0,
                pows,
                trig: Vec::new(),
            }],
        )
    }

    /// `sin(freq * x_axis)`, or `sin(freq * pi * x_axis)` when `pi` is set.
    pub fn sin(dim: usize, axis: usize, freq: i64, pi: bool) -> Self {
        Self::trig(dim, axis, freq, pi, true)
    }

    pub fn cos(dim: usize, axis: usize, freq: i64, pi: bool) -> Self {
        Self::trig(dim, axis, freq, pi, false)
    }

    fn trig(dim: usize, axis: usize, freq: i64, pi: bool, sin: bool) -> Self {
        assert!(axis < dim);
        match normalized(axis, pi, sin, freq) {
            None => Self::zero(dim),
            Some((sign, t)) => Self::from_terms(
                dim,
                vec![Term {
                    coef: Scalar::int(sign),
                    pi_pow: 0,
                    pows: vec![0; dim],
                    trig: t.into_iter().collect(),
                }],
            ),
        }
    }

    pub fn from_terms(dim: usize, mut terms: Vec<Term>) -> Self {
        for t in terms.iter_mut() {
            debug_assert_eq!(t.pows.len(), dim);
            t.trig.sort();
        }
        terms.retain(|t| !t.coef.is_zero());
        terms.sort_by(|a, b| a.key_cmp(b));
        let mut merged: Vec<Term> = Vec::with_capacity(terms.len());
        for t in terms {
            match merged.last_mut() {
                Some(last) if last.same_key(&t) => last.coef = last.coef.add(t.coef),
                _ => merged.push(t),
            }
        }
        merged.retain(|t| !t.coef.is_zero());
        ChartCoeff { dim, terms: merged }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Constant value when the coefficient has no x dependence.
    pub fn as_constant(&self) -> Option<f64> {
        match self.terms.as_slice() {
            [] => Some(0.0),
            [t] if t.trig.is_empty() && t.degree() == 0 => {
                Some(t.coef.to_f64() * PI.powi(t.pi_pow))
            }
            _ => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.terms
            .iter()
            .all(|t| t.trig.is_empty() && t.degree() == 0)
    }

    /// True when every scalar is still an exact rational.
    pub fn is_exact(&self) -> bool {
        self.terms.iter().all(|t| t.coef.is_exact())
    }

    pub fn add(&self, other: &ChartCoeff) -> ChartCoeff {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let mut t = self.terms.clone();
        t.extend(other.terms.iter().cloned());
        Self::from_terms(self.dim, t)
    }

    pub fn neg(&self) -> ChartCoeff {
        self.scale(Scalar::int(-1))
    }

    pub fn sub(&self, other: &ChartCoeff) -> ChartCoeff {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: Scalar) -> ChartCoeff {
        let terms = self
            .terms
            .iter()
            .map(|t| Term {
                coef: t.coef.mul(c),
                ..t.clone()
            })
            .collect();
        Self::from_terms(self.dim, terms)
    }

    pub fn mul(&self, other: &ChartCoeff) -> ChartCoeff {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let mut out = Vec::new();
        for a in &self.terms {
            for b in &other.terms {
                out.extend(term_product(a, b));
            }
        }
        Self::from_terms(self.dim, out)
    }

    pub fn pow(&self, k: u32) -> ChartCoeff {
        let mut acc = ChartCoeff::one(self.dim);
        for _ in 0..k {
            acc = acc.mul(self);
        }
        acc
    }

    /// Partial derivative along `axis`.
    pub fn partial(&self, axis: usize) -> ChartCoeff {
        assert!(axis < self.dim);
        let mut out = Vec::new();
        for t in &self.terms {
            let p = t.pows[axis];
            if p > 0 {
                let mut pows = t.pows.clone();
                pows[axis] -= 1;
                out.push(Term {
                    coef: t.coef.mul(Scalar::int(p as i64)),
                    pi_pow: t.pi_pow,
                    pows,
                    trig: t.trig.clone(),
                });
            }
            for (k, f) in t.trig.iter().enumerate() {
                if f.axis != axis {
                    continue;
                }
                let mut trig = t.trig.clone();
                trig[k] = Trig { sin: !f.sin, ..*f };
                let sign = if f.sin { 1 } else { -1 };
                out.push(Term {
                    coef: t.coef.mul(Scalar::int(sign * f.freq as i64)),
                    pi_pow: t.pi_pow + i32::from(f.pi),
                    pows: t.pows.clone(),
                    trig,
                });
            }
        }
        Self::from_terms(self.dim, out)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim, "point dimension mismatch");
        self.terms.iter().map(|t| t.eval(x)).sum()
    }

    /// Flattened form for repeated evaluation.
    pub fn compile(&self) -> CompiledCoeff {
        CompiledCoeff {
            terms: self
                .terms
                .iter()
                .map(|t| CompiledTerm {
                    c: t.coef.to_f64() * PI.powi(t.pi_pow),
                    pows: t
                        .pows
                        .iter()
                        .enumerate()
                        .filter(|(_, &p)| p > 0)
                        .map(|(a, &p)| (a, p as i32))
                        .collect(),
                    trig: t.trig.iter().map(|f| (f.axis, f.omega(), f.sin)).collect(),
                })
                .collect(),
        }
    }

    /// True when `self == -other` structurally.
    pub fn is_negation_of(&self, other: &ChartCoeff) -> bool {
        self.terms.len() == other.terms.len()
            && self
                .terms
                .iter()
                .zip(&other.terms)
                .all(|(a, b)| a.same_key(b) && a.coef == b.coef.neg())
    }

    /// Sign convention used for deduplication up to sign: positive when the
    /// leading term has a positive scalar.
    pub fn leading_sign(&self) -> i32 {
        match self.terms.first() {
            None => 0,
            Some(t) if t.coef.is_negative() => -1,
            Some(_) => 1,
        }
    }

    /// Render with the given variable names; the output parses back.
    pub fn render(&self, names: &[String]) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let mut s = String::new();
        for (i, t) in self.terms.iter().enumerate() {
            let neg = t.coef.is_negative();
            let mag = if neg { t.coef.neg() } else { t.coef };
            if i == 0 {
                if neg {
                    s.push('-');
                }
            } else {
                s.push_str(if neg { " - " } else { " + " });
            }
            let mut factors: Vec<String> = Vec::new();
            let unit = mag == Scalar::one();
            if !unit {
                factors.push(format!("{}", mag));
            }
            if t.pi_pow == 1 {
                factors.push("pi".into());
            } else if t.pi_pow != 0 {
                factors.push(format!("pi^{}", t.pi_pow));
            }
            for (a, &p) in t.pows.iter().enumerate() {
                match p {
                    0 => {}
                    1 => factors.push(names[a].clone()),
                    _ => factors.push(format!("{}^{}", names[a], p)),
                }
            }
            for f in &t.trig {
                let fun = if f.sin { "sin" } else { "cos" };
                let mut arg = String::new();
                if f.freq != 1 {
                    arg.push_str(&format!("{}*", f.freq));
                }
                if f.pi {
                    arg.push_str("pi*");
                }
                arg.push_str(&names[f.axis]);
                factors.push(format!("{}({})", fun, arg));
            }
            if factors.is_empty() {
                factors.push("1".into());
            }
            s.push_str(&factors.join("*"));
        }
        s
    }
}

#[derive(Clone, Debug)]
struct CompiledTerm {
    c: f64,
    pows: Vec<(usize, i32)>,
    trig: Vec<(usize, f64, bool)>,
}

/// Numeric evaluator produced by [`ChartCoeff::compile`].
#[derive(Clone, Debug)]
pub struct CompiledCoeff {
    terms: Vec<CompiledTerm>,
}

impl CompiledCoeff {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for t in &self.terms {
            let mut v = t.c;
            for &(a, p) in &t.pows {
                v *= x[a].powi(p);
            }
            for &(a, w, s) in &t.trig {
                v *= if s {
                    (w * x[a]).sin()
                } else {
                    (w * x[a]).cos()
                };
            }
            acc += v;
        }
        acc
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sin_squared_plus_cos_squared() {
        let s = ChartCoeff::sin(2, 0, 1, false);
        let c = ChartCoeff::cos(2, 0, 1, false);
        let sum = s.mul(&s).add(&c.mul(&c));
        assert_eq!(sum, ChartCoeff::one(2));
    }

    #[test]
    fn product_to_sum_is_canonical() {
        let a = ChartCoeff::sin(1, 0, 3, true).mul(&ChartCoeff::cos(1, 0, 1, true));
        let b = ChartCoeff::sin(1, 0, 4, true)
            .add(&ChartCoeff::sin(1, 0, 2, true))
            .scale(Scalar::ratio(1, 2));
        assert_eq!(a, b);
    }

    #[test]
    fn derivative_of_pi_trig_carries_pi() {
        let f = ChartCoeff::sin(1, 0, 2, true);
        let d = f.partial(0);
        let expect = ChartCoeff::cos(1, 0, 2, true)
            .mul(&ChartCoeff::pi_power(1, 1))
            .scale(Scalar::int(2));
        assert_eq!(d, expect);
        assert!((d.eval(&[0.1]) - 2.0 * PI * (0.2 * PI).cos()).abs() < 1e-12);
    }

    #[test]
    fn compiled_matches_eval() {
        let x = ChartCoeff::var(3, 0);
        let f = x
            .pow(2)
            .mul(&ChartCoeff::sin(3, 1, 2, false))
            .add(&ChartCoeff::cos(3, 2, 1, true).scale(Scalar::ratio(-3, 7)));
        let p = [0.3, -1.2, 0.7];
        assert!((f.eval(&p) - f.compile().eval(&p)).abs() < 1e-14);
    }

    #[test]
    fn overflow_falls_back_to_float() {
        let big = ChartCoeff::constant(1, Scalar::ratio(1 << 59, 3));
        let sq = big.mul(&big);
        assert!(!sq.is_exact());
        let expect = (2f64.powi(59) / 3.0).powi(2);
        assert!((sq.as_constant().unwrap() / expect - 1.0).abs() < 1e-12);
    }
}
