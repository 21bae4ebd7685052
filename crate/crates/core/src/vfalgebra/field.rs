use std::fmt;

use serde::{Deserialize, Serialize};

use super::coeff::{ChartCoeff, CompiledCoeff, Scalar};
use super::AlgebraError;

/// A vector field sum_j a_j(x) d/dx_j on a chart.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    comps: Vec<ChartCoeff>,
}

impl VectorField {
    pub fn new(comps: Vec<ChartCoeff>) -> Result<Self, AlgebraError> {
        let n = comps.len();
        if n == 0 {
            return Err(AlgebraError::Dimension {
                expected: 1,
                found: 0,
            });
        }
        if let Some(c) = comps.iter().find(|c| c.dim() != n) {
            return Err(AlgebraError::Dimension {
                expected: n,
                found: c.dim(),
            });
        }
        Ok(VectorField { comps })
    }

    pub fn zero(dim: usize) -> Self {
        VectorField {
            comps: vec![ChartCoeff::zero(dim); dim],
        }
    }

    /// The coordinate field d/dx_axis.
    pub fn coordinate(dim: usize, axis: usize) -> Self {
        let mut f = Self::zero(dim);
        f.comps[axis] = ChartCoeff::one(dim);
        f
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn components(&self) -> &[ChartCoeff] {
        &self.comps
    }

    pub fn component(&self, j: usize) -> &ChartCoeff {
        &self.comps[j]
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(|c| c.is_zero())
    }

    pub fn add(&self, other: &VectorField) -> VectorField {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        VectorField {
            comps: self
                .comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| a.add(b))
                .collect(),
        }
    }

    pub fn sub(&self, other: &VectorField) -> VectorField {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> VectorField {
        self.scale(Scalar::int(-1))
    }

    pub fn scale(&self, c: Scalar) -> VectorField {
        VectorField {
            comps: self.comps.iter().map(|a| a.scale(c)).collect(),
        }
    }

    /// Multiply by a function.
    pub fn times(&self, f: &ChartCoeff) -> VectorField {
        VectorField {
            comps: self.comps.iter().map(|a| a.mul(f)).collect(),
        }
    }

    /// Directional derivative X f.
    pub fn apply(&self, f: &ChartCoeff) -> ChartCoeff {
        let mut acc = ChartCoeff::zero(self.dim());
        for (j, a) in self.comps.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            acc = acc.add(&a.mul(&f.partial(j)));
        }
        acc
    }

    /// Lie bracket [X, Y] = XY - YX.
    pub fn bracket(&self, other: &VectorField) -> VectorField {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        let comps = (0..self.dim())
            .map(|j| {
                self.apply(&other.comps[j])
                    .sub(&other.apply(&self.comps[j]))
            })
            .collect();
        VectorField { comps }
    }

    /// Divergence with respect to Lebesgue measure.
    pub fn divergence(&self) -> ChartCoeff {
        let mut acc = ChartCoeff::zero(self.dim());
        for (j, a) in self.comps.iter().enumerate() {
            acc = acc.add(&a.partial(j));
        }
        acc
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.comps.iter().map(|c| c.eval(x)).collect()
    }

    pub fn compile(&self) -> CompiledField {
        CompiledField {
            comps: self.comps.iter().map(|c| c.compile()).collect(),
        }
    }

    /// Equal up to an overall sign; returns the sign relating them.
    pub fn sign_relation(&self, other: &VectorField) -> Option<i32> {
        if self == other {
            Some(1)
        } else if self
            .comps
            .iter()
            .zip(&other.comps)
            .all(|(a, b)| a.is_negation_of(b))
        {
            Some(-1)
        } else {
            None
        }
    }

    /// Representative up to sign: the first nonzero component has a positive
    /// leading scalar.
    pub fn canonical_up_to_sign(&self) -> VectorField {
        let s = self
            .comps
            .iter()
            .map(|c| c.leading_sign())
            .find(|&s| s != 0)
            .unwrap_or(1);
        if s < 0 {
            self.neg()
        } else {
            self.clone()
        }
    }

    pub fn render(&self, names: &[String]) -> String {
        let mut parts = Vec::new();
        for (j, c) in self.comps.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let body = c.render(names);
            if body == "1" {
                parts.push(format!("d/d{}", names[j]));
            } else {
                parts.push(format!("({})*d/d{}", body, names[j]));
            }
        }
        if parts.is_empty() {
            "0".into()
        } else {
            parts.join(" + ")
        }
    }
}

#[derive(Clone, Debug)]
pub struct CompiledField {
    comps: Vec<CompiledCoeff>,
}

impl CompiledField {
    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.comps) {
            *o = c.eval(x);
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.comps.iter().map(|c| c.eval(x)).collect()
    }
}

/// A bracket word (i_1, ..., i_k) over the generating family, 0-based letters.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Word(pub Vec<usize>);

impl Word {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Parse the 1-based display form "(1,2,2)" or "1,2,2".
    pub fn parse(s: &str) -> Option<Word> {
        let body = s.trim().trim_start_matches('(').trim_end_matches(')');
        let letters: Option<Vec<usize>> = body
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&v| v >= 1)
                    .map(|v| v - 1)
            })
            .collect();
        letters.filter(|l| !l.is_empty()).map(Word)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inner: Vec<String> = self.0.iter().map(|i| (i + 1).to_string()).collect();
        write!(f, "({})", inner.join(","))
    }
}

/// X_I = ad(X_{i1}) ... ad(X_{i(k-1)}) X_{ik}, i.e. [X_{i1}, [X_{i2}, ... [X_{i(k-1)}, X_{ik}]]].
pub fn iterated_bracket(
    word: &Word,
    fields: &[VectorField],
    tau_cap: usize,
) -> Result<VectorField, AlgebraError> {
    let letters = &word.0;
    if letters.is_empty() {
        return Err(AlgebraError::EmptyWord);
    }
    if letters.len() > tau_cap {
        return Err(AlgebraError::DepthExceeded {
            length: letters.len(),
            cap: tau_cap,
        });
    }
    if let Some(&bad) = letters.iter().find(|&&i| i >= fields.len()) {
        return Err(AlgebraError::LetterOutOfRange {
            letter: bad + 1,
            family: fields.len(),
        });
    }
    let dim = fields[0].dim();
    if let Some(f) = fields.iter().find(|f| f.dim() != dim) {
        return Err(AlgebraError::Dimension {
            expected: dim,
            found: f.dim(),
        });
    }
    let mut acc = fields[*letters.last().unwrap()].clone();
    for &i in letters[..letters.len() - 1].iter().rev() {
        if acc.is_zero() {
            break;
        }
        acc = fields[i].bracket(&acc);
    }
    Ok(acc)
}

/// All words up to a depth together with their brackets.
#[derive(Clone, Debug)]
pub struct BracketTable {
    dim: usize,
    family: usize,
    depth: usize,
    entries: Vec<(Word, VectorField)>,
}

impl BracketTable {
    /// Builds every word of length <= depth; brackets of length k+1 reuse the
    /// stored length-k brackets.
    pub fn new(fields: &[VectorField], depth: usize) -> Result<Self, AlgebraError> {
        if fields.is_empty() {
            return Err(AlgebraError::EmptyFamily);
        }
        if depth == 0 {
            return Err(AlgebraError::EmptyWord);
        }
        let dim = fields[0].dim();
        if let Some(f) = fields.iter().find(|f| f.dim() != dim) {
            return Err(AlgebraError::Dimension {
                expected: dim,
                found: f.dim(),
            });
        }
        let m = fields.len();
        let mut entries: Vec<(Word, VectorField)> =
            (0..m).map(|i| (Word(vec![i]), fields[i].clone())).collect();
        let mut level_start = 0;
        for _ in 1..depth {
            let level_end = entries.len();
            let mut next = Vec::new();
            for i in 0..m {
                for k in level_start..level_end {
                    let (w, f) = &entries[k];
                    let mut letters = vec![i];
                    letters.extend_from_slice(&w.0);
                    let b = if f.is_zero() {
                        VectorField::zero(dim)
                    } else {
                        fields[i].bracket(f)
                    };
                    next.push((Word(letters), b));
                }
            }
            level_start = level_end;
            entries.extend(next);
        }
        Ok(BracketTable {
            dim,
            family: m,
            depth,
            entries,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family_size(&self) -> usize {
        self.family
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn entries(&self) -> &[(Word, VectorField)] {
        &self.entries
    }

    pub fn get(&self, w: &Word) -> Option<&VectorField> {
        self.entries.iter().find(|(v, _)| v == w).map(|(_, f)| f)
    }

    /// Words of length <= k whose bracket is not symbolically zero.
    pub fn nonzero_up_to(&self, k: usize) -> impl Iterator<Item = &(Word, VectorField)> {
        self.entries
            .iter()
            .filter(move |(w, f)| w.len() <= k && !f.is_zero())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heis() -> Vec<VectorField> {
        let x = ChartCoeff::var(3, 0);
        vec![
            VectorField::coordinate(3, 0),
            VectorField::coordinate(3, 1).add(&VectorField::coordinate(3, 2).times(&x)),
        ]
    }

    #[test]
    fn heisenberg_bracket() {
        let f = heis();
        let b = iterated_bracket(&Word(vec![0, 1]), &f, 4).unwrap();
        assert_eq!(b, VectorField::coordinate(3, 2));
        assert!(iterated_bracket(&Word(vec![0, 0, 1]), &f, 4)
            .unwrap()
            .is_zero());
    }

    #[test]
    fn table_matches_direct() {
        let f = heis();
        let t = BracketTable::new(&f, 3).unwrap();
        assert_eq!(t.entries().len(), 2 + 4 + 8);
        for (w, v) in t.entries() {
            assert_eq!(&iterated_bracket(w, &f, 4).unwrap(), v);
        }
    }

    #[test]
    fn depth_cap_enforced() {
        let f = heis();
        assert!(matches!(
            iterated_bracket(&Word(vec![0, 1, 1]), &f, 2),
            Err(AlgebraError::DepthExceeded { length: 3, cap: 2 })
        ));
    }

    #[test]
    fn word_roundtrip() {
        let w = Word(vec![0, 1, 1]);
        assert_eq!(w.to_string(), "(1,2,2)");
        assert_eq!(Word::parse("(1,2,2)"), Some(w));
        assert_eq!(Word::parse("(0,1)"), None);
    }

    #[test]
    fn out_of_range_letter() {
        let f = heis();
        assert!(matches!(
            iterated_bracket(&Word(vec![0, 2]), &f, 4),
            Err(AlgebraError::LetterOutOfRange { .. })
        ));
    }
}
