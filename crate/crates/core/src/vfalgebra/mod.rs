//! Symbolic vector-field algebra on coordinate charts.
//!
//! Coefficients are finite sums of rational (or, after overflow, floating)
//! scalars times monomials times products of `sin`/`cos` of integer multiples
//! of single coordinates (optionally scaled by pi). The class is closed under
//! the ring operations and differentiation, so Lie brackets stay exact.

mod coeff;
mod field;
mod parse;

pub use coeff::{ChartCoeff, CompiledCoeff, Scalar, Term, Trig};
pub use field::{iterated_bracket, BracketTable, CompiledField, VectorField, Word};
pub use parse::{default_names, parse_coeff, parse_field, ParseError};

use thiserror::Error;

/// Default cap on bracket word length.
pub const TAU_CAP: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgebraError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("word letter {letter} out of range for a family of {family} fields")]
    LetterOutOfRange { letter: usize, family: usize },
    #[error("word length {length} exceeds bracket depth cap {cap}")]
    DepthExceeded { length: usize, cap: usize },
    #[error("empty word")]
    EmptyWord,
    #[error("empty field family")]
    EmptyFamily,
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// Evaluate a field at a chart point.
pub fn evaluate(x: &VectorField, p: &[f64]) -> Result<Vec<f64>, AlgebraError> {
    if p.len() != x.dim() {
        return Err(AlgebraError::Dimension {
            expected: x.dim(),
            found: p.len(),
        });
    }
    Ok(x.eval(p))
}

/// Lie bracket with a dimension check.
pub fn bracket(x: &VectorField, y: &VectorField) -> Result<VectorField, AlgebraError> {
    if x.dim() != y.dim() {
        return Err(AlgebraError::Dimension {
            expected: x.dim(),
            found: y.dim(),
        });
    }
    Ok(x.bracket(y))
}
