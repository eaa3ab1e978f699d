//! Shared error type for the billiard laboratory.

use std::fmt;

/// Errors produced anywhere in the crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Malformed or inconsistent input (dimension mismatch, off-surface
    /// query, violated precondition).
    Input(String),
    /// Expression text could not be parsed; `offset` is the byte offset of
    /// the first offending token.
    Parse { offset: usize, message: String },
    /// Expression evaluation hit a domain violation; `node` is the printed
    /// subexpression that failed.
    Eval { node: String, message: String },
    /// A pencil parameter coincides with a pole of the pencil.
    DegenerateMember { lambda: f64, index: usize },
    /// The gradient of the defining function vanishes at the query point.
    SingularPoint,
    /// The transverse direction is light-like (or tangent) at the query
    /// point, so no reflection is defined there.
    LightLikeNormal,
    /// The ray meets the boundary almost tangentially.
    GrazingHit,
    /// The ray never returns to the boundary within the search budget.
    Escape,
    /// The second fundamental form is degenerate at the query point.
    DegenerateSecondFundamentalForm,
    /// The direction field is degenerate at the requested start point.
    DegenerateField,
    /// A numerical procedure failed to converge or lost too much precision.
    Numerical(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Input(msg) => write!(f, "input error: {msg}"),
            Error::Parse { offset, message } => {
                write!(f, "parse error at byte {offset}: {message}")
            }
            Error::Eval { node, message } => {
                write!(f, "evaluation error in `{node}`: {message}")
            }
            Error::DegenerateMember { lambda, index } => {
                write!(
                    f,
                    "degenerate pencil member at lambda = {lambda} (pole of axis {index})"
                )
            }
            Error::SingularPoint => write!(f, "singular point: gradient below floor"),
            Error::LightLikeNormal => write!(f, "light-like or tangent transverse direction"),
            Error::GrazingHit => write!(f, "grazing hit: incidence below transversality threshold"),
            Error::Escape => write!(f, "ray escaped: no boundary crossing found"),
            Error::DegenerateSecondFundamentalForm => {
                write!(f, "degenerate second fundamental form")
            }
            Error::DegenerateField => write!(f, "degenerate direction field at start point"),
            Error::Numerical(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
