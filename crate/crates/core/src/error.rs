use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Everything that can go wrong inside the solver.
#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// An anisotropy or forcing definition is unusable (non-SPD matrix, bad exponent, ...).
    Model(String),
    /// A derivative was requested at the vertex `p = 0`.
    Domain(&'static str),
    /// The curvature operator was called with a vanishing gradient.
    DegenerateGradient,
    /// The set is empty or fills the whole box.
    DegenerateSet(&'static str),
    /// An iterative solver stopped before meeting its tolerance.
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },
    /// Quadrature, projection or least-squares failure.
    Numeric(String),
    /// The evolving set came within the safety margin of the box frame.
    Margin { step: usize, distance_cells: f64 },
    /// Invalid arguments (grid shape, expression syntax, ...).
    Input(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Model(msg) => write!(f, "model definition error: {msg}"),
            Error::Domain(what) => write!(f, "domain error: {what}"),
            Error::DegenerateGradient => f.write_str("degenerate (zero) gradient"),
            Error::DegenerateSet(what) => write!(f, "degenerate set: {what}"),
            Error::NotConverged {
                solver,
                iterations,
                residual,
            } => write!(
                f,
                "{solver} did not converge after {iterations} iterations (residual {residual:.3e})"
            ),
            Error::Numeric(msg) => write!(f, "numeric failure: {msg}"),
            Error::Margin {
                step,
                distance_cells,
            } => write!(
                f,
                "set reached the box margin at step {step} ({distance_cells:.1} cells from the frame)"
            ),
            Error::Input(msg) => write!(f, "invalid input: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
