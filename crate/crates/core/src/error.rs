use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    #[error("undeclared identifier `{0}`")]
    Undeclared(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unsupported expression: {0}")]
    Unsupported(String),

    #[error("unbound {kind} `{name}` in evaluation environment")]
    Unbound { kind: &'static str, name: String },

    #[error("binding `{name}` violates its declared {structure} structure")]
    StructureViolation { name: String, structure: String },

    #[error("matrix is singular or ill-conditioned (condition estimate {cond:e})")]
    Singular { cond: f64 },

    #[error("matrix function undefined: {0}")]
    Domain(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid input: {0}")]
    Input(String),
}
