use thiserror::Error;

use crate::sos::FormatReport;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An operator was applied to the wrong number of arguments.
    #[error("operator {op} expects {expected} argument(s), got {found}")]
    ArityMismatch { op: String, expected: usize, found: usize },
    #[error("unknown operator {0}")]
    UnknownOperator(String),
    #[error("recursion variable {0} has no defining equation")]
    UnknownRecursionVariable(String),
    /// No concrete rule with the given name fits the premises.
    #[error("no matching rule: {0}")]
    NoMatchingRule(String),
    #[error("argument kind mismatch: {0}")]
    KindMismatch(String),
    #[error("substitution does not match: {0}")]
    MatchFailure(String),
    /// The result is not an open transition (shared variable, invalid node).
    #[error("not a transition: {0}")]
    NonTransitionResult(String),
    #[error("derivation depth limit {0} exceeded")]
    DepthExceeded(usize),
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    /// A recursive call derives infinitely many proofs through itself.
    #[error("unguarded recursion with infinitely many proofs at {0}")]
    UnguardedRecursion(String),
    #[error("premise violated: {0}")]
    PremiseViolated(String),
    #[error("the transition system is incomplete (exploration was truncated)")]
    IncompleteSystem,
    #[error("search budget exceeded: {0}")]
    SearchBudgetExceeded(String),
    #[error("parse error at {line}:{col}: {message}")]
    Parse { line: usize, col: usize, message: String },
    #[error("format check failed:\n{0}")]
    Format(FormatReport),
    #[error("unknown fixture {0}")]
    UnknownFixture(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("unknown operator type {0}")]
    UnknownOperatorType(String),
}

pub type Result<T> = std::result::Result<T, Error>;
