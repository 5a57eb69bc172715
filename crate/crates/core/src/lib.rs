//! A workbench for structural operational semantics with a successor
//! relation: rule-format checking, LTSS derivation, and strong and
//! enabling-preserving bisimilarity on finite fragments.

use std::sync::Arc;

pub mod dsl;
pub mod engine;
pub mod equivalence;
pub mod error;
pub mod label;
pub mod ltss;
pub mod parse;
pub mod sos;
pub mod stdlib;
pub mod successor;
pub mod suite;
pub mod syntax;
pub mod transition;

/// Interned-ish identifier used for variables, operator families and names.
pub type Sym = Arc<str>;

pub fn sym(s: &str) -> Sym {
    Arc::from(s)
}

pub use engine::{Engine, ExploreLimits, Transition};
pub use error::{Error, Result};
pub use label::{Label, LabelKind, LabelUniverse};
pub use ltss::{explore, Ltss};
pub use sos::{Diagnostic, FormatReport, Tss};
pub use successor::Tsss;
pub use syntax::{Expr, Op, RecSpec, Signature};
pub use transition::{TExpr, TransitionSubstitution};
