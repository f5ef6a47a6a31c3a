//! Fixed-size bit-vector terms, Boolean formulas over them, and their
//! evaluation, canonical keys and SMT-LIB serialization.

mod conjunction;
mod eval;
pub mod smtlib;
mod term;

use std::fmt;

use thiserror::Error;

pub use conjunction::{independent, CanonicalKey, Conjunction, FreeVars};
pub use eval::{apply_bv, evaluate, evaluate_bool, Assignment, EvalError, Value};
pub use term::{build, Op, Term};

pub(crate) use term::{mask, Node};

/// Largest supported bit-vector width.
pub const MAX_WIDTH: u32 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sort {
    BitVec(u32),
    Bool,
}

/// Which side of an equality query a variable belongs to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    #[default]
    Left = 0,
    Right = 1,
}

/// One generation of a program variable, `(segment, position)^generation`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId {
    pub side: Side,
    pub segment: u32,
    pub position: u32,
    pub generation: u32,
}

impl VarId {
    pub fn new(segment: u32, position: u32, generation: u32) -> Self {
        debug_assert!(generation >= 1, "generations start at 1");
        VarId {
            side: Side::Left,
            segment,
            position,
            generation,
        }
    }

    /// The same variable on the other side of an equality query.
    pub fn on(self, side: Side) -> Self {
        VarId { side, ..self }
    }

    /// SMT-LIB symbol, `L_s<seg>_p<pos>_g<gen>` or `R_...`.
    pub fn smt_name(&self) -> String {
        let prefix = match self.side {
            Side::Left => "L",
            Side::Right => "R",
        };
        format!("{prefix}_s{}_p{}_g{}", self.segment, self.position, self.generation)
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.smt_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SortError {
    #[error("width {0} outside 1..=64")]
    BadWidth(u32),
    #[error("`{op}` expects {expected} operands, got {found}")]
    Arity {
        op: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("`{op}` applied to operands of sorts {found:?}")]
    Mismatch { op: &'static str, found: Vec<Sort> },
}
