//! The mini-IR input language and the explicit part of states.
//!
//! Programs are written in a small C-like IR (`.cir` files): functions with
//! fixed-width unsigned locals, straight-line assignments, labelled
//! conditional jumps, assertions, calls, thread spawning and joining.

mod parser;
mod printer;
mod state;

use thiserror::Error;

pub use parser::parse_program;
pub use printer::print_program;
pub use state::{enabled_steps, ControlPart, Frame, Mark, MemoryShape, ProgVar, Segment, Thread, VarDesc};

/// Index into [`Program::functions`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FnId(pub usize);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarDecl {
    pub name: String,
    pub width: u32,
    /// Declared initial value; such variables start out explicit.
    pub init: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    pub params: Vec<VarDecl>,
    pub locals: Vec<VarDecl>,
    pub ret_width: Option<u32>,
    pub body: Vec<Instr>,
}

impl Function {
    /// Parameters followed by locals, in segment position order.
    pub fn vars(&self) -> impl Iterator<Item = &VarDecl> {
        self.params.iter().chain(self.locals.iter())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub globals: Vec<VarDecl>,
    pub functions: Vec<Function>,
    pub entry: FnId,
}

impl Program {
    pub fn function(&self, id: FnId) -> &Function {
        &self.functions[id.0]
    }

    pub fn entry_function(&self) -> &Function {
        self.function(self.entry)
    }

    pub fn find(&self, name: &str) -> Option<FnId> {
        self.functions.iter().position(|f| f.name == name).map(FnId)
    }
}

/// Reference to a variable from inside a function body.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VarRef {
    /// Position in the executing function's segment.
    Local(u32),
    /// Position in the globals segment.
    Global(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    UDiv,
    Mod,
    And,
    Or,
    Xor,
    Shl,
    LShr,
}

/// A width-annotated expression.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Var(VarRef, u32),
    Const(u64, u32),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Concat(Box<Expr>, Box<Expr>),
    Extract { width: u32, low: u32, arg: Box<Expr> },
}

impl Expr {
    pub fn width(&self) -> u32 {
        match self {
            Expr::Var(_, w) | Expr::Const(_, w) => *w,
            Expr::Binary(_, l, _) => l.width(),
            Expr::Concat(l, r) => l.width() + r.width(),
            Expr::Extract { width, .. } => *width,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Ule,
    Ult,
    Uge,
    Ugt,
    Sle,
    Slt,
    Sge,
    Sgt,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Cond {
    Bool(bool),
    Cmp(CmpOp, Expr, Expr),
    Not(Box<Cond>),
    And(Box<Cond>, Box<Cond>),
    Or(Box<Cond>, Box<Cond>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Instr {
    Assign { dst: VarRef, expr: Expr },
    /// Nondeterministic input.
    Input { dst: VarRef },
    Branch { cond: Cond, on_true: usize, on_false: usize },
    Assert { cond: Cond },
    Call { func: FnId, args: Vec<Expr>, ret: Option<VarRef> },
    Return { value: Option<Expr> },
    Spawn { func: FnId },
    /// Waits for the earliest spawned, not yet joined child thread.
    Join,
    Halt,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProgramError {
    #[error("{line}:{col}: syntax error: {msg}")]
    SyntaxError { line: usize, col: usize, msg: String },
    #[error("{line}:{col}: undeclared variable `{name}`")]
    UndeclaredVariable { line: usize, col: usize, name: String },
    #[error("{line}:{col}: unknown function `{name}`")]
    UnknownFunction { line: usize, col: usize, name: String },
    #[error("{line}:{col}: width mismatch: {msg}")]
    WidthMismatch { line: usize, col: usize, msg: String },
    #[error("recursion through `{function}` is not supported")]
    RecursionRejected { function: String },
}
