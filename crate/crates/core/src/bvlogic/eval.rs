use std::collections::HashMap;

use thiserror::Error;

use super::term::{mask, Node};
use super::{Op, Sort, Term, VarId};

/// Values for free variables.
pub type Assignment = HashMap<VarId, u64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Value {
    Bv(u64),
    Bool(bool),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("variable {0} has no value")]
    UnassignedVariable(VarId),
    #[error("value {value} does not fit {width} bits for {var}")]
    ValueTooWide { var: VarId, value: u64, width: u32 },
    #[error("expected a {0:?} term")]
    SortError(Sort),
}

fn to_signed(v: u64, width: u32) -> i64 {
    if width >= 64 {
        v as i64
    } else {
        let shift = 64 - width;
        ((v << shift) as i64) >> shift
    }
}

/// Bit-vector semantics of a binary or unary function/predicate symbol.
///
/// `width` is the operand width; for `Concat` it is the width of the low
/// operand. Predicates return 0 or 1. Division by zero yields all-ones and
/// `x mod 0 = x`, following SMT-LIB.
pub fn apply_bv(op: Op, a: u64, b: u64, width: u32) -> u64 {
    let m = mask(width);
    match op {
        Op::Eq => (a == b) as u64,
        Op::Ule => (a <= b) as u64,
        Op::Sle => (to_signed(a, width) <= to_signed(b, width)) as u64,
        Op::Add => a.wrapping_add(b) & m,
        Op::Mul => a.wrapping_mul(b) & m,
        Op::UDiv => a.checked_div(b).unwrap_or(m),
        Op::Mod => {
            if b == 0 {
                a
            } else {
                a % b
            }
        }
        Op::And => a & b,
        Op::Or => a | b,
        Op::Xor => a ^ b,
        Op::Shl => {
            if b >= width as u64 {
                0
            } else {
                (a << b) & m
            }
        }
        Op::LShr => {
            if b >= width as u64 {
                0
            } else {
                a >> b
            }
        }
        Op::Concat => (a << width) | b,
        Op::Extract { width: n, low } => (a >> low) & mask(n),
        Op::Not | Op::BAnd | Op::BOr | Op::Implies => unreachable!("connective {op:?} is not a bit-vector op"),
    }
}

/// Evaluates `t` under `mu`. Quantifiers are expanded over their full domain.
pub fn evaluate(t: &Term, mu: &Assignment) -> Result<Value, EvalError> {
    let mut mu = mu.clone();
    eval_in(t, &mut mu)
}

pub fn evaluate_bool(t: &Term, mu: &Assignment) -> Result<bool, EvalError> {
    match evaluate(t, mu)? {
        Value::Bool(b) => Ok(b),
        Value::Bv(_) => Err(EvalError::SortError(Sort::Bool)),
    }
}

fn eval_in(t: &Term, mu: &mut Assignment) -> Result<Value, EvalError> {
    let bv = |v: Value| match v {
        Value::Bv(x) => Ok(x),
        Value::Bool(_) => Err(EvalError::SortError(Sort::BitVec(0))),
    };
    let boolean = |v: Value| match v {
        Value::Bool(b) => Ok(b),
        Value::Bv(_) => Err(EvalError::SortError(Sort::Bool)),
    };
    match t.node() {
        Node::Var(id, w) => {
            let v = *mu.get(id).ok_or(EvalError::UnassignedVariable(*id))?;
            if v & !mask(*w) != 0 {
                return Err(EvalError::ValueTooWide {
                    var: *id,
                    value: v,
                    width: *w,
                });
            }
            Ok(Value::Bv(v))
        }
        Node::Const(v, _) => Ok(Value::Bv(*v)),
        Node::Bool(b) => Ok(Value::Bool(*b)),
        Node::Apply { op, args, .. } => match op {
            Op::Not => Ok(Value::Bool(!boolean(eval_in(&args[0], mu)?)?)),
            Op::BAnd => {
                for a in args {
                    if !boolean(eval_in(a, mu)?)? {
                        return Ok(Value::Bool(false));
                    }
                }
                Ok(Value::Bool(true))
            }
            Op::BOr => {
                for a in args {
                    if boolean(eval_in(a, mu)?)? {
                        return Ok(Value::Bool(true));
                    }
                }
                Ok(Value::Bool(false))
            }
            Op::Implies => {
                let lhs = boolean(eval_in(&args[0], mu)?)?;
                Ok(Value::Bool(!lhs || boolean(eval_in(&args[1], mu)?)?))
            }
            Op::Extract { .. } => {
                let a = bv(eval_in(&args[0], mu)?)?;
                Ok(Value::Bv(apply_bv(*op, a, 0, 0)))
            }
            _ => {
                let a = bv(eval_in(&args[0], mu)?)?;
                let b = bv(eval_in(&args[1], mu)?)?;
                let w = match op {
                    Op::Concat => args[1].width(),
                    _ => args[0].width(),
                }
                .ok_or(EvalError::SortError(Sort::BitVec(0)))?;
                let r = apply_bv(*op, a, b, w);
                Ok(if op.is_predicate() {
                    Value::Bool(r != 0)
                } else {
                    Value::Bv(r)
                })
            }
        },
        Node::Forall { bound, body } => {
            let saved: Vec<Option<u64>> = bound.iter().map(|(id, _)| mu.get(id).copied()).collect();
            let result = forall_rec(bound, 0, body, mu);
            for ((id, _), old) in bound.iter().zip(saved) {
                match old {
                    Some(v) => mu.insert(*id, v),
                    None => mu.remove(id),
                };
            }
            result.map(Value::Bool)
        }
    }
}

fn forall_rec(bound: &[(VarId, u32)], i: usize, body: &Term, mu: &mut Assignment) -> Result<bool, EvalError> {
    if i == bound.len() {
        return match eval_in(body, mu)? {
            Value::Bool(b) => Ok(b),
            Value::Bv(_) => Err(EvalError::SortError(Sort::Bool)),
        };
    }
    let (id, w) = bound[i];
    let top = mask(w);
    let mut v = 0u64;
    loop {
        mu.insert(id, v);
        if !forall_rec(bound, i + 1, body, mu)? {
            return Ok(false);
        }
        if v == top {
            return Ok(true);
        }
        v += 1;
    }
}
