//! SMT-LIB v2 rendering (logic BV).

use std::fmt::Write;

use super::term::{op_name, Node};
use super::{Conjunction, Op, Term};

/// Renders a constant as `#x..` when the width is a multiple of four and
/// `#b..` otherwise.
pub fn literal(value: u64, width: u32) -> String {
    if width.is_multiple_of(4) {
        format!("#x{:0>1$x}", value, (width / 4) as usize)
    } else {
        format!("#b{:0>1$b}", value, width as usize)
    }
}

fn sort_text(width: u32) -> String {
    format!("(_ BitVec {width})")
}

/// Renders a term as an s-expression.
pub fn expr(t: &Term) -> String {
    let mut out = String::new();
    write_expr(t, &mut out);
    out
}

fn write_expr(t: &Term, out: &mut String) {
    match t.node() {
        Node::Var(id, _) => out.push_str(&id.smt_name()),
        Node::Const(v, w) => out.push_str(&literal(*v, *w)),
        Node::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Node::Apply { op, args, .. } => {
            out.push('(');
            match op {
                Op::Extract { width, low } => {
                    let _ = write!(out, "(_ extract {} {})", low + width - 1, low);
                }
                _ => out.push_str(op_name(*op)),
            }
            for a in args {
                out.push(' ');
                write_expr(a, out);
            }
            out.push(')');
        }
        Node::Forall { bound, body } => {
            out.push_str("(forall (");
            for (i, (id, w)) in bound.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "({} {})", id.smt_name(), sort_text(*w));
            }
            out.push_str(") ");
            write_expr(body, out);
            out.push(')');
        }
    }
}

/// A complete script: declarations of all free variables, one assertion and
/// `(check-sat)`.
pub fn script(assertion: &Term) -> String {
    let mut out = String::from("(set-logic BV)\n");
    for (id, w) in assertion.typed_free_vars() {
        let _ = writeln!(out, "(declare-fun {} () {})", id.smt_name(), sort_text(w));
    }
    let _ = writeln!(out, "(assert {})", expr(assertion));
    out.push_str("(check-sat)\n");
    out
}

/// Satisfiability script for a conjunction.
pub fn conjunction_script(c: &Conjunction) -> String {
    script(&c.to_term())
}
