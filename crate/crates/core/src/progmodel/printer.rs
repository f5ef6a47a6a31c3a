use std::collections::BTreeSet;
use std::fmt::Write;

use super::{BinOp, CmpOp, Cond, Expr, Function, Instr, Program, VarDecl, VarRef};

/// Renders a program back to mini-IR text. Parsing the output yields the
/// same program.
pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for g in &p.globals {
        let _ = writeln!(out, "var {};", decl(g));
    }
    for (i, f) in p.functions.iter().enumerate() {
        if i > 0 || !p.globals.is_empty() {
            out.push('\n');
        }
        print_function(p, f, &mut out);
    }
    out
}

fn decl(d: &VarDecl) -> String {
    match d.init {
        Some(v) => format!("{}: u{} = {v}", d.name, d.width),
        None => format!("{}: u{}", d.name, d.width),
    }
}

fn print_function(p: &Program, f: &Function, out: &mut String) {
    let params: Vec<String> = f.params.iter().map(|d| format!("{}: u{}", d.name, d.width)).collect();
    let _ = write!(out, "fn {}({})", f.name, params.join(", "));
    if let Some(w) = f.ret_width {
        let _ = write!(out, " -> u{w}");
    }
    out.push_str(" {\n");
    for l in &f.locals {
        let _ = writeln!(out, "    var {};", decl(l));
    }
    let targets: BTreeSet<usize> = f
        .body
        .iter()
        .filter_map(|i| match i {
            Instr::Branch { on_true, on_false, .. } => Some([*on_true, *on_false]),
            _ => None,
        })
        .flatten()
        .collect();
    // the final instruction is the implicit terminator added by the parser
    let shown = f.body.len() - 1;
    let names = |r: &VarRef| match r {
        VarRef::Local(i) => f.vars().nth(*i as usize).map(|d| d.name.clone()).unwrap_or_default(),
        VarRef::Global(i) => p.globals[*i as usize].name.clone(),
    };
    for (idx, instr) in f.body.iter().enumerate() {
        if targets.contains(&idx) {
            let _ = writeln!(out, "  label L{idx}:");
        }
        if idx == shown {
            break;
        }
        let text = match instr {
            Instr::Assign { dst, expr: e } => format!("{} = {};", names(dst), expr(e, &names)),
            Instr::Input { dst } => format!("{} = nondet();", names(dst)),
            Instr::Branch {
                cond: Cond::Bool(true),
                on_true,
                on_false,
            } if on_true == on_false => format!("goto L{on_true};"),
            Instr::Branch { cond: c, on_true, on_false } => {
                format!("if ({}) goto L{on_true} else goto L{on_false};", cond(c, &names))
            }
            Instr::Assert { cond: c } => format!("assert({});", cond(c, &names)),
            Instr::Call { func, args, ret } => {
                let args: Vec<String> = args.iter().map(|a| expr(a, &names)).collect();
                let call = format!("call {}({})", p.function(*func).name, args.join(", "));
                match ret {
                    Some(r) => format!("{} = {call};", names(r)),
                    None => format!("{call};"),
                }
            }
            Instr::Return { value: None } => "return;".to_string(),
            Instr::Return { value: Some(e) } => format!("return {};", expr(e, &names)),
            Instr::Spawn { func } => format!("spawn {};", p.function(*func).name),
            Instr::Join => "join;".to_string(),
            Instr::Halt => "halt;".to_string(),
        };
        let _ = writeln!(out, "    {text}");
    }
    out.push_str("}\n");
}

fn expr(e: &Expr, names: &dyn Fn(&VarRef) -> String) -> String {
    match e {
        Expr::Var(r, _) => names(r),
        Expr::Const(v, _) => v.to_string(),
        Expr::Binary(op, l, r) => {
            let sym = match op {
                BinOp::Add => "+",
                BinOp::Sub => "-",
                BinOp::Mul => "*",
                BinOp::UDiv => "/u",
                BinOp::Mod => "%",
                BinOp::And => "&",
                BinOp::Or => "|",
                BinOp::Xor => "^",
                BinOp::Shl => "<<",
                BinOp::LShr => ">>u",
            };
            format!("({} {sym} {})", expr(l, names), expr(r, names))
        }
        Expr::Concat(l, r) => format!("({} ++ {})", expr(l, names), expr(r, names)),
        Expr::Extract { width, low, arg } => format!("extract({width}, {low}, {})", expr(arg, names)),
    }
}

fn cond(c: &Cond, names: &dyn Fn(&VarRef) -> String) -> String {
    match c {
        Cond::Bool(b) => b.to_string(),
        Cond::Cmp(op, l, r) => {
            let sym = match op {
                CmpOp::Eq => "==",
                CmpOp::Ne => "!=",
                CmpOp::Ule => "<=u",
                CmpOp::Ult => "<u",
                CmpOp::Uge => ">=u",
                CmpOp::Ugt => ">u",
                CmpOp::Sle => "<=s",
                CmpOp::Slt => "<s",
                CmpOp::Sge => ">=s",
                CmpOp::Sgt => ">s",
            };
            format!("{} {sym} {}", expr(l, names), expr(r, names))
        }
        Cond::Not(c) => format!("!({})", cond(c, names)),
        Cond::And(a, b) => format!("({}) && ({})", cond(a, names), cond(b, names)),
        Cond::Or(a, b) => format!("({}) || ({})", cond(a, names), cond(b, names)),
    }
}
