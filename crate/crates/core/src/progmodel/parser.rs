use std::collections::{BTreeMap, HashMap};

use super::{BinOp, CmpOp, Cond, Expr, FnId, Function, Instr, Program, ProgramError, VarDecl, VarRef};
use crate::bvlogic::MAX_WIDTH;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Pos {
    line: usize,
    col: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Num(u64),
    Sym(&'static str),
    Eof,
}

const SYMBOLS: &[&str] = &[
    // longest first
    ">>u", "<=u", "<=s", ">=u", ">=s", "==", "!=", "&&", "||", "<<", "++", "->", "/u", "<u", "<s", ">u", ">s", "(",
    ")", "{", "}", ",", ";", ":", "=", "+", "-", "*", "%", "&", "|", "^", "!",
];

fn lex(src: &str) -> Result<Vec<(Tok, Pos)>, ProgramError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let is_ident = |c: char| c.is_ascii_alphanumeric() || c == '_';
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && is_ident(chars[i]) {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let parsed = if let Some(h) = text.strip_prefix("0x") {
                u64::from_str_radix(h, 16)
            } else if let Some(b) = text.strip_prefix("0b") {
                u64::from_str_radix(b, 2)
            } else {
                text.parse()
            };
            let value = parsed.map_err(|_| ProgramError::SyntaxError {
                line,
                col,
                msg: format!("bad number literal `{text}`"),
            })?;
            col += i - start;
            out.push((Tok::Num(value), pos));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && is_ident(chars[i]) {
                i += 1;
            }
            col += i - start;
            out.push((Tok::Ident(chars[start..i].iter().collect()), pos));
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
        let sym = SYMBOLS.iter().find(|s| {
            if !rest.starts_with(**s) {
                return false;
            }
            // a trailing u/s suffix must not run into an identifier
            let last = s.chars().last().unwrap();
            if last == 'u' || last == 's' {
                !chars.get(i + s.len()).is_some_and(|&n| is_ident(n))
            } else {
                true
            }
        });
        match sym {
            Some(s) => {
                i += s.len();
                col += s.len();
                out.push((Tok::Sym(s), pos));
            }
            None => {
                return Err(ProgramError::SyntaxError {
                    line,
                    col,
                    msg: format!("unexpected character `{c}`"),
                })
            }
        }
    }
    out.push((Tok::Eof, Pos { line, col }));
    Ok(out)
}

// Untyped syntax, resolved in a second pass.

#[derive(Clone, Debug)]
enum PExpr {
    Var(String, Pos),
    Lit(u64, Pos),
    Bin(BinOp, Box<PExpr>, Box<PExpr>),
    Concat(Box<PExpr>, Box<PExpr>, Pos),
    Extract(u32, u32, Box<PExpr>, Pos),
}

#[derive(Clone, Debug)]
enum PCond {
    Bool(bool),
    Cmp(CmpOp, PExpr, PExpr, Pos),
    Not(Box<PCond>),
    And(Box<PCond>, Box<PCond>),
    Or(Box<PCond>, Box<PCond>),
}

#[derive(Clone, Debug)]
enum PStmt {
    Assign(String, Pos, PExpr),
    Input(String, Pos),
    Call(Option<(String, Pos)>, String, Vec<PExpr>, Pos),
    If(PCond, String, String, Pos),
    Goto(String, Pos),
    Label(String, Pos),
    Assert(PCond),
    Return(Option<PExpr>, Pos),
    Spawn(String, Pos),
    Join,
    Halt,
}

struct PFunction {
    name: String,
    pos: Pos,
    params: Vec<VarDecl>,
    locals: Vec<VarDecl>,
    ret_width: Option<u32>,
    body: Vec<PStmt>,
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ProgramError> {
        let p = self.pos();
        Err(ProgramError::SyntaxError {
            line: p.line,
            col: p.col,
            msg: msg.into(),
        })
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == kw)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), ProgramError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.err(format!("expected `{s}`, found {}", describe(self.peek())))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), ProgramError> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected `{kw}`, found {}", describe(self.peek())))
        }
    }

    fn ident(&mut self) -> Result<String, ProgramError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            t => self.err(format!("expected identifier, found {}", describe(&t))),
        }
    }

    fn number(&mut self) -> Result<u64, ProgramError> {
        match self.peek().clone() {
            Tok::Num(n) => {
                self.bump();
                Ok(n)
            }
            t => self.err(format!("expected number, found {}", describe(&t))),
        }
    }

    fn width_type(&mut self) -> Result<u32, ProgramError> {
        let pos = self.pos();
        let name = self.ident()?;
        let w = name
            .strip_prefix('u')
            .and_then(|d| d.parse::<u32>().ok())
            .filter(|w| (1..=MAX_WIDTH).contains(w));
        w.ok_or(ProgramError::SyntaxError {
            line: pos.line,
            col: pos.col,
            msg: format!("expected a type `u1`..`u64`, found `{name}`"),
        })
    }

    /// `var NAME: uN [= LIT];` with the `var` keyword already consumed.
    fn var_decl(&mut self) -> Result<VarDecl, ProgramError> {
        let name = self.ident()?;
        self.expect_sym(":")?;
        let width = self.width_type()?;
        let init = if self.eat_sym("=") {
            let pos = self.pos();
            let v = self.number()?;
            if v > crate::bvlogic::mask(width) {
                return Err(ProgramError::WidthMismatch {
                    line: pos.line,
                    col: pos.col,
                    msg: format!("initial value {v} does not fit u{width}"),
                });
            }
            Some(v)
        } else {
            None
        };
        self.expect_sym(";")?;
        Ok(VarDecl { name, width, init })
    }

    fn program(&mut self) -> Result<(Vec<VarDecl>, Vec<PFunction>), ProgramError> {
        let mut globals = Vec::new();
        let mut functions = Vec::new();
        loop {
            match self.peek() {
                Tok::Eof => break,
                Tok::Ident(k) if k == "var" => {
                    self.bump();
                    globals.push(self.var_decl()?);
                }
                Tok::Ident(k) if k == "fn" => {
                    self.bump();
                    functions.push(self.function()?);
                }
                t => return self.err(format!("expected `fn` or `var`, found {}", describe(t))),
            }
        }
        Ok((globals, functions))
    }

    fn function(&mut self) -> Result<PFunction, ProgramError> {
        let pos = self.pos();
        let name = self.ident()?;
        self.expect_sym("(")?;
        let mut params = Vec::new();
        if !self.is_sym(")") {
            loop {
                let pname = self.ident()?;
                self.expect_sym(":")?;
                let width = self.width_type()?;
                params.push(VarDecl {
                    name: pname,
                    width,
                    init: None,
                });
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        self.expect_sym(")")?;
        let ret_width = if self.eat_sym("->") {
            Some(self.width_type()?)
        } else {
            None
        };
        self.expect_sym("{")?;
        let mut locals = Vec::new();
        let mut body = Vec::new();
        while !self.eat_sym("}") {
            if self.is_kw("var") {
                self.bump();
                locals.push(self.var_decl()?);
            } else {
                body.push(self.statement()?);
            }
        }
        Ok(PFunction {
            name,
            pos,
            params,
            locals,
            ret_width,
            body,
        })
    }

    fn statement(&mut self) -> Result<PStmt, ProgramError> {
        let pos = self.pos();
        let kw = match self.peek() {
            Tok::Ident(s) => s.clone(),
            t => return self.err(format!("expected a statement, found {}", describe(t))),
        };
        let stmt = match kw.as_str() {
            "label" => {
                self.bump();
                let l = self.ident()?;
                self.expect_sym(":")?;
                return Ok(PStmt::Label(l, pos));
            }
            "if" => {
                self.bump();
                self.expect_sym("(")?;
                let c = self.cond()?;
                self.expect_sym(")")?;
                self.expect_kw("goto")?;
                let l1 = self.ident()?;
                self.expect_kw("else")?;
                self.expect_kw("goto")?;
                let l2 = self.ident()?;
                PStmt::If(c, l1, l2, pos)
            }
            "goto" => {
                self.bump();
                PStmt::Goto(self.ident()?, pos)
            }
            "assert" => {
                self.bump();
                self.expect_sym("(")?;
                let c = self.cond()?;
                self.expect_sym(")")?;
                PStmt::Assert(c)
            }
            "return" => {
                self.bump();
                if self.is_sym(";") {
                    PStmt::Return(None, pos)
                } else {
                    PStmt::Return(Some(self.expr()?), pos)
                }
            }
            "spawn" => {
                self.bump();
                PStmt::Spawn(self.ident()?, pos)
            }
            "join" => {
                self.bump();
                PStmt::Join
            }
            "halt" => {
                self.bump();
                PStmt::Halt
            }
            "call" => {
                self.bump();
                let (f, args) = self.call_tail()?;
                PStmt::Call(None, f, args, pos)
            }
            _ => {
                let dst = self.ident()?;
                self.expect_sym("=")?;
                if self.is_kw("nondet") {
                    self.bump();
                    self.expect_sym("(")?;
                    self.expect_sym(")")?;
                    PStmt::Input(dst, pos)
                } else if self.is_kw("call") {
                    let cpos = self.pos();
                    self.bump();
                    let (f, args) = self.call_tail()?;
                    PStmt::Call(Some((dst, pos)), f, args, cpos)
                } else {
                    PStmt::Assign(dst, pos, self.expr()?)
                }
            }
        };
        self.expect_sym(";")?;
        Ok(stmt)
    }

    fn call_tail(&mut self) -> Result<(String, Vec<PExpr>), ProgramError> {
        let f = self.ident()?;
        self.expect_sym("(")?;
        let mut args = Vec::new();
        if !self.is_sym(")") {
            loop {
                args.push(self.expr()?);
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        self.expect_sym(")")?;
        Ok((f, args))
    }

    fn cond(&mut self) -> Result<PCond, ProgramError> {
        let mut lhs = self.cond_and()?;
        while self.eat_sym("||") {
            lhs = PCond::Or(Box::new(lhs), Box::new(self.cond_and()?));
        }
        Ok(lhs)
    }

    fn cond_and(&mut self) -> Result<PCond, ProgramError> {
        let mut lhs = self.cond_unary()?;
        while self.eat_sym("&&") {
            lhs = PCond::And(Box::new(lhs), Box::new(self.cond_unary()?));
        }
        Ok(lhs)
    }

    fn cond_unary(&mut self) -> Result<PCond, ProgramError> {
        if self.eat_sym("!") {
            return Ok(PCond::Not(Box::new(self.cond_unary()?)));
        }
        if self.is_kw("true") {
            self.bump();
            return Ok(PCond::Bool(true));
        }
        if self.is_kw("false") {
            self.bump();
            return Ok(PCond::Bool(false));
        }
        if self.is_sym("(") {
            // either a parenthesised condition or a comparison whose left
            // operand starts with a parenthesis
            let save = self.at;
            self.bump();
            if let Ok(c) = self.cond() {
                if self.eat_sym(")") && !self.at_cmp_op() {
                    return Ok(c);
                }
            }
            self.at = save;
        }
        let pos = self.pos();
        let lhs = self.expr()?;
        let op = match self.peek() {
            Tok::Sym(s) => match *s {
                "==" => CmpOp::Eq,
                "!=" => CmpOp::Ne,
                "<=u" => CmpOp::Ule,
                "<u" => CmpOp::Ult,
                ">=u" => CmpOp::Uge,
                ">u" => CmpOp::Ugt,
                "<=s" => CmpOp::Sle,
                "<s" => CmpOp::Slt,
                ">=s" => CmpOp::Sge,
                ">s" => CmpOp::Sgt,
                _ => return self.err(format!("expected a comparison, found `{s}`")),
            },
            t => return self.err(format!("expected a comparison, found {}", describe(t))),
        };
        self.bump();
        let rhs = self.expr()?;
        Ok(PCond::Cmp(op, lhs, rhs, pos))
    }

    fn at_cmp_op(&self) -> bool {
        matches!(self.peek(), Tok::Sym(s) if ["==", "!=", "<=u", "<u", ">=u", ">u", "<=s", "<s", ">=s", ">s"].contains(s))
    }

    fn expr(&mut self) -> Result<PExpr, ProgramError> {
        let mut lhs = self.expr_bin(0)?;
        while self.is_sym("++") {
            let pos = self.pos();
            self.bump();
            lhs = PExpr::Concat(Box::new(lhs), Box::new(self.expr_bin(0)?), pos);
        }
        Ok(lhs)
    }

    fn expr_bin(&mut self, level: usize) -> Result<PExpr, ProgramError> {
        const LEVELS: &[&[(&str, BinOp)]] = &[
            &[("|", BinOp::Or)],
            &[("^", BinOp::Xor)],
            &[("&", BinOp::And)],
            &[("<<", BinOp::Shl), (">>u", BinOp::LShr)],
            &[("+", BinOp::Add), ("-", BinOp::Sub)],
            &[("*", BinOp::Mul), ("/u", BinOp::UDiv), ("%", BinOp::Mod)],
        ];
        if level == LEVELS.len() {
            return self.primary();
        }
        let mut lhs = self.expr_bin(level + 1)?;
        loop {
            let found = LEVELS[level].iter().find(|(s, _)| self.is_sym(s)).map(|(_, op)| *op);
            match found {
                Some(op) => {
                    self.bump();
                    let rhs = self.expr_bin(level + 1)?;
                    lhs = PExpr::Bin(op, Box::new(lhs), Box::new(rhs));
                }
                None => return Ok(lhs),
            }
        }
    }

    fn primary(&mut self) -> Result<PExpr, ProgramError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Num(n) => {
                self.bump();
                Ok(PExpr::Lit(n, pos))
            }
            Tok::Ident(s) if s == "extract" => {
                self.bump();
                self.expect_sym("(")?;
                let n = self.number()?;
                self.expect_sym(",")?;
                let p = self.number()?;
                self.expect_sym(",")?;
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(PExpr::Extract(n as u32, p as u32, Box::new(e), pos))
            }
            Tok::Ident(s) => {
                self.bump();
                Ok(PExpr::Var(s, pos))
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            t => self.err(format!("expected an expression, found {}", describe(&t))),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Num(n) => format!("`{n}`"),
        Tok::Sym(s) => format!("`{s}`"),
        Tok::Eof => "end of input".to_string(),
    }
}

// Resolution and width checking.

struct Scope<'a> {
    locals: HashMap<&'a str, (u32, u32)>,
    globals: &'a HashMap<&'a str, (u32, u32)>,
}

impl Scope<'_> {
    fn lookup(&self, name: &str, pos: Pos) -> Result<(VarRef, u32), ProgramError> {
        if let Some(&(p, w)) = self.locals.get(name) {
            return Ok((VarRef::Local(p), w));
        }
        if let Some(&(p, w)) = self.globals.get(name) {
            return Ok((VarRef::Global(p), w));
        }
        Err(ProgramError::UndeclaredVariable {
            line: pos.line,
            col: pos.col,
            name: name.to_string(),
        })
    }

    fn infer(&self, e: &PExpr) -> Result<Option<u32>, ProgramError> {
        Ok(match e {
            PExpr::Var(n, p) => Some(self.lookup(n, *p)?.1),
            PExpr::Lit(..) => None,
            // both operands share the result width, shift amounts included
            PExpr::Bin(_, l, r) => self.infer(l)?.or(self.infer(r)?),
            PExpr::Concat(l, r, p) => match (self.infer(l)?, self.infer(r)?) {
                (Some(a), Some(b)) => Some(a + b),
                _ => return Err(mismatch(*p, "operands of `++` need known widths")),
            },
            PExpr::Extract(n, ..) => Some(*n),
        })
    }

    fn check(&self, e: &PExpr, width: u32) -> Result<Expr, ProgramError> {
        match e {
            PExpr::Var(n, p) => {
                let (r, w) = self.lookup(n, *p)?;
                if w != width {
                    return Err(mismatch(*p, format!("`{n}` is u{w}, expected u{width}")));
                }
                Ok(Expr::Var(r, w))
            }
            PExpr::Lit(v, p) => {
                if *v > crate::bvlogic::mask(width) {
                    return Err(mismatch(*p, format!("literal {v} does not fit u{width}")));
                }
                Ok(Expr::Const(*v, width))
            }
            PExpr::Bin(op, l, r) => Ok(Expr::Binary(
                *op,
                Box::new(self.check(l, width)?),
                Box::new(self.check(r, width)?),
            )),
            PExpr::Concat(l, r, p) => {
                // one literal operand takes the remaining width
                let (a, b) = match (self.infer(l)?, self.infer(r)?) {
                    (Some(a), Some(b)) => (a, b),
                    (Some(a), None) if a < width => (a, width - a),
                    (None, Some(b)) if b < width => (width - b, b),
                    _ => return Err(mismatch(*p, "operands of `++` need known widths")),
                };
                if a + b != width {
                    return Err(mismatch(*p, format!("concatenation is u{}, expected u{width}", a + b)));
                }
                Ok(Expr::Concat(Box::new(self.check(l, a)?), Box::new(self.check(r, b)?)))
            }
            PExpr::Extract(n, low, arg, p) => {
                if *n != width {
                    return Err(mismatch(*p, format!("extract yields u{n}, expected u{width}")));
                }
                let aw = self
                    .infer(arg)?
                    .ok_or_else(|| mismatch(*p, "extract operand needs a known width"))?;
                if *n == 0 || low + n > aw {
                    return Err(mismatch(*p, format!("extract({n},{low}) out of range for u{aw}")));
                }
                Ok(Expr::Extract {
                    width: *n,
                    low: *low,
                    arg: Box::new(self.check(arg, aw)?),
                })
            }
        }
    }

    fn cond(&self, c: &PCond) -> Result<Cond, ProgramError> {
        Ok(match c {
            PCond::Bool(b) => Cond::Bool(*b),
            PCond::Cmp(op, l, r, p) => {
                let w = match (self.infer(l)?, self.infer(r)?) {
                    (Some(a), Some(b)) if a != b => {
                        return Err(mismatch(*p, format!("comparing u{a} with u{b}")));
                    }
                    (Some(a), _) | (None, Some(a)) => a,
                    (None, None) => return Err(mismatch(*p, "cannot infer the width of a literal comparison")),
                };
                Cond::Cmp(*op, self.check(l, w)?, self.check(r, w)?)
            }
            PCond::Not(c) => Cond::Not(Box::new(self.cond(c)?)),
            PCond::And(a, b) => Cond::And(Box::new(self.cond(a)?), Box::new(self.cond(b)?)),
            PCond::Or(a, b) => Cond::Or(Box::new(self.cond(a)?), Box::new(self.cond(b)?)),
        })
    }
}

fn mismatch(p: Pos, msg: impl Into<String>) -> ProgramError {
    ProgramError::WidthMismatch {
        line: p.line,
        col: p.col,
        msg: msg.into(),
    }
}

fn syntax(p: Pos, msg: impl Into<String>) -> ProgramError {
    ProgramError::SyntaxError {
        line: p.line,
        col: p.col,
        msg: msg.into(),
    }
}

fn declare<'a>(decls: impl Iterator<Item = &'a VarDecl>, pos: Pos) -> Result<HashMap<&'a str, (u32, u32)>, ProgramError> {
    let mut map = HashMap::new();
    for (i, d) in decls.enumerate() {
        if map.insert(d.name.as_str(), (i as u32, d.width)).is_some() {
            return Err(syntax(pos, format!("`{}` declared twice", d.name)));
        }
    }
    Ok(map)
}

/// Parses and checks a mini-IR program.
///
/// Every function body gets an implicit terminator appended: `halt` for
/// `main`, `return` otherwise.
pub fn parse_program(text: &str) -> Result<Program, ProgramError> {
    let mut parser = Parser { toks: lex(text)?, at: 0 };
    let (globals, pfuncs) = parser.program()?;

    let start = Pos { line: 1, col: 1 };
    let global_scope = declare(globals.iter(), start)?;
    let mut by_name: HashMap<&str, FnId> = HashMap::new();
    for (i, f) in pfuncs.iter().enumerate() {
        if by_name.insert(f.name.as_str(), FnId(i)).is_some() {
            return Err(syntax(f.pos, format!("function `{}` defined twice", f.name)));
        }
    }
    let entry = *by_name.get("main").ok_or_else(|| syntax(parser.pos(), "no `main` function"))?;
    if !pfuncs[entry.0].params.is_empty() {
        return Err(syntax(pfuncs[entry.0].pos, "`main` takes no parameters"));
    }

    // Return widths: declared, or inferred from the first typed `return`.
    let mut ret_widths = Vec::with_capacity(pfuncs.len());
    for f in &pfuncs {
        let scope = Scope {
            locals: declare(f.params.iter().chain(f.locals.iter()), f.pos)?,
            globals: &global_scope,
        };
        let mut w = f.ret_width;
        if w.is_none() {
            for s in &f.body {
                if let PStmt::Return(Some(e), _) = s {
                    if let Some(iw) = scope.infer(e)? {
                        w = Some(iw);
                        break;
                    }
                }
            }
        }
        ret_widths.push(w);
    }

    let lookup_fn = |name: &str, pos: Pos| {
        by_name.get(name).copied().ok_or_else(|| ProgramError::UnknownFunction {
            line: pos.line,
            col: pos.col,
            name: name.to_string(),
        })
    };

    let mut functions = Vec::with_capacity(pfuncs.len());
    let mut edges: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (fi, f) in pfuncs.iter().enumerate() {
        let scope = Scope {
            locals: declare(f.params.iter().chain(f.locals.iter()), f.pos)?,
            globals: &global_scope,
        };
        // label -> instruction index
        let mut labels = HashMap::new();
        let mut idx = 0usize;
        for s in &f.body {
            match s {
                PStmt::Label(l, p) => {
                    if labels.insert(l.as_str(), idx).is_some() {
                        return Err(syntax(*p, format!("label `{l}` defined twice")));
                    }
                }
                _ => idx += 1,
            }
        }
        let target = |l: &str, p: Pos| {
            labels
                .get(l)
                .copied()
                .ok_or_else(|| syntax(p, format!("unknown label `{l}`")))
        };
        let assign_target = |name: &str, p: Pos| scope.lookup(name, p);

        let mut body = Vec::with_capacity(idx + 1);
        for s in &f.body {
            let instr = match s {
                PStmt::Label(..) => continue,
                PStmt::Assign(dst, p, e) => {
                    let (r, w) = assign_target(dst, *p)?;
                    Instr::Assign {
                        dst: r,
                        expr: scope.check(e, w)?,
                    }
                }
                PStmt::Input(dst, p) => Instr::Input {
                    dst: assign_target(dst, *p)?.0,
                },
                PStmt::Call(dst, callee, args, p) => {
                    let id = lookup_fn(callee, *p)?;
                    edges.entry(fi).or_default().push(id.0);
                    let cf = &pfuncs[id.0];
                    if cf.params.len() != args.len() {
                        return Err(syntax(
                            *p,
                            format!("`{callee}` takes {} arguments, got {}", cf.params.len(), args.len()),
                        ));
                    }
                    let args = args
                        .iter()
                        .zip(&cf.params)
                        .map(|(a, d)| scope.check(a, d.width))
                        .collect::<Result<Vec<_>, _>>()?;
                    let ret = match dst {
                        None => None,
                        Some((name, dp)) => {
                            let (r, w) = assign_target(name, *dp)?;
                            match ret_widths[id.0] {
                                Some(rw) if rw == w => {}
                                Some(rw) => {
                                    return Err(mismatch(*dp, format!("`{callee}` returns u{rw}, `{name}` is u{w}")))
                                }
                                None => return Err(mismatch(*dp, format!("`{callee}` returns no value"))),
                            }
                            Some(r)
                        }
                    };
                    Instr::Call { func: id, args, ret }
                }
                PStmt::If(c, l1, l2, p) => Instr::Branch {
                    cond: scope.cond(c)?,
                    on_true: target(l1, *p)?,
                    on_false: target(l2, *p)?,
                },
                PStmt::Goto(l, p) => {
                    let t = target(l, *p)?;
                    Instr::Branch {
                        cond: Cond::Bool(true),
                        on_true: t,
                        on_false: t,
                    }
                }
                PStmt::Assert(c) => Instr::Assert { cond: scope.cond(c)? },
                PStmt::Return(None, _) => Instr::Return { value: None },
                PStmt::Return(Some(e), p) => {
                    let w = ret_widths[fi].ok_or_else(|| mismatch(*p, "cannot infer the return width"))?;
                    Instr::Return {
                        value: Some(scope.check(e, w)?),
                    }
                }
                PStmt::Spawn(callee, p) => {
                    let id = lookup_fn(callee, *p)?;
                    if !pfuncs[id.0].params.is_empty() {
                        return Err(syntax(*p, format!("spawned function `{callee}` must take no parameters")));
                    }
                    edges.entry(fi).or_default().push(id.0);
                    Instr::Spawn { func: id }
                }
                PStmt::Join => Instr::Join,
                PStmt::Halt => Instr::Halt,
            };
            body.push(instr);
        }
        body.push(if FnId(fi) == entry {
            Instr::Halt
        } else {
            Instr::Return { value: None }
        });
        functions.push(Function {
            name: f.name.clone(),
            params: f.params.clone(),
            locals: f.locals.clone(),
            ret_width: ret_widths[fi],
            body,
        });
    }

    reject_recursion(&functions, &edges)?;
    Ok(Program {
        globals,
        functions,
        entry,
    })
}

fn reject_recursion(functions: &[Function], edges: &BTreeMap<usize, Vec<usize>>) -> Result<(), ProgramError> {
    // 0 = unvisited, 1 = on stack, 2 = done
    fn visit(n: usize, edges: &BTreeMap<usize, Vec<usize>>, mark: &mut [u8]) -> Option<usize> {
        mark[n] = 1;
        for &m in edges.get(&n).map(Vec::as_slice).unwrap_or(&[]) {
            match mark[m] {
                1 => return Some(m),
                0 => {
                    if let Some(c) = visit(m, edges, mark) {
                        return Some(c);
                    }
                }
                _ => {}
            }
        }
        mark[n] = 2;
        None
    }
    let mut mark = vec![0u8; functions.len()];
    for n in 0..functions.len() {
        if mark[n] == 0 {
            if let Some(c) = visit(n, edges, &mut mark) {
                return Err(ProgramError::RecursionRejected {
                    function: functions[c].name.clone(),
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_main_is_single_halt() {
        let p = parse_program("fn main() {}").unwrap();
        assert_eq!(p.functions.len(), 1);
        assert_eq!(p.entry_function().body, vec![Instr::Halt]);
    }

    #[test]
    fn literal_widths_come_from_context() {
        let p = parse_program("fn main() { var x: u8; x = (x + 1) * 3; assert((x + 1) == 2); }").unwrap();
        match &p.entry_function().body[0] {
            Instr::Assign { expr, .. } => assert_eq!(expr.width(), 8),
            i => panic!("unexpected {i:?}"),
        }
        assert!(matches!(p.entry_function().body[1], Instr::Assert { .. }));
    }

    #[test]
    fn parenthesised_conditions() {
        let p = parse_program("fn main() { var x: u4; assert((x == 1) || !(x <=u 3 && x != 0)); }").unwrap();
        assert!(matches!(p.entry_function().body[0], Instr::Assert { cond: Cond::Or(..) }));
    }

    #[test]
    fn errors_carry_positions() {
        let e = parse_program("fn main() {\n  x = 1;\n}").unwrap_err();
        assert_eq!(
            e,
            ProgramError::UndeclaredVariable {
                line: 2,
                col: 3,
                name: "x".into()
            }
        );
        let e = parse_program("fn main() {\n  var x: u4;\n  x = 1 +;\n}").unwrap_err();
        assert!(matches!(e, ProgramError::SyntaxError { line: 3, col: 10, .. }), "{e:?}");
    }

    #[test]
    fn width_mismatches_are_rejected() {
        let e = parse_program("fn main() { var x: u4; var y: u8; x = y; }").unwrap_err();
        assert!(matches!(e, ProgramError::WidthMismatch { .. }));
        let e = parse_program("fn main() { var x: u4; x = 16; }").unwrap_err();
        assert!(matches!(e, ProgramError::WidthMismatch { .. }));
        let e = parse_program("fn main() { var x: u4; var y: u8; assert(x == y); }").unwrap_err();
        assert!(matches!(e, ProgramError::WidthMismatch { .. }));
        let e = parse_program("fn f(a: u4) -> u4 { return a; } fn main() { var y: u8; y = call f(1); }").unwrap_err();
        assert!(matches!(e, ProgramError::WidthMismatch { .. }));
    }

    #[test]
    fn recursion_is_rejected() {
        let e = parse_program("fn f() { call g(); } fn g() { call f(); } fn main() { call f(); }").unwrap_err();
        assert!(matches!(e, ProgramError::RecursionRejected { .. }));
        let e = parse_program("fn main() { spawn main; }").unwrap_err();
        assert!(matches!(e, ProgramError::RecursionRejected { .. }));
    }

    #[test]
    fn labels_resolve_to_instruction_indices() {
        let p = parse_program(
            "fn main() { var x: u2; label top: x = x + 1; if (x == 0) goto done else goto top; label done: }",
        )
        .unwrap();
        let body = &p.entry_function().body;
        assert_eq!(body.len(), 3);
        assert!(matches!(body[1], Instr::Branch { on_true: 2, on_false: 0, .. }));
        assert_eq!(body[2], Instr::Halt);
    }

    #[test]
    fn unknown_label_and_function() {
        assert!(matches!(
            parse_program("fn main() { goto nowhere; }").unwrap_err(),
            ProgramError::SyntaxError { .. }
        ));
        assert!(matches!(
            parse_program("fn main() { call nothing(); }").unwrap_err(),
            ProgramError::UnknownFunction { .. }
        ));
    }

    #[test]
    fn globals_and_explicit_initialisers() {
        let p = parse_program("var g: u4 = 3; fn main() { var l: u4; l = g; }").unwrap();
        assert_eq!(p.globals[0].init, Some(3));
        match &p.entry_function().body[0] {
            Instr::Assign { expr: Expr::Var(VarRef::Global(0), 4), .. } => {}
            i => panic!("unexpected {i:?}"),
        }
    }

    #[test]
    fn suffix_operators_do_not_swallow_identifiers() {
        // `<s` followed by an identifier starting with a letter is a lex error
        // rather than a silent mis-parse
        assert!(parse_program("fn main() { var x: u4; var sx: u4; assert(x <=s sx); }").is_ok());
        assert!(parse_program("fn main() { var x: u4; var u: u4; x = x /u u; }").is_ok());
    }
}
