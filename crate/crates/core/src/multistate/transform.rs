//! Successor computation: transformation by assignments and pruning by
//! branch and assertion conditions.

use std::sync::Arc;

use super::{GenTable, MultiState, Representation, SymbolicPart};
use crate::bvlogic::{build, evaluate_bool, Assignment, Term, VarId};
use crate::progmodel::{
    BinOp, CmpOp, Cond, ControlPart, Expr, FnId, Frame, Instr, Mark, MemoryShape, ProgVar, Program, Segment, Thread,
    VarDesc, VarRef,
};

/// A successor state; `pruned` is set when a condition was conjoined, so the
/// state may have become empty.
#[derive(Clone, Debug)]
pub struct Successor {
    pub state: MultiState,
    pub pruned: bool,
}

fn new_segment(program: &Program, func: FnId) -> Segment {
    Segment {
        owner: Some(func),
        vars: program
            .function(func)
            .vars()
            .map(|d| VarDesc {
                name: Arc::from(d.name.as_str()),
                width: d.width,
                mark: d.init.map_or(Mark::Symbolic, Mark::Explicit),
            })
            .collect(),
    }
}

/// The state before `main` starts: one thread at the first instruction of
/// `main` and an empty (true) symbolic part. Segment 0 holds the globals
/// when the program declares any.
pub fn initial_state(program: &Program, repr: Representation) -> MultiState {
    let mut shape = MemoryShape::default();
    if !program.globals.is_empty() {
        shape.segments.insert(
            0,
            Segment {
                owner: None,
                vars: program
                    .globals
                    .iter()
                    .map(|d| VarDesc {
                        name: Arc::from(d.name.as_str()),
                        width: d.width,
                        mark: d.init.map_or(Mark::Symbolic, Mark::Explicit),
                    })
                    .collect(),
            },
        );
    }
    let seg = shape.fresh_segment_id();
    shape.segments.insert(seg, new_segment(program, program.entry));
    MultiState {
        control: ControlPart {
            threads: vec![Thread {
                frames: vec![Frame {
                    function: program.entry,
                    pc: 0,
                    segment: seg,
                    ret_dst: None,
                }],
                children: Vec::new(),
                joined: 0,
            }],
        },
        shape,
        symbolic: SymbolicPart::empty(repr),
        gens: GenTable::new(),
        error: false,
    }
}

/// Builder for one successor executing in a given thread.
struct Exec<'a> {
    program: &'a Program,
    state: MultiState,
    thread: usize,
}

impl Exec<'_> {
    fn frame(&self) -> &Frame {
        self.state.control.threads[self.thread].top().expect("thread is running")
    }

    fn frame_mut(&mut self) -> &mut Frame {
        self.state.control.threads[self.thread]
            .frames
            .last_mut()
            .expect("thread is running")
    }

    fn resolve(&self, r: VarRef) -> ProgVar {
        match r {
            VarRef::Local(position) => ProgVar {
                segment: self.frame().segment,
                position,
            },
            VarRef::Global(position) => ProgVar { segment: 0, position },
        }
    }

    fn desc(&self, pv: ProgVar) -> &VarDesc {
        self.state.shape.var(pv).expect("variable resolves in the memory shape")
    }

    /// Current value of `pv` as a term. A symbolic variable never seen
    /// before gets a vacuous first generation.
    fn read(&mut self, pv: ProgVar) -> Term {
        let (width, mark) = {
            let d = self.desc(pv);
            (d.width, d.mark)
        };
        match mark {
            Mark::Explicit(v) => Term::bv(v, width),
            Mark::Symbolic => {
                let id = match self.state.prog(pv) {
                    Some(id) => id,
                    None => self.state.bump_vacuous(pv, width),
                };
                Term::var(id, width)
            }
        }
    }

    fn expr(&mut self, e: &Expr) -> Term {
        match e {
            Expr::Var(r, _) => {
                let pv = self.resolve(*r);
                self.read(pv)
            }
            Expr::Const(v, w) => Term::bv(*v, *w),
            Expr::Binary(op, l, r) => {
                let (l, r) = (self.expr(l), self.expr(r));
                match op {
                    BinOp::Add => build::add(l, r),
                    BinOp::Sub => build::sub(l, r),
                    BinOp::Mul => build::mul(l, r),
                    BinOp::UDiv => build::udiv(l, r),
                    BinOp::Mod => build::modulo(l, r),
                    BinOp::And => apply(crate::bvlogic::Op::And, l, r),
                    BinOp::Or => apply(crate::bvlogic::Op::Or, l, r),
                    BinOp::Xor => apply(crate::bvlogic::Op::Xor, l, r),
                    BinOp::Shl => apply(crate::bvlogic::Op::Shl, l, r),
                    BinOp::LShr => apply(crate::bvlogic::Op::LShr, l, r),
                }
            }
            Expr::Concat(l, r) => {
                let (l, r) = (self.expr(l), self.expr(r));
                apply(crate::bvlogic::Op::Concat, l, r)
            }
            Expr::Extract { width, low, arg } => {
                let a = self.expr(arg);
                Term::apply(
                    crate::bvlogic::Op::Extract {
                        width: *width,
                        low: *low,
                    },
                    vec![a],
                )
                .expect("extract checked by the parser")
            }
        }
    }

    fn cond(&mut self, c: &Cond) -> Term {
        match c {
            Cond::Bool(b) => Term::bool(*b),
            Cond::Cmp(op, l, r) => {
                let (l, r) = (self.expr(l), self.expr(r));
                match op {
                    CmpOp::Eq => build::eq(l, r),
                    CmpOp::Ne => build::ne(l, r),
                    CmpOp::Ule => build::ule(l, r),
                    CmpOp::Ult => build::not(build::ule(r, l)),
                    CmpOp::Uge => build::ule(r, l),
                    CmpOp::Ugt => build::not(build::ule(l, r)),
                    CmpOp::Sle => build::sle(l, r),
                    CmpOp::Slt => build::not(build::sle(r, l)),
                    CmpOp::Sge => build::sle(r, l),
                    CmpOp::Sgt => build::not(build::sle(l, r)),
                }
            }
            Cond::Not(c) => build::not(self.cond(c)),
            Cond::And(a, b) => {
                let (a, b) = (self.cond(a), self.cond(b));
                build::and(vec![a, b])
            }
            Cond::Or(a, b) => {
                let (a, b) = (self.cond(a), self.cond(b));
                build::or(vec![a, b])
            }
        }
    }

    /// `pv := value`. Explicit variables keep ground values explicit and
    /// turn symbolic otherwise.
    fn assign(&mut self, pv: ProgVar, value: Term) {
        let width = self.desc(pv).width;
        if let Mark::Explicit(_) = self.desc(pv).mark {
            if let Some(v) = ground_value(&value) {
                self.state.shape.var_mut(pv).unwrap().mark = Mark::Explicit(v);
                return;
            }
            self.state.shape.var_mut(pv).unwrap().mark = Mark::Symbolic;
        }
        let g = self.state.gens.get(&pv).map_or(1, |g| g + 1);
        self.state.gens.insert(pv, g);
        let lhs = Term::var(VarId::new(pv.segment, pv.position, g), width);
        self.state.symbolic.conjoin_clause(build::eq(lhs, value));
    }

    fn input(&mut self, pv: ProgVar) {
        let width = self.desc(pv).width;
        if let Some(d) = self.state.shape.var_mut(pv) {
            d.mark = Mark::Symbolic;
        }
        self.state.bump_vacuous(pv, width);
    }

    /// Allocates a segment for `func`. Symbolic locals of a reused segment id
    /// get a fresh vacuous generation so stale values are not visible.
    fn allocate(&mut self, func: FnId) -> u32 {
        let seg = self.state.shape.fresh_segment_id();
        let segment = new_segment(self.program, func);
        let nparams = self.program.function(func).params.len();
        let stale: Vec<(ProgVar, u32)> = segment
            .vars
            .iter()
            .enumerate()
            .skip(nparams)
            .filter(|(_, d)| d.mark == Mark::Symbolic)
            .map(|(p, d)| {
                (
                    ProgVar {
                        segment: seg,
                        position: p as u32,
                    },
                    d.width,
                )
            })
            .filter(|(pv, _)| self.state.gens.contains_key(pv))
            .collect();
        self.state.shape.segments.insert(seg, segment);
        for (pv, w) in stale {
            self.state.bump_vacuous(pv, w);
        }
        seg
    }

    fn advance(&mut self) {
        self.frame_mut().pc += 1;
    }

    fn goto(&mut self, pc: usize) {
        self.frame_mut().pc = pc;
    }

    fn finish_thread(&mut self) {
        let frames = std::mem::take(&mut self.state.control.threads[self.thread].frames);
        for f in frames {
            self.state.shape.segments.remove(&f.segment);
        }
    }
}

fn apply(op: crate::bvlogic::Op, a: Term, b: Term) -> Term {
    Term::apply(op, vec![a, b]).expect("operand widths checked by the parser")
}

fn ground_value(t: &Term) -> Option<u64> {
    if !t.free_vars().is_empty() {
        return None;
    }
    match crate::bvlogic::evaluate(t, &Assignment::new()).ok()? {
        crate::bvlogic::Value::Bv(v) => Some(v),
        crate::bvlogic::Value::Bool(_) => None,
    }
}

fn ground_truth(t: &Term) -> Option<bool> {
    if t.free_vars().is_empty() {
        evaluate_bool(t, &Assignment::new()).ok()
    } else {
        None
    }
}

/// Successors of `s` when thread `thread` executes `instr`.
///
/// Branches yield up to two successors pruned by the condition and its
/// negation; assertions yield the passing successor and an error successor.
/// Conditions that are ground after folding explicit values are decided
/// directly and add no clause.
pub fn apply_instruction(program: &Program, s: &MultiState, thread: usize, instr: &Instr) -> Vec<Successor> {
    let mut ex = Exec {
        program,
        state: s.clone(),
        thread,
    };
    let done = |ex: Exec| {
        vec![Successor {
            state: ex.state,
            pruned: false,
        }]
    };
    match instr {
        Instr::Assign { dst, expr } => {
            let value = ex.expr(expr);
            let pv = ex.resolve(*dst);
            ex.assign(pv, value);
            ex.advance();
            done(ex)
        }
        Instr::Input { dst } => {
            let pv = ex.resolve(*dst);
            ex.input(pv);
            ex.advance();
            done(ex)
        }
        Instr::Branch {
            cond,
            on_true,
            on_false,
        } => {
            let c = ex.cond(cond);
            match ground_truth(&c) {
                Some(b) => {
                    ex.goto(if b { *on_true } else { *on_false });
                    done(ex)
                }
                None => {
                    let mut t = Exec {
                        program,
                        state: ex.state.clone(),
                        thread,
                    };
                    t.state.symbolic.conjoin_clause(c.clone());
                    t.goto(*on_true);
                    ex.state.symbolic.conjoin_clause(build::not(c));
                    ex.goto(*on_false);
                    vec![
                        Successor {
                            state: t.state,
                            pruned: true,
                        },
                        Successor {
                            state: ex.state,
                            pruned: true,
                        },
                    ]
                }
            }
        }
        Instr::Assert { cond } => {
            let c = ex.cond(cond);
            match ground_truth(&c) {
                Some(true) => {
                    ex.advance();
                    done(ex)
                }
                Some(false) => {
                    ex.state.error = true;
                    done(ex)
                }
                None => {
                    let mut fail = ex.state.clone();
                    fail.symbolic.conjoin_clause(build::not(c.clone()));
                    fail.error = true;
                    ex.state.symbolic.conjoin_clause(c);
                    ex.advance();
                    vec![
                        Successor {
                            state: ex.state,
                            pruned: true,
                        },
                        Successor {
                            state: fail,
                            pruned: true,
                        },
                    ]
                }
            }
        }
        Instr::Call { func, args, ret } => {
            let values: Vec<Term> = args.iter().map(|a| ex.expr(a)).collect();
            let ret_dst = ret.map(|r| ex.resolve(r));
            ex.advance();
            let seg = ex.allocate(*func);
            for (i, v) in values.into_iter().enumerate() {
                ex.assign(
                    ProgVar {
                        segment: seg,
                        position: i as u32,
                    },
                    v,
                );
            }
            ex.state.control.threads[thread].frames.push(Frame {
                function: *func,
                pc: 0,
                segment: seg,
                ret_dst,
            });
            done(ex)
        }
        Instr::Return { value } => {
            let v = value.as_ref().map(|e| ex.expr(e));
            if ex.state.control.threads[thread].frames.len() == 1 {
                ex.finish_thread();
                return done(ex);
            }
            let frame = ex.state.control.threads[thread].frames.pop().unwrap();
            ex.state.shape.segments.remove(&frame.segment);
            if let (Some(dst), Some(v)) = (frame.ret_dst, v) {
                ex.assign(dst, v);
            }
            done(ex)
        }
        Instr::Spawn { func } => {
            ex.advance();
            let seg = ex.allocate(*func);
            let idx = ex.state.control.threads.len();
            ex.state.control.threads.push(Thread {
                frames: vec![Frame {
                    function: *func,
                    pc: 0,
                    segment: seg,
                    ret_dst: None,
                }],
                children: Vec::new(),
                joined: 0,
            });
            ex.state.control.threads[thread].children.push(idx);
            done(ex)
        }
        Instr::Join => {
            let t = &mut ex.state.control.threads[thread];
            if t.joined < t.children.len() {
                t.joined += 1;
            }
            ex.advance();
            done(ex)
        }
        Instr::Halt => {
            ex.finish_thread();
            done(ex)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::progmodel::{enabled_steps, parse_program};

    fn run_linear(src: &str, steps: usize) -> MultiState {
        let p = parse_program(src).unwrap();
        let mut s = initial_state(&p, Representation::Monolithic);
        for _ in 0..steps {
            let (t, i) = enabled_steps(&s.control, &p)[0];
            let succ = apply_instruction(&p, &s, t, i);
            s = succ.into_iter().next().unwrap().state;
        }
        s
    }

    #[test]
    fn input_adds_vacuous_first_generation() {
        let s = run_linear("fn main() { var x: u4; x = nondet(); }", 1);
        assert_eq!(s.dump(), "x^1 = x^1\n");
    }

    #[test]
    fn explicit_variables_are_folded() {
        let s = run_linear("fn main() { var x: u4 = 3; var y: u4; x = x + 1; y = x * 2; }", 2);
        assert_eq!(s.dump(), "y^1 = (4 * 2)\n");
        let x = s.shape.var(ProgVar { segment: 0, position: 0 }).unwrap();
        assert_eq!(x.mark, Mark::Explicit(4));
    }

    #[test]
    fn explicit_variable_turns_symbolic_on_input() {
        let s = run_linear("fn main() { var x: u4 = 3; x = nondet(); x = x + 1; }", 2);
        assert_eq!(s.dump(), "x^2 = (x^1 + 1)\n");
    }

    #[test]
    fn ground_branch_adds_no_clause() {
        let p = parse_program("fn main() { var x: u4 = 1; if (x == 1) goto a else goto b; label a: halt; label b: }").unwrap();
        let s = initial_state(&p, Representation::Sliced);
        let succ = apply_instruction(&p, &s, 0, &p.entry_function().body[0]);
        assert_eq!(succ.len(), 1);
        assert!(!succ[0].pruned);
        assert_eq!(succ[0].state.control.threads[0].top().unwrap().pc, 1);
        assert!(succ[0].state.symbolic.parts().is_empty());
    }

    #[test]
    fn call_binds_parameters_and_returns_value() {
        let src = "fn f(a: u4) -> u4 { var r: u4; r = a + 1; return r; } fn main() { var x: u4; x = call f(2); }";
        let s = run_linear(src, 3);
        assert_eq!(s.control.threads[0].frames.len(), 1);
        assert_eq!(s.shape.segments.len(), 1);
        // callee names are gone once its segment is freed
        assert_eq!(s.dump(), "x^1 = s1_p1^1 && s1_p0^1 = 2 && s1_p1^1 = (s1_p0^1 + 1)\n");
    }

    #[test]
    fn reused_segment_gets_fresh_generations() {
        let src = "fn f() -> u4 { var r: u4; return r; } fn main() { var x: u4; var y: u4; x = call f(); y = call f(); }";
        let s = run_linear(src, 4);
        // second activation reads r^2, not the first activation's r^1
        let d = s.dump();
        assert!(d.contains("y^1 = s1_p0^2"), "{d}");
    }

    #[test]
    fn spawn_and_join() {
        let p = parse_program("fn t() { var v: u2; v = 1; } fn main() { spawn t; join; }").unwrap();
        let s0 = initial_state(&p, Representation::Sliced);
        let s1 = apply_instruction(&p, &s0, 0, &p.entry_function().body[0]).remove(0).state;
        assert_eq!(s1.control.threads.len(), 2);
        let steps = enabled_steps(&s1.control, &p);
        assert_eq!(steps.len(), 1);
        assert_eq!(steps[0].0, 1);
        let s2 = apply_instruction(&p, &s1, 1, steps[0].1).remove(0).state;
        let s3 = apply_instruction(&p, &s2, 1, enabled_steps(&s2.control, &p)[0].1).remove(0).state;
        assert!(s3.control.threads[1].is_finished());
        let steps = enabled_steps(&s3.control, &p);
        assert_eq!(steps.len(), 1);
        assert_eq!(steps[0], (0, &Instr::Join));
    }

    #[test]
    fn worked_example_symbolic_part() {
        let src = "fn main() { var x: u32; var y: u32;
            x = nondet(); y = x + 5; x = x + 10;
            if (x <=s y) goto then else goto done;
            label then: y = y + 1;
            label done: }";
        let p = parse_program(src).unwrap();
        let mut s = initial_state(&p, Representation::Monolithic);
        for _ in 0..3 {
            s = apply_instruction(&p, &s, 0, &p.entry_function().body[s.control.threads[0].top().unwrap().pc]).remove(0).state;
        }
        let taken = apply_instruction(&p, &s, 0, &p.entry_function().body[3]).remove(0);
        assert!(taken.pruned);
        let s = apply_instruction(&p, &taken.state, 0, &p.entry_function().body[4]).remove(0).state;
        assert_eq!(s.dump(), "x^2 = (x^1 + 10) && y^1 = (x^1 + 5) && y^2 = (y^1 + 1) && x^2 <=s y^1\n");
    }
}
