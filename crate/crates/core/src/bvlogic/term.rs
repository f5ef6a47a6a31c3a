use std::collections::BTreeSet;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, OnceLock};

use super::{Side, Sort, SortError, VarId, MAX_WIDTH};

/// Function and predicate symbols of the bit-vector theory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Op {
    Eq,
    Ule,
    Sle,
    Add,
    Mul,
    UDiv,
    /// Unsigned remainder; `x mod 0 = x`.
    Mod,
    And,
    Or,
    Xor,
    Shl,
    LShr,
    Concat,
    /// `width` bits starting at bit `low`.
    Extract { width: u32, low: u32 },
    Not,
    BAnd,
    BOr,
    Implies,
}

impl Op {
    fn tag(self) -> u8 {
        match self {
            Op::Eq => 0,
            Op::Ule => 1,
            Op::Sle => 2,
            Op::Add => 3,
            Op::Mul => 4,
            Op::UDiv => 5,
            Op::Mod => 6,
            Op::And => 7,
            Op::Or => 8,
            Op::Xor => 9,
            Op::Shl => 10,
            Op::LShr => 11,
            Op::Concat => 12,
            Op::Extract { .. } => 13,
            Op::Not => 14,
            Op::BAnd => 15,
            Op::BOr => 16,
            Op::Implies => 17,
        }
    }

    pub fn is_predicate(self) -> bool {
        matches!(self, Op::Eq | Op::Ule | Op::Sle)
    }

    pub fn is_connective(self) -> bool {
        matches!(self, Op::Not | Op::BAnd | Op::BOr | Op::Implies)
    }
}

#[derive(Debug)]
pub(crate) enum Node {
    Var(VarId, u32),
    Const(u64, u32),
    Bool(bool),
    Apply { op: Op, args: Vec<Term>, sort: Sort },
    Forall { bound: Vec<(VarId, u32)>, body: Term },
}

#[derive(Debug)]
struct Inner {
    node: Node,
    encoding: OnceLock<Box<[u8]>>,
}

/// An immutable, cheaply clonable, well-sorted term.
///
/// Equality, hashing and ordering are structural and agree with the
/// canonical byte encoding, so sorting terms sorts them canonically.
#[derive(Clone)]
pub struct Term(Arc<Inner>);

pub(crate) fn mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

fn check_width(width: u32) -> Result<u32, SortError> {
    if width == 0 || width > MAX_WIDTH {
        Err(SortError::BadWidth(width))
    } else {
        Ok(width)
    }
}

impl Term {
    fn new(node: Node) -> Self {
        Term(Arc::new(Inner {
            node,
            encoding: OnceLock::new(),
        }))
    }

    pub(crate) fn node(&self) -> &Node {
        &self.0.node
    }

    pub fn var(id: VarId, width: u32) -> Self {
        check_width(width).expect("variable width out of range");
        Term::new(Node::Var(id, width))
    }

    /// A bit-vector constant; `value` is truncated to `width` bits.
    pub fn bv(value: u64, width: u32) -> Self {
        check_width(width).expect("constant width out of range");
        Term::new(Node::Const(value & mask(width), width))
    }

    pub fn bool(value: bool) -> Self {
        Term::new(Node::Bool(value))
    }

    /// Applies `op` after checking operand sorts.
    pub fn apply(op: Op, args: Vec<Term>) -> Result<Self, SortError> {
        let sort = result_sort(op, &args)?;
        Ok(Term::new(Node::Apply { op, args, sort }))
    }

    /// Universally binds `bound` in `body`. An empty binder list returns the
    /// body unchanged.
    pub fn forall(bound: Vec<(VarId, u32)>, body: Term) -> Result<Self, SortError> {
        if body.sort() != Sort::Bool {
            return Err(SortError::Mismatch {
                op: "forall",
                found: vec![body.sort()],
            });
        }
        if bound.is_empty() {
            return Ok(body);
        }
        for &(_, w) in &bound {
            check_width(w)?;
        }
        Ok(Term::new(Node::Forall { bound, body }))
    }

    pub fn sort(&self) -> Sort {
        match self.node() {
            Node::Var(_, w) | Node::Const(_, w) => Sort::BitVec(*w),
            Node::Bool(_) | Node::Forall { .. } => Sort::Bool,
            Node::Apply { sort, .. } => *sort,
        }
    }

    /// Width of a bit-vector term, or `None` for Boolean terms.
    pub fn width(&self) -> Option<u32> {
        match self.sort() {
            Sort::BitVec(w) => Some(w),
            Sort::Bool => None,
        }
    }

    pub fn as_var(&self) -> Option<(VarId, u32)> {
        match self.node() {
            Node::Var(id, w) => Some((*id, *w)),
            _ => None,
        }
    }

    pub fn as_const(&self) -> Option<(u64, u32)> {
        match self.node() {
            Node::Const(v, w) => Some((*v, *w)),
            _ => None,
        }
    }

    pub fn as_apply(&self) -> Option<(Op, &[Term])> {
        match self.node() {
            Node::Apply { op, args, .. } => Some((*op, args)),
            _ => None,
        }
    }

    pub fn is_quantified(&self) -> bool {
        match self.node() {
            Node::Forall { .. } => true,
            Node::Apply { args, .. } => args.iter().any(Term::is_quantified),
            _ => false,
        }
    }

    pub fn free_vars(&self) -> BTreeSet<VarId> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut out);
        out
    }

    /// Adds the free variables of `self` to `out`.
    pub fn collect_free(&self, out: &mut BTreeSet<VarId>) {
        match self.node() {
            Node::Var(id, _) => {
                out.insert(*id);
            }
            Node::Const(..) | Node::Bool(_) => {}
            Node::Apply { args, .. } => args.iter().for_each(|a| a.collect_free(out)),
            Node::Forall { bound, body } => {
                let mut inner = BTreeSet::new();
                body.collect_free(&mut inner);
                for (id, _) in bound {
                    inner.remove(id);
                }
                out.extend(inner);
            }
        }
    }

    /// Free variables together with their widths.
    pub fn typed_free_vars(&self) -> Vec<(VarId, u32)> {
        let mut out = std::collections::BTreeMap::new();
        self.collect_typed(&mut out, &BTreeSet::new());
        out.into_iter().collect()
    }

    fn collect_typed(&self, out: &mut std::collections::BTreeMap<VarId, u32>, bound_here: &BTreeSet<VarId>) {
        match self.node() {
            Node::Var(id, w) => {
                if !bound_here.contains(id) {
                    out.insert(*id, *w);
                }
            }
            Node::Const(..) | Node::Bool(_) => {}
            Node::Apply { args, .. } => args.iter().for_each(|a| a.collect_typed(out, bound_here)),
            Node::Forall { bound, body } => {
                let mut inner = bound_here.clone();
                inner.extend(bound.iter().map(|(id, _)| *id));
                body.collect_typed(out, &inner);
            }
        }
    }

    /// Rewrites every variable occurrence (free or bound) to the given side.
    pub fn with_side(&self, side: Side) -> Term {
        self.map_vars(&|id| VarId { side, ..id })
    }

    pub fn map_vars(&self, f: &dyn Fn(VarId) -> VarId) -> Term {
        match self.node() {
            Node::Var(id, w) => Term::new(Node::Var(f(*id), *w)),
            Node::Const(..) | Node::Bool(_) => self.clone(),
            Node::Apply { op, args, sort } => Term::new(Node::Apply {
                op: *op,
                args: args.iter().map(|a| a.map_vars(f)).collect(),
                sort: *sort,
            }),
            Node::Forall { bound, body } => Term::new(Node::Forall {
                bound: bound.iter().map(|(id, w)| (f(*id), *w)).collect(),
                body: body.map_vars(f),
            }),
        }
    }

    /// Prefix-free structural encoding: (tag, width, payload, children).
    pub fn encoding(&self) -> &[u8] {
        self.0.encoding.get_or_init(|| {
            let mut out = Vec::new();
            self.encode_into(&mut out);
            out.into_boxed_slice()
        })
    }

    fn encode_into(&self, out: &mut Vec<u8>) {
        match self.node() {
            Node::Var(id, w) => {
                out.push(0);
                out.extend_from_slice(&w.to_be_bytes());
                encode_var(*id, out);
            }
            Node::Const(v, w) => {
                out.push(1);
                out.extend_from_slice(&w.to_be_bytes());
                out.extend_from_slice(&v.to_be_bytes());
            }
            Node::Bool(b) => {
                out.push(2);
                out.push(*b as u8);
            }
            Node::Apply { op, args, sort } => {
                out.push(3);
                out.push(op.tag());
                out.extend_from_slice(&sort_code(*sort).to_be_bytes());
                if let Op::Extract { width, low } = op {
                    out.extend_from_slice(&width.to_be_bytes());
                    out.extend_from_slice(&low.to_be_bytes());
                }
                out.extend_from_slice(&(args.len() as u32).to_be_bytes());
                for a in args {
                    out.extend_from_slice(a.encoding());
                }
            }
            Node::Forall { bound, body } => {
                out.push(4);
                out.extend_from_slice(&(bound.len() as u32).to_be_bytes());
                for (id, w) in bound {
                    out.extend_from_slice(&w.to_be_bytes());
                    encode_var(*id, out);
                }
                out.extend_from_slice(body.encoding());
            }
        }
    }
}

fn sort_code(sort: Sort) -> u32 {
    match sort {
        Sort::Bool => 0,
        Sort::BitVec(w) => w,
    }
}

fn encode_var(id: VarId, out: &mut Vec<u8>) {
    out.extend_from_slice(&id.segment.to_be_bytes());
    out.extend_from_slice(&id.position.to_be_bytes());
    out.extend_from_slice(&id.generation.to_be_bytes());
    out.push(id.side as u8);
}

fn result_sort(op: Op, args: &[Term]) -> Result<Sort, SortError> {
    let sorts: Vec<Sort> = args.iter().map(Term::sort).collect();
    let mismatch = || SortError::Mismatch {
        op: op_name(op),
        found: sorts.clone(),
    };
    let arity = |n: usize| {
        if args.len() == n {
            Ok(())
        } else {
            Err(SortError::Arity {
                op: op_name(op),
                expected: n,
                found: args.len(),
            })
        }
    };
    match op {
        Op::Eq | Op::Ule | Op::Sle => {
            arity(2)?;
            match (sorts[0], sorts[1]) {
                (Sort::BitVec(a), Sort::BitVec(b)) if a == b => Ok(Sort::Bool),
                _ => Err(mismatch()),
            }
        }
        Op::Add | Op::Mul | Op::UDiv | Op::Mod | Op::And | Op::Or | Op::Xor | Op::Shl | Op::LShr => {
            arity(2)?;
            match (sorts[0], sorts[1]) {
                (Sort::BitVec(a), Sort::BitVec(b)) if a == b => Ok(Sort::BitVec(a)),
                _ => Err(mismatch()),
            }
        }
        Op::Concat => {
            arity(2)?;
            match (sorts[0], sorts[1]) {
                (Sort::BitVec(a), Sort::BitVec(b)) => Ok(Sort::BitVec(check_width(a + b)?)),
                _ => Err(mismatch()),
            }
        }
        Op::Extract { width, low } => {
            arity(1)?;
            match sorts[0] {
                Sort::BitVec(w) if width >= 1 && low.checked_add(width).is_some_and(|hi| hi <= w) => {
                    Ok(Sort::BitVec(width))
                }
                _ => Err(mismatch()),
            }
        }
        Op::Not => {
            arity(1)?;
            if sorts[0] == Sort::Bool {
                Ok(Sort::Bool)
            } else {
                Err(mismatch())
            }
        }
        Op::Implies => {
            arity(2)?;
            if sorts.iter().all(|s| *s == Sort::Bool) {
                Ok(Sort::Bool)
            } else {
                Err(mismatch())
            }
        }
        Op::BAnd | Op::BOr => {
            if args.is_empty() {
                return Err(SortError::Arity {
                    op: op_name(op),
                    expected: 1,
                    found: 0,
                });
            }
            if sorts.iter().all(|s| *s == Sort::Bool) {
                Ok(Sort::Bool)
            } else {
                Err(mismatch())
            }
        }
    }
}

pub(crate) fn op_name(op: Op) -> &'static str {
    match op {
        Op::Eq => "=",
        Op::Ule => "bvule",
        Op::Sle => "bvsle",
        Op::Add => "bvadd",
        Op::Mul => "bvmul",
        Op::UDiv => "bvudiv",
        Op::Mod => "bvurem",
        Op::And => "bvand",
        Op::Or => "bvor",
        Op::Xor => "bvxor",
        Op::Shl => "bvshl",
        Op::LShr => "bvlshr",
        Op::Concat => "concat",
        Op::Extract { .. } => "extract",
        Op::Not => "not",
        Op::BAnd => "and",
        Op::BOr => "or",
        Op::Implies => "=>",
    }
}

impl PartialEq for Term {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.encoding() == other.encoding()
    }
}

impl Eq for Term {}

impl Hash for Term {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.encoding().hash(state);
    }
}

impl PartialOrd for Term {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Term {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.encoding().cmp(other.encoding())
    }
}

/// Infix rendering with generic variable names (`s0_p1^2`).
impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let namer = |id: VarId| format!("s{}_p{}^{}", id.segment, id.position, id.generation);
        f.write_str(&self.render(&namer))
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Term {
    /// Infix rendering with a caller-supplied variable namer.
    pub fn render(&self, namer: &dyn Fn(VarId) -> String) -> String {
        match self.node() {
            Node::Var(id, _) => {
                let name = namer(*id);
                match id.side {
                    Side::Left => name,
                    Side::Right => format!("{name}'"),
                }
            }
            Node::Const(v, _) => v.to_string(),
            Node::Bool(b) => if *b { "true" } else { "false" }.to_string(),
            Node::Forall { bound, body } => {
                let vars: Vec<String> = bound
                    .iter()
                    .map(|(id, _)| Term::var(*id, 1).render(namer))
                    .collect();
                format!("forall {}. {}", vars.join(" "), body.render(namer))
            }
            Node::Apply { op, args, .. } => {
                let r = |t: &Term| {
                    let s = t.render(namer);
                    if t.as_apply().is_some_and(|(o, _)| !matches!(o, Op::Extract { .. } | Op::Not)) {
                        format!("({s})")
                    } else {
                        s
                    }
                };
                let infix = |sym: &str| {
                    args.iter().map(r).collect::<Vec<_>>().join(&format!(" {sym} "))
                };
                match op {
                    Op::Eq => infix("="),
                    Op::Ule => infix("<=u"),
                    Op::Sle => infix("<=s"),
                    Op::Add => infix("+"),
                    Op::Mul => infix("*"),
                    Op::UDiv => infix("/u"),
                    Op::Mod => infix("%"),
                    Op::And => infix("&"),
                    Op::Or => infix("|"),
                    Op::Xor => infix("^"),
                    Op::Shl => infix("<<"),
                    Op::LShr => infix(">>u"),
                    Op::Concat => infix("++"),
                    Op::Extract { width, low } => format!("extract({width},{low},{})", args[0].render(namer)),
                    Op::Not => format!("!{}", r(&args[0])),
                    Op::BAnd => infix("&&"),
                    Op::BOr => infix("||"),
                    Op::Implies => infix("=>"),
                }
            }
        }
    }
}

/// Panicking constructors for terms whose sorts are known to be correct.
pub mod build {
    use super::*;

    fn ap(op: Op, args: Vec<Term>) -> Term {
        Term::apply(op, args).unwrap_or_else(|e| panic!("ill-sorted construction: {e}"))
    }

    pub fn eq(a: Term, b: Term) -> Term {
        ap(Op::Eq, vec![a, b])
    }
    pub fn ule(a: Term, b: Term) -> Term {
        ap(Op::Ule, vec![a, b])
    }
    pub fn sle(a: Term, b: Term) -> Term {
        ap(Op::Sle, vec![a, b])
    }
    pub fn add(a: Term, b: Term) -> Term {
        ap(Op::Add, vec![a, b])
    }
    pub fn mul(a: Term, b: Term) -> Term {
        ap(Op::Mul, vec![a, b])
    }
    pub fn udiv(a: Term, b: Term) -> Term {
        ap(Op::UDiv, vec![a, b])
    }
    pub fn modulo(a: Term, b: Term) -> Term {
        ap(Op::Mod, vec![a, b])
    }
    /// Two's-complement negation as multiplication by all-ones.
    pub fn neg(a: Term) -> Term {
        let w = a.width().expect("negation of a Boolean");
        mul(a, Term::bv(u64::MAX, w))
    }
    pub fn sub(a: Term, b: Term) -> Term {
        add(a, neg(b))
    }
    pub fn not(a: Term) -> Term {
        ap(Op::Not, vec![a])
    }
    pub fn ne(a: Term, b: Term) -> Term {
        not(eq(a, b))
    }
    pub fn and(args: Vec<Term>) -> Term {
        match args.len() {
            0 => Term::bool(true),
            1 => args.into_iter().next().unwrap(),
            _ => ap(Op::BAnd, args),
        }
    }
    pub fn or(args: Vec<Term>) -> Term {
        match args.len() {
            0 => Term::bool(false),
            1 => args.into_iter().next().unwrap(),
            _ => ap(Op::BOr, args),
        }
    }
    pub fn implies(a: Term, b: Term) -> Term {
        ap(Op::Implies, vec![a, b])
    }
}
