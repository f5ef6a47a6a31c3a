//! Exhaustive satisfiability over small domains.
//!
//! Variables fixed by a defining equality `v = e` are computed from the
//! variables `e` depends on instead of being enumerated, and every clause is
//! checked as soon as its variables are assigned.

use std::collections::{BTreeMap, HashSet};

use crate::bvlogic::{apply_bv, Conjunction, Node, Op, Term, VarId};
use crate::eqcheck::EqualityQuery;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("enumeration domain of {bits} bits exceeds the cap of {cap}")]
pub struct DomainTooLarge {
    pub bits: u32,
    pub cap: u32,
}

/// A term compiled against a slot layout.
enum Code {
    Slot(usize),
    Const(u64),
    Bool(bool),
    Not(Box<Code>),
    And(Vec<Code>),
    Or(Vec<Code>),
    Implies(Box<Code>, Box<Code>),
    Bin { op: Op, width: u32, a: Box<Code>, b: Box<Code> },
    Extract { op: Op, a: Box<Code> },
}

impl Code {
    fn compile(t: &Term, slot: &BTreeMap<VarId, usize>) -> Code {
        match t.node() {
            Node::Var(id, _) => Code::Slot(slot[id]),
            Node::Const(v, _) => Code::Const(*v),
            Node::Bool(b) => Code::Bool(*b),
            Node::Apply { op, args, .. } => {
                let c = |i: usize| Box::new(Code::compile(&args[i], slot));
                match op {
                    Op::Not => Code::Not(c(0)),
                    Op::BAnd => Code::And(args.iter().map(|a| Code::compile(a, slot)).collect()),
                    Op::BOr => Code::Or(args.iter().map(|a| Code::compile(a, slot)).collect()),
                    Op::Implies => Code::Implies(c(0), c(1)),
                    Op::Extract { .. } => Code::Extract { op: *op, a: c(0) },
                    Op::Concat => Code::Bin {
                        op: *op,
                        width: args[1].width().unwrap(),
                        a: c(0),
                        b: c(1),
                    },
                    _ => Code::Bin {
                        op: *op,
                        width: args[0].width().unwrap(),
                        a: c(0),
                        b: c(1),
                    },
                }
            }
            Node::Forall { .. } => unreachable!("quantifiers are handled structurally"),
        }
    }

    fn eval(&self, vals: &[u64]) -> u64 {
        match self {
            Code::Slot(i) => vals[*i],
            Code::Const(v) => *v,
            Code::Bool(b) => *b as u64,
            Code::Not(a) => (a.eval(vals) == 0) as u64,
            Code::And(args) => args.iter().all(|a| a.eval(vals) != 0) as u64,
            Code::Or(args) => args.iter().any(|a| a.eval(vals) != 0) as u64,
            Code::Implies(a, b) => (a.eval(vals) == 0 || b.eval(vals) != 0) as u64,
            Code::Bin { op, width, a, b } => apply_bv(*op, a.eval(vals), b.eval(vals), *width),
            Code::Extract { op, a } => apply_bv(*op, a.eval(vals), 0, 0),
        }
    }
}

enum Step {
    Enumerate { slot: usize, width: u32 },
    Compute { slot: usize, code: Code },
}

/// Search plan for one conjunction: one step per variable, followed by the
/// clauses that become checkable at that step.
struct Plan {
    slots: BTreeMap<VarId, usize>,
    ground: Vec<Code>,
    steps: Vec<(Step, Vec<Code>)>,
    enumerated_bits: u32,
}

fn definition(clause: &Term) -> Option<(VarId, &Term)> {
    let (op, args) = clause.as_apply()?;
    if op != Op::Eq {
        return None;
    }
    for (v, e) in [(&args[0], &args[1]), (&args[1], &args[0])] {
        if let Some((id, _)) = v.as_var() {
            if !e.free_vars().contains(&id) {
                return Some((id, e));
            }
        }
    }
    None
}

impl Plan {
    /// `extra` lists variables that must be assigned even if no clause
    /// mentions them.
    fn new(c: &Conjunction, extra: &[(VarId, u32)]) -> Plan {
        let mut widths: BTreeMap<VarId, u32> = c.typed_free_vars().into_iter().collect();
        widths.extend(extra.iter().copied());

        let mut defs: BTreeMap<VarId, (usize, &Term)> = BTreeMap::new();
        for (i, clause) in c.clauses().iter().enumerate() {
            if let Some((v, e)) = definition(clause) {
                defs.entry(v).or_insert((i, e));
            }
        }

        // order variables so that every computed one follows its dependencies
        let mut order: Vec<(VarId, Option<usize>)> = Vec::new();
        let mut placed: BTreeMap<VarId, usize> = BTreeMap::new();
        while placed.len() < widths.len() {
            let ready = widths.keys().find(|v| {
                !placed.contains_key(v)
                    && defs
                        .get(v)
                        .is_some_and(|(_, e)| e.free_vars().iter().all(|d| placed.contains_key(d)))
            });
            let (v, def) = match ready {
                Some(v) => (*v, Some(defs[v].0)),
                None => {
                    let v = widths
                        .keys()
                        .filter(|v| !placed.contains_key(v))
                        .min_by_key(|v| defs.contains_key(v))
                        .copied()
                        .unwrap();
                    (v, None)
                }
            };
            placed.insert(v, order.len());
            order.push((v, def));
        }

        let slots = placed.clone();
        let mut ground = Vec::new();
        let mut checks: Vec<Vec<Code>> = (0..order.len()).map(|_| Vec::new()).collect();
        let defining: HashSet<usize> = order.iter().filter_map(|(_, d)| *d).collect();
        for (i, clause) in c.clauses().iter().enumerate() {
            if defining.contains(&i) {
                continue;
            }
            let code = Code::compile(clause, &slots);
            match clause.free_vars().iter().map(|v| slots[v]).max() {
                None => ground.push(code),
                Some(level) => checks[level].push(code),
            }
        }
        let mut enumerated_bits = 0;
        let steps = order
            .iter()
            .zip(checks)
            .map(|(&(v, def), checks)| {
                let slot = slots[&v];
                let step = match def {
                    Some(_) => Step::Compute {
                        slot,
                        code: Code::compile(defs[&v].1, &slots),
                    },
                    None => {
                        enumerated_bits += widths[&v];
                        Step::Enumerate { slot, width: widths[&v] }
                    }
                };
                (step, checks)
            })
            .collect();
        Plan {
            slots,
            ground,
            steps,
            enumerated_bits,
        }
    }

    /// Calls `visit` on every satisfying assignment until it returns false.
    /// Returns false if the search was stopped.
    fn search(&self, visit: &mut dyn FnMut(&[u64]) -> bool) -> bool {
        let mut vals = vec![0u64; self.slots.len()];
        if !self.ground.iter().all(|c| c.eval(&vals) != 0) {
            return true;
        }
        self.descend(0, &mut vals, visit)
    }

    fn descend(&self, level: usize, vals: &mut [u64], visit: &mut dyn FnMut(&[u64]) -> bool) -> bool {
        let Some((step, checks)) = self.steps.get(level) else {
            return visit(vals);
        };
        match step {
            Step::Compute { slot, code } => {
                vals[*slot] = code.eval(vals);
                if checks.iter().all(|c| c.eval(vals) != 0) {
                    return self.descend(level + 1, vals, visit);
                }
                true
            }
            Step::Enumerate { slot, width } => {
                let top = if *width >= 64 { u64::MAX } else { (1u64 << width) - 1 };
                let mut v = 0u64;
                loop {
                    vals[*slot] = v;
                    if checks.iter().all(|c| c.eval(vals) != 0) && !self.descend(level + 1, vals, visit) {
                        return false;
                    }
                    if v == top {
                        return true;
                    }
                    v += 1;
                }
            }
        }
    }
}

/// Brute-force decision procedure. Each side of a query may enumerate at most
/// `max_domain_bits` bits of unconstrained input.
#[derive(Clone, Copy, Debug)]
pub struct Enumerator {
    pub max_domain_bits: u32,
}

impl Enumerator {
    pub fn new(max_domain_bits: u32) -> Self {
        Enumerator { max_domain_bits }
    }

    fn checked(&self, plan: &Plan) -> Result<(), DomainTooLarge> {
        if plan.enumerated_bits > self.max_domain_bits {
            return Err(DomainTooLarge {
                bits: plan.enumerated_bits,
                cap: self.max_domain_bits,
            });
        }
        Ok(())
    }

    /// Satisfiability of a quantifier-free conjunction.
    pub fn satisfiable(&self, c: &Conjunction) -> Result<bool, DomainTooLarge> {
        let plan = Plan::new(c, &[]);
        self.checked(&plan)?;
        let mut found = false;
        plan.search(&mut |_| {
            found = true;
            false
        });
        Ok(found)
    }

    /// Satisfiability of `left ∧ ∀ right-vars. (right ⇒ ⋁ x ≠ y)`: whether
    /// some left solution projects onto the compared variables outside the
    /// projection of the right solutions.
    pub fn not_subseteq(&self, q: &EqualityQuery) -> Result<bool, DomainTooLarge> {
        let xs: Vec<(VarId, u32)> = q.diff_vars().iter().map(|&(x, _, w)| (x, w)).collect();
        let ys: Vec<(VarId, u32)> = q.diff_vars().iter().map(|&(_, y, w)| (y, w)).collect();
        let left = Plan::new(q.left(), &xs);
        let right = Plan::new(q.right(), &ys);
        self.checked(&left)?;
        self.checked(&right)?;

        let y_slots: Vec<usize> = ys.iter().map(|(y, _)| right.slots[y]).collect();
        let full: Option<u128> = {
            let bits: u32 = ys.iter().map(|(_, w)| *w).sum();
            (bits < 64).then(|| 1u128 << bits)
        };
        let mut covered: HashSet<Vec<u64>> = HashSet::new();
        right.search(&mut |vals| {
            covered.insert(y_slots.iter().map(|&s| vals[s]).collect());
            full.is_none_or(|n| (covered.len() as u128) < n)
        });
        if full.is_some_and(|n| covered.len() as u128 == n) {
            return Ok(false);
        }

        let x_slots: Vec<usize> = xs.iter().map(|(x, _)| left.slots[x]).collect();
        let mut found = false;
        let mut key = Vec::with_capacity(x_slots.len());
        left.search(&mut |vals| {
            key.clear();
            key.extend(x_slots.iter().map(|&s| vals[s]));
            found = !covered.contains(&key);
            !found
        });
        Ok(found)
    }
}
