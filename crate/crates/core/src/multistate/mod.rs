//! Multi-states: an explicit control part and memory shape paired with a
//! symbolic part, stored either as one conjunction or as independent slices.

mod matching;
mod slicing;
mod transform;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::bvlogic::{build, Conjunction, Op, Term, VarId};
use crate::progmodel::{ControlPart, MemoryShape, ProgVar};

pub use matching::{is_matching, match_states};
pub use slicing::slice;
pub use transform::{apply_instruction, initial_state, Successor};

/// How the symbolic part of every state is stored.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Representation {
    Monolithic,
    Sliced,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StateError {
    #[error("states represent different sets of program variables")]
    ShapeMismatch,
}

/// Program variable of a formula variable (generation dropped).
pub fn prog_var(id: VarId) -> ProgVar {
    ProgVar {
        segment: id.segment,
        position: id.position,
    }
}

/// Program variables represented by a conjunction.
pub fn pvars(c: &Conjunction) -> BTreeSet<ProgVar> {
    c.free_vars().iter().map(|&id| prog_var(id)).collect()
}

/// A set of mutually independent conjunctions together with the part that
/// holds the last generation of each program variable.
#[derive(Clone, Debug, Default)]
pub struct SlicedParts {
    parts: Vec<Conjunction>,
    owner: BTreeMap<ProgVar, usize>,
}

impl SlicedParts {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds from parts as given, without re-slicing.
    pub fn from_parts(parts: Vec<Conjunction>) -> Self {
        let mut s = SlicedParts {
            parts,
            owner: BTreeMap::new(),
        };
        s.refresh_owner();
        s
    }

    pub fn parts(&self) -> &[Conjunction] {
        &self.parts
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// Part holding the last generation of `pv`.
    pub fn owner(&self, pv: ProgVar) -> Option<usize> {
        self.owner.get(&pv).copied()
    }

    pub(crate) fn refresh_owner(&mut self) {
        let mut best: BTreeMap<ProgVar, (u32, usize)> = BTreeMap::new();
        for (i, part) in self.parts.iter().enumerate() {
            for id in part.free_vars() {
                let e = best.entry(prog_var(*id)).or_insert((id.generation, i));
                if id.generation > e.0 {
                    *e = (id.generation, i);
                }
            }
        }
        self.owner = best.into_iter().map(|(pv, (_, i))| (pv, i)).collect();
    }

    /// True when the parts have pairwise disjoint free variables.
    pub fn parts_independent(&self) -> bool {
        let mut seen = BTreeSet::new();
        for p in &self.parts {
            for id in p.free_vars() {
                if !seen.insert(*id) {
                    return false;
                }
            }
        }
        true
    }
}

#[derive(Clone, Debug)]
pub enum SymbolicPart {
    Monolithic(Conjunction),
    Sliced(SlicedParts),
}

impl SymbolicPart {
    pub fn empty(repr: Representation) -> Self {
        match repr {
            Representation::Monolithic => SymbolicPart::Monolithic(Conjunction::new()),
            Representation::Sliced => SymbolicPart::Sliced(SlicedParts::new()),
        }
    }

    pub fn representation(&self) -> Representation {
        match self {
            SymbolicPart::Monolithic(_) => Representation::Monolithic,
            SymbolicPart::Sliced(_) => Representation::Sliced,
        }
    }

    /// The conjunction of all parts, in part order.
    pub fn conjunction(&self) -> Conjunction {
        match self {
            SymbolicPart::Monolithic(c) => c.clone(),
            SymbolicPart::Sliced(s) => {
                let mut out = Conjunction::new();
                for p in &s.parts {
                    out.extend(p);
                }
                out
            }
        }
    }

    /// Parts as a slice: the whole conjunction for monolithic states.
    pub fn parts(&self) -> &[Conjunction] {
        match self {
            SymbolicPart::Monolithic(c) => std::slice::from_ref(c),
            SymbolicPart::Sliced(s) => &s.parts,
        }
    }

    pub fn free_vars(&self) -> BTreeSet<VarId> {
        self.parts().iter().flat_map(|p| p.free_vars().iter().copied()).collect()
    }

    pub fn pvars(&self) -> BTreeSet<ProgVar> {
        self.parts().iter().flat_map(pvars).collect()
    }

    /// Conjoins `psi`: appended for monolithic parts, merged with every
    /// dependent part for sliced ones.
    pub fn conjoin(&mut self, psi: &Conjunction) {
        match self {
            SymbolicPart::Monolithic(c) => {
                for clause in psi.clauses() {
                    add_clause(c, clause);
                }
            }
            SymbolicPart::Sliced(s) => slicing::conjoin(s, psi),
        }
    }

    pub fn conjoin_clause(&mut self, clause: Term) {
        self.conjoin(&Conjunction::from_clauses([clause]));
    }

    /// Renders one line per part, clauses in canonical order.
    pub fn dump(&self, shape: &MemoryShape) -> String {
        let namer = |id: VarId| {
            let pv = prog_var(id);
            match shape.var(pv) {
                Some(d) => format!("{}^{}", d.name, id.generation),
                None => format!("s{}_p{}^{}", pv.segment, pv.position, id.generation),
            }
        };
        let mut out = String::new();
        for part in self.parts() {
            let clauses: Vec<String> = part.sorted_clauses().iter().map(|t| t.render(&namer)).collect();
            if clauses.is_empty() {
                out.push_str("true");
            } else {
                out.push_str(&clauses.join(" && "));
            }
            out.push('\n');
        }
        out
    }
}

/// The variable of a vacuous equality `v = v`.
pub fn vacuous_var(clause: &Term) -> Option<VarId> {
    let (op, args) = clause.as_apply()?;
    if op != Op::Eq {
        return None;
    }
    let v = args[0].as_var()?;
    (args[1].as_var() == Some(v)).then_some(v.0)
}

/// Appends `clause` to `part`. A vacuous equality on a variable the part
/// already represents is dropped; otherwise vacuous equalities on variables
/// of `clause` are dropped, since the clause keeps them represented.
pub(crate) fn add_clause(part: &mut Conjunction, clause: &Term) {
    if let Some(v) = vacuous_var(clause) {
        if !part.free_vars().contains(&v) {
            part.push(clause.clone());
        }
        return;
    }
    let vars = clause.free_vars();
    let stale = |c: &Term| vacuous_var(c).is_some_and(|v| vars.contains(&v));
    if part.clauses().iter().any(stale) {
        *part = Conjunction::from_clauses(part.clauses().iter().filter(|c| !stale(c)).cloned());
    }
    part.push(clause.clone());
}

/// Last generation of every program variable occurring in the formula.
pub type GenTable = BTreeMap<ProgVar, u32>;

/// A multi-state `(control, shape, symbolic)`; `error` marks states that
/// violated an assertion.
#[derive(Clone, Debug)]
pub struct MultiState {
    pub control: ControlPart,
    pub shape: MemoryShape,
    pub symbolic: SymbolicPart,
    pub gens: GenTable,
    pub error: bool,
}

/// Everything that has to be identical for two states to be compared.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ExplicitKey {
    pub control: ControlPart,
    pub shape: MemoryShape,
    pub error: bool,
}

impl MultiState {
    pub fn explicit_key(&self) -> ExplicitKey {
        ExplicitKey {
            control: self.control.clone(),
            shape: self.shape.clone(),
            error: self.error,
        }
    }

    pub fn same_explicit_part(&self, other: &MultiState) -> bool {
        self.control == other.control && self.shape == other.shape && self.error == other.error
    }

    /// Latest formula variable of `pv`, if any.
    pub fn prog(&self, pv: ProgVar) -> Option<VarId> {
        self.gens.get(&pv).map(|&g| VarId::new(pv.segment, pv.position, g))
    }

    /// Adds a fresh generation of `pv` constrained only by `pv^g = pv^g`.
    pub fn bump_vacuous(&mut self, pv: ProgVar, width: u32) -> VarId {
        let g = self.gens.get(&pv).map_or(1, |g| g + 1);
        self.gens.insert(pv, g);
        let id = VarId::new(pv.segment, pv.position, g);
        let v = Term::var(id, width);
        self.symbolic.conjoin_clause(build::eq(v.clone(), v));
        id
    }

    /// Width of every program variable occurring in the formula.
    pub fn formula_widths(&self) -> BTreeMap<ProgVar, u32> {
        let mut out = BTreeMap::new();
        for p in self.symbolic.parts() {
            for (id, w) in p.typed_free_vars() {
                out.insert(prog_var(id), w);
            }
        }
        out
    }

    pub fn dump(&self) -> String {
        self.symbolic.dump(&self.shape)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bvlogic::build::*;

    fn v(p: u32, g: u32) -> Term {
        Term::var(VarId::new(0, p, g), 4)
    }

    #[test]
    fn pvars_drop_generations() {
        // x^1 = y^2 && y^2 = y^1 + 1
        let c = Conjunction::from_clauses([eq(v(0, 1), v(1, 2)), eq(v(1, 2), add(v(1, 1), Term::bv(1, 4)))]);
        let expect: BTreeSet<ProgVar> = [0, 1]
            .into_iter()
            .map(|p| ProgVar {
                segment: 0,
                position: p,
            })
            .collect();
        assert_eq!(pvars(&c), expect);
        assert!(pvars(&Conjunction::new()).is_empty());
    }

    #[test]
    fn owner_tracks_last_generation() {
        let s = SlicedParts::from_parts(vec![
            Conjunction::from_clauses([ule(v(0, 1), v(1, 1))]),
            Conjunction::from_clauses([eq(v(0, 2), Term::bv(5, 4))]),
        ]);
        let pv = |p| ProgVar {
            segment: 0,
            position: p,
        };
        assert_eq!(s.owner(pv(0)), Some(1));
        assert_eq!(s.owner(pv(1)), Some(0));
        assert_eq!(s.owner(pv(2)), None);
    }

    #[test]
    fn vacuous_clauses_do_not_depend_on_order() {
        let vac = eq(v(0, 1), v(0, 1));
        let real = ule(v(0, 1), Term::bv(3, 4));
        for repr in [Representation::Monolithic, Representation::Sliced] {
            let mut a = SymbolicPart::empty(repr);
            a.conjoin_clause(vac.clone());
            a.conjoin_clause(real.clone());
            let mut b = SymbolicPart::empty(repr);
            b.conjoin_clause(real.clone());
            b.conjoin_clause(vac.clone());
            assert_eq!(a.conjunction().clauses(), std::slice::from_ref(&real));
            assert_eq!(b.conjunction().clauses(), std::slice::from_ref(&real));
        }
    }
}
