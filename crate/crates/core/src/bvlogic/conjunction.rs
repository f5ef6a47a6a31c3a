use std::collections::BTreeSet;
use std::sync::OnceLock;

use super::{Sort, Term, VarId};

/// Canonical, order-insensitive identity of a clause multiset.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalKey(pub Vec<u8>);

impl CanonicalKey {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

/// An ordered list of quantifier-free Boolean clauses with cached free
/// variables. The empty conjunction denotes `true`.
#[derive(Clone, Debug, Default)]
pub struct Conjunction {
    clauses: Vec<Term>,
    free: BTreeSet<VarId>,
    key: OnceLock<CanonicalKey>,
}

impl Conjunction {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_clauses(clauses: impl IntoIterator<Item = Term>) -> Self {
        let mut c = Self::new();
        for t in clauses {
            c.push(t);
        }
        c
    }

    /// Appends a clause. Panics on non-Boolean or quantified clauses.
    pub fn push(&mut self, clause: Term) {
        assert_eq!(clause.sort(), Sort::Bool, "clause must be Boolean: {clause}");
        assert!(!clause.is_quantified(), "clauses are quantifier-free: {clause}");
        clause.collect_free(&mut self.free);
        self.clauses.push(clause);
        self.key = OnceLock::new();
    }

    pub fn extend(&mut self, other: &Conjunction) {
        for t in &other.clauses {
            self.push(t.clone());
        }
    }

    pub fn clauses(&self) -> &[Term] {
        &self.clauses
    }

    pub fn free_vars(&self) -> &BTreeSet<VarId> {
        &self.free
    }

    pub fn len(&self) -> usize {
        self.clauses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    /// Free variables with their widths, sorted by variable.
    pub fn typed_free_vars(&self) -> Vec<(VarId, u32)> {
        let mut map = std::collections::BTreeMap::new();
        for c in &self.clauses {
            map.extend(c.typed_free_vars());
        }
        map.into_iter().collect()
    }

    /// The conjunction as a single term (`true` when empty).
    pub fn to_term(&self) -> Term {
        super::build::and(self.clauses.clone())
    }

    pub fn with_side(&self, side: super::Side) -> Conjunction {
        Conjunction::from_clauses(self.clauses.iter().map(|c| c.with_side(side)))
    }

    /// Sorted clause encodings, each length-prefixed.
    pub fn canonical_key(&self) -> &CanonicalKey {
        self.key.get_or_init(|| {
            let mut encs: Vec<&[u8]> = self.clauses.iter().map(Term::encoding).collect();
            encs.sort_unstable();
            let mut out = Vec::with_capacity(encs.iter().map(|e| e.len() + 4).sum());
            for e in encs {
                out.extend_from_slice(&(e.len() as u32).to_be_bytes());
                out.extend_from_slice(e);
            }
            CanonicalKey(out)
        })
    }

    /// Clauses in canonical order.
    pub fn sorted_clauses(&self) -> Vec<Term> {
        let mut v = self.clauses.clone();
        v.sort();
        v
    }
}

impl PartialEq for Conjunction {
    fn eq(&self, other: &Self) -> bool {
        self.clauses == other.clauses
    }
}

impl Eq for Conjunction {}

/// Anything with a set of free variables.
pub trait FreeVars {
    fn free_var_set(&self) -> std::borrow::Cow<'_, BTreeSet<VarId>>;
}

impl FreeVars for Conjunction {
    fn free_var_set(&self) -> std::borrow::Cow<'_, BTreeSet<VarId>> {
        std::borrow::Cow::Borrowed(&self.free)
    }
}

impl FreeVars for Term {
    fn free_var_set(&self) -> std::borrow::Cow<'_, BTreeSet<VarId>> {
        std::borrow::Cow::Owned(self.free_vars())
    }
}

/// True iff the two formulas share no free variable.
pub fn independent(a: &impl FreeVars, b: &impl FreeVars) -> bool {
    a.free_var_set().is_disjoint(&b.free_var_set())
}
