use std::collections::BTreeMap;

use crate::bvlogic::{build, Conjunction, Side, Term, VarId};

/// A `notsubseteq` instance: satisfiable iff some valuation of the compared
/// program variables allowed by `left` is not allowed by `right`.
#[derive(Clone, Debug)]
pub struct EqualityQuery {
    left: Conjunction,
    right: Conjunction,
    diff_vars: Vec<(VarId, VarId, u32)>,
    canonical: Vec<u8>,
}

impl EqualityQuery {
    /// `left` and `right` are retagged to their sides. Each entry of `diff`
    /// pairs the left and right formula variable standing for one program
    /// variable, with its width.
    pub fn new(left: &Conjunction, right: &Conjunction, diff: &[(VarId, VarId, u32)]) -> Self {
        let left = left.with_side(Side::Left);
        let right = right.with_side(Side::Right);
        let diff_vars: Vec<(VarId, VarId, u32)> = diff
            .iter()
            .map(|&(x, y, w)| (x.on(Side::Left), y.on(Side::Right), w))
            .collect();
        let mut canonical = Vec::new();
        for key in [left.canonical_key().as_bytes(), right.canonical_key().as_bytes()] {
            canonical.extend_from_slice(&(key.len() as u64).to_le_bytes());
            canonical.extend_from_slice(key);
        }
        canonical.extend_from_slice(&(diff_vars.len() as u64).to_le_bytes());
        for &(x, y, w) in &diff_vars {
            canonical.extend_from_slice(Term::var(x, w).encoding());
            canonical.extend_from_slice(Term::var(y, w).encoding());
        }
        EqualityQuery {
            left,
            right,
            diff_vars,
            canonical,
        }
    }

    pub fn left(&self) -> &Conjunction {
        &self.left
    }

    pub fn right(&self) -> &Conjunction {
        &self.right
    }

    pub fn diff_vars(&self) -> &[(VarId, VarId, u32)] {
        &self.diff_vars
    }

    pub fn canonical(&self) -> &[u8] {
        &self.canonical
    }

    /// Variables under the universal binder: the right side's free variables
    /// and the right members of `diff_vars`.
    pub fn bound_vars(&self) -> Vec<(VarId, u32)> {
        let mut out: BTreeMap<VarId, u32> = self.right.typed_free_vars().into_iter().collect();
        for &(_, y, w) in &self.diff_vars {
            out.insert(y, w);
        }
        out.into_iter().collect()
    }

    /// `left ∧ ∀ bound. (right ⇒ ⋁ x ≠ y)`.
    pub fn body(&self) -> Term {
        let differs = build::or(
            self.diff_vars
                .iter()
                .map(|&(x, y, w)| build::ne(Term::var(x, w), Term::var(y, w)))
                .collect(),
        );
        let inner = Term::forall(self.bound_vars(), build::implies(self.right.to_term(), differs))
            .expect("binder over bit-vector variables");
        let mut clauses: Vec<Term> = self.left.clauses().to_vec();
        clauses.push(inner);
        build::and(clauses)
    }
}
