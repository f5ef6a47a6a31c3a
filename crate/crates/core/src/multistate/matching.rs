use std::collections::{BTreeMap, BTreeSet};

use super::slicing::UnionFind;
use super::{pvars, SlicedParts, StateError};
use crate::bvlogic::Conjunction;
use crate::progmodel::ProgVar;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Group {
    /// Parts without free variables.
    Ground,
    Root(usize),
}

/// Merges parts of both states so that the i-th parts of the results
/// represent the same program variables and parts on each side are
/// variable-disjoint.
///
/// Program variables are grouped by the union of both sides' "same part"
/// relations; each group becomes one output part. Groups are ordered by
/// first appearance in `a`, then in `b`. A group absent from one side gets
/// an empty (true) part there.
pub fn match_states(a: &SlicedParts, b: &SlicedParts) -> Result<(SlicedParts, SlicedParts), StateError> {
    let a_vars: Vec<BTreeSet<ProgVar>> = a.parts.iter().map(pvars).collect();
    let b_vars: Vec<BTreeSet<ProgVar>> = b.parts.iter().map(pvars).collect();
    let left_all: BTreeSet<ProgVar> = a_vars.iter().flatten().copied().collect();
    let right_all: BTreeSet<ProgVar> = b_vars.iter().flatten().copied().collect();
    if left_all != right_all {
        return Err(StateError::ShapeMismatch);
    }
    let index: BTreeMap<ProgVar, usize> = left_all.iter().enumerate().map(|(i, pv)| (*pv, i)).collect();
    let mut uf = UnionFind::new(index.len());
    for vars in a_vars.iter().chain(b_vars.iter()) {
        let mut it = vars.iter().map(|pv| index[pv]);
        if let Some(first) = it.next() {
            for other in it {
                uf.union(first, other);
            }
        }
    }
    let mut group_of = |vars: &BTreeSet<ProgVar>| match vars.iter().next() {
        None => Group::Ground,
        Some(pv) => Group::Root(uf.find(index[pv])),
    };
    let a_groups: Vec<Group> = a_vars.iter().map(&mut group_of).collect();
    let b_groups: Vec<Group> = b_vars.iter().map(&mut group_of).collect();

    let mut order: Vec<Group> = Vec::new();
    for g in a_groups.iter().chain(b_groups.iter()) {
        if !order.contains(g) {
            order.push(*g);
        }
    }
    let collect = |parts: &[Conjunction], groups: &[Group]| {
        order
            .iter()
            .map(|g| {
                let mut c = Conjunction::new();
                for (p, pg) in parts.iter().zip(groups) {
                    if pg == g {
                        c.extend(p);
                    }
                }
                c
            })
            .collect::<Vec<_>>()
    };
    Ok((
        SlicedParts::from_parts(collect(&a.parts, &a_groups)),
        SlicedParts::from_parts(collect(&b.parts, &b_groups)),
    ))
}

/// Checks the matching conditions with the identity bijection: equal part
/// counts, pairwise disjoint program variables on each side, and equal
/// program variables for parts with the same index.
pub fn is_matching(a: &SlicedParts, b: &SlicedParts) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let disjoint = |s: &SlicedParts| {
        let mut seen = BTreeSet::new();
        s.parts.iter().all(|p| pvars(p).into_iter().all(|pv| seen.insert(pv)))
    };
    disjoint(a) && disjoint(b) && a.parts.iter().zip(&b.parts).all(|(x, y)| pvars(x) == pvars(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bvlogic::build::*;
    use crate::bvlogic::{Term, VarId};

    fn v(p: u32, g: u32) -> Term {
        Term::var(VarId::new(0, p, g), 8)
    }

    fn part(cs: Vec<Term>) -> Conjunction {
        Conjunction::from_clauses(cs)
    }

    #[test]
    fn identical_partitions_are_unchanged() {
        let a = SlicedParts::from_parts(vec![part(vec![eq(v(0, 1), v(0, 1))]), part(vec![eq(v(1, 1), v(1, 1))])]);
        let (x, y) = match_states(&a, &a).unwrap();
        assert_eq!(x.parts(), a.parts());
        assert_eq!(y.parts(), a.parts());
        assert!(is_matching(&x, &y));
    }

    #[test]
    fn differing_variable_sets_are_rejected() {
        let a = SlicedParts::from_parts(vec![part(vec![eq(v(0, 1), v(0, 1))])]);
        let b = SlicedParts::from_parts(vec![part(vec![eq(v(1, 1), v(1, 1))])]);
        assert_eq!(match_states(&a, &b).unwrap_err(), StateError::ShapeMismatch);
    }

    #[test]
    fn ground_parts_group_together() {
        let g = part(vec![eq(Term::bv(1, 8), Term::bv(1, 8))]);
        let a = SlicedParts::from_parts(vec![g.clone(), part(vec![eq(v(0, 1), v(0, 1))])]);
        let b = SlicedParts::from_parts(vec![part(vec![eq(v(0, 1), v(0, 1))])]);
        let (x, y) = match_states(&a, &b).unwrap();
        assert_eq!(x.len(), 2);
        assert!(y.parts()[0].is_empty());
        assert!(is_matching(&x, &y));
    }
}
