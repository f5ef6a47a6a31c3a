use std::collections::HashMap;

use super::SlicedParts;
use crate::bvlogic::{Conjunction, VarId};

/// Disjoint sets over `0..n` with path halving and union by size.
pub(crate) struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
    }
}

/// Splits a conjunction into the connected components of its clauses, where
/// two clauses are connected when they share a free variable. Components are
/// ordered by their first clause and keep the original clause order.
pub fn slice(c: &Conjunction) -> Vec<Conjunction> {
    let clauses = c.clauses();
    let mut uf = UnionFind::new(clauses.len());
    let mut first_user: HashMap<VarId, usize> = HashMap::new();
    for (i, clause) in clauses.iter().enumerate() {
        for id in clause.free_vars() {
            match first_user.get(&id) {
                Some(&j) => uf.union(i, j),
                None => {
                    first_user.insert(id, i);
                }
            }
        }
    }
    let mut index_of_root: HashMap<usize, usize> = HashMap::new();
    let mut parts: Vec<Conjunction> = Vec::new();
    for (i, clause) in clauses.iter().enumerate() {
        let root = uf.find(i);
        let idx = *index_of_root.entry(root).or_insert_with(|| {
            parts.push(Conjunction::new());
            parts.len() - 1
        });
        parts[idx].push(clause.clone());
    }
    parts
}

/// Conjoins `psi` clause by clause: every part sharing a variable with the
/// clause is merged into the first such part, followed by the clause.
pub(super) fn conjoin(s: &mut SlicedParts, psi: &Conjunction) {
    for clause in psi.clauses() {
        let vars = clause.free_vars();
        let dependent: Vec<usize> = s
            .parts
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.free_vars().is_disjoint(&vars))
            .map(|(i, _)| i)
            .collect();
        match dependent.split_first() {
            None => s.parts.push(Conjunction::from_clauses([clause.clone()])),
            Some((&first, rest)) => {
                let mut merged = std::mem::take(&mut s.parts[first]);
                for &i in rest {
                    merged.extend(&s.parts[i]);
                }
                super::add_clause(&mut merged, clause);
                s.parts[first] = merged;
                for &i in rest.iter().rev() {
                    s.parts.remove(i);
                }
            }
        }
    }
    s.refresh_owner();
    debug_assert!(s.parts_independent());
}
