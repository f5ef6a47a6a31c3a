//! Emptiness and equality checks on multi-states, decided through a
//! syntactic fast path, a verdict cache and a backend, in that order.

mod query;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::bvlogic::{build, Conjunction, Term, VarId};
use crate::multistate::{match_states, pvars, MultiState, SlicedParts, StateError, SymbolicPart};
use crate::progmodel::ProgVar;
use crate::querycache::{CacheKey, CacheStats, QueryCache, QueryKind};
use crate::solverbridge::{Backend, BackendConfig, Query, SatResult};

pub use query::EqualityQuery;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Equal,
    NotEqual,
    Empty,
    NonEmpty,
}

/// Strongest mechanism a check needed, ordered from cheapest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DecidedBy {
    Syntactic,
    Cache,
    Solver,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CheckOutcome {
    pub result: Outcome,
    pub decided_by: DecidedBy,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckError {
    #[error(transparent)]
    State(#[from] StateError),
    #[error("solver returned unknown")]
    Unknown,
    #[error("solver failure: {0}")]
    Backend(String),
    #[error("cached verdict {cached:?} disagrees with backend verdict {fresh:?}")]
    StaleCache { cached: SatResult, fresh: SatResult },
}

/// Query counters. Every equality query is counted in exactly one of
/// `syntactic_equal`, `cache_hits` and `solver_calls`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PipelineCounts {
    pub equal_checks: u64,
    pub syntactic_equal: u64,
    pub cache_hits: u64,
    pub solver_calls: u64,
    pub emptiness_checks: u64,
}

/// One directional equality query as seen by the pipeline.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryRecord {
    /// Program variables of the compared part.
    pub vars: BTreeSet<ProgVar>,
    pub decided_by: DecidedBy,
    pub sat: bool,
}

/// Conjoins `p^g = p^g` for every program variable in `wanted` that `s`'s
/// formula does not mention. Returns the padded symbolic part and the
/// generation of each padded or present variable.
fn padded(s: &MultiState, wanted: &BTreeMap<ProgVar, u32>) -> (SymbolicPart, BTreeMap<ProgVar, u32>) {
    let mut symbolic = s.symbolic.clone();
    let present = symbolic.pvars();
    let mut gens = s.gens.clone();
    for (&pv, &w) in wanted {
        if present.contains(&pv) {
            continue;
        }
        let g = *gens.entry(pv).or_insert(1);
        let v = Term::var(VarId::new(pv.segment, pv.position, g), w);
        symbolic.conjoin_clause(build::eq(v.clone(), v));
    }
    (symbolic, gens)
}

/// Both states' symbolic parts brought to a common variable set, with the
/// diff-variable triples for every compared program variable.
struct Aligned {
    left: SymbolicPart,
    right: SymbolicPart,
    compared: BTreeMap<ProgVar, (VarId, VarId, u32)>,
}

fn align(s1: &MultiState, s2: &MultiState) -> Result<Aligned, StateError> {
    if !s1.same_explicit_part(s2) {
        return Err(StateError::ShapeMismatch);
    }
    let mut widths = s1.formula_widths();
    widths.extend(s2.formula_widths());
    for pv in s1.shape.symbolic_vars() {
        if s1.gens.contains_key(&pv) || s2.gens.contains_key(&pv) {
            let w = s1.shape.var(pv).unwrap().width;
            widths.insert(pv, w);
        }
    }
    let (left, lg) = padded(s1, &widths);
    let (right, rg) = padded(s2, &widths);
    let live: BTreeSet<ProgVar> = s1.shape.symbolic_vars().collect();
    let compared = widths
        .iter()
        .filter(|(pv, _)| live.contains(pv))
        .map(|(&pv, &w)| {
            let x = VarId::new(pv.segment, pv.position, lg[&pv]);
            let y = VarId::new(pv.segment, pv.position, rg[&pv]);
            (pv, (x, y, w))
        })
        .collect();
    Ok(Aligned { left, right, compared })
}

fn diff_for(compared: &BTreeMap<ProgVar, (VarId, VarId, u32)>, vars: &BTreeSet<ProgVar>) -> Vec<(VarId, VarId, u32)> {
    vars.iter().filter_map(|pv| compared.get(pv).copied()).collect()
}

/// The monolithic `notsubseteq(s1, s2)` query over whole formulas.
pub fn build_not_subseteq(s1: &MultiState, s2: &MultiState) -> Result<EqualityQuery, StateError> {
    let a = align(s1, s2)?;
    let diff: Vec<_> = a.compared.values().copied().collect();
    Ok(EqualityQuery::new(&a.left.conjunction(), &a.right.conjunction(), &diff))
}

/// Matched part pairs of two states; the i-th pair covers the same program
/// variables on both sides.
pub struct MatchedPairs {
    pairs: Vec<(Conjunction, Conjunction)>,
    compared: BTreeMap<ProgVar, (VarId, VarId, u32)>,
}

impl MatchedPairs {
    pub fn new(s1: &MultiState, s2: &MultiState) -> Result<Self, StateError> {
        let a = align(s1, s2)?;
        let pairs = match (&a.left, &a.right) {
            (SymbolicPart::Sliced(l), SymbolicPart::Sliced(r)) => {
                let (l, r) = match_states(l, r)?;
                l.parts().iter().cloned().zip(r.parts().iter().cloned()).collect()
            }
            _ => vec![(a.left.conjunction(), a.right.conjunction())],
        };
        Ok(MatchedPairs {
            pairs,
            compared: a.compared,
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pair(&self, i: usize) -> (&Conjunction, &Conjunction) {
        let (l, r) = &self.pairs[i];
        (l, r)
    }

    /// `notsubseteq(s1, s2, i)`, or the reverse direction when `reverse`.
    pub fn query(&self, i: usize, reverse: bool) -> EqualityQuery {
        let (l, r) = &self.pairs[i];
        let diff = diff_for(&self.compared, &pvars(l));
        if reverse {
            let flipped: Vec<_> = diff.iter().map(|&(x, y, w)| (y, x, w)).collect();
            EqualityQuery::new(r, l, &flipped)
        } else {
            EqualityQuery::new(l, r, &diff)
        }
    }

    pub fn syntactically_equal(&self, i: usize) -> bool {
        let (l, r) = &self.pairs[i];
        l.canonical_key() == r.canonical_key()
    }
}

/// Per-part query for matched sliced states.
pub fn build_not_subseteq_slice(s1: &MultiState, s2: &MultiState, i: usize) -> Result<EqualityQuery, StateError> {
    Ok(MatchedPairs::new(s1, s2)?.query(i, false))
}

/// Syntactic equality up to clause order, per matched part.
pub fn syntactically_equal(s1: &MultiState, s2: &MultiState) -> Result<bool, StateError> {
    let m = MatchedPairs::new(s1, s2)?;
    Ok((0..m.len()).all(|i| m.syntactically_equal(i)))
}

/// Cache, backend and counters for one exploration run.
pub struct DecisionPipeline {
    backend: Backend,
    cache: Option<QueryCache>,
    syntactic_fast_path: bool,
    revalidate_every: Option<u64>,
    hits_seen: u64,
    counts: PipelineCounts,
    log: Option<Vec<QueryRecord>>,
}

impl DecisionPipeline {
    pub fn new(backend: &BackendConfig, cache_enabled: bool, syntactic_fast_path: bool) -> Self {
        DecisionPipeline {
            backend: Backend::new(backend),
            cache: cache_enabled.then(QueryCache::default),
            syntactic_fast_path,
            revalidate_every: None,
            hits_seen: 0,
            counts: PipelineCounts::default(),
            log: None,
        }
    }

    /// Records every equality query; see [`DecisionPipeline::query_log`].
    pub fn with_query_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn query_log(&self) -> &[QueryRecord] {
        self.log.as_deref().unwrap_or(&[])
    }

    fn record(&mut self, vars: impl FnOnce() -> BTreeSet<ProgVar>, decided_by: DecidedBy, sat: bool, n: usize) {
        if let Some(log) = &mut self.log {
            let vars = vars();
            for _ in 0..n {
                log.push(QueryRecord {
                    vars: vars.clone(),
                    decided_by,
                    sat,
                });
            }
        }
    }

    /// Re-decides every `n`-th cache hit with the backend and fails on
    /// disagreement.
    pub fn with_revalidation(mut self, n: u64) -> Self {
        self.revalidate_every = Some(n.max(1));
        self
    }

    pub fn counts(&self) -> PipelineCounts {
        self.counts
    }

    pub fn cache_stats(&self) -> Option<CacheStats> {
        self.cache.as_ref().map(QueryCache::stats)
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    fn solve(&mut self, q: Query) -> Result<bool, CheckError> {
        match self.backend.check(q) {
            SatResult::Sat => Ok(true),
            SatResult::Unsat => Ok(false),
            SatResult::Unknown => Err(CheckError::Unknown),
            SatResult::BackendError(e) => Err(CheckError::Backend(e)),
        }
    }

    /// Cache lookup followed by the backend on a miss.
    fn decide(&mut self, kind: QueryKind, bytes: &[u8], q: Query) -> Result<(bool, DecidedBy), CheckError> {
        let key = CacheKey {
            kind,
            bytes: bytes.to_vec(),
        };
        if let Some(cache) = &self.cache {
            if let Some(cached) = cache.lookup(&key) {
                self.hits_seen += 1;
                if self.revalidate_every.is_some_and(|n| self.hits_seen.is_multiple_of(n)) {
                    let fresh = self.backend.check(q);
                    if fresh != cached {
                        return Err(CheckError::StaleCache { cached, fresh });
                    }
                }
                return Ok((cached == SatResult::Sat, DecidedBy::Cache));
            }
        }
        let sat = self.solve(q)?;
        if let Some(cache) = &self.cache {
            let verdict = if sat { SatResult::Sat } else { SatResult::Unsat };
            cache.insert(key, &verdict).expect("definite verdicts are cacheable");
        }
        Ok((sat, DecidedBy::Solver))
    }

    /// Whether `s` represents no concrete state. Parts of a sliced state are
    /// checked in order, stopping at the first unsatisfiable one.
    pub fn is_empty(&mut self, s: &MultiState) -> Result<CheckOutcome, CheckError> {
        self.counts.emptiness_checks += 1;
        let mut decided_by = DecidedBy::Syntactic;
        for part in s.symbolic.parts() {
            if part.is_empty() {
                continue;
            }
            let (sat, by) = self.decide(
                QueryKind::Emptiness,
                part.canonical_key().as_bytes(),
                Query::Satisfiable(part),
            )?;
            decided_by = decided_by.max(by);
            if !sat {
                return Ok(CheckOutcome {
                    result: Outcome::Empty,
                    decided_by,
                });
            }
        }
        Ok(CheckOutcome {
            result: Outcome::NonEmpty,
            decided_by,
        })
    }

    /// Equality of two non-empty states with the same explicit part. Parts
    /// are visited in ascending order, direction 1→2 before 2→1, stopping at
    /// the first satisfiable query.
    pub fn equal_states(&mut self, s1: &MultiState, s2: &MultiState) -> Result<CheckOutcome, CheckError> {
        let m = MatchedPairs::new(s1, s2)?;
        let mut decided_by = DecidedBy::Syntactic;
        for i in 0..m.len() {
            if self.syntactic_fast_path && m.syntactically_equal(i) {
                self.counts.equal_checks += 2;
                self.counts.syntactic_equal += 2;
                self.record(|| pvars(m.pair(i).0), DecidedBy::Syntactic, false, 2);
                continue;
            }
            for reverse in [false, true] {
                let q = m.query(i, reverse);
                let (sat, by) = self.decide(QueryKind::NotSubseteq, q.canonical(), Query::NotSubseteq(&q))?;
                self.counts.equal_checks += 1;
                match by {
                    DecidedBy::Cache => self.counts.cache_hits += 1,
                    DecidedBy::Solver => self.counts.solver_calls += 1,
                    DecidedBy::Syntactic => unreachable!(),
                }
                decided_by = decided_by.max(by);
                self.record(|| pvars(m.pair(i).0), by, sat, 1);
                if sat {
                    return Ok(CheckOutcome {
                        result: Outcome::NotEqual,
                        decided_by,
                    });
                }
            }
        }
        Ok(CheckOutcome {
            result: Outcome::Equal,
            decided_by,
        })
    }
}

/// Matches two sliced parts after padding; exposed for tests of the
/// matching layer on whole states.
pub fn matched_parts(s1: &MultiState, s2: &MultiState) -> Result<(SlicedParts, SlicedParts), StateError> {
    let m = MatchedPairs::new(s1, s2)?;
    let (l, r): (Vec<_>, Vec<_>) = m.pairs.into_iter().unzip();
    Ok((SlicedParts::from_parts(l), SlicedParts::from_parts(r)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multistate::{initial_state, Representation};
    use crate::progmodel::parse_program;

    fn state(repr: Representation, clauses: impl Fn(&dyn Fn(u32, u32) -> Term) -> Vec<Term>) -> MultiState {
        let p = parse_program("fn main() { var x: u2; var y: u2; }").unwrap();
        let mut s = initial_state(&p, repr);
        let var = |pos: u32, g: u32| Term::var(VarId::new(0, pos, g), 2);
        for c in clauses(&var) {
            for id in c.free_vars() {
                let pv = crate::multistate::prog_var(id);
                let g = s.gens.entry(pv).or_insert(id.generation);
                *g = (*g).max(id.generation);
            }
            s.symbolic.conjoin_clause(c);
        }
        s
    }

    fn pipeline() -> DecisionPipeline {
        DecisionPipeline::new(&BackendConfig::enumeration(), true, true)
    }

    #[test]
    fn identical_states_are_syntactically_equal() {
        for repr in [Representation::Monolithic, Representation::Sliced] {
            let s = state(repr, |v| vec![build::ule(v(0, 1), v(1, 1))]);
            let mut p = pipeline();
            let out = p.equal_states(&s, &s).unwrap();
            assert_eq!(out.result, Outcome::Equal);
            assert_eq!(out.decided_by, DecidedBy::Syntactic);
            assert_eq!(p.counts().solver_calls, 0);
        }
    }

    #[test]
    fn reordered_definitions_are_equal_only_semantically() {
        // x = 1 ∧ y = x versus y = 1 ∧ x = y
        let a = state(Representation::Sliced, |v| {
            vec![build::eq(v(0, 1), Term::bv(1, 2)), build::eq(v(1, 1), v(0, 1))]
        });
        let b = state(Representation::Sliced, |v| {
            vec![build::eq(v(1, 1), Term::bv(1, 2)), build::eq(v(0, 1), v(1, 1))]
        });
        assert!(!syntactically_equal(&a, &b).unwrap());
        let mut p = pipeline();
        let out = p.equal_states(&a, &b).unwrap();
        assert_eq!(out.result, Outcome::Equal);
        assert_eq!(out.decided_by, DecidedBy::Solver);
        assert_eq!(p.counts().solver_calls, 2);
    }

    #[test]
    fn strict_subset_is_not_equal() {
        let small = state(Representation::Sliced, |v| vec![build::eq(v(0, 1), Term::bv(0, 2))]);
        let big = state(Representation::Sliced, |v| vec![build::ule(v(0, 1), Term::bv(1, 2))]);
        let mut p = pipeline();
        assert_eq!(p.equal_states(&small, &big).unwrap().result, Outcome::NotEqual);
        // 1→2 is unsat, so both directions were issued
        assert_eq!(p.counts().equal_checks, 2);
        let q = build_not_subseteq(&small, &big).unwrap();
        let e = crate::solverbridge::Enumerator::new(24);
        assert_eq!(e.not_subseteq(&q), Ok(false));
    }

    #[test]
    fn emptiness_short_circuits() {
        let s = state(Representation::Sliced, |v| {
            vec![
                build::eq(v(1, 1), v(1, 1)),
                build::ule(v(0, 1), Term::bv(1, 2)),
                build::eq(v(0, 1), Term::bv(3, 2)),
            ]
        });
        let mut p = pipeline();
        assert_eq!(p.is_empty(&s).unwrap().result, Outcome::Empty);
        assert_eq!(p.cache_stats().unwrap().misses, 2);
        let top = state(Representation::Sliced, |_| vec![]);
        assert_eq!(p.is_empty(&top).unwrap().result, Outcome::NonEmpty);
    }

    #[test]
    fn missing_variable_is_padded() {
        // y untouched on one side and unconstrained on the other
        let a = state(Representation::Sliced, |v| vec![build::eq(v(0, 1), Term::bv(0, 2))]);
        let b = state(Representation::Sliced, |v| {
            vec![build::eq(v(0, 1), Term::bv(0, 2)), build::eq(v(1, 1), v(1, 1))]
        });
        let mut p = pipeline();
        assert_eq!(p.equal_states(&a, &b).unwrap().result, Outcome::Equal);
        let c = state(Representation::Sliced, |v| {
            vec![build::eq(v(0, 1), Term::bv(0, 2)), build::eq(v(1, 1), Term::bv(2, 2))]
        });
        assert_eq!(p.equal_states(&a, &c).unwrap().result, Outcome::NotEqual);
    }

    #[test]
    fn cache_serves_repeated_queries() {
        let a = state(Representation::Sliced, |v| vec![build::eq(v(0, 1), Term::bv(0, 2))]);
        let b = state(Representation::Sliced, |v| vec![build::ule(v(0, 1), Term::bv(0, 2))]);
        let mut p = pipeline().with_revalidation(1);
        p.equal_states(&a, &b).unwrap();
        p.equal_states(&a, &b).unwrap();
        let c = p.counts();
        assert_eq!((c.equal_checks, c.solver_calls, c.cache_hits), (4, 2, 2));
    }
}
