//! Worklist exploration of the multi-state space with equality-based
//! deduplication per explicit part.

use std::collections::{HashMap, VecDeque};
use std::time::Instant;

use thiserror::Error;

use crate::eqcheck::{CheckError, DecisionPipeline, Outcome, QueryRecord};
use crate::multistate::{apply_instruction, initial_state, ExplicitKey, MultiState, Representation};
use crate::progmodel::{enabled_steps, Program};
use crate::querycache::CacheStats;
use crate::solverbridge::BackendConfig;

/// How symbolic parts are stored: one conjunction, or independent slices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StoreKind {
    Smt,
    Partial,
}

impl StoreKind {
    pub fn representation(self) -> Representation {
        match self {
            StoreKind::Smt => Representation::Monolithic,
            StoreKind::Partial => Representation::Sliced,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SearchOrder {
    Bfs,
    Dfs,
}

#[derive(Clone, Debug)]
pub struct ExploreConfig {
    pub store: StoreKind,
    pub cache_enabled: bool,
    pub syntactic_fast_path: bool,
    pub backend: BackendConfig,
    pub max_states: usize,
    pub order: SearchOrder,
    /// Re-decide every n-th cache hit with the backend.
    pub revalidate_every: Option<u64>,
    /// Keep a record of every equality query in the result.
    pub record_queries: bool,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig {
            store: StoreKind::Partial,
            cache_enabled: true,
            syntactic_fast_path: true,
            backend: BackendConfig::external("z3"),
            max_states: 1_000_000,
            order: SearchOrder::Bfs,
            revalidate_every: None,
            record_queries: false,
        }
    }
}

/// One scheduling step: thread index and the instruction index it executed.
pub type TraceStep = (usize, usize);

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Safe,
    AssertFail(Vec<TraceStep>),
    Exhausted(usize),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StatsLedger {
    pub equal_checks: u64,
    pub syntactic_equal: u64,
    pub cache_hits: u64,
    pub solver_calls: u64,
    pub states_generated: u64,
    pub states_deduplicated: u64,
    pub states_stored: u64,
    pub emptiness_checks: u64,
    pub wall_time_ms: u64,
}

impl StatsLedger {
    /// Every equality query is accounted for by exactly one mechanism.
    pub fn is_conserved(&self) -> bool {
        self.equal_checks == self.syntactic_equal + self.cache_hits + self.solver_calls
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExploreError {
    #[error("max_states must be at least 1")]
    InvalidConfig,
    #[error(transparent)]
    Check(#[from] CheckError),
}

/// Stored states bucketed by explicit part.
#[derive(Default)]
pub struct SeenIndex {
    states: Vec<MultiState>,
    buckets: HashMap<ExplicitKey, Vec<usize>>,
}

impl SeenIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, s: MultiState) -> usize {
        let id = self.states.len();
        self.buckets.entry(s.explicit_key()).or_default().push(id);
        self.states.push(s);
        id
    }

    /// Ids of stored states with the given explicit part, in insertion order.
    pub fn candidates(&self, key: &ExplicitKey) -> &[usize] {
        self.buckets.get(key).map_or(&[], Vec::as_slice)
    }

    pub fn get(&self, id: usize) -> &MultiState {
        &self.states[id]
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[MultiState] {
        &self.states
    }
}

pub struct Exploration {
    pub verdict: Verdict,
    pub stats: StatsLedger,
    pub cache_stats: Option<CacheStats>,
    pub seen: SeenIndex,
    pub query_log: Vec<QueryRecord>,
}

/// Explores all interleavings of `program` from its initial state.
///
/// Empty successors are dropped; the rest are compared with stored states of
/// the same explicit part in insertion order and kept only if none is equal.
/// The first non-empty error state ends the search.
pub fn explore(program: &Program, cfg: &ExploreConfig) -> Result<Exploration, ExploreError> {
    if cfg.max_states == 0 {
        return Err(ExploreError::InvalidConfig);
    }
    let start = Instant::now();
    let mut pipeline = DecisionPipeline::new(&cfg.backend, cfg.cache_enabled, cfg.syntactic_fast_path);
    if let Some(n) = cfg.revalidate_every {
        pipeline = pipeline.with_revalidation(n);
    }
    if cfg.record_queries {
        pipeline = pipeline.with_query_log();
    }
    let mut stats = StatsLedger::default();
    let mut seen = SeenIndex::new();
    let mut parent: Vec<Option<(usize, TraceStep)>> = Vec::new();
    let mut work: VecDeque<usize> = VecDeque::new();

    seen.put(initial_state(program, cfg.store.representation()));
    parent.push(None);
    work.push_back(0);

    let trace_to = |parent: &[Option<(usize, TraceStep)>], mut id: usize| {
        let mut steps = Vec::new();
        while let Some((p, step)) = parent[id] {
            steps.push(step);
            id = p;
        }
        steps.reverse();
        steps
    };

    let verdict = 'search: loop {
        let next = match cfg.order {
            SearchOrder::Bfs => work.pop_front(),
            SearchOrder::Dfs => work.pop_back(),
        };
        let Some(id) = next else { break Verdict::Safe };
        let state = seen.get(id).clone();
        for (thread, instr) in enabled_steps(&state.control, program) {
            let pc = state.control.threads[thread].top().expect("enabled thread").pc;
            for succ in apply_instruction(program, &state, thread, instr) {
                stats.states_generated += 1;
                if succ.pruned && pipeline.is_empty(&succ.state)?.result == Outcome::Empty {
                    continue;
                }
                if succ.state.error {
                    let mut trace = trace_to(&parent, id);
                    trace.push((thread, pc));
                    break 'search Verdict::AssertFail(trace);
                }
                let key = succ.state.explicit_key();
                let mut duplicate = false;
                for &old in seen.candidates(&key) {
                    if pipeline.equal_states(&succ.state, seen.get(old))?.result == Outcome::Equal {
                        duplicate = true;
                        break;
                    }
                }
                if duplicate {
                    stats.states_deduplicated += 1;
                    continue;
                }
                if seen.len() >= cfg.max_states {
                    break 'search Verdict::Exhausted(cfg.max_states);
                }
                let new = seen.put(succ.state);
                parent.push(Some((id, (thread, pc))));
                work.push_back(new);
            }
        }
    };

    let counts = pipeline.counts();
    stats.equal_checks = counts.equal_checks;
    stats.syntactic_equal = counts.syntactic_equal;
    stats.cache_hits = counts.cache_hits;
    stats.solver_calls = counts.solver_calls;
    stats.emptiness_checks = counts.emptiness_checks;
    stats.states_stored = seen.len() as u64;
    stats.wall_time_ms = start.elapsed().as_millis() as u64;
    Ok(Exploration {
        verdict,
        stats,
        cache_stats: pipeline.cache_stats(),
        seen,
        query_log: pipeline.query_log().to_vec(),
    })
}

/// Replays a trace from the initial state and returns a non-empty error
/// state it reaches, if any. Branch choices are resolved by trying every
/// successor that keeps the remaining steps enabled.
pub fn replay_trace(
    program: &Program,
    repr: Representation,
    trace: &[TraceStep],
    pipeline: &mut DecisionPipeline,
) -> Result<Option<MultiState>, CheckError> {
    fn go(
        program: &Program,
        s: &MultiState,
        trace: &[TraceStep],
        pipeline: &mut DecisionPipeline,
    ) -> Result<Option<MultiState>, CheckError> {
        let Some((&(thread, pc), rest)) = trace.split_first() else {
            return Ok(s.error.then(|| s.clone()));
        };
        if s.error {
            return Ok(None);
        }
        let Some((_, instr)) = enabled_steps(&s.control, program)
            .into_iter()
            .find(|(t, _)| *t == thread && s.control.threads[*t].top().is_some_and(|f| f.pc == pc))
        else {
            return Ok(None);
        };
        for succ in apply_instruction(program, s, thread, instr) {
            if pipeline.is_empty(&succ.state)?.result == Outcome::Empty {
                continue;
            }
            if let Some(end) = go(program, &succ.state, rest, pipeline)? {
                return Ok(Some(end));
            }
        }
        Ok(None)
    }
    go(program, &initial_state(program, repr), trace, pipeline)
}
