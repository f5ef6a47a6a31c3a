//! Control-explicit data-symbolic (CEDS) model checking for a small concurrent
//! language.
//!
//! Control locations and memory shapes are enumerated explicitly while data
//! valuations are kept as quantifier-free bit-vector formulas. States can be
//! stored monolithically or sliced into mutually independent parts, which
//! makes equality checks cheaper and lets a cache reuse their verdicts.

pub mod bvlogic;
pub mod eqcheck;
pub mod explorer;
pub mod multistate;
pub mod progmodel;
pub mod querycache;
pub mod solverbridge;

pub use bvlogic::{Assignment, Conjunction, Op, Side, Sort, Term, Value, VarId};
pub use eqcheck::{CheckError, CheckOutcome, DecidedBy, DecisionPipeline, EqualityQuery, Outcome};
pub use explorer::{explore, ExploreConfig, ExploreError, Exploration, SearchOrder, StatsLedger, StoreKind, Verdict};
pub use multistate::{MultiState, Representation, SymbolicPart};
pub use progmodel::{parse_program, Program, ProgramError};
pub use querycache::{CacheKey, CacheStats, QueryCache, QueryKind};
pub use solverbridge::{BackendConfig, SatResult};
