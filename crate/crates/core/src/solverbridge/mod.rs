//! Satisfiability backends: an external SMT-LIB v2 solver process and an
//! exhaustive enumeration engine for small widths.

mod enumerate;
mod external;

use std::path::PathBuf;

use crate::bvlogic::{smtlib, Conjunction};
use crate::eqcheck::EqualityQuery;

pub use enumerate::{DomainTooLarge, Enumerator};
pub use external::{ExternalSolver, SessionStats};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SatResult {
    Sat,
    Unsat,
    Unknown,
    BackendError(String),
}

impl SatResult {
    fn from_bool(sat: bool) -> Self {
        if sat {
            SatResult::Sat
        } else {
            SatResult::Unsat
        }
    }
}

pub const DEFAULT_MAX_DOMAIN_BITS: u32 = 24;
pub const DEFAULT_TIMEOUT_MS: u64 = 60_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BackendConfig {
    External {
        path: PathBuf,
        args: Vec<String>,
        timeout_ms: u64,
    },
    Enumeration {
        max_domain_bits: u32,
    },
}

impl BackendConfig {
    /// An external solver speaking SMT-LIB on stdin. `z3` gets its `-in`
    /// flag.
    pub fn external(path: impl Into<PathBuf>) -> Self {
        let path = path.into();
        let args = match path.file_stem().and_then(|s| s.to_str()) {
            Some("z3") => vec!["-in".to_string()],
            _ => Vec::new(),
        };
        BackendConfig::External {
            path,
            args,
            timeout_ms: DEFAULT_TIMEOUT_MS,
        }
    }

    pub fn enumeration() -> Self {
        BackendConfig::Enumeration {
            max_domain_bits: DEFAULT_MAX_DOMAIN_BITS,
        }
    }
}

/// Something a backend can decide.
#[derive(Clone, Copy, Debug)]
pub enum Query<'a> {
    Satisfiable(&'a Conjunction),
    NotSubseteq(&'a EqualityQuery),
}

impl Query<'_> {
    pub fn smtlib(&self) -> String {
        match self {
            Query::Satisfiable(c) => smtlib::conjunction_script(c),
            Query::NotSubseteq(q) => smtlib::script(&q.body()),
        }
    }
}

pub enum Backend {
    Enumeration(Enumerator),
    External(ExternalSolver),
}

impl Backend {
    pub fn new(cfg: &BackendConfig) -> Self {
        match cfg {
            BackendConfig::Enumeration { max_domain_bits } => Backend::Enumeration(Enumerator::new(*max_domain_bits)),
            BackendConfig::External { path, args, timeout_ms } => {
                Backend::External(ExternalSolver::new(path.clone(), args.clone(), *timeout_ms))
            }
        }
    }

    pub fn check(&mut self, q: Query) -> SatResult {
        match self {
            Backend::Enumeration(e) => {
                let r = match q {
                    Query::Satisfiable(c) => e.satisfiable(c),
                    Query::NotSubseteq(q) => e.not_subseteq(q),
                };
                match r {
                    Ok(sat) => SatResult::from_bool(sat),
                    Err(err) => SatResult::BackendError(err.to_string()),
                }
            }
            Backend::External(s) => s.check(&q.smtlib()),
        }
    }

    pub fn session_stats(&self) -> Option<SessionStats> {
        match self {
            Backend::External(s) => Some(s.stats()),
            Backend::Enumeration(_) => None,
        }
    }
}
