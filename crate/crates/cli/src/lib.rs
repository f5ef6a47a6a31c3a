//! Flags, run reports and benchmark mode for `ceds-mc`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ceds_core::explorer::TraceStep;
use ceds_core::{explore, BackendConfig, ExploreConfig, ExploreError, SearchOrder, StatsLedger, StoreKind, Verdict};
use clap::{Parser, ValueEnum};
use serde::Serialize;

pub const EXIT_SAFE: i32 = 0;
pub const EXIT_ASSERT_FAIL: i32 = 1;
pub const EXIT_EXHAUSTED: i32 = 2;
pub const EXIT_USAGE: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Store {
    Smt,
    Partial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Smtlib,
    Enum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Order {
    Bfs,
    Dfs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Parser, Debug, Clone)]
#[command(name = "ceds-mc", version, about = "Control-explicit data-symbolic model checker")]
pub struct Args {
    /// Program to check (.cir)
    #[arg(required_unless_present = "bench")]
    pub program: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "partial")]
    pub store: Store,
    #[arg(long, value_enum, default_value = "on")]
    pub cache: Switch,
    #[arg(long, value_enum, default_value = "smtlib")]
    pub backend: Backend,
    /// Solver binary; defaults to $CEDS_SOLVER, then `z3`
    #[arg(long)]
    pub solver: Option<PathBuf>,
    #[arg(long, default_value_t = 1_000_000)]
    pub max_states: usize,
    #[arg(long, value_enum, default_value = "bfs")]
    pub order: Order,
    /// Run every .cir file in a directory
    #[arg(long)]
    pub bench: Option<PathBuf>,
    /// With --bench, run each program under all four store/cache combinations
    #[arg(long, requires = "bench")]
    pub all_configs: bool,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

/// One store/cache/backend combination.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub store: Store,
    pub cache: Switch,
    pub backend: Backend,
    pub solver: PathBuf,
    pub max_states: usize,
    pub order: Order,
}

impl RunConfig {
    pub fn from_args(args: &Args) -> Self {
        let solver = args
            .solver
            .clone()
            .or_else(|| std::env::var_os("CEDS_SOLVER").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("z3"));
        RunConfig {
            store: args.store,
            cache: args.cache,
            backend: args.backend,
            solver,
            max_states: args.max_states,
            order: args.order,
        }
    }

    pub fn explore_config(&self) -> ExploreConfig {
        ExploreConfig {
            store: match self.store {
                Store::Smt => StoreKind::Smt,
                Store::Partial => StoreKind::Partial,
            },
            cache_enabled: self.cache == Switch::On,
            backend: match self.backend {
                Backend::Smtlib => BackendConfig::external(&self.solver),
                Backend::Enum => BackendConfig::enumeration(),
            },
            max_states: self.max_states,
            order: match self.order {
                Order::Bfs => SearchOrder::Bfs,
                Order::Dfs => SearchOrder::Dfs,
            },
            ..ExploreConfig::default()
        }
    }

    /// The four store/cache combinations, in a fixed order.
    pub fn all(&self) -> Vec<RunConfig> {
        let mut out = Vec::new();
        for store in [Store::Smt, Store::Partial] {
            for cache in [Switch::Off, Switch::On] {
                out.push(RunConfig {
                    store,
                    cache,
                    ..self.clone()
                });
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CacheStatsReport {
    pub hits: u64,
    pub misses: u64,
    pub entries: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RunReport {
    pub program: String,
    pub store: Store,
    pub cache: Switch,
    pub backend: Backend,
    pub verdict: String,
    pub equal_checks: u64,
    pub syntactic_equal: u64,
    pub cache_hits: u64,
    pub solver_calls: u64,
    pub emptiness_checks: u64,
    pub states_generated: u64,
    pub states_stored: u64,
    pub states_deduplicated: u64,
    pub wall_time_ms: u64,
    pub cache_stats: Option<CacheStatsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceStep>>,
}

impl RunReport {
    pub fn new(program: &Path, cfg: &RunConfig, verdict: &Verdict, stats: &StatsLedger) -> Self {
        let (name, trace) = match verdict {
            Verdict::Safe => ("safe", None),
            Verdict::AssertFail(t) => ("assert_fail", Some(t.clone())),
            Verdict::Exhausted(_) => ("exhausted", None),
        };
        RunReport {
            program: program.display().to_string(),
            store: cfg.store,
            cache: cfg.cache,
            backend: cfg.backend,
            verdict: name.to_string(),
            equal_checks: stats.equal_checks,
            syntactic_equal: stats.syntactic_equal,
            cache_hits: stats.cache_hits,
            solver_calls: stats.solver_calls,
            emptiness_checks: stats.emptiness_checks,
            states_generated: stats.states_generated,
            states_stored: stats.states_stored,
            states_deduplicated: stats.states_deduplicated,
            wall_time_ms: stats.wall_time_ms,
            cache_stats: None,
            trace,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.verdict.as_str() {
            "safe" => EXIT_SAFE,
            "assert_fail" => EXIT_ASSERT_FAIL,
            _ => EXIT_EXHAUSTED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConservationViolated;

const COLUMNS: [&str; 9] = [
    "verdict",
    "equal_checks",
    "syntactic_equal",
    "cache_hits",
    "solver_calls",
    "emptiness_checks",
    "states_generated",
    "states_stored",
    "wall_time_ms",
];

fn row(r: &RunReport) -> Vec<String> {
    vec![
        r.verdict.clone(),
        r.equal_checks.to_string(),
        r.syntactic_equal.to_string(),
        r.cache_hits.to_string(),
        r.solver_calls.to_string(),
        r.emptiness_checks.to_string(),
        r.states_generated.to_string(),
        r.states_stored.to_string(),
        r.wall_time_ms.to_string(),
    ]
}

fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(header.to_vec(), &mut out);
    for r in rows {
        line(r.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

/// Renders a report. Refuses reports whose equality checks are not fully
/// accounted for by syntactic matches, cache hits and solver calls.
pub fn emit_report(r: &RunReport, format: Format) -> Result<String, ConservationViolated> {
    if r.equal_checks != r.syntactic_equal + r.cache_hits + r.solver_calls {
        return Err(ConservationViolated);
    }
    Ok(match format {
        Format::Json => serde_json::to_string(r).expect("report serializes") + "\n",
        Format::Text => table(&COLUMNS, &[row(r)]),
    })
}

/// Aggregate table for benchmark mode.
pub fn bench_table(reports: &[RunReport]) -> String {
    let mut header = vec!["program", "store", "cache"];
    header.extend(COLUMNS);
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let name = Path::new(&r.program)
                .file_name()
                .map_or(r.program.clone(), |n| n.to_string_lossy().into_owned());
            let mut cells = vec![
                name,
                format!("{:?}", r.store).to_lowercase(),
                format!("{:?}", r.cache).to_lowercase(),
            ];
            cells.extend(row(r));
            cells
        })
        .collect();
    table(&header, &rows)
}

#[derive(Debug)]
pub enum RunError {
    Usage(String),
    Internal(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(_) => EXIT_USAGE,
            RunError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

/// Parses and explores one program file.
pub fn run_program(path: &Path, cfg: &RunConfig) -> Result<RunReport, RunError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| RunError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let program = ceds_core::parse_program(&text).map_err(|e| RunError::Usage(format!("{}: {e}", path.display())))?;
    let result = explore(&program, &cfg.explore_config()).map_err(|e| match e {
        ExploreError::InvalidConfig => RunError::Usage(e.to_string()),
        ExploreError::Check(e) => RunError::Internal(format!("{}: {e}", path.display())),
    })?;
    let mut report = RunReport::new(path, cfg, &result.verdict, &result.stats);
    report.cache_stats = result.cache_stats.map(|c| CacheStatsReport {
        hits: c.hits,
        misses: c.misses,
        entries: c.entries,
    });
    Ok(report)
}

/// Corpus files in a directory, sorted by name.
pub fn corpus_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "cir"))
        .collect();
    files.sort();
    Ok(files)
}

/// Runs the command line; returns the process exit code.
pub fn run(argv: impl IntoIterator<Item = std::ffi::OsString>) -> i32 {
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
        }
    };
    let cfg = RunConfig::from_args(&args);
    if cfg.max_states == 0 {
        eprintln!("error: --max-states must be at least 1");
        return EXIT_USAGE;
    }

    let (files, configs) = match &args.bench {
        Some(dir) => match corpus_files(dir) {
            Ok(f) => (f, if args.all_configs { cfg.all() } else { vec![cfg] }),
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", dir.display());
                return EXIT_USAGE;
            }
        },
        None => (vec![args.program.clone().expect("required by clap")], vec![cfg]),
    };
    if args.bench.is_none() && !files[0].is_file() {
        use clap::CommandFactory;
        eprintln!("error: no such file: {}\n", files[0].display());
        eprintln!("{}", Args::command().render_usage());
        return EXIT_USAGE;
    }

    let mut reports = Vec::new();
    for file in &files {
        for c in &configs {
            let report = match run_program(file, c) {
                Ok(r) => r,
                Err(e) => {
                    match &e {
                        RunError::Usage(m) | RunError::Internal(m) => eprintln!("error: {m}"),
                    }
                    return e.exit_code();
                }
            };
            match emit_report(&report, args.format) {
                Ok(text) => print!("{text}"),
                Err(ConservationViolated) => {
                    eprintln!("internal error: equality-check ledger does not add up for {}", report.program);
                    return EXIT_INTERNAL;
                }
            }
            reports.push(report);
        }
    }
    if args.bench.is_some() {
        eprint!("{}", bench_table(&reports));
        EXIT_SAFE
    } else {
        reports[0].exit_code()
    }
}
