//! A persistent SMT-LIB v2 solver child process.

use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use super::SatResult;

/// Counters observable by callers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SessionStats {
    pub spawns: u64,
    pub queries: u64,
}

struct Process {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
    fresh: bool,
}

impl Drop for Process {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

enum Failure {
    /// The process is gone or the pipe broke; worth one respawn.
    Died(String),
    Timeout,
    Malformed(String),
}

/// One solver process reused across queries with `(reset)` in between.
pub struct ExternalSolver {
    path: PathBuf,
    args: Vec<String>,
    timeout: Duration,
    process: Option<Process>,
    stats: SessionStats,
}

impl ExternalSolver {
    pub fn new(path: impl Into<PathBuf>, args: Vec<String>, timeout_ms: u64) -> Self {
        ExternalSolver {
            path: path.into(),
            args,
            timeout: Duration::from_millis(timeout_ms),
            process: None,
            stats: SessionStats::default(),
        }
    }

    pub fn stats(&self) -> SessionStats {
        self.stats
    }

    /// Kills the child process, if any. The next query respawns it.
    pub fn kill(&mut self) {
        if let Some(p) = self.process.as_mut() {
            let _ = p.child.kill();
            let _ = p.child.wait();
        }
    }

    fn spawn(&mut self) -> Result<Process, String> {
        let mut child = Command::new(&self.path)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| format!("cannot start solver {}: {e}", self.path.display()))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        self.stats.spawns += 1;
        Ok(Process {
            child,
            stdin,
            lines: rx,
            fresh: true,
        })
    }

    /// Sends one complete script ending in `(check-sat)` and reads the
    /// verdict. A dead process is respawned once.
    pub fn check(&mut self, script: &str) -> SatResult {
        self.stats.queries += 1;
        for attempt in 0..2 {
            if self.process.is_none() {
                match self.spawn() {
                    Ok(p) => self.process = Some(p),
                    Err(e) => return SatResult::BackendError(e),
                }
            }
            match self.exchange(script) {
                Ok(r) => return r,
                Err(Failure::Timeout) => {
                    self.process = None;
                    return SatResult::Unknown;
                }
                Err(Failure::Malformed(raw)) => {
                    self.process = None;
                    return SatResult::BackendError(format!("unexpected solver output: {raw}"));
                }
                Err(Failure::Died(msg)) => {
                    self.process = None;
                    if attempt == 1 {
                        return SatResult::BackendError(msg);
                    }
                }
            }
        }
        unreachable!()
    }

    fn exchange(&mut self, script: &str) -> Result<SatResult, Failure> {
        let timeout = self.timeout;
        let p = self.process.as_mut().expect("process spawned");
        if let Ok(Some(status)) = p.child.try_wait() {
            return Err(Failure::Died(format!("solver exited with {status}")));
        }
        // drop output left over from a previous query
        while p.lines.try_recv().is_ok() {}
        let mut text = String::new();
        if !p.fresh {
            text.push_str("(reset)\n");
        }
        text.push_str(script);
        p.fresh = false;
        p.stdin
            .write_all(text.as_bytes())
            .and_then(|_| p.stdin.flush())
            .map_err(|e| Failure::Died(format!("cannot write to solver: {e}")))?;
        loop {
            match p.lines.recv_timeout(timeout) {
                Ok(line) => {
                    let answer = line.trim();
                    match answer {
                        "" => continue,
                        "sat" => return Ok(SatResult::Sat),
                        "unsat" => return Ok(SatResult::Unsat),
                        "unknown" => return Ok(SatResult::Unknown),
                        _ => return Err(Failure::Malformed(line)),
                    }
                }
                Err(RecvTimeoutError::Timeout) => return Err(Failure::Timeout),
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(Failure::Died("solver closed its output".to_string()));
                }
            }
        }
    }
}
