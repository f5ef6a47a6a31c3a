use std::collections::BTreeMap;
use std::sync::Arc;

use super::{FnId, Instr, Program};

/// A program variable, identified by segment and position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProgVar {
    pub segment: u32,
    pub position: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mark {
    Symbolic,
    /// Concrete value, kept out of the formula.
    Explicit(u64),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct VarDesc {
    pub name: Arc<str>,
    pub width: u32,
    pub mark: Mark,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Segment {
    /// Function whose activation owns the segment; `None` for globals.
    pub owner: Option<FnId>,
    pub vars: Vec<VarDesc>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct MemoryShape {
    pub segments: BTreeMap<u32, Segment>,
}

impl MemoryShape {
    pub fn var(&self, pv: ProgVar) -> Option<&VarDesc> {
        self.segments.get(&pv.segment)?.vars.get(pv.position as usize)
    }

    pub fn var_mut(&mut self, pv: ProgVar) -> Option<&mut VarDesc> {
        self.segments.get_mut(&pv.segment)?.vars.get_mut(pv.position as usize)
    }

    /// Lowest segment id not in use.
    pub fn fresh_segment_id(&self) -> u32 {
        let mut id = 0;
        while self.segments.contains_key(&id) {
            id += 1;
        }
        id
    }

    /// Every live variable marked symbolic.
    pub fn symbolic_vars(&self) -> impl Iterator<Item = ProgVar> + '_ {
        self.segments.iter().flat_map(|(&segment, seg)| {
            seg.vars
                .iter()
                .enumerate()
                .filter(|(_, d)| d.mark == Mark::Symbolic)
                .map(move |(p, _)| ProgVar {
                    segment,
                    position: p as u32,
                })
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Frame {
    pub function: FnId,
    pub pc: usize,
    pub segment: u32,
    /// Caller variable receiving the return value.
    pub ret_dst: Option<ProgVar>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Thread {
    /// Call stack, innermost frame last. Empty once the thread has finished.
    pub frames: Vec<Frame>,
    /// Threads spawned by this one, in spawn order.
    pub children: Vec<usize>,
    /// How many of `children` have been joined.
    pub joined: usize,
}

impl Thread {
    pub fn is_finished(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn top(&self) -> Option<&Frame> {
        self.frames.last()
    }
}

/// One call stack per thread. Finished threads keep their slot so thread
/// indices stay stable.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct ControlPart {
    pub threads: Vec<Thread>,
}

impl ControlPart {
    pub fn all_finished(&self) -> bool {
        self.threads.iter().all(Thread::is_finished)
    }
}

/// Instructions that can execute next, one per live, non-blocked thread, in
/// thread order. A thread at `join` is blocked while the child it waits for
/// is still running.
pub fn enabled_steps<'p>(control: &ControlPart, program: &'p Program) -> Vec<(usize, &'p Instr)> {
    control
        .threads
        .iter()
        .enumerate()
        .filter_map(|(i, t)| {
            let frame = t.top()?;
            let instr = &program.function(frame.function).body[frame.pc];
            if let Instr::Join = instr {
                if let Some(&child) = t.children.get(t.joined) {
                    if !control.threads[child].is_finished() {
                        return None;
                    }
                }
            }
            Some((i, instr))
        })
        .collect()
}
