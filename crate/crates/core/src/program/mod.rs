//! Bounded concurrent programs: a tiny line-oriented DSL of straight-line
//! threads with forward branches, plus the replay interpreter that turns an
//! execution graph back into per-thread control state.
//!
//! ```text
//! # comment
//! thread 1
//!   a = read x
//!   if a == 2 goto L
//!   write y 1
//!   L: assume a < 3
//! ```

mod parse;
mod replay;

use std::fmt;

use serde::Serialize;

pub use parse::{parse_program, ParseError, ParseErrorKind};
pub use replay::{next_events, program_state, replay_thread, AccessKind, PendingEvent, ReplayError, ThreadReplayState, ThreadStatus};

/// Thread identifier. Program threads are numbered from 1; 0 is the init event.
pub type Tid = u32;

/// Interned shared-memory location.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Loc(pub u32);

/// Thread-local register, indexed into [`Thread::registers`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Reg(pub u16);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Operand {
    Reg(Reg),
    Const(i64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Const(i64),
    Reg(Reg),
    /// `reg + constant` (subtraction is stored as a negative constant).
    Add(Reg, i64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Cond {
    pub lhs: Operand,
    pub op: CmpOp,
    pub rhs: Operand,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Instruction {
    Read { reg: Reg, loc: Loc },
    Write { loc: Loc, expr: Expr },
    /// Jump to `target` (an instruction index, possibly one past the end) when `cond` holds.
    Branch { cond: Cond, target: usize },
    Assume(Cond),
}

impl Instruction {
    pub fn is_memory_access(&self) -> bool {
        matches!(self, Instruction::Read { .. } | Instruction::Write { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Thread {
    pub tid: Tid,
    pub instructions: Vec<Instruction>,
    /// Register names in order of first appearance.
    pub registers: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Program {
    /// Threads sorted by `tid`, which runs contiguously from 1.
    pub threads: Vec<Thread>,
    /// Location names in order of first appearance.
    pub locations: Vec<String>,
}

impl Program {
    pub fn thread(&self, tid: Tid) -> Option<&Thread> {
        if tid == 0 {
            return None;
        }
        self.threads.get(tid as usize - 1)
    }

    pub fn thread_count(&self) -> usize {
        self.threads.len()
    }

    /// Total instruction count; bounds the length of every run.
    pub fn size(&self) -> usize {
        self.threads.iter().map(|t| t.instructions.len()).sum()
    }

    /// Upper bound on the number of memory events a run can produce.
    pub fn max_events(&self) -> usize {
        self.threads
            .iter()
            .map(|t| t.instructions.iter().filter(|i| i.is_memory_access()).count())
            .sum()
    }

    pub fn has_assume(&self) -> bool {
        self.threads
            .iter()
            .any(|t| t.instructions.iter().any(|i| matches!(i, Instruction::Assume(_))))
    }

    pub fn location_name(&self, loc: Loc) -> &str {
        self.locations.get(loc.0 as usize).map(String::as_str).unwrap_or("?")
    }

    pub fn location(&self, name: &str) -> Option<Loc> {
        self.locations.iter().position(|l| l == name).map(|i| Loc(i as u32))
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
        })
    }
}

struct ThreadPrinter<'a> {
    thread: &'a Thread,
    program: &'a Program,
}

impl ThreadPrinter<'_> {
    fn reg(&self, r: Reg) -> &str {
        &self.thread.registers[r.0 as usize]
    }

    fn operand(&self, o: &Operand) -> String {
        match o {
            Operand::Reg(r) => self.reg(*r).to_string(),
            Operand::Const(c) => c.to_string(),
        }
    }

    fn cond(&self, c: &Cond) -> String {
        format!("{} {} {}", self.operand(&c.lhs), c.op, self.operand(&c.rhs))
    }

    fn expr(&self, e: &Expr) -> String {
        match e {
            Expr::Const(c) => c.to_string(),
            Expr::Reg(r) => self.reg(*r).to_string(),
            Expr::Add(r, c) if *c < 0 && *c != i64::MIN => format!("{} - {}", self.reg(*r), -c),
            Expr::Add(r, c) => format!("{} + {}", self.reg(*r), c),
        }
    }
}

/// Prints the canonical DSL form; labels are renamed to `L<index>`.
impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, thread) in self.threads.iter().enumerate() {
            if n > 0 {
                writeln!(f)?;
            }
            writeln!(f, "thread {}", thread.tid)?;
            let mut targets: Vec<usize> = thread
                .instructions
                .iter()
                .filter_map(|i| match i {
                    Instruction::Branch { target, .. } => Some(*target),
                    _ => None,
                })
                .collect();
            targets.sort_unstable();
            targets.dedup();
            let pr = ThreadPrinter { thread, program: self };
            for (idx, instr) in thread.instructions.iter().enumerate() {
                let label = if targets.binary_search(&idx).is_ok() {
                    format!("L{idx}: ")
                } else {
                    String::new()
                };
                let body = match instr {
                    Instruction::Read { reg, loc } => {
                        format!("{} = read {}", pr.reg(*reg), pr.program.location_name(*loc))
                    }
                    Instruction::Write { loc, expr } => {
                        format!("write {} {}", pr.program.location_name(*loc), pr.expr(expr))
                    }
                    Instruction::Branch { cond, target } => {
                        format!("if {} goto L{}", pr.cond(cond), target)
                    }
                    Instruction::Assume(cond) => format!("assume {}", pr.cond(cond)),
                };
                writeln!(f, "  {label}{body}")?;
            }
            let end = thread.instructions.len();
            if targets.binary_search(&end).is_ok() {
                writeln!(f, "  L{end}:")?;
            }
        }
        Ok(())
    }
}
