use serde::Serialize;
use thiserror::Error;

use super::{CmpOp, Cond, Expr, Instruction, Loc, Operand, Program, Tid};
use crate::graph::{ExecutionGraph, Label};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ThreadStatus {
    Running,
    Blocked,
    Done,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThreadReplayState {
    pub pc: usize,
    pub regs: Vec<i64>,
    pub status: ThreadStatus,
    /// Number of graph events consumed; the next event gets `idx = events + 1`.
    pub events: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum AccessKind {
    Read,
    Write,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct PendingEvent {
    pub tid: Tid,
    pub idx: u32,
    pub kind: AccessKind,
    pub loc: Loc,
    /// Written value; `None` for reads until an rf source is picked.
    pub value: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("no thread {0}")]
    UnknownThread(Tid),
    #[error("thread {tid} event {idx}: {reason}")]
    Mismatch { tid: Tid, idx: u32, reason: String },
}

fn operand(regs: &[i64], o: &Operand) -> i64 {
    match o {
        Operand::Reg(r) => regs[r.0 as usize],
        Operand::Const(c) => *c,
    }
}

fn holds(regs: &[i64], c: &Cond) -> bool {
    let (a, b) = (operand(regs, &c.lhs), operand(regs, &c.rhs));
    match c.op {
        CmpOp::Eq => a == b,
        CmpOp::Ne => a != b,
        CmpOp::Lt => a < b,
        CmpOp::Le => a <= b,
    }
}

fn eval(regs: &[i64], e: &Expr) -> i64 {
    match e {
        Expr::Const(c) => *c,
        Expr::Reg(r) => regs[r.0 as usize],
        Expr::Add(r, c) => regs[r.0 as usize].wrapping_add(*c),
    }
}

/// Re-executes thread `tid`, feeding reads the values recorded in `g`.
pub fn replay_thread(p: &Program, tid: Tid, g: &ExecutionGraph) -> Result<ThreadReplayState, ReplayError> {
    let thread = p.thread(tid).ok_or(ReplayError::UnknownThread(tid))?;
    let events = g.thread_events(tid);
    let mismatch = |idx: u32, reason: String| ReplayError::Mismatch { tid, idx, reason };
    let mut st = ThreadReplayState { pc: 0, regs: vec![0; thread.registers.len()], status: ThreadStatus::Running, events: 0 };
    let mut next = events.iter().map(|&i| *g.event(i)).peekable();

    loop {
        let Some(ins) = thread.instructions.get(st.pc) else {
            st.status = ThreadStatus::Done;
            break;
        };
        match ins {
            Instruction::Read { reg, loc } => {
                let Some(ev) = next.next() else { break };
                let want = st.events + 1;
                if ev.idx != want {
                    return Err(mismatch(ev.idx, format!("expected event index {want}")));
                }
                match ev.label {
                    Label::Read { loc: l, val } if l == *loc => st.regs[reg.0 as usize] = val,
                    other => return Err(mismatch(ev.idx, format!("expected read of l{}, found {other:?}", loc.0))),
                }
                st.events += 1;
                st.pc += 1;
            }
            Instruction::Write { loc, expr } => {
                let Some(ev) = next.next() else { break };
                let want = st.events + 1;
                if ev.idx != want {
                    return Err(mismatch(ev.idx, format!("expected event index {want}")));
                }
                let v = eval(&st.regs, expr);
                match ev.label {
                    Label::Write { loc: l, val } if l == *loc && val == v => {}
                    other => {
                        return Err(mismatch(ev.idx, format!("expected write of {v} to l{}, found {other:?}", loc.0)))
                    }
                }
                st.events += 1;
                st.pc += 1;
            }
            Instruction::Branch { cond, target } => {
                st.pc = if holds(&st.regs, cond) { *target } else { st.pc + 1 };
            }
            Instruction::Assume(cond) => {
                if !holds(&st.regs, cond) {
                    st.status = ThreadStatus::Blocked;
                    break;
                }
                st.pc += 1;
            }
        }
    }
    if let Some(ev) = next.next() {
        return Err(mismatch(ev.idx, "event past the end of the thread's run".into()));
    }
    Ok(st)
}

impl ThreadReplayState {
    /// The memory access the thread performs next, if it is running.
    pub fn pending(&self, p: &Program, tid: Tid) -> Option<PendingEvent> {
        if self.status != ThreadStatus::Running {
            return None;
        }
        let idx = self.events + 1;
        match p.thread(tid)?.instructions.get(self.pc)? {
            Instruction::Read { loc, .. } => Some(PendingEvent { tid, idx, kind: AccessKind::Read, loc: *loc, value: None }),
            Instruction::Write { loc, expr } => {
                Some(PendingEvent { tid, idx, kind: AccessKind::Write, loc: *loc, value: Some(eval(&self.regs, expr)) })
            }
            _ => None,
        }
    }
}

/// Replay states of every thread, by ascending tid.
pub fn program_state(p: &Program, g: &ExecutionGraph) -> Result<Vec<ThreadReplayState>, ReplayError> {
    p.threads.iter().map(|t| replay_thread(p, t.tid, g)).collect()
}

/// Next event of every running thread, ascending tid.
pub fn next_events(p: &Program, g: &ExecutionGraph) -> Result<Vec<PendingEvent>, ReplayError> {
    Ok(program_state(p, g)?
        .iter()
        .zip(&p.threads)
        .filter_map(|(st, t)| st.pending(p, t.tid))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::parse_program;

    const WRWW_RR: &str = "thread 1\n  write x 1\n  a = read x\n  write x 2\n  write y 1\n\
                           thread 2\n  a = read x\n  if a != 2 goto done\n  b = read y\n  done:\n";

    #[test]
    fn branch_taken_after_reading_two() {
        let p = parse_program(WRWW_RR).unwrap();
        let (x, y) = (p.location("x").unwrap(), p.location("y").unwrap());
        let mut g = ExecutionGraph::initial();
        g.add_write_last(1, 1, x, 1).unwrap();
        let w1 = g.position(1, 1).unwrap();
        g.add_read(1, 2, x, w1).unwrap();
        let w2 = g.add_write_last(1, 3, x, 2).unwrap();
        g.add_read(2, 1, x, w2).unwrap();
        let st = replay_thread(&p, 2, &g).unwrap();
        assert_eq!(st.status, ThreadStatus::Running);
        assert_eq!(st.pc, 2);
        let pend = st.pending(&p, 2).unwrap();
        assert_eq!((pend.kind, pend.loc, pend.idx), (AccessKind::Read, y, 2));
    }

    #[test]
    fn branch_skips_to_end() {
        let p = parse_program(WRWW_RR).unwrap();
        let mut g = ExecutionGraph::initial();
        g.add_read(2, 1, p.location("x").unwrap(), 0).unwrap();
        let st = replay_thread(&p, 2, &g).unwrap();
        assert_eq!(st.status, ThreadStatus::Done);
    }

    #[test]
    fn failed_assume_blocks() {
        let p = parse_program("thread 1\n  r = read x\n  assume r == 1\n  write y 1\n").unwrap();
        let mut g = ExecutionGraph::initial();
        g.add_read(1, 1, Loc(0), 0).unwrap();
        let st = replay_thread(&p, 1, &g).unwrap();
        assert_eq!(st.status, ThreadStatus::Blocked);
        assert_eq!(next_events(&p, &g).unwrap(), vec![]);
    }

    #[test]
    fn r_w_w_initial_pending_events() {
        let p = parse_program("thread 1\n  a = read x\nthread 2\n  write x 1\nthread 3\n  write x 2\n").unwrap();
        let pend = next_events(&p, &ExecutionGraph::initial()).unwrap();
        let summary: Vec<_> = pend.iter().map(|e| (e.tid, e.kind, e.value)).collect();
        assert_eq!(summary, vec![
            (1, AccessKind::Read, None),
            (2, AccessKind::Write, Some(1)),
            (3, AccessKind::Write, Some(2)),
        ]);
    }

    #[test]
    fn hairbrush_leaves_one_read_pending() {
        let p = parse_program("thread 1\n  a = read x\nthread 2\n  write x 1\n  write x 2\n  write x 3\n").unwrap();
        let mut g = ExecutionGraph::initial();
        for i in 1..=3 {
            g.add_write_last(2, i, Loc(0), i as i64).unwrap();
        }
        let pend = next_events(&p, &g).unwrap();
        assert_eq!(pend.len(), 1);
        assert_eq!((pend[0].tid, pend[0].kind), (1, AccessKind::Read));
    }

    #[test]
    fn completed_threads_are_done() {
        let p = parse_program("thread 1\n  write x 5\n").unwrap();
        let mut g = ExecutionGraph::initial();
        g.add_write_last(1, 1, Loc(0), 5).unwrap();
        assert_eq!(replay_thread(&p, 1, &g).unwrap().status, ThreadStatus::Done);
        assert!(next_events(&p, &g).unwrap().is_empty());
    }

    #[test]
    fn mismatched_write_value_is_an_error() {
        let p = parse_program("thread 1\n  write x 5\n").unwrap();
        let mut g = ExecutionGraph::initial();
        g.add_write_last(1, 1, Loc(0), 6).unwrap();
        assert!(matches!(replay_thread(&p, 1, &g), Err(ReplayError::Mismatch { .. })));
        assert_eq!(replay_thread(&p, 2, &g), Err(ReplayError::UnknownThread(2)));
    }
}
