//! The interleaving transition system T(P): reads take the mo-maximal write,
//! writes are appended mo-maximal.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::graph::{CanonicalKey, ExecutionGraph};
use crate::program::{next_events, AccessKind, PendingEvent, Program, Tid};
use crate::{Error, Result};

/// Executes `e` on `g` the T(P) way.
pub fn t_step(g: &ExecutionGraph, e: &PendingEvent) -> Result<ExecutionGraph> {
    let mut h = g.clone();
    match e.kind {
        AccessKind::Read => {
            let src = h.mo_max(e.loc);
            h.add_read(e.tid, e.idx, e.loc, src)?;
        }
        AccessKind::Write => {
            h.add_write_last(e.tid, e.idx, e.loc, e.value.unwrap_or(0))?;
        }
    }
    Ok(h)
}

/// One successor per pending event, ascending tid.
pub fn t_successors(p: &Program, g: &ExecutionGraph) -> Result<Vec<(Tid, ExecutionGraph)>> {
    next_events(p, g)?.iter().map(|e| Ok((e.tid, t_step(g, e)?))).collect()
}

/// In-degree of a non-initial node of T(P): the number of sc-maximal events.
pub fn t_predecessor_count(g: &ExecutionGraph) -> Result<usize> {
    if g.is_initial() {
        return Err(Error::InvalidArgument("the initial graph has no predecessors".into()));
    }
    Ok(g.sc_maximal().len())
}

#[derive(Clone, Debug)]
pub struct TSinks {
    /// Number of distinct maximal graphs, C(P).
    pub count: usize,
    pub sinks: BTreeSet<CanonicalKey>,
    /// Terminal graphs where some thread is stuck on an `assume`.
    pub blocked: usize,
    pub dag_nodes: usize,
}

/// Memoized DFS over T(P). Fails once more than `cap` distinct nodes are seen.
pub fn enumerate_t_sinks(p: &Program, cap: usize) -> Result<TSinks> {
    let mut seen = std::collections::HashSet::new();
    let mut sinks = BTreeSet::new();
    let mut blocked = 0;
    let root = ExecutionGraph::initial();
    seen.insert(root.canonical_key());
    let mut stack = vec![root];
    while let Some(g) = stack.pop() {
        let succ = t_successors(p, &g)?;
        if succ.is_empty() {
            if crate::program::program_state(p, &g)?.iter().all(|s| s.status == crate::program::ThreadStatus::Done) {
                sinks.insert(g.canonical_key());
            } else {
                blocked += 1;
            }
        }
        for (_, h) in succ {
            if seen.insert(h.canonical_key()) {
                if seen.len() > cap {
                    return Err(Error::CapExceeded { what: "T(P) nodes", cap, explored: seen.len() - 1 });
                }
                stack.push(h);
            }
        }
    }
    Ok(TSinks { count: sinks.len(), sinks, blocked, dag_nodes: seen.len() })
}

/// Explicitly materialized T(P).
#[derive(Clone, Debug)]
pub struct TDag {
    pub nodes: Vec<ExecutionGraph>,
    /// (from, to, tid)
    pub edges: Vec<(usize, usize, Tid)>,
}

impl TDag {
    pub fn in_degree(&self) -> Vec<usize> {
        let mut deg = vec![0; self.nodes.len()];
        for &(_, to, _) in &self.edges {
            deg[to] += 1;
        }
        deg
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph T {\n  node [shape=box, fontname=monospace];\n");
        for (i, g) in self.nodes.iter().enumerate() {
            let label = g.debug_text().replace('\n', "\\l");
            let _ = writeln!(s, "  n{i} [label=\"{label}\"];");
        }
        for &(a, b, t) in &self.edges {
            let _ = writeln!(s, "  n{a} -> n{b} [label=\"t{t}\"];");
        }
        s.push_str("}\n");
        s
    }
}

/// Materializes T(P) with nodes identified by canonical key; node 0 is the root.
pub fn materialize_t_dag(p: &Program, cap: usize) -> Result<TDag> {
    let mut index: HashMap<CanonicalKey, usize> = HashMap::new();
    let mut nodes = vec![ExecutionGraph::initial()];
    index.insert(nodes[0].canonical_key(), 0);
    let mut edges = Vec::new();
    let mut next = 0;
    while next < nodes.len() {
        let succ = t_successors(p, &nodes[next])?;
        for (tid, h) in succ {
            let key = h.canonical_key();
            let to = match index.get(&key) {
                Some(&i) => i,
                None => {
                    if nodes.len() >= cap {
                        return Err(Error::CapExceeded { what: "T(P) nodes", cap, explored: nodes.len() });
                    }
                    nodes.push(h);
                    index.insert(key, nodes.len() - 1);
                    nodes.len() - 1
                }
            };
            edges.push((next, to, tid));
        }
        next += 1;
    }
    Ok(TDag { nodes, edges })
}
