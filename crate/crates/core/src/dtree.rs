//! The optimal DPOR exploration tree D(P).
//!
//! Every node is a consistent execution graph with an insertion order. A node
//! expands its first pending event (ascending tid) by forward revisits (pick an
//! rf source or an mo slot) and, for writes, backward revisits of earlier reads.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::Serialize;

use crate::graph::{CanonicalKey, Event, EventSet, ExecutionGraph, GraphError};
use crate::program::{next_events, program_state, replay_thread, AccessKind, PendingEvent, Program, ReplayError, ThreadStatus};
use crate::tdag::t_step;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Dir {
    Fwd,
    Bwd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TransitionLabel {
    pub dir: Dir,
    /// The event added by the transition.
    pub event: Event,
    /// Fwd: the rf source (reads) or mo predecessor (writes). Bwd: the revisited read.
    pub target: Event,
    /// Bwd only: the mo predecessor of the new write.
    pub anchor: Option<Event>,
}

/// A transition before it is applied; positions refer to the parent graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VisitOption {
    Fwd { anchor: usize },
    Bwd { read: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum NodeClass {
    Internal,
    MaximalLeaf,
    BlockedLeaf,
}

impl NodeClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            NodeClass::Internal => "internal",
            NodeClass::MaximalLeaf => "maximal",
            NodeClass::BlockedLeaf => "blocked",
        }
    }

    pub fn parse(s: &str) -> Option<NodeClass> {
        match s {
            "internal" => Some(NodeClass::Internal),
            "maximal" => Some(NodeClass::MaximalLeaf),
            "blocked" => Some(NodeClass::BlockedLeaf),
            _ => None,
        }
    }
}

/// Candidate transitions for the pending event `e` at `g`; `h` is `g` after
/// the T(P) step of `e`.
pub fn visit_options(g: &ExecutionGraph, e: &PendingEvent, h: &ExecutionGraph) -> Vec<VisitOption> {
    let mut opts: Vec<VisitOption> = g.mo(e.loc).iter().map(|&w| VisitOption::Fwd { anchor: w }).collect();
    if e.kind == AccessKind::Write {
        let prefix = h.porf_prefix(h.len() - 1);
        opts.extend(g.reads_at(e.loc).into_iter().filter(|r| !prefix.contains(*r)).map(|read| VisitOption::Bwd { read }));
    }
    opts
}

fn position_in(kept: EventSet, x: usize) -> usize {
    let below = if x >= 128 { u128::MAX } else { (1u128 << x) - 1 };
    (kept.0 & below).count_ones() as usize
}

/// Whether `d_set` can be peeled off `g` as the last steps of a T(P) run, in
/// insertion order.
pub fn is_maximally_revisitable(p: &Program, g: &ExecutionGraph, d_set: EventSet) -> Result<bool> {
    if d_set.contains(0) {
        return Err(Error::InvalidArgument("the init event cannot be revisited".into()));
    }
    let ds: Vec<usize> = d_set.iter().collect();
    let mut removed = d_set;
    for &d in &ds {
        let kept = g.all().minus(removed);
        let h = match g.restrict(kept) {
            Ok(h) => h,
            Err(GraphError::DanglingRf { .. }) => return Ok(false),
            Err(e) => return Err(e.into()),
        };
        let ev = g.event(d);
        let st = match replay_thread(p, ev.tid, &h) {
            Ok(st) => st,
            Err(ReplayError::Mismatch { .. }) => return Ok(false),
            Err(e) => return Err(e.into()),
        };
        let Some(pend) = st.pending(p, ev.tid) else { return Ok(false) };
        if pend.idx != ev.idx || Some(pend.loc) != ev.label.loc() {
            return Ok(false);
        }
        match (pend.kind, ev.label) {
            (AccessKind::Read, crate::graph::Label::Read { loc, .. }) => {
                let src = g.rf(d).expect("reads have an rf source");
                if !kept.contains(src) || position_in(kept, src) != h.mo_max(loc) {
                    return Ok(false);
                }
            }
            (AccessKind::Write, crate::graph::Label::Write { loc, val }) => {
                if pend.value != Some(val) {
                    return Ok(false);
                }
                let mo = g.mo(loc);
                let at = mo.iter().position(|&w| w == d).expect("write is in mo");
                if mo[at + 1..].iter().any(|w| kept.contains(*w)) {
                    return Ok(false);
                }
            }
            _ => return Ok(false),
        }
        removed.remove(d);
    }
    Ok(true)
}

#[derive(Clone, Debug, Default)]
pub struct DChildren {
    pub children: Vec<(TransitionLabel, ExecutionGraph)>,
    pub inconsistent: u64,
}

fn label_of(g: &ExecutionGraph, pos: usize) -> Event {
    *g.event(pos)
}

/// All consistent children of `g` in D(P), in the fixed order, plus the number
/// of inconsistent candidates.
pub fn d_children(p: &Program, g: &ExecutionGraph) -> Result<DChildren> {
    let pend = next_events(p, g)?;
    let Some(e) = pend.first() else { return Ok(DChildren::default()) };
    let h = t_step(g, e)?;
    let mut out = DChildren::default();
    let val = e.value.unwrap_or(0);
    let push = |out: &mut DChildren, label: TransitionLabel, g2: ExecutionGraph| {
        if g2.is_sc_consistent() {
            out.children.push((label, g2));
        } else {
            out.inconsistent += 1;
        }
    };
    for opt in visit_options(g, e, &h) {
        match opt {
            VisitOption::Fwd { anchor } => {
                let mut g2 = g.clone();
                let pos = match e.kind {
                    AccessKind::Read => g2.add_read(e.tid, e.idx, e.loc, anchor)?,
                    AccessKind::Write => g2.add_write(e.tid, e.idx, e.loc, val, anchor)?,
                };
                let label = TransitionLabel { dir: Dir::Fwd, event: label_of(&g2, pos), target: label_of(g, anchor), anchor: None };
                push(&mut out, label, g2);
            }
            VisitOption::Bwd { read } => {
                let prefix = h.porf_prefix(h.len() - 1);
                let deleted: EventSet =
                    (read + 1..g.len()).filter(|x| !prefix.contains(*x)).collect();
                if !is_maximally_revisitable(p, g, deleted.union(EventSet::singleton(read)))? {
                    continue;
                }
                let base = g.restrict(g.all().minus(deleted))?;
                let r = position_in(g.all().minus(deleted), read);
                for &w in base.mo(e.loc) {
                    let mut g3 = base.clone();
                    let pos = g3.add_write(e.tid, e.idx, e.loc, val, w)?;
                    g3.set_rf(r, pos);
                    debug_assert!(program_state(p, &g3).is_ok(), "backward revisit broke replay");
                    let label = TransitionLabel {
                        dir: Dir::Bwd,
                        event: label_of(&g3, pos),
                        target: label_of(&g3, r),
                        anchor: Some(label_of(&base, w)),
                    };
                    push(&mut out, label, g3);
                }
            }
        }
    }
    Ok(out)
}

pub fn classify_node(p: &Program, g: &ExecutionGraph) -> Result<NodeClass> {
    let states = program_state(p, g)?;
    if states.iter().all(|s| s.status == ThreadStatus::Done) {
        Ok(NodeClass::MaximalLeaf)
    } else if states.iter().any(|s| s.status == ThreadStatus::Running) {
        Ok(NodeClass::Internal)
    } else {
        Ok(NodeClass::BlockedLeaf)
    }
}

/// Expansion of one D(P) graph, computed once per node.
#[derive(Debug)]
pub struct Expanded {
    pub class: NodeClass,
    pub children: Vec<ExecutionGraph>,
    pub inconsistent: u64,
}

fn expand_raw(p: &Program, g: &ExecutionGraph) -> Result<Expanded> {
    let class = classify_node(p, g)?;
    if class != NodeClass::Internal {
        return Ok(Expanded { class, children: Vec::new(), inconsistent: 0 });
    }
    let dc = d_children(p, g)?;
    Ok(Expanded { class, children: dc.children.into_iter().map(|(_, g)| g).collect(), inconsistent: dc.inconsistent })
}

/// A node of the compressed tree: unary chains below the root are collapsed
/// into their last node.
#[derive(Clone, Debug)]
pub struct TreeNode {
    pub graph: ExecutionGraph,
    /// Raw nodes skipped on the way here.
    pub chain: u64,
    /// Inconsistent candidates tallied along the skipped chain.
    pub chain_inconsistent: u64,
    pub expanded: Arc<Expanded>,
}

impl TreeNode {
    pub fn class(&self) -> NodeClass {
        self.expanded.class
    }

    /// Explored graphs represented by this node: itself, its inconsistent
    /// children, and everything absorbed from the chain above it.
    pub fn cost(&self) -> u64 {
        1 + self.expanded.inconsistent + self.chain + self.chain_inconsistent
    }
}

/// D(P) with unary chains collapsed.
#[derive(Clone, Debug)]
pub struct DporTree<'p> {
    pub program: &'p Program,
}

impl<'p> DporTree<'p> {
    pub fn new(program: &'p Program) -> Result<Self> {
        if program.max_events() + 1 > crate::graph::MAX_EVENTS {
            return Err(Error::Unsupported(format!(
                "programs with more than {} memory accesses",
                crate::graph::MAX_EVENTS - 1
            )));
        }
        Ok(DporTree { program })
    }

    pub fn root_node(&self) -> Result<TreeNode> {
        let g = ExecutionGraph::initial();
        let expanded = Arc::new(expand_raw(self.program, &g)?);
        Ok(TreeNode { graph: g, chain: 0, chain_inconsistent: 0, expanded })
    }

    fn compress(&self, mut g: ExecutionGraph) -> Result<TreeNode> {
        let mut chain = 0;
        let mut chain_inconsistent = 0;
        loop {
            let ex = expand_raw(self.program, &g)?;
            if ex.class == NodeClass::Internal && ex.children.len() == 1 {
                chain += 1;
                chain_inconsistent += ex.inconsistent;
                g = ex.children.into_iter().next().expect("one child");
                continue;
            }
            return Ok(TreeNode { graph: g, chain, chain_inconsistent, expanded: Arc::new(ex) });
        }
    }

    /// The `i`-th child (0-based) of `node`.
    pub fn child(&self, node: &TreeNode, i: usize) -> Result<TreeNode> {
        self.compress(node.expanded.children[i].clone())
    }

    pub fn children_of(&self, node: &TreeNode) -> Result<Vec<TreeNode>> {
        node.expanded.children.iter().map(|g| self.compress(g.clone())).collect()
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct TreeStats {
    pub maximal_leaves: u64,
    pub blocked_leaves: u64,
    pub inconsistent_leaves: u64,
    /// Raw internal nodes, including those hidden inside compressed chains.
    pub internal_nodes: u64,
    /// Compressed tree: node count per depth.
    pub width_per_depth: Vec<u64>,
    /// Compressed tree: leaf count per depth.
    pub leaf_width_per_depth: Vec<u64>,
    pub max_out_degree: usize,
    pub max_depth: usize,
    pub compressed_nodes: u64,
    /// Canonical keys of maximal leaves in DFS order.
    #[serde(skip)]
    pub maximal_keys: Vec<CanonicalKey>,
}

impl TreeStats {
    pub fn total_weight(&self, mode: crate::estimators::WeightMode) -> u64 {
        match mode {
            crate::estimators::WeightMode::MaximalLeavesOnly => self.maximal_leaves,
            crate::estimators::WeightMode::FullCost => self.explored(),
        }
    }

    /// Every graph the model checker touches, consistent or not.
    pub fn explored(&self) -> u64 {
        self.internal_nodes + self.maximal_leaves + self.blocked_leaves + self.inconsistent_leaves
    }

    pub fn max_width(&self) -> u64 {
        self.width_per_depth.iter().copied().max().unwrap_or(0)
    }
}

/// Depth-first traversal of the compressed D(P). `visit` sees every node with
/// its depth and number of children, in preorder.
pub fn walk_d_tree(
    p: &Program,
    cap: usize,
    mut visit: impl FnMut(&TreeNode, usize, usize),
) -> Result<TreeStats> {
    let tree = DporTree::new(p)?;
    let mut stats = TreeStats::default();
    let mut stack = vec![(tree.root_node()?, 0usize)];
    while let Some((node, depth)) = stack.pop() {
        stats.compressed_nodes += 1;
        if stats.compressed_nodes as usize > cap {
            return Err(Error::CapExceeded { what: "D(P) nodes", cap, explored: cap });
        }
        if stats.width_per_depth.len() <= depth {
            stats.width_per_depth.resize(depth + 1, 0);
            stats.leaf_width_per_depth.resize(depth + 1, 0);
        }
        stats.width_per_depth[depth] += 1;
        stats.max_depth = stats.max_depth.max(depth);
        stats.internal_nodes += node.chain;
        stats.inconsistent_leaves += node.chain_inconsistent + node.expanded.inconsistent;
        match node.class() {
            NodeClass::Internal => stats.internal_nodes += 1,
            NodeClass::MaximalLeaf => {
                stats.maximal_leaves += 1;
                stats.maximal_keys.push(node.graph.canonical_key());
            }
            NodeClass::BlockedLeaf => stats.blocked_leaves += 1,
        }
        let children = tree.children_of(&node)?;
        if children.is_empty() {
            stats.leaf_width_per_depth[depth] += 1;
        }
        stats.max_out_degree = stats.max_out_degree.max(children.len());
        visit(&node, depth, children.len());
        for c in children.into_iter().rev() {
            stack.push((c, depth + 1));
        }
    }
    Ok(stats)
}

/// Exhaustive exploration of D(P): the exact model checker.
pub fn enumerate_d_tree(p: &Program, cap: usize) -> Result<TreeStats> {
    walk_d_tree(p, cap, |_, _, _| {})
}

/// Tree log: one line per compressed node in preorder,
/// `depth class children inconsistent cost`.
pub fn tree_log(p: &Program, cap: usize) -> Result<String> {
    let mut s = String::from("# depth class children inconsistent cost\n");
    walk_d_tree(p, cap, |node, depth, children| {
        let _ = writeln!(
            s,
            "{depth} {} {children} {} {}",
            node.class().as_str(),
            node.expanded.inconsistent + node.chain_inconsistent,
            node.cost()
        );
    })?;
    Ok(s)
}
