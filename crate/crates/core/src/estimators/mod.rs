//! Randomized estimators of tree size and total weight.
//!
//! Knuth's walk, stochastic enumeration and their exact output distributions
//! are generic over [`SearchTree`], so the same code runs on the live D(P),
//! the live T(P), or a pre-materialized [`ArenaTree`].

mod arena;
mod exact;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use arena::ArenaTree;
pub use exact::{exact_knuth_distribution, exact_output_distribution, exact_pitt_distribution, OutputDistribution};

use crate::dtree::{classify_node, DporTree, NodeClass, TreeNode};
use crate::graph::ExecutionGraph;
use crate::program::{next_events, AccessKind, Program};
use crate::tdag::{t_predecessor_count, t_successors};
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    /// 1 on maximal leaves, 0 elsewhere.
    #[serde(rename = "maximal")]
    MaximalLeavesOnly,
    /// 1 per explored graph, including inconsistent and blocked ones.
    #[serde(rename = "cost")]
    FullCost,
}

impl WeightMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            WeightMode::MaximalLeavesOnly => "maximal",
            WeightMode::FullCost => "cost",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Knuth's walk on the interleaving DAG T(P) (biased).
    KnuthT,
    /// Pitt's in-degree corrected walk on T(P).
    Pitt,
    /// Knuth's walk on D(P).
    Trust,
    /// Stochastic enumeration on D(P).
    Se,
    /// Forward-only baseline with revisit counters (biased).
    Genmc,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::KnuthT => "knuth-t",
            Algorithm::Pitt => "pitt",
            Algorithm::Trust => "trust",
            Algorithm::Se => "se",
            Algorithm::Genmc => "genmc",
        }
    }
}

/// A node's children plus what it contributes to the estimated weight.
#[derive(Clone, Debug)]
pub struct Expansion<N> {
    pub children: Vec<N>,
    pub class: NodeClass,
    /// Explored graphs this node stands for (see [`WeightMode::FullCost`]).
    pub cost: u64,
}

impl<N> Expansion<N> {
    pub fn weight(&self, mode: WeightMode) -> u64 {
        match mode {
            WeightMode::MaximalLeavesOnly => u64::from(self.class == NodeClass::MaximalLeaf),
            WeightMode::FullCost => self.cost,
        }
    }
}

/// A rooted, ordered tree explored lazily.
pub trait SearchTree {
    type Node: Clone;
    fn root(&self) -> Result<Self::Node>;
    fn expand(&self, node: &Self::Node) -> Result<Expansion<Self::Node>>;
}

impl SearchTree for DporTree<'_> {
    type Node = TreeNode;

    fn root(&self) -> Result<TreeNode> {
        self.root_node()
    }

    fn expand(&self, node: &TreeNode) -> Result<Expansion<TreeNode>> {
        Ok(Expansion { children: self.children_of(node)?, class: node.class(), cost: node.cost() })
    }
}

/// T(P) unfolded into a tree: every interleaving is a path.
#[derive(Clone, Copy, Debug)]
pub struct TransitionTree<'p> {
    pub program: &'p Program,
}

impl SearchTree for TransitionTree<'_> {
    type Node = ExecutionGraph;

    fn root(&self) -> Result<ExecutionGraph> {
        Ok(ExecutionGraph::initial())
    }

    fn expand(&self, g: &ExecutionGraph) -> Result<Expansion<ExecutionGraph>> {
        let children = t_successors(self.program, g)?.into_iter().map(|(_, h)| h).collect();
        Ok(Expansion { children, class: classify_node(self.program, g)?, cost: 1 })
    }
}

/// The outcome of one randomized run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Walk {
    pub value: f64,
    /// Number of levels visited.
    pub length: usize,
}

/// Knuth's estimator: a uniform random root-to-leaf walk returning
/// `Σ_i w(v_i) · Π_{j<i} d_j`.
pub fn knuth_estimate<T: SearchTree, R: Rng + ?Sized>(tree: &T, mode: WeightMode, rng: &mut R) -> Result<Walk> {
    let mut node = tree.root()?;
    let mut scale = 1.0f64;
    let mut value = 0.0;
    let mut length = 0;
    loop {
        let ex = tree.expand(&node)?;
        length += 1;
        value += ex.weight(mode) as f64 * scale;
        let d = ex.children.len();
        if d == 0 {
            return Ok(Walk { value, length });
        }
        scale *= d as f64;
        // no draw for unary nodes, matching stochastic enumeration with budget 1
        let i = if d == 1 { 0 } else { rng.gen_range(0..d) };
        node = ex.children.into_iter().nth(i).expect("index in range");
    }
}

/// Stochastic enumeration with population budget `budget`.
pub fn se_estimate<T: SearchTree, R: Rng + ?Sized>(
    tree: &T,
    budget: usize,
    mode: WeightMode,
    rng: &mut R,
) -> Result<Walk> {
    assert!(budget >= 1, "budget must be positive");
    let mut population = vec![tree.root()?];
    // estimated number of tree nodes each population member stands for
    let mut factor = 1.0f64;
    let mut value = 0.0;
    let mut length = 0;
    loop {
        length += 1;
        let mut weight = 0u64;
        let mut successors: Vec<T::Node> = Vec::new();
        for node in &population {
            let ex = tree.expand(node)?;
            weight += ex.weight(mode);
            successors.extend(ex.children);
        }
        value += factor * weight as f64;
        if successors.is_empty() {
            return Ok(Walk { value, length });
        }
        population = if successors.len() <= budget {
            successors
        } else {
            factor *= successors.len() as f64 / budget as f64;
            // partial Fisher-Yates: the first `budget` slots become a uniform subset
            for i in 0..budget {
                let j = rng.gen_range(i..successors.len());
                successors.swap(i, j);
            }
            successors.truncate(budget);
            successors
        };
    }
}

/// Pitt's estimator on T(P): `Π_i d_i / e_i`, with `e = 1` at the root, and 0
/// if the walk ends blocked.
pub fn pitt_estimate<R: Rng + ?Sized>(p: &Program, rng: &mut R) -> Result<Walk> {
    let mut g = ExecutionGraph::initial();
    let mut value = 1.0f64;
    let mut length = 0;
    loop {
        length += 1;
        let e = if g.is_initial() { 1 } else { t_predecessor_count(&g)? };
        let succ = t_successors(p, &g)?;
        let d = succ.len();
        value *= d.max(1) as f64 / e as f64;
        if d == 0 {
            // a run stuck on an assume is not an execution
            let done = classify_node(p, &g)? == NodeClass::MaximalLeaf;
            return Ok(Walk { value: if done { value } else { 0.0 }, length });
        }
        g = succ.into_iter().nth(rng.gen_range(0..d)).expect("index in range").1;
    }
}

/// Biased forward-only baseline.
///
/// Pending writes run before reads. Each new event records how many
/// consistent forward options it had; a write also bumps the counter of
/// every same-location read that is not porf-before it. Returns the product
/// of all counters, or 0 if the run ends blocked.
pub fn genmc_estimate<R: Rng + ?Sized>(p: &Program, rng: &mut R) -> Result<Walk> {
    let mut g = ExecutionGraph::initial();
    // counters indexed by event position; positions never shift (no deletion)
    let mut counters: Vec<u64> = vec![1];
    let mut length = 0;
    loop {
        length += 1;
        let pending = next_events(p, &g)?;
        if pending.is_empty() {
            let done = classify_node(p, &g)? == NodeClass::MaximalLeaf;
            let value = if done { counters.iter().map(|&c| c as f64).product() } else { 0.0 };
            return Ok(Walk { value, length });
        }
        let writes: Vec<_> = pending.iter().filter(|e| e.kind == AccessKind::Write).collect();
        let pool = if writes.is_empty() { pending.iter().collect() } else { writes };
        let e = *pool[rng.gen_range(0..pool.len())];
        let mut options = Vec::new();
        for &w in g.mo(e.loc) {
            let mut h = g.clone();
            match e.kind {
                AccessKind::Read => h.add_read(e.tid, e.idx, e.loc, w)?,
                AccessKind::Write => h.add_write(e.tid, e.idx, e.loc, e.value.unwrap_or(0), w)?,
            };
            if h.is_sc_consistent() {
                options.push(h);
            }
        }
        let n = options.len() as u64;
        g = options.swap_remove(rng.gen_range(0..options.len()));
        counters.push(n);
        if e.kind == AccessKind::Write {
            let pos = g.len() - 1;
            let prefix = g.porf_prefix(pos);
            for r in g.reads_at(e.loc) {
                if !prefix.contains(r) {
                    counters[r] += 1;
                }
            }
        }
    }
}
