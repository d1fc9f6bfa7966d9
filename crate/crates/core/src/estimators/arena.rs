use std::fmt::Write as _;

use super::{Expansion, SearchTree};
use crate::dtree::NodeClass;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
struct ArenaNode {
    children: Box<[u32]>,
    class: NodeClass,
    cost: u64,
    inconsistent: u64,
}

/// A fully materialized tree shape; node 0 is the root.
///
/// Walks over an arena consume randomness exactly like walks over the tree it
/// was built from, so seeded runs agree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArenaTree {
    nodes: Vec<ArenaNode>,
}

impl ArenaTree {
    /// Copies the shape of `tree`, failing past `cap` nodes.
    pub fn materialize<T: SearchTree>(tree: &T, cap: usize) -> Result<ArenaTree> {
        let mut nodes: Vec<ArenaNode> = Vec::new();
        // (live node, arena slot)
        let mut stack = vec![(tree.root()?, 0u32)];
        nodes.push(ArenaNode { children: Box::new([]), class: NodeClass::Internal, cost: 0, inconsistent: 0 });
        while let Some((node, slot)) = stack.pop() {
            let ex = tree.expand(&node)?;
            let first = nodes.len();
            if first + ex.children.len() > cap {
                return Err(Error::CapExceeded { what: "arena nodes", cap, explored: first });
            }
            let ids: Box<[u32]> = (first..first + ex.children.len()).map(|i| i as u32).collect();
            for _ in &ex.children {
                nodes.push(ArenaNode { children: Box::new([]), class: NodeClass::Internal, cost: 0, inconsistent: 0 });
            }
            let n = &mut nodes[slot as usize];
            n.children = ids.clone();
            n.class = ex.class;
            n.cost = ex.cost;
            for (child, id) in ex.children.into_iter().zip(ids.iter()).rev() {
                stack.push((child, *id));
            }
        }
        Ok(ArenaTree { nodes })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Parses the tree log format (`depth class children inconsistent cost`
    /// per node in preorder; `#` starts a comment).
    pub fn from_log(text: &str) -> Result<ArenaTree> {
        let bad = |line: usize, msg: &str| Error::InvalidArgument(format!("tree log line {line}: {msg}"));
        let mut rows = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 5 {
                return Err(bad(i + 1, "expected 5 fields"));
            }
            let num = |s: &str| s.parse::<u64>().map_err(|_| bad(i + 1, "expected a natural number"));
            let class = NodeClass::parse(f[1]).ok_or_else(|| bad(i + 1, "unknown node class"))?;
            rows.push((i + 1, num(f[0])? as usize, class, num(f[2])? as usize, num(f[3])?, num(f[4])?));
        }
        if rows.is_empty() {
            return Err(Error::InvalidArgument("empty tree log".into()));
        }
        let mut nodes: Vec<ArenaNode> = Vec::with_capacity(rows.len());
        let mut kids: Vec<Vec<u32>> = Vec::with_capacity(rows.len());
        // (node id, depth, children still expected)
        let mut open: Vec<(usize, usize, usize)> = Vec::new();
        for (line, depth, class, nchild, inconsistent, cost) in rows {
            let id = nodes.len();
            match open.last_mut() {
                None if id == 0 && depth == 0 => {}
                None => return Err(bad(line, "more than one root")),
                Some((parent, pdepth, remaining)) => {
                    if depth != *pdepth + 1 {
                        return Err(bad(line, "depth does not follow the preorder"));
                    }
                    kids[*parent].push(id as u32);
                    *remaining -= 1;
                }
            }
            while matches!(open.last(), Some(&(_, _, 0))) {
                open.pop();
            }
            nodes.push(ArenaNode { children: Box::new([]), class, cost, inconsistent });
            kids.push(Vec::with_capacity(nchild));
            if nchild > 0 {
                open.push((id, depth, nchild));
            }
        }
        if !open.is_empty() {
            return Err(Error::InvalidArgument("tree log ends before all children are listed".into()));
        }
        for (n, k) in nodes.iter_mut().zip(kids) {
            n.children = k.into_boxed_slice();
        }
        Ok(ArenaTree { nodes })
    }

    /// Serializes to the tree log format. Inconsistent counts are only known
    /// for arenas read from a log; materialized arenas record them as 0.
    pub fn to_log(&self) -> String {
        let mut s = String::from("# depth class children inconsistent cost\n");
        let mut stack = vec![(0u32, 0usize)];
        while let Some((id, depth)) = stack.pop() {
            let n = &self.nodes[id as usize];
            let _ = writeln!(s, "{depth} {} {} {} {}", n.class.as_str(), n.children.len(), n.inconsistent, n.cost);
            for &c in n.children.iter().rev() {
                stack.push((c, depth + 1));
            }
        }
        s
    }
}

impl SearchTree for ArenaTree {
    type Node = u32;

    fn root(&self) -> Result<u32> {
        Ok(0)
    }

    fn expand(&self, node: &u32) -> Result<Expansion<u32>> {
        let n = &self.nodes[*node as usize];
        Ok(Expansion { children: n.children.to_vec(), class: n.class, cost: n.cost })
    }
}
