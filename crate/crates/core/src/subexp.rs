//! A square-root-time approximate counter over D(P).
//!
//! D(P) is embedded in the complete `b`-ary tree of height `h`. Every node of
//! that padded tree gets a set of inorder numbers (one for a bottom leaf, `b`
//! for everything above), so a single integer is enough to resume a
//! depth-first enumeration without keeping a stack between phases.

use num_bigint::{BigUint, RandBigInt};
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, ToPrimitive, Zero};
use rand::Rng;
use serde::Serialize;

use crate::dtree::{enumerate_d_tree, DporTree, NodeClass, TreeNode};
use crate::graph::CanonicalKey;
use crate::program::Program;
use crate::{Error, Result};

/// Child indices from the root, each in `1..=b`.
pub type TreePath = Vec<u32>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaddedTreeParams {
    pub b: u32,
    pub h: u32,
    /// Total node count of the padded tree.
    pub m: BigUint,
    /// Total count of inorder numbers.
    pub n: BigUint,
    /// `subtree_numbers[j]`: inorder numbers inside a subtree of height `j`.
    subtree_numbers: Vec<BigUint>,
}

impl PaddedTreeParams {
    pub fn new(b: u32, h: u32) -> Result<Self> {
        if b < 2 {
            return Err(Error::InvalidArgument("branching factor must be at least 2".into()));
        }
        let big_b = BigUint::from(b);
        let mut subtree_numbers = vec![BigUint::one()];
        for j in 1..=h as usize {
            let next = &big_b * &subtree_numbers[j - 1] + &big_b;
            subtree_numbers.push(next);
        }
        let m = (big_b.pow(h + 1) - 1u32) / (b - 1);
        let n = subtree_numbers[h as usize].clone();
        Ok(PaddedTreeParams { b, h, m, n, subtree_numbers })
    }

    /// Smallest valid parameters for `p`, measured by a full traversal.
    pub fn measured(p: &Program, cap: usize) -> Result<Self> {
        let stats = enumerate_d_tree(p, cap)?;
        Self::new((stats.max_out_degree as u32).max(2), (stats.max_depth as u32).max(1))
    }

    fn numbers(&self, height: u32) -> &BigUint {
        &self.subtree_numbers[height as usize]
    }

    fn check(&self, path: &[u32]) -> Result<()> {
        if path.len() > self.h as usize || path.iter().any(|&i| i == 0 || i > self.b) {
            return Err(Error::InvalidArgument(format!("path {path:?} is not a node of the padded tree")));
        }
        Ok(())
    }

    /// Offset `x` such that the node's subtree holds numbers `x+1 ..= x+N_j`.
    fn offset(&self, path: &[u32]) -> BigUint {
        let mut x = BigUint::zero();
        for (depth, &i) in path.iter().enumerate() {
            let child_height = self.h - depth as u32 - 1;
            x += (self.numbers(child_height) + 1u32) * (i - 1);
        }
        x
    }

    /// Inclusive range of inorder numbers in the node's subtree.
    pub fn subtree_range(&self, path: &[u32]) -> Result<(BigUint, BigUint)> {
        self.check(path)?;
        let x = self.offset(path);
        let j = self.h - path.len() as u32;
        Ok((&x + 1u32, &x + self.numbers(j)))
    }

    /// The smallest inorder number of the node itself.
    pub fn first_number(&self, path: &[u32]) -> Result<BigUint> {
        Ok(inorder_set(self, path)?.into_iter().next().expect("inorder sets are nonempty"))
    }
}

/// Inorder numbers of the node at `path`, ascending.
pub fn inorder_set(params: &PaddedTreeParams, path: &[u32]) -> Result<Vec<BigUint>> {
    params.check(path)?;
    let x = params.offset(path);
    let j = params.h - path.len() as u32;
    if j == 0 {
        return Ok(vec![x + 1u32]);
    }
    let step = params.numbers(j - 1) + 1u32;
    Ok((1..=params.b).map(|k| &x + &step * k).collect())
}

/// The deepest node whose subtree contains all of `[a, b]`: the lowest common
/// ancestor of every node numbered in the interval.
pub fn locate_interval(params: &PaddedTreeParams, a: &BigUint, b: &BigUint) -> Result<TreePath> {
    if a.is_zero() || a > b || b > &params.n {
        return Err(Error::InvalidArgument(format!("interval [{a}, {b}] is not inside [1, {}]", params.n)));
    }
    let mut path = TreePath::new();
    let mut x = BigUint::zero();
    for j in (1..=params.h).rev() {
        let child = params.numbers(j - 1);
        let stride = child + 1u32;
        // child i covers x + (i-1)*stride + 1 ..= x + (i-1)*stride + child
        let rel = a - &x - 1u32;
        let i = (&rel / &stride).to_u32().expect("child index fits") + 1;
        let lo = &x + &stride * (i - 1) + 1u32;
        let hi = &lo + child - 1u32;
        if i > params.b || a < &lo || b > &hi {
            break;
        }
        path.push(i);
        x = lo - 1u32;
    }
    Ok(path)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PathKind {
    RealInternal,
    RealMaximalLeaf,
    Dummy,
}

fn reject_assume(p: &Program) -> Result<()> {
    if p.has_assume() {
        return Err(Error::Unsupported("the approximate counter needs programs without assume".into()));
    }
    Ok(())
}

fn descend(tree: &DporTree<'_>, path: &[u32]) -> Result<Option<TreeNode>> {
    let mut node = tree.root_node()?;
    for &i in path {
        let kids = &node.expanded.children;
        if i == 0 || i as usize > kids.len() {
            return Ok(None);
        }
        node = tree.child(&node, i as usize - 1)?;
    }
    Ok(Some(node))
}

/// Whether a padded-tree node is a real D(P) node.
pub fn is_dpor_node(p: &Program, path: &[u32]) -> Result<PathKind> {
    reject_assume(p)?;
    let tree = DporTree::new(p)?;
    Ok(match descend(&tree, path)? {
        None => PathKind::Dummy,
        Some(n) if n.class() == NodeClass::MaximalLeaf => PathKind::RealMaximalLeaf,
        Some(_) => PathKind::RealInternal,
    })
}

/// The first real maximal leaf (in inorder) whose smallest number is at least `a`.
fn first_leaf_from(
    tree: &DporTree<'_>,
    params: &PaddedTreeParams,
    node: TreeNode,
    path: &mut TreePath,
    a: &BigUint,
) -> Result<Option<(TreePath, BigUint, TreeNode)>> {
    let (_, hi) = params.subtree_range(path)?;
    if &hi < a {
        return Ok(None);
    }
    if node.class() == NodeClass::MaximalLeaf {
        let s = params.first_number(path)?;
        return Ok((&s >= a).then(|| (path.clone(), s, node)));
    }
    if path.len() == params.h as usize {
        return Err(Error::InvalidArgument("padded height is smaller than the tree depth".into()));
    }
    let n_children = node.expanded.children.len();
    if n_children > params.b as usize {
        return Err(Error::InvalidArgument("padded branching is smaller than the tree degree".into()));
    }
    for i in 0..n_children {
        path.push(i as u32 + 1);
        let child = tree.child(&node, i)?;
        let found = first_leaf_from(tree, params, child, path, a)?;
        path.pop();
        if found.is_some() {
            return Ok(found);
        }
    }
    Ok(None)
}

/// The first `theta` maximal leaves of D(P) in inorder, found one phase at a
/// time: each phase restarts at the root and keeps only the last number seen.
pub fn enumerate_first_leaves(p: &Program, theta: usize, params: &PaddedTreeParams) -> Result<Vec<CanonicalKey>> {
    reject_assume(p)?;
    let tree = DporTree::new(p)?;
    let mut out = Vec::new();
    let mut a = BigUint::one();
    while out.len() < theta {
        // [a, N] always contains the root's last number, so every phase starts at the root
        let root = tree.root_node()?;
        let mut path = TreePath::new();
        match first_leaf_from(&tree, params, root, &mut path, &a)? {
            Some((_, s, leaf)) => {
                out.push(leaf.graph.canonical_key());
                a = s + 1u32;
                if a > params.n {
                    break;
                }
            }
            None => break,
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "act", rename_all = "snake_case")]
pub enum ApproxResult {
    /// Act One finished the enumeration.
    Exact { count: u64, theta: String, m: String, n: String },
    /// Act Two: `estimate = m · hits / z`.
    Estimate { estimate: f64, hits: u64, z: u64, theta: String, m: String, n: String },
}

impl ApproxResult {
    pub fn value(&self) -> f64 {
        match self {
            ApproxResult::Exact { count, .. } => *count as f64,
            ApproxResult::Estimate { estimate, .. } => *estimate,
        }
    }
}

fn ceil_sqrt(m: &BigUint) -> BigUint {
    let s = m.sqrt();
    if &(&s * &s) == m {
        s
    } else {
        s + 1u32
    }
}

/// Number of Act Two samples for accuracy factor `r` and failure probability `rho`.
pub fn sample_count(m: &BigUint, theta: &BigUint, r: f64, rho: f64) -> Result<BigUint> {
    let r = BigRational::from_f64(r).ok_or_else(|| Error::InvalidArgument("r must be finite".into()))?;
    let rho = BigRational::from_f64(rho).ok_or_else(|| Error::InvalidArgument("rho must be finite".into()))?;
    let one = BigRational::one();
    let ratio = BigRational::new(m.clone().into(), theta.clone().into()) - &one;
    let rm1 = &r - &one;
    let z = (&one / &rho) * (&one / (&rm1 * &rm1)) * ratio;
    let z = z.ceil().to_integer();
    Ok(z.to_biguint().unwrap_or_default().max(BigUint::one()))
}

/// Draws a uniform node of the padded tree.
pub fn sample_path<R: Rng + ?Sized>(params: &PaddedTreeParams, rng: &mut R) -> TreePath {
    let mut u = rng.gen_biguint_below(&params.m);
    let mut level = 0u32;
    let mut size = BigUint::one();
    while u >= size {
        u -= &size;
        size *= params.b;
        level += 1;
    }
    let mut path = vec![1u32; level as usize];
    for slot in path.iter_mut().rev() {
        *slot = (&u % params.b).to_u32().expect("digit fits") + 1;
        u /= params.b;
    }
    path
}

/// An `(r, rho)`-approximate count of the maximal leaves of D(P).
pub fn approx_count<R: Rng + ?Sized>(
    p: &Program,
    r: f64,
    rho: f64,
    params: &PaddedTreeParams,
    rng: &mut R,
) -> Result<ApproxResult> {
    reject_assume(p)?;
    if r.is_nan() || r <= 1.0 {
        return Err(Error::InvalidArgument("r must be greater than 1".into()));
    }
    if rho.is_nan() || rho <= 0.0 || rho >= 1.0 {
        return Err(Error::InvalidArgument("rho must lie in (0, 1)".into()));
    }
    let theta = ceil_sqrt(&params.m);
    let theta_usize = theta.to_usize().ok_or_else(|| Error::Unsupported("padded tree too large".into()))?;
    let leaves = enumerate_first_leaves(p, theta_usize + 1, params)?;
    if leaves.len() <= theta_usize {
        return Ok(ApproxResult::Exact {
            count: leaves.len() as u64,
            theta: theta.to_string(),
            m: params.m.to_string(),
            n: params.n.to_string(),
        });
    }
    let z = sample_count(&params.m, &theta, r, rho)?;
    let z_u64 = z.to_u64().ok_or_else(|| Error::Unsupported("sample count too large".into()))?;
    let tree = DporTree::new(p)?;
    let mut hits = 0u64;
    for _ in 0..z_u64 {
        let path = sample_path(params, rng);
        if let Some(n) = descend(&tree, &path)? {
            if n.class() == NodeClass::MaximalLeaf {
                hits += 1;
            }
        }
    }
    let estimate = BigRational::new((&params.m * hits).into(), z.clone().into());
    Ok(ApproxResult::Estimate {
        estimate: estimate.to_f64().unwrap_or(f64::INFINITY),
        hits,
        z: z_u64,
        theta: theta.to_string(),
        m: params.m.to_string(),
        n: params.n.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::parse_program;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct recursive inorder numbering of the complete tree.
    fn oracle(b: u32, h: u32) -> Vec<(TreePath, Vec<u64>)> {
        fn go(b: u32, h: u32, path: &mut TreePath, next: &mut u64, out: &mut Vec<(TreePath, Vec<u64>)>) {
            if path.len() == h as usize {
                *next += 1;
                out.push((path.clone(), vec![*next]));
                return;
            }
            let mut mine = Vec::new();
            for i in 1..=b {
                path.push(i);
                go(b, h, path, next, out);
                path.pop();
                *next += 1;
                mine.push(*next);
            }
            out.push((path.clone(), mine));
        }
        let mut out = Vec::new();
        go(b, h, &mut Vec::new(), &mut 0, &mut out);
        out
    }

    fn big(v: &[u64]) -> Vec<BigUint> {
        v.iter().map(|&x| BigUint::from(x)).collect()
    }

    #[test]
    fn small_tree_numbers() {
        let params = PaddedTreeParams::new(2, 2).unwrap();
        assert_eq!(params.n, BigUint::from(10u32));
        assert_eq!(params.m, BigUint::from(7u32));
        assert_eq!(inorder_set(&params, &[]).unwrap(), big(&[5, 10]));
        assert_eq!(inorder_set(&params, &[1, 1]).unwrap(), big(&[1]));
        assert_eq!(inorder_set(&params, &[1]).unwrap(), big(&[2, 4]));
        assert!(inorder_set(&params, &[1, 1, 1]).is_err());
    }

    #[test]
    fn numbering_matches_oracle() {
        for b in 2..=4 {
            for h in 0..=3 {
                let params = PaddedTreeParams::new(b, h).unwrap();
                let nodes = oracle(b, h);
                assert_eq!(BigUint::from(nodes.len()), params.m);
                for (path, nums) in nodes {
                    assert_eq!(inorder_set(&params, &path).unwrap(), big(&nums), "b={b} h={h} {path:?}");
                }
            }
        }
    }

    #[test]
    fn locate_examples() {
        let params = PaddedTreeParams::new(2, 2).unwrap();
        let n = |x: u32| BigUint::from(x);
        assert_eq!(locate_interval(&params, &n(1), &n(10)).unwrap(), Vec::<u32>::new());
        assert_eq!(locate_interval(&params, &n(1), &n(4)).unwrap(), vec![1]);
        assert_eq!(locate_interval(&params, &n(1), &n(1)).unwrap(), vec![1, 1]);
        assert_eq!(locate_interval(&params, &n(6), &n(9)).unwrap(), vec![2]);
        assert!(locate_interval(&params, &n(0), &n(3)).is_err());
        assert!(locate_interval(&params, &n(4), &n(11)).is_err());
    }

    #[test]
    fn locate_round_trip() {
        for b in 2..=3 {
            for h in 0..=3 {
                let params = PaddedTreeParams::new(b, h).unwrap();
                for (path, _) in oracle(b, h) {
                    let (lo, hi) = params.subtree_range(&path).unwrap();
                    assert_eq!(locate_interval(&params, &lo, &hi).unwrap(), path);
                }
            }
        }
    }

    #[test]
    fn sample_count_example() {
        let z = sample_count(&BigUint::from(341u32), &BigUint::from(19u32), 2.0, 0.25).unwrap();
        assert_eq!(z, BigUint::from(68u32));
    }

    #[test]
    fn sampled_paths_are_valid_and_cover_levels() {
        let params = PaddedTreeParams::new(3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut by_len = [0usize; 3];
        for _ in 0..13_000 {
            let path = sample_path(&params, &mut rng);
            assert!(path.iter().all(|&i| (1..=3).contains(&i)));
            by_len[path.len()] += 1;
        }
        // level sizes 1, 3, 9 out of 13
        assert!((800..1200).contains(&by_len[0]), "{by_len:?}");
        assert!((8_500..9_500).contains(&by_len[2]), "{by_len:?}");
    }

    const RWW: &str = "thread 1\n  a = read x\nthread 2\n  write x 1\nthread 3\n  write x 2\n";

    #[test]
    fn dpor_node_classification() {
        let p = parse_program(RWW).unwrap();
        assert_eq!(is_dpor_node(&p, &[]).unwrap(), PathKind::RealInternal);
        assert_eq!(is_dpor_node(&p, &[9]).unwrap(), PathKind::Dummy);
        assert_eq!(is_dpor_node(&Program::default(), &[]).unwrap(), PathKind::RealMaximalLeaf);
        // leftmost path down to a leaf
        let mut path = Vec::new();
        loop {
            match is_dpor_node(&p, &path).unwrap() {
                PathKind::RealInternal => path.push(1),
                PathKind::RealMaximalLeaf => break,
                PathKind::Dummy => panic!("leftmost path left the tree"),
            }
        }
        path.push(1);
        assert_eq!(is_dpor_node(&p, &path).unwrap(), PathKind::Dummy);
    }

    #[test]
    fn act_one_on_r_w_w() {
        let p = parse_program(RWW).unwrap();
        let params = PaddedTreeParams::new(4, 4).unwrap();
        let dfs = enumerate_d_tree(&p, 1000).unwrap().maximal_keys;
        assert_eq!(enumerate_first_leaves(&p, 6, &params).unwrap(), dfs);
        assert_eq!(enumerate_first_leaves(&p, 3, &params).unwrap(), dfs[..3].to_vec());
        assert!(enumerate_first_leaves(&p, 0, &params).unwrap().is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let res = approx_count(&p, 2.0, 0.25, &params, &mut rng).unwrap();
        assert!(matches!(res, ApproxResult::Exact { count: 6, .. }), "{res:?}");
    }

    #[test]
    fn parameter_errors() {
        let p = parse_program(RWW).unwrap();
        let params = PaddedTreeParams::new(4, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(approx_count(&p, 1.0, 0.25, &params, &mut rng).is_err());
        assert!(approx_count(&p, 2.0, 1.0, &params, &mut rng).is_err());
        let q = parse_program("thread 1\n  a = read x\n  assume a == 0\n").unwrap();
        assert!(approx_count(&q, 2.0, 0.25, &params, &mut rng).is_err());
        assert!(PaddedTreeParams::new(1, 3).is_err());
    }
}
