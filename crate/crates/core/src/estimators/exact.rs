use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use super::{Algorithm, DporTree, SearchTree, TransitionTree, WeightMode};
use crate::dtree::{classify_node, NodeClass};
use crate::graph::ExecutionGraph;
use crate::program::Program;
use crate::tdag::{t_predecessor_count, t_successors};
use crate::{Error, Result};

/// Exact law of an estimator's output: value → probability.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OutputDistribution {
    pub probabilities: BTreeMap<BigRational, BigRational>,
}

impl OutputDistribution {
    fn add(&mut self, value: BigRational, prob: BigRational) {
        *self.probabilities.entry(value).or_insert_with(BigRational::zero) += prob;
    }

    pub fn total_probability(&self) -> BigRational {
        self.probabilities.values().fold(BigRational::zero(), |a, b| a + b)
    }

    pub fn mean(&self) -> BigRational {
        self.probabilities.iter().fold(BigRational::zero(), |a, (v, p)| a + v * p)
    }

    pub fn second_moment(&self) -> BigRational {
        self.probabilities.iter().fold(BigRational::zero(), |a, (v, p)| a + v * v * p)
    }

    pub fn variance(&self) -> BigRational {
        let m = self.mean();
        self.second_moment() - &m * &m
    }

    /// `(value, numerator, denominator)` triples in ascending value order.
    pub fn triples(&self) -> Vec<(BigRational, BigInt, BigInt)> {
        self.probabilities.iter().map(|(v, p)| (v.clone(), p.numer().clone(), p.denom().clone())).collect()
    }

    pub fn mean_f64(&self) -> f64 {
        self.mean().to_f64().unwrap_or(f64::NAN)
    }
}

fn int(n: usize) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// Law of Knuth's estimator on `tree`, by enumerating every root-to-leaf path.
pub fn exact_knuth_distribution<T: SearchTree>(tree: &T, mode: WeightMode, cap: usize) -> Result<OutputDistribution> {
    let mut dist = OutputDistribution::default();
    // (node, path probability, accumulated value, product of degrees so far)
    let mut stack = vec![(tree.root()?, BigRational::one(), BigRational::zero(), BigRational::one())];
    let mut visited = 0usize;
    while let Some((node, prob, acc, scale)) = stack.pop() {
        visited += 1;
        if visited > cap {
            return Err(Error::CapExceeded { what: "estimator paths", cap, explored: visited - 1 });
        }
        let ex = tree.expand(&node)?;
        let acc = acc + &scale * int(ex.weight(mode) as usize);
        let d = ex.children.len();
        if d == 0 {
            dist.add(acc, prob);
            continue;
        }
        let prob = prob / int(d);
        let scale = scale * int(d);
        for c in ex.children {
            stack.push((c, prob.clone(), acc.clone(), scale.clone()));
        }
    }
    Ok(dist)
}

/// Law of Pitt's estimator on T(P).
pub fn exact_pitt_distribution(p: &Program, cap: usize) -> Result<OutputDistribution> {
    let mut dist = OutputDistribution::default();
    let mut stack = vec![(ExecutionGraph::initial(), BigRational::one(), BigRational::one())];
    let mut visited = 0usize;
    while let Some((g, prob, value)) = stack.pop() {
        visited += 1;
        if visited > cap {
            return Err(Error::CapExceeded { what: "estimator paths", cap, explored: visited - 1 });
        }
        let e = if g.is_initial() { 1 } else { t_predecessor_count(&g)? };
        let succ = t_successors(p, &g)?;
        let d = succ.len();
        let value = value * int(d.max(1)) / int(e);
        if d == 0 {
            let done = classify_node(p, &g)? == NodeClass::MaximalLeaf;
            dist.add(if done { value } else { BigRational::zero() }, prob);
            continue;
        }
        let prob = prob / int(d);
        for (_, h) in succ {
            stack.push((h, prob.clone(), value.clone()));
        }
    }
    Ok(dist)
}

/// Exact output law of Knuth on T(P), Pitt, or Knuth on D(P).
pub fn exact_output_distribution(p: &Program, alg: Algorithm, mode: WeightMode, cap: usize) -> Result<OutputDistribution> {
    match alg {
        Algorithm::KnuthT => exact_knuth_distribution(&TransitionTree { program: p }, mode, cap),
        Algorithm::Pitt => exact_pitt_distribution(p, cap),
        Algorithm::Trust => exact_knuth_distribution(&DporTree::new(p)?, mode, cap),
        other => Err(Error::Unsupported(format!("exact distribution of {}", other.as_str()))),
    }
}
