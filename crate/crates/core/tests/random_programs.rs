//! Cross-checks on randomly generated straight-line and branching programs.

use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;

use estor_core::dtree::{enumerate_d_tree, DporTree};
use estor_core::estimators::{
    exact_knuth_distribution, exact_pitt_distribution, se_estimate, ArenaTree, WeightMode,
};
use estor_core::tdag::enumerate_t_sinks;
use estor_core::{parse_program, Program};
use rand::SeedableRng;

#[derive(Clone, Debug)]
enum Op {
    Read(usize),
    Write(usize, i64),
    /// Read, then skip the next write if the value differs.
    Guard(usize, i64),
    /// Read and block unless the value differs from the constant.
    Assume(usize, i64),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0..2usize).prop_map(Op::Read),
        (0..2usize, 1..3i64).prop_map(|(l, v)| Op::Write(l, v)),
        (0..2usize, 0..3i64).prop_map(|(l, v)| Op::Guard(l, v)),
        (0..2usize, 0..2i64).prop_map(|(l, v)| Op::Assume(l, v)),
    ]
}

fn render(threads: &[Vec<Op>]) -> String {
    let locs = ["x", "y"];
    let mut s = String::new();
    for (t, ops) in threads.iter().enumerate() {
        s.push_str(&format!("thread {}\n", t + 1));
        for (i, op) in ops.iter().enumerate() {
            match op {
                Op::Read(l) => s.push_str(&format!("  r{i} = read {}\n", locs[*l])),
                Op::Write(l, v) => s.push_str(&format!("  write {} {v}\n", locs[*l])),
                Op::Guard(l, v) => {
                    s.push_str(&format!("  r{i} = read {}\n", locs[*l]));
                    s.push_str(&format!("  if r{i} != {v} goto g{i}\n"));
                    s.push_str(&format!("  write {} {}\n", locs[1 - *l], v + 1));
                    s.push_str(&format!("  g{i}:\n"));
                }
                Op::Assume(l, v) => {
                    s.push_str(&format!("  r{i} = read {}\n", locs[*l]));
                    s.push_str(&format!("  assume r{i} != {v}\n"));
                }
            }
        }
    }
    s
}

fn program() -> impl Strategy<Value = Program> {
    prop::collection::vec(prop::collection::vec(op(), 1..4), 2..4)
        .prop_map(|t| parse_program(&render(&t)).expect("generated programs parse"))
}

fn int(n: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn leaves_are_exactly_the_sinks(p in program()) {
        let stats = enumerate_d_tree(&p, 200_000).unwrap();
        let keys: BTreeSet<_> = stats.maximal_keys.iter().cloned().collect();
        prop_assert_eq!(keys.len(), stats.maximal_keys.len());
        prop_assert_eq!(keys, enumerate_t_sinks(&p, 200_000).unwrap().sinks);
    }

    #[test]
    fn tree_walk_and_pitt_are_unbiased(p in program()) {
        let stats = enumerate_d_tree(&p, 200_000).unwrap();
        let tree = DporTree::new(&p).unwrap();
        for mode in [WeightMode::MaximalLeavesOnly, WeightMode::FullCost] {
            let d = exact_knuth_distribution(&tree, mode, 200_000).unwrap();
            prop_assert_eq!(d.mean(), int(stats.total_weight(mode)));
        }
        let pitt = exact_pitt_distribution(&p, 200_000).unwrap();
        prop_assert_eq!(pitt.mean(), int(stats.maximal_leaves));
    }

    #[test]
    fn full_budget_enumeration_is_exact(p in program(), seed in any::<u64>()) {
        let stats = enumerate_d_tree(&p, 200_000).unwrap();
        let arena = ArenaTree::materialize(&DporTree::new(&p).unwrap(), 200_000).unwrap();
        let b = stats.max_width() as usize;
        let rng = &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for mode in [WeightMode::MaximalLeavesOnly, WeightMode::FullCost] {
            let w = se_estimate(&arena, b, mode, rng).unwrap();
            prop_assert_eq!(w.value, stats.total_weight(mode) as f64);
        }
    }

    #[test]
    fn arena_log_round_trip(p in program()) {
        let arena = ArenaTree::materialize(&DporTree::new(&p).unwrap(), 200_000).unwrap();
        let back = ArenaTree::from_log(&arena.to_log()).unwrap();
        prop_assert_eq!(back.to_log(), arena.to_log());
        prop_assert_eq!(back.len(), arena.len());
    }
}
