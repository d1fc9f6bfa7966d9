//! Benchmark corpus, seeded trial runner, convergence detection and reports.

pub mod corpus;
mod suite;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use corpus::BenchmarkSpec;
pub use suite::{converge_cell, run_benchmark_suite, suite_cells, ReportRow, SeedOutcome, Suite, SuiteFailure, SuiteReport, ORACLE_CAP};

use crate::dtree::DporTree;
use crate::estimators::{
    genmc_estimate, knuth_estimate, pitt_estimate, se_estimate, Algorithm, ArenaTree, TransitionTree, WeightMode,
};
use crate::program::Program;
use crate::{Error, Result};

/// Trees up to this many compressed nodes are materialized before sampling.
pub const ARENA_CAP: usize = 2_000_000;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// The SplitMix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `i`: the `i`-th output of a SplitMix64 stream started at `base`.
pub fn trial_seed(base: u64, i: u64) -> u64 {
    splitmix64(base.wrapping_add(i.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Which estimator to run and how.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub alg: Algorithm,
    /// Population budget; only stochastic enumeration looks at it.
    pub budget: usize,
    pub weight: WeightMode,
}

impl EstimatorConfig {
    pub fn new(alg: Algorithm, budget: usize, weight: WeightMode) -> Self {
        EstimatorConfig { alg, budget, weight }
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::InvalidArgument("budget must be at least 1".into()));
        }
        if matches!(self.alg, Algorithm::Pitt | Algorithm::Genmc) && self.weight != WeightMode::MaximalLeavesOnly {
            return Err(Error::Unsupported(format!("{} only counts maximal graphs", self.alg.as_str())));
        }
        Ok(())
    }
}

enum Backend<'p> {
    Arena(ArenaTree),
    Dpor(DporTree<'p>),
    Transition(TransitionTree<'p>),
    Program(&'p Program),
}

/// An estimator bound to a program, ready to run seeded trials.
pub struct Sampler<'p> {
    cfg: EstimatorConfig,
    backend: Backend<'p>,
}

impl<'p> Sampler<'p> {
    /// Materializes D(P) when it fits under [`ARENA_CAP`]; walks it lazily otherwise.
    pub fn new(p: &'p Program, cfg: EstimatorConfig) -> Result<Self> {
        cfg.validate()?;
        let backend = match cfg.alg {
            Algorithm::Trust | Algorithm::Se => {
                let tree = DporTree::new(p)?;
                match ArenaTree::materialize(&tree, ARENA_CAP) {
                    Ok(arena) => Backend::Arena(arena),
                    Err(Error::CapExceeded { .. }) => Backend::Dpor(tree),
                    Err(e) => return Err(e),
                }
            }
            Algorithm::KnuthT => Backend::Transition(TransitionTree { program: p }),
            Algorithm::Pitt | Algorithm::Genmc => Backend::Program(p),
        };
        Ok(Sampler { cfg, backend })
    }

    pub fn config(&self) -> EstimatorConfig {
        self.cfg
    }

    /// One estimate drawn with the given seed.
    pub fn sample(&self, seed: u64) -> Result<f64> {
        let rng = &mut ChaCha8Rng::seed_from_u64(seed);
        let EstimatorConfig { alg, budget, weight } = self.cfg;
        let walk = match (&self.backend, alg) {
            (Backend::Arena(t), Algorithm::Se) => se_estimate(t, budget, weight, rng)?,
            (Backend::Arena(t), _) => knuth_estimate(t, weight, rng)?,
            (Backend::Dpor(t), Algorithm::Se) => se_estimate(t, budget, weight, rng)?,
            (Backend::Dpor(t), _) => knuth_estimate(t, weight, rng)?,
            (Backend::Transition(t), _) => knuth_estimate(t, weight, rng)?,
            (Backend::Program(p), Algorithm::Pitt) => pitt_estimate(p, rng)?,
            (Backend::Program(p), _) => genmc_estimate(p, rng)?,
        };
        Ok(walk.value)
    }
}

/// The outcome of `n` seeded trials.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRun {
    pub values: Vec<f64>,
    pub running_means: Vec<f64>,
}

/// `running_means[i]` is the mean of `values[..=i]`, accumulated left to right.
pub fn running_means(values: &[f64]) -> Vec<f64> {
    let mut sum = 0.0;
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            sum += v;
            sum / (i + 1) as f64
        })
        .collect()
}

/// Runs trials `0..n` in parallel; trial `i` uses [`trial_seed`]`(base_seed, i)`,
/// so the result does not depend on scheduling.
pub fn run_sampler(sampler: &Sampler<'_>, n: usize, base_seed: u64) -> Result<TrialRun> {
    let values = (0..n as u64)
        .into_par_iter()
        .map(|i| sampler.sample(trial_seed(base_seed, i)))
        .collect::<Result<Vec<f64>>>()?;
    let running_means = running_means(&values);
    Ok(TrialRun { values, running_means })
}

pub fn run_trials(p: &Program, cfg: EstimatorConfig, n: usize, base_seed: u64) -> Result<TrialRun> {
    run_sampler(&Sampler::new(p, cfg)?, n, base_seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    /// Relative half-width of the acceptance band around the exact value.
    pub band: f64,
    pub stable_window: usize,
    /// Largest accepted relative change of the moving average.
    pub flat_threshold: f64,
    pub flat_window: usize,
    pub max_trials: usize,
    pub seeds: usize,
    pub success_quorum: usize,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            band: 0.20,
            stable_window: 50,
            flat_threshold: 0.02,
            flat_window: 100,
            max_trials: 2000,
            seeds: 5,
            success_quorum: 3,
        }
    }
}

impl ConvergenceConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.band > 0.0
            && self.band < 1.0
            && self.flat_threshold > 0.0
            && self.stable_window > 0
            && self.flat_window > 0
            && self.max_trials > 0
            && self.seeds > 0
            && self.success_quorum > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("bad convergence config {self:?}")))
        }
    }
}

/// First index `t` at which the running mean has settled, if any.
///
/// Two conditions must hold at `t`:
/// * every running mean in `[t, t + stable_window)` lies within
///   `exact · (1 ± band)`;
/// * the trailing moving average `A(s)` (mean of the last `flat_window`
///   running means up to `s`) moves by less than `flat_threshold` relative to
///   `A(t)` across `[t, t + flat_window)`, i.e. `|A(t + w − 1) − A(t)| < thr · |A(t)|`.
///
/// `A(t)` needs `t ≥ flat_window − 1`, so a constant trajectory at the exact
/// value converges at `t = flat_window − 1` provided both windows fit.
pub fn detect_convergence(trajectory: &[f64], exact: f64, cfg: &ConvergenceConfig) -> Option<usize> {
    let n = trajectory.len();
    let w = cfg.flat_window;
    if w == 0 || cfg.stable_window == 0 {
        return None;
    }
    let lo = exact * (1.0 - cfg.band);
    let hi = exact * (1.0 + cfg.band);
    // next_out[i]: first index ≥ i whose running mean is outside the band
    let mut next_out = vec![n; n + 1];
    for i in (0..n).rev() {
        let x = trajectory[i];
        next_out[i] = if x >= lo && x <= hi { next_out[i + 1] } else { i };
    }
    let mut prefix = vec![0.0f64; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + trajectory[i];
    }
    let sma = |s: usize| (prefix[s + 1] - prefix[s + 1 - w]) / w as f64;
    let start = w - 1;
    let last = n.checked_sub(cfg.stable_window.max(w))?;
    (start..=last).find(|&t| {
        if next_out[t] < t + cfg.stable_window {
            return false;
        }
        let a = sma(t);
        (sma(t + w - 1) - a).abs() < cfg.flat_threshold * a.abs()
    })
}

/// Relative error `|mean − exact| / exact`.
pub fn relative_error(mean: f64, exact: f64) -> f64 {
    (mean - exact).abs() / exact
}
