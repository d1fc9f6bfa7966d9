use rayon::prelude::*;
use serde::Serialize;

use super::corpus::{self, BenchmarkSpec};
use super::{detect_convergence, relative_error, run_sampler, ConvergenceConfig, EstimatorConfig, Sampler};
use crate::dtree::enumerate_d_tree;
use crate::estimators::{Algorithm, WeightMode};
use crate::{Error, Result};

/// Node cap for the exact oracle inside suites.
pub const ORACLE_CAP: usize = 2_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    PaperMicro,
    Parametric,
    All,
}

impl Suite {
    pub fn parse(s: &str) -> Option<Suite> {
        match s {
            "paper-micro" => Some(Suite::PaperMicro),
            "parametric" => Some(Suite::Parametric),
            "all" => Some(Suite::All),
            _ => None,
        }
    }

    /// Benchmarks paired with the estimator cells run on them.
    pub fn entries(self) -> Vec<(BenchmarkSpec, Vec<EstimatorConfig>)> {
        let with = |specs: Vec<BenchmarkSpec>, cells: Vec<EstimatorConfig>| {
            specs.into_iter().map(|s| (s, cells.clone())).collect::<Vec<_>>()
        };
        match self {
            Suite::PaperMicro => with(corpus::paper_micro(), suite_cells(Suite::PaperMicro)),
            Suite::Parametric => with(corpus::parametric(), suite_cells(Suite::Parametric)),
            Suite::All => {
                let mut v = Suite::PaperMicro.entries();
                v.extend(Suite::Parametric.entries());
                v
            }
        }
    }
}

/// Default estimator cells of a suite.
pub fn suite_cells(suite: Suite) -> Vec<EstimatorConfig> {
    let m = WeightMode::MaximalLeavesOnly;
    match suite {
        Suite::PaperMicro => vec![
            EstimatorConfig::new(Algorithm::KnuthT, 1, m),
            EstimatorConfig::new(Algorithm::Pitt, 1, m),
            EstimatorConfig::new(Algorithm::Trust, 1, m),
            EstimatorConfig::new(Algorithm::Se, 2, m),
            EstimatorConfig::new(Algorithm::Genmc, 1, m),
        ],
        Suite::Parametric => vec![
            EstimatorConfig::new(Algorithm::Se, 1, m),
            EstimatorConfig::new(Algorithm::Se, 20, m),
            EstimatorConfig::new(Algorithm::Se, 20, WeightMode::FullCost),
        ],
        Suite::All => {
            let mut v = suite_cells(Suite::PaperMicro);
            v.extend(suite_cells(Suite::Parametric));
            v.sort_by_key(|c| (c.alg, c.budget, c.weight));
            v.dedup();
            v
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub converged: bool,
    pub trials_to_converge: Option<usize>,
    pub final_mean: f64,
    pub rel_error: f64,
    #[serde(skip)]
    pub trajectory: Vec<f64>,
}

/// One (benchmark, algorithm, budget, weight) cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub benchmark: String,
    pub alg: Algorithm,
    pub budget: usize,
    pub weight: WeightMode,
    pub exact: u64,
    /// Mean over seeds of the running mean after `max_trials`.
    pub mean: f64,
    /// Mean over seeds of the final relative error.
    pub rel_error: f64,
    pub success_ratio: f64,
    /// Mean trials-to-converge over converged seeds; `None` ("failed") below quorum.
    pub trials_to_converge: Option<f64>,
    pub seeds: Vec<SeedOutcome>,
}

impl ReportRow {
    pub fn converged_seeds(&self) -> usize {
        self.seeds.iter().filter(|s| s.converged).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteFailure {
    pub benchmark: String,
    pub error: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SuiteReport {
    pub rows: Vec<ReportRow>,
    pub failures: Vec<SuiteFailure>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    benchmark: &'a str,
    alg: &'a str,
    budget: usize,
    weight: &'a str,
    exact: u64,
    mean: f64,
    rel_error: f64,
    success_ratio: f64,
    trials_to_converge: String,
}

impl SuiteReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(CsvRow {
                benchmark: &r.benchmark,
                alg: r.alg.as_str(),
                budget: r.budget,
                weight: r.weight.as_str(),
                exact: r.exact,
                mean: r.mean,
                rel_error: r.rel_error,
                success_ratio: r.success_ratio,
                trials_to_converge: r.trials_to_converge.map_or_else(|| "failed".to_string(), |t| format!("{t:.1}")),
            })
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Runs `cfg.seeds` independent trajectories of `cfg.max_trials` trials each
/// and applies [`detect_convergence`]. Seed `j` uses base seed `base_seed + j`.
pub fn converge_cell(
    sampler: &Sampler<'_>,
    benchmark: &str,
    exact: u64,
    cfg: &ConvergenceConfig,
    base_seed: u64,
) -> Result<ReportRow> {
    cfg.validate()?;
    if exact == 0 {
        return Err(Error::InvalidArgument("convergence needs a positive exact value".into()));
    }
    let exact_f = exact as f64;
    let seeds = (0..cfg.seeds as u64)
        .map(|j| {
            let seed = base_seed.wrapping_add(j);
            let run = run_sampler(sampler, cfg.max_trials, seed)?;
            let t = detect_convergence(&run.running_means, exact_f, cfg);
            let final_mean = *run.running_means.last().expect("max_trials > 0");
            Ok(SeedOutcome {
                seed,
                converged: t.is_some(),
                trials_to_converge: t.map(|t| t + 1),
                final_mean,
                rel_error: relative_error(final_mean, exact_f),
                trajectory: run.running_means,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = seeds.len() as f64;
    let converged: Vec<usize> = seeds.iter().filter_map(|s| s.trials_to_converge).collect();
    let c = sampler.config();
    Ok(ReportRow {
        benchmark: benchmark.to_string(),
        alg: c.alg,
        budget: c.budget,
        weight: c.weight,
        exact,
        mean: seeds.iter().map(|s| s.final_mean).sum::<f64>() / n,
        rel_error: seeds.iter().map(|s| s.rel_error).sum::<f64>() / n,
        success_ratio: converged.len() as f64 / n,
        trials_to_converge: (converged.len() >= cfg.success_quorum)
            .then(|| converged.iter().sum::<usize>() as f64 / converged.len() as f64),
        seeds,
    })
}

/// Runs every cell of every entry. A benchmark that fails (parse error, cap,
/// unsupported cell) is recorded in `failures` and the rest continue.
pub fn run_benchmark_suite(
    entries: &[(BenchmarkSpec, Vec<EstimatorConfig>)],
    cfg: &ConvergenceConfig,
    base_seed: u64,
) -> Result<SuiteReport> {
    cfg.validate()?;
    let per_bench: Vec<std::result::Result<Vec<ReportRow>, SuiteFailure>> = entries
        .par_iter()
        .map(|(spec, cells)| {
            let fail = |e: Error| SuiteFailure { benchmark: spec.name.clone(), error: e.to_string() };
            let p = spec.program().map_err(fail)?;
            let stats = enumerate_d_tree(&p, ORACLE_CAP).map_err(fail)?;
            cells
                .par_iter()
                .map(|cell| {
                    let sampler = Sampler::new(&p, *cell)?;
                    converge_cell(&sampler, &spec.name, stats.total_weight(cell.weight), cfg, base_seed)
                })
                .collect::<Result<Vec<_>>>()
                .map_err(fail)
        })
        .collect();
    let mut report = SuiteReport::default();
    for r in per_bench {
        match r {
            Ok(rows) => report.rows.extend(rows),
            Err(f) => report.failures.push(f),
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> ConvergenceConfig {
        ConvergenceConfig { max_trials: 300, seeds: 2, success_quorum: 1, ..Default::default() }
    }

    #[test]
    fn empty_suite_is_empty_report() {
        let r = run_benchmark_suite(&[], &ConvergenceConfig::default(), 0).unwrap();
        assert!(r.rows.is_empty() && r.failures.is_empty());
        assert_eq!(r.to_csv().unwrap(), "");
    }

    #[test]
    fn paper_micro_exact_column() {
        let entries: Vec<_> = Suite::PaperMicro
            .entries()
            .into_iter()
            .map(|(s, _)| (s, vec![EstimatorConfig::new(Algorithm::Se, 2, WeightMode::MaximalLeavesOnly)]))
            .collect();
        let r = run_benchmark_suite(&entries, &quick(), 3).unwrap();
        let exact: Vec<u64> = r.rows.iter().map(|row| row.exact).collect();
        assert_eq!(exact, vec![6, 1, 1, 4, 2, 3, 4, 5, 6, 7, 8, 9]);
    }

    #[test]
    fn reports_are_reproducible() {
        let entries = vec![(corpus::r_w_w(), suite_cells(Suite::PaperMicro))];
        let a = run_benchmark_suite(&entries, &quick(), 11).unwrap();
        let b = run_benchmark_suite(&entries, &quick(), 11).unwrap();
        assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
        assert_eq!(a.to_json(), b.to_json());
        assert!(a.to_csv().unwrap().starts_with("benchmark,alg,budget,weight,exact,mean"));
    }

    #[test]
    fn failures_do_not_stop_the_suite() {
        let bad = BenchmarkSpec::new("broken", "thread 1\n  a = read\n".into());
        let entries = vec![
            (bad, suite_cells(Suite::PaperMicro)),
            (corpus::r_w_w(), vec![EstimatorConfig::new(Algorithm::Pitt, 1, WeightMode::FullCost)]),
            (corpus::readers(3), vec![EstimatorConfig::new(Algorithm::Trust, 1, WeightMode::MaximalLeavesOnly)]),
        ];
        let r = run_benchmark_suite(&entries, &quick(), 0).unwrap();
        assert_eq!(r.failures.len(), 2);
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.rows[0].success_ratio, 1.0);
    }

    #[test]
    fn success_ratio_granularity() {
        let entries = vec![(corpus::hairbrush(6), vec![EstimatorConfig::new(Algorithm::Trust, 1, WeightMode::MaximalLeavesOnly)])];
        let cfg = ConvergenceConfig { max_trials: 400, ..Default::default() };
        let r = run_benchmark_suite(&entries, &cfg, 5).unwrap();
        let ratio = r.rows[0].success_ratio;
        assert!([0.0, 0.2, 0.4, 0.6, 0.8, 1.0].iter().any(|&x| (x - ratio).abs() < 1e-12));
        assert_eq!(r.rows[0].trials_to_converge.is_some(), r.rows[0].converged_seeds() >= 3);
    }
}
