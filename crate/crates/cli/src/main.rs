use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use estor_core::dtree::{enumerate_d_tree, tree_log};
use estor_core::estimators::{exact_output_distribution, Algorithm, ArenaTree, WeightMode};
use estor_core::harness::{
    converge_cell, run_benchmark_suite, run_sampler, trial_seed, ConvergenceConfig, EstimatorConfig, Sampler, Suite,
};
use estor_core::subexp::{approx_count, PaddedTreeParams};
use estor_core::tdag::{enumerate_t_sinks, materialize_t_dag};
use estor_core::{parse_program, Program};

const CAP: usize = 5_000_000;

#[derive(Parser)]
#[command(name = "estor", version, about = "Count and estimate the execution graphs of small concurrent programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a program and print it in canonical form.
    Parse { file: PathBuf },
    /// Exact count by exhaustive exploration.
    Count {
        #[arg(long, value_enum, default_value = "dtree")]
        semantics: Semantics,
        #[arg(long, value_enum, default_value = "maximal")]
        weight: Weight,
        #[arg(long, default_value_t = CAP)]
        cap: usize,
        file: PathBuf,
    },
    /// Run an estimator for a number of seeded trials.
    Estimate {
        #[command(flatten)]
        est: EstimatorArgs,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the full result, including every trial value, as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Write one JSON object per trial (JSON lines).
        #[arg(long)]
        stream: Option<PathBuf>,
        /// Treat the input as a tree log instead of a program (trust and se only).
        #[arg(long)]
        from_log: bool,
        file: PathBuf,
    },
    /// Exact output distribution of an estimator.
    Dist {
        #[arg(long, value_enum)]
        alg: Alg,
        #[arg(long, value_enum, default_value = "maximal")]
        weight: Weight,
        #[arg(long, default_value_t = CAP)]
        cap: usize,
        file: PathBuf,
    },
    /// Convergence analysis against the exact count.
    Converge {
        #[command(flatten)]
        est: EstimatorArgs,
        #[command(flatten)]
        conv: ConvergenceArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        file: PathBuf,
    },
    /// Square-root-time approximate count.
    Approx {
        #[arg(long, default_value_t = 2.0)]
        r: f64,
        #[arg(long, default_value_t = 0.25)]
        rho: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        file: PathBuf,
    },
    /// Run a built-in benchmark suite.
    Bench {
        #[arg(long, value_enum, default_value = "paper-micro")]
        suite: SuiteArg,
        #[arg(long)]
        out: PathBuf,
        /// Also write the full report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        #[command(flatten)]
        conv: ConvergenceArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Export T(P) as Graphviz or D(P) as a tree log.
    Export {
        #[arg(long, value_enum)]
        format: ExportFormat,
        #[arg(long, default_value_t = 100_000)]
        cap: usize,
        file: PathBuf,
    },
}

#[derive(Args)]
struct EstimatorArgs {
    #[arg(long, value_enum, default_value = "se")]
    alg: Alg,
    #[arg(long, default_value_t = 1)]
    budget: usize,
    #[arg(long, value_enum, default_value = "maximal")]
    weight: Weight,
}

impl EstimatorArgs {
    fn config(&self) -> EstimatorConfig {
        EstimatorConfig::new(self.alg.into(), self.budget, self.weight.into())
    }
}

#[derive(Args)]
struct ConvergenceArgs {
    #[arg(long, default_value_t = 0.20)]
    band: f64,
    #[arg(long, default_value_t = 50)]
    stable: usize,
    #[arg(long, default_value_t = 0.02)]
    flat: f64,
    #[arg(long, default_value_t = 100)]
    flat_window: usize,
    #[arg(long, default_value_t = 2000)]
    max_trials: usize,
    #[arg(long, default_value_t = 5)]
    seeds: usize,
    #[arg(long, default_value_t = 3)]
    quorum: usize,
}

impl ConvergenceArgs {
    fn config(&self) -> ConvergenceConfig {
        ConvergenceConfig {
            band: self.band,
            stable_window: self.stable,
            flat_threshold: self.flat,
            flat_window: self.flat_window,
            max_trials: self.max_trials,
            seeds: self.seeds,
            success_quorum: self.quorum,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Semantics {
    Tdag,
    Dtree,
}

#[derive(Clone, Copy, ValueEnum)]
enum Weight {
    Maximal,
    Cost,
}

impl From<Weight> for WeightMode {
    fn from(w: Weight) -> Self {
        match w {
            Weight::Maximal => WeightMode::MaximalLeavesOnly,
            Weight::Cost => WeightMode::FullCost,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Alg {
    KnuthT,
    Pitt,
    Trust,
    Se,
    Genmc,
}

impl From<Alg> for Algorithm {
    fn from(a: Alg) -> Self {
        match a {
            Alg::KnuthT => Algorithm::KnuthT,
            Alg::Pitt => Algorithm::Pitt,
            Alg::Trust => Algorithm::Trust,
            Alg::Se => Algorithm::Se,
            Alg::Genmc => Algorithm::Genmc,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    PaperMicro,
    Parametric,
    All,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::PaperMicro => Suite::PaperMicro,
            SuiteArg::Parametric => Suite::Parametric,
            SuiteArg::All => Suite::All,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportFormat {
    Dot,
    TreeLog,
}

fn load(path: &Path) -> Result<Program> {
    let src = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_program(&src).map_err(|e| anyhow::anyhow!("{}:{e}", path.display()))
}

fn pretty(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("json values serialize")
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Parse { file } => {
            let p = load(&file)?;
            print!("{p}");
            eprintln!("{} threads, {} memory accesses", p.thread_count(), p.size());
        }
        Command::Count { semantics, weight, cap, file } => {
            let p = load(&file)?;
            let weight = WeightMode::from(weight);
            match semantics {
                Semantics::Tdag => {
                    if weight != WeightMode::MaximalLeavesOnly {
                        bail!("T(P) counts only maximal graphs");
                    }
                    let s = enumerate_t_sinks(&p, cap)?;
                    println!(
                        "{}",
                        pretty(&json!({"semantics": "tdag", "count": s.count, "blocked": s.blocked, "dag_nodes": s.dag_nodes}))
                    );
                }
                Semantics::Dtree => {
                    let s = enumerate_d_tree(&p, cap)?;
                    println!(
                        "{}",
                        pretty(&json!({
                            "semantics": "dtree",
                            "weight": weight.as_str(),
                            "count": s.maximal_leaves,
                            "total_weight": s.total_weight(weight),
                            "maximal_leaves": s.maximal_leaves,
                            "blocked_leaves": s.blocked_leaves,
                            "inconsistent_leaves": s.inconsistent_leaves,
                            "internal_nodes": s.internal_nodes,
                            "max_width": s.max_width(),
                            "max_depth": s.max_depth,
                            "width_per_depth": s.width_per_depth,
                        }))
                    );
                }
            }
        }
        Command::Estimate { est, trials, seed, json: out, stream, from_log, file } => {
            if trials == 0 {
                bail!("--trials must be positive");
            }
            let cfg = est.config();
            let values = if from_log {
                let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
                let arena = ArenaTree::from_log(&text)?;
                estimate_arena(&arena, cfg, trials, seed)?
            } else {
                let p = load(&file)?;
                run_sampler(&Sampler::new(&p, cfg)?, trials, seed)?.values
            };
            let (mean, stderr) = mean_and_stderr(&values);
            println!("{} B={} {}: mean {mean} (std err {stderr}) over {trials} trials", cfg.alg.as_str(), cfg.budget, cfg.weight.as_str());
            if let Some(path) = stream {
                let mut text = String::new();
                for (i, v) in values.iter().enumerate() {
                    let line = json!({
                        "alg": cfg.alg.as_str(),
                        "B": cfg.budget,
                        "weight": cfg.weight.as_str(),
                        "seed": trial_seed(seed, i as u64),
                        "trial": i,
                        "value": v,
                    });
                    text.push_str(&line.to_string());
                    text.push('\n');
                }
                fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            }
            if let Some(out) = out {
                let v = json!({
                    "alg": cfg.alg.as_str(),
                    "budget": cfg.budget,
                    "weight": cfg.weight.as_str(),
                    "trials": trials,
                    "seed": seed,
                    "mean": mean,
                    "std_err": stderr,
                    "values": values,
                });
                fs::write(&out, pretty(&v)).with_context(|| format!("writing {}", out.display()))?;
            }
        }
        Command::Dist { alg, weight, cap, file } => {
            let p = load(&file)?;
            let dist = exact_output_distribution(&p, alg.into(), weight.into(), cap)?;
            println!("# value numerator denominator");
            for (v, num, den) in dist.triples() {
                println!("{v} {num} {den}");
            }
            println!("# mean {}", dist.mean());
            println!("# variance {}", dist.variance());
        }
        Command::Converge { est, conv, seed, file } => {
            let p = load(&file)?;
            let cfg = est.config();
            let exact = enumerate_d_tree(&p, CAP)?.total_weight(cfg.weight);
            let name = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let row = converge_cell(&Sampler::new(&p, cfg)?, &name, exact, &conv.config(), seed)?;
            println!("{}", serde_json::to_string_pretty(&row)?);
        }
        Command::Approx { r, rho, seed, file } => {
            let p = load(&file)?;
            let params = PaddedTreeParams::measured(&p, CAP)?;
            let result = approx_count(&p, r, rho, &params, &mut ChaCha8Rng::seed_from_u64(seed))?;
            let mut v = serde_json::to_value(&result)?;
            v["b"] = json!(params.b);
            v["h"] = json!(params.h);
            println!("{}", pretty(&v));
        }
        Command::Bench { suite, out, json: json_out, conv, seed } => {
            let report = run_benchmark_suite(&Suite::from(suite).entries(), &conv.config(), seed)?;
            fs::write(&out, report.to_csv()?).with_context(|| format!("writing {}", out.display()))?;
            if let Some(j) = json_out {
                fs::write(&j, report.to_json()).with_context(|| format!("writing {}", j.display()))?;
            }
            for f in &report.failures {
                eprintln!("{}: {}", f.benchmark, f.error);
            }
            eprintln!("{} rows written to {}", report.rows.len(), out.display());
        }
        Command::Export { format, cap, file } => {
            let p = load(&file)?;
            match format {
                ExportFormat::Dot => print!("{}", materialize_t_dag(&p, cap)?.to_dot()),
                ExportFormat::TreeLog => print!("{}", tree_log(&p, cap)?),
            }
        }
    }
    Ok(())
}

fn estimate_arena(arena: &ArenaTree, cfg: EstimatorConfig, trials: usize, seed: u64) -> Result<Vec<f64>> {
    cfg.validate()?;
    use estor_core::estimators::{knuth_estimate, se_estimate};
    (0..trials as u64)
        .map(|i| {
            let rng = &mut ChaCha8Rng::seed_from_u64(trial_seed(seed, i));
            let walk = match cfg.alg {
                Algorithm::Trust => knuth_estimate(arena, cfg.weight, rng)?,
                Algorithm::Se => se_estimate(arena, cfg.budget, cfg.weight, rng)?,
                other => bail!("{} cannot run on a tree log", other.as_str()),
            };
            Ok(walk.value)
        })
        .collect()
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
