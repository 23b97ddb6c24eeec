use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{ArgGroup, Parser, Subcommand, ValueEnum};
use reuse_bench::datagen::{self, DataKind};
use reuse_bench::workload::WorkloadError;
use reuse_bench::{build_index, run_workload, sosd, BuiltIndex, DataSource, IndexKind, WorkloadSpec};
use reuse_index::pool::{default_bins, pretrain_pool, DEFAULT_SYNTHETIC_SIZE};
use reuse_index::{load_pool, save_pool, LearnedIndex, ModelKind, TrainParams};
use serde_json::json;

#[derive(Parser)]
#[command(name = "reuse-bench", version, about = "Generate data, build model pools and benchmark reuse-based learned indexes")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Uniform,
    Skew,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic SOSD key file.
    GenData {
        #[arg(long, value_enum)]
        kind: GenKind,
        /// Skew exponent (odd, positive).
        #[arg(long, default_value_t = 3)]
        alpha: u32,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pre-train a model pool over every grid histogram for a threshold.
    GenPool {
        #[arg(long)]
        eps: f64,
        /// Histogram bins (default derived from eps).
        #[arg(long)]
        m: Option<usize>,
        /// Keys per synthetic training set.
        #[arg(long, default_value_t = DEFAULT_SYNTHETIC_SIZE)]
        ns: usize,
        #[arg(long, default_value = "linear")]
        model: ModelKind,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build an index over a key file and print its statistics.
    Build {
        #[arg(long, value_enum)]
        index: IndexKind,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        pool: Option<PathBuf>,
        #[arg(long, default_value_t = 0.9)]
        eps: f64,
        #[arg(long, default_value = "linear")]
        model: ModelKind,
        #[arg(long, default_value_t = 1024)]
        fanout: usize,
        #[arg(long, default_value_t = 16)]
        branch: usize,
        #[arg(long, default_value_t = 10_000)]
        leaf_cap: usize,
        /// Save the built index as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a workload and print one JSON report.
    #[command(group(ArgGroup::new("source").args(["data", "gen"])))]
    Bench {
        /// Workload spec as JSON; flags below override its fields.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Generate data in memory: uniform, skew or skewA.
        #[arg(long)]
        gen: Option<DataKind>,
        #[arg(long, requires = "gen")]
        n: Option<usize>,
        #[arg(long, requires = "gen")]
        data_seed: Option<u64>,
        #[arg(long, value_enum)]
        index: Option<IndexKind>,
        #[arg(long)]
        model: Option<ModelKind>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        fanout: Option<usize>,
        #[arg(long)]
        branch: Option<usize>,
        #[arg(long)]
        leaf_cap: Option<usize>,
        #[arg(long)]
        pool: Option<PathBuf>,
        #[arg(long)]
        lookups: Option<usize>,
        #[arg(long)]
        insert_ratio: Option<f64>,
        #[arg(long)]
        absent_ratio: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        /// Report on stdout as JSON (always on).
        #[arg(long)]
        json: bool,
        /// Also append the report to this CSV file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Summarize a pool file or a saved index.
    #[command(group(ArgGroup::new("target").args(["pool", "index"]).required(true)))]
    Inspect {
        #[arg(long)]
        pool: Option<PathBuf>,
        #[arg(long)]
        index: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Correctness(String),
}

impl<E: std::error::Error> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Correctness(msg)) => {
            eprintln!("correctness failure: {msg}");
            ExitCode::from(2)
        }
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<(), Failure> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

fn run(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::GenData {
            kind,
            alpha,
            n,
            seed,
            out,
        } => {
            if n == 0 {
                return Err(Failure::Usage("n must be at least 1".into()));
            }
            let kind = match kind {
                GenKind::Uniform => DataKind::Uniform,
                GenKind::Skew => DataKind::skew(alpha).map_err(Failure::Usage)?,
            };
            let keys = datagen::generate(kind, n, seed);
            sosd::write(&keys, &out)?;
            print_json(&json!({ "kind": kind.to_string(), "n": n, "seed": seed, "out": out }))
        }
        Cmd::GenPool {
            eps,
            m,
            ns,
            model,
            seed,
            out,
        } => {
            let started = Instant::now();
            let pool = pretrain_pool(eps, model, ns, seed, m, &TrainParams::default())?;
            save_pool(&pool, &out)?;
            print_json(&json!({
                "eps": eps,
                "m": m.map_or_else(|| default_bins(eps).ok(), Some),
                "ns": ns,
                "model": model,
                "entries": pool.len(),
                "train_ms": started.elapsed().as_secs_f64() * 1e3,
                "out": out,
            }))
        }
        Cmd::Build {
            index,
            data,
            pool,
            eps,
            model,
            fanout,
            branch,
            leaf_cap,
            out,
        } => {
            let spec = WorkloadSpec {
                data: DataSource::File { path: data },
                index,
                model,
                eps,
                fanout,
                branch,
                leaf_cap,
                pool,
                ..WorkloadSpec::default()
            };
            spec.validate()?;
            let keys = spec.data.load()?;
            let started = Instant::now();
            let built = build_index(&spec, &keys, None)?;
            let build_ms = started.elapsed().as_secs_f64() * 1e3;
            if let Some(path) = out {
                fs::write(path, serde_json::to_vec(&built)?)?;
            }
            print_json(&json!({ "index": index.name(), "n": keys.len(), "build_ms": build_ms, "stats": built.stats() }))
        }
        Cmd::Bench {
            spec,
            data,
            gen,
            n,
            data_seed,
            index,
            model,
            eps,
            fanout,
            branch,
            leaf_cap,
            pool,
            lookups,
            insert_ratio,
            absent_ratio,
            seed,
            threads,
            json: _,
            csv,
        } => {
            let mut s = match spec {
                Some(path) => serde_json::from_slice::<WorkloadSpec>(&fs::read(path)?)?,
                None => WorkloadSpec::default(),
            };
            if let Some(path) = data {
                s.data = DataSource::File { path };
            }
            if let Some(generator) = gen {
                s.data = DataSource::Generated {
                    generator,
                    n: n.unwrap_or(1_000_000),
                    seed: data_seed.unwrap_or(1),
                };
            }
            s.index = index.unwrap_or(s.index);
            s.model = model.unwrap_or(s.model);
            s.eps = eps.unwrap_or(s.eps);
            s.fanout = fanout.unwrap_or(s.fanout);
            s.branch = branch.unwrap_or(s.branch);
            s.leaf_cap = leaf_cap.unwrap_or(s.leaf_cap);
            s.pool = pool.or(s.pool);
            s.lookups = lookups.unwrap_or(s.lookups);
            s.insert_ratio = insert_ratio.unwrap_or(s.insert_ratio);
            s.absent_ratio = absent_ratio.unwrap_or(s.absent_ratio);
            s.seed = seed.unwrap_or(s.seed);
            s.threads = threads.unwrap_or(s.threads);
            match run_workload(&s) {
                Ok(report) => {
                    print_json(&report)?;
                    if let Some(path) = csv {
                        report.append_csv(path)?;
                    }
                    Ok(())
                }
                Err(WorkloadError::Correctness { report, mismatches }) => {
                    print_json(&report)?;
                    Err(Failure::Correctness(format!(
                        "found {}/{} present keys, {}/{} absent keys correct; sample: {}",
                        report.found,
                        report.total,
                        report.absent_correct,
                        report.absent_total,
                        serde_json::to_string(&mismatches)?
                    )))
                }
                Err(e) => Err(e.into()),
            }
        }
        Cmd::Inspect { pool, index } => {
            if let Some(path) = pool {
                let p = load_pool(path)?;
                let errs = p.entries().iter().map(|e| e.max_abs_err);
                print_json(&json!({
                    "model": p.kind(),
                    "eps": p.eps(),
                    "m": p.bins(),
                    "ns": p.synthetic_size(),
                    "entries": p.len(),
                    "min_max_abs_err": errs.clone().reduce(f64::min),
                    "max_max_abs_err": errs.reduce(f64::max),
                }))
            } else if let Some(path) = index {
                let built: BuiltIndex = serde_json::from_slice(&fs::read(path)?)?;
                print_json(&json!({ "index": built.kind().name(), "stats": built.stats() }))
            } else {
                Err(Failure::Usage("inspect needs --pool or --index".into()))
            }
        }
    }
}
