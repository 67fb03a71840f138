//! Command-line front end.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::SampleSet;
use crate::modelfile::parse_model;
use crate::newick::to_newick;
use crate::synth::{
    diagnostics, parse_methods, reconstruct, run_quartet_experiment, run_tree_experiment, Method,
    QuartetExperimentConfig, RecoveryDiagnostics, ResultTable, TreeExperimentConfig,
};
use crate::tree::LatentTree;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "latent-quartet",
    version,
    about = "Latent tree recovery with nuclear-norm quartet tests"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Quartet recovery rates on random single-edge models.
    ///
    /// CSV columns: method,m,trial,outcome,elapsed_ms (outcome is 1 when the
    /// resolver found the true pairing).
    QuartetBench(QuartetBenchArgs),
    /// Tree recovery error on random latent trees.
    ///
    /// CSV columns: method,m,trial,outcome,elapsed_ms (outcome is the
    /// Robinson-Foulds distance to the generating tree).
    TreeBench(TreeBenchArgs),
    /// Build a tree from a sample CSV and write it as Newick.
    Build(BuildArgs),
    /// Report identifiability diagnostics and success bounds for a model file.
    ///
    /// CSV columns: metric,m,value (m is empty for scalar metrics).
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Base seed for every random choice.
    #[arg(long, env = "LATENT_QUARTET_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (0 uses all cores).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Output path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Record per-row wall-clock time in elapsed_ms (otherwise 0).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct QuartetBenchArgs {
    #[arg(long)]
    pub kh: usize,
    #[arg(long)]
    pub kg: usize,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 0.5)]
    pub mu: f64,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    pub samples: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    /// Comma-separated: tensor, spectral@k, oracle.
    #[arg(long, default_value = "tensor")]
    pub methods: String,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct TreeBenchArgs {
    #[arg(long, default_value_t = 16)]
    pub d: usize,
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    /// Leaf table perturbation.
    #[arg(long, default_value_t = 0.5)]
    pub mu: f64,
    /// Hidden-edge table perturbation.
    #[arg(long, default_value_t = 0.2)]
    pub mu_hidden: f64,
    #[arg(long, default_value_t = 2)]
    pub k_lo: usize,
    #[arg(long, default_value_t = 8)]
    pub k_hi: usize,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, value_delimiter = ',', required = true)]
    pub samples: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Comma-separated: tensor, spectral@k, nj, oracle.
    #[arg(long, default_value = "tensor")]
    pub methods: String,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Sample CSV: header of variable names, one row per sample, states 1..n.
    #[arg(long)]
    pub input: PathBuf,
    /// tensor, spectral@k or nj.
    #[arg(long, default_value = "tensor")]
    pub method: String,
    /// Newick output path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, env = "LATENT_QUARTET_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Insert variables in a seeded random order instead of file order.
    #[arg(long)]
    pub shuffle: bool,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Model file (see the README for the format).
    #[arg(long)]
    pub model: PathBuf,
    /// Sample sizes at which to evaluate the success bounds.
    #[arg(long, value_delimiter = ',', default_value = "100,1000,10000,100000")]
    pub samples: Vec<usize>,
    /// Constant in the whole-tree bound.
    #[arg(long, default_value_t = 4.0)]
    pub c: f64,
    /// CSV report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Everything needed to rerun a command.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub version: String,
    pub elapsed_ms: u128,
}

/// Error tagged with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(e: impl std::fmt::Display) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: e.to_string(),
        }
    }
}

fn classify(e: Error, bad_input_code: i32) -> CliError {
    let code = match &e {
        Error::Numerical(_) => EXIT_NUMERICAL,
        Error::InvalidInput(_) | Error::UnsupportedSize(_) => bad_input_code,
        _ => EXIT_DATA,
    };
    CliError {
        code,
        message: e.to_string(),
    }
}

fn with_pool<T: Send>(
    jobs: usize,
    f: impl FnOnce() -> T + Send,
) -> std::result::Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(CliError::usage)?;
    Ok(pool.install(f))
}

fn open_out(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn write_manifest(out: &Option<PathBuf>, manifest: &RunManifest) -> Result<()> {
    if let Some(p) = out {
        let text = serde_json::to_string_pretty(manifest)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        std::fs::write(manifest_path(p), text + "\n")?;
    }
    Ok(())
}

fn print_summary(table: &ResultTable) {
    eprintln!(
        "{:<14} {:>8} {:>7} {:>10} {:>10} {:>8}",
        "method", "m", "trials", "mean", "std_err", "failed"
    );
    for s in table.summary() {
        eprintln!(
            "{:<14} {:>8} {:>7} {:>10.4} {:>10.4} {:>8}",
            s.method, s.m, s.trials, s.mean, s.std_err, s.failures
        );
    }
}

fn finish_table(
    table: &ResultTable,
    run: &RunArgs,
    subcommand: &str,
    config: serde_json::Value,
    started: Instant,
) -> std::result::Result<(), CliError> {
    let mut w = open_out(&run.out).map_err(|e| classify(e, EXIT_DATA))?;
    table
        .write_csv(&mut w)
        .map_err(|e| classify(e, EXIT_DATA))?;
    w.flush().map_err(|e| classify(e.into(), EXIT_DATA))?;
    print_summary(table);
    let manifest = RunManifest {
        subcommand: subcommand.into(),
        config,
        seed: run.seed,
        version: env!("CARGO_PKG_VERSION").into(),
        elapsed_ms: started.elapsed().as_millis(),
    };
    write_manifest(&run.out, &manifest).map_err(|e| classify(e, EXIT_DATA))
}

pub fn cmd_quartet_bench(a: &QuartetBenchArgs) -> std::result::Result<(), CliError> {
    let started = Instant::now();
    let cfg = QuartetExperimentConfig {
        k_h: a.kh,
        k_g: a.kg,
        n: a.n,
        mu: a.mu,
        sample_grid: a.samples.clone(),
        trials: a.trials,
        methods: parse_methods(&a.methods).map_err(CliError::usage)?,
        seed: a.run.seed,
        timing: a.run.timing,
    };
    cfg.validate().map_err(CliError::usage)?;
    let table = with_pool(a.run.jobs, || run_quartet_experiment(&cfg))?
        .map_err(|e| classify(e, EXIT_USAGE))?;
    let config = serde_json::to_value(&cfg).map_err(CliError::usage)?;
    finish_table(&table, &a.run, "quartet-bench", config, started)
}

pub fn cmd_tree_bench(a: &TreeBenchArgs) -> std::result::Result<(), CliError> {
    let started = Instant::now();
    let cfg = TreeExperimentConfig {
        d: a.d,
        beta: a.beta,
        k_lo: a.k_lo,
        k_hi: a.k_hi,
        n: a.n,
        mu: a.mu,
        mu_hidden: a.mu_hidden,
        sample_grid: a.samples.clone(),
        trials: a.trials,
        methods: parse_methods(&a.methods).map_err(CliError::usage)?,
        seed: a.run.seed,
        timing: a.run.timing,
    };
    cfg.validate().map_err(CliError::usage)?;
    let table = with_pool(a.run.jobs, || run_tree_experiment(&cfg))?
        .map_err(|e| classify(e, EXIT_USAGE))?;
    let config = serde_json::to_value(&cfg).map_err(CliError::usage)?;
    finish_table(&table, &a.run, "tree-bench", config, started)
}

/// Build a tree from samples; with `shuffle` the insertion order is a seeded
/// permutation of the columns.
pub fn build_from_samples(
    samples: &SampleSet,
    method: Method,
    seed: u64,
    shuffle: bool,
) -> Result<LatentTree> {
    if samples.d() < 4 {
        return Err(Error::UnsupportedSize(format!(
            "tree building needs at least 4 variables, got {}",
            samples.d()
        )));
    }
    if matches!(method, Method::Oracle) {
        return Err(Error::invalid(
            "the oracle needs a known tree and cannot build from samples",
        ));
    }
    if shuffle {
        let mut order: Vec<usize> = (0..samples.d()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        reconstruct(&samples.select(&order)?, method, seed, None)
    } else {
        reconstruct(samples, method, seed, None)
    }
}

/// Read a sample CSV and build its tree.
pub fn build_from_file(
    input: &Path,
    method: Method,
    seed: u64,
    shuffle: bool,
) -> Result<LatentTree> {
    let samples = SampleSet::read_csv(BufReader::new(File::open(input)?))?;
    build_from_samples(&samples, method, seed, shuffle)
}

pub fn cmd_build(a: &BuildArgs) -> std::result::Result<(), CliError> {
    let started = Instant::now();
    let method: Method = a.method.parse().map_err(CliError::usage)?;
    if !matches!(method, Method::Spectral(_) | Method::Tensor | Method::Nj) {
        return Err(CliError::usage("build supports tensor, spectral@k and nj"));
    }
    let tree =
        build_from_file(&a.input, method, a.seed, a.shuffle).map_err(|e| classify(e, EXIT_DATA))?;
    let text = to_newick(&tree).map_err(|e| classify(e, EXIT_DATA))?;
    let mut w = open_out(&a.out).map_err(|e| classify(e, EXIT_DATA))?;
    writeln!(w, "{text}")
        .and_then(|_| w.flush())
        .map_err(|e| classify(e.into(), EXIT_DATA))?;
    let manifest = RunManifest {
        subcommand: "build".into(),
        config: serde_json::json!({
            "input": a.input,
            "method": method.to_string(),
            "shuffle": a.shuffle,
        }),
        seed: a.seed,
        version: env!("CARGO_PKG_VERSION").into(),
        elapsed_ms: started.elapsed().as_millis(),
    };
    write_manifest(&a.out, &manifest).map_err(|e| classify(e, EXIT_DATA))
}

/// Long-format `metric,m,value` rows for a diagnostics report.
pub fn diagnostics_rows(
    d: &RecoveryDiagnostics,
    grid: &[usize],
) -> Vec<(String, Option<usize>, f64)> {
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let mut rows = vec![
        ("theta_min".to_string(), None, d.theta_min),
        ("gamma_min".to_string(), None, d.gamma_min),
        ("alpha_min".to_string(), None, d.alpha_min),
        ("alpha_raw".to_string(), None, d.alpha_raw),
        ("delta".to_string(), None, d.delta),
        ("threshold".to_string(), None, d.threshold()),
        ("k".to_string(), None, d.k as f64),
        ("d".to_string(), None, d.d as f64),
        ("c".to_string(), None, d.c),
        ("lemma2_ok".to_string(), None, flag(d.lemma2_ok)),
        ("a3_ok".to_string(), None, flag(d.a3_ok)),
        ("a4_ok".to_string(), None, flag(d.a4_ok)),
    ];
    for &m in grid {
        rows.push(("quartet_bound".to_string(), Some(m), d.lemma3_bound(m)));
    }
    for &m in grid {
        rows.push(("tree_bound".to_string(), Some(m), d.tree_bound(m)));
    }
    rows
}

pub fn cmd_diagnose(a: &DiagnoseArgs) -> std::result::Result<(), CliError> {
    let text = std::fs::read_to_string(&a.model).map_err(|e| classify(e.into(), EXIT_DATA))?;
    let tree = parse_model(&text).map_err(|e| classify(e, EXIT_DATA))?;
    let diag = diagnostics(&tree, a.c).map_err(|e| classify(e, EXIT_DATA))?;
    let rows = diagnostics_rows(&diag, &a.samples);

    let mut stdout = std::io::stdout().lock();
    let mut report = String::new();
    for (metric, m, value) in &rows {
        match m {
            Some(m) => report.push_str(&format!("{metric:<14} m={m:<10} {value:.6}\n")),
            None => report.push_str(&format!("{metric:<14} {value:.6}\n")),
        }
    }
    stdout
        .write_all(report.as_bytes())
        .map_err(|e| classify(e.into(), EXIT_DATA))?;

    if let Some(p) = &a.out {
        let write = || -> Result<()> {
            let mut wr = csv::Writer::from_writer(File::create(p)?);
            let io = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
            wr.write_record(["metric", "m", "value"]).map_err(io)?;
            for (metric, m, value) in &rows {
                let m = m.map(|m| m.to_string()).unwrap_or_default();
                wr.write_record([metric.as_str(), &m, &format!("{value:?}")])
                    .map_err(io)?;
            }
            wr.flush()?;
            Ok(())
        };
        write().map_err(|e| classify(e, EXIT_DATA))?;
    }
    Ok(())
}

/// Parse arguments, run, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let res = match &cli.command {
        Command::QuartetBench(a) => cmd_quartet_bench(a),
        Command::TreeBench(a) => cmd_tree_bench(a),
        Command::Build(a) => cmd_build(a),
        Command::Diagnose(a) => cmd_diagnose(a),
    };
    match res {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
