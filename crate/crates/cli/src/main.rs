//! `bigsel`: false-discovery-rate controlled variable selection on designs
//! larger than RAM, plus the simulation, benchmark and sizing tools around it.

mod manifest;

use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context};
use bigsel::alloc::CountingAllocator;
use bigsel::dummy::{apply_permutation, build_plan, gen_reference, qq_alignment, DummyKind, DummyStrategy};
use bigsel::import::{center, import_csv, is_standardized, read_vector};
use bigsel::matstore::{mean_sd, write_matrix, AccessMode, ColumnSource, DenseMatrix, StoredMatrix, MAGIC};
use bigsel::simbench::{
    run_monte_carlo, run_scaling_bench, write_scaling_csv, write_trials_csv, ScalingConfig, SelectorSettings,
    SimConfig, Variant,
};
use bigsel::sizing::{feasibility, gib, parse_bytes, Dims};
use bigsel::trex::{Backend, Selector, TRexConfig};
use bigsel::{Error, ErrorClass};
use clap::{Args, Parser, Subcommand};
use serde::{Serialize, Serializer};

use manifest::RunManifest;

#[global_allocator]
static GLOBAL: CountingAllocator = CountingAllocator;

const DESIGN_COPY: &str = "design.fbm";
const STANDARDIZED_TOL: f64 = 1e-8;

#[derive(Parser)]
#[command(name = "bigsel", version, about = "FDR-controlled variable selection for out-of-core designs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the calibrated selector on a design and response.
    Select(SelectArgs),
    /// Estimate RAM and disk needs of each storage mode.
    Feasibility(FeasibilityArgs),
    /// Monte Carlo FDR/TPR study on the sparse linear Gaussian model.
    Simulate(SimulateArgs),
    /// Time and memory scaling across problem sizes.
    Bench(BenchArgs),
    /// Compare permuted dummies against fresh Gaussian ones.
    ValidateDummies(ValidateArgs),
    /// Convert a numeric CSV (one sample per row) to the binary matrix format.
    Import(ImportArgs),
}

/// Number of dummies: `auto` (10 per variable), `p`, `<m>p`, or a count.
#[derive(Debug, Clone, Copy, PartialEq)]
enum DummyCount {
    PerVariable(usize),
    Fixed(usize),
}

impl DummyCount {
    fn resolve(self, p: usize) -> usize {
        match self {
            DummyCount::PerVariable(m) => m * p,
            DummyCount::Fixed(l) => l,
        }
    }
}

impl FromStr for DummyCount {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let positive = |m: usize| {
            if m == 0 {
                Err("the dummy count must be positive".to_string())
            } else {
                Ok(m)
            }
        };
        if s == "auto" {
            return Ok(DummyCount::PerVariable(10));
        }
        if let Some(m) = s.strip_suffix('p') {
            let m = if m.is_empty() { 1 } else { parse_count(m)? };
            return positive(m).map(DummyCount::PerVariable);
        }
        parse_count(s).and_then(positive).map(DummyCount::Fixed)
    }
}

impl fmt::Display for DummyCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DummyCount::PerVariable(1) => f.write_str("p"),
            DummyCount::PerVariable(m) => write!(f, "{m}p"),
            DummyCount::Fixed(l) => write!(f, "{l}"),
        }
    }
}

impl Serialize for DummyCount {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Accepts `1000`, `1e5` or `1_000`.
fn parse_count(s: &str) -> Result<usize, String> {
    let clean = s.trim().replace('_', "");
    if let Ok(v) = clean.parse::<usize>() {
        return Ok(v);
    }
    match clean.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < 1e18 => Ok(v as usize),
        _ => Err(format!("{s:?} is not a non-negative integer")),
    }
}

fn parse_kind(s: &str) -> Result<DummyKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_size(s: &str) -> Result<u64, String> {
    parse_bytes(s).ok_or_else(|| format!("{s:?} is not a size (e.g. 64G, 512M, 1000000)"))
}

/// Experiment indices given as `2-10` or `2,3,5`.
#[derive(Debug, Clone, Serialize)]
#[serde(transparent)]
struct Experiments(Vec<usize>);

impl FromStr for Experiments {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let list: Vec<usize> = if let Some((a, b)) = s.split_once('-') {
            let (a, b) = (parse_count(a)?, parse_count(b)?);
            if a > b {
                return Err(format!("bad experiment range {s:?}"));
            }
            (a..=b).collect()
        } else {
            s.split(',').map(parse_count).collect::<Result<_, _>>()?
        };
        if list.contains(&0) {
            return Err("experiments are numbered from 1".into());
        }
        Ok(Experiments(list))
    }
}

#[derive(Args, Serialize)]
struct SelectArgs {
    /// Design matrix: binary `.fbm` file or numeric CSV (imported first).
    #[arg(long)]
    x: PathBuf,
    /// Response vector, one value per line.
    #[arg(long)]
    y: PathBuf,
    /// Target FDR level.
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Random experiments.
    #[arg(long, default_value_t = 20)]
    k: usize,
    /// Dummies per experiment: auto (= 10p), p, <m>p or a count.
    #[arg(long, default_value = "auto")]
    l: DummyCount,
    /// Dummy strategy: fresh, s1 or s2.
    #[arg(long, default_value = "fresh", value_parser = parse_kind)]
    strategy: DummyKind,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Holds dummy files, checkpoints and calibration progress.
    #[arg(long, env = "BIGSEL_WORKDIR", default_value = "bigsel-work")]
    workdir: PathBuf,
    /// Selection result JSON.
    #[arg(long, default_value = "selection.json")]
    out: PathBuf,
    /// Run manifest path [default: <out stem>.manifest.json].
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Continue an interrupted calibration found in the working directory.
    #[arg(long)]
    resume: bool,
    /// Parallel experiments (fresh dummies only).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Cap on the number of included dummies T.
    #[arg(long)]
    t_max: Option<usize>,
    /// Drop variables whose coefficient crosses zero (lasso path).
    #[arg(long)]
    lasso: bool,
    /// Keep every enlarged matrix in RAM instead of on disk.
    #[arg(long)]
    in_memory: bool,
}

#[derive(Args, Serialize)]
struct FeasibilityArgs {
    #[arg(long, value_parser = parse_count)]
    n: usize,
    #[arg(long, value_parser = parse_count)]
    p: usize,
    #[arg(long, default_value = "auto")]
    l: DummyCount,
    #[arg(long, default_value_t = 20)]
    k: usize,
    /// Report only this dummy strategy next to the in-memory mode.
    #[arg(long, value_parser = parse_kind)]
    strategy: Option<DummyKind>,
    /// RAM available, e.g. 64G.
    #[arg(long, value_parser = parse_size)]
    ram_budget: Option<u64>,
    /// Disk available, e.g. 2T.
    #[arg(long, value_parser = parse_size)]
    disk_budget: Option<u64>,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    #[arg(long, default_value_t = 150, value_parser = parse_count)]
    n: usize,
    #[arg(long, default_value_t = 300, value_parser = parse_count)]
    p: usize,
    /// True actives.
    #[arg(long, default_value_t = 10)]
    p1: usize,
    /// Coefficient of every true active.
    #[arg(long, default_value_t = 1.0)]
    coeff: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.25,0.5,1,2,5,10")]
    snr: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[arg(long, default_value = "auto")]
    l: DummyCount,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Pipelines to compare: reference, big, dp-s1, dp-s2.
    #[arg(long, value_delimiter = ',', default_value = "big,dp-s1,dp-s2", value_parser = parse_variant)]
    variants: Vec<Variant>,
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long)]
    lasso: bool,
    #[arg(long, env = "BIGSEL_WORKDIR", default_value = "bigsel-work")]
    workdir: PathBuf,
    /// Receives mc_trials.csv, mc_summary.json and manifest.json.
    #[arg(long, default_value = "sim-out")]
    out_dir: PathBuf,
}

#[derive(Args, Serialize)]
struct BenchArgs {
    #[arg(long, default_value_t = 100, value_parser = parse_count)]
    n: usize,
    /// Numbers of variables, ascending.
    #[arg(long, value_delimiter = ',', default_value = "1e3,1e4,1e5", value_parser = parse_count)]
    p: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    p1: usize,
    #[arg(long, default_value_t = 1.0)]
    coeff: f64,
    #[arg(long, default_value_t = 1.0)]
    snr: f64,
    /// Target FDR level.
    #[arg(long, default_value_t = 0.2)]
    tfdr: f64,
    #[arg(long, default_value_t = 20)]
    k: usize,
    /// Dummies per point: p, <m>p or auto; fixed counts are not allowed here.
    #[arg(long, default_value = "p")]
    l: DummyCount,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "reference,big,dp-s1,dp-s2", value_parser = parse_variant)]
    variants: Vec<Variant>,
    /// Skip points whose dummy files would exceed this, e.g. 50G.
    #[arg(long, value_parser = parse_size)]
    disk_budget: Option<u64>,
    #[arg(long, env = "BIGSEL_WORKDIR", default_value = "bigsel-work")]
    workdir: PathBuf,
    /// Receives scaling.csv and manifest.json.
    #[arg(long, default_value = "bench-out")]
    out_dir: PathBuf,
}

#[derive(Args, Serialize)]
struct ValidateArgs {
    /// Permutation strategy: s1 or s2.
    #[arg(long, value_parser = parse_kind)]
    strategy: DummyKind,
    #[arg(long, default_value_t = 100, value_parser = parse_count)]
    n: usize,
    #[arg(long, default_value_t = 200, value_parser = parse_count)]
    l: usize,
    /// Experiments to pool, as a range `2-10` or a list `2,3,5`.
    #[arg(long, default_value = "2-10")]
    experiments: Experiments,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, env = "BIGSEL_WORKDIR", default_value = "bigsel-work")]
    workdir: PathBuf,
    /// Receives qq_<strategy>.csv and manifest.json.
    #[arg(long, default_value = "qq-out")]
    out_dir: PathBuf,
}

#[derive(Args, Serialize)]
struct ImportArgs {
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Keep the raw values instead of standardizing each column.
    #[arg(long)]
    raw: bool,
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::Select(_) => "select",
            Cmd::Feasibility(_) => "feasibility",
            Cmd::Simulate(_) => "simulate",
            Cmd::Bench(_) => "bench",
            Cmd::ValidateDummies(_) => "validate-dummies",
            Cmd::Import(_) => "import",
        }
    }

    fn manifest_path(&self) -> Option<PathBuf> {
        match self {
            Cmd::Select(a) => Some(a.manifest.clone().unwrap_or_else(|| sibling(&a.out, "manifest.json"))),
            Cmd::Feasibility(_) => None,
            Cmd::Simulate(a) => Some(a.out_dir.join("manifest.json")),
            Cmd::Bench(a) => Some(a.out_dir.join("manifest.json")),
            Cmd::ValidateDummies(a) => Some(a.out_dir.join("manifest.json")),
            Cmd::Import(a) => Some(sibling(&a.out, "manifest.json")),
        }
    }
}

/// `dir/result.json` → `dir/result.<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Error::Argument(msg.into()).into()
}

fn exit_code(e: &anyhow::Error) -> i32 {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<Error>() {
            return match err.class() {
                ErrorClass::Usage => 2,
                ErrorClass::Storage => 3,
                ErrorClass::Reproducibility => 4,
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return 3;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut manifest = RunManifest::new(cli.cmd.name(), cli.cmd.manifest_path());
    let result = match &cli.cmd {
        Cmd::Select(a) => select(a, &mut manifest),
        Cmd::Feasibility(a) => feasibility_cmd(a, &mut manifest),
        Cmd::Simulate(a) => simulate(a, &mut manifest),
        Cmd::Bench(a) => bench(a, &mut manifest),
        Cmd::ValidateDummies(a) => validate_dummies(a, &mut manifest),
        Cmd::Import(a) => import(a, &mut manifest),
    };
    let code = result.as_ref().err().map_or(0, exit_code);
    if let Err(e) = &result {
        eprintln!("error: {e:#}");
    }
    match manifest.finish(&result, code) {
        Ok(Some(path)) => eprintln!("manifest: {}", path.display()),
        Ok(None) => {}
        Err(e) => eprintln!("warning: manifest not written: {e:#}"),
    }
    ExitCode::from(code as u8)
}

fn is_matrix_file(path: &Path) -> anyhow::Result<bool> {
    let mut file = File::open(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut head = [0u8; 8];
    Ok(file.read_exact(&mut head).is_ok() && head == MAGIC)
}

/// Opens the design in the form the selector needs: a standardized binary
/// matrix. CSV input and unstandardized binaries are converted into the
/// working directory; the input file itself is never modified.
fn prepare_design(x: &Path, workdir: &Path) -> anyhow::Result<StoredMatrix> {
    let copy = workdir.join(DESIGN_COPY);
    let same_file = |a: &Path, b: &Path| match (a.canonicalize(), b.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    };
    if !is_matrix_file(x)? {
        eprintln!("importing {} into {}", x.display(), copy.display());
        return Ok(import_csv(x, &copy, true)?);
    }
    let design = StoredMatrix::open(x, AccessMode::ReadOnly)?;
    if is_standardized(&design, STANDARDIZED_TOL)? {
        return Ok(design);
    }
    if same_file(x, &copy) {
        return Err(usage(format!(
            "{} is not standardized and is the working copy itself; pass the original input",
            x.display()
        )));
    }
    eprintln!("standardizing the columns of {} into {}", x.display(), copy.display());
    let mut out = write_matrix(&design, &copy)?;
    let p = out.n_cols();
    bigsel::matstore::standardize_columns(&mut out, 0..p)?;
    out.flush()?;
    Ok(out)
}

fn select(a: &SelectArgs, m: &mut RunManifest) -> anyhow::Result<()> {
    m.echo(a);
    std::fs::create_dir_all(&a.workdir).map_err(|e| Error::Io {
        path: a.workdir.clone(),
        source: e,
    })?;
    m.input(&a.x)?;
    m.input(&a.y)?;
    let design = m.stage("prepare design", || prepare_design(&a.x, &a.workdir))?;
    let mut y = read_vector(&a.y)?;
    let (n, p) = (design.n_rows(), design.n_cols());
    if y.len() != n {
        return Err(usage(format!("--y has {} values but --x has {n} rows", y.len())));
    }
    center(&mut y);

    let l = a.l.resolve(p);
    let strategy = DummyStrategy::new(a.strategy, l, a.seed)?;
    let mut cfg = TRexConfig::new(a.alpha, a.k, strategy, &a.workdir);
    cfg.t_max = a.t_max;
    cfg.lasso = a.lasso;
    cfg.jobs = a.jobs;
    cfg.resume = a.resume;
    if a.in_memory {
        cfg.backend = Backend::InMemory;
    }
    if a.jobs > 1 && cfg.effective_jobs() == 1 {
        eprintln!(
            "note: {} dummies share one working block, running experiments with --jobs 1",
            a.strategy
        );
    }
    eprintln!("n = {n}, p = {p}, L = {l}, K = {}, strategy {}", a.k, a.strategy);

    let cal = m.stage("calibrate", || Ok(Selector::new(cfg, &design, &y)?.calibrate()?))?;
    m.stats = Some(serde_json::to_value(&cal.stats)?);
    let body = serde_json::to_string_pretty(&cal.result)? + "\n";
    write_file(&a.out, &body)?;
    m.output(&a.out)?;

    let r = &cal.result;
    println!(
        "selected {} of {p} variables at v* = {}, T* = {} ({:?})",
        r.selected.len(),
        r.v_star,
        r.t_star,
        r.stop_reason
    );
    println!("result: {}", a.out.display());
    Ok(())
}

fn write_file(path: &Path, body: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, body).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn feasibility_cmd(a: &FeasibilityArgs, m: &mut RunManifest) -> anyhow::Result<()> {
    m.echo(a);
    if a.n == 0 || a.p == 0 || a.k == 0 {
        return Err(usage("--n, --p and --k must be positive"));
    }
    let dims = Dims {
        n: a.n as u64,
        p: a.p as u64,
        n_dummies: a.l.resolve(a.p) as u64,
        experiments: a.k as u64,
    };
    let mut report = feasibility(dims, a.ram_budget, a.disk_budget);
    if let Some(kind) = a.strategy {
        let keep = format!("mapped-{kind}");
        report.modes.retain(|r| r.mode == "in-memory" || r.mode == keep);
    }
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
        return Ok(());
    }
    let budget = |b: Option<u64>| b.map_or("none".to_string(), |b| format!("{:.2} GiB", gib(b)));
    println!(
        "n = {}, p = {}, L = {}, K = {}",
        dims.n, dims.p, dims.n_dummies, dims.experiments
    );
    println!(
        "dense X: {} bytes ({:.2} GiB); budgets: RAM {}, disk {}",
        report.dense_x_bytes,
        gib(report.dense_x_bytes),
        budget(a.ram_budget),
        budget(a.disk_budget)
    );
    println!("{:<14} {:>14} {:>14}  verdict", "mode", "RAM GiB", "disk GiB");
    for r in &report.modes {
        println!(
            "{:<14} {:>14.2} {:>14.2}  {}",
            r.mode,
            gib(r.ram_bytes),
            gib(r.disk_bytes),
            if r.feasible { "go" } else { "no-go" }
        );
    }
    Ok(())
}

fn simulate(a: &SimulateArgs, m: &mut RunManifest) -> anyhow::Result<()> {
    m.echo(a);
    if a.snr.is_empty() || a.variants.is_empty() {
        return Err(usage("--snr and --variants need at least one value"));
    }
    let sim = SimConfig {
        n: a.n,
        p: a.p,
        p1: a.p1,
        coeff: a.coeff,
        snr: a.snr[0],
        seed: a.seed,
        trials: a.trials,
    };
    let settings = SelectorSettings {
        alpha: a.alpha,
        experiments: a.k,
        n_dummies: a.l.resolve(a.p),
        t_max: a.t_max,
        lasso: a.lasso,
    };
    let total = a.snr.len() * a.trials * a.variants.len();
    let mut done = 0usize;
    let summary = m.stage("monte carlo", || {
        Ok(run_monte_carlo(&sim, &settings, &a.snr, &a.variants, &a.workdir, |t| {
            done += 1;
            if let Some(err) = &t.error {
                eprintln!("trial {} {} snr {}: {err}", t.trial, t.variant.name(), t.snr);
            }
            if done % 50 == 0 || done == total {
                eprintln!("{done}/{total} runs");
            }
        })?)
    })?;
    let trials_csv = a.out_dir.join("mc_trials.csv");
    let summary_json = a.out_dir.join("mc_summary.json");
    write_file(&summary_json, &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    write_trials_csv(&trials_csv, &summary.trials)?;
    m.output(&trials_csv)?;
    m.output(&summary_json)?;

    println!(
        "{:<10} {:>6} {:>9} {:>8} {:>9} {:>8} {:>6}",
        "variant", "snr", "mean FDP", "se", "mean TPP", "se", "fails"
    );
    for r in &summary.rows {
        println!(
            "{:<10} {:>6} {:>9.4} {:>8.4} {:>9.4} {:>8.4} {:>6}",
            r.variant.name(),
            r.snr,
            r.mean_fdp,
            r.se_fdp,
            r.mean_tpp,
            r.se_tpp,
            r.failures
        );
    }
    Ok(())
}

fn bench(a: &BenchArgs, m: &mut RunManifest) -> anyhow::Result<()> {
    m.echo(a);
    let DummyCount::PerVariable(ratio) = a.l else {
        return Err(usage("--l for bench must scale with p: p, <m>p or auto"));
    };
    let cfg = ScalingConfig {
        n: a.n,
        p_list: a.p.clone(),
        p1: a.p1,
        coeff: a.coeff,
        snr: a.snr,
        seed: a.seed,
        alpha: a.tfdr,
        experiments: a.k,
        dummy_ratio: ratio,
        t_max: a.t_max,
        variants: a.variants.clone(),
        disk_budget: a.disk_budget,
    };
    println!(
        "{:<10} {:>9} {:>10} {:>14} {:>14} {:>14} {:>5}",
        "variant", "p", "seconds", "alloc bytes", "peak RSS", "disk bytes", "|A|"
    );
    let rows = m.stage("scaling", || {
        Ok(run_scaling_bench(&cfg, &a.workdir, |r| {
            if let Some(why) = &r.skipped {
                println!("{:<10} {:>9} skipped: {why}", r.variant.name(), r.p);
            } else {
                println!(
                    "{:<10} {:>9} {:>10.2} {:>14} {:>14} {:>14} {:>5}",
                    r.variant.name(),
                    r.p,
                    r.seconds,
                    r.cum_alloc_bytes,
                    r.peak_rss_bytes.map_or("-".into(), |b| b.to_string()),
                    r.disk_bytes,
                    r.n_selected
                );
            }
        })?)
    })?;
    let csv = a.out_dir.join("scaling.csv");
    if let Some(dir) = csv.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    write_scaling_csv(&csv, &rows)?;
    m.output(&csv)?;
    Ok(())
}

fn validate_dummies(a: &ValidateArgs, m: &mut RunManifest) -> anyhow::Result<()> {
    m.echo(a);
    if !a.strategy.is_permutation() {
        bail!(usage("validate-dummies compares permuted dummies; use --strategy s1 or s2"));
    }
    let strategy = DummyStrategy::new(a.strategy, a.l, a.seed)?;
    std::fs::create_dir_all(&a.workdir).map_err(|e| Error::Io {
        path: a.workdir.clone(),
        source: e,
    })?;
    let ref_path = a.workdir.join(format!("qq_reference_{}.fbm", a.strategy));
    let reference = gen_reference(&ref_path, a.n, a.l, strategy.reference_seed())?;
    let report = m.stage("qq alignment", || Ok(qq_alignment(&reference.matrix, &a.experiments.0, &strategy)?))?;

    let (mut worst_mean, mut worst_var) = (0.0f64, 0.0f64);
    let mut block = DenseMatrix::zeros(a.n, a.l)?;
    for &k in &a.experiments.0 {
        let plan = build_plan(k, a.n, a.l, &strategy)?;
        apply_permutation(&plan, &reference.matrix, &mut block)?;
        for j in 0..a.l {
            let (mean, sd) = mean_sd(block.column(j));
            worst_mean = worst_mean.max(mean.abs());
            worst_var = worst_var.max((sd * sd - 1.0).abs());
        }
    }
    drop(reference);
    let _ = std::fs::remove_file(&ref_path);

    let csv = a.out_dir.join(format!("qq_{}.csv", a.strategy));
    let mut buf = Vec::new();
    report.write_csv(&mut buf).context("formatting quantiles")?;
    write_file(&csv, &String::from_utf8_lossy(&buf))?;
    m.output(&csv)?;
    m.stats = Some(serde_json::json!({
        "bulk_deviation": report.bulk_deviation,
        "max_abs_mean": worst_mean,
        "max_abs_var_minus_one": worst_var,
    }));
    println!("strategy {}, n = {}, L = {}, experiments {:?}", a.strategy, a.n, a.l, a.experiments.0);
    println!("bulk relative quantile deviation (5th-95th pct): {:.4}", report.bulk_deviation);
    println!("max |column mean|: {worst_mean:.2e}; max |column variance - 1|: {worst_var:.2e}");
    println!("quantiles: {}", csv.display());
    Ok(())
}

fn import(a: &ImportArgs, m: &mut RunManifest) -> anyhow::Result<()> {
    m.echo(a);
    m.input(&a.csv)?;
    let out = m.stage("import", || Ok(import_csv(&a.csv, &a.out, !a.raw)?))?;
    println!("{} x {} matrix written to {}", out.n_rows(), out.n_cols(), a.out.display());
    drop(out);
    m.output(&a.out)?;
    Ok(())
}
