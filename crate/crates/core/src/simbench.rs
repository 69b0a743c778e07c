//! Synthetic data, Monte Carlo evaluation and scaling benchmarks.
//!
//! Data follow the sparse linear Gaussian model `y = Xβ + ε`: `X` has i.i.d.
//! standard normal entries (then standardized), the first `p1` coefficients
//! equal `coeff` and the rest are zero, and the noise variance is set so that
//! the empirical `Var[Xβ] / σ²` equals the requested SNR.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::alloc::MemoryProbe;
use crate::dummy::{DummyKind, DummyStrategy};
use crate::error::{Error, Result};
use crate::matstore::{available_space, mean_sd, standardize_columns, ColumnSource, StoredMatrix};
use crate::rng::{derive_seed, domain, NormalStream};
use crate::sizing::Dims;
use crate::trex::{Backend, Calibration, Selector, TRexConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    /// Number of true actives.
    pub p1: usize,
    pub coeff: f64,
    pub snr: f64,
    pub seed: u64,
    pub trials: usize,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p1 == 0 || self.p1 > self.p {
            return Err(Error::Argument(format!(
                "the number of true actives must lie in [1, p = {}], got {}",
                self.p, self.p1
            )));
        }
        if !(self.snr > 0.0) || !self.snr.is_finite() {
            return Err(Error::Argument(format!("SNR must be positive, got {}", self.snr)));
        }
        if self.n < 2 {
            return Err(Error::Argument("at least two observations are required".into()));
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct Dataset {
    pub x: StoredMatrix,
    /// Centered response.
    pub y: Vec<f64>,
    /// Indices of the non-zero coefficients.
    pub truth: Vec<usize>,
    /// Empirical variance of `Xβ`.
    pub signal_variance: f64,
    /// `σ²` used for the noise.
    pub noise_variance: f64,
}

/// Draws a dataset and writes its design to `path`.
pub fn gen_dataset(cfg: &SimConfig, path: impl AsRef<Path>) -> Result<Dataset> {
    cfg.validate()?;
    let (n, p) = (cfg.n, cfg.p);
    let mut x = StoredMatrix::create_overwrite(path, n, p)?;
    crate::dummy::fill_gaussian(&mut x, 0..p, derive_seed(cfg.seed, domain::DESIGN, 0))?;
    standardize_columns(&mut x, 0..p)?;
    x.flush()?;

    let mut signal = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..cfg.p1 {
        x.read_column(j, &mut col)?;
        for (s, v) in signal.iter_mut().zip(&col) {
            *s += cfg.coeff * v;
        }
    }
    let (_, sd) = mean_sd(&signal);
    let signal_variance = sd * sd;
    let noise_variance = signal_variance / cfg.snr;
    let sigma = noise_variance.sqrt();
    let mut noise = NormalStream::new(derive_seed(cfg.seed, domain::NOISE, 0));
    let mut y: Vec<f64> = signal.iter().map(|s| s + sigma * noise.next()).collect();
    let mean = y.iter().sum::<f64>() / n as f64;
    y.iter_mut().for_each(|v| *v -= mean);

    Ok(Dataset {
        x,
        y,
        truth: (0..cfg.p1).collect(),
        signal_variance,
        noise_variance,
    })
}

/// Realized false discovery and true positive proportions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelectionQuality {
    pub fdp: f64,
    pub tpp: f64,
}

pub fn trial_metrics(selected: &[usize], truth: &[usize]) -> SelectionQuality {
    let hits = selected.iter().filter(|j| truth.contains(j)).count();
    SelectionQuality {
        fdp: (selected.len() - hits) as f64 / selected.len().max(1) as f64,
        tpp: hits as f64 / truth.len().max(1) as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Dense in-memory pipeline with fresh dummies.
    Reference,
    /// Mapped pipeline with one enlarged file per experiment.
    Big,
    DpS1,
    DpS2,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Reference, Variant::Big, Variant::DpS1, Variant::DpS2];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Reference => "reference",
            Variant::Big => "big",
            Variant::DpS1 => "dp-s1",
            Variant::DpS2 => "dp-s2",
        }
    }

    pub fn kind(self) -> DummyKind {
        match self {
            Variant::Reference | Variant::Big => DummyKind::FreshGaussian,
            Variant::DpS1 => DummyKind::PermuteS1,
            Variant::DpS2 => DummyKind::PermuteS2,
        }
    }

    pub fn backend(self) -> Backend {
        match self {
            Variant::Reference => Backend::InMemory,
            _ => Backend::Mapped,
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown variant {s:?} (reference, big, dp-s1, dp-s2)")))
    }
}

/// Selector settings shared by every trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelectorSettings {
    pub alpha: f64,
    pub experiments: usize,
    pub n_dummies: usize,
    pub t_max: Option<usize>,
    pub lasso: bool,
}

impl SelectorSettings {
    fn config(&self, variant: Variant, seed: u64, workdir: &Path) -> Result<TRexConfig> {
        let strategy = DummyStrategy::new(variant.kind(), self.n_dummies, seed)?;
        let mut cfg = TRexConfig::new(self.alpha, self.experiments, strategy, workdir);
        cfg.t_max = self.t_max;
        cfg.lasso = self.lasso;
        cfg.backend = variant.backend();
        Ok(cfg)
    }
}

fn run_variant(
    settings: &SelectorSettings,
    variant: Variant,
    seed: u64,
    workdir: &Path,
    data: &Dataset,
) -> Result<Calibration> {
    let cfg = settings.config(variant, seed, workdir)?;
    let out = Selector::new(cfg, &data.x, &data.y)?.calibrate();
    crate::trex::clear_workdir(workdir)?;
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McTrial {
    pub trial: usize,
    pub variant: Variant,
    pub snr: f64,
    pub fdp: Option<f64>,
    pub tpp: Option<f64>,
    pub seconds: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McRow {
    pub variant: Variant,
    pub snr: f64,
    pub trials: usize,
    pub failures: usize,
    pub mean_fdp: f64,
    pub se_fdp: f64,
    pub mean_tpp: f64,
    pub se_tpp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub sim: SimConfig,
    pub selector: SelectorSettings,
    pub rows: Vec<McRow>,
    #[serde(skip)]
    pub trials: Vec<McTrial>,
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    match values.len() {
        0 => (f64::NAN, f64::NAN),
        1 => (values[0], f64::NAN),
        m => {
            let (mean, sd) = mean_sd(values);
            (mean, sd / (m as f64).sqrt())
        }
    }
}

/// Runs `sim.trials` trials per SNR level and variant. Each trial draws one
/// dataset per SNR (seeded by trial and SNR index) shared by all variants.
/// Failed trials are recorded and skipped in the averages.
pub fn run_monte_carlo(
    sim: &SimConfig,
    settings: &SelectorSettings,
    snr_list: &[f64],
    variants: &[Variant],
    workdir: &Path,
    mut on_trial: impl FnMut(&McTrial),
) -> Result<McSummary> {
    if sim.trials == 0 {
        return Err(Error::Argument("at least one trial is required".into()));
    }
    std::fs::create_dir_all(workdir).map_err(|e| Error::io(workdir, e))?;
    let run_dir = workdir.join("run");
    let x_path = workdir.join("design.fbm");
    let mut trials = Vec::new();
    for (si, &snr) in snr_list.iter().enumerate() {
        for trial in 0..sim.trials {
            let seed = derive_seed(sim.seed, domain::TRIAL, ((si as u64) << 32) | trial as u64);
            let cfg = SimConfig { snr, seed, ..*sim };
            let data = gen_dataset(&cfg, &x_path)?;
            for &variant in variants {
                let start = Instant::now();
                let outcome = run_variant(settings, variant, seed, &run_dir, &data);
                let seconds = start.elapsed().as_secs_f64();
                let record = match outcome {
                    Ok(c) => {
                        let q = trial_metrics(&c.result.selected, &data.truth);
                        McTrial {
                            trial,
                            variant,
                            snr,
                            fdp: Some(q.fdp),
                            tpp: Some(q.tpp),
                            seconds,
                            error: None,
                        }
                    }
                    Err(e) => McTrial {
                        trial,
                        variant,
                        snr,
                        fdp: None,
                        tpp: None,
                        seconds,
                        error: Some(e.to_string()),
                    },
                };
                on_trial(&record);
                trials.push(record);
            }
        }
    }
    let _ = std::fs::remove_file(&x_path);

    let mut rows = Vec::new();
    for &variant in variants {
        for &snr in snr_list {
            let group: Vec<&McTrial> = trials
                .iter()
                .filter(|t| t.variant == variant && t.snr == snr)
                .collect();
            let fdp: Vec<f64> = group.iter().filter_map(|t| t.fdp).collect();
            let tpp: Vec<f64> = group.iter().filter_map(|t| t.tpp).collect();
            let (mean_fdp, se_fdp) = mean_se(&fdp);
            let (mean_tpp, se_tpp) = mean_se(&tpp);
            rows.push(McRow {
                variant,
                snr,
                trials: group.len(),
                failures: group.len() - fdp.len(),
                mean_fdp,
                se_fdp,
                mean_tpp,
                se_tpp,
            });
        }
    }
    Ok(McSummary {
        sim: *sim,
        selector: *settings,
        rows,
        trials,
    })
}

/// Writes `mc_trials.csv`.
pub fn write_trials_csv(path: impl AsRef<Path>, trials: &[McTrial]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["trial", "variant", "snr", "fdp", "tpp", "seconds", "error"])
        .map_err(|e| csv_error(path, e))?;
    for t in trials {
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        w.write_record([
            t.trial.to_string(),
            t.variant.name().to_string(),
            t.snr.to_string(),
            opt(t.fdp),
            opt(t.tpp),
            format!("{:.6}", t.seconds),
            t.error.clone().unwrap_or_default(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingConfig {
    pub n: usize,
    pub p_list: Vec<usize>,
    pub p1: usize,
    pub coeff: f64,
    pub snr: f64,
    pub seed: u64,
    pub alpha: f64,
    pub experiments: usize,
    /// Dummies per original variable (`L = ratio · p`).
    pub dummy_ratio: usize,
    pub t_max: Option<usize>,
    pub variants: Vec<Variant>,
    /// Disk bytes a single point may use; `None` uses the free space.
    pub disk_budget: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub variant: Variant,
    pub p: usize,
    pub seconds: f64,
    pub cum_alloc_bytes: u64,
    pub peak_rss_bytes: Option<u64>,
    /// Matrix bytes on disk (design included); zero for the in-memory pipeline.
    pub disk_bytes: u64,
    pub checkpoint_bytes: u64,
    pub n_selected: usize,
    pub t_star: usize,
    pub skipped: Option<String>,
}

/// Times one calibration per `(p, variant)` on a shared dataset, one
/// variant at a time.
pub fn run_scaling_bench(
    cfg: &ScalingConfig,
    workdir: &Path,
    mut on_row: impl FnMut(&ScalingRow),
) -> Result<Vec<ScalingRow>> {
    if cfg.p_list.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Argument("the p list must be sorted ascending".into()));
    }
    std::fs::create_dir_all(workdir).map_err(|e| Error::io(workdir, e))?;
    let run_dir: PathBuf = workdir.join("run");
    let x_path = workdir.join("design.fbm");
    let mut rows = Vec::new();
    for &p in &cfg.p_list {
        let n_dummies = cfg.dummy_ratio * p;
        let sim = SimConfig {
            n: cfg.n,
            p,
            p1: cfg.p1.min(p),
            coeff: cfg.coeff,
            snr: cfg.snr,
            seed: derive_seed(cfg.seed, domain::TRIAL, p as u64),
            trials: 1,
        };
        let data = gen_dataset(&sim, &x_path)?;
        let settings = SelectorSettings {
            alpha: cfg.alpha,
            experiments: cfg.experiments,
            n_dummies,
            t_max: cfg.t_max,
            lasso: false,
        };
        let dims = Dims {
            n: cfg.n as u64,
            p: p as u64,
            n_dummies: n_dummies as u64,
            experiments: cfg.experiments as u64,
        };
        for &variant in &cfg.variants {
            let needed = match variant.backend() {
                Backend::InMemory => 0,
                Backend::Mapped => dims.disk_bytes(variant.kind()) - crate::sizing::dense_bytes(dims.n, dims.p),
            };
            let budget = cfg.disk_budget.or_else(|| available_space(workdir));
            let mut row = ScalingRow {
                variant,
                p,
                seconds: 0.0,
                cum_alloc_bytes: 0,
                peak_rss_bytes: None,
                disk_bytes: 0,
                checkpoint_bytes: 0,
                n_selected: 0,
                t_star: 0,
                skipped: None,
            };
            if let Some(b) = budget.filter(|&b| needed > b) {
                row.skipped = Some(format!("needs {needed} bytes of disk, budget {b}"));
            } else {
                let probe = MemoryProbe::start();
                let start = Instant::now();
                let outcome = run_variant(&settings, variant, sim.seed, &run_dir, &data);
                row.seconds = start.elapsed().as_secs_f64();
                let mem = probe.finish();
                row.cum_alloc_bytes = mem.cum_alloc_bytes;
                row.peak_rss_bytes = mem.peak_rss_bytes;
                match outcome {
                    Ok(c) => {
                        row.disk_bytes = c.stats.matrix_bytes;
                        row.checkpoint_bytes = c.stats.checkpoint_bytes;
                        row.n_selected = c.result.selected.len();
                        row.t_star = c.result.t_star;
                    }
                    Err(e) => row.skipped = Some(e.to_string()),
                }
            }
            on_row(&row);
            rows.push(row);
        }
        drop(data);
        let _ = std::fs::remove_file(&x_path);
    }
    Ok(rows)
}

/// Writes `scaling.csv`.
pub fn write_scaling_csv(path: impl AsRef<Path>, rows: &[ScalingRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record([
        "variant",
        "p",
        "seconds",
        "cum_alloc_bytes",
        "peak_rss_bytes",
        "disk_bytes",
        "checkpoint_bytes",
        "skipped",
    ])
    .map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record([
            r.variant.name().to_string(),
            r.p.to_string(),
            format!("{:.6}", r.seconds),
            r.cum_alloc_bytes.to_string(),
            r.peak_rss_bytes.map_or(String::new(), |v| v.to_string()),
            r.disk_bytes.to_string(),
            r.checkpoint_bytes.to_string(),
            r.skipped.clone().unwrap_or_default(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim(snr: f64, seed: u64) -> SimConfig {
        SimConfig {
            n: 40,
            p: 25,
            p1: 10,
            coeff: 1.0,
            snr,
            seed,
            trials: 1,
        }
    }

    #[test]
    fn metric_identities() {
        let truth: Vec<usize> = (0..10).collect();
        let q = trial_metrics(&[0, 1, 10], &truth);
        assert!((q.fdp - 1.0 / 3.0).abs() < 1e-15);
        assert!((q.tpp - 0.2).abs() < 1e-15);
        assert_eq!(trial_metrics(&[], &truth), SelectionQuality { fdp: 0.0, tpp: 0.0 });
        assert_eq!(trial_metrics(&truth, &truth), SelectionQuality { fdp: 0.0, tpp: 1.0 });
    }

    #[test]
    fn unit_snr_matches_signal_variance() {
        let dir = tempfile::tempdir().unwrap();
        let d = gen_dataset(&sim(1.0, 3), dir.path().join("x.fbm")).unwrap();
        assert!((d.noise_variance / d.signal_variance - 1.0).abs() < 1e-10);
        assert_eq!(d.truth, (0..10).collect::<Vec<_>>());
        let mean = d.y.iter().sum::<f64>() / d.y.len() as f64;
        assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let a = gen_dataset(&sim(2.0, 9), dir.path().join("a.fbm")).unwrap();
        let b = gen_dataset(&sim(2.0, 9), dir.path().join("b.fbm")).unwrap();
        assert_eq!(a.y, b.y);
        let da = crate::matstore::DenseMatrix::load(&a.x).unwrap();
        let db = crate::matstore::DenseMatrix::load(&b.x).unwrap();
        assert_eq!(da.as_slice(), db.as_slice());
        let c = gen_dataset(&sim(2.0, 10), dir.path().join("c.fbm")).unwrap();
        assert_ne!(a.y, c.y);
    }

    #[test]
    fn too_many_actives_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SimConfig { p1: 30, ..sim(1.0, 1) };
        assert!(matches!(gen_dataset(&cfg, dir.path().join("x.fbm")), Err(Error::Argument(_))));
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("nope".parse::<Variant>().is_err());
    }
}
