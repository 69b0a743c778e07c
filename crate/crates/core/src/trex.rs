//! Calibrated fusion of random experiments.
//!
//! For `T = 1, 2, …` every experiment `k` extends its early-terminating LARS
//! path until `T` dummies are active (resuming from the previous round's
//! checkpoint), the relative occurrence `Φ_T(j)` of every original variable
//! across the `K` candidate sets is tallied, and the false discovery
//! proportion of the selection `{j : Φ_T(j) > v}` is estimated for every
//! voting level `v` of the grid. The loop stops once even the largest
//! non-empty selection exceeds the target level `α`; the final selection is
//! the largest one seen whose estimate stays at or below `α`.
//!
//! Relative occurrences are kept as integer counts and voting levels as
//! integer multiples of `1/(2K)`, so thresholding is exact.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dummy::{
    apply_permutation, build_plan, fresh_dummies, gen_reference, read_digest,
    restore_dummy_block, write_digest, DummyKind, DummyStrategy,
};
use crate::error::{Error, Result};
use crate::matstore::{
    available_space, AccessMode, AugmentedMatrix, BlockDigest, ColumnSource, ColumnStore,
    DenseMatrix, StoredMatrix,
};
use crate::rng::mix64;
use crate::sizing::Dims;
use crate::tlars::{Checkpoint, TLarsOptions, TLarsState};

/// Where the enlarged matrices live during a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    /// Memory-mapped files in the working directory, solver states
    /// checkpointed between rounds.
    Mapped,
    /// Dense matrices rebuilt in RAM for every experiment and round, solver
    /// states kept in memory. Used as the reference pipeline.
    InMemory,
}

#[derive(Debug, Clone)]
pub struct TRexConfig {
    /// Target FDR level `α`.
    pub alpha: f64,
    /// Number of random experiments `K`.
    pub experiments: usize,
    pub strategy: DummyStrategy,
    /// Largest dummy count `T` to try; defaults to `min(L, ⌈n/2⌉)`.
    pub t_max: Option<usize>,
    pub workdir: PathBuf,
    pub lasso: bool,
    /// Worker threads for concurrent experiments (fresh dummies only).
    pub jobs: usize,
    pub backend: Backend,
    /// Continue an interrupted calibration found in `workdir`.
    pub resume: bool,
}

impl TRexConfig {
    pub fn new(alpha: f64, experiments: usize, strategy: DummyStrategy, workdir: impl Into<PathBuf>) -> Self {
        Self {
            alpha,
            experiments,
            strategy,
            t_max: None,
            workdir: workdir.into(),
            lasso: false,
            jobs: 1,
            backend: Backend::Mapped,
            resume: false,
        }
    }

    pub fn n_dummies(&self) -> usize {
        self.strategy.n_dummies
    }

    /// The dummy-count cap in effect for `n` observations.
    pub fn effective_t_max(&self, n: usize) -> usize {
        self.t_max
            .unwrap_or_else(|| self.n_dummies().min(n.div_ceil(2)))
            .max(1)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Argument(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.experiments < 2 {
            return Err(Error::Argument(format!(
                "at least two random experiments are required, got {}",
                self.experiments
            )));
        }
        if let Some(t) = self.t_max {
            if t == 0 || t > self.n_dummies() {
                return Err(Error::Argument(format!(
                    "T_max must lie in [1, L = {}], got {t}",
                    self.n_dummies()
                )));
            }
        }
        if self.jobs == 0 {
            return Err(Error::Argument("jobs must be at least 1".into()));
        }
        if n < 2 {
            return Err(Error::Argument("at least two observations are required".into()));
        }
        Ok(())
    }

    /// Identifies everything a checkpoint depends on. `T_max`, the backend and
    /// the job count are excluded: they do not change any solver state.
    pub fn config_hash(&self, n: usize, p: usize) -> u64 {
        [
            n as u64,
            p as u64,
            self.n_dummies() as u64,
            self.strategy.kind.tag() as u64,
            self.strategy.base_seed,
            self.alpha.to_bits(),
            self.experiments as u64,
            self.lasso as u64,
        ]
        .iter()
        .fold(0x7472_6578_6366_6721, |h, &v| mix64(h ^ v))
    }

    /// Worker threads actually used: permuted dummies share one block, so
    /// their experiments run one at a time.
    pub fn effective_jobs(&self) -> usize {
        if self.strategy.kind.is_permutation() {
            1
        } else {
            self.jobs
        }
    }
}

/// Candidate set `C_k(T)` of one experiment with the dummies removed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub k: usize,
    pub t: usize,
    /// Original-variable indices, ascending.
    pub members: Vec<usize>,
    /// The path ended before reaching `t` dummies.
    pub terminal: bool,
}

impl CandidateSet {
    fn from_state(k: usize, t: usize, state: &TLarsState) -> Self {
        let mut members: Vec<usize> = state.active_originals().collect();
        members.sort_unstable();
        Self {
            k,
            t,
            members,
            terminal: state.terminal,
        }
    }
}

/// Voting grid `{0.5, 0.5 + 1/K, …, 1 − 1/K}` in units of `1/(2K)`.
pub fn voting_grid(experiments: usize) -> Vec<usize> {
    (experiments..=2 * experiments - 2).step_by(2).collect()
}

pub fn level_value(units: usize, experiments: usize) -> f64 {
    units as f64 / (2 * experiments) as f64
}

/// Occurrence counts `Σ_k I_k(j, T)` of every original variable.
pub fn occurrence_counts(sets: &[CandidateSet], p: usize, experiments: usize) -> Result<Vec<u32>> {
    if sets.len() != experiments {
        return Err(Error::Argument(format!(
            "expected {experiments} candidate sets, got {}",
            sets.len()
        )));
    }
    let mut counts = vec![0u32; p];
    let Some(first) = sets.first() else {
        return Ok(counts);
    };
    for s in sets {
        if s.t != first.t {
            return Err(Error::Argument(format!(
                "candidate sets mix dummy counts {} and {}",
                first.t, s.t
            )));
        }
        if first.t == 0 {
            continue;
        }
        for &j in &s.members {
            if j >= p {
                return Err(Error::Argument(format!("candidate index {j} is not an original variable")));
            }
            counts[j] += 1;
        }
    }
    Ok(counts)
}

/// Relative occurrences `Φ_T(j)`; all zero when `T = 0`.
pub fn compute_phi(sets: &[CandidateSet], p: usize, experiments: usize) -> Result<Vec<f64>> {
    let counts = occurrence_counts(sets, p, experiments)?;
    Ok(counts.iter().map(|&c| c as f64 / experiments as f64).collect())
}

/// `{j : Φ(j) > v}`.
pub fn select(phi: &[f64], v: f64) -> Vec<usize> {
    phi.iter()
        .enumerate()
        .filter(|(_, &f)| f > v)
        .map(|(j, _)| j)
        .collect()
}

fn select_counts(counts: &[u32], units: usize) -> impl Iterator<Item = usize> + '_ {
    counts
        .iter()
        .enumerate()
        .filter(move |(_, &c)| 2 * c as usize > units)
        .map(|(j, _)| j)
}

/// Estimates the false discovery proportion of a selection of `n_selected`
/// variables made at dummy count `t`.
pub trait FdpEstimator: Sync {
    fn estimate(&self, n_selected: usize, t: usize, n_dummies: usize, p: usize) -> f64;

    fn name(&self) -> &'static str;
}

/// `T/(L−T+1) · (p − |A|)/max(1, |A|)`, zero for an empty selection.
///
/// The first factor is the expected number of null variables admitted per
/// dummy before the `T`-th dummy enters when nulls and dummies are
/// exchangeable; it scales the count of unselected variables into an
/// expected number of false selections.
#[derive(Debug, Clone, Copy, Default)]
pub struct DummyRatioEstimator;

impl FdpEstimator for DummyRatioEstimator {
    fn estimate(&self, n_selected: usize, t: usize, n_dummies: usize, p: usize) -> f64 {
        if n_selected == 0 {
            return 0.0;
        }
        let ratio = t as f64 / (n_dummies + 1).saturating_sub(t).max(1) as f64;
        ratio * p.saturating_sub(n_selected) as f64 / n_selected as f64
    }

    fn name(&self) -> &'static str {
        "dummy-ratio"
    }
}

/// Default estimate for the selection `{j : Φ(j) > v}`.
pub fn estimate_fdp(phi: &[f64], v: f64, t: usize, n_dummies: usize, p: usize) -> f64 {
    let n_selected = phi.iter().filter(|&&f| f > v).count();
    DummyRatioEstimator.estimate(n_selected, t, n_dummies, p)
}

/// `Φ_T` for every completed round, as integer counts out of `K`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelOccurrenceTable {
    pub experiments: usize,
    /// `counts[T-1][j]`.
    pub counts: Vec<Vec<u32>>,
}

impl RelOccurrenceTable {
    pub fn new(experiments: usize) -> Self {
        Self {
            experiments,
            counts: Vec::new(),
        }
    }

    pub fn rounds(&self) -> usize {
        self.counts.len()
    }

    pub fn phi(&self, t: usize, p: usize) -> Vec<f64> {
        match t {
            0 => vec![0.0; p],
            _ => self.counts[t - 1]
                .iter()
                .map(|&c| c as f64 / self.experiments as f64)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdpRecord {
    pub t: usize,
    pub v: f64,
    pub fdp: f64,
    pub n_selected: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// Every non-empty selection at the last `T` exceeded `α`.
    FdpExceeded,
    TMaxReached,
    /// All solution paths ended before reaching the next dummy count.
    PathsTerminal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub n: usize,
    pub p: usize,
    pub n_dummies: usize,
    pub experiments: usize,
    pub alpha: f64,
    pub strategy: DummyKind,
    pub base_seed: u64,
    pub t_max: usize,
    pub lasso: bool,
    pub estimator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub selected: Vec<usize>,
    pub v_star: f64,
    pub t_star: usize,
    pub stop_reason: StopReason,
    pub fdp_trace: Vec<FdpRecord>,
    pub phi: RelOccurrenceTable,
    pub config: ConfigEcho,
}

/// Run statistics that are not part of the deterministic result.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunStats {
    /// Bytes of matrix files the run keeps on disk, the design included.
    pub matrix_bytes: u64,
    /// Bytes of solver checkpoints and digest sidecars at the end of the run.
    pub checkpoint_bytes: u64,
    pub experiments_run: usize,
    pub lars_steps: usize,
    pub rounds_resumed: usize,
    pub jobs: usize,
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub result: SelectionResult,
    pub stats: RunStats,
}

pub const PROGRESS_FILE: &str = "calibration.json";
pub const REFERENCE_FILE: &str = "dummy_ref.fbm";
pub const BLOCK_FILE: &str = "dummy_block.fbm";

pub fn checkpoint_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("tlars_k{k}.ckpt"))
}

pub fn digest_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("dummies_k{k}.digest"))
}

pub fn enlarged_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("enlarged_k{k}.fbm"))
}

fn owned_file(name: &str) -> bool {
    let numbered = |prefix: &str, suffix: &str| {
        name.strip_prefix(prefix)
            .and_then(|r| r.split_once('.'))
            .is_some_and(|(k, ext)| {
                !k.is_empty() && k.bytes().all(|b| b.is_ascii_digit()) && ext.starts_with(suffix)
            })
    };
    name == PROGRESS_FILE
        || name.starts_with("calibration.json.")
        || name.starts_with(REFERENCE_FILE)
        || name.starts_with(BLOCK_FILE)
        || numbered("tlars_k", "ckpt")
        || numbered("dummies_k", "digest")
        || numbered("enlarged_k", "fbm")
}

/// Removes every file a previous run left in `dir`; other files are kept.
pub fn clear_workdir(dir: &Path) -> Result<()> {
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(Error::io(dir, e)),
    };
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if entry.file_name().to_str().is_some_and(owned_file) {
            let path = entry.path();
            fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

fn file_len(path: &Path) -> u64 {
    fs::metadata(path).map(|m| m.len()).unwrap_or(0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Round {
    t: usize,
    counts: Vec<u32>,
    all_terminal: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Progress {
    config_hash: u64,
    p: usize,
    experiments: usize,
    rounds: Vec<Round>,
}

impl Progress {
    fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(PROGRESS_FILE);
        let tmp = dir.join("calibration.json.tmp");
        let text = serde_json::to_vec(self).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    fn read(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(PROGRESS_FILE);
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| Error::Format(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

/// Shared bookkeeping for running one experiment against some matrix.
struct SolverContext<'a> {
    y: &'a [f64],
    p: usize,
    hash: u64,
    options: TLarsOptions,
    dir: &'a Path,
}

impl SolverContext<'_> {
    /// Restores experiment `k`'s solver from its checkpoint, or starts a new
    /// path at `T = 1`, checking the checkpoint against `digest`.
    fn load<M: ColumnSource + ?Sized>(&self, x: &M, k: usize, t: usize, digest: u64) -> Result<TLarsState> {
        let path = checkpoint_path(self.dir, k);
        if path.exists() {
            let ck = Checkpoint::read(&path)?;
            ck.verify(k, self.hash, digest)?;
            if ck.state.n_rows != x.n_rows() || ck.state.n_total != x.n_cols() {
                return Err(Error::Reproducibility(format!(
                    "checkpoint of experiment {k} was written for a different design"
                )));
            }
            if ck.state.n_dummies_active > t {
                return Err(Error::Reproducibility(format!(
                    "checkpoint of experiment {k} already holds {} dummies, round needs {t}",
                    ck.state.n_dummies_active
                )));
            }
            Ok(ck.state)
        } else if t == 1 {
            TLarsState::init(x, self.y, self.p, self.options)
        } else {
            Err(Error::Reproducibility(format!(
                "checkpoint of experiment {k} is missing at T = {t}"
            )))
        }
    }

    fn advance<M: ColumnSource + ?Sized>(
        &self,
        x: &M,
        k: usize,
        t: usize,
        digest: u64,
    ) -> Result<(CandidateSet, usize)> {
        let mut state = self.load(x, k, t, digest)?;
        let before = state.step_index;
        state.run_until_dummies(x, t)?;
        Checkpoint::with_digest(&state, k, self.hash, digest).write(checkpoint_path(self.dir, k))?;
        Ok((CandidateSet::from_state(k, t, &state), state.step_index - before))
    }
}

enum Runner {
    /// One enlarged file per experiment.
    Enlarged { files: Vec<StoredMatrix>, digests: Vec<BlockDigest> },
    /// One shared dummy block rematerialized per experiment.
    Permuted {
        augmented: AugmentedMatrix,
        reference: StoredMatrix,
    },
    InMemory {
        x: DenseMatrix,
        reference: Option<DenseMatrix>,
        states: Vec<Option<TLarsState>>,
    },
}

/// Drives the random experiments and the calibration loop.
pub struct Selector<'a> {
    cfg: TRexConfig,
    y: &'a [f64],
    n: usize,
    p: usize,
    hash: u64,
    runner: Runner,
    stats: RunStats,
}

fn check_space(dir: &Path, needed: u64) -> Result<()> {
    if let Some(available) = available_space(dir) {
        if available < needed {
            return Err(Error::DiskFull {
                path: dir.to_path_buf(),
                needed,
                available,
            });
        }
    }
    Ok(())
}

impl<'a> Selector<'a> {
    /// Prepares the dummy storage for a run on the standardized design `x`
    /// and centered response `y`.
    pub fn new(cfg: TRexConfig, x: &StoredMatrix, y: &'a [f64]) -> Result<Self> {
        let n = x.n_rows();
        let p = x.n_cols();
        cfg.validate(n)?;
        if y.len() != n {
            return Err(Error::Argument(format!(
                "response has length {}, design has {n} rows",
                y.len()
            )));
        }
        let hash = cfg.config_hash(n, p);
        let dir = cfg.workdir.clone();
        let l = cfg.n_dummies();
        let k_total = cfg.experiments;
        let mut stats = RunStats {
            jobs: cfg.effective_jobs(),
            ..RunStats::default()
        };

        let runner = match cfg.backend {
            Backend::InMemory => {
                if cfg.resume {
                    return Err(Error::Argument("the in-memory backend keeps no checkpoints to resume from".into()));
                }
                let reference = if cfg.strategy.kind.is_permutation() {
                    let mut r = DenseMatrix::zeros(n, l)?;
                    crate::dummy::fill_gaussian(&mut r, 0..l, cfg.strategy.reference_seed())?;
                    Some(r)
                } else {
                    None
                };
                Runner::InMemory {
                    x: DenseMatrix::load(x)?,
                    reference,
                    states: vec![None; k_total],
                }
            }
            Backend::Mapped => {
                fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                if !cfg.resume {
                    clear_workdir(&dir)?;
                }
                stats.matrix_bytes = file_len(x.path());
                let dims = Dims {
                    n: n as u64,
                    p: p as u64,
                    n_dummies: l as u64,
                    experiments: k_total as u64,
                };
                // The design itself already exists.
                let needed = dims.disk_bytes(cfg.strategy.kind) - crate::sizing::dense_bytes(dims.n, dims.p);
                match cfg.strategy.kind {
                    DummyKind::FreshGaussian => {
                        let mut files = Vec::with_capacity(k_total);
                        let mut digests = Vec::with_capacity(k_total);
                        let missing = (1..=k_total).any(|k| !enlarged_path(&dir, k).exists());
                        if missing {
                            check_space(&dir, needed)?;
                        }
                        for k in 1..=k_total {
                            let path = enlarged_path(&dir, k);
                            let sidecar = digest_path(&dir, k);
                            if !(cfg.resume && path.exists() && sidecar.exists()) {
                                build_enlarged(x, &path, &sidecar, &cfg.strategy, k)?;
                            }
                            let file = StoredMatrix::open(&path, AccessMode::ReadOnly)?;
                            let (owner, digest) = read_digest(&sidecar)?;
                            if owner != k {
                                return Err(Error::Reproducibility(format!(
                                    "{} belongs to experiment {owner}",
                                    sidecar.display()
                                )));
                            }
                            stats.matrix_bytes += file.header().file_len();
                            files.push(file);
                            digests.push(digest);
                        }
                        Runner::Enlarged { files, digests }
                    }
                    DummyKind::PermuteS1 | DummyKind::PermuteS2 => {
                        let ref_path = dir.join(REFERENCE_FILE);
                        let block_path = dir.join(BLOCK_FILE);
                        let reuse = cfg.resume && ref_path.exists() && block_path.exists();
                        if !reuse {
                            check_space(&dir, needed)?;
                            gen_reference(&ref_path, n, l, cfg.strategy.reference_seed())?;
                            StoredMatrix::create_overwrite(&block_path, n, l)?;
                        }
                        let reference = StoredMatrix::open(&ref_path, AccessMode::ReadOnly)?;
                        let block = StoredMatrix::open(&block_path, AccessMode::ReadWrite)?;
                        let design = StoredMatrix::open(x.path(), AccessMode::ReadOnly)?;
                        stats.matrix_bytes += reference.header().file_len() + block.header().file_len();
                        Runner::Permuted {
                            augmented: AugmentedMatrix::new(design, block)?,
                            reference,
                        }
                    }
                }
            }
        };
        Ok(Self {
            cfg,
            y,
            n,
            p,
            hash,
            runner,
            stats,
        })
    }

    pub fn config(&self) -> &TRexConfig {
        &self.cfg
    }

    pub fn config_hash(&self) -> u64 {
        self.hash
    }

    fn context(&self) -> SolverContext<'_> {
        SolverContext {
            y: self.y,
            p: self.p,
            hash: self.hash,
            options: TLarsOptions { lasso: self.cfg.lasso },
            dir: &self.cfg.workdir,
        }
    }

    /// Runs experiment `k` up to `t` dummies, resuming from its checkpoint.
    pub fn run_experiment(&mut self, k: usize, t: usize) -> Result<CandidateSet> {
        if k == 0 || k > self.cfg.experiments {
            return Err(Error::Argument(format!(
                "experiment index {k} outside 1..={}",
                self.cfg.experiments
            )));
        }
        if t == 0 {
            return Err(Error::Argument("the dummy target T must be at least 1".into()));
        }
        let (set, steps) = match &mut self.runner {
            Runner::Enlarged { files, digests } => {
                let ctx = SolverContext {
                    y: self.y,
                    p: self.p,
                    hash: self.hash,
                    options: TLarsOptions { lasso: self.cfg.lasso },
                    dir: &self.cfg.workdir,
                };
                enlarged_experiment(&ctx, &files[k - 1], &digests[k - 1], k, t)?
            }
            Runner::Permuted { augmented, reference } => {
                let plan = build_plan(k, self.n, self.cfg.n_dummies(), &self.cfg.strategy)?;
                let sidecar = digest_path(&self.cfg.workdir, k);
                let digest = if sidecar.exists() {
                    let (_, expected) = read_digest(&sidecar)?;
                    restore_dummy_block(&plan, &*reference, augmented.dummy_block_mut(), &expected)?
                } else {
                    let d = apply_permutation(&plan, &*reference, augmented.dummy_block_mut())?;
                    write_digest(&sidecar, k, &d)?;
                    d
                };
                let ctx = SolverContext {
                    y: self.y,
                    p: self.p,
                    hash: self.hash,
                    options: TLarsOptions { lasso: self.cfg.lasso },
                    dir: &self.cfg.workdir,
                };
                ctx.advance(&*augmented, k, t, digest.combined())?
            }
            Runner::InMemory { x, reference, states } => {
                let enlarged = in_memory_enlarged(x, reference.as_ref(), &self.cfg.strategy, k)?;
                let mut state = match states[k - 1].take() {
                    Some(s) => s,
                    None => TLarsState::init(&enlarged, self.y, self.p, TLarsOptions { lasso: self.cfg.lasso })?,
                };
                let before = state.step_index;
                state.run_until_dummies(&enlarged, t)?;
                let set = CandidateSet::from_state(k, t, &state);
                let steps = state.step_index - before;
                states[k - 1] = Some(state);
                (set, steps)
            }
        };
        self.stats.experiments_run += 1;
        self.stats.lars_steps += steps;
        Ok(set)
    }

    /// Runs all `K` experiments at dummy count `t`.
    pub fn run_round(&mut self, t: usize) -> Result<Vec<CandidateSet>> {
        let jobs = self.cfg.effective_jobs();
        if let (Runner::Enlarged { files, digests }, true) = (&self.runner, jobs > 1) {
            let ctx = self.context();
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| Error::Argument(format!("cannot start {jobs} worker threads: {e}")))?;
            let outcomes: Vec<Result<(CandidateSet, usize)>> = pool.install(|| {
                files
                    .par_iter()
                    .zip(digests.par_iter())
                    .enumerate()
                    .map(|(i, (f, d))| enlarged_experiment(&ctx, f, d, i + 1, t))
                    .collect()
            });
            let mut sets = Vec::with_capacity(outcomes.len());
            for o in outcomes {
                let (set, steps) = o?;
                self.stats.experiments_run += 1;
                self.stats.lars_steps += steps;
                sets.push(set);
            }
            return Ok(sets);
        }
        (1..=self.cfg.experiments).map(|k| self.run_experiment(k, t)).collect()
    }

    /// Runs the calibration loop with the default estimator.
    pub fn calibrate(self) -> Result<Calibration> {
        self.calibrate_with(&DummyRatioEstimator)
    }

    pub fn calibrate_with(mut self, estimator: &dyn FdpEstimator) -> Result<Calibration> {
        let k_total = self.cfg.experiments;
        let l = self.cfg.n_dummies();
        let p = self.p;
        let t_max = self.cfg.effective_t_max(self.n);
        let grid = voting_grid(k_total);
        let mapped = self.cfg.backend == Backend::Mapped;
        let alpha = self.cfg.alpha;

        let mut progress = Progress {
            config_hash: self.hash,
            p,
            experiments: k_total,
            rounds: Vec::new(),
        };
        if mapped && self.cfg.resume {
            if let Some(saved) = Progress::read(&self.cfg.workdir)? {
                if saved.config_hash != self.hash || saved.p != p || saved.experiments != k_total {
                    return Err(Error::Reproducibility(
                        "working directory holds a calibration with a different configuration".into(),
                    ));
                }
                progress = saved;
            }
        }

        let mut table = RelOccurrenceTable::new(k_total);
        let mut trace = Vec::new();
        let mut stop = None;
        let evaluate = |t: usize, counts: &[u32], trace: &mut Vec<FdpRecord>| -> bool {
            let mut any_within = false;
            let mut any_nonempty = false;
            for &units in &grid {
                let n_selected = select_counts(counts, units).count();
                let fdp = estimator.estimate(n_selected, t, l, p);
                trace.push(FdpRecord {
                    t,
                    v: level_value(units, k_total),
                    fdp,
                    n_selected,
                });
                if n_selected > 0 {
                    any_nonempty = true;
                    any_within |= fdp <= alpha;
                }
            }
            any_nonempty && !any_within
        };

        for round in &progress.rounds {
            if stop.is_some() || round.t > t_max {
                break;
            }
            table.counts.push(round.counts.clone());
            if evaluate(round.t, &round.counts, &mut trace) {
                stop = Some(StopReason::FdpExceeded);
            } else if round.all_terminal {
                stop = Some(StopReason::PathsTerminal);
            }
            self.stats.rounds_resumed += 1;
        }
        // Rounds beyond a lowered T_max are forgotten.
        progress.rounds.truncate(table.rounds());

        let mut t = table.rounds() + 1;
        while stop.is_none() && t <= t_max {
            let sets = self.run_round(t)?;
            let counts = occurrence_counts(&sets, p, k_total)?;
            let all_terminal = sets.iter().all(|s| s.terminal);
            if evaluate(t, &counts, &mut trace) {
                stop = Some(StopReason::FdpExceeded);
            } else if all_terminal {
                stop = Some(StopReason::PathsTerminal);
            }
            table.counts.push(counts.clone());
            if mapped {
                progress.rounds.push(Round {
                    t,
                    counts,
                    all_terminal,
                });
                progress.write(&self.cfg.workdir)?;
            }
            t += 1;
        }
        let stop_reason = stop.unwrap_or(StopReason::TMaxReached);

        // Largest feasible selection; ties prefer larger v, then smaller T.
        let best = trace
            .iter()
            .filter(|r| r.fdp <= self.cfg.alpha && r.n_selected > 0)
            .max_by(|a, b| {
                a.n_selected
                    .cmp(&b.n_selected)
                    .then(a.v.total_cmp(&b.v))
                    .then(b.t.cmp(&a.t))
            });
        let (selected, v_star, t_star) = match best {
            Some(r) => {
                let units = (r.v * (2 * k_total) as f64).round() as usize;
                let chosen: Vec<usize> = select_counts(&table.counts[r.t - 1], units).collect();
                (chosen, r.v, r.t)
            }
            None => (Vec::new(), level_value(*grid.last().unwrap(), k_total), 1),
        };

        if mapped {
            self.stats.checkpoint_bytes = (1..=k_total)
                .map(|k| file_len(&checkpoint_path(&self.cfg.workdir, k)) + file_len(&digest_path(&self.cfg.workdir, k)))
                .sum();
        }
        Ok(Calibration {
            result: SelectionResult {
                selected,
                v_star,
                t_star,
                stop_reason,
                fdp_trace: trace,
                phi: table,
                config: ConfigEcho {
                    n: self.n,
                    p,
                    n_dummies: l,
                    experiments: k_total,
                    alpha: self.cfg.alpha,
                    strategy: self.cfg.strategy.kind,
                    base_seed: self.cfg.strategy.base_seed,
                    t_max,
                    lasso: self.cfg.lasso,
                    estimator: estimator.name().to_string(),
                },
            },
            stats: self.stats,
        })
    }
}

/// Calibrates with the default estimator.
pub fn calibrate(cfg: TRexConfig, x: &StoredMatrix, y: &[f64]) -> Result<Calibration> {
    Selector::new(cfg, x, y)?.calibrate()
}

fn build_enlarged(x: &StoredMatrix, path: &Path, sidecar: &Path, strategy: &DummyStrategy, k: usize) -> Result<()> {
    let (n, p) = (x.n_rows(), x.n_cols());
    let mut m = StoredMatrix::create_overwrite(path, n, p + strategy.n_dummies)?;
    let mut buf = vec![0.0; n];
    for j in 0..p {
        x.read_column(j, &mut buf)?;
        m.write_column(j, &buf)?;
    }
    fresh_dummies(&mut m, p, strategy, k)?;
    m.flush()?;
    let digest = BlockDigest::of(&m, p..p + strategy.n_dummies)?;
    write_digest(sidecar, k, &digest)
}

fn enlarged_experiment(
    ctx: &SolverContext<'_>,
    file: &StoredMatrix,
    expected: &BlockDigest,
    k: usize,
    t: usize,
) -> Result<(CandidateSet, usize)> {
    let digest = BlockDigest::of(file, ctx.p..file.n_cols())?;
    if let Some(col) = digest.first_mismatch(expected) {
        return Err(Error::Reproducibility(format!(
            "enlarged matrix of experiment {k} differs from its recorded digest (first at dummy column {col})"
        )));
    }
    ctx.advance(file, k, t, digest.combined())
}

/// `[X | D_k]` built densely in memory.
fn in_memory_enlarged(
    x: &DenseMatrix,
    reference: Option<&DenseMatrix>,
    strategy: &DummyStrategy,
    k: usize,
) -> Result<DenseMatrix> {
    let (n, p, l) = (x.n_rows(), x.n_cols(), strategy.n_dummies);
    let mut data = Vec::with_capacity(n * (p + l));
    data.extend_from_slice(x.as_slice());
    data.resize(n * (p + l), 0.0);
    let mut m = DenseMatrix::from_column_major(n, p + l, data)?;
    match reference {
        None => fresh_dummies(&mut m, p, strategy, k)?,
        Some(r) => {
            let plan = build_plan(k, n, l, strategy)?;
            let mut block = DenseMatrix::zeros(n, l)?;
            apply_permutation(&plan, r, &mut block)?;
            for j in 0..l {
                m.column_mut(p + j).copy_from_slice(block.column(j));
            }
        }
    }
    Ok(m)
}
