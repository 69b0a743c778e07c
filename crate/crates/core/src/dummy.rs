//! Dummy predictors.
//!
//! Two families are supported:
//!
//! * fresh Gaussian blocks, one independent `n × L` matrix per experiment,
//!   seeded from `(base_seed, k)`;
//! * permutations of a single stored reference block. Experiment `k` seeds
//!   its generator with `θ_k = k` (mixed with the run's base seed) and either
//!   shuffles rows and columns once (`S1`, column-outer copy) or shuffles rows
//!   and then gives every row its own column shuffle seeded from a vector of
//!   row seeds `γ_k ∈ {1, …, n}` (`S2`, row-outer copy). Experiment 1 uses the
//!   reference unpermuted.
//!
//! Every materialized block is restandardized column-wise, and its per-column
//! digest is what later restores are checked against.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matstore::{
    standardize_columns, BlockDigest, ColumnSource, ColumnStore, DenseMatrix, StoredMatrix,
};
use crate::rng::{derive_seed, domain, NormalStream, PinnedRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DummyKind {
    FreshGaussian,
    PermuteS1,
    PermuteS2,
}

impl DummyKind {
    pub fn tag(self) -> u8 {
        match self {
            DummyKind::FreshGaussian => 0,
            DummyKind::PermuteS1 => 1,
            DummyKind::PermuteS2 => 2,
        }
    }

    pub fn is_permutation(self) -> bool {
        !matches!(self, DummyKind::FreshGaussian)
    }
}

impl std::str::FromStr for DummyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fresh" | "fresh-gaussian" | "big" => Ok(DummyKind::FreshGaussian),
            "s1" | "permute-s1" | "dp-s1" => Ok(DummyKind::PermuteS1),
            "s2" | "permute-s2" | "dp-s2" => Ok(DummyKind::PermuteS2),
            other => Err(Error::Argument(format!(
                "unknown dummy strategy {other:?} (expected fresh, s1 or s2)"
            ))),
        }
    }
}

impl std::fmt::Display for DummyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DummyKind::FreshGaussian => "fresh",
            DummyKind::PermuteS1 => "s1",
            DummyKind::PermuteS2 => "s2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DummyStrategy {
    pub kind: DummyKind,
    pub n_dummies: usize,
    pub base_seed: u64,
}

impl DummyStrategy {
    pub fn new(kind: DummyKind, n_dummies: usize, base_seed: u64) -> Result<Self> {
        if n_dummies == 0 {
            return Err(Error::Argument("the dummy count L must be at least 1".into()));
        }
        Ok(Self {
            kind,
            n_dummies,
            base_seed,
        })
    }

    /// Seed of experiment `k`'s fresh Gaussian block.
    pub fn fresh_seed(&self, k: usize) -> u64 {
        derive_seed(self.base_seed, domain::FRESH, k as u64)
    }

    /// Seed of the shared reference block.
    pub fn reference_seed(&self) -> u64 {
        derive_seed(self.base_seed, domain::REFERENCE, 0)
    }
}

/// Fills columns `cols` of `m` with standard normals from one stream,
/// column by column.
pub fn fill_gaussian<M: ColumnStore + ?Sized>(
    m: &mut M,
    cols: std::ops::Range<usize>,
    seed: u64,
) -> Result<()> {
    let mut stream = NormalStream::new(seed);
    let mut buf = vec![0.0; m.n_rows()];
    for j in cols {
        stream.fill(&mut buf);
        m.write_column(j, &buf)?;
    }
    Ok(())
}

/// Draws experiment `k`'s fresh dummy block into columns `offset..offset+L`
/// of `target` and standardizes it.
pub fn fresh_dummies<M: ColumnStore + ?Sized>(
    target: &mut M,
    offset: usize,
    strategy: &DummyStrategy,
    k: usize,
) -> Result<()> {
    if k == 0 {
        return Err(Error::Argument("experiment indices start at 1".into()));
    }
    let cols = offset..offset + strategy.n_dummies;
    if cols.end > target.n_cols() {
        return Err(Error::Dimension(format!(
            "target has {} columns, dummy block needs {}..{}",
            target.n_cols(),
            cols.start,
            cols.end
        )));
    }
    fill_gaussian(target, cols.clone(), strategy.fresh_seed(k))?;
    standardize_columns(target, cols)?;
    Ok(())
}

/// The stored reference dummy block `X̊_ref`, raw `N(0, 1)` draws.
#[derive(Debug)]
pub struct DummyReference {
    pub matrix: StoredMatrix,
    pub seed: u64,
}

/// Generates the `n × L` reference block at `path`.
pub fn gen_reference(path: impl AsRef<Path>, n: usize, n_dummies: usize, seed: u64) -> Result<DummyReference> {
    let mut matrix = StoredMatrix::create_overwrite(path, n, n_dummies)?;
    fill_gaussian(&mut matrix, 0..n_dummies, seed)?;
    matrix.flush()?;
    Ok(DummyReference { matrix, seed })
}

/// Column order of a permutation plan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnOrder {
    /// Experiment 1: the reference as is.
    Identity,
    /// `S1`: one column shuffle `c̃_k` for every row.
    Shared(Vec<usize>),
    /// `S2`: row `i` uses the shuffle seeded by `row_seeds[i] ∈ {1, …, n}`.
    PerRow { row_seeds: Vec<u64> },
}

/// Index vectors realizing `Π_(k)` for one experiment. Indices are 0-based;
/// the S2 row seeds keep their `{1, …, n}` support.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationPlan {
    pub k: usize,
    pub theta: u64,
    pub kind: DummyKind,
    pub base_seed: u64,
    pub n_rows: usize,
    pub n_cols: usize,
    /// `r̃_k`: target row `i` is copied from reference row `rows[i]`.
    pub rows: Vec<usize>,
    pub columns: ColumnOrder,
}

impl PermutationPlan {
    /// Writes `c̃` for target row `i` into `out`.
    pub fn row_columns(&self, i: usize, out: &mut Vec<usize>) {
        out.clear();
        match &self.columns {
            ColumnOrder::Identity => out.extend(0..self.n_cols),
            ColumnOrder::Shared(c) => out.extend_from_slice(c),
            ColumnOrder::PerRow { row_seeds } => {
                out.extend(0..self.n_cols);
                let seed = derive_seed(self.base_seed, domain::ROW_PERM, row_seeds[i]);
                PinnedRng::new(seed).shuffle(out);
            }
        }
    }
}

/// Builds the permutation plan of experiment `k`; a pure function of its inputs.
pub fn build_plan(k: usize, n: usize, n_dummies: usize, strategy: &DummyStrategy) -> Result<PermutationPlan> {
    if k == 0 {
        return Err(Error::Argument("experiment indices start at 1".into()));
    }
    if n == 0 || n_dummies == 0 {
        return Err(Error::Dimension(format!("plan dimensions must be positive, got {n}x{n_dummies}")));
    }
    if !strategy.kind.is_permutation() {
        return Err(Error::Argument("fresh Gaussian dummies have no permutation plan".into()));
    }
    let theta = k as u64;
    let mut plan = PermutationPlan {
        k,
        theta,
        kind: strategy.kind,
        base_seed: strategy.base_seed,
        n_rows: n,
        n_cols: n_dummies,
        rows: (0..n).collect(),
        columns: ColumnOrder::Identity,
    };
    if k == 1 {
        return Ok(plan);
    }
    let mut rng = PinnedRng::new(derive_seed(strategy.base_seed, domain::PLAN, theta));
    match strategy.kind {
        DummyKind::PermuteS1 => {
            rng.shuffle(&mut plan.rows);
            let mut cols: Vec<usize> = (0..n_dummies).collect();
            rng.shuffle(&mut cols);
            plan.columns = ColumnOrder::Shared(cols);
        }
        DummyKind::PermuteS2 => {
            // ceiling(U(0, n)) realized as floor(u n) + 1 with u in [0, 1).
            let row_seeds: Vec<u64> = (0..n).map(|_| rng.below(n) as u64 + 1).collect();
            rng.shuffle(&mut plan.rows);
            plan.columns = ColumnOrder::PerRow { row_seeds };
        }
        DummyKind::FreshGaussian => unreachable!(),
    }
    Ok(plan)
}

fn check_plan_dims<R: ColumnSource + ?Sized, T: ColumnSource + ?Sized>(
    plan: &PermutationPlan,
    reference: &R,
    target: &T,
) -> Result<()> {
    let want = (plan.n_rows, plan.n_cols);
    for (what, dims) in [
        ("reference", (reference.n_rows(), reference.n_cols())),
        ("target", (target.n_rows(), target.n_cols())),
    ] {
        if dims != want {
            return Err(Error::Argument(format!(
                "{what} is {}x{}, plan expects {}x{}",
                dims.0, dims.1, want.0, want.1
            )));
        }
    }
    Ok(())
}

/// Copies `X̊_ref[r̃_k, c̃_k]` into `target` without restandardizing.
///
/// S1 and the identity traverse column-outer; S2 traverses row-outer.
pub fn permute_into<R, T>(plan: &PermutationPlan, reference: &R, target: &mut T) -> Result<()>
where
    R: ColumnSource + ?Sized,
    T: ColumnStore + ?Sized,
{
    check_plan_dims(plan, reference, target)?;
    let n = plan.n_rows;
    match &plan.columns {
        ColumnOrder::Identity | ColumnOrder::Shared(_) => {
            let mut src = vec![0.0; n];
            let mut dst = vec![0.0; n];
            for j in 0..plan.n_cols {
                let source_col = match &plan.columns {
                    ColumnOrder::Shared(c) => c[j],
                    _ => j,
                };
                reference.read_column(source_col, &mut src)?;
                for (d, &r) in dst.iter_mut().zip(&plan.rows) {
                    *d = src[r];
                }
                target.write_column(j, &dst)?;
            }
        }
        ColumnOrder::PerRow { .. } => {
            let mut cols = Vec::with_capacity(plan.n_cols);
            for i in 0..n {
                plan.row_columns(i, &mut cols);
                let source_row = plan.rows[i];
                for (j, &c) in cols.iter().enumerate() {
                    target.set(i, j, reference.get(source_row, c)?)?;
                }
            }
        }
    }
    Ok(())
}

/// Materializes experiment `plan.k`'s dummy block: permuted copy followed by
/// column restandardization. Returns the block digest.
pub fn apply_permutation<R, T>(plan: &PermutationPlan, reference: &R, target: &mut T) -> Result<BlockDigest>
where
    R: ColumnSource + ?Sized,
    T: ColumnStore + ?Sized,
{
    permute_into(plan, reference, target)?;
    standardize_columns(target, 0..plan.n_cols)?;
    BlockDigest::of(target, 0..plan.n_cols)
}

/// Rematerializes a dummy block and checks it against the digest recorded
/// when it was first built.
pub fn restore_dummy_block<R, T>(
    plan: &PermutationPlan,
    reference: &R,
    target: &mut T,
    expected: &BlockDigest,
) -> Result<BlockDigest>
where
    R: ColumnSource + ?Sized,
    T: ColumnStore + ?Sized,
{
    let digest = apply_permutation(plan, reference, target)?;
    if let Some(col) = digest.first_mismatch(expected) {
        return Err(Error::Reproducibility(format!(
            "dummy block of experiment {} differs from its recorded digest (first at dummy column {col})",
            plan.k
        )));
    }
    Ok(digest)
}

const DIGEST_MAGIC: [u8; 8] = *b"BIGSELDG";

/// Writes a digest sidecar (`dummies_k{k}.digest`).
pub fn write_digest(path: impl AsRef<Path>, k: usize, digest: &BlockDigest) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(32 + 8 * digest.columns.len());
    buf.extend_from_slice(&DIGEST_MAGIC);
    buf.extend_from_slice(&(k as u64).to_le_bytes());
    buf.extend_from_slice(&(digest.columns.len() as u64).to_le_bytes());
    for c in &digest.columns {
        buf.extend_from_slice(&c.to_le_bytes());
    }
    buf.extend_from_slice(&digest.combined().to_le_bytes());
    let tmp = path.with_extension("digest.tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&buf).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Reads a digest sidecar, returning the experiment index it belongs to.
pub fn read_digest(path: impl AsRef<Path>) -> Result<(usize, BlockDigest)> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = || Error::Format(format!("{} is not a valid digest file", path.display()));
    if bytes.len() < 32 || bytes[0..8] != DIGEST_MAGIC {
        return Err(bad());
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
    let k = word(8) as usize;
    let count = word(16) as usize;
    if bytes.len() != 32 + 8 * count {
        return Err(bad());
    }
    let digest = BlockDigest {
        columns: (0..count).map(|c| word(24 + 8 * c)).collect(),
    };
    if digest.combined() != word(24 + 8 * count) {
        return Err(bad());
    }
    Ok((k, digest))
}

/// Quantile comparison of cross-Gram entries between permuted and fresh dummies.
#[derive(Debug, Clone)]
pub struct QqReport {
    pub kind: DummyKind,
    pub experiments: Vec<usize>,
    /// `(probability level, permuted quantile, fresh quantile)`.
    pub pairs: Vec<(f64, f64, f64)>,
    /// Largest quantile gap in the 5th–95th percentile band, relative to the
    /// band's scale `max(|q_05|, |q_95|)` of the fresh distribution.
    pub bulk_deviation: f64,
}

fn cross_gram(left: &DenseMatrix, right: &DenseMatrix, out: &mut Vec<f64>) {
    for b in 0..right.n_cols() {
        let rb = right.column(b);
        for a in 0..left.n_cols() {
            let la = left.column(a);
            out.push(la.iter().zip(rb).map(|(x, y)| x * y).sum());
        }
    }
}

fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    let pos = level * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Compares the entries of `X̊_refᵀ Π_(k)(X̊_ref)` with those of `X̊_refᵀ X̊_k`
/// for fresh i.i.d. `X̊_k`, pooled over `experiments`. The report has one
/// quantile pair per Gram entry (`L²` pairs).
pub fn qq_alignment<R: ColumnSource + ?Sized>(
    reference: &R,
    experiments: &[usize],
    strategy: &DummyStrategy,
) -> Result<QqReport> {
    if experiments.is_empty() {
        return Err(Error::Argument("qq_alignment needs at least one experiment".into()));
    }
    let (n, l) = (reference.n_rows(), reference.n_cols());
    let base = DenseMatrix::load(reference)?;
    let mut permuted = Vec::with_capacity(experiments.len() * l * l);
    let mut fresh = Vec::with_capacity(experiments.len() * l * l);
    let mut block = DenseMatrix::zeros(n, l)?;
    for &k in experiments {
        let plan = build_plan(k, n, l, strategy)?;
        apply_permutation(&plan, &base, &mut block)?;
        cross_gram(&base, &block, &mut permuted);
        fill_gaussian(&mut block, 0..l, derive_seed(strategy.base_seed, domain::QQ_FRESH, k as u64))?;
        standardize_columns(&mut block, 0..l)?;
        cross_gram(&base, &block, &mut fresh);
    }
    permuted.sort_by(f64::total_cmp);
    fresh.sort_by(f64::total_cmp);

    let m = l * l;
    let pairs: Vec<(f64, f64, f64)> = (0..m)
        .map(|i| {
            let level = (i as f64 + 0.5) / m as f64;
            (level, quantile_sorted(&permuted, level), quantile_sorted(&fresh, level))
        })
        .collect();
    let band: Vec<&(f64, f64, f64)> = pairs
        .iter()
        .filter(|(q, _, _)| (0.05..=0.95).contains(q))
        .collect();
    let bulk_deviation = match (band.first(), band.last()) {
        (Some(lo), Some(hi)) => {
            let scale = lo.2.abs().max(hi.2.abs());
            let gap = band.iter().map(|(_, a, b)| (a - b).abs()).fold(0.0, f64::max);
            if scale > 0.0 {
                gap / scale
            } else {
                gap
            }
        }
        _ => 0.0,
    };
    Ok(QqReport {
        kind: strategy.kind,
        experiments: experiments.to_vec(),
        pairs,
        bulk_deviation,
    })
}

impl QqReport {
    /// Writes the quantile pairs as CSV.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "level,permuted,fresh")?;
        for (q, a, b) in &self.pairs {
            writeln!(w, "{q},{a},{b}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matstore::mean_sd;

    fn strategy(kind: DummyKind, l: usize) -> DummyStrategy {
        DummyStrategy::new(kind, l, 11).unwrap()
    }

    fn dense_reference(n: usize, l: usize, seed: u64) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(n, l).unwrap();
        fill_gaussian(&mut m, 0..l, seed).unwrap();
        m
    }

    #[test]
    fn reference_is_deterministic_with_expected_shape() {
        let dir = tempfile::tempdir().unwrap();
        let a = gen_reference(dir.path().join("a.fbm"), 9, 4, 3).unwrap();
        let b = gen_reference(dir.path().join("b.fbm"), 9, 4, 3).unwrap();
        assert_eq!((a.matrix.n_rows(), a.matrix.n_cols()), (9, 4));
        assert_eq!(
            BlockDigest::of(&a.matrix, 0..4).unwrap(),
            BlockDigest::of(&b.matrix, 0..4).unwrap()
        );
    }

    #[test]
    fn reference_moments_single_column() {
        let n = 10_000;
        let m = dense_reference(n, 1, 2024);
        let (mean, sd) = mean_sd(m.column(0));
        assert!(mean.abs() <= 4.0 / (n as f64).sqrt(), "mean {mean}");
        assert!((sd * sd - 1.0).abs() <= 0.1, "var {}", sd * sd);
    }

    #[test]
    fn plans_are_deterministic_permutations() {
        for kind in [DummyKind::PermuteS1, DummyKind::PermuteS2] {
            let s = strategy(kind, 12);
            let a = build_plan(4, 20, 12, &s).unwrap();
            assert_eq!(a, build_plan(4, 20, 12, &s).unwrap());
            let mut rows = a.rows.clone();
            rows.sort_unstable();
            assert_eq!(rows, (0..20).collect::<Vec<_>>());
            let mut cols = Vec::new();
            for i in 0..20 {
                a.row_columns(i, &mut cols);
                let mut sorted = cols.clone();
                sorted.sort_unstable();
                assert_eq!(sorted, (0..12).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn s2_row_seeds_cover_one_to_n() {
        let n = 37;
        let plan = build_plan(3, n, 5, &strategy(DummyKind::PermuteS2, 5)).unwrap();
        let ColumnOrder::PerRow { row_seeds } = &plan.columns else {
            panic!("S2 plan without row seeds");
        };
        assert_eq!(row_seeds.len(), n);
        assert!(row_seeds.iter().all(|&g| (1..=n as u64).contains(&g)));
    }

    #[test]
    fn plan_argument_errors() {
        let s = strategy(DummyKind::PermuteS1, 3);
        assert!(matches!(build_plan(0, 4, 3, &s), Err(Error::Argument(_))));
        let f = strategy(DummyKind::FreshGaussian, 3);
        assert!(matches!(build_plan(2, 4, 3, &f), Err(Error::Argument(_))));
        assert!(DummyStrategy::new(DummyKind::PermuteS1, 0, 1).is_err());
    }

    #[test]
    fn experiment_one_copies_reference_exactly() {
        let reference = dense_reference(6, 3, 8);
        for kind in [DummyKind::PermuteS1, DummyKind::PermuteS2] {
            let plan = build_plan(1, 6, 3, &strategy(kind, 3)).unwrap();
            let mut target = DenseMatrix::zeros(6, 3).unwrap();
            permute_into(&plan, &reference, &mut target).unwrap();
            assert_eq!(target, reference);
        }
    }

    #[test]
    fn s1_preserves_entry_multiset() {
        let reference = dense_reference(8, 5, 4);
        let plan = build_plan(6, 8, 5, &strategy(DummyKind::PermuteS1, 5)).unwrap();
        let mut target = DenseMatrix::zeros(8, 5).unwrap();
        permute_into(&plan, &reference, &mut target).unwrap();
        let mut a: Vec<u64> = reference.as_slice().iter().map(|v| v.to_bits()).collect();
        let mut b: Vec<u64> = target.as_slice().iter().map(|v| v.to_bits()).collect();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
    }

    #[test]
    fn s2_rows_are_permuted_reference_rows() {
        let (n, l) = (7, 6);
        let reference = dense_reference(n, l, 5);
        let plan = build_plan(9, n, l, &strategy(DummyKind::PermuteS2, l)).unwrap();
        let mut target = DenseMatrix::zeros(n, l).unwrap();
        permute_into(&plan, &reference, &mut target).unwrap();
        for i in 0..n {
            let mut got: Vec<u64> = (0..l).map(|j| target.get(i, j).unwrap().to_bits()).collect();
            let mut want: Vec<u64> = (0..l)
                .map(|j| reference.get(plan.rows[i], j).unwrap().to_bits())
                .collect();
            got.sort_unstable();
            want.sort_unstable();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn restandardized_block_has_unit_moments() {
        let (n, l) = (50, 7);
        let reference = dense_reference(n, l, 12);
        for kind in [DummyKind::PermuteS1, DummyKind::PermuteS2] {
            let plan = build_plan(3, n, l, &strategy(kind, l)).unwrap();
            let mut target = DenseMatrix::zeros(n, l).unwrap();
            apply_permutation(&plan, &reference, &mut target).unwrap();
            for j in 0..l {
                let (mean, sd) = mean_sd(target.column(j));
                assert!(mean.abs() < 1e-10);
                assert!((sd * sd - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_an_argument_error() {
        let reference = dense_reference(4, 3, 1);
        let plan = build_plan(2, 4, 3, &strategy(DummyKind::PermuteS1, 3)).unwrap();
        let mut target = DenseMatrix::zeros(4, 2).unwrap();
        assert!(matches!(
            permute_into(&plan, &reference, &mut target),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn digest_sidecar_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dummies_k3.digest");
        let digest = BlockDigest { columns: vec![1, 2, 3] };
        write_digest(&path, 3, &digest).unwrap();
        assert_eq!(read_digest(&path).unwrap(), (3, digest));
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[30] ^= 1;
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(read_digest(&path), Err(Error::Format(_))));
    }

    #[test]
    fn qq_report_shape() {
        let reference = dense_reference(30, 6, 2);
        let report = qq_alignment(&reference, &[2, 3], &strategy(DummyKind::PermuteS1, 6)).unwrap();
        assert_eq!(report.pairs.len(), 36);
        assert!(report.pairs.windows(2).all(|w| w[0].1 <= w[1].1 && w[0].2 <= w[1].2));
        assert!(qq_alignment(&reference, &[], &strategy(DummyKind::PermuteS1, 6)).is_err());
    }
}
