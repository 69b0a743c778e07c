//! Early-terminating least-angle regression.
//!
//! The solver walks the LARS path on `[X | D]` one entering variable per
//! step and can stop as soon as a given number of dummy columns (indices
//! `≥ p`) is active. Its state is small (active indices, signs,
//! coefficients, the residual and the Cholesky factor of the active Gram
//! matrix) so it can be written to disk and resumed against the same matrix.
//!
//! Columns are streamed once per step: every column's correlation with the
//! residual and with the equiangular direction are computed in the same pass,
//! and nothing proportional to the number of columns is kept in memory.

mod checkpoint;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC};

use crate::chol::Cholesky;
use crate::error::{Error, Result};
use crate::matstore::ColumnSource;
use rayon::prelude::*;

/// Minimum number of columns per parallel work item in the streaming pass.
const STREAM_CHUNK: usize = 64;

/// Relative tolerance of the equiangular property.
pub const EQUIANGULAR_TOL: f64 = 1e-8;
/// Relative tolerance under which two candidates count as tied.
pub const TIE_TOL: f64 = 1e-12;
/// Relative tolerance for the response mean.
pub const CENTERING_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TLarsOptions {
    /// Drop variables whose coefficient crosses zero (lasso path).
    pub lasso: bool,
}

/// The variable chosen to enter at the start of the next step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub column: usize,
    pub sign: f64,
}

/// Resumable solver state for one random experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct TLarsState {
    pub n_rows: usize,
    /// Number of original (non-dummy) columns `p`.
    pub n_original: usize,
    /// Total columns `p + L`.
    pub n_total: usize,
    pub lasso: bool,
    /// Active columns in order of entry.
    pub active: Vec<usize>,
    pub signs: Vec<f64>,
    pub coeffs: Vec<f64>,
    pub residual: Vec<f64>,
    pub residual_norm: f64,
    /// Shared absolute correlation of the active set with the residual.
    pub max_corr: f64,
    pub initial_max_corr: f64,
    pub n_dummies_active: usize,
    pub step_index: usize,
    pub terminal: bool,
    pub pending: Option<Entry>,
    /// Columns refused because they were linearly dependent on the active set.
    pub skipped: Vec<usize>,
    /// Column dropped by the lasso rule in the last step, barred from re-entry for one step.
    pub dropped: Option<usize>,
    pub(crate) chol: Cholesky,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
fn sign_of(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Index of the largest `|v|`, lowest index winning ties within [`TIE_TOL`].
fn argmax_abs(values: impl Iterator<Item = (usize, f64)>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (j, v) in values {
        match best {
            Some((_, b)) if v.abs() <= b.abs() + TIE_TOL * b.abs().max(f64::MIN_POSITIVE) => {}
            _ => best = Some((j, v)),
        }
    }
    best
}

impl TLarsState {
    /// Starts a path on `x` (standardized columns) and centered `y`; the
    /// first `n_original` columns are real predictors, the rest dummies.
    pub fn init<M: ColumnSource + ?Sized>(
        x: &M,
        y: &[f64],
        n_original: usize,
        options: TLarsOptions,
    ) -> Result<Self> {
        let n = x.n_rows();
        let n_total = x.n_cols();
        if y.len() != n {
            return Err(Error::Argument(format!(
                "response has length {}, design has {n} rows",
                y.len()
            )));
        }
        if n < 2 {
            return Err(Error::Argument("at least two observations are required".into()));
        }
        if n_original > n_total {
            return Err(Error::Argument(format!(
                "{n_original} original columns exceed the design width {n_total}"
            )));
        }
        let mean = y.iter().sum::<f64>() / n as f64;
        let scale = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if mean.abs() > CENTERING_TOL * scale {
            return Err(Error::Argument(format!("response is not centered (mean {mean:e})")));
        }

        let mut col = vec![0.0; n];
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n_total {
            x.read_column(j, &mut col)?;
            let c = dot(&col, y);
            best = argmax_abs(best.into_iter().chain(std::iter::once((j, c))));
        }
        let max_corr = best.map_or(0.0, |(_, c)| c.abs());
        let threshold = 1e-12 * norm(y) * (n as f64).sqrt();
        let terminal = !(max_corr > threshold);
        Ok(Self {
            n_rows: n,
            n_original,
            n_total,
            lasso: options.lasso,
            active: Vec::new(),
            signs: Vec::new(),
            coeffs: Vec::new(),
            residual: y.to_vec(),
            residual_norm: norm(y),
            max_corr,
            initial_max_corr: max_corr,
            n_dummies_active: 0,
            step_index: 0,
            terminal,
            pending: if terminal {
                None
            } else {
                best.map(|(column, c)| Entry {
                    column,
                    sign: sign_of(c),
                })
            },
            skipped: Vec::new(),
            dropped: None,
            chol: Cholesky::new(),
        })
    }

    /// Largest active set the path may reach.
    pub fn max_active(&self) -> usize {
        (self.n_rows - 1).min(self.n_total)
    }

    pub fn is_dummy(&self, column: usize) -> bool {
        column >= self.n_original
    }

    /// Active original variables (dummies removed), in entry order.
    pub fn active_originals(&self) -> impl Iterator<Item = usize> + '_ {
        self.active.iter().copied().filter(|&j| j < self.n_original)
    }

    /// `xᵀ r` for every column, streamed.
    pub fn correlations<M: ColumnSource + ?Sized>(&self, x: &M) -> Result<Vec<f64>> {
        let mut col = vec![0.0; self.n_rows];
        (0..self.n_total)
            .map(|j| {
                x.read_column(j, &mut col)?;
                Ok(dot(&col, &self.residual))
            })
            .collect()
    }

    fn check_design<M: ColumnSource + ?Sized>(&self, x: &M) -> Result<()> {
        if x.n_rows() != self.n_rows || x.n_cols() != self.n_total {
            return Err(Error::Argument(format!(
                "design is {}x{}, solver state expects {}x{}",
                x.n_rows(),
                x.n_cols(),
                self.n_rows,
                self.n_total
            )));
        }
        Ok(())
    }

    fn admit<M: ColumnSource + ?Sized>(
        &mut self,
        x: &M,
        entry: Entry,
        col: &mut [f64],
        other: &mut [f64],
    ) -> Result<()> {
        x.read_column(entry.column, col)?;
        let diag = dot(col, col);
        let mut cross = Vec::with_capacity(self.active.len());
        for &a in &self.active {
            x.read_column(a, other)?;
            cross.push(dot(other, col));
        }
        if self.chol.push(&cross, diag) {
            self.active.push(entry.column);
            self.signs.push(entry.sign);
            self.coeffs.push(0.0);
            if self.is_dummy(entry.column) {
                self.n_dummies_active += 1;
            }
        } else {
            self.skipped.push(entry.column);
        }
        Ok(())
    }

    /// Performs one LARS step: admit the pending variable, then move along
    /// the equiangular direction until the next variable ties.
    pub fn step<M: ColumnSource + ?Sized>(&mut self, x: &M) -> Result<()> {
        if self.terminal {
            return Err(Error::Argument("step called on a terminated path".into()));
        }
        self.check_design(x)?;
        let n = self.n_rows;
        let mut col = vec![0.0; n];
        let mut other = vec![0.0; n];

        if let Some(entry) = self.pending.take() {
            self.admit(x, entry, &mut col, &mut other)?;
        }
        if self.active.is_empty() {
            return Err(Error::SingularGram(self.skipped.clone()));
        }

        // Equiangular direction: w = A (X_Aᵀ X_A)⁻¹ s, A = (sᵀ (X_Aᵀ X_A)⁻¹ s)^{-1/2}.
        let mut w = self.chol.solve(&self.signs);
        let s_w = dot(&self.signs, &w);
        if !(s_w > 0.0) || !s_w.is_finite() {
            return Err(Error::SingularGram(self.active.clone()));
        }
        let equi = 1.0 / s_w.sqrt();
        for v in &mut w {
            *v *= equi;
        }
        // u = X_A w and the shared correlation C = mean_i s_i x_iᵀ r.
        let mut u = vec![0.0; n];
        let mut shared = 0.0;
        for ((&a, &wa), &s) in self.active.iter().zip(&w).zip(&self.signs) {
            x.read_column(a, &mut col)?;
            shared += s * dot(&col, &self.residual);
            for (ui, ci) in u.iter_mut().zip(&col) {
                *ui += wa * ci;
            }
        }
        let c_now = shared / self.active.len() as f64;

        let mut excluded: Vec<usize> = self
            .active
            .iter()
            .chain(&self.skipped)
            .chain(self.dropped.as_ref())
            .copied()
            .collect();
        excluded.sort_unstable();

        // (gamma, column, c_j, a_j) of the earliest crossing. Rayon reduces
        // adjacent ranges left to right, so the lowest index wins ties
        // regardless of the thread count.
        type Cand = Option<(f64, usize, f64, f64)>;
        fn earlier(a: Cand, b: Cand) -> Cand {
            match (a, b) {
                (Some(x), Some(y)) if y.0 < x.0 - TIE_TOL * x.0 => Some(y),
                (Some(x), _) => Some(x),
                (None, y) => y,
            }
        }
        let residual = &self.residual;
        let best: Cand = (0..self.n_total)
            .into_par_iter()
            .with_min_len(STREAM_CHUNK)
            .try_fold(
                || (vec![0.0; n], None),
                |(mut buf, acc): (Vec<f64>, Cand), j| -> Result<(Vec<f64>, Cand)> {
                    if excluded.binary_search(&j).is_ok() {
                        return Ok((buf, acc));
                    }
                    x.read_column(j, &mut buf)?;
                    let cj = dot(&buf, residual);
                    let aj = dot(&buf, &u);
                    let here = crossing(c_now, equi, cj, aj).map(|g| (g, j, cj, aj));
                    Ok((buf, earlier(acc, here)))
                },
            )
            .map(|r| r.map(|(_, c)| c))
            .try_reduce(|| None, |a, b| Ok(earlier(a, b)))?;

        let full_fit = self.active.len() >= self.max_active() || best.is_none();
        let mut gamma = match best {
            Some((g, ..)) if !full_fit => g,
            _ => c_now / equi,
        };

        let mut drop = None;
        if self.lasso {
            for (pos, (&b, &wv)) in self.coeffs.iter().zip(&w).enumerate() {
                if wv != 0.0 {
                    let g = -b / wv;
                    if g > 0.0 && g < gamma && drop.map_or(true, |(_, dg)| g < dg) {
                        drop = Some((pos, g));
                    }
                }
            }
        }
        if let Some((_, g)) = drop {
            gamma = g;
        }

        for (b, wv) in self.coeffs.iter_mut().zip(&w) {
            *b += gamma * wv;
        }
        for (r, uv) in self.residual.iter_mut().zip(&u) {
            *r -= gamma * uv;
        }
        self.residual_norm = norm(&self.residual);
        self.max_corr = c_now - gamma * equi;
        self.step_index += 1;
        self.dropped = None;

        if let Some((pos, _)) = drop {
            let column = self.active.remove(pos);
            self.signs.remove(pos);
            self.coeffs.remove(pos);
            self.chol.remove(pos);
            if self.is_dummy(column) {
                self.n_dummies_active -= 1;
            }
            self.dropped = Some(column);
        } else if full_fit {
            self.max_corr = 0.0;
            self.terminal = true;
        } else if let Some((_, j, cj, aj)) = best {
            self.pending = Some(Entry {
                column: j,
                sign: sign_of(cj - gamma * aj),
            });
        }
        if !self.terminal && !(self.max_corr > 1e-12 * self.initial_max_corr) {
            self.terminal = true;
            self.pending = None;
        }
        Ok(())
    }

    /// Steps until `target` dummies are active or the path ends.
    pub fn run_until_dummies<M: ColumnSource + ?Sized>(&mut self, x: &M, target: usize) -> Result<()> {
        if target == 0 {
            return Err(Error::Argument("the dummy target T must be at least 1".into()));
        }
        if target < self.n_dummies_active {
            return Err(Error::Argument(format!(
                "path already holds {} dummies, cannot stop at {target}",
                self.n_dummies_active
            )));
        }
        while !self.terminal && self.n_dummies_active < target {
            self.step(x)?;
        }
        Ok(())
    }

    /// Active-set coefficients keyed by column, for reporting.
    pub fn coefficients(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.active.iter().copied().zip(self.coeffs.iter().copied())
    }
}

/// First positive crossing time of candidate `(j, c_j, a_j)` against the
/// active set's shared correlation `c` decreasing at rate `equi`.
fn crossing(c: f64, equi: f64, cj: f64, aj: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    for g in [(c - cj) / (equi - aj), (c + cj) / (equi + aj)] {
        if g > 0.0 && g.is_finite() && best.map_or(true, |b| g < b) {
            best = Some(g);
        }
    }
    best
}
