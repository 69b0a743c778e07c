//! Shared fixtures: random instances and a dense LARS reference that
//! recomputes everything from scratch with nalgebra at every step.

#![allow(dead_code)]

use bigsel::matstore::{standardize_slice, ColumnSource, DenseMatrix};
use bigsel::rng::NormalStream;
use nalgebra::{DMatrix, DVector};

/// Standardized `n × m` design and centered response.
pub struct Instance {
    pub x: DenseMatrix,
    pub y: Vec<f64>,
}

pub fn random_instance(n: usize, m: usize, seed: u64) -> Instance {
    let mut s = NormalStream::new(seed);
    let mut data = vec![0.0; n * m];
    for (j, col) in data.chunks_mut(n).enumerate() {
        s.fill(col);
        standardize_slice(j, col).unwrap();
    }
    let x = DenseMatrix::from_column_major(n, m, data).unwrap();
    // A few real signals so paths are not pure noise.
    let mut y: Vec<f64> = (0..n).map(|_| s.next()).collect();
    for j in 0..m.min(3) {
        for (yi, xi) in y.iter_mut().zip(x.column(j)) {
            *yi += (3 - j) as f64 * xi;
        }
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    y.iter_mut().for_each(|v| *v -= mean);
    Instance { x, y }
}

/// One recorded step of the reference path.
#[derive(Debug, Clone)]
pub struct OracleStep {
    pub active: Vec<usize>,
    /// Full coefficient vector after the step.
    pub beta: Vec<f64>,
    pub shared_corr: f64,
}

/// Plain LARS on `(x, y)` until `max_steps` steps or the full fit.
pub fn dense_lars(x: &DenseMatrix, y: &[f64], max_steps: usize) -> Vec<OracleStep> {
    let (n, m) = (x.n_rows(), x.n_cols());
    let xm = DMatrix::from_column_slice(n, m, x.as_slice());
    let yv = DVector::from_column_slice(y);
    let mut beta = DVector::<f64>::zeros(m);
    let mut active: Vec<usize> = Vec::new();
    let mut signs: Vec<f64> = Vec::new();
    let mut steps = Vec::new();
    let budget = (n - 1).min(m);

    let c0 = xm.transpose() * &yv;
    let mut next = argmax_abs(&c0, &[]);
    for _ in 0..max_steps {
        let Some(j) = next else { break };
        let r = &yv - &xm * &beta;
        let c = xm.transpose() * &r;
        active.push(j);
        signs.push(if c[j] < 0.0 { -1.0 } else { 1.0 });

        let xa = DMatrix::from_fn(n, active.len(), |i, a| xm[(i, active[a])]);
        let gram = xa.transpose() * &xa;
        let s = DVector::from_column_slice(&signs);
        let ginv_s = gram.clone().lu().solve(&s).expect("singular active Gram");
        let equi = 1.0 / s.dot(&ginv_s).sqrt();
        let w = &ginv_s * equi;
        let u = &xa * &w;
        let a = xm.transpose() * &u;
        let shared = active.iter().zip(&signs).map(|(&k, s)| s * c[k]).sum::<f64>() / active.len() as f64;

        let mut best: Option<(f64, usize)> = None;
        for k in 0..m {
            if active.contains(&k) {
                continue;
            }
            for g in [(shared - c[k]) / (equi - a[k]), (shared + c[k]) / (equi + a[k])] {
                if g > 0.0 && g.is_finite() && best.map_or(true, |(b, _)| g < b * (1.0 - 1e-12)) {
                    best = Some((g, k));
                }
            }
        }
        let full = active.len() >= budget || best.is_none();
        let gamma = if full { shared / equi } else { best.unwrap().0 };
        for (pos, &k) in active.iter().enumerate() {
            beta[k] += gamma * w[pos];
        }
        steps.push(OracleStep {
            active: active.clone(),
            beta: beta.iter().copied().collect(),
            shared_corr: shared - gamma * equi,
        });
        if full {
            break;
        }
        next = best.map(|(_, k)| k);
    }
    steps
}

fn argmax_abs(c: &DVector<f64>, skip: &[usize]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, v) in c.iter().enumerate() {
        if skip.contains(&j) {
            continue;
        }
        if best.map_or(true, |(_, b)| v.abs() > b * (1.0 + 1e-12)) {
            best = Some((j, v.abs()));
        }
    }
    best.filter(|(_, v)| *v > 0.0).map(|(j, _)| j)
}

/// Dense `xᵀ v`.
pub fn dense_xt(x: &DenseMatrix, v: &[f64]) -> Vec<f64> {
    let xm = DMatrix::from_column_slice(x.n_rows(), x.n_cols(), x.as_slice());
    (xm.transpose() * DVector::from_column_slice(v)).iter().copied().collect()
}
