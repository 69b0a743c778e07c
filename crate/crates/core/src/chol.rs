//! Incrementally maintained Cholesky factor of an active-set Gram matrix.
//!
//! `G = L Lᵀ` with `L` lower triangular, stored row-packed: row `i` occupies
//! `i(i+1)/2 .. i(i+1)/2 + i + 1`. Appending a column costs one triangular
//! solve, O(a²); removing one is a Givens-style rank-one update of the
//! trailing block, also O(a²).

/// Relative pivot threshold below which a new column counts as linearly
/// dependent on the current active set.
pub const SINGULAR_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cholesky {
    dim: usize,
    packed: Vec<f64>,
}

#[inline]
fn row_start(i: usize) -> usize {
    i * (i + 1) / 2
}

impl Cholesky {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn packed(&self) -> &[f64] {
        &self.packed
    }

    pub fn from_packed(dim: usize, packed: Vec<f64>) -> Option<Self> {
        (packed.len() == row_start(dim)).then_some(Self { dim, packed })
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        debug_assert!(j <= i && i < self.dim);
        self.packed[row_start(i) + j]
    }

    /// Appends a column with Gram entries `cross` against the current active
    /// columns and squared norm `diag`. Returns `false`, leaving the factor
    /// untouched, when the new pivot is not safely positive.
    pub fn push(&mut self, cross: &[f64], diag: f64) -> bool {
        assert_eq!(cross.len(), self.dim);
        let mut row = Vec::with_capacity(self.dim + 1);
        let mut sq = 0.0;
        for i in 0..self.dim {
            let start = row_start(i);
            let dot: f64 = self.packed[start..start + i]
                .iter()
                .zip(&row)
                .map(|(l, z)| l * z)
                .sum();
            let z = (cross[i] - dot) / self.packed[start + i];
            sq += z * z;
            row.push(z);
        }
        let pivot = diag - sq;
        if !(pivot > SINGULAR_RTOL * diag.abs().max(f64::MIN_POSITIVE)) {
            return false;
        }
        row.push(pivot.sqrt());
        self.packed.extend_from_slice(&row);
        self.dim += 1;
        true
    }

    /// Deletes row and column `k` of the factored matrix.
    pub fn remove(&mut self, k: usize) {
        assert!(k < self.dim);
        let n = self.dim;
        // Column k below the diagonal becomes a rank-one update of the
        // trailing block.
        let mut v: Vec<f64> = (k + 1..n).map(|i| self.at(i, k)).collect();
        let mut rows: Vec<Vec<f64>> = (0..n)
            .filter(|&i| i != k)
            .map(|i| {
                let start = row_start(i);
                let mut r = self.packed[start..start + i + 1].to_vec();
                if i > k {
                    r.remove(k);
                }
                r
            })
            .collect();
        // Trailing block occupies rows k.. of `rows`, columns k.. of each.
        let m = v.len();
        for t in 0..m {
            let i = k + t;
            let ltt = rows[i][k + t];
            let r = (ltt * ltt + v[t] * v[t]).sqrt();
            let c = r / ltt;
            let s = v[t] / ltt;
            rows[i][k + t] = r;
            for u in t + 1..m {
                let row = &mut rows[k + u];
                row[k + t] = (row[k + t] + s * v[u]) / c;
                v[u] = c * v[u] - s * row[k + t];
            }
        }
        self.packed = rows.into_iter().flatten().collect();
        self.dim = n - 1;
    }

    /// Solves `L Lᵀ x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.dim);
        let n = self.dim;
        let mut z = vec![0.0; n];
        for i in 0..n {
            let start = row_start(i);
            let dot: f64 = self.packed[start..start + i].iter().zip(&z).map(|(l, z)| l * z).sum();
            z[i] = (b[i] - dot) / self.packed[start + i];
        }
        for i in (0..n).rev() {
            let mut acc = z[i];
            for j in i + 1..n {
                acc -= self.at(j, i) * z[j];
            }
            z[i] = acc / self.at(i, i);
        }
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gram(cols: &[Vec<f64>]) -> Vec<Vec<f64>> {
        cols.iter()
            .map(|a| cols.iter().map(|b| a.iter().zip(b).map(|(x, y)| x * y).sum()).collect())
            .collect()
    }

    fn factor(cols: &[Vec<f64>]) -> Cholesky {
        let g = gram(cols);
        let mut c = Cholesky::new();
        for i in 0..cols.len() {
            assert!(c.push(&g[i][..i], g[i][i]));
        }
        c
    }

    fn reconstruct(c: &Cholesky) -> Vec<Vec<f64>> {
        let n = c.dim();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..=i.min(j)).map(|t| c.at(i, t) * c.at(j, t)).sum())
                    .collect()
            })
            .collect()
    }

    fn columns(n: usize, a: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut s = crate::rng::NormalStream::new(seed);
        (0..a).map(|_| (0..n).map(|_| s.next()).collect()).collect()
    }

    #[test]
    fn dependent_column_is_refused() {
        let mut cols = columns(6, 2, 1);
        cols.push(cols[0].iter().zip(&cols[1]).map(|(a, b)| 2.0 * a - b).collect());
        let g = gram(&cols);
        let mut c = Cholesky::new();
        assert!(c.push(&g[0][..0], g[0][0]));
        assert!(c.push(&g[1][..1], g[1][1]));
        let before = c.clone();
        assert!(!c.push(&g[2][..2], g[2][2]));
        assert_eq!(c, before);
    }

    #[test]
    fn packed_round_trip() {
        let c = factor(&columns(8, 3, 2));
        let d = Cholesky::from_packed(3, c.packed().to_vec()).unwrap();
        assert_eq!(c, d);
        assert!(Cholesky::from_packed(3, vec![0.0; 5]).is_none());
    }

    proptest! {
        #[test]
        fn push_reconstructs_gram(seed in 0u64..1000, a in 1usize..7) {
            let cols = columns(10, a, seed);
            let g = gram(&cols);
            let r = reconstruct(&factor(&cols));
            for i in 0..a { for j in 0..a {
                prop_assert!((g[i][j] - r[i][j]).abs() < 1e-9 * (1.0 + g[i][j].abs()));
            }}
        }

        #[test]
        fn remove_matches_refactor(seed in 0u64..1000, a in 2usize..7, k in 0usize..7) {
            let k = k % a;
            let cols = columns(12, a, seed);
            let mut c = factor(&cols);
            c.remove(k);
            let mut rest = cols.clone();
            rest.remove(k);
            let g = gram(&rest);
            let r = reconstruct(&c);
            for i in 0..a - 1 { for j in 0..a - 1 {
                prop_assert!((g[i][j] - r[i][j]).abs() < 1e-9 * (1.0 + g[i][j].abs()));
            }}
            for i in 0..a - 1 { prop_assert!(c.at(i, i) > 0.0); }
        }

        #[test]
        fn solve_inverts_gram(seed in 0u64..1000, a in 1usize..7) {
            let cols = columns(10, a, seed);
            let g = gram(&cols);
            let b: Vec<f64> = (0..a).map(|i| (i as f64) - 1.5).collect();
            let x = factor(&cols).solve(&b);
            for i in 0..a {
                let gx: f64 = (0..a).map(|j| g[i][j] * x[j]).sum();
                prop_assert!((gx - b[i]).abs() < 1e-8);
            }
        }
    }
}
