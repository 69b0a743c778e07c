//! Back-of-the-envelope RAM and disk requirements.
//!
//! Everything is float64. The in-memory figure is what a conventional
//! implementation holds at once: the `K` enlarged matrices `[X | D_k]`. The
//! mapped modes keep matrices on disk and only column buffers and solver
//! states in RAM.

use serde::Serialize;

use crate::dummy::DummyKind;

const F64: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Dims {
    pub n: u64,
    pub p: u64,
    pub n_dummies: u64,
    pub experiments: u64,
}

/// Bytes of a dense `rows × cols` float64 matrix.
pub fn dense_bytes(rows: u64, cols: u64) -> u64 {
    F64 * rows * cols
}

pub fn gib(bytes: u64) -> f64 {
    bytes as f64 / (1u64 << 30) as f64
}

impl Dims {
    /// RAM for all `K` enlarged matrices held in memory.
    pub fn in_memory_bytes(&self) -> u64 {
        self.experiments * dense_bytes(self.n, self.p + self.n_dummies)
    }

    /// Matrix bytes on disk for a mapped run with the given dummy kind.
    pub fn disk_bytes(&self, kind: DummyKind) -> u64 {
        match kind {
            // X plus K enlarged copies.
            DummyKind::FreshGaussian => {
                dense_bytes(self.n, self.p + self.experiments * (self.p + self.n_dummies))
            }
            // X, the reference block and the one working block.
            DummyKind::PermuteS1 | DummyKind::PermuteS2 => {
                dense_bytes(self.n, self.p + 2 * self.n_dummies)
            }
        }
    }

    /// Upper bound on resident solver memory in a mapped run: per experiment
    /// a residual, the packed Cholesky factor of the largest possible active
    /// set, and two column buffers.
    pub fn mapped_ram_bytes(&self) -> u64 {
        let max_active = (self.n.saturating_sub(1)).min(self.p + self.n_dummies);
        let per_experiment = F64 * (self.n + max_active * (max_active + 1) / 2);
        self.experiments * per_experiment + F64 * 4 * self.n
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeRequirement {
    pub mode: String,
    pub ram_bytes: u64,
    pub disk_bytes: u64,
    pub feasible: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityReport {
    pub dims: Dims,
    pub dense_x_bytes: u64,
    pub ram_budget: Option<u64>,
    pub disk_budget: Option<u64>,
    pub modes: Vec<ModeRequirement>,
}

pub fn feasibility(dims: Dims, ram_budget: Option<u64>, disk_budget: Option<u64>) -> FeasibilityReport {
    let fits = |ram: u64, disk: u64| {
        ram_budget.map_or(true, |b| ram <= b) && disk_budget.map_or(true, |b| disk <= b)
    };
    let mut modes = vec![ModeRequirement {
        mode: "in-memory".into(),
        ram_bytes: dims.in_memory_bytes(),
        disk_bytes: 0,
        feasible: fits(dims.in_memory_bytes(), 0),
    }];
    for kind in [DummyKind::FreshGaussian, DummyKind::PermuteS1, DummyKind::PermuteS2] {
        let ram = dims.mapped_ram_bytes();
        let disk = dims.disk_bytes(kind);
        modes.push(ModeRequirement {
            mode: format!("mapped-{kind}"),
            ram_bytes: ram,
            disk_bytes: disk,
            feasible: fits(ram, disk),
        });
    }
    FeasibilityReport {
        dims,
        dense_x_bytes: dense_bytes(dims.n, dims.p),
        ram_budget,
        disk_budget,
        modes,
    }
}

/// Parses sizes such as `5G`, `512M`, `64GiB` or a plain byte count.
pub fn parse_bytes(s: &str) -> Option<u64> {
    let s = s.trim();
    let split = s.find(|c: char| !(c.is_ascii_digit() || c == '.')).unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let value: f64 = num.parse().ok()?;
    let scale = match unit.trim().to_ascii_lowercase().as_str() {
        "" | "b" => 1u64,
        "k" | "kb" | "kib" => 1 << 10,
        "m" | "mb" | "mib" => 1 << 20,
        "g" | "gb" | "gib" => 1 << 30,
        "t" | "tb" | "tib" => 1 << 40,
        _ => return None,
    };
    (value >= 0.0).then(|| (value * scale as f64).round() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(n: u64, p: u64, l: u64, k: u64) -> Dims {
        Dims {
            n,
            p,
            n_dummies: l,
            experiments: k,
        }
    }

    #[test]
    fn dense_design_of_a_million_columns() {
        let bytes = dense_bytes(10_000, 1_000_000);
        assert_eq!(bytes, 80_000_000_000);
        assert!((gib(bytes) - 74.5).abs() < 0.01);
    }

    #[test]
    fn disk_formulas() {
        let d = dims(100, 1000, 1000, 20);
        assert_eq!(d.disk_bytes(DummyKind::FreshGaussian), 8 * 100 * (1000 + 20 * 2000));
        assert_eq!(d.disk_bytes(DummyKind::PermuteS1), 8 * 100 * (1000 + 2000));
        assert_eq!(d.disk_bytes(DummyKind::PermuteS2), d.disk_bytes(DummyKind::PermuteS1));
    }

    #[test]
    fn budgets_decide_feasibility() {
        let r = feasibility(dims(10_000, 1_000_000, 1_000_000, 20), Some(64 << 30), Some(1 << 40));
        assert!(!r.modes[0].feasible);
        let dp = r.modes.iter().find(|m| m.mode == "mapped-s1").unwrap();
        assert!(dp.disk_bytes <= 1 << 40);
    }

    #[test]
    fn byte_sizes_parse() {
        assert_eq!(parse_bytes("5G"), Some(5 << 30));
        assert_eq!(parse_bytes("512MiB"), Some(512 << 20));
        assert_eq!(parse_bytes("1000"), Some(1000));
        assert_eq!(parse_bytes("1.5k"), Some(1536));
        assert_eq!(parse_bytes("x"), None);
    }
}
