//! On-disk solver snapshots (`tlars_k{k}.ckpt`).
//!
//! Layout, all little-endian: magic, format version (u32), experiment index,
//! config hash, dummy-block digest, then the solver state as a sequence of
//! scalars and length-prefixed vectors, then a 64-bit checksum of everything
//! before it. Floats are stored as raw bit patterns so restores are exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Entry, TLarsState};
use crate::chol::Cholesky;
use crate::error::{Error, Result};
use crate::matstore::{BlockDigest, ColumnSource};
use crate::rng::mix64;

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"BIGSELCK";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub k: usize,
    pub config_hash: u64,
    /// Combined digest of the dummy block the state was computed against.
    pub dummy_digest: u64,
    pub state: TLarsState,
}

fn byte_checksum(bytes: &[u8]) -> u64 {
    let mut h = 0x6a09_e667_f3bc_c908 ^ bytes.len() as u64;
    let mut chunks = bytes.chunks_exact(8);
    for c in &mut chunks {
        h = mix64(h ^ u64::from_le_bytes(c.try_into().unwrap()));
    }
    let mut tail = [0u8; 8];
    tail[..chunks.remainder().len()].copy_from_slice(chunks.remainder());
    mix64(h ^ u64::from_le_bytes(tail))
}

struct Encoder(Vec<u8>);

impl Encoder {
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
    fn flag(&mut self, v: bool) {
        self.u64(v as u64);
    }
    fn indices(&mut self, v: &[usize]) {
        self.usize(v.len());
        v.iter().for_each(|&x| self.usize(x));
    }
    fn floats(&mut self, v: &[f64]) {
        self.usize(v.len());
        v.iter().for_each(|&x| self.f64(x));
    }
}

struct Decoder<'a> {
    bytes: &'a [u8],
    at: usize,
}

fn malformed(what: &str) -> Error {
    Error::Format(format!("checkpoint: {what}"))
}

impl Decoder<'_> {
    fn u64(&mut self) -> Result<u64> {
        let end = self.at + 8;
        let chunk = self.bytes.get(self.at..end).ok_or_else(|| malformed("truncated"))?;
        self.at = end;
        Ok(u64::from_le_bytes(chunk.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| malformed("value out of range"))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn flag(&mut self) -> Result<bool> {
        match self.u64()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(malformed("bad flag")),
        }
    }
    fn len(&mut self) -> Result<usize> {
        let n = self.usize()?;
        if n > (self.bytes.len() - self.at) / 8 {
            return Err(malformed("length prefix exceeds file"));
        }
        Ok(n)
    }
    fn indices(&mut self) -> Result<Vec<usize>> {
        let n = self.len()?;
        (0..n).map(|_| self.usize()).collect()
    }
    fn floats(&mut self) -> Result<Vec<f64>> {
        let n = self.len()?;
        (0..n).map(|_| self.f64()).collect()
    }
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let s = &self.state;
        let mut e = Encoder(Vec::with_capacity(256 + 8 * (s.residual.len() + s.chol.packed().len())));
        e.0.extend_from_slice(&CHECKPOINT_MAGIC);
        e.0.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        e.0.extend_from_slice(&[0u8; 4]);
        e.usize(self.k);
        e.u64(self.config_hash);
        e.u64(self.dummy_digest);

        e.usize(s.n_rows);
        e.usize(s.n_original);
        e.usize(s.n_total);
        e.flag(s.lasso);
        e.indices(&s.active);
        e.floats(&s.signs);
        e.floats(&s.coeffs);
        e.floats(&s.residual);
        e.f64(s.residual_norm);
        e.f64(s.max_corr);
        e.f64(s.initial_max_corr);
        e.usize(s.n_dummies_active);
        e.usize(s.step_index);
        e.flag(s.terminal);
        match s.pending {
            Some(p) => {
                e.flag(true);
                e.usize(p.column);
                e.f64(p.sign);
            }
            None => e.flag(false),
        }
        e.indices(&s.skipped);
        match s.dropped {
            Some(j) => {
                e.flag(true);
                e.usize(j);
            }
            None => e.flag(false),
        }
        e.usize(s.chol.dim());
        e.floats(s.chol.packed());

        let sum = byte_checksum(&e.0);
        e.u64(sum);
        e.0
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 24 || bytes[..8] != CHECKPOINT_MAGIC {
            return Err(malformed("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(malformed(&format!("unsupported version {version}")));
        }
        let (body, sum) = bytes.split_at(bytes.len() - 8);
        if byte_checksum(body) != u64::from_le_bytes(sum.try_into().unwrap()) {
            return Err(malformed("checksum mismatch"));
        }
        let mut d = Decoder { bytes: body, at: 16 };
        let k = d.usize()?;
        let config_hash = d.u64()?;
        let dummy_digest = d.u64()?;

        let n_rows = d.usize()?;
        let n_original = d.usize()?;
        let n_total = d.usize()?;
        let lasso = d.flag()?;
        let active = d.indices()?;
        let signs = d.floats()?;
        let coeffs = d.floats()?;
        let residual = d.floats()?;
        let residual_norm = d.f64()?;
        let max_corr = d.f64()?;
        let initial_max_corr = d.f64()?;
        let n_dummies_active = d.usize()?;
        let step_index = d.usize()?;
        let terminal = d.flag()?;
        let pending = if d.flag()? {
            Some(Entry {
                column: d.usize()?,
                sign: d.f64()?,
            })
        } else {
            None
        };
        let skipped = d.indices()?;
        let dropped = if d.flag()? { Some(d.usize()?) } else { None };
        let dim = d.usize()?;
        let packed = d.floats()?;
        if d.at != body.len() {
            return Err(malformed("trailing bytes"));
        }

        let chol = Cholesky::from_packed(dim, packed).ok_or_else(|| malformed("factor size"))?;
        let consistent = signs.len() == active.len()
            && coeffs.len() == active.len()
            && dim == active.len()
            && residual.len() == n_rows
            && n_original <= n_total
            && active.iter().chain(&skipped).all(|&j| j < n_total)
            && active.iter().filter(|&&j| j >= n_original).count() == n_dummies_active;
        if !consistent {
            return Err(malformed("inconsistent solver state"));
        }
        Ok(Self {
            k,
            config_hash,
            dummy_digest,
            state: TLarsState {
                n_rows,
                n_original,
                n_total,
                lasso,
                active,
                signs,
                coeffs,
                residual,
                residual_norm,
                max_corr,
                initial_max_corr,
                n_dummies_active,
                step_index,
                terminal,
                pending,
                skipped,
                dropped,
                chol,
            },
        })
    }

    /// Writes the checkpoint atomically (temporary file, then rename).
    pub fn write(&self, path: impl AsRef<Path>) -> Result<u64> {
        let path = path.as_ref();
        let bytes = self.encode();
        let tmp = path.with_extension("ckpt.tmp");
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        Ok(bytes.len() as u64)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Snapshots `state` against the dummy block currently in `x` and writes it.
    pub fn snapshot<M: ColumnSource + ?Sized>(
        state: &TLarsState,
        x: &M,
        k: usize,
        config_hash: u64,
        path: impl AsRef<Path>,
    ) -> Result<Self> {
        let digest = BlockDigest::of(x, state.n_original..state.n_total)?.combined();
        let ck = Self::with_digest(state, k, config_hash, digest);
        ck.write(path)?;
        Ok(ck)
    }

    pub fn with_digest(state: &TLarsState, k: usize, config_hash: u64, dummy_digest: u64) -> Self {
        Self {
            k,
            config_hash,
            dummy_digest,
            state: state.clone(),
        }
    }

    /// Reads a checkpoint and verifies it against `x`'s dummy block, the
    /// experiment index and the run configuration.
    pub fn restore<M: ColumnSource + ?Sized>(
        path: impl AsRef<Path>,
        x: &M,
        k: usize,
        config_hash: u64,
    ) -> Result<TLarsState> {
        let ck = Self::read(&path)?;
        if x.n_rows() != ck.state.n_rows || x.n_cols() != ck.state.n_total {
            return Err(Error::Reproducibility(format!(
                "checkpoint for a {}x{} design restored against {}x{}",
                ck.state.n_rows,
                ck.state.n_total,
                x.n_rows(),
                x.n_cols()
            )));
        }
        let digest = BlockDigest::of(x, ck.state.n_original..ck.state.n_total)?.combined();
        ck.verify(k, config_hash, digest)?;
        Ok(ck.state)
    }

    /// Checks identity fields against the expected experiment, configuration
    /// and dummy-block digest.
    pub fn verify(&self, k: usize, config_hash: u64, dummy_digest: u64) -> Result<()> {
        if self.k != k {
            return Err(Error::Reproducibility(format!(
                "checkpoint belongs to experiment {}, expected {k}",
                self.k
            )));
        }
        if self.config_hash != config_hash {
            return Err(Error::Reproducibility(format!(
                "checkpoint for experiment {k} was written under a different configuration"
            )));
        }
        if self.dummy_digest != dummy_digest {
            return Err(Error::Reproducibility(format!(
                "dummy block of experiment {k} does not match the checkpoint digest"
            )));
        }
        Ok(())
    }
}
