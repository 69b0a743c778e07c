//! File-backed dense matrices.
//!
//! A stored matrix is a 64-byte little-endian header followed by the
//! column-major `f64` payload. Files are memory mapped, so a matrix larger
//! than RAM is paged in from disk one column (or one element) at a time.
//!
//! Header layout (all integers little-endian):
//!
//! | bytes  | field                         |
//! |--------|-------------------------------|
//! | 0..8   | magic `BIGSELFM`              |
//! | 8..12  | format version (`u32`)        |
//! | 12..16 | reserved, zero                |
//! | 16..24 | `n_rows` (`u64`)              |
//! | 24..32 | `n_cols` (`u64`)              |
//! | 32     | layout (0 = column-major)     |
//! | 33     | dtype (0 = float64)           |
//! | 34..64 | zero padding                  |
//!
//! Concurrent readers of a read-only matrix are safe. Writers must own the
//! region they write; nothing here enforces that.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};

use memmap2::{Mmap, MmapMut, MmapOptions};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 8] = *b"BIGSELFM";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 64;

/// Columns whose sample standard deviation falls below this are constant.
pub const DEGENERATE_SD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    ColumnMajor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    Float64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatrixHeader {
    pub version: u32,
    pub n_rows: usize,
    pub n_cols: usize,
    pub layout: Layout,
    pub dtype: DType,
}

impl MatrixHeader {
    pub fn new(n_rows: usize, n_cols: usize) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::Dimension(format!(
                "matrix dimensions must be positive, got {n_rows}x{n_cols}"
            )));
        }
        Ok(Self {
            version: FORMAT_VERSION,
            n_rows,
            n_cols,
            layout: Layout::ColumnMajor,
            dtype: DType::Float64,
        })
    }

    pub fn payload_bytes(&self) -> u64 {
        8 * self.n_rows as u64 * self.n_cols as u64
    }

    pub fn file_len(&self) -> u64 {
        HEADER_LEN as u64 + self.payload_bytes()
    }

    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut buf = [0u8; HEADER_LEN];
        buf[0..8].copy_from_slice(&MAGIC);
        buf[8..12].copy_from_slice(&self.version.to_le_bytes());
        buf[16..24].copy_from_slice(&(self.n_rows as u64).to_le_bytes());
        buf[24..32].copy_from_slice(&(self.n_cols as u64).to_le_bytes());
        buf[32] = match self.layout {
            Layout::ColumnMajor => 0,
        };
        buf[33] = match self.dtype {
            DType::Float64 => 0,
        };
        buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!(
                "matrix header needs {HEADER_LEN} bytes, found {}",
                bytes.len()
            )));
        }
        if bytes[0..8] != MAGIC {
            return Err(Error::Format("bad matrix magic".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported matrix format version {version}"
            )));
        }
        let n_rows = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let n_cols = u64::from_le_bytes(bytes[24..32].try_into().unwrap());
        if bytes[32] != 0 {
            return Err(Error::Format(format!("unknown layout tag {}", bytes[32])));
        }
        if bytes[33] != 0 {
            return Err(Error::Format(format!("unknown dtype tag {}", bytes[33])));
        }
        let n_rows = usize::try_from(n_rows).map_err(|_| Error::Format("row count overflow".into()))?;
        let n_cols = usize::try_from(n_cols).map_err(|_| Error::Format("column count overflow".into()))?;
        MatrixHeader::new(n_rows, n_cols).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Column-wise read access shared by every matrix backend the solver consumes.
pub trait ColumnSource: Sync {
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;

    /// Copies column `j` into `out`, which must have length `n_rows`.
    fn read_column(&self, j: usize, out: &mut [f64]) -> Result<()>;

    fn get(&self, i: usize, j: usize) -> Result<f64>;
}

/// Column-wise write access.
pub trait ColumnStore: ColumnSource {
    fn write_column(&mut self, j: usize, data: &[f64]) -> Result<()>;

    fn set(&mut self, i: usize, j: usize, v: f64) -> Result<()>;
}

fn check_index(i: usize, j: usize, rows: usize, cols: usize) -> Result<()> {
    if i >= rows || j >= cols {
        return Err(Error::Index {
            row: i,
            col: j,
            rows,
            cols,
        });
    }
    Ok(())
}

fn check_column(j: usize, len: usize, rows: usize, cols: usize) -> Result<()> {
    if j >= cols {
        return Err(Error::Index {
            row: 0,
            col: j,
            rows,
            cols,
        });
    }
    if len != rows {
        return Err(Error::Dimension(format!(
            "column buffer has length {len}, expected {rows}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessMode {
    ReadOnly,
    ReadWrite,
}

enum Mapping {
    ReadOnly(Mmap),
    ReadWrite(MmapMut),
}

impl Mapping {
    fn bytes(&self) -> &[u8] {
        match self {
            Mapping::ReadOnly(m) => m,
            Mapping::ReadWrite(m) => m,
        }
    }
}

/// A memory-mapped matrix file.
pub struct StoredMatrix {
    header: MatrixHeader,
    path: PathBuf,
    map: Mapping,
}

impl std::fmt::Debug for StoredMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StoredMatrix")
            .field("path", &self.path)
            .field("n_rows", &self.header.n_rows)
            .field("n_cols", &self.header.n_cols)
            .field("mode", &self.mode())
            .finish()
    }
}

/// Free bytes on the filesystem holding `path`, if the platform can tell us.
pub fn available_space(path: &Path) -> Option<u64> {
    #[cfg(unix)]
    {
        use std::ffi::CString;
        use std::os::unix::ffi::OsStrExt;

        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let c = CString::new(dir.as_os_str().as_bytes()).ok()?;
        let mut st: libc::statvfs = unsafe { std::mem::zeroed() };
        // SAFETY: `c` is a valid NUL-terminated path and `st` is writable.
        let rc = unsafe { libc::statvfs(c.as_ptr(), &mut st) };
        if rc != 0 {
            return None;
        }
        Some(st.f_bavail as u64 * st.f_frsize as u64)
    }
    #[cfg(not(unix))]
    {
        let _ = path;
        None
    }
}

fn reserve(file: &File, path: &Path, len: u64) -> Result<()> {
    #[cfg(target_os = "linux")]
    {
        use std::os::unix::io::AsRawFd;
        // SAFETY: the descriptor is owned by `file` and stays open for the call.
        let rc = unsafe { libc::posix_fallocate(file.as_raw_fd(), 0, len as libc::off_t) };
        match rc {
            0 => return Ok(()),
            libc::ENOSPC => {
                return Err(Error::DiskFull {
                    path: path.to_path_buf(),
                    needed: len,
                    available: available_space(path).unwrap_or(0),
                })
            }
            // Filesystems without fallocate support fall through to set_len.
            libc::EOPNOTSUPP | libc::EINVAL => {}
            err => return Err(Error::io(path, std::io::Error::from_raw_os_error(err))),
        }
    }
    file.set_len(len).map_err(|e| Error::io(path, e))
}

impl StoredMatrix {
    /// Creates a zero-filled matrix file. Refuses to replace an existing file.
    pub fn create(path: impl AsRef<Path>, n_rows: usize, n_cols: usize) -> Result<Self> {
        Self::create_with(path.as_ref(), n_rows, n_cols, false)
    }

    /// Like [`StoredMatrix::create`] but replaces any existing file.
    pub fn create_overwrite(path: impl AsRef<Path>, n_rows: usize, n_cols: usize) -> Result<Self> {
        Self::create_with(path.as_ref(), n_rows, n_cols, true)
    }

    fn create_with(path: &Path, n_rows: usize, n_cols: usize, overwrite: bool) -> Result<Self> {
        let header = MatrixHeader::new(n_rows, n_cols)?;
        let len = header.file_len();
        if path.exists() && !overwrite {
            return Err(Error::AlreadyExists(path.to_path_buf()));
        }
        if let Some(avail) = available_space(path) {
            let existing = std::fs::metadata(path).map(|m| m.len()).unwrap_or(0);
            if len > avail + existing {
                return Err(Error::DiskFull {
                    path: path.to_path_buf(),
                    needed: len,
                    available: avail,
                });
            }
        }
        let mut opts = OpenOptions::new();
        opts.read(true).write(true);
        if overwrite {
            opts.create(true).truncate(true);
        } else {
            opts.create_new(true);
        }
        let mut file = opts.open(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                Error::AlreadyExists(path.to_path_buf())
            } else {
                Error::io(path, e)
            }
        })?;
        reserve(&file, path, len)?;
        file.write_all(&header.encode()).map_err(|e| Error::io(path, e))?;
        // SAFETY: the file was just sized to `len` and is owned by this handle;
        // external truncation while mapped is outside the supported contract.
        let map = unsafe { MmapOptions::new().map_mut(&file) }.map_err(|e| Error::io(path, e))?;
        Ok(Self {
            header,
            path: path.to_path_buf(),
            map: Mapping::ReadWrite(map),
        })
    }

    /// Opens an existing matrix file, validating its header and length.
    pub fn open(path: impl AsRef<Path>, mode: AccessMode) -> Result<Self> {
        let path = path.as_ref();
        let file = OpenOptions::new()
            .read(true)
            .write(mode == AccessMode::ReadWrite)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let actual = file.metadata().map_err(|e| Error::io(path, e))?.len();
        if actual < HEADER_LEN as u64 {
            return Err(Error::Format(format!(
                "{} is too short to hold a matrix header",
                path.display()
            )));
        }
        // SAFETY: see `create_with`.
        let map = match mode {
            AccessMode::ReadOnly => {
                Mapping::ReadOnly(unsafe { Mmap::map(&file) }.map_err(|e| Error::io(path, e))?)
            }
            AccessMode::ReadWrite => Mapping::ReadWrite(
                unsafe { MmapOptions::new().map_mut(&file) }.map_err(|e| Error::io(path, e))?,
            ),
        };
        let header = MatrixHeader::decode(map.bytes())?;
        if header.file_len() != actual {
            return Err(Error::Format(format!(
                "{}: file length {actual} does not match header ({} expected)",
                path.display(),
                header.file_len()
            )));
        }
        Ok(Self {
            header,
            path: path.to_path_buf(),
            map,
        })
    }

    pub fn header(&self) -> &MatrixHeader {
        &self.header
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn mode(&self) -> AccessMode {
        match self.map {
            Mapping::ReadOnly(_) => AccessMode::ReadOnly,
            Mapping::ReadWrite(_) => AccessMode::ReadWrite,
        }
    }

    /// Makes all writes durable.
    pub fn flush(&self) -> Result<()> {
        match &self.map {
            Mapping::ReadOnly(_) => Ok(()),
            Mapping::ReadWrite(m) => m.flush().map_err(|e| Error::io(&self.path, e)),
        }
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        HEADER_LEN + 8 * (j * self.header.n_rows + i)
    }

    fn column_bytes(&self, j: usize) -> &[u8] {
        let start = self.offset(0, j);
        &self.map.bytes()[start..start + 8 * self.header.n_rows]
    }

    fn writable(&mut self) -> Result<&mut MmapMut> {
        match &mut self.map {
            Mapping::ReadWrite(m) => Ok(m),
            Mapping::ReadOnly(_) => Err(Error::ReadOnly(self.path.display().to_string())),
        }
    }

    /// Element read without bounds checks beyond the slice index.
    #[inline]
    pub(crate) fn get_unchecked(&self, i: usize, j: usize) -> f64 {
        let o = self.offset(i, j);
        f64::from_le_bytes(self.map.bytes()[o..o + 8].try_into().unwrap())
    }

    /// Stores a whole column; the caller guarantees `j` and `data.len()` are valid.
    pub(crate) fn put_unchecked(&mut self, i: usize, j: usize, v: f64) -> Result<()> {
        let o = self.offset(i, j);
        let map = self.writable()?;
        map[o..o + 8].copy_from_slice(&v.to_le_bytes());
        Ok(())
    }
}

impl ColumnSource for StoredMatrix {
    fn n_rows(&self) -> usize {
        self.header.n_rows
    }

    fn n_cols(&self) -> usize {
        self.header.n_cols
    }

    fn read_column(&self, j: usize, out: &mut [f64]) -> Result<()> {
        check_column(j, out.len(), self.header.n_rows, self.header.n_cols)?;
        for (dst, src) in out.iter_mut().zip(self.column_bytes(j).chunks_exact(8)) {
            *dst = f64::from_le_bytes(src.try_into().unwrap());
        }
        Ok(())
    }

    fn get(&self, i: usize, j: usize) -> Result<f64> {
        check_index(i, j, self.header.n_rows, self.header.n_cols)?;
        Ok(self.get_unchecked(i, j))
    }
}

impl ColumnStore for StoredMatrix {
    fn write_column(&mut self, j: usize, data: &[f64]) -> Result<()> {
        check_column(j, data.len(), self.header.n_rows, self.header.n_cols)?;
        let start = self.offset(0, j);
        let map = self.writable()?;
        for (dst, v) in map[start..start + 8 * data.len()].chunks_exact_mut(8).zip(data) {
            dst.copy_from_slice(&v.to_le_bytes());
        }
        Ok(())
    }

    fn set(&mut self, i: usize, j: usize, v: f64) -> Result<()> {
        check_index(i, j, self.header.n_rows, self.header.n_cols)?;
        self.put_unchecked(i, j, v)
    }
}

/// An in-memory column-major matrix with the same access surface as
/// [`StoredMatrix`]. Used by the dense reference pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Result<Self> {
        MatrixHeader::new(n_rows, n_cols)?;
        Ok(Self {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        })
    }

    /// Builds a matrix from column-major data.
    pub fn from_column_major(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self> {
        MatrixHeader::new(n_rows, n_cols)?;
        if data.len() != n_rows * n_cols {
            return Err(Error::Dimension(format!(
                "expected {} values for a {n_rows}x{n_cols} matrix, got {}",
                n_rows * n_cols,
                data.len()
            )));
        }
        Ok(Self { n_rows, n_cols, data })
    }

    /// Reads a whole source matrix into memory.
    pub fn load<M: ColumnSource + ?Sized>(src: &M) -> Result<Self> {
        let (n, m) = (src.n_rows(), src.n_cols());
        let mut out = Self::zeros(n, m)?;
        for j in 0..m {
            src.read_column(j, &mut out.data[j * n..(j + 1) * n])?;
        }
        Ok(out)
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.n_rows..(j + 1) * self.n_rows]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.n_rows..(j + 1) * self.n_rows]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

impl ColumnSource for DenseMatrix {
    fn n_rows(&self) -> usize {
        self.n_rows
    }

    fn n_cols(&self) -> usize {
        self.n_cols
    }

    fn read_column(&self, j: usize, out: &mut [f64]) -> Result<()> {
        check_column(j, out.len(), self.n_rows, self.n_cols)?;
        out.copy_from_slice(self.column(j));
        Ok(())
    }

    fn get(&self, i: usize, j: usize) -> Result<f64> {
        check_index(i, j, self.n_rows, self.n_cols)?;
        Ok(self.data[j * self.n_rows + i])
    }
}

impl ColumnStore for DenseMatrix {
    fn write_column(&mut self, j: usize, data: &[f64]) -> Result<()> {
        check_column(j, data.len(), self.n_rows, self.n_cols)?;
        self.column_mut(j).copy_from_slice(data);
        Ok(())
    }

    fn set(&mut self, i: usize, j: usize, v: f64) -> Result<()> {
        check_index(i, j, self.n_rows, self.n_cols)?;
        self.data[j * self.n_rows + i] = v;
        Ok(())
    }
}

/// The logical matrix `[X | D]`: original predictors on the left (never
/// written through this view) and a writable dummy block on the right.
#[derive(Debug)]
pub struct AugmentedMatrix {
    left: StoredMatrix,
    right: StoredMatrix,
}

impl AugmentedMatrix {
    pub fn new(left: StoredMatrix, right: StoredMatrix) -> Result<Self> {
        if left.n_rows() != right.n_rows() {
            return Err(Error::Dimension(format!(
                "augmented blocks disagree on rows: {} vs {}",
                left.n_rows(),
                right.n_rows()
            )));
        }
        Ok(Self { left, right })
    }

    /// Number of original columns `p`.
    pub fn n_original(&self) -> usize {
        self.left.n_cols()
    }

    /// Number of dummy columns `L`.
    pub fn n_dummies(&self) -> usize {
        self.right.n_cols()
    }

    pub fn original(&self) -> &StoredMatrix {
        &self.left
    }

    pub fn dummy_block(&self) -> &StoredMatrix {
        &self.right
    }

    pub fn dummy_block_mut(&mut self) -> &mut StoredMatrix {
        &mut self.right
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) -> Result<()> {
        let p = self.n_original();
        check_index(i, j, self.n_rows(), self.n_cols())?;
        if j < p {
            return Err(Error::ReadOnly(format!(
                "column {j} belongs to the original block of an augmented matrix"
            )));
        }
        self.right.set(i, j - p, v)
    }

    pub fn flush(&self) -> Result<()> {
        self.right.flush()
    }
}

impl ColumnSource for AugmentedMatrix {
    fn n_rows(&self) -> usize {
        self.left.n_rows()
    }

    fn n_cols(&self) -> usize {
        self.left.n_cols() + self.right.n_cols()
    }

    fn read_column(&self, j: usize, out: &mut [f64]) -> Result<()> {
        let p = self.n_original();
        check_column(j, out.len(), self.n_rows(), self.n_cols())?;
        if j < p {
            self.left.read_column(j, out)
        } else {
            self.right.read_column(j - p, out)
        }
    }

    fn get(&self, i: usize, j: usize) -> Result<f64> {
        let p = self.n_original();
        check_index(i, j, self.n_rows(), self.n_cols())?;
        if j < p {
            self.left.get(i, j)
        } else {
            self.right.get(i, j - p)
        }
    }
}

/// Location and scale removed from a column by [`standardize_columns`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnScale {
    pub column: usize,
    pub mean: f64,
    pub sd: f64,
}

/// Sample mean and standard deviation (divisor `n - 1`).
pub fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let ss: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Standardizes one column buffer in place.
pub fn standardize_slice(column: usize, x: &mut [f64]) -> Result<ColumnScale> {
    if x.len() < 2 {
        return Err(Error::DegenerateColumn(column));
    }
    let (mean, sd) = mean_sd(x);
    if !(sd >= DEGENERATE_SD) {
        return Err(Error::DegenerateColumn(column));
    }
    for v in x.iter_mut() {
        *v = (*v - mean) / sd;
    }
    Ok(ColumnScale { column, mean, sd })
}

/// Rescales every column in `cols` to zero mean and unit sample variance,
/// returning the original location and scale of each.
pub fn standardize_columns<M: ColumnStore + ?Sized>(
    m: &mut M,
    cols: Range<usize>,
) -> Result<Vec<ColumnScale>> {
    if cols.end > m.n_cols() {
        return Err(Error::Index {
            row: 0,
            col: cols.end.saturating_sub(1),
            rows: m.n_rows(),
            cols: m.n_cols(),
        });
    }
    let mut buf = vec![0.0; m.n_rows()];
    let mut report = Vec::with_capacity(cols.len());
    for j in cols {
        m.read_column(j, &mut buf)?;
        report.push(standardize_slice(j, &mut buf)?);
        m.write_column(j, &buf)?;
    }
    Ok(report)
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive 64-bit digest of the bit patterns of a column.
pub fn slice_digest(values: &[f64]) -> u64 {
    let mut h = 0x5851_f42d_4c95_7f2d ^ values.len() as u64;
    for v in values {
        h = mix64(h ^ v.to_bits()).wrapping_add(0x9e37_79b9_7f4a_7c15);
    }
    h
}

/// Per-column digests of a contiguous block of columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockDigest {
    pub columns: Vec<u64>,
}

impl BlockDigest {
    pub fn of<M: ColumnSource + ?Sized>(m: &M, cols: Range<usize>) -> Result<Self> {
        let mut buf = vec![0.0; m.n_rows()];
        let mut columns = Vec::with_capacity(cols.len());
        for j in cols {
            m.read_column(j, &mut buf)?;
            columns.push(slice_digest(&buf));
        }
        Ok(Self { columns })
    }

    /// Folds the per-column digests into one value.
    pub fn combined(&self) -> u64 {
        self.columns
            .iter()
            .fold(0x2545_f491_4f6c_dd1d ^ self.columns.len() as u64, |h, &c| mix64(h ^ c))
    }

    pub fn first_mismatch(&self, other: &BlockDigest) -> Option<usize> {
        if self.columns.len() != other.columns.len() {
            return Some(self.columns.len().min(other.columns.len()));
        }
        self.columns.iter().zip(&other.columns).position(|(a, b)| a != b)
    }
}

/// Copies any column source into a new matrix file.
pub fn write_matrix<M: ColumnSource + ?Sized>(src: &M, path: impl AsRef<Path>) -> Result<StoredMatrix> {
    let mut out = StoredMatrix::create_overwrite(path, src.n_rows(), src.n_cols())?;
    let mut buf = vec![0.0; src.n_rows()];
    for j in 0..src.n_cols() {
        src.read_column(j, &mut buf)?;
        out.write_column(j, &buf)?;
    }
    out.flush()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn create_sets_exact_length() {
        let dir = tmp();
        let path = dir.path().join("m.fbm");
        let m = StoredMatrix::create(&path, 2, 3).unwrap();
        assert_eq!(m.mode(), AccessMode::ReadWrite);
        assert_eq!(std::fs::metadata(&path).unwrap().len(), HEADER_LEN as u64 + 48);
    }

    #[test]
    fn zero_dimension_is_rejected() {
        let dir = tmp();
        let err = StoredMatrix::create(dir.path().join("m.fbm"), 0, 3).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn create_refuses_existing_file() {
        let dir = tmp();
        let path = dir.path().join("m.fbm");
        StoredMatrix::create(&path, 2, 2).unwrap();
        assert!(matches!(
            StoredMatrix::create(&path, 2, 2).unwrap_err(),
            Error::AlreadyExists(_)
        ));
        StoredMatrix::create_overwrite(&path, 3, 1).unwrap();
    }

    #[test]
    fn header_round_trips_through_open() {
        let dir = tmp();
        let path = dir.path().join("m.fbm");
        let created = *StoredMatrix::create(&path, 7, 5).unwrap().header();
        let opened = StoredMatrix::open(&path, AccessMode::ReadOnly).unwrap();
        assert_eq!(created, *opened.header());
    }

    #[test]
    fn bad_magic_and_truncation_are_format_errors() {
        let dir = tmp();
        let path = dir.path().join("m.fbm");
        StoredMatrix::create(&path, 2, 2).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.pop();
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            StoredMatrix::open(&path, AccessMode::ReadOnly).unwrap_err(),
            Error::Format(_)
        ));
        bytes.push(0);
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            StoredMatrix::open(&path, AccessMode::ReadOnly).unwrap_err(),
            Error::Format(_)
        ));
    }

    #[test]
    fn column_major_element_access() {
        let dir = tmp();
        let mut m = StoredMatrix::create(dir.path().join("m.fbm"), 2, 2).unwrap();
        m.write_column(0, &[1.0, 3.0]).unwrap();
        m.write_column(1, &[2.0, 4.0]).unwrap();
        assert_eq!(m.get(0, 1).unwrap(), 2.0);
        assert!(matches!(m.get(5, 0).unwrap_err(), Error::Index { .. }));
        m.set(0, 0, 7.5).unwrap();
        assert_eq!(m.get(0, 0).unwrap(), 7.5);
    }

    #[test]
    fn read_only_handle_rejects_writes() {
        let dir = tmp();
        let path = dir.path().join("m.fbm");
        StoredMatrix::create(&path, 2, 2).unwrap().flush().unwrap();
        let mut m = StoredMatrix::open(&path, AccessMode::ReadOnly).unwrap();
        assert!(matches!(m.set(0, 0, 1.0).unwrap_err(), Error::ReadOnly(_)));
        assert!(matches!(m.write_column(0, &[1.0, 2.0]).unwrap_err(), Error::ReadOnly(_)));
    }

    #[test]
    fn writes_persist_after_flush() {
        let dir = tmp();
        let path = dir.path().join("m.fbm");
        {
            let mut m = StoredMatrix::create(&path, 3, 1).unwrap();
            m.set(2, 0, -1.25).unwrap();
            m.flush().unwrap();
        }
        let m = StoredMatrix::open(&path, AccessMode::ReadOnly).unwrap();
        assert_eq!(m.get(2, 0).unwrap(), -1.25);
    }

    #[test]
    fn identity_columns_and_updates() {
        let dir = tmp();
        let mut m = StoredMatrix::create(dir.path().join("m.fbm"), 3, 3).unwrap();
        for i in 0..3 {
            m.set(i, i, 1.0).unwrap();
        }
        let mut buf = [0.0; 3];
        m.read_column(1, &mut buf).unwrap();
        assert_eq!(buf, [0.0, 1.0, 0.0]);
        m.set(2, 1, 4.0).unwrap();
        m.read_column(1, &mut buf).unwrap();
        assert_eq!(buf, [0.0, 1.0, 4.0]);
        assert!(m.read_column(3, &mut buf).is_err());
        assert!(m.read_column(0, &mut [0.0; 2]).is_err());
    }

    #[test]
    fn streamed_column_checksum_matches_elementwise() {
        let dir = tmp();
        let (n, p) = (13, 4);
        let mut m = StoredMatrix::create(dir.path().join("m.fbm"), n, p).unwrap();
        for j in 0..p {
            for i in 0..n {
                m.set(i, j, ((i * 31 + j * 7) as f64).sin()).unwrap();
            }
        }
        let mut buf = vec![0.0; n];
        for j in 0..p {
            m.read_column(j, &mut buf).unwrap();
            let elementwise: Vec<f64> = (0..n).map(|i| m.get(i, j).unwrap()).collect();
            assert_eq!(slice_digest(&buf), slice_digest(&elementwise));
        }
    }

    #[test]
    fn standardize_small_column() {
        let mut m = DenseMatrix::from_column_major(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let report = standardize_columns(&mut m, 0..1).unwrap();
        assert_eq!(report[0].mean, 2.0);
        assert_eq!(report[0].sd, 1.0);
        assert_eq!(m.column(0), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn constant_column_is_degenerate() {
        let mut m = DenseMatrix::from_column_major(3, 2, vec![1.0, 2.0, 4.0, 5.0, 5.0, 5.0]).unwrap();
        assert!(matches!(
            standardize_columns(&mut m, 0..2).unwrap_err(),
            Error::DegenerateColumn(1)
        ));
    }

    #[test]
    fn augmented_dispatch_and_left_protection() {
        let dir = tmp();
        let mut left = StoredMatrix::create(dir.path().join("x.fbm"), 2, 2).unwrap();
        left.write_column(1, &[5.0, 6.0]).unwrap();
        let right = StoredMatrix::create(dir.path().join("d.fbm"), 2, 3).unwrap();
        let mut aug = AugmentedMatrix::new(left, right).unwrap();
        assert_eq!(aug.n_cols(), 5);
        assert_eq!(aug.get(1, 1).unwrap(), 6.0);
        aug.set(0, 3, 9.0).unwrap();
        assert_eq!(aug.dummy_block().get(0, 1).unwrap(), 9.0);
        assert!(matches!(aug.set(0, 1, 1.0).unwrap_err(), Error::ReadOnly(_)));
        assert!(aug.get(0, 5).is_err());
    }

    #[test]
    fn augmented_rejects_row_mismatch() {
        let dir = tmp();
        let left = StoredMatrix::create(dir.path().join("x.fbm"), 2, 2).unwrap();
        let right = StoredMatrix::create(dir.path().join("d.fbm"), 3, 2).unwrap();
        assert!(AugmentedMatrix::new(left, right).is_err());
    }
}
