//! Row-blocked matrices on disk.
//!
//! A matrix directory holds `manifest.txt` plus one `block_NNN.bin` per row
//! block. Each block file starts with a 64-byte little-endian header
//!
//! | offset | field                          |
//! |-------:|--------------------------------|
//! | 0      | magic `STSBLK01`               |
//! | 8      | version `u32`, flags `u32`     |
//! | 16     | rows `u64`                     |
//! | 24     | cols `u64`                     |
//! | 32     | y-index start `u64`            |
//! | 40     | y-index end `u64`              |
//! | 48     | grid hash `u64`                |
//! | 56     | reserved `u64`                 |
//!
//! followed by `rows * cols` column-major `f64` values.

use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::CommonGrid;
use crate::manifest::Manifest;
use crate::meta::{ColumnDescriptor, Variable};

pub const BLOCK_MAGIC: &[u8; 8] = b"STSBLK01";
pub const BLOCK_VERSION: u32 = 1;
pub const HEADER_LEN: u64 = 64;
pub const MANIFEST_FILE: &str = "manifest.txt";
const FORMAT_NAME: &str = "stsurr-blocks";

/// Read access to a D×N matrix split into row blocks.
///
/// Implementors must be safe to read from several threads at once.
pub trait BlockSource: Sync {
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;
    fn n_blocks(&self) -> usize;
    /// Flat row range covered by block `k`.
    fn block_rows(&self, k: usize) -> Range<usize>;
    fn read_block(&self, k: usize) -> Result<DMatrix<f64>>;

    /// Reassembles the full matrix. Only sensible at small sizes.
    fn to_dense(&self) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.n_rows(), self.n_cols());
        for k in 0..self.n_blocks() {
            let rows = self.block_rows(k);
            let b = self.read_block(k)?;
            out.rows_mut(rows.start, rows.len()).copy_from(&b);
        }
        Ok(out)
    }

    fn read_column(&self, j: usize) -> Result<Vec<f64>> {
        if j >= self.n_cols() {
            return Err(Error::IndexOutOfRange {
                index: j,
                len: self.n_cols(),
            });
        }
        let mut out = Vec::with_capacity(self.n_rows());
        for k in 0..self.n_blocks() {
            out.extend(self.read_block(k)?.column(j).iter());
        }
        Ok(out)
    }
}

/// In-memory row blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseBlocks {
    blocks: Vec<DMatrix<f64>>,
    offsets: Vec<usize>,
}

impl DenseBlocks {
    pub fn new(blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let n_cols = blocks.first().map_or(0, |b| b.ncols());
        let mut offsets = vec![0];
        for b in &blocks {
            if b.ncols() != n_cols {
                return Err(Error::DimensionMismatch {
                    expected: n_cols,
                    actual: b.ncols(),
                });
            }
            offsets.push(offsets.last().unwrap() + b.nrows());
        }
        Ok(Self { blocks, offsets })
    }

    /// Splits `m` at the given row counts.
    pub fn split(m: &DMatrix<f64>, row_counts: &[usize]) -> Result<Self> {
        let total: usize = row_counts.iter().sum();
        if total != m.nrows() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                actual: total,
            });
        }
        let mut start = 0;
        let blocks = row_counts
            .iter()
            .map(|&n| {
                let b = m.rows(start, n).into_owned();
                start += n;
                b
            })
            .collect();
        Self::new(blocks)
    }

    /// Splits `m` into `k` near-equal row blocks.
    pub fn split_even(m: &DMatrix<f64>, k: usize) -> Result<Self> {
        let counts: Vec<usize> = crate::grid::even_split(m.nrows(), k)?
            .into_iter()
            .map(|r| r.len())
            .collect();
        Self::split(m, &counts)
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn into_blocks(self) -> Vec<DMatrix<f64>> {
        self.blocks
    }
}

impl BlockSource for DenseBlocks {
    fn n_rows(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    fn n_cols(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.ncols())
    }

    fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    fn block_rows(&self, k: usize) -> Range<usize> {
        self.offsets[k]..self.offsets[k + 1]
    }

    fn read_block(&self, k: usize) -> Result<DMatrix<f64>> {
        self.blocks
            .get(k)
            .cloned()
            .ok_or(Error::IndexOutOfRange {
                index: k,
                len: self.blocks.len(),
            })
    }
}

/// A column subset of another source, in the given column order.
pub struct ColumnSubset<'a, S: BlockSource + ?Sized> {
    inner: &'a S,
    columns: Vec<usize>,
}

impl<'a, S: BlockSource + ?Sized> ColumnSubset<'a, S> {
    pub fn new(inner: &'a S, columns: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = columns.iter().find(|&&c| c >= inner.n_cols()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: inner.n_cols(),
            });
        }
        Ok(Self { inner, columns })
    }
}

impl<S: BlockSource + ?Sized> BlockSource for ColumnSubset<'_, S> {
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    fn n_cols(&self) -> usize {
        self.columns.len()
    }

    fn n_blocks(&self) -> usize {
        self.inner.n_blocks()
    }

    fn block_rows(&self, k: usize) -> Range<usize> {
        self.inner.block_rows(k)
    }

    fn read_block(&self, k: usize) -> Result<DMatrix<f64>> {
        Ok(self.inner.read_block(k)?.select_columns(&self.columns))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockHeader {
    pub rows: u64,
    pub cols: u64,
    pub y_start: u64,
    pub y_end: u64,
    pub grid_hash: u64,
}

impl BlockHeader {
    fn to_bytes(self) -> [u8; HEADER_LEN as usize] {
        let mut out = [0u8; HEADER_LEN as usize];
        out[..8].copy_from_slice(BLOCK_MAGIC);
        out[8..12].copy_from_slice(&BLOCK_VERSION.to_le_bytes());
        for (i, v) in [self.rows, self.cols, self.y_start, self.y_end, self.grid_hash]
            .into_iter()
            .enumerate()
        {
            out[16 + 8 * i..24 + 8 * i].copy_from_slice(&v.to_le_bytes());
        }
        out
    }

    fn from_bytes(b: &[u8], path: &Path) -> Result<Self> {
        let bad = |d: &str| Error::format("block file", format!("{}: {d}", path.display()));
        if &b[..8] != BLOCK_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(b[8..12].try_into().unwrap());
        if version != BLOCK_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let u = |i: usize| u64::from_le_bytes(b[16 + 8 * i..24 + 8 * i].try_into().unwrap());
        Ok(Self {
            rows: u(0),
            cols: u(1),
            y_start: u(2),
            y_end: u(3),
            grid_hash: u(4),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut buf = [0u8; HEADER_LEN as usize];
        f.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf, path)
    }
}

fn f64s_to_bytes(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn bytes_to_f64s(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

/// Writes one block file holding `m` (column-major).
pub fn write_block_file(
    path: &Path,
    m: &DMatrix<f64>,
    y_range: Range<usize>,
    grid_hash: u64,
) -> Result<()> {
    let header = BlockHeader {
        rows: m.nrows() as u64,
        cols: m.ncols() as u64,
        y_start: y_range.start as u64,
        y_end: y_range.end as u64,
        grid_hash,
    };
    let mut bytes = header.to_bytes().to_vec();
    bytes.extend(f64s_to_bytes(m.as_slice()));
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_block_file(path: &Path) -> Result<(BlockHeader, DMatrix<f64>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER_LEN as usize {
        return Err(Error::format("block file", format!("{}: truncated", path.display())));
    }
    let header = BlockHeader::from_bytes(&bytes[..HEADER_LEN as usize], path)?;
    let expected = (header.rows * header.cols * 8) as usize;
    let body = &bytes[HEADER_LEN as usize..];
    if body.len() != expected {
        return Err(Error::format(
            "block file",
            format!("{}: expected {expected} data bytes, found {}", path.display(), body.len()),
        ));
    }
    let m = DMatrix::from_vec(
        header.rows as usize,
        header.cols as usize,
        bytes_to_f64s(body),
    );
    Ok((header, m))
}

fn block_file_name(k: usize) -> String {
    format!("block_{k:03}.bin")
}

/// Writes into `<dir>.tmp` and renames over `dir` on success.
pub(crate) struct StagedDir {
    pub(crate) tmp: PathBuf,
    pub(crate) dest: PathBuf,
}

impl StagedDir {
    pub(crate) fn new(dest: &Path) -> Result<Self> {
        let name = dest
            .file_name()
            .ok_or_else(|| Error::InvalidParameter(format!("bad output dir {}", dest.display())))?
            .to_string_lossy()
            .into_owned();
        let tmp = dest.with_file_name(format!(".{name}.tmp"));
        if tmp.exists() {
            fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
        }
        fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
        Ok(Self {
            tmp,
            dest: dest.to_path_buf(),
        })
    }

    pub(crate) fn commit(self) -> Result<()> {
        if self.dest.exists() {
            fs::remove_dir_all(&self.dest).map_err(|e| Error::io(&self.dest, e))?;
        }
        fs::rename(&self.tmp, &self.dest).map_err(|e| Error::io(&self.dest, e))
    }
}

/// A row-blocked matrix stored in a directory. Columns are snapshots when
/// `descriptors` is non-empty; basis and field matrices carry no descriptors.
#[derive(Debug, Clone)]
pub struct BlockSnapshotMatrix {
    dir: PathBuf,
    grid: CommonGrid,
    n_cols: usize,
    descriptors: Vec<ColumnDescriptor>,
    variable: Option<Variable>,
    extra: Manifest,
}

impl BlockSnapshotMatrix {
    pub fn open(dir: &Path) -> Result<Self> {
        let m = Manifest::read(&dir.join(MANIFEST_FILE))?;
        if m.require("format")? != FORMAT_NAME {
            return Err(Error::format("manifest", "not a block matrix directory"));
        }
        let version: u32 = m.parse("version")?;
        if version != BLOCK_VERSION {
            return Err(Error::format("manifest", format!("unsupported version {version}")));
        }
        let grid = CommonGrid::read_manifest(&m)?;
        let n_cols: usize = m.parse("n_cols")?;
        let n_rows: usize = m.parse("n_rows")?;
        if n_rows != grid.n_points() {
            return Err(Error::DimensionMismatch {
                expected: grid.n_points(),
                actual: n_rows,
            });
        }
        let variable = m.get("variable").map(str::parse).transpose()?;
        let descriptors = m
            .with_prefix("column.")
            .map(|(_, v)| ColumnDescriptor::parse(v))
            .collect::<Result<Vec<_>>>()?;
        if !descriptors.is_empty() && descriptors.len() != n_cols {
            return Err(Error::format(
                "manifest",
                format!("{} descriptors for {n_cols} columns", descriptors.len()),
            ));
        }
        let mut extra = Manifest::new();
        for (k, v) in m.with_prefix("extra.") {
            extra.push(&k["extra.".len()..], v);
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            grid,
            n_cols,
            descriptors,
            variable,
            extra,
        })
    }

    /// Writes a complete matrix given as one dense matrix per grid block.
    pub fn save_blocks(
        dir: &Path,
        grid: &CommonGrid,
        blocks: &[DMatrix<f64>],
        descriptors: &[ColumnDescriptor],
        variable: Option<Variable>,
        extra: &Manifest,
    ) -> Result<Self> {
        if blocks.len() != grid.n_blocks() {
            return Err(Error::DimensionMismatch {
                expected: grid.n_blocks(),
                actual: blocks.len(),
            });
        }
        let n_cols = blocks.first().map_or(0, |b| b.ncols());
        for (k, b) in blocks.iter().enumerate() {
            if b.nrows() != grid.block_rows(k).len() {
                return Err(Error::DimensionMismatch {
                    expected: grid.block_rows(k).len(),
                    actual: b.nrows(),
                });
            }
            if b.ncols() != n_cols {
                return Err(Error::DimensionMismatch {
                    expected: n_cols,
                    actual: b.ncols(),
                });
            }
        }
        let mut w = BlockDirWriter::create(dir, grid, n_cols)?;
        for (k, b) in blocks.iter().enumerate() {
            w.write_block(k, b)?;
        }
        w.finish(descriptors, variable, extra)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn grid(&self) -> &CommonGrid {
        &self.grid
    }

    pub fn descriptors(&self) -> &[ColumnDescriptor] {
        &self.descriptors
    }

    pub fn variable(&self) -> Option<Variable> {
        self.variable
    }

    /// Additional key-value metadata stored with the matrix.
    pub fn extra(&self) -> &Manifest {
        &self.extra
    }

    pub fn block_path(&self, k: usize) -> PathBuf {
        self.dir.join(block_file_name(k))
    }

    fn check_block(&self, k: usize) -> Result<()> {
        if k >= self.grid.n_blocks() {
            return Err(Error::IndexOutOfRange {
                index: k,
                len: self.grid.n_blocks(),
            });
        }
        Ok(())
    }

    fn check_header(&self, k: usize, h: &BlockHeader, path: &Path) -> Result<()> {
        let y = self.grid.block_y_range(k);
        if h.rows as usize != self.grid.block_rows(k).len()
            || h.cols as usize != self.n_cols
            || h.y_start as usize != y.start
            || h.y_end as usize != y.end
            || h.grid_hash != self.grid.hash()
        {
            return Err(Error::format(
                "block file",
                format!("{}: header disagrees with manifest", path.display()),
            ));
        }
        Ok(())
    }
}

impl BlockSource for BlockSnapshotMatrix {
    fn n_rows(&self) -> usize {
        self.grid.n_points()
    }

    fn n_cols(&self) -> usize {
        self.n_cols
    }

    fn n_blocks(&self) -> usize {
        self.grid.n_blocks()
    }

    fn block_rows(&self, k: usize) -> Range<usize> {
        self.grid.block_rows(k)
    }

    fn read_block(&self, k: usize) -> Result<DMatrix<f64>> {
        self.check_block(k)?;
        let path = self.block_path(k);
        let (header, m) = read_block_file(&path)?;
        self.check_header(k, &header, &path)?;
        Ok(m)
    }

    /// Reads only the bytes of column `j` from each block.
    fn read_column(&self, j: usize) -> Result<Vec<f64>> {
        if j >= self.n_cols {
            return Err(Error::IndexOutOfRange {
                index: j,
                len: self.n_cols,
            });
        }
        let mut out = Vec::with_capacity(self.n_rows());
        for k in 0..self.grid.n_blocks() {
            let path = self.block_path(k);
            let header = BlockHeader::read(&path)?;
            self.check_header(k, &header, &path)?;
            let rows = header.rows as usize;
            let mut f = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
            f.seek(SeekFrom::Start(HEADER_LEN + (j * rows * 8) as u64))
                .map_err(|e| Error::io(&path, e))?;
            let mut buf = vec![0u8; rows * 8];
            f.read_exact(&mut buf).map_err(|e| Error::io(&path, e))?;
            out.extend(bytes_to_f64s(&buf));
        }
        Ok(out)
    }
}

fn check_unique(descriptors: &[ColumnDescriptor]) -> Result<()> {
    let mut seen = HashSet::new();
    for d in descriptors {
        if !seen.insert(d.id()) {
            return Err(Error::DuplicateColumn(d.id()));
        }
    }
    Ok(())
}

fn write_manifest(
    dir: &Path,
    grid: &CommonGrid,
    n_cols: usize,
    descriptors: &[ColumnDescriptor],
    variable: Option<Variable>,
    extra: &Manifest,
) -> Result<()> {
    let mut m = Manifest::new();
    m.push("format", FORMAT_NAME);
    m.push("version", BLOCK_VERSION);
    if let Some(v) = variable {
        m.push("variable", v);
    }
    m.push("n_rows", grid.n_points());
    m.push("n_cols", n_cols);
    m.push("n_blocks", grid.n_blocks());
    grid.write_manifest(&mut m);
    for k in 0..grid.n_blocks() {
        m.push(format!("block.{k:03}"), block_file_name(k));
    }
    for (j, d) in descriptors.iter().enumerate() {
        m.push(format!("column.{j:06}"), d.render());
    }
    for (k, v) in extra.entries() {
        m.push(format!("extra.{k}"), v);
    }
    m.write(&dir.join(MANIFEST_FILE))
}

/// Writes a block matrix one whole block at a time (any order), plus optional
/// auxiliary matrix files, then commits the directory atomically.
pub struct BlockDirWriter {
    staged: StagedDir,
    grid: CommonGrid,
    n_cols: usize,
    written: Vec<bool>,
}

impl BlockDirWriter {
    pub fn create(dir: &Path, grid: &CommonGrid, n_cols: usize) -> Result<Self> {
        Ok(Self {
            staged: StagedDir::new(dir)?,
            grid: grid.clone(),
            n_cols,
            written: vec![false; grid.n_blocks()],
        })
    }

    pub fn write_block(&mut self, k: usize, m: &DMatrix<f64>) -> Result<()> {
        if k >= self.grid.n_blocks() {
            return Err(Error::IndexOutOfRange {
                index: k,
                len: self.grid.n_blocks(),
            });
        }
        if m.nrows() != self.grid.block_rows(k).len() || m.ncols() != self.n_cols {
            return Err(Error::DimensionMismatch {
                expected: self.grid.block_rows(k).len() * self.n_cols,
                actual: m.nrows() * m.ncols(),
            });
        }
        write_block_file(
            &self.staged.tmp.join(block_file_name(k)),
            m,
            self.grid.block_y_range(k),
            self.grid.hash(),
        )?;
        self.written[k] = true;
        Ok(())
    }

    pub fn n_blocks(&self) -> usize {
        self.grid.n_blocks()
    }

    /// Reads back a block written earlier, before commit.
    pub fn read_block(&self, k: usize) -> Result<DMatrix<f64>> {
        Ok(read_block_file(&self.staged.tmp.join(block_file_name(k)))?.1)
    }

    /// Stores an auxiliary matrix next to the blocks, as `<name>.bin`.
    pub fn write_aux(&self, name: &str, m: &DMatrix<f64>) -> Result<()> {
        write_block_file(&self.staged.tmp.join(format!("{name}.bin")), m, 0..0, 0)
    }

    pub fn finish(
        self,
        descriptors: &[ColumnDescriptor],
        variable: Option<Variable>,
        extra: &Manifest,
    ) -> Result<BlockSnapshotMatrix> {
        if let Some(k) = self.written.iter().position(|w| !w) {
            return Err(Error::InvalidParameter(format!("block {k} was never written")));
        }
        check_unique(descriptors)?;
        write_manifest(&self.staged.tmp, &self.grid, self.n_cols, descriptors, variable, extra)?;
        let dest = self.staged.dest.clone();
        self.staged.commit()?;
        BlockSnapshotMatrix::open(&dest)
    }
}

/// Reads an auxiliary matrix stored with [`BlockDirWriter::write_aux`].
pub fn read_aux(dir: &Path, name: &str) -> Result<DMatrix<f64>> {
    Ok(read_block_file(&dir.join(format!("{name}.bin")))?.1)
}

/// Streams snapshot columns into block files, one owner per file.
pub struct SnapshotWriter {
    staged: StagedDir,
    grid: CommonGrid,
    variable: Option<Variable>,
    files: Vec<BufWriter<fs::File>>,
    descriptors: Vec<ColumnDescriptor>,
    seen: HashSet<String>,
}

impl SnapshotWriter {
    pub fn create(dir: &Path, grid: &CommonGrid, variable: Option<Variable>) -> Result<Self> {
        let staged = StagedDir::new(dir)?;
        let mut files = Vec::with_capacity(grid.n_blocks());
        for k in 0..grid.n_blocks() {
            let path = staged.tmp.join(block_file_name(k));
            let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = BufWriter::new(f);
            // Column count is patched in `finish`.
            let header = BlockHeader {
                rows: grid.block_rows(k).len() as u64,
                cols: 0,
                y_start: grid.block_y_range(k).start as u64,
                y_end: grid.block_y_range(k).end as u64,
                grid_hash: grid.hash(),
            };
            w.write_all(&header.to_bytes()).map_err(|e| Error::io(&path, e))?;
            files.push(w);
        }
        Ok(Self {
            staged,
            grid: grid.clone(),
            variable,
            files,
            descriptors: Vec::new(),
            seen: HashSet::new(),
        })
    }

    pub fn push_column(&mut self, descriptor: ColumnDescriptor, values: &[f64]) -> Result<()> {
        if values.len() != self.grid.n_points() {
            return Err(Error::DimensionMismatch {
                expected: self.grid.n_points(),
                actual: values.len(),
            });
        }
        if !self.seen.insert(descriptor.id()) {
            return Err(Error::DuplicateColumn(descriptor.id()));
        }
        for (k, w) in self.files.iter_mut().enumerate() {
            let rows = self.grid.block_rows(k);
            w.write_all(&f64s_to_bytes(&values[rows]))
                .map_err(|e| Error::io(&self.staged.tmp, e))?;
        }
        self.descriptors.push(descriptor);
        Ok(())
    }

    pub fn finish(self) -> Result<BlockSnapshotMatrix> {
        let n_cols = self.descriptors.len() as u64;
        for (k, w) in self.files.into_iter().enumerate() {
            let path = self.staged.tmp.join(block_file_name(k));
            let mut f = w.into_inner().map_err(|e| Error::io(&path, e.into_error()))?;
            f.seek(SeekFrom::Start(24)).map_err(|e| Error::io(&path, e))?;
            f.write_all(&n_cols.to_le_bytes())
                .map_err(|e| Error::io(&path, e))?;
            f.sync_all().map_err(|e| Error::io(&path, e))?;
        }
        write_manifest(
            &self.staged.tmp,
            &self.grid,
            self.descriptors.len(),
            &self.descriptors,
            self.variable,
            &Manifest::new(),
        )?;
        let dest = self.staged.dest.clone();
        self.staged.commit()?;
        BlockSnapshotMatrix::open(&dest)
    }
}

/// Writes the snapshot matrix whose columns are `snapshots`, in input order.
pub fn assemble<I>(
    dir: &Path,
    grid: &CommonGrid,
    variable: Option<Variable>,
    snapshots: I,
) -> Result<BlockSnapshotMatrix>
where
    I: IntoIterator<Item = (ColumnDescriptor, Vec<f64>)>,
{
    let mut w = SnapshotWriter::create(dir, grid, variable)?;
    for (d, v) in snapshots {
        w.push_column(d, &v)?;
    }
    w.finish()
}
