//! Singular value decomposition of a row-blocked snapshot matrix.
//!
//! Two routes produce an [`SvdBasis`]:
//!
//! * [`svd_block_qr`] (default): a tall-skinny QR over the row blocks followed
//!   by a small SVD of the root triangular factor.
//! * [`svd_normal_equations`]: eigen-decomposition of the Gram matrix. Cheaper,
//!   but loses roughly half the significant digits on ill-conditioned input.
//!
//! Both stream the matrix block by block, so only one block per worker plus a
//! few `N x N` matrices are resident. Reductions always run in ascending block
//! order, which keeps results bit-identical for any worker count.
//!
//! Left singular vectors are sign-normalized so the entry of largest magnitude
//! in each column is positive, with the earliest index winning ties.

mod normal;
mod tsqr;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::CommonGrid;
use crate::manifest::{join_floats, Manifest};
use crate::store::{
    for_each_block, read_aux, BlockDirWriter, BlockSnapshotMatrix, BlockSource, DenseBlocks,
};

pub use normal::svd_normal_equations;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvdMethod {
    BlockQr,
    NormalEquations,
}

impl fmt::Display for SvdMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SvdMethod::BlockQr => "block_qr",
            SvdMethod::NormalEquations => "normal_equations",
        })
    }
}

impl FromStr for SvdMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "block_qr" => Ok(SvdMethod::BlockQr),
            "normal_equations" => Ok(SvdMethod::NormalEquations),
            other => Err(Error::InvalidParameter(format!("unknown svd method `{other}`"))),
        }
    }
}

/// Where the left singular vectors go while they are being formed.
#[derive(Debug, Clone, Default)]
pub struct SvdOptions {
    /// Subtract the mean snapshot before decomposing.
    pub centered: bool,
    /// Write U straight to a block directory laid out like `grid` instead of
    /// keeping it in memory.
    pub output: Option<(PathBuf, CommonGrid)>,
}

impl SvdOptions {
    pub fn centered(mut self, yes: bool) -> Self {
        self.centered = yes;
        self
    }

    pub fn to_disk(mut self, dir: &Path, grid: &CommonGrid) -> Self {
        self.output = Some((dir.to_path_buf(), grid.clone()));
        self
    }
}

/// Storage for the eigen-snapshots.
#[derive(Debug, Clone)]
pub enum BasisBlocks {
    Memory(DenseBlocks),
    Disk(BlockSnapshotMatrix),
}

impl BlockSource for BasisBlocks {
    fn n_rows(&self) -> usize {
        match self {
            BasisBlocks::Memory(m) => m.n_rows(),
            BasisBlocks::Disk(d) => d.n_rows(),
        }
    }

    fn n_cols(&self) -> usize {
        match self {
            BasisBlocks::Memory(m) => m.n_cols(),
            BasisBlocks::Disk(d) => d.n_cols(),
        }
    }

    fn n_blocks(&self) -> usize {
        match self {
            BasisBlocks::Memory(m) => m.n_blocks(),
            BasisBlocks::Disk(d) => d.n_blocks(),
        }
    }

    fn block_rows(&self, k: usize) -> std::ops::Range<usize> {
        match self {
            BasisBlocks::Memory(m) => m.block_rows(k),
            BasisBlocks::Disk(d) => d.block_rows(k),
        }
    }

    fn read_block(&self, k: usize) -> Result<DMatrix<f64>> {
        match self {
            BasisBlocks::Memory(m) => m.read_block(k),
            BasisBlocks::Disk(d) => d.read_block(k),
        }
    }
}

/// Singular values, eigen-snapshots and right singular vectors of a snapshot
/// matrix, plus the mean snapshot when the matrix was centered first.
#[derive(Debug, Clone)]
pub struct SvdBasis {
    sigma: Vec<f64>,
    u: BasisBlocks,
    v: DMatrix<f64>,
    mean: Option<Vec<f64>>,
    method: SvdMethod,
    effective_rank: usize,
}

/// Projection coefficients of one snapshot onto the eigen-snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub values: Vec<f64>,
    pub source: WeightSource,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WeightSource {
    Snapshot { sim_key: String, timestep: usize },
    Predicted,
    Unlabeled,
}

impl WeightVector {
    pub fn new(values: Vec<f64>, source: WeightSource) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(Self { values, source })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// The two sides of the truncation identity for one rank.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationError {
    pub n: usize,
    /// Sum of squared singular values beyond `n`.
    pub from_sigma: f64,
    /// Squared Frobenius norm of the residual, streamed over blocks.
    pub direct: f64,
}

impl TruncationError {
    /// `|direct - from_sigma|` divided by `scale`.
    pub fn relative_gap(&self, scale: f64) -> f64 {
        (self.direct - self.from_sigma).abs() / scale
    }
}

/// Rank cutoff for singular values: `N * eps * sigma_1`.
pub fn rank_tolerance(sigma: &[f64]) -> f64 {
    let s1 = sigma.iter().copied().fold(0.0, f64::max);
    sigma.len() as f64 * f64::EPSILON * s1
}

/// Number of singular values at or above [`rank_tolerance`].
pub fn effective_rank(sigma: &[f64]) -> usize {
    let s1 = sigma.iter().copied().fold(0.0, f64::max);
    if s1 == 0.0 {
        return 0;
    }
    let tol = rank_tolerance(sigma);
    sigma.iter().filter(|&&s| s >= tol).count()
}

/// Percentage of the total squared spectrum captured by the first `n` values.
///
/// Values below the rank tolerance count as zero, so the result is exactly
/// 100 once every numerically nonzero value is included.
pub fn cumulative_variance(sigma: &[f64], n: usize) -> Result<f64> {
    if n > sigma.len() {
        return Err(Error::DimensionMismatch {
            expected: sigma.len(),
            actual: n,
        });
    }
    let s1 = sigma.iter().copied().fold(0.0, f64::max);
    if s1 == 0.0 {
        return Err(Error::AllZeroSpectrum);
    }
    let tol = rank_tolerance(sigma);
    let sq = |s: f64| if s >= tol { s * s } else { 0.0 };
    if sigma[n..].iter().all(|&s| s < tol) {
        return Ok(100.0);
    }
    let total: f64 = sigma.iter().map(|&s| sq(s)).sum();
    let partial: f64 = sigma[..n].iter().map(|&s| sq(s)).sum();
    Ok(100.0 * partial / total)
}

/// Smallest `n` whose cumulative variance reaches `percent`.
pub fn rank_for_variance(sigma: &[f64], percent: f64) -> Result<usize> {
    for n in 0..=sigma.len() {
        if cumulative_variance(sigma, n)? >= percent {
            return Ok(n);
        }
    }
    Ok(sigma.len())
}

/// A source with the mean column subtracted from every block.
pub struct Centered<'a, S: BlockSource + ?Sized> {
    inner: &'a S,
    mean: &'a [f64],
}

impl<'a, S: BlockSource + ?Sized> Centered<'a, S> {
    pub fn new(inner: &'a S, mean: &'a [f64]) -> Result<Self> {
        if mean.len() != inner.n_rows() {
            return Err(Error::DimensionMismatch {
                expected: inner.n_rows(),
                actual: mean.len(),
            });
        }
        Ok(Self { inner, mean })
    }
}

impl<S: BlockSource + ?Sized> BlockSource for Centered<'_, S> {
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    fn n_cols(&self) -> usize {
        self.inner.n_cols()
    }

    fn n_blocks(&self) -> usize {
        self.inner.n_blocks()
    }

    fn block_rows(&self, k: usize) -> std::ops::Range<usize> {
        self.inner.block_rows(k)
    }

    fn read_block(&self, k: usize) -> Result<DMatrix<f64>> {
        let mut b = self.inner.read_block(k)?;
        let mean = &self.mean[self.inner.block_rows(k)];
        for mut col in b.column_iter_mut() {
            for (v, m) in col.iter_mut().zip(mean) {
                *v -= m;
            }
        }
        Ok(b)
    }
}

/// Row-wise mean of all columns.
pub fn mean_snapshot<S: BlockSource + ?Sized>(x: &S) -> Result<Vec<f64>> {
    let n = x.n_cols();
    if n == 0 {
        return Err(Error::InvalidDimension("matrix has no columns".into()));
    }
    let mut out = vec![0.0; x.n_rows()];
    for_each_block(
        x.n_blocks(),
        |k| {
            let b = x.read_block(k)?;
            Ok(b.column_sum() / n as f64)
        },
        |k, m| {
            out[x.block_rows(k)].copy_from_slice(m.as_slice());
            Ok(())
        },
    )?;
    Ok(out)
}

fn check_finite(b: &DMatrix<f64>) -> Result<()> {
    if b.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteInput)
    }
}

fn check_shape<S: BlockSource + ?Sized>(x: &S) -> Result<()> {
    if x.n_cols() == 0 || x.n_rows() == 0 {
        return Err(Error::InvalidDimension(format!(
            "cannot decompose a {}x{} matrix",
            x.n_rows(),
            x.n_cols()
        )));
    }
    Ok(())
}

/// Collects U blocks in memory or on disk, and tracks what the sign
/// convention needs along the way.
struct USink {
    target: SinkTarget,
    /// Per column: largest magnitude seen, and the value it came from.
    peaks: Vec<(f64, f64)>,
}

enum SinkTarget {
    Memory(Vec<DMatrix<f64>>),
    Disk(BlockDirWriter),
}

impl USink {
    fn new<S: BlockSource + ?Sized>(x: &S, n_basis: usize, opts: &SvdOptions) -> Result<Self> {
        let target = match &opts.output {
            None => SinkTarget::Memory(Vec::with_capacity(x.n_blocks())),
            Some((dir, grid)) => {
                if grid.n_points() != x.n_rows()
                    || grid.n_blocks() != x.n_blocks()
                    || (0..x.n_blocks()).any(|k| grid.block_rows(k) != x.block_rows(k))
                {
                    return Err(Error::InvalidParameter(
                        "output grid does not match the input block layout".into(),
                    ));
                }
                SinkTarget::Disk(BlockDirWriter::create(dir, grid, n_basis)?)
            }
        };
        Ok(Self {
            target,
            peaks: vec![(-1.0, 0.0); n_basis],
        })
    }

    /// Blocks must arrive in ascending order.
    fn push(&mut self, k: usize, u: DMatrix<f64>) -> Result<()> {
        for (j, col) in u.column_iter().enumerate() {
            for &v in col.iter() {
                if v.abs() > self.peaks[j].0 {
                    self.peaks[j] = (v.abs(), v);
                }
            }
        }
        match &mut self.target {
            SinkTarget::Memory(blocks) => blocks.push(u),
            SinkTarget::Disk(w) => w.write_block(k, &u)?,
        }
        Ok(())
    }

    fn signs(&self) -> Vec<f64> {
        self.peaks
            .iter()
            .map(|&(_, v)| if v < 0.0 { -1.0 } else { 1.0 })
            .collect()
    }

    fn finish(self, v: &mut DMatrix<f64>, meta: BasisMeta) -> Result<SvdBasis> {
        let signs = self.signs();
        let flip = |m: &mut DMatrix<f64>| {
            for (j, &s) in signs.iter().enumerate() {
                if s < 0.0 {
                    m.column_mut(j).neg_mut();
                }
            }
        };
        flip(v);
        let u = match self.target {
            SinkTarget::Memory(mut blocks) => {
                blocks.iter_mut().for_each(flip);
                BasisBlocks::Memory(DenseBlocks::new(blocks)?)
            }
            SinkTarget::Disk(mut w) => {
                if signs.iter().any(|&s| s < 0.0) {
                    for k in 0..w.n_blocks() {
                        let mut b = w.read_block(k)?;
                        flip(&mut b);
                        w.write_block(k, &b)?;
                    }
                }
                write_aux_and_finish(w, v, &meta)?
            }
        };
        Ok(SvdBasis {
            sigma: meta.sigma,
            u,
            v: v.clone(),
            mean: meta.mean,
            method: meta.method,
            effective_rank: meta.effective_rank,
        })
    }
}

struct BasisMeta {
    sigma: Vec<f64>,
    mean: Option<Vec<f64>>,
    method: SvdMethod,
    effective_rank: usize,
}

impl BasisMeta {
    fn manifest(&self, n_source_cols: usize) -> Manifest {
        let mut m = Manifest::new();
        m.push("svd.method", self.method);
        m.push("svd.centered", self.mean.is_some());
        m.push("svd.effective_rank", self.effective_rank);
        m.push("svd.n_source_cols", n_source_cols);
        m.push("svd.sigma", join_floats(&self.sigma));
        m
    }
}

fn write_aux_and_finish(
    w: BlockDirWriter,
    v: &DMatrix<f64>,
    meta: &BasisMeta,
) -> Result<BasisBlocks> {
    w.write_aux("v", v)?;
    if let Some(mean) = &meta.mean {
        w.write_aux("mean", &DMatrix::from_column_slice(mean.len(), 1, mean))?;
    }
    Ok(BasisBlocks::Disk(w.finish(&[], None, &meta.manifest(v.nrows()))?))
}

/// Sorts singular triplets so sigma is descending; stable on ties.
fn sort_descending(sigma: &mut Vec<f64>, left: &mut DMatrix<f64>, right: &mut DMatrix<f64>) {
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));
    if order.iter().enumerate().all(|(i, &o)| i == o) {
        return;
    }
    *sigma = order.iter().map(|&i| sigma[i]).collect();
    *left = left.select_columns(&order);
    *right = right.select_columns(&order);
}

/// SVD through a blocked tall-skinny QR.
///
/// Pass one factors every block and reduces the R factors pairwise; pass two
/// refactors each block to rebuild its slice of Q and forms the matching slice
/// of U. Blocks are read exactly twice.
pub fn svd_block_qr<S: BlockSource + ?Sized>(x: &S, opts: &SvdOptions) -> Result<SvdBasis> {
    check_shape(x)?;
    let mean = if opts.centered {
        Some(mean_snapshot(x)?)
    } else {
        None
    };
    match &mean {
        Some(m) => block_qr_inner(&Centered::new(x, m)?, opts, mean.clone()),
        None => block_qr_inner(x, opts, None),
    }
}

fn block_qr_inner<S: BlockSource + ?Sized>(
    x: &S,
    opts: &SvdOptions,
    mean: Option<Vec<f64>>,
) -> Result<SvdBasis> {
    let mut rs = Vec::with_capacity(x.n_blocks());
    for_each_block(
        x.n_blocks(),
        |k| {
            let b = x.read_block(k)?;
            check_finite(&b)?;
            Ok(tsqr::block_r(&b))
        },
        |_, r| {
            rs.push(r);
            Ok(())
        },
    )?;
    let tree = tsqr::reduce(rs);

    let svd = tree.r.clone().svd(true, true);
    let mut sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
    let mut u_r = svd.u.expect("requested U");
    let mut v = svd.v_t.expect("requested V").transpose();
    sort_descending(&mut sigma, &mut u_r, &mut v);

    let maps: Vec<DMatrix<f64>> = tree.leaf_maps.iter().map(|m| m * &u_r).collect();
    let mut sink = USink::new(x, sigma.len(), opts)?;
    for_each_block(
        x.n_blocks(),
        |k| Ok(tsqr::block_q(&x.read_block(k)?) * &maps[k]),
        |k, u| sink.push(k, u),
    )?;

    let effective_rank = effective_rank(&sigma);
    sink.finish(
        &mut v,
        BasisMeta {
            sigma,
            mean,
            method: SvdMethod::BlockQr,
            effective_rank,
        },
    )
}

impl SvdBasis {
    /// Singular values, descending.
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn u(&self) -> &BasisBlocks {
        &self.u
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn mean(&self) -> Option<&[f64]> {
        self.mean.as_deref()
    }

    pub fn centered(&self) -> bool {
        self.mean.is_some()
    }

    pub fn method(&self) -> SvdMethod {
        self.method
    }

    pub fn effective_rank(&self) -> usize {
        self.effective_rank
    }

    /// Number of stored eigen-snapshots.
    pub fn n_basis(&self) -> usize {
        self.u.n_cols()
    }

    /// Snapshot length D.
    pub fn n_rows(&self) -> usize {
        self.u.n_rows()
    }

    /// Number of columns of the decomposed matrix.
    pub fn n_source_cols(&self) -> usize {
        self.v.nrows()
    }

    /// Weights of one snapshot on every eigen-snapshot.
    pub fn project(&self, x: &[f64]) -> Result<WeightVector> {
        if x.len() != self.n_rows() {
            return Err(Error::DimensionMismatch {
                expected: self.n_rows(),
                actual: x.len(),
            });
        }
        let mut w = DVector::zeros(self.n_basis());
        for_each_block(
            self.u.n_blocks(),
            |k| {
                let rows = self.u.block_rows(k);
                let mut xk = DVector::from_column_slice(&x[rows.clone()]);
                if let Some(mean) = &self.mean {
                    xk -= DVector::from_column_slice(&mean[rows]);
                }
                Ok(self.u.read_block(k)?.tr_mul(&xk))
            },
            |_, part| {
                w += part;
                Ok(())
            },
        )?;
        WeightVector::new(w.as_slice().to_vec(), WeightSource::Unlabeled)
    }

    /// Weights of every column of `x`, as an `n_basis x N` matrix.
    pub fn project_matrix<S: BlockSource + ?Sized>(&self, x: &S) -> Result<DMatrix<f64>> {
        self.check_layout(x)?;
        let mut w = DMatrix::zeros(self.n_basis(), x.n_cols());
        let run = |src: &dyn BlockSource, w: &mut DMatrix<f64>| {
            for_each_block(
                src.n_blocks(),
                |k| Ok(self.u.read_block(k)?.tr_mul(&src.read_block(k)?)),
                |_, part| {
                    *w += part;
                    Ok(())
                },
            )
        };
        match &self.mean {
            Some(m) => run(&Centered::new(x, m)?, &mut w)?,
            None => run(&DynSource(x), &mut w)?,
        }
        Ok(w)
    }

    fn check_layout<S: BlockSource + ?Sized>(&self, x: &S) -> Result<()> {
        if x.n_rows() != self.n_rows() || x.n_blocks() != self.u.n_blocks() {
            return Err(Error::DimensionMismatch {
                expected: self.n_rows(),
                actual: x.n_rows(),
            });
        }
        for k in 0..x.n_blocks() {
            if x.block_rows(k) != self.u.block_rows(k) {
                return Err(Error::InvalidParameter(
                    "matrix and basis use different row blocks".into(),
                ));
            }
        }
        Ok(())
    }

    fn check_weights(&self, w: &[f64], n: usize) -> Result<()> {
        if n > w.len() || n > self.n_basis() {
            return Err(Error::DimensionMismatch {
                expected: w.len().min(self.n_basis()),
                actual: n,
            });
        }
        Ok(())
    }

    /// Rank-`n` reconstruction from the first `n` weights.
    pub fn reconstruct(&self, w: &[f64], n: usize) -> Result<Vec<f64>> {
        self.reconstruct_rows(w, n, 0..self.n_rows())
    }

    /// Like [`reconstruct`](Self::reconstruct) but only for the flat rows in
    /// `rows`; blocks outside the range are not read.
    pub fn reconstruct_rows(
        &self,
        w: &[f64],
        n: usize,
        rows: std::ops::Range<usize>,
    ) -> Result<Vec<f64>> {
        self.check_weights(w, n)?;
        if rows.end > self.n_rows() || rows.start > rows.end {
            return Err(Error::IndexOutOfRange {
                index: rows.end,
                len: self.n_rows(),
            });
        }
        let wn = DVector::from_column_slice(&w[..n]);
        let mut out = vec![0.0; rows.len()];
        let touched: Vec<usize> = (0..self.u.n_blocks())
            .filter(|&k| {
                let b = self.u.block_rows(k);
                b.start < rows.end && rows.start < b.end
            })
            .collect();
        for_each_block(
            touched.len(),
            |i| {
                let k = touched[i];
                let b = self.u.block_rows(k);
                let lo = rows.start.max(b.start);
                let hi = rows.end.min(b.end);
                let u = self.u.read_block(k)?;
                let mut part = u.view((lo - b.start, 0), (hi - lo, n)) * &wn;
                if let Some(mean) = &self.mean {
                    part += DVector::from_column_slice(&mean[lo..hi]);
                }
                Ok((lo, part))
            },
            |_, (lo, part)| {
                out[lo - rows.start..lo - rows.start + part.len()].copy_from_slice(part.as_slice());
                Ok(())
            },
        )?;
        Ok(out)
    }

    /// Truncation error at one rank, both from the spectrum and directly.
    pub fn truncation_error<S: BlockSource + ?Sized>(
        &self,
        x: &S,
        n: usize,
    ) -> Result<TruncationError> {
        self.check_weights(&self.sigma, n)?;
        let w = self.project_matrix(x)?;
        let wn = w.rows(0, n).into_owned();
        let mut direct = 0.0;
        let run = |src: &dyn BlockSource, direct: &mut f64| {
            for_each_block(
                src.n_blocks(),
                |k| {
                    let u = self.u.read_block(k)?;
                    let r = src.read_block(k)? - u.columns(0, n) * &wn;
                    Ok(r.norm_squared())
                },
                |_, e| {
                    *direct += e;
                    Ok(())
                },
            )
        };
        match &self.mean {
            Some(m) => run(&Centered::new(x, m)?, &mut direct)?,
            None => run(&DynSource(x), &mut direct)?,
        }
        Ok(TruncationError {
            n,
            from_sigma: self.sigma[n..].iter().map(|s| s * s).sum(),
            direct,
        })
    }

    /// Truncation error for every rank `0..=n_basis`, in two passes over `x`.
    pub fn truncation_error_profile<S: BlockSource + ?Sized>(
        &self,
        x: &S,
    ) -> Result<Vec<TruncationError>> {
        let w = self.project_matrix(x)?;
        let p = self.n_basis();
        let mut direct = vec![0.0; p + 1];
        let run = |src: &dyn BlockSource, direct: &mut Vec<f64>| {
            for_each_block(
                src.n_blocks(),
                |k| {
                    let u = self.u.read_block(k)?;
                    let mut r = src.read_block(k)?;
                    let mut errs = Vec::with_capacity(p + 1);
                    errs.push(r.norm_squared());
                    for i in 0..p {
                        r.ger(-1.0, &u.column(i), &w.row(i).transpose(), 1.0);
                        errs.push(r.norm_squared());
                    }
                    Ok(errs)
                },
                |_, errs| {
                    direct.iter_mut().zip(errs).for_each(|(d, e)| *d += e);
                    Ok(())
                },
            )
        };
        match &self.mean {
            Some(m) => run(&Centered::new(x, m)?, &mut direct)?,
            None => run(&DynSource(x), &mut direct)?,
        }
        Ok(direct
            .into_iter()
            .enumerate()
            .map(|(n, d)| TruncationError {
                n,
                from_sigma: self.sigma[n.min(self.sigma.len())..].iter().map(|s| s * s).sum(),
                direct: d,
            })
            .collect())
    }

    /// `max |U^T U - I|`, accumulated block by block.
    pub fn orthonormality_error(&self) -> Result<f64> {
        let p = self.n_basis();
        let mut g = DMatrix::zeros(p, p);
        for_each_block(
            self.u.n_blocks(),
            |k| {
                let u = self.u.read_block(k)?;
                Ok(u.tr_mul(&u))
            },
            |_, part| {
                g += part;
                Ok(())
            },
        )?;
        Ok((g - DMatrix::identity(p, p)).amax())
    }

    /// Writes the basis as a block directory laid out like `grid`.
    pub fn save(&self, dir: &Path, grid: &CommonGrid) -> Result<()> {
        let mut w = BlockDirWriter::create(dir, grid, self.n_basis())?;
        for k in 0..grid.n_blocks() {
            w.write_block(k, &self.u.read_block(k)?)?;
        }
        let meta = BasisMeta {
            sigma: self.sigma.clone(),
            mean: self.mean.clone(),
            method: self.method,
            effective_rank: self.effective_rank,
        };
        write_aux_and_finish(w, &self.v, &meta)?;
        Ok(())
    }

    /// Opens a saved basis; U stays on disk and is read block by block.
    pub fn load(dir: &Path) -> Result<Self> {
        let u = BlockSnapshotMatrix::open(dir)?;
        let m = u.extra();
        let sigma: Vec<f64> = m.parse_list("svd.sigma")?;
        let centered: bool = m.parse("svd.centered")?;
        let v = read_aux(dir, "v")?;
        let mean = if centered {
            Some(read_aux(dir, "mean")?.as_slice().to_vec())
        } else {
            None
        };
        if v.ncols() != u.n_cols() {
            return Err(Error::format("basis", "V and U disagree on the basis size"));
        }
        Ok(Self {
            method: m.parse("svd.method")?,
            effective_rank: m.parse("svd.effective_rank")?,
            sigma,
            u: BasisBlocks::Disk(u),
            v,
            mean,
        })
    }

    /// Copies U into memory.
    pub fn into_memory(self) -> Result<Self> {
        let u = match self.u {
            BasisBlocks::Disk(d) => BasisBlocks::Memory(DenseBlocks::new(
                (0..d.n_blocks())
                    .map(|k| d.read_block(k))
                    .collect::<Result<_>>()?,
            )?),
            mem => mem,
        };
        Ok(Self { u, ..self })
    }
}

/// Adapter so generic sources can be handed to code taking `&dyn BlockSource`.
struct DynSource<'a, S: BlockSource + ?Sized>(&'a S);

impl<S: BlockSource + ?Sized> BlockSource for DynSource<'_, S> {
    fn n_rows(&self) -> usize {
        self.0.n_rows()
    }
    fn n_cols(&self) -> usize {
        self.0.n_cols()
    }
    fn n_blocks(&self) -> usize {
        self.0.n_blocks()
    }
    fn block_rows(&self, k: usize) -> std::ops::Range<usize> {
        self.0.block_rows(k)
    }
    fn read_block(&self, k: usize) -> Result<DMatrix<f64>> {
        self.0.read_block(k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_row_iterator(rows.len(), rows[0].len(), rows.iter().flat_map(|r| r.iter().copied()))
    }

    fn lcg_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut s = seed;
        DMatrix::from_fn(rows, cols, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
    }

    #[test]
    fn diagonal_like_matrix() {
        let x = dense(&[&[3.0, 0.0], &[0.0, 2.0], &[0.0, 0.0], &[0.0, 0.0]]);
        for k in [1, 2] {
            let blocks = DenseBlocks::split_even(&x, k).unwrap();
            let qr = svd_block_qr(&blocks, &SvdOptions::default()).unwrap();
            let ne = svd_normal_equations(&blocks, &SvdOptions::default()).unwrap();
            for b in [&qr, &ne] {
                assert!((b.sigma()[0] - 3.0).abs() < 1e-14);
                assert!((b.sigma()[1] - 2.0).abs() < 1e-14);
                // Sign convention makes the peaks positive.
                let u = b.u().to_dense().unwrap();
                assert!((u[(0, 0)] - 1.0).abs() < 1e-14);
                assert!((u[(1, 1)] - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn duplicate_columns_have_rank_one() {
        let c = lcg_matrix(30, 1, 5);
        let x = DMatrix::from_columns(&[c.column(0), c.column(0)]);
        let blocks = DenseBlocks::split_even(&x, 3).unwrap();
        let qr = svd_block_qr(&blocks, &SvdOptions::default()).unwrap();
        assert_eq!(qr.effective_rank(), 1);
        assert!(qr.sigma()[1] < rank_tolerance(qr.sigma()));
        let ne = svd_normal_equations(&blocks, &SvdOptions::default()).unwrap();
        assert_eq!(ne.effective_rank(), 1);
        assert_eq!(ne.n_basis(), 1);
    }

    #[test]
    fn projecting_basis_columns_gives_unit_vectors() {
        let x = lcg_matrix(50, 6, 8);
        let blocks = DenseBlocks::split_even(&x, 4).unwrap();
        let b = svd_block_qr(&blocks, &SvdOptions::default()).unwrap();
        let u = b.u().to_dense().unwrap();
        let w = b.project(u.column(0).as_slice()).unwrap();
        assert!((w.values[0] - 1.0).abs() < 1e-12);
        assert!(w.values[1..].iter().all(|v| v.abs() < 1e-12));
        let zero = b.project(&[0.0; 50]).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
        assert!(matches!(b.project(&[0.0; 49]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn reconstruct_extremes() {
        let x = lcg_matrix(40, 5, 2);
        let blocks = DenseBlocks::split_even(&x, 3).unwrap();
        for centered in [false, true] {
            let b = svd_block_qr(&blocks, &SvdOptions::default().centered(centered)).unwrap();
            let col = x.column(2).as_slice().to_vec();
            let w = b.project(&col).unwrap();
            let full = b.reconstruct(&w.values, b.n_basis()).unwrap();
            let err: f64 = full.iter().zip(&col).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
            assert!(err < 1e-12);
            let none = b.reconstruct(&w.values, 0).unwrap();
            match b.mean() {
                Some(m) => assert_eq!(none, m),
                None => assert!(none.iter().all(|&v| v == 0.0)),
            }
            let part = b.reconstruct_rows(&w.values, 3, 7..29).unwrap();
            assert_eq!(part, b.reconstruct(&w.values, 3).unwrap()[7..29].to_vec());
            assert!(b.reconstruct(&w.values, b.n_basis() + 1).is_err());
        }
    }

    #[test]
    fn cumulative_variance_hand_case() {
        let s = [3.0, 4.0, 0.0];
        assert_eq!(cumulative_variance(&s, 0).unwrap(), 0.0);
        assert_eq!(cumulative_variance(&s, 1).unwrap(), 36.0);
        assert_eq!(cumulative_variance(&s, 2).unwrap(), 100.0);
        assert_eq!(cumulative_variance(&s, 3).unwrap(), 100.0);
        assert!(matches!(cumulative_variance(&[0.0, 0.0], 1), Err(Error::AllZeroSpectrum)));
        assert!(cumulative_variance(&s, 4).is_err());
        assert_eq!(rank_for_variance(&[3.0, 2.0, 1.0], 90.0).unwrap(), 2);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let mut x = lcg_matrix(10, 3, 1);
        x[(4, 1)] = f64::NAN;
        let blocks = DenseBlocks::split_even(&x, 2).unwrap();
        assert!(matches!(
            svd_block_qr(&blocks, &SvdOptions::default()),
            Err(Error::NonFiniteInput)
        ));
        assert!(matches!(
            svd_normal_equations(&blocks, &SvdOptions::default()),
            Err(Error::NonFiniteInput)
        ));
    }

    #[test]
    fn disk_output_matches_memory() {
        let dir = tempfile::tempdir().unwrap();
        let grid = CommonGrid::new(-4.0, 0.0, 0.0, 3.0, 0.5, 3).unwrap();
        let x = lcg_matrix(grid.n_points(), 7, 4);
        let counts: Vec<usize> = (0..3).map(|k| grid.block_rows(k).len()).collect();
        let blocks = DenseBlocks::split(&x, &counts).unwrap();
        let mem = svd_block_qr(&blocks, &SvdOptions::default().centered(true)).unwrap();
        let path = dir.path().join("basis");
        let disk =
            svd_block_qr(&blocks, &SvdOptions::default().centered(true).to_disk(&path, &grid))
                .unwrap();
        assert_eq!(mem.sigma(), disk.sigma());
        assert_eq!(mem.u().to_dense().unwrap(), disk.u().to_dense().unwrap());
        let loaded = SvdBasis::load(&path).unwrap();
        assert_eq!(loaded.v(), mem.v());
        assert_eq!(loaded.mean(), mem.mean());
        assert_eq!(loaded.effective_rank(), mem.effective_rank());
        assert_eq!(loaded.method(), SvdMethod::BlockQr);

        let resaved = dir.path().join("again");
        mem.save(&resaved, &grid).unwrap();
        let again = SvdBasis::load(&resaved).unwrap().into_memory().unwrap();
        assert_eq!(again.u().to_dense().unwrap(), mem.u().to_dense().unwrap());
    }
}
