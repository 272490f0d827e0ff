//! The regular 2-D grid every snapshot is remapped onto.

use std::ops::Range;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::manifest::Manifest;

/// Cell-centered regular grid with square cells, split into row blocks.
///
/// Values are stored in natural order: row-major by ascending y, then
/// ascending x, so the flat index of cell `(i, j)` is `j * nx + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CommonGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub delta: f64,
    pub nx: usize,
    pub ny: usize,
    block_ranges: Vec<Range<usize>>,
}

impl CommonGrid {
    /// Builds a grid over `[x_min, x_max] × [y_min, y_max]` split into
    /// `n_blocks` y-ranges of near-equal height.
    pub fn new(
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
        delta: f64,
        n_blocks: usize,
    ) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!("grid spacing {delta}")));
        }
        if !(x_max > x_min && y_max > y_min) {
            return Err(Error::InvalidParameter("grid bounds are empty".into()));
        }
        let nx = ((x_max - x_min) / delta).round() as usize;
        let ny = ((y_max - y_min) / delta).round() as usize;
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidParameter("grid has no cells".into()));
        }
        let block_ranges = even_split(ny, n_blocks)?;
        Ok(Self {
            x_min,
            x_max,
            y_min,
            y_max,
            delta,
            nx,
            ny,
            block_ranges,
        })
    }

    /// Same grid with explicit y-index block boundaries.
    pub fn with_block_ranges(mut self, ranges: Vec<Range<usize>>) -> Result<Self> {
        let mut next = 0;
        for r in &ranges {
            if r.start != next || r.end <= r.start {
                return Err(Error::InvalidParameter(format!(
                    "block ranges must be contiguous and non-empty, got {ranges:?}"
                )));
            }
            next = r.end;
        }
        if next != self.ny {
            return Err(Error::InvalidParameter(format!(
                "block ranges cover {next} rows, grid has {}",
                self.ny
            )));
        }
        self.block_ranges = ranges;
        Ok(self)
    }

    pub fn reblocked(&self, n_blocks: usize) -> Result<Self> {
        self.clone()
            .with_block_ranges(even_split(self.ny, n_blocks)?)
    }

    /// Snapshot length D.
    pub fn n_points(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_blocks(&self) -> usize {
        self.block_ranges.len()
    }

    /// y-index range of block `k`.
    pub fn block_y_range(&self, k: usize) -> Range<usize> {
        self.block_ranges[k].clone()
    }

    pub fn block_y_ranges(&self) -> &[Range<usize>] {
        &self.block_ranges
    }

    /// Flat row range of block `k` within a snapshot.
    pub fn block_rows(&self, k: usize) -> Range<usize> {
        let r = &self.block_ranges[k];
        r.start * self.nx..r.end * self.nx
    }

    pub fn x_center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.delta
    }

    pub fn y_center(&self, j: usize) -> f64 {
        self.y_min + (j as f64 + 0.5) * self.delta
    }

    pub fn cell_center(&self, flat: usize) -> (f64, f64) {
        (self.x_center(flat % self.nx), self.y_center(flat / self.nx))
    }

    /// Row index whose cell center is nearest to `y`.
    pub fn nearest_row(&self, y: f64) -> usize {
        let j = ((y - self.y_min) / self.delta - 0.5).round();
        j.clamp(0.0, (self.ny - 1) as f64) as usize
    }

    /// Stable digest of the geometry (not the blocking).
    pub fn hash(&self) -> u64 {
        let desc = format!(
            "{:?} {:?} {:?} {:?} {:?} {} {}",
            self.x_min, self.x_max, self.y_min, self.y_max, self.delta, self.nx, self.ny
        );
        let digest = Sha256::digest(desc.as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
    }

    pub fn write_manifest(&self, m: &mut Manifest) {
        m.push("grid.x_min", format!("{:?}", self.x_min));
        m.push("grid.x_max", format!("{:?}", self.x_max));
        m.push("grid.y_min", format!("{:?}", self.y_min));
        m.push("grid.y_max", format!("{:?}", self.y_max));
        m.push("grid.delta", format!("{:?}", self.delta));
        m.push("grid.nx", self.nx);
        m.push("grid.ny", self.ny);
        m.push("grid.hash", format!("{:016x}", self.hash()));
        let bounds: Vec<String> = self
            .block_ranges
            .iter()
            .map(|r| format!("{}..{}", r.start, r.end))
            .collect();
        m.push("grid.blocks", bounds.join(" "));
    }

    pub fn read_manifest(m: &Manifest) -> Result<Self> {
        let mut grid = CommonGrid::new(
            m.parse("grid.x_min")?,
            m.parse("grid.x_max")?,
            m.parse("grid.y_min")?,
            m.parse("grid.y_max")?,
            m.parse("grid.delta")?,
            1,
        )?;
        let nx: usize = m.parse("grid.nx")?;
        let ny: usize = m.parse("grid.ny")?;
        if nx != grid.nx || ny != grid.ny {
            return Err(Error::format(
                "grid",
                format!("stored size {nx}x{ny} disagrees with bounds"),
            ));
        }
        let mut ranges = Vec::new();
        for tok in m.require("grid.blocks")?.split_whitespace() {
            let (a, b) = tok
                .split_once("..")
                .ok_or_else(|| Error::format("grid blocks", tok))?;
            let a = a.parse().map_err(|_| Error::format("grid blocks", tok))?;
            let b = b.parse().map_err(|_| Error::format("grid blocks", tok))?;
            ranges.push(a..b);
        }
        grid = grid.with_block_ranges(ranges)?;
        if let Some(h) = m.get("grid.hash") {
            if h != format!("{:016x}", grid.hash()) {
                return Err(Error::format("grid", "hash does not match geometry"));
            }
        }
        Ok(grid)
    }
}

/// Splits `0..n` into `k` contiguous ranges whose lengths differ by at most one.
pub fn even_split(n: usize, k: usize) -> Result<Vec<Range<usize>>> {
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "cannot split {n} rows into {k} blocks"
        )));
    }
    let base = n / k;
    let extra = n % k;
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for b in 0..k {
        let len = base + usize::from(b < extra);
        out.push(start..start + len);
        start += len;
    }
    Ok(out)
}
