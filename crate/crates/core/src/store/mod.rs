//! Ingestion of raw dumps and the row-blocked snapshot matrix.

pub mod blocks;
pub mod raw;
pub mod remap;

use std::path::Path;

use rayon::prelude::*;

pub use blocks::{
    assemble, read_aux, BlockDirWriter, BlockSnapshotMatrix, BlockSource, ColumnSubset,
    DenseBlocks, SnapshotWriter,
};
pub use raw::{EnsembleManifest, RawField, RawPoint, RawTable};
pub use remap::{align_and_crop, remap_1nn, DEFAULT_CROP_X_MIN};

use crate::error::{Error, Result};
use crate::grid::CommonGrid;
use crate::meta::{ColumnDescriptor, Variable};

/// Snapshots remapped in parallel per batch before being streamed to disk.
const BATCH: usize = 32;

/// Aligns, crops and remaps one raw field onto `grid`.
pub fn preprocess_field(raw: &RawField, grid: &CommonGrid, crop_x_min: f64) -> Result<Vec<f64>> {
    raw.validate()?;
    let aligned = align_and_crop(raw, crop_x_min)?;
    remap_1nn(&aligned, grid)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessSummary {
    pub n_cols: usize,
    pub n_rows: usize,
    pub n_blocks: usize,
}

/// Builds one snapshot matrix per variable from a raw dump directory.
///
/// Columns are ordered by ensemble member, then ascending timestep. Each
/// variable's matrix goes to `<store_dir>/<variable>`.
pub fn preprocess_ensemble(
    raw_dir: &Path,
    store_dir: &Path,
    grid: &CommonGrid,
    crop_x_min: f64,
    variables: &[Variable],
) -> Result<Vec<(Variable, BlockSnapshotMatrix)>> {
    let ensemble = EnsembleManifest::read(raw_dir)?;
    let mut jobs = Vec::new();
    for meta in &ensemble.members {
        let sim_dir = raw_dir.join(&meta.key);
        let steps = raw::scan_simulation(&sim_dir)?;
        for t in 0..meta.n_timesteps {
            let files = steps.get(&t).ok_or_else(|| {
                Error::format(
                    "raw dump",
                    format!("{}: missing timestep {t}", sim_dir.display()),
                )
            })?;
            jobs.push((ColumnDescriptor::from_meta(meta, t), files.clone()));
        }
    }

    std::fs::create_dir_all(store_dir).map_err(|e| Error::io(store_dir, e))?;
    let mut writers = variables
        .iter()
        .map(|&v| SnapshotWriter::create(&store_dir.join(v.to_string()), grid, Some(v)))
        .collect::<Result<Vec<_>>>()?;

    for batch in jobs.chunks(BATCH) {
        let remapped: Vec<Vec<Vec<f64>>> = batch
            .par_iter()
            .map(|(desc, files)| {
                let table = raw::load_step(files, &desc.sim_key, desc.timestep)?;
                variables
                    .iter()
                    .map(|&v| preprocess_field(&table.field(v), grid, crop_x_min))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        for ((desc, _), per_var) in batch.iter().zip(remapped) {
            for (w, values) in writers.iter_mut().zip(per_var) {
                w.push_column(desc.clone(), &values)?;
            }
        }
    }

    variables
        .iter()
        .zip(writers)
        .map(|(&v, w)| Ok((v, w.finish()?)))
        .collect()
}

/// Runs `map` over blocks `0..n_blocks` in parallel, at most one block per
/// worker at a time, and feeds results to `consume` in ascending block order.
///
/// Keeping the consumer sequential and ordered makes every reduction built on
/// top of this independent of the worker count.
pub fn for_each_block<T, M, C>(n_blocks: usize, map: M, mut consume: C) -> Result<()>
where
    T: Send,
    M: Fn(usize) -> Result<T> + Sync,
    C: FnMut(usize, T) -> Result<()>,
{
    let width = rayon::current_num_threads().max(1);
    let mut start = 0;
    while start < n_blocks {
        let end = (start + width).min(n_blocks);
        let out = (start..end)
            .into_par_iter()
            .map(&map)
            .collect::<Result<Vec<T>>>()?;
        for (i, t) in out.into_iter().enumerate() {
            consume(start + i, t)?;
        }
        start = end;
    }
    Ok(())
}
