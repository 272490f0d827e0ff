//! Very sparse random projections generated row by row.
//!
//! Row `r` of the `D x d` projector depends only on `(seed, r)`, so any block
//! of rows can be produced on the fly, and the result is independent of how
//! the snapshot matrix is blocked.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::store::{for_each_block, BlockSource};

/// Default target dimension.
pub const DEFAULT_PROJ_DIM: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionSpec {
    pub seed: u64,
    pub dim: usize,
    /// `s`: each entry is nonzero with probability `1/s`.
    pub density: f64,
}

impl ProjectionSpec {
    /// Uses `s = sqrt(n_rows)`.
    pub fn new(seed: u64, dim: usize, n_rows: usize) -> Self {
        Self {
            seed,
            dim,
            density: (n_rows as f64).sqrt().max(1.0),
        }
    }

    pub fn with_density(mut self, s: f64) -> Self {
        self.density = s;
        self
    }

    fn validate(&self, n_rows: usize) -> Result<()> {
        if self.dim == 0 || self.dim > n_rows {
            return Err(Error::InvalidDimension(format!(
                "projection dimension {} for {n_rows} rows",
                self.dim
            )));
        }
        if !(self.density >= 1.0 && self.density.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "projection density {} must be >= 1",
                self.density
            )));
        }
        Ok(())
    }

    /// Magnitude of the nonzero entries.
    pub fn scale(&self) -> f64 {
        (self.density / self.dim as f64).sqrt()
    }

    /// Nonzero entries `(column, value)` of projector row `r`, ascending.
    pub fn row(&self, r: usize) -> Vec<(usize, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(r as u64);
        let p = 1.0 / self.density;
        let log_q = (1.0 - p).ln();
        let scale = self.scale();
        let mut out = Vec::new();
        let mut j: usize = 0;
        let mut first = true;
        loop {
            let u: f64 = rng.random();
            // Number of zeros before the next nonzero, geometric in p.
            let skip = if p >= 1.0 { 0.0 } else { ((1.0 - u).ln() / log_q).floor() };
            if !skip.is_finite() || skip >= self.dim as f64 {
                break;
            }
            j = if first { skip as usize } else { j + 1 + skip as usize };
            first = false;
            if j >= self.dim {
                break;
            }
            let v = if rng.random::<bool>() { scale } else { -scale };
            out.push((j, v));
        }
        out
    }
}

/// Projects every column of `x`: returns the `N x d` matrix `X^T P`.
///
/// Per-block partial products are summed in ascending block order.
pub fn sparse_random_project<S: BlockSource + ?Sized>(x: &S, spec: &ProjectionSpec) -> Result<DMatrix<f64>> {
    spec.validate(x.n_rows())?;
    let mut out = DMatrix::zeros(x.n_cols(), spec.dim);
    for_each_block(
        x.n_blocks(),
        |k| {
            let rows = x.block_rows(k);
            let xt = x.read_block(k)?.transpose();
            let mut part = DMatrix::zeros(x.n_cols(), spec.dim);
            for (local, r) in rows.enumerate() {
                for (j, v) in spec.row(r) {
                    part.column_mut(j).axpy(v, &xt.column(local), 1.0);
                }
            }
            Ok(part)
        },
        |_, part| {
            out += part;
            Ok(())
        },
    )?;
    Ok(out)
}

/// Projects a single length-D vector.
pub fn project_vector(x: &[f64], spec: &ProjectionSpec) -> Result<Vec<f64>> {
    spec.validate(x.len())?;
    let mut out = vec![0.0; spec.dim];
    for (r, &xr) in x.iter().enumerate() {
        if xr != 0.0 {
            for (j, v) in spec.row(r) {
                out[j] += v * xr;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::DenseBlocks;

    #[test]
    fn rows_have_expected_density_and_scale() {
        let spec = ProjectionSpec::new(3, 400, 10_000);
        let mut nnz = 0;
        for r in 0..2000 {
            let row = spec.row(r);
            assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
            assert!(row.iter().all(|&(_, v)| v.abs() == spec.scale()));
            nnz += row.len();
        }
        // Expected 2000 * 400 / 100 = 8000.
        assert!((7000..9000).contains(&nnz), "{nnz}");
        assert_eq!(spec.row(17), spec.row(17));
    }

    #[test]
    fn blocking_does_not_change_the_projection() {
        let x = DMatrix::from_fn(90, 4, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        let spec = ProjectionSpec::new(11, 20, 90).with_density(3.0);
        let one = sparse_random_project(&DenseBlocks::split_even(&x, 1).unwrap(), &spec).unwrap();
        let five = sparse_random_project(&DenseBlocks::split(&x, &[10, 30, 5, 40, 5]).unwrap(), &spec).unwrap();
        assert!((one.clone() - five).amax() < 1e-12);
        let col = project_vector(x.column(2).as_slice(), &spec).unwrap();
        for j in 0..20 {
            assert!((one[(2, j)] - col[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_and_duplicate_columns() {
        let mut x = DMatrix::from_fn(50, 3, |i, _| (i as f64).sin());
        x.column_mut(2).fill(0.0);
        let spec = ProjectionSpec::new(1, 10, 50);
        let y = sparse_random_project(&DenseBlocks::split_even(&x, 2).unwrap(), &spec).unwrap();
        assert_eq!(y.row(0), y.row(1));
        assert!(y.row(2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn invalid_dimensions() {
        let x = DenseBlocks::split_even(&DMatrix::zeros(5, 2), 1).unwrap();
        assert!(sparse_random_project(&x, &ProjectionSpec::new(0, 0, 5)).is_err());
        assert!(sparse_random_project(&x, &ProjectionSpec::new(0, 6, 5)).is_err());
    }
}
