use nalgebra::{DMatrix, SymmetricEigen};

use super::{check_finite, check_shape, mean_snapshot, BasisMeta, Centered, SvdBasis, SvdMethod, SvdOptions, USink};
use crate::error::Result;
use crate::store::{for_each_block, BlockSource};

/// Largest column count for which the Gram matrix is formed.
pub const MAX_GRAM_COLS: usize = 10_000;

/// SVD from the eigen-decomposition of `X^T X`.
///
/// Eigenpairs with `lambda <= N * eps * lambda_max` are dropped from U and V
/// (the eigenvalues carry absolute error near `eps * lambda_max`), but every
/// singular value is reported. The effective rank is the number kept.
pub fn svd_normal_equations<S: BlockSource + ?Sized>(x: &S, opts: &SvdOptions) -> Result<SvdBasis> {
    check_shape(x)?;
    if x.n_cols() > MAX_GRAM_COLS {
        return Err(crate::error::Error::InvalidParameter(format!(
            "{} columns exceed the Gram-matrix limit of {MAX_GRAM_COLS}",
            x.n_cols()
        )));
    }
    if opts.centered {
        let mean = mean_snapshot(x)?;
        normal_inner(&Centered::new(x, &mean)?, opts, Some(mean.clone()))
    } else {
        normal_inner(x, opts, None)
    }
}

fn normal_inner<S: BlockSource + ?Sized>(
    x: &S,
    opts: &SvdOptions,
    mean: Option<Vec<f64>>,
) -> Result<SvdBasis> {
    let n = x.n_cols();
    let mut gram = DMatrix::zeros(n, n);
    for_each_block(
        x.n_blocks(),
        |k| {
            let b = x.read_block(k)?;
            check_finite(&b)?;
            Ok(b.tr_mul(&b))
        },
        |_, part| {
            gram += part;
            Ok(())
        },
    )?;

    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lambda: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let lambda_max = lambda[0].max(0.0);
    let cutoff = n as f64 * f64::EPSILON * lambda_max;
    let kept = if lambda_max > 0.0 {
        lambda.iter().filter(|&&l| l > cutoff).count()
    } else {
        0
    };
    let sigma: Vec<f64> = lambda.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let mut v = eig.eigenvectors.select_columns(&order[..kept]);

    // u_i = X v_i / sigma_i, one block at a time.
    let mut scaled = v.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col /= sigma[j];
    }
    let mut sink = USink::new(x, kept, opts)?;
    for_each_block(
        x.n_blocks(),
        |k| Ok(x.read_block(k)? * &scaled),
        |k, u| sink.push(k, u),
    )?;
    sink.finish(
        &mut v,
        BasisMeta {
            sigma,
            mean,
            method: SvdMethod::NormalEquations,
            effective_rank: kept,
        },
    )
}
