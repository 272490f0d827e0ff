//! Tall-skinny QR over row blocks, reduced as a pairwise tree.
//!
//! Every leaf keeps the product of the slices of the intermediate Q factors it
//! passed through, so the global Q restricted to block `k` is
//! `Q_k * leaf_map_k` without ever materializing the full Q.

use nalgebra::DMatrix;
use rayon::prelude::*;

pub(crate) struct Tree {
    /// Root triangular factor, `m x N` with `m = min(sum of rows, N)`.
    pub r: DMatrix<f64>,
    /// Per block, a `rows(R_k) x m` matrix.
    pub leaf_maps: Vec<DMatrix<f64>>,
}

struct Node {
    r: DMatrix<f64>,
    leaves: Vec<(usize, DMatrix<f64>)>,
}

pub(crate) fn block_r(block: &DMatrix<f64>) -> DMatrix<f64> {
    block.clone().qr().r()
}

pub(crate) fn block_q(block: &DMatrix<f64>) -> DMatrix<f64> {
    block.clone().qr().q()
}

fn merge(a: Node, b: Node) -> Node {
    let (ra, rb) = (a.r.nrows(), b.r.nrows());
    let n = a.r.ncols();
    let mut stacked = DMatrix::zeros(ra + rb, n);
    stacked.rows_mut(0, ra).copy_from(&a.r);
    stacked.rows_mut(ra, rb).copy_from(&b.r);
    let qr = stacked.qr();
    let q = qr.q();
    let r = qr.r();
    let top = q.rows(0, ra).into_owned();
    let bottom = q.rows(ra, rb).into_owned();
    let leaves = a
        .leaves
        .into_iter()
        .map(|(k, m)| (k, m * &top))
        .chain(b.leaves.into_iter().map(|(k, m)| (k, m * &bottom)))
        .collect();
    Node { r, leaves }
}

/// Reduces per-block R factors (given in block order) to a single R.
///
/// Pairs are formed left to right at every level; an odd node is carried up
/// unchanged. The shape of the tree depends only on the number of blocks.
pub(crate) fn reduce(rs: Vec<DMatrix<f64>>) -> Tree {
    let n_leaves = rs.len();
    let mut level: Vec<Node> = rs
        .into_iter()
        .enumerate()
        .map(|(k, r)| Node {
            leaves: vec![(k, DMatrix::identity(r.nrows(), r.nrows()))],
            r,
        })
        .collect();
    while level.len() > 1 {
        let mut pairs = Vec::with_capacity(level.len().div_ceil(2));
        let mut it = level.into_iter();
        while let Some(a) = it.next() {
            pairs.push((a, it.next()));
        }
        level = pairs
            .into_par_iter()
            .map(|(a, b)| match b {
                Some(b) => merge(a, b),
                None => a,
            })
            .collect();
    }
    let root = level.pop().expect("at least one block");
    let mut leaf_maps = vec![DMatrix::zeros(0, 0); n_leaves];
    for (k, m) in root.leaves {
        leaf_maps[k] = m;
    }
    Tree {
        r: root.r,
        leaf_maps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut s = seed;
        DMatrix::from_fn(rows, cols, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
    }

    #[test]
    fn implicit_q_reassembles_the_matrix() {
        let x = lcg_matrix(40, 6, 3);
        let cuts = [0, 5, 17, 18, 33, 40];
        let blocks: Vec<_> = cuts
            .windows(2)
            .map(|w| x.rows(w[0], w[1] - w[0]).into_owned())
            .collect();
        let tree = reduce(blocks.iter().map(block_r).collect());
        for (k, b) in blocks.iter().enumerate() {
            let qk = block_q(b) * &tree.leaf_maps[k];
            let back = &qk * &tree.r;
            assert!((back - b).amax() < 1e-12);
        }
        // Stacked Q is orthonormal.
        let mut g = DMatrix::<f64>::zeros(6, 6);
        for (k, b) in blocks.iter().enumerate() {
            let qk = block_q(b) * &tree.leaf_maps[k];
            g += qk.transpose() * qk;
        }
        assert!((g - DMatrix::identity(6, 6)).amax() < 1e-13);
    }

    #[test]
    fn single_block_is_plain_qr() {
        let x = lcg_matrix(12, 4, 9);
        let tree = reduce(vec![block_r(&x)]);
        assert_eq!(tree.r, block_r(&x));
        assert_eq!(tree.leaf_maps[0], DMatrix::identity(4, 4));
    }
}
