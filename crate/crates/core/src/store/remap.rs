//! Alignment, cropping, and nearest-neighbor remapping onto the common grid.

use rayon::prelude::*;

use super::raw::{RawField, RawPoint};
use crate::error::{Error, Result};
use crate::grid::CommonGrid;

/// Default left crop bound after alignment, in cm.
pub const DEFAULT_CROP_X_MIN: f64 = -32.0;

/// Shifts x so the right edge of the domain sits at 0, then drops points with
/// shifted x below `crop_x_min`.
pub fn align_and_crop(raw: &RawField, crop_x_min: f64) -> Result<RawField> {
    let empty = || Error::EmptyField {
        sim_key: raw.sim_key.clone(),
        timestep: raw.timestep,
    };
    let x_max = raw
        .points
        .iter()
        .map(|p| p.x)
        .fold(f64::NEG_INFINITY, f64::max);
    if !x_max.is_finite() {
        return Err(empty());
    }
    let points: Vec<RawPoint> = raw
        .points
        .iter()
        .map(|p| RawPoint {
            x: p.x - x_max,
            ..*p
        })
        .filter(|p| p.x >= crop_x_min)
        .collect();
    if points.is_empty() {
        return Err(empty());
    }
    Ok(RawField {
        points,
        variable: raw.variable,
        sim_key: raw.sim_key.clone(),
        timestep: raw.timestep,
    })
}

/// Uniform bins over the source points' bounding box.
struct Bins {
    x0: f64,
    y0: f64,
    size: f64,
    nbx: i64,
    nby: i64,
    /// Point indices per bin, bin `(bx, by)` at `by * nbx + bx`.
    cells: Vec<Vec<u32>>,
}

impl Bins {
    fn build(points: &[RawPoint], size: f64) -> Self {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for p in points {
            x0 = x0.min(p.x);
            x1 = x1.max(p.x);
            y0 = y0.min(p.y);
            y1 = y1.max(p.y);
        }
        let nbx = ((x1 - x0) / size).floor() as i64 + 1;
        let nby = ((y1 - y0) / size).floor() as i64 + 1;
        let mut cells = vec![Vec::new(); (nbx * nby) as usize];
        for (i, p) in points.iter().enumerate() {
            let (bx, by) = (
                (((p.x - x0) / size).floor() as i64).min(nbx - 1),
                (((p.y - y0) / size).floor() as i64).min(nby - 1),
            );
            cells[(by * nbx + bx) as usize].push(i as u32);
        }
        Self {
            x0,
            y0,
            size,
            nbx,
            nby,
            cells,
        }
    }

    /// Nearest point to `(x, y)`; ties go to the smallest y, then smallest x.
    fn nearest(&self, points: &[RawPoint], x: f64, y: f64) -> usize {
        // Virtual bin of the target; may lie outside the binned region.
        let tx = ((x - self.x0) / self.size).floor() as i64;
        let ty = ((y - self.y0) / self.size).floor() as i64;
        let max_ring = [tx, self.nbx - 1 - tx, ty, self.nby - 1 - ty]
            .into_iter()
            .map(i64::abs)
            .max()
            .unwrap()
            + 1;

        let mut best: Option<(f64, usize)> = None;
        let consider = |idx: u32, best: &mut Option<(f64, usize)>| {
            let p = &points[idx as usize];
            let d2 = (p.x - x) * (p.x - x) + (p.y - y) * (p.y - y);
            let better = match *best {
                None => true,
                Some((bd, bi)) => {
                    let q = &points[bi];
                    d2 < bd || (d2 == bd && (p.y, p.x) < (q.y, q.x))
                }
            };
            if better {
                *best = Some((d2, idx as usize));
            }
        };

        for ring in 0..=max_ring {
            for by in (ty - ring)..=(ty + ring) {
                if by < 0 || by >= self.nby {
                    continue;
                }
                let on_edge_row = by == ty - ring || by == ty + ring;
                let step = if on_edge_row { 1 } else { 2 * ring.max(1) };
                let mut bx = tx - ring;
                while bx <= tx + ring {
                    if bx >= 0 && bx < self.nbx {
                        for &idx in &self.cells[(by * self.nbx + bx) as usize] {
                            consider(idx, &mut best);
                        }
                    }
                    bx += step;
                }
            }
            // Anything in ring + 1 or beyond is at least `ring * size` away.
            if let Some((d2, _)) = best {
                let reach = ring as f64 * self.size;
                if reach * reach > d2 {
                    break;
                }
            }
        }
        best.expect("non-empty point set").1
    }
}

/// Maps a (typically aligned and cropped) raw field onto the grid cell centers
/// by 1-nearest-neighbor. Output is in natural order.
pub fn remap_1nn(raw: &RawField, grid: &CommonGrid) -> Result<Vec<f64>> {
    if raw.points.is_empty() {
        return Err(Error::EmptyField {
            sim_key: raw.sim_key.clone(),
            timestep: raw.timestep,
        });
    }
    if raw
        .points
        .iter()
        .any(|p| !(p.x.is_finite() && p.y.is_finite()))
    {
        return Err(Error::NonFiniteInput);
    }
    let bins = Bins::build(&raw.points, grid.delta);
    let mut out = vec![0.0; grid.n_points()];
    out.par_chunks_mut(grid.nx)
        .enumerate()
        .for_each(|(j, row)| {
            let y = grid.y_center(j);
            for (i, v) in row.iter_mut().enumerate() {
                let idx = bins.nearest(&raw.points, grid.x_center(i), y);
                *v = raw.points[idx].value;
            }
        });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meta::Variable;
    use proptest::prelude::*;

    fn field(points: &[(f64, f64, f64)]) -> RawField {
        RawField {
            points: points
                .iter()
                .map(|&(x, y, value)| RawPoint { x, y, value })
                .collect(),
            variable: Variable::Mass,
            sim_key: "s".into(),
            timestep: 0,
        }
    }

    /// Exhaustive nearest neighbor with the same tie-break.
    fn brute_force(raw: &RawField, grid: &CommonGrid) -> Vec<f64> {
        (0..grid.n_points())
            .map(|k| {
                let (x, y) = grid.cell_center(k);
                let mut best = &raw.points[0];
                let mut bd = f64::INFINITY;
                for p in &raw.points {
                    let d = (p.x - x).powi(2) + (p.y - y).powi(2);
                    if d < bd || (d == bd && (p.y, p.x) < (best.y, best.x)) {
                        bd = d;
                        best = p;
                    }
                }
                best.value
            })
            .collect()
    }

    #[test]
    fn three_point_shift_and_crop() {
        let raw = field(&[(10.0, 0.0, 1.0), (42.0, 0.0, 2.0), (5.0, 1.0, 3.0)]);
        let out = align_and_crop(&raw, -32.0).unwrap();
        assert_eq!(out.points.len(), 2);
        assert_eq!(out.points[0], RawPoint { x: -32.0, y: 0.0, value: 1.0 });
        assert_eq!(out.points[1], RawPoint { x: 0.0, y: 0.0, value: 2.0 });
    }

    #[test]
    fn zero_shift_is_identity() {
        let raw = field(&[(-3.0, 0.0, 1.0), (0.0, 2.0, 2.0), (-1.0, 1.0, 3.0)]);
        assert_eq!(align_and_crop(&raw, -32.0).unwrap(), raw);
    }

    #[test]
    fn crop_everything_is_error() {
        let raw = field(&[(0.0, 0.0, 1.0)]);
        assert!(matches!(
            align_and_crop(&raw, 1.0),
            Err(Error::EmptyField { .. })
        ));
        assert!(align_and_crop(&field(&[]), -32.0).is_err());
    }

    #[test]
    fn single_point_fills_grid() {
        let grid = CommonGrid::new(0.0, 5.0, 0.0, 3.0, 1.0, 1).unwrap();
        let out = remap_1nn(&field(&[(40.0, -7.0, 4.5)]), &grid).unwrap();
        assert!(out.iter().all(|&v| v == 4.5));
    }

    #[test]
    fn on_grid_points_copy_through() {
        let grid = CommonGrid::new(-4.0, 0.0, 0.0, 3.0, 1.0, 1).unwrap();
        let pts: Vec<_> = (0..grid.n_points())
            .rev()
            .map(|k| {
                let (x, y) = grid.cell_center(k);
                (x, y, k as f64)
            })
            .collect();
        let out = remap_1nn(&field(&pts), &grid).unwrap();
        let expect: Vec<f64> = (0..grid.n_points()).map(|k| k as f64).collect();
        assert_eq!(out, expect);
    }

    #[test]
    fn corners_of_two_by_two() {
        let grid = CommonGrid::new(0.0, 2.0, 0.0, 2.0, 1.0, 1).unwrap();
        // Corners of the domain, value = corner index.
        let raw = field(&[(0.0, 0.0, 0.0), (2.0, 0.0, 1.0), (0.0, 2.0, 2.0), (2.0, 2.0, 3.0)]);
        let out = remap_1nn(&raw, &grid).unwrap();
        assert_eq!(out, brute_force(&raw, &grid));
        assert_eq!(out, vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn equidistant_tie_prefers_smallest_y_then_x() {
        let grid = CommonGrid::new(0.0, 1.0, 0.0, 1.0, 1.0, 1).unwrap();
        // All four at distance 0.5 from the single center (0.5, 0.5).
        let raw = field(&[(1.0, 0.5, 1.0), (0.5, 1.0, 2.0), (0.0, 0.5, 3.0), (0.5, 0.0, 4.0)]);
        assert_eq!(remap_1nn(&raw, &grid).unwrap(), vec![4.0]);
        let raw = field(&[(1.0, 0.5, 1.0), (0.0, 0.5, 3.0)]);
        assert_eq!(remap_1nn(&raw, &grid).unwrap(), vec![3.0]);
    }

    fn arb_points() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
        prop::collection::vec((-12i32..8, -3i32..9, -5.0f64..5.0), 1..60).prop_map(|v| {
            let mut seen = std::collections::HashSet::new();
            v.into_iter()
                .filter(|(x, y, _)| seen.insert((*x, *y)))
                .map(|(x, y, val)| (x as f64 * 0.37, y as f64 * 0.41, val))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn binned_search_matches_brute_force(pts in arb_points()) {
            let grid = CommonGrid::new(-4.0, 1.0, -1.0, 3.0, 0.5, 1).unwrap();
            let raw = field(&pts);
            prop_assert_eq!(remap_1nn(&raw, &grid).unwrap(), brute_force(&raw, &grid));
        }

        #[test]
        fn remap_ignores_point_order(pts in arb_points(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let grid = CommonGrid::new(-4.0, 1.0, -1.0, 3.0, 0.5, 1).unwrap();
            let mut shuffled = pts.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(
                remap_1nn(&field(&pts), &grid).unwrap(),
                remap_1nn(&field(&shuffled), &grid).unwrap()
            );
        }

        #[test]
        fn align_and_crop_is_idempotent(pts in arb_points(), crop in -5.0f64..0.0) {
            let raw = field(&pts);
            if let Ok(once) = align_and_crop(&raw, crop) {
                prop_assert_eq!(align_and_crop(&once, crop).unwrap(), once);
            }
        }
    }
}
