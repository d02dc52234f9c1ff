//! Normalized cell-center coordinates and nearest-center lookup.
//!
//! Every `S x S` grid maps cell `(i, j)` to the center
//! `((2i+1)/S - 1, (2j+1)/S - 1)` in `[-1, 1]^2`, stored row-major as
//! `(row_coord, col_coord)`.

use crate::error::{Error, Result};

pub fn cell_center(i: usize, s: usize) -> f64 {
    (2 * i + 1) as f64 / s as f64 - 1.0
}

/// Row-major list of all `size^2` cell-center coordinates.
pub fn make_coord_grid(size: usize) -> Result<Vec<[f64; 2]>> {
    if size == 0 {
        return Err(Error::invalid("coordinate grid size must be >= 1"));
    }
    let mut out = Vec::with_capacity(size * size);
    for i in 0..size {
        let y = cell_center(i, size);
        for j in 0..size {
            out.push([y, cell_center(j, size)]);
        }
    }
    Ok(out)
}

/// Index of the cell center nearest to coordinate `c` on a size-`s` axis.
/// Exact midpoints round down, so equidistant ties go to the lower index.
pub fn nearest_index(c: f64, s: usize) -> usize {
    let u = (c + 1.0) * s as f64 / 2.0 - 0.5;
    let i = (u - 0.5).ceil();
    (i.max(0.0) as usize).min(s - 1)
}

/// Nearest cell `(i, j)` to a 2D coordinate; separable because the grid is
/// axis-aligned, and the per-axis round-down matches the row-then-column
/// tie-break.
pub fn nearest_cell(coord: [f64; 2], s: usize) -> (usize, usize) {
    (nearest_index(coord[0], s), nearest_index(coord[1], s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_one_center_is_origin() {
        assert_eq!(make_coord_grid(1).unwrap(), vec![[0.0, 0.0]]);
    }

    #[test]
    fn size_two_centers_are_half() {
        let g = make_coord_grid(2).unwrap();
        assert_eq!(
            g,
            vec![[-0.5, -0.5], [-0.5, 0.5], [0.5, -0.5], [0.5, 0.5]]
        );
    }

    #[test]
    fn size_four_axis_coords() {
        let g = make_coord_grid(4).unwrap();
        let xs: Vec<f64> = (0..4).map(|j| g[j][1]).collect();
        assert_eq!(xs, vec![-0.75, -0.25, 0.25, 0.75]);
    }

    #[test]
    fn zero_size_rejected() {
        assert!(make_coord_grid(0).is_err());
    }

    #[test]
    fn coords_strictly_inside_unit_box() {
        for s in [1, 2, 3, 16, 128] {
            for c in make_coord_grid(s).unwrap() {
                assert!(c[0] > -1.0 && c[0] < 1.0);
                assert!(c[1] > -1.0 && c[1] < 1.0);
            }
        }
    }

    #[test]
    fn exact_center_maps_to_itself() {
        for s in [1, 2, 5, 16] {
            for i in 0..s {
                assert_eq!(nearest_index(cell_center(i, s), s), i);
            }
        }
    }

    #[test]
    fn origin_tie_on_size_two_picks_low_cell() {
        assert_eq!(nearest_cell([0.0, 0.0], 2), (0, 0));
    }

    #[test]
    fn random_queries_match_exhaustive_search() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let s = 16;
        for _ in 0..1000 {
            let q = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let got = nearest_cell(q, s);
            // brute force over all centers; strict < keeps the first
            // (lowest row, then column) of any equidistant set
            let mut best = (0usize, 0usize);
            let mut best_d = f64::INFINITY;
            for i in 0..s {
                for j in 0..s {
                    let dy = q[0] - cell_center(i, s);
                    let dx = q[1] - cell_center(j, s);
                    let d = dy * dy + dx * dx;
                    if d < best_d {
                        best_d = d;
                        best = (i, j);
                    }
                }
            }
            assert_eq!(got, best, "query {q:?}");
        }
    }
}
