//! Positional encoding: shared Fourier features plus a learned per-cell
//! coordinate embedding over the fixed query grid.

use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use std::sync::Arc;

use crate::autodiff::{Scalar, Var};
use crate::error::{Error, Result};
use crate::nn::{init, ParamId, ParamStore, Session};

use super::coord::cell_center;

/// Standard deviation of the Fourier frequency initialization.
pub const FF_INIT_STD: f64 = 10.0;

pub struct PositionalEncoder {
    /// `[2, n_pe]`, shared across all coordinates.
    pub w_ff: ParamId,
    /// `[grid^2, 2*n_pe]`: per query cell, the first `n_pe` columns multiply
    /// the row coordinate and the last `n_pe` the column coordinate.
    pub w_ce: ParamId,
    pub n_pe: usize,
    pub grid: usize,
}

impl PositionalEncoder {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        n_pe: usize,
        grid: usize,
    ) -> Self {
        let w_ff = store.add(
            format!("{name}/w_ff"),
            init::normal(rng, &[2, n_pe], FF_INIT_STD),
            true,
        );
        let w_ce = store.add(
            format!("{name}/w_ce"),
            init::zeros(&[grid * grid, 2 * n_pe]),
            true,
        );
        PositionalEncoder {
            w_ff,
            w_ce,
            n_pe,
            grid,
        }
    }

    /// Encodings for query-grid cells, each `[n, n_pe]`: `(e_ff, e_ce)` where
    /// `e_ff = sin(x_q . W_ff)` and `e_ce = W_ce^cell . x_q`.
    pub fn encode<T: Scalar>(
        &self,
        sess: &mut Session<T>,
        cells: &[(usize, usize)],
    ) -> Result<(Var, Var)> {
        let n = cells.len();
        let g = self.grid;
        let mut coords = Vec::with_capacity(2 * n);
        let mut flat = Vec::with_capacity(n);
        for &(i, j) in cells {
            if i >= g || j >= g {
                return Err(Error::invalid(format!(
                    "query cell ({i}, {j}) outside {g}x{g} grid"
                )));
            }
            coords.push(T::from_f64(cell_center(i, g)));
            coords.push(T::from_f64(cell_center(j, g)));
            flat.push(i * g + j);
        }
        let x = sess.constant(ArrayD::from_shape_vec(IxDyn(&[n, 2]), coords).unwrap());

        let w_ff = sess.param(self.w_ff);
        let pre = sess.tape.matmul(x, w_ff);
        let e_ff = sess.tape.sin(pre);

        let w_ce = sess.param(self.w_ce);
        let rows = sess.tape.gather_rows(w_ce, Arc::new(flat));
        let a = sess.tape.slice_cols(rows, 0, self.n_pe);
        let b = sess.tape.slice_cols(rows, self.n_pe, 2 * self.n_pe);
        let ycol = self.broadcast_coord(sess, cells, 0);
        let xcol = self.broadcast_coord(sess, cells, 1);
        let ay = sess.tape.mul(a, ycol);
        let bx = sess.tape.mul(b, xcol);
        let e_ce = sess.tape.add(ay, bx);
        Ok((e_ff, e_ce))
    }

    fn broadcast_coord<T: Scalar>(
        &self,
        sess: &mut Session<T>,
        cells: &[(usize, usize)],
        axis: usize,
    ) -> Var {
        let n = cells.len();
        let mut vals = Vec::with_capacity(n * self.n_pe);
        for &(i, j) in cells {
            let idx = if axis == 0 { i } else { j };
            let c = T::from_f64(cell_center(idx, self.grid));
            vals.extend(std::iter::repeat(c).take(self.n_pe));
        }
        sess.constant(ArrayD::from_shape_vec(IxDyn(&[n, self.n_pe]), vals).unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn setup(n_pe: usize, grid: usize) -> (ParamStore<f64>, PositionalEncoder) {
        let mut store = ParamStore::new();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let pe = PositionalEncoder::new(&mut store, &mut rng, "pe", n_pe, grid);
        (store, pe)
    }

    #[test]
    fn ff_entries_bounded_and_match_direct_sine() {
        let (mut store, pe) = setup(6, 8);
        let w_ff = store.value(pe.w_ff).clone();
        let cells: Vec<(usize, usize)> = (0..8).map(|k| (k, 7 - k)).collect();
        let mut sess = Session::new(&mut store, false);
        let (e_ff, _) = pe.encode(&mut sess, &cells).unwrap();
        let v = sess.tape.value(e_ff);
        for (r, &(i, j)) in cells.iter().enumerate() {
            let y = cell_center(i, 8);
            let x = cell_center(j, 8);
            for k in 0..6 {
                let expect = (w_ff[[0, k]] * y + w_ff[[1, k]] * x).sin();
                assert!((v[[r, k]] - expect).abs() < 1e-12);
                assert!(v[[r, k]].abs() <= 1.0);
            }
        }
    }

    #[test]
    fn zero_initialized_ce_is_zero_until_trained() {
        let (mut store, pe) = setup(4, 4);
        let mut sess = Session::new(&mut store, false);
        let (_, e_ce) = pe.encode(&mut sess, &[(0, 0), (3, 2)]).unwrap();
        assert!(sess.tape.value(e_ce).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ce_matches_per_cell_matrix_product() {
        let (mut store, pe) = setup(3, 4);
        // give w_ce distinct values so the gather is actually exercised
        let w = store.value_mut(pe.w_ce);
        for (k, v) in w.iter_mut().enumerate() {
            *v = (k as f64) * 0.01 - 0.3;
        }
        let w_ce = store.value(pe.w_ce).clone();
        let cells = vec![(1usize, 2usize), (3, 0)];
        let mut sess = Session::new(&mut store, false);
        let (_, e_ce) = pe.encode(&mut sess, &cells).unwrap();
        let v = sess.tape.value(e_ce);
        for (r, &(i, j)) in cells.iter().enumerate() {
            let y = cell_center(i, 4);
            let x = cell_center(j, 4);
            let row = i * 4 + j;
            for k in 0..3 {
                let expect = w_ce[[row, k]] * y + w_ce[[row, 3 + k]] * x;
                assert!((v[[r, k]] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn out_of_grid_cell_rejected() {
        let (mut store, pe) = setup(2, 4);
        let mut sess = Session::new(&mut store, false);
        assert!(pe.encode(&mut sess, &[(4, 0)]).is_err());
    }

    #[test]
    fn ce_storage_is_one_matrix_per_cell() {
        let (store, pe) = setup(5, 16);
        assert_eq!(store.value(pe.w_ce).shape(), &[16 * 16, 10]);
    }
}
