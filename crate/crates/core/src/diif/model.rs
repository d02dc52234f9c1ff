//! The assembled denoiser: encoder, positional encoder, and shared decoder
//! with multi-scale decoding fusion over the fixed query grid.

use ndarray::{Array2, Array3, ArrayD, IxDyn};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::autodiff::{Scalar, Var};
use crate::depth::{compute_normal_map, DepthMap};
use crate::error::{Error, Result};
use crate::nn::{ParamStore, Session};

use super::coord::{cell_center, make_coord_grid, nearest_cell};
use super::decoder::DiifDecoder;
use super::encoder::{Encoder, PYRAMID_LEVELS};
use super::pe::PositionalEncoder;

/// Denoiser hyperparameters. The grid (input and query resolution) is 128 in
/// the full configuration; tests shrink everything.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DmdConfig {
    pub channels: usize,
    pub n_res: usize,
    pub n_pe: usize,
    pub grid: usize,
    /// Gain handed to the normal-map computation on the noisy input.
    pub normal_gain: f64,
}

impl Default for DmdConfig {
    fn default() -> Self {
        DmdConfig {
            channels: 64,
            n_res: 4,
            n_pe: 64,
            grid: 128,
            normal_gain: 0.05,
        }
    }
}

impl DmdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.n_pe == 0 {
            return Err(Error::config("denoiser channels and n_pe must be >= 1"));
        }
        if self.grid % 8 != 0 || self.grid == 0 {
            return Err(Error::config(format!(
                "denoiser grid {} must be a positive multiple of 8",
                self.grid
            )));
        }
        Ok(())
    }

    pub fn decoder_input_width(&self) -> usize {
        self.channels + 2 + 2 * self.n_pe
    }
}

pub struct DmdNet {
    pub cfg: DmdConfig,
    pub encoder: Encoder,
    pub decoder: DiifDecoder,
    pub pe: PositionalEncoder,
}

impl DmdNet {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        cfg: DmdConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let encoder = Encoder::new(store, rng, "dmd/enc", cfg.channels, cfg.n_res, cfg.grid);
        let decoder = DiifDecoder::new(store, rng, "dmd/dec", cfg.decoder_input_width());
        let pe = PositionalEncoder::new(store, rng, "dmd/pe", cfg.n_pe, cfg.grid);
        Ok(DmdNet {
            cfg,
            encoder,
            decoder,
            pe,
        })
    }

    /// Full forward pass on model-range inputs: depth `[S, S]`, normal
    /// `[3, S, S]`, both in `[-1, 1]`. Returns the denoised grid as a
    /// `[1, 1, S, S]` tape value in `[-1, 1]`.
    pub fn forward<T: Scalar>(
        &self,
        sess: &mut Session<T>,
        depth: &Array2<T>,
        normal: &Array3<T>,
    ) -> Result<Var> {
        let s = self.cfg.grid;
        if depth.dim() != (s, s) {
            return Err(Error::invalid(format!("denoiser input must be {s}x{s}")));
        }
        if normal.dim() != (3, s, s) {
            return Err(Error::invalid(format!("normal input must be [3,{s},{s}]")));
        }
        let d = sess.constant(
            depth
                .clone()
                .into_shape_with_order(IxDyn(&[1, 1, s, s]))
                .unwrap(),
        );
        let n = sess.constant(
            normal
                .clone()
                .into_shape_with_order(IxDyn(&[1, 3, s, s]))
                .unwrap(),
        );
        let pyramid = self.encoder.forward(sess, d, n)?;
        self.msdf_forward(sess, &pyramid)
    }

    /// Multi-scale decoding fusion over the full query grid.
    pub fn msdf_forward<T: Scalar>(
        &self,
        sess: &mut Session<T>,
        pyramid: &[Var; PYRAMID_LEVELS],
    ) -> Result<Var> {
        let s = self.cfg.grid;
        let c = self.cfg.channels;
        let queries = make_coord_grid(s)?;
        let n = queries.len();
        let cells: Vec<(usize, usize)> = (0..s)
            .flat_map(|i| (0..s).map(move |j| (i, j)))
            .collect();
        let (e_ff, e_ce) = self.pe.encode(sess, &cells)?;

        let mut sum: Option<Var> = None;
        for (level_idx, &level) in pyramid.iter().enumerate() {
            let ls = s >> level_idx;
            let shape = sess.tape.value(level).shape().to_vec();
            if shape != [1, c, ls, ls] {
                return Err(Error::invalid(format!(
                    "pyramid level {level_idx} has shape {shape:?}, expected [1,{c},{ls},{ls}]"
                )));
            }
            let (rel, idx) = level_offsets(&queries, ls);
            let flat = sess.tape.reshape(level, &[c, ls * ls]);
            let codes = sess.tape.permute(flat, &[1, 0]);
            let z = sess.tape.gather_rows(codes, Arc::new(idx));
            let rel_t: Vec<T> = rel.into_iter().map(T::from_f64).collect();
            let rel_v = sess.constant(ArrayD::from_shape_vec(IxDyn(&[n, 2]), rel_t).unwrap());
            let input = sess.tape.concat(&[z, rel_v, e_ff, e_ce], 1);
            let t = self.decoder.trunk_forward(sess, input);
            sum = Some(match sum {
                None => t,
                Some(acc) => sess.tape.add(acc, t),
            });
        }
        let fused = sum.expect("pyramid has levels");
        let out = self.decoder.head_forward(sess, fused);
        Ok(sess.tape.reshape(out, &[1, 1, s, s]))
    }
}

/// Per-query relative offsets `x_q - x*` and flat nearest-cell indices for a
/// pyramid level of size `ls`.
pub fn level_offsets(queries: &[[f64; 2]], ls: usize) -> (Vec<f64>, Vec<usize>) {
    let mut rel = Vec::with_capacity(queries.len() * 2);
    let mut idx = Vec::with_capacity(queries.len());
    for q in queries {
        let (i, j) = nearest_cell(*q, ls);
        rel.push(q[0] - cell_center(i, ls));
        rel.push(q[1] - cell_center(j, ls));
        idx.push(i * ls + j);
    }
    (rel, idx)
}

/// Model-range inputs for a depth map: depth mapped by `v/127.5 - 1` and the
/// normal map computed with `gain`.
pub fn model_inputs<T: Scalar>(d: &DepthMap, gain: f64) -> (Array2<T>, Array3<T>) {
    let (h, w) = d.values.dim();
    let depth_in: Array2<T> = d.values.mapv(|v| T::from_f64(v as f64 / 127.5 - 1.0));
    let nm = compute_normal_map(d, gain);
    let mut normal_in = Array3::<T>::zeros((3, h, w));
    for i in 0..h {
        for j in 0..w {
            for k in 0..3 {
                normal_in[[k, i, j]] = T::from_f64(nm.data[[i, j, k]]);
            }
        }
    }
    (depth_in, normal_in)
}

/// Convert a preprocessed depth map to model range, denoise, and map back to
/// `[0, 255]`. The mask passes through unchanged.
pub fn denoise<T: Scalar>(
    net: &DmdNet,
    store: &mut ParamStore<T>,
    d: &DepthMap,
) -> Result<DepthMap> {
    let s = net.cfg.grid;
    if d.values.dim() != (s, s) {
        return Err(Error::invalid(format!(
            "denoise expects a preprocessed {s}x{s} map, got {:?}",
            d.values.dim()
        )));
    }
    let (depth_in, normal_in) = model_inputs::<T>(d, net.cfg.normal_gain);
    let mut sess = Session::new(store, false);
    let out = net.forward(&mut sess, &depth_in, &normal_in)?;
    let y = sess.tape.value(out);
    let values = Array2::from_shape_fn((s, s), |(i, j)| {
        (((y[[0, 0, i, j]].to_f64()) + 1.0) * 127.5).clamp(0.0, 255.0) as f32
    });
    Ok(DepthMap {
        values,
        mask: d.mask.clone(),
    })
}
