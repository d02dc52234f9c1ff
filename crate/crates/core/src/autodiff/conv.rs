//! Convolution and pooling kernels used by the tape ops.
//!
//! Convolutions are lowered to GEMM via im2col. All routines work on a single
//! batch item `[C, H, W]`; the tape op loops over the batch.

use ndarray::{s, Array2, Array3, ArrayView3};

use super::scalar::Scalar;

/// Geometry of a 2D convolution. Kernels may be rectangular.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub ph: usize,
    pub pw: usize,
    pub groups: usize,
}

impl ConvSpec {
    pub fn square(k: usize, stride: usize, pad: usize, groups: usize) -> Self {
        ConvSpec { kh: k, kw: k, stride, ph: pad, pw: pad, groups }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let ho = (h + 2 * self.ph - self.kh) / self.stride + 1;
        let wo = (w + 2 * self.pw - self.kw) / self.stride + 1;
        (ho, wo)
    }
}

/// Lower `[C, H, W]` into a `[C*kh*kw, ho*wo]` patch matrix (zero padding).
pub fn im2col<T: Scalar>(x: &ArrayView3<T>, spec: &ConvSpec) -> Array2<T> {
    let (c, h, w) = x.dim();
    let (ho, wo) = spec.out_hw(h, w);
    let mut cols = Array2::<T>::zeros((c * spec.kh * spec.kw, ho * wo));
    for ch in 0..c {
        for dy in 0..spec.kh {
            for dx in 0..spec.kw {
                let row = (ch * spec.kh + dy) * spec.kw + dx;
                let mut out_row = cols.row_mut(row);
                for oy in 0..ho {
                    let iy = (oy * spec.stride + dy) as isize - spec.ph as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..wo {
                        let ix = (ox * spec.stride + dx) as isize - spec.pw as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        out_row[oy * wo + ox] = x[[ch, iy as usize, ix as usize]];
                    }
                }
            }
        }
    }
    cols
}

/// Scatter a `[C*kh*kw, ho*wo]` patch-gradient matrix back onto `[C, H, W]`.
pub fn col2im_accumulate<T: Scalar>(
    cols: &Array2<T>,
    spec: &ConvSpec,
    grad_x: &mut Array3<T>,
) {
    let (c, h, w) = grad_x.dim();
    let (ho, wo) = spec.out_hw(h, w);
    for ch in 0..c {
        for dy in 0..spec.kh {
            for dx in 0..spec.kw {
                let row = (ch * spec.kh + dy) * spec.kw + dx;
                let col_row = cols.row(row);
                for oy in 0..ho {
                    let iy = (oy * spec.stride + dy) as isize - spec.ph as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..wo {
                        let ix = (ox * spec.stride + dx) as isize - spec.pw as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        grad_x[[ch, iy as usize, ix as usize]] =
                            grad_x[[ch, iy as usize, ix as usize]] + col_row[oy * wo + ox];
                    }
                }
            }
        }
    }
}

/// Grouped convolution forward for one batch item.
///
/// `weight` is `[Cout, Cin/groups * kh * kw]` (already flattened), output is
/// `[Cout, ho, wo]`.
pub fn conv_single<T: Scalar>(
    x: &ArrayView3<T>,
    weight: &Array2<T>,
    spec: &ConvSpec,
) -> Array3<T> {
    let (cin, h, w) = x.dim();
    let cout = weight.dim().0;
    let (ho, wo) = spec.out_hw(h, w);
    let cin_g = cin / spec.groups;
    let cout_g = cout / spec.groups;
    let mut out = Array3::<T>::zeros((cout, ho, wo));
    for g in 0..spec.groups {
        let xg = x.slice(s![g * cin_g..(g + 1) * cin_g, .., ..]);
        let cols = im2col(&xg, spec);
        let wg = weight.slice(s![g * cout_g..(g + 1) * cout_g, ..]);
        let og = wg.dot(&cols);
        out.slice_mut(s![g * cout_g..(g + 1) * cout_g, .., ..])
            .assign(&og.into_shape_with_order((cout_g, ho, wo)).unwrap());
    }
    out
}

/// Backward of [`conv_single`]: returns the input gradient and accumulates the
/// weight gradient into `grad_w`.
pub fn conv_single_backward<T: Scalar>(
    x: &ArrayView3<T>,
    weight: &Array2<T>,
    grad_out: &ArrayView3<T>,
    spec: &ConvSpec,
    grad_w: &mut Array2<T>,
) -> Array3<T> {
    let (cin, h, w) = x.dim();
    let cout = weight.dim().0;
    let (ho, wo) = spec.out_hw(h, w);
    let cin_g = cin / spec.groups;
    let cout_g = cout / spec.groups;
    let mut grad_x = Array3::<T>::zeros((cin, h, w));
    for g in 0..spec.groups {
        let xg = x.slice(s![g * cin_g..(g + 1) * cin_g, .., ..]);
        let cols = im2col(&xg, spec);
        let go = grad_out
            .slice(s![g * cout_g..(g + 1) * cout_g, .., ..])
            .to_owned()
            .into_shape_with_order((cout_g, ho * wo))
            .unwrap();
        let wg = weight.slice(s![g * cout_g..(g + 1) * cout_g, ..]);
        grad_w
            .slice_mut(s![g * cout_g..(g + 1) * cout_g, ..])
            .scaled_add(T::one(), &go.dot(&cols.t()));
        let grad_cols = wg.t().dot(&go);
        let mut gx = grad_x.slice_mut(s![g * cin_g..(g + 1) * cin_g, .., ..]);
        let mut tmp = Array3::<T>::zeros((cin_g, h, w));
        col2im_accumulate(&grad_cols, spec, &mut tmp);
        gx += &tmp;
    }
    grad_x
}

/// Max pooling forward for one batch item. Returns the output and the flat
/// input index of each maximum (`C*H*W` layout) for the backward pass.
pub fn maxpool_single<T: Scalar>(
    x: &ArrayView3<T>,
    k: usize,
    stride: usize,
    pad: usize,
) -> (Array3<T>, Vec<usize>) {
    let (c, h, w) = x.dim();
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (w + 2 * pad - k) / stride + 1;
    let mut out = Array3::<T>::zeros((c, ho, wo));
    let mut argmax = vec![0usize; c * ho * wo];
    for ch in 0..c {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = T::neg_infinity();
                let mut best_idx = 0usize;
                for dy in 0..k {
                    let iy = (oy * stride + dy) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for dx in 0..k {
                        let ix = (ox * stride + dx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let v = x[[ch, iy as usize, ix as usize]];
                        if v > best {
                            best = v;
                            best_idx = (ch * h + iy as usize) * w + ix as usize;
                        }
                    }
                }
                out[[ch, oy, ox]] = best;
                argmax[(ch * ho + oy) * wo + ox] = best_idx;
            }
        }
    }
    (out, argmax)
}
