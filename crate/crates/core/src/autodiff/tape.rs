//! Reverse-mode automatic differentiation on a flat tape.
//!
//! Values are dynamic-rank `ndarray` arrays in standard layout. Every tape
//! method appends a node and returns a [`Var`] handle; [`Tape::backward`]
//! walks the tape in reverse and returns gradients for leaf nodes.

use std::sync::Arc;

use ndarray::{concatenate, s, Array1, Array2, ArrayD, Axis, Ix2, Ix4, IxDyn};

use super::conv::{conv_single, conv_single_backward, maxpool_single, ConvSpec};
use super::scalar::Scalar;

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

enum Op<T: Scalar> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddScalar(Var),
    MulScalar(Var, T),
    PowScalar(Var, T),
    Relu(Var),
    Tanh(Var),
    Sin(Var),
    Abs(Var),
    MatMul(Var, Var),
    AddRow(Var, Var),
    AddChan(Var, Var),
    MulChan(Var, Var),
    Conv2d {
        x: Var,
        w: Var,
        spec: ConvSpec,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: ArrayD<T>,
        inv_std: Vec<T>,
    },
    ReplicatePad {
        x: Var,
        p: usize,
    },
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    GatherRows {
        x: Var,
        indices: Arc<Vec<usize>>,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    Reshape(Var),
    Permute {
        x: Var,
        axes: Vec<usize>,
    },
    SumAll(Var),
    MeanAll(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        softmax: Array2<T>,
    },
}

struct Node<T: Scalar> {
    value: ArrayD<T>,
    op: Op<T>,
}

/// Gradients returned by [`Tape::backward`]; indexed by [`Var`]. Only leaf
/// nodes retain their gradient.
pub struct Gradients<T: Scalar> {
    slots: Vec<Option<ArrayD<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn take(&mut self, v: Var) -> Option<ArrayD<T>> {
        self.slots[v.0].take()
    }
    pub fn get(&self, v: Var) -> Option<&ArrayD<T>> {
        self.slots[v.0].as_ref()
    }
}

#[derive(Default)]
pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: ArrayD<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &ArrayD<T> {
        &self.nodes[v.0].value
    }

    /// Scalar value of a single-element node.
    pub fn scalar(&self, v: Var) -> T {
        let val = self.value(v);
        assert_eq!(val.len(), 1, "scalar() on non-scalar node");
        *val.iter().next().unwrap()
    }

    pub fn leaf(&mut self, value: ArrayD<T>) -> Var {
        let value = to_standard(value);
        self.push(value, Op::Leaf)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape());
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape());
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape());
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape());
        let v = self.value(a) / self.value(b);
        self.push(v, Op::Div(a, b))
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        let v = self.value(a).mapv(|x| x + c);
        self.push(v, Op::AddScalar(a))
    }

    pub fn mul_scalar(&mut self, a: Var, c: T) -> Var {
        let v = self.value(a).mapv(|x| x * c);
        self.push(v, Op::MulScalar(a, c))
    }

    /// Elementwise power with a constant exponent.
    pub fn pow_scalar(&mut self, a: Var, p: T) -> Var {
        let v = self.value(a).mapv(|x| x.powf(p));
        self.push(v, Op::PowScalar(a, p))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| if x > T::zero() { x } else { T::zero() });
        self.push(v, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.tanh());
        self.push(v, Op::Tanh(a))
    }

    pub fn sin(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.sin());
        self.push(v, Op::Sin(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.abs());
        self.push(v, Op::Abs(a))
    }

    /// `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let av = as2(self.value(a));
        let bv = as2(self.value(b));
        let v = av.dot(&bv).into_dyn();
        self.push(v, Op::MatMul(a, b))
    }

    /// `[m,n] + [n]` broadcast over rows.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let av = as2(self.value(a));
        let bv = self.value(b);
        assert_eq!(av.dim().1, bv.len());
        let brow = bv.view().into_shape_with_order((1, bv.len())).unwrap();
        let v = (&av + &brow).into_dyn();
        self.push(v, Op::AddRow(a, b))
    }

    /// `[n,c,h,w] + [c]` broadcast over channels.
    pub fn add_chan(&mut self, a: Var, b: Var) -> Var {
        let av = self.value(a).view().into_dimensionality::<Ix4>().unwrap();
        let bv = self.value(b);
        assert_eq!(av.dim().1, bv.len());
        let bb = bv.view().into_shape_with_order((1, bv.len(), 1, 1)).unwrap();
        let v = (&av + &bb).into_dyn();
        self.push(v, Op::AddChan(a, b))
    }

    /// `[n,c,h,w] * [c]` broadcast over channels.
    pub fn mul_chan(&mut self, a: Var, b: Var) -> Var {
        let av = self.value(a).view().into_dimensionality::<Ix4>().unwrap();
        let bv = self.value(b);
        assert_eq!(av.dim().1, bv.len());
        let bb = bv.view().into_shape_with_order((1, bv.len(), 1, 1)).unwrap();
        let v = (&av * &bb).into_dyn();
        self.push(v, Op::MulChan(a, b))
    }

    /// Grouped 2D convolution. `x: [n,cin,h,w]`, `w: [cout,cin/g,kh,kw]`.
    pub fn conv2d(&mut self, x: Var, w: Var, spec: ConvSpec) -> Var {
        let xv = self.value(x).view().into_dimensionality::<Ix4>().unwrap();
        let wv = self.value(w).view().into_dimensionality::<Ix4>().unwrap();
        let (n, cin, h, ww) = xv.dim();
        let (cout, cin_g, kh, kw) = wv.dim();
        assert_eq!(cin, cin_g * spec.groups, "conv2d channel/group mismatch");
        assert_eq!(kh, spec.kh);
        assert_eq!(kw, spec.kw);
        let w2 = wv
            .into_shape_with_order((cout, cin_g * kh * kw))
            .unwrap()
            .to_owned();
        let (ho, wo) = spec.out_hw(h, ww);
        let mut out = ndarray::Array4::<T>::zeros((n, cout, ho, wo));
        for i in 0..n {
            let xi = xv.index_axis(Axis(0), i);
            out.index_axis_mut(Axis(0), i)
                .assign(&conv_single(&xi, &w2, &spec));
        }
        self.push(out.into_dyn(), Op::Conv2d { x, w, spec })
    }

    /// Max pooling with square window.
    pub fn max_pool(&mut self, x: Var, k: usize, stride: usize, pad: usize) -> Var {
        let xv = self.value(x).view().into_dimensionality::<Ix4>().unwrap();
        let (n, c, h, w) = xv.dim();
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (w + 2 * pad - k) / stride + 1;
        let mut out = ndarray::Array4::<T>::zeros((n, c, ho, wo));
        let mut argmax = Vec::with_capacity(n * c * ho * wo);
        for i in 0..n {
            let xi = xv.index_axis(Axis(0), i);
            let (oi, ai) = maxpool_single(&xi, k, stride, pad);
            out.index_axis_mut(Axis(0), i).assign(&oi);
            argmax.extend(ai);
        }
        self.push(out.into_dyn(), Op::MaxPool { x, argmax })
    }

    /// Training-mode batch normalization over `(n, h, w)` per channel.
    /// Returns the output together with the biased batch mean and variance so
    /// the caller can maintain running statistics.
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: T,
    ) -> (Var, Vec<T>, Vec<T>) {
        let xv = self.value(x).view().into_dimensionality::<Ix4>().unwrap();
        let (n, c, h, w) = xv.dim();
        let m = T::from_usize(n * h * w);
        let gv = self.value(gamma).to_owned();
        let bv = self.value(beta).to_owned();
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        for ch in 0..c {
            let xs = xv.slice(s![.., ch, .., ..]);
            let mu = xs.iter().fold(T::zero(), |a, &b| a + b) / m;
            let vv = xs
                .iter()
                .fold(T::zero(), |a, &b| a + (b - mu) * (b - mu))
                / m;
            mean[ch] = mu;
            var[ch] = vv;
        }
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut xhat = xv.to_owned();
        for ch in 0..c {
            let mu = mean[ch];
            let is = inv_std[ch];
            xhat.slice_mut(s![.., ch, .., ..])
                .mapv_inplace(|v| (v - mu) * is);
        }
        let mut out = xhat.clone();
        for ch in 0..c {
            let g = gv[[ch]];
            let b = bv[[ch]];
            out.slice_mut(s![.., ch, .., ..]).mapv_inplace(|v| v * g + b);
        }
        let var_out = var.clone();
        let v = self.push(
            out.into_dyn(),
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat: xhat.into_dyn(),
                inv_std,
            },
        );
        (v, mean, var_out)
    }

    /// Edge-replicating spatial padding of `[n,c,h,w]` by `p` on each side.
    pub fn replicate_pad(&mut self, x: Var, p: usize) -> Var {
        let xv = self.value(x).view().into_dimensionality::<Ix4>().unwrap();
        let (n, c, h, w) = xv.dim();
        let mut out = ndarray::Array4::<T>::zeros((n, c, h + 2 * p, w + 2 * p));
        for i in 0..n {
            for ch in 0..c {
                for oy in 0..h + 2 * p {
                    let iy = (oy as isize - p as isize).clamp(0, h as isize - 1) as usize;
                    for ox in 0..w + 2 * p {
                        let ix = (ox as isize - p as isize).clamp(0, w as isize - 1) as usize;
                        out[[i, ch, oy, ox]] = xv[[i, ch, iy, ix]];
                    }
                }
            }
        }
        self.push(out.into_dyn(), Op::ReplicatePad { x, p })
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = concatenate(Axis(axis), &views).expect("concat shape mismatch");
        self.push(
            to_standard(v),
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
        )
    }

    /// Select rows of a `[r, c]` matrix; gradients scatter-add back.
    pub fn gather_rows(&mut self, x: Var, indices: Arc<Vec<usize>>) -> Var {
        let xv = as2(self.value(x));
        let cols = xv.dim().1;
        let mut out = Array2::<T>::zeros((indices.len(), cols));
        for (k, &i) in indices.iter().enumerate() {
            out.row_mut(k).assign(&xv.row(i));
        }
        self.push(out.into_dyn(), Op::GatherRows { x, indices })
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Var {
        let xv = as2(self.value(x));
        let v = xv.slice(s![.., start..end]).to_owned().into_dyn();
        self.push(v, Op::SliceCols { x, start })
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let v = self
            .value(x)
            .to_owned()
            .into_shape_with_order(IxDyn(shape))
            .expect("reshape length mismatch");
        self.push(v, Op::Reshape(x))
    }

    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Var {
        let v = self.value(x).view().permuted_axes(IxDyn(axes));
        let v = to_standard(v.to_owned());
        self.push(
            v,
            Op::Permute {
                x,
                axes: axes.to_vec(),
            },
        )
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().fold(T::zero(), |a, &b| a + b);
        self.push(ArrayD::from_elem(IxDyn(&[1]), s), Op::SumAll(x))
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let n = T::from_usize(self.value(x).len());
        let s = self.value(x).iter().fold(T::zero(), |a, &b| a + b) / n;
        self.push(ArrayD::from_elem(IxDyn(&[1]), s), Op::MeanAll(x))
    }

    /// Mean cross-entropy of `[n, k]` logits against integer targets.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Var {
        let lv = as2(self.value(logits));
        let (n, _k) = lv.dim();
        assert_eq!(n, targets.len());
        let mut softmax = lv.to_owned();
        let mut loss = T::zero();
        for (i, row) in softmax.rows_mut().into_iter().enumerate() {
            let row = row;
            let mut row = row;
            let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.iter().fold(T::zero(), |a, &b| a + b);
            row.mapv_inplace(|v| v / sum);
            loss = loss - row[targets[i]].ln();
        }
        loss = loss / T::from_usize(n);
        self.push(
            ArrayD::from_elem(IxDyn(&[1]), loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                softmax,
            },
        )
    }

    /// Reverse pass from a scalar root. Leaf gradients are retained, all
    /// intermediate gradients are freed as soon as they have been consumed.
    pub fn backward(&mut self, root: Var) -> Gradients<T> {
        assert_eq!(self.value(root).len(), 1, "backward root must be scalar");
        let mut slots: Vec<Option<ArrayD<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        slots[root.0] = Some(ArrayD::from_elem(self.value(root).raw_dim(), T::one()));
        for i in (0..=root.0).rev() {
            let g = match slots[i].take() {
                Some(g) => g,
                None => continue,
            };
            let keep = matches!(self.nodes[i].op, Op::Leaf);
            self.backprop_node(i, &g, &mut slots);
            if keep {
                slots[i] = Some(g);
            }
        }
        Gradients { slots }
    }

    fn backprop_node(&self, i: usize, g: &ArrayD<T>, slots: &mut Vec<Option<ArrayD<T>>>) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(slots, *a, g.clone());
                acc(slots, *b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(slots, *a, g.clone());
                acc(slots, *b, g.mapv(|v| -v));
            }
            Op::Mul(a, b) => {
                acc(slots, *a, g * self.value(*b));
                acc(slots, *b, g * self.value(*a));
            }
            Op::Div(a, b) => {
                let bv = self.value(*b);
                acc(slots, *a, g / bv);
                let av = self.value(*a);
                acc(slots, *b, -(g * av) / (bv * bv));
            }
            Op::AddScalar(a) => acc(slots, *a, g.clone()),
            Op::MulScalar(a, c) => acc(slots, *a, g.mapv(|v| v * *c)),
            Op::PowScalar(a, p) => {
                let xv = self.value(*a);
                let da = ndarray::Zip::from(g)
                    .and(xv)
                    .map_collect(|&gv, &x| gv * *p * x.powf(*p - T::one()));
                acc(slots, *a, da);
            }
            Op::Relu(a) => {
                let xv = self.value(*a);
                let da = ndarray::Zip::from(g)
                    .and(xv)
                    .map_collect(|&gv, &x| if x > T::zero() { gv } else { T::zero() });
                acc(slots, *a, da);
            }
            Op::Tanh(a) => {
                let yv = &node.value;
                let da = ndarray::Zip::from(g)
                    .and(yv)
                    .map_collect(|&gv, &y| gv * (T::one() - y * y));
                acc(slots, *a, da);
            }
            Op::Sin(a) => {
                let xv = self.value(*a);
                let da = ndarray::Zip::from(g)
                    .and(xv)
                    .map_collect(|&gv, &x| gv * x.cos());
                acc(slots, *a, da);
            }
            Op::Abs(a) => {
                let xv = self.value(*a);
                let da = ndarray::Zip::from(g).and(xv).map_collect(|&gv, &x| {
                    if x > T::zero() {
                        gv
                    } else if x < T::zero() {
                        -gv
                    } else {
                        T::zero()
                    }
                });
                acc(slots, *a, da);
            }
            Op::MatMul(a, b) => {
                let g2 = as2(g);
                let av = as2(self.value(*a));
                let bv = as2(self.value(*b));
                acc(slots, *a, g2.dot(&bv.t()).into_dyn());
                acc(slots, *b, av.t().dot(&g2).into_dyn());
            }
            Op::AddRow(a, b) => {
                acc(slots, *a, g.clone());
                let g2 = as2(g);
                let db = g2.sum_axis(Axis(0));
                acc(slots, *b, db.into_dyn());
            }
            Op::AddChan(a, b) => {
                acc(slots, *a, g.clone());
                let g4 = g.view().into_dimensionality::<Ix4>().unwrap();
                let db = g4.sum_axis(Axis(3)).sum_axis(Axis(2)).sum_axis(Axis(0));
                acc(slots, *b, db.into_dyn());
            }
            Op::MulChan(a, b) => {
                let g4 = g.view().into_dimensionality::<Ix4>().unwrap();
                let bv = self.value(*b);
                let bb = bv.view().into_shape_with_order((1, bv.len(), 1, 1)).unwrap();
                acc(slots, *a, (&g4 * &bb).into_dyn());
                let av = self.value(*a).view().into_dimensionality::<Ix4>().unwrap();
                let prod = &g4 * &av;
                let db = prod.sum_axis(Axis(3)).sum_axis(Axis(2)).sum_axis(Axis(0));
                acc(slots, *b, db.into_dyn());
            }
            Op::Conv2d { x, w, spec } => {
                let xv = self.value(*x).view().into_dimensionality::<Ix4>().unwrap();
                let wv = self.value(*w).view().into_dimensionality::<Ix4>().unwrap();
                let (cout, cin_g, kh, kw) = wv.dim();
                let w2 = wv
                    .into_shape_with_order((cout, cin_g * kh * kw))
                    .unwrap()
                    .to_owned();
                let g4 = g.view().into_dimensionality::<Ix4>().unwrap();
                let n = xv.dim().0;
                let mut grad_w = Array2::<T>::zeros(w2.raw_dim());
                let mut grad_x = ndarray::Array4::<T>::zeros(xv.raw_dim());
                for i in 0..n {
                    let xi = xv.index_axis(Axis(0), i);
                    let gi = g4.index_axis(Axis(0), i);
                    let gx = conv_single_backward(&xi, &w2, &gi, spec, &mut grad_w);
                    grad_x.index_axis_mut(Axis(0), i).assign(&gx);
                }
                acc(slots, *x, grad_x.into_dyn());
                let gw4 = grad_w
                    .into_shape_with_order((cout, cin_g, kh, kw))
                    .unwrap();
                acc(slots, *w, gw4.into_dyn());
            }
            Op::MaxPool { x, argmax } => {
                let xv = self.value(*x).view().into_dimensionality::<Ix4>().unwrap();
                let (n, c, h, w) = xv.dim();
                let g4 = g.view().into_dimensionality::<Ix4>().unwrap();
                let (_, _, ho, wo) = g4.dim();
                let mut grad_x = ndarray::Array4::<T>::zeros((n, c, h, w));
                {
                    let gs = grad_x.as_slice_mut().unwrap();
                    for i in 0..n {
                        let base = i * c * h * w;
                        for ch in 0..c {
                            for oy in 0..ho {
                                for ox in 0..wo {
                                    let k = ((i * c + ch) * ho + oy) * wo + ox;
                                    let idx = base + argmax[k];
                                    gs[idx] = gs[idx] + g4[[i, ch, oy, ox]];
                                }
                            }
                        }
                    }
                }
                acc(slots, *x, grad_x.into_dyn());
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let g4 = g.view().into_dimensionality::<Ix4>().unwrap();
                let xh = xhat.view().into_dimensionality::<Ix4>().unwrap();
                let (n, c, h, w) = xh.dim();
                let m = T::from_usize(n * h * w);
                let gv = self.value(*gamma);
                let mut dgamma = Array1::<T>::zeros(c);
                let mut dbeta = Array1::<T>::zeros(c);
                let mut dx = ndarray::Array4::<T>::zeros((n, c, h, w));
                for ch in 0..c {
                    let gs = g4.slice(s![.., ch, .., ..]);
                    let xs = xh.slice(s![.., ch, .., ..]);
                    let sum_g = gs.iter().fold(T::zero(), |a, &b| a + b);
                    let sum_gx = gs
                        .iter()
                        .zip(xs.iter())
                        .fold(T::zero(), |a, (&gg, &xx)| a + gg * xx);
                    dgamma[ch] = sum_gx;
                    dbeta[ch] = sum_g;
                    let scale = gv[[ch]] * inv_std[ch] / m;
                    let mut dxs = dx.slice_mut(s![.., ch, .., ..]);
                    ndarray::Zip::from(&mut dxs).and(&gs).and(&xs).for_each(
                        |d, &gg, &xx| {
                            *d = scale * (m * gg - sum_g - xx * sum_gx);
                        },
                    );
                }
                acc(slots, *x, dx.into_dyn());
                acc(slots, *gamma, dgamma.into_dyn());
                acc(slots, *beta, dbeta.into_dyn());
            }
            Op::ReplicatePad { x, p } => {
                let xv = self.value(*x).view().into_dimensionality::<Ix4>().unwrap();
                let (n, c, h, w) = xv.dim();
                let g4 = g.view().into_dimensionality::<Ix4>().unwrap();
                let p = *p;
                let mut grad_x = ndarray::Array4::<T>::zeros((n, c, h, w));
                for i in 0..n {
                    for ch in 0..c {
                        for oy in 0..h + 2 * p {
                            let iy =
                                (oy as isize - p as isize).clamp(0, h as isize - 1) as usize;
                            for ox in 0..w + 2 * p {
                                let ix = (ox as isize - p as isize).clamp(0, w as isize - 1)
                                    as usize;
                                grad_x[[i, ch, iy, ix]] =
                                    grad_x[[i, ch, iy, ix]] + g4[[i, ch, oy, ox]];
                            }
                        }
                    }
                }
                acc(slots, *x, grad_x.into_dyn());
            }
            Op::Concat { parts, axis } => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).shape()[*axis];
                    let gp = g
                        .slice_axis(Axis(*axis), ndarray::Slice::from(offset..offset + len))
                        .to_owned();
                    acc(slots, p, to_standard(gp));
                    offset += len;
                }
            }
            Op::GatherRows { x, indices } => {
                let xv = as2(self.value(*x));
                let g2 = as2(g);
                let mut grad_x = Array2::<T>::zeros(xv.raw_dim());
                for (k, &idx) in indices.iter().enumerate() {
                    let mut row = grad_x.row_mut(idx);
                    row += &g2.row(k);
                }
                acc(slots, *x, grad_x.into_dyn());
            }
            Op::SliceCols { x, start } => {
                let xv = as2(self.value(*x));
                let g2 = as2(g);
                let mut grad_x = Array2::<T>::zeros(xv.raw_dim());
                grad_x
                    .slice_mut(s![.., *start..*start + g2.dim().1])
                    .assign(&g2);
                acc(slots, *x, grad_x.into_dyn());
            }
            Op::Reshape(x) => {
                let shape = self.value(*x).raw_dim();
                acc(slots, *x, g.to_owned().into_shape_with_order(shape).unwrap());
            }
            Op::Permute { x, axes } => {
                let mut inverse = vec![0usize; axes.len()];
                for (k, &a) in axes.iter().enumerate() {
                    inverse[a] = k;
                }
                let gx = g.view().permuted_axes(IxDyn(&inverse)).to_owned();
                acc(slots, *x, to_standard(gx));
            }
            Op::SumAll(x) => {
                let gs = *g.iter().next().unwrap();
                let gx = ArrayD::from_elem(self.value(*x).raw_dim(), gs);
                acc(slots, *x, gx);
            }
            Op::MeanAll(x) => {
                let n = T::from_usize(self.value(*x).len());
                let gs = *g.iter().next().unwrap() / n;
                let gx = ArrayD::from_elem(self.value(*x).raw_dim(), gs);
                acc(slots, *x, gx);
            }
            Op::CrossEntropy {
                logits,
                targets,
                softmax,
            } => {
                let gs = *g.iter().next().unwrap();
                let n = targets.len();
                let scale = gs / T::from_usize(n);
                let mut dl = softmax.clone();
                for (i, &t) in targets.iter().enumerate() {
                    dl[[i, t]] = dl[[i, t]] - T::one();
                }
                dl.mapv_inplace(|v| v * scale);
                acc(slots, *logits, dl.into_dyn());
            }
        }
    }
}

fn acc<T: Scalar>(slots: &mut [Option<ArrayD<T>>], v: Var, g: ArrayD<T>) {
    match &mut slots[v.0] {
        Some(existing) => *existing += &g,
        slot => *slot = Some(g),
    }
}

fn as2<T: Scalar>(a: &ArrayD<T>) -> ndarray::ArrayView2<'_, T> {
    a.view()
        .into_dimensionality::<Ix2>()
        .expect("expected rank-2 value")
}

fn to_standard<T: Scalar>(a: ArrayD<T>) -> ArrayD<T> {
    if a.is_standard_layout() {
        a
    } else {
        let shape = a.raw_dim();
        ArrayD::from_shape_vec(shape, a.iter().cloned().collect()).unwrap()
    }
}
