//! Parameter and multiply-add counting for convolutional blocks.
//!
//! Convention: a convolution contributes `k^2 * C_in * C_out / groups`
//! weight parameters plus `C_out` bias and `2 * C_out` affine-norm
//! parameters when present; multiply-adds are the weight parameters times
//! the output spatial extent.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ConvLayerSpec {
    pub kernel: usize,
    pub cin: usize,
    pub cout: usize,
    pub groups: usize,
    pub bias: bool,
    pub norm: bool,
    pub out_h: usize,
    pub out_w: usize,
}

#[derive(Debug, Clone)]
pub struct BlockSpec {
    pub name: String,
    pub layers: Vec<ConvLayerSpec>,
}

pub fn count_layer(l: &ConvLayerSpec) -> Result<(u64, u64)> {
    if l.kernel == 0 || l.cin == 0 || l.cout == 0 || l.out_h == 0 || l.out_w == 0 {
        return Err(Error::invalid("conv layer has a zero dimension"));
    }
    if l.groups == 0 || l.cin % l.groups != 0 || l.cout % l.groups != 0 {
        return Err(Error::invalid(format!(
            "groups {} must divide channels {}x{}",
            l.groups, l.cin, l.cout
        )));
    }
    let weights = (l.kernel * l.kernel * l.cin * l.cout / l.groups) as u64;
    let mut params = weights;
    if l.bias {
        params += l.cout as u64;
    }
    if l.norm {
        params += 2 * l.cout as u64;
    }
    let madds = weights * (l.out_h * l.out_w) as u64;
    Ok((params, madds))
}

pub fn count_block(b: &BlockSpec) -> Result<(u64, u64)> {
    let mut params = 0;
    let mut madds = 0;
    for l in &b.layers {
        let (p, m) = count_layer(l)?;
        params += p;
        madds += m;
    }
    Ok((params, madds))
}

/// The plain 3x3 960-to-960 fusion alternative evaluated at 8x8.
pub fn plain_fusion_convblock() -> BlockSpec {
    BlockSpec {
        name: "conv_block".into(),
        layers: vec![ConvLayerSpec {
            kernel: 3,
            cin: 960,
            cout: 960,
            groups: 1,
            bias: true,
            norm: true,
            out_h: 8,
            out_w: 8,
        }],
    }
}

/// The multi-branch fusion block (1x1 reduce, grouped 3x3, 1x1 expand) at
/// 8x8.
pub fn multibranch_fusion_block() -> BlockSpec {
    let layer = |kernel, cin, cout, groups| ConvLayerSpec {
        kernel,
        cin,
        cout,
        groups,
        bias: true,
        norm: true,
        out_h: 8,
        out_w: 8,
    };
    BlockSpec {
        name: "fusion_block".into(),
        layers: vec![
            layer(1, 960, 480, 1),
            layer(3, 480, 480, 32),
            layer(1, 480, 960, 1),
        ],
    }
}
