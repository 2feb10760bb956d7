use crate::error::{Error, Result};
use crate::layers::Padding;
use crate::tensor::Tensor;

/// 1-D convolution parameters. Weights are [out_ch, in_ch, k]; the forward
/// pass uses the cross-correlation convention (no kernel flip).
#[derive(Debug, Clone)]
pub struct Conv1dParams {
    pub weights: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: Padding,
}

impl Conv1dParams {
    pub fn new(weights: Tensor, bias: Tensor, stride: usize, padding: Padding) -> Result<Self> {
        if weights.rank() != 3 {
            return Err(Error::shape(
                "Conv1dParams",
                format!("weights must be [out_ch, in_ch, k], got {:?}", weights.shape()),
            ));
        }
        let out_ch = weights.shape()[0];
        let k = weights.shape()[2];
        if bias.shape() != [out_ch] {
            return Err(Error::shape(
                "Conv1dParams",
                format!("bias {:?} vs out_ch {}", bias.shape(), out_ch),
            ));
        }
        if stride == 0 {
            return Err(Error::invalid("Conv1dParams", "stride must be >= 1"));
        }
        if padding == Padding::Same && k.is_multiple_of(2) {
            return Err(Error::invalid(
                "Conv1dParams",
                format!("same padding requires odd kernel size, got {k}"),
            ));
        }
        Ok(Conv1dParams {
            weights,
            bias,
            stride,
            padding,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn kernel_size(&self) -> usize {
        self.weights.shape()[2]
    }

    fn pad(&self) -> usize {
        match self.padding {
            Padding::Same => (self.kernel_size() - 1) / 2,
            Padding::Valid => 0,
        }
    }

    /// Output length for an input of length `l`.
    pub fn output_len(&self, l: usize) -> Result<usize> {
        let k = self.kernel_size();
        let padded = l + 2 * self.pad();
        if padded < k {
            return Err(Error::invalid(
                "conv1d",
                format!("input length {l} shorter than kernel {k}"),
            ));
        }
        let out = (padded - k) / self.stride + 1;
        if out == 0 {
            return Err(Error::invalid(
                "conv1d",
                format!("empty output for input length {l}"),
            ));
        }
        Ok(out)
    }
}

/// Cached forward state for the paired backward pass.
#[derive(Debug)]
pub struct Conv1dCtx {
    x: Tensor,
}

/// Zero-padded copy of x for one padding amount. Layout stays [b, l, ch].
fn pad_input(x: &Tensor, pad: usize) -> Tensor {
    if pad == 0 {
        return x.clone();
    }
    let (b, l, ch) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let lp = l + 2 * pad;
    let mut out = Tensor::zeros(&[b, lp, ch]);
    for bi in 0..b {
        let src = &x.data()[bi * l * ch..(bi + 1) * l * ch];
        let dst = &mut out.data_mut()[bi * lp * ch..(bi + 1) * lp * ch];
        dst[pad * ch..pad * ch + l * ch].copy_from_slice(src);
    }
    out
}

/// Weights rearranged to [k * in_ch, out_ch] so the innermost loops run over
/// contiguous output channels.
fn transpose_weights(p: &Conv1dParams) -> Vec<f64> {
    let (out_ch, in_ch, k) = (p.out_channels(), p.in_channels(), p.kernel_size());
    let w = p.weights.data();
    let mut wt = vec![0.0; k * in_ch * out_ch];
    for o in 0..out_ch {
        for c in 0..in_ch {
            for j in 0..k {
                wt[(j * in_ch + c) * out_ch + o] = w[(o * in_ch + c) * k + j];
            }
        }
    }
    wt
}

fn check_input(x: &Tensor, p: &Conv1dParams) -> Result<(usize, usize, usize)> {
    if x.rank() != 3 {
        return Err(Error::shape(
            "conv1d",
            format!("input must be [b, l, ch], got {:?}", x.shape()),
        ));
    }
    let (b, l, ch) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if ch != p.in_channels() {
        return Err(Error::shape(
            "conv1d",
            format!(
                "input channels {ch} vs weight in_channels {} (input {:?}, weights {:?})",
                p.in_channels(),
                x.shape(),
                p.weights.shape()
            ),
        ));
    }
    Ok((b, l, ch))
}

/// y[b, t, o] = bias[o] + sum_{c,j} x_pad[b, t*stride + j, c] * w[o, c, j]
pub fn conv1d(x: &Tensor, p: &Conv1dParams) -> Result<(Tensor, Conv1dCtx)> {
    let (b, l, in_ch) = check_input(x, p)?;
    let out_len = p.output_len(l)?;
    let (out_ch, k, stride) = (p.out_channels(), p.kernel_size(), p.stride);
    let xp = pad_input(x, p.pad());
    let lp = xp.shape()[1];
    let wt = transpose_weights(p);
    let bias = p.bias.data();

    let mut y = Tensor::zeros(&[b, out_len, out_ch]);
    {
        let ydata = y.data_mut();
        let xdata = xp.data();
        for bi in 0..b {
            let xbase = bi * lp * in_ch;
            let ybase = bi * out_len * out_ch;
            for t in 0..out_len {
                let yrow = &mut ydata[ybase + t * out_ch..ybase + (t + 1) * out_ch];
                yrow.copy_from_slice(bias);
                let x0 = xbase + t * stride * in_ch;
                for jc in 0..k * in_ch {
                    let xv = xdata[x0 + jc];
                    if xv != 0.0 {
                        let wrow = &wt[jc * out_ch..(jc + 1) * out_ch];
                        for (yo, &wv) in yrow.iter_mut().zip(wrow.iter()) {
                            *yo += xv * wv;
                        }
                    }
                }
            }
        }
    }
    Ok((y, Conv1dCtx { x: x.clone() }))
}

/// Gradients of conv1d: returns (dx, dweights, dbias).
pub fn conv1d_grad(
    p: &Conv1dParams,
    ctx: Conv1dCtx,
    dy: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let x = &ctx.x;
    let (b, l, in_ch) = check_input(x, p)?;
    let out_len = p.output_len(l)?;
    let (out_ch, k, stride) = (p.out_channels(), p.kernel_size(), p.stride);
    if dy.shape() != [b, out_len, out_ch] {
        return Err(Error::shape(
            "conv1d_grad",
            format!(
                "dy {:?} vs expected [{b}, {out_len}, {out_ch}]",
                dy.shape()
            ),
        ));
    }

    let pad = p.pad();
    let xp = pad_input(x, pad);
    let lp = xp.shape()[1];
    let wt = transpose_weights(p);

    let mut dbias = vec![0.0; out_ch];
    let mut dwt = vec![0.0; k * in_ch * out_ch];
    let mut dxp = vec![0.0; b * lp * in_ch];
    let xdata = xp.data();
    let dydata = dy.data();

    for bi in 0..b {
        let xbase = bi * lp * in_ch;
        let ybase = bi * out_len * out_ch;
        for t in 0..out_len {
            let dyrow = &dydata[ybase + t * out_ch..ybase + (t + 1) * out_ch];
            for (db, &g) in dbias.iter_mut().zip(dyrow.iter()) {
                *db += g;
            }
            let x0 = xbase + t * stride * in_ch;
            for jc in 0..k * in_ch {
                let xv = xdata[x0 + jc];
                let wrow = &wt[jc * out_ch..(jc + 1) * out_ch];
                let dwrow = &mut dwt[jc * out_ch..(jc + 1) * out_ch];
                let mut acc = 0.0;
                for o in 0..out_ch {
                    let g = dyrow[o];
                    dwrow[o] += xv * g;
                    acc += wrow[o] * g;
                }
                dxp[x0 + jc] += acc;
            }
        }
    }

    // Transpose dwt back to [out_ch, in_ch, k].
    let mut dw = Tensor::zeros(p.weights.shape());
    {
        let dwdata = dw.data_mut();
        for o in 0..out_ch {
            for c in 0..in_ch {
                for j in 0..k {
                    dwdata[(o * in_ch + c) * k + j] = dwt[(j * in_ch + c) * out_ch + o];
                }
            }
        }
    }

    // Strip padding off dxp.
    let mut dx = Tensor::zeros(x.shape());
    {
        let dxdata = dx.data_mut();
        for bi in 0..b {
            let src = &dxp[(bi * lp + pad) * in_ch..(bi * lp + pad + l) * in_ch];
            dxdata[bi * l * in_ch..(bi + 1) * l * in_ch].copy_from_slice(src);
        }
    }

    Ok((dx, dw, Tensor::new(vec![out_ch], dbias)?))
}
