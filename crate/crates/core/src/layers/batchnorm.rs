use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::tensor::Tensor;

/// Per-channel batch normalization state. Works on [b, l, ch] or [b, ch]
/// inputs; the channel axis is always innermost, statistics run over all
/// leading axes.
#[derive(Debug, Clone)]
pub struct BatchNormParams {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNormParams {
    /// Fresh state: gamma 1, beta 0, running mean 0, running var 1.
    pub fn new(channels: usize, momentum: f64, eps: f64) -> Result<Self> {
        if !(0.0 < momentum && momentum < 1.0) {
            return Err(Error::invalid(
                "BatchNormParams",
                format!("momentum must be in (0, 1), got {momentum}"),
            ));
        }
        if eps <= 0.0 {
            return Err(Error::invalid(
                "BatchNormParams",
                format!("eps must be positive, got {eps}"),
            ));
        }
        Ok(BatchNormParams {
            gamma: Tensor::full(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], 1.0),
            momentum,
            eps,
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.shape()[0]
    }
}

#[derive(Debug)]
pub struct BatchNormCtx {
    /// Normalized input (x - mu) / sqrt(var + eps), same shape as x.
    xhat: Tensor,
    /// Per-channel 1 / sqrt(var + eps) used by the forward pass.
    inv_std: Vec<f64>,
    rows: usize,
    mode: Mode,
}

fn rows_and_channels(x: &Tensor, p: &BatchNormParams, op: &'static str) -> Result<(usize, usize)> {
    let ch = match x.rank() {
        2 => x.shape()[1],
        3 => x.shape()[2],
        _ => {
            return Err(Error::shape(
                op,
                format!("input must be [b, ch] or [b, l, ch], got {:?}", x.shape()),
            ))
        }
    };
    if ch != p.channels() {
        return Err(Error::shape(
            op,
            format!("input channels {ch} vs params channels {}", p.channels()),
        ));
    }
    Ok((x.len() / ch, ch))
}

/// Normalize per channel. Train mode uses batch statistics over all leading
/// axes and folds them into the running stats with
/// `r <- momentum * r + (1 - momentum) * batch_stat`; eval mode applies the
/// running stats unchanged.
pub fn batchnorm(
    x: &Tensor,
    p: &mut BatchNormParams,
    mode: Mode,
) -> Result<(Tensor, BatchNormCtx)> {
    let (rows, ch) = rows_and_channels(x, p, "batchnorm")?;

    let (mean, var): (Vec<f64>, Vec<f64>) = match mode {
        Mode::Train => {
            if rows < 2 {
                return Err(Error::invalid(
                    "batchnorm",
                    format!("train mode needs >= 2 elements per channel, got {rows}"),
                ));
            }
            // Two-pass statistics: mean first, then centered squares.
            let inv_n = 1.0 / rows as f64;
            let mut mean = vec![0.0; ch];
            for r in 0..rows {
                let row = &x.data()[r * ch..(r + 1) * ch];
                for (m, &v) in mean.iter_mut().zip(row.iter()) {
                    *m += v;
                }
            }
            for m in mean.iter_mut() {
                *m *= inv_n;
            }
            let mut var = vec![0.0; ch];
            for r in 0..rows {
                let row = &x.data()[r * ch..(r + 1) * ch];
                for c in 0..ch {
                    let d = row[c] - mean[c];
                    var[c] += d * d;
                }
            }
            for v in var.iter_mut() {
                *v *= inv_n;
            }
            for c in 0..ch {
                let rm = p.running_mean.data_mut();
                rm[c] = p.momentum * rm[c] + (1.0 - p.momentum) * mean[c];
                let rv = p.running_var.data_mut();
                rv[c] = p.momentum * rv[c] + (1.0 - p.momentum) * var[c];
            }
            (mean, var)
        }
        Mode::Eval => (
            p.running_mean.data().to_vec(),
            p.running_var.data().to_vec(),
        ),
    };

    let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + p.eps).sqrt()).collect();
    let mut xhat = Tensor::zeros(x.shape());
    let mut y = Tensor::zeros(x.shape());
    {
        let xd = x.data();
        let xh = xhat.data_mut();
        let yd = y.data_mut();
        let gamma = p.gamma.data();
        let beta = p.beta.data();
        for r in 0..rows {
            let base = r * ch;
            for c in 0..ch {
                let h = (xd[base + c] - mean[c]) * inv_std[c];
                xh[base + c] = h;
                yd[base + c] = gamma[c] * h + beta[c];
            }
        }
    }
    Ok((
        y,
        BatchNormCtx {
            xhat,
            inv_std,
            rows,
            mode,
        },
    ))
}

/// Gradients of batchnorm: returns (dx, dgamma, dbeta).
pub fn batchnorm_grad(
    p: &BatchNormParams,
    ctx: BatchNormCtx,
    dy: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    if dy.shape() != ctx.xhat.shape() {
        return Err(Error::shape(
            "batchnorm_grad",
            format!("dy {:?} vs forward output {:?}", dy.shape(), ctx.xhat.shape()),
        ));
    }
    let ch = p.channels();
    let rows = ctx.rows;

    let mut dgamma = vec![0.0; ch];
    let mut dbeta = vec![0.0; ch];
    {
        let dyd = dy.data();
        let xh = ctx.xhat.data();
        for r in 0..rows {
            let base = r * ch;
            for c in 0..ch {
                dgamma[c] += dyd[base + c] * xh[base + c];
                dbeta[c] += dyd[base + c];
            }
        }
    }

    let mut dx = Tensor::zeros(ctx.xhat.shape());
    {
        let dxd = dx.data_mut();
        let dyd = dy.data();
        let xh = ctx.xhat.data();
        let gamma = p.gamma.data();
        match ctx.mode {
            // Batch statistics depend on x, so their derivatives feed back:
            // dx = gamma * inv_std * (dy - mean(dy) - xhat * mean(dy * xhat))
            Mode::Train => {
                let inv_n = 1.0 / rows as f64;
                for r in 0..rows {
                    let base = r * ch;
                    for c in 0..ch {
                        let centered =
                            dyd[base + c] - dbeta[c] * inv_n - xh[base + c] * dgamma[c] * inv_n;
                        dxd[base + c] = gamma[c] * ctx.inv_std[c] * centered;
                    }
                }
            }
            // Running stats are constants in eval mode.
            Mode::Eval => {
                for r in 0..rows {
                    let base = r * ch;
                    for c in 0..ch {
                        dxd[base + c] = dyd[base + c] * gamma[c] * ctx.inv_std[c];
                    }
                }
            }
        }
    }

    Ok((
        dx,
        Tensor::new(vec![ch], dgamma)?,
        Tensor::new(vec![ch], dbeta)?,
    ))
}
