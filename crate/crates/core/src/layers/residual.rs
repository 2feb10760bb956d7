use crate::error::{Error, Result};
use crate::layers::{
    batchnorm, batchnorm_grad, conv1d, conv1d_grad, dropout, dropout_grad, lrelu, lrelu_grad,
    maxpool1d, maxpool1d_grad, BatchNormCtx, BatchNormParams, Conv1dCtx, Conv1dParams, DropoutCtx,
    LreluCtx, MaxPoolCtx, Mode, Padding,
};
use crate::tensor::{Rng, Tensor};

/// One residual block:
///
/// ```text
/// h = LReLU(BN1(Conv1(x)))
/// r = BN2(Conv2(h))
/// s = x                              if in_ch == out_ch
///     ShortcutBN(ShortcutConv1x1(x)) otherwise
/// y = Dropout(MaxPool(LReLU(r + s)))
/// ```
///
/// Both convolutions are same-padded at stride 1 so the residual addition
/// lines up; pooling divides the temporal length by four.
#[derive(Debug, Clone)]
pub struct ResidualBlockParams {
    pub conv1: Conv1dParams,
    pub bn1: BatchNormParams,
    pub conv2: Conv1dParams,
    pub bn2: BatchNormParams,
    pub shortcut_proj: Option<Conv1dParams>,
    pub shortcut_bn: Option<BatchNormParams>,
    pub pool_window: usize,
    pub pool_stride: usize,
    pub dropout_rate: f64,
    pub lrelu_alpha: f64,
}

impl ResidualBlockParams {
    pub fn in_channels(&self) -> usize {
        self.conv1.in_channels()
    }

    pub fn out_channels(&self) -> usize {
        self.conv2.out_channels()
    }

    pub fn validate(&self) -> Result<()> {
        let (in_ch, out_ch) = (self.in_channels(), self.out_channels());
        if self.conv1.out_channels() != out_ch || self.conv2.in_channels() != out_ch {
            return Err(Error::shape(
                "ResidualBlockParams",
                format!(
                    "conv channel chain broken: conv1 {:?}, conv2 {:?}",
                    self.conv1.weights.shape(),
                    self.conv2.weights.shape()
                ),
            ));
        }
        for (name, conv) in [("conv1", &self.conv1), ("conv2", &self.conv2)] {
            if conv.stride != 1 || conv.padding != Padding::Same {
                return Err(Error::invalid(
                    "ResidualBlockParams",
                    format!("{name} must be same-padded stride 1 so the residual addition matches"),
                ));
            }
        }
        if (in_ch != out_ch) != self.shortcut_proj.is_some() {
            return Err(Error::invalid(
                "ResidualBlockParams",
                format!(
                    "shortcut projection must be present iff channels change ({in_ch} -> {out_ch})"
                ),
            ));
        }
        if self.shortcut_proj.is_some() != self.shortcut_bn.is_some() {
            return Err(Error::invalid(
                "ResidualBlockParams",
                "shortcut conv and shortcut bn must be present together",
            ));
        }
        if let Some(sc) = &self.shortcut_proj {
            if sc.kernel_size() != 1 || sc.in_channels() != in_ch || sc.out_channels() != out_ch {
                return Err(Error::shape(
                    "ResidualBlockParams",
                    format!("shortcut must be a 1x1 {in_ch} -> {out_ch} conv"),
                ));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid(
                "ResidualBlockParams",
                format!("dropout_rate must be in [0, 1), got {}", self.dropout_rate),
            ));
        }
        if self.pool_window == 0 || self.pool_stride == 0 {
            return Err(Error::invalid(
                "ResidualBlockParams",
                "pool window and stride must be >= 1",
            ));
        }
        Ok(())
    }

    /// Temporal output length for an input of length `l`.
    pub fn output_len(&self, l: usize) -> Result<usize> {
        if l < self.pool_window {
            return Err(Error::invalid(
                "ResidualBlockParams",
                format!("input length {l} shorter than pool window {}", self.pool_window),
            ));
        }
        Ok((l - self.pool_window) / self.pool_stride + 1)
    }
}

#[derive(Debug)]
pub struct ResidualBlockCtx {
    conv1: Conv1dCtx,
    bn1: BatchNormCtx,
    act1: LreluCtx,
    conv2: Conv1dCtx,
    bn2: BatchNormCtx,
    shortcut: Option<(Conv1dCtx, BatchNormCtx)>,
    act2: LreluCtx,
    pool: MaxPoolCtx,
    drop: DropoutCtx,
}

/// Per-parameter gradients of a residual block, mirroring the param struct.
#[derive(Debug)]
pub struct ResidualBlockGrads {
    pub conv1_weights: Tensor,
    pub conv1_bias: Tensor,
    pub bn1_gamma: Tensor,
    pub bn1_beta: Tensor,
    pub conv2_weights: Tensor,
    pub conv2_bias: Tensor,
    pub bn2_gamma: Tensor,
    pub bn2_beta: Tensor,
    pub shortcut_weights: Option<Tensor>,
    pub shortcut_bias: Option<Tensor>,
    pub shortcut_bn_gamma: Option<Tensor>,
    pub shortcut_bn_beta: Option<Tensor>,
}

impl ResidualBlockGrads {
    /// Canonical flattening, matching the parameter enumeration order of the
    /// model module.
    pub fn into_vec(self) -> Vec<Tensor> {
        let mut out = vec![
            self.conv1_weights,
            self.conv1_bias,
            self.bn1_gamma,
            self.bn1_beta,
            self.conv2_weights,
            self.conv2_bias,
            self.bn2_gamma,
            self.bn2_beta,
        ];
        if let (Some(w), Some(b), Some(g), Some(bt)) = (
            self.shortcut_weights,
            self.shortcut_bias,
            self.shortcut_bn_gamma,
            self.shortcut_bn_beta,
        ) {
            out.extend([w, b, g, bt]);
        }
        out
    }
}

pub fn residual_block(
    x: &Tensor,
    p: &mut ResidualBlockParams,
    mode: Mode,
    rng: Option<&mut Rng>,
) -> Result<(Tensor, ResidualBlockCtx)> {
    p.validate()?;

    let (c1y, conv1_ctx) = conv1d(x, &p.conv1)?;
    let (b1y, bn1_ctx) = batchnorm(&c1y, &mut p.bn1, mode)?;
    let (h, act1_ctx) = lrelu(&b1y, p.lrelu_alpha)?;
    let (c2y, conv2_ctx) = conv1d(&h, &p.conv2)?;
    let (r, bn2_ctx) = batchnorm(&c2y, &mut p.bn2, mode)?;

    let (s, shortcut_ctx) = match (&p.shortcut_proj, &mut p.shortcut_bn) {
        (Some(sc), Some(sbn)) => {
            let (sy, sc_ctx) = conv1d(x, sc)?;
            let (sb, sbn_ctx) = batchnorm(&sy, sbn, mode)?;
            (sb, Some((sc_ctx, sbn_ctx)))
        }
        _ => (x.clone(), None),
    };

    let sum = r.add(&s)?;
    let (a, act2_ctx) = lrelu(&sum, p.lrelu_alpha)?;
    let (pooled, pool_ctx) = maxpool1d(&a, p.pool_window, p.pool_stride)?;
    let (y, drop_ctx) = dropout(&pooled, p.dropout_rate, mode, rng)?;

    Ok((
        y,
        ResidualBlockCtx {
            conv1: conv1_ctx,
            bn1: bn1_ctx,
            act1: act1_ctx,
            conv2: conv2_ctx,
            bn2: bn2_ctx,
            shortcut: shortcut_ctx,
            act2: act2_ctx,
            pool: pool_ctx,
            drop: drop_ctx,
        },
    ))
}

/// Gradients of a residual block: returns (dx, per-parameter grads).
pub fn residual_block_grad(
    p: &ResidualBlockParams,
    ctx: ResidualBlockCtx,
    dy: &Tensor,
) -> Result<(Tensor, ResidualBlockGrads)> {
    let d_pooled = dropout_grad(ctx.drop, dy)?;
    let d_act2 = maxpool1d_grad(ctx.pool, &d_pooled)?;
    let d_sum = lrelu_grad(ctx.act2, &d_act2)?;

    // The addition fans the gradient out to both branches unchanged.
    let (d_shortcut_in, shortcut_grads) = match ctx.shortcut {
        Some((sc_ctx, sbn_ctx)) => {
            let sc = p.shortcut_proj.as_ref().expect("ctx carries a shortcut");
            let sbn = p.shortcut_bn.as_ref().expect("ctx carries a shortcut bn");
            let (d_sconv_out, d_sgamma, d_sbeta) = batchnorm_grad(sbn, sbn_ctx, &d_sum)?;
            let (dx_s, d_sw, d_sb) = conv1d_grad(sc, sc_ctx, &d_sconv_out)?;
            (dx_s, Some((d_sw, d_sb, d_sgamma, d_sbeta)))
        }
        None => (d_sum.clone(), None),
    };

    let (d_c2y, d_bn2_gamma, d_bn2_beta) = batchnorm_grad(&p.bn2, ctx.bn2, &d_sum)?;
    let (d_h, d_conv2_w, d_conv2_b) = conv1d_grad(&p.conv2, ctx.conv2, &d_c2y)?;
    let d_b1y = lrelu_grad(ctx.act1, &d_h)?;
    let (d_c1y, d_bn1_gamma, d_bn1_beta) = batchnorm_grad(&p.bn1, ctx.bn1, &d_b1y)?;
    let (d_main_in, d_conv1_w, d_conv1_b) = conv1d_grad(&p.conv1, ctx.conv1, &d_c1y)?;

    let dx = d_main_in.add(&d_shortcut_in)?;

    let (sw, sb, sg, sbeta) = match shortcut_grads {
        Some((w, b, g, beta)) => (Some(w), Some(b), Some(g), Some(beta)),
        None => (None, None, None, None),
    };

    Ok((
        dx,
        ResidualBlockGrads {
            conv1_weights: d_conv1_w,
            conv1_bias: d_conv1_b,
            bn1_gamma: d_bn1_gamma,
            bn1_beta: d_bn1_beta,
            conv2_weights: d_conv2_w,
            conv2_bias: d_conv2_b,
            bn2_gamma: d_bn2_gamma,
            bn2_beta: d_bn2_beta,
            shortcut_weights: sw,
            shortcut_bias: sb,
            shortcut_bn_gamma: sg,
            shortcut_bn_beta: sbeta,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::fd_check;
    use crate::optim::xavier_init;
    use std::cell::RefCell;

    fn conv_params(in_ch: usize, out_ch: usize, k: usize, rng: &mut Rng) -> Conv1dParams {
        let fan_in = in_ch * k;
        let fan_out = out_ch * k;
        Conv1dParams::new(
            xavier_init(fan_in, fan_out, &[out_ch, in_ch, k], rng).unwrap(),
            Tensor::zeros(&[out_ch]),
            1,
            Padding::Same,
        )
        .unwrap()
    }

    fn block(in_ch: usize, out_ch: usize, k: usize, rng: &mut Rng) -> ResidualBlockParams {
        let (shortcut_proj, shortcut_bn) = if in_ch != out_ch {
            (
                Some(conv_params(in_ch, out_ch, 1, rng)),
                Some(BatchNormParams::new(out_ch, 0.9, 1e-5).unwrap()),
            )
        } else {
            (None, None)
        };
        ResidualBlockParams {
            conv1: conv_params(in_ch, out_ch, k, rng),
            bn1: BatchNormParams::new(out_ch, 0.9, 1e-5).unwrap(),
            conv2: conv_params(out_ch, out_ch, k, rng),
            bn2: BatchNormParams::new(out_ch, 0.9, 1e-5).unwrap(),
            shortcut_proj,
            shortcut_bn,
            pool_window: 4,
            pool_stride: 4,
            dropout_rate: 0.0,
            lrelu_alpha: 0.01,
        }
    }

    #[test]
    fn zeroed_main_branch_passes_shortcut_only() {
        // With zero conv weights and fresh BN state in eval mode, the main
        // branch contributes exactly zero, so y == MaxPool(LReLU(x)).
        let mut rng = Rng::new(50);
        let mut p = block(3, 3, 9, &mut rng);
        p.conv1.weights = Tensor::zeros(p.conv1.weights.shape());
        p.conv2.weights = Tensor::zeros(p.conv2.weights.shape());
        let x = Tensor::uniform(&mut rng, -1.0, 1.0, &[2, 16, 3]).unwrap();
        let (y, _) = residual_block(&x, &mut p, Mode::Eval, None).unwrap();

        let (a, _) = lrelu(&x, 0.01).unwrap();
        let (want, _) = maxpool1d(&a, 4, 4).unwrap();
        assert_eq!(y, want);
    }

    #[test]
    fn output_shape_follows_pool_arithmetic() {
        let mut rng = Rng::new(51);
        let mut p = block(2, 8, 9, &mut rng);
        let x = Tensor::uniform(&mut rng, -1.0, 1.0, &[2, 9800, 2]).unwrap();
        let (y, _) = residual_block(&x, &mut p, Mode::Eval, None).unwrap();
        assert_eq!(y.shape(), &[2, 2450, 8]);
        assert_eq!(p.output_len(9800).unwrap(), 2450);
    }

    #[test]
    fn validate_rejects_missing_shortcut() {
        let mut rng = Rng::new(52);
        let mut p = block(2, 4, 9, &mut rng);
        p.shortcut_proj = None;
        p.shortcut_bn = None;
        assert!(p.validate().is_err());
    }

    #[test]
    fn end_to_end_gradient_matches_finite_differences() {
        let mut rng = Rng::new(53);
        let p = block(2, 4, 9, &mut rng);
        let x = Tensor::uniform(&mut rng, -1.0, 1.0, &[2, 32, 2]).unwrap();
        let proj = Tensor::uniform(&mut rng, 0.5, 1.5, &[2, 8, 4]).unwrap();

        let (_, ctx) = residual_block(&x, &mut p.clone(), Mode::Train, None).unwrap();
        let (dx, grads) = residual_block_grad(&p, ctx, &proj).unwrap();

        let state = RefCell::new((x, p));
        let loss = || {
            let (x, p) = &*state.borrow();
            let (y, _) = residual_block(x, &mut p.clone(), Mode::Train, None).unwrap();
            y.mul(&proj).unwrap().data().iter().sum::<f64>()
        };

        let ex = fd_check(
            dx.data(),
            |i| state.borrow().0.data()[i],
            |i, v| state.borrow_mut().0.data_mut()[i] = v,
            loss,
            1e-5,
        );
        assert!(ex <= 1e-5, "dx rel err {ex}");

        // Check every parameter tensor through the same loss.
        let names: Vec<(&str, Tensor)> = vec![
            ("conv1.weights", grads.conv1_weights),
            ("conv1.bias", grads.conv1_bias),
            ("bn1.gamma", grads.bn1_gamma),
            ("bn1.beta", grads.bn1_beta),
            ("conv2.weights", grads.conv2_weights),
            ("conv2.bias", grads.conv2_bias),
            ("bn2.gamma", grads.bn2_gamma),
            ("bn2.beta", grads.bn2_beta),
            ("shortcut.weights", grads.shortcut_weights.unwrap()),
            ("shortcut.bias", grads.shortcut_bias.unwrap()),
            ("shortcut_bn.gamma", grads.shortcut_bn_gamma.unwrap()),
            ("shortcut_bn.beta", grads.shortcut_bn_beta.unwrap()),
        ];
        for (name, g) in names {
            let read = |i: usize| {
                let p = &state.borrow().1;
                param_by_name(p, name)[i]
            };
            let write = |i: usize, v: f64| {
                let mut s = state.borrow_mut();
                param_by_name_mut(&mut s.1, name)[i] = v;
            };
            let err = fd_check(g.data(), read, write, loss, 1e-5);
            assert!(err <= 1e-5, "{name} rel err {err}");
        }
    }

    fn param_by_name<'a>(p: &'a ResidualBlockParams, name: &str) -> &'a [f64] {
        match name {
            "conv1.weights" => p.conv1.weights.data(),
            "conv1.bias" => p.conv1.bias.data(),
            "bn1.gamma" => p.bn1.gamma.data(),
            "bn1.beta" => p.bn1.beta.data(),
            "conv2.weights" => p.conv2.weights.data(),
            "conv2.bias" => p.conv2.bias.data(),
            "bn2.gamma" => p.bn2.gamma.data(),
            "bn2.beta" => p.bn2.beta.data(),
            "shortcut.weights" => p.shortcut_proj.as_ref().unwrap().weights.data(),
            "shortcut.bias" => p.shortcut_proj.as_ref().unwrap().bias.data(),
            "shortcut_bn.gamma" => p.shortcut_bn.as_ref().unwrap().gamma.data(),
            "shortcut_bn.beta" => p.shortcut_bn.as_ref().unwrap().beta.data(),
            _ => unreachable!(),
        }
    }

    fn param_by_name_mut<'a>(p: &'a mut ResidualBlockParams, name: &str) -> &'a mut [f64] {
        match name {
            "conv1.weights" => p.conv1.weights.data_mut(),
            "conv1.bias" => p.conv1.bias.data_mut(),
            "bn1.gamma" => p.bn1.gamma.data_mut(),
            "bn1.beta" => p.bn1.beta.data_mut(),
            "conv2.weights" => p.conv2.weights.data_mut(),
            "conv2.bias" => p.conv2.bias.data_mut(),
            "bn2.gamma" => p.bn2.gamma.data_mut(),
            "bn2.beta" => p.bn2.beta.data_mut(),
            "shortcut.weights" => p.shortcut_proj.as_mut().unwrap().weights.data_mut(),
            "shortcut.bias" => p.shortcut_proj.as_mut().unwrap().bias.data_mut(),
            "shortcut_bn.gamma" => p.shortcut_bn.as_mut().unwrap().gamma.data_mut(),
            "shortcut_bn.beta" => p.shortcut_bn.as_mut().unwrap().beta.data_mut(),
            _ => unreachable!(),
        }
    }
}
