//! The full network: two residual blocks, a batch-normalized hidden FC with
//! LReLU, and a linear output head emitting logits (softmax lives in the
//! loss). Also parameter bookkeeping and binary checkpoints.

mod checkpoint;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, sha256_hex, CheckpointMeta, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};

use crate::error::{Error, Result};
use crate::layers::{
    batchnorm, batchnorm_grad, dense, dense_grad, lrelu, lrelu_grad, residual_block,
    residual_block_grad, BatchNormCtx, BatchNormParams, Conv1dParams, DenseCtx, DenseParams,
    LreluCtx, Mode, Padding, ResidualBlockCtx, ResidualBlockGrads, ResidualBlockParams,
};
use crate::optim::xavier_init;
use crate::tensor::{Rng, Tensor};
use serde::{Deserialize, Serialize};

/// Network hyperparameters. The defaults mirror the training recipe used for
/// both EEG corpora; only input length, channel count and class count differ
/// between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResCnnConfig {
    pub input_length: usize,
    pub input_channels: usize,
    pub n_classes: usize,
    pub kernel_size: usize,
    pub block_channels: [usize; 2],
    pub pool_window: usize,
    pub dropout_rate: f64,
    pub lrelu_alpha: f64,
    pub fc_hidden: usize,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl ResCnnConfig {
    fn base(input_length: usize, input_channels: usize, n_classes: usize) -> Self {
        ResCnnConfig {
            input_length,
            input_channels,
            n_classes,
            kernel_size: 9,
            block_channels: [8, 16],
            pool_window: 4,
            dropout_rate: 0.5,
            lrelu_alpha: 0.01,
            fc_hidden: 200,
            bn_momentum: 0.9,
            bn_eps: 1e-5,
        }
    }

    /// Bonn corpus: 3800-sample crops of single-channel EEG, three classes.
    pub fn bonn() -> Self {
        Self::base(3800, 1, 3)
    }

    /// Bern-Barcelona corpus: 9800-sample crops of two-channel EEG, binary.
    pub fn bern() -> Self {
        Self::base(9800, 2, 2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_length < 16 {
            return Err(Error::config(format!(
                "input_length {} too short: two /4 poolings need at least 16 samples",
                self.input_length
            )));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::config(format!(
                "kernel_size must be odd for same padding, got {}",
                self.kernel_size
            )));
        }
        if self.input_channels == 0 || self.block_channels.contains(&0) {
            return Err(Error::config("channel counts must be >= 1".to_string()));
        }
        if self.n_classes < 2 {
            return Err(Error::config(format!(
                "n_classes must be >= 2, got {}",
                self.n_classes
            )));
        }
        if self.pool_window < 2 {
            return Err(Error::config("pool_window must be >= 2".to_string()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if self.lrelu_alpha < 0.0 {
            return Err(Error::config("lrelu_alpha must be >= 0".to_string()));
        }
        if self.fc_hidden == 0 {
            return Err(Error::config("fc_hidden must be >= 1".to_string()));
        }
        if !(0.0 < self.bn_momentum && self.bn_momentum < 1.0) || self.bn_eps <= 0.0 {
            return Err(Error::config(
                "bn_momentum must be in (0, 1) and bn_eps positive".to_string(),
            ));
        }
        self.pooled_lengths()?;
        Ok(())
    }

    fn pool_once(&self, l: usize) -> Result<usize> {
        if l < self.pool_window {
            return Err(Error::config(format!(
                "length {l} too short for pool window {}",
                self.pool_window
            )));
        }
        Ok((l - self.pool_window) / self.pool_window + 1)
    }

    /// Temporal lengths after block 1 and block 2.
    pub fn pooled_lengths(&self) -> Result<(usize, usize)> {
        let l1 = self.pool_once(self.input_length)?;
        let l2 = self.pool_once(l1)?;
        Ok((l1, l2))
    }

    /// Width of the flattened tensor entering the hidden FC layer.
    pub fn flatten_width(&self) -> Result<usize> {
        let (_, l2) = self.pooled_lengths()?;
        Ok(l2 * self.block_channels[1])
    }
}

/// The assembled network with all learnable parameters and BN running stats.
#[derive(Debug, Clone)]
pub struct ResCnnModel {
    pub config: ResCnnConfig,
    pub block1: ResidualBlockParams,
    pub block2: ResidualBlockParams,
    pub fc_hidden: DenseParams,
    pub fc_hidden_bn: BatchNormParams,
    pub fc_out: DenseParams,
}

fn init_conv(
    in_ch: usize,
    out_ch: usize,
    k: usize,
    rng: &mut Rng,
) -> Result<Conv1dParams> {
    let weights = xavier_init(in_ch * k, out_ch * k, &[out_ch, in_ch, k], rng)?;
    Conv1dParams::new(weights, Tensor::zeros(&[out_ch]), 1, Padding::Same)
}

fn init_block(
    in_ch: usize,
    out_ch: usize,
    cfg: &ResCnnConfig,
    rng: &mut Rng,
) -> Result<ResidualBlockParams> {
    let (shortcut_proj, shortcut_bn) = if in_ch != out_ch {
        (
            Some(init_conv(in_ch, out_ch, 1, rng)?),
            Some(BatchNormParams::new(out_ch, cfg.bn_momentum, cfg.bn_eps)?),
        )
    } else {
        (None, None)
    };
    Ok(ResidualBlockParams {
        conv1: init_conv(in_ch, out_ch, cfg.kernel_size, rng)?,
        bn1: BatchNormParams::new(out_ch, cfg.bn_momentum, cfg.bn_eps)?,
        conv2: init_conv(out_ch, out_ch, cfg.kernel_size, rng)?,
        bn2: BatchNormParams::new(out_ch, cfg.bn_momentum, cfg.bn_eps)?,
        shortcut_proj,
        shortcut_bn,
        pool_window: cfg.pool_window,
        pool_stride: cfg.pool_window,
        dropout_rate: cfg.dropout_rate,
        lrelu_alpha: cfg.lrelu_alpha,
    })
}

/// Build a freshly initialized model: Xavier weights, zero biases, BN gamma
/// 1 / beta 0, running stats at mean 0 / var 1.
pub fn build_model(cfg: &ResCnnConfig, rng: &mut Rng) -> Result<ResCnnModel> {
    cfg.validate()?;
    let flat = cfg.flatten_width()?;
    let block1 = init_block(cfg.input_channels, cfg.block_channels[0], cfg, rng)?;
    let block2 = init_block(cfg.block_channels[0], cfg.block_channels[1], cfg, rng)?;
    let fc_hidden = DenseParams::new(
        xavier_init(flat, cfg.fc_hidden, &[flat, cfg.fc_hidden], rng)?,
        Tensor::zeros(&[cfg.fc_hidden]),
    )?;
    let fc_hidden_bn = BatchNormParams::new(cfg.fc_hidden, cfg.bn_momentum, cfg.bn_eps)?;
    let fc_out = DenseParams::new(
        xavier_init(cfg.fc_hidden, cfg.n_classes, &[cfg.fc_hidden, cfg.n_classes], rng)?,
        Tensor::zeros(&[cfg.n_classes]),
    )?;
    Ok(ResCnnModel {
        config: cfg.clone(),
        block1,
        block2,
        fc_hidden,
        fc_hidden_bn,
        fc_out,
    })
}

impl ResCnnModel {
    /// All-zero skeleton with the right shapes; used by the checkpoint loader.
    pub(crate) fn zeroed(cfg: &ResCnnConfig) -> Result<ResCnnModel> {
        // Xavier draws are discarded by overwriting every tensor on load, but
        // building through the normal path keeps shapes in one place.
        let mut rng = Rng::new(0);
        let mut m = build_model(cfg, &mut rng)?;
        for t in m.params_mut() {
            for v in t.data_mut() {
                *v = 0.0;
            }
        }
        Ok(m)
    }

    /// Names of learnable parameters in canonical order.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (prefix, block) in [("block1", &self.block1), ("block2", &self.block2)] {
            names.push(format!("{prefix}.conv1.weights"));
            names.push(format!("{prefix}.conv1.bias"));
            names.push(format!("{prefix}.bn1.gamma"));
            names.push(format!("{prefix}.bn1.beta"));
            names.push(format!("{prefix}.conv2.weights"));
            names.push(format!("{prefix}.conv2.bias"));
            names.push(format!("{prefix}.bn2.gamma"));
            names.push(format!("{prefix}.bn2.beta"));
            if block.shortcut_proj.is_some() {
                names.push(format!("{prefix}.shortcut.weights"));
                names.push(format!("{prefix}.shortcut.bias"));
                names.push(format!("{prefix}.shortcut_bn.gamma"));
                names.push(format!("{prefix}.shortcut_bn.beta"));
            }
        }
        names.extend(
            [
                "fc_hidden.weights",
                "fc_hidden.bias",
                "fc_hidden_bn.gamma",
                "fc_hidden_bn.beta",
                "fc_out.weights",
                "fc_out.bias",
            ]
            .map(String::from),
        );
        names
    }

    /// Learnable parameters in the same order as `param_names`.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for block in [&self.block1, &self.block2] {
            out.extend([
                &block.conv1.weights,
                &block.conv1.bias,
                &block.bn1.gamma,
                &block.bn1.beta,
                &block.conv2.weights,
                &block.conv2.bias,
                &block.bn2.gamma,
                &block.bn2.beta,
            ]);
            if let (Some(sc), Some(sbn)) = (&block.shortcut_proj, &block.shortcut_bn) {
                out.extend([&sc.weights, &sc.bias, &sbn.gamma, &sbn.beta]);
            }
        }
        out.extend([
            &self.fc_hidden.weights,
            &self.fc_hidden.bias,
            &self.fc_hidden_bn.gamma,
            &self.fc_hidden_bn.beta,
            &self.fc_out.weights,
            &self.fc_out.bias,
        ]);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for block in [&mut self.block1, &mut self.block2] {
            out.extend([
                &mut block.conv1.weights,
                &mut block.conv1.bias,
                &mut block.bn1.gamma,
                &mut block.bn1.beta,
                &mut block.conv2.weights,
                &mut block.conv2.bias,
                &mut block.bn2.gamma,
                &mut block.bn2.beta,
            ]);
            if let (Some(sc), Some(sbn)) = (&mut block.shortcut_proj, &mut block.shortcut_bn) {
                out.extend([&mut sc.weights, &mut sc.bias, &mut sbn.gamma, &mut sbn.beta]);
            }
        }
        out.extend([
            &mut self.fc_hidden.weights,
            &mut self.fc_hidden.bias,
            &mut self.fc_hidden_bn.gamma,
            &mut self.fc_hidden_bn.beta,
            &mut self.fc_out.weights,
            &mut self.fc_out.bias,
        ]);
        out
    }

    /// Names of non-learnable state tensors (BN running stats).
    pub fn state_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (prefix, block) in [("block1", &self.block1), ("block2", &self.block2)] {
            names.push(format!("{prefix}.bn1.running_mean"));
            names.push(format!("{prefix}.bn1.running_var"));
            names.push(format!("{prefix}.bn2.running_mean"));
            names.push(format!("{prefix}.bn2.running_var"));
            if block.shortcut_bn.is_some() {
                names.push(format!("{prefix}.shortcut_bn.running_mean"));
                names.push(format!("{prefix}.shortcut_bn.running_var"));
            }
        }
        names.push("fc_hidden_bn.running_mean".to_string());
        names.push("fc_hidden_bn.running_var".to_string());
        names
    }

    pub fn states(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for block in [&self.block1, &self.block2] {
            out.extend([
                &block.bn1.running_mean,
                &block.bn1.running_var,
                &block.bn2.running_mean,
                &block.bn2.running_var,
            ]);
            if let Some(sbn) = &block.shortcut_bn {
                out.extend([&sbn.running_mean, &sbn.running_var]);
            }
        }
        out.extend([
            &self.fc_hidden_bn.running_mean,
            &self.fc_hidden_bn.running_var,
        ]);
        out
    }

    pub fn states_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for block in [&mut self.block1, &mut self.block2] {
            out.extend([
                &mut block.bn1.running_mean,
                &mut block.bn1.running_var,
                &mut block.bn2.running_mean,
                &mut block.bn2.running_var,
            ]);
            if let Some(sbn) = &mut block.shortcut_bn {
                out.extend([&mut sbn.running_mean, &mut sbn.running_var]);
            }
        }
        out.extend([
            &mut self.fc_hidden_bn.running_mean,
            &mut self.fc_hidden_bn.running_var,
        ]);
        out
    }
}

/// Total scalar learnable parameters.
pub fn count_params(m: &ResCnnModel) -> usize {
    m.params().iter().map(|t| t.len()).sum()
}

/// Everything the backward pass and the inspection pipeline need from one
/// forward call. Consumed by exactly one `model_backward`.
#[derive(Debug)]
pub struct ForwardTrace {
    config: ResCnnConfig,
    mode: Mode,
    block1: ResidualBlockCtx,
    block2: ResidualBlockCtx,
    fc_hidden: DenseCtx,
    fc_bn: BatchNormCtx,
    fc_act: LreluCtx,
    fc_out: DenseCtx,
    /// Post-LReLU hidden FC activations, [b, fc_hidden].
    pub hidden_activations: Tensor,
}

/// Run the network. Train mode uses batch statistics and live dropout (rng
/// required when dropout_rate > 0) and updates BN running stats; eval mode
/// is deterministic and mutates nothing.
pub fn model_forward(
    m: &mut ResCnnModel,
    x: &Tensor,
    mode: Mode,
    mut rng: Option<&mut Rng>,
) -> Result<(Tensor, ForwardTrace)> {
    let cfg = m.config.clone();
    if x.rank() != 3
        || x.shape()[1] != cfg.input_length
        || x.shape()[2] != cfg.input_channels
    {
        return Err(Error::shape(
            "model_forward",
            format!(
                "input {:?} vs configured [b, {}, {}]",
                x.shape(),
                cfg.input_length,
                cfg.input_channels
            ),
        ));
    }

    let (y1, ctx1) = residual_block(x, &mut m.block1, mode, rng.as_deref_mut())?;
    let (y2, ctx2) = residual_block(&y1, &mut m.block2, mode, rng)?;

    let b = y2.shape()[0];
    let flat = y2.reshape(&[b, cfg.flatten_width()?])?;
    let (h_pre, fc_ctx) = dense(&flat, &m.fc_hidden)?;
    let (h_bn, bn_ctx) = batchnorm(&h_pre, &mut m.fc_hidden_bn, mode)?;
    let (h, act_ctx) = lrelu(&h_bn, cfg.lrelu_alpha)?;
    let (logits, out_ctx) = dense(&h, &m.fc_out)?;

    Ok((
        logits,
        ForwardTrace {
            config: cfg,
            mode,
            block1: ctx1,
            block2: ctx2,
            fc_hidden: fc_ctx,
            fc_bn: bn_ctx,
            fc_act: act_ctx,
            fc_out: out_ctx,
            hidden_activations: h,
        },
    ))
}

/// Gradients for every learnable parameter, shaped like the parameters.
#[derive(Debug)]
pub struct ModelGrads {
    pub block1: ResidualBlockGrads,
    pub block2: ResidualBlockGrads,
    pub fc_hidden_weights: Tensor,
    pub fc_hidden_bias: Tensor,
    pub fc_bn_gamma: Tensor,
    pub fc_bn_beta: Tensor,
    pub fc_out_weights: Tensor,
    pub fc_out_bias: Tensor,
}

impl ModelGrads {
    /// Flatten into the canonical parameter order of `ResCnnModel::params`.
    pub fn into_vec(self) -> Vec<Tensor> {
        let mut out = self.block1.into_vec();
        out.extend(self.block2.into_vec());
        out.extend([
            self.fc_hidden_weights,
            self.fc_hidden_bias,
            self.fc_bn_gamma,
            self.fc_bn_beta,
            self.fc_out_weights,
            self.fc_out_bias,
        ]);
        out
    }
}

/// Backpropagate `dlogits` through the trace. The trace must come from a
/// train-mode forward on the same model; it is consumed here.
pub fn model_backward(
    m: &ResCnnModel,
    trace: ForwardTrace,
    dlogits: &Tensor,
) -> Result<ModelGrads> {
    if trace.config != m.config {
        return Err(Error::invalid(
            "model_backward",
            "trace was produced by a model with a different configuration",
        ));
    }
    if trace.mode != Mode::Train {
        return Err(Error::invalid(
            "model_backward",
            "trace must come from a train-mode forward",
        ));
    }

    let (d_h, d_out_w, d_out_b) = dense_grad(&m.fc_out, trace.fc_out, dlogits)?;
    let d_h_bn = lrelu_grad(trace.fc_act, &d_h)?;
    let (d_h_pre, d_bn_gamma, d_bn_beta) = batchnorm_grad(&m.fc_hidden_bn, trace.fc_bn, &d_h_bn)?;
    let (d_flat, d_fc_w, d_fc_b) = dense_grad(&m.fc_hidden, trace.fc_hidden, &d_h_pre)?;

    let b = d_flat.shape()[0];
    let (_, l2) = m.config.pooled_lengths()?;
    let d_y2 = d_flat.reshape(&[b, l2, m.config.block_channels[1]])?;

    let (d_y1, block2_grads) = residual_block_grad(&m.block2, trace.block2, &d_y2)?;
    let (_, block1_grads) = residual_block_grad(&m.block1, trace.block1, &d_y1)?;

    Ok(ModelGrads {
        block1: block1_grads,
        block2: block2_grads,
        fc_hidden_weights: d_fc_w,
        fc_hidden_bias: d_fc_b,
        fc_bn_gamma: d_bn_gamma,
        fc_bn_beta: d_bn_beta,
        fc_out_weights: d_out_w,
        fc_out_bias: d_out_b,
    })
}
