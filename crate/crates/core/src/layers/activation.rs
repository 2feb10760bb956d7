use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug)]
pub struct LreluCtx {
    x: Tensor,
    alpha: f64,
}

/// Leaky ReLU: y = x for x >= 0, alpha * x otherwise.
pub fn lrelu(x: &Tensor, alpha: f64) -> Result<(Tensor, LreluCtx)> {
    if alpha < 0.0 {
        return Err(Error::invalid(
            "lrelu",
            format!("alpha must be >= 0, got {alpha}"),
        ));
    }
    let y = x.map(|v| if v >= 0.0 { v } else { alpha * v });
    Ok((
        y,
        LreluCtx {
            x: x.clone(),
            alpha,
        },
    ))
}

/// dx = dy * (1 if x >= 0 else alpha).
pub fn lrelu_grad(ctx: LreluCtx, dy: &Tensor) -> Result<Tensor> {
    if dy.shape() != ctx.x.shape() {
        return Err(Error::shape(
            "lrelu_grad",
            format!("dy {:?} vs forward input {:?}", dy.shape(), ctx.x.shape()),
        ));
    }
    let mut dx = Tensor::zeros(ctx.x.shape());
    for ((d, &g), &xv) in dx
        .data_mut()
        .iter_mut()
        .zip(dy.data().iter())
        .zip(ctx.x.data().iter())
    {
        *d = if xv >= 0.0 { g } else { ctx.alpha * g };
    }
    Ok(dx)
}
