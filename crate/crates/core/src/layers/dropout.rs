use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::tensor::{Rng, Tensor};

#[derive(Debug)]
pub struct DropoutCtx {
    /// Inverted-dropout mask, already scaled by 1/(1-rate). `None` means the
    /// layer was a passthrough (eval mode or rate 0).
    scaled_mask: Option<Vec<f64>>,
}

/// Inverted dropout. Train mode zeroes each value with probability `rate`
/// and scales survivors by 1/(1-rate) so expectations are preserved; eval
/// mode passes the input through unchanged.
pub fn dropout(
    x: &Tensor,
    rate: f64,
    mode: Mode,
    rng: Option<&mut Rng>,
) -> Result<(Tensor, DropoutCtx)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(
            "dropout",
            format!("rate must be in [0, 1), got {rate}"),
        ));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((x.clone(), DropoutCtx { scaled_mask: None }));
    }
    let rng = rng.ok_or_else(|| {
        Error::invalid("dropout", "train mode with rate > 0 requires an rng")
    })?;
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rng.bernoulli(keep) { scale } else { 0.0 })
        .collect();
    let mut y = x.clone();
    for (v, &m) in y.data_mut().iter_mut().zip(mask.iter()) {
        *v *= m;
    }
    Ok((
        y,
        DropoutCtx {
            scaled_mask: Some(mask),
        },
    ))
}

/// Applies the identical scaled mask from the forward pass.
pub fn dropout_grad(ctx: DropoutCtx, dy: &Tensor) -> Result<Tensor> {
    match ctx.scaled_mask {
        None => Ok(dy.clone()),
        Some(mask) => {
            if mask.len() != dy.len() {
                return Err(Error::shape(
                    "dropout_grad",
                    format!("dy has {} values, mask has {}", dy.len(), mask.len()),
                ));
            }
            let mut dx = dy.clone();
            for (v, &m) in dx.data_mut().iter_mut().zip(mask.iter()) {
                *v *= m;
            }
            Ok(dx)
        }
    }
}
