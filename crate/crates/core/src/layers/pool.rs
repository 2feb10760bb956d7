use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug)]
pub struct MaxPoolCtx {
    /// Flat index into the input for the argmax of each output element
    /// (first occurrence on ties).
    argmax: Vec<usize>,
    in_shape: [usize; 3],
}

/// Max pooling over non-overlapping (or strided) temporal windows. Trailing
/// samples that do not fill a window are dropped:
/// out_len = (l - window) / stride + 1.
pub fn maxpool1d(x: &Tensor, window: usize, stride: usize) -> Result<(Tensor, MaxPoolCtx)> {
    if x.rank() != 3 {
        return Err(Error::shape(
            "maxpool1d",
            format!("input must be [b, l, ch], got {:?}", x.shape()),
        ));
    }
    if window == 0 || stride == 0 {
        return Err(Error::invalid("maxpool1d", "window and stride must be >= 1"));
    }
    let (b, l, ch) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if l < window {
        return Err(Error::invalid(
            "maxpool1d",
            format!("input length {l} shorter than pooling window {window}"),
        ));
    }
    let out_len = (l - window) / stride + 1;
    let mut y = Tensor::zeros(&[b, out_len, ch]);
    let mut argmax = vec![0usize; b * out_len * ch];
    let xd = x.data();
    let yd = y.data_mut();
    for bi in 0..b {
        for t in 0..out_len {
            let start = t * stride;
            for c in 0..ch {
                let mut best_idx = (bi * l + start) * ch + c;
                let mut best = xd[best_idx];
                for j in 1..window {
                    let idx = (bi * l + start + j) * ch + c;
                    // Strict comparison keeps the first maximal element on ties.
                    if xd[idx] > best {
                        best = xd[idx];
                        best_idx = idx;
                    }
                }
                let out_idx = (bi * out_len + t) * ch + c;
                yd[out_idx] = best;
                argmax[out_idx] = best_idx;
            }
        }
    }
    Ok((
        y,
        MaxPoolCtx {
            argmax,
            in_shape: [b, l, ch],
        },
    ))
}

/// Routes each dy value to the argmax position of its window, zero elsewhere.
pub fn maxpool1d_grad(ctx: MaxPoolCtx, dy: &Tensor) -> Result<Tensor> {
    if dy.len() != ctx.argmax.len() {
        return Err(Error::shape(
            "maxpool1d_grad",
            format!(
                "dy has {} values, forward produced {}",
                dy.len(),
                ctx.argmax.len()
            ),
        ));
    }
    let mut dx = Tensor::zeros(&ctx.in_shape);
    let dxd = dx.data_mut();
    for (&src, &g) in ctx.argmax.iter().zip(dy.data().iter()) {
        dxd[src] += g;
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::fd_check;
    use crate::tensor::Rng;
    use std::cell::RefCell;

    fn out_len(l: usize) -> usize {
        let x = Tensor::zeros(&[1, l, 1]);
        let (y, _) = maxpool1d(&x, 4, 4).unwrap();
        y.shape()[1]
    }

    #[test]
    fn pooling_arithmetic() {
        assert_eq!(out_len(9800), 2450);
        assert_eq!(out_len(2450), 612);
        assert_eq!(out_len(3800), 950);
        assert_eq!(out_len(950), 237);
    }

    #[test]
    fn constant_input_routes_gradient_to_first_element() {
        let x = Tensor::full(&[1, 8, 1], 3.0);
        let (y, ctx) = maxpool1d(&x, 4, 4).unwrap();
        assert_eq!(y.data(), &[3.0, 3.0]);
        let dy = Tensor::new(vec![1, 2, 1], vec![1.0, 2.0]).unwrap();
        let dx = maxpool1d_grad(ctx, &dy).unwrap();
        assert_eq!(dx.data(), &[1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn never_exceeds_input_maximum() {
        let mut rng = Rng::new(40);
        let x = Tensor::uniform(&mut rng, -5.0, 5.0, &[2, 19, 3]).unwrap();
        let (y, _) = maxpool1d(&x, 4, 4).unwrap();
        let xmax = x.data().iter().cloned().fold(f64::MIN, f64::max);
        let ymax = y.data().iter().cloned().fold(f64::MIN, f64::max);
        assert!(ymax <= xmax);
    }

    #[test]
    fn rejects_input_shorter_than_window() {
        let x = Tensor::zeros(&[1, 3, 1]);
        assert!(maxpool1d(&x, 4, 4).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences_away_from_ties() {
        // Distinct values guarantee no window has near-tied maxima.
        let mut rng = Rng::new(41);
        let mut vals: Vec<f64> = (0..2 * 16 * 2).map(|i| i as f64 * 0.1).collect();
        rng.shuffle(&mut vals);
        let x = Tensor::new(vec![2, 16, 2], vals).unwrap();
        let proj = Tensor::uniform(&mut rng, 0.5, 1.5, &[2, 4, 2]).unwrap();

        let (_, ctx) = maxpool1d(&x, 4, 4).unwrap();
        let dx = maxpool1d_grad(ctx, &proj).unwrap();

        let cell = RefCell::new(x);
        let loss = || {
            let x = cell.borrow();
            let (y, _) = maxpool1d(&x, 4, 4).unwrap();
            y.mul(&proj).unwrap().data().iter().sum::<f64>()
        };
        let err = fd_check(
            dx.data(),
            |i| cell.borrow().data()[i],
            |i, v| cell.borrow_mut().data_mut()[i] = v,
            loss,
            1e-5,
        );
        assert!(err <= 1e-6, "rel err {err}");
    }
}
