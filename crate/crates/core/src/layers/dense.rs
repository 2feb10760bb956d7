use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Fully connected layer: y = x W + bias, with W stored [n_in, n_out].
#[derive(Debug, Clone)]
pub struct DenseParams {
    pub weights: Tensor,
    pub bias: Tensor,
}

impl DenseParams {
    pub fn new(weights: Tensor, bias: Tensor) -> Result<Self> {
        if weights.rank() != 2 {
            return Err(Error::shape(
                "DenseParams",
                format!("weights must be [n_in, n_out], got {:?}", weights.shape()),
            ));
        }
        if bias.shape() != [weights.shape()[1]] {
            return Err(Error::shape(
                "DenseParams",
                format!("bias {:?} vs n_out {}", bias.shape(), weights.shape()[1]),
            ));
        }
        Ok(DenseParams { weights, bias })
    }

    pub fn n_in(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn n_out(&self) -> usize {
        self.weights.shape()[1]
    }
}

#[derive(Debug)]
pub struct DenseCtx {
    x: Tensor,
}

pub fn dense(x: &Tensor, p: &DenseParams) -> Result<(Tensor, DenseCtx)> {
    if x.rank() != 2 || x.shape()[1] != p.n_in() {
        return Err(Error::shape(
            "dense",
            format!(
                "input {:?} vs weights {:?}",
                x.shape(),
                p.weights.shape()
            ),
        ));
    }
    let mut y = x.matmul(&p.weights)?;
    let (b, n_out) = (y.shape()[0], y.shape()[1]);
    {
        let yd = y.data_mut();
        let bias = p.bias.data();
        for r in 0..b {
            for c in 0..n_out {
                yd[r * n_out + c] += bias[c];
            }
        }
    }
    Ok((y, DenseCtx { x: x.clone() }))
}

/// Gradients of dense: returns (dx, dweights, dbias).
pub fn dense_grad(p: &DenseParams, ctx: DenseCtx, dy: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let b = ctx.x.shape()[0];
    let (n_in, n_out) = (p.n_in(), p.n_out());
    if dy.shape() != [b, n_out] {
        return Err(Error::shape(
            "dense_grad",
            format!("dy {:?} vs expected [{b}, {n_out}]", dy.shape()),
        ));
    }
    let xd = ctx.x.data();
    let dyd = dy.data();
    let wd = p.weights.data();

    // dW = x^T dy
    let mut dw = Tensor::zeros(&[n_in, n_out]);
    {
        let dwd = dw.data_mut();
        for r in 0..b {
            let dyrow = &dyd[r * n_out..(r + 1) * n_out];
            for t in 0..n_in {
                let xv = xd[r * n_in + t];
                if xv != 0.0 {
                    let dwrow = &mut dwd[t * n_out..(t + 1) * n_out];
                    for (dwv, &g) in dwrow.iter_mut().zip(dyrow.iter()) {
                        *dwv += xv * g;
                    }
                }
            }
        }
    }

    // dbias = column sums of dy
    let mut dbias = vec![0.0; n_out];
    for r in 0..b {
        for c in 0..n_out {
            dbias[c] += dyd[r * n_out + c];
        }
    }

    // dx = dy W^T
    let mut dx = Tensor::zeros(&[b, n_in]);
    {
        let dxd = dx.data_mut();
        for r in 0..b {
            let dyrow = &dyd[r * n_out..(r + 1) * n_out];
            for t in 0..n_in {
                let wrow = &wd[t * n_out..(t + 1) * n_out];
                let mut acc = 0.0;
                for (g, w) in dyrow.iter().zip(wrow.iter()) {
                    acc += g * w;
                }
                dxd[r * n_in + t] = acc;
            }
        }
    }

    Ok((dx, dw, Tensor::new(vec![n_out], dbias)?))
}
