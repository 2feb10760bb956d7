//! Dense row-major f64 tensors and the deterministic random source.
//!
//! This is the numeric substrate for everything else: shapes, elementwise
//! arithmetic, one-axis moment reductions, and matrix multiply. All storage
//! is 64-bit; signal tensors use layout batch x time x channel with the
//! channel axis innermost.

mod rng;

pub use rng::Rng;

use crate::error::{Error, Result};

/// Dense N-dimensional array of f64 in row-major order.
///
/// `product(shape) == data.len()` always holds; the shape of a constructed
/// tensor never changes (reshape returns a new value).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::shape(
                "Tensor::new",
                format!("zero extent in shape {shape:?}"),
            ));
        }
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(Error::shape(
                "Tensor::new",
                format!("shape {shape:?} needs {expect} values, got {}", data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// 1-D tensor from values.
    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    /// n x n identity matrix.
    pub fn eye(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// I.i.d. uniform draws in [lo, hi); consuming the Rng advances its state.
    pub fn uniform(rng: &mut Rng, lo: f64, hi: f64, shape: &[usize]) -> Result<Self> {
        if lo >= hi || lo.is_nan() || hi.is_nan() {
            return Err(Error::invalid(
                "Tensor::uniform",
                format!("lo ({lo}) must be < hi ({hi})"),
            ));
        }
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| rng.uniform(lo, hi)).collect();
        Tensor::new(shape.to_vec(), data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// New tensor with the same data and a different shape of equal volume.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if expect != self.data.len() {
            return Err(Error::shape(
                "Tensor::reshape",
                format!(
                    "cannot view {:?} ({} values) as {:?} ({} values)",
                    self.shape,
                    self.data.len(),
                    shape,
                    expect
                ),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    fn zip(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Self> {
        self.zip(other, "Tensor::add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Self> {
        self.zip(other, "Tensor::sub", |a, b| a - b)
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Tensor) -> Result<Self> {
        self.zip(other, "Tensor::mul", |a, b| a * b)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Matrix product of a [m, k] tensor with a [k, n] tensor.
    pub fn matmul(&self, other: &Tensor) -> Result<Self> {
        if self.rank() != 2 || other.rank() != 2 {
            return Err(Error::shape(
                "Tensor::matmul",
                format!(
                    "expects two matrices, got {:?} and {:?}",
                    self.shape, other.shape
                ),
            ));
        }
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n) = (other.shape[0], other.shape[1]);
        if k != k2 {
            return Err(Error::shape(
                "Tensor::matmul",
                format!("inner extents differ: {:?} x {:?}", self.shape, other.shape),
            ));
        }
        let a = &self.data;
        let b = &other.data;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let arow = &a[i * k..(i + 1) * k];
            let orow = &mut out[i * n..(i + 1) * n];
            for (t, &ait) in arow.iter().enumerate() {
                let brow = &b[t * n..(t + 1) * n];
                for (o, &bt) in orow.iter_mut().zip(brow.iter()) {
                    *o += ait * bt;
                }
            }
        }
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }

    /// Mean and biased variance (divide by n) along one axis. The reduced
    /// axis is removed from the output shapes.
    pub fn reduce_moments(&self, axis: usize) -> Result<(Tensor, Tensor)> {
        if axis >= self.rank() {
            return Err(Error::AxisOutOfRange {
                axis,
                rank: self.rank(),
            });
        }
        let outer: usize = self.shape[..axis].iter().product();
        let mid = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut out_shape: Vec<usize> = self.shape[..axis].to_vec();
        out_shape.extend_from_slice(&self.shape[axis + 1..]);

        let mut mean = vec![0.0; outer * inner];
        let mut var = vec![0.0; outer * inner];
        let inv_n = 1.0 / mid as f64;
        for o in 0..outer {
            for i in 0..inner {
                let base = o * mid * inner + i;
                let mut s = 0.0;
                for a in 0..mid {
                    s += self.data[base + a * inner];
                }
                let mu = s * inv_n;
                let mut sq = 0.0;
                for a in 0..mid {
                    let d = self.data[base + a * inner] - mu;
                    sq += d * d;
                }
                mean[o * inner + i] = mu;
                var[o * inner + i] = sq * inv_n;
            }
        }
        Ok((
            Tensor {
                shape: out_shape.clone(),
                data: mean,
            },
            Tensor {
                shape: out_shape,
                data: var,
            },
        ))
    }
}
