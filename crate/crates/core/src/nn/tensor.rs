//! Dense row-major tensors over `f32` (training) or `f64` (gradient
//! checking).

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Element type of the computation stack. Training runs in `f32`; finite
/// difference checks instantiate the same code in `f64`.
pub trait Scalar:
    Copy
    + Default
    + PartialOrd
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn abs(self) -> Self;
    fn maximum(self, other: Self) -> Self;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            fn to_f64(self) -> f64 {
                self as f64
            }
            fn sqrt(self) -> Self {
                self.sqrt()
            }
            fn exp(self) -> Self {
                self.exp()
            }
            fn ln(self) -> Self {
                self.ln()
            }
            fn abs(self) -> Self {
                self.abs()
            }
            fn maximum(self, other: Self) -> Self {
                self.max(other)
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

/// Up to four axes; images are (batch, channel, height, width), dense
/// activations are (batch, features).
#[derive(Clone, Copy, PartialEq, Eq, Debug, serde::Serialize, serde::Deserialize)]
pub struct Shape {
    dims: [usize; 4],
    rank: usize,
}

impl Shape {
    pub fn d1(n: usize) -> Self {
        Shape { dims: [n, 1, 1, 1], rank: 1 }
    }

    pub fn d2(n: usize, f: usize) -> Self {
        Shape { dims: [n, f, 1, 1], rank: 2 }
    }

    pub fn d4(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { dims: [n, c, h, w], rank: 4 }
    }

    pub fn from_dims(dims: &[usize]) -> Self {
        assert!((1..=4).contains(&dims.len()), "rank must be 1..=4");
        let mut d = [1usize; 4];
        d[..dims.len()].copy_from_slice(dims);
        Shape { dims: d, rank: dims.len() }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims[..self.rank]
    }

    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }

    /// Leading (batch) dimension.
    pub fn n(&self) -> usize {
        self.dims[0]
    }

    pub fn c(&self) -> usize {
        self.dims[1]
    }

    pub fn h(&self) -> usize {
        self.dims[2]
    }

    pub fn w(&self) -> usize {
        self.dims[3]
    }

    /// Same leading dimension, remaining axes flattened.
    pub fn flattened(&self) -> Shape {
        Shape::d2(self.dims[0], self.dims[1] * self.dims[2] * self.dims[3])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S: Scalar = f32> {
    shape: Shape,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![S::ZERO; shape.numel()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<S>) -> Self {
        assert_eq!(shape.numel(), data.len(), "element count must match shape");
        Tensor { shape, data }
    }

    /// Stacks per-sample channel-major buffers into an (N, C, H, W) batch.
    pub fn stack_chw(rows: &[Vec<S>], c: usize, h: usize, w: usize) -> Self {
        let n = rows.len();
        let stride = c * h * w;
        let mut data = Vec::with_capacity(n * stride);
        for row in rows {
            assert_eq!(row.len(), stride);
            data.extend_from_slice(row);
        }
        Tensor::from_vec(Shape::d4(n, c, h, w), data)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    /// Reinterprets the buffer under a new shape with the same element count.
    pub fn reshaped(&self, shape: Shape) -> Tensor<S> {
        assert_eq!(shape.numel(), self.shape.numel());
        Tensor {
            shape,
            data: self.data.clone(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor<S>) {
        assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn scale(&mut self, factor: S) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    /// Converts element type through `f64`.
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| T::from_f64(v.to_f64())).collect(),
        }
    }
}
