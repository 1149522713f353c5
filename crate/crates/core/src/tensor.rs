//! Dense row-major arrays over a generic scalar, plus a complex array for
//! frequency-domain data.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use num_complex::Complex64;

/// Dense row-major array. `Tensor<f64>` holds data and parameters;
/// `Tensor<Ad>` holds tape-recorded intermediates during training.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S = f64> {
    shape: Vec<usize>,
    data: Vec<S>,
}

/// The plain-float tensor used for inputs, parameters and reports.
pub type DenseArray = Tensor<f64>;

impl<S: Scalar> Tensor<S> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![S::zero(); shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: S) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::shape(
                "tensor",
                format!("shape {shape:?} needs {expected} values, got {}", data.len()),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn scalar(value: S) -> Self {
        Tensor {
            shape: vec![],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    #[inline]
    pub fn off2(&self, i: usize, j: usize) -> usize {
        i * self.shape[1] + j
    }

    #[inline]
    pub fn off3(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.shape[1] + j) * self.shape[2] + k
    }

    #[inline]
    pub fn at2(&self, i: usize, j: usize) -> S {
        self.data[self.off2(i, j)]
    }

    #[inline]
    pub fn at3(&self, i: usize, j: usize, k: usize) -> S {
        self.data[self.off3(i, j, k)]
    }

    #[inline]
    pub fn set2(&mut self, i: usize, j: usize, v: S) {
        let o = self.off2(i, j);
        self.data[o] = v;
    }

    #[inline]
    pub fn set3(&mut self, i: usize, j: usize, k: usize, v: S) {
        let o = self.off3(i, j, k);
        self.data[o] = v;
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(S) -> T) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&s| f(s)).collect(),
        }
    }

    /// Numeric values of every element, discarding any tape attachment.
    pub fn values(&self) -> DenseArray {
        self.map(|s| s.value())
    }

    /// Matrix product of two 2-D tensors: [m,k] x [k,n] -> [m,n].
    pub fn matmul(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        if self.shape.len() != 2 || rhs.shape.len() != 2 || self.shape[1] != rhs.shape[0] {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}", self.shape, rhs.shape),
            ));
        }
        let (m, k, n) = (self.shape[0], self.shape[1], rhs.shape[1]);
        let mut out = Tensor::zeros(&[m, n]);
        for i in 0..m {
            for j in 0..n {
                let mut acc = S::zero();
                for l in 0..k {
                    acc = acc + self.data[i * k + l] * rhs.data[l * n + j];
                }
                out.data[i * n + j] = acc;
            }
        }
        Ok(out)
    }

    /// Elementwise sum of two equally shaped tensors.
    pub fn add(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        if self.shape != rhs.shape {
            return Err(Error::shape(
                "add",
                format!("{:?} vs {:?}", self.shape, rhs.shape),
            ));
        }
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    /// True if every element's value is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|s| s.value().is_finite())
    }
}

impl DenseArray {
    /// Lifts plain floats into any scalar type as constants.
    pub fn lift<S: Scalar>(&self) -> Tensor<S> {
        self.map(S::lift)
    }
}

/// Dense row-major array of complex frequency coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexArray {
    shape: Vec<usize>,
    data: Vec<Complex64>,
}

impl ComplexArray {
    pub fn from_vec(shape: &[usize], data: Vec<Complex64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::shape(
                "complex array",
                format!("shape {shape:?} needs {expected} values, got {}", data.len()),
            ));
        }
        Ok(ComplexArray {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }
}
