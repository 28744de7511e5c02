//! Dense row-major arrays with shape metadata.
//!
//! Everything the stack computes on is an [`Array`]: a contiguous `Vec<f64>`
//! plus a shape. Most graph operations work on rank-2 arrays and treat
//! vectors as single-row matrices (`[1, n]`) and scalars as `[1, 1]`.

use crate::error::{NumericsError, Result};
use crate::precision::Precision;

/// Contiguous row-major array of real values.
#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Array {
    /// Create an array from a shape and a data buffer.
    ///
    /// Returns an error if the element count does not match the shape product.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(NumericsError::ShapeMismatch {
                context: "Array::from_vec",
                detail: format!(
                    "shape {:?} implies {} elements, buffer holds {}",
                    shape,
                    expected,
                    data.len()
                ),
            });
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    /// Zero-filled array of the given shape.
    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    /// Array of the given shape filled with one value.
    pub fn full(shape: &[usize], value: f64) -> Self {
        let n: usize = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![value; n] }
    }

    /// Single-element scalar array.
    pub fn scalar(value: f64) -> Self {
        Self { shape: vec![1, 1], data: vec![value] }
    }

    /// Single-row matrix from a slice.
    pub fn row(values: &[f64]) -> Self {
        Self { shape: vec![1, values.len()], data: values.to_vec() }
    }

    /// Build a `[rows, cols]` matrix from a function of (row, col).
    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { shape: vec![rows, cols], data }
    }

    /// Shape as a slice of dimension sizes.
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Total number of elements.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// True when the array holds no elements.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row count of a rank-2 array.
    ///
    /// # Panics
    /// Panics if the array is not rank 2.
    pub fn rows(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "rows() requires a rank-2 array, got {:?}", self.shape);
        self.shape[0]
    }

    /// Column count of a rank-2 array.
    ///
    /// # Panics
    /// Panics if the array is not rank 2.
    pub fn cols(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "cols() requires a rank-2 array, got {:?}", self.shape);
        self.shape[1]
    }

    /// True when the array is a `[1, 1]` scalar.
    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Value of a `[1, 1]` scalar array.
    ///
    /// # Panics
    /// Panics if the array holds more than one element.
    pub fn scalar_value(&self) -> f64 {
        assert!(self.is_scalar(), "scalar_value() on array of shape {:?}", self.shape);
        self.data[0]
    }

    /// Read-only view of the backing buffer (row-major).
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable view of the backing buffer (row-major).
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Element at (row, col) of a rank-2 array.
    pub fn at(&self, row: usize, col: usize) -> f64 {
        let cols = self.cols();
        self.data[row * cols + col]
    }

    /// Set element at (row, col) of a rank-2 array.
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        let cols = self.cols();
        self.data[row * cols + col] = value;
    }

    /// One row of a rank-2 array as a slice.
    pub fn row_slice(&self, row: usize) -> &[f64] {
        let cols = self.cols();
        &self.data[row * cols..(row + 1) * cols]
    }

    /// Reinterpret the buffer under a new shape with the same element count.
    ///
    /// # Panics
    /// Panics if the element counts differ.
    pub fn reshaped(&self, shape: &[usize]) -> Self {
        let expected: usize = shape.iter().product();
        assert_eq!(
            expected,
            self.data.len(),
            "reshape {:?} -> {:?} changes element count",
            self.shape,
            shape
        );
        Self { shape: shape.to_vec(), data: self.data.clone() }
    }

    /// True when every element is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Round every element to the precision of the given mode.
    pub fn quantize(&mut self, precision: Precision) {
        if precision == Precision::Single {
            for v in &mut self.data {
                *v = *v as f32 as f64;
            }
        }
    }

    /// Sum of all elements.
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Euclidean norm of the whole buffer.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Elementwise in-place add of another array with identical shape.
    ///
    /// # Panics
    /// Panics on shape mismatch.
    pub fn add_assign(&mut self, other: &Array) {
        assert_eq!(
            self.shape, other.shape,
            "add_assign shape mismatch: {:?} vs {:?}",
            self.shape, other.shape
        );
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Scale every element in place.
    pub fn scale_assign(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    /// Matrix product `self @ other` for rank-2 arrays.
    ///
    /// # Panics
    /// Panics if inner dimensions disagree.
    pub fn matmul(&self, other: &Array) -> Array {
        let (m, k) = (self.rows(), self.cols());
        let (k2, n) = (other.rows(), other.cols());
        assert_eq!(k, k2, "matmul inner dims disagree: [{m}, {k}] @ [{k2}, {n}]");
        let mut out = vec![0.0; m * n];
        // i-k-j loop order keeps the inner loop contiguous over both the
        // right operand row and the output row.
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out[i * n..(i + 1) * n];
            for (kk, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[kk * n..(kk + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Array { shape: vec![m, n], data: out }
    }

    /// Matrix product `self @ other.T` for rank-2 arrays.
    ///
    /// # Panics
    /// Panics if column counts disagree.
    pub fn matmul_nt(&self, other: &Array) -> Array {
        let (m, k) = (self.rows(), self.cols());
        let (n, k2) = (other.rows(), other.cols());
        assert_eq!(k, k2, "matmul_nt column dims disagree: [{m}, {k}] @ [{n}, {k2}]^T");
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let b_row = &other.data[j * k..(j + 1) * k];
                let mut acc = 0.0;
                for (a, b) in a_row.iter().zip(b_row) {
                    acc += a * b;
                }
                out[i * n + j] = acc;
            }
        }
        Array { shape: vec![m, n], data: out }
    }

    /// Matrix product `self.T @ other` for rank-2 arrays.
    ///
    /// # Panics
    /// Panics if row counts disagree.
    pub fn matmul_tn(&self, other: &Array) -> Array {
        let (k, m) = (self.rows(), self.cols());
        let (k2, n) = (other.rows(), other.cols());
        assert_eq!(k, k2, "matmul_tn row dims disagree: [{k}, {m}]^T @ [{k2}, {n}]");
        let mut out = vec![0.0; m * n];
        for kk in 0..k {
            let a_row = &self.data[kk * m..(kk + 1) * m];
            let b_row = &other.data[kk * n..(kk + 1) * n];
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let o_row = &mut out[i * n..(i + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Array { shape: vec![m, n], data: out }
    }
}
