use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::num::Scalar;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }
}

/// Weights and biases. `w1` is `dim x hidden`, `w2` is `hidden x hidden`,
/// `w3` is `hidden x 3`; a layer computes `z = W^T h + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams<T> {
    pub w1: Matrix<T>,
    pub b1: Vec<T>,
    pub w2: Matrix<T>,
    pub b2: Vec<T>,
    pub w3: Matrix<T>,
    pub b3: Vec<T>,
}

impl<T: Scalar> MlpParams<T> {
    pub fn zeros(dim: usize, hidden: usize) -> Self {
        MlpParams {
            w1: Matrix::zeros(dim, hidden),
            b1: vec![T::zero(); hidden],
            w2: Matrix::zeros(hidden, hidden),
            b2: vec![T::zero(); hidden],
            w3: Matrix::zeros(hidden, 3),
            b3: vec![T::zero(); 3],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dim(), self.hidden())
    }

    pub fn dim(&self) -> usize {
        self.w1.rows
    }

    pub fn hidden(&self) -> usize {
        self.b1.len()
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn tensors(&self) -> [&[T]; 6] {
        [&self.w1.data, &self.b1, &self.w2.data, &self.b2, &self.w3.data, &self.b3]
    }

    pub fn tensors_mut(&mut self) -> [&mut [T]; 6] {
        [
            &mut self.w1.data,
            &mut self.b1,
            &mut self.w2.data,
            &mut self.b2,
            &mut self.w3.data,
            &mut self.b3,
        ]
    }

    pub fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(T::zero());
        }
    }

    /// Shapes agree with each other and every entry is finite.
    pub fn is_consistent(&self) -> bool {
        let (d, h) = (self.dim(), self.hidden());
        self.w1.cols == h
            && self.w1.data.len() == d * h
            && self.w2.rows == h
            && self.w2.cols == h
            && self.w2.data.len() == h * h
            && self.b2.len() == h
            && self.w3.rows == h
            && self.w3.cols == 3
            && self.w3.data.len() == h * 3
            && self.b3.len() == 3
            && self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn cast<U: Scalar>(&self) -> MlpParams<U> {
        let m = |x: &Matrix<T>| Matrix {
            rows: x.rows,
            cols: x.cols,
            data: x.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        };
        let v = |x: &[T]| x.iter().map(|v| U::lit(v.as_f64())).collect();
        MlpParams {
            w1: m(&self.w1),
            b1: v(&self.b1),
            w2: m(&self.w2),
            b2: v(&self.b2),
            w3: m(&self.w3),
            b3: v(&self.b3),
        }
    }
}

/// Seeded uniform initialization on `[-bound, bound]`; biases start at zero.
/// Draw order is `w1`, `w2`, `w3`, each row-major.
pub fn init_params<T: Scalar>(dim: usize, hidden: usize, bound: f64, seed: u64) -> MlpParams<T> {
    let mut p = MlpParams::zeros(dim, hidden);
    if bound == 0.0 {
        return p;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(-bound, bound);
    for w in [&mut p.w1.data, &mut p.w2.data, &mut p.w3.data] {
        for v in w.iter_mut() {
            *v = T::lit(dist.sample(&mut rng));
        }
    }
    p
}
