use rand::Rng;

use crate::imaging::SeededRng;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Truncated identity: ones on the leading diagonal.
    pub fn identity(rows: usize, cols: usize) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows.min(cols) {
            m.data[i * cols + i] = 1.0;
        }
        m
    }

    /// Uniform in `(-r, r)` with `r = 1 / sqrt(cols)`.
    pub fn random(rows: usize, cols: usize, rng: &mut SeededRng) -> Self {
        let r = 1.0 / (cols.max(1) as f64).sqrt();
        Self {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.random_range(-r..r)).collect(),
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// `out += A x`
    pub fn mul_vec_add(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols.max(1))) {
            *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.mul_vec_add(x, &mut out);
        out
    }

    /// `out += A^T y`
    pub fn mul_t_vec_add(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (&yi, row) in y.iter().zip(self.data.chunks_exact(self.cols.max(1))) {
            if yi != 0.0 {
                for (o, a) in out.iter_mut().zip(row) {
                    *o += yi * a;
                }
            }
        }
    }

    /// `A += y x^T`
    pub fn add_outer(&mut self, y: &[f64], x: &[f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for (&yi, row) in y.iter().zip(self.data.chunks_exact_mut(self.cols.max(1))) {
            if yi != 0.0 {
                for (a, b) in row.iter_mut().zip(x) {
                    *a += yi * b;
                }
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn add_assign(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}
