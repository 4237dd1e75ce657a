//! Dense row-major matrices, Lp norms and signed powers.

mod eigen;

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

pub use eigen::{sym_eig, sym_eig_topk, EigPair, JACOBI_SWEEP_CAP};

/// Smallest exponent accepted by [`lp_norm`]; below it `1/p` overflows quickly.
pub const MIN_P: f64 = 1e-3;

/// Dense real matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data, rejecting length mismatches and
    /// non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidInput("ragged rows".into()));
        }
        Mat::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Self {
        let mut m = Mat::zeros(rows, columns.len());
        for (j, c) in columns.iter().enumerate() {
            m.set_column(j, c);
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) {
        assert_eq!(values.len(), self.rows, "column length mismatch");
        for (i, &x) in values.iter().enumerate() {
            self.data[i * self.cols + j] = x;
        }
    }

    /// First `k` columns.
    pub fn leading_columns(&self, k: usize) -> Mat {
        assert!(k <= self.cols);
        Mat::from_fn(self.rows, k, |i, j| self[(i, j)])
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Matrix product `self · rhs`.
    pub fn matmul(&self, rhs: &Mat) -> Mat {
        assert_eq!(self.cols, rhs.rows, "matmul dimension mismatch");
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `selfᵀ · rhs` without forming the transpose.
    pub fn t_matmul(&self, rhs: &Mat) -> Mat {
        assert_eq!(self.rows, rhs.rows, "t_matmul dimension mismatch");
        let mut out = Mat::zeros(self.cols, rhs.cols);
        for k in 0..self.rows {
            let rk = rhs.row(k);
            for (i, &a) in self.row(k).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rk) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self · rhsᵀ`.
    pub fn matmul_t(&self, rhs: &Mat) -> Mat {
        assert_eq!(self.cols, rhs.cols, "matmul_t dimension mismatch");
        Mat::from_fn(self.rows, rhs.rows, |i, j| dot(self.row(i), rhs.row(j)))
    }

    /// `self · x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "mul_vec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `selfᵀ · y`.
    pub fn t_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, y.len(), "t_mul_vec dimension mismatch");
        let mut out = vec![0.0; self.cols];
        self.t_mul_vec_acc(y, 1.0, &mut out);
        out
    }

    /// `acc += weight · selfᵀ · y`.
    pub fn t_mul_vec_acc(&self, y: &[f64], weight: f64, acc: &mut [f64]) {
        for (i, &yi) in y.iter().enumerate() {
            let c = weight * yi;
            if c == 0.0 {
                continue;
            }
            for (a, &x) in acc.iter_mut().zip(self.row(i)) {
                *a += c * x;
            }
        }
    }

    /// `acc += weight · selfᵀ · self`.
    pub fn gram_acc(&self, weight: f64, acc: &mut Mat) {
        assert_eq!(acc.shape(), (self.cols, self.cols));
        for r in 0..self.rows {
            let row = self.row(r);
            for (i, &a) in row.iter().enumerate() {
                let c = weight * a;
                if c == 0.0 {
                    continue;
                }
                let acc_row = &mut acc.data[i * self.cols..(i + 1) * self.cols];
                for (o, &b) in acc_row.iter_mut().zip(row) {
                    *o += c * b;
                }
            }
        }
    }

    pub fn add(&self, rhs: &Mat) -> Mat {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Mat) -> Mat {
        self.zip_with(rhs, |a, b| a - b)
    }

    pub fn scale(&self, alpha: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| alpha * x).collect(),
        }
    }

    pub fn add_assign(&mut self, rhs: &Mat) {
        assert_eq!(self.shape(), rhs.shape(), "shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }

    pub fn scale_in_place(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|x| *x *= alpha);
    }

    fn zip_with(&self, rhs: &Mat, f: impl Fn(f64, f64) -> f64) -> Mat {
        assert_eq!(self.shape(), rhs.shape(), "shape mismatch");
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    /// Largest singular value, by power iteration on the Gram matrix.
    pub fn spectral_norm(&self) -> f64 {
        let gram = self.t_matmul(self);
        let n = gram.rows;
        if n == 0 {
            return 0.0;
        }
        // start from the Gram column with the largest diagonal entry
        let start = (0..n).fold(0, |best, i| if gram[(i, i)] > gram[(best, best)] { i } else { best });
        let mut x = gram.column(start);
        let mut nx = norm2(&x);
        if nx == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|v| *v /= nx);
        let mut lambda = 0.0;
        for _ in 0..10_000 {
            let y = gram.mul_vec(&x);
            let next = dot(&x, &y);
            nx = norm2(&y);
            if nx == 0.0 {
                return 0.0;
            }
            x = y.into_iter().map(|v| v / nx).collect();
            let done = (next - lambda).abs() <= 1e-10 * next.abs();
            lambda = next;
            if done {
                break;
            }
        }
        lambda.max(0.0).sqrt()
    }

    pub fn max_abs_diff(&self, rhs: &Mat) -> f64 {
        assert_eq!(self.shape(), rhs.shape(), "shape mismatch");
        self.data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// True when `|a_ij − a_ji| ≤ rel_tol · ‖A‖_F` for all entries.
    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        let bound = rel_tol * self.frobenius_norm();
        (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= bound))
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn check_p(p: f64) -> Result<()> {
    if p.is_nan() || p < MIN_P {
        return Err(Error::InvalidSpec(format!(
            "norm exponent p must be >= {MIN_P} or infinite, got {p}"
        )));
    }
    Ok(())
}

/// `(Σ|v_i|^p)^(1/p)`, or `max|v_i|` for `p = ∞`.
pub fn lp_norm(v: &[f64], p: f64) -> Result<f64> {
    check_p(p)?;
    if v.is_empty() {
        return Err(Error::InvalidInput("lp_norm of an empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("lp_norm of a non-finite vector".into()));
    }
    let max = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if p.is_infinite() || max == 0.0 {
        return Ok(max);
    }
    if p == 1.0 {
        return Ok(v.iter().map(|x| x.abs()).sum());
    }
    // scaled by the max entry so large p cannot overflow
    let sum: f64 = if p == 2.0 {
        v.iter().map(|x| (x / max) * (x / max)).sum()
    } else {
        v.iter().map(|x| (x.abs() / max).powf(p)).sum()
    };
    Ok(max * sum.powf(1.0 / p))
}

/// Element-wise `|v_i|^e · sign(v_i)` with `sign(0) = 0`, so `0^0 = 0`.
pub fn signed_power(v: &[f64], e: f64) -> Vec<f64> {
    if e == 1.0 {
        return v.to_vec();
    }
    v.iter()
        .map(|&x| {
            if x == 0.0 {
                0.0
            } else if e == 0.0 {
                x.signum()
            } else {
                x.abs().powf(e).copysign(x)
            }
        })
        .collect()
}
