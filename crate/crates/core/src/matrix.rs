//! Row-major dense `f64` matrix with the handful of kernels the networks need.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

// Row kernels. The fixed-width variants unroll the common layer widths; all
// variants perform the same operations in the same order.

/// `y += Σ_k x[k] · w[k, :]`, skipping zero `x[k]`.
#[inline]
fn axpy_rows<const N: usize>(x: &[f64], w: &[f64], y: &mut [f64]) {
    let y: &mut [f64; N] = y.try_into().expect("row width");
    for (k, &a) in x.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        let wk: &[f64; N] = w[k * N..(k + 1) * N].try_into().expect("row width");
        for j in 0..N {
            y[j] += a * wk[j];
        }
    }
}

fn axpy_rows_dyn(x: &[f64], w: &[f64], y: &mut [f64]) {
    let n = y.len();
    for (k, &a) in x.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for (yv, &wv) in y.iter_mut().zip(&w[k * n..(k + 1) * n]) {
            *yv += a * wv;
        }
    }
}

/// `dw += xᵀ g` for one row pair, skipping zero `x[k]`.
#[inline]
fn outer_acc<const N: usize>(x: &[f64], g: &[f64], dw: &mut [f64]) {
    let g: &[f64; N] = g.try_into().expect("row width");
    for (k, &a) in x.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        let dwk: &mut [f64; N] = (&mut dw[k * N..(k + 1) * N]).try_into().expect("row width");
        for j in 0..N {
            dwk[j] += a * g[j];
        }
    }
}

fn outer_acc_dyn(x: &[f64], g: &[f64], dw: &mut [f64]) {
    let n = g.len();
    for (k, &a) in x.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for (d, &gv) in dw[k * n..(k + 1) * n].iter_mut().zip(g) {
            *d += a * gv;
        }
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix data length {} does not match shape {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::invalid("ragged rows"));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
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
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// `self · w + bias`, where `w` is `cols × out` row-major.
    pub fn affine(&self, w: &[f64], bias: &[f64], out: usize) -> Matrix {
        debug_assert_eq!(w.len(), self.cols * out);
        debug_assert_eq!(bias.len(), out);
        let mut y = Matrix::zeros(self.rows, out);
        for i in 0..self.rows {
            let xi = self.row(i);
            let yi = &mut y.data[i * out..(i + 1) * out];
            yi.copy_from_slice(bias);
            match out {
                8 => axpy_rows::<8>(xi, w, yi),
                16 => axpy_rows::<16>(xi, w, yi),
                _ => axpy_rows_dyn(xi, w, yi),
            }
        }
        y
    }

    /// Accumulates `selfᵀ · dy` into `dw` (`cols × dy.cols`).
    pub fn accumulate_transpose_product(&self, dy: &Matrix, dw: &mut [f64]) {
        let out = dy.cols;
        debug_assert_eq!(dw.len(), self.cols * out);
        for i in 0..self.rows {
            let xi = self.row(i);
            let gi = dy.row(i);
            match out {
                8 => outer_acc::<8>(xi, gi, dw),
                16 => outer_acc::<16>(xi, gi, dw),
                _ => outer_acc_dyn(xi, gi, dw),
            }
        }
    }

    /// `self · wᵀ` where `w` is `in_dim × self.cols` row-major.
    pub fn product_transposed(&self, w: &[f64], in_dim: usize) -> Matrix {
        let out = self.cols;
        debug_assert_eq!(w.len(), in_dim * out);
        // Transpose once so the inner loop runs over contiguous memory.
        let mut wt = vec![0.0; w.len()];
        for k in 0..in_dim {
            for j in 0..out {
                wt[j * in_dim + k] = w[k * out + j];
            }
        }
        let mut dx = Matrix::zeros(self.rows, in_dim);
        for i in 0..self.rows {
            let gi = self.row(i);
            let dxi = &mut dx.data[i * in_dim..(i + 1) * in_dim];
            match in_dim {
                8 => axpy_rows::<8>(gi, &wt, dxi),
                16 => axpy_rows::<16>(gi, &wt, dxi),
                24 => axpy_rows::<24>(gi, &wt, dxi),
                _ => axpy_rows_dyn(gi, &wt, dxi),
            }
        }
        dx
    }

    /// Column sums.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (acc, v) in s.iter_mut().zip(self.row(i)) {
                *acc += v;
            }
        }
        s
    }

    /// Horizontal concatenation of row-aligned blocks.
    pub fn hstack(blocks: &[&Matrix]) -> Result<Matrix> {
        let rows = blocks.first().map_or(0, |b| b.rows);
        if blocks.iter().any(|b| b.rows != rows) {
            return Err(Error::invalid("hstack: row counts differ"));
        }
        let cols: usize = blocks.iter().map(|b| b.cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        for i in 0..rows {
            let mut off = 0;
            let dst = out.row_mut(i);
            for b in blocks {
                dst[off..off + b.cols].copy_from_slice(b.row(i));
                off += b.cols;
            }
        }
        Ok(out)
    }

    /// Splits columns into consecutive blocks of the given widths.
    pub fn hsplit(&self, widths: &[usize]) -> Vec<Matrix> {
        debug_assert_eq!(widths.iter().sum::<usize>(), self.cols);
        let mut parts: Vec<Matrix> = widths
            .iter()
            .map(|&w| Matrix::zeros(self.rows, w))
            .collect();
        for i in 0..self.rows {
            let src = self.row(i);
            let mut off = 0;
            for (p, &w) in parts.iter_mut().zip(widths) {
                p.row_mut(i).copy_from_slice(&src[off..off + w]);
                off += w;
            }
        }
        parts
    }

    /// Builds a matrix whose row `r` is `self.row(index[r])`.
    pub fn gather_rows(&self, index: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(index.len(), self.cols);
        for (r, &i) in index.iter().enumerate() {
            out.row_mut(r).copy_from_slice(self.row(i));
        }
        out
    }

    /// Adds row `r` of `self` into row `index[r]` of `target`.
    pub fn scatter_add_rows(&self, index: &[usize], target: &mut Matrix) {
        debug_assert_eq!(self.cols, target.cols);
        for (r, &i) in index.iter().enumerate() {
            for (t, v) in target.row_mut(i).iter_mut().zip(self.row(r)) {
                *t += v;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Pairwise (cascade) summation of a slice.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_matches_manual() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5]]).unwrap();
        let w = [1.0, 0.0, 3.0, 2.0, -1.0, 1.0];
        let y = x.affine(&w, &[0.5, 0.0, -1.0], 3);
        assert_eq!(y.row(0), &[5.5, -2.0, 4.0]);
        assert_eq!(y.row(1), &[0.5, -0.5, -3.5]);
    }

    #[test]
    fn transpose_products_agree_with_definition() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, -6.0]]).unwrap();
        let dy = Matrix::from_rows(&[vec![1.0], vec![-1.0], vec![2.0]]).unwrap();
        let mut dw = vec![0.0; 2];
        x.accumulate_transpose_product(&dy, &mut dw);
        assert_eq!(dw, vec![1.0 - 3.0 + 10.0, 2.0 - 4.0 - 12.0]);
        let dx = dy.product_transposed(&[2.0, 3.0], 2);
        assert_eq!(dx.row(2), &[4.0, 6.0]);
    }

    #[test]
    fn pairwise_sum_small_cases() {
        assert_eq!(pairwise_sum(&[]), 0.0);
        assert_eq!(pairwise_sum(&[1.0, 2.0, 3.0, 4.0, 5.0]), 15.0);
    }

    #[test]
    fn gather_scatter_are_adjoint_shapes() {
        let m = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let g = m.gather_rows(&[1, 1, 0]);
        assert_eq!(g.as_slice(), &[2.0, 2.0, 1.0]);
        let mut t = Matrix::zeros(2, 1);
        g.scatter_add_rows(&[0, 0, 1], &mut t);
        assert_eq!(t.as_slice(), &[4.0, 1.0]);
    }
}
