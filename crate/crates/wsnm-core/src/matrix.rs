//! Dense column-major matrices: the numeric carrier for the whole crate.

use crate::{Error, Result};

/// Dense real matrix stored column-major: entry (i, j) lives at
/// `data[j * rows + i]`, so a column is one contiguous slice.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// All-zero matrix. Dimensions must be positive.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds from a column-major entry buffer, validating length and
    /// finiteness.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput(
                "matrix dimensions must be positive".into(),
            ));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "entry count {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "matrix entries must be finite, found {bad}"
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    /// Builds entry (i, j) = f(i, j).
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DenseMatrix::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m.data[j * rows + i] = f(i, j);
            }
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Square matrix with the given diagonal.
    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = DenseMatrix::zeros(n, n);
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * n + i] = v;
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

    /// Column-major entry buffer.
    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[j * self.rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[j * self.rows + i] = v;
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for j in 0..self.cols {
            for i in 0..self.rows {
                out.data[i * self.cols + j] = self.data[j * self.rows + i];
            }
        }
        out
    }

    /// self · rhs.
    pub fn matmul(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul: inner dimensions disagree ({}x{} · {}x{})",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let m = self.rows;
        let mut out = DenseMatrix::zeros(m, rhs.cols);
        for j in 0..rhs.cols {
            let rcol = rhs.col(j);
            let ocol = &mut out.data[j * m..(j + 1) * m];
            for (l, &a) in rcol.iter().enumerate() {
                if a != 0.0 {
                    let scol = &self.data[l * m..(l + 1) * m];
                    for i in 0..m {
                        ocol[i] += a * scol[i];
                    }
                }
            }
        }
        out
    }

    /// selfᵀ · rhs, computed as dot products of contiguous columns.
    pub fn transpose_matmul(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(
            self.rows, rhs.rows,
            "transpose_matmul: row counts disagree"
        );
        let mut out = DenseMatrix::zeros(self.cols, rhs.cols);
        for j in 0..rhs.cols {
            let rcol = rhs.col(j);
            let ocol = out.col_mut(j);
            for (i, o) in ocol.iter_mut().enumerate() {
                *o = dot(self.col(i), rcol);
            }
        }
        out
    }

    /// self · rhsᵀ.
    pub fn matmul_transpose(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, rhs.cols, "matmul_transpose: col counts disagree");
        let m = self.rows;
        let mut out = DenseMatrix::zeros(m, rhs.rows);
        for j in 0..rhs.rows {
            let ocol = &mut out.data[j * m..(j + 1) * m];
            for l in 0..self.cols {
                let a = rhs.data[l * rhs.rows + j];
                if a != 0.0 {
                    let scol = &self.data[l * m..(l + 1) * m];
                    for i in 0..m {
                        ocol[i] += a * scol[i];
                    }
                }
            }
        }
        out
    }

    pub fn add(&self, rhs: &DenseMatrix) -> DenseMatrix {
        self.zip(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &DenseMatrix) -> DenseMatrix {
        self.zip(rhs, |a, b| a - b)
    }

    pub fn scale(&self, a: f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| a * v).collect(),
        }
    }

    /// self += a · rhs.
    pub fn add_scaled_in_place(&mut self, a: f64, rhs: &DenseMatrix) {
        self.assert_same_shape(rhs);
        for (s, r) in self.data.iter_mut().zip(&rhs.data) {
            *s += a * r;
        }
    }

    pub fn sub_in_place(&mut self, rhs: &DenseMatrix) {
        self.assert_same_shape(rhs);
        for (s, r) in self.data.iter_mut().zip(&rhs.data) {
            *s -= r;
        }
    }

    pub fn add_in_place(&mut self, rhs: &DenseMatrix) {
        self.assert_same_shape(rhs);
        for (s, r) in self.data.iter_mut().zip(&rhs.data) {
            *s += r;
        }
    }

    fn zip(&self, rhs: &DenseMatrix, f: impl Fn(f64, f64) -> f64) -> DenseMatrix {
        self.assert_same_shape(rhs);
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    fn assert_same_shape(&self, rhs: &DenseMatrix) {
        assert!(
            self.rows == rhs.rows && self.cols == rhs.cols,
            "shape mismatch: {}x{} vs {}x{}",
            self.rows,
            self.cols,
            rhs.rows,
            rhs.cols
        );
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Elementwise dot product Σ self_ij · rhs_ij = tr(selfᵀ · rhs).
    pub fn elementwise_dot(&self, rhs: &DenseMatrix) -> f64 {
        self.assert_same_shape(rhs);
        dot(&self.data, &rhs.data)
    }

    /// ‖self − rhs‖_F².
    pub fn diff_norm_sq(&self, rhs: &DenseMatrix) -> f64 {
        self.assert_same_shape(rhs);
        self.data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| {
                let d = a - b;
                d * d
            })
            .sum()
    }

    /// Largest singular value estimated by deterministic power iteration on
    /// selfᵀ·self. Adequate for scaling penalties; not a certified bound.
    pub fn spectral_norm(&self) -> f64 {
        let n = self.cols;
        // Deterministic start with a mild index ramp to break symmetries.
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 1e-3 * (i + 1) as f64).collect();
        normalize(&mut v);
        let mut sigma = 0.0;
        for _ in 0..100 {
            let u = self.mul_vec(&v);
            let mut w = self.transpose_mul_vec(&u);
            let norm_w = normalize(&mut w);
            if norm_w == 0.0 {
                return 0.0;
            }
            let new_sigma = dot(&u, &u).sqrt();
            v = w;
            if (new_sigma - sigma).abs() <= 1e-12 * new_sigma.max(1e-300) {
                return new_sigma;
            }
            sigma = new_sigma;
        }
        sigma
    }

    fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for (j, &a) in v.iter().enumerate() {
            if a != 0.0 {
                let col = self.col(j);
                for i in 0..self.rows {
                    out[i] += a * col[i];
                }
            }
        }
        out
    }

    fn transpose_mul_vec(&self, u: &[f64]) -> Vec<f64> {
        debug_assert_eq!(u.len(), self.rows);
        (0..self.cols).map(|j| dot(self.col(j), u)).collect()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_major_layout() {
        let m = DenseMatrix::from_col_major(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(m.get(0, 0), 1.0);
        assert_eq!(m.get(1, 0), 2.0);
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(1, 2), 6.0);
        assert_eq!(m.col(1), &[3.0, 4.0]);
    }

    #[test]
    fn from_col_major_validates() {
        assert!(DenseMatrix::from_col_major(2, 2, vec![1.0; 3]).is_err());
        assert!(DenseMatrix::from_col_major(2, 2, vec![1.0, f64::NAN, 0.0, 0.0]).is_err());
        assert!(DenseMatrix::from_col_major(0, 2, vec![]).is_err());
    }

    #[test]
    fn matmul_small_known_product() {
        let a = DenseMatrix::from_fn(2, 3, |i, j| (i * 3 + j) as f64); // [[0,1,2],[3,4,5]]
        let b = DenseMatrix::from_fn(3, 2, |i, j| (i * 2 + j) as f64); // [[0,1],[2,3],[4,5]]
        let c = a.matmul(&b);
        assert_eq!(c.get(0, 0), 10.0);
        assert_eq!(c.get(0, 1), 13.0);
        assert_eq!(c.get(1, 0), 28.0);
        assert_eq!(c.get(1, 1), 40.0);
    }

    #[test]
    fn transpose_matmul_agrees_with_explicit_transpose() {
        let a = DenseMatrix::from_fn(4, 3, |i, j| (i + 2 * j) as f64 * 0.5 - 1.0);
        let b = DenseMatrix::from_fn(4, 2, |i, j| (i * j) as f64 + 0.25);
        let lhs = a.transpose_matmul(&b);
        let rhs = a.transpose().matmul(&b);
        assert!(lhs.diff_norm_sq(&rhs) < 1e-28);
    }

    #[test]
    fn matmul_transpose_agrees_with_explicit_transpose() {
        let a = DenseMatrix::from_fn(3, 4, |i, j| (i as f64 - j as f64) * 0.3);
        let b = DenseMatrix::from_fn(5, 4, |i, j| (i + j) as f64 * 0.1 + 1.0);
        let lhs = a.matmul_transpose(&b);
        let rhs = a.matmul(&b.transpose());
        assert!(lhs.diff_norm_sq(&rhs) < 1e-28);
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let m = DenseMatrix::from_diag(&[3.0, 7.0, 1.0]);
        assert!((m.spectral_norm() - 7.0).abs() < 1e-9);
    }

    #[test]
    fn spectral_norm_of_zero_matrix() {
        let m = DenseMatrix::zeros(4, 5);
        assert_eq!(m.spectral_norm(), 0.0);
    }

    #[test]
    fn frobenius_and_elementwise_dot() {
        let m = DenseMatrix::from_col_major(2, 2, vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        assert!((m.frobenius_norm() - 5.0).abs() < 1e-15);
        assert!((m.elementwise_dot(&m) - 25.0).abs() < 1e-15);
    }
}
