use std::fmt;

use crate::error::{Error, Result};

/// Dense row-major `f64` array of rank 1 to 3.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 3 {
            return Err(Error::Shape(format!("unsupported rank {} for shape {:?}", shape.len(), shape)));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![0.0; len] }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![value; len] }
    }

    pub fn scalar(value: f64) -> Self {
        Self { shape: vec![1], data: vec![value] }
    }

    /// Builds a rank-2 tensor from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Ok(Self { shape: vec![rows.len(), cols], data })
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
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

    /// Element of a rank-2 tensor.
    pub fn at(&self, row: usize, col: usize) -> f64 {
        debug_assert_eq!(self.rank(), 2);
        self.data[row * self.shape[1] + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        debug_assert_eq!(self.rank(), 2);
        let cols = self.shape[1];
        self.data[row * cols + col] = value;
    }

    /// Rows of a rank-2 tensor.
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        let cols = *self.shape.last().unwrap_or(&1);
        self.data.chunks(cols.max(1))
    }

    /// Same data under a new shape with the same element count.
    pub fn reshaped(&self, shape: &[usize]) -> Result<Self> {
        Self::new(shape, self.data.clone())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn transpose(&self) -> Result<Self> {
        let (r, c) = self.dims2()?;
        let mut out = Self::zeros(&[c, r]);
        for i in 0..r {
            for j in 0..c {
                out.data[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(out)
    }

    pub(crate) fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::Shape(format!("expected rank-2 tensor, got shape {:?}", self.shape))),
        }
    }

    /// Flattens leading axes: `[.., k]` becomes `(rows, k)`.
    pub(crate) fn as_matrix_dims(&self) -> (usize, usize) {
        let (last, lead) = self.shape.split_last().expect("rank >= 1");
        (lead.iter().product(), *last)
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

/// `out += a · b` for row-major `a: m×k`, `b: k×n`.
pub(crate) fn gemm_acc(out: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &a_ip) in a_row.iter().enumerate() {
            if a_ip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += a_ip * bv;
            }
        }
    }
}

/// `out += a · bᵀ` for `a: m×k`, `b: n×k`.
pub(crate) fn gemm_nt_acc(out: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let dot: f64 = a_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
            out[i * n + j] += dot;
        }
    }
}

/// `out += aᵀ · b` for `a: k×m`, `b: k×n`.
pub(crate) fn gemm_tn_acc(out: &mut [f64], a: &[f64], b: &[f64], k: usize, m: usize, n: usize) {
    for p in 0..k {
        let a_row = &a[p * m..(p + 1) * m];
        let b_row = &b[p * n..(p + 1) * n];
        for (i, &a_pi) in a_row.iter().enumerate() {
            if a_pi == 0.0 {
                continue;
            }
            let out_row = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += a_pi * bv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_mismatched_length() {
        assert!(Tensor::new(&[2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(&[1, 1, 1, 1], vec![1.0]).is_err());
    }

    #[test]
    fn transpose_swaps_axes() {
        let t = Tensor::new(&[2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let tt = t.transpose().unwrap();
        assert_eq!(tt.shape(), &[3, 2]);
        assert_eq!(tt.data(), &[1., 4., 2., 5., 3., 6.]);
    }

    #[test]
    fn gemm_variants_agree() {
        let a = [1., 2., 3., 4., 5., 6.]; // 2x3
        let b = [1., 0., 2., 1., 0., 3.]; // 3x2
        let mut out = [0.0; 4];
        gemm_acc(&mut out, &a, &b, 2, 3, 2);
        assert_eq!(out, [5., 11., 14., 23.]);

        let bt = [1., 2., 0., 0., 1., 3.]; // bᵀ as 2x3
        let mut out2 = [0.0; 4];
        gemm_nt_acc(&mut out2, &a, &bt, 2, 3, 2);
        assert_eq!(out, out2);

        let at = [1., 4., 2., 5., 3., 6.]; // aᵀ as 3x2
        let mut out3 = [0.0; 4];
        gemm_tn_acc(&mut out3, &at, &b, 3, 2, 2);
        assert_eq!(out, out3);
    }
}
