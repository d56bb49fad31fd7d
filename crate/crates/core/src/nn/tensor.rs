use super::{NnError, Result};

/// Row-major batch matrix: one row per example.
#[derive(Debug, Clone, PartialEq)]
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

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(NnError::Invalid(format!(
                "matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
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
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self · rhs` where `rhs` is `[cols, out]` row-major.
    ///
    /// Zero entries of `self` are skipped, which makes one-hot inputs cheap.
    pub fn matmul(&self, rhs: &[f64], out: usize) -> Matrix {
        debug_assert_eq!(rhs.len(), self.cols * out);
        let mut res = Matrix::zeros(self.rows, out);
        for r in 0..self.rows {
            let a = self.row(r);
            let dst = &mut res.data[r * out..(r + 1) * out];
            for (k, &av) in a.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                let w = &rhs[k * out..(k + 1) * out];
                for (d, &wv) in dst.iter_mut().zip(w) {
                    *d += av * wv;
                }
            }
        }
        res
    }

    /// Accumulates `selfᵀ · rhs` into `acc` (shape `[self.cols, rhs.cols]`).
    pub fn accumulate_transpose_matmul(&self, rhs: &Matrix, acc: &mut [f64]) {
        debug_assert_eq!(self.rows, rhs.rows);
        debug_assert_eq!(acc.len(), self.cols * rhs.cols);
        let out = rhs.cols;
        for r in 0..self.rows {
            let a = self.row(r);
            let g = rhs.row(r);
            for (k, &av) in a.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                let dst = &mut acc[k * out..(k + 1) * out];
                for (d, &gv) in dst.iter_mut().zip(g) {
                    *d += av * gv;
                }
            }
        }
    }

    /// `self · rhsᵀ` where `rhs` is `[inner, self.cols]` row-major.
    pub fn matmul_transposed(&self, rhs: &[f64], inner: usize) -> Matrix {
        debug_assert_eq!(rhs.len(), inner * self.cols);
        let mut res = Matrix::zeros(self.rows, inner);
        for r in 0..self.rows {
            let g = self.row(r);
            let dst = &mut res.data[r * inner..(r + 1) * inner];
            for (k, d) in dst.iter_mut().enumerate() {
                let w = &rhs[k * self.cols..(k + 1) * self.cols];
                *d = g.iter().zip(w).map(|(a, b)| a * b).sum();
            }
        }
        res
    }

    /// Column sums.
    pub fn sum_rows(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (a, &v) in acc.iter_mut().zip(self.row(r)) {
                *a += v;
            }
        }
        acc
    }
}

/// A named trainable tensor with its gradient buffer.
///
/// `decay` marks tensors that take part in the ℓ2 penalty (dense weights).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub grads: Vec<f64>,
    pub decay: bool,
}

impl ParamTensor {
    pub fn zeros(name: impl Into<String>, shape: &[usize], decay: bool) -> Self {
        let len = shape.iter().product();
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            values: vec![0.0; len],
            grads: vec![0.0; len],
            decay,
        }
    }

    pub fn filled(name: impl Into<String>, shape: &[usize], value: f64, decay: bool) -> Self {
        let mut t = Self::zeros(name, shape, decay);
        t.values.fill(value);
        t
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grads.fill(0.0);
    }

    /// Overwrites values, checking the element count.
    pub fn assign(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(NnError::Invalid(format!(
                "{}: expected {} values, got {}",
                self.name,
                self.values.len(),
                values.len()
            )));
        }
        self.values.copy_from_slice(values);
        Ok(())
    }
}
