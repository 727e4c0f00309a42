use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Real CSR matrix. Used for propagation operators (N×N) and for sparse
/// node-feature inputs (N×m).
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn from_csr(
        rows: usize,
        cols: usize,
        offsets: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if offsets.len() != rows + 1
            || indices.len() != values.len()
            || offsets.last() != Some(&indices.len())
            || offsets.windows(2).any(|w| w[0] > w[1])
            || indices.iter().any(|&j| j >= cols)
        {
            return Err(Error::invalid("malformed CSR arrays"));
        }
        Ok(Self {
            rows,
            cols,
            offsets,
            indices,
            values,
        })
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); rows];
        for &(i, j, v) in triplets {
            if i >= rows || j >= cols {
                return Err(Error::invalid(format!("triplet ({i}, {j}) out of bounds")));
            }
            per_row[i].push((j, v));
        }
        let mut offsets = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for mut row in per_row {
            row.sort_by_key(|&(j, _)| j);
            for (j, v) in row {
                if indices.len() > *offsets.last().unwrap() && *indices.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(j);
                    values.push(v);
                }
            }
            offsets.push(indices.len());
        }
        Ok(Self {
            rows,
            cols,
            offsets,
            indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            offsets: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Keeps the non-zero entries of a dense matrix.
    pub fn from_dense(m: &Matrix) -> Self {
        let mut offsets = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for i in 0..m.rows() {
            for (j, &v) in m.row(i).iter().enumerate() {
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
            offsets.push(indices.len());
        }
        Self {
            rows: m.rows(),
            cols: m.cols(),
            offsets,
            indices,
            values,
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
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

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    #[inline]
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Same sparsity pattern with new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::invalid("value count does not match sparsity pattern"));
        }
        Ok(Self {
            values,
            ..self.clone()
        })
    }

    /// `self · x`.
    pub fn spmm(&self, x: &Matrix) -> Result<Matrix> {
        if self.cols != x.rows() {
            return Err(Error::Shape {
                op: "spmm",
                left: self.shape(),
                right: x.shape(),
            });
        }
        let d = x.cols();
        let mut out = Matrix::zeros(self.rows, d);
        for i in 0..self.rows {
            let o = out.row_mut(i);
            for (j, v) in self.row(i) {
                for (o, &xv) in o.iter_mut().zip(x.row(j)) {
                    *o += v * xv;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · x`.
    pub fn spmm_t(&self, x: &Matrix) -> Result<Matrix> {
        if self.rows != x.rows() {
            return Err(Error::Shape {
                op: "spmm_t",
                left: self.shape(),
                right: x.shape(),
            });
        }
        let d = x.cols();
        let mut out = Matrix::zeros(self.cols, d);
        for i in 0..self.rows {
            let xi = x.row(i);
            for (j, v) in self.row(i) {
                for (o, &xv) in out.row_mut(j).iter_mut().zip(xi) {
                    *o += v * xv;
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Self {
        let mut trip = Vec::with_capacity(self.nnz());
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                trip.push((j, i, v));
            }
        }
        Self::from_triplets(self.cols, self.rows, &trip).expect("transpose stays in bounds")
    }

    /// Inverted dropout on the stored entries: each is zeroed with
    /// probability `p` and survivors are scaled by `1 / (1 - p)`.
    pub fn dropout(&self, p: f64, seed: u64) -> Self {
        if p <= 0.0 {
            return self.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (1.0 - p);
        let values = self
            .values
            .iter()
            .map(|&v| if rng.random::<f64>() < p { 0.0 } else { v * scale })
            .collect();
        Self {
            values,
            ..self.clone()
        }
    }
}
