//! Compressed sparse row storage for complex operators.
//!
//! Everything the Liouvillian touches is a sum of Kronecker products of
//! small local operators with identities, so the embedded operators have at
//! most a handful of non-zeros per row. Keeping them in CSR form turns every
//! operator-times-state product into an `O(nnz * dim)` sweep instead of a
//! dense `O(dim^3)` one.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

/// Column count (rows * columns of the dense operand) above which the
/// sparse-dense products fan out over the rayon pool.
const PAR_THRESHOLD: usize = 1 << 14;
/// Dense columns handled per sweep over the sparse structure.
const COLUMN_BLOCK: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<Complex64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![Complex64::new(1.0, 0.0); n],
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are
    /// summed and exact zeros are dropped.
    pub fn from_triplets<I>(nrows: usize, ncols: usize, triplets: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, Complex64)>,
    {
        let mut entries: Vec<(usize, usize, Complex64)> = triplets.into_iter().collect();
        entries.sort_unstable_by_key(|&(i, j, _)| (i, j));

        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut values: Vec<Complex64> = Vec::with_capacity(entries.len());
        let mut rows = Vec::with_capacity(entries.len());
        for (i, j, v) in entries {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds");
            if rows.last() == Some(&i) && indices.last() == Some(&j) {
                *values.last_mut().unwrap() += v;
            } else {
                rows.push(i);
                indices.push(j);
                values.push(v);
            }
        }
        // drop cancelled entries
        let mut keep_rows = Vec::with_capacity(rows.len());
        let mut keep_idx = Vec::with_capacity(rows.len());
        let mut keep_val = Vec::with_capacity(rows.len());
        for ((r, c), v) in rows.into_iter().zip(indices).zip(values) {
            if v != Complex64::new(0.0, 0.0) {
                keep_rows.push(r);
                keep_idx.push(c);
                keep_val.push(v);
            }
        }
        for &r in &keep_rows {
            indptr[r + 1] += 1;
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices: keep_idx,
            values: keep_val,
        }
    }

    pub fn from_dense(m: &DMatrix<Complex64>) -> Self {
        let trip = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
            .filter_map(|(i, j)| {
                let v = m[(i, j)];
                (v != Complex64::new(0.0, 0.0)).then_some((i, j, v))
            });
        Self::from_triplets(m.nrows(), m.ncols(), trip)
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut out = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.iter() {
            out[(i, j)] = v;
        }
        out
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        let row = self.indptr[i]..self.indptr[i + 1];
        match self.indices[row.clone()].binary_search(&j) {
            Ok(k) => self.values[row.start + k],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    /// Iterates non-zeros as `(row, col, value)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            (self.indptr[i]..self.indptr[i + 1]).map(move |k| (i, self.indices[k], self.values[k]))
        })
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.ncols, self.nrows, self.iter().map(|(i, j, v)| (j, i, v.conj())))
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.ncols, self.nrows, self.iter().map(|(i, j, v)| (j, i, v)))
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self::from_triplets(self.nrows, self.ncols, self.iter().map(|(i, j, v)| (i, j, v * c)))
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols), "shape mismatch in add");
        Self::from_triplets(self.nrows, self.ncols, self.iter().chain(other.iter()))
    }

    /// Sparse-sparse product (row-wise Gustavson accumulation).
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows, "shape mismatch in matmul");
        let mut acc = vec![Complex64::new(0.0, 0.0); other.ncols];
        let mut touched = vec![false; other.ncols];
        let mut cols: Vec<usize> = Vec::new();
        let mut trip = Vec::new();
        for i in 0..self.nrows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                let mid = self.indices[k];
                let a = self.values[k];
                for l in other.indptr[mid]..other.indptr[mid + 1] {
                    let j = other.indices[l];
                    if !touched[j] {
                        touched[j] = true;
                        cols.push(j);
                    }
                    acc[j] += a * other.values[l];
                }
            }
            for &j in &cols {
                trip.push((i, j, acc[j]));
                acc[j] = Complex64::new(0.0, 0.0);
                touched[j] = false;
            }
            cols.clear();
        }
        Self::from_triplets(self.nrows, other.ncols, trip)
    }

    /// Kronecker product `self ⊗ other`; `self` is the slow index.
    pub fn kron(&self, other: &Self) -> Self {
        let nrows = self.nrows * other.nrows;
        let ncols = self.ncols * other.ncols;
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(self.nnz() * other.nnz());
        let mut values = Vec::with_capacity(self.nnz() * other.nnz());
        indptr.push(0);
        for ia in 0..self.nrows {
            for ib in 0..other.nrows {
                for ka in self.indptr[ia]..self.indptr[ia + 1] {
                    let (ja, va) = (self.indices[ka], self.values[ka]);
                    for kb in other.indptr[ib]..other.indptr[ib + 1] {
                        indices.push(ja * other.ncols + other.indices[kb]);
                        values.push(va * other.values[kb]);
                    }
                }
                indptr.push(indices.len());
            }
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    /// True when every stored entry sits on the diagonal.
    pub fn is_diagonal(&self) -> bool {
        self.iter().all(|(i, j, _)| i == j)
    }

    /// Largest entrywise `|A - A^†|`.
    pub fn hermiticity_deviation(&self) -> f64 {
        if self.nrows != self.ncols {
            return f64::INFINITY;
        }
        self.iter()
            .map(|(i, j, v)| (v - self.get(j, i).conj()).norm())
            .fold(0.0, f64::max)
    }

    /// `out = self * x` for a dense column-major `x`.
    ///
    /// Columns are processed in blocks so that each pass over the sparse
    /// structure serves several columns. Every output entry is summed in
    /// the same order regardless of blocking or threading, so the result is
    /// bit-for-bit reproducible.
    pub fn mul_dense_into(&self, x: &DMatrix<Complex64>, out: &mut DMatrix<Complex64>) {
        assert_eq!(self.ncols, x.nrows(), "shape mismatch in sparse-dense product");
        assert_eq!((self.nrows, x.ncols()), out.shape(), "output shape mismatch");
        let n_in = x.nrows();
        let n_out = self.nrows;
        if n_out == 0 || x.ncols() == 0 {
            return;
        }
        let xs = x.as_slice();
        let block_job = |(b, out_blk): (usize, &mut [Complex64])| {
            let j0 = b * COLUMN_BLOCK;
            let width = out_blk.len() / n_out;
            let x_blk = &xs[j0 * n_in..(j0 + width) * n_in];
            let mut acc = [Complex64::new(0.0, 0.0); COLUMN_BLOCK];
            for i in 0..n_out {
                acc[..width].fill(Complex64::new(0.0, 0.0));
                for k in self.indptr[i]..self.indptr[i + 1] {
                    let (v, c) = (self.values[k], self.indices[k]);
                    for (w, a) in acc[..width].iter_mut().enumerate() {
                        *a += v * x_blk[w * n_in + c];
                    }
                }
                for (w, a) in acc[..width].iter().enumerate() {
                    out_blk[w * n_out + i] = *a;
                }
            }
        };
        let os = out.as_mut_slice();
        if n_out * x.ncols() >= PAR_THRESHOLD {
            os.par_chunks_mut(n_out * COLUMN_BLOCK).enumerate().for_each(block_job);
        } else {
            os.chunks_mut(n_out * COLUMN_BLOCK).enumerate().for_each(block_job);
        }
    }

    /// `out += y * self^†`, built column by column from the rows of `self`
    /// so that no transposed copy of `y` is needed.
    pub fn add_dense_mul_adjoint(&self, y: &DMatrix<Complex64>, out: &mut DMatrix<Complex64>) {
        assert_eq!(y.ncols(), self.ncols, "shape mismatch in dense-sparse product");
        assert_eq!((y.nrows(), self.nrows), out.shape(), "output shape mismatch");
        let m = y.nrows();
        if m == 0 {
            return;
        }
        let ys = y.as_slice();
        let col_job = |(j, out_col): (usize, &mut [Complex64])| {
            for k in self.indptr[j]..self.indptr[j + 1] {
                let v = self.values[k].conj();
                let y_col = &ys[self.indices[k] * m..(self.indices[k] + 1) * m];
                for (o, yv) in out_col.iter_mut().zip(y_col) {
                    *o += v * yv;
                }
            }
        };
        let os = out.as_mut_slice();
        if m * self.nrows >= PAR_THRESHOLD {
            os.par_chunks_mut(m).enumerate().for_each(col_job);
        } else {
            os.chunks_mut(m).enumerate().for_each(col_job);
        }
    }

    pub fn mul_dense(&self, x: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let mut out = DMatrix::zeros(self.nrows, x.ncols());
        self.mul_dense_into(x, &mut out);
        out
    }
}
