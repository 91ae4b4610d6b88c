//! Column-major dense matrices and the small dense kernels built on them.
//!
//! Matrices here are deliberately plain: a shape plus a column-major value
//! buffer. Everything the solvers need (products, Gram matrices, stacked
//! factors, orthonormalization) is provided as methods; heavier
//! factorizations (SVD, Cholesky, eigenvalues) go through [`nalgebra`] via
//! the zero-copy-ish bridges at the bottom of this module.

use crate::{Error, Result, SparseMatrix};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Dense matrix with column-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        DenseMatrix {
            n_rows,
            n_cols,
            values: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds from a column-major slice; `values.len()` must equal `n_rows * n_cols`.
    pub fn from_column_major(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            return Err(Error::DimensionMismatch(format!(
                "dense storage holds {} values for a {}x{} matrix",
                values.len(),
                n_rows,
                n_cols
            )));
        }
        Ok(DenseMatrix {
            n_rows,
            n_cols,
            values,
        })
    }

    pub fn from_fn(n_rows: usize, n_cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DenseMatrix::zeros(n_rows, n_cols);
        for j in 0..n_cols {
            for i in 0..n_rows {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Column vector from a slice.
    pub fn column_vector(values: &[f64]) -> Self {
        DenseMatrix {
            n_rows: values.len(),
            n_cols: 1,
            values: values.to_vec(),
        }
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.n_rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[j * self.n_rows + i] = v;
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.values[j * self.n_rows..(j + 1) * self.n_rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.values[j * self.n_rows..(j + 1) * self.n_rows]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows == 0 || self.n_cols == 0
    }

    /// Matrix product `self * other`.
    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(
            self.n_cols, other.n_rows,
            "matmul shape ({}x{})*({}x{})",
            self.n_rows, self.n_cols, other.n_rows, other.n_cols
        );
        let mut out = DenseMatrix::zeros(self.n_rows, other.n_cols);
        for j in 0..other.n_cols {
            let bcol = other.col(j);
            let ocol = out.col_mut(j);
            for (k, &b) in bcol.iter().enumerate() {
                if b == 0.0 {
                    continue;
                }
                let acol = &self.values[k * self.n_rows..(k + 1) * self.n_rows];
                for (o, &a) in ocol.iter_mut().zip(acol) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// Product with own transpose on the left: `self' * other`.
    pub fn tr_matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(
            self.n_rows, other.n_rows,
            "tr_matmul shape ({}x{})'*({}x{})",
            self.n_rows, self.n_cols, other.n_rows, other.n_cols
        );
        let mut out = DenseMatrix::zeros(self.n_cols, other.n_cols);
        for j in 0..other.n_cols {
            let bcol = other.col(j);
            for i in 0..self.n_cols {
                let acol = self.col(i);
                let mut s = 0.0;
                for (&a, &b) in acol.iter().zip(bcol) {
                    s += a * b;
                }
                out.set(i, j, s);
            }
        }
        out
    }

    /// Product with transposed right factor: `self * other'`.
    pub fn matmul_transpose(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(
            self.n_cols, other.n_cols,
            "matmul_transpose shape ({}x{})*({}x{})'",
            self.n_rows, self.n_cols, other.n_rows, other.n_cols
        );
        let mut out = DenseMatrix::zeros(self.n_rows, other.n_rows);
        for k in 0..self.n_cols {
            let acol = self.col(k);
            for j in 0..other.n_rows {
                let b = other.get(j, k);
                if b == 0.0 {
                    continue;
                }
                let ocol = out.col_mut(j);
                for (o, &a) in ocol.iter_mut().zip(acol) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// Product with a sparse matrix on the right: `self * sp`.
    pub fn mul_sparse(&self, sp: &SparseMatrix) -> DenseMatrix {
        assert_eq!(self.n_cols, sp.n_rows(), "dense*sparse shape");
        let mut out = DenseMatrix::zeros(self.n_rows, sp.n_cols());
        for k in 0..sp.n_rows() {
            let (cols, vals) = sp.row(k);
            let acol = self.col(k).to_vec();
            for (&j, &v) in cols.iter().zip(vals) {
                let ocol = out.col_mut(j);
                for (o, &a) in ocol.iter_mut().zip(&acol) {
                    *o += v * a;
                }
            }
        }
        out
    }

    /// Product with a transposed sparse matrix on the right: `self * sp'`.
    pub fn mul_sparse_transpose(&self, sp: &SparseMatrix) -> DenseMatrix {
        assert_eq!(self.n_cols, sp.n_cols(), "dense*sparse' shape");
        let mut out = DenseMatrix::zeros(self.n_rows, sp.n_rows());
        for k in 0..sp.n_rows() {
            let (cols, vals) = sp.row(k);
            let ocol = out.col_mut(k);
            for (&j, &v) in cols.iter().zip(vals) {
                let acol = &self.values[j * self.n_rows..(j + 1) * self.n_rows];
                for (o, &a) in ocol.iter_mut().zip(acol) {
                    *o += v * a;
                }
            }
        }
        out
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &DenseMatrix) {
        assert_eq!(self.n_rows, other.n_rows);
        assert_eq!(self.n_cols, other.n_cols);
        for (s, &o) in self.values.iter_mut().zip(&other.values) {
            *s += alpha * o;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for v in &mut self.values {
            *v *= alpha;
        }
    }

    pub fn scaled(&self, alpha: f64) -> DenseMatrix {
        let mut out = self.clone();
        out.scale(alpha);
        out
    }

    pub fn sub(&self, other: &DenseMatrix) -> DenseMatrix {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n_cols, self.n_rows);
        for j in 0..self.n_cols {
            for i in 0..self.n_rows {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &DenseMatrix) -> f64 {
        assert_eq!(self.n_rows, other.n_rows);
        assert_eq!(self.n_cols, other.n_cols);
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a * b)
            .sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.dot(self).max(0.0).sqrt()
    }

    /// Sum of all entries.
    pub fn entry_sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Entrywise (Hadamard) product summed over all entries.
    pub fn hadamard_sum(&self, other: &DenseMatrix) -> f64 {
        self.dot(other)
    }

    /// Horizontal concatenation `[a | b | ...]`; all blocks share `n_rows`.
    pub fn hstack(blocks: &[&DenseMatrix]) -> DenseMatrix {
        let n_rows = blocks.first().map_or(0, |b| b.n_rows);
        let n_cols = blocks.iter().map(|b| b.n_cols).sum();
        let mut values = Vec::with_capacity(n_rows * n_cols);
        for b in blocks {
            assert_eq!(b.n_rows, n_rows, "hstack row mismatch");
            values.extend_from_slice(&b.values);
        }
        DenseMatrix {
            n_rows,
            n_cols,
            values,
        }
    }

    /// Copies the listed columns into a new matrix, in the given order.
    pub fn select_columns(&self, indices: &[usize]) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n_rows, indices.len());
        for (dst, &src) in indices.iter().enumerate() {
            out.col_mut(dst).copy_from_slice(self.col(src));
        }
        out
    }

    /// Writes `block` back into the listed columns.
    pub fn set_columns(&mut self, indices: &[usize], block: &DenseMatrix) {
        assert_eq!(indices.len(), block.n_cols);
        assert_eq!(self.n_rows, block.n_rows);
        for (src, &dst) in indices.iter().enumerate() {
            self.col_mut(dst).copy_from_slice(block.col(src));
        }
    }

    /// Leading `p` columns as a new matrix.
    pub fn leading_columns(&self, p: usize) -> DenseMatrix {
        assert!(p <= self.n_cols);
        DenseMatrix {
            n_rows: self.n_rows,
            n_cols: p,
            values: self.values[..p * self.n_rows].to_vec(),
        }
    }

    /// Returns a copy with every column scaled to unit 2-norm.
    /// Zero columns are left untouched.
    pub fn with_unit_columns(&self) -> DenseMatrix {
        let mut out = self.clone();
        for j in 0..out.n_cols {
            let norm = out.col(j).iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for v in out.col_mut(j) {
                    *v /= norm;
                }
            }
        }
        out
    }

    pub fn to_nalgebra(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_column_slice(self.n_rows, self.n_cols, &self.values)
    }

    pub fn from_nalgebra(m: &nalgebra::DMatrix<f64>) -> DenseMatrix {
        DenseMatrix {
            n_rows: m.nrows(),
            n_cols: m.ncols(),
            values: m.as_slice().to_vec(),
        }
    }

    /// Writes the matrix as CSV: a `rows,cols` header line, then one line per
    /// row. Values are formatted with shortest round-trip notation, so a
    /// read-back reproduces the exact bits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file =
            std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut w = std::io::BufWriter::new(file);
        let emit = |w: &mut dyn Write| -> std::io::Result<()> {
            writeln!(w, "{},{}", self.n_rows, self.n_cols)?;
            for i in 0..self.n_rows {
                let mut line = String::new();
                for j in 0..self.n_cols {
                    if j > 0 {
                        line.push(',');
                    }
                    line.push_str(&format!("{}", self.get(i, j)));
                }
                writeln!(w, "{}", line)?;
            }
            Ok(())
        };
        emit(&mut w).map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// Reads a matrix written by [`DenseMatrix::write_csv`].
    pub fn read_csv(path: &Path) -> Result<DenseMatrix> {
        let name = path.display().to_string();
        let file = std::fs::File::open(path).map_err(|e| Error::io(&name, e))?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(&name, "empty file"))?
            .map_err(|e| Error::io(&name, e))?;
        let mut dims = header.trim().split(',');
        let n_rows: usize = dims
            .next()
            .and_then(|t| t.trim().parse().ok())
            .ok_or_else(|| Error::parse(&name, "bad header, expected rows,cols"))?;
        let n_cols: usize = dims
            .next()
            .and_then(|t| t.trim().parse().ok())
            .ok_or_else(|| Error::parse(&name, "bad header, expected rows,cols"))?;
        let mut m = DenseMatrix::zeros(n_rows, n_cols);
        for i in 0..n_rows {
            let line = lines
                .next()
                .ok_or_else(|| Error::parse(&name, format!("missing row {}", i)))?
                .map_err(|e| Error::io(&name, e))?;
            let mut count = 0;
            for (j, tok) in line.trim().split(',').enumerate() {
                if tok.is_empty() && n_cols == 0 {
                    continue;
                }
                if j >= n_cols {
                    return Err(Error::parse(&name, format!("row {} has extra columns", i)));
                }
                let v: f64 = tok
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(&name, format!("bad number '{}' in row {}", tok, i)))?;
                m.set(i, j, v);
                count += 1;
            }
            if count != n_cols {
                return Err(Error::parse(
                    &name,
                    format!("row {} has {} of {} columns", i, count, n_cols),
                ));
            }
        }
        Ok(m)
    }
}

/// Result of [`orthonormalize`]: the orthonormal basis `q` and the
/// coefficient matrix `r = q' * m`, so that `m = q * r` when no columns were
/// dropped.
pub struct Orthonormalized {
    pub q: DenseMatrix,
    pub r: DenseMatrix,
    /// Number of dependent columns dropped.
    pub dropped: usize,
}

/// Orthonormalizes the columns of `m` by modified Gram-Schmidt with one
/// reorthogonalization pass, preserving column order. Columns whose remaining
/// component falls below `1e-12 * ||m||_F` are treated as dependent and
/// dropped; the returned width reports how many survive.
pub fn orthonormalize(m: &DenseMatrix) -> Orthonormalized {
    let tol = 1e-12 * m.frobenius_norm();
    let n = m.n_rows();
    let mut kept: Vec<Vec<f64>> = Vec::with_capacity(m.n_cols());
    let mut dropped = 0;
    for j in 0..m.n_cols() {
        let mut v = m.col(j).to_vec();
        // Two MGS passes; the second removes the rounding left by the first.
        for _ in 0..2 {
            for q in &kept {
                let c: f64 = q.iter().zip(&v).map(|(&a, &b)| a * b).sum();
                for (vi, &qi) in v.iter_mut().zip(q) {
                    *vi -= c * qi;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= tol {
            dropped += 1;
            continue;
        }
        for x in &mut v {
            *x /= norm;
        }
        kept.push(v);
    }
    let mut q = DenseMatrix::zeros(n, kept.len());
    for (j, col) in kept.iter().enumerate() {
        q.col_mut(j).copy_from_slice(col);
    }
    let r = q.tr_matmul(m);
    Orthonormalized { q, r, dropped }
}
