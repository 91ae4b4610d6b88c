//! Compressed sparse row matrices and Matrix Market file I/O.
//!
//! Symmetric matrices are stored with both triangles so that row-wise
//! products never branch on symmetry.

use crate::{DenseMatrix, Error, Result};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Sparse matrix in compressed row storage. Column indices are sorted and
/// unique within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from (row, col, value) triplets. Duplicates are summed; entries
    /// that cancel to exact zero are kept out of the pattern.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        for &(i, j, _) in triplets {
            if i >= n_rows || j >= n_cols {
                return Err(Error::DimensionMismatch(format!(
                    "triplet ({}, {}) outside {}x{}",
                    i, j, n_rows, n_cols
                )));
            }
        }
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        let mut iter = sorted.into_iter().peekable();
        while let Some((i, j, mut v)) = iter.next() {
            while let Some(&(i2, j2, v2)) = iter.peek() {
                if i2 == i && j2 == j {
                    v += v2;
                    iter.next();
                } else {
                    break;
                }
            }
            if v != 0.0 {
                row_ptr[i + 1] += 1;
                col_idx.push(j);
                values.push(v);
            }
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(SparseMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        let triplets: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        SparseMatrix::from_triplets(n, n, &triplets).unwrap()
    }

    /// Diagonal matrix from the given entries.
    pub fn diagonal(diag: &[f64]) -> Self {
        let triplets: Vec<_> = diag.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        SparseMatrix::from_triplets(diag.len(), diag.len(), &triplets).unwrap()
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                out.push((i, j, v));
            }
        }
        out
    }

    /// `y = self * x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols, "spmv shape");
        let mut y = vec![0.0; self.n_rows];
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let mut s = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                s += v * x[j];
            }
            y[i] = s;
        }
        y
    }

    /// `Y = self * X` with dense `X`.
    pub fn mul_dense(&self, x: &DenseMatrix) -> DenseMatrix {
        assert_eq!(x.n_rows(), self.n_cols, "spmm shape");
        let mut y = DenseMatrix::zeros(self.n_rows, x.n_cols());
        for c in 0..x.n_cols() {
            let xc = x.col(c);
            let yc = y.col_mut(c);
            for i in 0..self.n_rows {
                let (cols, vals) = self.row(i);
                let mut s = 0.0;
                for (&j, &v) in cols.iter().zip(vals) {
                    s += v * xc[j];
                }
                yc[i] = s;
            }
        }
        y
    }

    /// `Y = self' * X` with dense `X`.
    pub fn tr_mul_dense(&self, x: &DenseMatrix) -> DenseMatrix {
        assert_eq!(x.n_rows(), self.n_rows, "sp' * dense shape");
        let mut y = DenseMatrix::zeros(self.n_cols, x.n_cols());
        for c in 0..x.n_cols() {
            let xc = x.col(c).to_vec();
            let yc = y.col_mut(c);
            for i in 0..self.n_rows {
                let (cols, vals) = self.row(i);
                let xi = xc[i];
                if xi == 0.0 {
                    continue;
                }
                for (&j, &v) in cols.iter().zip(vals) {
                    yc[j] += v * xi;
                }
            }
        }
        y
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.n_rows != self.n_cols {
            return false;
        }
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if (v - self.get(j, i)).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// Largest |i - j| over stored entries.
    pub fn half_bandwidth(&self) -> usize {
        let mut bw = 0;
        for i in 0..self.n_rows {
            let (cols, _) = self.row(i);
            for &j in cols {
                bw = bw.max(i.abs_diff(j));
            }
        }
        bw
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                d.set(i, j, v);
            }
        }
        d
    }

    /// Writes the matrix in Matrix Market coordinate format (real, general).
    pub fn write_matrix_market(&self, path: &Path) -> Result<()> {
        let file =
            std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut w = std::io::BufWriter::new(file);
        let emit = |w: &mut dyn Write| -> std::io::Result<()> {
            writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
            writeln!(w, "{} {} {}", self.n_rows, self.n_cols, self.nnz())?;
            for i in 0..self.n_rows {
                let (cols, vals) = self.row(i);
                for (&j, &v) in cols.iter().zip(vals) {
                    writeln!(w, "{} {} {}", i + 1, j + 1, v)?;
                }
            }
            Ok(())
        };
        emit(&mut w).map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// Reads a Matrix Market coordinate file. `general` and `symmetric`
    /// qualifiers are accepted; symmetric files are expanded to full storage.
    pub fn read_matrix_market(path: &Path) -> Result<SparseMatrix> {
        let name = path.display().to_string();
        let file = std::fs::File::open(path).map_err(|e| Error::io(&name, e))?;
        let reader = BufReader::new(file);
        let mut lines = reader.lines();

        let header = lines
            .next()
            .ok_or_else(|| Error::parse(&name, "empty file"))?
            .map_err(|e| Error::io(&name, e))?;
        let tokens: Vec<String> = header.split_whitespace().map(|t| t.to_lowercase()).collect();
        if tokens.len() < 4 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
            return Err(Error::parse(&name, "not a MatrixMarket matrix file"));
        }
        if tokens[2] != "coordinate" {
            return Err(Error::parse(&name, "only coordinate format is supported"));
        }
        if tokens[3] != "real" && tokens[3] != "integer" {
            return Err(Error::parse(&name, "only real matrices are supported"));
        }
        let symmetric = match tokens.get(4).map(|s| s.as_str()) {
            None | Some("general") => false,
            Some("symmetric") => true,
            Some(other) => {
                return Err(Error::parse(
                    &name,
                    format!("unsupported qualifier '{}'", other),
                ))
            }
        };

        let mut size_line = None;
        for line in lines.by_ref() {
            let line = line.map_err(|e| Error::io(&name, e))?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('%') {
                continue;
            }
            size_line = Some(t.to_string());
            break;
        }
        let size_line = size_line.ok_or_else(|| Error::parse(&name, "missing size line"))?;
        let dims: Vec<usize> = size_line
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(&name, "bad size line"))?;
        if dims.len() != 3 {
            return Err(Error::parse(&name, "size line must be 'rows cols nnz'"));
        }
        let (n_rows, n_cols, nnz) = (dims[0], dims[1], dims[2]);

        let mut triplets = Vec::with_capacity(if symmetric { 2 * nnz } else { nnz });
        let mut seen = 0usize;
        for line in lines {
            let line = line.map_err(|e| Error::io(&name, e))?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('%') {
                continue;
            }
            let mut it = t.split_whitespace();
            let i: usize = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::parse(&name, format!("bad entry line '{}'", t)))?;
            let j: usize = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::parse(&name, format!("bad entry line '{}'", t)))?;
            let v: f64 = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::parse(&name, format!("bad entry line '{}'", t)))?;
            if i == 0 || j == 0 || i > n_rows || j > n_cols {
                return Err(Error::parse(
                    &name,
                    format!("index ({}, {}) outside declared size", i, j),
                ));
            }
            triplets.push((i - 1, j - 1, v));
            if symmetric && i != j {
                triplets.push((j - 1, i - 1, v));
            }
            seen += 1;
        }
        if seen != nnz {
            return Err(Error::parse(
                &name,
                format!("declared {} entries, found {}", nnz, seen),
            ));
        }
        SparseMatrix::from_triplets(n_rows, n_cols, &triplets)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SparseMatrix {
        SparseMatrix::from_triplets(
            3,
            3,
            &[
                (0, 0, 2.0),
                (0, 1, -1.0),
                (1, 0, -1.0),
                (1, 1, 2.0),
                (1, 2, -1.0),
                (2, 1, -1.0),
                (2, 2, 2.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn triplets_sum_duplicates_and_sort() {
        let m = SparseMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (0, 0, 2.0), (0, 1, 0.5)]).unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 1), 1.5);
        assert_eq!(m.get(0, 0), 2.0);
        let (cols, _) = m.row(0);
        assert!(cols.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn matvec_and_dense_products_agree() {
        let m = sample();
        let x = DenseMatrix::from_fn(3, 2, |i, j| (i + 2 * j) as f64);
        let y = m.mul_dense(&x);
        let yd = m.to_dense().matmul(&x);
        assert!(y.sub(&yd).frobenius_norm() < 1e-14);

        let yt = m.tr_mul_dense(&x);
        let ytd = m.to_dense().transpose().matmul(&x);
        assert!(yt.sub(&ytd).frobenius_norm() < 1e-14);
    }

    #[test]
    fn dense_times_sparse_agrees() {
        let m = sample();
        let x = DenseMatrix::from_fn(2, 3, |i, j| (1 + i + j * j) as f64);
        let a = x.mul_sparse(&m);
        let ad = x.matmul(&m.to_dense());
        assert!(a.sub(&ad).frobenius_norm() < 1e-14);

        let b = x.mul_sparse_transpose(&m);
        let bd = x.matmul(&m.to_dense().transpose());
        assert!(b.sub(&bd).frobenius_norm() < 1e-14);
    }

    #[test]
    fn symmetry_and_bandwidth() {
        let m = sample();
        assert!(m.is_symmetric(0.0));
        assert_eq!(m.half_bandwidth(), 1);
    }

    #[test]
    fn matrix_market_roundtrip_exact() {
        let m = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.mtx");
        m.write_matrix_market(&path).unwrap();
        let back = SparseMatrix::read_matrix_market(&path).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn matrix_market_symmetric_expands() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sym.mtx");
        std::fs::write(
            &path,
            "%%MatrixMarket matrix coordinate real symmetric\n3 3 4\n1 1 2\n2 1 -1\n2 2 2\n3 3 1\n",
        )
        .unwrap();
        let m = SparseMatrix::read_matrix_market(&path).unwrap();
        assert_eq!(m.get(0, 1), -1.0);
        assert_eq!(m.get(1, 0), -1.0);
        assert_eq!(m.nnz(), 5);
    }

    #[test]
    fn matrix_market_rejects_bad_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.mtx");
        std::fs::write(
            &path,
            "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n",
        )
        .unwrap();
        assert!(SparseMatrix::read_matrix_market(&path).is_err());
    }
}
