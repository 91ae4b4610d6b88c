//! Low-rank factor pairs and norms that never form the full product.
//!
//! A pair `(V, W)` represents `V * W'` without materializing it. The key
//! device is the Hadamard trick: `||V W'||_F^2` equals the entry sum of
//! `(V'V) .* (W'W)`, which costs `O((n1 + n2) p^2)` instead of `O(n1 n2 p)`.

use crate::dense::orthonormalize;
use crate::{DenseMatrix, Error, Result};
use std::path::Path;

/// A matrix `V * W'` held in factored form. Rank zero (no columns) denotes
/// the zero matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFactors {
    v: DenseMatrix,
    w: DenseMatrix,
}

impl LowRankFactors {
    pub fn new(v: DenseMatrix, w: DenseMatrix) -> Result<Self> {
        if v.n_cols() != w.n_cols() {
            return Err(Error::DimensionMismatch(format!(
                "factor widths differ: V has {} columns, W has {}",
                v.n_cols(),
                w.n_cols()
            )));
        }
        Ok(LowRankFactors { v, w })
    }

    /// The rank-zero (empty) factorization of an `n1 x n2` zero matrix.
    pub fn zero(n1: usize, n2: usize) -> Self {
        LowRankFactors {
            v: DenseMatrix::zeros(n1, 0),
            w: DenseMatrix::zeros(n2, 0),
        }
    }

    /// Rank-one pair from two vectors.
    pub fn rank_one(v: &[f64], w: &[f64]) -> Self {
        LowRankFactors {
            v: DenseMatrix::column_vector(v),
            w: DenseMatrix::column_vector(w),
        }
    }

    #[inline]
    pub fn v(&self) -> &DenseMatrix {
        &self.v
    }

    #[inline]
    pub fn w(&self) -> &DenseMatrix {
        &self.w
    }

    pub fn n1(&self) -> usize {
        self.v.n_rows()
    }

    pub fn n2(&self) -> usize {
        self.w.n_rows()
    }

    pub fn rank(&self) -> usize {
        self.v.n_cols()
    }

    /// Appends a rank-one pair.
    pub fn push_pair(&mut self, v: &[f64], w: &[f64]) {
        assert_eq!(v.len(), self.n1());
        assert_eq!(w.len(), self.n2());
        self.v = DenseMatrix::hstack(&[&self.v, &DenseMatrix::column_vector(v)]);
        self.w = DenseMatrix::hstack(&[&self.w, &DenseMatrix::column_vector(w)]);
    }

    /// Concatenates the factors of `other` (sum of the represented matrices).
    pub fn stack(&self, other: &LowRankFactors) -> Result<LowRankFactors> {
        if self.n1() != other.n1() || self.n2() != other.n2() {
            return Err(Error::DimensionMismatch(format!(
                "stacking {}x{} with {}x{} factors",
                self.n1(),
                self.n2(),
                other.n1(),
                other.n2()
            )));
        }
        Ok(LowRankFactors {
            v: DenseMatrix::hstack(&[&self.v, &other.v]),
            w: DenseMatrix::hstack(&[&self.w, &other.w]),
        })
    }

    /// Forms the product `V * W'` densely. Intended for desk-scale
    /// diagnostics and tests only.
    pub fn to_dense(&self) -> DenseMatrix {
        if self.rank() == 0 {
            return DenseMatrix::zeros(self.n1(), self.n2());
        }
        self.v.matmul_transpose(&self.w)
    }

    pub fn write_csv(&self, v_path: &Path, w_path: &Path) -> Result<()> {
        self.v.write_csv(v_path)?;
        self.w.write_csv(w_path)
    }

    pub fn read_csv(v_path: &Path, w_path: &Path) -> Result<LowRankFactors> {
        let v = DenseMatrix::read_csv(v_path)?;
        let w = DenseMatrix::read_csv(w_path)?;
        LowRankFactors::new(v, w)
    }
}

/// Frobenius inner product `<V1 W1', V2 W2'>` computed as the entry sum of
/// `(V1'V2) .* (W1'W2)`.
pub fn lowrank_inner(f1: &LowRankFactors, f2: &LowRankFactors) -> f64 {
    if f1.rank() == 0 || f2.rank() == 0 {
        return 0.0;
    }
    let vg = f1.v().tr_matmul(f2.v());
    let wg = f1.w().tr_matmul(f2.w());
    vg.hadamard_sum(&wg)
}

/// `||V W'||_F` via the Hadamard trick; the product is never formed.
pub fn frobenius_norm_lowrank(f: &LowRankFactors) -> f64 {
    lowrank_inner(f, f).max(0.0).sqrt()
}

/// `||V1 W1' - V2 W2'||_F` via the stacked factors `[V1 | -V2], [W1 | W2]`.
pub fn frobenius_diff_lowrank(f1: &LowRankFactors, f2: &LowRankFactors) -> Result<f64> {
    if f1.n1() != f2.n1() || f1.n2() != f2.n2() {
        return Err(Error::DimensionMismatch(format!(
            "difference of {}x{} and {}x{} factorizations",
            f1.n1(),
            f1.n2(),
            f2.n1(),
            f2.n2()
        )));
    }
    let diff = LowRankFactors {
        v: DenseMatrix::hstack(&[f1.v(), &f2.v().scaled(-1.0)]),
        w: DenseMatrix::hstack(&[f1.w(), f2.w()]),
    };
    Ok(frobenius_norm_lowrank(&diff))
}

/// Singular value decomposition of a factored matrix.
pub struct LowRankSvd {
    /// Left singular vectors, orthonormal columns.
    pub u: DenseMatrix,
    /// Singular values, descending.
    pub sigma: Vec<f64>,
    /// Right singular vectors, orthonormal columns.
    pub v: DenseMatrix,
}

/// SVD of `V W'` computed without forming the product: both factors are
/// orthonormalized, the small core `Rv * Rw'` is decomposed densely, and the
/// singular vectors are lifted back. Singular values below
/// `1e-14 * sigma_max` are truncated.
pub fn lowrank_svd(f: &LowRankFactors) -> LowRankSvd {
    if f.rank() == 0 {
        return LowRankSvd {
            u: DenseMatrix::zeros(f.n1(), 0),
            sigma: Vec::new(),
            v: DenseMatrix::zeros(f.n2(), 0),
        };
    }
    let ov = orthonormalize(f.v());
    let ow = orthonormalize(f.w());
    if ov.q.n_cols() == 0 || ow.q.n_cols() == 0 {
        return LowRankSvd {
            u: DenseMatrix::zeros(f.n1(), 0),
            sigma: Vec::new(),
            v: DenseMatrix::zeros(f.n2(), 0),
        };
    }
    let core = ov.r.matmul_transpose(&ow.r);
    let svd = core.to_nalgebra().svd(true, true);
    let u_core = svd.u.expect("svd requested u");
    let vt_core = svd.v_t.expect("svd requested v_t");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let keep = svd
        .singular_values
        .iter()
        .filter(|&&s| s > 1e-14 * sigma_max)
        .count();

    let u_small = DenseMatrix::from_nalgebra(&u_core.columns(0, keep).into_owned());
    let v_small = DenseMatrix::from_nalgebra(&vt_core.rows(0, keep).transpose());
    LowRankSvd {
        u: ov.q.matmul(&u_small),
        sigma: svd.singular_values.iter().take(keep).cloned().collect(),
        v: ow.q.matmul(&v_small),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_factors(n1: usize, n2: usize, p: usize, seed: u64) -> LowRankFactors {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let v = DenseMatrix::from_fn(n1, p, |_, _| rng.gen_range(-1.0..1.0));
        let w = DenseMatrix::from_fn(n2, p, |_, _| rng.gen_range(-1.0..1.0));
        LowRankFactors::new(v, w).unwrap()
    }

    #[test]
    fn unit_rank_one_has_unit_norm() {
        let mut v = vec![0.0; 5];
        let mut w = vec![0.0; 4];
        v[0] = 1.0;
        w[0] = 1.0;
        let f = LowRankFactors::rank_one(&v, &w);
        assert_relative_eq!(frobenius_norm_lowrank(&f), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_rank_norm_is_zero() {
        let f = LowRankFactors::zero(6, 3);
        assert_eq!(frobenius_norm_lowrank(&f), 0.0);
    }

    #[test]
    fn hadamard_norm_matches_dense() {
        let f = random_factors(20, 12, 3, 5);
        let dense = f.to_dense().frobenius_norm();
        let fast = frobenius_norm_lowrank(&f);
        assert_relative_eq!(fast, dense, max_relative = 1e-12);
    }

    #[test]
    fn diff_of_equal_factors_is_zero() {
        // The stacked-trick difference squares before it subtracts, so exact
        // cancellation bottoms out near sqrt(machine eps) relative.
        let f = random_factors(10, 8, 2, 9);
        let d = frobenius_diff_lowrank(&f, &f).unwrap();
        assert!(d < 1e-7 * frobenius_norm_lowrank(&f));
    }

    #[test]
    fn diff_against_zero_is_norm() {
        let f = random_factors(10, 8, 2, 11);
        let z = LowRankFactors::zero(10, 8);
        let d = frobenius_diff_lowrank(&f, &z).unwrap();
        assert_relative_eq!(d, frobenius_norm_lowrank(&f), max_relative = 1e-13);
    }

    #[test]
    fn diff_matches_dense_difference() {
        let f1 = random_factors(14, 9, 3, 21);
        let f2 = random_factors(14, 9, 2, 22);
        let d = frobenius_diff_lowrank(&f1, &f2).unwrap();
        let dd = f1.to_dense().sub(&f2.to_dense()).frobenius_norm();
        assert_relative_eq!(d, dd, max_relative = 1e-10);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let f1 = random_factors(5, 4, 2, 1);
        let f2 = random_factors(6, 4, 2, 2);
        assert!(frobenius_diff_lowrank(&f1, &f2).is_err());
    }

    #[test]
    fn lowrank_svd_matches_dense_svd() {
        let f = random_factors(15, 10, 4, 33);
        let ours = lowrank_svd(&f);
        let dense_svd = f.to_dense().to_nalgebra().svd(true, true);
        for (a, b) in ours.sigma.iter().zip(dense_svd.singular_values.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-10);
        }
        // reconstruct and compare
        let mut rec = DenseMatrix::zeros(15, 10);
        for k in 0..ours.sigma.len() {
            for j in 0..10 {
                for i in 0..15 {
                    let add = ours.sigma[k] * ours.u.get(i, k) * ours.v.get(j, k);
                    rec.set(i, j, rec.get(i, j) + add);
                }
            }
        }
        assert!(rec.sub(&f.to_dense()).frobenius_norm() < 1e-10 * f.to_dense().frobenius_norm());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn prop_hadamard_norm_equals_dense(n1 in 1usize..12, n2 in 1usize..12, p in 0usize..5, seed in 0u64..1000) {
            let f = random_factors(n1, n2, p, seed);
            let dense = f.to_dense().frobenius_norm();
            let fast = frobenius_norm_lowrank(&f);
            prop_assert!((fast - dense).abs() <= 1e-12 * (1.0 + dense));
        }

        #[test]
        fn prop_diff_symmetry(n1 in 1usize..10, n2 in 1usize..10, p in 1usize..4, seed in 0u64..500) {
            let f1 = random_factors(n1, n2, p, seed);
            let f2 = random_factors(n1, n2, p, seed + 777);
            let d12 = frobenius_diff_lowrank(&f1, &f2).unwrap();
            let d21 = frobenius_diff_lowrank(&f2, &f1).unwrap();
            prop_assert!((d12 - d21).abs() <= 1e-11 * (1.0 + d12));
        }
    }
}
