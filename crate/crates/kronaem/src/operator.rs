//! The multi-term operator `A(X) = sum_i K_i X G_i'` and the quadratic
//! objective it induces.

use crate::lowrank::{frobenius_diff_lowrank, lowrank_inner};
use crate::{DenseMatrix, Error, LowRankFactors, Result, SparseMatrix};

/// Kronecker-structured operator held as the two factor lists. Index 0 is
/// the mean term; `K_0` and `G_0` must be symmetric positive definite for
/// the mean-based preconditioners to exist.
#[derive(Debug, Clone)]
pub struct KroneckerOperator {
    k: Vec<SparseMatrix>,
    g: Vec<SparseMatrix>,
}

impl KroneckerOperator {
    pub fn new(k: Vec<SparseMatrix>, g: Vec<SparseMatrix>) -> Result<Self> {
        if k.is_empty() || k.len() != g.len() {
            return Err(Error::DimensionMismatch(format!(
                "operator needs equal, nonzero term counts (got {} and {})",
                k.len(),
                g.len()
            )));
        }
        let n1 = k[0].n_rows();
        let n2 = g[0].n_rows();
        for (i, m) in k.iter().enumerate() {
            if m.n_rows() != n1 || m.n_cols() != n1 {
                return Err(Error::DimensionMismatch(format!(
                    "K_{} is {}x{}, expected {}x{}",
                    i,
                    m.n_rows(),
                    m.n_cols(),
                    n1,
                    n1
                )));
            }
        }
        for (i, m) in g.iter().enumerate() {
            if m.n_rows() != n2 || m.n_cols() != n2 {
                return Err(Error::DimensionMismatch(format!(
                    "G_{} is {}x{}, expected {}x{}",
                    i,
                    m.n_rows(),
                    m.n_cols(),
                    n2,
                    n2
                )));
            }
        }
        Ok(KroneckerOperator { k, g })
    }

    /// Row dimension of the matricized unknown.
    pub fn n1(&self) -> usize {
        self.k[0].n_rows()
    }

    /// Column dimension of the matricized unknown.
    pub fn n2(&self) -> usize {
        self.g[0].n_rows()
    }

    /// Number of terms, `m + 1`.
    pub fn n_terms(&self) -> usize {
        self.k.len()
    }

    pub fn k(&self, i: usize) -> &SparseMatrix {
        &self.k[i]
    }

    pub fn g(&self, i: usize) -> &SparseMatrix {
        &self.g[i]
    }

    pub fn k_terms(&self) -> &[SparseMatrix] {
        &self.k
    }

    pub fn g_terms(&self) -> &[SparseMatrix] {
        &self.g
    }

    /// Applies the operator to a dense matrix: `sum_i K_i X G_i'`.
    pub fn apply(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.n_rows() != self.n1() || x.n_cols() != self.n2() {
            return Err(Error::DimensionMismatch(format!(
                "operator on {}x{} applied to {}x{}",
                self.n1(),
                self.n2(),
                x.n_rows(),
                x.n_cols()
            )));
        }
        let mut out = DenseMatrix::zeros(self.n1(), self.n2());
        for (k, g) in self.k.iter().zip(&self.g) {
            let kx = k.mul_dense(x);
            out.axpy(1.0, &kx.mul_sparse_transpose(g));
        }
        Ok(out)
    }

    /// Applies the operator to a factored matrix, returning the stacked
    /// factors `([K_0 V | ... | K_m V], [G_0 W | ... | G_m W])` of rank
    /// `(m + 1) p`. The product of the result equals `apply(V W')`.
    pub fn apply_lowrank(&self, f: &LowRankFactors) -> Result<LowRankFactors> {
        if f.n1() != self.n1() || f.n2() != self.n2() {
            return Err(Error::DimensionMismatch(format!(
                "operator on {}x{} applied to {}x{} factors",
                self.n1(),
                self.n2(),
                f.n1(),
                f.n2()
            )));
        }
        if f.rank() == 0 {
            return Ok(LowRankFactors::zero(self.n1(), self.n2()));
        }
        let kv: Vec<DenseMatrix> = self.k.iter().map(|k| k.mul_dense(f.v())).collect();
        let gw: Vec<DenseMatrix> = self.g.iter().map(|g| g.mul_dense(f.w())).collect();
        let v = DenseMatrix::hstack(&kv.iter().collect::<Vec<_>>());
        let w = DenseMatrix::hstack(&gw.iter().collect::<Vec<_>>());
        LowRankFactors::new(v, w)
    }

    /// `||B - A(V W')||_F` computed entirely in factored form.
    pub fn residual_norm(&self, f: &LowRankFactors, b: &LowRankFactors) -> Result<f64> {
        let af = self.apply_lowrank(f)?;
        frobenius_diff_lowrank(b, &af)
    }

    /// Weighted inner product `<A(X), Y>`; symmetric in its arguments when
    /// the operator is symmetric.
    pub fn a_inner(&self, x: &DenseMatrix, y: &DenseMatrix) -> Result<f64> {
        let ax = self.apply(x)?;
        if y.n_rows() != self.n1() || y.n_cols() != self.n2() {
            return Err(Error::DimensionMismatch(
                "a_inner second argument shape".into(),
            ));
        }
        Ok(ax.dot(y))
    }

    /// `<A(VW'), VW'>` without forming any `n1 x n2` matrix.
    pub fn a_inner_lowrank(&self, f: &LowRankFactors) -> Result<f64> {
        let af = self.apply_lowrank(f)?;
        Ok(lowrank_inner(&af, f))
    }

    /// Right-hand side projection `B * W` for factored `B`.
    pub fn project_rhs_left(b: &LowRankFactors, w: &DenseMatrix) -> DenseMatrix {
        // B W = Bv (Bw' W)
        b.v().matmul(&b.w().tr_matmul(w))
    }

    /// Right-hand side projection `B' * V` for factored `B`.
    pub fn project_rhs_right(b: &LowRankFactors, v: &DenseMatrix) -> DenseMatrix {
        b.w().matmul(&b.v().tr_matmul(v))
    }

    /// `A(VW') * Y` in factored arithmetic.
    pub fn apply_times(&self, f: &LowRankFactors, y: &DenseMatrix) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n1(), y.n_cols());
        if f.rank() == 0 {
            return out;
        }
        for (k, g) in self.k.iter().zip(&self.g) {
            // K V (G W)' Y
            let gw = g.mul_dense(f.w());
            let coeff = gw.tr_matmul(y);
            out.axpy(1.0, &k.mul_dense(&f.v().matmul(&coeff)));
        }
        out
    }

    /// `A(VW')' * Y` in factored arithmetic.
    pub fn apply_transpose_times(&self, f: &LowRankFactors, y: &DenseMatrix) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n2(), y.n_cols());
        if f.rank() == 0 {
            return out;
        }
        for (k, g) in self.k.iter().zip(&self.g) {
            let kv = k.mul_dense(f.v());
            let coeff = kv.tr_matmul(y);
            out.axpy(1.0, &g.mul_dense(&f.w().matmul(&coeff)));
        }
        out
    }

    /// Variable part of the quadratic objective and its gradients at the
    /// factored iterate: `J = 1/2 <A(U_p), U_p> - <B, U_p>` with
    /// `grad_V = (A(U_p) - B) W` and `grad_W = (A(U_p) - B)' V`. Everything
    /// stays in factored form.
    pub fn objective_and_gradients(
        &self,
        b: &LowRankFactors,
        f: &LowRankFactors,
    ) -> Result<(f64, DenseMatrix, DenseMatrix)> {
        if f.n1() != self.n1() || f.n2() != self.n2() {
            return Err(Error::DimensionMismatch(
                "objective iterate shape does not match operator".into(),
            ));
        }
        if b.n1() != self.n1() || b.n2() != self.n2() {
            return Err(Error::DimensionMismatch(
                "objective right-hand side shape does not match operator".into(),
            ));
        }
        let j = 0.5 * self.a_inner_lowrank(f)? - lowrank_inner(b, f);
        if f.rank() == 0 {
            return Ok((
                j,
                DenseMatrix::zeros(self.n1(), 0),
                DenseMatrix::zeros(self.n2(), 0),
            ));
        }
        let mut grad_v = self.apply_times(f, f.w());
        grad_v.axpy(-1.0, &Self::project_rhs_left(b, f.w()));
        let mut grad_w = self.apply_transpose_times(f, f.v());
        grad_w.axpy(-1.0, &Self::project_rhs_right(b, f.v()));
        Ok((j, grad_v, grad_w))
    }

    /// Builds the explicit Kronecker-sum matrix `sum_i G_i (x) K_i` densely.
    /// Desk-scale oracle; `n1 * n2` must stay small.
    pub fn to_dense_kronecker(&self) -> DenseMatrix {
        let n1 = self.n1();
        let n2 = self.n2();
        let n = n1 * n2;
        let mut a = DenseMatrix::zeros(n, n);
        for (k, g) in self.k.iter().zip(&self.g) {
            let kd = k.to_dense();
            let gd = g.to_dense();
            for bj in 0..n2 {
                for bi in 0..n2 {
                    let gv = gd.get(bi, bj);
                    if gv == 0.0 {
                        continue;
                    }
                    for j in 0..n1 {
                        for i in 0..n1 {
                            let kv = kd.get(i, j);
                            if kv != 0.0 {
                                let r = bi * n1 + i;
                                let c = bj * n1 + j;
                                a.set(r, c, a.get(r, c) + gv * kv);
                            }
                        }
                    }
                }
            }
        }
        a
    }
}

/// `vec(X)`: stacks columns into a single vector.
pub fn vectorize(x: &DenseMatrix) -> Vec<f64> {
    x.values().to_vec()
}

/// Inverse of [`vectorize`].
pub fn unvectorize(v: &[f64], n1: usize, n2: usize) -> DenseMatrix {
    DenseMatrix::from_column_major(n1, n2, v.to_vec()).expect("unvectorize shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn random_sparse(n: usize, seed: u64) -> SparseMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..n {
                t.push((i, j, rng.gen_range(-1.0..1.0)));
            }
        }
        SparseMatrix::from_triplets(n, n, &t).unwrap()
    }

    fn random_dense(r: usize, c: usize, seed: u64) -> DenseMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn two_term_operator(n1: usize, n2: usize, seed: u64) -> KroneckerOperator {
        KroneckerOperator::new(
            vec![random_sparse(n1, seed), random_sparse(n1, seed + 1)],
            vec![random_sparse(n2, seed + 2), random_sparse(n2, seed + 3)],
        )
        .unwrap()
    }

    #[test]
    fn identity_operator_is_identity() {
        let op = KroneckerOperator::new(
            vec![SparseMatrix::identity(4)],
            vec![SparseMatrix::identity(3)],
        )
        .unwrap();
        let x = random_dense(4, 3, 5);
        let y = op.apply(&x).unwrap();
        assert!(y.sub(&x).frobenius_norm() < 1e-15);
    }

    #[test]
    fn apply_matches_dense_kronecker_action() {
        let op = two_term_operator(3, 3, 10);
        let x = random_dense(3, 3, 20);
        let y = op.apply(&x).unwrap();

        let a = op.to_dense_kronecker();
        let xv = vectorize(&x);
        let yv = a.matmul(&DenseMatrix::column_vector(&xv));
        let y_oracle = unvectorize(yv.col(0), 3, 3);
        assert!(
            y.sub(&y_oracle).frobenius_norm() < 1e-12 * y_oracle.frobenius_norm(),
            "matricized apply must equal the vectorized Kronecker action"
        );
    }

    #[test]
    fn apply_zero_is_zero() {
        let op = two_term_operator(4, 5, 30);
        let y = op.apply(&DenseMatrix::zeros(4, 5)).unwrap();
        assert_eq!(y.frobenius_norm(), 0.0);
    }

    #[test]
    fn apply_dimension_mismatch_errors() {
        let op = two_term_operator(4, 5, 31);
        assert!(op.apply(&DenseMatrix::zeros(5, 4)).is_err());
    }

    #[test]
    fn apply_lowrank_matches_dense_apply() {
        let op = two_term_operator(6, 5, 40);
        let f = LowRankFactors::new(random_dense(6, 2, 41), random_dense(5, 2, 42)).unwrap();
        let af = op.apply_lowrank(&f).unwrap();
        assert_eq!(af.rank(), 2 * 2);
        let dense = op.apply(&f.to_dense()).unwrap();
        let rel = af.to_dense().sub(&dense).frobenius_norm() / dense.frobenius_norm();
        assert!(rel < 1e-12);
    }

    #[test]
    fn apply_lowrank_identity_and_rank_zero() {
        let op = KroneckerOperator::new(
            vec![SparseMatrix::identity(4)],
            vec![SparseMatrix::identity(3)],
        )
        .unwrap();
        let f = LowRankFactors::new(random_dense(4, 2, 50), random_dense(3, 2, 51)).unwrap();
        let af = op.apply_lowrank(&f).unwrap();
        assert!(af.v().sub(f.v()).frobenius_norm() < 1e-15);
        assert!(af.w().sub(f.w()).frobenius_norm() < 1e-15);

        let z = LowRankFactors::zero(4, 3);
        assert_eq!(op.apply_lowrank(&z).unwrap().rank(), 0);
    }

    #[test]
    fn residual_norm_matches_dense() {
        let op = two_term_operator(7, 6, 60);
        let f = LowRankFactors::new(random_dense(7, 2, 61), random_dense(6, 2, 62)).unwrap();
        let b = LowRankFactors::new(random_dense(7, 1, 63), random_dense(6, 1, 64)).unwrap();
        let r = op.residual_norm(&f, &b).unwrap();
        let dense = b.to_dense().sub(&op.apply(&f.to_dense()).unwrap());
        assert_relative_eq!(r, dense.frobenius_norm(), max_relative = 1e-10);
    }

    #[test]
    fn residual_of_zero_factors_is_rhs_norm() {
        let op = two_term_operator(5, 4, 70);
        let b = LowRankFactors::new(random_dense(5, 1, 71), random_dense(4, 1, 72)).unwrap();
        let r = op.residual_norm(&LowRankFactors::zero(5, 4), &b).unwrap();
        assert_relative_eq!(
            r,
            b.to_dense().frobenius_norm(),
            max_relative = 1e-12
        );
    }

    fn spd_operator(n1: usize, n2: usize, seed: u64) -> KroneckerOperator {
        // A = I (x) M1 + M2 (x) I with M1, M2 SPD gives an SPD Kronecker sum.
        let m1 = {
            let r = random_dense(n1, n1, seed);
            let mut t = Vec::new();
            let g = r.tr_matmul(&r);
            for i in 0..n1 {
                for j in 0..n1 {
                    let v = g.get(i, j) + if i == j { n1 as f64 } else { 0.0 };
                    t.push((i, j, v));
                }
            }
            SparseMatrix::from_triplets(n1, n1, &t).unwrap()
        };
        let m2 = {
            let r = random_dense(n2, n2, seed + 1);
            let mut t = Vec::new();
            let g = r.tr_matmul(&r);
            for i in 0..n2 {
                for j in 0..n2 {
                    let v = g.get(i, j) + if i == j { n2 as f64 } else { 0.0 };
                    t.push((i, j, v));
                }
            }
            SparseMatrix::from_triplets(n2, n2, &t).unwrap()
        };
        KroneckerOperator::new(
            vec![m1, SparseMatrix::identity(n1)],
            vec![SparseMatrix::identity(n2), m2],
        )
        .unwrap()
    }

    #[test]
    fn a_inner_is_positive_and_symmetric() {
        let op = spd_operator(5, 4, 80);
        for s in 0..50 {
            let x = random_dense(5, 4, 100 + s);
            let y = random_dense(5, 4, 200 + s);
            let xx = op.a_inner(&x, &x).unwrap();
            assert!(xx > 0.0, "positive definiteness violated");
            let xy = op.a_inner(&x, &y).unwrap();
            let yx = op.a_inner(&y, &x).unwrap();
            assert_relative_eq!(xy, yx, max_relative = 1e-12);
        }
    }

    #[test]
    fn a_inner_identity_is_frobenius() {
        let op = KroneckerOperator::new(
            vec![SparseMatrix::identity(4)],
            vec![SparseMatrix::identity(3)],
        )
        .unwrap();
        let x = random_dense(4, 3, 90);
        let y = random_dense(4, 3, 91);
        assert_relative_eq!(op.a_inner(&x, &y).unwrap(), x.dot(&y), max_relative = 1e-14);
    }

    #[test]
    fn gradients_vanish_at_exact_solution() {
        // With A(U) = B exactly, both gradients are exactly zero regardless of
        // the factor split.
        let op = spd_operator(4, 3, 95);
        let u = random_dense(4, 3, 96);
        let b_dense = op.apply(&u).unwrap();
        // full-rank factorization of U via SVD
        let svd = u.to_nalgebra().svd(true, true);
        let uu = svd.u.unwrap();
        let vt = svd.v_t.unwrap();
        let mut v = DenseMatrix::from_nalgebra(&uu);
        for (j, s) in svd.singular_values.iter().enumerate() {
            for x in v.col_mut(j) {
                *x *= s;
            }
        }
        let w = DenseMatrix::from_nalgebra(&vt.transpose());
        let f = LowRankFactors::new(v, w).unwrap();
        // B as a full-rank factorization too
        let b = {
            let svd = b_dense.to_nalgebra().svd(true, true);
            let mut bv = DenseMatrix::from_nalgebra(&svd.u.as_ref().unwrap().clone_owned());
            for (j, s) in svd.singular_values.iter().enumerate() {
                for x in bv.col_mut(j) {
                    *x *= s;
                }
            }
            let bw = DenseMatrix::from_nalgebra(&svd.v_t.as_ref().unwrap().transpose());
            LowRankFactors::new(bv, bw).unwrap()
        };
        let (_, gv, gw) = op.objective_and_gradients(&b, &f).unwrap();
        let scale = b.to_dense().frobenius_norm();
        assert!(gv.frobenius_norm() < 1e-8 * scale);
        assert!(gw.frobenius_norm() < 1e-8 * scale);
    }

    #[test]
    fn objective_of_rank_zero_is_zero() {
        let op = spd_operator(4, 3, 97);
        let b = LowRankFactors::new(random_dense(4, 1, 98), random_dense(3, 1, 99)).unwrap();
        let (j, gv, gw) = op
            .objective_and_gradients(&b, &LowRankFactors::zero(4, 3))
            .unwrap();
        assert_eq!(j, 0.0);
        assert_eq!(gv.n_cols(), 0);
        assert_eq!(gw.n_cols(), 0);
    }

    /// Central finite differences of J along a random direction must match
    /// the analytic gradients.
    #[test]
    fn gradients_pass_central_difference_check() {
        for trial in 0..5 {
            let op = spd_operator(5, 4, 300 + trial);
            let b =
                LowRankFactors::new(random_dense(5, 2, 310 + trial), random_dense(4, 2, 320 + trial))
                    .unwrap();
            let f =
                LowRankFactors::new(random_dense(5, 3, 330 + trial), random_dense(4, 3, 340 + trial))
                    .unwrap();
            let (_, gv, gw) = op.objective_and_gradients(&b, &f).unwrap();
            let h = 1e-5;
            for dir in 0..10 {
                let dv = random_dense(5, 3, 400 + 10 * trial + dir);
                let dw = random_dense(4, 3, 500 + 10 * trial + dir);
                let mut vp = f.v().clone();
                vp.axpy(h, &dv);
                let mut wp = f.w().clone();
                wp.axpy(h, &dw);
                let mut vm = f.v().clone();
                vm.axpy(-h, &dv);
                let mut wm = f.w().clone();
                wm.axpy(-h, &dw);
                let jp = op
                    .objective_and_gradients(&b, &LowRankFactors::new(vp, wp).unwrap())
                    .unwrap()
                    .0;
                let jm = op
                    .objective_and_gradients(&b, &LowRankFactors::new(vm, wm).unwrap())
                    .unwrap()
                    .0;
                let fd = (jp - jm) / (2.0 * h);
                let analytic = gv.dot(&dv) + gw.dot(&dw);
                assert_relative_eq!(fd, analytic, max_relative = 1e-5);
            }
        }
    }
}
