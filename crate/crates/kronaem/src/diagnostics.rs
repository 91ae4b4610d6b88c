//! Dense reference solutions and error metrics against them.
//!
//! Only usable at desk scale: the reference `U` is formed explicitly (its
//! entry count is capped), decomposed, and compared against factored
//! iterates in the energy norm, the Frobenius norm, and the relative
//! residual. The singular vectors of `U` also feed the angle matrices that
//! visualize how well a method's factors track the singular directions.

use crate::krylov::{pcg_solve, MatricizedSystem, MatrixTerm, PcgConfig, SpdFactor};
use crate::lowrank::frobenius_norm_lowrank;
use crate::operator::{unvectorize, vectorize};
use crate::sgfem::GalerkinProblem;
use crate::{DenseMatrix, Error, LowRankFactors, Result};

/// Default cap on `n1 * n2` for reference construction.
pub const DENSE_CAP_DEFAULT: usize = 200_000;

// Above this size the explicit Kronecker matrix is no longer formed and the
// reference solve switches to tightly-converged PCG (residual-verified).
const DIRECT_SOLVE_LIMIT: usize = 2000;

/// The ground-truth solution and its singular value decomposition.
pub struct ReferenceSolution {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    /// Left singular vectors, `n1 x min(n1, n2)`.
    pub v_star: DenseMatrix,
    /// Right singular vectors, `n2 x min(n1, n2)`.
    pub w_star: DenseMatrix,
}

/// Computes the reference solution with the default cap.
pub fn dense_reference(problem: &GalerkinProblem) -> Result<ReferenceSolution> {
    dense_reference_capped(problem, DENSE_CAP_DEFAULT)
}

/// Computes the reference solution of the full system to machine-level
/// residual (verified below `1e-12` relative) and its SVD.
///
/// Small systems go through an explicit dense Kronecker solve; larger ones
/// (still under the cap) use mean-based PCG pushed to near machine
/// precision, with the final residual checked directly.
pub fn dense_reference_capped(problem: &GalerkinProblem, cap: usize) -> Result<ReferenceSolution> {
    let n1 = problem.n_x;
    let n2 = problem.n_xi;
    let size = n1 * n2;
    if size > cap {
        return Err(Error::DenseCapExceeded { size, cap });
    }

    let b_dense = problem.rhs.to_dense();
    let u = if size <= DIRECT_SOLVE_LIMIT {
        let a = problem.op.to_dense_kronecker().to_nalgebra();
        let b = nalgebra::DVector::from_vec(vectorize(&b_dense));
        let x = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Solver("dense reference solve failed".into()))?;
        unvectorize(x.as_slice(), n1, n2)
    } else {
        let k0 = SpdFactor::factor_sparse(problem.op.k(0))?;
        let g0 = SpdFactor::factor_sparse(problem.op.g(0))?;
        let left: Vec<MatrixTerm> = problem.op.k_terms().iter().map(MatrixTerm::Sparse).collect();
        let right: Vec<MatrixTerm> = problem.op.g_terms().iter().map(MatrixTerm::Sparse).collect();
        let sys = MatricizedSystem::new(left, right, b_dense.clone(), &k0, &g0)?;
        let out = pcg_solve(
            &sys,
            &PcgConfig {
                tol: 5e-14,
                max_iters: 50_000,
            },
            &DenseMatrix::zeros(n1, n2),
        )?;
        out.x
    };

    // verify machine-level residual regardless of the route taken
    let residual = b_dense.sub(&problem.op.apply(&u)?);
    let relres = residual.frobenius_norm() / b_dense.frobenius_norm();
    if !relres.is_finite() || relres > 1e-12 {
        return Err(Error::Solver(format!(
            "reference solve reached relative residual {:.3e} > 1e-12",
            relres
        )));
    }

    let svd = u.to_nalgebra().svd(true, true);
    let mut v_star = DenseMatrix::from_nalgebra(&svd.u.expect("svd with u"));
    let mut w_star = DenseMatrix::from_nalgebra(&svd.v_t.expect("svd with v_t").transpose());
    let sigma: Vec<f64> = svd.singular_values.iter().cloned().collect();

    // sign convention: largest-magnitude entry of each left vector positive,
    // the flip applied to the (v, w) pair so the product is unchanged
    for j in 0..v_star.n_cols() {
        let col = v_star.col(j);
        let mut idx = 0;
        let mut best = 0.0f64;
        for (i, &x) in col.iter().enumerate() {
            if x.abs() > best {
                best = x.abs();
                idx = i;
            }
        }
        if v_star.get(idx, j) < 0.0 {
            for x in v_star.col_mut(j) {
                *x = -*x;
            }
            for x in w_star.col_mut(j) {
                *x = -*x;
            }
        }
    }

    Ok(ReferenceSolution {
        u,
        sigma,
        v_star,
        w_star,
    })
}

/// Error metrics of a factored iterate.
#[derive(Debug, Clone, Copy)]
pub struct ErrorMetrics {
    /// `||U - U_p||_A`
    pub energy: f64,
    /// `||U - U_p||_F`
    pub frob: f64,
    /// `||B - A(U_p)||_F / ||B||_F`, computed in factored form.
    pub relres: f64,
}

/// Evaluates all three metrics for the iterate `f`.
pub fn error_metrics(
    problem: &GalerkinProblem,
    reference: &ReferenceSolution,
    f: &LowRankFactors,
) -> Result<ErrorMetrics> {
    let diff = reference.u.sub(&f.to_dense());
    let energy = problem.op.a_inner(&diff, &diff)?.max(0.0).sqrt();
    let frob = diff.frobenius_norm();
    let b_norm = frobenius_norm_lowrank(&problem.rhs);
    let relres = if b_norm > 0.0 {
        problem.op.residual_norm(f, &problem.rhs)? / b_norm
    } else {
        0.0
    };
    Ok(ErrorMetrics {
        energy,
        frob,
        relres,
    })
}

/// Cosine matrices `V*' Vt_p` and `W*' Wt_p`, where the factor columns are
/// scaled to unit norm (not orthonormalized). Entries are cosines of angles
/// against the reference singular vectors.
pub fn angle_matrices(
    reference: &ReferenceSolution,
    f: &LowRankFactors,
) -> (DenseMatrix, DenseMatrix) {
    let vt = f.v().with_unit_columns();
    let wt = f.w().with_unit_columns();
    (
        reference.v_star.tr_matmul(&vt),
        reference.w_star.tr_matmul(&wt),
    )
}

/// The optimal rank-`p` errors for `p = 1..=p_max`: metrics of the SVD
/// truncations of the reference. The Frobenius column is the Eckart-Young
/// lower bound for every method at the same rank.
pub fn svd_truncation_curve(
    problem: &GalerkinProblem,
    reference: &ReferenceSolution,
    p_max: usize,
) -> Result<Vec<(usize, f64, f64)>> {
    let q = reference.sigma.len();
    let p_max = p_max.min(q);
    let mut out = Vec::with_capacity(p_max);
    for p in 1..=p_max {
        // tail factors: columns p.. of the SVD scaled by their singular values
        let tail: Vec<usize> = (p..q).collect();
        let frob = reference.sigma[p..]
            .iter()
            .map(|s| s * s)
            .sum::<f64>()
            .max(0.0)
            .sqrt();
        let energy = if tail.is_empty() {
            0.0
        } else {
            let mut v_tail = reference.v_star.select_columns(&tail);
            for (j, s) in reference.sigma[p..].iter().enumerate() {
                for x in v_tail.col_mut(j) {
                    *x *= s;
                }
            }
            let w_tail = reference.w_star.select_columns(&tail);
            let e = LowRankFactors::new(v_tail, w_tail)?;
            problem.op.a_inner_lowrank(&e)?.max(0.0).sqrt()
        };
        out.push((p, energy, frob));
    }
    Ok(out)
}

/// Rank-`p` SVD truncation of the reference as factors (singular values
/// absorbed into the left factor).
pub fn svd_truncation_factors(reference: &ReferenceSolution, p: usize) -> LowRankFactors {
    let p = p.min(reference.sigma.len());
    let idx: Vec<usize> = (0..p).collect();
    let mut v = reference.v_star.select_columns(&idx);
    for (j, s) in reference.sigma[..p].iter().enumerate() {
        for x in v.col_mut(j) {
            *x *= s;
        }
    }
    let w = reference.w_star.select_columns(&idx);
    LowRankFactors::new(v, w).expect("truncation factors")
}
