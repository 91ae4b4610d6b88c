//! The rank-one correction at the core of the successive methods.

use super::SolverContext;
use crate::krylov::{MatricizedSystem, MatrixTerm};
use crate::{DenseMatrix, Error, KroneckerOperator, LowRankFactors, Result};

/// Computes a new pair `(v, w)` for the iterate `F = V W'` by alternating
/// the two rank-one systems `k_max` times from a random unit start for `w`:
///
/// ```text
/// sum_i (w' G_i w)  K_i v = B w - A(V W') w
/// sum_i (v' K_i v)  G_i w = B' v - A(V W')' v
/// ```
///
/// Both solves use mean-based preconditioning (`K_0` and `G_0` respectively)
/// at the basis tolerance and start from zero. A start vector that makes the
/// first system singular is redrawn once; a second failure is a hard error.
pub(crate) fn rank_one_correction_ctx(
    ctx: &mut SolverContext,
    f_prev: &LowRankFactors,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let w0 = ctx.random_unit_vector(ctx.problem.n_xi);
    match alternate(ctx, f_prev, &w0) {
        Ok(pair) => Ok(pair),
        Err(Error::IndefiniteOperator(_)) => {
            let w0 = ctx.random_unit_vector(ctx.problem.n_xi);
            match alternate(ctx, f_prev, &w0) {
                Ok(pair) => Ok(pair),
                Err(Error::IndefiniteOperator(g)) => Err(Error::Solver(format!(
                    "rank-one system stayed singular after reinitialization (p'Ap = {:.3e})",
                    g
                ))),
                Err(e) => Err(e),
            }
        }
        Err(e) => Err(e),
    }
}

fn alternate(
    ctx: &mut SolverContext,
    f_prev: &LowRankFactors,
    w0: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let op = &ctx.problem.op;
    let b = &ctx.problem.rhs;
    let mut w = DenseMatrix::column_vector(w0);
    let mut v = DenseMatrix::zeros(ctx.problem.n_x, 1);
    for _ in 0..ctx.cfg.k_max {
        v = solve_v_system(ctx, op, b, f_prev, &w)?;
        w = solve_w_system(ctx, op, b, f_prev, &v)?;
    }
    Ok((v.col(0).to_vec(), w.col(0).to_vec()))
}

fn solve_v_system(
    ctx: &SolverContext,
    op: &KroneckerOperator,
    b: &LowRankFactors,
    f_prev: &LowRankFactors,
    w: &DenseMatrix,
) -> Result<DenseMatrix> {
    let left: Vec<MatrixTerm> = op.k_terms().iter().map(MatrixTerm::Sparse).collect();
    let right: Vec<MatrixTerm> = op
        .g_terms()
        .iter()
        .map(|g| {
            let gw = g.mul_dense(w);
            let r = gw.col(0).iter().zip(w.col(0)).map(|(&a, &b)| a * b).sum();
            MatrixTerm::Dense(DenseMatrix::from_column_major(1, 1, vec![r]).unwrap())
        })
        .collect();
    let mut rhs = KroneckerOperator::project_rhs_left(b, w);
    rhs.axpy(-1.0, &op.apply_times(f_prev, w));
    let sys = MatricizedSystem::new(left, right, rhs, &ctx.k0, &ctx.identity1)?;
    let x0 = DenseMatrix::zeros(ctx.problem.n_x, 1);
    let out = ctx.run_pcg(&sys, ctx.cfg.tol_basis, &x0)?;
    Ok(out.x)
}

fn solve_w_system(
    ctx: &SolverContext,
    op: &KroneckerOperator,
    b: &LowRankFactors,
    f_prev: &LowRankFactors,
    v: &DenseMatrix,
) -> Result<DenseMatrix> {
    let left: Vec<MatrixTerm> = op.g_terms().iter().map(MatrixTerm::Sparse).collect();
    let right: Vec<MatrixTerm> = op
        .k_terms()
        .iter()
        .map(|k| {
            let kv = k.mul_dense(v);
            let r = kv.col(0).iter().zip(v.col(0)).map(|(&a, &b)| a * b).sum();
            MatrixTerm::Dense(DenseMatrix::from_column_major(1, 1, vec![r]).unwrap())
        })
        .collect();
    let mut rhs = KroneckerOperator::project_rhs_right(b, v);
    rhs.axpy(-1.0, &op.apply_transpose_times(f_prev, v));
    let sys = MatricizedSystem::new(left, right, rhs, &ctx.g0, &ctx.identity1)?;
    let x0 = DenseMatrix::zeros(ctx.problem.n_xi, 1);
    let out = ctx.run_pcg(&sys, ctx.cfg.tol_basis, &x0)?;
    Ok(out.x)
}
