//! The stagewise method: every outer iteration re-solves all `p` pairs.

use super::{ConvergenceTrace, EnhanceInfo, OuterRecord, SolverContext};
use crate::dense::orthonormalize;
use crate::krylov::{MatricizedSystem, MatrixTerm, SpdFactor};
use crate::lowrank::{frobenius_norm_lowrank, lowrank_svd};
use crate::{DenseMatrix, KroneckerOperator, LowRankFactors, Result};
use std::time::Instant;

/// Stage initialization: one singular value projection step. Forms the
/// factored stack of
///
/// ```text
/// V W' - 3/4 (A(V W') - B)
/// ```
///
/// compresses it, and returns the leading `p` left and right singular
/// vectors. Both returned blocks are orthonormal; singular values are not
/// absorbed, since the first half-solve of the stage sets the scale anyway.
/// When the stack has numerical rank below `p`, the missing columns are
/// padded with random directions orthogonal to the found ones.
pub(crate) fn svp_init_ctx(
    ctx: &mut SolverContext,
    f_prev: &LowRankFactors,
    p: usize,
) -> Result<(DenseMatrix, DenseMatrix)> {
    let op = &ctx.problem.op;
    let b = &ctx.problem.rhs;

    let mut stack = f_prev.clone();
    let af = op.apply_lowrank(f_prev)?;
    if af.rank() > 0 {
        stack = stack.stack(&LowRankFactors::new(af.v().scaled(-0.75), af.w().clone())?)?;
    }
    if b.rank() > 0 {
        stack = stack.stack(&LowRankFactors::new(b.v().scaled(0.75), b.w().clone())?)?;
    }

    let svd = lowrank_svd(&stack);
    let found = svd.sigma.len().min(p);
    let mut v0 = svd.u.leading_columns(found);
    let mut w0 = svd.v.leading_columns(found);
    while v0.n_cols() < p {
        v0 = pad_orthogonal(ctx, v0);
        w0 = pad_orthogonal(ctx, w0);
    }
    Ok((v0, w0))
}

/// Appends one random unit column orthogonal to the existing ones.
fn pad_orthogonal(ctx: &mut SolverContext, m: DenseMatrix) -> DenseMatrix {
    let n = m.n_rows();
    loop {
        let cand = ctx.random_unit_vector(n);
        let mut v = cand;
        for _ in 0..2 {
            for j in 0..m.n_cols() {
                let q = m.col(j);
                let c: f64 = q.iter().zip(&v).map(|(&a, &b)| a * b).sum();
                for (vi, &qi) in v.iter_mut().zip(q) {
                    *vi -= c * qi;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            for x in &mut v {
                *x /= norm;
            }
            return DenseMatrix::hstack(&[&m, &DenseMatrix::column_vector(&v)]);
        }
    }
}

/// One stage: `k_max` alternations of the two coupled solves at width `p`.
/// The fixed factor is orthonormalized before each half-solve, so the
/// reduced mean factor used for preconditioning matches the system exactly;
/// the current iterate is carried through the basis change as the warm
/// start.
fn run_stage(
    ctx: &mut SolverContext,
    mut v: DenseMatrix,
    mut w: DenseMatrix,
) -> Result<LowRankFactors> {
    let op = &ctx.problem.op;
    let b = &ctx.problem.rhs;
    for _ in 0..ctx.cfg.k_max {
        // half-step for V against orthonormalized W
        let wt = orthonormalize(&w).q;
        if wt.n_cols() == 0 {
            return LowRankFactors::new(
                DenseMatrix::zeros(op.n1(), 0),
                DenseMatrix::zeros(op.n2(), 0),
            );
        }
        let x0 = v.matmul(&wt.tr_matmul(&w).transpose());
        let left: Vec<MatrixTerm> = op.k_terms().iter().map(MatrixTerm::Sparse).collect();
        let mut g0_reduced = None;
        let right: Vec<MatrixTerm> = op
            .g_terms()
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let red = wt.tr_matmul(&g.mul_dense(&wt));
                if i == 0 {
                    g0_reduced = Some(red.clone());
                }
                MatrixTerm::Dense(red)
            })
            .collect();
        let m_right = SpdFactor::factor_dense(&g0_reduced.expect("mean term present"))?;
        let rhs = KroneckerOperator::project_rhs_left(b, &wt);
        let sys = MatricizedSystem::new(left, right, rhs, &ctx.k0, &m_right)?;
        v = ctx.run_pcg(&sys, ctx.cfg.tol_coupled, &x0)?.x;
        w = wt;

        // half-step for W against orthonormalized V
        let vt = orthonormalize(&v).q;
        if vt.n_cols() == 0 {
            return LowRankFactors::new(
                DenseMatrix::zeros(op.n1(), 0),
                DenseMatrix::zeros(op.n2(), 0),
            );
        }
        let x0 = vt.tr_matmul(&v).matmul_transpose(&w);
        let mut k0_reduced = None;
        let left: Vec<MatrixTerm> = op
            .k_terms()
            .iter()
            .enumerate()
            .map(|(i, k)| {
                let red = vt.tr_matmul(&k.mul_dense(&vt));
                if i == 0 {
                    k0_reduced = Some(red.clone());
                }
                MatrixTerm::Dense(red)
            })
            .collect();
        let right: Vec<MatrixTerm> = op.g_terms().iter().map(MatrixTerm::Sparse).collect();
        let m_left = SpdFactor::factor_dense(&k0_reduced.expect("mean term present"))?;
        let rhs = vt.tr_matmul(b.v()).matmul_transpose(b.w());
        let sys = MatricizedSystem::new(left, right, rhs, &m_left, &ctx.g0)?;
        let x = ctx.run_pcg(&sys, ctx.cfg.tol_coupled, &x0)?.x;
        v = vt;
        w = x.transpose();
    }
    LowRankFactors::new(v, w)
}

/// The stagewise driver.
pub(crate) fn stage_p_aem(
    ctx: &mut SolverContext,
    observer: &mut dyn FnMut(&OuterRecord, &LowRankFactors),
) -> Result<(LowRankFactors, ConvergenceTrace)> {
    let b_norm = frobenius_norm_lowrank(&ctx.problem.rhs);
    let mut trace = ConvergenceTrace::default();
    let mut f_prev = LowRankFactors::zero(ctx.problem.n_x, ctx.problem.n_xi);

    for p in 1..=ctx.cfg.p_max {
        let started = Instant::now();
        ctx.pcg_spent.set(0);
        let (v0, w0) = svp_init_ctx(ctx, &f_prev, p)?;
        let f_new = run_stage(ctx, v0, w0)?;

        let mut info = EnhanceInfo { selected: 0 };
        let mut enhanced = false;
        let (decision, f_final, rel_diff) =
            super::check_convergence(ctx, f_new, &f_prev, None, &mut info, &mut enhanced)?;

        let relres = if b_norm > 0.0 {
            ctx.problem.op.residual_norm(&f_final, &ctx.problem.rhs)? / b_norm
        } else {
            0.0
        };
        let record = OuterRecord {
            p,
            rel_diff,
            relres,
            enhanced,
            selected: if enhanced { info.selected } else { 0 },
            pcg_iters: ctx.pcg_spent.get(),
            seconds: if ctx.cfg.record_timing {
                started.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        observer(&record, &f_final);
        trace.records.push(record);
        if matches!(decision, super::Decision::Stop) {
            return Ok((f_final, trace));
        }
        f_prev = f_final;
    }
    Ok((f_prev, trace))
}
