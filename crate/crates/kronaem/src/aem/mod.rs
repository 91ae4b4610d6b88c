//! Alternating energy minimization solvers.
//!
//! Two baseline methods and one enhanced driver are provided:
//!
//! * [`Method::StageP`] recomputes all `p` solution pairs per outer
//!   iteration by alternating coupled solves, starting each stage from a
//!   singular value projection of the previous iterate.
//! * [`Method::SRankOne`] appends one rank-one correction per outer
//!   iteration and never revisits earlier pairs.
//! * The enhanced driver runs the rank-one iteration and applies one of
//!   three enhancement procedures every `n_update` iterations:
//!   [`Method::PgdUpdate`] re-solves one whole factor against the
//!   orthonormalized other, [`Method::PgdGaussSeidel`] sweeps the pairs one
//!   at a time using the newest available data, and [`Method::RStageP`]
//!   re-solves only the pairs whose angle cosines against the newest pair
//!   exceed a threshold.
//!
//! Convergence is declared when the relative change between outer iterates
//! drops below `epsilon`; to avoid stopping on stagnation, a final
//! enhancement is applied and the criterion re-tested before the run ends.

mod enhance;
mod rank_one;
mod stage_p;

pub use enhance::PgdSide;

use enhance::{pgd_gs_update_ctx, pgd_update_ctx, r_stage_p_update_ctx};
use rank_one::rank_one_correction_ctx;
use stage_p::{stage_p_aem, svp_init_ctx};

use crate::krylov::{pcg_solve, MatricizedSystem, PcgConfig, PcgResult, SpdFactor};
use crate::lowrank::frobenius_norm_lowrank;
use crate::sgfem::GalerkinProblem;
use crate::{DenseMatrix, Error, LowRankFactors, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

/// Solver selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    StageP,
    SRankOne,
    PgdUpdate,
    PgdGaussSeidel,
    RStageP,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::StageP => "stage-p",
            Method::SRankOne => "s-rank1",
            Method::PgdUpdate => "pgd",
            Method::PgdGaussSeidel => "pgd-gs",
            Method::RStageP => "r-stage-p",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "stage-p" => Ok(Method::StageP),
            "s-rank1" => Ok(Method::SRankOne),
            "pgd" => Ok(Method::PgdUpdate),
            "pgd-gs" => Ok(Method::PgdGaussSeidel),
            "r-stage-p" => Ok(Method::RStageP),
            other => Err(Error::Config(format!("unknown method '{}'", other))),
        }
    }

    fn enhancement(&self) -> Option<Enhancement> {
        match self {
            Method::StageP | Method::SRankOne => None,
            Method::PgdUpdate => Some(Enhancement::Pgd),
            Method::PgdGaussSeidel => Some(Enhancement::PgdGs),
            Method::RStageP => Some(Enhancement::RStage),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Enhancement {
    Pgd,
    PgdGs,
    RStage,
}

/// All solver parameters. The defaults are the experiment defaults: maximum
/// of 1000 outer iterations, PCG tolerance `1e-5` for the rank-one and
/// per-pair systems, and `100 * epsilon` for the coupled systems.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub method: Method,
    pub p_max: usize,
    pub k_max: usize,
    pub n_update: usize,
    pub epsilon: f64,
    /// Angle threshold of the reduced stagewise update.
    pub tau: f64,
    /// PCG tolerance for rank-one correction and Gauss-Seidel systems.
    pub tol_basis: f64,
    /// PCG tolerance for the coupled (reduced) systems.
    pub tol_coupled: f64,
    pub pcg_max_iters: usize,
    pub seed: u64,
    /// Record wall-clock seconds in the trace. Off makes repeated runs
    /// byte-identical.
    pub record_timing: bool,
}

impl SolverConfig {
    pub fn new(method: Method) -> Self {
        let epsilon = 1e-7;
        SolverConfig {
            method,
            p_max: 1000,
            k_max: 2,
            n_update: 5,
            epsilon,
            tau: 0.05,
            tol_basis: 1e-5,
            tol_coupled: 1e2 * epsilon,
            pcg_max_iters: 1000,
            seed: 0,
            record_timing: true,
        }
    }

    /// Sets `epsilon` and re-derives the coupled PCG tolerance as
    /// `100 * epsilon`.
    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self.tol_coupled = 1e2 * epsilon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_max == 0 || self.k_max == 0 || self.n_update == 0 {
            return Err(Error::Config(
                "p_max, k_max, and n_update must be at least 1".into(),
            ));
        }
        if self.epsilon <= 0.0 || self.tau <= 0.0 || self.tol_basis <= 0.0 || self.tol_coupled <= 0.0
        {
            return Err(Error::Config(
                "epsilon, tau, and PCG tolerances must be positive".into(),
            ));
        }
        Ok(())
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig::new(Method::RStageP)
    }
}

/// One outer-iteration record.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord {
    pub p: usize,
    pub rel_diff: f64,
    pub relres: f64,
    pub enhanced: bool,
    /// Pairs touched by the enhancement this iteration.
    pub selected: usize,
    /// PCG iterations spent this outer iteration.
    pub pcg_iters: usize,
    pub seconds: f64,
}

/// Per-outer-iteration diagnostics of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceTrace {
    pub records: Vec<OuterRecord>,
}

impl ConvergenceTrace {
    pub fn final_p(&self) -> usize {
        self.records.last().map_or(0, |r| r.p)
    }

    pub fn final_relres(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.relres)
    }

    pub fn total_seconds(&self) -> f64 {
        self.records.iter().map(|r| r.seconds).sum()
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("p,rel_diff,relres,enhanced,selected,pcg_iters,seconds\n");
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.p,
                r.rel_diff,
                r.relres,
                if r.enhanced { 1 } else { 0 },
                r.selected,
                r.pcg_iters,
                r.seconds
            ));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f =
            std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        f.write_all(self.to_csv_string().as_bytes())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// Shared state of one run: the problem, the configuration, the mean-term
/// factorizations (built once), the seeded generator, and the PCG iteration
/// counter for the current outer iteration.
pub(crate) struct SolverContext<'a> {
    pub problem: &'a GalerkinProblem,
    pub cfg: &'a SolverConfig,
    pub k0: SpdFactor,
    pub g0: SpdFactor,
    pub identity1: SpdFactor,
    pub rng: ChaCha8Rng,
    // Cell so that solves borrowing the factorizations can still count.
    pub pcg_spent: std::cell::Cell<usize>,
}

impl<'a> SolverContext<'a> {
    pub fn new(problem: &'a GalerkinProblem, cfg: &'a SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let k0 = SpdFactor::factor_sparse(problem.op.k(0))?;
        let g0 = SpdFactor::factor_sparse(problem.op.g(0))?;
        Ok(SolverContext {
            problem,
            cfg,
            k0,
            g0,
            identity1: SpdFactor::Identity(1),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            pcg_spent: std::cell::Cell::new(0),
        })
    }

    /// Runs PCG, accumulates the iteration count, and propagates failures.
    pub fn run_pcg(&self, sys: &MatricizedSystem, tol: f64, x0: &DenseMatrix) -> Result<PcgResult> {
        let out = pcg_solve(
            sys,
            &PcgConfig {
                tol,
                max_iters: self.cfg.pcg_max_iters,
            },
            x0,
        )?;
        self.pcg_spent.set(self.pcg_spent.get() + out.iters);
        Ok(out)
    }

    /// Standard normal vector of length `n`, unit 2-norm.
    pub fn random_unit_vector(&mut self, n: usize) -> Vec<f64> {
        use rand::Rng;
        loop {
            let v: Vec<f64> = (0..n)
                .map(|_| self.rng.sample(rand_distr::StandardNormal))
                .collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    }
}

/// `||F_new - F_old||_F` rearranged so that shared structure cancels
/// algebraically instead of numerically: bitwise-identical pairs are skipped
/// outright, and pairs sharing an index contribute through the exact split
/// `v_new w_new' - v_old w_old' = (v_new - v_old) w_new' + v_old (w_new -
/// w_old)'`. The plain stacked difference squares the factors first and
/// bottoms out near sqrt(machine eps); this form tracks genuinely small
/// changes down to the tolerances the stopping rule uses.
pub(crate) fn convergence_diff_norm(new: &LowRankFactors, old: &LowRankFactors) -> f64 {
    let shared = new.rank().min(old.rank());
    let mut vparts: Vec<DenseMatrix> = Vec::new();
    let mut wparts: Vec<DenseMatrix> = Vec::new();
    for i in 0..shared {
        let vn = new.v().col(i);
        let vo = old.v().col(i);
        let wn = new.w().col(i);
        let wo = old.w().col(i);
        if vn == vo && wn == wo {
            continue;
        }
        let dv: Vec<f64> = vn.iter().zip(vo).map(|(&a, &b)| a - b).collect();
        let dw: Vec<f64> = wn.iter().zip(wo).map(|(&a, &b)| a - b).collect();
        vparts.push(DenseMatrix::column_vector(&dv));
        wparts.push(DenseMatrix::column_vector(wn));
        vparts.push(DenseMatrix::column_vector(vo));
        wparts.push(DenseMatrix::column_vector(&dw));
    }
    for i in shared..new.rank() {
        vparts.push(DenseMatrix::column_vector(new.v().col(i)));
        wparts.push(DenseMatrix::column_vector(new.w().col(i)));
    }
    for i in shared..old.rank() {
        let neg: Vec<f64> = old.v().col(i).iter().map(|&x| -x).collect();
        vparts.push(DenseMatrix::column_vector(&neg));
        wparts.push(DenseMatrix::column_vector(old.w().col(i)));
    }
    if vparts.is_empty() {
        return 0.0;
    }
    let v = DenseMatrix::hstack(&vparts.iter().collect::<Vec<_>>());
    let w = DenseMatrix::hstack(&wparts.iter().collect::<Vec<_>>());
    frobenius_norm_lowrank(&LowRankFactors::new(v, w).expect("delta stack widths"))
}

pub(crate) struct EnhanceInfo {
    pub selected: usize,
}

pub(crate) fn apply_enhancement(
    ctx: &SolverContext,
    f: LowRankFactors,
    which: Enhancement,
) -> Result<(LowRankFactors, EnhanceInfo)> {
    match which {
        Enhancement::Pgd => {
            let p = f.rank();
            let out = pgd_update_ctx(ctx, f, PgdSide::AlwaysW)?;
            Ok((out, EnhanceInfo { selected: p }))
        }
        Enhancement::PgdGs => {
            let p = f.rank();
            let out = pgd_gs_update_ctx(ctx, f)?;
            Ok((out, EnhanceInfo { selected: p }))
        }
        Enhancement::RStage => {
            let (out, selected) = r_stage_p_update_ctx(ctx, f, ctx.cfg.tau)?;
            Ok((out, EnhanceInfo { selected }))
        }
    }
}

enum Decision {
    Continue,
    Stop,
}

/// The convergence test shared by all drivers: relative change against the
/// previous outer iterate, with one extra enhancement applied and re-tested
/// when the criterion fires (guarding against stagnation-induced early
/// stops). A zero new iterate stops immediately with the zero factorization.
fn check_convergence(
    ctx: &SolverContext,
    f_new: LowRankFactors,
    f_old: &LowRankFactors,
    enhancement: Option<Enhancement>,
    info: &mut EnhanceInfo,
    enhanced_flag: &mut bool,
) -> Result<(Decision, LowRankFactors, f64)> {
    let norm_new = frobenius_norm_lowrank(&f_new);
    if norm_new == 0.0 {
        return Ok((
            Decision::Stop,
            LowRankFactors::zero(f_new.n1(), f_new.n2()),
            0.0,
        ));
    }
    let rel_diff = convergence_diff_norm(&f_new, f_old) / norm_new;
    if rel_diff > ctx.cfg.epsilon {
        return Ok((Decision::Continue, f_new, rel_diff));
    }
    let Some(which) = enhancement else {
        return Ok((Decision::Stop, f_new, rel_diff));
    };
    let (f_enh, enh_info) = apply_enhancement(ctx, f_new, which)?;
    *info = enh_info;
    *enhanced_flag = true;
    let norm_enh = frobenius_norm_lowrank(&f_enh);
    if norm_enh == 0.0 {
        return Ok((
            Decision::Stop,
            LowRankFactors::zero(f_enh.n1(), f_enh.n2()),
            0.0,
        ));
    }
    let rel2 = convergence_diff_norm(&f_enh, f_old) / norm_enh;
    if rel2 <= ctx.cfg.epsilon {
        Ok((Decision::Stop, f_enh, rel2))
    } else {
        Ok((Decision::Continue, f_enh, rel2))
    }
}

/// Computes one rank-one correction pair for the iterate `f_prev`, standing
/// alone (the driver does this internally each outer iteration).
pub fn rank_one_correction(
    problem: &GalerkinProblem,
    cfg: &SolverConfig,
    f_prev: &LowRankFactors,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut ctx = SolverContext::new(problem, cfg)?;
    rank_one_correction_ctx(&mut ctx, f_prev)
}

/// Stage initialization by one singular value projection step; see the
/// stagewise driver for how it is used.
pub fn svp_init(
    problem: &GalerkinProblem,
    cfg: &SolverConfig,
    f_prev: &LowRankFactors,
    p: usize,
) -> Result<(DenseMatrix, DenseMatrix)> {
    let mut ctx = SolverContext::new(problem, cfg)?;
    svp_init_ctx(&mut ctx, f_prev, p)
}

/// Applies the single-sided update once.
pub fn pgd_update(
    problem: &GalerkinProblem,
    cfg: &SolverConfig,
    f: LowRankFactors,
    side: PgdSide,
) -> Result<LowRankFactors> {
    let ctx = SolverContext::new(problem, cfg)?;
    pgd_update_ctx(&ctx, f, side)
}

/// Applies one Gauss-Seidel sweep over all pairs.
pub fn pgd_gs_update(
    problem: &GalerkinProblem,
    cfg: &SolverConfig,
    f: LowRankFactors,
) -> Result<LowRankFactors> {
    let ctx = SolverContext::new(problem, cfg)?;
    pgd_gs_update_ctx(&ctx, f)
}

/// Applies the reduced stagewise update once; returns the updated factors
/// and the number of pairs selected for the coupled re-solve.
pub fn r_stage_p_update(
    problem: &GalerkinProblem,
    cfg: &SolverConfig,
    f: LowRankFactors,
    tau: f64,
) -> Result<(LowRankFactors, usize)> {
    let ctx = SolverContext::new(problem, cfg)?;
    r_stage_p_update_ctx(&ctx, f, tau)
}

/// Runs the configured method.
pub fn solve(problem: &GalerkinProblem, cfg: &SolverConfig) -> Result<(LowRankFactors, ConvergenceTrace)> {
    solve_with_observer(problem, cfg, &mut |_, _| {})
}

/// Runs the configured method, reporting every outer iterate to the
/// observer (used for error-vs-rank studies and the diagnostics command).
pub fn solve_with_observer(
    problem: &GalerkinProblem,
    cfg: &SolverConfig,
    observer: &mut dyn FnMut(&OuterRecord, &LowRankFactors),
) -> Result<(LowRankFactors, ConvergenceTrace)> {
    let mut ctx = SolverContext::new(problem, cfg)?;
    match cfg.method {
        Method::StageP => stage_p_aem(&mut ctx, observer),
        Method::SRankOne => enhanced_aem(&mut ctx, None, observer),
        other => enhanced_aem(&mut ctx, other.enhancement(), observer),
    }
}

/// Successive rank-one driver with optional periodic enhancement. The
/// `None` enhancement is exactly the plain successive rank-one method.
fn enhanced_aem(
    ctx: &mut SolverContext,
    enhancement: Option<Enhancement>,
    observer: &mut dyn FnMut(&OuterRecord, &LowRankFactors),
) -> Result<(LowRankFactors, ConvergenceTrace)> {
    let b_norm = frobenius_norm_lowrank(&ctx.problem.rhs);
    let mut trace = ConvergenceTrace::default();
    let mut f_prev = LowRankFactors::zero(ctx.problem.n_x, ctx.problem.n_xi);

    for p in 1..=ctx.cfg.p_max {
        let started = Instant::now();
        ctx.pcg_spent.set(0);
        let (v, w) = rank_one_correction_ctx(ctx, &f_prev)?;
        let mut f_new = f_prev.clone();
        f_new.push_pair(&v, &w);

        let mut enhanced = false;
        let mut info = EnhanceInfo { selected: 0 };
        if let Some(which) = enhancement {
            if p % ctx.cfg.n_update == 0 {
                let (f, i) = apply_enhancement(ctx, f_new, which)?;
                f_new = f;
                info = i;
                enhanced = true;
            }
        }

        let (decision, f_final, rel_diff) =
            check_convergence(ctx, f_new, &f_prev, enhancement, &mut info, &mut enhanced)?;

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
            selected: info.selected,
            pcg_iters: ctx.pcg_spent.get(),
            seconds: if ctx.cfg.record_timing {
                started.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        observer(&record, &f_final);
        trace.records.push(record);

        if matches!(decision, Decision::Stop) {
            return Ok((f_final, trace));
        }
        f_prev = f_final;
    }
    Ok((f_prev, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sgfem::{build_benchmark, Benchmark, ProblemSpec};

    #[test]
    fn config_defaults_follow_experiment_table() {
        let cfg = SolverConfig::default();
        assert_eq!(cfg.p_max, 1000);
        assert_eq!(cfg.tol_basis, 1e-5);
        assert_eq!(cfg.tol_coupled, 1e2 * cfg.epsilon);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = SolverConfig::default();
        cfg.p_max = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = SolverConfig::default();
        cfg.epsilon = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn delta_diff_norm_matches_plain_stack_on_disjoint_factors() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mk = |rng: &mut rand_chacha::ChaCha8Rng, p: usize| {
            LowRankFactors::new(
                DenseMatrix::from_fn(8, p, |_, _| rng.gen_range(-1.0..1.0)),
                DenseMatrix::from_fn(6, p, |_, _| rng.gen_range(-1.0..1.0)),
            )
            .unwrap()
        };
        let f1 = mk(&mut rng, 3);
        let f2 = mk(&mut rng, 2);
        let plain = crate::lowrank::frobenius_diff_lowrank(&f1, &f2).unwrap();
        let delta = convergence_diff_norm(&f1, &f2);
        assert!((plain - delta).abs() < 1e-10 * (1.0 + plain));
    }

    #[test]
    fn delta_diff_norm_sees_tiny_appended_pair() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let v = DenseMatrix::from_fn(30, 10, |_, _| rng.gen_range(-1.0..1.0));
        let w = DenseMatrix::from_fn(20, 10, |_, _| rng.gen_range(-1.0..1.0));
        let f_old = LowRankFactors::new(v, w).unwrap();
        let mut f_new = f_old.clone();
        let tiny_v: Vec<f64> = (0..30).map(|_| 1e-13 * rng.gen_range(-1.0..1.0f64)).collect();
        let tiny_w: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        f_new.push_pair(&tiny_v, &tiny_w);
        let d = convergence_diff_norm(&f_new, &f_old);
        let exact = LowRankFactors::rank_one(&tiny_v, &tiny_w).to_dense().frobenius_norm();
        assert!(
            (d - exact).abs() < 1e-12 * exact,
            "delta form must resolve tiny increments: {} vs {}",
            d,
            exact
        );
    }

    #[test]
    fn zero_rhs_stops_immediately_with_zero_factors() {
        let spec = ProblemSpec::new(Benchmark::Exp1, 2, 2, 1);
        let mut problem = build_benchmark(&spec).unwrap();
        problem.rhs = LowRankFactors::rank_one(
            &vec![0.0; problem.n_x],
            &vec![0.0; problem.n_xi],
        );
        for method in [Method::SRankOne, Method::StageP, Method::RStageP] {
            let mut cfg = SolverConfig::new(method);
            cfg.p_max = 5;
            let (f, trace) = solve(&problem, &cfg).unwrap();
            assert_eq!(f.rank(), 0, "{:?}", method);
            assert_eq!(trace.records.len(), 1);
        }
    }
}
