//! Command-line experiment harness: assembling benchmark problems, running
//! solvers, and exporting reference solutions, error curves, angle
//! matrices, and parameter sweeps as plain files.

mod config;
mod files;

pub use config::{Overrides, RunConfig};
pub use files::{load_problem_from_files, read_manifest, write_manifest, write_problem_dir};

use crate::aem::{self, ConvergenceTrace, SolverConfig};
use crate::diagnostics::{
    angle_matrices, dense_reference_capped, error_metrics, svd_truncation_curve,
};
use crate::sgfem::{build_benchmark, GalerkinProblem};
use crate::{Error, Result};
use clap::{Args, Parser, Subcommand};
use std::io::Write as _;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "kronaem",
    about = "Low-rank alternating energy minimization solvers for Kronecker-structured matrix equations",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Flat key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Solver method override: stage-p | s-rank1 | pgd | pgd-gs | r-stage-p.
    #[arg(long)]
    method: Option<String>,
    /// Random seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl CommonArgs {
    fn load(&self) -> Result<RunConfig> {
        let overrides = Overrides {
            method: self.method.clone(),
            seed: self.seed,
            out: self.out.clone(),
        };
        RunConfig::load(self.config.as_deref(), &overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Assemble the benchmark operator and write it as files.
    Assemble(CommonArgs),
    /// Run the configured solver; write factors and the convergence trace.
    Solve(CommonArgs),
    /// Compute and write the dense reference solution and its SVD.
    Reference(CommonArgs),
    /// Re-run the solver with per-iteration error metrics against the
    /// reference; write error curves and angle matrices.
    Diagnose(CommonArgs),
    /// Run the parameter grid and write the summary table.
    Sweep(CommonArgs),
}

/// Entry point: parses arguments, runs the subcommand, maps errors to exit
/// codes (1 configuration, 2 solver/runtime).
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version through this path too
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e @ (Error::Config(_) | Error::Parse { .. })) => {
            eprintln!("error: {}", e);
            1
        }
        Err(e) => {
            eprintln!("error: {}", e);
            2
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Assemble(args) => assemble(&args.load()?),
        Command::Solve(args) => solve(&args.load()?),
        Command::Reference(args) => reference(&args.load()?),
        Command::Diagnose(args) => diagnose(&args.load()?),
        Command::Sweep(args) => sweep(&args.load()?),
    }
}

fn obtain_problem(cfg: &RunConfig) -> Result<GalerkinProblem> {
    match &cfg.problem_dir {
        Some(dir) => load_problem_from_files(dir),
        None => build_benchmark(&cfg.problem_spec()),
    }
}

fn ensure_out(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| Error::io(cfg.out_dir.display().to_string(), e))
}

fn assemble(cfg: &RunConfig) -> Result<()> {
    let problem = build_benchmark(&cfg.problem_spec())?;
    ensure_out(cfg)?;
    let manifest = cfg.manifest_entries(problem.n_x, problem.n_xi);
    write_problem_dir(&cfg.out_dir, &problem, &manifest)?;
    println!(
        "assembled {} (grid level {}, m = {}, d_tot = {}): n_x = {}, n_xi = {}, {} terms -> {}",
        cfg.benchmark.as_str(),
        cfg.grid_level,
        cfg.m,
        cfg.d_tot,
        problem.n_x,
        problem.n_xi,
        problem.op.n_terms(),
        cfg.out_dir.display()
    );
    Ok(())
}

fn solve(cfg: &RunConfig) -> Result<()> {
    let problem = obtain_problem(cfg)?;
    ensure_out(cfg)?;
    let manifest = cfg.manifest_entries(problem.n_x, problem.n_xi);
    write_manifest(&cfg.out_dir.join("manifest.txt"), &manifest)?;

    // collect records as they appear so a failed run still leaves its trace
    let mut partial = ConvergenceTrace::default();
    let result = aem::solve_with_observer(&problem, &cfg.solver, &mut |rec, _| {
        partial.records.push(rec.clone());
    });
    match result {
        Ok((factors, trace)) => {
            factors.write_csv(&cfg.out_dir.join("V.csv"), &cfg.out_dir.join("W.csv"))?;
            trace.write_csv(&cfg.out_dir.join("trace.csv"))?;
            println!(
                "{} finished: p = {}, relres = {:.3e}, {:.2}s",
                cfg.solver.method.as_str(),
                trace.final_p(),
                trace.final_relres(),
                trace.total_seconds()
            );
            Ok(())
        }
        Err(e) => {
            partial.write_csv(&cfg.out_dir.join("trace.csv"))?;
            Err(e)
        }
    }
}

fn reference(cfg: &RunConfig) -> Result<()> {
    let problem = obtain_problem(cfg)?;
    ensure_out(cfg)?;
    let r = dense_reference_capped(&problem, cfg.dense_cap)?;
    r.u.write_csv(&cfg.out_dir.join("U.csv"))?;
    crate::DenseMatrix::column_vector(&r.sigma).write_csv(&cfg.out_dir.join("sigma.csv"))?;
    r.v_star.write_csv(&cfg.out_dir.join("Vstar.csv"))?;
    r.w_star.write_csv(&cfg.out_dir.join("Wstar.csv"))?;
    println!(
        "reference written: {}x{}, sigma_1 = {:.6e}, sigma_min = {:.6e}",
        problem.n_x,
        problem.n_xi,
        r.sigma.first().copied().unwrap_or(0.0),
        r.sigma.last().copied().unwrap_or(0.0)
    );
    Ok(())
}

fn diagnose(cfg: &RunConfig) -> Result<()> {
    if !cfg.reference {
        return Err(Error::Config(
            "diagnose needs the dense reference; set reference=on".into(),
        ));
    }
    let problem = obtain_problem(cfg)?;
    ensure_out(cfg)?;
    let r = dense_reference_capped(&problem, cfg.dense_cap)?;
    let full_curve = svd_truncation_curve(&problem, &r, problem.n_x.min(problem.n_xi))?;

    let path = cfg.out_dir.join("errors.csv");
    let file = std::fs::File::create(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "p,energy,frob,relres,full_energy,full_frob")
        .map_err(|e| Error::io(path.display().to_string(), e))?;

    let mut row_error: Option<Error> = None;
    let (factors, _) = aem::solve_with_observer(&problem, &cfg.solver, &mut |rec, f| {
        if row_error.is_some() {
            return;
        }
        match error_metrics(&problem, &r, f) {
            Ok(m) => {
                let (fe, ff) = full_curve
                    .get(rec.p.min(full_curve.len()).saturating_sub(1))
                    .map(|&(_, e, f)| (e, f))
                    .unwrap_or((0.0, 0.0));
                if let Err(e) = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    rec.p, m.energy, m.frob, m.relres, fe, ff
                ) {
                    row_error = Some(Error::io(path.display().to_string(), e));
                }
            }
            Err(e) => row_error = Some(e),
        }
    })?;
    drop(out);
    if let Some(e) = row_error {
        return Err(e);
    }

    let (cv, cw) = angle_matrices(&r, &factors);
    cv.write_csv(&cfg.out_dir.join("angles_V.csv"))?;
    cw.write_csv(&cfg.out_dir.join("angles_W.csv"))?;
    println!(
        "diagnostics for {} written to {}",
        cfg.solver.method.as_str(),
        cfg.out_dir.display()
    );
    Ok(())
}

fn sweep(cfg: &RunConfig) -> Result<()> {
    let problem = obtain_problem(cfg)?;
    ensure_out(cfg)?;
    let path = cfg.out_dir.join("summary.csv");
    let file = std::fs::File::create(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "method,n_update,k_max,epsilon,p_final,relres,seconds")
        .map_err(|e| Error::io(path.display().to_string(), e))?;

    for &method in &cfg.sweep_methods {
        for &n_update in &cfg.sweep_n_update {
            for &k_max in &cfg.sweep_k_max {
                for &epsilon in &cfg.sweep_epsilon {
                    let mut solver = SolverConfig {
                        method,
                        n_update,
                        k_max,
                        ..cfg.solver.clone()
                    }
                    .with_epsilon(epsilon);
                    solver.tol_basis = cfg.solver.tol_basis;
                    let (_, trace) = aem::solve(&problem, &solver)?;
                    writeln!(
                        out,
                        "{},{},{},{},{},{},{}",
                        method.as_str(),
                        n_update,
                        k_max,
                        epsilon,
                        trace.final_p(),
                        trace.final_relres(),
                        trace.total_seconds()
                    )
                    .map_err(|e| Error::io(path.display().to_string(), e))?;
                }
            }
        }
    }
    println!("sweep summary written to {}", path.display());
    Ok(())
}
