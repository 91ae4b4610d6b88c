// scratch probe for acceptance criteria 4, 5, 8, 9 (removed later)
use kronaem::aem::{solve, Method, SolverConfig};
use kronaem::diagnostics::{angle_matrices, dense_reference};
use kronaem::lowrank::frobenius_norm_lowrank;
use kronaem::sgfem::{build_benchmark, Benchmark, ProblemSpec};

fn main() {
    // --- criterion 4: angle matrices at p_max = 56
    let spec = ProblemSpec::new(Benchmark::Exp1, 4, 5, 3);
    let problem = build_benchmark(&spec).unwrap();
    let r = dense_reference(&problem).unwrap();
    let separated: Vec<usize> = (0..20)
        .filter(|&i| {
            let up = i == 0 || (r.sigma[i - 1] - r.sigma[i]).abs() > 1e-6 * r.sigma[i];
            let dn = (r.sigma[i] - r.sigma[i + 1]).abs() > 1e-6 * r.sigma[i];
            up && dn
        })
        .collect();
    println!("separated leading-20 directions: {:?}", separated);
    for method in [Method::StageP, Method::RStageP, Method::SRankOne] {
        let mut cfg = SolverConfig::new(method);
        cfg.p_max = 56;
        cfg.k_max = 5;
        cfg.n_update = 1;
        cfg.tau = 0.001;
        cfg.epsilon = 1e-14;
        cfg.tol_coupled = 1e-12;
        cfg.tol_basis = 1e-10;
        cfg.seed = 3;
        let t0 = std::time::Instant::now();
        let (f, trace) = solve(&problem, &cfg).unwrap();
        let (cv, cw) = angle_matrices(&r, &f);
        let mut bad = Vec::new();
        for &i in &separated {
            if i >= f.rank() {
                continue;
            }
            let dv = cv.get(i, i).abs();
            let dw = cw.get(i, i).abs();
            if dv <= 0.99 || dw <= 0.99 {
                bad.push((i, dv, dw));
            }
        }
        println!(
            "{:10} p_final={} rank={} bad_directions={} {:?} ({:?})",
            method.as_str(),
            trace.final_p(),
            f.rank(),
            bad.len(),
            bad.iter().map(|b| b.0).collect::<Vec<_>>(),
            t0.elapsed()
        );
    }

    // --- criterion 5: Galerkin orthogonality of converged stage-p, desk scale
    let spec5 = ProblemSpec::new(Benchmark::Exp1, 3, 3, 2);
    let p5 = build_benchmark(&spec5).unwrap();
    let mut cfg = SolverConfig::new(Method::StageP);
    cfg.p_max = 15; // min(49, 10) = 10, run past it
    cfg.k_max = 10;
    cfg.epsilon = 1e-10;
    cfg.tol_coupled = 1e-12;
    let (f, trace) = solve(&p5, &cfg).unwrap();
    let b_norm = frobenius_norm_lowrank(&p5.rhs);
    let (_, gv, gw) = p5.op.objective_and_gradients(&p5.rhs, &f).unwrap();
    println!(
        "galerkin: p_final={} |gV|={:.2e} |gW|={:.2e} vs 1e-6*|B|={:.2e}",
        trace.final_p(),
        gv.frobenius_norm(),
        gw.frobenius_norm(),
        1e-6 * b_norm
    );

    // --- criterion 8: fast-decay vs exp1 at eps 1e-6
    for bench in [Benchmark::Exp1, Benchmark::FastDecay] {
        let spec = ProblemSpec::new(bench, 4, 5, 3);
        let problem = build_benchmark(&spec).unwrap();
        let mut cfg = SolverConfig::new(Method::RStageP).with_epsilon(1e-6);
        cfg.n_update = 5;
        cfg.k_max = 2;
        cfg.seed = 7;
        let t0 = std::time::Instant::now();
        let (_, trace) = solve(&problem, &cfg).unwrap();
        println!(
            "criterion8 {:?}: p_final={} relres={:.2e} ({:?})",
            bench,
            trace.final_p(),
            trace.final_relres(),
            t0.elapsed()
        );
    }

    // --- criterion 9: sweep ordering, desk scale
    let spec9 = ProblemSpec::new(Benchmark::Exp1, 3, 5, 2);
    let p9 = build_benchmark(&spec9).unwrap();
    println!("sweep problem: n_x={} n_xi={}", p9.n_x, p9.n_xi);
    for eps in [1e-7, 1e-8, 1e-9, 1e-10] {
        let mut line = format!("eps={:e}: ", eps);
        for method in [Method::PgdUpdate, Method::PgdGaussSeidel, Method::RStageP] {
            let mut total = 0usize;
            for &n_update in &[5usize, 10, 20, 30] {
                for &k_max in &[1usize, 2] {
                    let mut cfg = SolverConfig::new(method).with_epsilon(eps);
                    cfg.n_update = n_update;
                    cfg.k_max = k_max;
                    cfg.seed = 11;
                    cfg.p_max = 200;
                    let (_, trace) = solve(&p9, &cfg).unwrap();
                    total += trace.final_p();
                }
            }
            line += &format!("{}={:.1} ", method.as_str(), total as f64 / 8.0);
        }
        println!("{}", line);
    }
}
