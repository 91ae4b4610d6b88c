// scratch probe for solver behavior at paper settings (removed later)
use kronaem::aem::{solve_with_observer, Method, SolverConfig};
use kronaem::diagnostics::{dense_reference, error_metrics, svd_truncation_curve};
use kronaem::sgfem::{build_benchmark, Benchmark, ProblemSpec};

fn main() {
    let spec = ProblemSpec::new(Benchmark::Exp1, 4, 5, 3);
    let problem = build_benchmark(&spec).unwrap();
    println!("n_x={} n_xi={}", problem.n_x, problem.n_xi);
    let t0 = std::time::Instant::now();
    let r = dense_reference(&problem).unwrap();
    println!("reference in {:?}; sigma1={:.3e} sigma40={:.3e} sigma56={:.3e}",
        t0.elapsed(), r.sigma[0], r.sigma[39], r.sigma[55]);
    let curve = svd_truncation_curve(&problem, &r, 56).unwrap();
    for p in [5, 10, 20, 30, 40, 50] {
        println!("  trunc p={}: energy={:.3e} frob={:.3e}", p, curve[p-1].1, curve[p-1].2);
    }

    for method in [Method::StageP, Method::SRankOne, Method::PgdUpdate, Method::PgdGaussSeidel, Method::RStageP] {
        let mut cfg = SolverConfig::new(method);
        cfg.p_max = 40;
        cfg.k_max = 5;
        cfg.n_update = 1;
        cfg.tau = 0.001;
        cfg.epsilon = 1e-14;
        cfg.tol_coupled = 1e-12;
        cfg.tol_basis = 1e-10;
        cfg.seed = 1;
        let t0 = std::time::Instant::now();
        let mut rows = Vec::new();
        let out = solve_with_observer(&problem, &cfg, &mut |rec, f| {
            if rec.p % 5 == 0 {
                let m = error_metrics(&problem, &r, f).unwrap();
                rows.push((rec.p, m.energy, m.relres, rec.pcg_iters));
            }
        });
        match out {
            Ok((f, trace)) => {
                println!("{:10} p_final={} rank={} time={:?}", method.as_str(), trace.final_p(), f.rank(), t0.elapsed());
                for (p, e, rr, it) in rows {
                    let trunc = curve[p-1].1;
                    println!("   p={:3} energy={:.3e} ratio={:.3} relres={:.2e} pcg={}", p, e, e/trunc, rr, it);
                }
            }
            Err(e) => println!("{:10} FAILED: {}", method.as_str(), e),
        }
    }
}
