// scratch probe: stage-p convergence vs k_max (removed later)
use kronaem::aem::{solve_with_observer, Method, SolverConfig};
use kronaem::diagnostics::{dense_reference, error_metrics, svd_truncation_curve};
use kronaem::sgfem::{build_benchmark, Benchmark, ProblemSpec};

fn main() {
    for bench in [Benchmark::Exp1, Benchmark::Exp2] {
        let spec = ProblemSpec::new(bench, 4, 5, 3);
        let problem = build_benchmark(&spec).unwrap();
        let r = dense_reference(&problem).unwrap();
        let curve = svd_truncation_curve(&problem, &r, 56).unwrap();
        println!("=== {:?} sigma40/sigma1 = {:.3e}", bench, r.sigma[39] / r.sigma[0]);
        for k_max in [5usize, 8, 12] {
            let mut cfg = SolverConfig::new(Method::StageP);
            cfg.p_max = 40;
            cfg.k_max = k_max;
            cfg.epsilon = 1e-14;
            cfg.tol_coupled = 1e-13;
            cfg.seed = 1;
            let mut worst: (usize, f64) = (0, 0.0);
            let out = solve_with_observer(&problem, &cfg, &mut |rec, f| {
                if rec.p % 5 == 0 {
                    let m = error_metrics(&problem, &r, f).unwrap();
                    let ratio = m.energy / curve[rec.p - 1].1;
                    if ratio > worst.1 {
                        worst = (rec.p, ratio);
                    }
                }
            });
            out.unwrap();
            println!("  k_max={:2}: worst ratio {:.3} at p={}", k_max, worst.1, worst.0);
        }
    }
}
