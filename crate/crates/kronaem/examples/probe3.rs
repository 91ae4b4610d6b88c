// scratch probe: singular spectrum near the truncation boundary (removed later)
use kronaem::diagnostics::dense_reference;
use kronaem::sgfem::{build_benchmark, Benchmark, ProblemSpec};

fn main() {
    for bench in [Benchmark::Exp1, Benchmark::Exp2] {
        let spec = ProblemSpec::new(bench, 4, 5, 3);
        let problem = build_benchmark(&spec).unwrap();
        let r = dense_reference(&problem).unwrap();
        println!("=== {:?}", bench);
        for i in 33..48 {
            println!(
                "  sigma[{:2}] = {:.6e}   gap to next: {:.3}",
                i + 1,
                r.sigma[i],
                (r.sigma[i] - r.sigma[i + 1]) / r.sigma[i]
            );
        }
    }
}
