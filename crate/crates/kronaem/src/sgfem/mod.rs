//! Stochastic Galerkin problem assembly for the two diffusion benchmarks.
//!
//! Benchmark 1 draws the diffusion coefficient from a truncated KL expansion
//! of a separable exponential covariance (settings `exp1` and `exp2`);
//! benchmark 2 uses explicitly given cosine coefficients with fast algebraic
//! decay. Either way the discretized system is the multi-term matrix
//! equation with FEM stiffness factors `K_i`, gPC coupling factors `G_i`,
//! and a rank-one right-hand side.

pub mod fem;
pub mod gpc;
pub mod kl;

pub use fem::{assemble_k, assemble_rhs, assemble_stiffness, ElementQuadrature, Grid};
pub use gpc::{build_multi_index_set, count_multi_indices, GpcBasis, UniformLaw};
pub use kl::{kl_eigenpairs_1d, KlExpansion};

use crate::{Error, KroneckerOperator, LowRankFactors, Result};

/// Which benchmark problem to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Benchmark {
    /// KL coefficient, `(mu, sigma) = (1, 0.1)`, `c = 2`.
    Exp1,
    /// KL coefficient, `(mu, sigma) = (1, 0.2)`, `c = 0.5`.
    Exp2,
    /// Cosine coefficients with algebraic decay, `sigma = 4`,
    /// `alpha_bar = 0.832`.
    FastDecay,
}

impl Benchmark {
    pub fn as_str(&self) -> &'static str {
        match self {
            Benchmark::Exp1 => "exp1",
            Benchmark::Exp2 => "exp2",
            Benchmark::FastDecay => "fast-decay",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "exp1" => Ok(Benchmark::Exp1),
            "exp2" => Ok(Benchmark::Exp2),
            "fast-decay" | "fastdecay" => Ok(Benchmark::FastDecay),
            other => Err(Error::Config(format!("unknown benchmark '{}'", other))),
        }
    }

    /// Law of the random variables used by this benchmark.
    pub fn density(&self) -> UniformLaw {
        match self {
            Benchmark::Exp1 | Benchmark::Exp2 => UniformLaw::UnitVariance,
            Benchmark::FastDecay => UniformLaw::UnitInterval,
        }
    }
}

/// Problem dimensions and sources for one assembled benchmark.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub benchmark: Benchmark,
    pub grid_level: u32,
    pub m: usize,
    pub d_tot: usize,
    pub quadrature: ElementQuadrature,
}

impl ProblemSpec {
    pub fn new(benchmark: Benchmark, grid_level: u32, m: usize, d_tot: usize) -> Self {
        ProblemSpec {
            benchmark,
            grid_level,
            m,
            d_tot,
            quadrature: ElementQuadrature::Gauss2,
        }
    }
}

/// Metadata kept alongside problems assembled from a benchmark spec;
/// problems loaded from externally authored files do not carry it.
#[derive(Debug, Clone)]
pub struct BenchmarkMeta {
    pub spec: ProblemSpec,
    pub basis: GpcBasis,
}

/// An assembled multi-term matrix equation.
#[derive(Debug, Clone)]
pub struct GalerkinProblem {
    pub op: KroneckerOperator,
    /// Rank-one right-hand side `B = f0 g0'`.
    pub rhs: LowRankFactors,
    pub n_x: usize,
    pub n_xi: usize,
    pub meta: Option<BenchmarkMeta>,
}

impl GalerkinProblem {
    pub fn from_parts(op: KroneckerOperator, rhs: LowRankFactors) -> Result<Self> {
        if rhs.n1() != op.n1() || rhs.n2() != op.n2() {
            return Err(Error::DimensionMismatch(format!(
                "rhs factors are {}x{}, operator is {}x{}",
                rhs.n1(),
                rhs.n2(),
                op.n1(),
                op.n2()
            )));
        }
        let n_x = op.n1();
        let n_xi = op.n2();
        Ok(GalerkinProblem {
            op,
            rhs,
            n_x,
            n_xi,
            meta: None,
        })
    }
}

/// Cosine coefficient family of benchmark 2: `a_i = alpha_i
/// cos(2 pi rho1(i) x1) cos(2 pi rho2(i) x2)` with `alpha_i = alpha_bar *
/// i^-sigma`.
#[derive(Debug, Clone)]
pub struct FastDecayCoefficients {
    pub sigma_decay: f64,
    pub alpha_bar: f64,
    pub m: usize,
}

impl FastDecayCoefficients {
    pub fn new(sigma_decay: f64, alpha_bar: f64, m: usize) -> Result<Self> {
        if sigma_decay <= 1.0 {
            return Err(Error::Config(format!(
                "decay exponent {} must exceed 1",
                sigma_decay
            )));
        }
        let zeta = riemann_zeta(sigma_decay);
        if alpha_bar <= 0.0 || alpha_bar >= 1.0 / zeta {
            return Err(Error::Config(format!(
                "alpha_bar {} outside (0, 1/zeta({}) = {:.6})",
                alpha_bar,
                sigma_decay,
                1.0 / zeta
            )));
        }
        Ok(FastDecayCoefficients {
            sigma_decay,
            alpha_bar,
            m,
        })
    }

    pub fn alpha(&self, i: usize) -> f64 {
        self.alpha_bar * (i as f64).powf(-self.sigma_decay)
    }

    /// Frequency pair `(rho1, rho2)` of term `i >= 1`, walking the diagonals
    /// of the integer lattice.
    pub fn frequencies(&self, i: usize) -> (usize, usize) {
        let k = triangular_floor(i);
        let rho1 = i - k * (k + 1) / 2;
        let rho2 = k - rho1;
        (rho1, rho2)
    }

    /// Coefficient function `a_i`; `a_0` is the constant one.
    pub fn coefficient(&self, i: usize) -> impl Fn(f64, f64) -> f64 + '_ {
        move |x1, x2| {
            if i == 0 {
                1.0
            } else {
                let (r1, r2) = self.frequencies(i);
                let tau = 2.0 * std::f64::consts::PI;
                self.alpha(i) * (tau * r1 as f64 * x1).cos() * (tau * r2 as f64 * x2).cos()
            }
        }
    }
}

/// Largest `k` with `k (k + 1) / 2 <= i`. The float formula
/// `floor(-1/2 + sqrt(1/4 + 2i))` can sit one ulp under an exact triangular
/// number, so the result is fixed up with integer arithmetic.
fn triangular_floor(i: usize) -> usize {
    let mut k = (-0.5 + (0.25 + 2.0 * i as f64).sqrt()).floor() as usize;
    while (k + 1) * (k + 2) / 2 <= i {
        k += 1;
    }
    while k * (k + 1) / 2 > i {
        k -= 1;
    }
    k
}

/// Riemann zeta for real argument > 1 by direct summation with an integral
/// tail correction; plenty for validating the coefficient bound.
fn riemann_zeta(s: f64) -> f64 {
    let n = 100_000usize;
    let head: f64 = (1..=n).map(|k| (k as f64).powf(-s)).sum();
    let tail = (n as f64).powf(1.0 - s) / (s - 1.0);
    head + tail
}

/// Assembles the requested benchmark problem.
pub fn build_benchmark(spec: &ProblemSpec) -> Result<GalerkinProblem> {
    let grid = Grid::new(spec.grid_level)?;
    let basis = GpcBasis::new(spec.m, spec.d_tot, spec.benchmark.density())?;
    let g = basis.assemble_g();

    let k = match spec.benchmark {
        Benchmark::Exp1 | Benchmark::Exp2 => {
            let (sigma, c) = match spec.benchmark {
                Benchmark::Exp1 => (0.1, 2.0),
                Benchmark::Exp2 => (0.2, 0.5),
                Benchmark::FastDecay => unreachable!(),
            };
            let kl = KlExpansion::new(1.0, sigma, c, spec.m)?;
            let coeffs: Vec<_> = (0..=spec.m).map(|i| kl.coefficient(i)).collect();
            let refs: Vec<&dyn Fn(f64, f64) -> f64> =
                coeffs.iter().map(|c| c as &dyn Fn(f64, f64) -> f64).collect();
            assemble_k(grid, &refs, spec.quadrature)
        }
        Benchmark::FastDecay => {
            let fd = FastDecayCoefficients::new(4.0, 0.832, spec.m)?;
            let coeffs: Vec<_> = (0..=spec.m).map(|i| fd.coefficient(i)).collect();
            let refs: Vec<&dyn Fn(f64, f64) -> f64> =
                coeffs.iter().map(|c| c as &dyn Fn(f64, f64) -> f64).collect();
            assemble_k(grid, &refs, spec.quadrature)
        }
    };

    let rhs = assemble_rhs(grid, basis.len());
    let op = KroneckerOperator::new(k, g)?;
    let n_x = grid.n_interior();
    let n_xi = basis.len();
    Ok(GalerkinProblem {
        op,
        rhs,
        n_x,
        n_xi,
        meta: Some(BenchmarkMeta {
            spec: spec.clone(),
            basis,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exp1_paper_dimensions() {
        let p = build_benchmark(&ProblemSpec::new(Benchmark::Exp1, 4, 5, 3)).unwrap();
        assert_eq!(p.n_x, 225);
        assert_eq!(p.n_xi, 56);
        assert_eq!(p.op.n_terms(), 6);
        assert_eq!(p.rhs.rank(), 1);
    }

    #[test]
    fn fast_decay_index_walk() {
        let fd = FastDecayCoefficients::new(4.0, 0.832, 6).unwrap();
        assert_eq!(fd.frequencies(1), (0, 1));
        assert_eq!(fd.frequencies(2), (1, 0));
        assert_eq!(fd.frequencies(3), (0, 2));
        // a_1(x) = 0.832 cos(2 pi x2)
        let a1 = fd.coefficient(1);
        for (x1, x2) in [(0.3, 0.2), (0.9, 0.7)] {
            assert_relative_eq!(
                a1(x1, x2),
                0.832 * (2.0 * std::f64::consts::PI * x2).cos(),
                epsilon = 1e-14
            );
        }
        // alpha ratio for sigma = 4
        assert_relative_eq!(fd.alpha(2) / fd.alpha(1), 0.0625, epsilon = 1e-15);
    }

    #[test]
    fn fast_decay_validates_alpha_bound() {
        // 1/zeta(4) = 90/pi^4 ~ 0.9239
        assert!(FastDecayCoefficients::new(4.0, 0.93, 3).is_err());
        assert!(FastDecayCoefficients::new(4.0, 0.832, 3).is_ok());
        assert!(FastDecayCoefficients::new(1.0, 0.5, 3).is_err());
    }

    #[test]
    fn triangular_floor_handles_exact_triangulars() {
        for k in 1..200usize {
            let t = k * (k + 1) / 2;
            assert_eq!(triangular_floor(t), k, "at T_{}", k);
            assert_eq!(triangular_floor(t - 1), k - 1, "below T_{}", k);
        }
    }

    #[test]
    fn zeta_matches_known_values() {
        assert_relative_eq!(
            riemann_zeta(4.0),
            std::f64::consts::PI.powi(4) / 90.0,
            max_relative = 1e-10
        );
        assert_relative_eq!(
            riemann_zeta(2.0),
            std::f64::consts::PI.powi(2) / 6.0,
            max_relative = 1e-8
        );
    }

    #[test]
    fn small_assembled_operator_is_positive_definite() {
        for bench in [Benchmark::Exp1, Benchmark::Exp2] {
            let p = build_benchmark(&ProblemSpec::new(bench, 3, 3, 2)).unwrap();
            assert!(p.n_x * p.n_xi <= 2000);
            let a = p.op.to_dense_kronecker().to_nalgebra();
            let sym_err = (&a - a.transpose()).norm() / a.norm();
            assert!(sym_err < 1e-13, "operator must be symmetric");
            let eig = a.symmetric_eigen();
            let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min > 0.0, "{:?}: min eigenvalue {}", bench, min);
        }
    }

    #[test]
    fn fast_decay_operator_is_positive_definite() {
        let p = build_benchmark(&ProblemSpec::new(Benchmark::FastDecay, 3, 4, 2)).unwrap();
        let a = p.op.to_dense_kronecker().to_nalgebra();
        let eig = a.symmetric_eigen();
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min > 0.0, "min eigenvalue {}", min);
    }

    #[test]
    fn benchmark_coefficient_magnitudes_keep_a0_dominant() {
        // exp1/exp2 fields stay positive: |sum_i a_i xi_i| < mu for the
        // sampled bounds, a sanity check on the scaling sigma sqrt(lambda).
        for (bench, bound) in [(Benchmark::Exp1, 3.0f64.sqrt()), (Benchmark::Exp2, 3.0f64.sqrt())] {
            let (sigma, c) = match bench {
                Benchmark::Exp1 => (0.1, 2.0),
                Benchmark::Exp2 => (0.2, 0.5),
                _ => unreachable!(),
            };
            let kl = KlExpansion::new(1.0, sigma, c, 5).unwrap();
            let mut worst: f64 = 0.0;
            for ix in 0..20 {
                for iy in 0..20 {
                    let x1 = (ix as f64 + 0.5) / 20.0;
                    let x2 = (iy as f64 + 0.5) / 20.0;
                    let total: f64 = (1..=5)
                        .map(|i| (kl.coefficient(i))(x1, x2).abs() * bound)
                        .sum();
                    worst = worst.max(total);
                }
            }
            assert!(worst < 1.0, "{:?}: worst-case fluctuation {}", bench, worst);
        }
    }
}
