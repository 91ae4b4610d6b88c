//! Flat key=value run configuration with command-line overrides.
//!
//! The format is a diffable experiment record: one `key=value` per line,
//! `#` comments, no nesting. Unknown keys are rejected so typos surface
//! early.

use crate::aem::{Method, SolverConfig};
use crate::diagnostics::DENSE_CAP_DEFAULT;
use crate::sgfem::{Benchmark, ElementQuadrature, ProblemSpec};
use crate::{Error, Result};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Everything one run needs: the problem, the solver settings, and output
/// handling.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub benchmark: Benchmark,
    pub grid_level: u32,
    pub m: usize,
    pub d_tot: usize,
    pub quadrature: ElementQuadrature,
    pub solver: SolverConfig,
    pub out_dir: PathBuf,
    /// Load the operator from this directory instead of assembling.
    pub problem_dir: Option<PathBuf>,
    /// Allow dense-reference computation (diagnose/reference commands).
    pub reference: bool,
    pub dense_cap: usize,
    // sweep grids
    pub sweep_methods: Vec<Method>,
    pub sweep_n_update: Vec<usize>,
    pub sweep_k_max: Vec<usize>,
    pub sweep_epsilon: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            benchmark: Benchmark::Exp1,
            grid_level: 4,
            m: 5,
            d_tot: 3,
            quadrature: ElementQuadrature::Gauss2,
            solver: SolverConfig::default(),
            out_dir: PathBuf::from("out"),
            problem_dir: None,
            reference: true,
            dense_cap: DENSE_CAP_DEFAULT,
            sweep_methods: vec![Method::PgdUpdate, Method::PgdGaussSeidel, Method::RStageP],
            sweep_n_update: vec![5, 10, 20, 30],
            sweep_k_max: vec![1, 2],
            sweep_epsilon: vec![1e-10, 1e-9, 1e-8, 1e-7],
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub method: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn problem_spec(&self) -> ProblemSpec {
        let mut spec = ProblemSpec::new(self.benchmark, self.grid_level, self.m, self.d_tot);
        spec.quadrature = self.quadrature;
        spec
    }

    /// Reads the optional config file and applies overrides.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut tol_coupled_explicit = false;
        if let Some(path) = path {
            let name = path.display().to_string();
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(&name, e))?;
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let Some((key, value)) = line.split_once('=') else {
                    return Err(Error::Config(format!(
                        "{}:{}: expected key=value, got '{}'",
                        name,
                        lineno + 1,
                        line
                    )));
                };
                if key.trim() == "tol_coupled" {
                    tol_coupled_explicit = true;
                }
                cfg.apply(key.trim(), value.trim())
                    .map_err(|e| Error::Config(format!("{}:{}: {}", name, lineno + 1, e)))?;
            }
        }
        if !tol_coupled_explicit {
            cfg.solver.tol_coupled = 1e2 * cfg.solver.epsilon;
        }
        if let Some(m) = &overrides.method {
            cfg.solver.method = Method::parse(m)?;
        }
        if let Some(s) = overrides.seed {
            cfg.solver.seed = s;
        }
        if let Some(o) = &overrides.out {
            cfg.out_dir = o.clone();
        }
        cfg.solver.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
            value
                .parse::<T>()
                .map_err(|_| format!("bad value '{}' for {}", value, key))
        }
        match key {
            "benchmark" => self.benchmark = Benchmark::parse(value).map_err(|e| e.to_string())?,
            "grid_level" => self.grid_level = num(key, value)?,
            "m" => self.m = num(key, value)?,
            "d_tot" => self.d_tot = num(key, value)?,
            "quadrature" => {
                self.quadrature = match value {
                    "2" | "gauss2" => ElementQuadrature::Gauss2,
                    "3" | "gauss3" => ElementQuadrature::Gauss3,
                    other => return Err(format!("bad quadrature '{}'", other)),
                }
            }
            "method" => self.solver.method = Method::parse(value).map_err(|e| e.to_string())?,
            "p_max" => self.solver.p_max = num(key, value)?,
            "k_max" => self.solver.k_max = num(key, value)?,
            "n_update" => self.solver.n_update = num(key, value)?,
            "epsilon" => self.solver.epsilon = num(key, value)?,
            "tau" => self.solver.tau = num(key, value)?,
            "tol_basis" => self.solver.tol_basis = num(key, value)?,
            "tol_coupled" => self.solver.tol_coupled = num(key, value)?,
            "pcg_max_iters" => self.solver.pcg_max_iters = num(key, value)?,
            "seed" => self.solver.seed = num(key, value)?,
            "timing" => self.solver.record_timing = parse_bool(value)?,
            "reference" => self.reference = parse_bool(value)?,
            "dense_cap" => self.dense_cap = num(key, value)?,
            "out" => self.out_dir = PathBuf::from(value),
            "problem_dir" => self.problem_dir = Some(PathBuf::from(value)),
            "sweep_methods" => {
                self.sweep_methods = value
                    .split(',')
                    .map(|t| Method::parse(t.trim()).map_err(|e| e.to_string()))
                    .collect::<std::result::Result<_, _>>()?
            }
            "sweep_n_update" => self.sweep_n_update = parse_list(key, value)?,
            "sweep_k_max" => self.sweep_k_max = parse_list(key, value)?,
            "sweep_epsilon" => self.sweep_epsilon = parse_list(key, value)?,
            other => return Err(format!("unknown key '{}'", other)),
        }
        Ok(())
    }

    /// The key=value rendering written into manifests: problem dimensions
    /// plus the full solver configuration.
    pub fn manifest_entries(&self, n_x: usize, n_xi: usize) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        map.insert("benchmark".into(), self.benchmark.as_str().into());
        map.insert("grid_level".into(), self.grid_level.to_string());
        map.insert("m".into(), self.m.to_string());
        map.insert("d_tot".into(), self.d_tot.to_string());
        map.insert("n_x".into(), n_x.to_string());
        map.insert("n_xi".into(), n_xi.to_string());
        map.insert(
            "density".into(),
            self.benchmark.density().as_str().to_string(),
        );
        map.insert("method".into(), self.solver.method.as_str().into());
        map.insert("p_max".into(), self.solver.p_max.to_string());
        map.insert("k_max".into(), self.solver.k_max.to_string());
        map.insert("n_update".into(), self.solver.n_update.to_string());
        map.insert("epsilon".into(), format!("{}", self.solver.epsilon));
        map.insert("tau".into(), format!("{}", self.solver.tau));
        map.insert("tol_basis".into(), format!("{}", self.solver.tol_basis));
        map.insert("tol_coupled".into(), format!("{}", self.solver.tol_coupled));
        map.insert("seed".into(), self.solver.seed.to_string());
        map
    }
}

fn parse_bool(value: &str) -> std::result::Result<bool, String> {
    match value {
        "on" | "true" | "1" | "yes" => Ok(true),
        "off" | "false" | "0" | "no" => Ok(false),
        other => Err(format!("bad boolean '{}'", other)),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<Vec<T>, String> {
    value
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<T>()
                .map_err(|_| format!("bad list entry '{}' for {}", t, key))
        })
        .collect()
}
