//! Problem directories on disk: Matrix Market factors, CSV vectors, and the
//! key=value manifest.

use crate::sgfem::GalerkinProblem;
use crate::{DenseMatrix, Error, KroneckerOperator, LowRankFactors, Result, SparseMatrix};
use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

/// Writes `K_i.mtx`, `G_i.mtx`, `f0.csv`, `g0.csv`, and `manifest.txt`.
pub fn write_problem_dir(
    dir: &Path,
    problem: &GalerkinProblem,
    manifest: &BTreeMap<String, String>,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    for (i, k) in problem.op.k_terms().iter().enumerate() {
        k.write_matrix_market(&dir.join(format!("K_{}.mtx", i)))?;
    }
    for (i, g) in problem.op.g_terms().iter().enumerate() {
        g.write_matrix_market(&dir.join(format!("G_{}.mtx", i)))?;
    }
    problem.rhs.v().write_csv(&dir.join("f0.csv"))?;
    problem.rhs.w().write_csv(&dir.join("g0.csv"))?;
    write_manifest(&dir.join("manifest.txt"), manifest)
}

pub fn write_manifest(path: &Path, entries: &BTreeMap<String, String>) -> Result<()> {
    let mut f =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    for (k, v) in entries {
        writeln!(f, "{}={}", k, v).map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<BTreeMap<String, String>> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(&name, e))?;
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::parse(&name, format!("line {}: expected key=value", lineno + 1))
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Loads a problem from a directory produced by [`write_problem_dir`] (or
/// authored by hand in the same layout). The factor count must agree with
/// the manifest's `m`; a surplus factor file is as much an error as a
/// missing one.
pub fn load_problem_from_files(dir: &Path) -> Result<GalerkinProblem> {
    let manifest = read_manifest(&dir.join("manifest.txt"))?;
    let m: usize = manifest
        .get("m")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::parse(dir.display().to_string(), "manifest lacks integer 'm'"))?;

    let mut k = Vec::with_capacity(m + 1);
    let mut g = Vec::with_capacity(m + 1);
    for i in 0..=m {
        let kp = dir.join(format!("K_{}.mtx", i));
        if !kp.exists() {
            return Err(Error::parse(
                dir.display().to_string(),
                format!("manifest declares m={} but K_{}.mtx is missing", m, i),
            ));
        }
        k.push(SparseMatrix::read_matrix_market(&kp)?);
        let gp = dir.join(format!("G_{}.mtx", i));
        if !gp.exists() {
            return Err(Error::parse(
                dir.display().to_string(),
                format!("manifest declares m={} but G_{}.mtx is missing", m, i),
            ));
        }
        g.push(SparseMatrix::read_matrix_market(&gp)?);
    }
    for name in [format!("K_{}.mtx", m + 1), format!("G_{}.mtx", m + 1)] {
        if dir.join(&name).exists() {
            return Err(Error::parse(
                dir.display().to_string(),
                format!("manifest declares m={} but {} exists", m, name),
            ));
        }
    }

    let f0 = DenseMatrix::read_csv(&dir.join("f0.csv"))?;
    let g0 = DenseMatrix::read_csv(&dir.join("g0.csv"))?;
    let rhs = LowRankFactors::new(f0, g0)?;
    let op = KroneckerOperator::new(k, g)?;

    if let Some(n_x) = manifest.get("n_x").and_then(|v| v.parse::<usize>().ok()) {
        if n_x != op.n1() {
            return Err(Error::parse(
                dir.display().to_string(),
                format!("manifest n_x={} but K factors are {}x{}", n_x, op.n1(), op.n1()),
            ));
        }
    }
    if let Some(n_xi) = manifest.get("n_xi").and_then(|v| v.parse::<usize>().ok()) {
        if n_xi != op.n2() {
            return Err(Error::parse(
                dir.display().to_string(),
                format!("manifest n_xi={} but G factors are {}x{}", n_xi, op.n2(), op.n2()),
            ));
        }
    }
    GalerkinProblem::from_parts(op, rhs)
}
