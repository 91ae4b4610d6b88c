//! Generalized polynomial chaos basis: multivariate Legendre polynomials
//! indexed by a total-degree multi-index set.

use crate::{Error, Result, SparseMatrix};

/// Uniform law of the random variables. Both are centered; they differ in
/// support and therefore in the recurrence coefficients of the orthonormal
/// univariate polynomials.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UniformLaw {
    /// `U(-sqrt(3), sqrt(3))`: mean zero, variance one.
    UnitVariance,
    /// `U(-1, 1)`.
    UnitInterval,
}

impl UniformLaw {
    pub fn as_str(&self) -> &'static str {
        match self {
            UniformLaw::UnitVariance => "uniform-sqrt3",
            UniformLaw::UnitInterval => "uniform-unit",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform-sqrt3" => Ok(UniformLaw::UnitVariance),
            "uniform-unit" => Ok(UniformLaw::UnitInterval),
            other => Err(Error::Config(format!("unknown density '{}'", other))),
        }
    }

    /// Recurrence coupling `<xi pi_{j-1} pi_j>` of the orthonormal univariate
    /// polynomials, for `j >= 1`.
    ///
    /// For `U(-1, 1)` the orthonormalized Legendre recurrence gives
    /// `j / sqrt(4 j^2 - 1)`; rescaling the variable to `U(-s, s)` multiplies
    /// every coupling by `s`.
    pub fn coupling(&self, j: usize) -> f64 {
        let j = j as f64;
        let base = j / (4.0 * j * j - 1.0).sqrt();
        match self {
            UniformLaw::UnitVariance => 3.0f64.sqrt() * base,
            UniformLaw::UnitInterval => base,
        }
    }

    /// Evaluates the orthonormal univariate polynomial of the given degree.
    pub fn eval_poly(&self, degree: usize, xi: f64) -> f64 {
        let x = match self {
            UniformLaw::UnitVariance => xi / 3.0f64.sqrt(),
            UniformLaw::UnitInterval => xi,
        };
        // normalized Legendre on [-1, 1]: pi_j = sqrt(2j+1) P_j
        let mut p_prev = 1.0;
        if degree == 0 {
            return 1.0;
        }
        let mut p = x;
        for j in 1..degree {
            let jf = j as f64;
            let next = ((2.0 * jf + 1.0) * x * p - jf * p_prev) / (jf + 1.0);
            p_prev = p;
            p = next;
        }
        (2.0 * degree as f64 + 1.0).sqrt() * p
    }
}

/// The multivariate basis: every multi-index `d` with `|d|_1 <= d_tot`,
/// ordered by total degree and lexicographically within each degree. The
/// first index is always the zero multi-index, so the first basis function
/// is the constant one.
#[derive(Debug, Clone)]
pub struct GpcBasis {
    pub m: usize,
    pub d_tot: usize,
    pub density: UniformLaw,
    indices: Vec<Vec<u32>>,
}

impl GpcBasis {
    pub fn new(m: usize, d_tot: usize, density: UniformLaw) -> Result<Self> {
        if m == 0 {
            return Err(Error::Config("basis needs at least one variable".into()));
        }
        let expected = count_multi_indices(m, d_tot).ok_or_else(|| {
            Error::Config(format!(
                "multi-index count for m={}, d_tot={} overflows",
                m, d_tot
            ))
        })?;
        let indices = build_multi_index_set(m, d_tot);
        debug_assert_eq!(indices.len(), expected);
        Ok(GpcBasis {
            m,
            d_tot,
            density,
            indices,
        })
    }

    /// Number of basis functions.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn index(&self, s: usize) -> &[u32] {
        &self.indices[s]
    }

    pub fn indices(&self) -> &[Vec<u32>] {
        &self.indices
    }

    /// Evaluates basis function `s` at the sample `xi` (length `m`).
    pub fn eval(&self, s: usize, xi: &[f64]) -> f64 {
        self.indices[s]
            .iter()
            .zip(xi)
            .map(|(&d, &x)| self.density.eval_poly(d as usize, x))
            .product()
    }

    /// Assembles the gPC matrices `G_0, ..., G_m`.
    ///
    /// `G_0` is the Gram matrix of the orthonormal basis, hence exactly the
    /// identity. For `i >= 1`, `[G_i]_{st} = <xi_i psi_s psi_t>` is nonzero
    /// only when the multi-indices of `s` and `t` agree except for a shift of
    /// one in coordinate `i`, and the value is the univariate recurrence
    /// coupling at the larger degree.
    pub fn assemble_g(&self) -> Vec<SparseMatrix> {
        let n = self.len();
        let mut out = Vec::with_capacity(self.m + 1);
        out.push(SparseMatrix::identity(n));

        let position: std::collections::HashMap<&[u32], usize> = self
            .indices
            .iter()
            .enumerate()
            .map(|(s, d)| (d.as_slice(), s))
            .collect();

        for i in 0..self.m {
            let mut triplets = Vec::new();
            for (s, d) in self.indices.iter().enumerate() {
                // neighbor with d_i + 1; the symmetric entry covers d_i - 1
                let mut up = d.clone();
                up[i] += 1;
                if let Some(&t) = position.get(up.as_slice()) {
                    let value = self.density.coupling(up[i] as usize);
                    triplets.push((s, t, value));
                    triplets.push((t, s, value));
                }
            }
            out.push(SparseMatrix::from_triplets(n, n, &triplets).expect("gpc triplets"));
        }
        out
    }
}

/// All multi-indices `d` in `N_0^m` with `|d|_1 <= d_tot`, graded
/// lexicographic: ascending total degree, lexicographic within a degree.
pub fn build_multi_index_set(m: usize, d_tot: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut current = vec![0u32; m];
    for degree in 0..=d_tot as u32 {
        compositions_into(&mut out, &mut current, 0, degree);
    }
    out
}

fn compositions_into(out: &mut Vec<Vec<u32>>, current: &mut Vec<u32>, pos: usize, remaining: u32) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(current.clone());
        return;
    }
    // descending leading entry gives lexicographic order within the grade
    for lead in (0..=remaining).rev() {
        current[pos] = lead;
        compositions_into(out, current, pos + 1, remaining - lead);
    }
    current[pos] = 0;
}

/// `binomial(m + d_tot, d_tot)` with overflow detection.
pub fn count_multi_indices(m: usize, d_tot: usize) -> Option<usize> {
    let mut acc: u128 = 1;
    for i in 1..=d_tot as u128 {
        acc = acc.checked_mul(m as u128 + i)?;
        acc /= i;
        if acc > usize::MAX as u128 {
            return None;
        }
    }
    Some(acc as usize)
}
