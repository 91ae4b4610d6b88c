//! Karhunen-Loeve eigenpairs of the separable exponential covariance kernel
//! `exp(-|x1 - y1|/c - |x2 - y2|/c)` on the unit square.
//!
//! The 2D eigenpairs factor into products of 1D eigenpairs of
//! `exp(-|s - t|/c)` on `[0, 1]`, which have the classical closed form: with
//! `b = 1/c`, the eigenvalues are `2b / (w^2 + b^2)` where `w` runs over the
//! positive roots of a pair of transcendental equations, one per symmetry
//! class of the eigenfunction about the interval midpoint. Written in
//! pole-free form with the interval centered at zero (half-length 1/2):
//!
//! ```text
//! even modes:  b cos(w/2) - w sin(w/2) = 0,   w in (2k pi, (2k+1) pi)
//! odd modes:   w cos(w/2) + b sin(w/2) = 0,   w in ((2k+1) pi, (2k+2) pi)
//! ```
//!
//! so consecutive brackets `(k pi, (k+1) pi)` alternate between the two
//! classes and the eigenvalues come out ordered. Roots are found by plain
//! bisection, which the bracket structure makes safe.

use crate::{Error, Result};

/// One 1D eigenpair of the exponential kernel on `[0, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct Kl1dPair {
    pub lambda: f64,
    /// Frequency of the mode.
    pub omega: f64,
    /// Eigenfunctions alternate between cosine (even about 1/2) and sine
    /// (odd about 1/2) modes.
    pub even: bool,
    /// L2([0,1]) normalization constant.
    norm: f64,
}

impl Kl1dPair {
    /// Evaluates the (unit L2 norm) eigenfunction at `x` in `[0, 1]`.
    pub fn eval(&self, x: f64) -> f64 {
        let t = x - 0.5;
        let raw = if self.even {
            (self.omega * t).cos()
        } else {
            (self.omega * t).sin()
        };
        raw / self.norm
    }
}

/// Computes the `count` largest 1D eigenpairs for correlation length `c`.
pub fn kl_eigenpairs_1d(c: f64, count: usize) -> Result<Vec<Kl1dPair>> {
    if c <= 0.0 {
        return Err(Error::Config(format!("correlation length {} <= 0", c)));
    }
    let b = 1.0 / c;
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let even = k % 2 == 0;
        let lo = k as f64 * std::f64::consts::PI;
        let hi = (k + 1) as f64 * std::f64::consts::PI;
        let f = |w: f64| -> f64 {
            if even {
                b * (w / 2.0).cos() - w * (w / 2.0).sin()
            } else {
                w * (w / 2.0).cos() + b * (w / 2.0).sin()
            }
        };
        let omega = bisect(f, lo, hi).map_err(|msg| {
            Error::RootFinding(format!(
                "mode {} ({} class) in bracket ({:.6}, {:.6}): {}",
                k,
                if even { "even" } else { "odd" },
                lo,
                hi,
                msg
            ))
        })?;
        let lambda = 2.0 * b / (omega * omega + b * b);
        let sinw = omega.sin();
        let norm_sq = if even {
            0.5 + sinw / (2.0 * omega)
        } else {
            0.5 - sinw / (2.0 * omega)
        };
        out.push(Kl1dPair {
            lambda,
            omega,
            even,
            norm: norm_sq.sqrt(),
        });
    }
    Ok(out)
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> std::result::Result<f64, String> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo * fhi > 0.0 {
        return Err(format!(
            "no sign change: f(lo) = {:.3e}, f(hi) = {:.3e}",
            flo, fhi
        ));
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        let fmid = f(mid);
        if fmid == 0.0 {
            return Ok(mid);
        }
        if flo * fmid < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fmid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// A 2D eigenpair: product of two 1D pairs.
#[derive(Debug, Clone, Copy)]
pub struct Kl2dPair {
    pub lambda: f64,
    pub jx: usize,
    pub jy: usize,
}

/// Truncated KL expansion of the random field
/// `a(x, xi) = mu + sigma * sum_i sqrt(lambda_i) phi_i(x) xi_i`.
#[derive(Debug, Clone)]
pub struct KlExpansion {
    pub mu: f64,
    pub sigma: f64,
    pub c: f64,
    pub m: usize,
    one_d: Vec<Kl1dPair>,
    pairs: Vec<Kl2dPair>,
}

impl KlExpansion {
    /// Builds the `m`-term expansion: the `m` largest products of 1D
    /// eigenpairs, sorted by eigenvalue descending with `(jx, jy)`
    /// lexicographic tie-breaking.
    pub fn new(mu: f64, sigma: f64, c: f64, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Config("KL expansion needs m >= 1".into()));
        }
        // the top-m products only ever involve the top-m 1D modes
        let one_d = kl_eigenpairs_1d(c, m)?;
        let mut pairs = Vec::with_capacity(m * m);
        for jx in 0..m {
            for jy in 0..m {
                pairs.push(Kl2dPair {
                    lambda: one_d[jx].lambda * one_d[jy].lambda,
                    jx,
                    jy,
                });
            }
        }
        pairs.sort_by(|a, b| {
            b.lambda
                .partial_cmp(&a.lambda)
                .unwrap()
                .then((a.jx, a.jy).cmp(&(b.jx, b.jy)))
        });
        pairs.truncate(m);
        Ok(KlExpansion {
            mu,
            sigma,
            c,
            m,
            one_d,
            pairs,
        })
    }

    pub fn pairs(&self) -> &[Kl2dPair] {
        &self.pairs
    }

    /// 2D eigenfunction of term `i` (1-based like the expansion index is
    /// usually written; here 0-based) at `(x1, x2)`.
    pub fn eval_phi(&self, i: usize, x1: f64, x2: f64) -> f64 {
        let p = &self.pairs[i];
        self.one_d[p.jx].eval(x1) * self.one_d[p.jy].eval(x2)
    }

    /// Coefficient function `a_i(x) = sigma * sqrt(lambda_i) * phi_i(x)` for
    /// `i >= 1`; `a_0` is the constant mean.
    pub fn coefficient(&self, i: usize) -> impl Fn(f64, f64) -> f64 + '_ {
        move |x1, x2| {
            if i == 0 {
                self.mu
            } else {
                let p = &self.pairs[i - 1];
                self.sigma * p.lambda.sqrt() * self.eval_phi(i - 1, x1, x2)
            }
        }
    }
}
