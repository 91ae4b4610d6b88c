//! Q1 finite element assembly on the unit square with homogeneous Dirichlet
//! boundary conditions.
//!
//! The mesh is uniform with `2^level` square elements per side; interior
//! nodes are numbered lexicographically with the `x1` index running fastest,
//! which keeps the stiffness matrices banded.

use crate::{Error, LowRankFactors, Result, SparseMatrix};
#[cfg(test)]
use crate::DenseMatrix;

/// Gauss quadrature rule used for the coefficient integrals on each element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementQuadrature {
    /// 2x2 tensor Gauss (default).
    Gauss2,
    /// 3x3 tensor Gauss.
    Gauss3,
}

impl ElementQuadrature {
    fn points_1d(&self) -> Vec<(f64, f64)> {
        match self {
            ElementQuadrature::Gauss2 => {
                let a = 1.0 / 3.0f64.sqrt();
                vec![(-a, 1.0), (a, 1.0)]
            }
            ElementQuadrature::Gauss3 => {
                let a = (3.0f64 / 5.0).sqrt();
                vec![(-a, 5.0 / 9.0), (0.0, 8.0 / 9.0), (a, 5.0 / 9.0)]
            }
        }
    }
}

/// The uniform Q1 grid at a refinement level.
#[derive(Debug, Clone, Copy)]
pub struct Grid {
    pub level: u32,
}

impl Grid {
    pub fn new(level: u32) -> Result<Self> {
        if level < 2 {
            return Err(Error::Config(format!(
                "grid level {} < 2 leaves no usable interior",
                level
            )));
        }
        Ok(Grid { level })
    }

    /// Elements per side.
    pub fn cells_per_side(&self) -> usize {
        1usize << self.level
    }

    /// Interior nodes per side.
    pub fn interior_per_side(&self) -> usize {
        self.cells_per_side() - 1
    }

    /// Total interior node count `n_x = (2^level - 1)^2`.
    pub fn n_interior(&self) -> usize {
        let n = self.interior_per_side();
        n * n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.cells_per_side() as f64
    }

    /// Interior node id for 1-based grid coordinates, `x1` fastest.
    fn node_id(&self, ix: usize, iy: usize) -> Option<usize> {
        let n = self.interior_per_side();
        if ix >= 1 && ix <= n && iy >= 1 && iy <= n {
            Some((iy - 1) * n + (ix - 1))
        } else {
            None
        }
    }

    /// Physical coordinates of an interior node id.
    pub fn node_coords(&self, id: usize) -> (f64, f64) {
        let n = self.interior_per_side();
        let ix = id % n + 1;
        let iy = id / n + 1;
        (ix as f64 * self.h(), iy as f64 * self.h())
    }
}

// Reference Q1 shape function gradients on [-1, 1]^2, corner order
// (-,-), (+,-), (+,+), (-,+).
fn shape_gradients(xi: f64, eta: f64) -> [[f64; 2]; 4] {
    [
        [-0.25 * (1.0 - eta), -0.25 * (1.0 - xi)],
        [0.25 * (1.0 - eta), -0.25 * (1.0 + xi)],
        [0.25 * (1.0 + eta), 0.25 * (1.0 + xi)],
        [-0.25 * (1.0 + eta), 0.25 * (1.0 - xi)],
    ]
}

/// Assembles the stiffness matrix `[K]_{kl} = int a(x) grad phi_k . grad
/// phi_l dx` over the interior nodes. For bilinear elements on squares the
/// element matrices reduce to reference-gradient products weighted by the
/// coefficient at the quadrature points, independent of `h`.
pub fn assemble_stiffness(
    grid: Grid,
    coeff: &dyn Fn(f64, f64) -> f64,
    quad: ElementQuadrature,
) -> SparseMatrix {
    let cells = grid.cells_per_side();
    let h = grid.h();
    let pts = quad.points_1d();
    let n = grid.n_interior();
    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(n * 9);

    for ey in 0..cells {
        for ex in 0..cells {
            // corner nodes in grid coordinates (may be boundary)
            let corners = [
                (ex, ey),
                (ex + 1, ey),
                (ex + 1, ey + 1),
                (ex, ey + 1),
            ];
            let mut local = [[0.0f64; 4]; 4];
            for &(xi, wx) in &pts {
                for &(eta, wy) in &pts {
                    let x1 = (ex as f64 + 0.5 * (xi + 1.0)) * h;
                    let x2 = (ey as f64 + 0.5 * (eta + 1.0)) * h;
                    let a = coeff(x1, x2) * wx * wy;
                    let g = shape_gradients(xi, eta);
                    for r in 0..4 {
                        for c in 0..4 {
                            local[r][c] += a * (g[r][0] * g[c][0] + g[r][1] * g[c][1]);
                        }
                    }
                }
            }
            for r in 0..4 {
                let Some(gr) = grid.node_id(corners[r].0, corners[r].1) else {
                    continue;
                };
                for c in 0..4 {
                    let Some(gc) = grid.node_id(corners[c].0, corners[c].1) else {
                        continue;
                    };
                    triplets.push((gr, gc, local[r][c]));
                }
            }
        }
    }
    SparseMatrix::from_triplets(n, n, &triplets).expect("stiffness triplets in range")
}

/// Assembles the full matrix list `K_0, ..., K_m` for coefficient functions
/// `a_0, ..., a_m`. Emits a warning when `a_0` is not strictly positive at
/// the quadrature points (the mean-based preconditioner then has no SPD
/// factor).
pub fn assemble_k(
    grid: Grid,
    coeffs: &[&dyn Fn(f64, f64) -> f64],
    quad: ElementQuadrature,
) -> Vec<SparseMatrix> {
    if let Some(a0) = coeffs.first() {
        let mut min_val = f64::INFINITY;
        let cells = grid.cells_per_side();
        let h = grid.h();
        for ey in 0..cells {
            for ex in 0..cells {
                for &(xi, _) in &quad.points_1d() {
                    for &(eta, _) in &quad.points_1d() {
                        let x1 = (ex as f64 + 0.5 * (xi + 1.0)) * h;
                        let x2 = (ey as f64 + 0.5 * (eta + 1.0)) * h;
                        min_val = min_val.min(a0(x1, x2));
                    }
                }
            }
        }
        if min_val <= 0.0 {
            log::warn!(
                "mean coefficient reaches {:.3e} <= 0 on the quadrature grid; K_0 may not be SPD",
                min_val
            );
        }
    }
    coeffs
        .iter()
        .map(|a| assemble_stiffness(grid, a, quad))
        .collect()
}

/// Assembles the rank-one right-hand side `B = f0 g0'` for unit forcing:
/// `f0` holds the loads `int phi_k dx = h^2` and `g0` is the first
/// coordinate vector (the mean of every non-constant basis function
/// vanishes).
pub fn assemble_rhs(grid: Grid, n_xi: usize) -> LowRankFactors {
    let h = grid.h();
    let f0 = vec![h * h; grid.n_interior()];
    let mut g0 = vec![0.0; n_xi];
    g0[0] = 1.0;
    LowRankFactors::rank_one(&f0, &g0)
}

/// Dense reference assembly used to cross-check [`assemble_stiffness`]; this
/// accumulates straight into a dense matrix with independently derived
/// shape-function formulas.
#[cfg(test)]
pub fn assemble_stiffness_dense_oracle(
    grid: Grid,
    coeff: &dyn Fn(f64, f64) -> f64,
    pts: &[(f64, f64)],
) -> DenseMatrix {
    let cells = grid.cells_per_side();
    let h = grid.h();
    let n = grid.n_interior();
    let mut out = DenseMatrix::zeros(n, n);
    // nodal bilinear hat on [0,1]^2 reference element, corner (cx, cy):
    // N(u, v) = (cx ? u : 1-u) * (cy ? v : 1-v); gradient scaled by 1/h.
    let corners = [(0usize, 0usize), (1, 0), (1, 1), (0, 1)];
    let dshape = |cx: usize, cy: usize, u: f64, v: f64| -> (f64, f64) {
        let su = if cx == 1 { u } else { 1.0 - u };
        let sv = if cy == 1 { v } else { 1.0 - v };
        let du = if cx == 1 { 1.0 } else { -1.0 };
        let dv = if cy == 1 { 1.0 } else { -1.0 };
        (du * sv, su * dv)
    };
    for ey in 0..cells {
        for ex in 0..cells {
            for &(gx, wx) in pts {
                for &(gy, wy) in pts {
                    // map from [-1,1] to [0,1] on the element
                    let u = 0.5 * (gx + 1.0);
                    let v = 0.5 * (gy + 1.0);
                    let x1 = (ex as f64 + u) * h;
                    let x2 = (ey as f64 + v) * h;
                    // dx = h^2/4 per unit quadrature weight on [-1,1]^2;
                    // physical gradients carry 1/h each
                    let scale = coeff(x1, x2) * wx * wy * 0.25;
                    for (r, &(rx, ry)) in corners.iter().enumerate() {
                        let Some(gr) = grid.node_id(ex + rx, ey + ry) else {
                            continue;
                        };
                        let (dru, drv) = dshape(corners[r].0, corners[r].1, u, v);
                        for (c, &(cx, cy)) in corners.iter().enumerate() {
                            let Some(gc) = grid.node_id(ex + cx, ey + cy) else {
                                continue;
                            };
                            let (dcu, dcv) = dshape(corners[c].0, corners[c].1, u, v);
                            let add = scale * (dru * dcu + drv * dcv);
                            out.set(gr, gc, out.get(gr, gc) + add);
                        }
                    }
                }
            }
        }
    }
    out
}
