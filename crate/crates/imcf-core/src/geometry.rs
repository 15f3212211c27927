//! Pointwise geometry of the graph hypersurface in the upper half-space model.
//!
//! The ambient metric is y^{-2}(|dx|^2 + dy^2); the surface is the graph
//! (x, y(x)) over the periodic torus. All spatial derivatives are second-order
//! centered differences with periodic wrap, so every field below carries an
//! O(h^2) discretization error relative to its closed form.

use crate::error::{Error, Result};
use crate::grid::{GraphState, Grid};

/// Per-point vector; component 1 is zero for one-dimensional grids.
pub type Vec2 = [f64; 2];
/// Per-point 2x2 tensor; row/column 1 are zero for one-dimensional grids.
pub type Mat2 = [[f64; 2]; 2];

/// Everything pointwise the flow, the certificates and the analysis consume.
#[derive(Debug, Clone)]
pub struct GeometryFields {
    pub dim: usize,
    /// Euclidean gradient of y.
    pub grad: Vec<Vec2>,
    /// Euclidean Hessian of y; symmetric by construction of the stencil.
    pub hess: Vec<Mat2>,
    /// Slope factor v = sqrt(1 + |grad y|^2).
    pub v: Vec<f64>,
    /// w = 1/(v y); bounded below on mean-convex solutions.
    pub w: Vec<f64>,
    /// Induced metric g_ij = (delta_ij + y_i y_j) / y^2.
    pub metric: Vec<Mat2>,
    /// g^{ij} = y^2 delta_tilde^{ij}.
    pub metric_inv: Vec<Mat2>,
    /// det g = v^2 / y^{2 dim}.
    pub det_metric: Vec<f64>,
    /// delta_tilde^{ij} = delta^{ij} - y^i y^j / v^2; eigenvalues in [1/v^2, 1].
    pub delta_tilde: Vec<Mat2>,
    /// Mean curvature H = (dim + y delta_tilde^{ij} y_ij) / v.
    pub mean_curv: Vec<f64>,
    /// Shape operator A_i^j = (y delta_tilde^{ik} y_kj + delta_i^j) / v.
    /// Its trace equals H to rounding; it equals the identity on horospheres.
    pub shape: Vec<Mat2>,
    /// |A|^2 = A_i^j A_j^i.
    pub shape_norm2: Vec<f64>,
    /// Umbilicity defect G = |A|^2 - 2H + dim >= 0, zero exactly on horospheres.
    pub umbilicity: Vec<f64>,
    /// Largest eigenvalue of P = (v y) A.
    pub p_max: Vec<f64>,
    /// M = H A.
    pub m_op: Vec<Mat2>,
    /// Diffusion coefficient (y^2 / H^2) delta_tilde of the height equation;
    /// positive definite (hence finite) wherever H > 0.
    pub diff_coeff: Vec<Mat2>,
}

/// Centered first and second differences of the height field.
pub fn derivatives(state: &GraphState) -> (Vec<Vec2>, Vec<Mat2>) {
    let grid = state.grid;
    let n = grid.points_per_axis();
    let h = grid.spacing();
    let inv2h = 1.0 / (2.0 * h);
    let invh2 = 1.0 / (h * h);
    let inv4h2 = 1.0 / (4.0 * h * h);
    let np = grid.num_points();
    let mut grad = vec![[0.0; 2]; np];
    let mut hess = vec![[[0.0; 2]; 2]; np];

    if grid.dim() == 1 {
        for i in 0..n {
            let ip = grid.wrap(i as isize + 1);
            let im = grid.wrap(i as isize - 1);
            let (yc, yp, ym) = (state.at(i, 0), state.at(ip, 0), state.at(im, 0));
            grad[i][0] = (yp - ym) * inv2h;
            hess[i][0][0] = (yp - 2.0 * yc + ym) * invh2;
        }
    } else {
        for i in 0..n {
            let ip = grid.wrap(i as isize + 1);
            let im = grid.wrap(i as isize - 1);
            for j in 0..n {
                let jp = grid.wrap(j as isize + 1);
                let jm = grid.wrap(j as isize - 1);
                let p = grid.flat(i, j);
                let yc = state.at(i, j);
                let (ypc, ymc) = (state.at(ip, j), state.at(im, j));
                let (ycp, ycm) = (state.at(i, jp), state.at(i, jm));
                grad[p][0] = (ypc - ymc) * inv2h;
                grad[p][1] = (ycp - ycm) * inv2h;
                hess[p][0][0] = (ypc - 2.0 * yc + ymc) * invh2;
                hess[p][1][1] = (ycp - 2.0 * yc + ycm) * invh2;
                let mixed = (state.at(ip, jp) - state.at(ip, jm) - state.at(im, jp)
                    + state.at(im, jm))
                    * inv4h2;
                hess[p][0][1] = mixed;
                hess[p][1][0] = mixed;
            }
        }
    }
    (grad, hess)
}

/// Centered first differences of an arbitrary scalar field on the grid.
pub fn scalar_gradient(grid: Grid, f: &[f64]) -> Vec<Vec2> {
    let n = grid.points_per_axis();
    let inv2h = 1.0 / (2.0 * grid.spacing());
    let mut out = vec![[0.0; 2]; grid.num_points()];
    if grid.dim() == 1 {
        for i in 0..n {
            let ip = grid.wrap(i as isize + 1);
            let im = grid.wrap(i as isize - 1);
            out[i][0] = (f[ip] - f[im]) * inv2h;
        }
    } else {
        for i in 0..n {
            let ip = grid.wrap(i as isize + 1);
            let im = grid.wrap(i as isize - 1);
            for j in 0..n {
                let jp = grid.wrap(j as isize + 1);
                let jm = grid.wrap(j as isize - 1);
                let p = grid.flat(i, j);
                out[p][0] = (f[grid.flat(ip, j)] - f[grid.flat(im, j)]) * inv2h;
                out[p][1] = (f[grid.flat(i, jp)] - f[grid.flat(i, jm)]) * inv2h;
            }
        }
    }
    out
}

/// Largest eigenvalue of a 2x2 operator with real spectrum (self-adjoint with
/// respect to a positive metric); the discriminant is clamped at zero against
/// rounding.
#[inline]
fn eig_max_2x2(m: &Mat2) -> f64 {
    let (a, b, c, d) = (m[0][0], m[0][1], m[1][0], m[1][1]);
    let tr = a + d;
    let disc = ((a - d) * (a - d) + 4.0 * b * c).max(0.0);
    0.5 * (tr + disc.sqrt())
}

/// All pointwise fields of the current state.
pub fn geometry(state: &GraphState) -> Result<GeometryFields> {
    let grid = state.grid;
    let dim = grid.dim();
    let np = grid.num_points();
    let (grad, hess) = derivatives(state);

    let mut fields = GeometryFields {
        dim,
        grad,
        hess,
        v: vec![0.0; np],
        w: vec![0.0; np],
        metric: vec![[[0.0; 2]; 2]; np],
        metric_inv: vec![[[0.0; 2]; 2]; np],
        det_metric: vec![0.0; np],
        delta_tilde: vec![[[0.0; 2]; 2]; np],
        mean_curv: vec![0.0; np],
        shape: vec![[[0.0; 2]; 2]; np],
        shape_norm2: vec![0.0; np],
        umbilicity: vec![0.0; np],
        p_max: vec![0.0; np],
        m_op: vec![[[0.0; 2]; 2]; np],
        diff_coeff: vec![[[0.0; 2]; 2]; np],
    };

    for p in 0..np {
        let y = state.y()[p];
        if !(y > 0.0) {
            return Err(Error::NonPositiveHeight { index: p, value: y });
        }
        let g = fields.grad[p];
        let hs = fields.hess[p];
        let g2 = g[0] * g[0] + g[1] * g[1];
        let v2 = 1.0 + g2;
        let v = v2.sqrt();
        fields.v[p] = v;
        fields.w[p] = 1.0 / (v * y);

        let mut dt = [[0.0; 2]; 2];
        for i in 0..dim {
            for j in 0..dim {
                let kron = if i == j { 1.0 } else { 0.0 };
                dt[i][j] = kron - g[i] * g[j] / v2;
            }
        }
        fields.delta_tilde[p] = dt;

        let y2 = y * y;
        let mut trace_term = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                trace_term += dt[i][j] * hs[i][j];
                fields.metric[p][i][j] =
                    ((if i == j { 1.0 } else { 0.0 }) + g[i] * g[j]) / y2;
                fields.metric_inv[p][i][j] = y2 * dt[i][j];
            }
        }
        fields.det_metric[p] = v2 / y2.powi(dim as i32);

        let h_mean = (dim as f64 + y * trace_term) / v;
        fields.mean_curv[p] = h_mean;

        let mut shape = [[0.0; 2]; 2];
        for i in 0..dim {
            for j in 0..dim {
                let mut dt_hess = 0.0;
                for k in 0..dim {
                    dt_hess += dt[i][k] * hs[k][j];
                }
                shape[i][j] = (y * dt_hess + if i == j { 1.0 } else { 0.0 }) / v;
            }
        }
        fields.shape[p] = shape;

        let mut norm2 = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                norm2 += shape[i][j] * shape[j][i];
                fields.m_op[p][i][j] = h_mean * shape[i][j];
                fields.diff_coeff[p][i][j] = y2 / (h_mean * h_mean) * dt[i][j];
            }
        }
        fields.shape_norm2[p] = norm2;
        fields.umbilicity[p] = norm2 - 2.0 * h_mean + dim as f64;
        fields.p_max[p] = if dim == 1 {
            v * y * shape[0][0]
        } else {
            let scaled = [
                [v * y * shape[0][0], v * y * shape[0][1]],
                [v * y * shape[1][0], v * y * shape[1][1]],
            ];
            eig_max_2x2(&scaled)
        };
    }
    Ok(fields)
}

/// Graph speed F = -y v^2 / (dim + y delta_tilde^{ij} y_ij) = -y v / H.
///
/// Strictly negative on admissible states; errors where the denominator vH
/// drops to or below zero.
pub fn speed(state: &GraphState) -> Result<Vec<f64>> {
    let grid = state.grid;
    let dim = grid.dim();
    let np = grid.num_points();
    let (grad, hess) = derivatives(state);
    let mut out = vec![0.0; np];
    for p in 0..np {
        let y = state.y()[p];
        if !(y > 0.0) {
            return Err(Error::NonPositiveHeight { index: p, value: y });
        }
        let g = grad[p];
        let g2 = g[0] * g[0] + g[1] * g[1];
        let v2 = 1.0 + g2;
        let mut trace_term = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                let kron = if i == j { 1.0 } else { 0.0 };
                trace_term += (kron - g[i] * g[j] / v2) * hess[p][i][j];
            }
        }
        let denom = dim as f64 + y * trace_term;
        if !(denom > 0.0) {
            return Err(Error::LostMeanConvexity { index: p, stage: 0 });
        }
        out[p] = -y * v2 / denom;
    }
    Ok(out)
}

/// Laplace-Beltrami operator of the induced metric in divergence form,
/// discretized conservatively: fluxes at half points for the diagonal part,
/// centered node derivatives for the mixed part. Exactly zero on constants;
/// O(h^2) on smooth fields.
pub fn laplace_beltrami(state: &GraphState, f: &[f64]) -> Result<Vec<f64>> {
    let grid = state.grid;
    let n = grid.points_per_axis();
    let np = grid.num_points();
    if f.len() != np {
        return Err(Error::InvalidGrid {
            reason: format!("field has {} values, grid has {np} points", f.len()),
        });
    }
    let h = grid.spacing();
    let inv2h = 1.0 / (2.0 * h);
    let invh2 = 1.0 / (h * h);
    let (grad, _) = derivatives(state);

    // c^{jk} = sqrt(det g) g^{jk}; sqrt(det g) = v / y^dim.
    let dim = grid.dim();
    let mut sqrt_det = vec![0.0; np];
    let mut coeff = vec![[[0.0; 2]; 2]; np];
    for p in 0..np {
        let y = state.y()[p];
        if !(y > 0.0) {
            return Err(Error::NonPositiveHeight { index: p, value: y });
        }
        let g = grad[p];
        let g2 = g[0] * g[0] + g[1] * g[1];
        let v2 = 1.0 + g2;
        let v = v2.sqrt();
        let sd = v / y.powi(dim as i32);
        sqrt_det[p] = sd;
        for i in 0..dim {
            for j in 0..dim {
                let kron = if i == j { 1.0 } else { 0.0 };
                coeff[p][i][j] = sd * y * y * (kron - g[i] * g[j] / v2);
            }
        }
    }

    let mut out = vec![0.0; np];
    if dim == 1 {
        for i in 0..n {
            let ip = grid.wrap(i as isize + 1);
            let im = grid.wrap(i as isize - 1);
            let cp = 0.5 * (coeff[i][0][0] + coeff[ip][0][0]);
            let cm = 0.5 * (coeff[im][0][0] + coeff[i][0][0]);
            let div = (cp * (f[ip] - f[i]) - cm * (f[i] - f[im])) * invh2;
            out[i] = div / sqrt_det[i];
        }
    } else {
        // Node-centered first differences of f feed the mixed fluxes.
        let df = scalar_gradient(grid, f);
        for i in 0..n {
            let ip = grid.wrap(i as isize + 1);
            let im = grid.wrap(i as isize - 1);
            for j in 0..n {
                let jp = grid.wrap(j as isize + 1);
                let jm = grid.wrap(j as isize - 1);
                let p = grid.flat(i, j);
                let (ppj, pmj) = (grid.flat(ip, j), grid.flat(im, j));
                let (pjp, pjm) = (grid.flat(i, jp), grid.flat(i, jm));

                let cxp = 0.5 * (coeff[p][0][0] + coeff[ppj][0][0]);
                let cxm = 0.5 * (coeff[pmj][0][0] + coeff[p][0][0]);
                let cyp = 0.5 * (coeff[p][1][1] + coeff[pjp][1][1]);
                let cym = 0.5 * (coeff[pjm][1][1] + coeff[p][1][1]);
                let diag = (cxp * (f[ppj] - f[p]) - cxm * (f[p] - f[pmj])) * invh2
                    + (cyp * (f[pjp] - f[p]) - cym * (f[p] - f[pjm])) * invh2;

                let cross = (coeff[ppj][0][1] * df[ppj][1] - coeff[pmj][0][1] * df[pmj][1])
                    * inv2h
                    + (coeff[pjp][1][0] * df[pjp][0] - coeff[pjm][1][0] * df[pjm][0]) * inv2h;

                out[p] = (diag + cross) / sqrt_det[p];
            }
        }
    }
    Ok(out)
}
