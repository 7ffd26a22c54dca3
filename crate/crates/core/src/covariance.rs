//! Estimation of the asymptotic covariance ingredients λ_Inn, λ_Res and
//! Σ₂ from a single observed pattern, and the normalizations Σ₁^{-1/2},
//! Σ̂₂^{-1/2}.
//!
//! All estimators share one structure: per-cell statistics `Y_Δ` on a
//! δ_n-grid combined through the double sum
//! `|Λ|⁻¹ Σ_i Σ_{‖j−i‖_∞ ≤ ⌈D∨/δ_n⌉} Y_i Yⱼᵀ`,
//! with `Y = I_Δ(φ; h, θ̂)` for λ_Inn and `Y = R̂_∞,Δ` for λ_Res / Σ₂.

use crate::error::Error;
use crate::geometry::{CellGrid, Cube};
use crate::model::{dot, removable_points};
use crate::mple::estimate_w_hat;
use crate::quadrature::{scan_model_nodes, NodeEval, NodeRule};
use crate::residual::{clamped_exp, max_nearest_radius, TestFunction};
use crate::workspace::Workspace;
use nalgebra::DMatrix;
use serde::Serialize;

/// Covariance estimates attached to a goodness-of-fit report.
#[derive(Debug, Clone, Serialize)]
pub struct CovarianceEstimate {
    pub lambda_inn: f64,
    pub lambda_res: Option<f64>,
    pub sigma2: Option<Vec<Vec<f64>>>,
    /// Realized cell side δ_n of the estimation grid.
    pub delta_n: f64,
    pub d_vee: f64,
    pub cells_used: usize,
}

/// Per-cell innovations (one row per test function) and per-cell
/// pseudolikelihood gradients, all evaluated on a grid-aligned node layout
/// so that cell values recompose window values exactly.
pub(crate) struct CellBreakdown {
    /// `innovations[h][cell]`
    pub innovations: Vec<Vec<f64>>,
    /// `lpl_grad[cell * p + i]`
    pub lpl_grad: Vec<f64>,
    pub cell_count: usize,
}

impl CellBreakdown {
    /// `R̂_∞` for test function `h_idx` on every cell, given Ŵ.
    pub fn r_infinity(&self, h_idx: usize, w_hat: &[f64]) -> Vec<f64> {
        let p = w_hat.len();
        (0..self.cell_count)
            .map(|k| {
                self.innovations[h_idx][k]
                    - dot(&self.lpl_grad[k * p..(k + 1) * p], w_hat)
            })
            .collect()
    }
}

impl Workspace<'_> {
    pub(crate) fn per_cell_breakdown(
        &self,
        theta_hat: &[f64],
        hs: &[TestFunction],
        grid: &CellGrid,
    ) -> Result<CellBreakdown, Error> {
        for h in hs {
            h.validate(self.model().param_len())?;
        }
        self.check_grid(grid)?;
        self.check_guard(&self.domain().window())?;
        let p = self.model().param_len();
        let cells = grid.cell_count();
        let rule = NodeRule::aligned_to_grid(grid, self.quadrature());
        let m = rule.nodes_per_cell_axis;
        let per_axis = grid.cells_per_axis();
        let cutoff = max_nearest_radius(hs);

        let mut innovations = vec![vec![0.0; cells]; hs.len()];
        let mut lpl_grad = vec![0.0; cells * p];
        scan_model_nodes(
            self.model(),
            theta_hat,
            self.index(),
            &rule,
            cutoff,
            |node: &NodeEval| -> Result<(), Error> {
                let mut cell = 0usize;
                for &lat in node.lattice {
                    cell = cell * per_axis + lat / m;
                }
                for (h, acc) in hs.iter().zip(innovations.iter_mut()) {
                    let val = h.integrand(node, theta_hat, self.config());
                    if !val.is_finite() {
                        return Err(Error::NonFiniteIntegrand {
                            position: node.position.to_vec(),
                            mark: node.mark,
                        });
                    }
                    acc[cell] += node.weight * val;
                }
                let w = node.weight * clamped_exp(-node.energy);
                for (slot, v) in lpl_grad[cell * p..(cell + 1) * p].iter_mut().zip(node.stats) {
                    *slot += w * v;
                }
                Ok(())
            },
        )?;

        // point sums, bucketed by cell
        let window = self.domain().window();
        let points = removable_points(self.model(), self.config(), &window);
        crate::quadrature::scan_config_points(
            self.model(),
            theta_hat,
            self.index(),
            &points,
            cutoff,
            |pt: &crate::quadrature::PointEval| -> Result<(), Error> {
                let Some(cell) = grid.cell_of(pt.position) else {
                    return Ok(());
                };
                let reduced = hs
                    .iter()
                    .any(|h| h.is_custom())
                    .then(|| self.config().without(pt.index));
                for (h, acc) in hs.iter().zip(innovations.iter_mut()) {
                    acc[cell] -= h.point_value(pt, theta_hat, reduced.as_ref());
                }
                for (slot, v) in lpl_grad[cell * p..(cell + 1) * p].iter_mut().zip(pt.stats) {
                    *slot -= v;
                }
                Ok(())
            },
        )?;

        Ok(CellBreakdown {
            innovations,
            lpl_grad,
            cell_count: cells,
        })
    }

    fn check_grid(&self, grid: &CellGrid) -> Result<(), Error> {
        let window = self.domain().window();
        let tol = 1e-9 * window.side;
        let aligned = grid
            .origin()
            .iter()
            .zip(window.lower.iter())
            .all(|(a, b)| (a - b).abs() <= tol)
            && (grid.cell_side() * grid.cells_per_axis() as f64 - window.side).abs() <= tol;
        if !aligned {
            return Err(Error::GridMismatch(
                "cell grid does not partition the analysis window".into(),
            ));
        }
        Ok(())
    }

    fn neighbor_reach(&self, grid: &CellGrid, d_vee: f64) -> Result<usize, Error> {
        if d_vee < self.model().range() {
            return Err(Error::GridMismatch(format!(
                "D∨ = {d_vee} is below the model range {}",
                self.model().range()
            )));
        }
        Ok(((d_vee / grid.cell_side()) - 1e-9).ceil().max(0.0) as usize)
    }

    /// `R̂_∞` on an arbitrary cell: the innovation at θ̂ minus the cell's
    /// pseudolikelihood gradient contracted with Ŵ. The cell integral uses
    /// the full-window quadrature nodes restricted to the cell, so cells
    /// recompose the window exactly.
    pub fn r_infinity_hat(
        &self,
        theta_hat: &[f64],
        h: &TestFunction,
        cell: &Cube,
        w_hat: &[f64],
    ) -> Result<f64, Error> {
        h.validate(self.model().param_len())?;
        let window = self.domain().window();
        self.check_guard(&window)?;
        let p = self.model().param_len();
        let rule = NodeRule::for_region(&window, self.quadrature());
        let cutoff = h.nearest_radius();
        let mut innovation = 0.0;
        let mut lpl = vec![0.0; p];
        scan_model_nodes(
            self.model(),
            theta_hat,
            self.index(),
            &rule,
            cutoff,
            |node: &NodeEval| -> Result<(), Error> {
                if !cell.contains(node.position) {
                    return Ok(());
                }
                innovation += node.weight * h.integrand(node, theta_hat, self.config());
                let w = node.weight * clamped_exp(-node.energy);
                for (slot, v) in lpl.iter_mut().zip(node.stats) {
                    *slot += w * v;
                }
                Ok(())
            },
        )?;
        let points = removable_points(self.model(), self.config(), cell);
        crate::quadrature::scan_config_points(
            self.model(),
            theta_hat,
            self.index(),
            &points,
            cutoff,
            |pt: &crate::quadrature::PointEval| -> Result<(), Error> {
                let reduced = h.is_custom().then(|| self.config().without(pt.index));
                innovation -= h.point_value(pt, theta_hat, reduced.as_ref());
                for (slot, v) in lpl.iter_mut().zip(pt.stats) {
                    *slot -= v;
                }
                Ok(())
            },
        )?;
        Ok(innovation - dot(&lpl, w_hat))
    }

    /// `R̂_∞` on every cell of `grid` in one pass (flat cell order).
    pub fn r_infinity_cells(
        &self,
        theta_hat: &[f64],
        h: &TestFunction,
        grid: &CellGrid,
        w_hat: &[f64],
    ) -> Result<Vec<f64>, Error> {
        let breakdown = self.per_cell_breakdown(theta_hat, std::slice::from_ref(h), grid)?;
        Ok(breakdown.r_infinity(0, w_hat))
    }

    /// `λ̂_Inn`: the double sum of per-cell innovations at θ̂.
    pub fn lambda_inn_hat(
        &self,
        theta_hat: &[f64],
        h: &TestFunction,
        grid: &CellGrid,
        d_vee: f64,
    ) -> Result<f64, Error> {
        let breakdown =
            self.per_cell_breakdown(theta_hat, std::slice::from_ref(h), grid)?;
        let reach = self.neighbor_reach(grid, d_vee)?;
        let m = double_sum(&[breakdown.innovations[0].clone()], grid, reach);
        Ok(m[(0, 0)] / self.domain().window().volume())
    }

    /// `λ̂_Res`: the same double sum with `R̂_∞` in place of the innovations.
    pub fn lambda_res_hat(
        &self,
        theta_hat: &[f64],
        h: &TestFunction,
        grid: &CellGrid,
        d_vee: f64,
        w_hat: &[f64],
    ) -> Result<f64, Error> {
        let breakdown =
            self.per_cell_breakdown(theta_hat, std::slice::from_ref(h), grid)?;
        let reach = self.neighbor_reach(grid, d_vee)?;
        let rinf = breakdown.r_infinity(0, w_hat);
        let m = double_sum(&[rinf], grid, reach);
        Ok(m[(0, 0)] / self.domain().window().volume())
    }

    /// `Σ̂₂`: outer-product double sum of the `R̂_∞` vectors of `hs`.
    pub fn sigma2_hat(
        &self,
        theta_hat: &[f64],
        hs: &[TestFunction],
        grid: &CellGrid,
        d_vee: f64,
        w_hats: &[Vec<f64>],
    ) -> Result<DMatrix<f64>, Error> {
        assert_eq!(hs.len(), w_hats.len());
        let breakdown = self.per_cell_breakdown(theta_hat, hs, grid)?;
        let reach = self.neighbor_reach(grid, d_vee)?;
        let rows: Vec<Vec<f64>> = (0..hs.len())
            .map(|j| breakdown.r_infinity(j, &w_hats[j]))
            .collect();
        let m = double_sum(&rows, grid, reach) / self.domain().window().volume();
        // kill roundoff asymmetry
        Ok((&m + m.transpose()) * 0.5)
    }

    /// Convenience: Ŵ for each test function at θ̂ on the window rule.
    pub fn w_hats(
        &self,
        theta_hat: &[f64],
        hs: &[TestFunction],
    ) -> Result<Vec<Vec<f64>>, Error> {
        let h_hat = self.estimate_h_hat(theta_hat)?;
        hs.iter()
            .map(|h| {
                let e_hat = self.estimate_e_hat(theta_hat, h)?;
                estimate_w_hat(&h_hat, &e_hat)
            })
            .collect()
    }
}

/// `Σ_i Σ_{‖j−i‖_∞ ≤ reach} Y_i Yⱼᵀ` over the cells of `grid`, where the
/// `q`-vector `Y_k` is `(rows[0][k], …, rows[q−1][k])`.
fn double_sum(rows: &[Vec<f64>], grid: &CellGrid, reach: usize) -> DMatrix<f64> {
    let q = rows.len();
    let dim = grid.dim();
    let per_axis = grid.cells_per_axis() as i64;
    let reach = reach as i64;
    let mut out = DMatrix::<f64>::zeros(q, q);
    let cells = grid.cell_count();
    let mut offset = vec![-reach; dim];
    for i in 0..cells {
        let lat = grid.lattice(i);
        offset.iter_mut().for_each(|o| *o = -reach);
        'offsets: loop {
            // neighbor lattice coordinate, if inside the grid
            let mut j = 0usize;
            let mut valid = true;
            for ax in 0..dim {
                let c = lat[ax] as i64 + offset[ax];
                if c < 0 || c >= per_axis {
                    valid = false;
                    break;
                }
                j = j * per_axis as usize + c as usize;
            }
            if valid {
                for a in 0..q {
                    let ya = rows[a][i];
                    for b in 0..q {
                        out[(a, b)] += ya * rows[b][j];
                    }
                }
            }
            let mut ax = 0;
            loop {
                if ax == dim {
                    break 'offsets;
                }
                offset[ax] += 1;
                if offset[ax] > reach {
                    offset[ax] = -reach;
                    ax += 1;
                } else {
                    break;
                }
            }
        }
    }
    out
}

/// Closed-form `Σ₁^{-1/2}` from the two eigenvalues of
/// `Σ₁ = λ_Inn·I + |J|⁻¹(λ_Res − λ_Inn)·𝟙𝟙ᵀ`.
pub fn sigma1_inv_sqrt(
    lambda_inn: f64,
    lambda_res: f64,
    j: usize,
) -> Result<DMatrix<f64>, Error> {
    if j < 2 {
        return Err(Error::GridMismatch(
            "Σ₁ normalization needs at least two subdomains".into(),
        ));
    }
    for (name, lambda) in [("λ_Inn", lambda_inn), ("λ_Res", lambda_res)] {
        if !(lambda > 0.0) {
            return Err(Error::DegenerateNormalization {
                context: format!("Σ₁^(-1/2): eigenvalue {name} = {lambda} is not positive"),
                eigenvalues: vec![lambda_inn, lambda_res],
            });
        }
    }
    let a = lambda_inn.sqrt().recip();
    let b = (lambda_res.sqrt().recip() - a) / j as f64;
    let mut out = DMatrix::<f64>::from_element(j, j, b);
    for k in 0..j {
        out[(k, k)] += a;
    }
    Ok(out)
}

/// Symmetric inverse square root of a positive-definite matrix by
/// eigendecomposition; eigenvalues at or below `1e-10·λ_max` are refused.
pub fn matrix_inv_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>, Error> {
    let eig = a.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let floor = 1e-10 * max;
    if eig.eigenvalues.iter().any(|&l| l <= floor) || !(max > 0.0) {
        return Err(Error::DegenerateNormalization {
            context: "matrix inverse square root".into(),
            eigenvalues: eig.eigenvalues.iter().cloned().collect(),
        });
    }
    let q = &eig.eigenvectors;
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.sqrt().recip()));
    let b = q * inv_sqrt * q.transpose();
    Ok((&b + b.transpose()) * 0.5)
}
