//! Staggered-pressure projection.
//!
//! The potential lives at z-cell centers (`nx × (nz−1)`), divergence is
//! measured at those cells from the node velocities, and the correction
//! gradient writes interior nodes only, so wall values are never touched.
//! The gradient is built as the exact negative adjoint of the cell divergence
//! in the trapezoid inner product; the composed operator is tridiagonal per
//! x-mode, and the projection is therefore *orthogonal*: it can only remove
//! energy, and it zeroes the cell divergence to round-off.
//!
//! Modes whose centered-difference symbol vanishes (mean and Nyquist) have a
//! pure Neumann z-operator; their compatibility holds exactly by telescoping
//! (wall-normal velocities are zero) and one cell value is pinned.

use super::fft::{Tridiag, XSpectral};
use crate::fields::GridSpec;
use crate::{Error, Result};
use std::sync::Arc;

pub struct Projector {
    grid: Arc<GridSpec>,
    fft: Arc<XSpectral>,
    /// Cell rows (nz − 1).
    m: usize,
    pinned: Vec<bool>,
    factors: Vec<Tridiag>,
    /// Unpinned assembly kept for consistency checks: (lower, diag, upper) per mode.
    #[cfg_attr(not(test), allow(dead_code))]
    raw: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>,
}

impl Projector {
    pub fn new(grid: &Arc<GridSpec>, fft: &Arc<XSpectral>) -> Result<Projector> {
        let nz = grid.nz;
        let m = nz - 1;
        let sdx = fft.symbol_dx(grid.dx);
        let wz = &grid.wz;
        let dzc = &grid.dzc;
        let mut factors = Vec::with_capacity(grid.nx);
        let mut raw = Vec::with_capacity(grid.nx);
        let mut pinned = vec![false; grid.nx];
        for (k, &s) in sdx.iter().enumerate() {
            let s2 = s * s;
            let mut lower = vec![0.0; m];
            let mut diag = vec![0.0; m];
            let mut upper = vec![0.0; m];
            for j in 1..nz - 1 {
                // x-part: node j carries the adjoint spread of cells j−1, j;
                // the cell divergence averages nodes j−1,j and j,j+1.
                let w0 = dzc[j - 1] / (2.0 * wz[j]);
                let w1 = dzc[j] / (2.0 * wz[j]);
                let f = -0.5 * s2;
                diag[j - 1] += f * w0;
                upper[j - 1] += f * w1;
                lower[j] += f * w0;
                diag[j] += f * w1;
                // z-part: (φ_j − φ_{j−1})/wz_j differenced back to cells.
                let gl = 1.0 / (wz[j] * dzc[j - 1]);
                let gr = 1.0 / (wz[j] * dzc[j]);
                diag[j - 1] -= gl;
                upper[j - 1] += gl;
                diag[j] -= gr;
                lower[j] += gr;
            }
            raw.push((lower.clone(), diag.clone(), upper.clone()));
            if s == 0.0 {
                pinned[k] = true;
                diag[0] = 1.0;
                upper[0] = 0.0;
            }
            let f = Tridiag::factor(&lower, &diag, &upper).ok_or_else(|| {
                Error::Domain(format!("projection system is singular at mode {k}"))
            })?;
            factors.push(f);
        }
        Ok(Projector {
            grid: Arc::clone(grid),
            fft: Arc::clone(fft),
            m,
            pinned,
            factors,
            raw,
        })
    }

    pub fn cells(&self) -> usize {
        self.m * self.grid.nx
    }

    /// Divergence at z-cells from node velocities.
    pub fn div_cells(&self, v1: &[f64], v3: &[f64]) -> Vec<f64> {
        cell_divergence(&self.grid, v1, v3)
    }

    pub fn max_abs_div(&self, v1: &[f64], v3: &[f64]) -> f64 {
        self.div_cells(v1, v3).iter().fold(0.0f64, |a, &v| a.max(v.abs()))
    }

    /// Adjoint-consistent gradient of a cell potential: node fields
    /// `(∂_x φ, ∂_z φ)`, zero at wall rows.
    pub fn grad_nodes(&self, phi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let grid = &self.grid;
        let nx = grid.nx;
        let nz = grid.nz;
        let n = grid.len();
        let inv2dx = 0.5 / grid.dx;
        let mut gx = vec![0.0; n];
        let mut gz = vec![0.0; n];
        let wz = &grid.wz;
        let dzc = &grid.dzc;
        crate::par::for_each_chunk_mut(&mut gx, nx, |j, row| {
            if j == 0 || j == nz - 1 {
                return;
            }
            let lo = (j - 1) * nx;
            let hi = j * nx;
            let inv_w = 1.0 / (2.0 * wz[j]);
            let (dl, dr) = (dzc[j - 1], dzc[j]);
            let mut spread = vec![0.0; nx];
            for i in 0..nx {
                spread[i] = (dl * phi[lo + i] + dr * phi[hi + i]) * inv_w;
            }
            for i in 0..nx {
                let ip = if i + 1 == nx { 0 } else { i + 1 };
                let im = if i == 0 { nx - 1 } else { i - 1 };
                row[i] = (spread[ip] - spread[im]) * inv2dx;
            }
        });
        crate::par::for_each_chunk_mut(&mut gz, nx, |j, row| {
            if j == 0 || j == nz - 1 {
                return;
            }
            let lo = (j - 1) * nx;
            let hi = j * nx;
            let inv_w = 1.0 / wz[j];
            for i in 0..nx {
                row[i] = (phi[hi + i] - phi[lo + i]) * inv_w;
            }
        });
        (gx, gz)
    }

    /// Solves `L φ = div(v)/scale` and corrects `v ← v − scale·∇φ` on the
    /// interior. Returns the cell potential and the energy removed,
    /// `‖scale·∇φ‖²_W`.
    ///
    /// The removal is exact (Pythagoras) when the tangential component
    /// vanishes at the walls — always true on the viscous branch. A nonzero
    /// wall `v1` (slip walls, frozen magnetic walls) adds a wall-boundary
    /// term to the ledger of order `dzc_wall·∂_x φ·v1|_wall`.
    pub fn project(&self, v1: &mut [f64], v3: &mut [f64], scale: f64) -> Result<(Vec<f64>, f64)> {
        let grid = &self.grid;
        let nx = grid.nx;
        let nz = grid.nz;
        let m = self.m;
        let div = self.div_cells(v1, v3);
        let mut modes = self.fft.rows_to_modes(&div, m);
        let inv_scale = 1.0 / scale;
        let factors = &self.factors;
        let pinned = &self.pinned;
        crate::par::for_each_chunk_mut(&mut modes, m, |k, col| {
            for v in col.iter_mut() {
                *v *= inv_scale;
            }
            if pinned[k] {
                col[0] = Default::default();
            }
            factors[k].solve(col);
        });
        let mut phi = vec![0.0; self.cells()];
        self.fft.modes_to_rows(&modes, m, &mut phi);
        let (gx, gz) = self.grad_nodes(&phi);
        crate::par::for_each_chunk_mut(v1, nx, |j, row| {
            if j == 0 || j == nz - 1 {
                return;
            }
            let base = j * nx;
            for (i, v) in row.iter_mut().enumerate() {
                *v -= scale * gx[base + i];
            }
        });
        crate::par::for_each_chunk_mut(v3, nx, |j, row| {
            if j == 0 || j == nz - 1 {
                return;
            }
            let base = j * nx;
            for (i, v) in row.iter_mut().enumerate() {
                *v -= scale * gz[base + i];
            }
        });
        let mut removed = 0.0;
        for j in 0..nz {
            let base = j * nx;
            let mut row = 0.0;
            for i in 0..nx {
                row += gx[base + i] * gx[base + i] + gz[base + i] * gz[base + i];
            }
            removed += grid.wz[j] * row;
        }
        removed *= grid.dx * scale * scale;
        Ok((phi, removed))
    }

    /// Applies the unpinned assembled operator spectrally (consistency checks).
    #[cfg(test)]
    fn apply_raw(&self, phi: &[f64]) -> Vec<f64> {
        use rustfft::num_complex::Complex64;
        let m = self.m;
        let modes = self.fft.rows_to_modes(phi, m);
        let mut out_modes = vec![Complex64::default(); modes.len()];
        for k in 0..self.grid.nx {
            let (lower, diag, upper) = &self.raw[k];
            let col = &modes[k * m..(k + 1) * m];
            let out = &mut out_modes[k * m..(k + 1) * m];
            for c in 0..m {
                let mut acc = diag[c] * col[c];
                if c > 0 {
                    acc += lower[c] * col[c - 1];
                }
                if c + 1 < m {
                    acc += upper[c] * col[c + 1];
                }
                out[c] = acc;
            }
        }
        let mut out = vec![0.0; self.cells()];
        self.fft.modes_to_rows(&out_modes, m, &mut out);
        out
    }
}

/// Cell potential interpolated to nodes (diagnostic output only; wall rows
/// copy the nearest cell).
/// The staggered cell divergence the projection enforces: centered-x
/// difference of node-averaged `v1` plus the z-difference of `v3` over the
/// cell height. One value per z-cell, `nx·(nz−1)` total.
pub fn cell_divergence(grid: &GridSpec, v1: &[f64], v3: &[f64]) -> Vec<f64> {
    let nx = grid.nx;
    let inv2dx = 0.5 / grid.dx;
    let mut out = vec![0.0; nx * (grid.nz - 1)];
    let dzc = &grid.dzc;
    crate::par::for_each_chunk_mut(&mut out, nx, |c, row| {
        let lo = c * nx;
        let hi = (c + 1) * nx;
        let inv_d = 1.0 / dzc[c];
        let mut avg = vec![0.0; nx];
        for i in 0..nx {
            avg[i] = 0.5 * (v1[lo + i] + v1[hi + i]);
        }
        for i in 0..nx {
            let ip = if i + 1 == nx { 0 } else { i + 1 };
            let im = if i == 0 { nx - 1 } else { i - 1 };
            row[i] = (avg[ip] - avg[im]) * inv2dx + (v3[hi + i] - v3[lo + i]) * inv_d;
        }
    });
    out
}

pub fn cells_to_nodes(grid: &GridSpec, phi: &[f64]) -> Vec<f64> {
    let nx = grid.nx;
    let nz = grid.nz;
    let m = nz - 1;
    debug_assert_eq!(phi.len(), m * nx);
    let mut out = vec![0.0; grid.len()];
    for i in 0..nx {
        out[i] = phi[i];
        out[(nz - 1) * nx + i] = phi[(m - 1) * nx + i];
    }
    for j in 1..nz - 1 {
        let (w0, w1) = grid.iz_node[j];
        for i in 0..nx {
            out[j * nx + i] = w0 * phi[(j - 1) * nx + i] + w1 * phi[j * nx + i];
        }
    }
    out
}
