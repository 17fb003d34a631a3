//! Crank–Nicolson diffusion solves: `(I − γΔ_d) f = rhs` with `f = 0` at both
//! walls, where `Δ_d` is the compact periodic second difference in x plus the
//! flux-form second difference in z.
//!
//! The flux form `(Δ_z f)_j = [(f_{j+1}−f_j)/h_j − (f_j−f_{j−1})/h_{j-1}]/w_j`
//! (identical to the compact 3-point interior stencil) is self-adjoint and
//! negative definite in the trapezoid inner product, so every CN half-step
//! removes energy: the dissipativity the energy suite asserts per step is
//! structural, not empirical.

use super::fft::{Tridiag, XSpectral};
use crate::fields::GridSpec;
use crate::{Error, Result};
use std::sync::Arc;

pub struct CnSolver {
    grid: Arc<GridSpec>,
    fft: Arc<XSpectral>,
    gamma: f64,
    factors: Vec<Tridiag>,
}

impl CnSolver {
    /// `gamma = dt·eps/2`; must be positive (skip the solver entirely for
    /// zero diffusivity).
    pub fn new(grid: &Arc<GridSpec>, fft: &Arc<XSpectral>, gamma: f64) -> Result<CnSolver> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::Domain(format!("CN coefficient must be positive, got {gamma}")));
        }
        let nz = grid.nz;
        let sxx = fft.symbol_dxx(grid.dx);
        let mut factors = Vec::with_capacity(grid.nx);
        for k in 0..grid.nx {
            let mut lower = vec![0.0; nz];
            let mut diag = vec![1.0; nz];
            let mut upper = vec![0.0; nz];
            for j in 1..nz - 1 {
                let a = grid.z[j] - grid.z[j - 1];
                let b = grid.z[j + 1] - grid.z[j];
                lower[j] = -gamma * 2.0 / (a * (a + b));
                upper[j] = -gamma * 2.0 / (b * (a + b));
                diag[j] = 1.0 - gamma * (sxx[k] - 2.0 / (a * b));
            }
            let f = Tridiag::factor(&lower, &diag, &upper).ok_or_else(|| {
                Error::Domain(format!("diffusion system is singular at mode {k}"))
            })?;
            factors.push(f);
        }
        Ok(CnSolver {
            grid: Arc::clone(grid),
            fft: Arc::clone(fft),
            gamma,
            factors,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Solves `(I − γΔ_d) f = rhs` with zero Dirichlet walls. Wall rows of
    /// `rhs` are ignored (treated as 0).
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let nz = self.grid.nz;
        let nx = self.grid.nx;
        let mut modes = self.fft.rows_to_modes(rhs, nz);
        let factors = &self.factors;
        crate::par::for_each_chunk_mut(&mut modes, nz, |k, col| {
            col[0] = Default::default();
            col[nz - 1] = Default::default();
            factors[k].solve(col);
        });
        let mut out = vec![0.0; nx * nz];
        self.fft.modes_to_rows(&modes, nz, &mut out);
        out
    }

    /// `γ·Δ_d f` at interior rows, 0 at wall rows — the explicit half of the
    /// CN update, built from the same stencils the implicit side inverts.
    pub fn explicit_half(&self, f: &[f64]) -> Vec<f64> {
        let grid = &self.grid;
        let n = grid.len();
        let mut dxx = vec![0.0; n];
        grid.dxx_slice(f, &mut dxx);
        let mut out = vec![0.0; n];
        let gamma = self.gamma;
        let z = &grid.z;
        let nx = grid.nx;
        let nz = grid.nz;
        crate::par::for_each_chunk_mut(&mut out, nx, |j, row| {
            if j == 0 || j == nz - 1 {
                for v in row.iter_mut() {
                    *v = 0.0;
                }
                return;
            }
            let a = z[j] - z[j - 1];
            let b = z[j + 1] - z[j];
            let (cl, cd, cu) = (2.0 / (a * (a + b)), -2.0 / (a * b), 2.0 / (b * (a + b)));
            let base = j * nx;
            for (i, v) in row.iter_mut().enumerate() {
                let lap_z =
                    cl * f[base - nx + i] + cd * f[base + i] + cu * f[base + nx + i];
                *v = gamma * (dxx[base + i] + lap_z);
            }
        });
        out
    }
}

/// The negative quadratic form `−(Δ_d f, f)_W = Σ faces (Δf)²/h ≥ 0` of a
/// field vanishing at the walls — the exact per-step dissipation rate of the
/// scheme, used by the energy-balance bookkeeping.
pub fn flux_dissipation(grid: &GridSpec, f: &[f64]) -> f64 {
    let nx = grid.nx;
    let nz = grid.nz;
    let inv_dx2 = 1.0 / (grid.dx * grid.dx);
    let mut total = 0.0;
    for j in 0..nz {
        let base = j * nx;
        let mut row = 0.0;
        for i in 0..nx {
            let ip = if i + 1 == nx { 0 } else { i + 1 };
            let d = f[base + ip] - f[base + i];
            row += d * d;
        }
        total += grid.wz[j] * row * inv_dx2;
    }
    for j in 0..nz - 1 {
        let base = j * nx;
        let inv_h = 1.0 / (grid.z[j + 1] - grid.z[j]);
        let mut row = 0.0;
        for i in 0..nx {
            let d = f[base + nx + i] - f[base + i];
            row += d * d;
        }
        total += row * inv_h;
    }
    total * grid.dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::build_grid;

    #[test]
    fn cn_step_matches_heat_decay() {
        // One CN step on the z-eigenfunction sin(πz): the discrete decay per
        // step must match (1−γλ_d)/(1+γλ_d) for the discrete eigenvalue λ_d,
        // and be within O(Δz²) of the analytic π².
        let grid = build_grid(4, 201, 1.0, 0.0).unwrap();
        let fft = Arc::new(XSpectral::new(grid.nx));
        let eps = 0.1;
        let dt = 1e-2;
        let solver = CnSolver::new(&grid, &fft, dt * eps / 2.0).unwrap();
        let pi = std::f64::consts::PI;
        let n = grid.len();
        let mut f = vec![0.0; n];
        for j in 0..grid.nz {
            for i in 0..grid.nx {
                f[grid.idx(i, j)] = (pi * grid.z[j]).sin();
            }
        }
        // rhs = f + γ Δf (the CN explicit half), walls 0.
        let half = solver.explicit_half(&f);
        let rhs: Vec<f64> = f.iter().zip(half.iter()).map(|(a, b)| a + b).collect();
        let out = solver.solve(&rhs);
        let lam = eps * pi * pi;
        let expected = (1.0 - dt * lam / 2.0) / (1.0 + dt * lam / 2.0);
        let mid = grid.idx(1, grid.nz / 2);
        let ratio = out[mid] / f[mid];
        assert!(
            (ratio - expected).abs() < 2e-4,
            "ratio {ratio}, expected {expected}"
        );
        // Walls stay exactly zero.
        for i in 0..grid.nx {
            assert_eq!(out[grid.idx(i, 0)], 0.0);
            assert_eq!(out[grid.idx(i, grid.nz - 1)], 0.0);
        }
    }

    #[test]
    fn solve_inverts_operator_on_stretched_grid() {
        let grid = build_grid(12, 41, 1.5, 2.5).unwrap();
        let fft = Arc::new(XSpectral::new(grid.nx));
        let solver = CnSolver::new(&grid, &fft, 3e-3).unwrap();
        // Manufactured solution with zero walls.
        let n = grid.len();
        let mut x_true = vec![0.0; n];
        for j in 0..grid.nz {
            for i in 0..grid.nx {
                let (x, z) = (grid.x[i], grid.z[j]);
                x_true[grid.idx(i, j)] = (2.0 * x).sin() * z * (1.5 - z);
            }
        }
        // rhs = x_true − γΔ x_true via the same discrete operator.
        let half = solver.explicit_half(&x_true);
        let rhs: Vec<f64> = x_true.iter().zip(half.iter()).map(|(a, b)| a - b).collect();
        let out = solver.solve(&rhs);
        for (a, b) in out.iter().zip(x_true.iter()) {
            assert!((a - b).abs() < 1e-11);
        }
    }

    #[test]
    fn dissipation_form_positive_and_exact_on_modes() {
        let grid = build_grid(16, 33, 1.0, 0.0).unwrap();
        let n = grid.len();
        let pi = std::f64::consts::PI;
        let mut f = vec![0.0; n];
        for j in 0..grid.nz {
            for i in 0..grid.nx {
                f[grid.idx(i, j)] = grid.x[i].sin() * (pi * grid.z[j]).sin();
            }
        }
        let q = flux_dissipation(&grid, &f);
        assert!(q > 0.0);
        // Operator identity: q = −(Δ_d f, f)_W for fields vanishing at walls.
        let fftw = Arc::new(XSpectral::new(grid.nx));
        let solver = CnSolver::new(&grid, &fftw, 1.0).unwrap();
        let lap = solver.explicit_half(&f);
        let mut ip = 0.0;
        for j in 0..grid.nz {
            for i in 0..grid.nx {
                ip += grid.wz[j] * lap[grid.idx(i, j)] * f[grid.idx(i, j)];
            }
        }
        ip *= grid.dx;
        assert!((q + ip).abs() <= 1e-10 * q, "q {q}, -(Lf,f) {}", -ip);
    }
}
