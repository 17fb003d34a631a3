//! Fourier transforms along the periodic x-direction.
//!
//! Fields are stored row-major (`j * nx + i`); the solver diagonalizes the
//! x-stencils per mode, so spectral data is kept column-major
//! (`k * nrows + j`) to make the per-mode z-solves contiguous.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

pub struct XSpectral {
    pub nx: usize,
    fw: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl XSpectral {
    pub fn new(nx: usize) -> Self {
        let mut planner = FftPlanner::new();
        XSpectral {
            nx,
            fw: planner.plan_fft_forward(nx),
            inv: planner.plan_fft_inverse(nx),
        }
    }

    /// Forward transform of `nrows` physical rows into mode-major layout.
    pub fn rows_to_modes(&self, src: &[f64], nrows: usize) -> Vec<Complex64> {
        let nx = self.nx;
        debug_assert_eq!(src.len(), nx * nrows);
        let rows: Vec<Vec<Complex64>> = crate::par::map_collect((0..nrows).collect(), |j| {
            let mut buf: Vec<Complex64> = src[j * nx..(j + 1) * nx]
                .iter()
                .map(|&v| Complex64::new(v, 0.0))
                .collect();
            self.fw.process(&mut buf);
            buf
        });
        let mut out = vec![Complex64::default(); nx * nrows];
        for (j, row) in rows.iter().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                out[k * nrows + j] = v;
            }
        }
        out
    }

    /// Inverse of `rows_to_modes`; writes the real parts into `dst`.
    pub fn modes_to_rows(&self, modes: &[Complex64], nrows: usize, dst: &mut [f64]) {
        let nx = self.nx;
        debug_assert_eq!(modes.len(), nx * nrows);
        debug_assert_eq!(dst.len(), nx * nrows);
        let scale = 1.0 / nx as f64;
        let rows: Vec<Vec<f64>> = crate::par::map_collect((0..nrows).collect(), |j| {
            let mut buf: Vec<Complex64> = (0..nx).map(|k| modes[k * nrows + j]).collect();
            self.inv.process(&mut buf);
            buf.iter().map(|c| c.re * scale).collect()
        });
        for (j, row) in rows.iter().enumerate() {
            dst[j * nx..(j + 1) * nx].copy_from_slice(row);
        }
    }

    /// Per-mode symbol of the centered first difference, `sin(k̃ Δx)/Δx`
    /// (the operator is `i·s_k`). Exactly zero for the mean and Nyquist
    /// modes — the projection pins those.
    pub fn symbol_dx(&self, dx: f64) -> Vec<f64> {
        let nx = self.nx;
        (0..nx)
            .map(|k| {
                if k == 0 || 2 * k == nx {
                    0.0
                } else {
                    let m = if k <= nx / 2 { k as f64 } else { k as f64 - nx as f64 };
                    (m * dx).sin() / dx
                }
            })
            .collect()
    }

    /// Per-mode symbol of the compact second difference,
    /// `-4 sin²(k̃ Δx/2)/Δx²`.
    pub fn symbol_dxx(&self, dx: f64) -> Vec<f64> {
        let nx = self.nx;
        (0..nx)
            .map(|k| {
                let m = if k <= nx / 2 { k as f64 } else { k as f64 - nx as f64 };
                let s = (0.5 * m * dx).sin();
                -4.0 * s * s / (dx * dx)
            })
            .collect()
    }
}

/// Real tridiagonal factorization reused across solves (Thomas algorithm).
/// Rows with `lower = upper = 0, diag = 1` act as boundary/pin rows.
#[derive(Debug, Clone)]
pub struct Tridiag {
    pub n: usize,
    mult: Vec<f64>,
    inv_diag: Vec<f64>,
    upper: Vec<f64>,
}

impl Tridiag {
    /// Factors the system; returns None when a pivot collapses.
    pub fn factor(lower: &[f64], diag: &[f64], upper: &[f64]) -> Option<Tridiag> {
        let n = diag.len();
        let mut mult = vec![0.0; n];
        let mut inv_diag = vec![0.0; n];
        let mut d = diag[0];
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        inv_diag[0] = 1.0 / d;
        for j in 1..n {
            mult[j] = lower[j] * inv_diag[j - 1];
            d = diag[j] - mult[j] * upper[j - 1];
            if d == 0.0 || !d.is_finite() {
                return None;
            }
            inv_diag[j] = 1.0 / d;
        }
        Some(Tridiag { n, mult, inv_diag, upper: upper.to_vec() })
    }

    /// Solves in place for a complex right-hand side.
    pub fn solve(&self, rhs: &mut [Complex64]) {
        let n = self.n;
        debug_assert_eq!(rhs.len(), n);
        for j in 1..n {
            let prev = rhs[j - 1];
            rhs[j] -= self.mult[j] * prev;
        }
        rhs[n - 1] *= self.inv_diag[n - 1];
        for j in (0..n - 1).rev() {
            let next = rhs[j + 1];
            rhs[j] = (rhs[j] - self.upper[j] * next) * self.inv_diag[j];
        }
    }
}
