//! Skew-symmetric advection and field-coupling right-hand sides.
//!
//! `N(v, w) = ½ v·∇w + ½ ∇·(v ⊗ w)`, with the z-part of the divergence half
//! taken by the adjoint band `A₃ = −W⁻¹ D₃ᵀ W`. The quadratic form
//! `(N(v,w), w)_W` then vanishes identically (pairwise term cancellation in
//! exact arithmetic): advection and the symmetric coupling pairs contribute
//! only round-off to the discrete energy — the property the cancellation
//! studies measure.

use crate::fields::{GridSpec, WallRule};

/// One skew-advection application on one scalar component.
/// `out = ½(v1·Dx w + v3·Dz w) + ½(Dx(v1 w) + A3(v3 w))`.
pub fn skew_component(grid: &GridSpec, v1: &[f64], v3: &[f64], w: &[f64], out: &mut [f64]) {
    let n = grid.len();
    debug_assert!(v1.len() == n && v3.len() == n && w.len() == n && out.len() == n);
    let mut da = vec![0.0; n];
    let mut db = vec![0.0; n];
    let mut prod = vec![0.0; n];

    grid.dx_slice(w, &mut da);
    grid.dz_slice(w, &mut db, WallRule::OneSided);
    crate::par::for_each_chunk_mut(out, grid.nx, |j, row| {
        let base = j * grid.nx;
        for i in 0..row.len() {
            let q = base + i;
            row[i] = 0.5 * (v1[q] * da[q] + v3[q] * db[q]);
        }
    });

    for i in 0..n {
        prod[i] = v1[i] * w[i];
    }
    grid.dx_slice(&prod, &mut da);
    for i in 0..n {
        prod[i] = v3[i] * w[i];
    }
    grid.adz_slice(&prod, &mut db);
    crate::par::for_each_chunk_mut(out, grid.nx, |j, row| {
        let base = j * grid.nx;
        for i in 0..row.len() {
            let q = base + i;
            row[i] += 0.5 * (da[q] + db[q]);
        }
    });
}

/// Advection + coupling right-hand sides of both equations at one time level:
/// momentum `−N(u,u) + N(b,b)` and induction `−N(u,b) + N(b,u)`, per
/// component. When `freeze_b_walls` is set (the zero-magnetic-diffusion
/// reference system), the induction rows at both walls are zeroed: with
/// `u = 0` and `b₃ = 0` on a wall the analytic right-hand side vanishes
/// there, and zeroing the discrete rows keeps the wall values of `b` exactly
/// frozen instead of drifting at truncation order.
#[derive(Debug, Clone)]
pub struct CoupledRhs {
    pub fu1: Vec<f64>,
    pub fu3: Vec<f64>,
    pub fb1: Vec<f64>,
    pub fb3: Vec<f64>,
}

pub fn coupled_rhs(
    grid: &GridSpec,
    u1: &[f64],
    u3: &[f64],
    b1: &[f64],
    b3: &[f64],
    freeze_b_walls: bool,
) -> CoupledRhs {
    let n = grid.len();
    let mut fu1 = vec![0.0; n];
    let mut fu3 = vec![0.0; n];
    let mut fb1 = vec![0.0; n];
    let mut fb3 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    // Momentum: −N(u,u) + N(b,b).
    skew_component(grid, u1, u3, u1, &mut fu1);
    skew_component(grid, b1, b3, b1, &mut tmp);
    for i in 0..n {
        fu1[i] = tmp[i] - fu1[i];
    }
    skew_component(grid, u1, u3, u3, &mut fu3);
    skew_component(grid, b1, b3, b3, &mut tmp);
    for i in 0..n {
        fu3[i] = tmp[i] - fu3[i];
    }

    // Induction: −N(u,b) + N(b,u).
    skew_component(grid, u1, u3, b1, &mut fb1);
    skew_component(grid, b1, b3, u1, &mut tmp);
    for i in 0..n {
        fb1[i] = tmp[i] - fb1[i];
    }
    skew_component(grid, u1, u3, b3, &mut fb3);
    skew_component(grid, b1, b3, u3, &mut tmp);
    for i in 0..n {
        fb3[i] = tmp[i] - fb3[i];
    }

    if freeze_b_walls {
        let nx = grid.nx;
        let top = (grid.nz - 1) * nx;
        for i in 0..nx {
            fb1[i] = 0.0;
            fb3[i] = 0.0;
            fb1[top + i] = 0.0;
            fb3[top + i] = 0.0;
        }
    }

    CoupledRhs { fu1, fu3, fb1, fb3 }
}
