//! Collocated channel grid, finite-difference operators, quadrature and norms.
//!
//! The domain is the periodic channel `[0, 2π) x [0, h]`: uniform nodes in x,
//! optionally tanh-clustered nodes in z so wall layers stay resolved. All
//! derivative stencils are second order (centered in the interior, one-sided
//! 3-point at the walls); quadrature is trapezoidal in z and periodic-uniform
//! in x. Fields are immutable value types over an `Arc`-shared grid, so they
//! can be fanned out across threads freely.

use crate::{Error, Result};
use std::sync::Arc;

/// Which wall a wall-relative operation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wall {
    Lower,
    Upper,
}

/// Wall handling for z-derivatives.
///
/// `OneSided` uses second-order one-sided stencils at the wall rows.
/// `MirrorZero` odd-extends the field across the wall; it is only meaningful
/// for fields that vanish there (the caller's responsibility).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WallRule {
    #[default]
    OneSided,
    MirrorZero,
}

/// Channel grid: `nx` uniform periodic nodes in x on `[0, 2π)`, `nz` nodes in
/// z on `[0, h]`, tanh-clustered toward both walls when `stretch > 0`.
#[derive(Debug)]
pub struct GridSpec {
    pub nx: usize,
    pub nz: usize,
    pub h: f64,
    pub stretch: f64,
    /// x nodes, `x[i] = 2π i / nx`.
    pub x: Vec<f64>,
    /// Uniform x spacing `2π / nx`.
    pub dx: f64,
    /// z nodes, strictly increasing, `z[0] = 0`, `z[nz-1] = h`.
    pub z: Vec<f64>,
    /// Trapezoid quadrature weights in z.
    pub wz: Vec<f64>,
    /// z-cell centers `(z[j] + z[j+1]) / 2`, length `nz - 1`.
    pub zc: Vec<f64>,
    /// z-cell widths `z[j+1] - z[j]`, length `nz - 1`.
    pub dzc: Vec<f64>,
    /// First-derivative stencil in z: per row, (coefficients, 3 column indices).
    dz_rows: Vec<([f64; 3], [usize; 3])>,
    /// Second-derivative stencil in z (compact interior, one-sided walls).
    dzz_rows: Vec<([f64; 3], [usize; 3])>,
    /// Adjoint-form derivative `-W^{-1} Dz^T W`, stored as banded rows
    /// (bandwidth 2): per row, 5 coefficients for columns `j-2..=j+2`.
    adz_rows: Vec<[f64; 5]>,
    /// Linear-interpolation weights from z-cells to interior nodes:
    /// `node j = iz[j].0 * cell(j-1) + iz[j].1 * cell(j)` for `1 <= j <= nz-2`.
    pub(crate) iz_node: Vec<(f64, f64)>,
}

impl GridSpec {
    /// Flat index of node `(i, j)`; x is contiguous within each z-row.
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Total node count `nx * nz`.
    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.nz
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Smallest z spacing (at the walls for tanh grids).
    pub fn min_dz(&self) -> f64 {
        self.dzc.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Builds and validates a grid.
///
/// Constraints: `nx >= 4` and even (the x direction is transformed with an
/// FFT whose Nyquist mode the projection treats specially), `nz >= 5`
/// (one-sided stencils need three rows per wall), `h > 0`, `stretch >= 0`
/// (0 = uniform z spacing).
pub fn build_grid(nx: usize, nz: usize, h: f64, stretch: f64) -> Result<Arc<GridSpec>> {
    if nx < 4 || nx % 2 != 0 {
        return Err(Error::config("nx", format!("must be even and >= 4, got {nx}")));
    }
    if nz < 5 {
        return Err(Error::config("nz", format!("must be >= 5, got {nz}")));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::config("h", format!("must be positive and finite, got {h}")));
    }
    if !(stretch >= 0.0) || !stretch.is_finite() {
        return Err(Error::config("stretch", format!("must be >= 0 and finite, got {stretch}")));
    }

    let dx = 2.0 * std::f64::consts::PI / nx as f64;
    let x: Vec<f64> = (0..nx).map(|i| i as f64 * dx).collect();

    let mut z = vec![0.0; nz];
    for (j, zj) in z.iter_mut().enumerate() {
        let xi = j as f64 / (nz - 1) as f64;
        *zj = if stretch > 0.0 {
            0.5 * h * (1.0 + (stretch * (2.0 * xi - 1.0)).tanh() / stretch.tanh())
        } else {
            h * xi
        };
    }
    z[0] = 0.0;
    z[nz - 1] = h;

    let mut wz = vec![0.0; nz];
    wz[0] = 0.5 * (z[1] - z[0]);
    wz[nz - 1] = 0.5 * (z[nz - 1] - z[nz - 2]);
    for j in 1..nz - 1 {
        wz[j] = 0.5 * (z[j + 1] - z[j - 1]);
    }

    let zc: Vec<f64> = (0..nz - 1).map(|j| 0.5 * (z[j] + z[j + 1])).collect();
    let dzc: Vec<f64> = (0..nz - 1).map(|j| z[j + 1] - z[j]).collect();

    // First-derivative rows: second order on arbitrary spacings.
    let mut dz_rows = Vec::with_capacity(nz);
    {
        let (a, b) = (z[1] - z[0], z[2] - z[1]);
        dz_rows.push((
            [
                -(2.0 * a + b) / (a * (a + b)),
                (a + b) / (a * b),
                -a / (b * (a + b)),
            ],
            [0, 1, 2],
        ));
    }
    for j in 1..nz - 1 {
        let (a, b) = (z[j] - z[j - 1], z[j + 1] - z[j]);
        dz_rows.push((
            [
                -b / (a * (a + b)),
                (b - a) / (a * b),
                a / (b * (a + b)),
            ],
            [j - 1, j, j + 1],
        ));
    }
    {
        let (a, b) = (z[nz - 1] - z[nz - 2], z[nz - 2] - z[nz - 3]);
        dz_rows.push((
            [
                (2.0 * a + b) / (a * (a + b)),
                -(a + b) / (a * b),
                a / (b * (a + b)),
            ],
            [nz - 1, nz - 2, nz - 3],
        ));
    }

    // Second-derivative rows: compact 3-point (exact on quadratics).
    let mut dzz_rows = Vec::with_capacity(nz);
    {
        let (d1, d2) = (z[1] - z[0], z[2] - z[0]);
        dzz_rows.push((
            [
                2.0 / (d1 * d2),
                -2.0 / (d1 * (d2 - d1)),
                2.0 / (d2 * (d2 - d1)),
            ],
            [0, 1, 2],
        ));
    }
    for j in 1..nz - 1 {
        let (a, b) = (z[j] - z[j - 1], z[j + 1] - z[j]);
        dzz_rows.push((
            [
                2.0 / (a * (a + b)),
                -2.0 / (a * b),
                2.0 / (b * (a + b)),
            ],
            [j - 1, j, j + 1],
        ));
    }
    {
        let (d1, d2) = (z[nz - 1] - z[nz - 2], z[nz - 1] - z[nz - 3]);
        dzz_rows.push((
            [
                2.0 / (d1 * d2),
                -2.0 / (d1 * (d2 - d1)),
                2.0 / (d2 * (d2 - d1)),
            ],
            [nz - 1, nz - 2, nz - 3],
        ));
    }

    // Adjoint-form derivative A = -W^{-1} Dz^T W, assembled into 5-point bands.
    // Row k of A collects contributions -wz[j] * c / wz[k] from every Dz row j
    // whose stencil touches column k.
    let mut adz_rows = vec![[0.0f64; 5]; nz];
    for (j, (coefs, cols)) in dz_rows.iter().enumerate() {
        for (c, &k) in coefs.iter().zip(cols.iter()) {
            let off = j as isize - k as isize; // A[k][j] needs offset j-k in -2..=2
            debug_assert!((-2..=2).contains(&off));
            adz_rows[k][(off + 2) as usize] += -wz[j] * c / wz[k];
        }
    }

    let mut iz_node = vec![(0.0, 0.0); nz];
    for j in 1..nz - 1 {
        let t = (z[j] - zc[j - 1]) / (zc[j] - zc[j - 1]);
        iz_node[j] = (1.0 - t, t);
    }

    Ok(Arc::new(GridSpec {
        nx,
        nz,
        h,
        stretch,
        x,
        dx,
        z,
        wz,
        zc,
        dzc,
        dz_rows,
        dzz_rows,
        adz_rows,
        iz_node,
    }))
}

/// A scalar sample on the grid nodes.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub grid: Arc<GridSpec>,
    pub v: Vec<f64>,
}

/// A 2-component vector sample `(f1, f3)` (x- and z-components).
#[derive(Debug, Clone)]
pub struct VectorField {
    pub f1: ScalarField,
    pub f3: ScalarField,
}

/// The norm bundle attached to fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormSet {
    /// `L²` over the channel.
    pub l2: f64,
    /// Max-node magnitude.
    pub linf: f64,
    /// `L²` of the z-derivative.
    pub l2_dz: f64,
    /// `L²` of `z ∂_z` on the lower half, `(h−z) ∂_z` on the upper half.
    pub l2_z_weighted: f64,
    /// Sup of `z² ∂_z` on the lower half, `(h−z)² ∂_z` on the upper half.
    pub linf_z2_weighted: f64,
}

impl ScalarField {
    /// Wraps raw values (length must be `nx * nz`).
    pub fn from_values(grid: Arc<GridSpec>, v: Vec<f64>) -> Result<Self> {
        if v.len() != grid.len() {
            return Err(Error::Precondition(format!(
                "field length {} does not match grid {}x{}",
                v.len(),
                grid.nx,
                grid.nz
            )));
        }
        Ok(ScalarField { grid, v })
    }

    /// Samples a function of `(x, z)` on the nodes.
    pub fn sample(grid: &Arc<GridSpec>, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut v = vec![0.0; grid.len()];
        for j in 0..grid.nz {
            let zj = grid.z[j];
            let row = &mut v[j * grid.nx..(j + 1) * grid.nx];
            for (i, out) in row.iter_mut().enumerate() {
                *out = f(grid.x[i], zj);
            }
        }
        ScalarField { grid: Arc::clone(grid), v }
    }

    /// Constant-zero field.
    pub fn zeros(grid: &Arc<GridSpec>) -> Self {
        ScalarField { grid: Arc::clone(grid), v: vec![0.0; grid.len()] }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.v[self.grid.idx(i, j)]
    }
}

impl VectorField {
    pub fn sample(
        grid: &Arc<GridSpec>,
        f: impl Fn(f64, f64) -> [f64; 2],
    ) -> Self {
        let mut v1 = vec![0.0; grid.len()];
        let mut v3 = vec![0.0; grid.len()];
        for j in 0..grid.nz {
            let zj = grid.z[j];
            for i in 0..grid.nx {
                let val = f(grid.x[i], zj);
                v1[grid.idx(i, j)] = val[0];
                v3[grid.idx(i, j)] = val[1];
            }
        }
        VectorField {
            f1: ScalarField { grid: Arc::clone(grid), v: v1 },
            f3: ScalarField { grid: Arc::clone(grid), v: v3 },
        }
    }

    pub fn zeros(grid: &Arc<GridSpec>) -> Self {
        VectorField { f1: ScalarField::zeros(grid), f3: ScalarField::zeros(grid) }
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.f1.grid
    }
}

// ---------------------------------------------------------------------------
// Low-level slice operators (shared by field ops and the solver).
// ---------------------------------------------------------------------------

impl GridSpec {
    /// Centered periodic x-derivative of a full `nx*nz` array.
    pub fn dx_slice(&self, src: &[f64], dst: &mut [f64]) {
        let nx = self.nx;
        let half = 0.5 / self.dx;
        crate::par::for_each_chunk_mut(dst, nx, |j, out| {
            let row = &src[j * nx..(j + 1) * nx];
            for i in 0..nx {
                let ip = if i + 1 == nx { 0 } else { i + 1 };
                let im = if i == 0 { nx - 1 } else { i - 1 };
                out[i] = (row[ip] - row[im]) * half;
            }
        });
    }

    /// Compact periodic second x-derivative.
    pub fn dxx_slice(&self, src: &[f64], dst: &mut [f64]) {
        let nx = self.nx;
        let inv2 = 1.0 / (self.dx * self.dx);
        crate::par::for_each_chunk_mut(dst, nx, |j, out| {
            let row = &src[j * nx..(j + 1) * nx];
            for i in 0..nx {
                let ip = if i + 1 == nx { 0 } else { i + 1 };
                let im = if i == 0 { nx - 1 } else { i - 1 };
                out[i] = (row[ip] - 2.0 * row[i] + row[im]) * inv2;
            }
        });
    }

    /// z-derivative with the chosen wall rule.
    pub fn dz_slice(&self, src: &[f64], dst: &mut [f64], rule: WallRule) {
        let nx = self.nx;
        let rows = &self.dz_rows;
        let z = &self.z;
        let nz = self.nz;
        crate::par::for_each_chunk_mut(dst, nx, |j, out| {
            match rule {
                WallRule::MirrorZero if j == 0 => {
                    // Odd extension: ghost value -f[1] at z = -z[1].
                    let inv = 1.0 / z[1];
                    for i in 0..nx {
                        out[i] = src[nx + i] * inv;
                    }
                }
                WallRule::MirrorZero if j == nz - 1 => {
                    let inv = 1.0 / (z[nz - 1] - z[nz - 2]);
                    for i in 0..nx {
                        out[i] = -src[(nz - 2) * nx + i] * inv;
                    }
                }
                _ => {
                    let (coefs, cols) = &rows[j];
                    for i in 0..nx {
                        out[i] = coefs[0] * src[cols[0] * nx + i]
                            + coefs[1] * src[cols[1] * nx + i]
                            + coefs[2] * src[cols[2] * nx + i];
                    }
                }
            }
        });
    }

    /// Second z-derivative with the chosen wall rule.
    pub fn dzz_slice(&self, src: &[f64], dst: &mut [f64], rule: WallRule) {
        let nx = self.nx;
        let rows = &self.dzz_rows;
        let z = &self.z;
        let nz = self.nz;
        crate::par::for_each_chunk_mut(dst, nx, |j, out| {
            match rule {
                WallRule::MirrorZero if j == 0 => {
                    let inv = 1.0 / (z[1] * z[1]);
                    for i in 0..nx {
                        out[i] = -2.0 * src[i] * inv;
                    }
                }
                WallRule::MirrorZero if j == nz - 1 => {
                    let d = z[nz - 1] - z[nz - 2];
                    let inv = 1.0 / (d * d);
                    for i in 0..nx {
                        out[i] = -2.0 * src[(nz - 1) * nx + i] * inv;
                    }
                }
                _ => {
                    let (coefs, cols) = &rows[j];
                    for i in 0..nx {
                        out[i] = coefs[0] * src[cols[0] * nx + i]
                            + coefs[1] * src[cols[1] * nx + i]
                            + coefs[2] * src[cols[2] * nx + i];
                    }
                }
            }
        });
    }

    /// Adjoint-form z-derivative `-W^{-1} Dz^T W` (the divergence half of the
    /// skew-symmetric advection form). Consistent wherever the advected
    /// product vanishes at the walls.
    pub fn adz_slice(&self, src: &[f64], dst: &mut [f64]) {
        let nx = self.nx;
        let nz = self.nz;
        let rows = &self.adz_rows;
        crate::par::for_each_chunk_mut(dst, nx, |k, out| {
            let band = &rows[k];
            for (i, o) in out.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (t, &c) in band.iter().enumerate() {
                    if c != 0.0 {
                        let j = k as isize + t as isize - 2;
                        if j >= 0 && (j as usize) < nz {
                            acc += c * src[j as usize * nx + i];
                        }
                    }
                }
                *o = acc;
            }
        });
    }

    /// Weighted node sum `Σ_{ij} dx * wz[j] * f(i, j)` — the trapezoid
    /// quadrature of a node function over the channel.
    pub fn integrate_nodes(&self, f: impl Fn(usize, usize) -> f64) -> f64 {
        let mut total = 0.0;
        for j in 0..self.nz {
            let mut row = 0.0;
            for i in 0..self.nx {
                row += f(i, j);
            }
            total += self.wz[j] * row;
        }
        total * self.dx
    }
}

// ---------------------------------------------------------------------------
// Field-level operators.
// ---------------------------------------------------------------------------

/// Discrete divergence `∂_1 v_1 + ∂_3 v_3` (one-sided second order at walls).
pub fn divergence(v: &VectorField) -> ScalarField {
    let grid = v.grid();
    let mut d1 = vec![0.0; grid.len()];
    let mut d3 = vec![0.0; grid.len()];
    grid.dx_slice(&v.f1.v, &mut d1);
    grid.dz_slice(&v.f3.v, &mut d3, WallRule::OneSided);
    for (a, b) in d1.iter_mut().zip(d3.iter()) {
        *a += *b;
    }
    ScalarField { grid: Arc::clone(grid), v: d1 }
}

/// Discrete gradient `(∂_1 s, ∂_3 s)` with the chosen wall rule on `∂_3`.
pub fn gradient(s: &ScalarField, rule: WallRule) -> VectorField {
    let grid = &s.grid;
    let mut g1 = vec![0.0; grid.len()];
    let mut g3 = vec![0.0; grid.len()];
    grid.dx_slice(&s.v, &mut g1);
    grid.dz_slice(&s.v, &mut g3, rule);
    VectorField {
        f1: ScalarField { grid: Arc::clone(grid), v: g1 },
        f3: ScalarField { grid: Arc::clone(grid), v: g3 },
    }
}

/// Discrete Laplacian `∂_11 s + ∂_33 s` with the chosen wall rule on `∂_33`.
pub fn laplacian(s: &ScalarField, rule: WallRule) -> ScalarField {
    let grid = &s.grid;
    let mut a = vec![0.0; grid.len()];
    let mut b = vec![0.0; grid.len()];
    grid.dxx_slice(&s.v, &mut a);
    grid.dzz_slice(&s.v, &mut b, rule);
    for (x, y) in a.iter_mut().zip(b.iter()) {
        *x += *y;
    }
    ScalarField { grid: Arc::clone(grid), v: a }
}

/// The curl of a stream function built with the *same* stencils as
/// [`divergence`], so that `divergence(curl ψ)` vanishes to round-off.
pub fn stream_curl(psi: &ScalarField, rule: WallRule) -> VectorField {
    let grid = &psi.grid;
    let mut v1 = vec![0.0; grid.len()];
    let mut v3 = vec![0.0; grid.len()];
    grid.dz_slice(&psi.v, &mut v1, rule);
    grid.dx_slice(&psi.v, &mut v3);
    for w in v3.iter_mut() {
        *w = -*w;
    }
    VectorField {
        f1: ScalarField { grid: Arc::clone(grid), v: v1 },
        f3: ScalarField { grid: Arc::clone(grid), v: v3 },
    }
}

fn weighted_dz_norms(grid: &GridSpec, dz: &[f64]) -> (f64, f64, f64) {
    // Returns (l2_dz², l2_z_weighted², linf_z2_weighted).
    let mut l2 = 0.0;
    let mut l2w = 0.0;
    let mut linfw: f64 = 0.0;
    for j in 0..grid.nz {
        let w = if grid.z[j] <= 0.5 * grid.h { grid.z[j] } else { grid.h - grid.z[j] };
        let row = &dz[j * grid.nx..(j + 1) * grid.nx];
        let mut s = 0.0;
        let mut sw = 0.0;
        for &g in row {
            s += g * g;
            sw += (w * g) * (w * g);
            let m = (w * w * g).abs();
            if m > linfw {
                linfw = m;
            }
        }
        l2 += grid.wz[j] * s;
        l2w += grid.wz[j] * sw;
    }
    (l2 * grid.dx, l2w * grid.dx, linfw)
}

/// The standard norm bundle of a scalar field.
pub fn norms(s: &ScalarField) -> NormSet {
    let grid = &s.grid;
    let mut dz = vec![0.0; grid.len()];
    grid.dz_slice(&s.v, &mut dz, WallRule::OneSided);

    let mut l2 = 0.0;
    let mut linf: f64 = 0.0;
    for j in 0..grid.nz {
        let row = &s.v[j * grid.nx..(j + 1) * grid.nx];
        let mut sum = 0.0;
        for &f in row {
            sum += f * f;
            if f.abs() > linf {
                linf = f.abs();
            }
        }
        l2 += grid.wz[j] * sum;
    }
    let (l2_dz2, l2w2, linfw) = weighted_dz_norms(grid, &dz);
    NormSet {
        l2: (l2 * grid.dx).sqrt(),
        linf,
        l2_dz: l2_dz2.sqrt(),
        l2_z_weighted: l2w2.sqrt(),
        linf_z2_weighted: linfw,
    }
}

/// The norm bundle of a vector field: `L²` entries add in quadrature,
/// sup entries take the max over components.
pub fn norms_vector(v: &VectorField) -> NormSet {
    let a = norms(&v.f1);
    let b = norms(&v.f3);
    NormSet {
        l2: (a.l2 * a.l2 + b.l2 * b.l2).sqrt(),
        linf: a.linf.max(b.linf),
        l2_dz: (a.l2_dz * a.l2_dz + b.l2_dz * b.l2_dz).sqrt(),
        l2_z_weighted: (a.l2_z_weighted * a.l2_z_weighted + b.l2_z_weighted * b.l2_z_weighted)
            .sqrt(),
        linf_z2_weighted: a.linf_z2_weighted.max(b.linf_z2_weighted),
    }
}

/// Plain `L²` of a scalar field (trapezoid quadrature).
pub fn l2_norm(s: &ScalarField) -> f64 {
    norms(s).l2
}

/// Hardy quotient `‖f / d‖_{L²} / ‖∂_z f‖_{L²}` with `d` the distance to the
/// named wall. The wall row is excluded from the quotient quadrature.
///
/// Preconditions: `f` vanishes at the named wall (tolerance `1e-12` relative
/// to `max(1, ‖f‖_∞)`), and `∂_z f` is not identically zero.
pub fn hardy_ratio(f: &ScalarField, wall: Wall) -> Result<f64> {
    let grid = &f.grid;
    let linf = f.v.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let tol = 1e-12 * linf.max(1.0);
    let wall_row = match wall {
        Wall::Lower => 0,
        Wall::Upper => grid.nz - 1,
    };
    for i in 0..grid.nx {
        if f.at(i, wall_row).abs() > tol {
            return Err(Error::Precondition(format!(
                "hardy_ratio: field does not vanish at the {} wall (|f| = {:.3e} at x index {i})",
                match wall {
                    Wall::Lower => "lower",
                    Wall::Upper => "upper",
                },
                f.at(i, wall_row).abs()
            )));
        }
    }

    let mut num2 = 0.0;
    for j in 0..grid.nz {
        if j == wall_row {
            continue;
        }
        let d = match wall {
            Wall::Lower => grid.z[j],
            Wall::Upper => grid.h - grid.z[j],
        };
        if d == 0.0 {
            continue;
        }
        let row = &f.v[j * grid.nx..(j + 1) * grid.nx];
        let mut s = 0.0;
        for &x in row {
            let q = x / d;
            s += q * q;
        }
        num2 += grid.wz[j] * s;
    }
    num2 *= grid.dx;

    let mut dz = vec![0.0; grid.len()];
    grid.dz_slice(&f.v, &mut dz, WallRule::OneSided);
    let mut den2 = 0.0;
    for j in 0..grid.nz {
        let row = &dz[j * grid.nx..(j + 1) * grid.nx];
        let mut s = 0.0;
        for &x in row {
            s += x * x;
        }
        den2 += grid.wz[j] * s;
    }
    den2 *= grid.dx;

    if den2 <= 0.0 {
        return Err(Error::Precondition(
            "hardy_ratio: z-derivative vanishes identically".into(),
        ));
    }
    Ok((num2 / den2).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn grid_uniform_nodes() {
        let g = build_grid(8, 5, 1.0, 0.0).unwrap();
        let expect = [0.0, 0.25, 0.5, 0.75, 1.0];
        for (a, b) in g.z.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((g.dx - 2.0 * PI / 8.0).abs() < 1e-15);
    }

    #[test]
    fn grid_stretch_clusters_walls() {
        let g = build_grid(64, 129, 1.0, 2.0).unwrap();
        assert!(g.z[0] == 0.0 && g.z[128] == 1.0);
        let uniform = 1.0 / 128.0;
        assert!(g.min_dz() < uniform);
        assert!(g.z.windows(2).all(|w| w[1] > w[0]));
        // Trapezoid weights integrate 1 to h exactly.
        let total: f64 = g.wz.iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn grid_rejects_bad_shapes() {
        assert!(build_grid(7, 9, 1.0, 0.0).is_err());
        assert!(build_grid(2, 9, 1.0, 0.0).is_err());
        assert!(build_grid(8, 4, 1.0, 0.0).is_err());
        assert!(build_grid(8, 9, 0.0, 0.0).is_err());
        assert!(build_grid(8, 9, 1.0, -1.0).is_err());
    }

    #[test]
    fn l2_of_constant_and_sine() {
        let g = build_grid(32, 33, 1.0, 0.0).unwrap();
        let one = ScalarField::sample(&g, |_, _| 1.0);
        assert!((l2_norm(&one) - (2.0 * PI).sqrt()).abs() < 1e-12);
        let sx = ScalarField::sample(&g, |x, _| x.sin());
        // ∫ sin² x dx = π exactly for the periodic trapezoid rule.
        assert!((l2_norm(&sx) - PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn laplacian_of_z_squared_is_two() {
        let g = build_grid(8, 41, 1.0, 2.0).unwrap();
        let s = ScalarField::sample(&g, |_, z| z * z);
        let lap = laplacian(&s, WallRule::OneSided);
        // The compact stencil is exact on quadratics, including wall rows.
        for j in 0..g.nz {
            for i in 0..g.nx {
                assert!(
                    (lap.at(i, j) - 2.0).abs() < 1e-9,
                    "row {j}: {}",
                    lap.at(i, j)
                );
            }
        }
    }

    #[test]
    fn laplacian_eigenfunction_second_order() {
        // laplacian(sin x sin(πz/h)) = -(1 + π²/h²) f; error halves x4 with nz, nx doubling.
        let h = 1.0;
        let exact = |x: f64, z: f64| x.sin() * (PI * z / h).sin();
        let factor = 1.0 + PI * PI / (h * h);
        let mut errs = Vec::new();
        for &(nx, nz) in &[(16usize, 17usize), (32, 33), (64, 65)] {
            let g = build_grid(nx, nz, h, 0.0).unwrap();
            let s = ScalarField::sample(&g, exact);
            let lap = laplacian(&s, WallRule::OneSided);
            let mut emax = 0.0f64;
            for j in 1..g.nz - 1 {
                for i in 0..g.nx {
                    let want = -factor * exact(g.x[i], g.z[j]);
                    emax = emax.max((lap.at(i, j) - want).abs());
                }
            }
            errs.push(emax);
        }
        let s1 = (errs[0] / errs[1]).log2();
        let s2 = (errs[1] / errs[2]).log2();
        assert!(s1 > 1.6 && s1 < 2.4, "slope {s1}");
        assert!(s2 > 1.6 && s2 < 2.4, "slope {s2}");
    }

    #[test]
    fn divergence_second_order_on_analytic_field() {
        // v = (sin x cos(πz/h), -(h/π) cos x sin(πz/h)) is divergence-free.
        let h = 1.0;
        let mut errs = Vec::new();
        for &(nx, nz) in &[(16usize, 17usize), (32, 33), (64, 65)] {
            let g = build_grid(nx, nz, h, 0.0).unwrap();
            let v = VectorField::sample(&g, |x, z| {
                [
                    x.sin() * (PI * z / h).cos(),
                    -(h / PI) * x.cos() * (PI * z / h).sin(),
                ]
            });
            let d = divergence(&v);
            let emax = d.v.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
            errs.push(emax);
        }
        let s1 = (errs[0] / errs[1]).log2();
        let s2 = (errs[1] / errs[2]).log2();
        assert!(s1 > 1.6 && s1 < 2.6, "slope {s1}");
        assert!(s2 > 1.6 && s2 < 2.6, "slope {s2}");
    }

    #[test]
    fn discrete_curl_div_compatibility() {
        // divergence(stream_curl ψ) vanishes to round-off for any ψ, because
        // the x- and z-stencils commute as tensor operators.
        let g = build_grid(48, 65, 1.0, 3.0).unwrap();
        let psi = ScalarField::sample(&g, |x, z| {
            (2.0 * x).sin() * (PI * z).sin().powi(2) + 0.3 * x.cos() * z * z * (1.0 - z)
        });
        let v = stream_curl(&psi, WallRule::OneSided);
        let d = divergence(&v);
        let emax = d.v.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        assert!(emax <= 1e-11, "max |div| = {emax:.3e}");
    }

    #[test]
    fn hardy_ratio_linear_and_quadratic() {
        let g = build_grid(8, 513, 1.0, 0.0).unwrap();
        let fz = ScalarField::sample(&g, |_, z| z);
        let r1 = hardy_ratio(&fz, Wall::Lower).unwrap();
        // Continuum value 1; wall-node exclusion costs O(Δz).
        assert!((r1 - 1.0).abs() < 5e-3, "r1 = {r1}");
        let fz2 = ScalarField::sample(&g, |_, z| z * z);
        let r2 = hardy_ratio(&fz2, Wall::Lower).unwrap();
        assert!((r2 - 0.5).abs() < 5e-3, "r2 = {r2}");
        // Upper wall: f = (h - z)² mirrors the quadratic case.
        let fu = ScalarField::sample(&g, |_, z| (1.0 - z) * (1.0 - z));
        let ru = hardy_ratio(&fu, Wall::Upper).unwrap();
        assert!((ru - 0.5).abs() < 5e-3, "ru = {ru}");
    }

    #[test]
    fn hardy_ratio_rejects_nonvanishing_trace() {
        let g = build_grid(8, 33, 1.0, 0.0).unwrap();
        let f = ScalarField::sample(&g, |_, z| 1.0 + z);
        assert!(hardy_ratio(&f, Wall::Lower).is_err());
    }

    #[test]
    fn hardy_bound_holds_on_random_polynomials() {
        // 50 random zero-trace polynomials f = z·p(z); ratio must stay ≤ 2
        // (the half-line Hardy constant).
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x48_41_52_44_59);
        let g = build_grid(4, 257, 1.0, 0.0).unwrap();
        for case in 0..50 {
            let coefs: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = ScalarField::sample(&g, |_, z| {
                let p: f64 = coefs
                    .iter()
                    .enumerate()
                    .map(|(k, c)| c * z.powi(k as i32))
                    .sum();
                z * p
            });
            if let Ok(r) = hardy_ratio(&f, Wall::Lower) {
                assert!(r <= 2.0, "case {case}: ratio {r}");
            }
        }
    }

    #[test]
    fn mirror_rule_matches_one_sided_for_odd_fields() {
        let g = build_grid(8, 65, 1.0, 0.0).unwrap();
        let f = ScalarField::sample(&g, |_, z| (PI * z).sin());
        let d_os = gradient(&f, WallRule::OneSided);
        let d_mr = gradient(&f, WallRule::MirrorZero);
        // Both are second-order estimates of π cos(πz); compare at the wall.
        let want = PI;
        assert!((d_os.f3.at(0, 0) - want).abs() < 1e-2);
        assert!((d_mr.f3.at(0, 0) - want).abs() < 1e-2);
    }

    #[test]
    fn norm_set_scales_linearly() {
        let g = build_grid(16, 33, 1.0, 0.0).unwrap();
        let f = ScalarField::sample(&g, |x, z| x.sin() * z * (1.0 - z));
        let f2 = ScalarField::from_values(
            Arc::clone(&g),
            f.v.iter().map(|&v| 3.0 * v).collect(),
        )
        .unwrap();
        let n1 = norms(&f);
        let n2 = norms(&f2);
        assert!((n2.l2 - 3.0 * n1.l2).abs() < 1e-12);
        assert!((n2.linf - 3.0 * n1.linf).abs() < 1e-12);
        assert!((n2.l2_dz - 3.0 * n1.l2_dz).abs() < 1e-12);
        assert!((n2.l2_z_weighted - 3.0 * n1.l2_z_weighted).abs() < 1e-12);
        assert!((n2.linf_z2_weighted - 3.0 * n1.linf_z2_weighted).abs() < 1e-12);
    }
}
