//! Closed-form wall-layer correctors.
//!
//! A corrector is an explicit field added to a steady reference state so the
//! sum satisfies no-slip wall data; the width parameters `ν₁*` (velocity) and
//! `ν₂*` (magnetic) control the layer thickness `√ν`. Two analytic modes:
//!
//! * `ExactExponential` — a cutoff exponential profile per wall, built so each
//!   piece is analytically divergence-free and vanishes outside the near-wall
//!   quarter of the channel;
//! * `PrandtlHeat` — a spreading `erfc` heat-kernel layer that solves
//!   `∂_t f = ν ∂_z² f` exactly; requires constant wall traces and carries no
//!   normal component.
//!
//! All derivatives used by norms and energy budgets are hand-differentiated
//! closed forms, so measurements against these layers are solver-independent.

use crate::fields::{GridSpec, Wall};
use crate::ideal::{wall_traces, IdealState, Trace, WallTraces};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use libm::erfc;
use std::f64::consts::PI;
use std::sync::Arc;

/// Analytic form of the layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectorMode {
    ExactExponential,
    PrandtlHeat,
}

/// Layer parameters: widths, heat-kernel time shift, and mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectorParams {
    pub nu1_star: f64,
    pub nu2_star: f64,
    pub s_shift: f64,
    pub mode: CorrectorMode,
}

/// Smooth wall cutoffs: `rho1` equals 1 at the lower wall with two flat
/// derivatives and vanishes for `z >= h/4`; `rho2` mirrors it at the upper
/// wall (`rho2(z) = rho1(h-z)`).
#[derive(Debug, Clone, Copy)]
pub struct CutoffPair {
    pub h: f64,
}

#[inline]
fn smoothstep(t: f64) -> f64 {
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

#[inline]
fn smoothstep_d(t: f64) -> f64 {
    30.0 * t * t * (1.0 - t) * (1.0 - t)
}

#[inline]
fn smoothstep_dd(t: f64) -> f64 {
    60.0 * t * (1.0 - t) * (1.0 - 2.0 * t)
}

impl CutoffPair {
    pub fn rho1(&self, z: f64) -> f64 {
        let t = 4.0 * z / self.h;
        if t >= 1.0 {
            0.0
        } else if t <= 0.0 {
            1.0
        } else {
            1.0 - smoothstep(t)
        }
    }

    pub fn rho1_d(&self, z: f64) -> f64 {
        let t = 4.0 * z / self.h;
        if !(0.0..1.0).contains(&t) {
            0.0
        } else {
            -smoothstep_d(t) * 4.0 / self.h
        }
    }

    pub fn rho1_dd(&self, z: f64) -> f64 {
        let t = 4.0 * z / self.h;
        if !(0.0..1.0).contains(&t) {
            0.0
        } else {
            -smoothstep_dd(t) * 16.0 / (self.h * self.h)
        }
    }

    pub fn rho2(&self, z: f64) -> f64 {
        self.rho1(self.h - z)
    }

    pub fn rho2_d(&self, z: f64) -> f64 {
        -self.rho1_d(self.h - z)
    }

    pub fn rho2_dd(&self, z: f64) -> f64 {
        self.rho1_dd(self.h - z)
    }
}

/// Builds the cutoff pair for channel height `h`.
pub fn make_cutoffs(h: f64) -> Result<CutoffPair> {
    if h > 0.0 && h.is_finite() {
        Ok(CutoffPair { h })
    } else {
        Err(Error::config("h", format!("must be positive and finite, got {h}")))
    }
}

/// One wall layer of one field: everything needed to evaluate the tangential
/// and normal components and their closed-form derivatives.
#[derive(Debug, Clone, Copy)]
struct WallLayer {
    trace: Trace,
    nu: f64,
    s: f64,
    mode: CorrectorMode,
    wall: Wall,
    h: f64,
    cut: CutoffPair,
}

impl WallLayer {
    /// `(ρ, ρ′, ρ″, E, ∂_z E)` for this wall at height z.
    #[inline]
    fn shape(&self, z: f64) -> (f64, f64, f64, f64, f64) {
        let rt = self.nu.sqrt();
        match self.wall {
            Wall::Lower => {
                let e = (-z / rt).exp();
                (self.cut.rho1(z), self.cut.rho1_d(z), self.cut.rho1_dd(z), e, -e / rt)
            }
            Wall::Upper => {
                let e = (-(self.h - z) / rt).exp();
                (self.cut.rho2(z), self.cut.rho2_d(z), self.cut.rho2_dd(z), e, e / rt)
            }
        }
    }

    #[inline]
    fn eta(&self, z: f64, t: f64) -> (f64, f64) {
        // (η, √(ν(t+s))) for the heat-kernel profile.
        let l = (self.nu * (t + self.s)).sqrt();
        let d = match self.wall {
            Wall::Lower => z,
            Wall::Upper => self.h - z,
        };
        (d / (2.0 * l), l)
    }

    fn tangential(&self, x: f64, z: f64, t: f64) -> f64 {
        let tau = self.trace.eval(x);
        match self.mode {
            CorrectorMode::ExactExponential => {
                let rt = self.nu.sqrt();
                let (r, rp, _, e, _) = self.shape(z);
                match self.wall {
                    Wall::Lower => -tau * (e * (r - rt * rp) + rt * rp),
                    Wall::Upper => -tau * (e * (r + rt * rp) - rt * rp),
                }
            }
            CorrectorMode::PrandtlHeat => {
                let (eta, _) = self.eta(z, t);
                -tau * erfc(eta)
            }
        }
    }

    fn tangential_dx(&self, x: f64, z: f64, t: f64) -> f64 {
        let taup = self.trace.d1(x);
        if taup == 0.0 {
            return 0.0;
        }
        match self.mode {
            CorrectorMode::ExactExponential => {
                let rt = self.nu.sqrt();
                let (r, rp, _, e, _) = self.shape(z);
                match self.wall {
                    Wall::Lower => -taup * (e * (r - rt * rp) + rt * rp),
                    Wall::Upper => -taup * (e * (r + rt * rp) - rt * rp),
                }
            }
            CorrectorMode::PrandtlHeat => {
                let (eta, _) = self.eta(z, t);
                -taup * erfc(eta)
            }
        }
    }

    fn tangential_dz(&self, x: f64, z: f64, t: f64) -> f64 {
        let tau = self.trace.eval(x);
        match self.mode {
            CorrectorMode::ExactExponential => {
                let rt = self.nu.sqrt();
                let (r, rp, rpp, e, ez) = self.shape(z);
                match self.wall {
                    Wall::Lower => -tau * (ez * (r - rt * rp) + e * (rp - rt * rpp) + rt * rpp),
                    Wall::Upper => -tau * (ez * (r + rt * rp) + e * (rp + rt * rpp) - rt * rpp),
                }
            }
            CorrectorMode::PrandtlHeat => {
                let (eta, l) = self.eta(z, t);
                let g = (-eta * eta).exp() / (PI.sqrt() * l);
                match self.wall {
                    Wall::Lower => tau * g,
                    Wall::Upper => -tau * g,
                }
            }
        }
    }

    fn tangential_dt(&self, x: f64, z: f64, t: f64) -> f64 {
        match self.mode {
            CorrectorMode::ExactExponential => 0.0,
            CorrectorMode::PrandtlHeat => {
                let tau = self.trace.eval(x);
                let (eta, _) = self.eta(z, t);
                -tau * eta * (-eta * eta).exp() / (PI.sqrt() * (t + self.s))
            }
        }
    }

    fn normal(&self, x: f64, z: f64, _t: f64) -> f64 {
        match self.mode {
            CorrectorMode::ExactExponential => {
                let taup = self.trace.d1(x);
                if taup == 0.0 {
                    return 0.0;
                }
                let rt = self.nu.sqrt();
                let (r, _, _, e, _) = self.shape(z);
                // The normal wall derivative of the reference normal component
                // is minus the tangential trace's x-derivative (zero divergence).
                match self.wall {
                    Wall::Lower => -rt * taup * r * (e - 1.0),
                    Wall::Upper => rt * taup * r * (e - 1.0),
                }
            }
            CorrectorMode::PrandtlHeat => 0.0,
        }
    }

    fn normal_dx(&self, x: f64, z: f64, _t: f64) -> f64 {
        match self.mode {
            CorrectorMode::ExactExponential => {
                let taupp = self.trace.d2(x);
                if taupp == 0.0 {
                    return 0.0;
                }
                let rt = self.nu.sqrt();
                let (r, _, _, e, _) = self.shape(z);
                match self.wall {
                    Wall::Lower => -rt * taupp * r * (e - 1.0),
                    Wall::Upper => rt * taupp * r * (e - 1.0),
                }
            }
            CorrectorMode::PrandtlHeat => 0.0,
        }
    }

    fn normal_dz(&self, x: f64, z: f64, _t: f64) -> f64 {
        match self.mode {
            CorrectorMode::ExactExponential => {
                let taup = self.trace.d1(x);
                if taup == 0.0 {
                    return 0.0;
                }
                let rt = self.nu.sqrt();
                let (r, rp, _, e, ez) = self.shape(z);
                match self.wall {
                    Wall::Lower => -rt * taup * (rp * (e - 1.0) + r * ez),
                    Wall::Upper => rt * taup * (rp * (e - 1.0) + r * ez),
                }
            }
            CorrectorMode::PrandtlHeat => 0.0,
        }
    }
}

/// Gradient bundle of a total (both walls summed) layer field.
#[derive(Debug, Clone, Copy, Default)]
pub struct LayerGrad {
    pub t_dx: f64,
    pub t_dz: f64,
    pub n_dx: f64,
    pub n_dz: f64,
}

/// The four wall layers of a reference state, with closed-form evaluation.
#[derive(Debug, Clone)]
pub struct CorrectorSet {
    pub params: CorrectorParams,
    pub h: f64,
    pub traces: WallTraces,
    u_plus: WallLayer,
    u_minus: WallLayer,
    b_plus: WallLayer,
    b_minus: WallLayer,
}

/// Builds the corrector set for a state.
///
/// `PrandtlHeat` mode requires all four wall traces to be constant in x (the
/// heat-kernel layer has no mechanism to carry a tangential gradient).
pub fn build_correctors(
    state: &IdealState,
    params: CorrectorParams,
    cutoffs: CutoffPair,
) -> Result<CorrectorSet> {
    for (name, v) in [
        ("nu1_star", params.nu1_star),
        ("nu2_star", params.nu2_star),
        ("s_shift", params.s_shift),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::config(name, format!("must be positive and finite, got {v}")));
        }
    }
    if cutoffs.h != state.h {
        return Err(Error::config(
            "h",
            format!("cutoff height {} does not match state height {}", cutoffs.h, state.h),
        ));
    }
    let traces = wall_traces(state);
    if params.mode == CorrectorMode::PrandtlHeat {
        let all = [traces.u1_at_0, traces.u1_at_h, traces.b1_at_0, traces.b1_at_h];
        if all.iter().any(|t| !t.is_constant()) {
            return Err(Error::Precondition(
                "heat-kernel layers require constant wall traces".into(),
            ));
        }
    }
    let mk = |trace: Trace, nu: f64, wall: Wall| WallLayer {
        trace,
        nu,
        s: params.s_shift,
        mode: params.mode,
        wall,
        h: state.h,
        cut: cutoffs,
    };
    Ok(CorrectorSet {
        params,
        h: state.h,
        traces,
        u_plus: mk(traces.u1_at_0, params.nu1_star, Wall::Lower),
        u_minus: mk(traces.u1_at_h, params.nu1_star, Wall::Upper),
        b_plus: mk(traces.b1_at_0, params.nu2_star, Wall::Lower),
        b_minus: mk(traces.b1_at_h, params.nu2_star, Wall::Upper),
    })
}

impl CorrectorSet {
    pub fn u_plus(&self, x: f64, z: f64, t: f64) -> [f64; 2] {
        [self.u_plus.tangential(x, z, t), self.u_plus.normal(x, z, t)]
    }

    pub fn u_minus(&self, x: f64, z: f64, t: f64) -> [f64; 2] {
        [self.u_minus.tangential(x, z, t), self.u_minus.normal(x, z, t)]
    }

    pub fn b_plus(&self, x: f64, z: f64, t: f64) -> [f64; 2] {
        [self.b_plus.tangential(x, z, t), self.b_plus.normal(x, z, t)]
    }

    pub fn b_minus(&self, x: f64, z: f64, t: f64) -> [f64; 2] {
        [self.b_minus.tangential(x, z, t), self.b_minus.normal(x, z, t)]
    }

    /// Both velocity layers summed.
    pub fn u_total(&self, x: f64, z: f64, t: f64) -> [f64; 2] {
        let a = self.u_plus(x, z, t);
        let c = self.u_minus(x, z, t);
        [a[0] + c[0], a[1] + c[1]]
    }

    /// Both magnetic layers summed.
    pub fn b_total(&self, x: f64, z: f64, t: f64) -> [f64; 2] {
        let a = self.b_plus(x, z, t);
        let c = self.b_minus(x, z, t);
        [a[0] + c[0], a[1] + c[1]]
    }

    /// Time derivative of the total velocity layer (normal part is steady in
    /// both modes).
    pub fn u_total_dt(&self, x: f64, z: f64, t: f64) -> [f64; 2] {
        [
            self.u_plus.tangential_dt(x, z, t) + self.u_minus.tangential_dt(x, z, t),
            0.0,
        ]
    }

    pub fn b_total_dt(&self, x: f64, z: f64, t: f64) -> [f64; 2] {
        [
            self.b_plus.tangential_dt(x, z, t) + self.b_minus.tangential_dt(x, z, t),
            0.0,
        ]
    }

    /// Closed-form gradient of the total velocity layer.
    pub fn u_grad(&self, x: f64, z: f64, t: f64) -> LayerGrad {
        LayerGrad {
            t_dx: self.u_plus.tangential_dx(x, z, t) + self.u_minus.tangential_dx(x, z, t),
            t_dz: self.u_plus.tangential_dz(x, z, t) + self.u_minus.tangential_dz(x, z, t),
            n_dx: self.u_plus.normal_dx(x, z, t) + self.u_minus.normal_dx(x, z, t),
            n_dz: self.u_plus.normal_dz(x, z, t) + self.u_minus.normal_dz(x, z, t),
        }
    }

    pub fn b_grad(&self, x: f64, z: f64, t: f64) -> LayerGrad {
        LayerGrad {
            t_dx: self.b_plus.tangential_dx(x, z, t) + self.b_minus.tangential_dx(x, z, t),
            t_dz: self.b_plus.tangential_dz(x, z, t) + self.b_minus.tangential_dz(x, z, t),
            n_dx: self.b_plus.normal_dx(x, z, t) + self.b_minus.normal_dx(x, z, t),
            n_dz: self.b_plus.normal_dz(x, z, t) + self.b_minus.normal_dz(x, z, t),
        }
    }
}

/// Max-node residual of the layer heat equation `∂_t f = ε ∂_z² f` for the
/// total tangential velocity layer, with analytic `∂_t` and the grid's
/// second-derivative stencil. Interior nodes only (the wall rows' one-sided
/// stencil is lower order and the profile is exact there anyway). Refines at
/// order 2 on smoothly graded grids.
pub fn prandtl_residual(cs: &CorrectorSet, eps: f64, grid: &Arc<GridSpec>, t: f64) -> Result<f64> {
    if cs.params.mode != CorrectorMode::PrandtlHeat {
        return Err(Error::Precondition(
            "layer heat-equation residual requires the heat-kernel mode".into(),
        ));
    }
    let mut f = vec![0.0; grid.len()];
    for j in 0..grid.nz {
        for i in 0..grid.nx {
            f[grid.idx(i, j)] =
                cs.u_plus.tangential(grid.x[i], grid.z[j], t) + cs.u_minus.tangential(grid.x[i], grid.z[j], t);
        }
    }
    let mut dzz = vec![0.0; grid.len()];
    grid.dzz_slice(&f, &mut dzz, crate::fields::WallRule::OneSided);
    let mut res: f64 = 0.0;
    for j in 1..grid.nz - 1 {
        for i in 0..grid.nx {
            let dt = cs.u_plus.tangential_dt(grid.x[i], grid.z[j], t)
                + cs.u_minus.tangential_dt(grid.x[i], grid.z[j], t);
            res = res.max((dt - eps * dzz[grid.idx(i, j)]).abs());
        }
    }
    Ok(res)
}

/// One field's layer-norm bundle.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LayerNorms {
    /// `L²` of the tangential layer paired with its x-derivative.
    pub tangential_with_dx_l2: f64,
    /// `L²` of the normal layer component.
    pub normal_l2: f64,
    /// `L²` of `∂_z` of the tangential layer.
    pub tangential_dz_l2: f64,
    /// `L²` of `∂_z` of the normal component.
    pub normal_dz_l2: f64,
    /// `L²` of the wall-distance-weighted `∂_z` tangential layer
    /// (`z` near the lower wall, `h−z` near the upper).
    pub weighted_dz_l2: f64,
    /// Sup of the squared-distance-weighted `∂_z` tangential layer.
    pub weighted_dz_linf: f64,
    /// Sup of the layer field (both components).
    pub field_linf: f64,
    /// Sup of `∂_z` of the normal component.
    pub normal_dz_linf: f64,
}

impl LayerNorms {
    /// Named entries, in a fixed report order.
    pub fn entries(&self) -> [(&'static str, f64); 8] {
        [
            ("tangential_with_dx_l2", self.tangential_with_dx_l2),
            ("normal_l2", self.normal_l2),
            ("tangential_dz_l2", self.tangential_dz_l2),
            ("normal_dz_l2", self.normal_dz_l2),
            ("weighted_dz_l2", self.weighted_dz_l2),
            ("weighted_dz_linf", self.weighted_dz_linf),
            ("field_linf", self.field_linf),
            ("normal_dz_linf", self.normal_dz_linf),
        ]
    }
}

/// Layer norms for both fields plus a resolution flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerNormReport {
    pub u: LayerNorms,
    pub b: LayerNorms,
    /// Set when fewer than 4 grid nodes fall inside a layer width `√ν` of a
    /// wall whose layer is nonzero — the quadrature is then unreliable.
    pub resolution_warning: bool,
}

struct RowStats {
    // Sums (to be weighted by wz[j]*dx): t²+t_dx², n², t_dz², n_dz²,
    // (w·t_dz)² split by wall piece; maxes: |w²·t_dz|, field, |n_dz|.
    sums: [f64; 6],
    maxes: [f64; 3],
}

fn field_row_stats(
    plus: &WallLayer,
    minus: &WallLayer,
    grid: &GridSpec,
    j: usize,
    t: f64,
) -> RowStats {
    let z = grid.z[j];
    let h = grid.h;
    let mut sums = [0.0; 6];
    let mut maxes = [0.0f64; 3];
    for i in 0..grid.nx {
        let x = grid.x[i];
        let tv = plus.tangential(x, z, t) + minus.tangential(x, z, t);
        let tdx = plus.tangential_dx(x, z, t) + minus.tangential_dx(x, z, t);
        let nv = plus.normal(x, z, t) + minus.normal(x, z, t);
        let tdz_p = plus.tangential_dz(x, z, t);
        let tdz_m = minus.tangential_dz(x, z, t);
        let ndz = plus.normal_dz(x, z, t) + minus.normal_dz(x, z, t);
        sums[0] += tv * tv + tdx * tdx;
        sums[1] += nv * nv;
        let tdz = tdz_p + tdz_m;
        sums[2] += tdz * tdz;
        sums[3] += ndz * ndz;
        sums[4] += (z * tdz_p) * (z * tdz_p);
        sums[5] += ((h - z) * tdz_m) * ((h - z) * tdz_m);
        maxes[0] = maxes[0]
            .max((z * z * tdz_p).abs())
            .max(((h - z) * (h - z) * tdz_m).abs());
        maxes[1] = maxes[1].max(tv.abs()).max(nv.abs());
        maxes[2] = maxes[2].max(ndz.abs());
    }
    RowStats { sums, maxes }
}

fn reduce_rows(rows: &[RowStats], grid: &GridSpec) -> LayerNorms {
    let mut s = [0.0; 6];
    let mut m = [0.0f64; 3];
    for (j, row) in rows.iter().enumerate() {
        for k in 0..6 {
            s[k] += grid.wz[j] * row.sums[k];
        }
        for k in 0..3 {
            m[k] = m[k].max(row.maxes[k]);
        }
    }
    for v in s.iter_mut() {
        *v *= grid.dx;
    }
    LayerNorms {
        tangential_with_dx_l2: s[0].sqrt(),
        normal_l2: s[1].sqrt(),
        tangential_dz_l2: s[2].sqrt(),
        normal_dz_l2: s[3].sqrt(),
        weighted_dz_l2: (s[4] + s[5]).sqrt(),
        weighted_dz_linf: m[0],
        field_linf: m[1],
        normal_dz_linf: m[2],
    }
}

/// Computes the full layer-norm bundle for both fields by grid quadrature of
/// the closed-form layers and derivatives, at time `t`.
pub fn layer_norm_scalings(cs: &CorrectorSet, grid: &Arc<GridSpec>, t: f64) -> LayerNormReport {
    let rows_u: Vec<RowStats> = crate::par::map_collect((0..grid.nz).collect(), |j| {
        field_row_stats(&cs.u_plus, &cs.u_minus, grid, j, t)
    });
    let rows_b: Vec<RowStats> = crate::par::map_collect((0..grid.nz).collect(), |j| {
        field_row_stats(&cs.b_plus, &cs.b_minus, grid, j, t)
    });
    let u = reduce_rows(&rows_u, grid);
    let b = reduce_rows(&rows_b, grid);

    let nodes_within = |width: f64| -> usize {
        let lower = grid.z.iter().filter(|&&z| z > 0.0 && z <= width).count();
        let upper = grid.z.iter().filter(|&&z| z < grid.h && grid.h - z <= width).count();
        lower.min(upper)
    };
    let u_active = !cs.traces.u1_at_0.is_zero() || !cs.traces.u1_at_h.is_zero();
    let b_active = !cs.traces.b1_at_0.is_zero() || !cs.traces.b1_at_h.is_zero();
    let warning = (u_active && nodes_within(cs.params.nu1_star.sqrt()) < 4)
        || (b_active && nodes_within(cs.params.nu2_star.sqrt()) < 4);

    LayerNormReport { u, b, resolution_warning: warning }
}

/// Least-squares slope and `r²` of `log(value)` against `log(ν)`.
///
/// Preconditions: at least 3 samples spanning at least two decades in ν;
/// positive values.
pub fn scaling_fit(samples: &[(f64, f64)]) -> Result<(f64, f64)> {
    let params: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let values: Vec<f64> = samples.iter().map(|s| s.1).collect();
    if !params.is_empty() {
        let pmax = params.iter().cloned().fold(f64::MIN, f64::max);
        let pmin = params.iter().cloned().fold(f64::MAX, f64::min);
        if !(pmin > 0.0) {
            return Err(Error::Domain(format!("scaling fit: non-positive width {pmin}")));
        }
        if pmax / pmin < 100.0 * (1.0 - 1e-12) {
            return Err(Error::Precondition(format!(
                "scaling fit: width range spans {:.2} decades, need at least 2",
                (pmax / pmin).log10()
            )));
        }
    }
    let (slope, _, r2) = crate::fit::log_log_fit(&params, &values)?;
    Ok((slope, r2))
}

/// Magnetic-layer width for the diffusion-limit study: `(θ·ε₂)^{1+τ}`.
pub fn nu2_star_diffusion_limit(eps2: f64, theta: f64, tau: f64) -> Result<f64> {
    if !(eps2 > 0.0) || !eps2.is_finite() {
        return Err(Error::config("eps2", format!("must be positive, got {eps2}")));
    }
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::config("theta", format!("must be positive, got {theta}")));
    }
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::Domain(format!("tau must lie in [0, 1), got {tau}")));
    }
    Ok((theta * eps2).powf(1.0 + tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::build_grid;
    use crate::ideal::{default_rate_state, elsasser_steady, shear_flow, well_prepared, ZProfile};

    fn params(mode: CorrectorMode, nu: f64) -> CorrectorParams {
        CorrectorParams { nu1_star: nu, nu2_star: nu, s_shift: 1.0, mode }
    }

    #[test]
    fn cutoff_endpoint_conditions() {
        for &h in &[1.0, 2.5] {
            let c = make_cutoffs(h).unwrap();
            assert_eq!(c.rho1(0.0), 1.0);
            assert_eq!(c.rho1_d(0.0), 0.0);
            assert_eq!(c.rho1_dd(0.0), 0.0);
            assert_eq!(c.rho1(h / 3.0), 0.0);
            assert!((c.rho1(h / 8.0) - 0.5).abs() < 1e-15);
            assert_eq!(c.rho2(h), 1.0);
            assert_eq!(c.rho2_d(h), 0.0);
            assert_eq!(c.rho2_dd(h), 0.0);
            assert_eq!(c.rho2(0.7 * h), 0.0);
            assert!((c.rho2(7.0 * h / 8.0) - 0.5).abs() < 1e-15);
            for k in 0..=64 {
                let z = h * k as f64 / 64.0;
                assert!((0.0..=1.0).contains(&c.rho1(z)));
                assert!((0.0..=1.0).contains(&c.rho2(z)));
            }
        }
    }

    #[test]
    fn cutoff_derivatives_match_finite_differences() {
        let c = make_cutoffs(2.0).unwrap();
        let e = 1e-6;
        for &z in &[0.05, 0.2, 0.35, 0.49, 1.6, 1.83, 1.95] {
            let fd1 = (c.rho1(z + e) - c.rho1(z - e)) / (2.0 * e);
            let fd2 = (c.rho1(z + e) - 2.0 * c.rho1(z) + c.rho1(z - e)) / (e * e);
            assert!((c.rho1_d(z) - fd1).abs() < 1e-7, "z = {z}");
            assert!((c.rho1_dd(z) - fd2).abs() < 1e-3, "z = {z}");
            let gd1 = (c.rho2(z + e) - c.rho2(z - e)) / (2.0 * e);
            assert!((c.rho2_d(z) - gd1).abs() < 1e-7, "z = {z}");
        }
    }

    #[test]
    fn make_cutoffs_rejects_bad_height() {
        assert!(make_cutoffs(0.0).is_err());
        assert!(make_cutoffs(-1.0).is_err());
        assert!(make_cutoffs(f64::NAN).is_err());
    }

    #[test]
    fn build_validates_params_and_mode() {
        let st = default_rate_state(1.0);
        let cut = make_cutoffs(1.0).unwrap();
        let mut p = params(CorrectorMode::ExactExponential, 1e-3);
        p.nu2_star = 0.0;
        assert!(build_correctors(&st, p, cut).is_err());
        let mut p = params(CorrectorMode::ExactExponential, 1e-3);
        p.s_shift = -1.0;
        assert!(build_correctors(&st, p, cut).is_err());
        // Mismatched cutoff height.
        let cut2 = make_cutoffs(2.0).unwrap();
        assert!(build_correctors(&st, params(CorrectorMode::ExactExponential, 1e-3), cut2).is_err());
        // Heat-kernel mode rejects x-dependent traces…
        let osc = elsasser_steady(1.0, 1.0, 1.0, 1, 0.0).unwrap();
        assert!(build_correctors(&osc, params(CorrectorMode::PrandtlHeat, 1e-3), cut).is_err());
        // …but accepts constant ones.
        assert!(build_correctors(&st, params(CorrectorMode::PrandtlHeat, 1e-3), cut).is_ok());
    }

    #[test]
    fn wall_value_and_support() {
        let st = elsasser_steady(1.0, 1.0, 0.9, 2, 0.3).unwrap();
        let cs = build_correctors(
            &st,
            params(CorrectorMode::ExactExponential, 1e-3),
            make_cutoffs(1.0).unwrap(),
        )
        .unwrap();
        let tr = wall_traces(&st);
        for k in 0..12 {
            let x = 0.55 * k as f64;
            let up = cs.u_plus(x, 0.0, 0.0);
            assert!((up[0] + tr.u1_at_0.eval(x)).abs() < 1e-15);
            assert_eq!(up[1], 0.0);
            // Support: plus layer dead beyond h/4, minus layer dead below 3h/4.
            for &z in &[0.25, 0.3, 0.6, 0.74] {
                assert_eq!(cs.u_plus(x, z, 0.0), [0.0, 0.0]);
            }
            for &z in &[0.05, 0.4, 0.75] {
                assert_eq!(cs.u_minus(x, z, 0.0), [0.0, 0.0]);
            }
            let um = cs.u_minus(x, 1.0, 0.0);
            assert!((um[0] + tr.u1_at_h.eval(x)).abs() < 1e-15);
            assert_eq!(um[1], 0.0);
        }
    }

    #[test]
    fn boundary_match_both_walls() {
        let states = [
            elsasser_steady(1.0, -1.0, 1.2, 1, 0.7).unwrap(),
            default_rate_state(1.0),
        ];
        for st in &states {
            let cs = build_correctors(
                st,
                params(CorrectorMode::ExactExponential, 2e-3),
                make_cutoffs(1.0).unwrap(),
            )
            .unwrap();
            for k in 0..32 {
                let x = 2.0 * PI * k as f64 / 32.0;
                for (z, _wall) in [(0.0, Wall::Lower), (1.0, Wall::Upper)] {
                    let u0 = st.u(x, z);
                    let ub = cs.u_total(x, z, 0.0);
                    assert!((u0[0] + ub[0]).abs() <= 1e-12, "u1 mismatch at z={z}");
                    assert!((u0[1] + ub[1]).abs() <= 1e-12, "u3 mismatch at z={z}");
                    let b0 = st.b(x, z);
                    let bb = cs.b_total(x, z, 0.0);
                    assert!((b0[0] + bb[0]).abs() <= 1e-12);
                    assert!((b0[1] + bb[1]).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn analytic_divergence_of_each_piece() {
        let st = elsasser_steady(1.0, 1.0, 1.1, 3, 0.2).unwrap();
        let cs = build_correctors(
            &st,
            params(CorrectorMode::ExactExponential, 5e-3),
            make_cutoffs(1.0).unwrap(),
        )
        .unwrap();
        for layer in [&cs.u_plus, &cs.u_minus, &cs.b_plus, &cs.b_minus] {
            for k in 0..40 {
                let x = 0.157 * k as f64;
                let z = 0.024 * k as f64 + 0.01;
                let div = layer.tangential_dx(x, z, 0.0) + layer.normal_dz(x, z, 0.0);
                assert!(div.abs() < 1e-13, "div = {div:.3e} at ({x}, {z})");
            }
        }
    }

    #[test]
    fn discrete_divergence_refines_at_order_two() {
        let st = elsasser_steady(1.0, 1.0, 1.0, 2, 0.5).unwrap();
        let cs = build_correctors(
            &st,
            params(CorrectorMode::ExactExponential, 1e-2),
            make_cutoffs(1.0).unwrap(),
        )
        .unwrap();
        let mut errs = Vec::new();
        for &(nx, nz) in &[(32usize, 65usize), (64, 129)] {
            let g = build_grid(nx, nz, 1.0, 2.0).unwrap();
            let v = crate::fields::VectorField::sample(&g, |x, z| cs.u_total(x, z, 0.0));
            let d = crate::fields::divergence(&v);
            errs.push(d.v.iter().fold(0.0f64, |m, &q| m.max(q.abs())));
        }
        let slope = (errs[0] / errs[1]).log2();
        assert!(slope > 1.8 && slope < 2.2, "slope {slope}, errs {errs:?}");
    }

    #[test]
    fn heat_kernel_wall_value_and_spot_check() {
        let st = default_rate_state(1.0);
        let cs = build_correctors(
            &st,
            params(CorrectorMode::PrandtlHeat, 1e-3),
            make_cutoffs(1.0).unwrap(),
        )
        .unwrap();
        // erfc(0) = 1: wall value is exactly minus the trace.
        let up = cs.u_plus(0.3, 0.0, 0.7);
        assert!((up[0] - (-1.5)).abs() < 1e-14);
        assert_eq!(up[1], 0.0);
        // At the depth where the similarity variable equals 1, the profile is
        // -trace·erfc(1).
        let t = 0.5;
        let z = 2.0 * (1e-3f64 * (t + 1.0)).sqrt();
        let expect = -1.5 * 0.157_299_207_050_285_13;
        assert!((cs.u_plus(0.0, z, t)[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn erfc_matches_quadrature_oracle() {
        // Simpson quadrature of (2/√π)∫_x^8 e^{-s²} ds, independent of the
        // library implementation.
        let quad_erfc = |x: f64| -> f64 {
            let n = 400_000;
            let hi = 8.0;
            let hstep = (hi - x) / n as f64;
            let f = |s: f64| (-s * s).exp();
            // Kahan summation: plain accumulation over 4e5 terms drifts near
            // the 1e-12 comparison tolerance.
            let mut acc = 0.0f64;
            let mut carry = 0.0f64;
            let add = |acc: &mut f64, carry: &mut f64, v: f64| {
                let y = v - *carry;
                let t = *acc + y;
                *carry = (t - *acc) - y;
                *acc = t;
            };
            add(&mut acc, &mut carry, f(x) + f(hi));
            for k in 1..n {
                let s = x + k as f64 * hstep;
                add(&mut acc, &mut carry, if k % 2 == 1 { 4.0 * f(s) } else { 2.0 * f(s) });
            }
            acc * hstep / 3.0 * 2.0 / PI.sqrt()
        };
        for &x in &[0.2, 0.5, 1.0, 1.7, 2.5] {
            let q = quad_erfc(x);
            assert!((erfc(x) - q).abs() <= 1e-12, "x = {x}: {} vs {q}", erfc(x));
        }
        assert!((erfc(1.0) - 0.157_299_207_050_285_13).abs() < 1e-15);
    }

    #[test]
    fn heat_equation_residual_refines_and_guards() {
        let st = default_rate_state(1.0);
        let nu = 1e-2;
        let cs = build_correctors(
            &st,
            params(CorrectorMode::PrandtlHeat, nu),
            make_cutoffs(1.0).unwrap(),
        )
        .unwrap();
        let g1 = build_grid(4, 129, 1.0, 0.0).unwrap();
        let g2 = build_grid(4, 257, 1.0, 0.0).unwrap();
        let r1 = prandtl_residual(&cs, nu, &g1, 0.5).unwrap();
        let r2 = prandtl_residual(&cs, nu, &g2, 0.5).unwrap();
        let slope = (r1 / r2).log2();
        assert!(slope > 1.6 && slope < 2.4, "slope {slope}");
        // Wrong mode errors.
        let ce = build_correctors(
            &st,
            params(CorrectorMode::ExactExponential, nu),
            make_cutoffs(1.0).unwrap(),
        )
        .unwrap();
        assert!(prandtl_residual(&ce, nu, &g1, 0.5).is_err());
        // Zero traces give an exactly zero layer and residual.
        let wp = well_prepared(1.0, 1.0, 1.0, 1, 0.0).unwrap();
        let cw = build_correctors(
            &wp,
            params(CorrectorMode::PrandtlHeat, nu),
            make_cutoffs(1.0).unwrap(),
        )
        .unwrap();
        assert_eq!(prandtl_residual(&cw, nu, &g1, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn aligned_layers_cancel() {
        let st = elsasser_steady(1.0, 1.0, 0.8, 2, 0.1).unwrap();
        let cs = build_correctors(
            &st,
            params(CorrectorMode::ExactExponential, 1e-3),
            make_cutoffs(1.0).unwrap(),
        )
        .unwrap();
        for k in 0..25 {
            let x = 0.77 * k as f64;
            let z = (k as f64 * 0.04).min(0.999);
            let up = cs.u_plus(x, z, 0.0);
            let bp = cs.b_plus(x, z, 0.0);
            assert!((up[0] - bp[0]).abs() <= 1e-14);
            assert!((up[1] - bp[1]).abs() <= 1e-14);
            let ut = cs.u_total(x, z, 0.0);
            let bt = cs.b_total(x, z, 0.0);
            assert!((ut[0] - bt[0]).abs() <= 1e-14 && (ut[1] - bt[1]).abs() <= 1e-14);
        }
    }

    #[test]
    fn zero_trace_state_has_zero_norms() {
        let wp = well_prepared(1.0, -1.0, 0.7, 2, 0.0).unwrap();
        let cs = build_correctors(
            &wp,
            params(CorrectorMode::ExactExponential, 1e-4),
            make_cutoffs(1.0).unwrap(),
        )
        .unwrap();
        let g = build_grid(16, 65, 1.0, 2.0).unwrap();
        let rep = layer_norm_scalings(&cs, &g, 0.0);
        for (_, v) in rep.u.entries().iter().chain(rep.b.entries().iter()) {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn layer_norm_against_independent_quadrature() {
        // Constant trace 1 at both walls; independent 1D fine trapezoid of the
        // full closed-form profile, retyped here rather than shared.
        let st = shear_flow(1.0, ZProfile::constant(1.0), ZProfile::constant(1.0)).unwrap();
        let nu = 1e-4;
        let cs = build_correctors(
            &st,
            params(CorrectorMode::ExactExponential, nu),
            make_cutoffs(1.0).unwrap(),
        )
        .unwrap();
        let g = build_grid(8, 513, 1.0, 6.0).unwrap();
        let rep = layer_norm_scalings(&cs, &g, 0.0);
        assert!(!rep.resolution_warning);

        let h = 1.0f64;
        let rt = nu.sqrt();
        let n = 4_000_000usize;
        let dz = h / n as f64;
        let s = |t: f64| 6.0 * t.powi(5) - 15.0 * t.powi(4) + 10.0 * t.powi(3);
        let sp = |t: f64| 30.0 * t * t * (1.0 - t) * (1.0 - t);
        let mut acc = 0.0;
        for k in 0..=n {
            let z = k as f64 * dz;
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            let t4 = 4.0 * z / h;
            let (r, rp) = if t4 >= 1.0 { (0.0, 0.0) } else { (1.0 - s(t4), -sp(t4) * 4.0 / h) };
            let lower = -((-z / rt).exp() * (r - rt * rp) + rt * rp);
            let t4u = 4.0 * (h - z) / h;
            let (ru, rpu) =
                if t4u >= 1.0 { (0.0, 0.0) } else { (1.0 - s(t4u), sp(t4u) * 4.0 / h) };
            let upper = -((-(h - z) / rt).exp() * (ru + rt * rpu) - rt * rpu);
            acc += w * (lower + upper) * (lower + upper) * dz;
        }
        let oracle = (acc * 2.0 * PI).sqrt();
        let rel = (rep.u.tangential_with_dx_l2 - oracle).abs() / oracle;
        assert!(rel < 2e-3, "grid {} vs oracle {oracle}, rel {rel:.2e}", rep.u.tangential_with_dx_l2);
    }

    #[test]
    fn sup_norms_uniform_in_width() {
        let st = elsasser_steady(1.0, 1.0, 1.0, 1, 0.0).unwrap();
        let g = build_grid(64, 513, 1.0, 6.0).unwrap();
        let mut field_sups = Vec::new();
        let mut ndz_sups = Vec::new();
        for &nu in &[1e-2, 1e-4, 1e-6] {
            let cs = build_correctors(
                &st,
                params(CorrectorMode::ExactExponential, nu),
                make_cutoffs(1.0).unwrap(),
            )
            .unwrap();
            let rep = layer_norm_scalings(&cs, &g, 0.0);
            field_sups.push(rep.u.field_linf);
            ndz_sups.push(rep.u.normal_dz_linf);
        }
        // Sup attained at the wall where the profile equals the trace (or its
        // x-derivative), independent of the width.
        for w in field_sups.windows(2) {
            assert!((w[0] - w[1]).abs() / w[0] < 0.05, "{field_sups:?}");
        }
        for w in ndz_sups.windows(2) {
            assert!((w[0] - w[1]).abs() / w[0] < 0.05, "{ndz_sups:?}");
        }
    }

    #[test]
    fn resolution_warning_on_coarse_grid() {
        let st = default_rate_state(1.0);
        let cs = build_correctors(
            &st,
            params(CorrectorMode::ExactExponential, 1e-6),
            make_cutoffs(1.0).unwrap(),
        )
        .unwrap();
        let coarse = build_grid(8, 33, 1.0, 0.0).unwrap();
        assert!(layer_norm_scalings(&cs, &coarse, 0.0).resolution_warning);
    }

    #[test]
    fn scaling_fit_contract() {
        // Exact half-power law over three decades.
        let samples = [(1e-2, 1e-1), (1e-3, 10f64.powf(-1.5)), (1e-4, 1e-2)];
        let (slope, r2) = scaling_fit(&samples).unwrap();
        assert!((slope - 0.5).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
        // Narrow range rejected.
        assert!(scaling_fit(&[(1e-2, 1.0), (2e-2, 1.0), (4e-2, 1.0)]).is_err());
        // Non-positive values rejected.
        assert!(scaling_fit(&[(1e-2, 1.0), (1e-3, 0.0), (1e-4, 1.0)]).is_err());
    }

    #[test]
    fn magnetic_width_formula() {
        assert!((nu2_star_diffusion_limit(1e-2, 1.0, 0.0).unwrap() - 1e-2).abs() < 1e-18);
        assert!((nu2_star_diffusion_limit(1e-2, 0.1, 0.0).unwrap() - 1e-3).abs() < 1e-18);
        let v = nu2_star_diffusion_limit(1e-2, 0.1, 0.5).unwrap();
        assert!((v - 3.162_277_660_168_379_5e-5).abs() / v < 1e-12);
        assert!(nu2_star_diffusion_limit(1e-2, 0.1, 1.0).is_err());
        assert!(nu2_star_diffusion_limit(0.0, 0.1, 0.0).is_err());
        assert!(nu2_star_diffusion_limit(1e-2, 0.0, 0.0).is_err());
    }
}
