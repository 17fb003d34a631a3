//! Labeled per-term energy budgets of the residual fields.
//!
//! Three decompositions of `½ d/dt ∫(|u_R|² + |b_R|²) + ε₁∫|∇u_R|² +
//! ε₂∫|∇b_R|²` into named quadratures:
//!
//! * `J` — residuals against an exact steady core plus static exponential
//!   layers on both fields (13 terms);
//! * `K` — the x-independent shear variant with heat-kernel layers, where
//!   the layer heat identity collapses the list to 7 terms;
//! * `I` — residuals against a viscous zero-magnetic-diffusion reference
//!   trajectory plus a magnetic layer only (11 terms).
//!
//! Advection terms that vanish by skew symmetry are measured through the
//! same skew-form operator the solver integrates, so their reported values
//! are genuine round-off. Diffusion terms are quadratures of the
//! integrated-by-parts forms; the boundary terms drop because every residual
//! component vanishes identically at the walls. Pressure terms pair the
//! staggered cell pressure with the enforced discrete divergence of the
//! evolved velocity (the closed-form pieces of each decomposition are
//! divergence-free analytically).

use serde::Serialize;

use crate::correctors::{CorrectorMode, CorrectorSet, LayerGrad};
use crate::fields::{GridSpec, WallRule};
use crate::ideal::{IdealDerivs, IdealState, StateKind};
use crate::solver::advect::skew_component;
use crate::solver::poisson::cell_divergence;
use crate::solver::MhdState;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BudgetFamily {
    J,
    K,
    I,
}

const J_LABELS: [&str; 13] = [
    "J1", "J2", "J3", "J4", "J5", "J6", "J7", "J8", "J9", "J10", "J11", "J12", "J13",
];
const K_LABELS: [&str; 7] = ["K1", "K2", "K3", "K4", "K5", "K6", "K7"];
const I_LABELS: [&str; 11] =
    ["I1", "I2", "I3", "I4", "I5", "I6", "I7", "I8", "I9", "I10", "I11"];

impl BudgetFamily {
    pub fn labels(self) -> &'static [&'static str] {
        match self {
            BudgetFamily::J => &J_LABELS,
            BudgetFamily::K => &K_LABELS,
            BudgetFamily::I => &I_LABELS,
        }
    }
}

/// The term values of one budget family at one sampled time.
#[derive(Debug, Clone, Serialize)]
pub struct BudgetReport {
    pub family: BudgetFamily,
    pub t: f64,
    pub terms: Vec<f64>,
}

impl BudgetReport {
    pub fn labels(&self) -> &'static [&'static str] {
        self.family.labels()
    }

    pub fn total(&self) -> f64 {
        self.terms.iter().sum()
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.labels().iter().position(|&l| l == name).map(|i| self.terms[i])
    }
}

#[inline]
fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
fn sub2(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

/// `(v·∇)ℓ` for a layer field with gradient bundle `g`.
#[inline]
fn adv_layer(v: [f64; 2], g: &LayerGrad) -> [f64; 2] {
    [v[0] * g.t_dx + v[1] * g.t_dz, v[0] * g.n_dx + v[1] * g.n_dz]
}

/// `(v·∇)u⁰`.
#[inline]
fn adv_core_u(v: [f64; 2], d: &IdealDerivs) -> [f64; 2] {
    [v[0] * d.u1_x + v[1] * d.u1_z, v[0] * d.u3_x + v[1] * d.u3_z]
}

/// `(v·∇)b⁰`.
#[inline]
fn adv_core_b(v: [f64; 2], d: &IdealDerivs) -> [f64; 2] {
    [v[0] * d.b1_x + v[1] * d.b1_z, v[0] * d.b3_x + v[1] * d.b3_z]
}

fn pair_w(grid: &GridSpec, a: &[f64], b: &[f64]) -> f64 {
    let nx = grid.nx;
    let mut total = 0.0;
    for j in 0..grid.nz {
        let base = j * nx;
        let mut row = 0.0;
        for i in 0..nx {
            row += a[base + i] * b[base + i];
        }
        total += grid.wz[j] * row;
    }
    total * grid.dx
}

/// `(N(v, w), r)_W` with the solver's skew-form advection operator.
fn skew_pair(grid: &GridSpec, v1: &[f64], v3: &[f64], w: &[f64], r: &[f64]) -> f64 {
    let mut out = vec![0.0; grid.len()];
    skew_component(grid, v1, v3, w, &mut out);
    pair_w(grid, &out, r)
}

/// Staggered-pressure work against the enforced cell divergence of `(v1, v3)`.
fn pressure_term(grid: &GridSpec, p_cells: &[f64], v1: &[f64], v3: &[f64]) -> f64 {
    let div = cell_divergence(grid, v1, v3);
    let nx = grid.nx;
    let mut total = 0.0;
    for c in 0..grid.nz - 1 {
        let mut row = 0.0;
        for i in 0..nx {
            let q = c * nx + i;
            row += p_cells[q] * div[q];
        }
        total += grid.dzc[c] * row;
    }
    total * grid.dx
}

/// `u_R = u − u⁰ − u_B`, `b_R = b − b⁰ − b_B` as node arrays
/// `[ru1, ru3, rb1, rb3]`.
fn residuals_vs_core(s: &MhdState, ideal: &IdealState, cs: &CorrectorSet) -> [Vec<f64>; 4] {
    let grid = s.grid();
    let n = grid.len();
    let mut out = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for j in 0..grid.nz {
        let z = grid.z[j];
        for i in 0..grid.nx {
            let x = grid.x[i];
            let q = grid.idx(i, j);
            let u0 = ideal.u(x, z);
            let b0 = ideal.b(x, z);
            let lu = cs.u_total(x, z, s.t);
            let lb = cs.b_total(x, z, s.t);
            out[0][q] = s.u.f1.v[q] - u0[0] - lu[0];
            out[1][q] = s.u.f3.v[q] - u0[1] - lu[1];
            out[2][q] = s.b.f1.v[q] - b0[0] - lb[0];
            out[3][q] = s.b.f3.v[q] - b0[1] - lb[1];
        }
    }
    out
}

/// `u_R = u − u_ref`, `b_R = b − b_ref − b_B`.
fn residuals_vs_reference(s: &MhdState, r: &MhdState, cs: &CorrectorSet) -> [Vec<f64>; 4] {
    let grid = s.grid();
    let n = grid.len();
    let mut out = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for j in 0..grid.nz {
        let z = grid.z[j];
        for i in 0..grid.nx {
            let x = grid.x[i];
            let q = grid.idx(i, j);
            let lb = cs.b_total(x, z, s.t);
            out[0][q] = s.u.f1.v[q] - r.u.f1.v[q];
            out[1][q] = s.u.f3.v[q] - r.u.f3.v[q];
            out[2][q] = s.b.f1.v[q] - r.b.f1.v[q] - lb[0];
            out[3][q] = s.b.f3.v[q] - r.b.f3.v[q] - lb[1];
        }
    }
    out
}

fn slopes(grid: &GridSpec, comps: &[Vec<f64>; 4]) -> ([Vec<f64>; 4], [Vec<f64>; 4]) {
    let n = grid.len();
    let mut dx = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut dz = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for c in 0..4 {
        grid.dx_slice(&comps[c], &mut dx[c]);
        grid.dz_slice(&comps[c], &mut dz[c], WallRule::OneSided);
    }
    (dx, dz)
}

fn check_core(s: &MhdState, ideal: &IdealState, cs: &CorrectorSet) -> Result<()> {
    let grid = s.grid();
    if (ideal.h - grid.h).abs() > 1e-12 * grid.h || (cs.h - grid.h).abs() > 1e-12 * grid.h {
        return Err(Error::Precondition(
            "budget: state, corrector, and grid heights must agree".into(),
        ));
    }
    Ok(())
}

/// Per-term energy budget of the residual fields at the state's time.
///
/// * `J` — needs static exponential layers (`cs` in exact-exponential mode).
/// * `K` — needs an x-independent shear core and heat-kernel layers.
/// * `I` — needs the viscous reference state at the same time, and a
///   corrector whose velocity traces vanish (magnetic layer only).
pub fn energy_budget(
    s: &MhdState,
    ideal: &IdealState,
    cs: &CorrectorSet,
    family: BudgetFamily,
    reference: Option<&MhdState>,
    eps1: f64,
    eps2: f64,
) -> Result<BudgetReport> {
    if !eps1.is_finite() || !eps2.is_finite() || eps1 < 0.0 || eps2 < 0.0 {
        return Err(Error::Domain(format!("budget: bad diffusion pair ({eps1}, {eps2})")));
    }
    check_core(s, ideal, cs)?;
    match family {
        BudgetFamily::J => {
            if cs.params.mode != CorrectorMode::ExactExponential {
                return Err(Error::Precondition(
                    "J budget: layers must be the static exponential profiles".into(),
                ));
            }
            Ok(BudgetReport { family, t: s.t, terms: j_terms(s, ideal, cs, eps1, eps2) })
        }
        BudgetFamily::K => {
            if cs.params.mode != CorrectorMode::PrandtlHeat {
                return Err(Error::Precondition(
                    "K budget: layers must be the heat-kernel profiles".into(),
                ));
            }
            if !matches!(ideal.kind, StateKind::ShearFlow { .. }) {
                return Err(Error::Precondition(
                    "K budget: the core must be an x-independent shear state".into(),
                ));
            }
            Ok(BudgetReport { family, t: s.t, terms: k_terms(s, ideal, cs, eps1, eps2) })
        }
        BudgetFamily::I => {
            let r = reference.ok_or_else(|| {
                Error::Precondition(
                    "I budget: the viscous reference state is required".into(),
                )
            })?;
            if r.grid().nx != s.grid().nx || r.grid().nz != s.grid().nz {
                return Err(Error::Precondition(
                    "I budget: reference and state grids must match".into(),
                ));
            }
            if (r.t - s.t).abs() > 1e-9 * s.t.abs().max(1.0) {
                return Err(Error::Precondition(format!(
                    "I budget: reference time {} does not match state time {}",
                    r.t, s.t
                )));
            }
            if !cs.traces.u1_at_0.is_zero() || !cs.traces.u1_at_h.is_zero() {
                return Err(Error::Precondition(
                    "I budget: the corrector must carry a magnetic layer only \
                     (velocity wall traces must vanish)"
                        .into(),
                ));
            }
            Ok(BudgetReport { family, t: s.t, terms: i_terms(s, cs, r, eps2) })
        }
    }
}

fn j_terms(s: &MhdState, ideal: &IdealState, cs: &CorrectorSet, eps1: f64, eps2: f64) -> Vec<f64> {
    let grid = s.grid();
    let t = s.t;
    let r = residuals_vs_core(s, ideal, cs);
    let (dxr, dzr) = slopes(grid, &r);

    let j1 = pressure_term(grid, &s.p_cells, &s.u.f1.v, &s.u.f3.v);
    let j3 = -(skew_pair(grid, &s.u.f1.v, &s.u.f3.v, &r[0], &r[0])
        + skew_pair(grid, &s.u.f1.v, &s.u.f3.v, &r[1], &r[1])
        + skew_pair(grid, &s.u.f1.v, &s.u.f3.v, &r[2], &r[2])
        + skew_pair(grid, &s.u.f1.v, &s.u.f3.v, &r[3], &r[3]));
    let j9 = skew_pair(grid, &s.b.f1.v, &s.b.f3.v, &r[2], &r[0])
        + skew_pair(grid, &s.b.f1.v, &s.b.f3.v, &r[3], &r[1])
        + skew_pair(grid, &s.b.f1.v, &s.b.f3.v, &r[0], &r[2])
        + skew_pair(grid, &s.b.f1.v, &s.b.f3.v, &r[1], &r[3]);

    let mut j2 = 0.0;
    let mut j4 = 0.0;
    let mut j5 = 0.0;
    let mut j6 = 0.0;
    let mut j7 = 0.0;
    let mut j8 = 0.0;
    let mut z10u = 0.0;
    let mut z10b = 0.0;
    let mut z11u = 0.0;
    let mut z11b = 0.0;
    let mut x12u = 0.0;
    let mut x12b = 0.0;
    let mut x13u = 0.0;
    let mut x13b = 0.0;
    for j in 0..grid.nz {
        let z = grid.z[j];
        let wz = grid.wz[j];
        let mut r2 = 0.0;
        let mut r4 = 0.0;
        let mut r5 = 0.0;
        let mut r6 = 0.0;
        let mut r7 = 0.0;
        let mut r8 = 0.0;
        let mut r10u = 0.0;
        let mut r10b = 0.0;
        let mut r11u = 0.0;
        let mut r11b = 0.0;
        let mut r12u = 0.0;
        let mut r12b = 0.0;
        let mut r13u = 0.0;
        let mut r13b = 0.0;
        for i in 0..grid.nx {
            let x = grid.x[i];
            let q = grid.idx(i, j);
            let u0 = ideal.u(x, z);
            let b0 = ideal.b(x, z);
            let d = ideal.derivs(x, z);
            let gu = cs.u_grad(x, z, t);
            let gb = cs.b_grad(x, z, t);
            let lu = cs.u_total(x, z, t);
            let lb = cs.b_total(x, z, t);
            let ru = [r[0][q], r[1][q]];
            let rb = [r[2][q], r[3][q]];

            r2 -= dot2(cs.u_total_dt(x, z, t), ru) + dot2(cs.b_total_dt(x, z, t), rb);
            // Bracketed differences keep the aligned-state cancellations
            // exact in floating point.
            r4 += dot2(sub2(adv_layer(b0, &gb), adv_layer(u0, &gu)), ru)
                + dot2(sub2(adv_layer(b0, &gu), adv_layer(u0, &gb)), rb);
            r5 += dot2(sub2(adv_layer(lb, &gb), adv_layer(lu, &gu)), ru)
                + dot2(sub2(adv_layer(lb, &gu), adv_layer(lu, &gb)), rb);
            r6 += dot2(sub2(adv_layer(rb, &gb), adv_layer(ru, &gu)), ru)
                + dot2(sub2(adv_layer(rb, &gu), adv_layer(ru, &gb)), rb);
            r7 += dot2(sub2(adv_core_b(lb, &d), adv_core_u(lu, &d)), ru)
                + dot2(sub2(adv_core_u(lb, &d), adv_core_b(lu, &d)), rb);
            r8 += dot2(sub2(adv_core_b(rb, &d), adv_core_u(ru, &d)), ru)
                + dot2(sub2(adv_core_u(rb, &d), adv_core_b(ru, &d)), rb);

            r10u += gu.t_dz * dzr[0][q] + gu.n_dz * dzr[1][q];
            r10b += gb.t_dz * dzr[2][q] + gb.n_dz * dzr[3][q];
            r11u += d.u1_z * dzr[0][q] + d.u3_z * dzr[1][q];
            r11b += d.b1_z * dzr[2][q] + d.b3_z * dzr[3][q];
            r12u += gu.t_dx * dxr[0][q] + gu.n_dx * dxr[1][q];
            r12b += gb.t_dx * dxr[2][q] + gb.n_dx * dxr[3][q];
            r13u += d.u1_x * dxr[0][q] + d.u3_x * dxr[1][q];
            r13b += d.b1_x * dxr[2][q] + d.b3_x * dxr[3][q];
        }
        j2 += wz * r2;
        j4 += wz * r4;
        j5 += wz * r5;
        j6 += wz * r6;
        j7 += wz * r7;
        j8 += wz * r8;
        z10u += wz * r10u;
        z10b += wz * r10b;
        z11u += wz * r11u;
        z11b += wz * r11b;
        x12u += wz * r12u;
        x12b += wz * r12b;
        x13u += wz * r13u;
        x13b += wz * r13b;
    }
    let dx = grid.dx;
    vec![
        j1,
        j2 * dx,
        j3,
        j4 * dx,
        j5 * dx,
        j6 * dx,
        j7 * dx,
        j8 * dx,
        j9,
        -(eps1 * z10u + eps2 * z10b) * dx,
        -(eps1 * z11u + eps2 * z11b) * dx,
        -(eps1 * x12u + eps2 * x12b) * dx,
        -(eps1 * x13u + eps2 * x13b) * dx,
    ]
}

fn k_terms(s: &MhdState, ideal: &IdealState, cs: &CorrectorSet, eps1: f64, eps2: f64) -> Vec<f64> {
    let grid = s.grid();
    let t = s.t;
    let r = residuals_vs_core(s, ideal, cs);
    let (_, dzr) = slopes(grid, &r);

    let k1 = pressure_term(grid, &s.p_cells, &s.u.f1.v, &s.u.f3.v);
    let k2 = -(skew_pair(grid, &s.u.f1.v, &s.u.f3.v, &r[0], &r[0])
        + skew_pair(grid, &s.u.f1.v, &s.u.f3.v, &r[1], &r[1])
        + skew_pair(grid, &s.u.f1.v, &s.u.f3.v, &r[2], &r[2])
        + skew_pair(grid, &s.u.f1.v, &s.u.f3.v, &r[3], &r[3]));
    let k5 = skew_pair(grid, &s.b.f1.v, &s.b.f3.v, &r[2], &r[0])
        + skew_pair(grid, &s.b.f1.v, &s.b.f3.v, &r[3], &r[1])
        + skew_pair(grid, &s.b.f1.v, &s.b.f3.v, &r[0], &r[2])
        + skew_pair(grid, &s.b.f1.v, &s.b.f3.v, &r[1], &r[3]);

    let mut k3 = 0.0;
    let mut k4 = 0.0;
    let mut z6u = 0.0;
    let mut z6b = 0.0;
    let mut z7u = 0.0;
    let mut z7b = 0.0;
    for j in 0..grid.nz {
        let z = grid.z[j];
        let wz = grid.wz[j];
        let mut r3 = 0.0;
        let mut r4 = 0.0;
        let mut r6u = 0.0;
        let mut r6b = 0.0;
        let mut r7u = 0.0;
        let mut r7b = 0.0;
        for i in 0..grid.nx {
            let x = grid.x[i];
            let q = grid.idx(i, j);
            let d = ideal.derivs(x, z);
            let gu = cs.u_grad(x, z, t);
            let gb = cs.b_grad(x, z, t);
            let ru = [r[0][q], r[1][q]];
            let rb = [r[2][q], r[3][q]];

            r3 += dot2(sub2(adv_layer(rb, &gb), adv_layer(ru, &gu)), ru)
                + dot2(sub2(adv_layer(rb, &gu), adv_layer(ru, &gb)), rb);
            r4 += dot2(sub2(adv_core_b(rb, &d), adv_core_u(ru, &d)), ru)
                + dot2(sub2(adv_core_u(rb, &d), adv_core_b(ru, &d)), rb);
            r6u += d.u1_z * dzr[0][q] + d.u3_z * dzr[1][q];
            r6b += d.b1_z * dzr[2][q] + d.b3_z * dzr[3][q];
            r7u += gu.t_dz * dzr[0][q] + gu.n_dz * dzr[1][q];
            r7b += gb.t_dz * dzr[2][q] + gb.n_dz * dzr[3][q];
        }
        k3 += wz * r3;
        k4 += wz * r4;
        z6u += wz * r6u;
        z6b += wz * r6b;
        z7u += wz * r7u;
        z7b += wz * r7b;
    }
    let dx = grid.dx;
    vec![
        k1,
        k2,
        k3 * dx,
        k4 * dx,
        k5,
        -(eps1 * z6u + eps2 * z6b) * dx,
        -((eps1 - cs.params.nu1_star) * z7u + (eps2 - cs.params.nu2_star) * z7b) * dx,
    ]
}

fn i_terms(s: &MhdState, cs: &CorrectorSet, rf: &MhdState, eps2: f64) -> Vec<f64> {
    let grid = s.grid();
    let t = s.t;
    let r = residuals_vs_reference(s, rf, cs);
    let (dxr, dzr) = slopes(grid, &r);

    // Discrete gradients of the reference fields.
    let refc = [rf.u.f1.v.clone(), rf.u.f3.v.clone(), rf.b.f1.v.clone(), rf.b.f3.v.clone()];
    let (dxf, dzf) = slopes(grid, &refc);

    let n = grid.len();
    let mut du1 = vec![0.0; n];
    let mut du3 = vec![0.0; n];
    let mut pdiff = vec![0.0; s.p_cells.len()];
    for q in 0..n {
        du1[q] = s.u.f1.v[q] - rf.u.f1.v[q];
        du3[q] = s.u.f3.v[q] - rf.u.f3.v[q];
    }
    for (q, pd) in pdiff.iter_mut().enumerate() {
        *pd = s.p_cells[q] - rf.p_cells[q];
    }
    let i1 = pressure_term(grid, &pdiff, &du1, &du3);
    let i3 = -(skew_pair(grid, &s.u.f1.v, &s.u.f3.v, &r[0], &r[0])
        + skew_pair(grid, &s.u.f1.v, &s.u.f3.v, &r[1], &r[1])
        + skew_pair(grid, &s.u.f1.v, &s.u.f3.v, &r[2], &r[2])
        + skew_pair(grid, &s.u.f1.v, &s.u.f3.v, &r[3], &r[3]));
    let i9 = skew_pair(grid, &s.b.f1.v, &s.b.f3.v, &r[2], &r[0])
        + skew_pair(grid, &s.b.f1.v, &s.b.f3.v, &r[3], &r[1])
        + skew_pair(grid, &s.b.f1.v, &s.b.f3.v, &r[0], &r[2])
        + skew_pair(grid, &s.b.f1.v, &s.b.f3.v, &r[1], &r[3]);

    let mut i2 = 0.0;
    let mut i4 = 0.0;
    let mut i5 = 0.0;
    let mut i6 = 0.0;
    let mut i7 = 0.0;
    let mut i8 = 0.0;
    let mut g10 = 0.0;
    let mut g11 = 0.0;
    for j in 0..grid.nz {
        let z = grid.z[j];
        let wz = grid.wz[j];
        let mut r2 = 0.0;
        let mut r4 = 0.0;
        let mut r5 = 0.0;
        let mut r6 = 0.0;
        let mut r7 = 0.0;
        let mut r8 = 0.0;
        let mut r10 = 0.0;
        let mut r11 = 0.0;
        for i in 0..grid.nx {
            let x = grid.x[i];
            let q = grid.idx(i, j);
            let gb = cs.b_grad(x, z, t);
            let lb = cs.b_total(x, z, t);
            let ru = [r[0][q], r[1][q]];
            let rb = [r[2][q], r[3][q]];
            let uref = [rf.u.f1.v[q], rf.u.f3.v[q]];
            let bref = [rf.b.f1.v[q], rf.b.f3.v[q]];

            r2 -= dot2(cs.b_total_dt(x, z, t), rb);
            r4 += dot2(adv_layer(bref, &gb), ru) - dot2(adv_layer(uref, &gb), rb);
            r5 += dot2(adv_layer(lb, &gb), ru);
            r6 += dot2(adv_layer(rb, &gb), ru) - dot2(adv_layer(ru, &gb), rb);
            // Reference-field advection uses the discrete slopes.
            let bb_dot_bref =
                [lb[0] * dxf[2][q] + lb[1] * dzf[2][q], lb[0] * dxf[3][q] + lb[1] * dzf[3][q]];
            let bb_dot_uref =
                [lb[0] * dxf[0][q] + lb[1] * dzf[0][q], lb[0] * dxf[1][q] + lb[1] * dzf[1][q]];
            r7 += dot2(bb_dot_bref, ru) + dot2(bb_dot_uref, rb);
            let ur_dot_uref =
                [ru[0] * dxf[0][q] + ru[1] * dzf[0][q], ru[0] * dxf[1][q] + ru[1] * dzf[1][q]];
            let ur_dot_bref =
                [ru[0] * dxf[2][q] + ru[1] * dzf[2][q], ru[0] * dxf[3][q] + ru[1] * dzf[3][q]];
            let br_dot_uref =
                [rb[0] * dxf[0][q] + rb[1] * dzf[0][q], rb[0] * dxf[1][q] + rb[1] * dzf[1][q]];
            let br_dot_bref =
                [rb[0] * dxf[2][q] + rb[1] * dzf[2][q], rb[0] * dxf[3][q] + rb[1] * dzf[3][q]];
            r8 += dot2(sub2(br_dot_bref, ur_dot_uref), ru)
                + dot2(sub2(br_dot_uref, ur_dot_bref), rb);
            r10 += dxf[2][q] * dxr[2][q]
                + dzf[2][q] * dzr[2][q]
                + dxf[3][q] * dxr[3][q]
                + dzf[3][q] * dzr[3][q];
            r11 += gb.t_dx * dxr[2][q]
                + gb.t_dz * dzr[2][q]
                + gb.n_dx * dxr[3][q]
                + gb.n_dz * dzr[3][q];
        }
        i2 += wz * r2;
        i4 += wz * r4;
        i5 += wz * r5;
        i6 += wz * r6;
        i7 += wz * r7;
        i8 += wz * r8;
        g10 += wz * r10;
        g11 += wz * r11;
    }
    let dx = grid.dx;
    vec![
        i1,
        i2 * dx,
        i3,
        i4 * dx,
        i5 * dx,
        i6 * dx,
        i7 * dx,
        i8 * dx,
        i9,
        -eps2 * g10 * dx,
        -eps2 * g11 * dx,
    ]
}
