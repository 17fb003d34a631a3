//! Closed-form steady reference states for the inviscid channel system.
//!
//! Three families, all exactly steady with zero pressure and zero normal
//! trace at both walls:
//!
//! * aligned stream states (`b = ±u`, cellular in x),
//! * shear flows `u = (U(z), 0)`, `b = (B(z), 0)` for arbitrary profiles,
//! * zero-trace stream states (both components of `u` and `b` vanish at the
//!   walls), used as the well-prepared control case.
//!
//! Every family evaluates in closed form, including first derivatives and
//! wall traces, so downstream error measurements never involve an auxiliary
//! solve.

use crate::fields::{GridSpec, ScalarField, VectorField, WallRule};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// A smooth profile of z alone: `c0 + c1·z + cos1·cos(πz/h) + sin1·sin(πz/h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ZProfile {
    pub c0: f64,
    pub c1: f64,
    pub cos1: f64,
    pub sin1: f64,
}

impl ZProfile {
    pub fn constant(c: f64) -> Self {
        ZProfile { c0: c, ..Default::default() }
    }

    pub fn linear(c0: f64, c1: f64) -> Self {
        ZProfile { c0, c1, ..Default::default() }
    }

    pub fn eval(&self, h: f64, z: f64) -> f64 {
        let k = PI / h;
        self.c0 + self.c1 * z + self.cos1 * (k * z).cos() + self.sin1 * (k * z).sin()
    }

    pub fn deriv(&self, h: f64, z: f64) -> f64 {
        let k = PI / h;
        self.c1 - self.cos1 * k * (k * z).sin() + self.sin1 * k * (k * z).cos()
    }

    pub fn deriv2(&self, h: f64, z: f64) -> f64 {
        let k = PI / h;
        -k * k * (self.cos1 * (k * z).cos() + self.sin1 * (k * z).sin())
    }

    fn sup_bounds(&self, h: f64) -> [f64; 3] {
        let k = PI / h;
        let trig = self.cos1.abs() + self.sin1.abs();
        [
            self.c0.abs() + self.c1.abs() * h + trig,
            self.c1.abs() + k * trig,
            k * k * trig,
        ]
    }
}

/// A tangential wall trace `τ(x) = c + amp·sin(mode·x + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trace {
    pub c: f64,
    pub amp: f64,
    pub mode: f64,
    pub phase: f64,
}

impl Trace {
    pub fn constant(c: f64) -> Self {
        Trace { c, amp: 0.0, mode: 0.0, phase: 0.0 }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.c + self.amp * (self.mode * x + self.phase).sin()
    }

    pub fn d1(&self, x: f64) -> f64 {
        self.amp * self.mode * (self.mode * x + self.phase).cos()
    }

    pub fn d2(&self, x: f64) -> f64 {
        -self.amp * self.mode * self.mode * (self.mode * x + self.phase).sin()
    }

    pub fn is_constant(&self) -> bool {
        self.amp == 0.0
    }

    pub fn is_zero(&self) -> bool {
        self.c == 0.0 && self.amp == 0.0
    }

    pub fn scaled(&self, s: f64) -> Self {
        Trace { c: s * self.c, amp: s * self.amp, mode: self.mode, phase: self.phase }
    }
}

/// Which closed-form family a state belongs to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StateKind {
    /// `ψ = amp·(h/π)·sin(mode·x + phase)·sin(πz/h)`, `u = curl ψ`, `b = sign·u`.
    ElsasserSteady { sign: f64, amp: f64, mode: u32, phase: f64 },
    /// `u = (U(z), 0)`, `b = (B(z), 0)`.
    ShearFlow { u: ZProfile, b: ZProfile },
    /// `ψ = amp·(h/2π)·sin(mode·x + phase)·sin²(πz/h)`, `b = sign·u`;
    /// both velocity components vanish at the walls.
    WellPrepared { sign: f64, amp: f64, mode: u32, phase: f64 },
}

/// A steady reference state. Construct through [`elsasser_steady`],
/// [`shear_flow`], or [`well_prepared`].
#[derive(Debug, Clone)]
pub struct IdealState {
    pub kind: StateKind,
    pub h: f64,
    /// Conservative bound on the sup of the state and its first two
    /// derivatives; feeds diagnostic constants.
    pub s_norm_bound: f64,
}

/// The four tangential wall traces of a state.
#[derive(Debug, Clone, Copy)]
pub struct WallTraces {
    pub u1_at_0: Trace,
    pub u1_at_h: Trace,
    pub b1_at_0: Trace,
    pub b1_at_h: Trace,
}

/// All first partial derivatives of `(u, b)` at a point.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdealDerivs {
    pub u1_x: f64,
    pub u1_z: f64,
    pub u3_x: f64,
    pub u3_z: f64,
    pub b1_x: f64,
    pub b1_z: f64,
    pub b3_x: f64,
    pub b3_z: f64,
}

fn check_sign(sign: f64) -> Result<f64> {
    if sign == 1.0 || sign == -1.0 {
        Ok(sign)
    } else {
        Err(Error::config("sign", format!("must be +1 or -1, got {sign}")))
    }
}

fn check_h(h: f64) -> Result<f64> {
    if h > 0.0 && h.is_finite() {
        Ok(h)
    } else {
        Err(Error::config("h", format!("must be positive and finite, got {h}")))
    }
}

/// Aligned stream state with `b = sign·u` and nonzero tangential wall traces.
pub fn elsasser_steady(h: f64, sign: f64, amp: f64, mode: u32, phase: f64) -> Result<IdealState> {
    let h = check_h(h)?;
    let sign = check_sign(sign)?;
    if mode == 0 {
        return Err(Error::config("mode", "must be >= 1"));
    }
    let m = mode as f64;
    let k = PI / h;
    // u1 = amp sin(mx+φ) cos(kz); u3 = -amp (m/k) cos(mx+φ) sin(kz).
    let sup0 = amp.abs() * (1.0 + m / k);
    let sup1 = amp.abs() * (m + k + 2.0 * m);
    let sup2 = amp.abs() * (m * m + k * k + m * m / k * k + 2.0 * m * k);
    let kind = StateKind::ElsasserSteady { sign, amp, mode, phase };
    Ok(IdealState { kind, h, s_norm_bound: 2.0 * (sup0 + sup1 + sup2) })
}

/// Shear flow `u = (U(z), 0)`, `b = (B(z), 0)`; steady for any profiles.
pub fn shear_flow(h: f64, u: ZProfile, b: ZProfile) -> Result<IdealState> {
    let h = check_h(h)?;
    let su = u.sup_bounds(h);
    let sb = b.sup_bounds(h);
    let bound = su.iter().sum::<f64>() + sb.iter().sum::<f64>();
    Ok(IdealState { kind: StateKind::ShearFlow { u, b }, h, s_norm_bound: bound })
}

/// Zero-trace stream state: both components of `u` and `b = sign·u` vanish at
/// the walls.
pub fn well_prepared(h: f64, sign: f64, amp: f64, mode: u32, phase: f64) -> Result<IdealState> {
    let h = check_h(h)?;
    let sign = check_sign(sign)?;
    if mode == 0 {
        return Err(Error::config("mode", "must be >= 1"));
    }
    let m = mode as f64;
    let k = PI / h;
    let sup0 = amp.abs() * (1.0 + m / (2.0 * k));
    let sup1 = amp.abs() * (m + 2.0 * k + m);
    let sup2 = amp.abs() * (m + 2.0 * k).powi(2);
    let kind = StateKind::WellPrepared { sign, amp, mode, phase };
    Ok(IdealState { kind, h, s_norm_bound: 2.0 * (sup0 + sup1 + sup2) })
}

/// Default state for the convergence-rate studies: a shear flow with
/// `U = B = 1 + cos(πz/h)/2`, giving distinct nonzero traces at both walls.
pub fn default_rate_state(h: f64) -> IdealState {
    let p = ZProfile { c0: 1.0, c1: 0.0, cos1: 0.5, sin1: 0.0 };
    shear_flow(h, p, p).expect("static profile is valid")
}

impl IdealState {
    /// Velocity at a point (no domain check; see [`eval_ideal`]).
    pub fn u(&self, x: f64, z: f64) -> [f64; 2] {
        let k = PI / self.h;
        match self.kind {
            StateKind::ElsasserSteady { amp, mode, phase, .. } => {
                let m = mode as f64;
                let s = (m * x + phase).sin();
                let c = (m * x + phase).cos();
                [amp * s * (k * z).cos(), -amp * (m / k) * c * (k * z).sin()]
            }
            StateKind::ShearFlow { u, .. } => [u.eval(self.h, z), 0.0],
            StateKind::WellPrepared { amp, mode, phase, .. } => {
                let m = mode as f64;
                let s = (m * x + phase).sin();
                let c = (m * x + phase).cos();
                let sz = (k * z).sin();
                // ψ = amp/(2k)·sin(mx+φ)·sin²(kz)
                [amp * s * sz * (k * z).cos(), -amp * (m / (2.0 * k)) * c * sz * sz]
            }
        }
    }

    /// Magnetic field at a point.
    pub fn b(&self, x: f64, z: f64) -> [f64; 2] {
        match self.kind {
            StateKind::ElsasserSteady { sign, .. } | StateKind::WellPrepared { sign, .. } => {
                let u = self.u(x, z);
                [sign * u[0], sign * u[1]]
            }
            StateKind::ShearFlow { b, .. } => [b.eval(self.h, z), 0.0],
        }
    }

    /// All first derivatives at a point, in closed form.
    pub fn derivs(&self, x: f64, z: f64) -> IdealDerivs {
        let k = PI / self.h;
        match self.kind {
            StateKind::ElsasserSteady { sign, amp, mode, phase } => {
                let m = mode as f64;
                let s = (m * x + phase).sin();
                let c = (m * x + phase).cos();
                let (sz, cz) = ((k * z).sin(), (k * z).cos());
                let u1_x = amp * m * c * cz;
                let u1_z = -amp * k * s * sz;
                let u3_x = amp * (m * m / k) * s * sz;
                let u3_z = -amp * m * c * cz;
                IdealDerivs {
                    u1_x,
                    u1_z,
                    u3_x,
                    u3_z,
                    b1_x: sign * u1_x,
                    b1_z: sign * u1_z,
                    b3_x: sign * u3_x,
                    b3_z: sign * u3_z,
                }
            }
            StateKind::ShearFlow { u, b } => IdealDerivs {
                u1_z: u.deriv(self.h, z),
                b1_z: b.deriv(self.h, z),
                ..Default::default()
            },
            StateKind::WellPrepared { sign, amp, mode, phase } => {
                let m = mode as f64;
                let s = (m * x + phase).sin();
                let c = (m * x + phase).cos();
                let (sz, cz) = ((k * z).sin(), (k * z).cos());
                let u1_x = amp * m * c * sz * cz;
                let u1_z = amp * k * s * (cz * cz - sz * sz);
                let u3_x = amp * (m * m / (2.0 * k)) * s * sz * sz;
                let u3_z = -amp * m * c * sz * cz;
                IdealDerivs {
                    u1_x,
                    u1_z,
                    u3_x,
                    u3_z,
                    b1_x: sign * u1_x,
                    b1_z: sign * u1_z,
                    b3_x: sign * u3_x,
                    b3_z: sign * u3_z,
                }
            }
        }
    }
}

/// Evaluates `(u, b, p)` at a point; the state is steady, so `t` is accepted
/// for interface symmetry and ignored. Errors if `z` leaves `[0, h]`.
pub fn eval_ideal(
    state: &IdealState,
    x: f64,
    z: f64,
    _t: f64,
) -> Result<([f64; 2], [f64; 2], f64)> {
    if !(0.0..=state.h).contains(&z) {
        return Err(Error::Domain(format!(
            "z = {z} outside the channel [0, {}]",
            state.h
        )));
    }
    Ok((state.u(x, z), state.b(x, z), 0.0))
}

/// Tangential wall traces of the state.
pub fn wall_traces(state: &IdealState) -> WallTraces {
    match state.kind {
        StateKind::ElsasserSteady { sign, amp, mode, phase } => {
            // u1(x, 0) = amp·sin(mx+φ); cos(πz/h) flips sign at z = h.
            let t0 = Trace { c: 0.0, amp, mode: mode as f64, phase };
            let th = Trace { c: 0.0, amp: -amp, mode: mode as f64, phase };
            WallTraces {
                u1_at_0: t0,
                u1_at_h: th,
                b1_at_0: t0.scaled(sign),
                b1_at_h: th.scaled(sign),
            }
        }
        StateKind::ShearFlow { u, b } => WallTraces {
            u1_at_0: Trace::constant(u.eval(state.h, 0.0)),
            u1_at_h: Trace::constant(u.eval(state.h, state.h)),
            b1_at_0: Trace::constant(b.eval(state.h, 0.0)),
            b1_at_h: Trace::constant(b.eval(state.h, state.h)),
        },
        StateKind::WellPrepared { .. } => {
            let z = Trace::constant(0.0);
            WallTraces { u1_at_0: z, u1_at_h: z, b1_at_0: z, b1_at_h: z }
        }
    }
}

/// Samples `(u, b)` on the grid nodes.
pub fn sample_state(state: &IdealState, grid: &Arc<GridSpec>) -> (VectorField, VectorField) {
    let u = VectorField::sample(grid, |x, z| state.u(x, z));
    let b = VectorField::sample(grid, |x, z| state.b(x, z));
    (u, b)
}

/// Max-node magnitude of the discrete steady residuals: the momentum and
/// induction advection balances plus both divergences. Analytically zero for
/// every representable state, so only discretization error (or, where terms
/// cancel pairwise in floating point, nothing at all) remains.
pub fn ideal_residual(state: &IdealState, grid: &Arc<GridSpec>) -> f64 {
    let (u, b) = sample_state(state, grid);
    let n = grid.len();

    let advect = |v: &VectorField, w: &ScalarField| -> Vec<f64> {
        let mut wx = vec![0.0; n];
        let mut wzv = vec![0.0; n];
        grid.dx_slice(&w.v, &mut wx);
        grid.dz_slice(&w.v, &mut wzv, WallRule::OneSided);
        (0..n)
            .map(|q| v.f1.v[q] * wx[q] + v.f3.v[q] * wzv[q])
            .collect()
    };

    let mut res: f64 = 0.0;
    // Momentum: u·∇u − b·∇b (pressure is zero for every family).
    for comp in [(&u.f1, &b.f1), (&u.f3, &b.f3)] {
        let a = advect(&u, comp.0);
        let c = advect(&b, comp.1);
        for q in 0..n {
            res = res.max((a[q] - c[q]).abs());
        }
    }
    // Induction: u·∇b − b·∇u.
    for comp in [(&b.f1, &u.f1), (&b.f3, &u.f3)] {
        let a = advect(&u, comp.0);
        let c = advect(&b, comp.1);
        for q in 0..n {
            res = res.max((a[q] - c[q]).abs());
        }
    }
    // Divergences.
    for d in [crate::fields::divergence(&u), crate::fields::divergence(&b)] {
        for &v in &d.v {
            res = res.max(v.abs());
        }
    }
    res
}
