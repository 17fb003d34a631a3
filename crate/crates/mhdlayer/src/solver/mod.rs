//! Second-order solver for viscous/diffusive incompressible MHD in the
//! periodic channel.
//!
//! Scheme: Adams–Bashforth 2 on the skew-symmetric advection and coupling
//! terms (forward Euler on the first step), Crank–Nicolson on each diffusion
//! term, and an incremental staggered-pressure projection. The magnetic field
//! is divergence-cleaned by the same projection every step.
//!
//! Discrete energy behaves structurally, not approximately: the skew pairing
//! is exactly zero, the CN half-steps are dissipative in the trapezoid inner
//! product, and the projection is orthogonal (it can only remove energy).
//! [`RunStats`] tracks each exact ledger term so the global balance can be
//! checked to the scheme's O(dt²) accuracy.
//!
//! Zero magnetic diffusivity selects the reference system: the induction
//! equation keeps its transport/stretching form, wall rows of its right-hand
//! side vanish (so wall values of `b` stay exactly frozen), and only the
//! wall-normal component is constrained at the boundary. The tangential
//! magnetic component carries no boundary condition in that regime — a
//! deliberate convention, since the continuous problem imposes none.

pub mod advect;
pub mod fft;
pub mod helmholtz;
pub mod poisson;

use crate::fields::{build_grid, GridSpec, ScalarField, VectorField, WallRule};
use crate::ideal::IdealState;
use crate::{Error, Result};
use advect::{coupled_rhs, CoupledRhs};
use fft::XSpectral;
use helmholtz::{flux_dissipation, CnSolver};
use poisson::{cells_to_nodes, Projector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::sync::Arc;

/// Body forcing: `(x, z, t) ↦ [f_u1, f_u3, f_b1, f_b3]`.
pub type ForcingFn = dyn Fn(f64, f64, f64) -> [f64; 4] + Send + Sync;

#[derive(Clone)]
pub struct SolverConfig {
    /// Viscosity (≥ 0).
    pub eps1: f64,
    /// Magnetic diffusivity (≥ 0; zero selects the reference system).
    pub eps2: f64,
    /// Fixed time step (> 0).
    pub dt: f64,
    /// Advective CFL bound enforced at every step.
    pub cfl_limit: f64,
    pub grid: Arc<GridSpec>,
    pub forcing: Option<Arc<ForcingFn>>,
}

impl SolverConfig {
    pub fn new(eps1: f64, eps2: f64, dt: f64, grid: &Arc<GridSpec>) -> Result<SolverConfig> {
        let cfg = SolverConfig {
            eps1,
            eps2,
            dt,
            cfl_limit: 0.5,
            grid: Arc::clone(grid),
            forcing: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_forcing(mut self, f: Arc<ForcingFn>) -> SolverConfig {
        self.forcing = Some(f);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps1 >= 0.0) || !self.eps1.is_finite() {
            return Err(Error::config("eps1", format!("must be ≥ 0 and finite, got {}", self.eps1)));
        }
        if !(self.eps2 >= 0.0) || !self.eps2.is_finite() {
            return Err(Error::config("eps2", format!("must be ≥ 0 and finite, got {}", self.eps2)));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::config("dt", format!("must be positive and finite, got {}", self.dt)));
        }
        if !(self.cfl_limit > 0.0) || !self.cfl_limit.is_finite() {
            return Err(Error::config(
                "cfl_limit",
                format!("must be positive and finite, got {}", self.cfl_limit),
            ));
        }
        Ok(())
    }
}

/// Discrete state: node velocities and magnetic field, lagged pressure, time.
#[derive(Debug, Clone)]
pub struct MhdState {
    pub u: VectorField,
    pub b: VectorField,
    /// Node pressure (interpolated from the staggered cells; diagnostic).
    pub p: ScalarField,
    pub t: f64,
    pub(crate) p_cells: Vec<f64>,
    pub(crate) prev: Option<Box<CoupledRhs>>,
    pub(crate) step_index: usize,
}

impl MhdState {
    pub fn new(u: VectorField, b: VectorField, t: f64) -> Result<MhdState> {
        let grid = Arc::clone(u.grid());
        if grid.nx != b.grid().nx || grid.nz != b.grid().nz || grid.h != b.grid().h {
            return Err(Error::Precondition(
                "velocity and magnetic fields live on different grids".into(),
            ));
        }
        let cells = (grid.nz - 1) * grid.nx;
        Ok(MhdState {
            u,
            b,
            p: ScalarField::zeros(&grid),
            t,
            p_cells: vec![0.0; cells],
            prev: None,
            step_index: 0,
        })
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        self.u.grid()
    }
}

/// Energy/divergence diagnostics at one time.
#[derive(Debug, Clone, Copy)]
pub struct EnergyDiag {
    pub t: f64,
    /// `½ ∫ (|u|² + |b|²)`.
    pub energy: f64,
    /// `ε₁ ∫ |∇u|² + ε₂ ∫ |∇b|²` (flux-form quadrature; ≥ 0).
    pub dissipation: f64,
    pub div_u_max: f64,
    pub div_b_max: f64,
}

/// Exact per-run energy ledger and collected diagnostics.
#[derive(Debug, Clone, Default)]
pub struct RunStats {
    pub diagnostics: Vec<EnergyDiag>,
    pub steps: usize,
    /// `Σ dt (ε₁ q(ū) + ε₂ q(b̄))` — the CN dissipation, term-exact.
    pub scheme_dissipated: f64,
    /// `Σ ½‖δ_proj‖²` removed by the velocity projection and the divergence
    /// cleaning (orthogonality makes this exact).
    pub projection_loss: f64,
    /// `Σ dt (∇p_lag, ū)` — the lagged-pressure work term of the ledger.
    pub pressure_work: f64,
    pub max_div_u: f64,
    pub max_div_b: f64,
}

impl RunStats {
    /// `E(T) − E(0) + dissipated + projection loss + pressure work`; the
    /// skew-advection residual, O(dt²) for smooth runs.
    pub fn balance_residual(&self) -> f64 {
        let e0 = self.diagnostics.first().map_or(0.0, |d| d.energy);
        let e1 = self.diagnostics.last().map_or(0.0, |d| d.energy);
        e1 - e0 + self.scheme_dissipated + self.projection_loss + self.pressure_work
    }
}

pub struct StepOutcome {
    pub state: MhdState,
    pub dissipated: f64,
    pub projection_loss: f64,
    pub pressure_work: f64,
    pub div_u: f64,
    pub div_b: f64,
}

pub struct Stepper {
    cfg: SolverConfig,
    helm_u: Option<CnSolver>,
    helm_b: Option<CnSolver>,
    proj: Projector,
    reference_mode: bool,
}

fn weighted_energy(grid: &GridSpec, fields: &[&[f64]]) -> f64 {
    let nx = grid.nx;
    let mut total = 0.0;
    for j in 0..grid.nz {
        let base = j * nx;
        let mut row = 0.0;
        for f in fields {
            for i in 0..nx {
                let v = f[base + i];
                row += v * v;
            }
        }
        total += grid.wz[j] * row;
    }
    total * grid.dx
}

fn weighted_dot(grid: &GridSpec, a1: &[f64], a3: &[f64], b1: &[f64], b3: &[f64]) -> f64 {
    let nx = grid.nx;
    let mut total = 0.0;
    for j in 0..grid.nz {
        let base = j * nx;
        let mut row = 0.0;
        for i in 0..nx {
            row += a1[base + i] * b1[base + i] + a3[base + i] * b3[base + i];
        }
        total += grid.wz[j] * row;
    }
    total * grid.dx
}

impl Stepper {
    pub fn new(cfg: SolverConfig) -> Result<Stepper> {
        cfg.validate()?;
        let fft = Arc::new(XSpectral::new(cfg.grid.nx));
        let helm_u = if cfg.eps1 > 0.0 {
            Some(CnSolver::new(&cfg.grid, &fft, 0.5 * cfg.dt * cfg.eps1)?)
        } else {
            None
        };
        let helm_b = if cfg.eps2 > 0.0 {
            Some(CnSolver::new(&cfg.grid, &fft, 0.5 * cfg.dt * cfg.eps2)?)
        } else {
            None
        };
        let proj = Projector::new(&cfg.grid, &fft)?;
        let reference_mode = cfg.eps2 == 0.0;
        Ok(Stepper { cfg, helm_u, helm_b, proj, reference_mode })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn diag(&self, s: &MhdState) -> EnergyDiag {
        let grid = &self.cfg.grid;
        let energy =
            0.5 * weighted_energy(grid, &[&s.u.f1.v, &s.u.f3.v, &s.b.f1.v, &s.b.f3.v]);
        let mut dissipation = 0.0;
        if self.cfg.eps1 > 0.0 {
            dissipation += self.cfg.eps1
                * (flux_dissipation(grid, &s.u.f1.v) + flux_dissipation(grid, &s.u.f3.v));
        }
        if self.cfg.eps2 > 0.0 {
            dissipation += self.cfg.eps2
                * (flux_dissipation(grid, &s.b.f1.v) + flux_dissipation(grid, &s.b.f3.v));
        }
        EnergyDiag {
            t: s.t,
            energy,
            dissipation,
            div_u_max: self.proj.max_abs_div(&s.u.f1.v, &s.u.f3.v),
            div_b_max: self.proj.max_abs_div(&s.b.f1.v, &s.b.f3.v),
        }
    }

    /// Advances one step of length `cfg.dt`.
    pub fn step(&self, s: &MhdState) -> Result<StepOutcome> {
        let grid = &self.cfg.grid;
        let nx = grid.nx;
        let nz = grid.nz;
        let n = grid.len();
        let dt = self.cfg.dt;
        let u1 = &s.u.f1.v;
        let u3 = &s.u.f3.v;
        let b1 = &s.b.f1.v;
        let b3 = &s.b.f3.v;

        // Stability scan: finiteness and the advective CFL rate.
        let inv_dx = 1.0 / grid.dx;
        let mut finite = true;
        let mut rate = 0.0f64;
        let mut sp1 = 0.0f64;
        let mut sp3 = 0.0f64;
        for j in 0..nz {
            let inv_w = 1.0 / grid.wz[j];
            let base = j * nx;
            for i in 0..nx {
                let q = base + i;
                let a = u1[q].abs() + b1[q].abs();
                let c = u3[q].abs() + b3[q].abs();
                if !(a.is_finite() && c.is_finite()) {
                    finite = false;
                }
                sp1 = sp1.max(a);
                sp3 = sp3.max(c);
                rate = rate.max(a * inv_dx + c * inv_w);
            }
        }
        if !finite {
            return Err(Error::Instability {
                step: s.step_index,
                msg: format!("non-finite field values at t = {:.6e}", s.t),
            });
        }
        if dt * rate > self.cfg.cfl_limit {
            return Err(Error::Instability {
                step: s.step_index,
                msg: format!(
                    "CFL violated: max speeds |u1|+|b1| = {sp1:.3e}, |u3|+|b3| = {sp3:.3e} \
                     give advective rate {rate:.3e}; dt·rate = {:.3e} exceeds the limit {}",
                    dt * rate,
                    self.cfg.cfl_limit
                ),
            });
        }

        // Advection/coupling right-hand side at t_n (+ forcing), then AB2.
        let mut f = coupled_rhs(grid, u1, u3, b1, b3, self.reference_mode);
        if let Some(frc) = &self.cfg.forcing {
            for j in 0..nz {
                let z = grid.z[j];
                let wall = j == 0 || j == nz - 1;
                let base = j * nx;
                for i in 0..nx {
                    let vals = frc(grid.x[i], z, s.t);
                    let q = base + i;
                    f.fu1[q] += vals[0];
                    f.fu3[q] += vals[1];
                    // Frozen walls stay frozen under forcing as well.
                    if !(self.reference_mode && wall) {
                        f.fb1[q] += vals[2];
                        f.fb3[q] += vals[3];
                    }
                }
            }
        }
        let extrapolate = |cur: &[f64], old: Option<&Vec<f64>>| -> Vec<f64> {
            match old {
                Some(p) => cur
                    .iter()
                    .zip(p.iter())
                    .map(|(&c, &o)| 1.5 * c - 0.5 * o)
                    .collect(),
                None => cur.to_vec(),
            }
        };
        let prev = s.prev.as_deref();
        let fs_u1 = extrapolate(&f.fu1, prev.map(|p| &p.fu1));
        let fs_u3 = extrapolate(&f.fu3, prev.map(|p| &p.fu3));
        let fs_b1 = extrapolate(&f.fb1, prev.map(|p| &p.fb1));
        let fs_b3 = extrapolate(&f.fb3, prev.map(|p| &p.fb3));

        // Lagged pressure gradient (zero at wall rows).
        let (gpx, gpz) = self.proj.grad_nodes(&s.p_cells);

        // Velocity predictor.
        let (mut u1s, mut u3s) = match &self.helm_u {
            Some(cn) => {
                let e1 = cn.explicit_half(u1);
                let e3 = cn.explicit_half(u3);
                let mut r1 = vec![0.0; n];
                let mut r3 = vec![0.0; n];
                for q in 0..n {
                    r1[q] = u1[q] + e1[q] + dt * (fs_u1[q] - gpx[q]);
                    r3[q] = u3[q] + e3[q] + dt * (fs_u3[q] - gpz[q]);
                }
                (cn.solve(&r1), cn.solve(&r3))
            }
            None => {
                // Inviscid: no wall condition on u1; u3 vanishes at the walls.
                let mut r1 = vec![0.0; n];
                let mut r3 = vec![0.0; n];
                for q in 0..n {
                    r1[q] = u1[q] + dt * (fs_u1[q] - gpx[q]);
                    r3[q] = u3[q] + dt * (fs_u3[q] - gpz[q]);
                }
                let top = (nz - 1) * nx;
                for i in 0..nx {
                    r3[i] = 0.0;
                    r3[top + i] = 0.0;
                }
                (r1, r3)
            }
        };

        // Magnetic predictor.
        let (mut b1s, mut b3s) = match &self.helm_b {
            Some(cn) => {
                let e1 = cn.explicit_half(b1);
                let e3 = cn.explicit_half(b3);
                let mut r1 = vec![0.0; n];
                let mut r3 = vec![0.0; n];
                for q in 0..n {
                    r1[q] = b1[q] + e1[q] + dt * fs_b1[q];
                    r3[q] = b3[q] + e3[q] + dt * fs_b3[q];
                }
                (cn.solve(&r1), cn.solve(&r3))
            }
            None => {
                // Reference transport: wall rows of the rhs are zero, so wall
                // values stay frozen; the normal component is pinned at 0.
                let mut r1 = vec![0.0; n];
                let mut r3 = vec![0.0; n];
                for q in 0..n {
                    r1[q] = b1[q] + dt * fs_b1[q];
                    r3[q] = b3[q] + dt * fs_b3[q];
                }
                let top = (nz - 1) * nx;
                for i in 0..nx {
                    r3[i] = 0.0;
                    r3[top + i] = 0.0;
                }
                (r1, r3)
            }
        };

        // Exact ledger terms: CN dissipation on the half-sum states and the
        // lagged-pressure work.
        let mut ubar1 = vec![0.0; n];
        let mut ubar3 = vec![0.0; n];
        for q in 0..n {
            ubar1[q] = 0.5 * (u1[q] + u1s[q]);
            ubar3[q] = 0.5 * (u3[q] + u3s[q]);
        }
        let mut dissipated = 0.0;
        if self.helm_u.is_some() {
            dissipated += dt
                * self.cfg.eps1
                * (flux_dissipation(grid, &ubar1) + flux_dissipation(grid, &ubar3));
        }
        if self.helm_b.is_some() {
            let mut bbar1 = vec![0.0; n];
            let mut bbar3 = vec![0.0; n];
            for q in 0..n {
                bbar1[q] = 0.5 * (b1[q] + b1s[q]);
                bbar3[q] = 0.5 * (b3[q] + b3s[q]);
            }
            dissipated += dt
                * self.cfg.eps2
                * (flux_dissipation(grid, &bbar1) + flux_dissipation(grid, &bbar3));
        }
        let pressure_work = dt * weighted_dot(grid, &gpx, &gpz, &ubar1, &ubar3);

        // Projection and divergence cleaning.
        let (phi, removed_u) = self.proj.project(&mut u1s, &mut u3s, dt)?;
        let (_, removed_b) = self.proj.project(&mut b1s, &mut b3s, 1.0)?;
        let div_u = self.proj.max_abs_div(&u1s, &u3s);
        let div_b = self.proj.max_abs_div(&b1s, &b3s);

        let mut p_cells = s.p_cells.clone();
        for (pc, ph) in p_cells.iter_mut().zip(phi.iter()) {
            *pc += ph;
        }
        let p_nodes = cells_to_nodes(grid, &p_cells);

        let state = MhdState {
            u: VectorField {
                f1: ScalarField { grid: Arc::clone(grid), v: u1s },
                f3: ScalarField { grid: Arc::clone(grid), v: u3s },
            },
            b: VectorField {
                f1: ScalarField { grid: Arc::clone(grid), v: b1s },
                f3: ScalarField { grid: Arc::clone(grid), v: b3s },
            },
            p: ScalarField { grid: Arc::clone(grid), v: p_nodes },
            t: s.t + dt,
            p_cells,
            prev: Some(Box::new(f)),
            step_index: s.step_index + 1,
        };
        Ok(StepOutcome {
            state,
            dissipated,
            projection_loss: 0.5 * (removed_u + removed_b),
            pressure_work,
            div_u,
            div_b,
        })
    }
}

/// Single step with a throwaway stepper (tests and small experiments; reuse
/// [`Stepper`] for runs).
pub fn step(s: &MhdState, cfg: &SolverConfig) -> Result<MhdState> {
    Ok(Stepper::new(cfg.clone())?.step(s)?.state)
}

fn run_engine(
    s0: &MhdState,
    cfg: &SolverConfig,
    t_end: f64,
    cadence: usize,
    observer: &mut dyn FnMut(&MhdState, &EnergyDiag),
    guard: Option<&dyn Fn(&MhdState) -> Result<()>>,
) -> Result<(MhdState, RunStats)> {
    cfg.validate()?;
    let grid = s0.grid();
    if grid.nx != cfg.grid.nx || grid.nz != cfg.grid.nz || grid.h != cfg.grid.h {
        return Err(Error::Precondition("state grid does not match config grid".into()));
    }
    if cadence == 0 {
        return Err(Error::config("cadence", "must be ≥ 1"));
    }
    if !(t_end.is_finite()) || t_end < s0.t {
        return Err(Error::Precondition(format!(
            "final time {t_end} precedes the state time {}",
            s0.t
        )));
    }
    let duration = t_end - s0.t;
    let dt = cfg.dt;
    let mut nfull = (duration / dt).floor() as usize;
    let mut rem = duration - nfull as f64 * dt;
    if rem <= 1e-9 * dt {
        rem = 0.0;
    } else if rem >= dt * (1.0 - 1e-9) {
        nfull += 1;
        rem = 0.0;
    }
    let total = nfull + usize::from(rem > 0.0);
    if cfg.eps1 == 0.0 && cfg.eps2 == 0.0 && total > 2000 {
        return Err(Error::Precondition(format!(
            "fully inviscid runs (eps1 = eps2 = 0) are capped at 2000 steps; {total} requested"
        )));
    }

    let stepper = Stepper::new(cfg.clone())?;
    let mut stats = RunStats::default();
    let d0 = stepper.diag(s0);
    stats.diagnostics.push(d0);
    stats.max_div_u = d0.div_u_max;
    stats.max_div_b = d0.div_b_max;
    observer(s0, &d0);
    if total == 0 {
        return Ok((s0.clone(), stats));
    }

    let mut s = s0.clone();
    for k in 0..nfull {
        let out = stepper.step(&s)?;
        s = out.state;
        stats.steps += 1;
        stats.scheme_dissipated += out.dissipated;
        stats.projection_loss += out.projection_loss;
        stats.pressure_work += out.pressure_work;
        stats.max_div_u = stats.max_div_u.max(out.div_u);
        stats.max_div_b = stats.max_div_b.max(out.div_b);
        let last = k + 1 == total;
        if last || (k + 1) % cadence == 0 {
            if last {
                s.t = t_end;
            }
            let d = stepper.diag(&s);
            stats.diagnostics.push(d);
            observer(&s, &d);
            if let Some(g) = guard {
                g(&s)?;
            }
        }
    }
    if rem > 0.0 {
        // The shortened landing step changes dt, so the multistep history is
        // dropped and the step runs as forward Euler (one O(dt²) local error).
        let mut short_cfg = cfg.clone();
        short_cfg.dt = rem;
        let short = Stepper::new(short_cfg)?;
        s.prev = None;
        let out = short.step(&s)?;
        s = out.state;
        s.t = t_end;
        stats.steps += 1;
        stats.scheme_dissipated += out.dissipated;
        stats.projection_loss += out.projection_loss;
        stats.pressure_work += out.pressure_work;
        stats.max_div_u = stats.max_div_u.max(out.div_u);
        stats.max_div_b = stats.max_div_b.max(out.div_b);
        let d = stepper.diag(&s);
        stats.diagnostics.push(d);
        observer(&s, &d);
        if let Some(g) = guard {
            g(&s)?;
        }
    }
    Ok((s, stats))
}

/// Runs to `t_end` with the fixed step `cfg.dt` (the final step is shortened
/// to land exactly). The observer fires at the start, every `cadence` steps,
/// and at the end. `t_end == s0.t` returns the state unchanged.
pub fn run(
    s0: &MhdState,
    cfg: &SolverConfig,
    t_end: f64,
    cadence: usize,
    observer: &mut dyn FnMut(&MhdState, &EnergyDiag),
) -> Result<(MhdState, RunStats)> {
    run_engine(s0, cfg, t_end, cadence, observer, None)
}

fn gradient_sup(grid: &GridSpec, f: &[f64]) -> f64 {
    let mut dx = vec![0.0; grid.len()];
    let mut dz = vec![0.0; grid.len()];
    grid.dx_slice(f, &mut dx);
    grid.dz_slice(f, &mut dz, WallRule::OneSided);
    let mut sup = 0.0f64;
    for q in 0..grid.len() {
        sup = sup.max(dx[q].abs()).max(dz[q].abs());
    }
    sup
}

/// Runs the fixed-viscosity, zero-magnetic-diffusion reference system.
///
/// Requires `eps1 > 0` and `eps2 == 0`, and a wall-compatible magnetic field
/// (`b₃ = 0` on both walls). Magnetic gradients are monitored at the observer
/// cadence; growth beyond 10⁴× the initial scale aborts the run, since the
/// transport equation has no diffusive control of its own.
pub fn run_reference_viscous(
    s0: &MhdState,
    cfg: &SolverConfig,
    t_end: f64,
    cadence: usize,
    observer: &mut dyn FnMut(&MhdState, &EnergyDiag),
) -> Result<(MhdState, RunStats)> {
    if cfg.eps2 != 0.0 {
        return Err(Error::config(
            "eps2",
            format!("reference solver requires zero magnetic diffusivity, got {}", cfg.eps2),
        ));
    }
    if !(cfg.eps1 > 0.0) {
        return Err(Error::config(
            "eps1",
            format!("reference solver requires positive viscosity, got {}", cfg.eps1),
        ));
    }
    let grid = s0.grid();
    let top = (grid.nz - 1) * grid.nx;
    for i in 0..grid.nx {
        let lo = s0.b.f3.v[i].abs();
        let hi = s0.b.f3.v[top + i].abs();
        if lo > 1e-12 || hi > 1e-12 {
            return Err(Error::Precondition(format!(
                "reference solver requires zero wall-normal magnetic trace; found {:.3e}",
                lo.max(hi)
            )));
        }
    }
    let g0 = gradient_sup(grid, &s0.b.f1.v).max(gradient_sup(grid, &s0.b.f3.v));
    let limit = 1e4 * (1.0 + g0);
    let guard = move |s: &MhdState| -> Result<()> {
        let g = gradient_sup(s.grid(), &s.b.f1.v).max(gradient_sup(s.grid(), &s.b.f3.v));
        if g > limit {
            return Err(Error::Instability {
                step: s.step_index,
                msg: format!(
                    "magnetic gradient grew to {g:.3e} (initial scale {g0:.3e}); \
                     the transport equation has lost resolution"
                ),
            });
        }
        Ok(())
    };
    run_engine(s0, cfg, t_end, cadence, observer, Some(&guard))
}

/// Elsässer views `w± = u ± b`.
pub fn elsasser_views(s: &MhdState) -> (VectorField, VectorField) {
    let grid = s.grid();
    let n = grid.len();
    let mut wp1 = vec![0.0; n];
    let mut wp3 = vec![0.0; n];
    let mut wm1 = vec![0.0; n];
    let mut wm3 = vec![0.0; n];
    for q in 0..n {
        wp1[q] = s.u.f1.v[q] + s.b.f1.v[q];
        wp3[q] = s.u.f3.v[q] + s.b.f3.v[q];
        wm1[q] = s.u.f1.v[q] - s.b.f1.v[q];
        wm3[q] = s.u.f3.v[q] - s.b.f3.v[q];
    }
    let mk = |v1: Vec<f64>, v3: Vec<f64>| VectorField {
        f1: ScalarField { grid: Arc::clone(grid), v: v1 },
        f3: ScalarField { grid: Arc::clone(grid), v: v3 },
    };
    (mk(wp1, wp3), mk(wm1, wm3))
}

/// Inverse of [`elsasser_views`]: `u = (w⁺+w⁻)/2`, `b = (w⁺−w⁻)/2`.
pub fn fields_from_elsasser(wp: &VectorField, wm: &VectorField) -> (VectorField, VectorField) {
    let grid = wp.grid();
    let n = grid.len();
    let mut u1 = vec![0.0; n];
    let mut u3 = vec![0.0; n];
    let mut b1 = vec![0.0; n];
    let mut b3 = vec![0.0; n];
    for q in 0..n {
        u1[q] = 0.5 * (wp.f1.v[q] + wm.f1.v[q]);
        u3[q] = 0.5 * (wp.f3.v[q] + wm.f3.v[q]);
        b1[q] = 0.5 * (wp.f1.v[q] - wm.f1.v[q]);
        b3[q] = 0.5 * (wp.f3.v[q] - wm.f3.v[q]);
    }
    let mk = |v1: Vec<f64>, v3: Vec<f64>| VectorField {
        f1: ScalarField { grid: Arc::clone(grid), v: v1 },
        f3: ScalarField { grid: Arc::clone(grid), v: v3 },
    };
    (mk(u1, u3), mk(b1, b3))
}

/// Seeded divergence-free well-prepared perturbation: `‖(δu, δb)‖²_{L²}`
/// scales as `ε^κ` (set to `ε^κ/4`, asserted ≤ `ε^κ`).
#[derive(Debug, Clone, Copy)]
pub struct Perturbation {
    pub kappa: f64,
    pub seed: u64,
}

/// Builds the discrete initial state: ideal core, optional wall layers
/// (sampled at `t = 0`), optional seeded perturbation, then one projection of
/// the totals.
pub fn init_state(
    ideal: &IdealState,
    layers: Option<&crate::correctors::CorrectorSet>,
    pert: Option<&Perturbation>,
    grid: &Arc<GridSpec>,
    eps: f64,
) -> Result<MhdState> {
    if ideal.h != grid.h {
        return Err(Error::Precondition(format!(
            "state height {} does not match grid height {}",
            ideal.h, grid.h
        )));
    }
    if let Some(cs) = layers {
        if cs.h != grid.h {
            return Err(Error::Precondition(format!(
                "corrector height {} does not match grid height {}",
                cs.h, grid.h
            )));
        }
    }
    let (mut u, mut b) = crate::ideal::sample_state(ideal, grid);
    if let Some(cs) = layers {
        for j in 0..grid.nz {
            let z = grid.z[j];
            for i in 0..grid.nx {
                let q = grid.idx(i, j);
                let lu = cs.u_total(grid.x[i], z, 0.0);
                let lb = cs.b_total(grid.x[i], z, 0.0);
                u.f1.v[q] += lu[0];
                u.f3.v[q] += lu[1];
                b.f1.v[q] += lb[0];
                b.f3.v[q] += lb[1];
            }
        }
    }

    let fft = Arc::new(XSpectral::new(grid.nx));
    let proj = Projector::new(grid, &fft)?;

    if let Some(p) = pert {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::config("eps", format!("must be positive for a perturbation, got {eps}")));
        }
        if !(p.kappa > 0.0) || !p.kappa.is_finite() {
            return Err(Error::config("kappa", format!("must be positive, got {}", p.kappa)));
        }
        let h = grid.h;
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        // Stream functions Σ a_m sin(m x + θ_m) · (z(h−z))²/h⁴: analytically
        // divergence-free with both velocity components (and their z-slopes)
        // vanishing at the walls.
        let mut draw = |_: usize| -> ([f64; 3], [f64; 3]) {
            let mut amps = [0.0; 3];
            let mut phases = [0.0; 3];
            for m in 0..3 {
                amps[m] = rng.gen_range(-1.0..1.0);
                phases[m] = rng.gen_range(0.0..std::f64::consts::TAU);
            }
            (amps, phases)
        };
        let (ua, up) = draw(0);
        let (ba, bp) = draw(1);
        let mut d = [
            vec![0.0; grid.len()],
            vec![0.0; grid.len()],
            vec![0.0; grid.len()],
            vec![0.0; grid.len()],
        ];
        let h4 = h.powi(4);
        for j in 0..grid.nz {
            let z = grid.z[j];
            let g = (z * (h - z)).powi(2) / h4;
            let gp = 2.0 * z * (h - z) * (h - 2.0 * z) / h4;
            for i in 0..grid.nx {
                let x = grid.x[i];
                let q = grid.idx(i, j);
                let mut su = 0.0;
                let mut sux = 0.0;
                let mut sb = 0.0;
                let mut sbx = 0.0;
                for m in 0..3 {
                    let km = (m + 1) as f64;
                    su += ua[m] * (km * x + up[m]).sin();
                    sux += ua[m] * km * (km * x + up[m]).cos();
                    sb += ba[m] * (km * x + bp[m]).sin();
                    sbx += ba[m] * km * (km * x + bp[m]).cos();
                }
                d[0][q] = su * gp;
                d[1][q] = -sux * g;
                d[2][q] = sb * gp;
                d[3][q] = -sbx * g;
            }
        }
        {
            let (d01, d23) = d.split_at_mut(2);
            let (a, b2) = d01.split_at_mut(1);
            proj.project(&mut a[0], &mut b2[0], 1.0)?;
            let (c, e) = d23.split_at_mut(1);
            proj.project(&mut c[0], &mut e[0], 1.0)?;
        }
        let n2 = weighted_energy(grid, &[&d[0], &d[1], &d[2], &d[3]]);
        let budget = eps.powf(p.kappa);
        if n2 > 0.0 {
            let scale = (0.25 * budget / n2).sqrt();
            for arr in d.iter_mut() {
                for v in arr.iter_mut() {
                    *v *= scale;
                }
            }
        }
        let achieved = weighted_energy(grid, &[&d[0], &d[1], &d[2], &d[3]]);
        assert!(
            achieved <= budget * (1.0 + 1e-12),
            "perturbation norm budget violated: {achieved:.3e} > {budget:.3e}"
        );
        for q in 0..grid.len() {
            u.f1.v[q] += d[0][q];
            u.f3.v[q] += d[1][q];
            b.f1.v[q] += d[2][q];
            b.f3.v[q] += d[3][q];
        }
    }

    // The bare ideal state is returned untouched (it is the exact reference
    // data); the single projection applies to the composed data.
    if layers.is_some() || pert.is_some() {
        proj.project(&mut u.f1.v, &mut u.f3.v, 1.0)?;
        proj.project(&mut b.f1.v, &mut b.f3.v, 1.0)?;
    }
    MhdState::new(u, b, 0.0)
}

#[derive(serde::Serialize, serde::Deserialize)]
struct CheckpointMeta {
    nx: usize,
    nz: usize,
    h: f64,
    stretch: f64,
    t: f64,
    eps1: f64,
    eps2: f64,
    dt: f64,
    cfl_limit: f64,
    step_index: usize,
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".json");
    std::path::PathBuf::from(os)
}

/// Writes the state as flat little-endian f64 arrays (`u1 u3 b1 b3 p_cells`)
/// plus a JSON sidecar `<path>.json` with the grid and solver parameters.
pub fn save_checkpoint(s: &MhdState, cfg: &SolverConfig, path: &Path) -> Result<()> {
    let grid = s.grid();
    let meta = CheckpointMeta {
        nx: grid.nx,
        nz: grid.nz,
        h: grid.h,
        stretch: grid.stretch,
        t: s.t,
        eps1: cfg.eps1,
        eps2: cfg.eps2,
        dt: cfg.dt,
        cfl_limit: cfg.cfl_limit,
        step_index: s.step_index,
    };
    let mut bytes =
        Vec::with_capacity(8 * (4 * grid.len() + s.p_cells.len()));
    for arr in [&s.u.f1.v, &s.u.f3.v, &s.b.f1.v, &s.b.f3.v, &s.p_cells] {
        for v in arr.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, &bytes)?;
    let json = serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::Json(e.to_string()))?;
    std::fs::write(sidecar_path(path), json)?;
    Ok(())
}

/// Reads a checkpoint written by [`save_checkpoint`]. The multistep history
/// is not stored; the resumed run takes one forward-Euler step first. The
/// returned config carries no forcing — re-attach it if the run had one.
pub fn load_checkpoint(path: &Path) -> Result<(MhdState, SolverConfig)> {
    let meta_text = std::fs::read_to_string(sidecar_path(path))?;
    let meta: CheckpointMeta =
        serde_json::from_str(&meta_text).map_err(|e| Error::Json(e.to_string()))?;
    let grid = build_grid(meta.nx, meta.nz, meta.h, meta.stretch)?;
    let bytes = std::fs::read(path)?;
    let n = grid.len();
    let cells = (grid.nz - 1) * grid.nx;
    let expected = 8 * (4 * n + cells);
    if bytes.len() != expected {
        return Err(Error::Precondition(format!(
            "checkpoint holds {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let mut vals = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk width is 8")));
    let mut take = |len: usize| -> Vec<f64> { vals.by_ref().take(len).collect() };
    let u1 = take(n);
    let u3 = take(n);
    let b1 = take(n);
    let b3 = take(n);
    let p_cells = take(cells);
    let p_nodes = cells_to_nodes(&grid, &p_cells);
    let mk = |v1: Vec<f64>, v3: Vec<f64>| VectorField {
        f1: ScalarField { grid: Arc::clone(&grid), v: v1 },
        f3: ScalarField { grid: Arc::clone(&grid), v: v3 },
    };
    let state = MhdState {
        u: mk(u1, u3),
        b: mk(b1, b3),
        p: ScalarField { grid: Arc::clone(&grid), v: p_nodes },
        t: meta.t,
        p_cells,
        prev: None,
        step_index: meta.step_index,
    };
    let mut cfg = SolverConfig::new(meta.eps1, meta.eps2, meta.dt, &grid)?;
    cfg.cfl_limit = meta.cfl_limit;
    Ok((state, cfg))
}
