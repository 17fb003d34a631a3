//! Vanishing-limit rate studies.
//!
//! Two experiments share one pattern: integrate the full channel system for a
//! sweep of diffusivities, record the deviation from a fixed target at a
//! fixed snapshot cadence, and fit the decay of the recorded suprema.
//!
//! * [`run_inviscid_limit_study`] drives both diffusivities to zero along an
//!   admissible family and measures against the analytic core state; wall
//!   layers of width `√ε` are attached to the initial data, and the family is
//!   gated by [`check_epsilon_family`] before any solve.
//! * [`run_diffusion_limit_study`] fixes the viscosity, drives the magnetic
//!   diffusivity to zero, and measures against a frozen reference run of the
//!   zero-diffusivity system; only the magnetic field carries a wall layer.
//!
//! Per-ε runs are independent jobs (see [`crate::par`]); rows are collected
//! in sweep order, so reports are deterministic for any thread count.

use serde::{Deserialize, Serialize};

use crate::asymptotics::{check_epsilon_family, error_norms, EpsilonFamily, EpsilonLaw};
use crate::correctors::{
    build_correctors, make_cutoffs, nu2_star_diffusion_limit, CorrectorMode, CorrectorParams,
};
use crate::error::Error;
use crate::fields::build_grid;
use crate::fit::{fit_rate, log_log_fit, RateFit};
use crate::ideal::{wall_traces, IdealState, StateKind};
use crate::par;
use crate::solver::{
    init_state, run, run_reference_viscous, EnergyDiag, MhdState, Perturbation, SolverConfig,
};
use crate::Result;

/// Discretization shared by every run of a study: grid shape, step size, and
/// the number of snapshots the time supremum is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPolicy {
    pub nx: usize,
    pub nz: usize,
    pub stretch: f64,
    pub dt: f64,
    /// Snapshots recorded per run (the start and final states are always
    /// among them).
    pub cadence: usize,
}

impl GridPolicy {
    fn validate(&self) -> Result<()> {
        if self.cadence == 0 {
            return Err(Error::config("cadence", "must be at least 1"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::config("dt", format!("must be positive, got {}", self.dt)));
        }
        Ok(())
    }

    /// Observer step interval giving roughly `cadence` samples per run.
    pub fn snapshot_interval(&self, t_end: f64) -> usize {
        let steps = (t_end / self.dt).ceil().max(1.0) as usize;
        (steps / self.cadence).max(1)
    }
}

/// Per-ε record of the family study.
#[derive(Debug, Clone, Serialize)]
pub struct InviscidRow {
    pub eps: f64,
    pub eps1: f64,
    pub eps2: f64,
    /// `sup_t ‖(u − u⁰, b − b⁰)‖_{L²}` over the snapshots.
    pub raw_l2_sup: f64,
    /// Same with the wall layers subtracted as well.
    pub corrected_l2_sup: f64,
    /// Sup norm of the layer-corrected deviation.
    pub corrected_linf_sup: f64,
    /// Elsässer-difference residual norm.
    pub elsasser_l2_sup: f64,
    /// `√(ε^{κ−1} + ε₁² + ε₂² + (ε₁+ε₂)/√ε + (ε₁−ε₂)²/(ε√ε(ε₁+ε₂)))`,
    /// the decay envelope of the raw error with unit constant.
    pub predicted_bound: f64,
}

/// Family-study report: one row per ε plus the rate fit of `raw_l2_sup`.
#[derive(Debug, Clone, Serialize)]
pub struct InviscidStudy {
    pub rows: Vec<InviscidRow>,
    /// The predicted slope is the fitted decay of `predicted_bound` itself
    /// over the same sweep (0.25 for an equal law with κ ≥ 2).
    pub fit: RateFit,
}

/// Per-ε₂ record of the fixed-viscosity study.
#[derive(Debug, Clone, Serialize)]
pub struct DiffusionRow {
    pub eps2: f64,
    /// Magnetic layer width parameter `(θ·ε₂)^{1+τ}`.
    pub nu2_star: f64,
    /// `sup_t ‖(u − u_ref, b − b_ref)‖_{L²}` over the snapshots.
    pub err_l2_sup: f64,
    /// `ε₂^{(1−τ)/4}` (unit constant).
    pub predicted_bound: f64,
}

/// Fixed-viscosity study report: one row per ε₂ plus the rate fit of
/// `err_l2_sup` against the predicted slope `(1−τ)/4`.
#[derive(Debug, Clone, Serialize)]
pub struct DiffusionStudy {
    pub rows: Vec<DiffusionRow>,
    pub fit: RateFit,
}

/// Decay envelope of the raw family-study error, unit constant.
fn inviscid_bound(eps: f64, eps1: f64, eps2: f64, kappa: f64) -> f64 {
    let gap = eps1 - eps2;
    let s = eps.powf(kappa - 1.0)
        + eps1 * eps1
        + eps2 * eps2
        + (eps1 + eps2) / eps.sqrt()
        + gap * gap / (eps * eps.sqrt() * (eps1 + eps2));
    s.sqrt()
}

fn validate_sweep(name: &str, list: &[f64]) -> Result<()> {
    if list.len() < 3 {
        return Err(Error::config(
            name,
            format!("need at least 3 values for a rate fit, got {}", list.len()),
        ));
    }
    if !list.iter().all(|e| *e > 0.0 && e.is_finite()) {
        return Err(Error::config(name, "entries must be positive and finite"));
    }
    for w in list.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::config(name, "must be strictly decreasing"));
        }
    }
    Ok(())
}

/// Admissibility gate. Analytic laws are checked on the sweep grid extended
/// geometrically downward until it spans two decades, so the verdict judges
/// the law rather than the sample; tabulated laws are checked verbatim.
fn gate_family(family: &EpsilonFamily, eps_list: &[f64]) -> Result<()> {
    let mut grid = eps_list.to_vec();
    if !matches!(family.law, EpsilonLaw::Custom { .. }) {
        let target = 100.0 * (1.0 - 1e-9);
        while grid[0] / *grid.last().expect("sweep is nonempty") < target && grid.len() < eps_list.len() + 64 {
            let next = grid.last().expect("sweep is nonempty") * 0.5;
            grid.push(next);
        }
    }
    let check = check_epsilon_family(family, &grid)?;
    if !check.pass {
        return Err(Error::config(
            "family",
            format!(
                "family fails the admissibility check (sum_vanishes={}, \
                 gap_forcing_vanishes={}, gap_bounded={})",
                check.sum_vanishes, check.gap_forcing_vanishes, check.gap_bounded
            ),
        ));
    }
    Ok(())
}

/// The family study needs Elsässer-aligned data: shear states must satisfy
/// `b = u` or `b = −u` exactly.
fn require_aligned(state: &IdealState) -> Result<()> {
    match &state.kind {
        StateKind::ElsasserSteady { .. } | StateKind::WellPrepared { .. } => Ok(()),
        StateKind::ShearFlow { u, b } => {
            let same =
                b.c0 == u.c0 && b.c1 == u.c1 && b.cos1 == u.cos1 && b.sin1 == u.sin1;
            let flipped =
                b.c0 == -u.c0 && b.c1 == -u.c1 && b.cos1 == -u.cos1 && b.sin1 == -u.sin1;
            if same || flipped {
                Ok(())
            } else {
                Err(Error::Precondition(
                    "family study needs aligned shear data (b = u or b = -u)".into(),
                ))
            }
        }
    }
}

/// Sweeps ε along `family`, integrating the full system from layered,
/// `ε^κ`-perturbed initial data and recording error suprema against the
/// analytic core. Layers use widths `ν₁* = ν₂* = ε`. The family must pass
/// the admissibility gate before any solve.
pub fn run_inviscid_limit_study(
    family: &EpsilonFamily,
    eps_list: &[f64],
    state: &IdealState,
    t_end: f64,
    policy: &GridPolicy,
    seed: u64,
) -> Result<InviscidStudy> {
    policy.validate()?;
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::config("t_end", format!("must be positive, got {t_end}")));
    }
    validate_sweep("eps_list", eps_list)?;
    require_aligned(state)?;
    gate_family(family, eps_list)?;

    let grid = build_grid(policy.nx, policy.nz, state.h, policy.stretch)?;
    let cutoffs = make_cutoffs(state.h)?;
    let interval = policy.snapshot_interval(t_end);
    let kappa = family.kappa;

    let results = par::map_collect(eps_list.to_vec(), |eps| -> Result<InviscidRow> {
        let (eps1, eps2) = family.eval(eps)?;
        let params = CorrectorParams {
            nu1_star: eps,
            nu2_star: eps,
            s_shift: 1.0,
            mode: CorrectorMode::ExactExponential,
        };
        let cs = build_correctors(state, params, cutoffs)?;
        let pert = Perturbation { kappa, seed };
        let s0 = init_state(state, Some(&cs), Some(&pert), &grid, eps)?;
        let cfg = SolverConfig::new(eps1, eps2, policy.dt, &grid)?;
        let mut sup = [0.0f64; 4];
        let mut deferred: Option<Error> = None;
        let mut observer = |s: &MhdState, _: &EnergyDiag| {
            if deferred.is_some() {
                return;
            }
            match error_norms(s, state, Some(&cs)) {
                Ok(en) => {
                    sup[0] = sup[0].max(en.raw_l2);
                    sup[1] = sup[1].max(en.corrected_l2);
                    sup[2] = sup[2].max(en.corrected_linf);
                    sup[3] = sup[3].max(en.elsasser_l2);
                }
                Err(e) => deferred = Some(e),
            }
        };
        run(&s0, &cfg, t_end, interval, &mut observer)?;
        if let Some(e) = deferred {
            return Err(e);
        }
        Ok(InviscidRow {
            eps,
            eps1,
            eps2,
            raw_l2_sup: sup[0],
            corrected_l2_sup: sup[1],
            corrected_linf_sup: sup[2],
            elsasser_l2_sup: sup[3],
            predicted_bound: inviscid_bound(eps, eps1, eps2, kappa),
        })
    });

    let mut rows = Vec::with_capacity(results.len());
    for r in results {
        rows.push(r?);
    }
    let errs: Vec<f64> = rows.iter().map(|r| r.raw_l2_sup).collect();
    let bounds: Vec<f64> = rows.iter().map(|r| r.predicted_bound).collect();
    let (predicted, _, _) = log_log_fit(eps_list, &bounds)?;
    let fit = fit_rate(eps_list, &errs, predicted)?;
    Ok(InviscidStudy { rows, fit })
}

/// Plain `L²` norm of the state difference over both fields (trapezoid in z,
/// uniform in x).
fn diff_l2(a: &MhdState, r: &MhdState) -> f64 {
    let grid = a.grid();
    let mut total = 0.0;
    for j in 0..grid.nz {
        let mut row = 0.0;
        for i in 0..grid.nx {
            let q = grid.idx(i, j);
            let d1 = a.u.f1.v[q] - r.u.f1.v[q];
            let d3 = a.u.f3.v[q] - r.u.f3.v[q];
            let e1 = a.b.f1.v[q] - r.b.f1.v[q];
            let e3 = a.b.f3.v[q] - r.b.f3.v[q];
            row += d1 * d1 + d3 * d3 + e1 * e1 + e3 * e3;
        }
        total += grid.wz[j] * row;
    }
    (total * grid.dx).sqrt()
}

/// Sweeps ε₂ at fixed viscosity. One reference run of the zero-diffusivity
/// system is recorded at the snapshot cadence; each full run starts from the
/// reference data plus the magnetic wall layer of width `(θ·ε₂)^{1+τ}` and
/// records `sup_t ‖(u − u_ref, b − b_ref)‖_{L²}` at matching times. No
/// velocity layer is added, so the velocity trace must vanish at both walls.
pub fn run_diffusion_limit_study(
    eps1_fixed: f64,
    eps2_list: &[f64],
    theta: f64,
    tau: f64,
    state: &IdealState,
    t_end: f64,
    policy: &GridPolicy,
) -> Result<DiffusionStudy> {
    policy.validate()?;
    if !(eps1_fixed > 0.0) || !eps1_fixed.is_finite() {
        return Err(Error::config("eps1", format!("must be positive and finite, got {eps1_fixed}")));
    }
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::Domain(format!("tau must lie in [0, 1), got {tau}")));
    }
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::config("theta", format!("must be positive, got {theta}")));
    }
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::config("t_end", format!("must be positive, got {t_end}")));
    }
    validate_sweep("eps2_list", eps2_list)?;
    let traces = wall_traces(state);
    if !(traces.u1_at_0.is_zero() && traces.u1_at_h.is_zero()) {
        return Err(Error::Precondition(
            "the fixed-viscosity study adds no velocity layer: the velocity \
             trace must vanish at both walls"
                .into(),
        ));
    }

    let grid = build_grid(policy.nx, policy.nz, state.h, policy.stretch)?;
    let cutoffs = make_cutoffs(state.h)?;
    let interval = policy.snapshot_interval(t_end);

    let s0_ref = init_state(state, None, None, &grid, 1.0)?;
    let cfg_ref = SolverConfig::new(eps1_fixed, 0.0, policy.dt, &grid)?;
    let mut snaps: Vec<MhdState> = Vec::new();
    run_reference_viscous(&s0_ref, &cfg_ref, t_end, interval, &mut |s, _| {
        snaps.push(s.clone())
    })?;

    let results = par::map_collect(eps2_list.to_vec(), |eps2| -> Result<DiffusionRow> {
        let nu2 = nu2_star_diffusion_limit(eps2, theta, tau)?;
        let params = CorrectorParams {
            // Inert: the velocity traces are zero, so no velocity layer forms.
            nu1_star: eps1_fixed,
            nu2_star: nu2,
            s_shift: 1.0,
            mode: CorrectorMode::ExactExponential,
        };
        let cs = build_correctors(state, params, cutoffs)?;
        let s0 = init_state(state, Some(&cs), None, &grid, eps2)?;
        let cfg = SolverConfig::new(eps1_fixed, eps2, policy.dt, &grid)?;
        let mut sup = 0.0f64;
        let mut k = 0usize;
        let mut deferred: Option<Error> = None;
        let mut observer = |s: &MhdState, _: &EnergyDiag| {
            if deferred.is_some() {
                return;
            }
            let Some(r) = snaps.get(k) else {
                deferred = Some(Error::Precondition(
                    "full run produced more snapshots than the reference".into(),
                ));
                return;
            };
            if (s.t - r.t).abs() > 1e-9 * s.t.abs().max(1.0) {
                deferred = Some(Error::Precondition(format!(
                    "snapshot times diverged: {} vs reference {}",
                    s.t, r.t
                )));
                return;
            }
            sup = sup.max(diff_l2(s, r));
            k += 1;
        };
        run(&s0, &cfg, t_end, interval, &mut observer)?;
        if let Some(e) = deferred {
            return Err(e);
        }
        if k != snaps.len() {
            return Err(Error::Precondition(format!(
                "snapshot counts diverged: {k} vs reference {}",
                snaps.len()
            )));
        }
        Ok(DiffusionRow {
            eps2,
            nu2_star: nu2,
            err_l2_sup: sup,
            predicted_bound: eps2.powf((1.0 - tau) / 4.0),
        })
    });

    let mut rows = Vec::with_capacity(results.len());
    for r in results {
        rows.push(r?);
    }
    let errs: Vec<f64> = rows.iter().map(|r| r.err_l2_sup).collect();
    let fit = fit_rate(eps2_list, &errs, (1.0 - tau) / 4.0)?;
    Ok(DiffusionStudy { rows, fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ideal::{shear_flow, ZProfile};

    fn smoke_policy() -> GridPolicy {
        GridPolicy { nx: 16, nz: 97, stretch: 2.5, dt: 1e-3, cadence: 5 }
    }

    fn aligned_shear() -> IdealState {
        let p = ZProfile { c0: 1.0, c1: -0.5, cos1: 0.3, sin1: 0.0 };
        shear_flow(1.0, p, p).expect("valid profiles")
    }

    // Zero traces at both walls: c0 + cos1 = 0 and c0 + c1·h − cos1 = 0
    // hold exactly because cos(0) = 1 and cos(π) = −1 in floating point.
    fn zero_trace_profile() -> ZProfile {
        ZProfile { c0: 0.5, c1: -1.0, cos1: -0.5, sin1: 0.0 }
    }

    #[test]
    fn gates_fire_before_any_solve() {
        let eps = [4e-3, 2e-3, 1e-3];
        let policy = smoke_policy();
        let state = aligned_shear();

        let bad_family = EpsilonFamily::shifted(0.2, 4.0).unwrap();
        let err = run_inviscid_limit_study(&bad_family, &eps, &state, 0.25, &policy, 1)
            .expect_err("inadmissible family must be rejected");
        assert!(matches!(err, Error::Config { ref field, .. } if field == "family"), "{err}");

        let good = EpsilonFamily::equal(4.0).unwrap();
        let u = ZProfile { c0: 1.0, c1: 0.0, cos1: 0.0, sin1: 0.0 };
        let b = ZProfile { c0: 0.7, c1: 0.0, cos1: 0.0, sin1: 0.0 };
        let skew = shear_flow(1.0, u, b).unwrap();
        let err = run_inviscid_limit_study(&good, &eps, &skew, 0.25, &policy, 1)
            .expect_err("misaligned shear data must be rejected");
        assert!(matches!(err, Error::Precondition(_)), "{err}");

        let err = run_inviscid_limit_study(&good, &[4e-3, 2e-3], &state, 0.25, &policy, 1)
            .expect_err("two points cannot support a fit");
        assert!(matches!(err, Error::Config { ref field, .. } if field == "eps_list"), "{err}");
    }

    #[test]
    fn shear_sweep_recovers_the_quarter_rate() {
        let family = EpsilonFamily::equal(4.0).unwrap();
        let eps = [4e-3, 2e-3, 1e-3];
        let state = aligned_shear();
        let policy = smoke_policy();
        let study =
            run_inviscid_limit_study(&family, &eps, &state, 0.02, &policy, 7).unwrap();

        assert_eq!(study.rows.len(), 3);
        for (row, &e) in study.rows.iter().zip(&eps) {
            assert_eq!(row.eps, e);
            assert_eq!(row.eps1, e);
            assert_eq!(row.eps2, e);
            assert!(row.raw_l2_sup > 0.0);
            // The layers dominate the raw deviation at this horizon.
            assert!(
                row.corrected_l2_sup < 0.5 * row.raw_l2_sup,
                "corrected {} vs raw {}",
                row.corrected_l2_sup,
                row.raw_l2_sup
            );
            // Aligned data with equal widths: the Elsässer difference carries
            // no layer, only the perturbation and scheme error.
            assert!(row.elsasser_l2_sup < 0.1 * row.raw_l2_sup);
            let expect = inviscid_bound(e, e, e, 4.0);
            assert_eq!(row.predicted_bound, expect);
        }
        for w in study.rows.windows(2) {
            assert!(w[1].raw_l2_sup < w[0].raw_l2_sup, "raw sups must decrease");
        }
        assert!(
            (study.fit.slope - 0.25).abs() < 0.10,
            "slope {} should sit near 1/4",
            study.fit.slope
        );
        assert!(study.fit.r2 > 0.9, "r2 {}", study.fit.r2);
        assert!((study.fit.predicted_slope - 0.25).abs() < 0.02);
        assert!(study.fit.verdict);
    }

    #[test]
    fn diffusion_sweep_tracks_the_layer_mass() {
        let u = zero_trace_profile();
        let b = ZProfile { c0: 1.0, c1: 0.0, cos1: 0.4, sin1: 0.0 };
        let state = shear_flow(1.0, u, b).unwrap();
        let policy = GridPolicy { nx: 8, nz: 129, stretch: 3.0, dt: 5e-4, cadence: 5 };
        let eps2 = [4e-3, 2e-3, 1e-3];
        let study =
            run_diffusion_limit_study(1e-2, &eps2, 0.1, 0.0, &state, 0.02, &policy).unwrap();

        assert_eq!(study.rows.len(), 3);
        for (row, &e2) in study.rows.iter().zip(&eps2) {
            assert_eq!(row.eps2, e2);
            assert!((row.nu2_star - 0.1 * e2).abs() <= 1e-15 * e2);
            assert!(row.err_l2_sup > 0.0);
            assert_eq!(row.predicted_bound, e2.powf(0.25));
        }
        for w in study.rows.windows(2) {
            assert!(w[1].err_l2_sup < w[0].err_l2_sup, "error sups must decrease");
        }
        assert!(
            (study.fit.slope - 0.25).abs() < 0.10,
            "slope {} should sit near 1/4",
            study.fit.slope
        );
        assert!(study.fit.r2 > 0.9, "r2 {}", study.fit.r2);
        assert_eq!(study.fit.predicted_slope, 0.25);
        assert!(study.fit.verdict);
    }

    #[test]
    fn zero_trace_control_decays_much_faster() {
        let state = shear_flow(1.0, zero_trace_profile(), zero_trace_profile()).unwrap();
        let policy = GridPolicy { nx: 8, nz: 129, stretch: 3.0, dt: 5e-4, cadence: 5 };
        let eps2 = [4e-3, 2e-3, 1e-3];
        let study =
            run_diffusion_limit_study(1e-2, &eps2, 0.1, 0.0, &state, 0.02, &policy).unwrap();
        // No layer: the gap is pure ε₂-diffusion drift, near first order.
        assert!(study.fit.slope > 0.5, "control slope {}", study.fit.slope);
        assert!(study.fit.r2 > 0.9, "r2 {}", study.fit.r2);
    }

    #[test]
    fn diffusion_rejections_cover_the_parameter_domain() {
        let u = zero_trace_profile();
        let b = ZProfile { c0: 1.0, c1: 0.0, cos1: 0.4, sin1: 0.0 };
        let state = shear_flow(1.0, u, b).unwrap();
        let policy = GridPolicy { nx: 8, nz: 65, stretch: 2.0, dt: 1e-3, cadence: 5 };
        let eps2 = [4e-3, 2e-3, 1e-3];

        let err = run_diffusion_limit_study(1e-2, &eps2, 0.1, 1.0, &state, 0.02, &policy)
            .expect_err("tau = 1 lies outside the admissible range");
        assert!(matches!(err, Error::Domain(_)), "{err}");

        let err = run_diffusion_limit_study(0.0, &eps2, 0.1, 0.0, &state, 0.02, &policy)
            .expect_err("the viscosity must stay positive");
        assert!(matches!(err, Error::Config { ref field, .. } if field == "eps1"), "{err}");

        let err =
            run_diffusion_limit_study(1e-2, &[1e-3, 2e-3, 4e-3], 0.1, 0.0, &state, 0.02, &policy)
                .expect_err("the sweep must decrease");
        assert!(matches!(err, Error::Config { ref field, .. } if field == "eps2_list"), "{err}");

        let moving = ZProfile { c0: 1.0, c1: 0.0, cos1: 0.0, sin1: 0.0 };
        let sliding = shear_flow(1.0, moving, b).unwrap();
        let err = run_diffusion_limit_study(1e-2, &eps2, 0.1, 0.0, &sliding, 0.02, &policy)
            .expect_err("nonzero velocity trace cannot be corrected without a layer");
        assert!(matches!(err, Error::Precondition(_)), "{err}");
    }
}
