//! JSON experiment configuration.
//!
//! Parsing is strict: unknown fields are rejected at every level, duplicate
//! keys are rejected by a text-level pre-scan (serde would silently keep the
//! last one), and every referenced sub-config is constructed and validated
//! before any computation starts. Omitted sections fall back to documented
//! defaults (`h = 1`, `stretch = 3`, `snapshot_cadence = 20`, `s_shift = 1`,
//! `theta = 0.1`, `tau = 0`).

use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::budget::BudgetFamily;
use crate::correctors::{make_cutoffs, CorrectorMode, CorrectorParams, CutoffPair};
use crate::error::Error;
use crate::fields::{build_grid, GridSpec};
use crate::ideal::{elsasser_steady, shear_flow, well_prepared, IdealState, ZProfile};
use crate::asymptotics::EpsilonFamily;
use crate::solver::SolverConfig;
use crate::study::GridPolicy;
use crate::Result;

/// The experiments the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    /// Wall-layer exactness diagnostics: boundary match, support, divergence.
    Correctors,
    /// Layer norm magnitudes across a width sweep, with fitted exponents.
    LayerScaling,
    /// A single forward run with energy diagnostics.
    Simulate,
    /// Rate study with both diffusivities driven to zero along a family.
    InviscidLimit,
    /// Rate study with fixed viscosity and vanishing magnetic diffusivity.
    DiffusionLimit,
    /// Residual energy budget terms along a run.
    Budget,
    /// Bound-ladder evaluation over an ε sweep.
    Betas,
}

impl Experiment {
    /// Kebab-case name, as it appears on the command line and in configs.
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Correctors => "correctors",
            Experiment::LayerScaling => "layer-scaling",
            Experiment::Simulate => "simulate",
            Experiment::InviscidLimit => "inviscid-limit",
            Experiment::DiffusionLimit => "diffusion-limit",
            Experiment::Budget => "budget",
            Experiment::Betas => "betas",
        }
    }
}

fn d_nx() -> usize {
    64
}
fn d_nz() -> usize {
    129
}
fn d_h() -> f64 {
    1.0
}
fn d_stretch() -> f64 {
    3.0
}

/// Channel discretization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "d_nx")]
    pub nx: usize,
    #[serde(default = "d_nz")]
    pub nz: usize,
    #[serde(default = "d_h")]
    pub h: f64,
    #[serde(default = "d_stretch")]
    pub stretch: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { nx: d_nx(), nz: d_nz(), h: d_h(), stretch: d_stretch() }
    }
}

/// Vertical profile `c0 + c1·z + cos1·cos(πz/h) + sin1·sin(πz/h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ProfileSection {
    #[serde(default)]
    pub c0: f64,
    #[serde(default)]
    pub c1: f64,
    #[serde(default)]
    pub cos1: f64,
    #[serde(default)]
    pub sin1: f64,
}

impl ProfileSection {
    fn profile(&self) -> ZProfile {
        ZProfile { c0: self.c0, c1: self.c1, cos1: self.cos1, sin1: self.sin1 }
    }
}

fn d_sign() -> f64 {
    1.0
}
fn d_amp() -> f64 {
    1.0
}
fn d_mode() -> u32 {
    1
}

/// Core state selector. `kind` is one of `"shear"`, `"elsasser_steady"`,
/// `"well_prepared"`; shear states take the `u`/`b` profiles, the other two
/// take `sign`/`amp`/`mode`/`phase`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSection {
    pub kind: String,
    #[serde(default)]
    pub u: Option<ProfileSection>,
    #[serde(default)]
    pub b: Option<ProfileSection>,
    #[serde(default = "d_sign")]
    pub sign: f64,
    #[serde(default = "d_amp")]
    pub amp: f64,
    #[serde(default = "d_mode")]
    pub mode: u32,
    #[serde(default)]
    pub phase: f64,
}

impl Default for StateSection {
    /// Aligned shear flow with unequal nonzero wall traces.
    fn default() -> Self {
        let p = ProfileSection { c0: 1.0, c1: -0.5, cos1: 0.3, sin1: 0.0 };
        StateSection {
            kind: "shear".into(),
            u: Some(p),
            b: Some(p),
            sign: d_sign(),
            amp: d_amp(),
            mode: d_mode(),
            phase: 0.0,
        }
    }
}

fn d_eps1() -> f64 {
    1e-2
}
fn d_eps2() -> f64 {
    1e-2
}
fn d_dt() -> f64 {
    1e-3
}
fn d_t_end() -> f64 {
    0.25
}
fn d_cfl() -> f64 {
    0.5
}

/// Time integration parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "d_eps1")]
    pub eps1: f64,
    #[serde(default = "d_eps2")]
    pub eps2: f64,
    #[serde(default = "d_dt")]
    pub dt: f64,
    #[serde(default = "d_t_end")]
    pub t_end: f64,
    #[serde(default = "d_cfl")]
    pub cfl_limit: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            eps1: d_eps1(),
            eps2: d_eps2(),
            dt: d_dt(),
            t_end: d_t_end(),
            cfl_limit: d_cfl(),
        }
    }
}

fn d_nu() -> f64 {
    1e-2
}
fn d_s_shift() -> f64 {
    1.0
}
fn d_corrector_mode() -> CorrectorMode {
    CorrectorMode::ExactExponential
}

/// Wall-layer parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectorSection {
    #[serde(default = "d_nu")]
    pub nu1_star: f64,
    #[serde(default = "d_nu")]
    pub nu2_star: f64,
    #[serde(default = "d_s_shift")]
    pub s_shift: f64,
    #[serde(default = "d_corrector_mode")]
    pub mode: CorrectorMode,
}

impl Default for CorrectorSection {
    fn default() -> Self {
        CorrectorSection {
            nu1_star: d_nu(),
            nu2_star: d_nu(),
            s_shift: d_s_shift(),
            mode: d_corrector_mode(),
        }
    }
}

fn d_kappa() -> f64 {
    2.0
}

/// Diffusivity law along the sweep. `law` is one of `"equal"`, `"shifted"`
/// (takes `alpha`), `"custom"` (takes `table` rows `[eps, eps1, eps2]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySection {
    pub law: String,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub table: Option<Vec<[f64; 3]>>,
    #[serde(default = "d_kappa")]
    pub kappa: f64,
}

fn d_theta() -> f64 {
    0.1
}
fn d_cadence() -> usize {
    20
}

/// One experiment invocation: which experiment, its discretization, physics,
/// sweep, and output location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub state: StateSection,
    #[serde(default)]
    pub family: Option<FamilySection>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub corrector: CorrectorSection,
    /// Sweep values: ε for the family studies and the bound ladder, ε₂ for the
    /// fixed-viscosity study, layer widths for the scaling experiment.
    #[serde(default)]
    pub eps: Option<Vec<f64>>,
    #[serde(default = "d_theta")]
    pub theta: f64,
    #[serde(default)]
    pub tau: f64,
    /// Budget decomposition: `"J"`, `"K"`, or `"I"`.
    #[serde(default)]
    pub budget: Option<String>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_cadence")]
    pub snapshot_cadence: usize,
}

impl ExperimentConfig {
    pub fn build_grid(&self) -> Result<Arc<GridSpec>> {
        build_grid(self.grid.nx, self.grid.nz, self.grid.h, self.grid.stretch)
    }

    pub fn build_state(&self) -> Result<IdealState> {
        let h = self.grid.h;
        match self.state.kind.as_str() {
            "shear" => {
                let u = self.state.u.ok_or_else(|| {
                    Error::config("state.u", "required when kind = \"shear\"")
                })?;
                let b = self.state.b.ok_or_else(|| {
                    Error::config("state.b", "required when kind = \"shear\"")
                })?;
                shear_flow(h, u.profile(), b.profile())
            }
            "elsasser_steady" => {
                elsasser_steady(h, self.state.sign, self.state.amp, self.state.mode, self.state.phase)
            }
            "well_prepared" => {
                well_prepared(h, self.state.sign, self.state.amp, self.state.mode, self.state.phase)
            }
            other => Err(Error::config(
                "state.kind",
                format!("unknown kind {other:?} (expected shear, elsasser_steady, well_prepared)"),
            )),
        }
    }

    pub fn build_family(&self) -> Result<EpsilonFamily> {
        let f = self
            .family
            .as_ref()
            .ok_or_else(|| Error::config("family", "required for this experiment"))?;
        match f.law.as_str() {
            "equal" => {
                if f.alpha.is_some() {
                    return Err(Error::config("family.alpha", "only valid for law \"shifted\""));
                }
                if f.table.is_some() {
                    return Err(Error::config("family.table", "only valid for law \"custom\""));
                }
                EpsilonFamily::equal(f.kappa)
            }
            "shifted" => {
                if f.table.is_some() {
                    return Err(Error::config("family.table", "only valid for law \"custom\""));
                }
                let alpha = f.alpha.ok_or_else(|| {
                    Error::config("family.alpha", "required when law = \"shifted\"")
                })?;
                EpsilonFamily::shifted(alpha, f.kappa)
            }
            "custom" => {
                if f.alpha.is_some() {
                    return Err(Error::config("family.alpha", "only valid for law \"shifted\""));
                }
                let table = f.table.as_ref().ok_or_else(|| {
                    Error::config("family.table", "required when law = \"custom\"")
                })?;
                let rows: Vec<(f64, f64, f64)> =
                    table.iter().map(|r| (r[0], r[1], r[2])).collect();
                EpsilonFamily::custom(rows, f.kappa)
            }
            other => Err(Error::config(
                "family.law",
                format!("unknown law {other:?} (expected equal, shifted, custom)"),
            )),
        }
    }

    pub fn corrector_params(&self) -> CorrectorParams {
        CorrectorParams {
            nu1_star: self.corrector.nu1_star,
            nu2_star: self.corrector.nu2_star,
            s_shift: self.corrector.s_shift,
            mode: self.corrector.mode,
        }
    }

    pub fn cutoffs(&self) -> Result<CutoffPair> {
        make_cutoffs(self.grid.h)
    }

    pub fn solver_config(&self, grid: &Arc<GridSpec>) -> Result<SolverConfig> {
        let mut cfg = SolverConfig::new(self.solver.eps1, self.solver.eps2, self.solver.dt, grid)?;
        cfg.cfl_limit = self.solver.cfl_limit;
        Ok(cfg)
    }

    pub fn policy(&self) -> GridPolicy {
        GridPolicy {
            nx: self.grid.nx,
            nz: self.grid.nz,
            stretch: self.grid.stretch,
            dt: self.solver.dt,
            cadence: self.snapshot_cadence,
        }
    }

    pub fn budget_family(&self) -> Result<BudgetFamily> {
        let name = self
            .budget
            .as_deref()
            .ok_or_else(|| Error::config("budget", "required for the budget experiment"))?;
        match name {
            "J" | "j" => Ok(BudgetFamily::J),
            "K" | "k" => Ok(BudgetFamily::K),
            "I" | "i" => Ok(BudgetFamily::I),
            other => Err(Error::config(
                "budget",
                format!("unknown family {other:?} (expected J, K, or I)"),
            )),
        }
    }

    /// Sweep values for the experiment, with per-experiment defaults.
    pub fn eps_sweep(&self) -> Vec<f64> {
        if let Some(list) = &self.eps {
            return list.clone();
        }
        match self.experiment {
            Experiment::LayerScaling | Experiment::Betas => {
                vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6]
            }
            _ => vec![4e-3, 2e-3, 1e-3, 5e-4],
        }
    }

    /// Constructs every sub-config the experiment references, surfacing the
    /// first violation before any computation starts.
    pub fn validate(&self) -> Result<()> {
        let grid = self.build_grid()?;
        if self.snapshot_cadence == 0 {
            return Err(Error::config("snapshot_cadence", "must be at least 1"));
        }
        match self.experiment {
            Experiment::Correctors | Experiment::LayerScaling => {
                let state = self.build_state()?;
                crate::correctors::build_correctors(
                    &state,
                    self.corrector_params(),
                    self.cutoffs()?,
                )?;
            }
            Experiment::Simulate => {
                self.build_state()?;
                self.solver_config(&grid)?;
            }
            Experiment::InviscidLimit => {
                self.build_family()?;
                self.build_state()?;
                self.solver_config(&grid)?;
            }
            Experiment::DiffusionLimit => {
                self.build_state()?;
                if !(0.0..1.0).contains(&self.tau) {
                    return Err(Error::Domain(format!(
                        "tau must lie in [0, 1), got {}",
                        self.tau
                    )));
                }
                if !(self.theta > 0.0) || !self.theta.is_finite() {
                    return Err(Error::config(
                        "theta",
                        format!("must be positive, got {}", self.theta),
                    ));
                }
                if !(self.solver.eps1 > 0.0) {
                    return Err(Error::config(
                        "solver.eps1",
                        "the fixed viscosity must be positive",
                    ));
                }
            }
            Experiment::Budget => {
                self.budget_family()?;
                let state = self.build_state()?;
                self.solver_config(&grid)?;
                crate::correctors::build_correctors(
                    &state,
                    self.corrector_params(),
                    self.cutoffs()?,
                )?;
            }
            Experiment::Betas => {
                self.build_family()?;
                let sweep = self.eps_sweep();
                if sweep.is_empty() {
                    return Err(Error::config("eps", "must be nonempty"));
                }
                if !sweep.iter().all(|e| *e > 0.0 && e.is_finite()) {
                    return Err(Error::config("eps", "entries must be positive and finite"));
                }
            }
        }
        Ok(())
    }
}

/// Rejects duplicate keys anywhere in the document. serde keeps the last
/// occurrence silently, which would let a config contradict itself.
fn check_duplicate_keys(text: &str) -> Result<()> {
    enum Frame {
        Object(HashSet<String>),
        Array,
    }
    let bytes = text.as_bytes();
    let mut stack: Vec<Frame> = Vec::new();
    let mut i = 0usize;
    while i < bytes.len() {
        match bytes[i] {
            b'{' => {
                stack.push(Frame::Object(HashSet::new()));
                i += 1;
            }
            b'[' => {
                stack.push(Frame::Array);
                i += 1;
            }
            b'}' | b']' => {
                stack.pop();
                i += 1;
            }
            b'"' => {
                let start = i + 1;
                let mut j = start;
                while j < bytes.len() && bytes[j] != b'"' {
                    if bytes[j] == b'\\' {
                        j += 1;
                    }
                    j += 1;
                }
                if j >= bytes.len() {
                    // Unterminated string: leave the report to the JSON parser.
                    return Ok(());
                }
                let s = &text[start..j];
                let mut k = j + 1;
                while k < bytes.len() && bytes[k].is_ascii_whitespace() {
                    k += 1;
                }
                let is_key = k < bytes.len() && bytes[k] == b':';
                if is_key {
                    if let Some(Frame::Object(keys)) = stack.last_mut() {
                        if !keys.insert(s.to_string()) {
                            return Err(Error::Json(format!("duplicate key {s:?}")));
                        }
                    }
                }
                i = j + 1;
            }
            _ => {
                i += 1;
            }
        }
    }
    Ok(())
}

/// Parses and validates a JSON experiment config.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    check_duplicate_keys(text)?;
    let cfg: ExperimentConfig =
        serde_json::from_str(text).map_err(|e| Error::Json(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_documented_defaults() {
        let cfg = parse_config(
            r#"{"experiment":"betas","family":{"law":"equal","kappa":2},"eps":[1e-2]}"#,
        )
        .unwrap();
        assert_eq!(cfg.experiment, Experiment::Betas);
        assert_eq!(cfg.grid.h, 1.0);
        assert_eq!(cfg.grid.stretch, 3.0);
        assert_eq!(cfg.snapshot_cadence, 20);
        assert_eq!(cfg.corrector.s_shift, 1.0);
        assert_eq!(cfg.theta, 0.1);
        assert_eq!(cfg.tau, 0.0);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.eps_sweep(), vec![1e-2]);
        let family = cfg.build_family().unwrap();
        assert_eq!(family.kappa, 2.0);
    }

    #[test]
    fn duplicate_keys_are_rejected_at_any_depth() {
        let err = parse_config(
            r#"{"experiment":"betas","family":{"law":"equal","kappa":2},"eps":[1e-2],"experiment":"betas"}"#,
        )
        .expect_err("top-level duplicate");
        assert!(matches!(err, Error::Json(ref m) if m.contains("duplicate key")), "{err}");

        let err = parse_config(
            r#"{"experiment":"betas","family":{"law":"equal","law":"equal","kappa":2},"eps":[1e-2]}"#,
        )
        .expect_err("nested duplicate");
        assert!(matches!(err, Error::Json(ref m) if m.contains("\"law\"")), "{err}");

        // Same key in sibling objects is fine.
        parse_config(
            r#"{"experiment":"inviscid-limit","family":{"law":"equal","kappa":4},
                "state":{"kind":"shear","u":{"c0":1.0},"b":{"c0":1.0}},"eps":[4e-3,2e-3,1e-3]}"#,
        )
        .unwrap();
    }

    #[test]
    fn unknown_fields_are_rejected_with_their_name() {
        let err = parse_config(r#"{"experiment":"betas","family":{"law":"equal"},"epz":[1e-2]}"#)
            .expect_err("misspelled field");
        assert!(matches!(err, Error::Json(ref m) if m.contains("epz")), "{err}");

        let err = parse_config(
            r#"{"experiment":"betas","family":{"law":"equal","gamma":3},"eps":[1e-2]}"#,
        )
        .expect_err("unknown nested field");
        assert!(matches!(err, Error::Json(ref m) if m.contains("gamma")), "{err}");
    }

    #[test]
    fn config_round_trips_through_serialization() {
        let cfg = parse_config(
            r#"{"experiment":"diffusion-limit",
                "grid":{"nx":8,"nz":65,"stretch":2.0},
                "state":{"kind":"shear","u":{"c0":0.5,"c1":-1.0,"cos1":-0.5},"b":{"c0":1.0,"cos1":0.4}},
                "solver":{"eps1":1e-2,"dt":5e-4,"t_end":0.02},
                "eps":[4e-3,2e-3,1e-3],
                "seed":9}"#,
        )
        .unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back = parse_config(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn family_and_state_selectors_reject_mismatched_fields() {
        let base = r#"{"experiment":"betas","eps":[1e-2],"family":"#;
        let err = parse_config(&format!("{base}{}}}", r#"{"law":"shifted","kappa":2}"#))
            .expect_err("shifted needs alpha");
        assert!(matches!(err, Error::Config { ref field, .. } if field == "family.alpha"), "{err}");

        let err = parse_config(&format!("{base}{}}}", r#"{"law":"equal","alpha":0.5,"kappa":2}"#))
            .expect_err("equal takes no alpha");
        assert!(matches!(err, Error::Config { ref field, .. } if field == "family.alpha"), "{err}");

        let err = parse_config(&format!("{base}{}}}", r#"{"law":"ramp","kappa":2}"#))
            .expect_err("unknown law");
        assert!(matches!(err, Error::Config { ref field, .. } if field == "family.law"), "{err}");

        let cfg = parse_config(&format!(
            "{base}{}}}",
            r#"{"law":"custom","table":[[1e-2,1e-2,2e-2],[1e-3,1e-3,2e-3]],"kappa":2}"#
        ))
        .unwrap();
        assert!(cfg.build_family().is_ok());

        let err = parse_config(
            r#"{"experiment":"simulate","state":{"kind":"shear","u":{"c0":1.0}}}"#,
        )
        .expect_err("shear needs both profiles");
        assert!(matches!(err, Error::Config { ref field, .. } if field == "state.b"), "{err}");

        let err = parse_config(r#"{"experiment":"simulate","state":{"kind":"vortex"}}"#)
            .expect_err("unknown state kind");
        assert!(matches!(err, Error::Config { ref field, .. } if field == "state.kind"), "{err}");
    }

    #[test]
    fn physics_violations_surface_at_validation() {
        let err = parse_config(
            r#"{"experiment":"diffusion-limit",
                "state":{"kind":"shear","u":{"c0":0.5,"c1":-1.0,"cos1":-0.5},"b":{"c0":1.0}},
                "tau":1.0}"#,
        )
        .expect_err("tau = 1 is out of range");
        assert!(matches!(err, Error::Domain(ref m) if m.contains("tau")), "{err}");

        let err = parse_config(
            r#"{"experiment":"inviscid-limit","eps":[4e-3,2e-3,1e-3]}"#,
        )
        .expect_err("family is required");
        assert!(matches!(err, Error::Config { ref field, .. } if field == "family"), "{err}");

        let err = parse_config(r#"{"experiment":"budget"}"#).expect_err("budget family required");
        assert!(matches!(err, Error::Config { ref field, .. } if field == "budget"), "{err}");
    }

    #[test]
    fn default_state_is_an_aligned_shear_flow() {
        let cfg = parse_config(r#"{"experiment":"simulate"}"#).unwrap();
        let state = cfg.build_state().unwrap();
        assert!(matches!(state.kind, crate::ideal::StateKind::ShearFlow { .. }));
        let policy = cfg.policy();
        assert_eq!(policy.nx, 64);
        assert_eq!(policy.nz, 129);
        assert_eq!(policy.cadence, 20);
    }
}
