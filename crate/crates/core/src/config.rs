//! Run configuration: JSON schema, defaults and `key=value` overrides.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::clf::ControllerMode;
use crate::disturbance::DisturbanceSignal;
use crate::error::{Error, Result};
use crate::output_dynamics::OutputDims;
use crate::plants::{HopfPlant, MechPlant};
use crate::serde_mat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub k1: usize,
    pub k2: usize,
    pub q: QSpec,
    pub eps: f64,
    pub eps_bar: f64,
    pub plant: PlantKind,
    pub hopf: HopfConfig,
    pub mech: MechConfig,
    pub controller: ControllerKind,
    pub disturbance: DisturbanceConfig,
    pub integrator: IntegratorConfig,
    pub sweep: SweepConfig,
    pub settle_fraction: f64,
    pub sigma_override: Option<f64>,
    pub output_dir: String,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            k1: 0,
            k2: 1,
            q: QSpec::default(),
            eps: 0.1,
            eps_bar: 0.1,
            plant: PlantKind::Hopf,
            hopf: HopfConfig::default(),
            mech: MechConfig::default(),
            controller: ControllerKind::MinNormPlusUs,
            disturbance: DisturbanceConfig::default(),
            integrator: IntegratorConfig::default(),
            sweep: SweepConfig::default(),
            settle_fraction: 0.5,
            sigma_override: None,
            output_dir: "out".into(),
            seed: 0,
        }
    }
}

/// `"identity"` or explicit rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QSpec {
    Named(QName),
    Rows(Vec<Vec<f64>>),
}

impl Default for QSpec {
    fn default() -> Self {
        Self::Named(QName::Identity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QName {
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantKind {
    Hopf,
    Mech,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    MinNorm,
    MinNormPlusUs,
}

/// Uniform entry or explicit `2 × (k1 + 2k2)` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CouplingSpec {
    Uniform(f64),
    Rows(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HopfConfig {
    pub omega: f64,
    pub lambda_h: f64,
    pub r0: f64,
    pub coupling: CouplingSpec,
    pub y1_rate: f64,
    /// Annulus half-width; `r0/2` when absent.
    pub annulus: Option<f64>,
    /// Initial η; `(0.5, 0, …)` when absent.
    pub eta0: Option<Vec<f64>>,
    pub z0: [f64; 2],
}

impl Default for HopfConfig {
    fn default() -> Self {
        Self {
            omega: 1.0,
            lambda_h: 1.0,
            r0: 1.0,
            coupling: CouplingSpec::Uniform(0.2),
            y1_rate: 1.0,
            annulus: None,
            eta0: None,
            z0: [1.2, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MechConfig {
    pub q1_minus: f64,
    pub q1_plus: f64,
    pub alpha: Vec<f64>,
    pub v_d: f64,
    /// Initial `τ`.
    pub tau0: f64,
    /// Initial η; `(0.1, 0.05, 0)` for `k1 = 1` and `(0.05, 0)` for `k1 = 0`.
    pub eta0: Option<Vec<f64>>,
    /// Initial `q̇1` when `k1 = 0`.
    pub dq1_0: f64,
    /// Simulation horizon; the phase must stay in `[0, 1]`.
    pub horizon: f64,
}

impl Default for MechConfig {
    fn default() -> Self {
        Self {
            q1_minus: 0.0,
            q1_plus: 1.0,
            alpha: vec![0.0, 0.05, 0.25, 0.25, 0.05, 0.0],
            v_d: 1.0,
            tau0: 0.05,
            eta0: None,
            dq1_0: 1.0,
            horizon: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceKind {
    Zero,
    Constant,
    Sinusoid,
    Random,
    PhaseError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisturbanceConfig {
    pub kind: DisturbanceKind,
    /// `‖d‖∞`, or the phase-error amplitude for `phase_error`.
    pub amplitude: f64,
    pub frequency: f64,
    pub dwell: f64,
    /// Overrides the top-level seed for `random`.
    pub seed: Option<u64>,
}

impl Default for DisturbanceConfig {
    fn default() -> Self {
        Self {
            kind: DisturbanceKind::Sinusoid,
            amplitude: 0.05,
            frequency: 0.5,
            dwell: 0.5,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub horizon: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: crate::simulator::DEFAULT_DT,
            horizon: crate::simulator::DEFAULT_HORIZON,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub eps: Vec<f64>,
    /// Nonzero `‖d‖∞` levels; a zero level is always added.
    pub amplitudes: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            eps: vec![0.5, 0.2, 0.1, 0.05],
            amplitudes: vec![0.01, 0.02, 0.04],
        }
    }
}

impl RunConfig {
    /// Parses JSON text, applies overrides and validates.
    pub fn from_json_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut value: Value = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("malformed JSON: {e}")))?;
        if !value.is_object() {
            return Err(Error::Config("config must be a JSON object".into()));
        }
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: Self = serde_json::from_value(value)
            .map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (or starts from `{}`) and applies overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?,
            None => "{}".to_string(),
        };
        Self::from_json_with_overrides(&text, overrides).map_err(|e| match (e, path) {
            (Error::Config(msg), Some(p)) => Error::Config(format!("{}: {msg}", p.display())),
            (e, _) => e,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.q_matrix()?;
        let check = |ok: bool, msg: String| if ok { Ok(()) } else { Err(Error::Config(msg)) };
        check(self.eps > 0.0 && self.eps <= 1.0, format!("eps = {} not in (0, 1]", self.eps))?;
        check(
            self.eps_bar > 0.0 && self.eps_bar <= 1.0,
            format!("eps_bar = {} not in (0, 1]", self.eps_bar),
        )?;
        check(
            self.settle_fraction > 0.0 && self.settle_fraction < 1.0,
            format!("settle_fraction = {} not in (0, 1)", self.settle_fraction),
        )?;
        check(
            self.integrator.dt > 0.0 && self.integrator.horizon >= self.integrator.dt,
            "integrator needs dt > 0 and horizon >= dt".into(),
        )?;
        check(
            self.sigma_override.is_none_or(|s| s > 0.0 && s.is_finite()),
            "sigma_override must be positive".into(),
        )?;
        check(
            self.sweep.eps.iter().all(|e| *e > 0.0 && *e <= 1.0),
            "sweep.eps entries must lie in (0, 1]".into(),
        )?;
        check(
            self.sweep.amplitudes.iter().all(|a| *a >= 0.0 && a.is_finite()),
            "sweep.amplitudes must be non-negative".into(),
        )?;
        check(self.disturbance.amplitude.is_finite(), "disturbance.amplitude must be finite".into())?;
        match (self.plant, self.disturbance.kind) {
            (PlantKind::Hopf, DisturbanceKind::PhaseError) => Err(Error::Config(
                "phase_error disturbances need plant = mech".into(),
            )),
            (PlantKind::Mech, k) if !matches!(k, DisturbanceKind::PhaseError | DisturbanceKind::Zero) => {
                Err(Error::Config(
                    "the mech plant takes disturbance.kind = phase_error or zero".into(),
                ))
            }
            _ => Ok(()),
        }?;
        match self.plant {
            PlantKind::Hopf => {
                self.hopf_plant()?;
                self.hopf_eta0()?;
            }
            PlantKind::Mech => {
                self.mech_plant()?;
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> Result<OutputDims> {
        OutputDims::new(self.k1, self.k2)
    }

    pub fn q_matrix(&self) -> Result<DMatrix<f64>> {
        let n = self.dims()?.eta_dim();
        match &self.q {
            QSpec::Named(QName::Identity) => Ok(DMatrix::identity(n, n)),
            QSpec::Rows(rows) => {
                let q = serde_mat::from_rows(rows)
                    .ok_or_else(|| Error::Config("q has ragged rows".into()))?;
                if q.nrows() != n || q.ncols() != n {
                    return Err(Error::Config(format!(
                        "q must be {n} x {n}, got {} x {}",
                        q.nrows(),
                        q.ncols()
                    )));
                }
                Ok(q)
            }
        }
    }

    pub fn controller_mode(&self) -> ControllerMode {
        match self.controller {
            ControllerKind::MinNorm => ControllerMode::MinNorm,
            ControllerKind::MinNormPlusUs => ControllerMode::MinNormPlusDamping {
                eps_bar: self.eps_bar,
            },
        }
    }

    pub fn disturbance_seed(&self) -> u64 {
        self.disturbance.seed.unwrap_or(self.seed)
    }

    /// The configured disturbance for an input of dimension `dim`.
    pub fn disturbance_signal(&self, dim: usize) -> DisturbanceSignal {
        let d = &self.disturbance;
        match d.kind {
            DisturbanceKind::Zero => DisturbanceSignal::Zero { dim },
            DisturbanceKind::Constant => DisturbanceSignal::Constant {
                dim,
                amplitude: d.amplitude,
            },
            DisturbanceKind::Sinusoid => DisturbanceSignal::Sinusoid {
                dim,
                amplitude: d.amplitude,
                frequency: d.frequency,
            },
            DisturbanceKind::Random => DisturbanceSignal::PiecewiseConstantRandom {
                dim,
                amplitude: d.amplitude,
                dwell: d.dwell,
                seed: self.disturbance_seed(),
            },
            DisturbanceKind::PhaseError => DisturbanceSignal::PhaseErrorDriven {
                amplitude: d.amplitude,
                frequency: d.frequency,
            },
        }
    }

    pub fn hopf_plant(&self) -> Result<HopfPlant> {
        let dims = self.dims()?;
        let h = &self.hopf;
        let coupling = match &h.coupling {
            CouplingSpec::Uniform(c) => DMatrix::from_element(2, dims.eta_dim(), *c),
            CouplingSpec::Rows(rows) => serde_mat::from_rows(rows)
                .ok_or_else(|| Error::Config("hopf.coupling has ragged rows".into()))?,
        };
        let mut plant = HopfPlant::new(dims, h.omega, h.lambda_h, h.r0, coupling, h.y1_rate)?;
        if let Some(r) = h.annulus {
            plant.annulus = r;
        }
        Ok(plant)
    }

    pub fn hopf_eta0(&self) -> Result<DVector<f64>> {
        let n = self.dims()?.eta_dim();
        match &self.hopf.eta0 {
            Some(v) if v.len() != n => Err(Error::Config(format!(
                "hopf.eta0 must have {n} entries, got {}",
                v.len()
            ))),
            Some(v) => Ok(DVector::from_column_slice(v)),
            None => {
                let mut e = DVector::zeros(n);
                e[0] = 0.5;
                Ok(e)
            }
        }
    }

    pub fn mech_plant(&self) -> Result<MechPlant> {
        let m = &self.mech;
        MechPlant::new(self.dims()?, m.q1_minus, m.q1_plus, m.alpha.clone(), m.v_d)
    }

    /// Initial mechanical state from `tau0`, `eta0` and (for `k1 = 0`) `dq1_0`.
    pub fn mech_x0(&self, plant: &MechPlant) -> Result<DVector<f64>> {
        let m = &self.mech;
        let q1 = m.q1_minus + m.tau0 * (m.q1_plus - m.q1_minus);
        let eta = match (&m.eta0, self.k1) {
            (Some(v), _) => DVector::from_column_slice(v),
            (None, 1) => DVector::from_vec(vec![0.1, 0.05, 0.0]),
            (None, _) => DVector::from_vec(vec![0.05, 0.0]),
        };
        let z = if self.k1 == 1 {
            DVector::from_vec(vec![q1])
        } else {
            DVector::from_vec(vec![q1, m.dq1_0])
        };
        plant.phi_inverse(&eta, &z)
    }

    /// Canonical compact JSON of the resolved configuration.
    pub fn to_compact_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Sets the dotted path `key` to `value`, parsed as JSON when possible and
/// as a string otherwise. Missing intermediate objects are created.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::Config(format!("override key `{key}` is malformed")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = match node {
            Value::Object(map) => map,
            _ => {
                return Err(Error::Config(format!(
                    "override `{key}`: `{}` is not an object",
                    parts[..i].join(".")
                )))
            }
        };
        if i + 1 == parts.len() {
            obj.insert((*part).to_string(), value);
            return Ok(());
        }
        node = obj
            .entry((*part).to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("key has at least one component")
}
