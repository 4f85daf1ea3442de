//! Scenario files: TOML with `extends` inheritance and named floor presets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::controller::ControllerConfig;
use crate::error::{Error, Result};
use crate::estimation::NoiseConfig;
use crate::plant::{DisturbanceModel, MAX_PLANT_DT};
use crate::sensors::{DifferencingFrame, SensorSuite};
use crate::trajectory::PathConfig;
use crate::types::{BodyTwist, Pose2D, RobotParams};

const FLOOR_PRESETS: [(&str, &str); 3] = [
    ("smooth", include_str!("../../presets/floors/smooth.toml")),
    ("rugged", include_str!("../../presets/floors/rugged.toml")),
    ("soft", include_str!("../../presets/floors/soft.toml")),
];

const MAX_EXTENDS_DEPTH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackSource {
    #[default]
    Truth,
    Ekf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantInput {
    #[default]
    Torque,
    Twist,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Timing {
    pub plant_dt: f64,
    pub control_dt: f64,
}

impl Default for Timing {
    fn default() -> Self {
        Self {
            plant_dt: 0.01,
            control_dt: 0.02,
        }
    }
}

impl Timing {
    /// Plant steps per control tick.
    pub fn substeps(&self) -> usize {
        (self.control_dt / self.plant_dt).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialState {
    pub pose: Pose2D,
    pub twist: BodyTwist,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantOptions {
    /// Velocity-following time constant in twist-input mode, s.
    pub twist_time_constant: f64,
}

impl Default for PlantOptions {
    fn default() -> Self {
        Self {
            twist_time_constant: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EkfConfig {
    /// Diagonal of `P0`.
    pub initial_covariance: [f64; 6],
    /// Diagonal of `Q`, added on every predict.
    pub process_noise: [f64; 6],
    /// Mahalanobis gate in sigmas; off when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gate_sigma: Option<f64>,
    pub differencing: DifferencingFrame,
}

impl Default for EkfConfig {
    fn default() -> Self {
        Self {
            initial_covariance: [1e-9; 6],
            process_noise: [0.05; 6],
            gate_sigma: None,
            differencing: DifferencingFrame::Body,
        }
    }
}

impl EkfConfig {
    pub fn noise(&self) -> Result<NoiseConfig> {
        NoiseConfig::diagonal(self.initial_covariance, self.process_noise)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricSource {
    /// Errors of the true robot state.
    #[default]
    Truth,
    /// Errors of whatever state the controller was fed.
    Feedback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocityErrorRef {
    /// `v_c - v`.
    #[default]
    Command,
    /// `(v_d, omega_d) - v`.
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub source: MetricSource,
    pub velocity_error: VelocityErrorRef,
}

/// Everything needed to reproduce one closed-loop run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub seed: u64,
    pub duration: f64,
    /// Start of the steady-state window; one reference period when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transient: Option<f64>,
    #[serde(default)]
    pub feedback: FeedbackSource,
    #[serde(default)]
    pub plant_input: PlantInput,
    pub robot: RobotParams,
    #[serde(default)]
    pub timing: Timing,
    #[serde(default)]
    pub initial: InitialState,
    pub path: PathConfig,
    pub controller: ControllerConfig,
    #[serde(default)]
    pub disturbance: DisturbanceModel,
    #[serde(default)]
    pub plant: PlantOptions,
    #[serde(default)]
    pub sensors: SensorSuite,
    #[serde(default)]
    pub ekf: EkfConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

impl ScenarioConfig {
    /// Load a scenario file, resolving `extends` relative to the file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_table(load_table(path)?)
    }

    /// Parse scenario text; `extends` paths resolve against the working directory.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_table(parse_table(text, Path::new("."), 0)?)
    }

    /// Resolve the floor preset, deserialize and validate.
    pub fn from_table(mut table: Table) -> Result<Self> {
        resolve_preset(&mut table)?;
        let cfg: ScenarioConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().trim().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn transient(&self) -> f64 {
        self.transient.unwrap_or_else(|| self.path.period().unwrap_or(0.0))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(Error::validation("duration", format!("must be >= 0, got {}", self.duration)));
        }
        self.robot.validate()?;
        let Timing { plant_dt, control_dt } = self.timing;
        if !(plant_dt > 0.0 && plant_dt <= MAX_PLANT_DT) {
            return Err(Error::validation(
                "timing.plant_dt",
                format!("must lie in (0, {MAX_PLANT_DT}], got {plant_dt}"),
            ));
        }
        let ratio = control_dt / plant_dt;
        if !(control_dt.is_finite() && ratio >= 1.0 - 1e-9 && (ratio - ratio.round()).abs() < 1e-9) {
            return Err(Error::validation(
                "timing.control_dt",
                format!("must be an integer multiple of plant_dt ({plant_dt}), got {control_dt}"),
            ));
        }
        let transient = self.transient();
        if !(transient.is_finite() && transient >= 0.0) {
            return Err(Error::validation("transient", "must be finite and >= 0"));
        }
        if self.duration > 0.0 && transient >= self.duration {
            return Err(Error::validation(
                "transient",
                format!("steady-state window starts at {transient} s but the run lasts {} s", self.duration),
            ));
        }
        self.initial.twist.validated()?;
        self.path.validate()?;
        self.controller.validate()?;
        self.disturbance.validate()?;
        self.sensors.validate()?;
        self.ekf.noise()?;
        if let Some(g) = self.ekf.gate_sigma {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::validation("ekf.gate_sigma", "must be > 0"));
            }
        }
        let tc = self.plant.twist_time_constant;
        if !(tc.is_finite() && tc > 0.0) {
            return Err(Error::validation("plant.twist_time_constant", "must be > 0"));
        }
        Ok(())
    }

    /// Short digest of every setting except the seed.
    pub fn config_hash(&self) -> String {
        let mut copy = self.clone();
        copy.seed = 0;
        copy.name = None;
        let text = toml::to_string(&copy).unwrap_or_else(|e| format!("unserializable: {e}"));
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Read a scenario file and merge its `extends` chain; the floor preset is left unresolved.
pub fn load_table(path: impl AsRef<Path>) -> Result<Table> {
    load_table_at(path.as_ref(), 0)
}

fn load_table_at(path: &Path, depth: usize) -> Result<Table> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    parse_table(&text, &base, depth).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn parse_table(text: &str, base: &Path, depth: usize) -> Result<Table> {
    let mut table: Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string().trim().to_string()))?;
    let Some(parent) = table.remove("extends") else {
        return Ok(table);
    };
    if depth >= MAX_EXTENDS_DEPTH {
        return Err(Error::Config(format!("extends chain deeper than {MAX_EXTENDS_DEPTH}")));
    }
    let Value::String(parent) = parent else {
        return Err(Error::Config("extends must be a file path string".into()));
    };
    let mut merged = load_table_at(&base.join(parent), depth + 1)?;
    merge(&mut merged, table);
    Ok(merged)
}

/// Deep merge: tables merge recursively, everything else in `over` replaces `base`.
pub fn merge(base: &mut Table, over: Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

pub fn floor_preset(name: &str) -> Result<Table> {
    let text = FLOOR_PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            let known: Vec<&str> = FLOOR_PRESETS.iter().map(|(n, _)| *n).collect();
            Error::Config(format!("unknown disturbance preset '{name}' (known: {})", known.join(", ")))
        })?;
    text.parse().map_err(|e: toml::de::Error| Error::Config(format!("preset {name}: {e}")))
}

pub fn floor_preset_names() -> Vec<&'static str> {
    FLOOR_PRESETS.iter().map(|(n, _)| *n).collect()
}

fn resolve_preset(table: &mut Table) -> Result<()> {
    let Some(Value::Table(dist)) = table.get_mut("disturbance") else {
        return Ok(());
    };
    let Some(name) = dist.remove("preset") else {
        return Ok(());
    };
    let Value::String(name) = name else {
        return Err(Error::Config("disturbance.preset must be a string".into()));
    };
    let mut base = floor_preset(&name)?;
    merge(&mut base, std::mem::take(dist));
    *dist = base;
    Ok(())
}

/// Parse a command-line value: integer, float, bool, otherwise string.
pub fn parse_value(s: &str) -> Value {
    let s = s.trim();
    if let Ok(i) = s.parse::<i64>() {
        Value::Integer(i)
    } else if let Ok(f) = s.parse::<f64>() {
        Value::Float(f)
    } else if let Ok(b) = s.parse::<bool>() {
        Value::Boolean(b)
    } else {
        Value::String(s.to_string())
    }
}

/// Set a dotted key such as `controller.eta`.
///
/// Integers are widened to floats where the existing value is a float, and a scalar
/// assigned to an existing numeric array fills every element.
pub fn set_key(table: &mut Table, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed key '{key}'")));
    }
    let (last, path) = parts.split_last().expect("split of non-empty key");
    let mut cur = table;
    for p in path {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => return Err(Error::Config(format!("'{key}': '{p}' is not a section"))),
        };
    }
    let value = match (cur.get(*last), value) {
        (Some(Value::Array(arr)), v @ (Value::Integer(_) | Value::Float(_))) => {
            let as_float = match v {
                Value::Integer(i) => Value::Float(i as f64),
                other => other,
            };
            Value::Array(vec![as_float; arr.len()])
        }
        (Some(Value::Float(_)), Value::Integer(i)) => Value::Float(i as f64),
        (_, v) => v,
    };
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
pub(crate) const MINIMAL: &str = r#"
seed = 1
duration = 20.0

[robot]
mass = 0.10054
wheel_radius = 0.034
wheel_separation = 0.17
inertia = 0.003
max_speed = 1.0

[path]
kind = "circle"
radius = 1.0
rate = 0.4

[controller]
eta = [10.0, 10.0]
gains = { lambda = [3.0, 3.0], k1 = 0.5, k2 = 1.0, k3 = 1.5 }
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_defaults() {
        let cfg = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.timing, Timing::default());
        assert_eq!(cfg.timing.substeps(), 2);
        assert_eq!(cfg.feedback, FeedbackSource::Truth);
        assert!((cfg.transient() - std::f64::consts::TAU / 0.4).abs() < 1e-12);
        assert_eq!(cfg.ekf.process_noise, [0.05; 6]);
        assert!(cfg.sensors.enabled().is_empty());
    }

    #[test]
    fn control_dt_must_be_multiple_of_plant_dt() {
        let text = format!("{MINIMAL}\n[timing]\nplant_dt = 0.01\ncontrol_dt = 0.015\n");
        let err = ScenarioConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("timing.control_dt"), "{err}");
    }

    #[test]
    fn transient_must_fit_in_duration() {
        let text = MINIMAL.replace("duration = 20.0", "duration = 10.0");
        assert!(ScenarioConfig::from_toml_str(&text).is_err());
        let zero = MINIMAL.replace("duration = 20.0", "duration = 0.0");
        assert!(ScenarioConfig::from_toml_str(&zero).is_ok());
    }

    #[test]
    fn zero_lambda_names_gainset() {
        let text = MINIMAL.replace("lambda = [3.0, 3.0]", "lambda = [0.0, 3.0]");
        let err = ScenarioConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("GainSet"), "{err}");
    }

    #[test]
    fn unknown_field_is_config_error() {
        let text = format!("{MINIMAL}\n[metrics]\nsource = \"truth\"\nfoo = 1\n");
        let err = ScenarioConfig::from_toml_str(&text).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("foo"), "{err}");
    }

    #[test]
    fn syntax_error_reports_line() {
        let err = ScenarioConfig::from_toml_str("seed = 1\nduration = \n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn preset_with_overrides() {
        let text = format!("{MINIMAL}\n[disturbance]\npreset = \"rugged\"\nnoise_std = [0.0, 0.0]\n");
        let cfg = ScenarioConfig::from_toml_str(&text).unwrap();
        let rugged: DisturbanceModel = Value::Table(floor_preset("rugged").unwrap()).try_into().unwrap();
        assert_eq!(cfg.disturbance.coulomb, rugged.coulomb);
        assert_eq!(cfg.disturbance.noise_std, [0.0, 0.0]);
        let bad = format!("{MINIMAL}\n[disturbance]\npreset = \"ice\"\n");
        assert!(ScenarioConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn every_preset_parses() {
        for name in floor_preset_names() {
            let d: DisturbanceModel = Value::Table(floor_preset(name).unwrap()).try_into().unwrap();
            d.validate().unwrap();
        }
    }

    #[test]
    fn extends_merges_parent() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("base.toml"), MINIMAL).unwrap();
        std::fs::write(
            dir.path().join("child.toml"),
            "extends = \"base.toml\"\nseed = 9\n[controller]\neta = [0.0, 0.0]\n",
        )
        .unwrap();
        let cfg = ScenarioConfig::load(dir.path().join("child.toml")).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.controller.eta, [0.0, 0.0]);
        assert_eq!(cfg.controller.gains.k3, 1.5);
    }

    #[test]
    fn set_key_broadcasts_and_widens() {
        let mut t: Table = MINIMAL.parse().unwrap();
        set_key(&mut t, "controller.eta", parse_value("0")).unwrap();
        set_key(&mut t, "duration", parse_value("30")).unwrap();
        set_key(&mut t, "seed", parse_value("4")).unwrap();
        let cfg = ScenarioConfig::from_table(t).unwrap();
        assert_eq!(cfg.controller.eta, [0.0, 0.0]);
        assert_eq!(cfg.duration, 30.0);
        assert_eq!(cfg.seed, 4);
    }

    #[test]
    fn hash_ignores_seed_only() {
        let a = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        let mut b = a.clone();
        b.seed = 77;
        assert_eq!(a.config_hash(), b.config_hash());
        b.controller.eta = [1.0, 1.0];
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash().len(), 16);
    }

    #[test]
    fn toml_round_trip() {
        let text = format!("{MINIMAL}\n[sensors.wheel]\nnoise_std = [0.01, 0.01, 0.02]\n[sensors.vo]\ndropouts = [{{ start = 5.0, duration = 1.0 }}]\n");
        let a = ScenarioConfig::from_toml_str(&text).unwrap();
        let b = ScenarioConfig::from_toml_str(&a.to_toml().unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
