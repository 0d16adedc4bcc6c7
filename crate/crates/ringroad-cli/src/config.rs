//! Layered run configuration: built-in defaults, then an optional TOML
//! file, then repeatable `--set key=value` overrides. Unknown keys and
//! type mismatches are hard errors, and the fully resolved configuration
//! is echoed next to every command's outputs.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use ringroad::ring::ClassifyThresholds;
use ringroad::stability::StabilitySettings;
use ringroad::sweeps::{SweepSettings, VsaSettings};
use ringroad::ModelParams;

#[derive(Debug)]
pub enum ConfigError {
    Io(String),
    Parse(String),
    UnknownKey(String),
    TypeMismatch {
        key: String,
        expected: &'static str,
        unit: &'static str,
        got: String,
    },
    Invalid(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(msg) => write!(f, "config I/O error: {msg}"),
            ConfigError::Parse(msg) => write!(f, "config parse error: {msg}"),
            ConfigError::UnknownKey(key) => write!(f, "unknown config key `{key}`"),
            ConfigError::TypeMismatch {
                key,
                expected,
                unit,
                got,
            } => write!(
                f,
                "type mismatch for key `{key}`: expected {expected} [{unit}], got {got}"
            ),
            ConfigError::Invalid(msg) => write!(f, "invalid config: {msg}"),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RingSection {
    /// Number of vehicles.
    pub n: usize,
    /// Ring circumference [m]; ignored when `rho` is given.
    pub c: f64,
    /// Optional density [1/m]; when set, the circumference becomes n/rho.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

impl Default for RingSection {
    fn default() -> Self {
        Self {
            n: 28,
            c: 314.0,
            rho: None,
        }
    }
}

impl RingSection {
    pub fn circumference(&self) -> f64 {
        match self.rho {
            Some(rho) => self.n as f64 / rho,
            None => self.c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub steps: u64,
    pub record_every: u64,
    /// Initial common velocity [m/s]; defaults to v* - 1.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_init: Option<f64>,
    pub kick_enabled: bool,
    /// Kicked vehicle, 1-based.
    pub kick_vehicle: usize,
    pub kick_u: f64,
    pub kick_start: f64,
    pub kick_duration: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            steps: 6000,
            record_every: 1,
            v_init: None,
            kick_enabled: true,
            kick_vehicle: 1,
            kick_u: -1.0,
            kick_start: 0.0,
            kick_duration: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquilibriumSection {
    pub rho_min: f64,
    pub rho_max: f64,
    pub points: usize,
    pub tol: f64,
}

impl Default for EquilibriumSection {
    fn default() -> Self {
        Self {
            rho_min: 0.05,
            rho_max: 0.20,
            points: 50,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriticalSection {
    pub n: usize,
    pub c_lo: f64,
    pub c_hi: f64,
    pub tol: f64,
}

impl Default for CriticalSection {
    fn default() -> Self {
        Self {
            n: 28,
            c_lo: 300.0,
            c_hi: 330.0,
            tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BifurcationSection {
    pub rho_min: f64,
    pub rho_max: f64,
    pub points: usize,
}

impl Default for BifurcationSection {
    fn default() -> Self {
        Self {
            rho_min: 0.06,
            rho_max: 0.16,
            points: 21,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgSection {
    pub rho_lo: f64,
    pub rho_hi: f64,
    pub tol: f64,
}

impl Default for SgSection {
    fn default() -> Self {
        Self {
            rho_lo: 0.07,
            rho_hi: 0.16,
            tol: 0.002,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseSection {
    pub v_star_min: f64,
    pub v_star_step: f64,
}

impl Default for PhaseSection {
    fn default() -> Self {
        Self {
            v_star_min: 7.0,
            v_star_step: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VsaSection {
    pub rho_min: f64,
    pub rho_max: f64,
    pub points: usize,
    pub margin: f64,
    pub v_star_floor: f64,
    pub v_star_tol: f64,
}

impl Default for VsaSection {
    fn default() -> Self {
        let settings = VsaSettings::default();
        Self {
            rho_min: 0.085,
            rho_max: 0.13,
            points: 4,
            margin: settings.margin,
            v_star_floor: settings.v_star_floor,
            v_star_tol: settings.v_star_tol,
        }
    }
}

impl VsaSection {
    pub fn settings(&self) -> VsaSettings {
        VsaSettings {
            margin: self.margin,
            v_star_floor: self.v_star_floor,
            v_star_tol: self.v_star_tol,
        }
    }
}

/// The fully resolved configuration; every field has a default, so an
/// empty config reproduces the calibrated setup.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Reserved; the map itself is deterministic.
    pub seed: u64,
    pub model: ModelParams,
    pub ring: RingSection,
    pub sim: SimSection,
    pub equilibrium: EquilibriumSection,
    pub stability: StabilitySettings,
    pub critical: CriticalSection,
    pub bifurcation: BifurcationSection,
    pub sg: SgSection,
    pub phase: PhaseSection,
    pub vsa: VsaSection,
    pub sweep: SweepSettings,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.sim.kick_vehicle < 1 || self.sim.kick_vehicle > self.ring.n {
            return Err(ConfigError::Invalid(format!(
                "sim.kick_vehicle must be in 1..={} (1-based), got {}",
                self.ring.n, self.sim.kick_vehicle
            )));
        }
        if self.equilibrium.points < 1 || self.bifurcation.points < 1 || self.vsa.points < 1 {
            return Err(ConfigError::Invalid("grids need at least one point".into()));
        }
        Ok(())
    }

    /// Thresholds used by sweep classification.
    pub fn thresholds(&self) -> ClassifyThresholds {
        self.sweep.thresholds
    }

    pub fn stability_settings(&self) -> StabilitySettings {
        self.stability
    }

    pub fn sweep_settings(&self) -> SweepSettings {
        self.sweep.clone()
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config is always serializable")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Int,
    Float,
    Bool,
    FloatList,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Int => "integer",
            Kind::Float => "float",
            Kind::Bool => "bool",
            Kind::FloatList => "array of floats",
        }
    }

    fn matches(self, value: &toml::Value) -> bool {
        match self {
            Kind::Int => value.is_integer(),
            Kind::Float => value.is_float() || value.is_integer(),
            Kind::Bool => value.is_bool(),
            Kind::FloatList => value
                .as_array()
                .is_some_and(|a| a.iter().all(|v| v.is_float() || v.is_integer())),
        }
    }
}

/// Every legal key with its expected type and SI unit. The registry is the
/// single authority for "unknown key" and "type mismatch" diagnostics.
const REGISTRY: &[(&str, Kind, &str)] = &[
    ("seed", Kind::Int, "-"),
    ("model.v_star", Kind::Float, "m/s"),
    ("model.kappa1", Kind::Float, "-"),
    ("model.w1", Kind::Float, "-"),
    ("model.kappa_v2", Kind::Float, "s/m"),
    ("model.kappa_02", Kind::Float, "m/s"),
    ("model.w2", Kind::Float, "-"),
    ("model.kappa_c3", Kind::Float, "m"),
    ("model.kappa_v3", Kind::Float, "s"),
    ("model.kappa_d3", Kind::Float, "s"),
    ("model.w3", Kind::Float, "-"),
    ("model.dt", Kind::Float, "s"),
    ("model.gamma", Kind::Float, "-"),
    ("model.horizon", Kind::Int, "-"),
    ("model.lambda", Kind::Float, "-"),
    ("model.u_min", Kind::Float, "m/s^2"),
    ("model.u_max", Kind::Float, "m/s^2"),
    ("model.grid_points", Kind::Int, "-"),
    ("model.vehicle_length", Kind::Float, "m"),
    ("ring.n", Kind::Int, "-"),
    ("ring.c", Kind::Float, "m"),
    ("ring.rho", Kind::Float, "1/m"),
    ("sim.steps", Kind::Int, "-"),
    ("sim.record_every", Kind::Int, "-"),
    ("sim.v_init", Kind::Float, "m/s"),
    ("sim.kick_enabled", Kind::Bool, "-"),
    ("sim.kick_vehicle", Kind::Int, "1-based index"),
    ("sim.kick_u", Kind::Float, "m/s^2"),
    ("sim.kick_start", Kind::Float, "s"),
    ("sim.kick_duration", Kind::Float, "s"),
    ("equilibrium.rho_min", Kind::Float, "1/m"),
    ("equilibrium.rho_max", Kind::Float, "1/m"),
    ("equilibrium.points", Kind::Int, "-"),
    ("equilibrium.tol", Kind::Float, "m/s^2"),
    ("stability.fd_step", Kind::Float, "m | m/s | m/s^2"),
    ("stability.root_zero_tol", Kind::Float, "-"),
    ("stability.root_residual_tol", Kind::Float, "-"),
    ("critical.n", Kind::Int, "-"),
    ("critical.c_lo", Kind::Float, "m"),
    ("critical.c_hi", Kind::Float, "m"),
    ("critical.tol", Kind::Float, "-"),
    ("bifurcation.rho_min", Kind::Float, "1/m"),
    ("bifurcation.rho_max", Kind::Float, "1/m"),
    ("bifurcation.points", Kind::Int, "-"),
    ("sg.rho_lo", Kind::Float, "1/m"),
    ("sg.rho_hi", Kind::Float, "1/m"),
    ("sg.tol", Kind::Float, "1/m"),
    ("phase.v_star_min", Kind::Float, "m/s"),
    ("phase.v_star_step", Kind::Float, "m/s"),
    ("vsa.rho_min", Kind::Float, "1/m"),
    ("vsa.rho_max", Kind::Float, "1/m"),
    ("vsa.points", Kind::Int, "-"),
    ("vsa.margin", Kind::Float, "m/s"),
    ("vsa.v_star_floor", Kind::Float, "m/s"),
    ("vsa.v_star_tol", Kind::Float, "m/s"),
    ("sweep.steps", Kind::Int, "-"),
    ("sweep.record_every", Kind::Int, "-"),
    ("sweep.kick_strengths", Kind::FloatList, "m/s^2"),
    ("sweep.kick_duration", Kind::Float, "s"),
    ("sweep.scan_step", Kind::Float, "1/m"),
    ("sweep.thresholds.a_free_flow", Kind::Float, "m/s"),
    ("sweep.thresholds.a_stop_and_go", Kind::Float, "m/s"),
    ("sweep.thresholds.transient_fraction", Kind::Float, "-"),
];

fn lookup(path: &str) -> Option<(Kind, &'static str)> {
    REGISTRY
        .iter()
        .find(|(key, _, _)| *key == path)
        .map(|&(_, kind, unit)| (kind, unit))
}

fn is_section_prefix(path: &str) -> bool {
    let prefix = format!("{path}.");
    REGISTRY.iter().any(|(key, _, _)| key.starts_with(&prefix))
}

fn toml_type_name(value: &toml::Value) -> String {
    match value {
        toml::Value::String(s) => format!("string {s:?}"),
        toml::Value::Integer(_) => "integer".into(),
        toml::Value::Float(_) => "float".into(),
        toml::Value::Boolean(_) => "bool".into(),
        toml::Value::Datetime(_) => "datetime".into(),
        toml::Value::Array(_) => "array".into(),
        toml::Value::Table(_) => "table".into(),
    }
}

fn validate_tree(value: &toml::Value, path: &str) -> Result<(), ConfigError> {
    match value {
        toml::Value::Table(table) => {
            for (key, sub) in table {
                let child = if path.is_empty() {
                    key.clone()
                } else {
                    format!("{path}.{key}")
                };
                if sub.is_table() {
                    if !is_section_prefix(&child) {
                        return Err(ConfigError::UnknownKey(child));
                    }
                    validate_tree(sub, &child)?;
                } else {
                    match lookup(&child) {
                        None => return Err(ConfigError::UnknownKey(child)),
                        Some((kind, unit)) => {
                            if !kind.matches(sub) {
                                return Err(ConfigError::TypeMismatch {
                                    key: child,
                                    expected: kind.name(),
                                    unit,
                                    got: toml_type_name(sub),
                                });
                            }
                        }
                    }
                }
            }
            Ok(())
        }
        _ => Err(ConfigError::Parse(format!(
            "expected a table at `{path}`"
        ))),
    }
}

fn merge(base: &mut toml::Value, overlay: toml::Value) {
    match (base, overlay) {
        (toml::Value::Table(base_table), toml::Value::Table(overlay_table)) => {
            for (key, value) in overlay_table {
                match base_table.get_mut(&key) {
                    Some(slot) if slot.is_table() && value.is_table() => merge(slot, value),
                    Some(slot) => *slot = value,
                    None => {
                        base_table.insert(key, value);
                    }
                }
            }
        }
        (slot, value) => *slot = value,
    }
}

fn parse_set(raw: &str) -> Result<toml::Value, ConfigError> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| ConfigError::Parse(format!("--set expects key=value, got {raw:?}")))?;
    let key = key.trim();
    let value = value.trim();
    if key.is_empty() {
        return Err(ConfigError::Parse(format!("--set has an empty key: {raw:?}")));
    }
    let doc = format!("{key} = {value}");
    match toml::from_str::<toml::Value>(&doc) {
        Ok(v) => Ok(v),
        // Bare words are not valid TOML; requote so the registry can
        // report the type mismatch with the key and unit.
        Err(_) => {
            let quoted = format!("{key} = {:?}", value);
            toml::from_str::<toml::Value>(&quoted)
                .map_err(|e| ConfigError::Parse(format!("invalid --set {raw:?}: {e}")))
        }
    }
}

/// Layered resolution: defaults <- config file <- --set overrides.
pub fn load(path: Option<&Path>, sets: &[String]) -> Result<RunConfig, ConfigError> {
    let mut tree = toml::Value::Table(toml::map::Map::new());
    if let Some(path) = path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        let parsed: toml::Value =
            toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        merge(&mut tree, parsed);
    }
    for raw in sets {
        merge(&mut tree, parse_set(raw)?);
    }
    validate_tree(&tree, "")?;
    let config: RunConfig = tree
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

/// Evenly spaced grid including both endpoints.
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_resolution_is_the_calibrated_default() {
        let config = load(None, &[]).unwrap();
        assert_eq!(config, RunConfig::default());
        assert_eq!(config.model.v_star, 10.49);
        assert_eq!(config.model.dt, 1.0 / 6.0);
        assert_eq!(config.model.gamma, 0.7_f64.sqrt());
        assert_eq!(config.model.horizon, 7);
        assert_eq!(config.model.lambda, 200.0);
        assert_eq!(config.model.grid_points, 41);
        assert_eq!((config.model.u_min, config.model.u_max), (-6.0, 4.0));
        assert_eq!(config.model.vehicle_length, 3.9);
        assert_eq!((config.ring.n, config.ring.c), (28, 314.0));
    }

    #[test]
    fn single_override_changes_only_that_field() {
        let config = load(None, &["model.v_star=9.0".into()]).unwrap();
        let mut want = RunConfig::default();
        want.model.v_star = 9.0;
        assert_eq!(config, want);
    }

    #[test]
    fn unknown_key_is_an_error_naming_the_key() {
        let err = load(None, &["model.kappa9=1.0".into()]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("kappa9"), "{msg}");
        let err = load(None, &["kappa9=1.0".into()]).unwrap_err();
        assert!(err.to_string().contains("kappa9"));
    }

    #[test]
    fn type_mismatch_reports_key_and_unit() {
        let err = load(None, &["model.v_star=fast".into()]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("model.v_star"), "{msg}");
        assert!(msg.contains("m/s"), "{msg}");
        assert!(msg.contains("float"), "{msg}");
    }

    #[test]
    fn integers_coerce_to_float_fields() {
        let config = load(None, &["model.v_star=9".into()]).unwrap();
        assert_eq!(config.model.v_star, 9.0);
    }

    #[test]
    fn array_override_parses() {
        let config = load(None, &["sweep.kick_strengths=[-1.0,-2.0]".into()]).unwrap();
        assert_eq!(config.sweep.kick_strengths, vec![-1.0, -2.0]);
    }

    #[test]
    fn rho_overrides_circumference() {
        let config = load(None, &["ring.rho=0.1".into(), "ring.n=30".into()]).unwrap();
        assert_eq!(config.ring.circumference(), 300.0);
    }

    #[test]
    fn echo_round_trips_through_toml() {
        let config = load(None, &["model.v_star=9.5".into()]).unwrap();
        let echoed = config.to_toml_string();
        let reparsed: RunConfig = toml::from_str(&echoed).unwrap();
        assert_eq!(config, reparsed);
    }

    #[test]
    fn registry_covers_every_default_leaf() {
        // Serialize the default config and walk it: every leaf must be a
        // registered key, so diagnostics can never miss a real field.
        let tree: toml::Value = toml::from_str(&RunConfig::default().to_toml_string()).unwrap();
        validate_tree(&tree, "").unwrap();
    }

    #[test]
    fn kick_vehicle_bounds_are_validated() {
        let err = load(None, &["sim.kick_vehicle=0".into()]).unwrap_err();
        assert!(err.to_string().contains("kick_vehicle"));
        let err = load(None, &["sim.kick_vehicle=29".into()]).unwrap_err();
        assert!(err.to_string().contains("kick_vehicle"));
    }
}
