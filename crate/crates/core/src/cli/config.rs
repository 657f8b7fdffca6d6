//! Strict JSON run configuration. Every key is optional except `task`;
//! unknown keys and out-of-range values are rejected with the dotted path of
//! the offending field.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Error;
use crate::model::ModelParams;
use crate::mps::TrotterOrder;
use crate::quench::{QuenchSchedule, Segment};
use crate::spectrum::SearchOptions;

/// A rejected configuration, with the dotted path of the field at fault.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { path: path.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

// Library errors name the bare field; qualify it with its section.
fn qualify(section: &str, e: Error) -> ConfigError {
    match e {
        Error::InvalidParam { field, reason } if field.starts_with(section) => ConfigError::new(field, reason),
        Error::InvalidParam { field, reason } => ConfigError::new(format!("{section}.{field}"), reason),
        other => ConfigError::new(section, other.to_string()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    PolaronSweep,
    Spectrum,
    Quench,
    OracleCheck,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::PolaronSweep => "polaron-sweep",
            Task::Spectrum => "spectrum",
            Task::Quench => "quench",
            Task::OracleCheck => "oracle-check",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// `g` on at `t = 0`, off at `t_off`, starting from the bare vacuum.
    Coupling,
    /// `Δ` from `delta_far` to `model.delta` at `t = 0` and back at `t_off`,
    /// starting from the ground state at `delta_far`.
    Detuning,
    /// Explicit segments, starting from the bare vacuum.
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Numerics {
    pub n_max: usize,
    pub d_max: usize,
    pub svd_tol: f64,
    /// Real-time step.
    pub dt: f64,
    pub trotter_order: u8,
    /// Imaginary-time convergence threshold on `|ΔE| / Δτ`.
    pub energy_tol: f64,
    pub seed: u64,
    /// Imaginary-time steps of the eigenstate search, used in order.
    pub imag_dt: Vec<f64>,
    pub max_imag_time: f64,
    pub n_cut: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        let s = SearchOptions::default();
        Self {
            n_max: s.n_max,
            d_max: s.d_max,
            svd_tol: s.svd_tol,
            dt: 0.05,
            trotter_order: 2,
            energy_tol: s.energy_tol,
            seed: 0,
            imag_dt: s.dt_schedule,
            max_imag_time: s.max_time_per_stage,
            n_cut: s.n_cut,
        }
    }
}

impl Numerics {
    pub fn order(&self) -> TrotterOrder {
        if self.trotter_order == 4 { TrotterOrder::Fourth } else { TrotterOrder::Second }
    }

    pub fn search_options(&self) -> SearchOptions {
        SearchOptions {
            n_max: self.n_max,
            d_max: self.d_max,
            svd_tol: self.svd_tol,
            dt_schedule: self.imag_dt.clone(),
            energy_tol: self.energy_tol,
            max_time_per_stage: self.max_imag_time,
            order: self.order(),
            seed: self.seed,
            n_cut: self.n_cut,
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let path = |f: &str| format!("numerics.{f}");
        if self.n_max < 1 {
            return Err(ConfigError::new(path("n_max"), "must be >= 1"));
        }
        if self.d_max < 1 {
            return Err(ConfigError::new(path("d_max"), "must be >= 1"));
        }
        if !(self.svd_tol >= 0.0 && self.svd_tol < 1.0) {
            return Err(ConfigError::new(path("svd_tol"), format!("must lie in [0, 1), got {}", self.svd_tol)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ConfigError::new(path("dt"), format!("must be > 0, got {}", self.dt)));
        }
        if self.trotter_order != 2 && self.trotter_order != 4 {
            return Err(ConfigError::new(path("trotter_order"), format!("must be 2 or 4, got {}", self.trotter_order)));
        }
        if !(self.energy_tol > 0.0 && self.energy_tol.is_finite()) {
            return Err(ConfigError::new(path("energy_tol"), format!("must be > 0, got {}", self.energy_tol)));
        }
        if self.imag_dt.is_empty() {
            return Err(ConfigError::new(path("imag_dt"), "needs at least one step"));
        }
        for (i, d) in self.imag_dt.iter().enumerate() {
            if !(*d > 0.0 && d.is_finite()) {
                return Err(ConfigError::new(format!("numerics.imag_dt[{i}]"), format!("must be > 0, got {d}")));
            }
        }
        if !(self.max_imag_time > 0.0 && self.max_imag_time.is_finite()) {
            return Err(ConfigError::new(path("max_imag_time"), "must be > 0"));
        }
        if self.n_cut < 1 {
            return Err(ConfigError::new(path("n_cut"), "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub protocol: Protocol,
    pub t_off: f64,
    pub t_end: f64,
    pub delta_far: f64,
    /// Only for the custom protocol.
    pub segments: Vec<Segment>,
    pub sample_every: usize,
    /// Times at which the channel decomposition is evaluated.
    pub snapshots: Vec<f64>,
    pub core_radius: usize,
    /// Number of free-flight samples of the emission-event analysis.
    pub emission_samples: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            protocol: Protocol::Coupling,
            t_off: 30.0,
            t_end: 55.0,
            delta_far: 10.0,
            segments: Vec::new(),
            sample_every: 10,
            snapshots: Vec::new(),
            core_radius: 10,
            emission_samples: 11,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self, model: &ModelParams, dt: f64) -> QuenchSchedule {
        match self.protocol {
            Protocol::Coupling => QuenchSchedule::coupling(model.g, model.delta, self.t_off, self.t_end, dt),
            Protocol::Detuning => QuenchSchedule::detuning(model.g, model.delta, self.delta_far, self.t_off, self.t_end, dt),
            Protocol::Custom => QuenchSchedule { segments: self.segments.clone(), t_end: self.t_end, dt },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: Task,
    pub model: ModelParams,
    pub numerics: Numerics,
    /// Required for quench runs; defaults to the coupling protocol.
    pub schedule: Option<ScheduleConfig>,
    /// Couplings of a sweep; a single point at `model.g` when absent.
    pub g_values: Option<Vec<f64>>,
    pub output_dir: PathBuf,
}

impl RunConfig {
    /// Couplings visited by sweeping tasks.
    pub fn couplings(&self) -> Vec<f64> {
        match (&self.g_values, self.task) {
            (Some(v), _) => v.clone(),
            (None, Task::PolaronSweep) => (0..=10).map(|i| 0.05 * i as f64).collect(),
            (None, _) => vec![self.model.g],
        }
    }

    pub fn schedule(&self) -> Option<QuenchSchedule> {
        self.schedule.as_ref().map(|s| s.build(&self.model, self.numerics.dt))
    }
}

// Raw document: every field optional so defaults can be filled in afterwards.

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    task: Option<Task>,
    model: Option<RawModel>,
    numerics: Option<RawNumerics>,
    schedule: Option<RawSchedule>,
    sweep: Option<RawSweep>,
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    omega: Option<f64>,
    j_hop: Option<f64>,
    n_sites: Option<usize>,
    delta: Option<f64>,
    g: Option<f64>,
    qubit_site: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNumerics {
    n_max: Option<usize>,
    d_max: Option<usize>,
    svd_tol: Option<f64>,
    dt: Option<f64>,
    trotter_order: Option<u8>,
    energy_tol: Option<f64>,
    seed: Option<u64>,
    imag_dt: Option<Vec<f64>>,
    max_imag_time: Option<f64>,
    n_cut: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    protocol: Option<Protocol>,
    t_off: Option<f64>,
    t_end: Option<f64>,
    delta_far: Option<f64>,
    segments: Option<Vec<Segment>>,
    sample_every: Option<usize>,
    snapshots: Option<Vec<f64>>,
    core_radius: Option<usize>,
    emission_samples: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    g_values: Option<Vec<f64>>,
    g_start: Option<f64>,
    g_stop: Option<f64>,
    g_step: Option<f64>,
}

/// Parses a configuration document; an empty document counts as `{}`.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    resolve(document(text)?)
}

/// Reads the document into a JSON tree.
pub fn document(text: &str) -> Result<Value, ConfigError> {
    if text.trim().is_empty() {
        return Ok(Value::Object(Default::default()));
    }
    let doc: Value = serde_json::from_str(text)
        .map_err(|e| ConfigError::new("", format!("malformed JSON at line {}, column {}: {e}", e.line(), e.column())))?;
    if !doc.is_object() {
        return Err(ConfigError::new("", "the document must be a JSON object"));
    }
    Ok(doc)
}

/// Sets `key` (dotted path) to `value`, parsed as JSON when possible and as a
/// string otherwise. Intermediate objects are created as needed.
pub fn apply_override(doc: &mut Value, key: &str, value: &str) -> Result<(), ConfigError> {
    let parsed = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::new(key, "malformed override key"));
    }
    let mut node = doc;
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| ConfigError::new(parts[..i].join("."), "cannot override inside a non-object value"))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), parsed);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

/// Type-checks the document and fills in defaults.
pub fn resolve(doc: Value) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = serde_path_to_error::deserialize(doc).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { String::new() } else { path };
        ConfigError::new(path, e.into_inner().to_string())
    })?;
    let task = raw.task.ok_or_else(|| ConfigError::new("task", "missing required field (polaron-sweep, spectrum, quench or oracle-check)"))?;

    let m = raw.model.unwrap_or_default();
    let base = ModelParams::default();
    let n_sites = m.n_sites.unwrap_or(base.n_sites);
    let model = ModelParams {
        omega: m.omega.unwrap_or(base.omega),
        j_hop: m.j_hop.unwrap_or(base.j_hop),
        n_sites,
        delta: m.delta.unwrap_or(base.delta),
        g: m.g.unwrap_or(base.g),
        qubit_site: m.qubit_site.unwrap_or(n_sites / 2),
    };
    model.validate().map_err(|e| qualify("model", e))?;

    let n = raw.numerics.unwrap_or_default();
    let d = Numerics::default();
    let numerics = Numerics {
        n_max: n.n_max.unwrap_or(d.n_max),
        d_max: n.d_max.unwrap_or(d.d_max),
        svd_tol: n.svd_tol.unwrap_or(d.svd_tol),
        dt: n.dt.unwrap_or(d.dt),
        trotter_order: n.trotter_order.unwrap_or(d.trotter_order),
        energy_tol: n.energy_tol.unwrap_or(d.energy_tol),
        seed: n.seed.unwrap_or(d.seed),
        imag_dt: n.imag_dt.unwrap_or(d.imag_dt),
        max_imag_time: n.max_imag_time.unwrap_or(d.max_imag_time),
        n_cut: n.n_cut.unwrap_or(d.n_cut),
    };
    numerics.validate()?;

    let schedule = match (raw.schedule, task) {
        (Some(s), _) => Some(resolve_schedule(s)?),
        (None, Task::Quench) => Some(ScheduleConfig::default()),
        (None, _) => None,
    };
    let cfg = RunConfig {
        task,
        model,
        numerics,
        schedule,
        g_values: raw.sweep.map(resolve_sweep).transpose()?,
        output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("out")),
    };
    if cfg.output_dir.as_os_str().is_empty() {
        return Err(ConfigError::new("output_dir", "must not be empty"));
    }
    for (i, g) in cfg.g_values.iter().flatten().enumerate() {
        model.with_g(*g).validate().map_err(|_| ConfigError::new(format!("sweep.g_values[{i}]"), format!("must be finite and >= 0, got {g}")))?;
    }
    if let Some(q) = cfg.schedule() {
        q.validate(&model).map_err(|e| match e {
            Error::InvalidParam { field, reason } if field == "schedule.dt" => ConfigError::new("numerics.dt", reason),
            e => qualify("schedule", e),
        })?;
        let s = cfg.schedule.as_ref().unwrap();
        for (i, t) in s.snapshots.iter().enumerate() {
            let k = t / q.dt;
            if !(0.0..=q.t_end).contains(t) || (k - k.round()).abs() > 1e-6 {
                return Err(ConfigError::new(format!("schedule.snapshots[{i}]"), format!("{t} must lie on the dt grid within [0, t_end]")));
            }
        }
    }
    Ok(cfg)
}

fn resolve_schedule(s: RawSchedule) -> Result<ScheduleConfig, ConfigError> {
    let d = ScheduleConfig::default();
    let protocol = s.protocol.unwrap_or(d.protocol);
    let custom = protocol == Protocol::Custom;
    if custom != s.segments.is_some() {
        let msg = if custom { "required by the custom protocol" } else { "only allowed with protocol = custom" };
        return Err(ConfigError::new("schedule.segments", msg));
    }
    if custom && s.t_off.is_some() {
        return Err(ConfigError::new("schedule.t_off", "the custom protocol takes its switching times from segments"));
    }
    let out = ScheduleConfig {
        protocol,
        t_off: s.t_off.unwrap_or(d.t_off),
        t_end: s.t_end.unwrap_or(d.t_end),
        delta_far: s.delta_far.unwrap_or(d.delta_far),
        segments: s.segments.unwrap_or_default(),
        sample_every: s.sample_every.unwrap_or(d.sample_every),
        snapshots: s.snapshots.unwrap_or_default(),
        core_radius: s.core_radius.unwrap_or(d.core_radius),
        emission_samples: s.emission_samples.unwrap_or(d.emission_samples),
    };
    if !custom && !(out.t_off > 0.0 && out.t_off < out.t_end) {
        return Err(ConfigError::new("schedule.t_off", format!("must lie in (0, t_end = {}), got {}", out.t_end, out.t_off)));
    }
    if !(out.delta_far >= 0.0 && out.delta_far.is_finite()) {
        return Err(ConfigError::new("schedule.delta_far", format!("must be >= 0, got {}", out.delta_far)));
    }
    if out.sample_every < 1 {
        return Err(ConfigError::new("schedule.sample_every", "must be >= 1"));
    }
    if out.emission_samples < 4 {
        return Err(ConfigError::new("schedule.emission_samples", "must be >= 4"));
    }
    Ok(out)
}

fn resolve_sweep(s: RawSweep) -> Result<Vec<f64>, ConfigError> {
    match (s.g_values, s.g_start, s.g_stop, s.g_step) {
        (Some(v), None, None, None) => {
            if v.is_empty() {
                return Err(ConfigError::new("sweep.g_values", "must not be empty"));
            }
            Ok(v)
        }
        (None, Some(a), Some(b), Some(h)) => {
            if !(h > 0.0 && a.is_finite() && b >= a) {
                return Err(ConfigError::new("sweep.g_step", "need g_step > 0 and g_stop >= g_start"));
            }
            let count = ((b - a) / h + 1e-9).floor() as usize + 1;
            if count > 100_000 {
                return Err(ConfigError::new("sweep.g_step", format!("{count} points is too many")));
            }
            // multiples of the step, so 0.05 · 7 is not accumulated as 0.35000000000000003
            Ok((0..count).map(|i| a + h * i as f64).collect())
        }
        _ => Err(ConfigError::new("sweep", "give either g_values or all of g_start, g_stop, g_step")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_needs_a_task() {
        let e = parse_config("").unwrap_err();
        assert_eq!(e.path, "task");
        let e = parse_config("{}").unwrap_err();
        assert_eq!(e.path, "task");
        let c = parse_config(r#"{"task": "polaron-sweep"}"#).unwrap();
        assert_eq!((c.model.omega, c.model.j_hop, c.model.delta, c.model.g), (1.0, 0.4, 0.3, 0.5));
        assert_eq!((c.numerics.n_max, c.numerics.d_max), (5, 20));
        assert_eq!(c.model.qubit_site, c.model.n_sites / 2);
        assert_eq!(c.couplings().len(), 11);
        assert!(c.schedule.is_none());
    }

    #[test]
    fn range_errors_name_the_field() {
        let e = parse_config(r#"{"task": "spectrum", "model": {"g": -0.1}}"#).unwrap_err();
        assert_eq!(e.path, "model.g");
        assert!(e.to_string().contains("-0.1"), "{e}");
        let e = parse_config(r#"{"task": "spectrum", "numerics": {"trotter_order": 3}}"#).unwrap_err();
        assert_eq!(e.path, "numerics.trotter_order");
        let e = parse_config(r#"{"task": "spectrum", "sweep": {"g_values": [0.1, -1]}}"#).unwrap_err();
        assert_eq!(e.path, "sweep.g_values[1]");
        let e = parse_config(r#"{"task": "quench", "model": {"n_sites": 20}, "numerics": {"dt": 0.5}}"#).unwrap_err();
        assert_eq!(e.path, "numerics.dt");
        let e = parse_config(r#"{"task": "quench", "schedule": {"t_off": 0.123}}"#).unwrap_err();
        assert_eq!(e.path, "schedule.segments[1].t_start");
    }

    #[test]
    fn unknown_keys_and_types_are_rejected_with_paths() {
        let e = parse_config(r#"{"task": "spectrum", "model": {"gg": 1}}"#).unwrap_err();
        assert_eq!(e.path, "model.gg");
        assert!(e.message.contains("unknown field"), "{e}");
        let e = parse_config(r#"{"task": "spectrum", "numerics": {"n_max": "five"}}"#).unwrap_err();
        assert_eq!(e.path, "numerics.n_max");
        let e = parse_config(r#"{"task": "fly"}"#).unwrap_err();
        assert_eq!(e.path, "task");
        let e = parse_config(r#"{"task": "quench", "schedule": {"protocol": "custom", "segments": [{"t_start": 0, "g": 1, "x": 2}]}}"#)
            .unwrap_err();
        assert!(e.path.starts_with("schedule.segments[0]"), "{e}");
        assert!(parse_config("[1]").is_err());
        assert!(parse_config("{").is_err());
    }

    #[test]
    fn full_size_spectrum_configuration_is_accepted() {
        let text = r#"{
            "task": "spectrum",
            "model": {"omega": 1.0, "j_hop": 0.4, "n_sites": 400, "delta": 0.3, "g": 0.5},
            "numerics": {"n_max": 5, "d_max": 20}
        }"#;
        let c = parse_config(text).unwrap();
        assert_eq!(c.model, ModelParams::new(1.0, 0.4, 400, 0.3, 0.5).unwrap());
        assert_eq!(c.couplings(), vec![0.5]);
    }

    #[test]
    fn overrides_edit_the_document() {
        let mut doc = document(r#"{"task": "quench"}"#).unwrap();
        apply_override(&mut doc, "model.g", "0.25").unwrap();
        apply_override(&mut doc, "schedule.protocol", "detuning").unwrap();
        apply_override(&mut doc, "model.n_sites", "24").unwrap();
        apply_override(&mut doc, "schedule.t_off", "5").unwrap();
        apply_override(&mut doc, "schedule.t_end", "10").unwrap();
        let c = resolve(doc.clone()).unwrap();
        assert_eq!(c.model.g, 0.25);
        assert_eq!(c.model.qubit_site, 12);
        let s = c.schedule().unwrap();
        assert_eq!(s.segments[0].delta, 0.3);
        assert_eq!(s.segments[1].delta, 10.0);
        assert!(apply_override(&mut doc, "model.g.x", "1").is_err());
        assert!(apply_override(&mut doc, "model..g", "1").is_err());
    }

    #[test]
    fn sweep_ranges() {
        let c = parse_config(r#"{"task": "polaron-sweep", "sweep": {"g_start": 0, "g_stop": 0.5, "g_step": 0.05}}"#).unwrap();
        let g = c.couplings();
        assert_eq!(g.len(), 11);
        assert_eq!(g[7], 0.05 * 7.0);
        let e = parse_config(r#"{"task": "polaron-sweep", "sweep": {"g_start": 0}}"#).unwrap_err();
        assert_eq!(e.path, "sweep");
    }

    #[test]
    fn schedule_sections() {
        let c = parse_config(r#"{"task": "quench", "model": {"n_sites": 96}}"#).unwrap();
        let s = c.schedule().unwrap();
        assert_eq!((s.t_off(), s.t_end), (Some(30.0), 55.0));
        let e = parse_config(r#"{"task": "quench", "schedule": {"protocol": "custom"}}"#).unwrap_err();
        assert_eq!(e.path, "schedule.segments");
        let e = parse_config(r#"{"task": "quench", "schedule": {"segments": []}}"#).unwrap_err();
        assert_eq!(e.path, "schedule.segments");
        let e = parse_config(r#"{"task": "quench", "schedule": {"snapshots": [0.01]}}"#).unwrap_err();
        assert_eq!(e.path, "schedule.snapshots[0]");
        let c = parse_config(
            r#"{"task": "quench", "schedule": {"protocol": "custom", "t_end": 2,
                "segments": [{"t_start": 0, "g": 0.5, "delta": 0.3}, {"t_start": 1, "g": 0.1, "delta": 0.3}]}}"#,
        )
        .unwrap();
        assert_eq!(c.schedule().unwrap().segments[1].g, 0.1);
    }
}
