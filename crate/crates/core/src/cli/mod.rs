//! Configuration, orchestration and file output of the `vq` tool.

mod config;
mod output;
mod run;

pub use config::{apply_override, document, parse_config, resolve, ConfigError, Numerics, Protocol, RunConfig, ScheduleConfig, Task};
pub use output::{fmt_f64, write_atomic, write_json, Table};
pub use run::{
    oracle_report, read_manifest, report, run, thread_count, ChannelReport, ErrorRecord, Manifest, OracleReport, OracleRow,
    RunOutcome, SpectrumPoint, Status, ERROR_RECORD, MANIFEST,
};

use std::path::{Path, PathBuf};

/// Command-line inputs layered over the config document, in this order:
/// file, `--override` pairs, `--seed`, `--out`.
#[derive(Debug, Clone, Default)]
pub struct Invocation {
    pub config: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Builds the run configuration for `task`. A `task` key in the document
/// must agree with the subcommand.
pub fn load(task: Task, inv: &Invocation) -> Result<RunConfig, ConfigError> {
    let text = match &inv.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| ConfigError::new("", format!("reading {}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut doc = document(&text)?;
    for kv in &inv.overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| ConfigError::new(kv.as_str(), "override must look like key=value"))?;
        apply_override(&mut doc, k.trim(), v.trim())?;
    }
    if let Some(seed) = inv.seed {
        apply_override(&mut doc, "numerics.seed", &seed.to_string())?;
    }
    if let Some(out) = &inv.out {
        let obj = doc.as_object_mut().expect("document is an object");
        obj.insert("output_dir".into(), serde_json::Value::String(path_text(out)?));
    }
    let obj = doc.as_object_mut().expect("document is an object");
    match obj.get("task").and_then(|v| v.as_str()) {
        Some(t) if t != task.name() => {
            return Err(ConfigError::new("task", format!("the document asks for {t} but the subcommand runs {}", task.name())));
        }
        _ => {
            obj.entry("task").or_insert_with(|| task.name().into());
        }
    }
    resolve(doc)
}

fn path_text(p: &Path) -> Result<String, ConfigError> {
    p.to_str().map(String::from).ok_or_else(|| ConfigError::new("output_dir", "path is not valid UTF-8"))
}
