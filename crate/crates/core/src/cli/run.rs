//! Task execution and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ConfigError, Protocol, RunConfig, Task};
use super::output::{write_json, Table};
use crate::error::Error;
use crate::model::{exact_sector_minima, ModelParams};
use crate::mps::{lift_op, product_state, MpsState};
use crate::polaron::{bound_state_energies, solve_polaron_with, ModeBasis, PolaronRecord, SolverOptions};
use crate::quench::{channel_decomposition, emission_events, evolve, ChannelRecord, EmissionEvents, EvolveOptions, SegmentStats};
use crate::spectrum::{find_eigenstate, find_spectrum, EigenRecord, EigenSummary, Label};

pub const MANIFEST: &str = "manifest.json";
pub const ERROR_RECORD: &str = "error.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    /// Written before the task starts; left in place if the run dies.
    Incomplete,
    Complete,
    /// Finished, but an oracle comparison fell outside its tolerance.
    ChecksFailed,
}

/// Everything needed to reproduce the numbers of an output directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub program: String,
    pub code_version: String,
    pub status: Status,
    pub task: Task,
    pub seed: u64,
    pub config: RunConfig,
    pub files: Vec<String>,
    pub warnings: Vec<String>,
}

/// Machine-readable failure, written as `error.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub status: String,
    pub kind: String,
    pub path: Option<String>,
    pub message: String,
}

impl ErrorRecord {
    pub fn from_error(e: &anyhow::Error) -> Self {
        let (kind, path) = if let Some(c) = e.downcast_ref::<ConfigError>() {
            ("config", Some(c.path.clone()))
        } else if let Some(m) = e.downcast_ref::<Error>() {
            match m {
                Error::InvalidParam { field, .. } => ("invalid-parameter", Some(field.clone())),
                Error::Io(_) => ("io", None),
                _ => ("numerics", None),
            }
        } else if e.downcast_ref::<std::io::Error>().is_some() {
            ("io", None)
        } else {
            ("runtime", None)
        };
        Self { status: "error".into(), kind: kind.into(), path, message: format!("{e:#}") }
    }
}

/// Result of a finished run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: Status,
    pub dir: PathBuf,
    pub files: Vec<String>,
    pub warnings: Vec<String>,
}

/// Worker count from `VQ_THREADS`, or the machine's parallelism.
pub fn thread_count() -> Result<usize> {
    match std::env::var("VQ_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(anyhow!(ConfigError::new("VQ_THREADS", format!("must be a positive integer, got {v:?}")))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

#[derive(Default)]
struct Sink {
    files: Vec<String>,
    warnings: Vec<String>,
    checks_failed: bool,
}

impl Sink {
    fn add(&mut self, name: &str) {
        self.files.push(name.to_string());
    }
}

fn manifest(cfg: &RunConfig, status: Status, sink: &Sink) -> Manifest {
    Manifest {
        program: env!("CARGO_PKG_NAME").into(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        status,
        task: cfg.task,
        seed: cfg.numerics.seed,
        config: cfg.clone(),
        files: sink.files.clone(),
        warnings: sink.warnings.clone(),
    }
}

/// Runs the configured task into `cfg.output_dir`. On failure the manifest
/// stays marked incomplete and `error.json` describes the error.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    let stale = dir.join(ERROR_RECORD);
    if stale.exists() {
        fs::remove_file(&stale)?;
    }
    let mut sink = Sink::default();
    write_json(&dir, MANIFEST, &manifest(cfg, Status::Incomplete, &sink))?;
    let result = thread_count().and_then(|n| Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?)).and_then(|pool| {
        pool.install(|| match cfg.task {
            Task::PolaronSweep => polaron_sweep(cfg, &dir, &mut sink),
            Task::Spectrum => spectrum(cfg, &dir, &mut sink),
            Task::Quench => quench(cfg, &dir, &mut sink),
            Task::OracleCheck => oracle(cfg, &dir, &mut sink),
        })
    });
    if let Err(e) = result {
        write_json(&dir, ERROR_RECORD, &ErrorRecord::from_error(&e))?;
        write_json(&dir, MANIFEST, &manifest(cfg, Status::Incomplete, &sink))?;
        return Err(e);
    }
    let status = if sink.checks_failed { Status::ChecksFailed } else { Status::Complete };
    write_json(&dir, MANIFEST, &manifest(cfg, status, &sink))?;
    Ok(RunOutcome { status, dir, files: sink.files, warnings: sink.warnings })
}

fn polaron_record(params: &ModelParams) -> Result<PolaronRecord> {
    let sol = solve_polaron_with(params, &SolverOptions::default())?;
    Ok(PolaronRecord::from_solution(&sol)?)
}

fn polaron_sweep(cfg: &RunConfig, dir: &Path, sink: &mut Sink) -> Result<()> {
    let rows: Vec<PolaronRecord> = cfg
        .couplings()
        .par_iter()
        .map(|&g| polaron_record(&cfg.model.with_g(g)).with_context(|| format!("polaron solution at g = {g}")))
        .collect::<Result<_>>()?;
    let mut t = Table::new(&["g", "delta_r", "p_e", "e_gs", "e1", "e2", "fidelity"]);
    for r in &rows {
        t.row(&[r.g, r.delta_r, r.p_e, r.e_gs, r.e1, r.e2, r.fidelity]);
    }
    t.write(dir, "polaron.csv")?;
    sink.add("polaron.csv");
    Ok(())
}

fn excited_population(r: &EigenRecord) -> Result<f64> {
    let q = r.params.qubit_site;
    Ok(r.state.expect_local(q, &lift_op(&r.state.spaces()[q].qubit_excited()))?)
}

/// MPS eigenstates at one coupling together with the polaron prediction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumPoint {
    pub g: f64,
    pub states: Vec<EigenSummary>,
    /// `⟨GS|σ⁺σ⁻|GS⟩`.
    pub p_e: f64,
    pub polaron: PolaronRecord,
}

fn spectrum(cfg: &RunConfig, dir: &Path, sink: &mut Sink) -> Result<()> {
    let opts = cfg.numerics.search_options();
    let gs_list = cfg.couplings();
    let results: Vec<([EigenRecord; 3], PolaronRecord)> = gs_list
        .par_iter()
        .map(|&g| -> Result<_> {
            let p = cfg.model.with_g(g);
            let recs = find_spectrum(&p, &opts).with_context(|| format!("eigenstate search at g = {g}"))?;
            Ok((recs, polaron_record(&p).with_context(|| format!("polaron solution at g = {g}"))?))
        })
        .collect::<Result<_>>()?;

    let states_dir = dir.join("states");
    fs::create_dir_all(&states_dir)?;
    let mut points = Vec::new();
    let mut table = Table::new(&["g", "e_gs", "e1", "e2", "p_e", "polaron_e_gs", "polaron_e1", "polaron_e2", "polaron_p_e", "delta_r"]);
    let mut header = vec!["x".to_string()];
    for (i, (recs, pol)) in results.iter().enumerate() {
        for r in recs {
            let name = format!("g{i}_{}.mps", label_name(r.label));
            r.state.save(&states_dir.join(&name))?;
            sink.add(&format!("states/{name}"));
            header.push(format!("{}_g{}", label_name(r.label), gs_list[i]));
            for w in &r.diagnostics.warnings {
                sink.warnings.push(format!("g = {}, {:?}: {w}", gs_list[i], r.label));
            }
        }
        let p_e = excited_population(&recs[0])?;
        table.row(&[gs_list[i], recs[0].energy, recs[1].energy, recs[2].energy, p_e, pol.e_gs, pol.e1, pol.e2, pol.p_e, pol.delta_r]);
        points.push(SpectrumPoint {
            g: gs_list[i],
            states: recs.iter().map(|r| r.summary()).collect::<crate::Result<_>>()?,
            p_e,
            polaron: *pol,
        });
    }
    let mut profiles = Table::new(&header);
    for x in 0..cfg.model.n_sites {
        let mut row = vec![x as f64];
        row.extend(results.iter().flat_map(|(recs, _)| recs.iter().map(move |r| r.n_x_profile[x])));
        profiles.row(&row);
    }
    write_json(dir, "spectrum.json", &points)?;
    table.write(dir, "spectrum.csv")?;
    profiles.write(dir, "profiles.csv")?;
    sink.files.extend(["spectrum.json", "spectrum.csv", "profiles.csv"].map(String::from));
    Ok(())
}

fn label_name(l: Label) -> &'static str {
    match l {
        Label::Gs => "GS",
        Label::E1 => "E1",
        Label::E2 => "E2",
    }
}

/// Contents of `channels.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelReport {
    pub core_radius: usize,
    pub records: Vec<ChannelRecord>,
    /// Coupling protocol only: the two packets released around `t_off`.
    pub emission: Option<EmissionEvents>,
    pub segments: Vec<SegmentStats>,
    pub max_step_norm_correction: f64,
}

fn quench(cfg: &RunConfig, dir: &Path, sink: &mut Sink) -> Result<()> {
    let sc = cfg.schedule.as_ref().ok_or_else(|| ConfigError::new("schedule", "a quench needs a schedule"))?;
    let schedule = cfg.schedule().expect("schedule present");
    let num = &cfg.numerics;
    let model = cfg.model;
    let initial: MpsState = match sc.protocol {
        Protocol::Coupling | Protocol::Custom => product_state(&model, num.n_max, &vec![0; model.n_sites], num.d_max)?,
        Protocol::Detuning => {
            let far = model.with_delta(sc.delta_far);
            let gs = find_eigenstate(&far, &num.search_options(), Label::Gs, &[])
                .with_context(|| format!("ground state at delta_far = {}", sc.delta_far))?;
            gs.state.convert()
        }
    };
    let t_off = schedule.t_off();
    let mut snapshot_times = sc.snapshots.clone();
    let emission_at = match (sc.protocol, t_off) {
        (Protocol::Coupling, Some(t)) => Some(t),
        _ => None,
    };
    if let Some(t) = emission_at {
        if !snapshot_times.contains(&t) {
            snapshot_times.push(t);
        }
    }
    let opts = EvolveOptions {
        n_max: num.n_max,
        d_max: num.d_max,
        svd_tol: num.svd_tol,
        order: num.order(),
        sample_every: sc.sample_every,
        snapshot_times,
        ..Default::default()
    };
    let ev = evolve(&initial, &schedule, &model, &opts).context("real-time evolution")?;
    let s = &ev.series;
    sink.warnings.extend(s.warnings.iter().cloned());

    let mut header = vec!["t".to_string()];
    header.extend((0..model.n_sites).map(|x| format!("n_{x}")));
    let mut nx = Table::new(&header);
    let mut scalars = Table::new(&["t", "p_qb", "energy", "parity", "norm_correction", "max_bond"]);
    for i in 0..s.times.len() {
        let mut row = vec![s.times[i]];
        row.extend(&s.n_x[i]);
        nx.row(&row);
        scalars.row(&[s.times[i], s.p_qb[i], s.energy[i], s.parity[i], s.norm_correction[i], s.max_bond[i] as f64]);
    }
    nx.write(dir, "nx.csv")?;
    scalars.write(dir, "scalars.csv")?;
    sink.files.extend(["nx.csv", "scalars.csv"].map(String::from));

    // eigenstates of the Hamiltonian the state evolves under at each snapshot
    let mut spectra: Vec<(ModelParams, [EigenRecord; 3])> = Vec::new();
    let mut records = Vec::new();
    for &t in &sc.snapshots {
        let seg = schedule.segments.iter().rposition(|g| g.t_start < t).unwrap_or(0);
        let p = schedule.params_for(&model, seg);
        if !spectra.iter().any(|(q, _)| *q == p) {
            let recs = find_spectrum(&p, &num.search_options()).with_context(|| format!("eigenstates for the snapshot at t = {t}"))?;
            spectra.push((p, recs));
        }
        let (_, [gs, e1, e2]) = spectra.iter().find(|(q, _)| *q == p).unwrap();
        let state = &ev.snapshots.iter().find(|(u, _)| *u == t).expect("snapshot recorded").1;
        records.push(channel_decomposition(t, state, &p, gs, e1, e2, sc.core_radius).with_context(|| format!("channels at t = {t}"))?);
    }
    let emission = match emission_at {
        Some(t) => {
            let state = &ev.snapshots.iter().find(|(u, _)| *u == t).expect("snapshot recorded").1;
            Some(emission_events(state, &model, t, sc.core_radius, schedule.t_end - t, sc.emission_samples)?)
        }
        None => None,
    };
    let report = ChannelReport {
        core_radius: sc.core_radius,
        records,
        emission,
        segments: s.segments.clone(),
        max_step_norm_correction: s.max_step_norm_correction,
    };
    write_json(dir, "channels.json", &report)?;
    sink.add("channels.json");
    ev.final_state.save(&dir.join("final.mps"))?;
    sink.add("final.mps");
    Ok(())
}

/// One reference-versus-value comparison of an oracle check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub quantity: String,
    pub reference: f64,
    pub value: f64,
    pub delta: f64,
    /// `None` for comparisons reported without a pass criterion.
    pub tolerance: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleReport {
    pub rows: Vec<OracleRow>,
    pub all_pass: bool,
}

/// MPS energies against exact diagonalization and the polaron ground energy
/// as an upper bound of the exact one.
pub fn oracle_report(params: &ModelParams, cfg: &RunConfig) -> Result<OracleReport> {
    let ed = exact_sector_minima(params, cfg.numerics.n_max).context("exact diagonalization")?;
    let [gs, e1, e2] = find_spectrum(params, &cfg.numerics.search_options()).context("eigenstate search")?;
    // standing waves: the chain the exact Hamiltonian lives on
    let sol = solve_polaron_with(params, &SolverOptions { basis: ModeBasis::OpenChain, ..Default::default() })?;
    let (p1, p2) = bound_state_energies(&sol)?;
    let row = |q: &str, reference: f64, value: f64, tol: Option<f64>| OracleRow {
        quantity: q.into(),
        reference,
        value,
        delta: value - reference,
        tolerance: tol,
        pass: tol.is_none_or(|t| (value - reference).abs() <= t),
    };
    let mut rows = vec![
        row("mps_gs_vs_ed", ed.ground, gs.energy, Some(1e-6)),
        row("mps_even_vs_ed_even", ed.even, gs.energy, Some(1e-6)),
        row("mps_e1_vs_ed_odd", ed.odd, e1.energy, Some(1e-6)),
    ];
    if let Some(second) = ed.second_even {
        rows.push(row("mps_e2_vs_ed_second_even", second, e2.energy, None));
        rows.push(row("polaron_e2_vs_ed_second_even", second, p2, None));
    }
    rows.push(row("polaron_e1_vs_ed_odd", ed.odd, p1, None));
    let gap = sol.e_gs - ed.ground;
    rows.push(OracleRow {
        quantity: "polaron_gs_upper_bound".into(),
        reference: ed.ground,
        value: sol.e_gs,
        delta: gap,
        tolerance: Some(5e-3),
        pass: gap >= -1e-10 && gap <= 5e-3,
    });
    let all_pass = rows.iter().all(|r| r.pass);
    Ok(OracleReport { rows, all_pass })
}

fn oracle(cfg: &RunConfig, dir: &Path, sink: &mut Sink) -> Result<()> {
    let reports: Vec<(f64, OracleReport)> = cfg
        .couplings()
        .par_iter()
        .map(|&g| Ok((g, oracle_report(&cfg.model.with_g(g), cfg).with_context(|| format!("oracle check at g = {g}"))?)))
        .collect::<Result<_>>()?;
    for (g, r) in &reports {
        if !r.all_pass {
            sink.checks_failed = true;
            for row in r.rows.iter().filter(|r| !r.pass) {
                sink.warnings.push(format!("g = {g}: {} off by {:.3e}", row.quantity, row.delta));
            }
        }
    }
    let json: Vec<_> = reports.iter().map(|(g, r)| serde_json::json!({ "g": g, "report": r })).collect();
    write_json(dir, "oracle.json", &json)?;
    sink.add("oracle.json");
    Ok(())
}

/// Reads the manifest of a finished or failed run.
pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Human-readable summary of an output directory.
pub fn report(dir: &Path) -> Result<String> {
    let m = read_manifest(dir)?;
    let mut out = format!("{} {} task {} status {:?} seed {}\n", m.program, m.code_version, m.task.name(), m.status, m.seed);
    let c = &m.config;
    out += &format!(
        "model: omega {} j_hop {} n_sites {} delta {} g {} qubit_site {}\n",
        c.model.omega, c.model.j_hop, c.model.n_sites, c.model.delta, c.model.g, c.model.qubit_site
    );
    out += &format!("numerics: n_max {} d_max {} svd_tol {} dt {}\n", c.numerics.n_max, c.numerics.d_max, c.numerics.svd_tol, c.numerics.dt);
    for f in &m.files {
        let exists = dir.join(f).exists();
        out += &format!("  {f}{}\n", if exists { "" } else { " (missing)" });
    }
    for w in &m.warnings {
        out += &format!("warning: {w}\n");
    }
    if let Ok(text) = fs::read_to_string(dir.join(ERROR_RECORD)) {
        let e: ErrorRecord = serde_json::from_str(&text)?;
        out += &format!("error ({}): {}\n", e.kind, e.message);
    }
    Ok(out)
}
