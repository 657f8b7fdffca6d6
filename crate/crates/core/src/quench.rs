//! Coupling and detuning quenches: piecewise-constant real-time evolution,
//! sampled observables, the bound-state/propagating channel decomposition and
//! emitter time-series diagnostics.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use ndarray::{Array1, Array2};

use crate::linalg::{eigh_sym, Step};
use crate::model::{local_terms, site_spaces, ModelParams};
use crate::mps::{lift_op, MpsState, Tebd, TrotterOrder, DEFAULT_SVD_TOL};
use crate::spectrum::{parity_operator_for, EigenRecord, Label};

/// Hamiltonian parameters switched on at `t_start`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub t_start: f64,
    pub g: f64,
    pub delta: f64,
}

/// Piecewise-constant protocol; segment `i` runs until the next `t_start`
/// (the last until `t_end`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuenchSchedule {
    pub segments: Vec<Segment>,
    pub t_end: f64,
    pub dt: f64,
}

// tolerance for segment boundaries on the step grid, in units of dt
const GRID_TOL: f64 = 1e-6;

impl QuenchSchedule {
    /// Coupling switched on at `t = 0` and off at `t_off`.
    pub fn coupling(g: f64, delta: f64, t_off: f64, t_end: f64, dt: f64) -> Self {
        Self {
            segments: vec![Segment { t_start: 0.0, g, delta }, Segment { t_start: t_off, g: 0.0, delta }],
            t_end,
            dt,
        }
    }

    /// Constant coupling with the gap brought from `delta_far` to `delta` at
    /// `t = 0` and back at `t_off`; the run starts from the ground state at
    /// `delta_far`.
    pub fn detuning(g: f64, delta: f64, delta_far: f64, t_off: f64, t_end: f64, dt: f64) -> Self {
        Self {
            segments: vec![Segment { t_start: 0.0, g, delta }, Segment { t_start: t_off, g, delta: delta_far }],
            t_end,
            dt,
        }
    }

    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("schedule.dt", format!("must be positive, got {}", self.dt)));
        }
        let dt_cap = (0.1 / params.j_hop).min(0.1 / params.omega);
        if self.dt > dt_cap * (1.0 + 1e-12) {
            return Err(invalid("schedule.dt", format!("{} exceeds min(0.1/J, 0.1/Omega) = {dt_cap}", self.dt)));
        }
        let first = self.segments.first().ok_or_else(|| invalid("schedule.segments", "at least one segment needed"))?;
        if first.t_start != 0.0 {
            return Err(invalid("schedule.segments[0].t_start", "must be 0"));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(invalid("schedule.t_end", "must be positive"));
        }
        self.on_grid(self.t_end, "schedule.t_end")?;
        for (i, s) in self.segments.iter().enumerate() {
            let field = |f: &str| format!("schedule.segments[{i}].{f}");
            if i > 0 {
                if !(s.t_start > self.segments[i - 1].t_start) || s.t_start >= self.t_end {
                    return Err(invalid(&field("t_start"), "segments must be ordered and start before t_end"));
                }
                self.on_grid(s.t_start, &field("t_start"))?;
            }
            if !(s.g >= 0.0 && s.g.is_finite()) {
                return Err(invalid(&field("g"), format!("must be >= 0, got {}", s.g)));
            }
            if !(s.delta >= 0.0 && s.delta.is_finite()) {
                return Err(invalid(&field("delta"), format!("must be >= 0, got {}", s.delta)));
            }
        }
        Ok(())
    }

    fn on_grid(&self, t: f64, field: &str) -> Result<usize> {
        let k = t / self.dt;
        if (k - k.round()).abs() > GRID_TOL {
            return Err(invalid(field, format!("{t} is not a multiple of dt = {}", self.dt)));
        }
        Ok(k.round() as usize)
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// `[first, last)` step indices of each segment.
    pub fn step_ranges(&self) -> Vec<(usize, usize)> {
        let starts: Vec<usize> = self.segments.iter().map(|s| (s.t_start / self.dt).round() as usize).collect();
        (0..starts.len()).map(|i| (starts[i], starts.get(i + 1).copied().unwrap_or(self.n_steps()))).collect()
    }

    /// Start of the second segment, when there is one.
    pub fn t_off(&self) -> Option<f64> {
        self.segments.get(1).map(|s| s.t_start)
    }

    pub fn params_for(&self, base: &ModelParams, segment: usize) -> ModelParams {
        let s = self.segments[segment];
        base.with_g(s.g).with_delta(s.delta)
    }
}

/// Numerics of a real-time run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub n_max: usize,
    pub d_max: usize,
    pub svd_tol: f64,
    pub order: TrotterOrder,
    /// Observables are recorded every this many steps (and at segment ends).
    pub sample_every: usize,
    /// Discarded weight per step above which a saturation warning is raised.
    pub discard_warning: f64,
    /// Times at which the full state is kept for channel analysis.
    pub snapshot_times: Vec<f64>,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            n_max: 5,
            d_max: 20,
            svd_tol: DEFAULT_SVD_TOL,
            order: TrotterOrder::Second,
            sample_every: 10,
            discard_warning: 1e-6,
            snapshot_times: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentStats {
    pub t_start: f64,
    pub t_end: f64,
    pub energy_start: f64,
    /// `max_t |⟨H⟩(t) − ⟨H⟩(t_start)|` over the samples of the segment.
    pub max_energy_drift: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    /// `⟨a_x†a_x⟩`, one row per sample.
    pub n_x: Vec<Vec<f64>>,
    pub p_qb: Vec<f64>,
    pub energy: Vec<f64>,
    pub parity: Vec<f64>,
    /// Cumulative `1 − ‖ψ‖` removed by renormalization up to each sample.
    pub norm_correction: Vec<f64>,
    pub max_bond: Vec<usize>,
    pub segments: Vec<SegmentStats>,
    /// Largest norm correction of a single step.
    pub max_step_norm_correction: f64,
    pub warnings: Vec<String>,
    /// Channel records attached by the caller for the snapshot times.
    pub channel_weights: Vec<ChannelRecord>,
}

impl TimeSeries {
    /// Index of the last sample at or before `t`.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        self.times.iter().rposition(|&s| s <= t + 1e-9)
    }

    pub fn total_photons(&self, sample: usize) -> f64 {
        self.n_x[sample].iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub series: TimeSeries,
    /// `(t, state)` at each requested snapshot time.
    pub snapshots: Vec<(f64, MpsState)>,
    pub final_state: MpsState,
}

struct Probes {
    number: Vec<Array2<C64>>,
    excited: Array2<C64>,
    parity: crate::mps::ProductOperator<C64>,
}

fn record(series: &mut TimeSeries, psi: &MpsState, t: f64, probes: &Probes, bond_h: &[Array2<f64>], qubit: usize, cum: f64) -> Result<f64> {
    let n_x: Vec<f64> = psi.expect_each_site(&probes.number)?.into_iter().map(|v| v.re).collect();
    let e = psi.energy(bond_h)?;
    series.times.push(t);
    series.n_x.push(n_x);
    series.p_qb.push(psi.expect_local(qubit, &probes.excited)?.re);
    series.energy.push(e);
    series.parity.push(psi.expect_product(&probes.parity)?.re);
    series.norm_correction.push(cum);
    series.max_bond.push(psi.max_bond());
    Ok(e)
}

/// Real-time evolution of `initial` through `schedule`; gates are rebuilt at
/// every segment boundary.
pub fn evolve(initial: &MpsState, schedule: &QuenchSchedule, params: &ModelParams, opts: &EvolveOptions) -> Result<Evolution> {
    params.validate()?;
    schedule.validate(params)?;
    if opts.sample_every == 0 {
        return Err(invalid("sample_every", "must be >= 1"));
    }
    let spaces = site_spaces(params, opts.n_max);
    if initial.spaces() != spaces.as_slice() {
        return Err(Error::DimensionMismatch("initial state does not match the chain and n_max".into()));
    }
    if (initial.norm() - 1.0).abs() > 1e-8 {
        return Err(invalid("initial", format!("state must be normalized, norm = {}", initial.norm())));
    }
    let mut snap_steps = Vec::new();
    for &t in &opts.snapshot_times {
        if !(0.0..=schedule.t_end).contains(&t) {
            return Err(invalid("snapshot_times", format!("{t} lies outside [0, t_end]")));
        }
        snap_steps.push(schedule.on_grid(t, "snapshot_times")?);
    }
    let probes = Probes {
        number: spaces.iter().map(|s| lift_op(&s.number())).collect(),
        excited: lift_op(&spaces[params.qubit_site].qubit_excited()),
        parity: parity_operator_for(&spaces),
    };
    let mut psi = initial.clone();
    psi.d_max = opts.d_max;
    let mut series = TimeSeries::default();
    let mut snapshots = Vec::new();
    let mut cum = 0.0;
    let dt = schedule.dt;
    let mut saturated = false;
    for (seg, &(first, last)) in schedule.step_ranges().iter().enumerate() {
        let p = schedule.params_for(params, seg);
        p.validate()?;
        let mut tebd = Tebd::<C64>::from_terms(&local_terms(&p, opts.n_max)?, opts.order, opts.svd_tol);
        let bond_h = tebd.bond_hamiltonians().to_vec();
        let e0 = psi.energy(&bond_h)?;
        let mut stats = SegmentStats { t_start: first as f64 * dt, t_end: last as f64 * dt, energy_start: e0, max_energy_drift: 0.0 };
        if seg == 0 {
            record(&mut series, &psi, 0.0, &probes, &bond_h, params.qubit_site, cum)?;
            if snap_steps.contains(&0) {
                snapshots.push((0.0, psi.clone()));
            }
        }
        let mut step = first;
        while step < last {
            let next_sample = (step / opts.sample_every + 1) * opts.sample_every;
            let next_snap = snap_steps.iter().copied().filter(|&s| s > step).min().unwrap_or(usize::MAX);
            let stop = next_sample.min(next_snap).min(last);
            let n = stop - step;
            let rep = tebd.run(&mut psi, Step::Real(dt), n)?;
            for c in &rep.norm_corrections {
                cum += c;
                series.max_step_norm_correction = series.max_step_norm_correction.max(*c);
            }
            let per_step = rep.discarded / n as f64;
            if per_step > opts.discard_warning && psi.max_bond() >= opts.d_max && !saturated {
                saturated = true;
                series.warnings.push(format!(
                    "bond dimension saturated at t = {:.4} with discarded weight {per_step:.3e} per step",
                    stop as f64 * dt
                ));
            }
            step = stop;
            let t = step as f64 * dt;
            if step % opts.sample_every == 0 || step == last {
                let e = record(&mut series, &psi, t, &probes, &bond_h, params.qubit_site, cum)?;
                stats.max_energy_drift = stats.max_energy_drift.max((e - e0).abs());
            }
            if snap_steps.contains(&step) {
                snapshots.push((t, psi.clone()));
            }
        }
        series.segments.push(stats);
    }
    if !psi.is_finite() {
        return Err(Error::NormCollapse { norm: f64::NAN });
    }
    Ok(Evolution { series, snapshots, final_state: psi })
}

/// Overlaps of an evolved state with the bound states and the one- and
/// two-photon wavepacket profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRecord {
    pub t: f64,
    /// `⟨GS|Ψ⟩` as `[re, im]`.
    pub c00: [f64; 2],
    /// `⟨E2|Ψ⟩` as `[re, im]`.
    pub c02: [f64; 2],
    pub w00: f64,
    pub w02: f64,
    /// `n_x^(1) = |⟨Ψ|a_x†|E1⟩|²`.
    pub n1: Vec<f64>,
    /// `n_x^(2) = Σ_x' |⟨Ψ|a_x†a_x'†|GS⟩|²`: a two-photon Fock state on top
    /// of the vacuum gives back its own photon density.
    pub n2: Vec<f64>,
    /// `Σ_x n_x^(1)`.
    pub w1: f64,
    /// Two-photon channel weight `½ Σ_x n_x^(2)`.
    pub w2: f64,
    /// `⟨Ψ|a_x†a_x|Ψ⟩` at the snapshot.
    pub n_x: Vec<f64>,
    /// `1 − (w00 + w02 + w1 + w2)`, the weight of channels not listed.
    pub deficit: f64,
    /// Sites within this distance of the emitter form the bound-state core.
    pub core_radius: usize,
    /// `n_x^(2)` with the partner photon `x'` also outside the core.
    pub n2_emitted: Vec<f64>,
    /// `Σ_x n_x^(1)` over sites outside the core.
    pub w1_emitted: f64,
    /// `½ Σ_x n2_emitted[x]` over sites outside the core: both photons flying.
    pub w2_emitted: f64,
}

impl ChannelRecord {
    /// Emitted two-photon weight relative to all emitted-channel weight.
    pub fn two_photon_fraction(&self) -> f64 {
        let total = self.w1_emitted + self.w2_emitted;
        if total > 0.0 { self.w2_emitted / total } else { 0.0 }
    }
}

fn check_record(r: &EigenRecord, label: Label, params: &ModelParams) -> Result<()> {
    if r.label != label {
        return Err(invalid("channel_decomposition", format!("expected a {label:?} record, got {:?}", r.label)));
    }
    if r.params != *params {
        return Err(invalid(
            "channel_decomposition",
            format!("{label:?} was computed at g = {}, delta = {}, not at the state's g = {}, delta = {}", r.params.g, r.params.delta, params.g, params.delta),
        ));
    }
    Ok(())
}

/// Decomposes `state`, evolving under `params`, into the ground-state,
/// `E2`, one-photon-on-`E1` and two-photon-on-ground-state channels. The
/// emitted weights count photons farther than `core_radius` from the emitter.
pub fn channel_decomposition(
    t: f64,
    state: &MpsState,
    params: &ModelParams,
    gs: &EigenRecord,
    e1: &EigenRecord,
    e2: &EigenRecord,
    core_radius: usize,
) -> Result<ChannelRecord> {
    check_record(gs, Label::Gs, params)?;
    check_record(e1, Label::E1, params)?;
    check_record(e2, Label::E2, params)?;
    let gs_c: MpsState = gs.state.convert();
    let e1_c: MpsState = e1.state.convert();
    let e2_c: MpsState = e2.state.convert();
    let c00 = gs_c.overlap(state)?;
    let c02 = e2_c.overlap(state)?;
    let create: Vec<_> = state.spaces().iter().map(|s| lift_op::<C64>(&s.create())).collect();
    let n1: Vec<f64> = state.insertion_amplitudes(&e1_c, &create)?.iter().map(|a| a.norm_sqr()).collect();
    let pairs = state.pair_amplitudes(&gs_c, &create)?;
    let n2: Vec<f64> = pairs.rows().into_iter().map(|r| r.iter().map(|a| a.norm_sqr()).sum()).collect();
    let number: Vec<_> = state.spaces().iter().map(|s| lift_op::<C64>(&s.number())).collect();
    let n_x: Vec<f64> = state.expect_each_site(&number)?.into_iter().map(|v| v.re).collect();
    let (w00, w02) = (c00.norm_sqr(), c02.norm_sqr());
    let w1: f64 = n1.iter().sum();
    let w2: f64 = 0.5 * n2.iter().sum::<f64>();
    let outer: Vec<usize> = propagating_sites(params, core_radius);
    let n2_emitted: Vec<f64> = (0..params.n_sites).map(|x| outer.iter().map(|&y| pairs[[x, y]].norm_sqr()).sum()).collect();
    let w1_emitted: f64 = outer.iter().map(|&x| n1[x]).sum();
    let w2_emitted: f64 = 0.5 * outer.iter().map(|&x| n2_emitted[x]).sum::<f64>();
    Ok(ChannelRecord {
        t,
        c00: [c00.re, c00.im],
        c02: [c02.re, c02.im],
        w00,
        w02,
        n1,
        n2,
        w1,
        w2,
        n_x,
        deficit: 1.0 - (w00 + w02 + w1 + w2),
        core_radius,
        n2_emitted,
        w1_emitted,
        w2_emitted,
    })
}

/// Sites farther than `core_radius` from the emitter.
pub fn propagating_sites(params: &ModelParams, core_radius: usize) -> Vec<usize> {
    (0..params.n_sites).filter(|&x| x.abs_diff(params.qubit_site) > core_radius).collect()
}

/// `Σ_x |n_x − (n_x^(1) + n_x^(2))|` and `Σ_x n_x` over `sites`.
pub fn channel_residual(rec: &ChannelRecord, sites: &[usize]) -> (f64, f64) {
    let res = sites.iter().map(|&x| (rec.n_x[x] - rec.n1[x] - rec.n2[x]).abs()).sum();
    let tot = sites.iter().map(|&x| rec.n_x[x]).sum();
    (res, tot)
}

/// Emitter diagnostics of a coupling-quench run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QubitDiagnostics {
    /// Dominant angular frequency of `P_qb` on `(t_lo, t_off)`.
    pub peak_frequency: f64,
    /// `E2 − E_GS`.
    pub expected_frequency: f64,
    /// `2π / window length`.
    pub resolution: f64,
    pub frequency_error: f64,
    /// Variance of `P_qb` after `t_off`.
    pub frozen_variance: f64,
    pub frozen: bool,
}

/// Threshold on the post-quench variance of `P_qb`.
pub const FROZEN_VARIANCE: f64 = 1e-6;

/// Locates the periodogram peak of `P_qb(t)` on `(t_lo, t_off)` and measures
/// its variance after `t_off`.
pub fn qubit_series_checks(series: &TimeSeries, t_lo: f64, t_off: f64, gs: &EigenRecord, e2: &EigenRecord) -> Result<QubitDiagnostics> {
    let expected = e2.energy - gs.energy;
    if !(expected > 0.0) {
        return Err(invalid("e2", "E2 must lie above the ground state"));
    }
    let window: Vec<(f64, f64)> =
        series.times.iter().zip(&series.p_qb).filter(|(t, _)| **t > t_lo && **t < t_off).map(|(t, p)| (*t, *p)).collect();
    let length = match (window.first(), window.last()) {
        (Some(a), Some(b)) => b.0 - a.0,
        _ => 0.0,
    };
    let period = 2.0 * PI / expected;
    if window.len() < 8 || length < period {
        return Err(invalid(
            "window",
            format!("({t_lo}, {t_off}) holds {} samples over {length:.3}; need >= 8 samples over at least one period {period:.3}", window.len()),
        ));
    }
    let resolution = 2.0 * PI / length;
    let mean = window.iter().map(|w| w.1).sum::<f64>() / window.len() as f64;
    let spacing = length / (window.len() - 1) as f64;
    let nyquist = PI / spacing;
    // fine grid above the DC lobe
    let n_grid = 4000;
    let lo = 0.5 * resolution;
    let mut best = (lo, -1.0);
    for i in 0..=n_grid {
        let w = lo + (nyquist - lo) * i as f64 / n_grid as f64;
        let s: C64 = window.iter().map(|(t, p)| C64::from_polar(p - mean, -w * t)).sum();
        if s.norm_sqr() > best.1 {
            best = (w, s.norm_sqr());
        }
    }
    let after: Vec<f64> = series.times.iter().zip(&series.p_qb).filter(|(t, _)| **t > t_off + 1e-9).map(|(_, p)| *p).collect();
    let frozen_variance = if after.len() < 2 {
        0.0
    } else {
        let m = after.iter().sum::<f64>() / after.len() as f64;
        after.iter().map(|p| (p - m).powi(2)).sum::<f64>() / after.len() as f64
    };
    Ok(QubitDiagnostics {
        peak_frequency: best.0,
        expected_frequency: expected,
        resolution,
        frequency_error: (best.0 - expected).abs(),
        frozen_variance,
        frozen: frozen_variance < FROZEN_VARIANCE,
    })
}

/// Photon numbers and outward speeds of the two emission events of a
/// coupling quench.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionEvents {
    pub t_off: f64,
    /// Photons outside the core at `t_off`.
    pub first_photons: f64,
    /// Photons inside the core at `t_off`, all released once decoupled.
    pub second_photons: f64,
    /// Outward speed of the centroid of `|x − x_qb|` for each wavepacket,
    /// fitted over the second half of the free-flight window.
    pub first_speed: f64,
    pub second_speed: f64,
    /// Free-flight sample times and the two packets' densities at each.
    pub times: Vec<f64>,
    pub first_density: Vec<Vec<f64>>,
    pub second_density: Vec<Vec<f64>>,
}

/// `exp(−iht)` for the bare cavity chain.
fn free_propagator(params: &ModelParams, vecs: &Array2<f64>, vals: &Array1<f64>, t: f64) -> Array2<C64> {
    let n = params.n_sites;
    let v = vecs.mapv(C64::from);
    let mut vd = v.clone();
    for k in 0..n {
        let ph = C64::from_polar(1.0, -vals[k] * t);
        vd.column_mut(k).mapv_inplace(|z| z * ph);
    }
    vd.dot(&v.t())
}

fn hopping_matrix(params: &ModelParams) -> Array2<f64> {
    let n = params.n_sites;
    let mut h = Array2::from_diag_elem(n, params.omega);
    for x in 0..n - 1 {
        h[[x, x + 1]] = -params.j_hop;
        h[[x + 1, x]] = -params.j_hop;
    }
    h
}

/// Separates the photons present at `t_off` into the packet already outside
/// `core_radius` and the cloud still bound at the emitter, then propagates
/// both exactly with the decoupled chain for `window` (the photon field is
/// free once `g = 0`). Uses `C_xy = ⟨a_x†a_y⟩` of `state_at_off`.
pub fn emission_events(state_at_off: &MpsState, params: &ModelParams, t_off: f64, core_radius: usize, window: f64, n_times: usize) -> Result<EmissionEvents> {
    if !(window > 0.0) || n_times < 4 {
        return Err(invalid("window", "need a positive window and at least 4 times"));
    }
    let n = params.n_sites;
    let q = params.qubit_site;
    let sp = state_at_off.spaces();
    if sp.len() != n {
        return Err(Error::DimensionMismatch("state and parameters describe different chains".into()));
    }
    let up: Vec<_> = sp.iter().map(|s| lift_op::<C64>(&s.create())).collect();
    let down: Vec<_> = sp.iter().map(|s| lift_op::<C64>(&s.annihilate())).collect();
    let corr = state_at_off.two_point(state_at_off, &up, &down)?;
    let outer: Vec<bool> = (0..n).map(|x| x.abs_diff(q) > core_radius).collect();
    let mut first = corr.clone();
    for ((x, y), v) in first.indexed_iter_mut() {
        if !(outer[x] && outer[y]) {
            *v = C64::new(0.0, 0.0);
        }
    }
    let second = &corr - &first;
    let n1: f64 = first.diag().iter().map(|z| z.re).sum();
    let n2: f64 = second.diag().iter().map(|z| z.re).sum();
    let (vals, vecs) = eigh_sym(&hopping_matrix(params))?;
    let mut ev = EmissionEvents {
        t_off,
        first_photons: n1,
        second_photons: n2,
        first_speed: 0.0,
        second_speed: 0.0,
        times: Vec::new(),
        first_density: Vec::new(),
        second_density: Vec::new(),
    };
    let (mut c1, mut c2) = (Vec::new(), Vec::new());
    for i in 0..n_times {
        let t = window * i as f64 / (n_times - 1) as f64;
        let u = free_propagator(params, &vecs, &vals, t);
        let uc = u.mapv(|z| z.conj());
        let ut = u.t();
        let dens = |c: &Array2<C64>| -> Vec<f64> { uc.dot(c).dot(&ut).diag().iter().map(|z| z.re).collect() };
        let (d1, d2) = (dens(&first), dens(&second));
        let centroid = |d: &[f64], w: f64| if w > 0.0 { d.iter().enumerate().map(|(x, v)| x.abs_diff(q) as f64 * v).sum::<f64>() / w } else { 0.0 };
        if 2 * i >= n_times - 1 {
            c1.push((t, centroid(&d1, n1)));
            c2.push((t, centroid(&d2, n2)));
        }
        ev.times.push(t_off + t);
        ev.first_density.push(d1);
        ev.second_density.push(d2);
    }
    ev.first_speed = slope(&c1);
    ev.second_speed = slope(&c2);
    Ok(ev)
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    if pts.len() < 2 {
        return 0.0;
    }
    let k = pts.len() as f64;
    let (mt, my) = (pts.iter().map(|p| p.0).sum::<f64>() / k, pts.iter().map(|p| p.1).sum::<f64>() / k);
    let cov: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let var: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if var > 0.0 { cov / var } else { 0.0 }
}

/// Largest photon number found outside `|x − x_qb| ≤ v t + width` at any
/// sample with `t ≤ t_max`.
pub fn light_cone_leak(series: &TimeSeries, params: &ModelParams, width: f64, t_max: f64) -> f64 {
    let v = 2.0 * params.j_hop;
    let q = params.qubit_site;
    series
        .times
        .iter()
        .zip(&series.n_x)
        .filter(|(t, _)| **t <= t_max)
        .map(|(t, row)| {
            row.iter().enumerate().filter(|(x, _)| x.abs_diff(q) as f64 > v * t + width).map(|(_, n)| n).sum::<f64>()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::dense_hamiltonian;
    use crate::mps::product_state;
    use crate::spectrum::{find_spectrum, SearchOptions};

    fn params(n: usize, g: f64) -> ModelParams {
        ModelParams::new(1.0, 0.4, n, 0.3, g).unwrap()
    }

    fn opts(n_max: usize) -> EvolveOptions {
        EvolveOptions { n_max, d_max: 64, svd_tol: 1e-14, sample_every: 2, ..Default::default() }
    }

    #[test]
    fn schedule_validation() {
        let p = params(8, 0.5);
        let good = QuenchSchedule::coupling(0.5, 0.3, 1.0, 2.0, 0.05);
        assert!(good.validate(&p).is_ok());
        assert_eq!(good.step_ranges(), vec![(0, 20), (20, 40)]);
        assert_eq!(good.t_off(), Some(1.0));
        assert!(QuenchSchedule::coupling(0.5, 0.3, 1.0, 2.0, 0.2).validate(&p).is_err());
        assert!(QuenchSchedule::coupling(0.5, 0.3, 1.01, 2.0, 0.05).validate(&p).is_err());
        assert!(QuenchSchedule::coupling(0.5, 0.3, 3.0, 2.0, 0.05).validate(&p).is_err());
        assert!(QuenchSchedule::coupling(-0.5, 0.3, 1.0, 2.0, 0.05).validate(&p).is_err());
        let mut late = good.clone();
        late.segments[0].t_start = 0.5;
        assert!(late.validate(&p).is_err());
        let mut empty = good;
        empty.segments.clear();
        assert!(empty.validate(&p).is_err());
    }

    #[test]
    fn zero_coupling_keeps_vacuum() {
        let p = params(8, 0.0);
        let vac: MpsState = product_state(&p, 2, &[0; 8], 10).unwrap();
        let sched = QuenchSchedule::coupling(0.0, 0.3, 1.0, 2.0, 0.05);
        let ev = evolve(&vac, &sched, &p, &opts(2)).unwrap();
        assert_eq!(ev.series.times.len(), 21);
        assert!(ev.series.n_x.iter().flatten().all(|v| v.abs() < 1e-14));
        assert!(ev.series.p_qb.iter().all(|v| v.abs() < 1e-14));
        assert!(ev.series.parity.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    // exact exp(−iHt)|ψ⟩ by dense diagonalization
    fn dense_evolve(h: &ndarray::Array2<f64>, psi: &[C64], t: f64) -> Vec<C64> {
        let (vals, vecs) = crate::linalg::eigh_sym(h).unwrap();
        let vc = vecs.mapv(C64::from);
        let coeffs = vc.t().dot(&ndarray::Array1::from(psi.to_vec()));
        let phased: ndarray::Array1<C64> = coeffs.iter().zip(vals.iter()).map(|(c, e)| c * C64::from_polar(1.0, -e * t)).collect();
        vc.dot(&phased).to_vec()
    }

    #[test]
    fn two_segment_run_matches_dense_propagation() {
        let p = params(4, 0.5);
        let n_max = 3;
        let vac: MpsState = product_state(&p, n_max, &[0; 4], 64).unwrap();
        let sched = QuenchSchedule::coupling(0.5, 0.3, 1.0, 2.0, 0.01);
        let ev = evolve(&vac, &sched, &p, &EvolveOptions { sample_every: 50, ..opts(n_max) }).unwrap();
        let mid = dense_evolve(&dense_hamiltonian(&p, n_max).unwrap(), &vac.to_dense(), 1.0);
        let end = dense_evolve(&dense_hamiltonian(&p.with_g(0.0), n_max).unwrap(), &mid, 1.0);
        let got = ev.final_state.to_dense();
        let dist: f64 = got.iter().zip(&end).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        assert!(dist < 1e-3, "{dist}");
        assert!(ev.series.segments.len() == 2);
        assert!(ev.series.segments.iter().all(|s| s.max_energy_drift < 1e-4));
        assert!(ev.series.max_step_norm_correction < 1e-12);
        // emitter frozen once decoupled
        let after: Vec<f64> = ev.series.times.iter().zip(&ev.series.p_qb).filter(|(t, _)| **t > 1.0).map(|(_, p)| *p).collect();
        assert!(after.iter().all(|v| (v - after[0]).abs() < 1e-10));
        assert!(ev.series.p_qb[2] > 1e-3);
    }

    #[test]
    fn snapshots_and_rejections() {
        let p = params(6, 0.3);
        let vac: MpsState = product_state(&p, 2, &[0; 6], 10).unwrap();
        let sched = QuenchSchedule::coupling(0.3, 0.3, 0.5, 1.0, 0.05);
        let o = EvolveOptions { snapshot_times: vec![0.0, 0.25, 1.0], ..opts(2) };
        let ev = evolve(&vac, &sched, &p, &o).unwrap();
        let times: Vec<f64> = ev.snapshots.iter().map(|s| s.0).collect();
        assert_eq!(times, vec![0.0, 0.25, 1.0]);
        assert!(evolve(&vac, &sched, &p, &EvolveOptions { snapshot_times: vec![2.0], ..opts(2) }).is_err());
        assert!(evolve(&vac, &sched, &p, &opts(3)).is_err());
        let mut big = vac.clone();
        big.apply_product_operator(&crate::mps::ProductOperator::from_fn(vac.spaces(), |s| s.identity().mapv(|x| C64::from(2.0 * x)))).unwrap();
        assert!(evolve(&big, &sched, &p, &opts(2)).is_err());
    }

    #[test]
    fn channel_decomposition_of_eigenstates() {
        let p = params(6, 0.3);
        let so = SearchOptions { n_max: 2, d_max: 30, svd_tol: 1e-14, energy_tol: 1e-9, ..Default::default() };
        let [gs, e1, e2] = find_spectrum(&p, &so).unwrap();
        let psi: MpsState = gs.state.convert();
        let rec = channel_decomposition(0.0, &psi, &p, &gs, &e1, &e2, 1).unwrap();
        assert!((rec.w00 - 1.0).abs() < 1e-10);
        assert!(rec.w02 < 1e-10);
        // GS has no component along a_x†|E1⟩ only up to its own photon cloud
        assert!(rec.deficit.abs() < 0.2);
        let other = p.with_g(0.2);
        assert!(channel_decomposition(0.0, &psi, &other, &gs, &e1, &e2, 1).is_err());
        assert!(channel_decomposition(0.0, &psi, &p, &e1, &gs, &e2, 1).is_err());
    }

    #[test]
    fn two_photon_profile_counts_each_photon_once() {
        // |Ψ⟩ = a_1† a_3† |0⟩ against the decoupled vacuum
        let p = params(6, 0.0);
        let so = SearchOptions { n_max: 2, d_max: 8, ..Default::default() };
        let [gs, e1, e2] = find_spectrum(&p, &so).unwrap();
        let psi: MpsState = product_state(&p, 2, &[0, 1, 0, 1, 0, 0], 8).unwrap();
        let rec = channel_decomposition(0.0, &psi, &p, &gs, &e1, &e2, 1).unwrap();
        for x in 0..6 {
            assert!((rec.n2[x] - rec.n_x[x]).abs() < 1e-10, "{x}: {} vs {}", rec.n2[x], rec.n_x[x]);
        }
        assert!((rec.w2 - 1.0).abs() < 1e-10);
        let double: MpsState = product_state(&p, 2, &[0, 0, 2, 0, 0, 0], 8).unwrap();
        let rec = channel_decomposition(0.0, &double, &p, &gs, &e1, &e2, 1).unwrap();
        assert!((rec.n2[2] - 2.0).abs() < 1e-10 && (rec.w2 - 1.0).abs() < 1e-10);
        assert!(rec.w2_emitted.abs() < 1e-12);
        let flying: MpsState = product_state(&p, 2, &[1, 0, 0, 0, 0, 1], 8).unwrap();
        let rec = channel_decomposition(0.0, &flying, &p, &gs, &e1, &e2, 1).unwrap();
        assert!((rec.w2_emitted - 1.0).abs() < 1e-10);
    }

    #[test]
    fn periodogram_finds_known_frequency() {
        let gs_p = params(6, 0.0);
        let so = SearchOptions { n_max: 1, d_max: 4, ..Default::default() };
        let [mut gs, _, mut e2] = find_spectrum(&gs_p, &so).unwrap();
        gs.energy = 0.0;
        e2.energy = 0.7;
        let mut s = TimeSeries::default();
        for i in 0..400 {
            let t = i as f64 * 0.25;
            s.times.push(t);
            s.p_qb.push(if t < 60.0 { 0.1 + 0.01 * (0.7 * t).cos() } else { 0.1 });
        }
        let d = qubit_series_checks(&s, 1.0, 60.0, &gs, &e2).unwrap();
        assert!(d.frequency_error < d.resolution, "{d:?}");
        assert!(d.frozen && d.frozen_variance < 1e-20);
        assert!(qubit_series_checks(&s, 1.0, 3.0, &gs, &e2).is_err());
    }

    #[test]
    fn emission_split_and_free_flight() {
        let p = params(24, 0.0);
        let q = p.qubit_site;
        let mut cfg = vec![0; 24];
        cfg[q + 8] = 1;
        cfg[q] = site_spaces(&p, 2)[q].index(0, 1);
        let psi: MpsState = product_state(&p, 2, &cfg, 16).unwrap();
        let ev = emission_events(&psi, &p, 0.0, 3, 6.0, 13).unwrap();
        assert!((ev.first_photons - 1.0).abs() < 1e-12 && (ev.second_photons - 1.0).abs() < 1e-12);
        // a localized photon spreads with mean |v| = 4J/π
        assert!((ev.second_speed - 4.0 * 0.4 / PI).abs() < 0.08, "{ev:?}");
        assert!(ev.first_speed.abs() < ev.second_speed);
        // the free flight agrees with the full evolution at g = 0
        let sched = QuenchSchedule { segments: vec![Segment { t_start: 0.0, g: 0.0, delta: 0.3 }], t_end: 6.0, dt: 0.01 };
        let run = evolve(&psi, &sched, &p, &EvolveOptions { sample_every: 50, ..opts(2) }).unwrap();
        let last = run.series.n_x.last().unwrap();
        let free: Vec<f64> = (0..24).map(|x| ev.first_density[12][x] + ev.second_density[12][x]).collect();
        assert!(last.iter().zip(&free).all(|(a, b)| (a - b).abs() < 1e-3), "{last:?} {free:?}");
    }

    #[test]
    fn light_cone_bookkeeping() {
        let p = params(40, 0.5);
        let q = p.qubit_site;
        let mut s = TimeSeries::default();
        for i in 0..=10 {
            let t = i as f64;
            let mut row = vec![0.0; 40];
            row[q + 8 * i / 10] = 0.1;
            s.times.push(t);
            s.n_x.push(row);
        }
        assert!(light_cone_leak(&s, &p, 0.5, 10.0) < 1e-15);
        assert!((light_cone_leak(&s, &ModelParams { j_hop: 0.1, ..p }, 0.5, 10.0) - 0.1).abs() < 1e-15);
    }
}
