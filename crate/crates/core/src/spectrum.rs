//! Parity-resolved eigenstates by imaginary-time evolution, with photon
//! profiles and photon-number histograms.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{Field, Step};
use crate::model::{local_terms, site_spaces, LocalSpace, ModelParams};
use crate::mps::{lift_op, Mps, ProductOperator, Tebd, TrotterOrder, DEFAULT_SVD_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "GS")]
    Gs,
    E1,
    E2,
}

impl Label {
    pub fn parity(self) -> i8 {
        match self {
            Label::E1 => -1,
            _ => 1,
        }
    }
}

/// Numerics of an imaginary-time search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub n_max: usize,
    pub d_max: usize,
    pub svd_tol: f64,
    /// Imaginary time steps, used in order.
    pub dt_schedule: Vec<f64>,
    /// Convergence threshold on `|ΔE| / Δτ` for each stage.
    pub energy_tol: f64,
    /// Upper bound on the imaginary time spent in one stage.
    pub max_time_per_stage: f64,
    pub order: TrotterOrder,
    pub seed: u64,
    /// Largest photon number resolved by the histogram.
    pub n_cut: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            n_max: 5,
            d_max: 20,
            svd_tol: DEFAULT_SVD_TOL,
            dt_schedule: geometric_schedule(0.1, 1e-3, 5),
            energy_tol: 1e-7,
            max_time_per_stage: 400.0,
            order: TrotterOrder::Second,
            seed: 0,
            n_cut: 8,
        }
    }
}

/// `stages` steps decreasing geometrically from `start` to `end`.
pub fn geometric_schedule(start: f64, end: f64, stages: usize) -> Vec<f64> {
    if stages <= 1 {
        return vec![start];
    }
    let ratio = (end / start).powf(1.0 / (stages - 1) as f64);
    (0..stages).map(|i| start * ratio.powi(i as i32)).collect()
}

impl SearchOptions {
    pub fn validate(&self) -> Result<()> {
        if self.n_max < 1 {
            return Err(invalid("n_max", "must be >= 1"));
        }
        if self.d_max < 1 {
            return Err(invalid("d_max", "must be >= 1"));
        }
        if !(self.svd_tol >= 0.0 && self.svd_tol < 1.0) {
            return Err(invalid("svd_tol", "must lie in [0, 1)"));
        }
        if self.dt_schedule.is_empty() || self.dt_schedule.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(invalid("dt_schedule", "needs at least one positive step"));
        }
        if !(self.energy_tol > 0.0) {
            return Err(invalid("energy_tol", "must be > 0"));
        }
        if !(self.max_time_per_stage > 0.0) {
            return Err(invalid("max_time_per_stage", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchDiagnostics {
    pub steps: usize,
    pub imaginary_time: f64,
    /// `|ΔE| / Δτ` at the end of the last stage.
    pub final_rate: f64,
    pub converged: bool,
    pub truncation: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct EigenRecord {
    pub label: Label,
    /// Parameters the state was computed at.
    pub params: ModelParams,
    pub energy: f64,
    pub parity: i8,
    pub state: Mps<f64>,
    pub n_x_profile: Vec<f64>,
    pub histogram: Histogram,
    pub diagnostics: SearchDiagnostics,
}

/// Serializable part of an [`EigenRecord`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSummary {
    pub label: Label,
    pub energy: f64,
    pub parity: i8,
    pub parity_expectation: f64,
    pub histogram: Vec<f64>,
    pub histogram_aliased: bool,
    pub max_bond: usize,
    pub diagnostics: SearchDiagnostics,
}

impl EigenRecord {
    pub fn summary(&self) -> Result<EigenSummary> {
        let pi = parity_operator_for(self.state.spaces());
        Ok(EigenSummary {
            label: self.label,
            energy: self.energy,
            parity: self.parity,
            parity_expectation: self.state.expect_product(&pi)?,
            histogram: self.histogram.probabilities.clone(),
            histogram_aliased: self.histogram.aliased,
            max_bond: self.state.max_bond(),
            diagnostics: self.diagnostics.clone(),
        })
    }
}

/// `Π = exp(iπ(σ⁺σ⁻ + Σ_x a_x†a_x))` as a product of local signs.
pub fn parity_operator(params: &ModelParams, n_max: usize) -> ProductOperator<f64> {
    parity_operator_for(&site_spaces(params, n_max))
}

pub fn parity_operator_for<T: Field>(spaces: &[LocalSpace]) -> ProductOperator<T> {
    ProductOperator::from_fn(spaces, |s| lift_op(&s.parity_op()))
}

fn initial_state(params: &ModelParams, opts: &SearchOptions, label: Label) -> Result<Mps<f64>> {
    let spaces = site_spaces(params, opts.n_max);
    let q = params.qubit_site;
    let mut config = vec![0; spaces.len()];
    match label {
        Label::Gs => return Ok(Mps::vacuum(spaces, opts.d_max)),
        Label::E1 => config[q] = spaces[q].index(0, 1),
        Label::E2 => config[q] = spaces[q].index(1, 1),
    }
    let mut psi = Mps::product_state(spaces, &config, opts.d_max)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ label as u64);
    psi.perturb(&mut rng, 0.05)?;
    Ok(psi)
}

/// Lowest state of the given label's parity sector, orthogonal to `orthogonal_to`.
pub fn find_eigenstate(
    params: &ModelParams,
    opts: &SearchOptions,
    label: Label,
    orthogonal_to: &[&Mps<f64>],
) -> Result<EigenRecord> {
    params.validate()?;
    opts.validate()?;
    let mut psi = initial_state(params, opts, label)?;
    for g in orthogonal_to {
        if (g.norm() - 1.0).abs() > 1e-8 {
            return Err(invalid("orthogonal_to", "states must be normalized"));
        }
    }
    psi.orthogonalize_against(orthogonal_to).map_err(|e| match e {
        Error::NormCollapse { norm } => Error::NoConvergence { iterations: 0, residual: norm },
        other => other,
    })?;
    let terms = local_terms(params, opts.n_max)?;
    let mut tebd = Tebd::<f64>::from_terms(&terms, opts.order, opts.svd_tol);
    let mut diag = SearchDiagnostics::default();
    // with a reference set, orthogonalize after every step
    let block = if orthogonal_to.is_empty() { 5 } else { 1 };
    let mut energy = psi.energy(tebd.bond_hamiltonians())?;
    let mut rate = f64::INFINITY;
    for &dt in &opts.dt_schedule {
        let mut stage_time = 0.0;
        loop {
            let rep = tebd.run(&mut psi, Step::Imaginary(dt), block)?;
            diag.truncation += rep.discarded;
            psi.orthogonalize_against(orthogonal_to)?;
            let e = psi.energy(tebd.bond_hamiltonians())?;
            let span = dt * block as f64;
            diag.steps += block;
            diag.imaginary_time += span;
            stage_time += span;
            let rise = e - energy;
            if rise > 1e-8 * block as f64 && stage_time > span {
                diag.warnings.push(format!(
                    "energy rose by {rise:.3e} at tau = {:.3} (dt = {dt}, truncation {:.3e})",
                    diag.imaginary_time, diag.truncation
                ));
            }
            rate = (e - energy).abs() / span;
            energy = e;
            if rate < opts.energy_tol {
                break;
            }
            if stage_time >= opts.max_time_per_stage {
                diag.warnings.push(format!("stage dt = {dt} stopped at the time limit with rate {rate:.3e}"));
                break;
            }
        }
    }
    diag.final_rate = rate;
    diag.converged = rate < opts.energy_tol;
    let n_x_profile = spatial_profile(&psi)?;
    let histogram = photon_histogram(&psi, opts.n_cut)?;
    Ok(EigenRecord { label, params: *params, energy, parity: psi.parity(), state: psi, n_x_profile, histogram, diagnostics: diag })
}

/// `|GS⟩`, `|E1⟩` and `|E2⟩` (orthogonalized against `|GS⟩`).
pub fn find_spectrum(params: &ModelParams, opts: &SearchOptions) -> Result<[EigenRecord; 3]> {
    let gs = find_eigenstate(params, opts, Label::Gs, &[])?;
    let e1 = find_eigenstate(params, opts, Label::E1, &[])?;
    let mut e2 = find_eigenstate(params, opts, Label::E2, &[&gs.state])?;
    let threshold = e1.energy + params.omega - 2.0 * params.j_hop;
    if e2.energy > threshold {
        e2.diagnostics
            .warnings
            .push(format!("E2 = {} lies above the E1 + one-photon threshold {threshold}", e2.energy));
    }
    Ok([gs, e1, e2])
}

/// Photon-number distribution from counting phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub probabilities: Vec<f64>,
    /// Set when `P(n_cut) > 1e−3`, i.e. higher photon numbers may fold back.
    pub aliased: bool,
}

/// `P(n) = (1/M) Σ_m e^{−2πinm/M} ⟨Π_x e^{2πim n̂_x/M}⟩`, `M = n_cut + 1`.
/// Counts photons only, not the emitter excitation.
pub fn photon_histogram<T: Field>(state: &Mps<T>, n_cut: usize) -> Result<Histogram> {
    let psi: Mps<C64> = state.convert();
    let m = n_cut + 1;
    let chars: Vec<C64> = (0..m)
        .map(|k| {
            let theta = 2.0 * PI * k as f64 / m as f64;
            psi.expect_product(&ProductOperator::from_fn(psi.spaces(), |s| s.photon_phase(theta)))
        })
        .collect::<Result<_>>()?;
    let probabilities: Vec<f64> = (0..m)
        .map(|n| {
            let p: C64 = chars
                .iter()
                .enumerate()
                .map(|(k, c)| c * C64::from_polar(1.0, -2.0 * PI * (n * k) as f64 / m as f64))
                .sum::<C64>()
                / m as f64;
            if p.re < 0.0 { 0.0 } else { p.re }
        })
        .collect();
    let aliased = probabilities[n_cut] > 1e-3;
    Ok(Histogram { probabilities, aliased })
}

/// `⟨a_x†a_x⟩` on every site.
pub fn spatial_profile<T: Field>(state: &Mps<T>) -> Result<Vec<f64>> {
    let ops: Vec<_> = state.spaces().iter().map(|s| lift_op::<T>(&s.number())).collect();
    Ok(state.expect_each_site(&ops)?.into_iter().map(|v| v.re()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Truncation;
    use crate::model::{exact_sector_minima, photon_number_diagonal, FockBasis};
    use crate::mps::MpsState;

    fn params(n: usize, g: f64) -> ModelParams {
        ModelParams::new(1.0, 0.4, n, 0.3, g).unwrap()
    }

    fn small_opts() -> SearchOptions {
        SearchOptions { n_max: 2, d_max: 30, svd_tol: 1e-14, energy_tol: 1e-9, ..Default::default() }
    }

    #[test]
    fn parity_eigenvalues() {
        let p = params(6, 0.3);
        let pi = parity_operator(&p, 2);
        let q = p.qubit_site;
        let sp = site_spaces(&p, 2);
        let vac = Mps::<f64>::vacuum(sp.clone(), 4);
        assert_eq!(vac.expect_product(&pi).unwrap(), 1.0);
        let mut one = vec![0; 6];
        one[1] = 1;
        assert_eq!(Mps::<f64>::product_state(sp.clone(), &one, 4).unwrap().expect_product(&pi).unwrap(), -1.0);
        let mut both = vec![0; 6];
        both[q] = sp[q].index(1, 1);
        assert_eq!(Mps::<f64>::product_state(sp, &both, 4).unwrap().expect_product(&pi).unwrap(), 1.0);
        for o in &pi.ops {
            assert_eq!(o.dot(o), ndarray::Array2::<f64>::eye(o.nrows()));
        }
    }

    #[test]
    fn decoupled_ground_state_is_vacuum() {
        let p = params(6, 0.0);
        let r = find_eigenstate(&p, &small_opts(), Label::Gs, &[]).unwrap();
        assert!(r.energy.abs() < 1e-12);
        assert!(r.n_x_profile.iter().all(|&n| n.abs() < 1e-12));
        assert!((r.histogram.probabilities[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sector_energies_match_exact_diagonalization() {
        let p = params(6, 0.3);
        let ed = exact_sector_minima(&p, 2).unwrap();
        let [gs, e1, e2] = find_spectrum(&p, &small_opts()).unwrap();
        assert!((gs.energy - ed.even).abs() < 1e-6, "{} vs {}", gs.energy, ed.even);
        assert!((e1.energy - ed.odd).abs() < 1e-6, "{} vs {}", e1.energy, ed.odd);
        assert!((e2.energy - ed.second_even.unwrap()).abs() < 1e-6);
        assert_eq!((gs.parity, e1.parity, e2.parity), (1, -1, 1));
        assert!(gs.state.overlap(&e2.state).unwrap().abs() < 1e-6);
        assert!(gs.diagnostics.converged && e1.diagnostics.converged);
    }

    #[test]
    fn histogram_matches_number_projectors() {
        let p = params(6, 0.5);
        let ed = exact_sector_minima(&p, 2).unwrap();
        let sp = site_spaces(&p, 2);
        let basis = FockBasis::new(sp.clone());
        let counts = photon_number_diagonal(&basis);
        for v in [&ed.even_state, &ed.odd_state] {
            let mut want = vec![0.0; 13];
            for (a, &c) in v.iter().zip(&counts) {
                want[c] += a * a;
            }
            let m = Mps::<f64>::from_dense(sp.clone(), v, Truncation::exact()).unwrap();
            let h = photon_histogram(&m, 12).unwrap();
            for (x, y) in h.probabilities.iter().zip(&want) {
                assert!((x - y).abs() < 1e-8);
            }
            assert!((h.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-8);
            assert!(!h.aliased);
        }
    }

    #[test]
    fn histogram_flags_aliasing() {
        let p = params(4, 0.0);
        let sp = site_spaces(&p, 3);
        let psi = MpsState::product_state(sp, &[3, 3, 0, 3], 2).unwrap();
        let h = photon_histogram(&psi, 8).unwrap();
        // nine photons fold onto n = 0
        assert!((h.probabilities[0] - 1.0).abs() < 1e-12);
        let h = photon_histogram(&psi, 9).unwrap();
        assert!(h.aliased);
    }

    #[test]
    fn schedule_is_geometric() {
        let s = geometric_schedule(0.1, 1e-3, 3);
        assert!((s[1] - 0.01).abs() < 1e-15 && (s[2] - 1e-3).abs() < 1e-15);
        assert!(SearchOptions { dt_schedule: vec![], ..Default::default() }.validate().is_err());
    }
}
