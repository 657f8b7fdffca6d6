//! Variational polaron ansatz `U_p = exp(σx Σ_k f_k (a_k† − a_k))` applied
//! to the bare vacuum, with the self-consistent pair
//! `f_k = g_k / (Δ_r + ω_k)` and `Δ_r = Δ exp(−2 Σ_k f_k²)`.

mod sector;

pub use sector::{bound_state_energies, projected_sector_matrix, SectorOperator};

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{coupling_gk, dispersion, momentum_grid, ModelParams};

/// Photon modes the emitter couples to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeBasis {
    /// Plane waves `k = 2πm/N` with `g_k = g/√N`.
    #[default]
    Periodic,
    /// Standing waves of the open chain, `ω_q = Ω − 2J cos(qπ/(N+1))`,
    /// `g_q = g φ_q(x_qb)`. Same finite model as the ED and MPS codes.
    OpenChain,
}

impl ModeBasis {
    /// Frequencies and couplings of the modes.
    pub fn modes(self, params: &ModelParams) -> (Vec<f64>, Vec<f64>) {
        let n = params.n_sites;
        match self {
            ModeBasis::Periodic => {
                let w = momentum_grid(n).into_iter().map(|k| dispersion(params, k)).collect();
                (w, coupling_gk(params))
            }
            ModeBasis::OpenChain => (1..=n)
                .map(|q| {
                    let w = dispersion(params, q as f64 * PI / (n + 1) as f64);
                    (w, params.g * open_mode(n, q, params.qubit_site))
                })
                .unzip(),
        }
    }
}

/// Normalized standing wave `φ_q(x) = √(2/(N+1)) sin(qπ(x+1)/(N+1))`, `q = 1..=N`.
pub fn open_mode(n: usize, q: usize, x: usize) -> f64 {
    let l = (n + 1) as f64;
    (2.0 / l).sqrt() * (q as f64 * PI * (x + 1) as f64 / l).sin()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolaronSolution {
    pub f_k: Vec<f64>,
    pub delta_r: f64,
    pub e_gs: f64,
    pub params: ModelParams,
    pub iterations: usize,
    pub residual: f64,
    pub basis: ModeBasis,
    pub omega_k: Vec<f64>,
    pub g_k: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Weight `λ` of the new iterate in `Δ_r ← (1−λ)Δ_r + λ Δ e^{−2Σf²}`.
    pub damping: f64,
    pub basis: ModeBasis,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 10_000, damping: 0.5, basis: ModeBasis::Periodic }
    }
}

fn amplitudes(delta_r: f64, omega: &[f64], g: &[f64]) -> Vec<f64> {
    omega.iter().zip(g).map(|(w, g)| g / (delta_r + w)).collect()
}

fn sum_sq(f: &[f64]) -> f64 {
    f.iter().map(|x| x * x).sum()
}

/// Plane-wave solution with damping 0.5.
pub fn solve_polaron(params: &ModelParams, tol: f64, max_iter: usize) -> Result<PolaronSolution> {
    solve_polaron_with(params, &SolverOptions { tol, max_iter, ..Default::default() })
}

pub fn solve_polaron_with(params: &ModelParams, opts: &SolverOptions) -> Result<PolaronSolution> {
    if !(opts.tol > 0.0) {
        return Err(invalid("tol", "must be > 0"));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(invalid("damping", "must lie in (0, 1]"));
    }
    params.validate()?;
    let (omega, g) = opts.basis.modes(params);
    let delta = params.delta;
    let target = |dr: f64| delta * (-2.0 * sum_sq(&amplitudes(dr, &omega, &g))).exp();

    let mut dr = delta;
    let mut residual = (dr - target(dr)).abs();
    let mut iterations = 0;
    while residual > opts.tol {
        if iterations == opts.max_iter {
            return Err(Error::NoConvergence { iterations, residual });
        }
        dr = (1.0 - opts.damping) * dr + opts.damping * target(dr);
        residual = (dr - target(dr)).abs();
        iterations += 1;
    }

    let f_k = amplitudes(dr, &omega, &g);
    let e_gs = 0.5 * (delta - dr)
        + f_k.iter().zip(omega.iter().zip(&g)).map(|(f, (w, g))| w * f * f - 2.0 * g * f).sum::<f64>();
    Ok(PolaronSolution {
        f_k,
        delta_r: dr,
        e_gs,
        params: *params,
        iterations,
        residual,
        basis: opts.basis,
        omega_k: omega,
        g_k: g,
    })
}

/// `P_e = (1 − Δ_r/Δ)/2`.
pub fn excited_probability(sol: &PolaronSolution) -> Result<f64> {
    if sol.params.delta <= 0.0 {
        return Err(invalid("delta", "excited-state probability needs delta > 0"));
    }
    Ok(0.5 * (1.0 - sol.delta_r / sol.params.delta))
}

/// Overlap `exp(−Σ f_k²)` between the polaron vacuum and the bare vacuum.
pub fn fidelity_to_bare(sol: &PolaronSolution) -> f64 {
    (-sum_sq(&sol.f_k)).exp()
}

/// Real-space polaron amplitudes, indexed by site, with the position measured
/// from the emitter. Plane waves use `f_x = N^{-1/2} Σ_k e^{ik(x−x_qb)} f_k`;
/// standing waves use `f_x = Σ_q φ_q(x) f_q`.
pub fn polaron_fx(sol: &PolaronSolution) -> Vec<C64> {
    let p = &sol.params;
    let n = p.n_sites;
    match sol.basis {
        ModeBasis::Periodic => {
            let ks = momentum_grid(n);
            let norm = (n as f64).sqrt();
            (0..n)
                .map(|x| {
                    let r = x as f64 - p.qubit_site as f64;
                    ks.iter().zip(&sol.f_k).map(|(k, f)| C64::from_polar(*f, k * r)).sum::<C64>() / norm
                })
                .collect()
        }
        ModeBasis::OpenChain => (0..n)
            .map(|x| C64::new((1..=n).map(|q| open_mode(n, q, x) * sol.f_k[q - 1]).sum(), 0.0))
            .collect(),
    }
}

/// One row of a polaron sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolaronRecord {
    pub g: f64,
    pub delta_r: f64,
    pub p_e: f64,
    pub e_gs: f64,
    pub e1: f64,
    pub e2: f64,
    pub fidelity: f64,
}

impl PolaronRecord {
    pub fn from_solution(sol: &PolaronSolution) -> Result<Self> {
        let (e1, e2) = bound_state_energies(sol)?;
        Ok(Self {
            g: sol.params.g,
            delta_r: sol.delta_r,
            p_e: excited_probability(sol)?,
            e_gs: sol.e_gs,
            e1,
            e2,
            fidelity: fidelity_to_bare(sol),
        })
    }
}
