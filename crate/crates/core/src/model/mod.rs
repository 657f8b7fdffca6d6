//! Physical model: a two-level emitter coupled through `g σx (a + a†)` to one
//! cavity of a tight-binding array with dispersion `ω_k = Ω − 2J cos k`.

mod ed;
mod space;
mod terms;

pub use ed::{
    dense_hamiltonian, dense_hamiltonian_capped, dense_spectrum, exact_sector_minima, parity_diagonal, photon_number_diagonal,
    sparse_hamiltonian, FockBasis, SectorMinima, DEFAULT_DENSE_CAP_BYTES,
};
pub use space::LocalSpace;
pub use terms::{local_terms, site_spaces, LocalTerm, LocalTerms, TermKind, TermSites};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Hamiltonian constants. Sites are indexed `0..n_sites`; the emitter sits on
/// `qubit_site` (default `n_sites / 2`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub omega: f64,
    pub j_hop: f64,
    pub n_sites: usize,
    pub delta: f64,
    pub g: f64,
    pub qubit_site: usize,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self { omega: 1.0, j_hop: 0.4, n_sites: 400, delta: 0.3, g: 0.5, qubit_site: 200 }
    }
}

impl ModelParams {
    /// Validated parameters with the emitter at the chain center.
    pub fn new(omega: f64, j_hop: f64, n_sites: usize, delta: f64, g: f64) -> Result<Self> {
        let p = Self { omega, j_hop, n_sites, delta, g, qubit_site: n_sites / 2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("omega", self.omega),
            ("j_hop", self.j_hop),
            ("delta", self.delta),
            ("g", self.g),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        if self.j_hop <= 0.0 {
            return Err(invalid("j_hop", format!("must be > 0, got {}", self.j_hop)));
        }
        if self.n_sites < 4 || self.n_sites % 2 != 0 {
            return Err(invalid("n_sites", format!("must be even and >= 4, got {}", self.n_sites)));
        }
        if self.omega - 2.0 * self.j_hop <= 0.0 {
            return Err(invalid("omega", format!("band bottom omega - 2 j_hop must be > 0, got {}", self.omega - 2.0 * self.j_hop)));
        }
        if self.g < 0.0 {
            return Err(invalid("g", format!("must be >= 0, got {}", self.g)));
        }
        if self.delta < 0.0 {
            return Err(invalid("delta", format!("must be >= 0, got {}", self.delta)));
        }
        if self.qubit_site >= self.n_sites {
            return Err(invalid("qubit_site", format!("{} is outside the chain of {} sites", self.qubit_site, self.n_sites)));
        }
        Ok(())
    }

    pub fn with_g(self, g: f64) -> Self {
        Self { g, ..self }
    }

    pub fn with_delta(self, delta: f64) -> Self {
        Self { delta, ..self }
    }

    /// Same parameters on a chain of `n` sites with the emitter recentred.
    pub fn with_sites(self, n: usize) -> Self {
        Self { n_sites: n, qubit_site: n / 2, ..self }
    }

    pub fn band(&self) -> BandInfo {
        BandInfo {
            gap_bottom: self.omega - 2.0 * self.j_hop,
            band_top: self.omega + 2.0 * self.j_hop,
            v_max: 2.0 * self.j_hop,
            momenta: momentum_grid(self.n_sites),
        }
    }
}

/// Band edges, maximal group velocity and the periodic momentum grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandInfo {
    pub gap_bottom: f64,
    pub band_top: f64,
    pub v_max: f64,
    pub momenta: Vec<f64>,
}

/// `N` uniformly spaced momenta `k = 2πm/N` covering `[−π, π)`.
pub fn momentum_grid(n: usize) -> Vec<f64> {
    let half = (n / 2) as i64;
    (0..n as i64).map(|i| 2.0 * PI * (i - half) as f64 / n as f64).collect()
}

pub fn dispersion(params: &ModelParams, k: f64) -> f64 {
    params.omega - 2.0 * params.j_hop * k.cos()
}

/// Momentum-space couplings `g_k = g / √N`, one per grid momentum.
pub fn coupling_gk(params: &ModelParams) -> Vec<f64> {
    vec![params.g / (params.n_sites as f64).sqrt(); params.n_sites]
}

/// Fermi-golden-rule lifetime, or the marker that Δ lies outside the band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DecayTime {
    Defined(f64),
    OutsideBand,
}

impl DecayTime {
    pub fn value(self) -> Option<f64> {
        match self {
            DecayTime::Defined(t) => Some(t),
            DecayTime::OutsideBand => None,
        }
    }
}

/// `τ = J sin(k₀) / g²` with `ω_{k₀} = Δ`.
pub fn decay_time_tau(params: &ModelParams) -> Result<DecayTime> {
    if params.g <= 0.0 {
        return Err(Error::InfiniteLifetime);
    }
    let c = (params.omega - params.delta) / (2.0 * params.j_hop);
    if c <= -1.0 || c >= 1.0 {
        return Ok(DecayTime::OutsideBand);
    }
    let k0 = c.acos();
    Ok(DecayTime::Defined(params.j_hop * k0.sin() / (params.g * params.g)))
}
