//! Trotterized evolution with even/odd bond layers.
//!
//! One second-order step is `E(dt/2) O(dt) E(dt/2)`; consecutive layers of
//! the same parity inside a run are fused. The fourth-order step composes
//! five second-order steps with Suzuki's weights.

use std::collections::HashMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::Mps;
use crate::error::{invalid, Result};
use crate::linalg::{hermitian_exp, Field, Step};
use crate::model::LocalTerms;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TrotterOrder {
    #[default]
    #[serde(alias = "2")]
    Second,
    #[serde(alias = "4")]
    Fourth,
}

impl TrotterOrder {
    /// Weights of the second-order sub-steps making up one step.
    fn substeps(self) -> Vec<f64> {
        match self {
            TrotterOrder::Second => vec![1.0],
            TrotterOrder::Fourth => {
                let p = 1.0 / (4.0 - 4f64.powf(1.0 / 3.0));
                vec![p, p, 1.0 - 4.0 * p, p, p]
            }
        }
    }
}

/// Diagnostics of one [`Tebd::run`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Sum of relative discarded weights over all splits.
    pub discarded: f64,
    /// `1 − ‖ψ‖` lost to truncation in each step before renormalization
    /// (real time only; imaginary-time norms are not conserved).
    pub norm_corrections: Vec<f64>,
}

impl RunReport {
    pub fn max_norm_correction(&self) -> f64 {
        self.norm_corrections.iter().cloned().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct Tebd<T> {
    bond_h: Vec<Array2<f64>>,
    pub order: TrotterOrder,
    pub svd_tol: f64,
    cache: HashMap<(usize, u64, bool), Array2<T>>,
}

// (bond parity, fraction of dt, step the layer starts in)
type Layer = (usize, f64, usize);

fn layers(order: TrotterOrder, n_steps: usize) -> Vec<Layer> {
    let mut out: Vec<Layer> = Vec::new();
    for step in 0..n_steps {
        for c in order.substeps() {
            for (parity, w) in [(0, 0.5 * c), (1, c), (0, 0.5 * c)] {
                match out.last_mut() {
                    Some(last) if last.0 == parity => last.1 += w,
                    _ => out.push((parity, w, step)),
                }
            }
        }
    }
    out
}

impl<T: Field> Tebd<T> {
    pub fn new(bond_h: Vec<Array2<f64>>, order: TrotterOrder, svd_tol: f64) -> Self {
        Self { bond_h, order, svd_tol, cache: HashMap::new() }
    }

    pub fn from_terms(terms: &LocalTerms, order: TrotterOrder, svd_tol: f64) -> Self {
        Self::new(terms.bond_hamiltonians(), order, svd_tol)
    }

    pub fn bond_hamiltonians(&self) -> &[Array2<f64>] {
        &self.bond_h
    }

    fn gate(&mut self, bond: usize, step: Step) -> Result<&Array2<T>> {
        let (dt, imag) = match step {
            Step::Real(dt) => (dt, false),
            Step::Imaginary(dt) => (dt, true),
        };
        let key = (bond, dt.to_bits(), imag);
        if !self.cache.contains_key(&key) {
            let g = hermitian_exp::<T>(&self.bond_h[bond], step)?;
            self.cache.insert(key, g);
        }
        Ok(&self.cache[&key])
    }

    /// Advances `psi` by `n_steps` steps of size `step` and leaves it normalized.
    pub fn run(&mut self, psi: &mut Mps<T>, step: Step, n_steps: usize) -> Result<RunReport> {
        let n = psi.n_sites();
        if self.bond_h.len() + 1 != n {
            return Err(invalid("bond_h", format!("{} bonds for {n} sites", self.bond_h.len())));
        }
        let (dt, real) = match step {
            Step::Real(dt) => (dt, true),
            Step::Imaginary(dt) => (dt, false),
        };
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid("dt", format!("must be positive and finite, got {dt}")));
        }
        let mut report = RunReport { discarded: 0.0, norm_corrections: vec![0.0; n_steps] };
        let mut kept = vec![1.0f64; n_steps];
        if psi.center().is_none() {
            psi.canonicalize(0)?;
        }
        for (parity, w, owner) in layers(self.order, n_steps) {
            let sub = if real { Step::Real(w * dt) } else { Step::Imaginary(w * dt) };
            let mut bonds: Vec<usize> = (parity..n - 1).step_by(2).collect();
            if psi.center().unwrap_or(0) > n / 2 {
                bonds.reverse();
            }
            for b in bonds {
                let svd_tol = self.svd_tol;
                let gate = self.gate(b, sub)?.clone();
                let disc = psi.apply_two_site_gate((b, b + 1), &gate, svd_tol)?;
                report.discarded += disc;
                kept[owner] *= 1.0 - disc;
            }
            psi.normalize()?;
        }
        if real {
            report.norm_corrections = kept.iter().map(|k| 1.0 - k.sqrt()).collect();
        }
        Ok(report)
    }
}
