//! Polaron Hamiltonian restricted to fixed excitation number:
//!
//! `H_p = Δ_r σ⁺σ⁻ + Σ ω_k a_k†a_k − 2Δ_r (σ⁺ Σ f_k a_k + H.c.)
//!        − 2Δ_r σz Σ f_k f_p a_k†a_p + E_GS`
//!
//! Sector one holds `|e,0⟩` then `|g,1_k⟩`. Sector two holds `|e,1_p⟩` then
//! the two-photon states `|g,1_k1_p⟩` (`k < p`) and `|g,2_k⟩`; internally
//! the two-photon block is a symmetric `N×N` matrix `Ψ` with Frobenius norm.

use ndarray::Array2;

use super::PolaronSolution;
use crate::error::{invalid, Error, Result};
use crate::linalg::{eigh_sym, lanczos_lowest};

const DENSE_MAX: usize = 1500;
const LANCZOS_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SectorOperator {
    pub n_exc: usize,
    delta_r: f64,
    offset: f64,
    f: Vec<f64>,
    omega: Vec<f64>,
}

impl SectorOperator {
    pub fn new(sol: &PolaronSolution, n_exc: usize) -> Result<Self> {
        if !(n_exc == 1 || n_exc == 2) {
            return Err(invalid("n_exc", format!("only sectors 1 and 2 are supported, got {n_exc}")));
        }
        Ok(Self { n_exc, delta_r: sol.delta_r, offset: sol.e_gs, f: sol.f_k.clone(), omega: sol.omega_k.clone() })
    }

    fn modes(&self) -> usize {
        self.f.len()
    }

    /// Dimension of the orthonormal sector basis.
    pub fn dim(&self) -> usize {
        let n = self.modes();
        if self.n_exc == 1 { n + 1 } else { n + n * (n + 1) / 2 }
    }

    // Length of the vectors `apply_work` acts on.
    fn work_dim(&self) -> usize {
        let n = self.modes();
        if self.n_exc == 1 { n + 1 } else { n + n * n }
    }

    fn apply_work(&self, x: &[f64], y: &mut [f64]) {
        let n = self.modes();
        let (dr, f, w) = (self.delta_r, &self.f, &self.omega);
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        if self.n_exc == 1 {
            let (c, phi) = (x[0], &x[1..]);
            let fphi = dot(f, phi);
            y[0] = dr * c - 2.0 * dr * fphi + self.offset * c;
            for k in 0..n {
                y[k + 1] = (w[k] + self.offset) * phi[k] - 2.0 * dr * f[k] * c + 2.0 * dr * f[k] * fphi;
            }
            return;
        }
        let (phi, psi) = x.split_at(n);
        let (yphi, ypsi) = y.split_at_mut(n);
        let fphi = dot(f, phi);
        // Ψ f (equal to fᵀΨ by symmetry)
        let psi_f: Vec<f64> = (0..n).map(|k| dot(&psi[k * n..(k + 1) * n], f)).collect();
        let s2 = std::f64::consts::SQRT_2;
        for p in 0..n {
            yphi[p] = (dr + w[p] + self.offset) * phi[p] - 2.0 * dr * f[p] * fphi - 2.0 * dr * s2 * psi_f[p];
        }
        for k in 0..n {
            for p in 0..n {
                ypsi[k * n + p] = (w[k] + w[p] + self.offset) * psi[k * n + p]
                    + 2.0 * dr * (f[k] * psi_f[p] + psi_f[k] * f[p])
                    - 2.0 * dr * (f[k] * phi[p] + f[p] * phi[k]) / s2;
            }
        }
    }

    /// Packed orthonormal coordinates to the working layout.
    fn unpack(&self, c: &[f64]) -> Vec<f64> {
        let n = self.modes();
        if self.n_exc == 1 {
            return c.to_vec();
        }
        let mut x = vec![0.0; self.work_dim()];
        x[..n].copy_from_slice(&c[..n]);
        let mut i = n;
        for k in 0..n {
            for p in k..n {
                let v = if k == p { c[i] } else { c[i] / std::f64::consts::SQRT_2 };
                x[n + k * n + p] = v;
                x[n + p * n + k] = v;
                i += 1;
            }
        }
        x
    }

    fn pack(&self, x: &[f64]) -> Vec<f64> {
        let n = self.modes();
        if self.n_exc == 1 {
            return x.to_vec();
        }
        let mut c = Vec::with_capacity(self.dim());
        c.extend_from_slice(&x[..n]);
        for k in 0..n {
            for p in k..n {
                let v = x[n + k * n + p];
                c.push(if k == p { v } else { v * std::f64::consts::SQRT_2 });
            }
        }
        c
    }

    /// `H_p` applied to a vector in the orthonormal sector basis.
    pub fn apply(&self, c: &[f64], out: &mut [f64]) {
        let x = self.unpack(c);
        let mut y = vec![0.0; x.len()];
        self.apply_work(&x, &mut y);
        out.copy_from_slice(&self.pack(&y));
    }

    pub fn dense(&self) -> Array2<f64> {
        let d = self.dim();
        let mut h = Array2::zeros((d, d));
        let mut e = vec![0.0; d];
        let mut col = vec![0.0; d];
        for j in 0..d {
            e[j] = 1.0;
            self.apply(&e, &mut col);
            h.column_mut(j).assign(&ndarray::ArrayView1::from(&col[..]));
            e[j] = 0.0;
        }
        h
    }

    /// Lowest eigenvalue and its eigenvector in the orthonormal basis.
    pub fn lowest(&self) -> Result<(f64, Vec<f64>)> {
        if self.dim() <= DENSE_MAX {
            let (vals, vecs) = eigh_sym(&self.dense())?;
            return Ok((vals[0], vecs.column(0).to_vec()));
        }
        let n = self.modes();
        // even-in-k start with weight on every component
        let start: Vec<f64> = if self.n_exc == 1 {
            std::iter::once(1.0).chain(self.f.iter().map(|f| 1.0 + f)).collect()
        } else {
            let mut s: Vec<f64> = self.f.iter().map(|f| 1.0 + f).collect();
            for k in 0..n {
                for p in 0..n {
                    s.push(1.0 / n as f64 + self.f[k] * self.f[p]);
                }
            }
            s
        };
        let apply = |x: &[f64], y: &mut [f64]| self.apply_work(x, y);
        let (e, x) = lanczos_lowest(self.work_dim(), apply, &start, LANCZOS_TOL, 20_000)?;
        Ok((e, self.pack(&x)))
    }
}

/// Dense sector matrix; refused above a few thousand basis states, where
/// [`SectorOperator`] is the matrix-free alternative.
pub fn projected_sector_matrix(sol: &PolaronSolution, n_exc: usize) -> Result<Array2<f64>> {
    let op = SectorOperator::new(sol, n_exc)?;
    let d = op.dim();
    if d > 4 * DENSE_MAX {
        return Err(Error::DimensionCap { dim: d, bytes: d * d * 8, cap: 16 * DENSE_MAX * DENSE_MAX * 8 });
    }
    Ok(op.dense())
}

/// Lowest energies `(E1, E2)` of the one- and two-excitation sectors.
pub fn bound_state_energies(sol: &PolaronSolution) -> Result<(f64, f64)> {
    let e1 = SectorOperator::new(sol, 1)?.lowest()?.0;
    let e2 = SectorOperator::new(sol, 2)?.lowest()?.0;
    Ok((e1, e2))
}
