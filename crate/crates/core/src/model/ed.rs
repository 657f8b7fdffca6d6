//! Exact diagonalization on the truncated Fock space. This is the reference
//! oracle for small chains.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::terms::build_terms;
use super::{LocalSpace, LocalTerms, ModelParams, TermSites};
use crate::error::{Error, Result};
use crate::linalg::{eigh_sym, lanczos_lowest, CsrMatrix};

/// 1.5 GB of `f64`, enough for a 2·3⁸ dimensional matrix.
pub const DEFAULT_DENSE_CAP_BYTES: usize = 1_500_000_000;

/// Same budget for the sparse assembly, counted as triplets of 24 bytes.
pub const DEFAULT_SPARSE_CAP_BYTES: usize = 1_500_000_000;

/// Mixed-radix enumeration of product basis states; site 0 is the most
/// significant digit, matching the row-major layout of a contracted MPS.
#[derive(Debug, Clone)]
pub struct FockBasis {
    pub spaces: Vec<LocalSpace>,
    strides: Vec<usize>,
    dim: usize,
}

impl FockBasis {
    pub fn new(spaces: Vec<LocalSpace>) -> Self {
        let n = spaces.len();
        let mut strides = vec![1usize; n];
        for i in (0..n.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * spaces[i + 1].dim();
        }
        let dim = spaces.iter().map(|s| s.dim()).product();
        Self { spaces, strides, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn local(&self, idx: usize, site: usize) -> usize {
        (idx / self.strides[site]) % self.spaces[site].dim()
    }

    pub fn config(&self, idx: usize) -> Vec<usize> {
        (0..self.spaces.len()).map(|s| self.local(idx, s)).collect()
    }

    pub fn index(&self, config: &[usize]) -> usize {
        config.iter().zip(&self.strides).map(|(c, s)| c * s).sum()
    }

    fn checked_dim(spaces: &[LocalSpace]) -> Option<usize> {
        spaces.iter().try_fold(1usize, |acc, s| acc.checked_mul(s.dim()))
    }
}

fn column_entries(m: &Array2<f64>) -> Vec<Vec<(usize, f64)>> {
    (0..m.ncols())
        .map(|c| (0..m.nrows()).filter(|&r| m[[r, c]] != 0.0).map(|r| (r, m[[r, c]])).collect())
        .collect()
}

fn for_each_element(terms: &LocalTerms, basis: &FockBasis, mut f: impl FnMut(usize, usize, f64)) {
    for t in &terms.terms {
        let cols = column_entries(&t.matrix);
        match t.sites {
            TermSites::One(x) => {
                let st = basis.strides[x];
                for idx in 0..basis.dim {
                    let s = basis.local(idx, x);
                    for &(s2, v) in &cols[s] {
                        f(idx + s2 * st - s * st, idx, v);
                    }
                }
            }
            TermSites::Two(x) => {
                let d2 = basis.spaces[x + 1].dim();
                let (st1, st2) = (basis.strides[x], basis.strides[x + 1]);
                for idx in 0..basis.dim {
                    let (a, b) = (basis.local(idx, x), basis.local(idx, x + 1));
                    let base = idx - a * st1 - b * st2;
                    for &(s2, v) in &cols[a * d2 + b] {
                        let (a2, b2) = (s2 / d2, s2 % d2);
                        f(base + a2 * st1 + b2 * st2, idx, v);
                    }
                }
            }
        }
    }
}

/// Dense Hamiltonian with the default memory cap.
pub fn dense_hamiltonian(params: &ModelParams, n_max: usize) -> Result<Array2<f64>> {
    dense_hamiltonian_capped(params, n_max, DEFAULT_DENSE_CAP_BYTES)
}

/// Dense sum of all local terms; refuses when `dim² · 8` bytes exceed `cap_bytes`.
pub fn dense_hamiltonian_capped(params: &ModelParams, n_max: usize, cap_bytes: usize) -> Result<Array2<f64>> {
    let terms = build_terms(params, n_max)?;
    let dim = FockBasis::checked_dim(&terms.spaces).unwrap_or(usize::MAX);
    let bytes = dim.checked_mul(dim).and_then(|x| x.checked_mul(8)).unwrap_or(usize::MAX);
    if bytes > cap_bytes {
        return Err(Error::DimensionCap { dim, bytes, cap: cap_bytes });
    }
    let basis = FockBasis::new(terms.spaces.clone());
    let mut h = Array2::<f64>::zeros((dim, dim));
    for_each_element(&terms, &basis, |r, c, v| h[[r, c]] += v);
    Ok(h)
}

pub fn sparse_hamiltonian(params: &ModelParams, n_max: usize) -> Result<CsrMatrix> {
    let terms = build_terms(params, n_max)?;
    // a diagonal plus two hops per bond and the qubit term per row
    let dim = FockBasis::checked_dim(&terms.spaces).unwrap_or(usize::MAX);
    let bytes = dim.checked_mul(24 * (2 * terms.spaces.len() + 3)).unwrap_or(usize::MAX);
    if bytes > DEFAULT_SPARSE_CAP_BYTES {
        return Err(Error::DimensionCap { dim, bytes, cap: DEFAULT_SPARSE_CAP_BYTES });
    }
    let basis = FockBasis::new(terms.spaces.clone());
    let mut trip = Vec::new();
    for_each_element(&terms, &basis, |r, c, v| trip.push((r, c, v)));
    Ok(CsrMatrix::from_triplets(basis.dim, trip))
}

/// `(−1)^{total excitations}` for each basis state.
pub fn parity_diagonal(basis: &FockBasis) -> Vec<i8> {
    (0..basis.dim())
        .map(|i| {
            let p: usize = (0..basis.spaces.len()).map(|s| basis.spaces[s].parity(basis.local(i, s)) as usize).sum();
            if p % 2 == 0 { 1 } else { -1 }
        })
        .collect()
}

/// Total photon number (emitter excluded) of each basis state.
pub fn photon_number_diagonal(basis: &FockBasis) -> Vec<usize> {
    (0..basis.dim())
        .map(|i| (0..basis.spaces.len()).map(|s| basis.spaces[s].photons(basis.local(i, s))).sum())
        .collect()
}

/// Lowest eigenvalues of the full Hamiltonian and of its parity blocks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SectorMinima {
    pub ground: f64,
    pub even: f64,
    pub odd: f64,
    /// Second eigenvalue of the even block (dense path only).
    pub second_even: Option<f64>,
    pub even_state: Vec<f64>,
    pub odd_state: Vec<f64>,
    pub second_even_state: Option<Vec<f64>>,
}

// Parity blocks up to this size are diagonalized densely.
const DENSE_BLOCK_MAX: usize = 3000;

/// Parity-resolved exact diagonalization; eigenvectors are returned in the
/// full product basis.
pub fn exact_sector_minima(params: &ModelParams, n_max: usize) -> Result<SectorMinima> {
    let h = sparse_hamiltonian(params, n_max)?;
    let terms = build_terms(params, n_max)?;
    let basis = FockBasis::new(terms.spaces);
    let par = parity_diagonal(&basis);
    let mut out: Vec<(Vec<f64>, Vec<Vec<f64>>)> = Vec::new();
    for sign in [1i8, -1] {
        let idx: Vec<usize> = (0..basis.dim()).filter(|&i| par[i] == sign).collect();
        let want = if sign == 1 { 2 } else { 1 };
        if idx.len() <= DENSE_BLOCK_MAX {
            let dense = h.principal_dense(&idx);
            let (vals, vecs) = eigh_sym(&dense)?;
            let mut energies = Vec::new();
            let mut states = Vec::new();
            for k in 0..want.min(idx.len()) {
                let mut full = vec![0.0; basis.dim()];
                for (j, &i) in idx.iter().enumerate() {
                    full[i] = vecs[[j, k]];
                }
                energies.push(vals[k]);
                states.push(full);
            }
            out.push((energies, states));
        } else {
            let pos: Vec<Option<usize>> = {
                let mut p = vec![None; basis.dim()];
                for (j, &i) in idx.iter().enumerate() {
                    p[i] = Some(j);
                }
                p
            };
            let apply = |x: &[f64], y: &mut [f64]| {
                let mut full = vec![0.0; basis.dim()];
                for (j, &i) in idx.iter().enumerate() {
                    full[i] = x[j];
                }
                let mut hy = vec![0.0; basis.dim()];
                h.matvec(&full, &mut hy);
                for (i, v) in hy.iter().enumerate() {
                    if let Some(j) = pos[i] {
                        y[j] = *v;
                    }
                }
            };
            let start: Vec<f64> = (0..idx.len()).map(|j| 1.0 / (1.0 + j as f64)).collect();
            let (e, v) = lanczos_lowest(idx.len(), apply, &start, 1e-10, 20_000)?;
            let mut full = vec![0.0; basis.dim()];
            for (j, &i) in idx.iter().enumerate() {
                full[i] = v[j];
            }
            out.push((vec![e], vec![full]));
        }
    }
    let (even_e, mut even_s) = out.remove(0);
    let (odd_e, mut odd_s) = out.remove(0);
    let second_even_state = if even_s.len() > 1 { Some(even_s.remove(1)) } else { None };
    Ok(SectorMinima {
        ground: even_e[0].min(odd_e[0]),
        even: even_e[0],
        odd: odd_e[0],
        second_even: even_e.get(1).copied(),
        even_state: even_s.remove(0),
        odd_state: odd_s.remove(0),
        second_even_state,
    })
}

/// Eigenvalues of a dense symmetric matrix, ascending.
pub fn dense_spectrum(h: &Array2<f64>) -> Result<Array1<f64>> {
    Ok(eigh_sym(h)?.0)
}
