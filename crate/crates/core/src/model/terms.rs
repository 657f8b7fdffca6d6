use ndarray::Array2;

use super::{LocalSpace, ModelParams};
use crate::error::{invalid, Result};
use crate::linalg::kron;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermKind {
    /// `Ω a†a`
    OnSite,
    /// `−J (a†_x a_{x+1} + H.c.)`
    Hopping,
    /// `Δ σ⁺σ⁻`
    QubitEnergy,
    /// `g σx (a + a†)`
    QubitCoupling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermSites {
    One(usize),
    /// Bond between `site` and `site + 1`.
    Two(usize),
}

#[derive(Debug, Clone)]
pub struct LocalTerm {
    pub kind: TermKind,
    pub sites: TermSites,
    pub matrix: Array2<f64>,
}

/// Position-space Hamiltonian on an open chain as a sum of one- and two-site
/// terms over truncated local spaces.
#[derive(Debug, Clone)]
pub struct LocalTerms {
    pub spaces: Vec<LocalSpace>,
    pub terms: Vec<LocalTerm>,
}

pub fn site_spaces(params: &ModelParams, n_max: usize) -> Vec<LocalSpace> {
    (0..params.n_sites)
        .map(|x| if x == params.qubit_site { LocalSpace::dressed(n_max) } else { LocalSpace::cavity(n_max) })
        .collect()
}

pub fn local_terms(params: &ModelParams, n_max: usize) -> Result<LocalTerms> {
    if n_max < 1 {
        return Err(invalid("n_max", "must be >= 1"));
    }
    build_terms(params, n_max)
}

pub(crate) fn build_terms(params: &ModelParams, n_max: usize) -> Result<LocalTerms> {
    if params.n_sites < 2 {
        return Err(invalid("n_sites", "need at least two sites"));
    }
    if params.qubit_site >= params.n_sites {
        return Err(invalid("qubit_site", "outside the chain"));
    }
    let spaces = site_spaces(params, n_max);
    let mut terms = Vec::new();
    for (x, s) in spaces.iter().enumerate() {
        if params.omega != 0.0 {
            terms.push(LocalTerm { kind: TermKind::OnSite, sites: TermSites::One(x), matrix: s.number() * params.omega });
        }
        if s.qubit {
            if params.delta != 0.0 {
                terms.push(LocalTerm {
                    kind: TermKind::QubitEnergy,
                    sites: TermSites::One(x),
                    matrix: s.qubit_excited() * params.delta,
                });
            }
            if params.g != 0.0 {
                let field = s.create() + s.annihilate();
                terms.push(LocalTerm {
                    kind: TermKind::QubitCoupling,
                    sites: TermSites::One(x),
                    matrix: s.sigma_x().dot(&field) * params.g,
                });
            }
        }
    }
    for x in 0..spaces.len() - 1 {
        let (l, r) = (spaces[x], spaces[x + 1]);
        let hop = kron(&l.create(), &r.annihilate()) + kron(&l.annihilate(), &r.create());
        terms.push(LocalTerm { kind: TermKind::Hopping, sites: TermSites::Two(x), matrix: hop * (-params.j_hop) });
    }
    Ok(LocalTerms { spaces, terms })
}

impl LocalTerms {
    pub fn n_sites(&self) -> usize {
        self.spaces.len()
    }

    pub fn has_kind(&self, kind: TermKind) -> bool {
        self.terms.iter().any(|t| t.kind == kind)
    }

    /// Sum of the one-site terms on `site`.
    pub fn onsite(&self, site: usize) -> Array2<f64> {
        let d = self.spaces[site].dim();
        let mut h = Array2::zeros((d, d));
        for t in &self.terms {
            if t.sites == TermSites::One(site) {
                h += &t.matrix;
            }
        }
        h
    }

    /// Two-site operator on bond `(b, b+1)` built from the hopping term plus
    /// each site's one-site terms, shared equally among the bonds touching it.
    /// Summing over all bonds reproduces the full Hamiltonian.
    pub fn bond_hamiltonians(&self) -> Vec<Array2<f64>> {
        let n = self.n_sites();
        let share = |x: usize| if x == 0 || x == n - 1 { 1.0 } else { 0.5 };
        (0..n - 1)
            .map(|b| {
                let (l, r) = (self.spaces[b], self.spaces[b + 1]);
                let mut h = kron(&self.onsite(b), &r.identity()) * share(b)
                    + kron(&l.identity(), &self.onsite(b + 1)) * share(b + 1);
                for t in &self.terms {
                    if t.sites == TermSites::Two(b) {
                        h += &t.matrix;
                    }
                }
                h
            })
            .collect()
    }
}
