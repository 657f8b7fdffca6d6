use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

/// Truncated local Hilbert space of one lattice site: photons `0..=n_max`,
/// optionally fused with the emitter. Fused basis index is
/// `qubit * (n_max + 1) + photons`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LocalSpace {
    pub n_max: usize,
    pub qubit: bool,
}

impl LocalSpace {
    pub fn cavity(n_max: usize) -> Self {
        Self { n_max, qubit: false }
    }

    pub fn dressed(n_max: usize) -> Self {
        Self { n_max, qubit: true }
    }

    pub fn dim(&self) -> usize {
        (self.n_max + 1) * if self.qubit { 2 } else { 1 }
    }

    pub fn index(&self, qubit: usize, photons: usize) -> usize {
        qubit * (self.n_max + 1) + photons
    }

    pub fn photons(&self, idx: usize) -> usize {
        idx % (self.n_max + 1)
    }

    pub fn qubit_state(&self, idx: usize) -> usize {
        idx / (self.n_max + 1)
    }

    /// Parity `(photons + qubit) mod 2` of a basis state.
    pub fn parity(&self, idx: usize) -> u8 {
        ((self.photons(idx) + self.qubit_state(idx)) % 2) as u8
    }

    pub fn parities(&self) -> Vec<u8> {
        (0..self.dim()).map(|i| self.parity(i)).collect()
    }

    fn from_fn(&self, f: impl Fn(usize, usize) -> f64) -> Array2<f64> {
        let d = self.dim();
        Array2::from_shape_fn((d, d), |(r, c)| f(r, c))
    }

    pub fn identity(&self) -> Array2<f64> {
        Array2::eye(self.dim())
    }

    pub fn number(&self) -> Array2<f64> {
        self.from_fn(|r, c| if r == c { self.photons(c) as f64 } else { 0.0 })
    }

    /// Photon creation `a†`, acting on the photon factor only.
    pub fn create(&self) -> Array2<f64> {
        self.from_fn(|r, c| {
            let n = self.photons(c);
            if self.qubit_state(r) == self.qubit_state(c) && self.photons(r) == n + 1 {
                ((n + 1) as f64).sqrt()
            } else {
                0.0
            }
        })
    }

    pub fn annihilate(&self) -> Array2<f64> {
        self.create().t().to_owned()
    }

    /// `σ⁺σ⁻`; zero matrix on a bare cavity.
    pub fn qubit_excited(&self) -> Array2<f64> {
        self.from_fn(|r, c| if r == c && self.qubit_state(c) == 1 { 1.0 } else { 0.0 })
    }

    /// `σx ⊗ 1`; zero matrix on a bare cavity.
    pub fn sigma_x(&self) -> Array2<f64> {
        self.from_fn(|r, c| {
            if self.qubit && self.photons(r) == self.photons(c) && self.qubit_state(r) != self.qubit_state(c) {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Local parity `(−1)^{n + σ⁺σ⁻}`.
    pub fn parity_op(&self) -> Array2<f64> {
        self.from_fn(|r, c| if r == c { if self.parity(c) == 0 { 1.0 } else { -1.0 } } else { 0.0 })
    }

    /// `exp(iθ n̂)` counting photons only.
    pub fn photon_phase(&self, theta: f64) -> Array2<C64> {
        let d = self.dim();
        Array2::from_shape_fn((d, d), |(r, c)| {
            if r == c {
                C64::from_polar(1.0, theta * self.photons(c) as f64)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commutator_of_ladder_ops_is_identity_below_cutoff() {
        let s = LocalSpace::dressed(3);
        let a = s.annihilate();
        let ad = s.create();
        let comm = a.dot(&ad) - ad.dot(&a);
        for i in 0..s.dim() {
            let expected = if s.photons(i) == s.n_max { -(s.n_max as f64) } else { 1.0 };
            assert!((comm[[i, i]] - expected).abs() < 1e-12);
        }
        let diff = ad.dot(&a) - s.number();
        assert!(diff.iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn dressed_parity_counts_qubit() {
        let s = LocalSpace::dressed(2);
        assert_eq!(s.dim(), 6);
        assert_eq!(s.parities(), vec![0, 1, 0, 1, 0, 1]);
        let sx = s.sigma_x();
        assert_eq!(sx.dot(&sx), s.identity());
        assert_eq!(LocalSpace::cavity(2).sigma_x(), Array2::<f64>::zeros((3, 3)));
    }
}
