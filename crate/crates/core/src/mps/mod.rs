//! Matrix product states on the dressed cavity chain.
//!
//! Every bond carries a Z2 label per bond state (parity of everything to its
//! left) and tensors only couple labels consistent with the local parity, so
//! states always have definite total parity and parity projection is exact.

mod contract;
mod io;
mod tebd;

pub use contract::ProductOperator;
pub use io::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use tebd::{RunReport, Tebd, TrotterOrder};

use ndarray::{s, Array2, Array3};
use num_complex::Complex64 as C64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{graded_svd, Field, Truncation};
use crate::model::{site_spaces, LocalSpace, ModelParams};

/// Default discarded-weight threshold per split.
pub const DEFAULT_SVD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Mps<T> {
    tensors: Vec<Array3<T>>,
    /// `labels[i]` labels the bond left of site `i`; `labels[N]` holds the total parity.
    labels: Vec<Vec<u8>>,
    spaces: Vec<LocalSpace>,
    pub d_max: usize,
    center: Option<usize>,
    truncation_log: f64,
}

/// Complex state used for real-time evolution.
pub type MpsState = Mps<C64>;

fn lift<T: Field>(x: f64) -> T {
    T::from_real(x)
}

/// Real operator matrix in the storage field.
pub fn lift_op<T: Field>(m: &Array2<f64>) -> Array2<T> {
    m.mapv(lift)
}

/// Product state on the chain of `params` with local basis indices `config`.
pub fn product_state<T: Field>(params: &ModelParams, n_max: usize, config: &[usize], d_max: usize) -> Result<Mps<T>> {
    Mps::product_state(site_spaces(params, n_max), config, d_max)
}

impl<T: Field> Mps<T> {
    pub fn product_state(spaces: Vec<LocalSpace>, config: &[usize], d_max: usize) -> Result<Self> {
        if config.len() != spaces.len() {
            return Err(Error::DimensionMismatch(format!("{} indices for {} sites", config.len(), spaces.len())));
        }
        if d_max == 0 {
            return Err(crate::error::invalid("d_max", "must be >= 1"));
        }
        let mut labels = vec![vec![0u8]];
        let mut tensors = Vec::with_capacity(spaces.len());
        for (site, (sp, &c)) in spaces.iter().zip(config).enumerate() {
            if c >= sp.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "site {site}: basis index {c} outside local dimension {}",
                    sp.dim()
                )));
            }
            let mut t = Array3::zeros((1, sp.dim(), 1));
            t[[0, c, 0]] = T::one();
            tensors.push(t);
            let last = labels.last().unwrap()[0];
            labels.push(vec![last ^ sp.parity(c)]);
        }
        Ok(Self { tensors, labels, spaces, d_max, center: Some(0), truncation_log: 0.0 })
    }

    pub fn vacuum(spaces: Vec<LocalSpace>, d_max: usize) -> Self {
        let n = spaces.len();
        Self::product_state(spaces, &vec![0; n], d_max).expect("vacuum indices are always valid")
    }

    /// Graded MPS of a dense vector in the product basis (site 0 most
    /// significant). The vector must have definite parity; components of the
    /// other parity are dropped.
    pub fn from_dense(spaces: Vec<LocalSpace>, psi: &[T], trunc: Truncation) -> Result<Self> {
        let dims: Vec<usize> = spaces.iter().map(|s| s.dim()).collect();
        let total: usize = dims.iter().product();
        if psi.len() != total {
            return Err(Error::DimensionMismatch(format!("vector of {} for space of {total}", psi.len())));
        }
        let n = spaces.len();
        // parity of each basis state, and of each suffix configuration
        let state_parity = |mut idx: usize, from: usize| -> u8 {
            let mut p = 0;
            for s in (from..n).rev() {
                p ^= spaces[s].parity(idx % dims[s]);
                idx /= dims[s];
            }
            p
        };
        let peak = (0..total)
            .max_by(|&a, &b| psi[a].abs().total_cmp(&psi[b].abs()))
            .ok_or(Error::NormCollapse { norm: 0.0 })?;
        let total_parity = state_parity(peak, 0);

        let mut labels = vec![vec![0u8]];
        let mut tensors = Vec::with_capacity(n);
        let mut rest = Array2::from_shape_vec((1, total), psi.to_vec())?;
        for site in 0..n - 1 {
            let (dl, d) = (rest.nrows(), dims[site]);
            let cols = rest.ncols() / d;
            let m = rest.into_shape_with_order((dl * d, cols))?;
            let row_par: Vec<u8> =
                (0..dl * d).map(|r| labels[site][r / d] ^ spaces[site].parity(r % d)).collect();
            let col_par: Vec<u8> = (0..cols).map(|c| total_parity ^ state_parity(c, site + 1)).collect();
            let split = graded_svd(&m, &row_par, &col_par, trunc)?;
            let k = split.sing.len();
            tensors.push(split.left.into_shape_with_order((dl, d, k))?);
            let mut r = split.right;
            for (i, s) in split.sing.iter().enumerate() {
                r.row_mut(i).mapv_inplace(|x| x * lift::<T>(*s));
            }
            labels.push(split.labels);
            rest = r;
        }
        let dl = rest.nrows();
        tensors.push(rest.into_shape_with_order((dl, dims[n - 1], 1))?);
        labels.push(vec![total_parity]);
        let d_max = labels.iter().map(|l| l.len()).max().unwrap_or(1);
        Ok(Self { tensors, labels, spaces, d_max, center: Some(n - 1), truncation_log: 0.0 })
    }

    /// Full state vector; exponential in N, for tests and oracles.
    pub fn to_dense(&self) -> Vec<T> {
        let mut acc = Array2::<T>::ones((1, 1));
        for t in &self.tensors {
            let (dl, d, dr) = t.dim();
            let rows = acc.nrows();
            let m = t.view().into_shape_with_order((dl, d * dr)).unwrap();
            acc = acc.dot(&m).into_shape_with_order((rows * d, dr)).unwrap();
        }
        acc.into_iter().collect()
    }

    pub fn n_sites(&self) -> usize {
        self.tensors.len()
    }

    pub fn spaces(&self) -> &[LocalSpace] {
        &self.spaces
    }

    pub fn local_dims(&self) -> Vec<usize> {
        self.spaces.iter().map(|s| s.dim()).collect()
    }

    pub fn tensor(&self, site: usize) -> &Array3<T> {
        &self.tensors[site]
    }

    pub fn tensors(&self) -> &[Array3<T>] {
        &self.tensors
    }

    pub fn bond_labels(&self) -> &[Vec<u8>] {
        &self.labels
    }

    /// Dimensions of the `N + 1` bonds including the trivial boundaries.
    pub fn bond_dims(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l.len()).collect()
    }

    pub fn max_bond(&self) -> usize {
        self.labels.iter().map(|l| l.len()).max().unwrap_or(1)
    }

    pub fn center(&self) -> Option<usize> {
        self.center
    }

    /// Accumulated relative discarded weight of all truncations.
    pub fn truncation_log(&self) -> f64 {
        self.truncation_log
    }

    /// `+1` or `−1`.
    pub fn parity(&self) -> i8 {
        if self.labels[self.n_sites()][0] == 0 { 1 } else { -1 }
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.n_sites() {
            return Err(Error::SiteOutOfRange { site, n_sites: self.n_sites() });
        }
        Ok(())
    }

    pub(crate) fn row_parities(&self, site: usize) -> Vec<u8> {
        let d = self.spaces[site].dim();
        let left = &self.labels[site];
        (0..left.len() * d).map(|r| left[r / d] ^ self.spaces[site].parity(r % d)).collect()
    }

    pub(crate) fn col_parities(&self, site: usize) -> Vec<u8> {
        let d = self.spaces[site].dim();
        let right = &self.labels[site + 1];
        (0..d * right.len()).map(|c| right[c % right.len()] ^ self.spaces[site].parity(c / right.len())).collect()
    }

    /// Moves the center one site right through an exact split.
    fn shift_right(&mut self, site: usize) -> Result<()> {
        let (dl, d, dr) = self.tensors[site].dim();
        let m = self.tensors[site].to_shape((dl * d, dr))?.to_owned();
        let split = graded_svd(&m, &self.row_parities(site), &self.labels[site + 1], Truncation::exact())?;
        let k = split.sing.len();
        self.tensors[site] = split.left.into_shape_with_order((dl, d, k))?;
        let mut sv = split.right;
        for (i, s) in split.sing.iter().enumerate() {
            sv.row_mut(i).mapv_inplace(|x| x * lift::<T>(*s));
        }
        let next = &self.tensors[site + 1];
        let (_, d2, dr2) = next.dim();
        let merged = sv.dot(&next.to_shape((dr, d2 * dr2))?);
        self.tensors[site + 1] = merged.into_shape_with_order((k, d2, dr2))?;
        self.labels[site + 1] = split.labels;
        Ok(())
    }

    /// Moves the center one site left through a split truncated by `trunc`;
    /// returns the discarded weight.
    fn shift_left(&mut self, site: usize, trunc: Truncation) -> Result<f64> {
        let (dl, d, dr) = self.tensors[site].dim();
        let m = self.tensors[site].to_shape((dl, d * dr))?.to_owned();
        let split = graded_svd(&m, &self.labels[site], &self.col_parities(site), trunc)?;
        let k = split.sing.len();
        self.tensors[site] = split.right.into_shape_with_order((k, d, dr))?;
        let mut us = split.left;
        for (i, s) in split.sing.iter().enumerate() {
            us.column_mut(i).mapv_inplace(|x| x * lift::<T>(*s));
        }
        let prev = &self.tensors[site - 1];
        let (dl0, d0, _) = prev.dim();
        let merged = prev.to_shape((dl0 * d0, dl))?.dot(&us);
        self.tensors[site - 1] = merged.into_shape_with_order((dl0, d0, k))?;
        self.labels[site] = split.labels;
        Ok(split.discarded)
    }

    /// Truncates every bond to `trunc` with one left-canonical pass and one
    /// truncating sweep back; leaves the center at site 0. Returns the summed
    /// discarded weight.
    pub fn compress(&mut self, trunc: Truncation) -> Result<f64> {
        let n = self.n_sites();
        self.canonicalize(n - 1)?;
        let mut discarded = 0.0;
        for i in (1..n).rev() {
            discarded += self.shift_left(i, trunc)?;
        }
        self.center = Some(0);
        self.truncation_log += discarded;
        Ok(discarded)
    }

    /// Exact MPS of `Σ c_k |φ_k⟩` with block-diagonal tensors; all terms must
    /// share spaces and total parity.
    pub(crate) fn direct_sum(terms: &[(T, &Mps<T>)]) -> Result<Self> {
        let (_, first) = *terms.first().ok_or_else(|| Error::DimensionMismatch("empty sum".into()))?;
        let n = first.n_sites();
        for (_, m) in terms {
            first.check_compatible(m)?;
            if m.labels[n] != first.labels[n] {
                return Err(Error::Unsupported("sum of states with different parity".into()));
            }
        }
        let mut labels = vec![vec![0u8]];
        for i in 1..n {
            labels.push(terms.iter().flat_map(|(_, m)| m.labels[i].iter().copied()).collect());
        }
        labels.push(first.labels[n].clone());
        let mut tensors = Vec::with_capacity(n);
        for i in 0..n {
            let d = first.spaces[i].dim();
            let (dl, dr) = (labels[i].len(), labels[i + 1].len());
            let mut t = Array3::<T>::zeros((dl, d, dr));
            let (mut l0, mut r0) = (0, 0);
            for (c, m) in terms {
                let src = &m.tensors[i];
                let (a, _, b) = src.dim();
                let ls = if i == 0 { 0..1 } else { l0..l0 + a };
                let rs = if i == n - 1 { 0..1 } else { r0..r0 + b };
                let mut dst = t.slice_mut(s![ls, .., rs]);
                if i == 0 {
                    dst += &src.mapv(|x| x * *c);
                } else {
                    dst += src;
                }
                l0 += a;
                r0 += b;
            }
            tensors.push(t);
        }
        Mps::from_parts(tensors, labels, first.spaces.clone(), first.d_max, None, first.truncation_log)
    }

    /// Brings the state into mixed canonical form around `site`.
    pub fn move_center(&mut self, site: usize) -> Result<()> {
        self.check_site(site)?;
        match self.center {
            Some(c) if c <= site => {
                for i in c..site {
                    self.shift_right(i)?;
                }
            }
            Some(c) => {
                for i in (site + 1..=c).rev() {
                    self.shift_left(i, Truncation::exact())?;
                }
            }
            None => {
                for i in 0..site {
                    self.shift_right(i)?;
                }
                for i in (site + 1..self.n_sites()).rev() {
                    self.shift_left(i, Truncation::exact())?;
                }
            }
        }
        self.center = Some(site);
        Ok(())
    }

    pub fn canonicalize(&mut self, site: usize) -> Result<()> {
        self.center = None;
        self.move_center(site)
    }

    /// Largest deviation of the isometry conditions from the identity.
    pub fn canonical_error(&self) -> Option<f64> {
        let c = self.center?;
        let mut worst = 0.0f64;
        for (i, t) in self.tensors.iter().enumerate() {
            if i == c {
                continue;
            }
            let (dl, d, dr) = t.dim();
            let g = if i < c {
                let m = t.to_shape((dl * d, dr)).unwrap();
                m.t().mapv(|x| x.conj()).dot(&m)
            } else {
                let m = t.to_shape((dl, d * dr)).unwrap();
                m.dot(&m.t().mapv(|x| x.conj()))
            };
            for ((r, col), v) in g.indexed_iter() {
                let target = if r == col { 1.0 } else { 0.0 };
                worst = worst.max((v.as_c() - C64::new(target, 0.0)).norm());
            }
        }
        Some(worst)
    }

    pub fn norm(&self) -> f64 {
        match self.center {
            Some(c) => self.tensors[c].iter().map(|x| x.abs() * x.abs()).sum::<f64>().sqrt(),
            None => self.overlap(self).map(|z| z.re().sqrt()).unwrap_or(f64::NAN),
        }
    }

    /// Rescales to unit norm and returns the norm before scaling.
    pub fn normalize(&mut self) -> Result<f64> {
        let n = self.norm();
        if !(n > 1e-300) || !n.is_finite() {
            return Err(Error::NormCollapse { norm: n });
        }
        let site = self.center.unwrap_or(0);
        self.tensors[site].mapv_inplace(|x| x * lift::<T>(1.0 / n));
        Ok(n)
    }

    /// Applies a gate on the adjacent pair `sites` and re-splits with at most
    /// `d_max` states and discarded weight at most `svd_tol`. Returns the
    /// discarded weight relative to the pre-truncation norm.
    pub fn apply_two_site_gate(&mut self, sites: (usize, usize), gate: &Array2<T>, svd_tol: f64) -> Result<f64> {
        let (i, j) = sites;
        self.check_site(i)?;
        self.check_site(j)?;
        if j != i + 1 {
            return Err(Error::NonAdjacent(i, j));
        }
        let (d1, d2) = (self.spaces[i].dim(), self.spaces[j].dim());
        if gate.dim() != (d1 * d2, d1 * d2) {
            return Err(Error::DimensionMismatch(format!(
                "gate {:?} on sites of dimension {d1} and {d2}",
                gate.dim()
            )));
        }
        // sweep direction follows the current center
        let to_right = match self.center {
            Some(c) if c == i => true,
            Some(c) if c == j => false,
            Some(c) if c < i => {
                self.move_center(i)?;
                true
            }
            _ => {
                self.move_center(j)?;
                false
            }
        };
        let (dl, _, dm) = self.tensors[i].dim();
        let dr = self.tensors[j].dim().2;
        let a = self.tensors[i].to_shape((dl * d1, dm))?;
        let b = self.tensors[j].to_shape((dm, d2 * dr))?;
        // theta[l, s1 s2, r] -> [s1 s2, l r]
        let theta = a.dot(&b).into_shape_with_order((dl, d1 * d2, dr))?;
        let flat = theta.permuted_axes([1, 0, 2]).as_standard_layout().into_owned();
        let flat = flat.into_shape_with_order((d1 * d2, dl * dr))?;
        let out = gate.dot(&flat).into_shape_with_order((d1 * d2, dl, dr))?;
        let theta = out.permuted_axes([1, 0, 2]).as_standard_layout().into_owned();
        let m = theta.into_shape_with_order((dl * d1, d2 * dr))?;

        let row_par = self.row_parities(i);
        let right = &self.labels[j + 1];
        let col_par: Vec<u8> = (0..d2 * dr).map(|c| right[c % dr] ^ self.spaces[j].parity(c / dr)).collect();
        let trunc = Truncation { max_bond: self.d_max, svd_tol };
        let split = graded_svd(&m, &row_par, &col_par, trunc)?;
        let k = split.sing.len();
        let (mut left, mut rightm) = (split.left, split.right);
        if to_right {
            for (r, s) in split.sing.iter().enumerate() {
                rightm.row_mut(r).mapv_inplace(|x| x * lift::<T>(*s));
            }
        } else {
            for (c, s) in split.sing.iter().enumerate() {
                left.column_mut(c).mapv_inplace(|x| x * lift::<T>(*s));
            }
        }
        self.tensors[i] = left.into_shape_with_order((dl, d1, k))?;
        self.tensors[j] = rightm.into_shape_with_order((k, d2, dr))?;
        self.labels[j] = split.labels;
        self.center = Some(if to_right { j } else { i });
        self.truncation_log += split.discarded;
        Ok(split.discarded)
    }

    /// Adds noise of relative size `eps` to every symmetry-allowed entry,
    /// keeping the bond structure, then renormalizes.
    pub fn perturb<R: Rng>(&mut self, rng: &mut R, eps: f64) -> Result<()> {
        for site in 0..self.n_sites() {
            let rows = self.row_parities(site);
            let right = self.labels[site + 1].clone();
            let d = self.spaces[site].dim();
            let t = &mut self.tensors[site];
            for ((l, s, r), x) in t.indexed_iter_mut() {
                if rows[l * d + s] == right[r] {
                    let re: f64 = rng.random_range(-1.0..1.0);
                    let z = if T::IS_COMPLEX {
                        C64::new(re, rng.random_range(-1.0..1.0))
                    } else {
                        C64::new(re, 0.0)
                    };
                    *x += T::from_c64(z * eps);
                }
            }
        }
        self.canonicalize(0)?;
        self.normalize()?;
        Ok(())
    }

    /// Same state stored in another field. Narrowing to `f64` drops imaginary parts.
    pub fn convert<U: Field>(&self) -> Mps<U> {
        Mps {
            tensors: self.tensors.iter().map(|t| t.mapv(|x| U::from_c64(x.as_c()))).collect(),
            labels: self.labels.clone(),
            spaces: self.spaces.clone(),
            d_max: self.d_max,
            center: self.center,
            truncation_log: self.truncation_log,
        }
    }

    /// Site-local operator whose matrix respects the local parity grading.
    fn check_graded(&self, site: usize, op: &Array2<T>) -> Result<bool> {
        let sp = self.spaces[site];
        if op.dim() != (sp.dim(), sp.dim()) {
            return Err(Error::DimensionMismatch(format!(
                "operator {:?} on site {site} of dimension {}",
                op.dim(),
                sp.dim()
            )));
        }
        Ok(op.indexed_iter().all(|((r, c), v)| sp.parity(r) == sp.parity(c) || v.abs() == 0.0))
    }

    /// Multiplies site tensors by the given parity-preserving local operators;
    /// bond dimensions are unchanged. Canonical form survives unitary strings.
    pub fn apply_product_operator(&mut self, op: &ProductOperator<T>) -> Result<()> {
        if op.ops.len() != self.n_sites() {
            return Err(Error::DimensionMismatch(format!("{} operators for {} sites", op.ops.len(), self.n_sites())));
        }
        let mut unitary = true;
        for (site, o) in op.ops.iter().enumerate() {
            if !self.check_graded(site, o)? {
                return Err(Error::Unsupported(format!("operator on site {site} mixes local parities")));
            }
            let prod = o.t().mapv(|x| x.conj()).dot(o);
            unitary &= prod.indexed_iter().all(|((r, c), v)| {
                (v.as_c() - C64::new(if r == c { 1.0 } else { 0.0 }, 0.0)).norm() < 1e-12
            });
        }
        for (t, o) in self.tensors.iter_mut().zip(&op.ops) {
            let (dl, d, dr) = t.dim();
            let mut next = Array3::zeros((dl, d, dr));
            for l in 0..dl {
                let slab = t.slice(s![l, .., ..]);
                next.slice_mut(s![l, .., ..]).assign(&o.dot(&slab));
            }
            *t = next;
        }
        if !unitary {
            self.center = None;
        }
        Ok(())
    }

    pub(crate) fn from_parts(
        tensors: Vec<Array3<T>>,
        labels: Vec<Vec<u8>>,
        spaces: Vec<LocalSpace>,
        d_max: usize,
        center: Option<usize>,
        truncation_log: f64,
    ) -> Result<Self> {
        let n = spaces.len();
        if tensors.len() != n || labels.len() != n + 1 || n == 0 {
            return Err(Error::DimensionMismatch("inconsistent site counts".into()));
        }
        for (i, t) in tensors.iter().enumerate() {
            if t.dim() != (labels[i].len(), spaces[i].dim(), labels[i + 1].len()) {
                return Err(Error::DimensionMismatch(format!("tensor {i} has shape {:?}", t.dim())));
            }
        }
        if labels[0] != [0] || labels[n].len() != 1 {
            return Err(Error::DimensionMismatch("boundary bonds must be one-dimensional".into()));
        }
        if center.is_some_and(|c| c >= n) {
            return Err(Error::SiteOutOfRange { site: center.unwrap(), n_sites: n });
        }
        Ok(Self { tensors, labels, spaces, d_max, center, truncation_log })
    }

    /// False when any tensor entry is NaN or infinite.
    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|x| x.abs().is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermitian_exp, kron, Step};
    use crate::model::{dense_hamiltonian, exact_sector_minima};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(n: usize, g: f64) -> ModelParams {
        ModelParams::new(1.0, 0.4, n, 0.3, g).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn product_state_basics() {
        let p = params(6, 0.3);
        let vac: Mps<f64> = product_state(&p, 2, &[0; 6], 10).unwrap();
        assert_eq!(vac.parity(), 1);
        assert!((vac.norm() - 1.0).abs() < 1e-15);
        assert!(product_state::<f64>(&p, 2, &[0, 0, 0, 6, 0, 0], 10).is_err());
        assert!(product_state::<f64>(&p, 2, &[0, 0, 0, 5, 0, 0], 10).is_ok());
        let one: Mps<f64> = product_state(&p, 2, &[0, 0, 0, 1, 0, 0], 10).unwrap();
        assert_eq!(one.parity(), -1);
    }

    #[test]
    fn direct_sum_and_compression() {
        let p = params(6, 0.3);
        let sp = site_spaces(&p, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut a = Mps::<f64>::vacuum(sp.clone(), 6);
        a.perturb(&mut rng, 0.4).unwrap();
        let mut b = Mps::<f64>::vacuum(sp.clone(), 6);
        b.perturb(&mut rng, 0.4).unwrap();
        let sum = Mps::direct_sum(&[(2.0, &a), (-0.5, &b)]).unwrap();
        let expected: Vec<f64> = a.to_dense().iter().zip(b.to_dense()).map(|(x, y)| 2.0 * x - 0.5 * y).collect();
        assert!(close(&sum.to_dense(), &expected, 1e-12));
        let mut exact = sum.clone();
        assert!(exact.compress(Truncation::exact()).unwrap() < 1e-20);
        assert!(close(&exact.to_dense(), &expected, 1e-12));
        assert!(exact.canonical_error().unwrap() < 1e-10);
        let mut small = sum;
        let disc = small.compress(Truncation { max_bond: 1, svd_tol: 0.0 }).unwrap();
        assert!(small.max_bond() == 1 && disc > 0.0);
        let odd: Mps<f64> = product_state(&p, 2, &[0, 0, 1, 0, 0, 0], 4).unwrap();
        assert!(Mps::direct_sum(&[(1.0, &a), (1.0, &odd)]).is_err());
    }

    #[test]
    fn dense_round_trip() {
        let p = params(4, 0.3);
        let ed = exact_sector_minima(&p, 2).unwrap();
        for v in [&ed.even_state, &ed.odd_state] {
            let m = Mps::<f64>::from_dense(site_spaces(&p, 2), v, Truncation::exact()).unwrap();
            assert!(close(&m.to_dense(), v, 1e-12));
            assert!(m.canonical_error().unwrap() < 1e-10);
        }
    }

    #[test]
    fn center_moves_keep_isometries_and_state() {
        let p = params(6, 0.3);
        let ed = exact_sector_minima(&p, 2).unwrap();
        let mut m = Mps::<f64>::from_dense(site_spaces(&p, 2), &ed.odd_state, Truncation::exact()).unwrap();
        for c in [0, 3, 5, 1] {
            m.move_center(c).unwrap();
            assert!(m.canonical_error().unwrap() < 1e-10);
            assert!(close(&m.to_dense(), &ed.odd_state, 1e-12));
        }
        assert_eq!(m.parity(), -1);
    }

    #[test]
    fn identity_gate_is_harmless() {
        let p = params(4, 0.3);
        let ed = exact_sector_minima(&p, 2).unwrap();
        let mut m = Mps::<f64>::from_dense(site_spaces(&p, 2), &ed.even_state, Truncation::exact()).unwrap();
        let d = m.local_dims();
        let eye = Array2::eye(d[1] * d[2]);
        let w = m.apply_two_site_gate((1, 2), &eye, 0.0).unwrap();
        assert!(w < 1e-20);
        assert!(close(&m.to_dense(), &ed.even_state, 1e-12));
        assert!(matches!(m.apply_two_site_gate((0, 2), &eye, 0.0), Err(Error::NonAdjacent(0, 2))));
    }

    #[test]
    fn hopping_gate_matches_dense_two_site_unitary() {
        let p = params(4, 0.0);
        let mut m: MpsState = product_state(&p, 2, &[0, 1, 0, 0], 10).unwrap();
        let sp = LocalSpace::cavity(2);
        let hop = kron(&sp.create(), &sp.annihilate()) + kron(&sp.annihilate(), &sp.create());
        let t = 0.7;
        let gate = hermitian_exp::<C64>(&(hop * -0.4), Step::Real(t)).unwrap();
        m.apply_two_site_gate((0, 1), &gate, 0.0).unwrap();
        // one photon: cos(Jt) stays, i sin(Jt) hops
        let n = sp.number().mapv(C64::from);
        let n0 = m.expect_local(0, &n).unwrap().re;
        let n1 = m.expect_local(1, &n).unwrap().re;
        assert!((n0 - (0.4f64 * t).sin().powi(2)).abs() < 1e-12);
        assert!((n1 - (0.4f64 * t).cos().powi(2)).abs() < 1e-12);
        assert!((m.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_gates_preserve_norm_and_canonical_form() {
        let p = params(6, 0.5);
        let mut m: MpsState = product_state(&p, 2, &[0; 6], 40).unwrap();
        let terms = crate::model::local_terms(&p, 2).unwrap();
        let hb = terms.bond_hamiltonians();
        for sweep in 0..3 {
            for b in 0..5 {
                let b = if sweep % 2 == 0 { b } else { 4 - b };
                let g = hermitian_exp::<C64>(&hb[b], Step::Real(0.3)).unwrap();
                m.apply_two_site_gate((b, b + 1), &g, 0.0).unwrap();
                assert!((m.norm() - 1.0).abs() < 1e-12);
                assert!(m.canonical_error().unwrap() < 1e-10);
            }
        }
        assert_eq!(m.parity(), 1);
        let dense = m.to_dense();
        let h = dense_hamiltonian(&p, 2).unwrap();
        let mut e = C64::new(0.0, 0.0);
        for (i, row) in h.outer_iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                e += dense[i].conj() * v * dense[j];
            }
        }
        assert!((m.energy(&hb).unwrap() - e.re).abs() < 1e-10);
    }

    #[test]
    fn perturbation_respects_parity() {
        let p = params(6, 0.3);
        let mut m: Mps<f64> = product_state(&p, 2, &[0, 0, 0, 1, 0, 0], 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        m.perturb(&mut rng, 0.1).unwrap();
        let basis = crate::model::FockBasis::new(site_spaces(&p, 2));
        let par = crate::model::parity_diagonal(&basis);
        let v = m.to_dense();
        assert!(v.iter().zip(&par).all(|(x, &s)| s == -1 || x.abs() < 1e-14));
        assert!((m.norm() - 1.0).abs() < 1e-12);
        assert!(v.iter().filter(|x| x.abs() > 1e-6).count() > 10);
    }
}
