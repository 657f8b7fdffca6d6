//! Transfer-matrix contractions: overlaps, local expectation values,
//! operator insertions and projection onto other states.
//!
//! Left environments are `L[bra, ket]`, right environments `R[ket, bra]`.

use ndarray::{s, Array2, Array3};
use ndarray_linalg::Solve;

use super::{lift_op, Mps};
use crate::error::{Error, Result};
use crate::linalg::{Field, Truncation};
use crate::model::LocalSpace;

/// One operator per site, applied simultaneously (a bond-dimension-one
/// operator string).
#[derive(Debug, Clone, PartialEq)]
pub struct ProductOperator<T> {
    pub ops: Vec<Array2<T>>,
}

impl<T: Field> ProductOperator<T> {
    pub fn from_fn(spaces: &[LocalSpace], f: impl Fn(&LocalSpace) -> Array2<T>) -> Self {
        Self { ops: spaces.iter().map(f).collect() }
    }

    pub fn identity(spaces: &[LocalSpace]) -> Self {
        Self::from_fn(spaces, |s| lift_op(&s.identity()))
    }
}

fn apply_physical<T: Field>(t: &Array3<T>, op: &Array2<T>) -> Array3<T> {
    let (a, d, b) = t.dim();
    let mut out = Array3::zeros((a, d, b));
    for i in 0..a {
        out.slice_mut(s![i, .., ..]).assign(&op.dot(&t.slice(s![i, .., ..])));
    }
    out
}

fn conj<T: Field>(m: &Array2<T>) -> Array2<T> {
    m.mapv(|x| x.conj())
}

pub(crate) fn transfer_left<T: Field>(l: &Array2<T>, bra: &Array3<T>, ket: &Array3<T>, op: Option<&Array2<T>>) -> Array2<T> {
    let (da, d, da2) = ket.dim();
    let (db, _, db2) = bra.dim();
    let k = ket.to_shape((da, d * da2)).unwrap();
    let mut t1 = l.dot(&k).into_shape_with_order((db, d, da2)).unwrap();
    if let Some(op) = op {
        t1 = apply_physical(&t1, op);
    }
    let t1 = t1.into_shape_with_order((db * d, da2)).unwrap();
    let b = bra.to_shape((db * d, db2)).unwrap();
    conj(&b.t().to_owned()).dot(&t1)
}

pub(crate) fn transfer_right<T: Field>(r: &Array2<T>, bra: &Array3<T>, ket: &Array3<T>, op: Option<&Array2<T>>) -> Array2<T> {
    let (da, d, da2) = ket.dim();
    let (db, _, db2) = bra.dim();
    let k = ket.to_shape((da * d, da2)).unwrap();
    let mut t1 = k.dot(r).into_shape_with_order((da, d, db2)).unwrap();
    if let Some(op) = op {
        t1 = apply_physical(&t1, op);
    }
    let t1 = t1.into_shape_with_order((da, d * db2)).unwrap();
    let b = bra.to_shape((db, d * db2)).unwrap();
    t1.dot(&conj(&b.t().to_owned()))
}

fn trace<T: Field>(l: &Array2<T>, r: &Array2<T>) -> T {
    let mut acc = T::zero();
    for i in 0..l.nrows() {
        for j in 0..l.ncols() {
            acc += l[[i, j]] * r[[j, i]];
        }
    }
    acc
}

fn unit<T: Field>() -> Array2<T> {
    Array2::from_elem((1, 1), T::one())
}

impl<T: Field> Mps<T> {
    pub(super) fn check_compatible(&self, other: &Mps<T>) -> Result<()> {
        if self.spaces != other.spaces {
            return Err(Error::DimensionMismatch("states live on different chains".into()));
        }
        Ok(())
    }

    fn check_op(&self, site: usize, op: &Array2<T>) -> Result<()> {
        self.check_site(site)?;
        let d = self.spaces[site].dim();
        if op.dim() != (d, d) {
            return Err(Error::DimensionMismatch(format!("operator {:?} on site {site} of dimension {d}", op.dim())));
        }
        Ok(())
    }

    /// `L_0 … L_N` with `self` as bra.
    pub(crate) fn left_envs(&self, ket: &Mps<T>) -> Vec<Array2<T>> {
        let mut envs = vec![unit()];
        for i in 0..self.n_sites() {
            let next = transfer_left(&envs[i], &self.tensors[i], &ket.tensors[i], None);
            envs.push(next);
        }
        envs
    }

    /// `R_0 … R_N` with `self` as bra; `R_i` covers sites `i..N`.
    pub(crate) fn right_envs(&self, ket: &Mps<T>) -> Vec<Array2<T>> {
        let n = self.n_sites();
        let mut envs = vec![unit(); n + 1];
        for i in (0..n).rev() {
            envs[i] = transfer_right(&envs[i + 1], &self.tensors[i], &ket.tensors[i], None);
        }
        envs
    }

    fn contract_with(&self, ket: &Mps<T>, op_at: impl Fn(usize) -> Option<Array2<T>>) -> T {
        let mut l = unit();
        for i in 0..self.n_sites() {
            let op = op_at(i);
            l = transfer_left(&l, &self.tensors[i], &ket.tensors[i], op.as_ref());
        }
        l[[0, 0]]
    }

    /// `⟨self|ket⟩`.
    pub fn overlap(&self, ket: &Mps<T>) -> Result<T> {
        self.check_compatible(ket)?;
        Ok(self.contract_with(ket, |_| None))
    }

    /// `⟨self| O₁ O₂ |ket⟩` for at most two site-local insertions; operators
    /// on the same site are composed in the listed order.
    pub fn overlap_with_insertion(&self, ket: &Mps<T>, insertions: &[(usize, Array2<T>)]) -> Result<T> {
        self.check_compatible(ket)?;
        if insertions.len() > 2 {
            return Err(Error::Unsupported(format!("{} insertions; at most two are supported", insertions.len())));
        }
        for (site, op) in insertions {
            self.check_op(*site, op)?;
        }
        let composed = |site: usize| -> Option<Array2<T>> {
            insertions
                .iter()
                .filter(|(s, _)| *s == site)
                .map(|(_, o)| o.clone())
                .reduce(|a, b| a.dot(&b))
        };
        Ok(self.contract_with(ket, composed))
    }

    /// `⟨ψ|O_site|ψ⟩`, using the orthogonality center when there is one.
    pub fn expect_local(&self, site: usize, op: &Array2<T>) -> Result<T> {
        self.check_op(site, op)?;
        if self.center == Some(site) {
            let t = &self.tensors[site];
            let ot = apply_physical(t, op);
            return Ok(t.iter().zip(ot.iter()).fold(T::zero(), |acc, (a, b)| acc + a.conj() * *b));
        }
        Ok(self.contract_with(self, |i| (i == site).then(|| op.clone())))
    }

    /// `⟨ψ|O_x|ψ⟩` for every site with one operator per site.
    pub fn expect_each_site(&self, ops: &[Array2<T>]) -> Result<Vec<T>> {
        self.insertion_amplitudes(self, ops)
    }

    /// `⟨self|O_x|ket⟩` for every site `x`.
    pub fn insertion_amplitudes(&self, ket: &Mps<T>, ops: &[Array2<T>]) -> Result<Vec<T>> {
        self.check_compatible(ket)?;
        if ops.len() != self.n_sites() {
            return Err(Error::DimensionMismatch(format!("{} operators for {} sites", ops.len(), self.n_sites())));
        }
        for (i, o) in ops.iter().enumerate() {
            self.check_op(i, o)?;
        }
        let left = self.left_envs(ket);
        let right = self.right_envs(ket);
        Ok((0..self.n_sites())
            .map(|x| {
                let l = transfer_left(&left[x], &self.tensors[x], &ket.tensors[x], Some(&ops[x]));
                trace(&l, &right[x + 1])
            })
            .collect())
    }

    /// Symmetric matrix `M[x, x'] = ⟨self| O_x O_{x'} |ket⟩` for commuting
    /// site operators, in `O(N²)` transfer steps.
    pub fn pair_amplitudes(&self, ket: &Mps<T>, ops: &[Array2<T>]) -> Result<Array2<T>> {
        self.two_point(ket, ops, ops)
    }

    /// `M[x, y] = ⟨self| A_x B_y |ket⟩`; on the diagonal the product `A_x B_x`.
    pub fn two_point(&self, ket: &Mps<T>, a: &[Array2<T>], b: &[Array2<T>]) -> Result<Array2<T>> {
        self.check_compatible(ket)?;
        let n = self.n_sites();
        if a.len() != n || b.len() != n {
            return Err(Error::DimensionMismatch(format!("{} and {} operators for {n} sites", a.len(), b.len())));
        }
        for i in 0..n {
            self.check_op(i, &a[i])?;
            self.check_op(i, &b[i])?;
        }
        let left = self.left_envs(ket);
        let right = self.right_envs(ket);
        let same = a == b;
        let mut m = Array2::zeros((n, n));
        for x in 0..n {
            let prod = a[x].dot(&b[x]);
            let l = transfer_left(&left[x], &self.tensors[x], &ket.tensors[x], Some(&prod));
            m[[x, x]] = trace(&l, &right[x + 1]);
            // first operator on x, second on every y > x
            for (first, second, upper) in [(a, b, true), (b, a, false)] {
                if same && !upper {
                    break;
                }
                let mut e = transfer_left(&left[x], &self.tensors[x], &ket.tensors[x], Some(&first[x]));
                for y in x + 1..n {
                    let l = transfer_left(&e, &self.tensors[y], &ket.tensors[y], Some(&second[y]));
                    let v = trace(&l, &right[y + 1]);
                    if upper {
                        m[[x, y]] = v;
                        if same {
                            m[[y, x]] = v;
                        }
                    } else {
                        m[[y, x]] = v;
                    }
                    if y + 1 < n {
                        e = transfer_left(&e, &self.tensors[y], &ket.tensors[y], None);
                    }
                }
            }
        }
        Ok(m)
    }

    /// `⟨ψ|P|ψ⟩` for a product operator.
    pub fn expect_product(&self, op: &ProductOperator<T>) -> Result<T> {
        if op.ops.len() != self.n_sites() {
            return Err(Error::DimensionMismatch(format!("{} operators for {} sites", op.ops.len(), self.n_sites())));
        }
        for (i, o) in op.ops.iter().enumerate() {
            self.check_op(i, o)?;
        }
        Ok(self.contract_with(self, |i| Some(op.ops[i].clone())))
    }

    /// Expectation values of nearest-neighbour operators `h_b` on bonds `(b, b+1)`.
    pub fn bond_expectations(&self, bond_ops: &[Array2<T>]) -> Result<Vec<T>> {
        let n = self.n_sites();
        if bond_ops.len() + 1 != n {
            return Err(Error::DimensionMismatch(format!("{} bond operators for {n} sites", bond_ops.len())));
        }
        let left = self.left_envs(self);
        let right = self.right_envs(self);
        let mut out = Vec::with_capacity(n - 1);
        for (b, h) in bond_ops.iter().enumerate() {
            let (t1, t2) = (&self.tensors[b], &self.tensors[b + 1]);
            let (da, d1, dm) = t1.dim();
            let (_, d2, dc) = t2.dim();
            if h.dim() != (d1 * d2, d1 * d2) {
                return Err(Error::DimensionMismatch(format!("bond operator {b} has shape {:?}", h.dim())));
            }
            let theta = t1
                .to_shape((da * d1, dm))
                .unwrap()
                .dot(&t2.to_shape((dm, d2 * dc)).unwrap())
                .into_shape_with_order((da, d1 * d2, dc))?;
            let htheta = apply_physical(&theta, h);
            let x = left[b].dot(&htheta.into_shape_with_order((da, d1 * d2 * dc))?);
            let x = x.into_shape_with_order((da * d1 * d2, dc))?.dot(&right[b + 2]);
            let val = theta.iter().zip(x.iter()).fold(T::zero(), |acc, (a, v)| acc + a.conj() * *v);
            out.push(val);
        }
        Ok(out)
    }

    /// `⟨ψ|H|ψ⟩ / ⟨ψ|ψ⟩` for `H = Σ_b h_b`.
    pub fn energy(&self, bond_h: &[Array2<f64>]) -> Result<f64> {
        let ops: Vec<Array2<T>> = bond_h.iter().map(lift_op).collect();
        let e: T = self.bond_expectations(&ops)?.into_iter().fold(T::zero(), |a, b| a + b);
        let n2 = self.norm().powi(2);
        Ok(e.re() / n2)
    }

    /// Replaces `ψ` by `(1 − P)ψ / ‖(1 − P)ψ‖`, with `P` the projector onto the
    /// span of `others`. The difference is formed exactly as a direct sum and
    /// compressed back to `d_max`; the small overlap left by truncation is then
    /// removed from the center tensor alone, which makes `⟨g|ψ⟩ = 0` exact.
    pub fn orthogonalize_against(&mut self, others: &[&Mps<T>]) -> Result<()> {
        if others.is_empty() {
            return Ok(());
        }
        for g in others {
            self.check_compatible(g)?;
        }
        let same: Vec<&Mps<T>> = others.iter().copied().filter(|g| g.labels[g.n_sites()] == self.labels[self.n_sites()]).collect();
        if same.is_empty() {
            return Ok(());
        }
        let k = same.len();
        let mut gram = Array2::<T>::zeros((k, k));
        for i in 0..k {
            for j in 0..k {
                gram[[i, j]] = same[i].overlap(same[j])?;
            }
        }
        let rhs: ndarray::Array1<T> = same.iter().map(|g| g.overlap(self)).collect::<Result<_>>()?;
        let coeffs = gram.solve_into(rhs)?;
        let before = self.norm();
        let mut terms = vec![(T::one(), &*self)];
        terms.extend(coeffs.iter().zip(&same).map(|(c, g)| (T::zero() - *c, *g)));
        let mut diff = Mps::direct_sum(&terms)?;
        diff.compress(Truncation { max_bond: self.d_max, svd_tol: 0.0 })?;
        let n = diff.norm();
        if !(n > 1e-12 * before) {
            return Err(Error::NormCollapse { norm: n / before });
        }
        diff.truncation_log = self.truncation_log;
        *self = diff;
        self.project_center(&same)
    }

    /// Removes the components along `others` by editing the center tensor
    /// only; exact in overlap but not a true projection unless the components
    /// are already small. Renormalizes.
    fn project_center(&mut self, others: &[&Mps<T>]) -> Result<()> {
        let c = match self.center {
            Some(c) => c,
            None => {
                self.move_center(0)?;
                0
            }
        };
        let rows = self.row_parities(c);
        let right_labels = self.labels[c + 1].clone();
        let d = self.spaces[c].dim();
        let mut projected: Vec<Array3<T>> = Vec::new();
        for g in others {
            let mut l = unit();
            for i in 0..c {
                l = transfer_left(&l, &self.tensors[i], &g.tensors[i], None);
            }
            let mut r = unit();
            for i in (c + 1..self.n_sites()).rev() {
                r = transfer_right(&r, &self.tensors[i], &g.tensors[i], None);
            }
            let gt = &g.tensors[c];
            let (ga, _, gb) = gt.dim();
            let lg = l.dot(&gt.to_shape((ga, d * gb)).unwrap());
            let db = l.nrows();
            let mut p = lg.into_shape_with_order((db * d, gb))?.dot(&r).into_shape_with_order((db, d, r.ncols()))?;
            for ((a, s, b), x) in p.indexed_iter_mut() {
                if rows[a * d + s] != right_labels[b] {
                    *x = T::zero();
                }
            }
            let weight: f64 = p.iter().map(|x| x.abs() * x.abs()).sum();
            if weight > 1e-24 {
                projected.push(p);
            }
        }
        if projected.is_empty() {
            return Ok(());
        }
        let inner = |a: &Array3<T>, b: &Array3<T>| a.iter().zip(b.iter()).fold(T::zero(), |acc, (x, y)| acc + x.conj() * *y);
        let k = projected.len();
        let center = &self.tensors[c];
        let gram = Array2::from_shape_fn((k, k), |(i, j)| inner(&projected[i], &projected[j]));
        let rhs = ndarray::Array1::from_shape_fn(k, |i| inner(&projected[i], center));
        let alpha = gram.solve_into(rhs)?;
        let mut updated = center.clone();
        for (a, p) in alpha.iter().zip(&projected) {
            updated.zip_mut_with(p, |u, v| *u -= *a * *v);
        }
        self.tensors[c] = updated;
        let n = self.norm();
        if n < 1e-12 {
            return Err(Error::NormCollapse { norm: n });
        }
        self.normalize()?;
        Ok(())
    }
}
