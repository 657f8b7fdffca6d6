//! Dense and sparse linear-algebra helpers shared by the model, polaron and
//! MPS layers: parity-graded SVD, Hermitian exponentials, a CSR matrix and a
//! Lanczos solver for the lowest eigenpair.

use ndarray::{Array1, Array2, Axis};
use ndarray_linalg::{Eigh, JobSvd, Lapack, Scalar, SVDDCInto, UPLO};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Scalar field an MPS can be stored in. Imaginary-time searches run in `f64`,
/// real-time evolution in `C64`.
pub trait Field: Scalar<Real = f64, Complex = C64> + Lapack + Send + Sync + 'static {
    /// Narrowing conversion; the real implementation drops the imaginary part.
    fn from_c64(z: C64) -> Self;

    const IS_COMPLEX: bool;
}

impl Field for f64 {
    fn from_c64(z: C64) -> Self {
        z.re
    }
    const IS_COMPLEX: bool = false;
}

impl Field for C64 {
    fn from_c64(z: C64) -> Self {
        z
    }
    const IS_COMPLEX: bool = true;
}

/// Truncation policy for bond splits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    pub max_bond: usize,
    /// Largest discarded weight, relative to the total squared norm.
    pub svd_tol: f64,
}

impl Truncation {
    /// Keeps everything except numerically zero singular values.
    pub fn exact() -> Self {
        Self { max_bond: usize::MAX, svd_tol: 0.0 }
    }
}

/// Result of a graded SVD: `m ≈ left · diag(sing) · right`.
#[derive(Debug, Clone)]
pub struct Split<T> {
    pub left: Array2<T>,
    pub sing: Vec<f64>,
    pub right: Array2<T>,
    /// Parity label of each kept singular vector.
    pub labels: Vec<u8>,
    /// Discarded squared weight relative to the total.
    pub discarded: f64,
    /// Total squared Frobenius norm of the decomposed blocks.
    pub norm2: f64,
}

// Relative weight below which singular values count as numerical zeros.
const ZERO_WEIGHT: f64 = 1e-28;

/// SVD of a matrix that is block diagonal in a Z2 label: entry (i, j) can only
/// be non-zero when `row_par[i] == col_par[j]`. Entries outside the blocks are
/// ignored, which projects the matrix onto the graded subspace. Singular values
/// from both blocks compete for the kept bond dimension.
pub fn graded_svd<T: Field>(
    m: &Array2<T>,
    row_par: &[u8],
    col_par: &[u8],
    trunc: Truncation,
) -> Result<Split<T>> {
    let (nr, nc) = m.dim();
    if row_par.len() != nr || col_par.len() != nc {
        return Err(Error::DimensionMismatch(format!(
            "graded svd: matrix {nr}x{nc}, labels {}x{}",
            row_par.len(),
            col_par.len()
        )));
    }

    struct Block<T> {
        rows: Vec<usize>,
        cols: Vec<usize>,
        u: Array2<T>,
        s: Array1<f64>,
        vt: Array2<T>,
    }

    let mut blocks: Vec<(u8, Block<T>)> = Vec::with_capacity(2);
    for p in 0..2u8 {
        let rows: Vec<usize> = (0..nr).filter(|&i| row_par[i] == p).collect();
        let cols: Vec<usize> = (0..nc).filter(|&j| col_par[j] == p).collect();
        if rows.is_empty() || cols.is_empty() {
            continue;
        }
        let sub = m.select(Axis(0), &rows).select(Axis(1), &cols);
        if sub.iter().all(|x| x.abs() == 0.0) {
            continue;
        }
        let (u, s, vt) = sub.svddc_into(JobSvd::Some)?;
        let (u, vt) = match (u, vt) {
            (Some(u), Some(vt)) => (u, vt),
            _ => return Err(Error::Unsupported("svd returned no singular vectors".into())),
        };
        blocks.push((p, Block { rows, cols, u, s, vt }));
    }

    // (singular value, block slot, index within block)
    let mut all: Vec<(f64, usize, usize)> = Vec::new();
    for (slot, (_, b)) in blocks.iter().enumerate() {
        for (j, &s) in b.s.iter().enumerate() {
            all.push((s, slot, j));
        }
    }
    let norm2: f64 = all.iter().map(|x| x.0 * x.0).sum();
    if all.is_empty() || norm2 == 0.0 {
        return Err(Error::NormCollapse { norm: 0.0 });
    }
    all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let tol = trunc.svd_tol.max(ZERO_WEIGHT) * norm2;
    let mut keep = all.len();
    let mut tail = 0.0;
    while keep > 1 {
        let w = all[keep - 1].0 * all[keep - 1].0;
        if tail + w > tol {
            break;
        }
        tail += w;
        keep -= 1;
    }
    keep = keep.min(trunc.max_bond.max(1));
    let discarded: f64 = all[keep..].iter().map(|x| x.0 * x.0).sum::<f64>() / norm2;

    let mut left = Array2::<T>::zeros((nr, keep));
    let mut right = Array2::<T>::zeros((keep, nc));
    let mut sing = Vec::with_capacity(keep);
    let mut labels = Vec::with_capacity(keep);
    for (k, &(s, slot, j)) in all[..keep].iter().enumerate() {
        let (p, b) = &blocks[slot];
        for (i, &r) in b.rows.iter().enumerate() {
            left[[r, k]] = b.u[[i, j]];
        }
        for (c, &col) in b.cols.iter().enumerate() {
            right[[k, col]] = b.vt[[j, c]];
        }
        sing.push(s);
        labels.push(*p);
    }
    Ok(Split { left, sing, right, labels, discarded, norm2 })
}

/// Step of a propagator `exp(-i h dt)` (real time) or `exp(-h dt)` (imaginary time).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    Real(f64),
    Imaginary(f64),
}

/// Exponential of a real symmetric matrix as a propagator.
pub fn hermitian_exp<T: Field>(h: &Array2<f64>, step: Step) -> Result<Array2<T>> {
    if let Step::Real(_) = step {
        if !T::IS_COMPLEX {
            return Err(Error::Unsupported("real-time propagators need complex storage".into()));
        }
    }
    let (vals, vecs) = h.eigh(UPLO::Lower)?;
    let n = vals.len();
    let phases: Vec<C64> = vals
        .iter()
        .map(|&l| match step {
            Step::Real(dt) => C64::from_polar(1.0, -l * dt),
            Step::Imaginary(dt) => C64::new((-l * dt).exp(), 0.0),
        })
        .collect();
    let mut out = Array2::<T>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..n {
                acc += phases[k] * vecs[[i, k]] * vecs[[j, k]];
            }
            out[[i, j]] = T::from_c64(acc);
        }
    }
    Ok(out)
}

/// Eigenvalues (ascending) and eigenvectors of a real symmetric matrix.
pub fn eigh_sym(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    Ok(a.eigh(UPLO::Lower)?)
}

/// Kronecker product of two square matrices.
pub fn kron<T: Field>(a: &Array2<T>, b: &Array2<T>) -> Array2<T> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::<T>::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let x = a[[i, j]];
            if x.abs() == 0.0 {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[[i * br + k, j * bc + l]] = x * b[[k, l]];
                }
            }
        }
    }
    out
}

/// Compressed sparse row matrix with real entries.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            indices.push(c);
            values.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        Self { n, indptr, indices, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                acc += self.values[k] * x[self.indices[k]];
            }
            y[i] = acc;
        }
    }

    /// Dense principal submatrix on the given (ascending) index set.
    pub fn principal_dense(&self, idx: &[usize]) -> Array2<f64> {
        let mut pos = vec![usize::MAX; self.n];
        for (j, &i) in idx.iter().enumerate() {
            pos[i] = j;
        }
        let mut out = Array2::zeros((idx.len(), idx.len()));
        for (r, &i) in idx.iter().enumerate() {
            for k in self.indptr[i]..self.indptr[i + 1] {
                let c = pos[self.indices[k]];
                if c != usize::MAX {
                    out[[r, c]] += self.values[k];
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for k in self.indptr[i]..self.indptr[i + 1] {
                out[[i, self.indices[k]]] += self.values[k];
            }
        }
        out
    }
}

/// Lowest eigenpair of a real symmetric operator by restarted Lanczos with
/// full reorthogonalization.
pub fn lanczos_lowest<F>(dim: usize, apply: F, start: &[f64], tol: f64, max_iter: usize) -> Result<(f64, Vec<f64>)>
where
    F: Fn(&[f64], &mut [f64]),
{
    if start.len() != dim {
        return Err(Error::DimensionMismatch(format!("lanczos start vector {} vs {dim}", start.len())));
    }
    let krylov_max = dim.clamp(1, 160);
    let mut v0: Vec<f64> = start.to_vec();
    let mut total = 0usize;
    let mut w = vec![0.0; dim];

    loop {
        let nrm = norm(&v0);
        if nrm == 0.0 {
            return Err(Error::NormCollapse { norm: 0.0 });
        }
        v0.iter_mut().for_each(|x| *x /= nrm);
        let mut basis: Vec<Vec<f64>> = vec![v0.clone()];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();

        loop {
            let m = alpha.len();
            apply(&basis[m], &mut w);
            total += 1;
            alpha.push(dot(&w, &basis[m]));
            // full reorthogonalization, twice for stability
            for _ in 0..2 {
                for b in &basis {
                    let c = dot(&w, b);
                    w.iter_mut().zip(b).for_each(|(wi, bi)| *wi -= c * bi);
                }
            }
            let bnorm = norm(&w);

            let k = alpha.len();
            let mut t = Array2::<f64>::zeros((k, k));
            for i in 0..k {
                t[[i, i]] = alpha[i];
                if i + 1 < k {
                    t[[i, i + 1]] = beta[i];
                    t[[i + 1, i]] = beta[i];
                }
            }
            let (vals, vecs) = eigh_sym(&t)?;
            let res = (bnorm * vecs[[k - 1, 0]]).abs();
            let converged = res < tol || bnorm < 1e-14 || k == dim;
            if converged || k == krylov_max || total >= max_iter {
                let mut x = vec![0.0; dim];
                for (i, b) in basis.iter().enumerate() {
                    let c = vecs[[i, 0]];
                    x.iter_mut().zip(b).for_each(|(xi, bi)| *xi += c * bi);
                }
                let n = norm(&x);
                x.iter_mut().for_each(|xi| *xi /= n);
                if converged {
                    return Ok((vals[0], x));
                }
                if total >= max_iter {
                    return Err(Error::NoConvergence { iterations: total, residual: res });
                }
                v0 = x;
                break;
            }
            beta.push(bnorm);
            basis.push(w.iter().map(|x| x / bnorm).collect());
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn graded_svd_reconstructs_block_matrix() {
        // rows/cols with labels 0,1,0 / 1,0
        let m: Array2<f64> = array![[0.0, 2.0], [3.0, 0.0], [0.0, 1.0]];
        let sp = graded_svd(&m, &[0, 1, 0], &[1, 0], Truncation::exact()).unwrap();
        let mut rec = sp.left.clone();
        for (k, s) in sp.sing.iter().enumerate() {
            rec.column_mut(k).mapv_inplace(|x| x * s);
        }
        let rec = rec.dot(&sp.right);
        for (a, b) in rec.iter().zip(m.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(sp.sing.len(), 2);
        assert_eq!(sp.labels, vec![1, 0]);
        assert!(sp.discarded < 1e-15);
    }

    #[test]
    fn graded_svd_truncates_to_cap() {
        let m: Array2<f64> = array![[3.0, 0.0], [0.0, 1.0]];
        let sp = graded_svd(&m, &[0, 1], &[0, 1], Truncation { max_bond: 1, svd_tol: 0.0 }).unwrap();
        assert_eq!(sp.sing, vec![3.0]);
        assert!((sp.discarded - 0.1).abs() < 1e-12);
    }

    #[test]
    fn hermitian_exp_matches_pauli_rotation() {
        let sx: Array2<f64> = array![[0.0, 1.0], [1.0, 0.0]];
        let u: Array2<C64> = hermitian_exp(&sx, Step::Real(0.3)).unwrap();
        assert!((u[[0, 0]] - C64::new(0.3f64.cos(), 0.0)).norm() < 1e-12);
        assert!((u[[0, 1]] - C64::new(0.0, -(0.3f64.sin()))).norm() < 1e-12);
        let e: Array2<f64> = hermitian_exp(&sx, Step::Imaginary(0.3)).unwrap();
        assert!((e[[0, 1]] + 0.3f64.sinh()).abs() < 1e-12);
        assert!(hermitian_exp::<f64>(&sx, Step::Real(0.1)).is_err());
    }

    #[test]
    fn lanczos_finds_lowest_of_tridiagonal_chain() {
        let n = 200;
        let mut trip = Vec::new();
        for i in 0..n {
            trip.push((i, i, 2.0));
            if i + 1 < n {
                trip.push((i, i + 1, -1.0));
                trip.push((i + 1, i, -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, trip);
        let start: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * i as f64).collect();
        let (e, v) = lanczos_lowest(n, |x, y| a.matvec(x, y), &start, 1e-10, 5000).unwrap();
        let exact = 2.0 - 2.0 * (std::f64::consts::PI / (n as f64 + 1.0)).cos();
        assert!((e - exact).abs() < 1e-9, "{e} vs {exact}");
        assert!((norm(&v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csr_sums_duplicates() {
        let a = CsrMatrix::from_triplets(2, vec![(0, 1, 1.0), (0, 1, 2.0), (1, 0, 3.0)]);
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.to_dense(), array![[0.0, 3.0], [3.0, 0.0]]);
    }
}
