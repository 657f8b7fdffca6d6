//! Binary checkpoints, all integers and floats little-endian:
//!
//! ```text
//! magic      8 bytes  "VQMPSCKP"
//! version    u32      CHECKPOINT_VERSION
//! complex    u8       1 if the state was stored as complex
//! n_sites    u64
//! d_max      u64
//! center     i64      −1 when not canonical
//! trunc_log  f64
//! per site   u8 qubit flag, u64 n_max
//! per bond   u64 length, then one u8 parity label per bond state (N + 1 bonds)
//! per site   u64 × 3 shape (left, physical, right), then re, im f64 pairs in row-major order
//! ```

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array3;
use num_complex::Complex64 as C64;

use super::Mps;
use crate::error::{Error, Result};
use crate::linalg::Field;
use crate::model::LocalSpace;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"VQMPSCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn write_checkpoint<T: Field, W: Write>(w: &mut W, mps: &Mps<T>) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&[T::IS_COMPLEX as u8])?;
    w.write_all(&(mps.n_sites() as u64).to_le_bytes())?;
    w.write_all(&(mps.d_max as u64).to_le_bytes())?;
    w.write_all(&mps.center.map_or(-1i64, |c| c as i64).to_le_bytes())?;
    w.write_all(&mps.truncation_log.to_le_bytes())?;
    for sp in &mps.spaces {
        w.write_all(&[sp.qubit as u8])?;
        w.write_all(&(sp.n_max as u64).to_le_bytes())?;
    }
    for l in &mps.labels {
        w.write_all(&(l.len() as u64).to_le_bytes())?;
        w.write_all(l)?;
    }
    for t in &mps.tensors {
        for d in t.shape() {
            w.write_all(&(*d as u64).to_le_bytes())?;
        }
        for x in t.iter() {
            let z = x.as_c();
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    Ok(())
}

struct Input<R>(R);

impl<R: Read> Input<R> {
    fn bytes<const K: usize>(&mut self) -> Result<[u8; K]> {
        let mut b = [0u8; K];
        self.0.read_exact(&mut b).map_err(|e| bad(format!("truncated checkpoint: {e}")))?;
        Ok(b)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.bytes()?);
        usize::try_from(v).map_err(|_| bad("size does not fit in memory"))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
}

// Sanity bounds against corrupt headers.
const MAX_SITES: usize = 1 << 20;
const MAX_DIM: usize = 1 << 16;

pub fn read_checkpoint<T: Field, R: Read>(r: R) -> Result<Mps<T>> {
    let mut inp = Input(r);
    if &inp.bytes::<8>()? != CHECKPOINT_MAGIC {
        return Err(bad("not an MPS checkpoint"));
    }
    let version = u32::from_le_bytes(inp.bytes()?);
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    // storage flag; imaginary parts are validated entry by entry below
    inp.u8()?;
    let n = inp.u64()?;
    if n == 0 || n > MAX_SITES {
        return Err(bad(format!("implausible site count {n}")));
    }
    let d_max = inp.u64()?;
    let center = i64::from_le_bytes(inp.bytes()?);
    let center = if center < 0 { None } else { Some(center as usize) };
    let truncation_log = inp.f64()?;
    let mut spaces = Vec::with_capacity(n);
    for _ in 0..n {
        let qubit = inp.u8()? == 1;
        let n_max = inp.u64()?;
        if n_max >= MAX_DIM {
            return Err(bad(format!("implausible photon cutoff {n_max}")));
        }
        spaces.push(LocalSpace { n_max, qubit });
    }
    let mut labels = Vec::with_capacity(n + 1);
    for _ in 0..=n {
        let len = inp.u64()?;
        if len == 0 || len > MAX_DIM {
            return Err(bad(format!("implausible bond dimension {len}")));
        }
        let mut l = vec![0u8; len];
        inp.0.read_exact(&mut l).map_err(|e| bad(format!("truncated checkpoint: {e}")))?;
        if l.iter().any(|&x| x > 1) {
            return Err(bad("bond labels must be 0 or 1"));
        }
        labels.push(l);
    }
    let mut tensors = Vec::with_capacity(n);
    for i in 0..n {
        let shape = (inp.u64()?, inp.u64()?, inp.u64()?);
        if shape != (labels[i].len(), spaces[i].dim(), labels[i + 1].len()) {
            return Err(bad(format!("tensor {i} shape {shape:?} disagrees with header")));
        }
        let mut data = Vec::with_capacity(shape.0 * shape.1 * shape.2);
        for _ in 0..shape.0 * shape.1 * shape.2 {
            let z = C64::new(inp.f64()?, inp.f64()?);
            if !T::IS_COMPLEX && z.im != 0.0 {
                return Err(bad("complex checkpoint cannot be loaded as a real state"));
            }
            data.push(T::from_c64(z));
        }
        tensors.push(Array3::from_shape_vec(shape, data)?);
    }
    Mps::from_parts(tensors, labels, spaces, d_max, center, truncation_log)
}

impl<T: Field> Mps<T> {
    /// Writes a checkpoint through a temporary file and rename.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut w = BufWriter::new(fs::File::create(&tmp)?);
            write_checkpoint(&mut w, self)?;
            w.flush()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_checkpoint(BufReader::new(fs::File::open(path)?))
    }
}
