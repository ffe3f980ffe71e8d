//! Dense row-major tensors and their binary file format.
//!
//! The on-disk layout is little-endian throughout: the 4-byte magic
//! `RGT1`, a `u32` dtype code (0 = `f32`, 1 = `f64`), a `u32` rank,
//! `rank` dimension sizes as `u64`, then the row-major payload. Reading
//! accepts the tensor's own dtype or widens an `f32` file into an `f64`
//! tensor; narrowing is refused.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"RGT1";
const MAX_RANK: u32 = 8;

/// Dense row-major tensor. The last dimension varies fastest, so a
/// `(H, W, C)` tensor stores channels interleaved per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    dims: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(dims: Vec<usize>, data: Vec<S>) -> Result<Self> {
        let expect = checked_len(&dims)?;
        if data.len() != expect {
            return Err(Error::Shape(format!(
                "tensor data length {} does not match dims {:?} (expected {expect})",
                data.len(),
                dims
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let len = checked_len(&dims).expect("tensor dims overflow");
        Tensor { dims, data: vec![S::zero(); len] }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| T::of(v.to_f64_lossy())).collect(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&S::DTYPE_CODE.to_le_bytes())?;
        w.write_all(&(self.dims.len() as u32).to_le_bytes())?;
        for &d in &self.dims {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        match S::DTYPE_CODE {
            0 => {
                for &v in &self.data {
                    w.write_all(&(v.to_f64_lossy() as f32).to_le_bytes())?;
                }
            }
            _ => {
                for &v in &self.data {
                    w.write_all(&v.to_f64_lossy().to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        Self::read_from(&mut r).map_err(|e| match e {
            Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
            Error::Shape(msg) => Error::Shape(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!("bad tensor magic {magic:?}")));
        }
        let dtype = read_u32(r)?;
        let rank = read_u32(r)?;
        if rank > MAX_RANK {
            return Err(Error::Format(format!("tensor rank {rank} exceeds limit {MAX_RANK}")));
        }
        let mut dims = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            let d = read_u64(r)?;
            if d > u32::MAX as u64 {
                return Err(Error::Format(format!("dimension {d} too large")));
            }
            dims.push(d as usize);
        }
        let len = checked_len(&dims)?;
        let data = match (dtype, S::DTYPE_CODE) {
            (0, 0) | (0, 1) => {
                // Native f32 or widening into f64.
                let mut buf = vec![0u8; len * 4];
                read_exact(r, &mut buf)?;
                buf.chunks_exact(4)
                    .map(|c| S::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
                    .collect()
            }
            (1, 1) => {
                let mut buf = vec![0u8; len * 8];
                read_exact(r, &mut buf)?;
                buf.chunks_exact(8)
                    .map(|c| {
                        S::of(f64::from_le_bytes([
                            c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7],
                        ]))
                    })
                    .collect()
            }
            (1, 0) => {
                return Err(Error::Shape(
                    "refusing to narrow f64 tensor file into f32 tensor".into(),
                ))
            }
            (other, _) => return Err(Error::Format(format!("unknown dtype code {other}"))),
        };
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing).map_err(read_err)? != 0 {
            return Err(Error::Format("trailing bytes after tensor payload".into()));
        }
        Tensor::new(dims, data)
    }
}

fn checked_len(dims: &[usize]) -> Result<usize> {
    let mut len = 1usize;
    for &d in dims {
        len = len
            .checked_mul(d)
            .ok_or_else(|| Error::Shape(format!("tensor dims {dims:?} overflow")))?;
    }
    Ok(len)
}

fn read_err(e: std::io::Error) -> Error {
    Error::Format(format!("truncated tensor: {e}"))
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(read_err)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}
