//! On-disk formats: a self-describing little-endian binary layout for dense
//! tensors ("TTK1") and TT matrices ("TTM1"), plus JSON mirrors for small
//! fixtures.
//!
//! TTK1: magic, u32 ndim, u32 dims[ndim], f64 payload in row-major order.
//! TTM1: magic, u32 d, then per core u32 extents (r_{k-1}, m_k, n_k, r_k)
//! followed by the core payload.

use crate::tensor::{DenseMatrix, DenseTensor, TensorError};
use crate::tt::{TTCore, TTMatrix, TtError};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use thiserror::Error;

pub const TENSOR_MAGIC: &[u8; 4] = b"TTK1";
pub const TT_MAGIC: &[u8; 4] = b"TTM1";

/// Errors from reading or writing the binary and JSON formats.
#[derive(Debug, Error)]
pub enum IoError {
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { found: [u8; 4], expected: [u8; 4] },
    #[error("payload declares {declared} extents but {limit} is the supported maximum")]
    TooManyDims { declared: u32, limit: u32 },
    #[error("declared shape {shape:?} overflows the addressable size")]
    ShapeOverflow { shape: Vec<usize> },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Tt(#[from] TtError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

const MAX_DIMS: u32 = 64;

fn checked_len(shape: &[usize]) -> Result<usize, IoError> {
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| IoError::ShapeOverflow {
            shape: shape.to_vec(),
        })
}

fn write_u32(w: &mut impl Write, v: u32) -> Result<(), IoError> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32, IoError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn write_payload(w: &mut impl Write, data: &[f64]) -> Result<(), IoError> {
    for &x in data {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_payload(r: &mut impl Read, len: usize) -> Result<Vec<f64>, IoError> {
    let mut data = Vec::with_capacity(len);
    let mut buf = [0u8; 8];
    for _ in 0..len {
        r.read_exact(&mut buf)?;
        data.push(f64::from_le_bytes(buf));
    }
    Ok(data)
}

fn expect_magic(r: &mut impl Read, expected: &[u8; 4]) -> Result<(), IoError> {
    let mut found = [0u8; 4];
    r.read_exact(&mut found)?;
    if &found != expected {
        return Err(IoError::BadMagic {
            found,
            expected: *expected,
        });
    }
    Ok(())
}

pub fn write_tensor(w: &mut impl Write, t: &DenseTensor) -> Result<(), IoError> {
    w.write_all(TENSOR_MAGIC)?;
    write_u32(w, t.ndim() as u32)?;
    for &d in t.shape() {
        write_u32(w, d as u32)?;
    }
    write_payload(w, t.data())
}

pub fn read_tensor(r: &mut impl Read) -> Result<DenseTensor, IoError> {
    expect_magic(r, TENSOR_MAGIC)?;
    let ndim = read_u32(r)?;
    if ndim > MAX_DIMS {
        return Err(IoError::TooManyDims {
            declared: ndim,
            limit: MAX_DIMS,
        });
    }
    let mut shape = Vec::with_capacity(ndim as usize);
    for _ in 0..ndim {
        shape.push(read_u32(r)? as usize);
    }
    let len = checked_len(&shape)?;
    let data = read_payload(r, len)?;
    Ok(DenseTensor::new(shape, data)?)
}

pub fn write_matrix(w: &mut impl Write, m: &DenseMatrix) -> Result<(), IoError> {
    write_tensor(w, &m.clone().into_tensor())
}

pub fn read_matrix(r: &mut impl Read) -> Result<DenseMatrix, IoError> {
    Ok(read_tensor(r)?.into_matrix()?)
}

pub fn write_tt(w: &mut impl Write, tt: &TTMatrix) -> Result<(), IoError> {
    w.write_all(TT_MAGIC)?;
    write_u32(w, tt.order() as u32)?;
    for core in tt.cores() {
        let (rl, m, n, rr) = core.shape();
        for e in [rl, m, n, rr] {
            write_u32(w, e as u32)?;
        }
        write_payload(w, core.tensor().data())?;
    }
    Ok(())
}

pub fn read_tt(r: &mut impl Read) -> Result<TTMatrix, IoError> {
    expect_magic(r, TT_MAGIC)?;
    let d = read_u32(r)?;
    if d > MAX_DIMS {
        return Err(IoError::TooManyDims {
            declared: d,
            limit: MAX_DIMS,
        });
    }
    let mut cores = Vec::with_capacity(d as usize);
    for _ in 0..d {
        let mut extents = [0usize; 4];
        for e in extents.iter_mut() {
            *e = read_u32(r)? as usize;
        }
        let len = checked_len(&extents)?;
        let data = read_payload(r, len)?;
        cores.push(TTCore::new(DenseTensor::new(extents.to_vec(), data)?)?);
    }
    Ok(TTMatrix::new(cores)?)
}

/// JSON mirror of a dense tensor: {"shape": [...], "data": [...]}.
#[derive(Debug, Serialize, Deserialize)]
pub struct TensorJson {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl From<&DenseTensor> for TensorJson {
    fn from(t: &DenseTensor) -> Self {
        Self {
            shape: t.shape().to_vec(),
            data: t.data().to_vec(),
        }
    }
}

impl From<&DenseMatrix> for TensorJson {
    fn from(m: &DenseMatrix) -> Self {
        Self {
            shape: vec![m.rows(), m.cols()],
            data: m.data().to_vec(),
        }
    }
}

impl TryFrom<TensorJson> for DenseTensor {
    type Error = TensorError;
    fn try_from(j: TensorJson) -> Result<Self, Self::Error> {
        DenseTensor::new(j.shape, j.data)
    }
}

/// JSON mirror of a TT matrix: a list of core tensors.
#[derive(Debug, Serialize, Deserialize)]
pub struct TtJson {
    pub cores: Vec<TensorJson>,
}

impl From<&TTMatrix> for TtJson {
    fn from(tt: &TTMatrix) -> Self {
        Self {
            cores: tt.cores().iter().map(|c| c.tensor().into()).collect(),
        }
    }
}

impl TryFrom<TtJson> for TTMatrix {
    type Error = IoError;
    fn try_from(j: TtJson) -> Result<Self, Self::Error> {
        let cores = j
            .cores
            .into_iter()
            .map(|c| Ok(TTCore::new(DenseTensor::try_from(c)?)?))
            .collect::<Result<Vec<_>, IoError>>()?;
        Ok(TTMatrix::new(cores)?)
    }
}

pub fn tensor_to_json(t: &DenseTensor) -> Result<String, IoError> {
    Ok(serde_json::to_string(&TensorJson::from(t))?)
}

pub fn tensor_from_json(s: &str) -> Result<DenseTensor, IoError> {
    let j: TensorJson = serde_json::from_str(s)?;
    Ok(DenseTensor::try_from(j)?)
}

pub fn matrix_to_json(m: &DenseMatrix) -> Result<String, IoError> {
    Ok(serde_json::to_string(&TensorJson::from(m))?)
}

pub fn matrix_from_json(s: &str) -> Result<DenseMatrix, IoError> {
    Ok(tensor_from_json(s)?.into_matrix()?)
}

pub fn tt_to_json(tt: &TTMatrix) -> Result<String, IoError> {
    Ok(serde_json::to_string(&TtJson::from(tt))?)
}

pub fn tt_from_json(s: &str) -> Result<TTMatrix, IoError> {
    let j: TtJson = serde_json::from_str(s)?;
    TTMatrix::try_from(j)
}
