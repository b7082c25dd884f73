//! Dense row-major tensors and the PAPT v1 file format.
//!
//! Layout (all integers little-endian, no padding):
//!
//! ```text
//! "PAPT" | u32 version = 1 | u32 dtype (0 = f32, 1 = f64) | u32 rank
//!        | rank x u64 extents | row-major payload
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, FormatError, Result};

pub const MAGIC: [u8; 4] = *b"PAPT";
pub const VERSION: u32 = 1;
pub const MAX_RANK: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn code(self) -> u32 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    pub fn from_code(code: u32) -> Result<Self, FormatError> {
        match code {
            0 => Ok(DType::F32),
            1 => Ok(DType::F64),
            other => Err(FormatError::BadDtype(other)),
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: TensorData,
}

fn element_count(shape: &[usize]) -> Option<usize> {
    shape.iter().try_fold(1usize, |acc, &e| acc.checked_mul(e))
}

fn check_finite<I: Iterator<Item = f64>>(values: I) -> Result<()> {
    for (index, v) in values.enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { index });
        }
    }
    Ok(())
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        let len = match &data {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        };
        let expected = element_count(&shape).ok_or(FormatError::ExtentOverflow)?;
        if expected != len {
            return Err(Error::Shape {
                what: "tensor payload length",
                expected: vec![expected],
                got: vec![len],
            });
        }
        let t = Self { shape, data };
        check_finite(t.iter_f64())?;
        Ok(t)
    }

    pub fn from_f64(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        Self::new(shape, TensorData::F64(data))
    }

    pub fn from_f32(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        Self::new(shape, TensorData::F32(data))
    }

    pub fn scalar(value: f64) -> Result<Self> {
        Self::from_f64(Vec::new(), vec![value])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn dtype(&self) -> DType {
        match self.data {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
        }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    fn iter_f64(&self) -> Box<dyn Iterator<Item = f64> + '_> {
        match &self.data {
            TensorData::F32(v) => Box::new(v.iter().map(|&x| f64::from(x))),
            TensorData::F64(v) => Box::new(v.iter().copied()),
        }
    }

    /// Values widened to f64.
    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.iter_f64().collect()
    }

    pub fn into_f64_vec(self) -> Vec<f64> {
        match self.data {
            TensorData::F64(v) => v,
            TensorData::F32(v) => v.into_iter().map(f64::from).collect(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.rank() + self.len() * self.dtype().size());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.dtype().code().to_le_bytes());
        out.extend_from_slice(&(self.rank() as u32).to_le_bytes());
        for &e in &self.shape {
            out.extend_from_slice(&(e as u64).to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cursor = Cursor { bytes, pos: 0 };
        let magic: [u8; 4] = cursor.take(4, "header")?.try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(FormatError::BadMagic(magic).into());
        }
        let version = cursor.u32("header")?;
        if version != VERSION {
            return Err(FormatError::UnsupportedVersion(version).into());
        }
        let dtype = DType::from_code(cursor.u32("header")?)?;
        let rank = cursor.u32("header")?;
        if rank > MAX_RANK {
            return Err(FormatError::BadRank(rank).into());
        }
        let mut shape = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            let extent = cursor.u64("extents")?;
            shape.push(usize::try_from(extent).map_err(|_| FormatError::ExtentOverflow)?);
        }
        let count = element_count(&shape).ok_or(FormatError::ExtentOverflow)?;
        let payload_len = count
            .checked_mul(dtype.size())
            .ok_or(FormatError::ExtentOverflow)?;
        let payload = cursor.take(payload_len, "payload")?;
        let trailing = bytes.len() - cursor.pos;
        if trailing != 0 {
            return Err(FormatError::TrailingBytes(trailing).into());
        }
        let data = match dtype {
            DType::F32 => TensorData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("chunk")))
                    .collect(),
            ),
            DType::F64 => TensorData::F64(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("chunk")))
                    .collect(),
            ),
        };
        Tensor::new(shape, data)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, section: &'static str) -> Result<&'a [u8], FormatError> {
        let found = self.bytes.len() - self.pos;
        if found < n {
            return Err(FormatError::Truncated {
                section,
                expected: n,
                found,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, section: &'static str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, section)?.try_into().expect("4")))
    }

    fn u64(&mut self, section: &'static str) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8, section)?.try_into().expect("8")))
    }
}
