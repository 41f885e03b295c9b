//! Little-endian primitives for the versioned binary model files.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

fn io_err(e: std::io::Error) -> Error {
    Error::ModelFormat(e.to_string())
}

pub struct BinWriter<W: Write> {
    inner: W,
}

impl<W: Write> BinWriter<W> {
    pub fn new(inner: W) -> Self {
        BinWriter { inner }
    }

    pub fn into_inner(self) -> W {
        self.inner
    }

    pub fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.inner.write_all(b).map_err(io_err)
    }

    pub fn u32(&mut self, v: u32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn len(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::ModelFormat(format!("length {v} too large")))?;
        self.u32(v)
    }

    pub fn str(&mut self, s: &str) -> Result<()> {
        self.len(s.len())?;
        self.bytes(s.as_bytes())
    }

    pub fn f64s(&mut self, values: &[f64]) -> Result<()> {
        for v in values {
            self.bytes(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Dimensions followed by the row-major entries.
    pub fn matrix(&mut self, m: &Matrix) -> Result<()> {
        self.len(m.rows())?;
        self.len(m.cols())?;
        self.f64s(m.as_slice())
    }

    pub fn vector(&mut self, v: &[f64]) -> Result<()> {
        self.len(v.len())?;
        self.f64s(v)
    }
}

pub struct BinReader<R: Read> {
    inner: R,
}

impl<R: Read> BinReader<R> {
    pub fn new(inner: R) -> Self {
        BinReader { inner }
    }

    pub fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0; n];
        self.inner.read_exact(&mut buf).map_err(io_err)?;
        Ok(buf)
    }

    pub fn expect_magic(&mut self, magic: &[u8]) -> Result<()> {
        let found = self.bytes(magic.len())?;
        if found != magic {
            return Err(Error::ModelFormat(format!(
                "bad magic header: expected {:?}, found {:?}",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(&found)
            )));
        }
        Ok(())
    }

    pub fn u32(&mut self) -> Result<u32> {
        let mut buf = [0; 4];
        self.inner.read_exact(&mut buf).map_err(io_err)?;
        Ok(u32::from_le_bytes(buf))
    }

    pub fn len(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.len()?;
        String::from_utf8(self.bytes(n)?).map_err(|e| Error::ModelFormat(e.to_string()))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n);
        let mut buf = [0; 8];
        for _ in 0..n {
            self.inner.read_exact(&mut buf).map_err(io_err)?;
            out.push(f64::from_le_bytes(buf));
        }
        Ok(out)
    }

    pub fn matrix(&mut self) -> Result<Matrix> {
        let rows = self.len()?;
        let cols = self.len()?;
        let data = self.f64s(rows * cols)?;
        Matrix::from_vec(rows, cols, data).ok_or_else(|| Error::ModelFormat("matrix size".into()))
    }

    pub fn vector(&mut self) -> Result<Vec<f64>> {
        let n = self.len()?;
        self.f64s(n)
    }
}
