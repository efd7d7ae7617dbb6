//! `model.bin`: a versioned binary container for [`ModelParameters`].
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "SEQRISK\0"
//! version    u32      1
//! n_tensors  u32
//! n_tensors times:  name_len u16, name (UTF-8), rows u32, cols u32
//! payload    every tensor's values as f64 LE, in table order
//! ```

use std::io::{Read, Write};
use std::path::Path;

use seqrisk_core::model::{ModelDims, ModelParameters};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SEQRISK\0";
pub const VERSION: u32 = 1;

pub fn write_model<W: Write>(mut w: W, params: &ModelParameters) -> std::io::Result<()> {
    let tensors = params.tensors();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in &tensors {
        w.write_all(&(t.name.len() as u16).to_le_bytes())?;
        w.write_all(t.name.as_bytes())?;
        w.write_all(&(t.shape.0 as u32).to_le_bytes())?;
        w.write_all(&(t.shape.1 as u32).to_le_bytes())?;
    }
    for t in &tensors {
        for v in t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format(format!("model file truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Recover the model dimensions from the tensor table.
fn dims_from_table(table: &[(String, (usize, usize))]) -> Result<ModelDims> {
    let shape = |name: &str| {
        table
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| *s)
            .ok_or_else(|| Error::Format(format!("model file lacks tensor {name}")))
    };
    Ok(ModelDims {
        embed: shape("encoder.forward.input")?.1,
        hidden: shape("encoder.forward.recurrent")?.1,
        attention: shape("encoder.attention.weight")?.0,
        factor_hidden: shape("decoder.risk_factors.input.weight")?.0,
        risk_hidden: shape("decoder.risk_hidden.weight")?.0,
    })
}

pub fn read_model<R: Read>(mut r: R) -> Result<ModelParameters> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(|e| Error::io("<model>", e))?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(Error::Format("not a seqrisk model file".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let n = c.u32()? as usize;
    let mut table = Vec::with_capacity(n);
    for _ in 0..n {
        let len = c.u16()? as usize;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
            .to_string();
        let rows = c.u32()? as usize;
        let cols = c.u32()? as usize;
        table.push((name, (rows, cols)));
    }
    let dims = dims_from_table(&table)?;
    let mut params = ModelParameters::zeros(dims);
    {
        let expected = params.tensors();
        if expected.len() != table.len() {
            return Err(Error::Format(format!("expected {} tensors, found {}", expected.len(), table.len())));
        }
        for (e, (name, shape)) in expected.iter().zip(&table) {
            if e.name != name || e.shape != *shape {
                return Err(Error::Format(format!(
                    "tensor {name} {shape:?} does not match expected {} {:?}",
                    e.name, e.shape
                )));
            }
        }
    }
    for t in params.tensors_mut() {
        for v in t.data.iter_mut() {
            *v = c.f64()?;
        }
    }
    if c.pos != buf.len() {
        return Err(Error::Format(format!("{} trailing bytes in model file", buf.len() - c.pos)));
    }
    Ok(params)
}

pub fn save_model(path: &Path, params: &ModelParameters) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_model(&mut w, params).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ModelParameters> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(std::io::BufReader::new(file))
}
