//! Flat weight files.
//!
//! Layout, all integers `u32` and all floats `f64`, little-endian:
//!
//! ```text
//! magic    8 bytes  "GUSTNET\0"
//! version  u32      1
//! layers   u32      L
//! dims     u32 x (L + 1)   input width, then each layer's output width
//! acts     u8  x L         0 identity, 1 relu, 2 tanh
//! extras   u32 count, then f64 x count (normalization constants, log-std, ...)
//! weights  per layer: W row-major (inputs x outputs), then bias (outputs)
//! ```

use std::io::{Read, Write};

use ndarray::{Array1, Array2};

use super::{Activation, Dense, Mlp};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"GUSTNET\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NetFile {
    pub net: Mlp<f64>,
    pub extras: Vec<f64>,
}

pub fn write_net<W: Write>(out: &mut W, file: &NetFile) -> std::io::Result<()> {
    let net = &file.net;
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(net.layers.len() as u32).to_le_bytes())?;
    for d in net.dims() {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    for layer in &net.layers {
        out.write_all(&[layer.act.tag()])?;
    }
    out.write_all(&(file.extras.len() as u32).to_le_bytes())?;
    for x in &file.extras {
        out.write_all(&x.to_le_bytes())?;
    }
    for layer in &net.layers {
        for x in layer.w.iter() {
            out.write_all(&x.to_le_bytes())?;
        }
        for x in layer.b.iter() {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::WeightFormat(format!("truncated while reading {what}: {e}")))?;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes::<4>(what)?))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes::<8>(what)?))
    }
}

/// Reads a weight file. When `expected_dims` is given, a network with other
/// dimensions is rejected with both shapes in the message.
pub fn read_net<R: Read>(input: R, expected_dims: Option<&[usize]>) -> Result<NetFile> {
    let mut r = Reader { inner: input };
    if &r.bytes::<8>("magic")? != MAGIC {
        return Err(Error::WeightFormat("bad magic".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::WeightFormat(format!("unsupported version {version}")));
    }
    let n_layers = r.u32("layer count")? as usize;
    if n_layers == 0 || n_layers > 64 {
        return Err(Error::WeightFormat(format!("implausible layer count {n_layers}")));
    }
    let dims = (0..=n_layers)
        .map(|_| r.u32("dims").map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    if let Some(expected) = expected_dims {
        if expected != dims.as_slice() {
            return Err(Error::ShapeMismatch {
                expected: format!("{expected:?}"),
                found: format!("{dims:?}"),
            });
        }
    }
    let acts = (0..n_layers)
        .map(|_| {
            let [tag] = r.bytes::<1>("activation")?;
            Activation::from_tag(tag)
                .ok_or_else(|| Error::WeightFormat(format!("unknown activation tag {tag}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let n_extras = r.u32("extras count")? as usize;
    let extras = (0..n_extras)
        .map(|_| r.f64("extras"))
        .collect::<Result<Vec<_>>>()?;
    let mut layers = Vec::with_capacity(n_layers);
    for (i, act) in acts.into_iter().enumerate() {
        let (fan_in, fan_out) = (dims[i], dims[i + 1]);
        let w = (0..fan_in * fan_out)
            .map(|_| r.f64("weights"))
            .collect::<Result<Vec<_>>>()?;
        let b = (0..fan_out)
            .map(|_| r.f64("bias"))
            .collect::<Result<Vec<_>>>()?;
        layers.push(Dense {
            w: Array2::from_shape_vec((fan_in, fan_out), w).expect("length matches shape"),
            b: Array1::from(b),
            act,
        });
    }
    let mut rest = Vec::new();
    r.inner
        .read_to_end(&mut rest)
        .map_err(|e| Error::WeightFormat(e.to_string()))?;
    if !rest.is_empty() {
        return Err(Error::WeightFormat(format!("{} trailing bytes", rest.len())));
    }
    Ok(NetFile {
        net: Mlp { layers },
        extras,
    })
}
