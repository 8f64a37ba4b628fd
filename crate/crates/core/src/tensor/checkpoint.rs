//! Parameter checkpoint files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic     8 bytes  "JAMPARAM"
//! version   u32      1
//! count     u32      number of parameters
//! count times:
//!   name_len  u32
//!   name      name_len bytes, UTF-8
//!   ndim      u32
//!   dims      ndim x u64
//!   values    prod(dims) x f64
//! meta_len  u32
//! meta      meta_len bytes, UTF-8 (free-form, e.g. the model config)
//! ```

use std::fs;
use std::path::Path;

use super::params::ParamStore;
use super::{Tensor, TensorError};

pub const MAGIC: &[u8; 8] = b"JAMPARAM";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ParamStore,
    pub metadata: String,
}

pub fn encode(params: &ParamStore, metadata: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + params.num_scalars() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for d in t.shape() {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&(metadata.len() as u32).to_le_bytes());
    out.extend_from_slice(metadata.as_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TensorError> {
        let end = self.pos.checked_add(n).ok_or(TensorError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(TensorError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, TensorError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, TensorError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(buf: &[u8]) -> Result<Checkpoint, TensorError> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(TensorError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(TensorError::Version(version));
    }
    let count = r.u32()?;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?).map_err(|_| TensorError::BadName)?.to_string();
        let ndim = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64()? as usize);
        }
        let n: usize = shape.iter().product();
        let bytes = r.take(n.checked_mul(8).ok_or(TensorError::Truncated)?)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.add(name, Tensor::new(shape, data)?);
    }
    let mlen = r.u32()? as usize;
    let metadata = std::str::from_utf8(r.take(mlen)?).map_err(|_| TensorError::BadName)?.to_string();
    if r.pos != buf.len() {
        return Err(TensorError::Truncated);
    }
    Ok(Checkpoint { params, metadata })
}

pub fn write_checkpoint(path: &Path, params: &ParamStore, metadata: &str) -> Result<(), TensorError> {
    fs::write(path, encode(params, metadata))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, TensorError> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(vals in proptest::collection::vec(proptest::num::f64::ANY, 1..40), meta in ".{0,20}") {
            let mut s = ParamStore::new();
            let n = vals.len();
            s.add("a.weight", Tensor::new(vec![n], vals.clone()).unwrap());
            s.add("b", Tensor::matrix(1, 2, vec![-0.0, 1.5]));
            let bytes = encode(&s, &meta);
            let back = decode(&bytes).unwrap();
            prop_assert_eq!(encode(&back.params, &back.metadata), bytes);
            for (x, y) in back.params.get(back.params.id("a.weight").unwrap()).data().iter().zip(&vals) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        let mut s = ParamStore::new();
        s.add("w", Tensor::row(vec![1.0, 2.0]));
        let bytes = encode(&s, "");
        assert!(matches!(decode(&bytes[..bytes.len() - 3]), Err(TensorError::Truncated)));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(TensorError::BadMagic)));
        let mut v2 = bytes;
        v2[8] = 2;
        assert!(matches!(decode(&v2), Err(TensorError::Version(2))));
    }
}
