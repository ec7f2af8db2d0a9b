//! Binary checkpoint format, all integers little-endian:
//!
//! ```text
//! "NRMC" | version u32 = 1 | scheme u8 | bytes-per-element u8 (4 or 8)
//! | hidden, embed, attention, stimulus, post_vocab, response_vocab: u32
//! | tensor count u32
//! | per tensor: name len u16, UTF-8 name, ndim u8, dims u32 each,
//!   row-major IEEE-754 payload
//! ```

use std::fs;
use std::path::Path;

use super::params::is_vector_tensor;
use super::{Dims, ModelParams, Scheme};
use crate::error::{NrmError, Result};

pub const MAGIC: &[u8; 4] = b"NRMC";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn bytes(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }
}

fn header_len() -> usize {
    4 + 4 + 1 + 1 + 6 * 4 + 4
}

pub fn encode_checkpoint(params: &ModelParams, precision: Precision) -> Vec<u8> {
    let d = &params.dims;
    let mut out = Vec::with_capacity(header_len() + params.parameter_count() * precision.bytes());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(params.scheme.tag());
    out.push(precision.bytes() as u8);
    for v in [d.hidden, d.embed, d.attention, d.stimulus, d.post_vocab, d.response_vocab] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    let tensors = params.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        if is_vector_tensor(&name) {
            out.push(1);
            out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
        } else {
            out.push(2);
            out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
        }
        for &v in t.data() {
            match precision {
                Precision::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
                Precision::F64 => out.extend_from_slice(&v.to_le_bytes()),
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(NrmError::Checkpoint {
                offset: self.pos,
                msg: format!("truncated while reading {what}"),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn fail<T>(&self, at: usize, msg: impl Into<String>) -> Result<T> {
        Err(NrmError::Checkpoint {
            offset: at,
            msg: msg.into(),
        })
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ModelParams, Precision)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return r.fail(0, "bad magic (expected NRMC)");
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return r.fail(4, format!("unsupported version {version}"));
    }
    let tag = r.u8("scheme")?;
    let Some(scheme) = Scheme::from_tag(tag) else {
        return r.fail(8, format!("unknown scheme tag {tag}"));
    };
    let precision = match r.u8("precision")? {
        4 => Precision::F32,
        8 => Precision::F64,
        other => return r.fail(9, format!("unsupported element width {other}")),
    };
    let mut d = [0usize; 6];
    for v in d.iter_mut() {
        *v = r.u32("dims")? as usize;
    }
    let dims = Dims {
        hidden: d[0],
        embed: d[1],
        attention: d[2],
        stimulus: d[3],
        post_vocab: d[4],
        response_vocab: d[5],
    };
    let dims_at = r.pos;
    let mut params = ModelParams::zeros(scheme, dims).map_err(|e| NrmError::Checkpoint {
        offset: 10,
        msg: e.to_string(),
    })?;
    let expected = params.tensors().len();
    let count = r.u32("tensor count")? as usize;
    if count != expected {
        return r.fail(dims_at, format!("expected {expected} tensors for scheme {scheme}, found {count}"));
    }

    let mut seen = std::collections::HashSet::new();
    for _ in 0..count {
        let start = r.pos;
        let len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "tensor name")?)
            .map_err(|_| NrmError::Checkpoint {
                offset: start + 2,
                msg: "tensor name is not UTF-8".into(),
            })?
            .to_string();
        let ndim = r.u8("ndim")? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32("tensor dims")? as usize);
        }
        if !seen.insert(name.clone()) {
            return r.fail(start, format!("duplicate tensor {name}"));
        }
        let Some(t) = params.tensor_mut(&name) else {
            return r.fail(start, format!("unexpected tensor {name}"));
        };
        let want: Vec<usize> = if is_vector_tensor(&name) {
            vec![t.rows()]
        } else {
            vec![t.rows(), t.cols()]
        };
        if shape != want {
            return r.fail(start, format!("tensor {name} has shape {shape:?}, expected {want:?}"));
        }
        let n = t.data().len();
        let payload = r.take(n * precision.bytes(), &format!("payload of {name}"))?;
        match precision {
            Precision::F32 => {
                for (dst, src) in t.data_mut().iter_mut().zip(payload.chunks_exact(4)) {
                    *dst = f32::from_le_bytes(src.try_into().unwrap()) as f64;
                }
            }
            Precision::F64 => {
                for (dst, src) in t.data_mut().iter_mut().zip(payload.chunks_exact(8)) {
                    *dst = f64::from_le_bytes(src.try_into().unwrap());
                }
            }
        }
    }
    if r.pos != bytes.len() {
        return r.fail(r.pos, format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Ok((params, precision))
}

pub fn save_checkpoint(params: &ModelParams, path: &Path, precision: Precision) -> Result<()> {
    fs::write(path, encode_checkpoint(params, precision)).map_err(|e| NrmError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    load_checkpoint_with_precision(path).map(|(p, _)| p)
}

pub fn load_checkpoint_with_precision(path: &Path) -> Result<(ModelParams, Precision)> {
    let bytes = fs::read(path).map_err(|e| NrmError::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn dims() -> Dims {
        Dims {
            hidden: 4,
            embed: 3,
            attention: 5,
            stimulus: 2,
            post_vocab: 9,
            response_vocab: 8,
        }
    }

    #[test]
    fn round_trip_is_bit_exact_for_every_scheme() {
        for scheme in Scheme::ALL {
            let p = ModelParams::random(scheme, dims(), &mut Rng::new(1), -0.1, 0.1).unwrap();
            let (q, prec) = decode_checkpoint(&encode_checkpoint(&p, Precision::F64)).unwrap();
            assert_eq!(prec, Precision::F64);
            assert_eq!(p, q);
        }
    }

    #[test]
    fn f32_storage_rounds_once() {
        let p = ModelParams::random(Scheme::Local, dims(), &mut Rng::new(2), -0.1, 0.1).unwrap();
        let (q, _) = decode_checkpoint(&encode_checkpoint(&p, Precision::F32)).unwrap();
        for ((_, a), (_, b)) in p.tensors().iter().zip(q.tensors()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!((*x as f32) as f64, *y);
            }
        }
        let bytes = encode_checkpoint(&q, Precision::F32);
        assert_eq!(bytes, encode_checkpoint(&p, Precision::F32));
    }

    #[test]
    fn size_accounting() {
        for scheme in Scheme::ALL {
            let p = ModelParams::zeros(scheme, dims()).unwrap();
            let tensors = p.tensors();
            let mut expected = 4 + 4 + 1 + 1 + 24 + 4;
            for (name, t) in &tensors {
                let ndim = if is_vector_tensor(name) { 1 } else { 2 };
                expected += 2 + name.len() + 1 + 4 * ndim + 8 * t.rows() * t.cols();
            }
            assert_eq!(encode_checkpoint(&p, Precision::F64).len(), expected);
        }
    }

    #[test]
    fn corruption_is_reported_with_offset() {
        let p = ModelParams::zeros(Scheme::Global, dims()).unwrap();
        let bytes = encode_checkpoint(&p, Precision::F64);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_checkpoint(&bad), Err(NrmError::Checkpoint { offset: 0, .. })));

        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(decode_checkpoint(&bad), Err(NrmError::Checkpoint { offset: 4, .. })));

        let cut = &bytes[..bytes.len() - 3];
        match decode_checkpoint(cut) {
            Err(NrmError::Checkpoint { offset, msg }) => {
                assert!(msg.contains("truncated"), "{msg}");
                assert!(offset < cut.len());
            }
            other => panic!("unexpected {other:?}"),
        }

        let mut long = bytes;
        long.push(0);
        assert!(decode_checkpoint(&long).is_err());
    }
}
