//! Binary checkpoint format, all integers and floats little-endian:
//!
//! ```text
//! "CMFD"  u32 version
//! u32 header_len  header (UTF-8 JSON, may be empty)
//! u32 count
//! count × { u32 name_len, name, u32 rank, rank × u32 dim, numel × f32 }
//! ```

use super::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"CMFD";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// Free-form header; the model stores its configuration here as JSON.
    pub header: String,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn write_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, ckpt.header.len() as u32);
    out.extend_from_slice(ckpt.header.as_bytes());
    put_u32(&mut out, ckpt.tensors.len() as u32);
    for (name, t) in &ckpt.tensors {
        put_u32(&mut out, name.len() as u32);
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.rank() as u32);
        for &d in t.shape() {
            put_u32(&mut out, d as u32);
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or(Error::Truncated("checkpoint"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn string(&mut self, len: usize) -> Result<String> {
        String::from_utf8(self.take(len)?.to_vec()).map_err(|e| Error::Malformed {
            format: "checkpoint",
            reason: e.to_string(),
        })
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4).map_err(|_| Error::BadMagic([0; 4]))?;
    if magic != MAGIC {
        return Err(Error::BadMagic(magic.try_into().expect("4 bytes")));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let header_len = r.u32()? as usize;
    let header = r.string(header_len)?;
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = r.string(name_len)?;
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let raw = r.take(numel.checked_mul(4).ok_or(Error::Truncated("checkpoint"))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        tensors.push((name, Tensor::from_vec(shape, data)?));
    }
    if r.pos != bytes.len() {
        return Err(Error::Malformed {
            format: "checkpoint",
            reason: format!("{} trailing bytes", bytes.len() - r.pos),
        });
    }
    Ok(Checkpoint { header, tensors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(
            values in proptest::collection::vec(any::<u32>(), 1..40),
            header in "[a-z{}:\" ]{0,20}",
        ) {
            // arbitrary bit patterns, NaN payloads included
            let data: Vec<f32> = values.iter().map(|&b| f32::from_bits(b)).collect();
            let t = Tensor::from_vec(vec![data.len()], data).unwrap();
            let ckpt = Checkpoint { header, tensors: vec![("a.b".into(), t)] };
            let bytes = write_checkpoint(&ckpt);
            let back = read_checkpoint(&bytes).unwrap();
            prop_assert_eq!(&back.header, &ckpt.header);
            let (a, b) = (&back.tensors[0].1, &ckpt.tensors[0].1);
            prop_assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
            prop_assert_eq!(write_checkpoint(&back), bytes);
        }
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let ckpt = Checkpoint {
            header: "{}".into(),
            tensors: vec![("w".into(), Tensor::ones(vec![2, 3]))],
        };
        let mut bytes = write_checkpoint(&ckpt);
        assert!(read_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        let err = read_checkpoint(&bytes).unwrap_err();
        assert!(err.to_string().contains("bad magic"));
    }
}
