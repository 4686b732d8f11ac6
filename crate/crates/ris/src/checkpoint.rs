//! Binary checkpoint format.
//!
//! Layout: magic bytes `RIS1`, format version (u32 LE), then one record per
//! tensor: name length (u32 LE), name (UTF-8), rank (u32 LE), dims (u32 LE
//! each), payload (little-endian f64). Records run to end of file. Tensor
//! order is the parameter-set insertion order, so save -> load -> save is
//! byte-identical.
//!
//! The decoder treats its input as untrusted: every length is validated
//! against the remaining bytes before any allocation.

use crate::error::{Result, RisError};
use crate::tensor::{ParameterSet, Tensor};
use std::fs;
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"RIS1";
pub const VERSION: u32 = 1;

const MAX_NAME_LEN: usize = 4096;
const MAX_RANK: usize = 8;

pub fn to_bytes(params: &ParameterSet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &t.data {
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
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(RisError::Checkpoint(format!(
                "truncated: wanted {n} bytes at offset {}, {} left",
                self.pos,
                self.remaining()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<ParameterSet> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(RisError::Checkpoint(format!(
            "bad magic {magic:02x?}, expected {MAGIC:02x?}"
        )));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(RisError::Checkpoint(format!(
            "unsupported format version {version}, expected {VERSION}"
        )));
    }
    let mut params = ParameterSet::new();
    while r.remaining() > 0 {
        let name_len = r.u32()? as usize;
        if name_len > MAX_NAME_LEN {
            return Err(RisError::Checkpoint(format!(
                "tensor name length {name_len} exceeds limit {MAX_NAME_LEN}"
            )));
        }
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|e| RisError::Checkpoint(format!("tensor name is not UTF-8: {e}")))?
            .to_string();
        let rank = r.u32()? as usize;
        if rank > MAX_RANK {
            return Err(RisError::Checkpoint(format!(
                "tensor {name:?} rank {rank} exceeds limit {MAX_RANK}"
            )));
        }
        let mut shape = Vec::with_capacity(rank);
        let mut numel: usize = 1;
        for _ in 0..rank {
            let d = r.u32()? as usize;
            numel = numel.checked_mul(d).ok_or_else(|| {
                RisError::Checkpoint(format!("tensor {name:?} element count overflows"))
            })?;
            shape.push(d);
        }
        let payload_bytes = numel.checked_mul(8).ok_or_else(|| {
            RisError::Checkpoint(format!("tensor {name:?} payload size overflows"))
        })?;
        let raw = r.take(payload_bytes)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
            .collect();
        params
            .insert(&name, Tensor::from_vec(&shape, data)?)
            .map_err(|_| RisError::Checkpoint(format!("duplicate tensor name {name:?}")))?;
    }
    Ok(params)
}

pub fn save(params: &ParameterSet, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(params))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ParameterSet> {
    let bytes = fs::read(path)?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use crate::tensor::init_mlp_params;
    use proptest::prelude::*;

    #[test]
    fn round_trip_is_byte_identical() {
        let mut rng = stream_rng(21, Stream::Init, 0);
        let mut params = ParameterSet::new();
        params.insert_namespaced("policy", &init_mlp_params(&mut rng, 4, &[8], 4)).unwrap();
        params.insert_namespaced("q1", &init_mlp_params(&mut rng, 6, &[8], 1)).unwrap();
        let bytes = to_bytes(&params);
        let loaded = from_bytes(&bytes).unwrap();
        let bytes2 = to_bytes(&loaded);
        assert_eq!(bytes, bytes2);
        // and the values survive exactly
        for ((n1, t1), (n2, t2)) in params.iter().zip(loaded.iter()) {
            assert_eq!(n1, n2);
            assert_eq!(t1.shape, t2.shape);
            assert!(t1.data.iter().zip(t2.data.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn rejects_bad_magic_and_version() {
        assert!(from_bytes(b"XXXX\x01\x00\x00\x00").is_err());
        assert!(from_bytes(b"RIS1\x07\x00\x00\x00").is_err());
        assert!(from_bytes(b"RIS").is_err());
    }

    #[test]
    fn rejects_truncated_payload() {
        let mut params = ParameterSet::new();
        params.insert("w", Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap()).unwrap();
        let bytes = to_bytes(&params);
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn rejects_oversized_claims_without_allocating() {
        // name length claims 4 GB
        let mut b = Vec::new();
        b.extend_from_slice(&MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        b.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(from_bytes(&b).is_err());
    }

    #[test]
    fn empty_set_round_trips() {
        let params = ParameterSet::new();
        let loaded = from_bytes(&to_bytes(&params)).unwrap();
        assert_eq!(loaded.len(), 0);
    }

    proptest! {
        /// Arbitrary bytes never panic the decoder, and decodable inputs
        /// re-encode to a canonical form that round-trips.
        #[test]
        fn decoder_total_on_arbitrary_bytes(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
            if let Ok(params) = from_bytes(&bytes) {
                let re = to_bytes(&params);
                let again = from_bytes(&re).unwrap();
                prop_assert_eq!(to_bytes(&again), re);
            }
        }
    }
}
