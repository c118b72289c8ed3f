//! NTW1 weight container.
//!
//! Little-endian layout:
//!
//! ```text
//! "NTW1"                      4 bytes
//! entry count                 u32
//! per entry:
//!   name length               u16
//!   name                      UTF-8 bytes
//!   dtype                     u8   (0 = f32)
//!   ndim                      u8
//!   extents                   ndim x u32
//!   payload                   row-major f32
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::weights::WeightStore;
use crate::tensor::{Tensor, MAX_RANK};

pub const MAGIC: &[u8; 4] = b"NTW1";
const DTYPE_F32: u8 = 0;

pub fn encode(store: &WeightStore) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, t) in store.iter() {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(DTYPE_F32);
        buf.push(t.shape().len() as u8);
        for &e in t.shape() {
            buf.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for &v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Truncated(format!(
                "{what}: need {n} bytes at offset {}, {} left",
                self.pos,
                self.buf.len() - self.pos
            )));
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
}

pub fn decode(bytes: &[u8]) -> Result<WeightStore> {
    if bytes.len() < 4 {
        return Err(Error::Truncated("file shorter than magic".into()));
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let mut r = Reader { buf: bytes, pos: 4 };
    let count = r.u32("entry count")?;
    let mut store = WeightStore::new();
    for i in 0..count {
        let name_len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| Error::InvalidHeader(format!("entry {i}: name is not UTF-8")))?
            .to_string();
        let dtype = r.u8("dtype")?;
        if dtype != DTYPE_F32 {
            return Err(Error::UnknownDtype(dtype));
        }
        let ndim = r.u8("ndim")? as usize;
        if ndim == 0 || ndim > MAX_RANK {
            return Err(Error::InvalidHeader(format!(
                "`{name}`: ndim {ndim} outside 1..={MAX_RANK}"
            )));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let e = r.u32("extent")? as usize;
            if e == 0 {
                return Err(Error::InvalidHeader(format!("`{name}`: zero extent")));
            }
            shape.push(e);
        }
        let len: usize = shape.iter().product();
        let payload = r.take(len * 4, &format!("payload of `{name}`"))?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if store.insert(name.clone(), Tensor::from_vec(&shape, data)?).is_some() {
            return Err(Error::InvalidHeader(format!("duplicate entry `{name}`")));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::TrailingBytes(bytes.len() - r.pos));
    }
    Ok(store)
}

pub fn save_weights(store: &WeightStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(store)).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightStore> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::spec::build_spec;
    use crate::model::weights::init_weights;
    use crate::ops::Activation;
    use crate::rng::RngStream;

    fn store() -> WeightStore {
        init_weights(
            &build_spec(1, [4, 8, 16], Activation::Relu).unwrap(),
            &RngStream::new(0, 0),
        )
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let s = store();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.ntw");
        save_weights(&s, &path).unwrap();
        let back = load_weights(&path).unwrap();
        for ((n1, a), (n2, b)) in s.iter().zip(back.iter()) {
            assert_eq!(n1, n2);
            assert_eq!(a.shape(), b.shape());
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode(&store());
        bytes[0] = b'X';
        let err = decode(&bytes).unwrap_err();
        assert_eq!(err.code(), "bad-magic");
    }

    #[test]
    fn short_payload() {
        let mut s = WeightStore::new();
        s.insert("x", Tensor::full(&[2, 3, 4], 1.5).unwrap());
        let bytes = encode(&s);
        let err = decode(&bytes[..bytes.len() - 5]).unwrap_err();
        assert_eq!(err.code(), "truncated-payload");
    }

    #[test]
    fn unknown_dtype_and_bad_header() {
        let mut s = WeightStore::new();
        s.insert("ab", Tensor::full(&[2], 1.0).unwrap());
        let bytes = encode(&s);
        // magic(4) + count(4) + name_len(2) + name(2) => dtype at offset 12
        let mut bad = bytes.clone();
        bad[12] = 7;
        assert_eq!(decode(&bad).unwrap_err().code(), "unknown-dtype");
        let mut bad = bytes.clone();
        bad[13] = 9;
        assert_eq!(decode(&bad).unwrap_err().code(), "invalid-header");
        let mut bad = bytes;
        bad.push(0);
        assert_eq!(decode(&bad).unwrap_err().code(), "trailing-bytes");
    }

    #[test]
    fn loaded_store_is_checked_against_spec() {
        let spec = build_spec(2, [4, 8, 16], Activation::Relu).unwrap();
        let back = decode(&encode(&store())).unwrap();
        assert_eq!(back.validate(&spec).unwrap_err().code(), "weight-mismatch");
    }
}
