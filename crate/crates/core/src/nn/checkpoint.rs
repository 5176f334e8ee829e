//! Binary model checkpoints.
//!
//! Layout (integers little-endian):
//!
//! ```text
//! magic      8 bytes  "HSCKPT01"
//! seed       u64
//! spec_len   u64, then spec_len bytes of the model section as key/value text
//! digest     32 bytes, SHA-256 of that text
//! count      u64
//! per tensor: name_len u64, name bytes, ndim u64, dims u64 × ndim,
//!             values f64 × product(dims)
//! ```

use std::io::{Read, Write};

use sha2::{Digest, Sha256};

use crate::kv::KvDoc;

use super::spec::ModelSpec;
use super::tensor::Tensor;
use super::{ModelState, NnError};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"HSCKPT01";
const MAX_NAME: u64 = 1 << 12;
const MAX_SPEC: u64 = 1 << 20;

fn spec_text(spec: &ModelSpec) -> String {
    KvDoc {
        sections: vec![spec.to_section()],
    }
    .render()
}

pub fn to_bytes(state: &ModelState) -> Vec<u8> {
    let mut out = Vec::new();
    write_to(state, &mut out).expect("writing to a Vec cannot fail");
    out
}

pub fn write_to<W: Write>(state: &ModelState, mut w: W) -> Result<(), NnError> {
    let text = spec_text(state.spec());
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&state.seed().to_le_bytes())?;
    w.write_all(&(text.len() as u64).to_le_bytes())?;
    w.write_all(text.as_bytes())?;
    w.write_all(&Sha256::digest(text.as_bytes()))?;
    w.write_all(&(state.params().len() as u64).to_le_bytes())?;
    for (name, t) in state.names().iter().zip(state.params()) {
        w.write_all(&(name.len() as u64).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape().len() as u64).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, NnError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_string<R: Read>(r: &mut R, len: u64, limit: u64) -> Result<String, NnError> {
    if len > limit {
        return Err(NnError::Format(format!("string length {len} exceeds {limit}")));
    }
    let mut b = vec![0u8; len as usize];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|_| NnError::Format("string is not UTF-8".into()))
}

pub fn read_from<R: Read>(mut r: R) -> Result<ModelState, NnError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(NnError::Format("bad magic".into()));
    }
    let seed = read_u64(&mut r)?;
    let len = read_u64(&mut r)?;
    let text = read_string(&mut r, len, MAX_SPEC)?;
    let mut digest = [0u8; 32];
    r.read_exact(&mut digest)?;
    if Sha256::digest(text.as_bytes()).as_slice() != digest {
        return Err(NnError::Format("spec digest mismatch".into()));
    }
    let doc = KvDoc::parse(&text).map_err(|e| NnError::Format(e.to_string()))?;
    let section = doc.section("model").ok_or_else(|| NnError::Format("no model section".into()))?;
    let spec = ModelSpec::from_section(section)?;
    let count = read_u64(&mut r)?;
    if count > 1 << 16 {
        return Err(NnError::Format(format!("implausible tensor count {count}")));
    }
    let mut tensors = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = read_u64(&mut r)?;
        let name = read_string(&mut r, len, MAX_NAME)?;
        let ndim = read_u64(&mut r)?;
        if ndim == 0 || ndim > 8 {
            return Err(NnError::Format(format!("tensor `{name}` has {ndim} dims")));
        }
        let mut shape = Vec::with_capacity(ndim as usize);
        for _ in 0..ndim {
            shape.push(read_u64(&mut r)? as usize);
        }
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).filter(|&n| n <= 1 << 28);
        let n = n.ok_or_else(|| NnError::Format(format!("tensor `{name}` is too large")))?;
        let mut data = Vec::with_capacity(n);
        let mut b = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        tensors.push((name, Tensor::new(shape, data)?));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(NnError::Format("trailing bytes".into()));
    }
    ModelState::from_tensors(&spec, seed, tensors)
}

pub fn save(state: &ModelState, path: &std::path::Path) -> Result<(), NnError> {
    std::fs::write(path, to_bytes(state))?;
    Ok(())
}

pub fn load(path: &std::path::Path) -> Result<ModelState, NnError> {
    let bytes = std::fs::read(path)?;
    read_from(bytes.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Head, VitSpec};

    #[test]
    fn round_trip_is_exact() {
        for spec in [
            ModelSpec::cnn(32, Head::Hrr { feature_dim: 64 }),
            ModelSpec::vit(32, VitSpec::desk(), Head::Ce { num_classes: 6 }),
        ] {
            let state = ModelState::init(&spec, 3).unwrap();
            let bytes = to_bytes(&state);
            let back = read_from(bytes.as_slice()).unwrap();
            assert_eq!(back.spec(), state.spec());
            assert_eq!(back.params(), state.params());
            assert_eq!(back.seed(), 3);
            assert_eq!(to_bytes(&back), bytes);
        }
    }

    #[test]
    fn corruption_is_detected() {
        let state = ModelState::init(&ModelSpec::cnn(32, Head::Hrr { feature_dim: 64 }), 0).unwrap();
        let bytes = to_bytes(&state);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_from(bad.as_slice()).is_err());
        let mut bad = bytes.clone();
        bad[30] ^= 1;
        assert!(read_from(bad.as_slice()).is_err());
        assert!(read_from(&bytes[..bytes.len() - 3]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(read_from(long.as_slice()).is_err());
    }
}
