//! `VTEN` tensor records and `VWTS` weight archives.
//!
//! Tensor record, all integers little-endian:
//!
//! ```text
//! "VTEN" | version u8 = 1 | dtype u8 = 0 (f32) | ndim u8 | dims u32 × ndim | f32 × Π dims
//! ```
//!
//! Weights archive:
//!
//! ```text
//! "VWTS" | version u8 = 1 | count u32 | (name_len u16 | name utf-8 | tensor record) × count
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::transformer::{ModelConfig, ModelWeights};

pub const TENSOR_MAGIC: [u8; 4] = *b"VTEN";
pub const WEIGHTS_MAGIC: [u8; 4] = *b"VWTS";
pub const FORMAT_VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 0;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Truncated(format!(
                "{what}: need {n} bytes at offset {}, {} left",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
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

    fn magic(&mut self, expected: [u8; 4]) -> Result<()> {
        let found: [u8; 4] = self.take(4, "magic")?.try_into().unwrap();
        if found != expected {
            return Err(Error::BadMagic { expected, found });
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Truncated(format!(
                "{} trailing bytes after record",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn encode_tensor(t: &Tensor, out: &mut Vec<u8>) -> Result<()> {
    let ndim = u8::try_from(t.ndim())
        .map_err(|_| Error::Shape(format!("{} dims do not fit a u8", t.ndim())))?;
    out.extend_from_slice(&TENSOR_MAGIC);
    out.push(FORMAT_VERSION);
    out.push(DTYPE_F32);
    out.push(ndim);
    for &d in t.dims() {
        let d = u32::try_from(d).map_err(|_| Error::Shape(format!("dim {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.reserve(4 * t.numel());
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

fn decode_tensor_from(r: &mut Reader<'_>) -> Result<Tensor> {
    r.magic(TENSOR_MAGIC)?;
    let version = r.u8("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let dtype = r.u8("dtype")?;
    if dtype != DTYPE_F32 {
        return Err(Error::UnsupportedDtype(dtype));
    }
    let ndim = r.u8("ndim")? as usize;
    let dims: Vec<u32> = (0..ndim).map(|_| r.u32("dims")).collect::<Result<_>>()?;
    let bytes = dims
        .iter()
        .try_fold(4usize, |acc, &d| acc.checked_mul(d as usize))
        .ok_or_else(|| Error::DimsOverflow(dims.clone()))?;
    let payload = r.take(bytes, "payload")?;
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::new(dims.iter().map(|&d| d as usize).collect(), data)
}

/// Decodes exactly one tensor record; trailing bytes are an error.
pub fn decode_tensor(buf: &[u8]) -> Result<Tensor> {
    let mut r = Reader::new(buf);
    let t = decode_tensor_from(&mut r)?;
    r.finish()?;
    Ok(t)
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    encode_tensor(t, &mut buf)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    decode_tensor(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn encode_weights(weights: &ModelWeights) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(&WEIGHTS_MAGIC);
    out.push(FORMAT_VERSION);
    let count = u32::try_from(weights.len()).map_err(|_| Error::Shape("too many tensors".into()))?;
    out.extend_from_slice(&count.to_le_bytes());
    for (name, t) in weights.iter() {
        let len = u16::try_from(name.len())
            .map_err(|_| Error::Shape(format!("tensor name {name:?} too long")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        encode_tensor(t, &mut out)?;
    }
    Ok(out)
}

/// Decodes an archive into a name → tensor map without checking it
/// against a model config.
pub fn decode_weights_map(buf: &[u8]) -> Result<BTreeMap<String, Tensor>> {
    let mut r = Reader::new(buf);
    r.magic(WEIGHTS_MAGIC)?;
    let version = r.u8("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let count = r.u32("count")?;
    let mut map = BTreeMap::new();
    for _ in 0..count {
        let len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|e| Error::Truncated(format!("tensor name is not utf-8: {e}")))?
            .to_string();
        let t = decode_tensor_from(&mut r)?;
        if map.insert(name.clone(), t).is_some() {
            return Err(Error::DuplicateTensor(name));
        }
    }
    r.finish()?;
    Ok(map)
}

pub fn write_weights(path: impl AsRef<Path>, weights: &ModelWeights) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_weights(weights)?).map_err(|e| Error::io(path, e))
}

/// Loads an archive and checks it holds exactly the tensors `cfg` needs.
pub fn read_weights(path: impl AsRef<Path>, cfg: &ModelConfig) -> Result<ModelWeights> {
    let path = path.as_ref();
    let map = decode_weights_map(&fs::read(path).map_err(|e| Error::io(path, e))?)?;
    ModelWeights::from_map(cfg, map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transformer::init_synthetic_weights;
    use proptest::prelude::*;

    fn sample() -> Tensor {
        Tensor::new(vec![2, 3], vec![1.0, -2.5, 0.0, 3.25, f32::MIN_POSITIVE, 1e30]).unwrap()
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.vten");
        write_tensor(&p, &sample()).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(bytes.len(), 4 + 3 + 2 * 4 + 6 * 4);
        assert_eq!(&bytes[..7], b"VTEN\x01\x00\x02");
        let back = read_tensor(&p).unwrap();
        assert_eq!(back, sample());
        let mut again = Vec::new();
        encode_tensor(&back, &mut again).unwrap();
        assert_eq!(again, bytes);
    }

    #[test]
    fn documented_bytes() {
        let t = Tensor::new(vec![2], vec![1.0, -2.0]).unwrap();
        let mut buf = Vec::new();
        encode_tensor(&t, &mut buf).unwrap();
        assert_eq!(hex::encode(&buf), "5654454e010001020000000000803f000000c0");
        let mut w = ModelWeights::default();
        w.insert("head", t);
        assert_eq!(
            hex::encode(encode_weights(&w).unwrap()),
            "5657545301010000000400686561645654454e010001020000000000803f000000c0"
        );
    }

    #[test]
    fn rejects_bad_magic() {
        let mut buf = Vec::new();
        encode_tensor(&sample(), &mut buf).unwrap();
        buf[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_tensor(&buf), Err(Error::BadMagic { found, .. }) if &found == b"XXXX"));
    }

    #[test]
    fn rejects_short_payload() {
        let mut buf = Vec::new();
        encode_tensor(&sample(), &mut buf).unwrap();
        buf.truncate(15 + 20);
        assert!(matches!(decode_tensor(&buf), Err(Error::Truncated(_))));
    }

    #[test]
    fn rejects_overflowing_dims() {
        let mut buf = b"VTEN\x01\x00\x03".to_vec();
        for _ in 0..3 {
            buf.extend_from_slice(&u32::MAX.to_le_bytes());
        }
        assert!(matches!(decode_tensor(&buf), Err(Error::DimsOverflow(_))));
    }

    #[test]
    fn rejects_version_and_dtype() {
        let mut buf = Vec::new();
        encode_tensor(&sample(), &mut buf).unwrap();
        let mut v = buf.clone();
        v[4] = 2;
        assert!(matches!(decode_tensor(&v), Err(Error::UnsupportedVersion(2))));
        buf[5] = 1;
        assert!(matches!(decode_tensor(&buf), Err(Error::UnsupportedDtype(1))));
    }

    fn tiny() -> ModelConfig {
        ModelConfig {
            layers: 1,
            embed_dim: 8,
            heads: 2,
            frames: 2,
            image_size: 8,
            patch: 4,
            num_classes: 3,
            ..ModelConfig::vivit_like()
        }
    }

    #[test]
    fn weights_round_trip_and_validation() {
        let cfg = tiny();
        let w = init_synthetic_weights(&cfg, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.vwts");
        write_weights(&p, &w).unwrap();
        assert_eq!(read_weights(&p, &cfg).unwrap(), w);

        let mut other = cfg.clone();
        other.layers = 2;
        assert!(matches!(read_weights(&p, &other), Err(Error::MissingTensor(_))));

        let mut extra = w.clone();
        extra.insert("stray", Tensor::zeros(&[1]));
        write_weights(&p, &extra).unwrap();
        assert!(matches!(read_weights(&p, &cfg), Err(Error::UnexpectedTensor(n)) if n == "stray"));
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut buf = WEIGHTS_MAGIC.to_vec();
        buf.push(1);
        buf.extend_from_slice(&2u32.to_le_bytes());
        for _ in 0..2 {
            buf.extend_from_slice(&1u16.to_le_bytes());
            buf.push(b'a');
            encode_tensor(&Tensor::zeros(&[1]), &mut buf).unwrap();
        }
        assert!(matches!(decode_weights_map(&buf), Err(Error::DuplicateTensor(_))));
    }

    proptest! {
        #[test]
        fn encode_decode_is_identity(
            dims in proptest::collection::vec(1usize..5, 1..4),
            seed: u32,
        ) {
            let n: usize = dims.iter().product();
            let data: Vec<f32> = (0..n).map(|i| f32::from_bits(seed.wrapping_mul(2654435761).wrapping_add(i as u32) & 0x7f7f_ffff)).collect();
            let t = Tensor::new(dims, data).unwrap();
            let mut buf = Vec::new();
            encode_tensor(&t, &mut buf).unwrap();
            let back = decode_tensor(&buf).unwrap();
            prop_assert_eq!(back.dims(), t.dims());
            prop_assert!(back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
