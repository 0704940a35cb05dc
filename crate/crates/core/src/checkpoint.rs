//! Binary checkpoint files.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "QNAV"                      4 bytes magic
//! version                     u32
//! metadata length             u32, then that many bytes of UTF-8 `key=value` lines
//! parameters                  per layer: weights (row-major f64), then bias (f64)
//! adam first moments          same layout as the parameters
//! adam second moments         same layout as the parameters
//! ```
//!
//! Layer widths and the Adam scalars live in the metadata block, so a reader
//! knows how many floats to expect before touching the parameter blocks.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::neural::{AdamState, Dense, Gradients, Mlp};

pub const MAGIC: &[u8; 4] = b"QNAV";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint file (bad magic header)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (this build reads version {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint truncated: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("checkpoint has {0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("checkpoint metadata: {0}")]
    Metadata(String),
    #[error("checkpoint network is {found:?} but {expected:?} was required")]
    Dimension { expected: Vec<usize>, found: Vec<usize> },
}

/// Free-form provenance stored alongside the weights.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckpointMeta {
    entries: BTreeMap<String, String>,
}

impl CheckpointMeta {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.set(key, value);
        self
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_owned(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, CheckpointError> {
        let raw = self.get(key).ok_or_else(|| CheckpointError::Metadata(format!("missing key '{key}'")))?;
        raw.parse().map_err(|_| CheckpointError::Metadata(format!("bad value for '{key}': {raw}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    fn encode(&self) -> Result<String, CheckpointError> {
        let mut out = String::new();
        for (k, v) in &self.entries {
            if k.contains(['=', '\n']) || v.contains('\n') {
                return Err(CheckpointError::Metadata(format!("entry '{k}' cannot be encoded")));
            }
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        Ok(out)
    }

    fn decode(text: &str) -> Result<Self, CheckpointError> {
        let mut entries = BTreeMap::new();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CheckpointError::Metadata(format!("malformed line '{line}'")))?;
            entries.insert(k.to_owned(), v.to_owned());
        }
        Ok(Self { entries })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: Mlp,
    pub adam: AdamState,
    pub meta: CheckpointMeta,
}

const RESERVED: [&str; 7] =
    ["format_version", "layer_dims", "adam.t", "adam.lr", "adam.beta1", "adam.beta2", "adam.eps"];

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>, CheckpointError> {
        let dims = self.net.dims();
        if self.adam.m.dims() != dims || self.adam.v.dims() != dims {
            return Err(CheckpointError::Dimension { expected: dims, found: self.adam.m.dims() });
        }
        let mut meta = self.meta.clone();
        let dims_text: Vec<String> = dims.iter().map(ToString::to_string).collect();
        meta.set("format_version", FORMAT_VERSION);
        meta.set("layer_dims", dims_text.join(","));
        meta.set("adam.t", self.adam.t);
        meta.set("adam.lr", self.adam.lr);
        meta.set("adam.beta1", self.adam.beta1);
        meta.set("adam.beta2", self.adam.beta2);
        meta.set("adam.eps", self.adam.eps);
        let meta_text = meta.encode()?;

        let floats = self.net.num_params() * 3;
        let mut out = Vec::with_capacity(12 + meta_text.len() + floats * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta_text.len() as u32).to_le_bytes());
        out.extend_from_slice(meta_text.as_bytes());
        let blocks = self.net.params().chain(self.adam.m.values()).chain(self.adam.v.values());
        for v in blocks {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, offset: 0 };
        if r.take(4).map_err(|_| CheckpointError::BadMagic)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version { found: version, expected: FORMAT_VERSION });
        }
        let meta_len = r.u32()? as usize;
        let meta_text = std::str::from_utf8(r.take(meta_len)?)
            .map_err(|_| CheckpointError::Metadata("metadata is not UTF-8".into()))?;
        let mut meta = CheckpointMeta::decode(meta_text)?;

        let dims: Vec<usize> = meta
            .get("layer_dims")
            .ok_or_else(|| CheckpointError::Metadata("missing key 'layer_dims'".into()))?
            .split(',')
            .map(|d| d.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| CheckpointError::Metadata("bad layer_dims".into()))?;
        let template = Mlp::new(&dims).map_err(|e| CheckpointError::Metadata(e.to_string()))?;

        let net = Mlp::from_layers(r.layers(&dims)?).expect("shape comes from dims");
        let m = Gradients { layers: r.layers(&dims)? };
        let v = Gradients { layers: r.layers(&dims)? };
        if r.offset != bytes.len() {
            return Err(CheckpointError::TrailingBytes(bytes.len() - r.offset));
        }
        let mut adam = AdamState::new(&template, meta.parse("adam.lr")?);
        adam.m = m;
        adam.v = v;
        adam.t = meta.parse("adam.t")?;
        adam.beta1 = meta.parse("adam.beta1")?;
        adam.beta2 = meta.parse("adam.beta2")?;
        adam.eps = meta.parse("adam.eps")?;
        for key in RESERVED {
            meta.entries.remove(key);
        }
        Ok(Self { net, adam, meta })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Fails unless the stored network has exactly `expected` layer widths.
    pub fn ensure_dims(&self, expected: &[usize]) -> Result<(), CheckpointError> {
        let found = self.net.dims();
        if found != expected {
            return Err(CheckpointError::Dimension { expected: expected.to_vec(), found });
        }
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.offset.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(
            CheckpointError::Truncated { offset: self.offset, needed: n - (self.bytes.len() - self.offset).min(n) },
        )?;
        let out = &self.bytes[self.offset..end];
        self.offset = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>, CheckpointError> {
        let raw = self.take(n * 8)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    fn layers(&mut self, dims: &[usize]) -> Result<Vec<Dense>, CheckpointError> {
        dims.windows(2)
            .map(|w| {
                let weights = Array2::from_shape_vec((w[1], w[0]), self.floats(w[0] * w[1])?).expect("sized");
                let bias = Array1::from_vec(self.floats(w[1])?);
                Ok(Dense { weights, bias })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = Mlp::new(&[26, 8, 5]).unwrap();
        net.init_weights(&mut rng);
        let mut adam = AdamState::new(&net, 1e-3);
        let (_, g) = net.backward(&[0.5; 26], 1, 3.0).unwrap();
        adam.step(&mut net, &g).unwrap();
        let meta = CheckpointMeta::new().with("algo", "ddqn").with("scenario", 2).with("seed", 7);
        Checkpoint { net, adam, meta }
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = sample();
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.meta.get("algo"), Some("ddqn"));
        assert_eq!(back.adam.t, 1);
    }

    #[test]
    fn corrupted_magic() {
        let mut bytes = sample().to_bytes().unwrap();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(CheckpointError::BadMagic)));
        assert!(matches!(Checkpoint::from_bytes(b"QN"), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn version_mismatch() {
        let mut bytes = sample().to_bytes().unwrap();
        bytes[4..8].copy_from_slice(&99u32.to_le_bytes());
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(CheckpointError::Version { found: 99, expected: FORMAT_VERSION })
        ));
    }

    #[test]
    fn truncation_and_trailing_bytes() {
        let bytes = sample().to_bytes().unwrap();
        for cut in [10, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(CheckpointError::Truncated { .. })),
                "cut at {cut}"
            );
        }
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(matches!(Checkpoint::from_bytes(&longer), Err(CheckpointError::TrailingBytes(1))));
    }

    #[test]
    fn dimension_check() {
        let ck = sample();
        assert!(ck.ensure_dims(&[26, 8, 5]).is_ok());
        assert!(matches!(ck.ensure_dims(&[26, 8, 3]), Err(CheckpointError::Dimension { .. })));
    }
}
