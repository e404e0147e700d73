//! Named-tensor weight container and its on-disk `PYDW` encoding.
//!
//! Layout (all integers little-endian `u32`, no padding):
//!
//! ```text
//! "PYDW" | version = 1 | entry count
//! per entry: name length | name (UTF-8) | rank | dims... | dtype u8 (0 = f32) | data (f32 LE)
//! ```
//!
//! Entries keep insertion order, so a given container always serializes to
//! the same bytes.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::net::NetworkConfig;

pub const MAGIC: [u8; 4] = *b"PYDW";
pub const FORMAT_VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

#[derive(Clone, Debug)]
pub struct TensorEntry {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl TensorEntry {
    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }
}

// Bitwise comparison: a round trip must preserve every payload exactly,
// including NaN bit patterns.
impl PartialEq for TensorEntry {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims
            && self.data.len() == other.data.len()
            && self.data.iter().zip(&other.data).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightContainer {
    entries: IndexMap<String, TensorEntry>,
}

impl WeightContainer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a tensor; names must be unique and `data.len()` must match `dims`.
    pub fn insert(&mut self, name: impl Into<String>, dims: Vec<usize>, data: Vec<f32>) -> Result<()> {
        let name = name.into();
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::arg(format!("tensor `{name}` needs positive dims, got {dims:?}")));
        }
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::shape(
                "WeightContainer::insert",
                format!("{expected} values for `{name}` {dims:?}"),
                format!("{} values", data.len()),
            ));
        }
        if self.entries.contains_key(&name) {
            return Err(Error::arg(format!("duplicate tensor name `{name}`")));
        }
        self.entries.insert(name, TensorEntry { dims, data });
        Ok(())
    }

    /// Replaces the payload of an existing entry, keeping its position.
    pub fn replace(&mut self, name: &str, dims: Vec<usize>, data: Vec<f32>) -> Result<()> {
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::shape("WeightContainer::replace", expected, data.len()));
        }
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::MissingTensor(name.to_owned()))?;
        *entry = TensorEntry { dims, data };
        Ok(())
    }

    pub fn remove(&mut self, name: &str) -> Option<TensorEntry> {
        self.entries.shift_remove(name)
    }

    pub fn get(&self, name: &str) -> Option<&TensorEntry> {
        self.entries.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &TensorEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_parameters(&self) -> usize {
        self.entries.values().map(TensorEntry::numel).sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload: usize = self
            .entries
            .iter()
            .map(|(k, v)| 9 + k.len() + 4 * v.dims.len() + 4 * v.data.len())
            .sum();
        let mut out = Vec::with_capacity(12 + payload);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, entry) in &self.entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(entry.dims.len() as u32).to_le_bytes());
            for &d in &entry.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            out.push(DTYPE_F32);
            for v in &entry.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "header")?;
        if magic != MAGIC {
            return Err(Error::Format(format!("bad magic {:?}, expected \"PYDW\"", String::from_utf8_lossy(magic))));
        }
        let version = r.u32("header")?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {version}")));
        }
        let count = r.u32("header")?;

        let mut container = WeightContainer::new();
        for index in 0..count {
            let what = format!("entry #{index}");
            let name_len = r.u32(&what)? as usize;
            let name = std::str::from_utf8(r.take(name_len, &what)?)
                .map_err(|_| Error::Format(format!("{what}: name is not valid UTF-8")))?
                .to_owned();
            let ctx = format!("entry `{name}`");
            let rank = r.u32(&ctx)? as usize;
            let dims = (0..rank).map(|_| r.u32(&ctx).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let dtype = r.take(1, &ctx)?[0];
            if dtype != DTYPE_F32 {
                return Err(Error::Format(format!("{ctx}: unsupported dtype tag {dtype}")));
            }
            if rank == 0 || dims.contains(&0) {
                return Err(Error::Format(format!("{ctx}: invalid dims {dims:?}")));
            }
            let numel = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|n| n.checked_mul(4).is_some())
                .ok_or_else(|| Error::Format(format!("{ctx}: dims {dims:?} overflow")))?;
            let raw = r.take(numel * 4, &ctx)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if container.entries.contains_key(&name) {
                return Err(Error::Format(format!("duplicate entry name `{name}`")));
            }
            container.entries.insert(name, TensorEntry { dims, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after {count} entries",
                bytes.len() - r.pos
            )));
        }
        Ok(container)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Format(format!(
                "truncated data in {what}: needed {len} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            ))
        })?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Seeded fan-in-scaled uniform initialization of every tensor the config
/// demands. Kernels draw from `[-sqrt(6 / fan_in), +sqrt(6 / fan_in)]`,
/// biases are zero.
pub fn random_init(config: &NetworkConfig, seed: u64) -> Result<WeightContainer> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut container = WeightContainer::new();
    for layer in config.layer_table() {
        let dims = layer.kernel_dims();
        let bound = (6.0 / layer.fan_in() as f64).sqrt();
        let numel: usize = dims.iter().product();
        let kernel = (0..numel)
            .map(|_| rng.random_range(-bound..=bound) as f32)
            .collect();
        container.insert(layer.kernel_name(), dims.to_vec(), kernel)?;
        container.insert(layer.bias_name(), vec![layer.out_channels], vec![0.0; layer.out_channels])?;
    }
    Ok(container)
}
