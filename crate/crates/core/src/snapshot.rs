//! Self-describing binary parameter snapshots.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic     8 bytes  "CNAVSNAP"
//! version   u32
//! n_meta    u32, then n_meta × (key: str, value: str)
//! n_tensor  u32, then n_tensor × (name: str, rank: u32, dims: rank × u64, data: numel × f64)
//! ```
//!
//! where `str` is a `u32` byte length followed by UTF-8 bytes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::tensor::{ParamSet, Tensor};

pub const MAGIC: &[u8; 8] = b"CNAVSNAP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("cannot access snapshot {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a parameter snapshot (bad magic)")]
    BadMagic,
    #[error("unsupported snapshot version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
    #[error("snapshot truncated while reading {0}")]
    Truncated(&'static str),
    #[error("corrupt snapshot: {0}")]
    Corrupt(String),
    #[error("snapshot does not match the network: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    /// Free-form key/value pairs, e.g. the serialized network config.
    pub metadata: BTreeMap<String, String>,
    pub params: ParamSet,
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

impl Snapshot {
    pub fn new(params: ParamSet) -> Self {
        Snapshot {
            metadata: BTreeMap::new(),
            params,
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<String>) -> Self {
        self.metadata.insert(key.to_string(), value.into());
        self
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.params.total_elements() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.metadata.len() as u32).to_le_bytes());
        for (k, v) in &self.metadata {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, tensor) in self.params.iter() {
            put_str(&mut out, name);
            out.extend_from_slice(&(tensor.shape().len() as u32).to_le_bytes());
            for &d in tensor.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for x in tensor.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SnapshotError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len(), "magic")? != MAGIC {
            return Err(SnapshotError::BadMagic);
        }
        let version = r.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(SnapshotError::Version(version));
        }
        let mut metadata = BTreeMap::new();
        for _ in 0..r.u32("metadata count")? {
            let k = r.string("metadata key")?;
            let v = r.string("metadata value")?;
            metadata.insert(k, v);
        }
        let count = r.u32("tensor count")? as usize;
        let mut named = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name = r.string("tensor name")?;
            let rank = r.u32("tensor rank")? as usize;
            if rank > 8 {
                return Err(SnapshotError::Corrupt(format!("tensor `{name}` has rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let d = r.u64("tensor dims")?;
                shape.push(usize::try_from(d).map_err(|_| SnapshotError::Corrupt(format!("dimension {d}")))?);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|n| n.checked_mul(8).is_some_and(|b| b <= r.remaining()))
                .ok_or(SnapshotError::Truncated("tensor data"))?;
            let raw = r.take(numel * 8, "tensor data")?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let tensor = Tensor::new(&shape, data).map_err(|e| SnapshotError::Corrupt(e.to_string()))?;
            named.push((name, tensor));
        }
        if r.remaining() != 0 {
            return Err(SnapshotError::Corrupt(format!("{} trailing bytes", r.remaining())));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some((dup, _)) = named.iter().find(|(n, _)| !seen.insert(n.clone())) {
            return Err(SnapshotError::Corrupt(format!("duplicate tensor `{dup}`")));
        }
        Ok(Snapshot {
            metadata,
            params: ParamSet::from_named(named),
        })
    }

    /// Writes via a temporary file and rename so readers never see a partial file.
    pub fn save(&self, path: &Path) -> Result<(), SnapshotError> {
        write_atomic(path, &self.to_bytes()).map_err(|source| SnapshotError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, SnapshotError> {
        let bytes = fs::read(path).map_err(|source| SnapshotError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Snapshot::from_bytes(&bytes)
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], SnapshotError> {
        if n > self.remaining() {
            return Err(SnapshotError::Truncated(what));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, SnapshotError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self, what: &'static str) -> Result<String, SnapshotError> {
        let len = self.u32(what)? as usize;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| SnapshotError::Corrupt(format!("{what} is not UTF-8")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Snapshot {
        let params = ParamSet::from_named(vec![
            ("a.weight".into(), Tensor::new(&[2, 3], vec![1.0, -2.5, 3.0, 0.0, f64::MIN_POSITIVE, 7.0]).unwrap()),
            ("a.bias".into(), Tensor::vector(vec![0.5, -0.5])),
        ]);
        Snapshot::new(params).with_meta("network", "{\"use_lstm\":true}")
    }

    #[test]
    fn round_trip_is_exact() {
        let snap = sample();
        let bytes = snap.to_bytes();
        assert_eq!(Snapshot::from_bytes(&bytes).unwrap(), snap);
        assert_eq!(Snapshot::from_bytes(&bytes).unwrap().to_bytes(), bytes);
    }

    #[test]
    fn rejects_damage() {
        let bytes = sample().to_bytes();
        assert!(matches!(Snapshot::from_bytes(b"garbage!"), Err(SnapshotError::BadMagic)));
        assert!(matches!(Snapshot::from_bytes(&bytes[..bytes.len() - 3]), Err(SnapshotError::Truncated(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(Snapshot::from_bytes(&extra), Err(SnapshotError::Corrupt(_))));
        let mut version = bytes.clone();
        version[8] = 9;
        assert!(matches!(Snapshot::from_bytes(&version), Err(SnapshotError::Version(9))));
        for cut in 0..bytes.len() {
            assert!(Snapshot::from_bytes(&bytes[..cut]).is_err());
        }
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.snap");
        sample().save(&path).unwrap();
        assert_eq!(Snapshot::load(&path).unwrap(), sample());
        assert!(matches!(Snapshot::load(&dir.path().join("missing")), Err(SnapshotError::Io { .. })));
    }
}
