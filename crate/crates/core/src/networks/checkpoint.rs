//! Versioned binary checkpoint container with named sections, plus a JSON
//! sidecar carrying architecture metadata.
//!
//! Layout (little endian):
//!
//! ```text
//! magic     8 bytes  "HJBPPOCK"
//! version   u32
//! sections  u32
//! repeated: name_len u16, name utf-8, payload_len u64, payload
//! ```
//!
//! Floating-point payloads are stored as raw IEEE-754 bits so a restored run
//! continues bit-identically.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::MlpLayout;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"HJBPPOCK";
pub const FORMAT_VERSION: u32 = 1;

/// Architecture metadata written next to the binary file as `<name>.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub algorithm: String,
    pub environment: String,
    pub value_layout: MlpLayout,
    pub policy_mean_layout: MlpLayout,
    pub iteration: u64,
    pub timesteps: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    sections: BTreeMap<String, Vec<u8>>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn section_names(&self) -> impl Iterator<Item = &str> {
        self.sections.keys().map(String::as_str)
    }

    pub fn put_bytes(&mut self, name: &str, bytes: Vec<u8>) {
        self.sections.insert(name.to_owned(), bytes);
    }

    pub fn put_f64s(&mut self, name: &str, values: &[f64]) {
        let bytes = values.iter().flat_map(|v| v.to_bits().to_le_bytes()).collect();
        self.put_bytes(name, bytes);
    }

    pub fn put_u64s(&mut self, name: &str, values: &[u64]) {
        let bytes = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        self.put_bytes(name, bytes);
    }

    pub fn put_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.put_bytes(name, serde_json::to_vec(value)?);
        Ok(())
    }

    pub fn bytes(&self, name: &str) -> Result<&[u8]> {
        self.sections
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| missing(name))
    }

    pub fn f64s(&self, name: &str) -> Result<Vec<f64>> {
        let b = self.bytes(name)?;
        if b.len() % 8 != 0 {
            return Err(bad(format!("section `{name}` is not a whole number of f64 values")));
        }
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().unwrap())))
            .collect())
    }

    pub fn u64s(&self, name: &str) -> Result<Vec<u64>> {
        let b = self.bytes(name)?;
        if b.len() % 8 != 0 {
            return Err(bad(format!("section `{name}` is not a whole number of u64 values")));
        }
        Ok(b.chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn json<T: for<'de> Deserialize<'de>>(&self, name: &str) -> Result<T> {
        Ok(serde_json::from_slice(self.bytes(name)?)?)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.sections.len() as u32).to_le_bytes());
        for (name, payload) in &self.sections {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
            out.extend_from_slice(payload);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(bad("bad magic".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {version}")));
        }
        let count = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        let mut sections = BTreeMap::new();
        for _ in 0..count {
            let name_len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| bad("section name is not utf-8".into()))?
                .to_owned();
            let len = u64::from_le_bytes(r.take(8)?.try_into().unwrap()) as usize;
            sections.insert(name, r.take(len)?.to_vec());
        }
        if r.pos != bytes.len() {
            return Err(bad("trailing bytes after last section".into()));
        }
        Ok(Checkpoint { sections })
    }

    /// Write `path` and its sidecar `path.json`. The binary is written to a
    /// temporary file first and renamed into place.
    pub fn save(&self, path: &Path, meta: &CheckpointMeta) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.encode()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        let side = sidecar_path(path);
        let json = serde_json::to_string_pretty(meta)?;
        fs::write(&side, json).map_err(|e| Error::io(&side, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, CheckpointMeta)> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let ck = Self::decode(&bytes).map_err(|e| match e {
            Error::Checkpoint { reason, .. } => Error::Checkpoint {
                path: path.to_owned(),
                reason,
            },
            other => other,
        })?;
        let side = sidecar_path(path);
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        Ok((ck, serde_json::from_str(&text)?))
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| bad("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
}

fn bad(reason: String) -> Error {
    Error::Checkpoint {
        path: PathBuf::new(),
        reason,
    }
}

fn missing(name: &str) -> Error {
    bad(format!("missing section `{name}`"))
}
