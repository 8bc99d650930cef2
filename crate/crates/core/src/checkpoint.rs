//! Versioned container for trained parameters.
//!
//! Layout (little endian): magic `DICRCKPT`, `u32` format version, the stage
//! name and a free-form metadata string (both `u64` length + UTF-8), then a
//! `u64` section count and each section as a name plus a parameter store.

use std::path::Path;

use crate::error::{DicrError, Result};
use crate::nn::params::{read_u32, read_u64};
use crate::nn::ParamStore;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"DICRCKPT";

#[derive(Debug, Clone, Default)]
pub struct Checkpoint {
    pub stage: String,
    /// Serialised configuration the parameters were trained with.
    pub meta: String,
    pub sections: Vec<(String, ParamStore)>,
}

fn write_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u64).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn read_str(r: &mut &[u8]) -> Result<String> {
    let len = read_u64(r)? as usize;
    if len > r.len() {
        return Err(DicrError::Checkpoint("truncated string".into()));
    }
    let (head, tail) = r.split_at(len);
    let s = String::from_utf8(head.to_vec())
        .map_err(|_| DicrError::Checkpoint("string is not UTF-8".into()))?;
    *r = tail;
    Ok(s)
}

impl Checkpoint {
    pub fn new(stage: &str, meta: &str) -> Self {
        Checkpoint {
            stage: stage.to_string(),
            meta: meta.to_string(),
            sections: Vec::new(),
        }
    }

    pub fn with_section(mut self, name: &str, store: &ParamStore) -> Self {
        self.sections.push((name.to_string(), store.clone()));
        self
    }

    pub fn section(&self, name: &str) -> Option<&ParamStore> {
        self.sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| s)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_FORMAT_VERSION.to_le_bytes());
        write_str(&mut out, &self.stage);
        write_str(&mut out, &self.meta);
        out.extend_from_slice(&(self.sections.len() as u64).to_le_bytes());
        for (name, store) in &self.sections {
            write_str(&mut out, name);
            store.write_to(&mut out)?;
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(DicrError::Checkpoint("not a model checkpoint".into()));
        }
        let mut r = &bytes[MAGIC.len()..];
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_FORMAT_VERSION {
            return Err(DicrError::Version(format!(
                "checkpoint format version {version}, expected {CHECKPOINT_FORMAT_VERSION}"
            )));
        }
        let stage = read_str(&mut r)?;
        let meta = read_str(&mut r)?;
        let n = read_u64(&mut r)? as usize;
        let mut sections = Vec::with_capacity(n.min(16));
        for _ in 0..n {
            let name = read_str(&mut r)?;
            let store = ParamStore::read_from(&mut r)?;
            sections.push((name, store));
        }
        Ok(Checkpoint {
            stage,
            meta,
            sections,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| DicrError::path(dir, e))?;
        }
        std::fs::write(path, self.to_bytes()?).map_err(|e| DicrError::path(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| DicrError::path(path, e))?;
        Self::from_bytes(&bytes)
    }
}
