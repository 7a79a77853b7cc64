//! Single-file checkpoint container.
//!
//! ```text
//! magic    8 bytes  "ADAGANCK"
//! version  u32
//! arch     string
//! n_meta   u32, then n_meta × (key string, value string)
//! n_tensor u32, then n_tensor × (name string, rank u32, rank × u64 dims, f32 data)
//! ```
//!
//! Integers and floats are little-endian; strings are a u32 byte length
//! followed by UTF-8.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ADAGANCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub arch: String,
    pub metadata: BTreeMap<String, String>,
    /// Kept in insertion order.
    pub tensors: Vec<(String, Tensor)>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.error(format!("truncated {what}: need {n} bytes")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn error(&self, reason: String) -> Error {
        Error::Format {
            offset: self.pos as u64,
            reason,
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)? as usize;
        let start = self.pos;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::Format {
            offset: start as u64,
            reason: format!("{what} is not UTF-8"),
        })
    }
}

impl Checkpoint {
    pub fn new(arch: impl Into<String>) -> Self {
        Checkpoint {
            arch: arch.into(),
            ..Default::default()
        }
    }

    pub fn insert_meta(&mut self, key: impl Into<String>, value: impl ToString) {
        self.metadata.insert(key.into(), value.to_string());
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.metadata
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Format {
                offset: 0,
                reason: format!("checkpoint metadata lacks {key:?}"),
            })
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.meta(key)?;
        raw.parse().map_err(|_| Error::Format {
            offset: 0,
            reason: format!("checkpoint metadata {key:?} has unparseable value {raw:?}"),
        })
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.push((name.into(), tensor));
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload: usize = self.tensors.iter().map(|(_, t)| t.numel() * 4).sum();
        let mut out = Vec::with_capacity(payload + 1024);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        put_str(&mut out, &self.arch);
        put_u32(&mut out, self.metadata.len() as u32);
        for (k, v) in &self.metadata {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        put_u32(&mut out, self.tensors.len() as u32);
        for (name, t) in &self.tensors {
            put_str(&mut out, name);
            put_u32(&mut out, t.rank() as u32);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8, "magic")? != CHECKPOINT_MAGIC {
            return Err(Error::Format {
                offset: 0,
                reason: "not a checkpoint (bad magic)".into(),
            });
        }
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format {
                offset: 8,
                reason: format!("unsupported checkpoint version {version}"),
            });
        }
        let arch = r.string("architecture name")?;
        let mut metadata = BTreeMap::new();
        for _ in 0..r.u32("metadata count")? {
            let k = r.string("metadata key")?;
            let v = r.string("metadata value")?;
            metadata.insert(k, v);
        }
        let count = r.u32("tensor count")?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let name = r.string("tensor name")?;
            let rank = r.u32("tensor rank")? as usize;
            let mut shape = Vec::with_capacity(rank.min(16));
            for _ in 0..rank {
                shape.push(usize::try_from(r.u64("tensor dim")?).map_err(|_| r.error("dimension overflows usize".into()))?);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|n| n.checked_mul(4).is_some())
                .ok_or_else(|| r.error(format!("tensor {name} has an impossible shape {shape:?}")))?;
            let raw = r.take(numel * 4, "tensor data")?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            let t = Tensor::new(&shape, data).map_err(|e| r.error(format!("tensor {name}: {e}")))?;
            tensors.push((name, t));
        }
        if r.pos != bytes.len() {
            return Err(r.error(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint {
            arch,
            metadata,
            tensors,
        })
    }

    /// Writes to a sibling temp file, then renames over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let mut tmp = tempfile_in(dir, path)?;
        tmp.1.write_all(&self.to_bytes())?;
        tmp.1.sync_all()?;
        drop(tmp.1);
        fs::rename(&tmp.0, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Checkpoint::from_bytes(&fs::read(path)?)
    }
}

fn tempfile_in(dir: &Path, target: &Path) -> Result<(std::path::PathBuf, fs::File)> {
    let stem = target.file_name().and_then(|s| s.to_str()).unwrap_or("checkpoint");
    let tmp = dir.join(format!(".{stem}.tmp-{}", std::process::id()));
    let file = fs::File::create(&tmp)?;
    Ok((tmp, file))
}
