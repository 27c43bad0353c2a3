//! Little-endian binary container: magic `BLAN`, a `u32` format version,
//! then sections of (`u32` name length, UTF-8 name, `u32` value count,
//! `f32` values), then a CRC32 of everything before it.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"BLAN";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    sections: Vec<(String, Vec<f32>)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a section; names must be unique.
    pub fn push(&mut self, name: impl Into<String>, values: Vec<f32>) {
        let name = name.into();
        assert!(self.find(&name).is_none(), "duplicate checkpoint section {name}");
        self.sections.push((name, values));
    }

    fn find(&self, name: &str) -> Option<&[f32]> {
        self.sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn get(&self, name: &str) -> Result<&[f32]> {
        self.find(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing section {name:?}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.find(name).is_some()
    }

    pub fn section_names(&self) -> impl Iterator<Item = &str> {
        self.sections.iter().map(|(n, _)| n.as_str())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for (name, values) in &self.sections {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(values.len() as u32).to_le_bytes());
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        if bytes.len() < 12 {
            return Err(bad(format!("{} bytes is too short", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(bad("bad magic".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let actual = crc32fast::hash(body);
        if stored != actual {
            return Err(bad(format!("CRC mismatch: stored {stored:08x}, computed {actual:08x}")));
        }
        let version = u32::from_le_bytes(body[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let mut r = Reader { data: body, at: 8 };
        let mut ckpt = Checkpoint::new();
        while r.at < body.len() {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| bad("section name is not UTF-8".into()))?
                .to_string();
            let count = r.u32()? as usize;
            let raw = r.take(count.checked_mul(4).ok_or_else(|| bad("section too large".into()))?)?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if ckpt.contains(&name) {
                return Err(bad(format!("duplicate section {name:?}")));
            }
            ckpt.sections.push((name, values));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    data: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.at < n {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.at)));
        }
        let s = &self.data[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Encodes small integers exactly as `f32` values.
pub(crate) fn encode_usize(values: &[usize]) -> Vec<f32> {
    values
        .iter()
        .map(|&v| {
            assert!(v < 1 << 24, "{v} is not exactly representable");
            v as f32
        })
        .collect()
}

pub(crate) fn decode_usize(section: &str, values: &[f32], expected: usize) -> Result<Vec<usize>> {
    if values.len() != expected {
        return Err(Error::Checkpoint(format!(
            "section {section:?} has {} values, expected {expected}",
            values.len()
        )));
    }
    values
        .iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 && v < (1 << 24) as f32 {
                Ok(v as usize)
            } else {
                Err(Error::Checkpoint(format!("section {section:?} holds non-integer {v}")))
            }
        })
        .collect()
}

/// Splits a `u64` into four exactly representable 16-bit chunks.
pub(crate) fn encode_u64(v: u64) -> Vec<f32> {
    (0..4).map(|i| ((v >> (16 * i)) & 0xffff) as f32).collect()
}

pub(crate) fn decode_u64(section: &str, values: &[f32]) -> Result<u64> {
    let parts = decode_usize(section, values, 4)?;
    Ok(parts
        .iter()
        .enumerate()
        .fold(0u64, |acc, (i, &p)| acc | ((p as u64 & 0xffff) << (16 * i))))
}
