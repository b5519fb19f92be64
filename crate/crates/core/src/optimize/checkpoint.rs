//! Versioned binary container of named tensors.
//!
//! Layout (little endian): magic `RLTXCKPT`, `u32` format version, `u32` entry
//! count, then per entry: `u16` name length, UTF-8 name, `u8` dtype
//! (0 = f64, 1 = u64, 2 = bytes), `u8` rank, `rank × u64` dims, payload.

use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"RLTXCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Entry {
    F64 { shape: Vec<usize>, data: Vec<f64> },
    U64 { shape: Vec<usize>, data: Vec<u64> },
    Bytes(Vec<u8>),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    entries: Vec<(String, Entry)>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    fn put(&mut self, name: &str, entry: Entry) {
        match self.entries.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = entry,
            None => self.entries.push((name.to_string(), entry)),
        }
    }

    pub fn put_f64(&mut self, name: &str, shape: &[usize], data: Vec<f64>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.put(
            name,
            Entry::F64 {
                shape: shape.to_vec(),
                data,
            },
        );
    }

    pub fn put_u64(&mut self, name: &str, data: Vec<u64>) {
        self.put(
            name,
            Entry::U64 {
                shape: vec![data.len()],
                data,
            },
        );
    }

    pub fn put_str(&mut self, name: &str, text: &str) {
        self.put(name, Entry::Bytes(text.as_bytes().to_vec()));
    }

    fn get(&self, name: &str) -> Result<&Entry> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, e)| e)
            .ok_or_else(|| bad(format!("missing entry {name:?}")))
    }

    pub fn get_f64(&self, name: &str) -> Result<(&[usize], &[f64])> {
        match self.get(name)? {
            Entry::F64 { shape, data } => Ok((shape, data)),
            _ => Err(bad(format!("entry {name:?} is not f64"))),
        }
    }

    pub fn get_u64(&self, name: &str) -> Result<&[u64]> {
        match self.get(name)? {
            Entry::U64 { data, .. } => Ok(data),
            _ => Err(bad(format!("entry {name:?} is not u64"))),
        }
    }

    pub fn get_str(&self, name: &str) -> Result<&str> {
        match self.get(name)? {
            Entry::Bytes(b) => std::str::from_utf8(b).map_err(|_| bad(format!("entry {name:?} is not UTF-8"))),
            _ => Err(bad(format!("entry {name:?} is not text"))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, entry) in &self.entries {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            let (dtype, shape): (u8, Vec<usize>) = match entry {
                Entry::F64 { shape, .. } => (0, shape.clone()),
                Entry::U64 { shape, .. } => (1, shape.clone()),
                Entry::Bytes(b) => (2, vec![b.len()]),
            };
            out.push(dtype);
            out.push(shape.len() as u8);
            for d in &shape {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            match entry {
                Entry::F64 { data, .. } => data.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                Entry::U64 { data, .. } => data.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                Entry::Bytes(b) => out.extend_from_slice(b),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported checkpoint version {version}")));
        }
        let count = r.u32()? as usize;
        let mut c = Container::new();
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| bad("entry name is not UTF-8"))?
                .to_string();
            let dtype = r.u8()?;
            let rank = r.u8()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| bad("shape overflow"))?;
            let entry = match dtype {
                0 => Entry::F64 {
                    data: r.chunks(n, 8)?.map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect(),
                    shape,
                },
                1 => Entry::U64 {
                    data: r.chunks(n, 8)?.map(|b| u64::from_le_bytes(b.try_into().unwrap())).collect(),
                    shape,
                },
                2 => Entry::Bytes(r.take(n)?.to_vec()),
                d => return Err(bad(format!("unknown dtype {d} for entry {name:?}"))),
            };
            c.entries.push((name, entry));
        }
        if r.pos != bytes.len() {
            return Err(bad("trailing bytes after last entry"));
        }
        Ok(c)
    }

    /// Writes through a temporary file so a crash never leaves a torn checkpoint.
    pub fn write(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| bad("truncated checkpoint"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn chunks(&mut self, n: usize, width: usize) -> Result<std::slice::ChunksExact<'a, u8>> {
        let len = n.checked_mul(width).ok_or_else(|| bad("payload overflow"))?;
        Ok(self.take(len)?.chunks_exact(width))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
