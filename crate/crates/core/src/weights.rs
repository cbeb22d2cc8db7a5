//! Named weight storage and its binary file format.
//!
//! Layout (little-endian throughout):
//!
//! ```text
//! "BMTW"  version:u16  count:u32
//! count x { name_len:u16  name:[u8]  dtype:u8  rank:u8  dims:[u32; rank]  data }
//! ```
//!
//! `dtype` 0 is real32 (`numel` f32 values). `dtype` 1 is packed bits: rank 2,
//! dims `[rows, cols]`, data is `rows * ceil(cols / 64)` u64 words using the
//! LSB-first, `1 = +1` convention with zeroed row padding.

use std::collections::HashSet;
use std::path::Path;

use indexmap::IndexMap;

use crate::binary::{words_for, BitMatrix};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"BMTW";
pub const VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum WeightTensor {
    F32 { dims: Vec<usize>, data: Vec<f32> },
    Packed(BitMatrix),
}

impl WeightTensor {
    pub fn dims(&self) -> Vec<usize> {
        match self {
            WeightTensor::F32 { dims, .. } => dims.clone(),
            WeightTensor::Packed(m) => vec![m.rows(), m.cols()],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightContainer {
    entries: IndexMap<String, WeightTensor>,
}

impl WeightContainer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: WeightTensor) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::Format(format!("duplicate tensor name '{name}'")));
        }
        self.entries.insert(name, t);
        Ok(())
    }

    pub fn insert_f32(&mut self, name: impl Into<String>, dims: Vec<usize>, data: Vec<f32>) -> Result<()> {
        self.insert(name, WeightTensor::F32 { dims, data })
    }

    pub fn get(&self, name: &str) -> Option<&WeightTensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut WeightTensor> {
        self.entries.get_mut(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &WeightTensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, t) in &self.entries {
            let nb = name.as_bytes();
            let nlen = u16::try_from(nb.len()).map_err(|_| Error::Format(format!("tensor name too long: {name}")))?;
            out.extend_from_slice(&nlen.to_le_bytes());
            out.extend_from_slice(nb);
            match t {
                WeightTensor::F32 { dims, data } => {
                    if dims.iter().product::<usize>() != data.len() {
                        return Err(Error::shape(format!("tensor '{name}' dims {dims:?} do not match data")));
                    }
                    out.push(0);
                    push_dims(&mut out, dims, name)?;
                    for v in data {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
                WeightTensor::Packed(m) => {
                    out.push(1);
                    push_dims(&mut out, &[m.rows(), m.cols()], name)?;
                    for w in m.words() {
                        out.extend_from_slice(&w.to_le_bytes());
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("bad magic: not a BMTW weight file".into()));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported weight file version {version}")));
        }
        let count = r.u32()? as usize;
        let mut c = WeightContainer::new();
        for _ in 0..count {
            let nlen = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(nlen)?).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?.to_string();
            let dtype = r.u8()?;
            let rank = r.u8()? as usize;
            let dims: Vec<usize> = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
            let t = match dtype {
                0 => {
                    let n: usize = dims.iter().product();
                    let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
                    let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
                    WeightTensor::F32 { dims, data }
                }
                1 => {
                    let [rows, cols] = dims[..] else {
                        return Err(Error::Format(format!("packed tensor '{name}' must be rank 2")));
                    };
                    let n = rows * words_for(cols);
                    let raw = r.take(n * 8)?;
                    let words = raw.chunks_exact(8).map(|b| u64::from_le_bytes(b.try_into().unwrap())).collect();
                    WeightTensor::Packed(BitMatrix::from_words(rows, cols, words)?)
                }
                other => return Err(Error::Format(format!("unknown dtype {other} for '{name}'"))),
            };
            c.insert(name, t)?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(c)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn push_dims(out: &mut Vec<u8>, dims: &[usize], name: &str) -> Result<()> {
    let rank = u8::try_from(dims.len()).map_err(|_| Error::Format(format!("rank too large for '{name}'")))?;
    out.push(rank);
    for &d in dims {
        let d = u32::try_from(d).map_err(|_| Error::Format(format!("dimension too large in '{name}'")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    Ok(())
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Format(format!("truncated weight file at byte {}", self.pos)));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
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
}

/// Hands tensors out of a container by name and remembers which were used,
/// so leftovers can be reported.
pub struct WeightReader<'a> {
    src: &'a WeightContainer,
    used: HashSet<String>,
}

impl<'a> WeightReader<'a> {
    pub fn new(src: &'a WeightContainer) -> Self {
        WeightReader { src, used: HashSet::new() }
    }

    fn fetch(&mut self, name: &str) -> Result<&'a WeightTensor> {
        let t = self.src.get(name).ok_or_else(|| Error::Mismatch(format!("missing tensor '{name}'")))?;
        self.used.insert(name.to_string());
        Ok(t)
    }

    pub fn f32(&mut self, name: &str, dims: &[usize]) -> Result<Vec<f32>> {
        match self.fetch(name)? {
            WeightTensor::F32 { dims: d, data } if d == dims => Ok(data.clone()),
            other => Err(Error::Mismatch(format!("tensor '{name}' has {:?}, expected real32 {dims:?}", describe(other)))),
        }
    }

    pub fn bits(&mut self, name: &str, rows: usize, cols: usize) -> Result<BitMatrix> {
        match self.fetch(name)? {
            WeightTensor::Packed(m) if m.rows() == rows && m.cols() == cols => Ok(m.clone()),
            other => Err(Error::Mismatch(format!("tensor '{name}' has {:?}, expected packed [{rows}, {cols}]", describe(other)))),
        }
    }

    /// Errors if the container holds names no parameter asked for.
    pub fn finish(self) -> Result<()> {
        let unknown: Vec<&str> = self.src.names().filter(|n| !self.used.contains(*n)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Mismatch(format!("unknown tensor names: {}", unknown.join(", "))))
        }
    }
}

fn describe(t: &WeightTensor) -> String {
    match t {
        WeightTensor::F32 { dims, .. } => format!("real32 {dims:?}"),
        WeightTensor::Packed(m) => format!("packed [{}, {}]", m.rows(), m.cols()),
    }
}

/// Joins a parameter prefix and a leaf name with a dot.
pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Anything that owns named parameters.
pub trait Parameters {
    fn export(&self, prefix: &str, out: &mut WeightContainer) -> Result<()>;
    fn import(&mut self, prefix: &str, src: &mut WeightReader<'_>) -> Result<()>;
}
