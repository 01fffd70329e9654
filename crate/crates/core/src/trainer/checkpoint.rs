//! `MEX3` checkpoint container.
//!
//! ```text
//! "MEX3" | version: u16 | header_len: u32 | header (TOML)
//!        | block_count: u32 | blocks
//! block: name_len: u32 | name | count: u64 | count little-endian floats
//! ```
//!
//! The header carries the architecture, training config, epoch log, seeds,
//! float precision and class names.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{build, ArchSpec};
use crate::nn::NetworkGraph;
use crate::tensor::{Precision, Scalar};
use crate::trainer::metrics::EpochLog;
use crate::trainer::TrainConfig;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MEX3";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub train: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    precision: Precision,
    classes: Vec<String>,
    seeds: Seeds,
    arch: ArchSpec,
    config: TrainConfig,
    log: EpochLog,
}

/// A named parameter block holding raw little-endian element bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamBlock {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub arch: ArchSpec,
    pub config: TrainConfig,
    pub log: EpochLog,
    pub seeds: Seeds,
    pub precision: Precision,
    pub classes: Vec<String>,
    pub blocks: Vec<ParamBlock>,
}

impl Checkpoint {
    pub fn from_graph<T: Scalar>(
        g: &NetworkGraph<T>,
        arch: ArchSpec,
        config: TrainConfig,
        log: EpochLog,
        seeds: Seeds,
        classes: Vec<String>,
    ) -> Self {
        let blocks = g
            .params()
            .iter()
            .map(|p| {
                let mut bytes = Vec::with_capacity(p.value.len() * T::PRECISION.bytes());
                for &v in p.value.as_slice() {
                    v.write_le(&mut bytes);
                }
                ParamBlock {
                    name: p.name.clone(),
                    bytes,
                }
            })
            .collect();
        let mut config = config;
        config.checkpoint = None;
        Checkpoint {
            arch,
            config,
            log,
            seeds,
            precision: T::PRECISION,
            classes,
            blocks,
        }
    }

    /// Copies the stored parameters into `g`, which must have the same
    /// parameter names, order and sizes.
    pub fn load_into<T: Scalar>(&self, g: &mut NetworkGraph<T>) -> Result<()> {
        if self.precision != T::PRECISION {
            return Err(Error::InvalidArgument(format!(
                "checkpoint holds {} parameters, graph uses {}",
                self.precision,
                T::PRECISION
            )));
        }
        if self.blocks.len() != g.params().len() {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint has {} parameter blocks, graph has {}",
                self.blocks.len(),
                g.params().len()
            )));
        }
        let width = T::PRECISION.bytes();
        for (block, param) in self.blocks.iter().zip(g.params_mut()) {
            if block.name != param.name || block.bytes.len() != param.value.len() * width {
                return Err(Error::ShapeMismatch(format!(
                    "checkpoint block `{}` ({} elements) does not match parameter `{}` ({} elements)",
                    block.name,
                    block.bytes.len() / width,
                    param.name,
                    param.value.len()
                )));
            }
            for (v, chunk) in param.value.as_mut_slice().iter_mut().zip(block.bytes.chunks_exact(width)) {
                *v = T::read_le(chunk);
            }
        }
        Ok(())
    }

    /// Builds the stored architecture and loads its parameters.
    pub fn build_graph<T: Scalar>(&self) -> Result<NetworkGraph<T>> {
        let mut g = build::<T>(&self.arch)?;
        self.load_into(&mut g)?;
        Ok(g)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let header = Header {
            precision: self.precision,
            classes: self.classes.clone(),
            seeds: self.seeds.clone(),
            arch: self.arch.clone(),
            config: self.config.clone(),
            log: self.log.clone(),
        };
        let text = toml::to_string(&header).map_err(|e| Error::malformed("checkpoint header", e))?;
        let payload: usize = self.blocks.iter().map(|b| 12 + b.name.len() + b.bytes.len()).sum();
        let mut out = Vec::with_capacity(14 + text.len() + payload);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&len_u32(text.len())?.to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        out.extend_from_slice(&len_u32(self.blocks.len())?.to_le_bytes());
        let width = self.precision.bytes();
        for b in &self.blocks {
            out.extend_from_slice(&len_u32(b.name.len())?.to_le_bytes());
            out.extend_from_slice(b.name.as_bytes());
            out.extend_from_slice(&((b.bytes.len() / width) as u64).to_le_bytes());
            out.extend_from_slice(&b.bytes);
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::BadMagic {
                expected: String::from_utf8_lossy(CHECKPOINT_MAGIC).into_owned(),
                found: String::from_utf8_lossy(magic).into_owned(),
            });
        }
        let version = r.u16("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: CHECKPOINT_VERSION,
            });
        }
        let header_len = r.u32("header length")? as usize;
        let text = std::str::from_utf8(r.take(header_len, "header")?)
            .map_err(|e| Error::malformed("checkpoint header", e))?;
        let header: Header = toml::from_str(text).map_err(|e| Error::malformed("checkpoint header", e))?;
        let width = header.precision.bytes();
        let count = r.u32("block count")?;
        let mut blocks = Vec::with_capacity(count.min(1024) as usize);
        for i in 0..count {
            let what = format!("parameter block {i}");
            let name_len = r.u32(&what)? as usize;
            let name = std::str::from_utf8(r.take(name_len, &what)?)
                .map_err(|e| Error::malformed("checkpoint block name", e))?
                .to_string();
            let what = format!("parameter block `{name}`");
            let elems = r.u64(&what)?;
            let len = usize::try_from(elems)
                .ok()
                .and_then(|n| n.checked_mul(width))
                .ok_or_else(|| Error::Truncated(format!("{what}: element count {elems} too large")))?;
            let bytes = r.take(len, &what)?.to_vec();
            blocks.push(ParamBlock { name, bytes });
        }
        if r.pos != bytes.len() {
            return Err(Error::malformed(
                "checkpoint",
                format!("{} trailing bytes", bytes.len() - r.pos),
            ));
        }
        Ok(Checkpoint {
            arch: header.arch,
            config: header.config,
            log: header.log,
            seeds: header.seeds,
            precision: header.precision,
            classes: header.classes,
            blocks,
        })
    }
}

fn len_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::InvalidArgument(format!("length {n} exceeds the checkpoint format")))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Truncated(format!(
                "{what}: need {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            ))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, ckpt.encode()?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::decode(&bytes)
}
