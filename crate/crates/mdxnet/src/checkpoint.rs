//! Binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "MDXN" | version u32 | header_len u32 | header (key = value text)
//! | param_count u32 | { name_len u32 | name | ndim u32 | dims u64.. | values f64.. }
//! | crc32 u32 of every preceding byte
//! ```

use std::path::Path;

use mdxnet_core::model::{Mixer, Module, UNetV2};
use mdxnet_core::pipeline::Separator;

use crate::config::{desk_stft, put_net, take_net, KeyValues};
use crate::error::{MdxError, Result};

pub const MAGIC: &[u8; 4] = b"MDXN";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {found}, expected {VERSION}")]
    UnsupportedVersion { found: u32 },
    #[error("checksum mismatch (stored {stored:#010x}, computed {computed:#010x}); file is truncated or corrupt")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
}

/// Decoded checkpoint contents.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: KeyValues,
    pub params: Vec<NamedTensor>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

impl Checkpoint {
    pub fn from_module<M: Module + ?Sized>(header: KeyValues, module: &M) -> Self {
        let params = module
            .parameters()
            .into_iter()
            .map(|p| NamedTensor {
                name: p.name().to_string(),
                dims: p.shape().to_vec(),
                values: p.tensor().data().to_vec(),
            })
            .collect();
        Checkpoint { header, params }
    }

    pub fn kind(&self) -> Option<&str> {
        self.header.get("kind")
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.values.len()).sum()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        let header = self.header.render();
        put_u32(&mut out, header.len() as u32);
        out.extend_from_slice(header.as_bytes());
        put_u32(&mut out, self.params.len() as u32);
        for p in &self.params {
            put_u32(&mut out, p.name.len() as u32);
            out.extend_from_slice(p.name.as_bytes());
            put_u32(&mut out, p.dims.len() as u32);
            for &d in &p.dims {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &p.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        put_u32(&mut out, crc);
        out
    }

    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, CheckpointError> {
        let n = bytes.len().min(4);
        if bytes[..n] != MAGIC[..n] {
            return Err(CheckpointError::BadMagic);
        }
        if bytes.len() >= 8 {
            let found = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
            if found != VERSION {
                return Err(CheckpointError::UnsupportedVersion { found });
            }
        }
        if bytes.len() < 12 {
            return Err(CheckpointError::ChecksumMismatch { stored: 0, computed: crc32fast::hash(bytes) });
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(CheckpointError::ChecksumMismatch { stored, computed });
        }
        let mut r = Reader { buf: body, pos: 8 };
        let hlen = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(hlen)?).map_err(|_| malformed("header is not UTF-8"))?;
        let header = KeyValues::parse(text).map_err(CheckpointError::Malformed)?;
        let count = r.u32()? as usize;
        let mut params = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let nlen = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(nlen)?)
                .map_err(|_| malformed("parameter name is not UTF-8"))?
                .to_string();
            let ndim = r.u32()? as usize;
            let mut dims = Vec::with_capacity(ndim.min(16));
            for _ in 0..ndim {
                dims.push(r.u64()? as usize);
            }
            let numel = dims
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| malformed("parameter size overflows"))?;
            let raw = r.take(numel.checked_mul(8).ok_or_else(|| malformed("parameter size overflows"))?)?;
            let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            params.push(NamedTensor { name, dims, values });
        }
        if r.pos != body.len() {
            return Err(malformed("trailing bytes after the last parameter"));
        }
        Ok(Checkpoint { header, params })
    }

    /// Copies every stored tensor into the parameter of the same name.
    /// Missing, extra or misshapen parameters are errors.
    pub fn assign_to<M: Module + ?Sized>(&self, module: &mut M) -> std::result::Result<(), CheckpointError> {
        let mut targets = module.parameters_mut();
        if targets.len() != self.params.len() {
            return Err(malformed(format!(
                "checkpoint has {} parameters, model has {}",
                self.params.len(),
                targets.len()
            )));
        }
        for stored in &self.params {
            let Some(p) = targets.iter_mut().find(|p| p.name() == stored.name) else {
                return Err(malformed(format!("model has no parameter {:?}", stored.name)));
            };
            if p.shape() != stored.dims.as_slice() {
                return Err(malformed(format!(
                    "parameter {:?} has shape {:?}, model expects {:?}",
                    stored.name,
                    stored.dims,
                    p.shape()
                )));
            }
            p.assign(&stored.values).map_err(|e| malformed(e.to_string()))?;
        }
        Ok(())
    }

    pub fn to_separator(&self) -> std::result::Result<Separator, CheckpointError> {
        if self.kind() != Some("separator") {
            return Err(malformed(format!("expected a separator checkpoint, found kind {:?}", self.kind())));
        }
        let mut kv = KeyValues::default();
        for k in crate::config::NET_KEYS {
            if let Some(v) = self.header.get(k) {
                kv.set(k, v);
            }
        }
        let (net_cfg, stft) = take_net(&kv, mdxnet_core::model::UNetV2Config::desk(), desk_stft())
            .map_err(|e| malformed(e.to_string()))?;
        let mut net = UNetV2::build(net_cfg, 0).map_err(|e| malformed(e.to_string()))?;
        self.assign_to(&mut net)?;
        Separator::new(net, stft).map_err(|e| malformed(e.to_string()))
    }

    pub fn to_mixer(&self) -> std::result::Result<Mixer, CheckpointError> {
        if self.kind() != Some("mixer") {
            return Err(malformed(format!("expected a mixer checkpoint, found kind {:?}", self.kind())));
        }
        let get = |k: &str| -> std::result::Result<usize, CheckpointError> {
            self.header
                .get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| malformed(format!("header lacks a numeric {k}")))
        };
        let mut m = Mixer::zeros(get("num_sources")?, get("audio_channels")?);
        self.assign_to(&mut m)?;
        Ok(m)
    }
}

fn malformed(msg: impl Into<String>) -> CheckpointError {
    CheckpointError::Malformed(msg.into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            return Err(malformed("field runs past the end of the file"));
        };
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn separator_checkpoint(sep: &Separator) -> Checkpoint {
    let mut header = KeyValues::default();
    header.set("kind", "separator");
    put_net(&mut header, sep.net().config(), sep.stft_config());
    Checkpoint::from_module(header, sep.net())
}

pub fn mixer_checkpoint(m: &Mixer) -> Checkpoint {
    let mut header = KeyValues::default();
    header.set("kind", "mixer");
    header.set("num_sources", m.num_sources());
    header.set("audio_channels", m.audio_channels());
    Checkpoint::from_module(header, m)
}

pub fn write_checkpoint(path: impl AsRef<Path>, ck: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, ck.encode()).map_err(|e| MdxError::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| MdxError::io(path, e))?;
    Checkpoint::decode(&bytes).map_err(|source| MdxError::Checkpoint {
        path: path.to_path_buf(),
        source,
    })
}

fn at(path: &Path) -> impl FnOnce(CheckpointError) -> MdxError + '_ {
    move |source| MdxError::Checkpoint {
        path: path.to_path_buf(),
        source,
    }
}

pub fn save_separator(path: impl AsRef<Path>, sep: &Separator) -> Result<()> {
    write_checkpoint(path, &separator_checkpoint(sep))
}

pub fn load_separator(path: impl AsRef<Path>) -> Result<Separator> {
    let path = path.as_ref();
    read_checkpoint(path)?.to_separator().map_err(at(path))
}

pub fn save_mixer(path: impl AsRef<Path>, m: &Mixer) -> Result<()> {
    write_checkpoint(path, &mixer_checkpoint(m))
}

pub fn load_mixer(path: impl AsRef<Path>) -> Result<Mixer> {
    let path = path.as_ref();
    read_checkpoint(path)?.to_mixer().map_err(at(path))
}
