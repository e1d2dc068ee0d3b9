//! Versioned binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! | bytes          | content                                            |
//! |----------------|----------------------------------------------------|
//! | 8              | magic `ADVDRVCK`                                   |
//! | 4              | `u32` format version (currently 1)                 |
//! | 4              | `u32` metadata length `M`                          |
//! | M              | UTF-8 JSON metadata                                |
//! | 4              | `u32` array count `N`                              |
//! | N entries      | `u16` name length, name bytes, `u8` rank, rank x `u64` dims |
//! | sum of sizes   | array payloads in directory order, `f64` values    |
//! | 32             | SHA-256 of every preceding byte                    |
//!
//! Network tensors are stored as `params/<name>`; optimiser moments, when
//! present, as `adam_m/<name>` and `adam_v/<name>`.

use crate::error::{CheckpointError, Error, Result};
use crate::nn::{AdamState, Architecture, NetworkParams, Tensor};
use crate::reward::RewardKind;
use crate::scenario::Role;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write;
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"ADVDRVCK";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub agent_id: String,
    pub role: Role,
    pub reward_kind: RewardKind,
    pub architecture: Architecture,
    pub episodes: u64,
    pub steps: u64,
    pub adam_step: Option<u64>,
    pub kl_coef: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: NetworkParams,
    pub adam: Option<AdamState>,
}

impl Checkpoint {
    /// Optimiser state to resume with, plus a warning when it had to be recreated.
    pub fn adam_or_fresh(&self) -> (AdamState, Option<String>) {
        match &self.adam {
            Some(a) => (a.clone(), None),
            None => (
                AdamState::new(&self.params),
                Some(format!(
                    "checkpoint for `{}` has no optimiser state; starting from fresh Adam moments",
                    self.meta.agent_id
                )),
            ),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut meta = self.meta.clone();
        meta.architecture = self.params.architecture().clone();
        meta.adam_step = self.adam.as_ref().map(|a| a.step);
        let meta_json = serde_json::to_vec(&meta).expect("metadata serialises");

        let mut arrays: Vec<(String, &Tensor)> = self
            .params
            .tensors()
            .iter()
            .map(|t| (format!("params/{}", t.name), t))
            .collect();
        if let Some(adam) = &self.adam {
            arrays.extend(adam.m.tensors().iter().map(|t| (format!("adam_m/{}", t.name), t)));
            arrays.extend(adam.v.tensors().iter().map(|t| (format!("adam_v/{}", t.name), t)));
        }

        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta_json.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta_json);
        out.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
        for (name, t) in &arrays {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.shape.len() as u8);
            for d in &t.shape {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
        }
        for (_, t) in &arrays {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let meta_len = r.u32()? as usize;
        let meta_bytes = r.take(meta_len)?;
        let count = r.u32()? as usize;
        let mut directory = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| CheckpointError::Malformed("array name is not UTF-8".into()))?
                .to_string();
            let rank = r.u8()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64()? as usize);
            }
            directory.push((name, shape));
        }
        let mut arrays = Vec::with_capacity(directory.len());
        for (name, shape) in directory {
            let n = shape
                .iter()
                .try_fold(1usize, |acc, d| acc.checked_mul(*d))
                .ok_or_else(|| CheckpointError::Malformed(format!("`{name}` is too large")))?;
            let raw = r.take(n.checked_mul(8).ok_or(CheckpointError::Truncated)?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            arrays.push((name, shape, data));
        }
        let body_end = r.pos;
        let digest = r.take(DIGEST_LEN)?;
        if r.pos != bytes.len() {
            return Err(CheckpointError::Malformed("trailing bytes after checksum".into()));
        }
        if Sha256::digest(&bytes[..body_end]).as_slice() != digest {
            return Err(CheckpointError::Checksum);
        }

        let meta: CheckpointMeta = serde_json::from_slice(meta_bytes)
            .map_err(|e| CheckpointError::Malformed(format!("metadata: {e}")))?;
        let mut groups: [Vec<Tensor>; 3] = Default::default();
        for (name, shape, data) in arrays {
            let (group, short) = name
                .split_once('/')
                .ok_or_else(|| CheckpointError::Malformed(format!("array `{name}` has no group")))?;
            let slot = match group {
                "params" => 0,
                "adam_m" => 1,
                "adam_v" => 2,
                other => {
                    return Err(CheckpointError::Malformed(format!("unknown array group `{other}`")))
                }
            };
            groups[slot].push(Tensor {
                name: short.to_string(),
                shape,
                data,
            });
        }
        let [p, m, v] = groups;
        let arch = &meta.architecture;
        let to_params = |tensors: Vec<Tensor>| -> Result<NetworkParams, CheckpointError> {
            NetworkParams::from_tensors(arch, tensors).map_err(|e| match e {
                Error::Checkpoint(c) => c,
                other => CheckpointError::Malformed(other.to_string()),
            })
        };
        let params = to_params(p)?;
        let adam = match (m.is_empty(), v.is_empty(), meta.adam_step) {
            (true, true, _) => None,
            (false, false, Some(step)) => Some(AdamState {
                m: to_params(m)?,
                v: to_params(v)?,
                step,
            }),
            _ => {
                return Err(CheckpointError::Malformed(
                    "incomplete optimiser state".into(),
                ))
            }
        };
        Ok(Self { meta, params, adam })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        if end > self.bytes.len() {
            return Err(CheckpointError::Truncated);
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Writes to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_atomic(path, &ckpt.to_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Checkpoint::from_bytes(&bytes)?)
}

/// Hex SHA-256 of a file's bytes.
pub fn file_checksum(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
