//! Binary checkpoint format.
//!
//! ```text
//! "TSLB" | version u32 | meta_len u32 | meta JSON | count u32 |
//!   { name_len u32 | name | dtype u8 | rank u8 | dims u64 × rank | payload }*
//! ```
//! All integers and payload values are little-endian; dtype 0 is f32, 1 is f64.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ForecastModel, ModelConfig};

pub const MAGIC: &[u8; 4] = b"TSLB";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// The JSON blob: architecture plus free-form provenance tags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: ModelConfig,
    #[serde(default)]
    pub tags: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TensorInfo {
    pub name: String,
    pub dtype: Dtype,
    pub dims: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckpointInfo {
    pub version: u32,
    pub meta: CheckpointMeta,
    pub tensors: Vec<TensorInfo>,
}

fn put_u32(buf: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("length {v} exceeds u32")))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn encode_checkpoint(model: &ForecastModel, tags: &BTreeMap<String, String>, dtype: Dtype) -> Result<Vec<u8>> {
    let meta = CheckpointMeta {
        config: model.config().clone(),
        tags: tags.clone(),
    };
    let json = serde_json::to_vec(&meta)?;
    let params = model.named_params();
    let mut buf = Vec::with_capacity(64 + model.n_params() * dtype.width());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    put_u32(&mut buf, json.len())?;
    buf.extend_from_slice(&json);
    put_u32(&mut buf, params.len())?;
    for p in &params {
        put_u32(&mut buf, p.name.len())?;
        buf.extend_from_slice(p.name.as_bytes());
        buf.push(dtype.code());
        let shape = p.tensor.shape();
        buf.push(u8::try_from(shape.len()).map_err(|_| Error::Format("tensor rank exceeds 255".into()))?);
        for &d in shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in p.tensor.data().iter() {
            match dtype {
                Dtype::F32 => buf.extend_from_slice(&(v as f32).to_le_bytes()),
                Dtype::F64 => buf.extend_from_slice(&v.to_le_bytes()),
            }
        }
    }
    Ok(buf)
}

pub fn save_checkpoint(model: &ForecastModel, path: &Path, tags: &BTreeMap<String, String>, dtype: Dtype) -> Result<()> {
    let bytes = encode_checkpoint(model, tags, dtype)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Truncated(what));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

struct RawTensor {
    info: TensorInfo,
    values: Vec<f64>,
}

fn decode(buf: &[u8], with_values: bool) -> Result<(u32, CheckpointMeta, Vec<RawTensor>)> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(4, "magic")? != MAGIC {
        return Err(Error::Format("bad magic: not a checkpoint file".into()));
    }
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(Error::Version {
            found: version,
            expected: VERSION,
        });
    }
    let len = c.u32("config length")? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(c.take(len, "config")?)
        .map_err(|e| Error::Format(format!("config blob: {e}")))?;
    let count = c.u32("tensor count")? as usize;
    let mut seen = HashSet::new();
    let mut tensors = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let n = c.u32("tensor name length")? as usize;
        let name = std::str::from_utf8(c.take(n, "tensor name")?)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
            .to_string();
        if !seen.insert(name.clone()) {
            return Err(Error::Format(format!("duplicate tensor {name:?}")));
        }
        let dtype = match c.u8("dtype")? {
            0 => Dtype::F32,
            1 => Dtype::F64,
            other => return Err(Error::Format(format!("unknown dtype code {other} for {name:?}"))),
        };
        let rank = c.u8("rank")? as usize;
        let dims = (0..rank).map(|_| c.u64("dims")).collect::<Result<Vec<u64>>>()?;
        let numel = dims
            .iter()
            .try_fold(1u64, |a, &d| a.checked_mul(d))
            .and_then(|n| usize::try_from(n).ok())
            .and_then(|n| n.checked_mul(dtype.width()))
            .ok_or_else(|| Error::Format(format!("tensor {name:?} dims overflow")))?;
        let payload = c.take(numel, "tensor payload")?;
        let values = if with_values {
            match dtype {
                Dtype::F32 => payload
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
                    .collect(),
                Dtype::F64 => payload
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                    .collect(),
            }
        } else {
            Vec::new()
        };
        tensors.push(RawTensor {
            info: TensorInfo { name, dtype, dims },
            values,
        });
    }
    if c.pos != buf.len() {
        return Err(Error::Format(format!("{} trailing bytes after tensor table", buf.len() - c.pos)));
    }
    Ok((version, meta, tensors))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint, rejecting it when `expected` is given and differs
/// from the stored architecture.
pub fn load_checkpoint(path: &Path, expected: Option<&ModelConfig>) -> Result<(ForecastModel, CheckpointMeta)> {
    decode_checkpoint(&read(path)?, expected)
}

pub fn decode_checkpoint(bytes: &[u8], expected: Option<&ModelConfig>) -> Result<(ForecastModel, CheckpointMeta)> {
    let (_, meta, tensors) = decode(bytes, true)?;
    if let Some(exp) = expected {
        if *exp != meta.config {
            return Err(Error::ConfigMismatch {
                expected: serde_json::to_string(exp)?,
                found: serde_json::to_string(&meta.config)?,
            });
        }
    }
    let model = ForecastModel::new(meta.config.clone())?;
    let params = model.named_params();
    if params.len() != tensors.len() {
        return Err(Error::Format(format!(
            "checkpoint holds {} tensors, architecture has {}",
            tensors.len(),
            params.len()
        )));
    }
    let by_name: BTreeMap<&str, &RawTensor> = tensors.iter().map(|t| (t.info.name.as_str(), t)).collect();
    for p in &params {
        let t = by_name
            .get(p.name.as_str())
            .ok_or_else(|| Error::Format(format!("checkpoint lacks tensor {:?}", p.name)))?;
        let want: Vec<u64> = p.tensor.shape().iter().map(|&d| d as u64).collect();
        if t.info.dims != want {
            return Err(Error::Format(format!(
                "tensor {:?} has dims {:?}, architecture expects {want:?}",
                p.name, t.info.dims
            )));
        }
        p.tensor.data_mut().copy_from_slice(&t.values);
    }
    Ok((model, meta))
}

/// Header and tensor table without materializing the model.
pub fn inspect_checkpoint(path: &Path) -> Result<CheckpointInfo> {
    let (version, meta, tensors) = decode(&read(path)?, false)?;
    Ok(CheckpointInfo {
        version,
        meta,
        tensors: tensors.into_iter().map(|t| t.info).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::init_random;

    fn model() -> ForecastModel {
        let m = ForecastModel::new(ModelConfig::tiny()).unwrap();
        init_random(&m, 9);
        m
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let m = model();
        let tags = BTreeMap::from([("variant".to_string(), "c".to_string())]);
        let a = encode_checkpoint(&m, &tags, Dtype::F64).unwrap();
        let (back, meta) = decode_checkpoint(&a, Some(m.config())).unwrap();
        assert_eq!(meta.tags, tags);
        assert_eq!(back.snapshot(), m.snapshot());
        assert_eq!(encode_checkpoint(&back, &meta.tags, Dtype::F64).unwrap(), a);
    }

    #[test]
    fn f32_round_trip_is_stable() {
        let m = model();
        let a = encode_checkpoint(&m, &BTreeMap::new(), Dtype::F32).unwrap();
        let (back, _) = decode_checkpoint(&a, None).unwrap();
        assert_eq!(encode_checkpoint(&back, &BTreeMap::new(), Dtype::F32).unwrap(), a);
    }

    #[test]
    fn distinct_errors() {
        let m = model();
        let good = encode_checkpoint(&m, &BTreeMap::new(), Dtype::F64).unwrap();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_checkpoint(&bad, None), Err(Error::Format(_))));
        let mut ver = good.clone();
        ver[4] = 9;
        assert!(matches!(decode_checkpoint(&ver, None), Err(Error::Version { found: 9, .. })));
        assert!(matches!(decode_checkpoint(&good[..good.len() - 3], None), Err(Error::Truncated(_))));
        let other = ModelConfig {
            n_layers: 3,
            ..ModelConfig::tiny()
        };
        match decode_checkpoint(&good, Some(&other)) {
            Err(Error::ConfigMismatch { expected, found }) => {
                assert!(expected.contains("\"n_layers\":3"));
                assert!(found.contains("\"n_layers\":2"));
            }
            r => panic!("{:?}", r.map(|_| ())),
        }
    }
}
