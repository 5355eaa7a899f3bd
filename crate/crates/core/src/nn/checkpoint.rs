use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::model::Model;
use crate::nn::params::{ModelDims, ParamSet, PARAM_NAMES};
use crate::nn::tensor::Tensor;

const MAGIC: &[u8; 8] = b"ALSTMCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Trained model plus the seed and free-form metadata it was produced with.
///
/// Binary layout, little-endian throughout:
///
/// ```text
/// magic "ALSTMCKP" | version u32
/// features, mapping, hidden, attention, lag: u64 | use_attention u8 | seed u64
/// metadata count u32, then (key str, value str) pairs
/// tensor count u32, then per tensor: name str | ndim u32 | dims u64… | values f64…
/// ```
///
/// A `str` is a u32 byte length followed by UTF-8 bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub seed: u64,
    pub metadata: Vec<(String, String)>,
}

impl Checkpoint {
    pub fn new(model: Model, seed: u64) -> Self {
        Checkpoint {
            model,
            seed,
            metadata: Vec::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<String>) -> Self {
        self.metadata.push((key.to_string(), value.into()));
        self
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let d = &self.model.dims;
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for v in [d.features, d.mapping, d.hidden, d.attention, d.lag] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        out.push(u8::from(d.use_attention));
        out.extend_from_slice(&self.seed.to_le_bytes());

        out.extend_from_slice(&(self.metadata.len() as u32).to_le_bytes());
        for (k, v) in &self.metadata {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }

        let tensors = self.model.params.tensors();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t) in tensors {
            put_str(&mut out, name);
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &dim in t.shape() {
                out.extend_from_slice(&(dim as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Artifact("not a checkpoint file".into()));
        }
        let version = get_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Artifact(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let mut dim = || get_u64(&mut r).map(|v| v as usize);
        let (features, mapping, hidden, attention, lag) = (dim()?, dim()?, dim()?, dim()?, dim()?);
        let mut flag = [0u8; 1];
        read_exact(&mut r, &mut flag)?;
        let dims = ModelDims {
            features,
            mapping,
            hidden,
            attention,
            lag,
            use_attention: flag[0] != 0,
        };
        let seed = get_u64(&mut r)?;

        let n_meta = get_u32(&mut r)?;
        let mut metadata = Vec::with_capacity(n_meta as usize);
        for _ in 0..n_meta {
            metadata.push((get_str(&mut r)?, get_str(&mut r)?));
        }

        let n_tensors = get_u32(&mut r)? as usize;
        if n_tensors != PARAM_NAMES.len() {
            return Err(Error::Artifact(format!(
                "checkpoint holds {n_tensors} tensors, expected {}",
                PARAM_NAMES.len()
            )));
        }
        let mut tensors = Vec::with_capacity(n_tensors);
        for expected in PARAM_NAMES {
            let name = get_str(&mut r)?;
            if name != expected {
                return Err(Error::Artifact(format!(
                    "expected tensor {expected}, found {name}"
                )));
            }
            let ndim = get_u32(&mut r)? as usize;
            let shape = (0..ndim)
                .map(|_| get_u64(&mut r).map(|v| v as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            if n * 8 > r.len() {
                return Err(Error::Artifact("truncated checkpoint".into()));
            }
            let data = (0..n)
                .map(|_| get_f64(&mut r))
                .collect::<Result<Vec<_>>>()?;
            tensors.push(Tensor::from_vec(&shape, data)?);
        }
        if !r.is_empty() {
            return Err(Error::Artifact("trailing bytes after checkpoint".into()));
        }
        let params = ParamSet::from_tensors(&dims, tensors)?;
        Ok(Checkpoint {
            model: Model::new(dims, params)?,
            seed,
            metadata,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Artifact("truncated checkpoint".into()))
}

fn get_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64(r: &mut &[u8]) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64(r: &mut &[u8]) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn get_str(r: &mut &[u8]) -> Result<String> {
    let n = get_u32(r)? as usize;
    if n > r.len() {
        return Err(Error::Artifact("truncated checkpoint".into()));
    }
    let mut buf = vec![0u8; n];
    read_exact(r, &mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::Artifact("invalid utf-8 in checkpoint".into()))
}
