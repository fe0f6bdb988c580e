//! Checkpoint file: magic `RETA`, version u32 LE, tensor count u32 LE, then
//! per tensor a u16 LE name length, the UTF-8 name, ndim u8, dims u32 LE
//! each, and the data as IEEE-754 32-bit LE, row-major. Weights and biases
//! are stored as `<layer>.weight` / `<layer>.bias`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand_chacha::rand_core::SeedableRng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{ModelConfig, RetaModel};

const MAGIC: &[u8; 4] = b"RETA";
const VERSION: u32 = 1;

fn fail(detail: impl Into<String>) -> Error {
    Error::Format {
        what: "checkpoint",
        detail: detail.into(),
    }
}

fn push_tensor(out: &mut Vec<u8>, name: &str, tensor: &Tensor) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(tensor.shape().len() as u8);
    for &d in tensor.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in tensor.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub fn save_checkpoint(model: &RetaModel, path: impl AsRef<Path>) -> Result<()> {
    let named = model.named_params();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&((named.len() * 2) as u32).to_le_bytes());
    for (name, params) in named {
        push_tensor(&mut out, &format!("{name}.weight"), &params.weights);
        push_tensor(&mut out, &format!("{name}.bias"), &params.bias);
    }
    let mut file = fs::File::create(path.as_ref())?;
    file.write_all(&out)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let slice = self
            .bytes
            .get(self.at..self.at + n)
            .ok_or_else(|| fail("truncated file"))?;
        self.at += n;
        Ok(slice)
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

/// Load a checkpoint into a model of the given architecture. The magic,
/// version, tensor names, and every shape must match exactly.
pub fn load_checkpoint(config: ModelConfig, path: impl AsRef<Path>) -> Result<RetaModel> {
    let bytes = fs::read(path.as_ref())?;
    let mut r = Reader {
        bytes: &bytes,
        at: 0,
    };
    if r.take(4)? != MAGIC {
        return Err(fail("bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(fail(format!("version {version}, want {VERSION}")));
    }
    let count = r.u32()? as usize;

    let mut tensors: BTreeMap<String, Tensor> = BTreeMap::new();
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| fail("tensor name is not UTF-8"))?
            .to_string();
        let ndim = r.u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        let n: usize = shape.iter().product();
        let data: Vec<f64> = r
            .take(n * 4)?
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        if tensors
            .insert(name.clone(), Tensor::new(shape, data)?)
            .is_some()
        {
            return Err(fail(format!("duplicate tensor {name:?}")));
        }
    }
    if r.at != bytes.len() {
        return Err(fail("trailing bytes after last tensor"));
    }

    // Materialize the architecture, then overwrite every parameter from the
    // file. The init rng is throwaway; all values come from the checkpoint.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mut model = RetaModel::new(config, &mut rng)?;
    for (name, params) in model.named_params_mut() {
        for (suffix, dst) in [("weight", &mut params.weights), ("bias", &mut params.bias)] {
            let key = format!("{name}.{suffix}");
            let src = tensors
                .remove(&key)
                .ok_or_else(|| fail(format!("missing tensor {key:?}")))?;
            if src.shape() != dst.shape() {
                return Err(fail(format!(
                    "tensor {key:?} has shape {:?}, architecture wants {:?}",
                    src.shape(),
                    dst.shape()
                )));
            }
            dst.data_mut().copy_from_slice(src.data());
        }
    }
    if let Some(extra) = tensors.keys().next() {
        return Err(fail(format!("unexpected tensor {extra:?}")));
    }
    Ok(model)
}
