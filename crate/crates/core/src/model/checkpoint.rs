//! `LDCK` checkpoint files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "LDCK" | version u32 | json_len u32 | architecture JSON (UTF-8)
//! | count u32 | count x entry
//! [ | opt_count u32 | opt_count x entry ]          optional optimizer state
//!
//! entry = name_len u16 | name (UTF-8) | ndim u8 | dims u32 x ndim
//!       | dtype u8 (0 = f32, 1 = f64) | raw values
//! ```
//!
//! The parameter table holds learnable tensors and batch-norm running
//! statistics. The optimizer table stores `<param>.adam_m` / `<param>.adam_v`
//! per parameter plus a single-element `adam.step_count`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::optim::Adam;
use crate::model::{ArchitectureSpec, SegmentationModel};
use crate::nn::Tensor;
use crate::scalar::{DType, Scalar};

pub const MAGIC: &[u8; 4] = b"LDCK";
pub const VERSION: u32 = 1;

const STEP_ENTRY: &str = "adam.step_count";

/// A decoded checkpoint: the model plus optimizer state when present.
pub struct Checkpoint<T> {
    pub model: SegmentationModel<T>,
    pub optimizer: Option<Adam<T>>,
}

/// Tensor as stored on disk, before conversion to the requested scalar.
#[derive(Clone, Debug)]
struct RawEntry {
    name: String,
    dims: Vec<usize>,
    values: Vec<f64>,
}

fn write_entry<T: Scalar>(out: &mut Vec<u8>, name: &str, t: &Tensor<T>) -> Result<()> {
    let name_bytes = name.as_bytes();
    let name_len = u16::try_from(name_bytes.len())
        .map_err(|_| Error::invalid(format!("parameter name too long: {name}")))?;
    out.extend_from_slice(&name_len.to_le_bytes());
    out.extend_from_slice(name_bytes);
    out.push(t.ndim() as u8);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.push(T::DTYPE.tag());
    for &v in t.data() {
        v.write_le(out);
    }
    Ok(())
}

/// Serializes a model (and optionally its optimizer) to bytes.
pub fn encode<T: Scalar>(model: &SegmentationModel<T>, optimizer: Option<&Adam<T>>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let json = serde_json::to_vec(model.spec())?;
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);

    let state = model.state();
    out.extend_from_slice(&(state.len() as u32).to_le_bytes());
    for (name, t) in &state {
        write_entry(&mut out, name, t)?;
    }

    if let Some(opt) = optimizer {
        let params = model.parameters();
        if params.len() != opt.states.len() {
            return Err(Error::shape("optimizer state does not match model parameters"));
        }
        let count = 2 * params.len() + 1;
        out.extend_from_slice(&(count as u32).to_le_bytes());
        for (p, s) in params.iter().zip(&opt.states) {
            write_entry(&mut out, &format!("{}.adam_m", p.name), &s.m)?;
            write_entry(&mut out, &format!("{}.adam_v", p.name), &s.v)?;
        }
        let step = Tensor::<f64>::full(&[1], opt.step_count() as f64);
        write_entry(&mut out, STEP_ENTRY, &step)?;
    }
    Ok(out)
}

pub fn save_checkpoint<T: Scalar>(
    model: &SegmentationModel<T>,
    optimizer: Option<&Adam<T>>,
    path: impl AsRef<Path>,
) -> Result<()> {
    fs::write(path, encode(model, optimizer)?)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated(format!(
                "needed {n} bytes for {what} at offset {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }

    fn entry(&mut self) -> Result<RawEntry> {
        let name_len = self.u16("name length")? as usize;
        let name = String::from_utf8(self.take(name_len, "name")?.to_vec())
            .map_err(|_| Error::Truncated("parameter name is not UTF-8".into()))?;
        let ndim = self.u8("ndim")? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(self.u32("dimension")? as usize);
        }
        let tag = self.u8("dtype")?;
        let dtype = DType::from_tag(tag).ok_or_else(|| {
            Error::Truncated(format!("unknown dtype tag {tag} for `{name}`"))
        })?;
        let count: usize = dims.iter().product();
        let raw = self.take(count * dtype.size_of(), &format!("payload of `{name}`"))?;
        let values = match dtype {
            DType::F32 => raw.chunks_exact(4).map(|c| f32::read_le(c) as f64).collect(),
            DType::F64 => raw.chunks_exact(8).map(f64::read_le).collect(),
        };
        Ok(RawEntry { name, dims, values })
    }

    fn table(&mut self) -> Result<Vec<RawEntry>> {
        let count = self.u32("entry count")?;
        (0..count).map(|_| self.entry()).collect()
    }
}

struct RawCheckpoint {
    spec: ArchitectureSpec,
    state: Vec<RawEntry>,
    optimizer: Option<Vec<RawEntry>>,
}

fn decode(bytes: &[u8]) -> Result<RawCheckpoint> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::NotACheckpoint);
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let json_len = r.u32("descriptor length")? as usize;
    let spec: ArchitectureSpec = serde_json::from_slice(r.take(json_len, "descriptor")?)?;
    let state = r.table()?;
    let optimizer = if r.at_end() { None } else { Some(r.table()?) };
    if !r.at_end() {
        return Err(Error::Truncated("trailing bytes after optimizer table".into()));
    }
    Ok(RawCheckpoint {
        spec,
        state,
        optimizer,
    })
}

fn assign<T: Scalar>(dst: &mut Tensor<T>, name: &str, entry: Option<&RawEntry>) -> Result<()> {
    let entry = entry.ok_or_else(|| Error::MissingParameter(name.to_string()))?;
    if entry.dims != dst.shape() {
        return Err(Error::ParameterShapeMismatch {
            name: name.to_string(),
            expected: dst.shape().to_vec(),
            found: entry.dims.clone(),
        });
    }
    for (d, &v) in dst.data_mut().iter_mut().zip(&entry.values) {
        *d = T::of(v);
    }
    Ok(())
}

fn restore<T: Scalar>(raw: RawCheckpoint, spec: ArchitectureSpec) -> Result<Checkpoint<T>> {
    let mut model = SegmentationModel::<T>::build(spec, 0)?;
    let expected = model.state().len();
    if raw.state.len() != expected {
        // report the first positional disagreement before the count mismatch
        for ((name, t), e) in model.state().iter().zip(&raw.state) {
            if name != &e.name {
                return Err(Error::MissingParameter(name.clone()));
            }
            if t.shape() != e.dims {
                return Err(Error::ParameterShapeMismatch {
                    name: name.clone(),
                    expected: t.shape().to_vec(),
                    found: e.dims.clone(),
                });
            }
        }
        return Err(Error::Truncated(format!(
            "checkpoint holds {} tensors, model expects {expected}",
            raw.state.len()
        )));
    }
    for (name, dst) in model.state_mut() {
        let entry = raw.state.iter().find(|e| e.name == name);
        assign(dst, &name, entry)?;
    }

    let optimizer = match raw.optimizer {
        None => None,
        Some(entries) => {
            let mut opt = Adam::new(&model);
            let step = entries
                .iter()
                .find(|e| e.name == STEP_ENTRY)
                .and_then(|e| e.values.first().copied())
                .ok_or_else(|| Error::MissingParameter(STEP_ENTRY.into()))?;
            let names: Vec<String> = model.parameters().iter().map(|p| p.name.clone()).collect();
            for (name, s) in names.iter().zip(&mut opt.states) {
                let m_name = format!("{name}.adam_m");
                let v_name = format!("{name}.adam_v");
                assign(&mut s.m, &m_name, entries.iter().find(|e| e.name == m_name))?;
                assign(&mut s.v, &v_name, entries.iter().find(|e| e.name == v_name))?;
                s.step_count = step as u64;
            }
            Some(opt)
        }
    };
    Ok(Checkpoint { model, optimizer })
}

/// Decodes checkpoint bytes using their embedded architecture descriptor.
pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    let raw = decode(bytes)?;
    let spec = raw.spec.clone();
    restore(raw, spec)
}

/// Loads a checkpoint using its embedded architecture descriptor.
pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    decode_checkpoint(&fs::read(path)?)
}

/// Loads a checkpoint into a model built from `spec`; every stored tensor must
/// match that architecture.
pub fn load_checkpoint_for<T: Scalar>(
    path: impl AsRef<Path>,
    spec: &ArchitectureSpec,
) -> Result<Checkpoint<T>> {
    let raw = decode(&fs::read(path)?)?;
    restore(raw, spec.clone())
}
