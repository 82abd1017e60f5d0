//! Binary checkpoint container: `MAGIC`, a little-endian `u32` version, a
//! little-endian `u64` header length, a JSON header listing every stored
//! array, then the raw little-endian payload of those arrays in order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

use super::adam::Adam;
use super::train::{ModelConfig, TrainConfig, Trainer};

pub const MAGIC: &[u8; 8] = b"HZLBCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Param,
    NormMean,
    NormVar,
    GenM,
    GenV,
    DiscM,
    DiscV,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub section: Section,
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub dtype: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub epoch: usize,
    pub step: u64,
    pub gen_t: u64,
    pub disc_t: u64,
    pub entries: Vec<Entry>,
}

fn push_arrays<'a, T: Scalar + 'a>(
    entries: &mut Vec<Entry>,
    payload: &mut Vec<u8>,
    section: Section,
    items: impl Iterator<Item = (&'a String, Vec<usize>, &'a [T])>,
) {
    for (name, shape, data) in items {
        entries.push(Entry {
            section,
            name: name.clone(),
            shape,
        });
        data.iter().for_each(|v| v.write_le(payload));
    }
}

fn moments<T: Scalar>(m: &BTreeMap<String, Vec<T>>) -> impl Iterator<Item = (&String, Vec<usize>, &[T])> {
    m.iter().map(|(k, v)| (k, vec![v.len()], v.as_slice()))
}

/// Serializes the full training state.
pub fn to_bytes<T: Scalar>(tr: &Trainer<T>) -> Result<Vec<u8>> {
    let mut entries = Vec::new();
    let mut payload = Vec::new();
    let p = &tr.params;
    push_arrays(
        &mut entries,
        &mut payload,
        Section::Param,
        p.tensors.iter().map(|(k, t)| (k, t.shape().to_vec(), t.data())),
    );
    let norms = |f: fn(&crate::nn::BatchNormState<T>) -> &Vec<T>| {
        p.norms.iter().map(move |(k, s)| (k, vec![f(s).len()], f(s).as_slice()))
    };
    push_arrays(&mut entries, &mut payload, Section::NormMean, norms(|s| &s.running_mean));
    push_arrays(&mut entries, &mut payload, Section::NormVar, norms(|s| &s.running_var));
    push_arrays(&mut entries, &mut payload, Section::GenM, moments(&tr.gen_opt.m));
    push_arrays(&mut entries, &mut payload, Section::GenV, moments(&tr.gen_opt.v));
    push_arrays(&mut entries, &mut payload, Section::DiscM, moments(&tr.disc_opt.m));
    push_arrays(&mut entries, &mut payload, Section::DiscV, moments(&tr.disc_opt.v));

    let header = Header {
        dtype: T::DTYPE.into(),
        model: tr.model,
        train: tr.cfg,
        epoch: tr.epoch,
        step: tr.step,
        gen_t: tr.gen_opt.t,
        disc_t: tr.disc_opt.t,
        entries,
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Config(e.to_string()))?;
    let mut out = Vec::with_capacity(MAGIC.len() + 12 + json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Parses a container produced by [`to_bytes`]. `path` is for messages.
pub fn from_bytes<T: Scalar>(bytes: &[u8], path: &Path) -> Result<Trainer<T>> {
    let bad = |msg: String| Error::format(path, msg);
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = &bytes[20..];
    if body.len() < hlen {
        return Err(bad("truncated header".into()));
    }
    let header: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| bad(e.to_string()))?;
    if header.dtype != T::DTYPE {
        return Err(bad(format!("checkpoint dtype {} but {} requested", header.dtype, T::DTYPE)));
    }
    let mut payload = &body[hlen..];

    let mut tr = Trainer::<T>::new(header.model, header.train)?;
    tr.epoch = header.epoch;
    tr.step = header.step;
    tr.gen_opt = Adam::new(header.train.adam);
    tr.gen_opt.t = header.gen_t;
    tr.disc_opt = Adam::new(header.train.adam);
    tr.disc_opt.t = header.disc_t;
    let mut seen = 0usize;
    for e in &header.entries {
        let n: usize = e.shape.iter().product();
        let need = n * T::BYTES;
        if payload.len() < need {
            return Err(bad(format!("payload truncated at {}", e.name)));
        }
        let data: Vec<T> = payload[..need].chunks_exact(T::BYTES).map(T::read_le).collect();
        payload = &payload[need..];
        let missing = || bad(format!("unexpected entry {} in {:?}", e.name, e.section));
        match e.section {
            Section::Param => {
                let slot = tr.params.tensors.get_mut(&e.name).ok_or_else(missing)?;
                if slot.shape() != e.shape.as_slice() {
                    return Err(bad(format!("shape mismatch for {}", e.name)));
                }
                *slot = Tensor::from_vec(&e.shape, data)?.with_requires_grad(true);
                seen += 1;
            }
            Section::NormMean | Section::NormVar => {
                let s = tr.params.norms.get_mut(&e.name).ok_or_else(missing)?;
                let slot = if e.section == Section::NormMean {
                    &mut s.running_mean
                } else {
                    &mut s.running_var
                };
                if slot.len() != n {
                    return Err(bad(format!("length mismatch for {}", e.name)));
                }
                *slot = data;
            }
            Section::GenM => drop(tr.gen_opt.m.insert(e.name.clone(), data)),
            Section::GenV => drop(tr.gen_opt.v.insert(e.name.clone(), data)),
            Section::DiscM => drop(tr.disc_opt.m.insert(e.name.clone(), data)),
            Section::DiscV => drop(tr.disc_opt.v.insert(e.name.clone(), data)),
        }
    }
    if seen != tr.params.tensors.len() {
        return Err(bad(format!(
            "checkpoint holds {seen} of {} parameters",
            tr.params.tensors.len()
        )));
    }
    if !payload.is_empty() {
        return Err(bad(format!("{} trailing bytes", payload.len())));
    }
    Ok(tr)
}

pub fn save<T: Scalar>(path: &Path, tr: &Trainer<T>) -> Result<()> {
    fs::write(path, to_bytes(tr)?).map_err(|e| Error::io(path, e))
}

pub fn load<T: Scalar>(path: &Path) -> Result<Trainer<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes, path)
}
