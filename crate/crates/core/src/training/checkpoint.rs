//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "CMCX" | u32 version | u64 json_len | json bytes
//! | u64 vocab_len | vocab bytes (the vocab file format)
//! | tensor records until EOF
//! tensor record: u16 name_len | name bytes | u8 rank | u64 dims... | f64 data
//! ```
//!
//! The JSON blob carries the model config, train config, label names, clean
//! rules, and training history. Model parameters are written first in name
//! order, then AdamW moments under the reserved `adamw.m:`/`adamw.v:` name
//! prefixes so an interrupted run can resume on the exact trajectory.
//! Saving, loading, and saving again reproduces the file byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::WeightedAverages;
use crate::model::ModelConfig;
use crate::nn::{ParamStore, Tensor};
use crate::textprep::{CleanRules, Vocab};

use super::optim::OptimizerState;
use super::TrainConfig;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"CMCX";
pub const CHECKPOINT_VERSION: u32 = 1;

const MOMENT_M_PREFIX: &str = "adamw.m:";
const MOMENT_V_PREFIX: &str = "adamw.v:";

/// Scores for one finished epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_metrics: WeightedAverages,
    pub eval_metrics: Option<WeightedAverages>,
}

/// Everything the loop has done so far.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub optimizer_step: u64,
    pub epochs: Vec<EpochRecord>,
}

/// A self-contained trained (or in-progress) model.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub label_names: Vec<String>,
    pub clean_rules: CleanRules,
    pub history: TrainingHistory,
    pub vocab: Vocab,
    pub params: ParamStore,
    pub optimizer: Option<OptimizerState>,
}

#[derive(Serialize, Deserialize)]
struct JsonBlob {
    model: ModelConfig,
    train: TrainConfig,
    label_names: Vec<String>,
    clean_rules: CleanRules,
    history: TrainingHistory,
}

fn push_tensor(out: &mut Vec<u8>, name: &str, tensor: &Tensor) {
    let name_bytes = name.as_bytes();
    out.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
    out.extend_from_slice(name_bytes);
    out.push(tensor.shape().len() as u8);
    for &dim in tensor.shape() {
        out.extend_from_slice(&(dim as u64).to_le_bytes());
    }
    for &v in tensor.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serialize to bytes. See the module docs for the layout.
pub fn checkpoint_to_bytes(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let blob = JsonBlob {
        model: ckpt.model.clone(),
        train: ckpt.train.clone(),
        label_names: ckpt.label_names.clone(),
        clean_rules: ckpt.clean_rules.clone(),
        history: ckpt.history.clone(),
    };
    let json = serde_json::to_vec(&blob)
        .map_err(|e| Error::Data(format!("checkpoint config serialization: {e}")))?;
    let vocab_text = ckpt.vocab.to_text();

    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(vocab_text.len() as u64).to_le_bytes());
    out.extend_from_slice(vocab_text.as_bytes());

    for (name, param) in ckpt.params.iter() {
        push_tensor(&mut out, name, &param.value);
    }
    if let Some(opt) = &ckpt.optimizer {
        for (name, (m, _)) in opt.moments() {
            push_tensor(&mut out, &format!("{MOMENT_M_PREFIX}{name}"), m);
        }
        for (name, (_, v)) in opt.moments() {
            push_tensor(&mut out, &format!("{MOMENT_V_PREFIX}{name}"), v);
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Data(format!(
                "corrupt checkpoint: truncated while reading {what}"
            )));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
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

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

/// Parse checkpoint bytes, rejecting bad magic, unsupported versions, and
/// truncated payloads.
pub fn checkpoint_from_bytes(buf: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Data(format!(
            "corrupt checkpoint: bad magic {magic:?}"
        )));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Data(format!(
            "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let json_len = r.u64("config length")? as usize;
    let json = r.take(json_len, "config blob")?;
    let blob: JsonBlob = serde_json::from_slice(json)
        .map_err(|e| Error::Data(format!("corrupt checkpoint config: {e}")))?;
    let vocab_len = r.u64("vocab length")? as usize;
    let vocab_text = std::str::from_utf8(r.take(vocab_len, "vocab block")?)
        .map_err(|e| Error::Data(format!("corrupt checkpoint vocab: {e}")))?;
    let vocab = Vocab::from_text(vocab_text)?;

    let mut params = ParamStore::new();
    let mut m_moments: BTreeMap<String, Tensor> = BTreeMap::new();
    let mut v_moments: BTreeMap<String, Tensor> = BTreeMap::new();
    while !r.done() {
        let name_len = r.u16("tensor name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
            .map_err(|e| Error::Data(format!("corrupt tensor name: {e}")))?
            .to_string();
        let rank = r.u8("tensor rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64("tensor dim")? as usize);
        }
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|c| c.checked_mul(8))
            .ok_or_else(|| {
                Error::Data(format!(
                    "corrupt checkpoint: dims of tensor {name:?} overflow"
                ))
            })?;
        let raw = r.take(count, &format!("data of tensor {name:?}"))?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let tensor = Tensor::from_vec(&shape, data)?;
        if let Some(stripped) = name.strip_prefix(MOMENT_M_PREFIX) {
            m_moments.insert(stripped.to_string(), tensor);
        } else if let Some(stripped) = name.strip_prefix(MOMENT_V_PREFIX) {
            v_moments.insert(stripped.to_string(), tensor);
        } else {
            params.insert(&name, tensor)?;
        }
    }

    let optimizer = if m_moments.is_empty() && v_moments.is_empty() {
        None
    } else {
        if m_moments.len() != v_moments.len() {
            return Err(Error::Data(
                "corrupt checkpoint: unpaired optimizer moments".into(),
            ));
        }
        let mut moments = BTreeMap::new();
        for (name, m) in m_moments {
            let v = v_moments.remove(&name).ok_or_else(|| {
                Error::Data(format!("corrupt checkpoint: missing v moment for {name:?}"))
            })?;
            moments.insert(name, (m, v));
        }
        Some(OptimizerState::from_parts(
            moments,
            blob.history.optimizer_step,
        ))
    };

    Ok(Checkpoint {
        model: blob.model,
        train: blob.train,
        label_names: blob.label_names,
        clean_rules: blob.clean_rules,
        history: blob.history,
        vocab,
        params,
        optimizer,
    })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, checkpoint_to_bytes(ckpt)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&buf)
}
