//! The fine-tuning recipe: cross-entropy loss, AdamW, a linear learning-rate
//! schedule, optional class balancing, and per-epoch weighted metrics.
//!
//! A run is fully determined by its config and seed. Per-epoch shuffles and
//! per-batch dropout masks are derived from `(seed, epoch, batch)` alone, so
//! a run checkpointed mid-schedule and resumed continues on the exact same
//! trajectory as an uninterrupted one.

mod checkpoint;
mod loss;
mod optim;

pub use checkpoint::{
    checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, save_checkpoint, Checkpoint,
    EpochRecord, TrainingHistory, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use loss::cross_entropy_loss;
pub use optim::{adamw_step, clip_global_norm, lr_at, lr_with_warmup, OptimizerState};

use serde::{Deserialize, Serialize};

use crate::dataset::{batches, uniform_sample, LabeledCorpus};
use crate::error::{Error, Result};
use crate::metrics::{confusion, weighted_prf_named, WeightedReport};
use crate::model::{Model, ModelConfig};
use crate::rng::derive_seed;
use crate::textprep::{encode_batch, CleanRules, Vocab};

/// Training hyperparameters. Defaults are the fine-tuning recipe values:
/// lr 2e-5, max sequence length 512, batch size 8, 5 epochs, weight decay
/// 0.01, dropout 0.5, Adam epsilon 1e-6.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub max_seq_len: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub dropout: f64,
    pub adam_eps: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    pub balance: bool,
    pub warmup_steps: u64,
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            lr: 2e-5,
            max_seq_len: 512,
            batch_size: 8,
            epochs: 5,
            weight_decay: 0.01,
            dropout: 0.5,
            adam_eps: 1e-6,
            beta1: 0.9,
            beta2: 0.999,
            seed: 42,
            balance: false,
            warmup_steps: 0,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lr", self.lr),
            ("weight_decay", self.weight_decay),
            ("adam_eps", self.adam_eps),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.max_seq_len < 2 {
            return Err(Error::Config("max_seq_len must be >= 2".into()));
        }
        Ok(())
    }
}

/// Result of a training call: the checkpoint plus its history.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub checkpoint: Checkpoint,
    pub history: TrainingHistory,
}

const TAG_BALANCE: u64 = 0x0B;
const TAG_SHUFFLE_BASE: u64 = 0x1000_0000;
const TAG_DROPOUT_BASE: u64 = 0x2000_0000;

fn shuffle_seed(seed: u64, epoch: usize) -> u64 {
    derive_seed(seed, TAG_SHUFFLE_BASE + epoch as u64)
}

fn dropout_seed(seed: u64, epoch: usize, batch_index: usize) -> u64 {
    derive_seed(
        seed,
        TAG_DROPOUT_BASE + (epoch as u64) * 1_048_576 + batch_index as u64,
    )
}

/// Effective encoding length: the tighter of the model's position table and
/// the training cap.
fn effective_max_len(mcfg: &ModelConfig, tcfg: &TrainConfig) -> usize {
    mcfg.max_seq_len.min(tcfg.max_seq_len)
}

/// Predict a whole corpus (eval mode, corpus order) and score it.
pub fn evaluate_corpus(
    model: &Model,
    corpus: &LabeledCorpus,
    vocab: &Vocab,
    max_seq_len: usize,
    batch_size: usize,
) -> Result<WeightedReport> {
    if corpus.is_empty() {
        return Err(Error::Data("cannot evaluate an empty corpus".into()));
    }
    let mut preds = Vec::with_capacity(corpus.len());
    let mut labels = Vec::with_capacity(corpus.len());
    let examples = corpus.examples();
    for chunk in examples.chunks(batch_size.max(1)) {
        let texts: Vec<&str> = chunk.iter().map(|e| e.text.as_str()).collect();
        let tb = encode_batch(&texts, vocab, max_seq_len)?;
        let (batch_preds, _) = model.predict(&tb)?;
        preds.extend(batch_preds);
        labels.extend(chunk.iter().map(|e| e.label));
    }
    let matrix = confusion(&preds, &labels, corpus.n_classes())?;
    weighted_prf_named(&matrix, corpus.label_names())
}

struct LoopState<'a> {
    model: &'a mut Model,
    optimizer: &'a mut OptimizerState,
    history: &'a mut TrainingHistory,
}

fn run_epochs(
    state: &mut LoopState,
    tcfg: &TrainConfig,
    vocab: &Vocab,
    corpus: &LabeledCorpus,
    eval: Option<&LabeledCorpus>,
    from_epoch: usize,
    to_epoch: usize,
) -> Result<()> {
    let eff_len = effective_max_len(&state.model.cfg, tcfg);
    let n_batches = corpus.len().div_ceil(tcfg.batch_size) as u64;
    let total_steps = tcfg.epochs as u64 * n_batches;

    for epoch in from_epoch..to_epoch {
        let epoch_batches = batches(corpus, tcfg.batch_size, shuffle_seed(tcfg.seed, epoch))?;
        let mut loss_sum = 0.0;
        for (bi, mb) in epoch_batches.iter().enumerate() {
            let tb = encode_batch(&mb.texts, vocab, eff_len)?;
            let lr_t = lr_with_warmup(
                state.optimizer.step,
                total_steps,
                tcfg.lr,
                tcfg.warmup_steps,
            )?;
            let (probs, cache) =
                state
                    .model
                    .forward(&tb, true, tcfg.dropout, dropout_seed(tcfg.seed, epoch, bi))?;
            let (loss, d_logits) = cross_entropy_loss(&probs, &mb.labels)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss at epoch {epoch} batch {bi}"
                )));
            }
            state.model.backward(&tb, &cache, &d_logits)?;
            if let Some(max_norm) = tcfg.grad_clip {
                clip_global_norm(&mut state.model.params, max_norm);
            }
            adamw_step(&mut state.model.params, state.optimizer, lr_t, tcfg)?;
            loss_sum += loss;
        }

        let train_report = evaluate_corpus(state.model, corpus, vocab, eff_len, tcfg.batch_size)?;
        let eval_report = match eval {
            Some(c) => {
                Some(evaluate_corpus(state.model, c, vocab, eff_len, tcfg.batch_size)?.weighted)
            }
            None => None,
        };
        state.history.optimizer_step = state.optimizer.step;
        state.history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / epoch_batches.len() as f64,
            train_metrics: train_report.weighted,
            eval_metrics: eval_report,
        });
    }
    Ok(())
}

fn check_inputs(
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
    vocab: &Vocab,
    train_corpus: &LabeledCorpus,
    eval_corpus: Option<&LabeledCorpus>,
) -> Result<()> {
    mcfg.validate()?;
    tcfg.validate()?;
    if mcfg.vocab_size != vocab.len() {
        return Err(Error::Config(format!(
            "model vocab_size {} does not match vocabulary of {} entries",
            mcfg.vocab_size,
            vocab.len()
        )));
    }
    if mcfg.n_classes != train_corpus.n_classes() {
        return Err(Error::Schema(format!(
            "model has {} classes but corpus has {}",
            mcfg.n_classes,
            train_corpus.n_classes()
        )));
    }
    if train_corpus.is_empty() {
        return Err(Error::Data("training corpus is empty".into()));
    }
    if let Some(eval) = eval_corpus {
        if eval.label_names() != train_corpus.label_names() {
            return Err(Error::Schema(format!(
                "train/eval label names differ: {:?} vs {:?}",
                train_corpus.label_names(),
                eval.label_names()
            )));
        }
    }
    Ok(())
}

fn balanced_corpus(tcfg: &TrainConfig, corpus: &LabeledCorpus) -> Result<LabeledCorpus> {
    if tcfg.balance {
        uniform_sample(corpus, derive_seed(tcfg.seed, TAG_BALANCE))
    } else {
        Ok(corpus.clone())
    }
}

/// Train a fresh model for the full configured schedule.
pub fn train(
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
    vocab: &Vocab,
    clean_rules: &CleanRules,
    train_corpus: &LabeledCorpus,
    eval_corpus: Option<&LabeledCorpus>,
) -> Result<TrainOutput> {
    train_epochs(
        mcfg,
        tcfg,
        vocab,
        clean_rules,
        train_corpus,
        eval_corpus,
        tcfg.epochs,
    )
}

/// Train a fresh model but execute only the first `run_epochs` epochs of the
/// schedule (the learning-rate schedule still spans `tcfg.epochs`). The
/// returned checkpoint can be [`resume`]d to finish the run.
pub fn train_epochs(
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
    vocab: &Vocab,
    clean_rules: &CleanRules,
    train_corpus: &LabeledCorpus,
    eval_corpus: Option<&LabeledCorpus>,
    run_epochs: usize,
) -> Result<TrainOutput> {
    check_inputs(mcfg, tcfg, vocab, train_corpus, eval_corpus)?;
    if run_epochs > tcfg.epochs {
        return Err(Error::Config(format!(
            "run_epochs {run_epochs} exceeds the configured schedule of {} epochs",
            tcfg.epochs
        )));
    }
    let corpus = balanced_corpus(tcfg, train_corpus)?;
    let mut model = Model::new(mcfg.clone(), tcfg.seed)?;
    let mut optimizer = OptimizerState::new(&model.params);
    let mut history = TrainingHistory::default();
    let mut state = LoopState {
        model: &mut model,
        optimizer: &mut optimizer,
        history: &mut history,
    };
    run_epochs_guard(&mut state, tcfg, vocab, &corpus, eval_corpus, 0, run_epochs)?;
    Ok(build_output(
        model,
        tcfg.clone(),
        train_corpus.label_names().to_vec(),
        clean_rules.clone(),
        history,
        vocab.clone(),
        optimizer,
    ))
}

/// Continue an interrupted run to its configured number of epochs. The
/// corpora must be the ones the run was started with; everything else
/// (vocab, rules, seeds, schedule position) comes from the checkpoint.
pub fn resume(
    ckpt: &Checkpoint,
    train_corpus: &LabeledCorpus,
    eval_corpus: Option<&LabeledCorpus>,
) -> Result<TrainOutput> {
    let tcfg = ckpt.train.clone();
    check_inputs(&ckpt.model, &tcfg, &ckpt.vocab, train_corpus, eval_corpus)?;
    if train_corpus.label_names() != ckpt.label_names {
        return Err(Error::Schema(format!(
            "corpus labels {:?} do not match checkpoint labels {:?}",
            train_corpus.label_names(),
            ckpt.label_names
        )));
    }
    let from_epoch = ckpt.history.epochs.len();
    if from_epoch > tcfg.epochs {
        return Err(Error::Config(format!(
            "checkpoint already has {from_epoch} epochs for a schedule of {}",
            tcfg.epochs
        )));
    }
    let corpus = balanced_corpus(&tcfg, train_corpus)?;
    let mut model = Model::from_parts(ckpt.model.clone(), ckpt.params.clone())?;
    let mut optimizer = ckpt
        .optimizer
        .clone()
        .unwrap_or_else(|| OptimizerState::new(&model.params));
    let mut history = ckpt.history.clone();
    let mut state = LoopState {
        model: &mut model,
        optimizer: &mut optimizer,
        history: &mut history,
    };
    run_epochs_guard(
        &mut state,
        &tcfg,
        &ckpt.vocab,
        &corpus,
        eval_corpus,
        from_epoch,
        tcfg.epochs,
    )?;
    Ok(build_output(
        model,
        tcfg,
        ckpt.label_names.clone(),
        ckpt.clean_rules.clone(),
        history,
        ckpt.vocab.clone(),
        optimizer,
    ))
}

fn run_epochs_guard(
    state: &mut LoopState,
    tcfg: &TrainConfig,
    vocab: &Vocab,
    corpus: &LabeledCorpus,
    eval: Option<&LabeledCorpus>,
    from_epoch: usize,
    to_epoch: usize,
) -> Result<()> {
    if from_epoch >= to_epoch {
        return Ok(());
    }
    run_epochs(state, tcfg, vocab, corpus, eval, from_epoch, to_epoch)
}

fn build_output(
    model: Model,
    train: TrainConfig,
    label_names: Vec<String>,
    clean_rules: CleanRules,
    history: TrainingHistory,
    vocab: Vocab,
    optimizer: OptimizerState,
) -> TrainOutput {
    let mut params = model.params;
    params.zero_grads();
    let checkpoint = Checkpoint {
        model: model.cfg,
        train,
        label_names,
        clean_rules,
        history: history.clone(),
        vocab,
        params,
        optimizer: Some(optimizer),
    };
    TrainOutput {
        checkpoint,
        history,
    }
}
