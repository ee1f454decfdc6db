//! The command pipeline behind the `codemix` binary: `prepare`, `train`,
//! `eval`, `predict`.
//!
//! One canonical name per knob: every [`RunConfig`] field appears under the
//! same name in the JSON config file, as a `--kebab-case` flag, and in the
//! `config` echo embedded in every JSON report. Outputs carry no timestamps,
//! so identical configs and seeds produce identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{concat, load_tsv_with_stats, uniform_sample, LabeledCorpus, LoadStats};
use crate::error::{Error, Result};
use crate::metrics::{confusion, weighted_prf_named};
use crate::model::{Model, ModelConfig, PoolerKind};
use crate::textprep::{build_vocab, clean_text, encode_batch, CleanRules, Vocab};
use crate::training::{load_checkpoint, save_checkpoint, train, TrainConfig};

/// Every knob of the pipeline, under its canonical name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // cleaning rules
    pub remove_urls: bool,
    pub remove_mentions: bool,
    pub remove_emoji: bool,
    pub remove_punct: bool,
    pub remove_stopwords: bool,
    pub lowercase_latin: bool,

    // dataset schema
    pub train_path: Option<String>,
    pub dev_path: Option<String>,
    pub test_path: Option<String>,
    pub eval_path: Option<String>,
    pub text_col: String,
    pub label_col: String,
    pub id_col: Option<String>,
    pub label_names: Vec<String>,

    // vocabulary
    pub vocab_size: usize,
    pub min_freq: usize,

    // model
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    pub pooler_kind: String,
    pub pool_includes_cls: bool,
    pub encoder_dropout: f64,

    // training
    pub lr: f64,
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

    // input/output paths
    pub out_dir: String,
    pub vocab_path: Option<String>,
    pub checkpoint_path: Option<String>,
    pub input_path: Option<String>,
    pub output_path: Option<String>,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            remove_urls: true,
            remove_mentions: true,
            remove_emoji: true,
            remove_punct: true,
            remove_stopwords: true,
            lowercase_latin: true,
            train_path: None,
            dev_path: None,
            test_path: None,
            eval_path: None,
            text_col: "text".into(),
            label_col: "label".into(),
            id_col: None,
            label_names: vec!["NOT".into(), "HOF".into()],
            vocab_size: 8000,
            min_freq: 1,
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            d_ff: 128,
            max_seq_len: 128,
            pooler_kind: "attention".into(),
            pool_includes_cls: true,
            encoder_dropout: 0.1,
            lr: 2e-5,
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
            out_dir: "out".into(),
            vocab_path: None,
            checkpoint_path: None,
            input_path: None,
            output_path: None,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn clean_rules(&self) -> CleanRules {
        CleanRules {
            remove_urls: self.remove_urls,
            remove_mentions: self.remove_mentions,
            remove_emoji: self.remove_emoji,
            remove_punct: self.remove_punct,
            remove_stopwords: self.remove_stopwords,
            lowercase_latin: self.lowercase_latin,
            ..CleanRules::default()
        }
    }

    pub fn model_config(&self, vocab_size: usize) -> Result<ModelConfig> {
        let pooler_kind: PoolerKind = self.pooler_kind.parse()?;
        Ok(ModelConfig {
            vocab_size,
            d_model: self.d_model,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            d_ff: self.d_ff,
            max_seq_len: self.max_seq_len,
            pooler_kind,
            n_classes: self.label_names.len(),
            dropout_p: self.dropout,
            encoder_dropout_p: self.encoder_dropout,
            pool_includes_cls: self.pool_includes_cls,
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            max_seq_len: self.max_seq_len,
            batch_size: self.batch_size,
            epochs: self.epochs,
            weight_decay: self.weight_decay,
            dropout: self.dropout,
            adam_eps: self.adam_eps,
            beta1: self.beta1,
            beta2: self.beta2,
            seed: self.seed,
            balance: self.balance,
            warmup_steps: self.warmup_steps,
            grad_clip: self.grad_clip,
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(&self.out_dir)
    }

    pub fn vocab_path(&self) -> PathBuf {
        self.vocab_path
            .as_ref()
            .map(PathBuf::from)
            .unwrap_or_else(|| self.out_dir().join("vocab.txt"))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint_path
            .as_ref()
            .map(PathBuf::from)
            .unwrap_or_else(|| self.out_dir().join("model.cmcx"))
    }

    fn require(&self, field: &str, value: &Option<String>) -> Result<PathBuf> {
        value
            .as_ref()
            .map(PathBuf::from)
            .ok_or_else(|| Error::Config(format!("{field} is required for this command")))
    }

    fn load_split(&self, path: &Path, rules: &CleanRules) -> Result<(LabeledCorpus, LoadStats)> {
        load_tsv_with_stats(
            path,
            &self.text_col,
            &self.label_col,
            self.id_col.as_deref(),
            &self.label_names,
            rules,
        )
    }
}

#[derive(Serialize)]
struct SplitStats {
    name: String,
    path: String,
    rows_in: usize,
    rows_dropped: usize,
    rows_out: usize,
    class_counts: BTreeMap<String, usize>,
}

#[derive(Serialize)]
struct PrepareReport<'a> {
    config: &'a RunConfig,
    splits: Vec<SplitStats>,
    train_rows_out: usize,
    train_class_counts: BTreeMap<String, usize>,
    balanced_class_counts: Option<BTreeMap<String, usize>>,
    test_rows_out: Option<usize>,
    vocab_size: usize,
}

fn count_map(corpus: &LabeledCorpus) -> BTreeMap<String, usize> {
    corpus
        .label_names()
        .iter()
        .cloned()
        .zip(corpus.class_counts().iter().copied())
        .collect()
}

fn write_clean_tsv(corpus: &LabeledCorpus, cfg: &RunConfig, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("id\t{}\t{}\n", cfg.text_col, cfg.label_col));
    for ex in corpus.examples() {
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            ex.id,
            ex.text,
            corpus.label_names()[ex.label]
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(cfg.out_dir()).map_err(|e| Error::io(cfg.out_dir(), e))
}

/// Clean the raw splits, concatenate train+dev, build the vocabulary, and
/// write cleaned TSVs plus a JSON stats report. Balancing itself happens at
/// training time; with `balance` set the report also shows the balanced
/// class counts this seed will produce.
pub fn cmd_prepare(cfg: &RunConfig) -> Result<String> {
    let rules = cfg.clean_rules();
    rules.validate()?;
    ensure_out_dir(cfg)?;

    let train_path = cfg.require("train_path", &cfg.train_path)?;
    let (train_corpus, train_stats) = cfg.load_split(&train_path, &rules)?;
    let mut splits = vec![SplitStats {
        name: "train".into(),
        path: train_path.display().to_string(),
        rows_in: train_stats.rows_in,
        rows_dropped: train_stats.rows_dropped,
        rows_out: train_corpus.len(),
        class_counts: count_map(&train_corpus),
    }];

    let combined = match &cfg.dev_path {
        Some(dev) => {
            let dev_path = PathBuf::from(dev);
            let (dev_corpus, dev_stats) = cfg.load_split(&dev_path, &rules)?;
            splits.push(SplitStats {
                name: "dev".into(),
                path: dev_path.display().to_string(),
                rows_in: dev_stats.rows_in,
                rows_dropped: dev_stats.rows_dropped,
                rows_out: dev_corpus.len(),
                class_counts: count_map(&dev_corpus),
            });
            concat(&train_corpus, &dev_corpus)?
        }
        None => train_corpus,
    };

    let test_corpus = match &cfg.test_path {
        Some(test) => {
            let test_path = PathBuf::from(test);
            let (test_corpus, test_stats) = cfg.load_split(&test_path, &rules)?;
            splits.push(SplitStats {
                name: "test".into(),
                path: test_path.display().to_string(),
                rows_in: test_stats.rows_in,
                rows_dropped: test_stats.rows_dropped,
                rows_out: test_corpus.len(),
                class_counts: count_map(&test_corpus),
            });
            Some(test_corpus)
        }
        None => None,
    };

    let balanced_class_counts = if cfg.balance {
        let balanced = uniform_sample(&combined, crate::rng::derive_seed(cfg.seed, 0x0B))?;
        Some(count_map(&balanced))
    } else {
        None
    };

    let texts: Vec<&str> = combined
        .examples()
        .iter()
        .map(|e| e.text.as_str())
        .collect();
    let vocab = build_vocab(&texts, cfg.vocab_size, cfg.min_freq);
    vocab.save(&cfg.vocab_path())?;

    write_clean_tsv(&combined, cfg, &cfg.out_dir().join("train.clean.tsv"))?;
    if let Some(test) = &test_corpus {
        write_clean_tsv(test, cfg, &cfg.out_dir().join("test.clean.tsv"))?;
    }

    let report = PrepareReport {
        config: cfg,
        splits,
        train_rows_out: combined.len(),
        train_class_counts: count_map(&combined),
        balanced_class_counts,
        test_rows_out: test_corpus.as_ref().map(|c| c.len()),
        vocab_size: vocab.len(),
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    let report_path = cfg.out_dir().join("prepare.json");
    fs::write(&report_path, &json).map_err(|e| Error::io(&report_path, e))?;
    Ok(json)
}

#[derive(Serialize)]
struct TrainReport<'a> {
    config: &'a RunConfig,
    checkpoint_path: String,
    history: &'a crate::training::TrainingHistory,
}

/// Train on a prepared corpus; writes the checkpoint and a history JSON.
pub fn cmd_train(cfg: &RunConfig) -> Result<String> {
    let rules = cfg.clean_rules();
    rules.validate()?;
    ensure_out_dir(cfg)?;

    let vocab_path = cfg.vocab_path();
    if !vocab_path.exists() {
        return Err(Error::Config(format!(
            "vocab not found at {} (run `prepare` first or pass --vocab-path)",
            vocab_path.display()
        )));
    }
    let vocab = Vocab::load(&vocab_path)?;

    let train_path = cfg.require("train_path", &cfg.train_path)?;
    let train_corpus = cfg.load_split(&train_path, &rules)?.0;
    let eval_corpus = match &cfg.eval_path {
        Some(p) => Some(cfg.load_split(&PathBuf::from(p), &rules)?.0),
        None => None,
    };

    let mcfg = cfg.model_config(vocab.len())?;
    let tcfg = cfg.train_config();
    let out = train(
        &mcfg,
        &tcfg,
        &vocab,
        &rules,
        &train_corpus,
        eval_corpus.as_ref(),
    )?;

    let ckpt_path = cfg.checkpoint_path();
    save_checkpoint(&out.checkpoint, &ckpt_path)?;

    let report = TrainReport {
        config: cfg,
        checkpoint_path: ckpt_path.display().to_string(),
        history: &out.history,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    let history_path = cfg.out_dir().join("history.json");
    fs::write(&history_path, &json).map_err(|e| Error::io(&history_path, e))?;
    Ok(json)
}

#[derive(Serialize)]
struct EvalReport<'a> {
    config: &'a RunConfig,
    dataset: String,
    report: crate::metrics::WeightedReport,
}

fn batched_predict(
    model: &Model,
    vocab: &Vocab,
    texts: &[String],
    max_seq_len: usize,
    batch_size: usize,
) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    let mut preds = Vec::with_capacity(texts.len());
    let mut probs = Vec::with_capacity(texts.len());
    for chunk in texts.chunks(batch_size.max(1)) {
        let tb = encode_batch(chunk, vocab, max_seq_len)?;
        let (batch_preds, batch_probs) = model.predict(&tb)?;
        for (i, p) in batch_preds.into_iter().enumerate() {
            preds.push(p);
            probs.push(batch_probs.row(i).to_vec());
        }
    }
    Ok((preds, probs))
}

/// Score a labeled test TSV against a checkpoint. Returns the fixed-width
/// table and the full-precision JSON report (also written to
/// `out_dir/metrics.json`). Cleaning uses the checkpoint's stored rules;
/// cleaning is idempotent, so already-clean files pass through unchanged.
pub fn cmd_eval(cfg: &RunConfig) -> Result<(String, String)> {
    ensure_out_dir(cfg)?;
    let ckpt = load_checkpoint(&cfg.checkpoint_path())?;
    let test_path = cfg.require("test_path", &cfg.test_path)?;
    let (corpus, _) = load_tsv_with_stats(
        &test_path,
        &cfg.text_col,
        &cfg.label_col,
        cfg.id_col.as_deref(),
        &ckpt.label_names,
        &ckpt.clean_rules,
    )?;
    if corpus.is_empty() {
        return Err(Error::Data(format!(
            "{}: no scorable rows",
            test_path.display()
        )));
    }

    let model = Model::from_parts(ckpt.model.clone(), ckpt.params.clone())?;
    let max_len = ckpt.model.max_seq_len.min(ckpt.train.max_seq_len);
    let texts: Vec<String> = corpus.examples().iter().map(|e| e.text.clone()).collect();
    let (preds, _) = batched_predict(&model, &ckpt.vocab, &texts, max_len, ckpt.train.batch_size)?;
    let labels: Vec<usize> = corpus.examples().iter().map(|e| e.label).collect();
    let matrix = confusion(&preds, &labels, corpus.n_classes())?;
    let report = weighted_prf_named(&matrix, corpus.label_names())?;

    let table = report.table("test");
    let eval_report = EvalReport {
        config: cfg,
        dataset: test_path.display().to_string(),
        report,
    };
    let json = serde_json::to_string_pretty(&eval_report).expect("report serializes");
    let metrics_path = cfg.out_dir().join("metrics.json");
    fs::write(&metrics_path, &json).map_err(|e| Error::io(&metrics_path, e))?;
    Ok((table, json))
}

struct PredictRow {
    id: String,
    text: String,
}

fn read_predict_rows(cfg: &RunConfig, input: Option<&Path>) -> Result<Vec<PredictRow>> {
    match input {
        Some(path) => {
            let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let mut lines = raw.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l));
            let header = lines
                .next()
                .ok_or_else(|| Error::Schema(format!("{}: empty file", path.display())))?;
            let columns: Vec<&str> = header.split('\t').collect();
            let text_idx = columns
                .iter()
                .position(|c| *c == cfg.text_col)
                .ok_or_else(|| {
                    Error::Schema(format!(
                        "{}: missing column {:?}",
                        path.display(),
                        cfg.text_col
                    ))
                })?;
            let id_idx = match &cfg.id_col {
                Some(name) => Some(columns.iter().position(|c| c == name).ok_or_else(|| {
                    Error::Schema(format!("{}: missing column {name:?}", path.display()))
                })?),
                None => None,
            };
            let mut rows = Vec::new();
            for (lineno, line) in lines.enumerate() {
                if line.is_empty() {
                    continue;
                }
                let fields: Vec<&str> = line.split('\t').collect();
                if fields.len() != columns.len() {
                    return Err(Error::Schema(format!(
                        "{} line {}: {} fields, expected {}",
                        path.display(),
                        lineno + 2,
                        fields.len(),
                        columns.len()
                    )));
                }
                rows.push(PredictRow {
                    id: match id_idx {
                        Some(i) => fields[i].to_string(),
                        None => (lineno + 1).to_string(),
                    },
                    text: fields[text_idx].to_string(),
                });
            }
            Ok(rows)
        }
        None => {
            let stdin = std::io::stdin();
            let mut rows = Vec::new();
            for (i, line) in stdin.lock().lines().enumerate() {
                let line = line.map_err(|e| Error::io("<stdin>", e))?;
                if line.is_empty() {
                    continue;
                }
                rows.push(PredictRow {
                    id: (i + 1).to_string(),
                    text: line,
                });
            }
            Ok(rows)
        }
    }
}

/// Predict labels for a TSV (or raw lines on stdin when no `input_path` is
/// configured). Returns one TSV row per input row: id, predicted label
/// name, then the class probabilities with six decimals. Raw text is
/// cleaned with the checkpoint's stored rules before tokenization.
pub fn cmd_predict(cfg: &RunConfig) -> Result<String> {
    let ckpt = load_checkpoint(&cfg.checkpoint_path())?;
    let rows = read_predict_rows(cfg, cfg.input_path.as_deref().map(Path::new))?;
    if rows.is_empty() {
        return Err(Error::Data("no input rows to predict".into()));
    }
    let model = Model::from_parts(ckpt.model.clone(), ckpt.params.clone())?;
    let max_len = ckpt.model.max_seq_len.min(ckpt.train.max_seq_len);
    let cleaned: Vec<String> = rows
        .iter()
        .map(|r| clean_text(&r.text, &ckpt.clean_rules))
        .collect();
    let (preds, probs) = batched_predict(
        &model,
        &ckpt.vocab,
        &cleaned,
        max_len,
        ckpt.train.batch_size,
    )?;

    let mut out = String::new();
    out.push_str("id\tlabel");
    for name in &ckpt.label_names {
        out.push_str(&format!("\tp_{name}"));
    }
    out.push('\n');
    for (i, row) in rows.iter().enumerate() {
        out.push_str(&format!("{}\t{}", row.id, ckpt.label_names[preds[i]]));
        for p in &probs[i] {
            out.push_str(&format!("\t{p:.6}"));
        }
        out.push('\n');
    }
    if let Some(path) = &cfg.output_path {
        let path = PathBuf::from(path);
        fs::write(&path, &out).map_err(|e| Error::io(&path, e))?;
    }
    Ok(out)
}
