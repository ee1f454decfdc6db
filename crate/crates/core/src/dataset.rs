//! Labeled corpus ingestion, concatenation, class balancing, and batching.
//!
//! Input is header-first UTF-8 TSV. Quoting is not supported: a tab inside a
//! text field is illegal and shows up as a field-count mismatch. Both `\n`
//! and `\r\n` line endings are accepted.

use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::textprep::{clean_text, CleanRules};

/// One cleaned, labeled example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledExample {
    pub id: String,
    pub text: String,
    pub label: usize,
}

/// An ordered collection of examples with its label vocabulary and
/// per-class counts. Counts are recomputed on every mutation, so they are
/// always consistent with the examples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledCorpus {
    examples: Vec<LabeledExample>,
    label_names: Vec<String>,
    class_counts: Vec<usize>,
}

impl LabeledCorpus {
    pub fn new(label_names: Vec<String>) -> LabeledCorpus {
        let n = label_names.len();
        LabeledCorpus {
            examples: Vec::new(),
            label_names,
            class_counts: vec![0; n],
        }
    }

    pub fn from_examples(
        label_names: Vec<String>,
        examples: Vec<LabeledExample>,
    ) -> Result<LabeledCorpus> {
        let mut corpus = LabeledCorpus::new(label_names);
        for ex in examples {
            corpus.push(ex)?;
        }
        Ok(corpus)
    }

    pub fn push(&mut self, ex: LabeledExample) -> Result<()> {
        if ex.label >= self.label_names.len() {
            return Err(Error::Data(format!(
                "label index {} out of range for {} classes",
                ex.label,
                self.label_names.len()
            )));
        }
        self.class_counts[ex.label] += 1;
        self.examples.push(ex);
        Ok(())
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.label_names.len()
    }
}

/// Row bookkeeping from a TSV load, for the prepare stats report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct LoadStats {
    pub rows_in: usize,
    pub rows_dropped: usize,
}

/// Load a labeled TSV, cleaning each text with `rules`.
///
/// Rows are dropped (not errors) when the label field is empty, the raw text
/// is empty or the literal "nan"/"NaN", or the cleaned text comes out empty.
/// A label string not present in `label_names` is a data error naming the
/// line. Missing columns are schema errors.
pub fn load_tsv(
    path: &Path,
    text_col: &str,
    label_col: &str,
    id_col: Option<&str>,
    label_names: &[String],
    rules: &CleanRules,
) -> Result<LabeledCorpus> {
    load_tsv_with_stats(path, text_col, label_col, id_col, label_names, rules).map(|(c, _)| c)
}

/// Same as [`load_tsv`], also reporting how many rows were read and dropped.
pub fn load_tsv_with_stats(
    path: &Path,
    text_col: &str,
    label_col: &str,
    id_col: Option<&str>,
    label_names: &[String],
    rules: &CleanRules,
) -> Result<(LabeledCorpus, LoadStats)> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let content = String::from_utf8(raw)
        .map_err(|e| Error::Data(format!("{}: not valid UTF-8: {e}", path.display())))?;

    let mut lines = content
        .split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l));
    let header = lines
        .next()
        .ok_or_else(|| Error::Schema(format!("{}: empty file", path.display())))?;
    let columns: Vec<&str> = header.split('\t').collect();
    let find = |name: &str| -> Result<usize> {
        columns.iter().position(|c| *c == name).ok_or_else(|| {
            Error::Schema(format!(
                "{}: missing column {name:?} (header has {columns:?})",
                path.display()
            ))
        })
    };
    let text_idx = find(text_col)?;
    let label_idx = find(label_col)?;
    let id_idx = id_col.map(find).transpose()?;

    let mut corpus = LabeledCorpus::new(label_names.to_vec());
    let mut stats = LoadStats {
        rows_in: 0,
        rows_dropped: 0,
    };
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let display_line = lineno + 2; // 1-based, after the header
        stats.rows_in += 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != columns.len() {
            return Err(Error::Schema(format!(
                "{} line {display_line}: {} fields, expected {}",
                path.display(),
                fields.len(),
                columns.len()
            )));
        }
        let label_raw = fields[label_idx].trim();
        let text_raw = fields[text_idx];
        if label_raw.is_empty() || text_raw.is_empty() || text_raw == "nan" || text_raw == "NaN" {
            stats.rows_dropped += 1;
            continue;
        }
        let text = clean_text(text_raw, rules);
        if text.is_empty() {
            stats.rows_dropped += 1;
            continue;
        }
        let label = label_names
            .iter()
            .position(|n| n == label_raw)
            .ok_or_else(|| {
                Error::Data(format!(
                    "{} line {display_line}: unknown label {label_raw:?} (expected one of {label_names:?})",
                    path.display()
                ))
            })?;
        let id = match id_idx {
            Some(i) => fields[i].to_string(),
            None => stats.rows_in.to_string(),
        };
        corpus.push(LabeledExample { id, text, label })?;
    }
    Ok((corpus, stats))
}

/// Order-preserving concatenation. The label vocabularies must match.
pub fn concat(a: &LabeledCorpus, b: &LabeledCorpus) -> Result<LabeledCorpus> {
    if a.label_names != b.label_names {
        return Err(Error::Schema(format!(
            "label name mismatch: {:?} vs {:?}",
            a.label_names, b.label_names
        )));
    }
    let mut out = a.clone();
    for ex in &b.examples {
        out.push(ex.clone())?;
    }
    Ok(out)
}

/// Balance classes by oversampling with replacement until every class count
/// equals the majority count, then shuffle.
///
/// All original examples are retained; the duplicates are drawn per class
/// (classes in index order) from a SplitMix64 stream seeded with `seed`, and
/// the final Fisher-Yates shuffle continues on the same stream. Identical
/// seeds give identical output order.
pub fn uniform_sample(corpus: &LabeledCorpus, seed: u64) -> Result<LabeledCorpus> {
    if corpus.is_empty() {
        return Err(Error::Data("cannot balance an empty corpus".into()));
    }
    for (k, &count) in corpus.class_counts.iter().enumerate() {
        if count == 0 {
            return Err(Error::Data(format!(
                "class {:?} has no examples to sample from",
                corpus.label_names[k]
            )));
        }
    }
    let majority = *corpus.class_counts.iter().max().unwrap();
    let mut rng = SplitMix64::new(seed);
    let mut result: Vec<LabeledExample> = corpus.examples.clone();
    for k in 0..corpus.n_classes() {
        let members: Vec<usize> = (0..corpus.len())
            .filter(|&i| corpus.examples[i].label == k)
            .collect();
        for _ in corpus.class_counts[k]..majority {
            let pick = members[rng.next_below(members.len() as u64) as usize];
            result.push(corpus.examples[pick].clone());
        }
    }
    rng.shuffle(&mut result);
    LabeledCorpus::from_examples(corpus.label_names.clone(), result)
}

/// A mini-batch of texts with their labels.
#[derive(Debug, Clone)]
pub struct MiniBatch {
    pub texts: Vec<String>,
    pub labels: Vec<usize>,
}

/// Shuffle the corpus with `shuffle_seed` and chunk it. The final partial
/// batch is kept, so every example appears exactly once per epoch.
pub fn batches(
    corpus: &LabeledCorpus,
    batch_size: usize,
    shuffle_seed: u64,
) -> Result<Vec<MiniBatch>> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    if corpus.is_empty() {
        return Ok(Vec::new());
    }
    let mut indices: Vec<usize> = (0..corpus.len()).collect();
    SplitMix64::new(shuffle_seed).shuffle(&mut indices);
    Ok(indices
        .chunks(batch_size)
        .map(|chunk| MiniBatch {
            texts: chunk
                .iter()
                .map(|&i| corpus.examples[i].text.clone())
                .collect(),
            labels: chunk.iter().map(|&i| corpus.examples[i].label).collect(),
        })
        .collect())
}
