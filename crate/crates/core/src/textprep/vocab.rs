//! Subword vocabulary built from the training corpus.
//!
//! Entries are whole words above a frequency floor plus every single
//! character seen, both as a word-initial piece and as a `##` continuation.
//! The character pieces are the fallback that keeps noisy code-mixed
//! spellings from collapsing into UNK wholesale.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const SEP_ID: u32 = 3;

/// The four reserved entries, in id order.
pub const SPECIAL_TOKENS: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];

/// Token/id bijection with the four specials pinned to ids 0-3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
    pub max_size: usize,
    pub min_freq: usize,
}

impl Vocab {
    fn from_tokens(tokens: Vec<String>, max_size: usize, min_freq: usize) -> Result<Vocab> {
        let mut token_to_id = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if token_to_id.insert(tok.clone(), i as u32).is_some() {
                return Err(Error::Data(format!("duplicate vocab token {tok:?}")));
            }
        }
        Ok(Vocab {
            token_to_id,
            id_to_token: tokens,
            max_size,
            min_freq,
        })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(|s| s.as_str())
    }

    /// Serialize to the vocab file format: one token per line, the line
    /// number is the id, and the first four lines are exactly the specials.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for tok in &self.id_to_token {
            out.push_str(tok);
            out.push('\n');
        }
        out
    }

    /// Parse the vocab file format. Rejects files that do not start with the
    /// four special tokens in order.
    pub fn from_text(text: &str) -> Result<Vocab> {
        let tokens: Vec<String> = text.lines().map(|l| l.to_string()).collect();
        if tokens.len() < SPECIAL_TOKENS.len() {
            return Err(Error::Schema(format!(
                "vocab has {} lines, expected at least {}",
                tokens.len(),
                SPECIAL_TOKENS.len()
            )));
        }
        for (i, want) in SPECIAL_TOKENS.iter().enumerate() {
            if tokens[i] != *want {
                return Err(Error::Schema(format!(
                    "vocab line {} is {:?}, expected {want:?}",
                    i + 1,
                    tokens[i]
                )));
            }
        }
        let n = tokens.len();
        Vocab::from_tokens(tokens, n, 1)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Vocab> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Vocab::from_text(&text)
    }
}

/// Build a vocabulary from cleaned corpus texts.
///
/// Splits on whitespace, keeps whole words with frequency >= `min_freq`,
/// and adds every character seen as a word-initial piece and as a `##`
/// continuation piece. Candidates are ranked by frequency (descending) then
/// token (ascending) and truncated so the total size, specials included,
/// never exceeds `max_size`. Deterministic for a fixed corpus.
pub fn build_vocab<S: AsRef<str>>(corpus: &[S], max_size: usize, min_freq: usize) -> Vocab {
    let mut word_counts: HashMap<String, u64> = HashMap::new();
    for text in corpus {
        for word in text.as_ref().split_whitespace() {
            *word_counts.entry(word.to_string()).or_insert(0) += 1;
        }
    }

    let mut candidates: HashMap<String, u64> = HashMap::new();
    for (word, n) in &word_counts {
        if *n >= min_freq as u64 {
            *candidates.entry(word.clone()).or_insert(0) += n;
        }
        for (pos, c) in word.chars().enumerate() {
            let piece = if pos == 0 {
                c.to_string()
            } else {
                format!("##{c}")
            };
            *candidates.entry(piece).or_insert(0) += n;
        }
    }

    let mut ranked: Vec<(String, u64)> = candidates.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    let slots = max_size.saturating_sub(SPECIAL_TOKENS.len());
    let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
    tokens.extend(ranked.into_iter().take(slots).map(|(tok, _)| tok));

    Vocab::from_tokens(tokens, max_size.max(SPECIAL_TOKENS.len()), min_freq)
        .expect("specials and ranked corpus tokens cannot collide")
}
