//! Greedy longest-match subword tokenization and padded batch encoding.

use crate::error::{Error, Result};

use super::vocab::{Vocab, CLS_ID, PAD_ID, UNK_ID};

/// Encode one cleaned text as token ids.
///
/// A CLS id is prepended, then each whitespace word is matched greedily:
/// the longest vocab prefix first, continuations carrying the `##` prefix.
/// A word containing any unmatchable character becomes a single UNK. The
/// sequence is truncated to `max_seq_len`. Sequences are single-segment, so
/// no trailing SEP is emitted; the id stays reserved in the vocabulary.
pub fn tokenize(text: &str, vocab: &Vocab, max_seq_len: usize) -> Vec<u32> {
    debug_assert!(max_seq_len >= 2);
    let mut ids = vec![CLS_ID];
    'words: for word in text.split_whitespace() {
        let chars: Vec<char> = word.chars().collect();
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut matched = None;
            for end in (start + 1..=chars.len()).rev() {
                let piece: String = chars[start..end].iter().collect();
                let candidate = if start == 0 {
                    piece
                } else {
                    format!("##{piece}")
                };
                if let Some(id) = vocab.id(&candidate) {
                    matched = Some((id, end));
                    break;
                }
            }
            match matched {
                Some((id, end)) => {
                    pieces.push(id);
                    start = end;
                }
                None => {
                    ids.push(UNK_ID);
                    continue 'words;
                }
            }
        }
        ids.extend(pieces);
    }
    ids.truncate(max_seq_len);
    ids
}

/// A padded batch of token ids with its validity mask.
///
/// `ids` and `mask` are row-major `[batch x seq_len]`. Mask 1 marks a real
/// token, 0 marks padding; every row is a prefix of ones followed by zeros,
/// starts with CLS, and carries PAD wherever the mask is 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenBatch {
    pub ids: Vec<u32>,
    pub mask: Vec<u8>,
    pub batch: usize,
    pub seq_len: usize,
}

impl TokenBatch {
    pub fn row_ids(&self, row: usize) -> &[u32] {
        &self.ids[row * self.seq_len..(row + 1) * self.seq_len]
    }

    pub fn row_mask(&self, row: usize) -> &[u8] {
        &self.mask[row * self.seq_len..(row + 1) * self.seq_len]
    }

    /// Number of real tokens in a row.
    pub fn live_len(&self, row: usize) -> usize {
        self.row_mask(row).iter().map(|&m| m as usize).sum()
    }
}

/// Tokenize every text and pad all rows to the longest one in the batch,
/// capped at `max_seq_len`.
pub fn encode_batch<S: AsRef<str>>(
    texts: &[S],
    vocab: &Vocab,
    max_seq_len: usize,
) -> Result<TokenBatch> {
    if texts.is_empty() {
        return Err(Error::Data("cannot encode an empty batch".into()));
    }
    let rows: Vec<Vec<u32>> = texts
        .iter()
        .map(|t| tokenize(t.as_ref(), vocab, max_seq_len))
        .collect();
    let seq_len = rows.iter().map(|r| r.len()).max().unwrap_or(1);
    let batch = rows.len();
    let mut ids = vec![PAD_ID; batch * seq_len];
    let mut mask = vec![0u8; batch * seq_len];
    for (i, row) in rows.iter().enumerate() {
        for (j, &id) in row.iter().enumerate() {
            ids[i * seq_len + j] = id;
            mask[i * seq_len + j] = 1;
        }
    }
    Ok(TokenBatch {
        ids,
        mask,
        batch,
        seq_len,
    })
}
