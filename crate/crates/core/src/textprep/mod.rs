//! Text cleaning and subword tokenization for code-mixed social-media text.
//!
//! Cleaning applies a fixed rule sequence: URLs, @mentions, emoji,
//! punctuation, Latin case folding, stopwords, whitespace. The order matters
//! (URLs must go before punctuation removal can shred them into fragments)
//! and is chosen so the whole pass is idempotent. Tamil script passes through
//! untouched.
//!
//! Tokenization is WordPiece-style greedy longest-match over a vocabulary
//! built from the training corpus, with single-character fallback so noisy
//! code-mixed spellings degrade into character pieces instead of UNK.

mod stopwords;
mod tokenize;
mod vocab;

pub use stopwords::ENGLISH_STOPWORDS;
pub use tokenize::{encode_batch, tokenize, TokenBatch};
pub use vocab::{build_vocab, Vocab, CLS_ID, PAD_ID, SEP_ID, UNK_ID};

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which cleaning rules to apply, plus the stopword list they consult.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanRules {
    pub remove_urls: bool,
    pub remove_mentions: bool,
    pub remove_emoji: bool,
    pub remove_punct: bool,
    pub remove_stopwords: bool,
    pub lowercase_latin: bool,
    /// Lowercase words dropped during stopword removal. BTreeSet keeps
    /// serialized rule sets byte-stable.
    pub stopword_list: BTreeSet<String>,
}

impl Default for CleanRules {
    fn default() -> Self {
        CleanRules {
            remove_urls: true,
            remove_mentions: true,
            remove_emoji: true,
            remove_punct: true,
            remove_stopwords: true,
            lowercase_latin: true,
            stopword_list: ENGLISH_STOPWORDS.iter().map(|w| w.to_string()).collect(),
        }
    }
}

impl CleanRules {
    pub fn validate(&self) -> Result<()> {
        if self.remove_stopwords && self.stopword_list.is_empty() {
            return Err(Error::Config(
                "remove_stopwords is set but the stopword list is empty".into(),
            ));
        }
        Ok(())
    }
}

fn url_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // A scheme followed by "://", or a bare "www.", then everything up to
    // whitespace. Case-insensitive so "HTTP://X" cannot survive as "http..."
    // after the later lowercasing step.
    RE.get_or_init(|| Regex::new(r"(?i)(?:[a-z][a-z0-9+.\-]*://|www\.)\S*").unwrap())
}

fn mention_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"@\S*").unwrap())
}

fn punct_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // All Unicode general-category P* codepoints.
    RE.get_or_init(|| Regex::new(r"\p{P}+").unwrap())
}

/// Emoji, pictograph, and flag blocks that get stripped.
///
/// Inclusive ranges: U+1F300-1F5FF, U+1F600-1F64F, U+1F680-1F6FF,
/// U+1F900-1F9FF, U+1FA70-1FAFF, U+2600-27BF, U+FE0F, U+1F1E6-1F1FF.
pub fn is_emoji_codepoint(c: char) -> bool {
    matches!(u32::from(c),
        0x1F300..=0x1F5FF
        | 0x1F600..=0x1F64F
        | 0x1F680..=0x1F6FF
        | 0x1F900..=0x1F9FF
        | 0x1FA70..=0x1FAFF
        | 0x2600..=0x27BF
        | 0xFE0F
        | 0x1F1E6..=0x1F1FF)
}

/// True for uppercase letters of the Latin script (ASCII plus the Latin-1
/// and Latin Extended blocks). Tamil has no case, so it never matches.
fn is_latin_uppercase(c: char) -> bool {
    let latin = matches!(u32::from(c),
        0x0041..=0x005A
        | 0x00C0..=0x00FF
        | 0x0100..=0x024F
        | 0x1E00..=0x1EFF);
    latin && c.is_uppercase()
}

/// Clean one raw text according to `rules`.
///
/// Rules apply in a fixed order: URL removal, @mention removal, emoji
/// removal, punctuation removal, Latin lowercasing, stopword removal,
/// whitespace collapsing and trimming. With the default rule set the
/// function is idempotent. An empty result is legal.
pub fn clean_text(raw: &str, rules: &CleanRules) -> String {
    let mut text = raw.to_string();
    if rules.remove_urls {
        text = url_re().replace_all(&text, "").into_owned();
    }
    if rules.remove_mentions {
        text = mention_re().replace_all(&text, "").into_owned();
    }
    if rules.remove_emoji {
        text.retain(|c| !is_emoji_codepoint(c));
    }
    if rules.remove_punct {
        text = punct_re().replace_all(&text, "").into_owned();
    }
    if rules.lowercase_latin {
        let mut lowered = String::with_capacity(text.len());
        for c in text.chars() {
            if is_latin_uppercase(c) {
                lowered.extend(c.to_lowercase());
            } else {
                lowered.push(c);
            }
        }
        text = lowered;
    }
    if rules.remove_stopwords {
        text = text
            .split_whitespace()
            .filter(|tok| !rules.stopword_list.contains(*tok))
            .collect::<Vec<_>>()
            .join(" ");
    }
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_example_full_pipeline() {
        let rules = CleanRules::default();
        assert_eq!(
            clean_text("Watch https://t.co/xyz @user \u{1F600} Vera!!!", &rules),
            "watch vera"
        );
    }

    #[test]
    fn spec_example_tamil_preserved_latin_lowered() {
        let rules = CleanRules::default();
        assert_eq!(clean_text("படம் Super", &rules), "படம் super");
    }

    #[test]
    fn spec_example_stopwords_dropped() {
        let rules = CleanRules::default();
        // "this", "is", "a" are in the embedded list; "movie" is not.
        assert!(rules.stopword_list.contains("this"));
        assert!(rules.stopword_list.contains("is"));
        assert!(rules.stopword_list.contains("a"));
        assert!(!rules.stopword_list.contains("movie"));
        assert_eq!(clean_text("this is a movie", &rules), "movie");
    }

    #[test]
    fn url_variants_are_removed() {
        let rules = CleanRules::default();
        for raw in [
            "pre http://a.b/c post",
            "pre HTTPS://A.B/C?q=1#f post",
            "pre www.example.com/watch?v=x post",
            "pre WWW.EXAMPLE.COM post",
            "pre ftp://files.org/x.zip post",
        ] {
            assert_eq!(clean_text(raw, &rules), "pre post", "input {raw:?}");
        }
    }

    #[test]
    fn mention_runs_are_removed() {
        let rules = CleanRules::default();
        assert_eq!(clean_text("hi @user_1 there", &rules), "hi");
        assert_eq!(clean_text("glued@handle tail", &rules), "glued tail");
        // a lone @ falls to punctuation removal
        assert_eq!(clean_text("x @ y", &rules), "x y");
    }

    #[test]
    fn emoji_blocks_are_removed() {
        let rules = CleanRules::default();
        assert_eq!(
            clean_text(
                "ok \u{1F600}\u{1F680}\u{1F1EE}\u{1F1F3}\u{2728}\u{FE0F}\u{1FA94} done",
                &rules
            ),
            "ok done"
        );
    }

    #[test]
    fn punctuation_merge_and_strip() {
        let rules = CleanRules::default();
        assert_eq!(clean_text("Vera!!! mass...", &rules), "vera mass");
        // removal joins the pieces, it does not insert spaces
        assert_eq!(clean_text("don't", &rules), "");
        assert_eq!(clean_text("semma-mass", &rules), "semmamass");
    }

    #[test]
    fn empty_output_is_legal() {
        let rules = CleanRules::default();
        assert_eq!(clean_text("", &rules), "");
        assert_eq!(clean_text("this is a", &rules), "");
        assert_eq!(clean_text("\u{1F600}!!!", &rules), "");
    }

    #[test]
    fn rules_can_be_disabled_individually() {
        let rules = CleanRules {
            remove_stopwords: false,
            ..CleanRules::default()
        };
        assert_eq!(clean_text("this is a movie", &rules), "this is a movie");

        let rules = CleanRules {
            lowercase_latin: false,
            remove_stopwords: false,
            ..CleanRules::default()
        };
        assert_eq!(clean_text("Super MOVIE", &rules), "Super MOVIE");

        let rules = CleanRules {
            remove_punct: false,
            ..CleanRules::default()
        };
        assert_eq!(clean_text("vera!!!", &rules), "vera!!!");
    }

    #[test]
    fn idempotent_on_defaults() {
        let rules = CleanRules::default();
        for raw in [
            "Watch https://t.co/xyz @user \u{1F600} Vera!!!",
            "ww\u{1F600}w.trap.com stays gone",
            "T\u{1F600}HIS becomes a stopword",
            "படம் Super!!! washttp hmm",
        ] {
            let once = clean_text(raw, &rules);
            assert_eq!(clean_text(&once, &rules), once, "input {raw:?}");
        }
    }

    #[test]
    fn whitespace_collapsed_and_trimmed() {
        let rules = CleanRules::default();
        assert_eq!(
            clean_text("  padam \t\t super \n nalla  ", &rules),
            "padam super nalla"
        );
    }

    #[test]
    fn empty_stopword_list_rejected_when_enabled() {
        let mut rules = CleanRules::default();
        rules.stopword_list.clear();
        assert!(rules.validate().is_err());
        rules.remove_stopwords = false;
        assert!(rules.validate().is_ok());
    }
}
