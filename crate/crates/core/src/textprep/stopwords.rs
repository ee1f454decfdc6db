//! The embedded English stopword list.
//!
//! Roughly 180 common function words, lowercase, with apostrophes already
//! stripped ("don't" appears as "dont") because punctuation removal runs
//! before stopword filtering and joins the pieces. The list is fixed here so
//! that cleaning is reproducible without any external resource.

/// Every stopword, one per entry.
pub const ENGLISH_STOPWORDS: &[&str] = &[
    // pronouns and determiners
    "i",
    "me",
    "my",
    "myself",
    "we",
    "our",
    "ours",
    "ourselves",
    "you",
    "your",
    "yours",
    "yourself",
    "yourselves",
    "he",
    "him",
    "his",
    "himself",
    "she",
    "her",
    "hers",
    "herself",
    "it",
    "its",
    "itself",
    "they",
    "them",
    "their",
    "theirs",
    "themselves",
    "what",
    "which",
    "who",
    "whom",
    "this",
    "that",
    "these",
    "those",
    "a",
    "an",
    "the",
    "us",
    // auxiliaries and common verbs
    "am",
    "is",
    "are",
    "was",
    "were",
    "be",
    "been",
    "being",
    "have",
    "has",
    "had",
    "having",
    "do",
    "does",
    "did",
    "doing",
    "can",
    "will",
    "shall",
    "would",
    "could",
    "might",
    "must",
    "ought",
    "should",
    "just",
    "now",
    // conjunctions and prepositions
    "and",
    "but",
    "if",
    "or",
    "because",
    "as",
    "until",
    "while",
    "of",
    "at",
    "by",
    "for",
    "with",
    "about",
    "against",
    "between",
    "into",
    "through",
    "during",
    "before",
    "after",
    "above",
    "below",
    "to",
    "from",
    "up",
    "down",
    "in",
    "out",
    "on",
    "off",
    "over",
    "under",
    "again",
    "further",
    "then",
    "once",
    "here",
    "there",
    "when",
    "where",
    "why",
    "how",
    "onto",
    "upon",
    "among",
    "within",
    "without",
    "across",
    "behind",
    "beyond",
    "despite",
    "toward",
    "towards",
    "via",
    // quantifiers and misc
    "all",
    "any",
    "both",
    "each",
    "few",
    "more",
    "most",
    "other",
    "some",
    "such",
    "no",
    "nor",
    "not",
    "only",
    "own",
    "same",
    "so",
    "than",
    "too",
    "very",
    // apostrophe-stripped contractions
    "dont",
    "doesnt",
    "didnt",
    "wont",
    "wouldnt",
    "couldnt",
    "shouldnt",
    "cant",
    "cannot",
    "isnt",
    "arent",
    "wasnt",
    "werent",
    "hasnt",
    "havent",
    "hadnt",
    "aint",
    "shant",
    "mightnt",
    "mustnt",
    "neednt",
    "youre",
    "youve",
    "youll",
    "youd",
    "shes",
    "hes",
    "im",
    "ive",
    "id",
    "thats",
    "thatll",
    "theyre",
    "theyve",
    "weve",
    "theres",
    "whats",
    "whos",
    "lets",
    "shouldve",
    "couldve",
    "wouldve",
];
