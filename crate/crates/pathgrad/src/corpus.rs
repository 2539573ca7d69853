//! Synthetic sentiment corpus and tokenizer.
//!
//! The generator builds a 64-token vocabulary (5 specials, 5 fillers, 54
//! content words), seeds an embedding matrix, and emits balanced
//! template-based positive/negative sentences. Everything is driven by a
//! single seed so two runs with the same seed produce identical files.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TokenSequence;
use crate::store::{
    EmbeddingStore, CLS_TOKEN, MASK_TOKEN, PAD_TOKEN, SEP_TOKEN, UNK_TOKEN,
};

pub const POSITIVE_WORDS: [&str; 24] = [
    "great", "good", "wonderful", "fantastic", "amazing", "excellent", "brilliant", "delightful",
    "superb", "charming", "enjoyable", "lovely", "terrific", "outstanding", "marvelous",
    "splendid", "magnificent", "inspired", "refreshing", "captivating", "engaging", "impressive",
    "remarkable", "satisfying",
];

pub const NEGATIVE_WORDS: [&str; 24] = [
    "bad", "terrible", "horrible", "awful", "dreadful", "boring", "dull", "miserable",
    "disappointing", "dismal", "tedious", "lousy", "mediocre", "forgettable", "painful", "clumsy",
    "bland", "lifeless", "shallow", "pointless", "annoying", "unpleasant", "tiresome", "weak",
];

pub const NOUNS: [&str; 4] = ["movie", "film", "show", "story"];
pub const PUNCT: [&str; 2] = ["!", "."];
pub const FILLERS: [&str; 5] = ["such", "a", "the", "it", "was"];

/// One labeled example; start/end positions are present for the QA-style
/// variant only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusExample {
    pub text: String,
    pub label: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub end: Option<usize>,
}

/// The full 64-token vocabulary in a fixed order: specials, fillers, then
/// content words.
pub fn vocabulary() -> Vec<String> {
    let mut tokens: Vec<String> = [CLS_TOKEN, SEP_TOKEN, MASK_TOKEN, PAD_TOKEN, UNK_TOKEN]
        .iter()
        .map(|s| s.to_string())
        .collect();
    tokens.extend(FILLERS.iter().map(|s| s.to_string()));
    tokens.extend(POSITIVE_WORDS.iter().map(|s| s.to_string()));
    tokens.extend(NEGATIVE_WORDS.iter().map(|s| s.to_string()));
    tokens.extend(NOUNS.iter().map(|s| s.to_string()));
    tokens.extend(PUNCT.iter().map(|s| s.to_string()));
    tokens
}

/// Seeded embedding store over the bundled vocabulary: uniform entries in
/// (-0.5, 0.5). Training later refines these rows.
pub fn seed_embeddings(seed: u64, dim: usize) -> EmbeddingStore {
    let tokens = vocabulary();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..tokens.len())
        .map(|_| (0..dim).map(|_| rng.random_range(-0.5..0.5)).collect())
        .collect();
    EmbeddingStore::new(tokens, rows).expect("bundled vocabulary is well-formed")
}

/// Balanced synthetic sentences: ceil(n/2) positive, floor(n/2) negative.
pub fn generate_corpus(seed: u64, n_examples: usize) -> Result<Vec<CorpusExample>> {
    if n_examples < 2 {
        return Err(Error::Contract("corpus needs at least 2 examples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5eed));
    let mut examples = Vec::with_capacity(n_examples);
    for i in 0..n_examples {
        let label = if i < n_examples.div_ceil(2) { 1 } else { 0 };
        let lexicon: &[&str] = if label == 1 { &POSITIVE_WORDS } else { &NEGATIVE_WORDS };
        let adj = lexicon[rng.random_range(0..lexicon.len())];
        let noun = NOUNS[rng.random_range(0..NOUNS.len())];
        let punct = PUNCT[rng.random_range(0..PUNCT.len())];
        let text = match rng.random_range(0..5) {
            0 => format!("it was a {adj} {noun}"),
            1 => format!("such a {adj} {noun}"),
            2 => format!("the {noun} was {adj} {punct}"),
            3 => format!("a {adj} {noun} {punct}"),
            _ => format!("it was {adj} {punct}"),
        };
        examples.push(CorpusExample { text, label, start: None, end: None });
    }
    Ok(examples)
}

/// Lowercases, splits on whitespace, makes punctuation its own token, maps
/// unknown words to UNK, and wraps with CLS/SEP.
pub fn tokenize(store: &EmbeddingStore, text: &str) -> TokenSequence {
    let specials = store.specials();
    let mut ids = vec![specials.cls];
    let mut word = String::new();
    let flush = |word: &mut String, ids: &mut Vec<usize>| {
        if !word.is_empty() {
            ids.push(store.id_or_unk(word));
            word.clear();
        }
    };
    for ch in text.to_lowercase().chars() {
        if ch.is_whitespace() {
            flush(&mut word, &mut ids);
        } else if ch.is_alphanumeric() || ch == '\'' {
            word.push(ch);
        } else {
            flush(&mut word, &mut ids);
            ids.push(store.id_or_unk(&ch.to_string()));
        }
    }
    flush(&mut word, &mut ids);
    ids.push(specials.sep);
    TokenSequence { ids, text: text.to_string() }
}

/// Inverse of `tokenize` for in-vocabulary text: joins content tokens with
/// single spaces.
pub fn detokenize(store: &EmbeddingStore, sequence: &TokenSequence) -> String {
    let specials = store.specials();
    sequence
        .ids
        .iter()
        .filter(|&&id| id != specials.cls && id != specials.sep)
        .map(|&id| store.token(id))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn write_corpus(path: &Path, examples: &[CorpusExample]) -> Result<()> {
    let mut out = String::new();
    for ex in examples {
        out.push_str(&serde_json::to_string(ex)?);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_corpus(path: &Path) -> Result<Vec<CorpusExample>> {
    let content = fs::read_to_string(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
    let mut examples = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let ex: CorpusExample = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        examples.push(ex);
    }
    Ok(examples)
}

/// Tokenized + labeled corpus ready for training.
pub fn labeled_sequences(
    store: &EmbeddingStore,
    examples: &[CorpusExample],
) -> Vec<(TokenSequence, usize)> {
    examples
        .iter()
        .map(|ex| (tokenize(store, &ex.text), ex.label))
        .collect()
}
