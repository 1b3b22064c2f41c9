use std::collections::HashMap;

use super::{example_tokens, PipelineError};
use crate::codec::sha256_hex;
use crate::corpus::{load_examples, Split, TaskDescriptor};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const SEP: u32 = 3;
pub const SPECIAL_TOKENS: [&str; 4] = ["<pad>", "<unk>", "<cls>", "<sep>"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Vocabulary { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, index: u32) -> Option<&str> {
        self.tokens.get(index as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line, in index order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, String> {
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        if tokens.len() < SPECIAL_TOKENS.len() || tokens[..4] != SPECIAL_TOKENS {
            return Err("vocabulary must start with the special tokens".to_string());
        }
        let vocab = Vocabulary::from_tokens(tokens);
        if vocab.index.len() != vocab.tokens.len() {
            return Err("duplicate token in vocabulary".to_string());
        }
        Ok(vocab)
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.to_text().as_bytes())
    }
}

/// Ranks tokens by descending frequency, ties broken lexicographically, and
/// keeps the top `max_size` after the four special tokens.
pub fn build_vocab<I>(sequences: I, max_size: usize) -> Result<Vocabulary, PipelineError>
where
    I: IntoIterator,
    I::Item: IntoIterator,
    <I::Item as IntoIterator>::Item: AsRef<str>,
{
    let mut counts: HashMap<String, u64> = HashMap::new();
    for seq in sequences {
        for tok in seq {
            let tok = tok.as_ref();
            if SPECIAL_TOKENS.contains(&tok) {
                continue;
            }
            match counts.get_mut(tok) {
                Some(c) => *c += 1,
                None => {
                    counts.insert(tok.to_string(), 1);
                }
            }
        }
    }
    if counts.is_empty() {
        return Err(PipelineError::EmptyCorpus);
    }
    let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
    ranked.sort_by(|(ta, ca), (tb, cb)| cb.cmp(ca).then_with(|| ta.cmp(tb)));
    let tokens = SPECIAL_TOKENS
        .iter()
        .map(|s| s.to_string())
        .chain(ranked.into_iter().take(max_size).map(|(t, _)| t))
        .collect();
    Ok(Vocabulary::from_tokens(tokens))
}

/// Vocabulary over the training splits of `tasks`.
pub fn build_vocab_for_tasks<'a>(
    tasks: impl IntoIterator<Item = &'a TaskDescriptor>,
    max_size: usize,
) -> Result<Vocabulary, PipelineError> {
    let mut sequences = Vec::new();
    for desc in tasks {
        for ex in load_examples(desc, Split::Train)? {
            sequences.extend(example_tokens(desc.task_type, &ex));
        }
    }
    build_vocab(sequences, max_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::tokenize;

    #[test]
    fn frequency_order_with_specials_first() {
        let v = build_vocab([tokenize("a a b")], 10).unwrap();
        assert_eq!(v.tokens(), ["<pad>", "<unk>", "<cls>", "<sep>", "a", "b"]);
    }

    #[test]
    fn truncation_maps_rare_tokens_to_unk() {
        let v = build_vocab([tokenize("a a b")], 1).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.index_of("b"), UNK);
    }

    #[test]
    fn ties_break_lexicographically() {
        let v = build_vocab([tokenize("y x")], 10).unwrap();
        assert_eq!(v.index_of("x"), 4);
        assert_eq!(v.index_of("y"), 5);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(build_vocab([tokenize("  ")], 10), Err(PipelineError::EmptyCorpus)));
    }

    #[test]
    fn text_round_trip() {
        let v = build_vocab([tokenize("the cat . the")], 10).unwrap();
        assert_eq!(Vocabulary::from_text(&v.to_text()).unwrap(), v);
        assert!(Vocabulary::from_text("a\nb\n").is_err());
    }
}
