//! Token and POS vocabularies.

use std::collections::HashMap;
use std::path::Path;

use crate::error::ModelError;
use crate::table::{Corpus, Split};

use super::params::{ParamId, ParameterStore};

pub const UNK: usize = 0;

/// Index 0 is reserved for unknown words.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn from_words<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        let mut v = Self { words: vec!["<unk>".into()], index: HashMap::new() };
        for w in words {
            if !v.index.contains_key(w) {
                v.index.insert(w.to_string(), v.words.len());
                v.words.push(w.to_string());
            }
        }
        v
    }

    /// Train-split question tokens, then every column-name token, in
    /// first-seen order.
    pub fn build(corpus: &Corpus) -> Self {
        let q = corpus.split(Split::Train).flat_map(|e| e.question.tokens.iter().map(|t| t.text.as_str()));
        let cols = corpus.tables.values().flat_map(|t| t.columns.iter().flat_map(|c| c.name_tokens.iter().map(String::as_str)));
        Self::from_words(q.chain(cols))
    }

    /// POS tags seen on train tokens.
    pub fn build_pos(corpus: &Corpus) -> Self {
        Self::from_words(corpus.split(Split::Train).flat_map(|e| e.question.tokens.iter().filter_map(|t| t.pos.as_deref())))
    }

    pub fn id(&self, w: &str) -> usize {
        self.index.get(w).copied().unwrap_or(UNK)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.len() <= 1
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }
}

/// Overwrites embedding rows from `word f1 f2 ...` lines. Words outside
/// the vocabulary are ignored; returns how many rows were set.
pub fn load_embeddings(path: &Path, vocab: &Vocab, store: &mut ParameterStore, table: ParamId) -> Result<usize, ModelError> {
    let text = std::fs::read_to_string(path)?;
    let dim = store.get(table).cols;
    let mut set = 0;
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| ModelError::Embeddings { line: no + 1, message };
        let mut it = line.split_whitespace();
        let word = it.next().unwrap();
        let vals = it
            .map(|x| x.parse::<f64>().map_err(|_| err(format!("bad number `{x}`"))))
            .collect::<Result<Vec<_>, _>>()?;
        if vals.len() != dim {
            return Err(err(format!("expected {dim} values, found {}", vals.len())));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(err("non-finite value".into()));
        }
        let id = vocab.id(word);
        if id == UNK && word != vocab.word(UNK) {
            continue;
        }
        let t = store.get_mut(table);
        t.data[id * dim..(id + 1) * dim].copy_from_slice(&vals);
        set += 1;
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::Init;
    use crate::rng::SplitMix64;

    #[test]
    fn unknown_words_map_to_unk() {
        let v = Vocab::from_words(["a", "b", "a"]);
        assert_eq!(v.len(), 3);
        assert_eq!(v.id("b"), 2);
        assert_eq!(v.id("zzz"), UNK);
    }

    #[test]
    fn loader_overwrites_rows() {
        let v = Vocab::from_words(["cat", "dog"]);
        let mut s = ParameterStore::new();
        let id = s.add("e", 3, 2, Init::Uniform(0.1), &mut SplitMix64::new(1));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.txt");
        std::fs::write(&p, "dog 1 2\nbird 3 4\n").unwrap();
        assert_eq!(load_embeddings(&p, &v, &mut s, id).unwrap(), 1);
        assert_eq!(s.get(id).row(2), &[1.0, 2.0]);
        std::fs::write(&p, "dog 1\n").unwrap();
        assert!(matches!(load_embeddings(&p, &v, &mut s, id), Err(ModelError::Embeddings { line: 1, .. })));
    }
}
