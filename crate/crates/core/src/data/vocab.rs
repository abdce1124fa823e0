use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use crate::error::{Error, Result};

pub const EOS: u32 = 0;
pub const UNK: u32 = 1;
pub const EOS_WORD: &str = "<eos>";
pub const UNK_WORD: &str = "<unk>";

/// Word/id mapping with `<eos>` = 0 and `<unk>` = 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Vocabulary over the reserved entries followed by `words` in order.
    pub fn from_words<I: IntoIterator<Item = String>>(words: I) -> Result<Self> {
        let mut all = vec![EOS_WORD.to_string(), UNK_WORD.to_string()];
        all.extend(words);
        let mut index = HashMap::with_capacity(all.len());
        for (i, w) in all.iter().enumerate() {
            if index.insert(w.clone(), i as u32).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary entry `{w}`")));
            }
        }
        Ok(Self { words: all, index })
    }

    /// Ranks whitespace tokens by frequency, then lexicographically, and
    /// keeps the top `max_size - 2`.
    pub fn build<'a, I: IntoIterator<Item = &'a str>>(lines: I, max_size: usize) -> Result<Self> {
        if max_size < 2 {
            return Err(Error::Config(format!("vocabulary size {max_size} leaves no room for <eos> and <unk>")));
        }
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for line in lines {
            for tok in line.split_ascii_whitespace() {
                *counts.entry(tok).or_default() += 1;
            }
        }
        if counts.is_empty() {
            return Err(Error::Data("cannot build a vocabulary from an empty corpus".into()));
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        Self::from_words(
            ranked
                .into_iter()
                .filter(|(w, _)| *w != EOS_WORD && *w != UNK_WORD)
                .take(max_size - 2)
                .map(|(w, _)| w.to_string()),
        )
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, word: &str) -> u32 {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    pub fn word(&self, id: u32) -> &str {
        self.words.get(id as usize).map_or(UNK_WORD, String::as_str)
    }

    /// Token ids of `line` with `<eos>` appended.
    pub fn encode(&self, line: &str) -> Vec<u32> {
        let mut ids: Vec<u32> = line.split_ascii_whitespace().map(|t| self.id(t)).collect();
        ids.push(EOS);
        ids
    }

    /// Space-joined words up to the first `<eos>`.
    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter()
            .take_while(|&&id| id != EOS)
            .map(|&id| self.word(id))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// One word per line in id order, reserved entries included.
    pub fn save(&self, path: &Path) -> Result<()> {
        super::write_lines(path, &self.words)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let lines = super::read_lines(path)?;
        if lines.len() < 2 || lines[0] != EOS_WORD || lines[1] != UNK_WORD {
            return Err(Error::Format {
                path: path.into(),
                msg: "vocabulary must start with <eos> and <unk>".into(),
            });
        }
        Self::from_words(lines.into_iter().skip(2))
    }
}

pub fn build_vocab(path: &Path, max_size: usize) -> Result<Vocabulary> {
    let lines = super::read_lines(path)?;
    Vocabulary::build(lines.iter().map(String::as_str), max_size)
}
