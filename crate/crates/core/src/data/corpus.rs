use std::path::Path;

use log::info;

use super::features::read_features;
use super::vocab::Vocabulary;
use crate::error::{Error, Result};
use crate::trainer::{Dataset, SentencePair};

/// One line of each aligned input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusRecord {
    pub source: String,
    pub target: String,
    pub image: Option<usize>,
}

/// Reads the aligned source, target and (optional) image-id files.
pub fn read_corpus(src: &Path, tgt: &Path, img: Option<&Path>) -> Result<Vec<CorpusRecord>> {
    let sources = super::read_lines(src)?;
    let targets = super::read_lines(tgt)?;
    let images = match img {
        Some(p) => Some(
            super::read_lines(p)?
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    l.trim().parse::<usize>().map_err(|_| {
                        Error::Data(format!("{}:{}: bad image id `{l}`", p.display(), i + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    if sources.len() != targets.len() || images.as_ref().is_some_and(|i| i.len() != sources.len()) {
        return Err(Error::Data(format!(
            "misaligned corpus: {} source, {} target, {} image lines",
            sources.len(),
            targets.len(),
            images.as_ref().map_or("no".to_string(), |i| i.len().to_string())
        )));
    }
    let mut records = Vec::with_capacity(sources.len());
    for (i, (s, t)) in sources.into_iter().zip(targets).enumerate() {
        if s.trim().is_empty() || t.trim().is_empty() {
            return Err(Error::Data(format!("line {} is empty", i + 1)));
        }
        records.push(CorpusRecord {
            source: s,
            target: t,
            image: images.as_ref().map(|v| v[i]),
        });
    }
    Ok(records)
}

/// Sequences with `<eos>` appended; lines over `maxlen` tokens are dropped.
pub fn encode_corpus(lines: &[String], vocab: &Vocabulary, maxlen: usize) -> (Vec<Vec<u32>>, usize) {
    let mut out = Vec::with_capacity(lines.len());
    let mut dropped = 0;
    for line in lines {
        let ids = vocab.encode(line);
        if ids.len() - 1 > maxlen {
            dropped += 1;
        } else {
            out.push(ids);
        }
    }
    if dropped > 0 {
        info!("dropped {dropped} sentences longer than {maxlen} tokens");
    }
    (out, dropped)
}

/// Encodes aligned records; a pair is dropped when either side is too long.
pub fn encode_pairs(
    records: &[CorpusRecord],
    src_vocab: &Vocabulary,
    tgt_vocab: &Vocabulary,
    maxlen: usize,
) -> (Vec<SentencePair>, usize) {
    let mut pairs = Vec::with_capacity(records.len());
    let mut dropped = 0;
    for r in records {
        let source = src_vocab.encode(&r.source);
        let target = tgt_vocab.encode(&r.target);
        if source.len() - 1 > maxlen || target.len() - 1 > maxlen {
            dropped += 1;
            continue;
        }
        pairs.push(SentencePair {
            source,
            target,
            image: r.image,
        });
    }
    if dropped > 0 {
        info!("dropped {dropped} pairs longer than {maxlen} tokens");
    }
    (pairs, dropped)
}

/// Paths making up one split of a corpus.
#[derive(Clone, Debug, Default)]
pub struct SplitPaths<'a> {
    pub source: Option<&'a Path>,
    pub target: Option<&'a Path>,
    pub images: Option<&'a Path>,
    pub features: Option<&'a Path>,
}

/// Reads and encodes a split, checking that every image id has features.
pub fn load_dataset(
    paths: &SplitPaths<'_>,
    src_vocab: &Vocabulary,
    tgt_vocab: &Vocabulary,
    maxlen: usize,
) -> Result<(Dataset, usize)> {
    let (Some(src), Some(tgt)) = (paths.source, paths.target) else {
        return Err(Error::Config("a split needs both source and target files".into()));
    };
    let records = read_corpus(src, tgt, paths.images)?;
    let features = match paths.features {
        Some(p) => read_features(p)?,
        None => Vec::new(),
    };
    if paths.features.is_some() && paths.images.is_none() {
        return Err(Error::Config("a feature file needs an image-id file".into()));
    }
    if let Some(bad) = records.iter().find(|r| r.image.is_some_and(|k| k >= features.len())) {
        return Err(Error::Data(format!(
            "image id {} out of range for {} feature sets",
            bad.image.unwrap_or_default(),
            features.len()
        )));
    }
    let (pairs, dropped) = encode_pairs(&records, src_vocab, tgt_vocab, maxlen);
    Ok((Dataset { pairs, features }, dropped))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlong_sentences_are_dropped() {
        let v = Vocabulary::build(["a"], 10).unwrap();
        let long = vec!["a"; 51].join(" ");
        let lines = vec![long, "a a".to_string()];
        let (enc, dropped) = encode_corpus(&lines, &v, 50);
        assert_eq!(dropped, 1);
        assert_eq!(enc, vec![vec![2, 2, 0]]);
        let exact = vec![vec!["a"; 50].join(" ")];
        assert_eq!(encode_corpus(&exact, &v, 50).1, 0);
    }

    #[test]
    fn misaligned_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let s = dir.path().join("s");
        let t = dir.path().join("t");
        std::fs::write(&s, "a\nb\n").unwrap();
        std::fs::write(&t, "a\n").unwrap();
        assert!(matches!(read_corpus(&s, &t, None), Err(Error::Data(_))));
        std::fs::write(&t, "a\nb\n").unwrap();
        let i = dir.path().join("i");
        std::fs::write(&i, "0\n").unwrap();
        assert!(read_corpus(&s, &t, Some(&i)).is_err());
        std::fs::write(&i, "0\n1\n").unwrap();
        assert_eq!(read_corpus(&s, &t, Some(&i)).unwrap()[1].image, Some(1));
    }
}
