//! Toy translation tasks with optional image features that either describe
//! the sentence or are pure noise.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::features::write_features;
use crate::error::{Error, Result};
use crate::image_encoder::ImageFeatureSet;
use crate::tensor::Tensor;

pub const MIN_LEN: usize = 2;
pub const MAX_LEN: usize = 12;
/// Object rows beyond the global one in `correlated` mode.
pub const MAX_OBJECTS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Copy,
    Reverse,
    LexicalMap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImageMode {
    Correlated,
    Random,
}

macro_rules! tagged {
    ($ty:ty, $($variant:path => $tag:literal),+) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $tag),+ })
            }
        }
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($tag => Ok($variant),)+
                    _ => Err(Error::Config(format!("unknown value `{s}`, expected one of: {}", [$($tag),+].join(", ")))),
                }
            }
        }
    };
}

tagged!(Task, Task::Copy => "copy", Task::Reverse => "reverse", Task::LexicalMap => "lexical-map");
tagged!(ImageMode, ImageMode::Correlated => "correlated", ImageMode::Random => "random");

#[derive(Clone, Debug)]
pub struct SyntheticSpec {
    pub task: Task,
    pub vocab_size: usize,
    /// Training pairs; the validation split adds `ceil(size / 30)` more.
    pub size: usize,
    pub image_mode: ImageMode,
    pub feature_dim: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Split {
    pub source: Vec<String>,
    pub target: Vec<String>,
    pub features: Vec<ImageFeatureSet>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub train: Split,
    pub valid: Split,
}

pub fn validation_size(size: usize) -> usize {
    size.div_ceil(30)
}

fn source_word(i: usize) -> String {
    format!("s{i}")
}

/// Bag-of-tokens indicator in row 0, then one-hot rows for up to
/// [`MAX_OBJECTS`] distinct tokens in order of first appearance.
pub fn correlated_features(tokens: &[usize], vocab_size: usize, dim: usize) -> Result<ImageFeatureSet> {
    if dim < vocab_size {
        return Err(Error::Config(format!("feature dim {dim} is smaller than the vocabulary ({vocab_size})")));
    }
    let mut global = vec![0.0; dim];
    let mut distinct = Vec::new();
    for &t in tokens {
        if global[t] == 0.0 {
            distinct.push(t);
        }
        global[t] = 1.0;
    }
    let mut rows = vec![global];
    for &t in distinct.iter().take(MAX_OBJECTS) {
        let mut r = vec![0.0; dim];
        r[t] = 1.0;
        rows.push(r);
    }
    ImageFeatureSet::from_rows(&rows)
}

fn random_features(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> Result<ImageFeatureSet> {
    let data = (0..rows * dim).map(|_| rng.random::<f32>() as f64).collect();
    ImageFeatureSet::new(Tensor::new(vec![rows, dim], data)?)
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    if spec.vocab_size < 3 {
        return Err(Error::Config("synthetic vocabulary needs at least 3 words".into()));
    }
    if spec.size == 0 || spec.feature_dim == 0 {
        return Err(Error::Config("corpus size and feature dim must be positive".into()));
    }
    if spec.feature_dim < spec.vocab_size {
        return Err(Error::Config(format!(
            "feature dim {} is smaller than the vocabulary ({})",
            spec.feature_dim, spec.vocab_size
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut mapping: Vec<usize> = (0..spec.vocab_size).collect();
    mapping.shuffle(&mut rng);

    // noise has its own stream so both image modes share the same sentences
    let mut noise = ChaCha8Rng::seed_from_u64(spec.seed);
    noise.set_stream(1);

    let make = |n: usize, rng: &mut ChaCha8Rng, noise: &mut ChaCha8Rng| -> Result<Split> {
        let mut split = Split::default();
        for _ in 0..n {
            let len = rng.random_range(MIN_LEN..=MAX_LEN);
            let toks: Vec<usize> = (0..len).map(|_| rng.random_range(0..spec.vocab_size)).collect();
            let target: Vec<String> = match spec.task {
                Task::Copy => toks.iter().map(|&t| source_word(t)).collect(),
                Task::Reverse => toks.iter().rev().map(|&t| source_word(t)).collect(),
                Task::LexicalMap => toks.iter().map(|&t| format!("t{}", mapping[t])).collect(),
            };
            let correlated = correlated_features(&toks, spec.vocab_size, spec.feature_dim)?;
            let features = match spec.image_mode {
                ImageMode::Correlated => correlated,
                ImageMode::Random => random_features(noise, correlated.len(), spec.feature_dim)?,
            };
            split.source.push(toks.iter().map(|&t| source_word(t)).collect::<Vec<_>>().join(" "));
            split.target.push(target.join(" "));
            split.features.push(features);
        }
        Ok(split)
    };
    let train = make(spec.size, &mut rng, &mut noise)?;
    let valid = make(validation_size(spec.size), &mut rng, &mut noise)?;
    Ok(SyntheticCorpus { train, valid })
}

/// Files written for one split.
#[derive(Clone, Debug)]
pub struct SplitFiles {
    pub source: PathBuf,
    pub target: PathBuf,
    pub images: PathBuf,
    pub features: PathBuf,
}

impl SplitFiles {
    pub fn in_dir(dir: &Path, split: &str) -> Self {
        Self {
            source: dir.join(format!("{split}.src")),
            target: dir.join(format!("{split}.tgt")),
            images: dir.join(format!("{split}.img")),
            features: dir.join(format!("{split}.mvnf")),
        }
    }
}

pub fn write_split(split: &Split, files: &SplitFiles) -> Result<()> {
    super::write_lines(&files.source, &split.source)?;
    super::write_lines(&files.target, &split.target)?;
    let ids: Vec<String> = (0..split.source.len()).map(|i| i.to_string()).collect();
    super::write_lines(&files.images, &ids)?;
    write_features(&files.features, &split.features)
}

/// Writes `train.*` and `valid.*` into `dir`.
pub fn write_corpus(corpus: &SyntheticCorpus, dir: &Path) -> Result<(SplitFiles, SplitFiles)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let train = SplitFiles::in_dir(dir, "train");
    let valid = SplitFiles::in_dir(dir, "valid");
    write_split(&corpus.train, &train)?;
    write_split(&corpus.valid, &valid)?;
    Ok((train, valid))
}
