//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::trainer::TrainingConfig;
use crate::variant::Variant;

/// Keys holding file paths.
pub const PATH_KEYS: [&str; 10] = [
    "train_src",
    "train_tgt",
    "train_img",
    "train_features",
    "valid_src",
    "valid_tgt",
    "valid_img",
    "valid_features",
    "src_vocab",
    "tgt_vocab",
];

/// Keys mirroring [`TrainingConfig`].
pub const TRAINING_KEYS: [&str; 19] = [
    "variant",
    "dim",
    "dim_word",
    "dimv",
    "dim_pic",
    "dim_fc7",
    "batch_size",
    "maxlen",
    "lr",
    "decay_c",
    "seed",
    "validate_every",
    "patience",
    "max_iterations",
    "init_std",
    "rho",
    "eps",
    "gate_fix",
    "latent_bypass",
];

pub const REQUIRED_KEYS: [&str; 4] = ["train_src", "train_tgt", "valid_src", "valid_tgt"];

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunConfig {
    entries: BTreeMap<String, String>,
    base: PathBuf,
}

impl RunConfig {
    /// Parses `text`; `#` starts a comment. Relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got `{line}`", no + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !PATH_KEYS.contains(&k) && !TRAINING_KEYS.contains(&k) {
                return Err(Error::Config(format!("line {}: unknown key `{k}`", no + 1)));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", no + 1)));
            }
        }
        Ok(Self {
            entries,
            base: base.to_path_buf(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|v| self.base.join(v))
    }

    pub fn require_paths(&self) -> Result<()> {
        let missing: Vec<&str> = REQUIRED_KEYS.iter().copied().filter(|k| self.get(k).is_none()).collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("missing required keys: {}", missing.join(", "))))
        }
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| v.parse().map_err(|_| Error::Config(format!("bad value `{v}` for `{key}`"))))
            .transpose()
    }

    /// Training settings, starting from the defaults of the variant.
    pub fn training(&self) -> Result<TrainingConfig> {
        let variant: Variant = self.parsed("variant")?.unwrap_or(Variant::Vnmt);
        let mut tc = TrainingConfig::new(variant);
        macro_rules! apply {
            ($($field:ident),+) => {$(
                if let Some(v) = self.parsed(stringify!($field))? {
                    tc.$field = v;
                }
            )+};
        }
        apply!(
            dim,
            dim_word,
            dimv,
            dim_pic,
            dim_fc7,
            batch_size,
            maxlen,
            lr,
            decay_c,
            seed,
            validate_every,
            patience,
            max_iterations,
            init_std,
            rho,
            eps,
            gate_fix,
            latent_bypass
        );
        tc.validate()?;
        Ok(tc)
    }
}
