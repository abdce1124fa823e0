//! `MVNC` checkpoints.
//!
//! Layout, all integers little-endian: magic, `u32` version, `u32` float
//! width (64), variant tag (`u32` length + bytes), `u32` parameter count,
//! then per parameter its name (`u32` length + bytes), `u32` rank, `u32`
//! dims and `f64` payload. Tagged trailing sections follow as a 4-byte tag,
//! a `u64` length and the body, closed by an `END.` tag.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::params::ParamSet;
use crate::tensor::Tensor;
use crate::trainer::Adadelta;
use crate::variant::Variant;

pub const MAGIC: &[u8; 4] = b"MVNC";
pub const VERSION: u32 = 1;
const FLOAT_BITS: u32 = 64;

const TAG_ITER: &[u8; 4] = b"ITER";
const TAG_CONF: &[u8; 4] = b"CONF";
const TAG_OPTIM: &[u8; 4] = b"OPTM";
const TAG_RNG: &[u8; 4] = b"RNGS";
const TAG_END: &[u8; 4] = b"END.";

/// Position of a ChaCha stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub variant: Variant,
    pub gate_fix: bool,
    pub params: ParamSet,
    pub optimizer: Option<Adadelta>,
    pub iteration: u64,
    pub rng: Option<RngState>,
}

impl Checkpoint {
    pub fn new(variant: Variant, params: ParamSet) -> Self {
        Self {
            variant,
            gate_fix: false,
            params,
            optimizer: None,
            iteration: 0,
            rng: None,
        }
    }

    /// Model dimensions recovered from parameter shapes.
    pub fn model_config(&self) -> Result<ModelConfig> {
        let shape = |name: &str| -> Result<Vec<usize>> { Ok(self.params.get(name)?.shape().to_vec()) };
        let src = shape("src_emb")?;
        let tgt = shape("tgt_emb")?;
        let d_h = shape("dec.W_init")?[0];
        let variational = self.variant.is_variational();
        let d_z = if variational { shape("prior.W_z1")?[0] } else { 1 };
        let (d_pi, d_fc7) = if self.variant.uses_image() {
            let w = shape("img.W_pi")?;
            (w[0], w[1])
        } else {
            (self.variant.default_dim_pic(), 4096)
        };
        let cfg = ModelConfig {
            variant: self.variant,
            d_h,
            d_emb: src[0],
            d_z,
            d_pi,
            d_fc7,
            src_vocab: src[1],
            tgt_vocab: tgt[1],
            gate_fix: self.gate_fix,
            latent_bypass: self.params.contains("dec.gru2.V.z"),
        };
        self.check_model(&cfg)?;
        Ok(cfg)
    }

    /// Names every missing, extra or misshapen parameter relative to `cfg`.
    pub fn check_model(&self, cfg: &ModelConfig) -> Result<()> {
        self.params.check_against(&cfg.param_specs())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION);
        w.u32(FLOAT_BITS);
        w.str(self.variant.tag());
        w.u32(self.params.len() as u32);
        for (name, t) in self.params.iter() {
            w.str(name);
            w.u32(t.rank() as u32);
            for &d in t.shape() {
                w.u32(d as u32);
            }
            w.f64s(t.data());
        }

        w.section(TAG_ITER, &self.iteration.to_le_bytes());
        w.section(TAG_CONF, format!("gate_fix={}\n", self.gate_fix).as_bytes());
        if let Some(opt) = &self.optimizer {
            let mut body = Writer(Vec::new());
            body.f64s(&[opt.rho, opt.eps, opt.lr]);
            body.u32(opt.square_avg.len() as u32);
            for (name, sq) in &opt.square_avg {
                let acc = opt.acc_delta.get(name).map_or(&[][..], Vec::as_slice);
                body.str(name);
                body.u32(sq.len() as u32);
                body.f64s(sq);
                body.f64s(acc);
            }
            w.section(TAG_OPTIM, &body.0);
        }
        if let Some(rng) = &self.rng {
            let mut body = rng.seed.to_vec();
            body.extend_from_slice(&rng.stream.to_le_bytes());
            body.extend_from_slice(&rng.word_pos.to_le_bytes());
            w.section(TAG_RNG, &body);
        }
        w.0.extend_from_slice(TAG_END);
        w.0
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(r.format("missing MVNC magic"));
        }
        r.pos = 4;
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.format(&format!("unsupported version {version}")));
        }
        let bits = r.u32()?;
        if bits != FLOAT_BITS {
            return Err(r.format(&format!("unsupported float width {bits}")));
        }
        let tag = r.str()?;
        let variant: Variant = tag.parse().map_err(|_| r.format(&format!("unknown variant `{tag}`")))?;
        let count = r.u32()?;
        let mut params = ParamSet::new();
        for _ in 0..count {
            let name = r.str()?;
            let rank = r.u32()? as usize;
            if rank == 0 || rank > 4 {
                return Err(r.format(&format!("parameter {name} has rank {rank}")));
            }
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let data = r.f64s(n)?;
            let t = Tensor::new(shape, data).map_err(|e| r.format(&e.to_string()))?;
            if params.insert(&name, t).is_some() {
                return Err(r.format(&format!("duplicate parameter {name}")));
            }
        }

        let mut ckpt = Checkpoint::new(variant, params);
        loop {
            let tag: [u8; 4] = r.take(4)?.try_into().unwrap();
            if &tag == TAG_END {
                break;
            }
            let len = r.u64()? as usize;
            let body = r.take(len)?;
            let mut s = Reader { bytes: body, pos: 0, path };
            match &tag {
                TAG_ITER => ckpt.iteration = s.u64()?,
                TAG_CONF => {
                    let text = std::str::from_utf8(body).map_err(|_| r.format("config section is not UTF-8"))?;
                    for line in text.lines() {
                        match line.split_once('=') {
                            Some(("gate_fix", v)) => {
                                ckpt.gate_fix = v.parse().map_err(|_| r.format("bad gate_fix value"))?
                            }
                            _ => return Err(r.format(&format!("unknown config entry `{line}`"))),
                        }
                    }
                    s.pos = body.len();
                }
                TAG_OPTIM => {
                    let h = s.f64s(3)?;
                    let mut opt = Adadelta::new(h[0], h[1], h[2]);
                    for _ in 0..s.u32()? {
                        let name = s.str()?;
                        let n = s.u32()? as usize;
                        opt.square_avg.insert(name.clone(), s.f64s(n)?);
                        opt.acc_delta.insert(name, s.f64s(n)?);
                    }
                    ckpt.optimizer = Some(opt);
                }
                TAG_RNG => {
                    let seed: [u8; 32] = s.take(32)?.try_into().unwrap();
                    let stream = s.u64()?;
                    let word_pos = u128::from_le_bytes(s.take(16)?.try_into().unwrap());
                    ckpt.rng = Some(RngState { seed, stream, word_pos });
                }
                // unknown sections are skipped for forward compatibility
                _ => continue,
            }
            if s.pos != body.len() {
                return Err(r.integrity(&format!("section {} has trailing bytes", String::from_utf8_lossy(&tag))));
            }
        }
        if r.pos != bytes.len() {
            return Err(r.integrity("bytes after the end marker"));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        super::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }

    fn f64s(&mut self, v: &[f64]) {
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }

    fn section(&mut self, tag: &[u8; 4], body: &[u8]) {
        self.0.extend_from_slice(tag);
        self.0.extend_from_slice(&(body.len() as u64).to_le_bytes());
        self.0.extend_from_slice(body);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn format(&self, msg: &str) -> Error {
        Error::Format {
            path: self.path.into(),
            msg: msg.into(),
        }
    }

    fn integrity(&self, msg: &str) -> Error {
        Error::Integrity {
            path: self.path.into(),
            msg: msg.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.integrity(&format!(
                "truncated: needed {n} bytes at offset {}, {} left",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| self.format("name is not UTF-8"))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = n
            .checked_mul(8)
            .ok_or_else(|| self.integrity("payload length overflows"))?;
        let raw = self.take(bytes)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}
