//! Browser bindings: a KL explorer, a BLEU breakdown and a copy-task model
//! that trains in the page and shows its attention.

use mvnmt_core::data::synthetic::{gen_synthetic, ImageMode, SyntheticSpec, Task};
use mvnmt_core::data::vocab::Vocabulary;
use mvnmt_core::inferrer::GaussianDiag;
use mvnmt_core::metrics::{token_accuracy, BleuStats};
use mvnmt_core::model::{self, Example, ModelConfig};
use mvnmt_core::params::ParamSet;
use mvnmt_core::trainer::{validation_loss, Adadelta, Dataset, SentencePair, TrainingConfig};
use mvnmt_core::translate::{translate, BeamOptions};
use mvnmt_core::{Graph, Variant};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// `KL(q || p)` for diagonal Gaussians given as means and log variances.
pub fn kl(mu_q: &[f64], lv_q: &[f64], mu_p: &[f64], lv_p: &[f64]) -> Result<f64, String> {
    let q = GaussianDiag::new(mu_q.to_vec(), lv_q.to_vec()).map_err(|e| e.to_string())?;
    let p = GaussianDiag::new(mu_p.to_vec(), lv_p.to_vec()).map_err(|e| e.to_string())?;
    q.kl(&p).map_err(|e| e.to_string())
}

/// Monte Carlo estimate of the same KL: `[estimate, standard error]`.
pub fn kl_sampled(mu_q: &[f64], lv_q: &[f64], mu_p: &[f64], lv_p: &[f64], samples: usize, seed: u64) -> Result<[f64; 2], String> {
    let q = GaussianDiag::new(mu_q.to_vec(), lv_q.to_vec()).map_err(|e| e.to_string())?;
    let p = GaussianDiag::new(mu_p.to_vec(), lv_p.to_vec()).map_err(|e| e.to_string())?;
    let c = mvnmt_core::checks::kl_monte_carlo(&q, &p, samples.max(2), &mut ChaCha8Rng::seed_from_u64(seed))
        .map_err(|e| e.to_string())?;
    Ok([c.estimate, c.std_err])
}

#[wasm_bindgen(js_name = klDivergence)]
pub fn kl_js(mu_q: &[f64], lv_q: &[f64], mu_p: &[f64], lv_p: &[f64]) -> Result<f64, JsError> {
    kl(mu_q, lv_q, mu_p, lv_p).map_err(js_err)
}

#[wasm_bindgen(js_name = klMonteCarlo)]
pub fn kl_sampled_js(mu_q: &[f64], lv_q: &[f64], mu_p: &[f64], lv_p: &[f64], samples: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    kl_sampled(mu_q, lv_q, mu_p, lv_p, samples, seed).map(|r| r.to_vec()).map_err(js_err)
}

/// BLEU ingredients for a whitespace-tokenized corpus, one sentence per line.
#[wasm_bindgen]
#[derive(Clone, Debug, PartialEq)]
pub struct BleuReport {
    stats: BleuStats,
    token_acc: f64,
}

#[wasm_bindgen]
impl BleuReport {
    pub fn bleu(&self) -> f64 {
        self.stats.bleu()
    }

    pub fn precisions(&self) -> Vec<f64> {
        self.stats.precisions().to_vec()
    }

    pub fn matches(&self) -> Vec<u32> {
        self.stats.matches.iter().map(|&m| m as u32).collect()
    }

    pub fn totals(&self) -> Vec<u32> {
        self.stats.totals.iter().map(|&m| m as u32).collect()
    }

    #[wasm_bindgen(js_name = brevityPenalty)]
    pub fn brevity_penalty(&self) -> f64 {
        self.stats.brevity_penalty()
    }

    #[wasm_bindgen(js_name = hypLen)]
    pub fn hyp_len(&self) -> usize {
        self.stats.hyp_len
    }

    #[wasm_bindgen(js_name = refLen)]
    pub fn ref_len(&self) -> usize {
        self.stats.ref_len
    }

    #[wasm_bindgen(js_name = tokenAccuracy)]
    pub fn token_accuracy(&self) -> f64 {
        self.token_acc
    }
}

pub fn bleu_report(hyp: &str, reference: &str) -> Result<BleuReport, String> {
    let split = |s: &str| -> Vec<Vec<String>> {
        s.lines().map(|l| l.split_ascii_whitespace().map(str::to_string).collect()).collect()
    };
    let (hyps, refs) = (split(hyp), split(reference));
    let stats = mvnmt_core::metrics::corpus_stats(&hyps, &refs).map_err(|e| e.to_string())?;
    let token_acc = token_accuracy(&hyps, &refs).map_err(|e| e.to_string())?;
    Ok(BleuReport { stats, token_acc })
}

#[wasm_bindgen(js_name = bleuReport)]
pub fn bleu_report_js(hyp: &str, reference: &str) -> Result<BleuReport, JsError> {
    bleu_report(hyp, reference).map_err(js_err)
}

/// One decoded sentence with its attention matrix, row-major
/// `[output token][source position]`.
#[wasm_bindgen]
#[derive(Clone, Debug, PartialEq)]
pub struct Translation {
    source: Vec<String>,
    words: Vec<String>,
    attention: Vec<f64>,
    log_prob: f64,
}

#[wasm_bindgen]
impl Translation {
    /// Source tokens including the closing `<eos>`.
    pub fn source(&self) -> Vec<String> {
        self.source.clone()
    }

    /// Output tokens including `<eos>` when the hypothesis finished.
    pub fn words(&self) -> Vec<String> {
        self.words.clone()
    }

    pub fn attention(&self) -> Vec<f64> {
        self.attention.clone()
    }

    #[wasm_bindgen(js_name = logProb)]
    pub fn log_prob(&self) -> f64 {
        self.log_prob
    }
}

/// A small VNMT model trained on a synthetic task inside the page.
#[wasm_bindgen]
pub struct TaskModel {
    cfg: ModelConfig,
    params: ParamSet,
    opt: Adadelta,
    rng: ChaCha8Rng,
    src_vocab: Vocabulary,
    tgt_vocab: Vocabulary,
    train: Dataset,
    valid: Dataset,
    order: Vec<usize>,
    cursor: usize,
    batch_size: usize,
    iterations: usize,
}

fn dataset(src: &[String], tgt: &[String], sv: &Vocabulary, tv: &Vocabulary) -> Dataset {
    let pairs = src
        .iter()
        .zip(tgt)
        .map(|(s, t)| SentencePair {
            source: sv.encode(s),
            target: tv.encode(t),
            image: None,
        })
        .collect();
    Dataset {
        pairs,
        features: Vec::new(),
    }
}

impl TaskModel {
    pub fn create(task: &str, vocab_size: usize, seed: u64) -> Result<Self, String> {
        let task: Task = task.parse().map_err(|e: mvnmt_core::Error| e.to_string())?;
        let corpus = gen_synthetic(&SyntheticSpec {
            task,
            vocab_size,
            size: 300,
            image_mode: ImageMode::Random,
            feature_dim: vocab_size,
            seed,
        })
        .map_err(|e| e.to_string())?;
        let sv = Vocabulary::build(corpus.train.source.iter().map(String::as_str), usize::MAX).map_err(|e| e.to_string())?;
        let tv = Vocabulary::build(corpus.train.target.iter().map(String::as_str), usize::MAX).map_err(|e| e.to_string())?;
        let tc = TrainingConfig {
            dim: 32,
            dim_word: 16,
            dimv: 8,
            batch_size: 16,
            seed,
            ..TrainingConfig::new(Variant::Vnmt)
        };
        let cfg = tc.model(sv.len(), tv.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = cfg.init_params(tc.init_std, &mut rng);
        let train = dataset(&corpus.train.source, &corpus.train.target, &sv, &tv);
        let valid = dataset(&corpus.valid.source, &corpus.valid.target, &sv, &tv);
        let order = (0..train.len()).collect();
        Ok(Self {
            cfg,
            params,
            opt: Adadelta::new(tc.rho, tc.eps, tc.lr),
            rng,
            src_vocab: sv,
            tgt_vocab: tv,
            train,
            valid,
            order,
            cursor: usize::MAX,
            batch_size: tc.batch_size,
            iterations: 0,
        })
    }

    /// Runs `steps` updates and returns their mean training loss.
    pub fn run(&mut self, steps: usize) -> Result<f64, String> {
        let mut total = 0.0;
        for _ in 0..steps {
            if self.cursor >= self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            let end = (self.cursor + self.batch_size).min(self.order.len());
            let batch: Vec<Example<'_>> = self.order[self.cursor..end].iter().map(|&i| self.train.example(i)).collect();
            self.cursor = end;
            let noise: Vec<Vec<f64>> = (0..batch.len())
                .map(|_| (0..self.cfg.d_z).map(|_| StandardNormal.sample(&mut self.rng)).collect())
                .collect();
            let mut g = Graph::new();
            let loss = model::batch_loss(&mut g, &self.params, &self.cfg, &batch, &noise, 0.0).map_err(|e| e.to_string())?;
            total += g.value(loss).item();
            let grads = g.backward(loss).map_err(|e| e.to_string())?;
            self.opt.step(&mut self.params, &grads).map_err(|e| e.to_string())?;
            self.iterations += 1;
        }
        Ok(total / steps.max(1) as f64)
    }

    pub fn validation(&self) -> Result<f64, String> {
        validation_loss(&self.params, &self.cfg, &self.valid).map_err(|e| e.to_string())
    }

    pub fn decode(&self, source: &str, beam: usize) -> Result<Translation, String> {
        let ids = self.src_vocab.encode(source);
        let opts = BeamOptions {
            beam_size: beam.max(1),
            max_len: 2 * ids.len() + 2,
            length_normalize: false,
        };
        let hyp = translate(&self.params, &self.cfg, &ids, opts).map_err(|e| e.to_string())?;
        Ok(Translation {
            source: ids.iter().map(|&i| self.src_vocab.word(i).to_string()).collect(),
            words: hyp.tokens.iter().map(|&i| self.tgt_vocab.word(i).to_string()).collect(),
            attention: hyp.attention.concat(),
            log_prob: hyp.log_prob,
        })
    }

    pub fn sample_sources(&self, n: usize) -> Vec<String> {
        self.valid
            .pairs
            .iter()
            .take(n)
            .map(|p| self.src_vocab.decode(&p.source))
            .collect()
    }
}

#[wasm_bindgen]
impl TaskModel {
    /// `task` is one of `copy`, `reverse`, `lexical-map`.
    #[wasm_bindgen(constructor)]
    pub fn new(task: &str, vocab_size: usize, seed: u64) -> Result<TaskModel, JsError> {
        Self::create(task, vocab_size, seed).map_err(js_err)
    }

    pub fn train(&mut self, steps: usize) -> Result<f64, JsError> {
        self.run(steps).map_err(js_err)
    }

    #[wasm_bindgen(js_name = validationLoss)]
    pub fn validation_loss(&self) -> Result<f64, JsError> {
        self.validation().map_err(js_err)
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    #[wasm_bindgen(js_name = translate)]
    pub fn translate_js(&self, source: &str, beam: usize) -> Result<Translation, JsError> {
        self.decode(source, beam).map_err(js_err)
    }

    /// Validation sources to try.
    pub fn examples(&self, n: usize) -> Vec<String> {
        self.sample_sources(n)
    }
}
