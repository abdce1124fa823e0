use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mvnmt_core::checks;
use mvnmt_core::data::checkpoint::Checkpoint;
use mvnmt_core::data::config::RunConfig;
use mvnmt_core::data::corpus::{encode_corpus, load_dataset, SplitPaths};
use mvnmt_core::data::synthetic::{self, ImageMode, SyntheticSpec, Task};
use mvnmt_core::data::vocab::{build_vocab, Vocabulary};
use mvnmt_core::data::{read_lines, write_atomic, write_lines};
use mvnmt_core::metrics::{self, SentenceScore};
use mvnmt_core::trainer::{self, curve_csv};
use mvnmt_core::translate::{self, BeamOptions, DEFAULT_BEAM};
use mvnmt_core::{Error, Variant};

/// Exit status for a check that ran but did not pass.
const EXIT_CHECK_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "mvnmt", version, about = "Variational multimodal neural machine translation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic parallel corpus with image features.
    GenSynthetic(GenArgs),
    /// Build a frequency-ranked vocabulary from a corpus file.
    BuildVocab(VocabArgs),
    /// Train a model from a key=value run configuration.
    Train(TrainArgs),
    /// Translate a source file with beam search.
    Translate(TranslateArgs),
    /// Score hypotheses against references.
    Evaluate(EvalArgs),
    /// Compare analytic and finite-difference gradients on a toy model.
    GradCheck(GradArgs),
    /// Compare the analytic KL term with Monte Carlo estimates.
    KlCheck(KlArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "copy")]
    task: Task,
    #[arg(long, default_value_t = 12)]
    vocab_size: usize,
    #[arg(long, default_value_t = 500)]
    size: usize,
    #[arg(long, default_value = "correlated")]
    image_mode: ImageMode,
    #[arg(long, default_value_t = 64)]
    feature_dim: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VocabArgs {
    input: PathBuf,
    #[arg(long, default_value_t = 30000)]
    max_size: usize,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint whose parameters seed the new model by name.
    #[arg(long)]
    init_from: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TranslateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Source sentences, one per line.
    #[arg(long)]
    input: PathBuf,
    /// Defaults to `src.vocab` next to the checkpoint.
    #[arg(long)]
    src_vocab: Option<PathBuf>,
    /// Defaults to `tgt.vocab` next to the checkpoint.
    #[arg(long)]
    tgt_vocab: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BEAM)]
    beam: usize,
    #[arg(long, default_value_t = 100)]
    max_len: usize,
    #[arg(long)]
    length_norm: bool,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Source file for the per-length report.
    #[arg(long)]
    src: Option<PathBuf>,
    /// Comma-separated bucket edges over source length.
    #[arg(long, value_delimiter = ',')]
    edges: Option<Vec<usize>>,
    /// Where to write the bucket CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradArgs {
    #[arg(long, default_value = "vnmt")]
    variant: Variant,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct KlArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    pairs: usize,
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    #[arg(long, default_value_t = 4)]
    dim: usize,
}

enum Outcome {
    Ok,
    CheckFailed,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(e) => {
            error!("{e}");
            ExitCode::from(match e {
                Error::Config(_) => 1,
                _ => 2,
            })
        }
    }
}

fn run(cmd: Command) -> Result<Outcome, Error> {
    match cmd {
        Command::GenSynthetic(a) => gen(a),
        Command::BuildVocab(a) => vocab(a),
        Command::Train(a) => train(a),
        Command::Translate(a) => translate_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::GradCheck(a) => grad_check(a),
        Command::KlCheck(a) => kl_check(a),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn gen(a: GenArgs) -> Result<Outcome, Error> {
    let corpus = synthetic::gen_synthetic(&SyntheticSpec {
        task: a.task,
        vocab_size: a.vocab_size,
        size: a.size,
        image_mode: a.image_mode,
        feature_dim: a.feature_dim,
        seed: a.seed,
    })?;
    synthetic::write_corpus(&corpus, &a.out)?;
    info!(
        "wrote {} training and {} validation pairs to {}",
        corpus.train.source.len(),
        corpus.valid.source.len(),
        a.out.display()
    );
    Ok(Outcome::Ok)
}

fn vocab(a: VocabArgs) -> Result<Outcome, Error> {
    let v = build_vocab(&a.input, a.max_size)?;
    let mut words: Vec<String> = (0..v.len() as u32).map(|i| v.word(i).to_string()).collect();
    words.push(String::new());
    emit(a.out.as_deref(), &words.join("\n"))?;
    Ok(Outcome::Ok)
}

fn load_or_build_vocab(cfg: &RunConfig, key: &str, corpus_key: &str) -> Result<Vocabulary, Error> {
    match cfg.path(key) {
        Some(p) => Vocabulary::load(&p),
        None => build_vocab(&cfg.path(corpus_key).expect("required key"), usize::MAX),
    }
}

fn train(a: TrainArgs) -> Result<Outcome, Error> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(v) = a.variant {
        cfg.set("variant", v.tag());
    }
    if let Some(s) = a.seed {
        cfg.set("seed", s.to_string());
    }
    cfg.require_paths()?;
    let tc = cfg.training()?;
    let src_vocab = load_or_build_vocab(&cfg, "src_vocab", "train_src")?;
    let tgt_vocab = load_or_build_vocab(&cfg, "tgt_vocab", "train_tgt")?;
    let split = |prefix: &str| -> [Option<PathBuf>; 4] {
        ["src", "tgt", "img", "features"].map(|k| cfg.path(&format!("{prefix}_{k}")))
    };
    let load = |paths: &[Option<PathBuf>; 4]| {
        let sp = SplitPaths {
            source: paths[0].as_deref(),
            target: paths[1].as_deref(),
            images: paths[2].as_deref(),
            features: paths[3].as_deref(),
        };
        load_dataset(&sp, &src_vocab, &tgt_vocab, tc.maxlen)
    };
    let (train_set, _) = load(&split("train"))?;
    let (valid_set, _) = load(&split("valid"))?;
    let init = a.init_from.as_deref().map(Checkpoint::load).transpose()?;
    if let Some(c) = &init {
        info!("fine-tuning {} from a {} checkpoint", tc.variant, c.variant);
    }
    let outcome = trainer::train(&tc, &train_set, &valid_set, src_vocab.len(), tgt_vocab.len(), init.as_ref())?;

    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    outcome.best.save(&a.out.join("model.ckpt"))?;
    write_atomic(&a.out.join("curve.csv"), curve_csv(&outcome.curve).as_bytes())?;
    src_vocab.save(&a.out.join("src.vocab"))?;
    tgt_vocab.save(&a.out.join("tgt.vocab"))?;
    info!(
        "{} iterations, best validation loss {:.5}{}",
        outcome.iterations,
        outcome.best_val_loss,
        if outcome.stopped_early { " (early stop)" } else { "" }
    );
    Ok(Outcome::Ok)
}

fn translate_cmd(a: TranslateArgs) -> Result<Outcome, Error> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let cfg = ckpt.model_config()?;
    let dir = a.checkpoint.parent().unwrap_or(Path::new("."));
    let src_vocab = Vocabulary::load(&a.src_vocab.unwrap_or_else(|| dir.join("src.vocab")))?;
    let tgt_vocab = Vocabulary::load(&a.tgt_vocab.unwrap_or_else(|| dir.join("tgt.vocab")))?;
    if src_vocab.len() != cfg.src_vocab || tgt_vocab.len() != cfg.tgt_vocab {
        return Err(Error::Data("vocabulary sizes do not match the checkpoint".into()));
    }
    let lines = read_lines(&a.input)?;
    let (sources, dropped) = encode_corpus(&lines, &src_vocab, usize::MAX);
    debug_assert_eq!(dropped, 0);
    let opts = BeamOptions {
        beam_size: a.beam,
        max_len: a.max_len,
        length_normalize: a.length_norm,
    };
    let hyps = translate::translate_all(&ckpt.params, &cfg, &sources, opts, a.threads)?;
    let out: Vec<String> = hyps.iter().map(|h| tgt_vocab.decode(h.words())).collect();
    match a.out {
        Some(p) => write_lines(&p, &out)?,
        None => emit(None, &out.iter().map(|l| format!("{l}\n")).collect::<String>())?,
    }
    Ok(Outcome::Ok)
}

fn tokenize(lines: &[String]) -> Vec<Vec<&str>> {
    lines.iter().map(|l| l.split_ascii_whitespace().collect()).collect()
}

fn evaluate(a: EvalArgs) -> Result<Outcome, Error> {
    let hyp_lines = read_lines(&a.hyp)?;
    let ref_lines = read_lines(&a.reference)?;
    let hyps = tokenize(&hyp_lines);
    let refs = tokenize(&ref_lines);
    let bleu = metrics::bleu_corpus(&hyps, &refs)?;
    let acc = metrics::token_accuracy(&hyps, &refs)?;
    eprintln!("BLEU {bleu:.4}  token accuracy {acc:.4}  ({} sentences)", hyps.len());
    let Some(src) = a.src else {
        return emit(a.out.as_deref(), &format!("bleu,token_acc\n{bleu:.6},{acc:.6}\n")).map(|_| Outcome::Ok);
    };
    let src_lines = read_lines(&src)?;
    let lens: Vec<usize> = tokenize(&src_lines).iter().map(Vec::len).collect();
    let longest = lens.iter().copied().max().unwrap_or(0);
    let edges = a.edges.unwrap_or_else(|| {
        let mut e: Vec<usize> = (0..=longest).step_by(10).collect();
        e.push(longest + 1);
        e.dedup();
        e
    });
    let scores: Vec<SentenceScore> = hyps.iter().zip(&refs).map(|(h, r)| SentenceScore::new(h, r)).collect();
    let rows = metrics::length_bucket_report(&scores, &lens, &edges)?;
    emit(a.out.as_deref(), &metrics::bucket_csv(&rows))?;
    Ok(Outcome::Ok)
}

fn grad_check(a: GradArgs) -> Result<Outcome, Error> {
    let report = checks::grad_check(a.variant, a.seed)?;
    print!("{report}");
    if report.passes(checks::GRAD_REL_TOL, checks::GRAD_ABS_TOL) {
        println!("{}: ok (max relative error {:.3e})", a.variant, report.max_rel_error());
        Ok(Outcome::Ok)
    } else {
        warn!("{}: gradient check failed", a.variant);
        Ok(Outcome::CheckFailed)
    }
}

fn kl_check(a: KlArgs) -> Result<Outcome, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut worst: f64 = 0.0;
    println!("pair,analytic,estimate,std_err,z");
    for i in 0..a.pairs {
        let q = checks::random_gaussian(&mut rng, a.dim);
        let p = checks::random_gaussian(&mut rng, a.dim);
        let c = checks::kl_monte_carlo(&q, &p, a.samples, &mut rng)?;
        println!("{i},{:.8},{:.8},{:.3e},{:.3}", c.analytic, c.estimate, c.std_err, c.z_score());
        worst = worst.max(c.z_score());
    }
    if worst < 3.0 {
        Ok(Outcome::Ok)
    } else {
        warn!("largest deviation {worst:.2} standard errors");
        Ok(Outcome::CheckFailed)
    }
}
