//! `msembed`: one binary for the whole pipeline — vocabulary building,
//! baseline / multi-sense training, contextual-similarity evaluation,
//! nearest-neighbor probes, pseudoword benchmarks, batch encoding, a
//! composition-cell demo, and synthetic corpus generation.
//!
//! Exit codes: 0 success, 2 usage error, 3 I/O error, 4 validation error.

use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use multisense::composition::{rnn_encode, lstm_encode, tree_encode, BinaryTree, CompositionParams};
use multisense::corpus::{tokenize, TokenStream, Vocabulary};
use multisense::eval::{
    default_pseudoword_spec, evaluate_scws, generate_pseudoword_corpus, load_scws,
    nearest_neighbors, sense_purity, EvalError, GoldOccurrence, PairSelection,
};
use multisense::inference::{resolve, InferenceOptions, ResolveMode};
use multisense::model::{CrpConfig, ModelError, TrainConfig, TrainMode};
use multisense::synth::{
    generate_corpus_file, write_scws_fixture, ScwsFixtureConfig, SynthConfig,
};
use multisense::trainer::{Trainer, TrainerError};
use multisense::Model32;

// --- error plumbing -----------------------------------------------------------

enum AppError {
    Io(String),
    Validation(String),
}

impl AppError {
    fn code(&self) -> i32 {
        match self {
            AppError::Io(_) => 3,
            AppError::Validation(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            AppError::Io(m) | AppError::Validation(m) => m,
        }
    }
}

fn io_err(context: &str, e: impl std::fmt::Display) -> AppError {
    AppError::Io(format!("{context}: {e}"))
}

fn val_err(msg: impl Into<String>) -> AppError {
    AppError::Validation(msg.into())
}

impl From<ModelError> for AppError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Io(inner) => AppError::Io(format!("model file: {inner}")),
            other => AppError::Validation(format!("model file: {other}")),
        }
    }
}

impl From<TrainerError> for AppError {
    fn from(e: TrainerError) -> Self {
        AppError::Validation(format!("training: {e}"))
    }
}

impl From<EvalError> for AppError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io(inner) => AppError::Io(format!("evaluation input: {inner}")),
            other => AppError::Validation(format!("evaluation: {other}")),
        }
    }
}

// --- command line -------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "msembed",
    version,
    about = "Multi-sense word embeddings: train, infer, evaluate"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Count tokens in a corpus and write the frequency-ranked vocabulary.
    BuildVocab(BuildVocabArgs),
    /// Train a baseline or multi-sense embedding model.
    Train(TrainArgs),
    /// Rank-correlate model similarities with human ratings on a
    /// contextual word-similarity file.
    EvalScws(EvalScwsArgs),
    /// Nearest neighbors of a word resolved inside a probe sentence.
    Nn(NnArgs),
    /// Pseudoword benchmark: generate a substituted corpus or score a
    /// model trained on one.
    #[command(subcommand)]
    Pseudoword(PseudowordCmd),
    /// Batch-resolve sentences from stdin into vector rows on stdout.
    Encode(EncodeArgs),
    /// Run a randomly-initialized composition cell over a sentence's
    /// resolved vectors.
    ComposeDemo(ComposeDemoArgs),
    /// Generate a synthetic topic corpus.
    SynthCorpus(SynthCorpusArgs),
    /// Generate a rated word-pair fixture matching the synthetic corpus.
    SynthScws(SynthScwsArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Global,
    Greedy,
    Expectation,
    ConcatGreedy,
    ConcatExpectation,
}

impl From<ModeArg> for ResolveMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Global => ResolveMode::Global,
            ModeArg::Greedy => ResolveMode::Greedy,
            ModeArg::Expectation => ResolveMode::Expectation,
            ModeArg::ConcatGreedy => ResolveMode::ConcatGreedy,
            ModeArg::ConcatExpectation => ResolveMode::ConcatExpectation,
        }
    }
}

#[derive(Args)]
struct BuildVocabArgs {
    /// Corpus file, one sentence per line.
    #[arg(long)]
    corpus: PathBuf,
    /// Minimum occurrences for a word to enter the vocabulary.
    #[arg(long, default_value_t = 5)]
    min_count: u64,
    /// Output vocabulary file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TrainModeArg {
    Baseline,
    Multisense,
}

/// Optional overrides loaded from `--config`; any field present replaces
/// the default, and explicit flags replace both.
#[derive(Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    train: PartialTrain,
    #[serde(default)]
    crp: PartialCrp,
}

#[derive(Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialTrain {
    dim: Option<usize>,
    window: Option<usize>,
    epochs: Option<u32>,
    negatives: Option<usize>,
    lr_initial: Option<f64>,
    lr_floor: Option<f64>,
    subsample: Option<f64>,
    min_count: Option<u64>,
    seed: Option<u64>,
    workers: Option<usize>,
}

#[derive(Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialCrp {
    gamma: Option<f64>,
    temperature: Option<f64>,
    max_senses_per_word: Option<usize>,
    prune_min_count: Option<u64>,
    sense_init_noise: Option<f64>,
    burn_in: Option<bool>,
}

#[derive(Args)]
struct TrainArgs {
    /// Corpus file, one sentence per line.
    #[arg(long)]
    corpus: PathBuf,
    /// Output model file; a run report lands next to it as `<out>.run.json`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "multisense")]
    mode: TrainModeArg,
    /// JSON config file with optional `train` and `crp` sections;
    /// explicit flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Prebuilt vocabulary file (default: build from the corpus).
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Baseline model that seeds the global vectors.
    #[arg(long)]
    warmstart: Option<PathBuf>,
    /// Suppress the per-million-token progress lines.
    #[arg(long)]
    quiet: bool,

    /// Embedding width K [default: 50].
    #[arg(long)]
    dim: Option<usize>,
    /// Context tokens on each side of the center [default: 5].
    #[arg(long)]
    window: Option<usize>,
    /// Passes over the corpus [default: 3].
    #[arg(long)]
    epochs: Option<u32>,
    /// Negative samples per positive pair [default: 5].
    #[arg(long)]
    negatives: Option<usize>,
    /// Starting learning rate [default: 0.025].
    #[arg(long)]
    lr_initial: Option<f64>,
    /// Learning-rate floor of the linear decay [default: 0.0001].
    #[arg(long)]
    lr_floor: Option<f64>,
    /// Frequent-word subsampling threshold [default: 1e-4].
    #[arg(long)]
    subsample: Option<f64>,
    /// Minimum occurrences for a word to be trained [default: 5].
    #[arg(long)]
    min_count: Option<u64>,
    /// Master seed for all run randomness [default: 1].
    #[arg(long)]
    seed: Option<u64>,
    /// Trainer threads; 1 is the deterministic mode [default: 1].
    #[arg(long)]
    workers: Option<usize>,

    /// New-sense concentration gamma [default: 0.5].
    #[arg(long)]
    gamma: Option<f64>,
    /// Sense-likelihood temperature [default: 0.2].
    #[arg(long)]
    temperature: Option<f64>,
    /// Sense cap per word [default: 8].
    #[arg(long)]
    max_senses: Option<usize>,
    /// Per-epoch survival count floor, quoted per 10M tokens [default: 20].
    #[arg(long)]
    prune_min_count: Option<u64>,
    /// Noise half-width on sense spawn [default: 0.01/K].
    #[arg(long)]
    sense_noise: Option<f64>,
    /// Skip the baseline-only first epoch and let senses spawn from the
    /// start.
    #[arg(long)]
    no_burn_in: bool,
}

#[derive(Args)]
struct EvalScwsArgs {
    /// Trained model file.
    #[arg(long)]
    model: PathBuf,
    /// Rated pair file (tab-separated, `<b>`-marked contexts).
    #[arg(long)]
    scws: PathBuf,
    #[arg(long, value_enum, default_value = "expectation")]
    mode: ModeArg,
    /// Rank senses by context fit alone, ignoring assignment counts.
    #[arg(long)]
    no_counts: bool,
    /// Also write the full per-pair report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct NnArgs {
    /// Trained model file.
    #[arg(long)]
    model: PathBuf,
    /// Probe sentence providing the context.
    #[arg(long)]
    sentence: String,
    /// Word inside the sentence to resolve.
    #[arg(long)]
    target: String,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, value_enum, default_value = "greedy")]
    mode: ModeArg,
}

#[derive(Subcommand)]
enum PseudowordCmd {
    /// Pick source pairs on a baseline model and write the substituted
    /// corpus plus its gold occurrence labels.
    Generate(PwGenerateArgs),
    /// Sense-purity report for a model trained on a substituted corpus.
    Score(PwScoreArgs),
}

#[derive(Args)]
struct PwGenerateArgs {
    /// Baseline model whose global vectors gate the pair selection.
    #[arg(long)]
    model: PathBuf,
    /// Corpus to substitute (must be the one the model was trained on).
    #[arg(long)]
    corpus: PathBuf,
    /// Output path for the substituted corpus.
    #[arg(long)]
    out_corpus: PathBuf,
    /// Output path for the pair spec JSON.
    #[arg(long)]
    out_spec: PathBuf,
    /// Output path for the gold occurrence JSON.
    #[arg(long)]
    out_gold: PathBuf,
    /// Number of pseudoword pairs.
    #[arg(long, default_value_t = 20)]
    pairs: usize,
    /// Candidate frequency-rank window: lowest rank (inclusive).
    #[arg(long, default_value_t = 500)]
    rank_lo: usize,
    /// Candidate frequency-rank window: highest rank (exclusive).
    #[arg(long, default_value_t = 5000)]
    rank_hi: usize,
    /// Pair members must score below this baseline cosine.
    #[arg(long, default_value_t = 0.2)]
    max_cosine: f64,
    /// Minimum corpus occurrences per member.
    #[arg(long, default_value_t = 100)]
    min_occurrences: u64,
    /// Occurrence-share cap for the more frequent member.
    #[arg(long, default_value_t = 0.6)]
    max_share: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct PwScoreArgs {
    /// Model trained on the substituted corpus.
    #[arg(long)]
    model: PathBuf,
    /// The substituted corpus.
    #[arg(long)]
    corpus: PathBuf,
    /// Gold occurrence JSON from `pseudoword generate`.
    #[arg(long)]
    gold: PathBuf,
    /// Rank senses by context fit alone, ignoring assignment counts.
    #[arg(long)]
    no_counts: bool,
    /// Also write the report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EncodeArgs {
    /// Trained model file.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "expectation")]
    mode: ModeArg,
    /// Rank senses by context fit alone, ignoring assignment counts.
    #[arg(long)]
    no_counts: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CellArg {
    Rnn,
    Lstm,
    Tree,
}

#[derive(Args)]
struct ComposeDemoArgs {
    /// Trained model file.
    #[arg(long)]
    model: PathBuf,
    /// Sentence to encode.
    #[arg(long)]
    sentence: String,
    #[arg(long, value_enum, default_value = "lstm")]
    cell: CellArg,
    /// Sense-resolution mode for the leaf vectors.
    #[arg(long, value_enum, default_value = "expectation")]
    mode: ModeArg,
    /// Seed for the random cell parameters.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct SynthCorpusArgs {
    /// Output corpus file.
    #[arg(long)]
    out: PathBuf,
    /// Approximate token count (generation stops at the next sentence end).
    #[arg(long, default_value_t = 15_000_000)]
    tokens: u64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Leave out the ambiguous marker word (single-sense control corpus).
    #[arg(long)]
    no_marker: bool,
}

#[derive(Args)]
struct SynthScwsArgs {
    /// Output rated-pair file.
    #[arg(long)]
    out: PathBuf,
    /// Pair count per kind (same-topic / cross-topic / ambiguous).
    #[arg(long, default_value_t = 40)]
    per_kind: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Generator seed of the corpus the model was trained on.
    #[arg(long, default_value_t = 42)]
    corpus_seed: u64,
}

// --- run manifest ---------------------------------------------------------

/// Everything needed to reproduce a training run. The deterministic part
/// is embedded in the model file; the timed part goes to the sidecar
/// report, which references the model by manifest hash.
#[derive(Serialize)]
struct RunManifest {
    artifact_version: String,
    mode: String,
    seed: u64,
    corpus_path: String,
    corpus_hash: String,
    corpus_tokens: u64,
    train: TrainConfig,
    crp: CrpConfig,
}

#[derive(Serialize)]
struct RunReport {
    #[serde(flatten)]
    manifest: RunManifest,
    model_manifest_hash: String,
    wall_clock_secs: f64,
    tokens_per_sec: f64,
    senses_spawned: u64,
    senses_pruned: u64,
}

fn artifact_version() -> String {
    format!("msembed/{}", env!("CARGO_PKG_VERSION"))
}

// --- helpers --------------------------------------------------------------

fn read_lines(path: &Path) -> Result<Vec<String>, AppError> {
    let text = fs::read_to_string(path)
        .map_err(|e| io_err(&format!("reading {}", path.display()), e))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), AppError> {
    fs::write(path, bytes).map_err(|e| io_err(&format!("writing {}", path.display()), e))
}

fn load_model(path: &Path) -> Result<Model32, AppError> {
    Ok(Model32::load(path)?)
}

fn infer_opts(no_counts: bool) -> InferenceOptions {
    InferenceOptions {
        include_counts: !no_counts,
    }
}

// --- subcommand bodies ------------------------------------------------------

fn cmd_build_vocab(a: BuildVocabArgs) -> Result<(), AppError> {
    if a.min_count == 0 {
        return Err(val_err("min-count must be >= 1"));
    }
    let vocab = Vocabulary::build_from_file(&a.corpus, a.min_count).map_err(|e| {
        if matches!(e, multisense::corpus::CorpusError::Io(_)) {
            io_err(&format!("reading {}", a.corpus.display()), e)
        } else {
            val_err(format!("building vocabulary: {e}"))
        }
    })?;
    vocab
        .save(&a.out)
        .map_err(|e| io_err(&format!("writing {}", a.out.display()), e))?;
    println!(
        "vocabulary: {} types, {} tokens (min-count {}) -> {}",
        vocab.len(),
        vocab.total_tokens(),
        a.min_count,
        a.out.display()
    );
    Ok(())
}

fn layered_configs(a: &TrainArgs) -> Result<(TrainConfig, CrpConfig), AppError> {
    let mut train = TrainConfig::default();
    let mut crp = CrpConfig::default();
    if let Some(path) = &a.config {
        let text = fs::read_to_string(path)
            .map_err(|e| io_err(&format!("reading {}", path.display()), e))?;
        let file: ConfigFile = serde_json::from_str(&text)
            .map_err(|e| val_err(format!("config {}: {e}", path.display())))?;
        let t = file.train;
        train = TrainConfig {
            dim: t.dim.unwrap_or(train.dim),
            window: t.window.unwrap_or(train.window),
            epochs: t.epochs.unwrap_or(train.epochs),
            negatives: t.negatives.unwrap_or(train.negatives),
            lr_initial: t.lr_initial.unwrap_or(train.lr_initial),
            lr_floor: t.lr_floor.unwrap_or(train.lr_floor),
            subsample: t.subsample.unwrap_or(train.subsample),
            min_count: t.min_count.unwrap_or(train.min_count),
            seed: t.seed.unwrap_or(train.seed),
            workers: t.workers.unwrap_or(train.workers),
        };
        let c = file.crp;
        crp = CrpConfig {
            gamma: c.gamma.unwrap_or(crp.gamma),
            temperature: c.temperature.unwrap_or(crp.temperature),
            max_senses_per_word: c.max_senses_per_word.unwrap_or(crp.max_senses_per_word),
            prune_min_count: c.prune_min_count.unwrap_or(crp.prune_min_count),
            sense_init_noise: c.sense_init_noise.or(crp.sense_init_noise),
            burn_in: c.burn_in.unwrap_or(crp.burn_in),
        };
    }
    let train = TrainConfig {
        dim: a.dim.unwrap_or(train.dim),
        window: a.window.unwrap_or(train.window),
        epochs: a.epochs.unwrap_or(train.epochs),
        negatives: a.negatives.unwrap_or(train.negatives),
        lr_initial: a.lr_initial.unwrap_or(train.lr_initial),
        lr_floor: a.lr_floor.unwrap_or(train.lr_floor),
        subsample: a.subsample.unwrap_or(train.subsample),
        min_count: a.min_count.unwrap_or(train.min_count),
        seed: a.seed.unwrap_or(train.seed),
        workers: a.workers.unwrap_or(train.workers),
    };
    let crp = CrpConfig {
        gamma: a.gamma.unwrap_or(crp.gamma),
        temperature: a.temperature.unwrap_or(crp.temperature),
        max_senses_per_word: a.max_senses.unwrap_or(crp.max_senses_per_word),
        prune_min_count: a.prune_min_count.unwrap_or(crp.prune_min_count),
        sense_init_noise: a.sense_noise.or(crp.sense_init_noise),
        burn_in: if a.no_burn_in { false } else { crp.burn_in },
    };
    train.validate().map_err(|e| val_err(e.to_string()))?;
    crp.validate().map_err(|e| val_err(e.to_string()))?;
    Ok((train, crp))
}

fn cmd_train(a: TrainArgs) -> Result<(), AppError> {
    let (train, crp) = layered_configs(&a)?;
    let mode = match a.mode {
        TrainModeArg::Baseline => TrainMode::Baseline,
        TrainModeArg::Multisense => TrainMode::MultiSense,
    };
    let vocab = match &a.vocab {
        Some(path) => Vocabulary::load(path).map_err(|e| {
            if matches!(e, multisense::corpus::CorpusError::Io(_)) {
                io_err(&format!("reading {}", path.display()), e)
            } else {
                val_err(format!("vocabulary {}: {e}", path.display()))
            }
        })?,
        None => Vocabulary::build_from_file(&a.corpus, train.min_count).map_err(|e| {
            if matches!(e, multisense::corpus::CorpusError::Io(_)) {
                io_err(&format!("reading {}", a.corpus.display()), e)
            } else {
                val_err(format!("building vocabulary: {e}"))
            }
        })?,
    };
    let stream = TokenStream::from_file(&a.corpus, &vocab)
        .map_err(|e| io_err(&format!("reading {}", a.corpus.display()), e))?;
    let warmstart = match &a.warmstart {
        Some(path) => Some(load_model(path)?),
        None => None,
    };

    let mut trainer = Trainer::new(train.clone(), crp.clone());
    trainer.progress = !a.quiet;
    let outcome = trainer.run::<f32>(mode, &stream, &vocab, warmstart)?;
    let mut model = outcome.model;

    let manifest = RunManifest {
        artifact_version: artifact_version(),
        mode: mode.to_string(),
        seed: train.seed,
        corpus_path: a.corpus.display().to_string(),
        corpus_hash: stream.source_hash().unwrap_or("").to_string(),
        corpus_tokens: stream.token_count(),
        train: train.clone(),
        crp: crp.clone(),
    };
    model.meta.manifest_json =
        Some(serde_json::to_string(&manifest).expect("manifest serializes"));
    model.save(&a.out)?;

    let report = RunReport {
        manifest,
        model_manifest_hash: model.manifest_hash(),
        wall_clock_secs: outcome.stats.wall_secs,
        tokens_per_sec: outcome.stats.tokens_per_sec,
        senses_spawned: outcome.stats.senses_spawned,
        senses_pruned: outcome.stats.senses_pruned,
    };
    let report_path = a.out.with_extension(format!(
        "{}run.json",
        a.out
            .extension()
            .map(|e| format!("{}.", e.to_string_lossy()))
            .unwrap_or_default()
    ));
    write_file(
        &report_path,
        serde_json::to_string_pretty(&report)
            .expect("report serializes")
            .as_bytes(),
    )?;
    println!(
        "trained {} model: {} types, dim {}, {} senses | {:.1}s at {:.0} tokens/s",
        mode,
        model.vocab_len(),
        model.dim,
        model.total_senses(),
        outcome.stats.wall_secs,
        outcome.stats.tokens_per_sec
    );
    println!("model {} -> {}", model.manifest_hash(), a.out.display());
    println!("run report -> {}", report_path.display());
    Ok(())
}

fn cmd_eval_scws(a: EvalScwsArgs) -> Result<(), AppError> {
    let model = load_model(&a.model)?;
    let records = load_scws(&a.scws)?;
    let crp = model.meta.crp.clone();
    let report = evaluate_scws(
        &records,
        &model,
        &crp,
        ResolveMode::from(a.mode),
        &infer_opts(a.no_counts),
    )?;
    println!(
        "rho {:.4} (mode {}, scored {}, excluded {}) model {}",
        report.rho, report.mode, report.scored, report.excluded, report.model_manifest_hash
    );
    if let Some(path) = &a.report {
        write_file(
            path,
            serde_json::to_string_pretty(&report)
                .expect("report serializes")
                .as_bytes(),
        )?;
    }
    Ok(())
}

fn cmd_nn(a: NnArgs) -> Result<(), AppError> {
    if a.k == 0 {
        return Err(val_err("k must be >= 1"));
    }
    let model = load_model(&a.model)?;
    let tokens = tokenize(&a.sentence);
    let target = tokenize(&a.target)
        .into_iter()
        .next()
        .ok_or_else(|| val_err("empty target"))?;
    let position = tokens
        .iter()
        .position(|t| *t == target)
        .ok_or_else(|| val_err(format!("target {target:?} not in the sentence")))?;
    let crp = model.meta.crp.clone();
    let neighbors = nearest_neighbors(
        &model,
        &tokens,
        position,
        a.k,
        ResolveMode::from(a.mode),
        &crp,
        &infer_opts(false),
    )?;
    println!("# model {}", model.manifest_hash());
    for (word, cos) in &neighbors {
        println!("{word}\t{cos:.4}");
    }
    Ok(())
}

fn cmd_pw_generate(a: PwGenerateArgs) -> Result<(), AppError> {
    let model = load_model(&a.model)?;
    let lines = read_lines(&a.corpus)?;
    let sel = PairSelection {
        n_pairs: a.pairs,
        rank_lo: a.rank_lo,
        rank_hi: a.rank_hi,
        max_cosine: a.max_cosine,
        min_occurrences: a.min_occurrences,
        max_share: a.max_share,
        seed: a.seed,
    };
    if sel.n_pairs == 0 {
        return Err(val_err("pairs must be >= 1"));
    }
    let spec = default_pseudoword_spec(&model, &sel)?;
    let (out_lines, gold) = generate_pseudoword_corpus(&lines, &spec)?;
    write_file(&a.out_corpus, (out_lines.join("\n") + "\n").as_bytes())?;
    write_file(
        &a.out_spec,
        serde_json::to_string_pretty(&spec)
            .expect("spec serializes")
            .as_bytes(),
    )?;
    write_file(
        &a.out_gold,
        serde_json::to_string(&gold)
            .expect("gold serializes")
            .as_bytes(),
    )?;
    println!("# model {}", model.manifest_hash());
    for p in &spec.pairs {
        println!("{} + {} -> {}", p.a, p.b, p.label);
    }
    println!(
        "{} pairs, {} gold occurrences | corpus -> {}",
        spec.pairs.len(),
        gold.len(),
        a.out_corpus.display()
    );
    Ok(())
}

fn cmd_pw_score(a: PwScoreArgs) -> Result<(), AppError> {
    let model = load_model(&a.model)?;
    let lines = read_lines(&a.corpus)?;
    let gold_text = fs::read_to_string(&a.gold)
        .map_err(|e| io_err(&format!("reading {}", a.gold.display()), e))?;
    let gold: Vec<GoldOccurrence> = serde_json::from_str(&gold_text)
        .map_err(|e| val_err(format!("gold {}: {e}", a.gold.display())))?;
    let crp = model.meta.crp.clone();
    let report = sense_purity(&model, &lines, &gold, &crp, &infer_opts(a.no_counts))?;
    for lp in &report.per_label {
        println!(
            "{}\tpurity {:.4}\tsenses {} ({} used)\tn {}",
            lp.label, lp.purity, lp.senses_in_model, lp.senses_used, lp.occurrences
        );
    }
    println!(
        "macro purity {:.4} over {} pseudowords | model {}",
        report.macro_purity,
        report.per_label.len(),
        report.model_manifest_hash
    );
    if let Some(path) = &a.report {
        write_file(
            path,
            serde_json::to_string_pretty(&report)
                .expect("report serializes")
                .as_bytes(),
        )?;
    }
    Ok(())
}

fn cmd_encode(a: EncodeArgs) -> Result<(), AppError> {
    let model = load_model(&a.model)?;
    let crp = model.meta.crp.clone();
    let mode = ResolveMode::from(a.mode);
    let opts = infer_opts(a.no_counts);
    let stdin = io::stdin();
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    writeln!(out, "# model {}", model.manifest_hash()).map_err(|e| io_err("stdout", e))?;
    for line in stdin.lock().lines() {
        let line = line.map_err(|e| io_err("stdin", e))?;
        let tokens = tokenize(&line);
        if tokens.is_empty() {
            continue;
        }
        for t in resolve(&model, &tokens, &crp, mode, &opts) {
            write!(out, "{}\t{}\t", t.token, t.mode).map_err(|e| io_err("stdout", e))?;
            let mut first = true;
            for x in &t.vector {
                if !first {
                    write!(out, " ").map_err(|e| io_err("stdout", e))?;
                }
                write!(out, "{x:.6}").map_err(|e| io_err("stdout", e))?;
                first = false;
            }
            writeln!(out).map_err(|e| io_err("stdout", e))?;
        }
    }
    out.flush().map_err(|e| io_err("stdout", e))?;
    Ok(())
}

fn cmd_compose_demo(a: ComposeDemoArgs) -> Result<(), AppError> {
    use rand::SeedableRng;
    let model = load_model(&a.model)?;
    let crp = model.meta.crp.clone();
    let mode = ResolveMode::from(a.mode);
    if matches!(mode, ResolveMode::ConcatGreedy | ResolveMode::ConcatExpectation) {
        return Err(val_err("compose-demo needs a K-wide mode (not concat)"));
    }
    let tokens = tokenize(&a.sentence);
    if tokens.is_empty() {
        return Err(val_err("empty sentence"));
    }
    let resolved = resolve(&model, &tokens, &crp, mode, &infer_opts(false));
    let sequence: Vec<Vec<f32>> = resolved.into_iter().map(|t| t.vector).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(a.seed);
    let params = CompositionParams::<f32>::random(model.dim, 0.1, &mut rng);
    let (cell, vector) = match a.cell {
        CellArg::Rnn => (
            "rnn",
            rnn_encode(&sequence, &params).map_err(|e| val_err(e.to_string()))?,
        ),
        CellArg::Lstm => (
            "lstm",
            lstm_encode(&sequence, &params)
                .map_err(|e| val_err(e.to_string()))?
                .h,
        ),
        CellArg::Tree => {
            let mut iter = sequence.into_iter().rev();
            let first = BinaryTree::leaf(iter.next().expect("nonempty"));
            let tree = iter.fold(first, |acc, v| BinaryTree::node(BinaryTree::leaf(v), acc));
            (
                "tree",
                tree_encode(&tree, &params).map_err(|e| val_err(e.to_string()))?,
            )
        }
    };
    println!("# model {}", model.manifest_hash());
    let rendered: Vec<String> = vector.iter().map(|x| format!("{x:.4}")).collect();
    println!(
        "{cell}({} tokens, mode {mode}, seed {}) = [{}]",
        tokens.len(),
        a.seed,
        rendered.join(" ")
    );
    Ok(())
}

fn cmd_synth_corpus(a: SynthCorpusArgs) -> Result<(), AppError> {
    if a.tokens == 0 {
        return Err(val_err("tokens must be >= 1"));
    }
    let cfg = SynthConfig {
        tokens: a.tokens,
        seed: a.seed,
        ambiguous_marker: !a.no_marker,
        ..SynthConfig::default()
    };
    let summary = generate_corpus_file(&cfg, &a.out)
        .map_err(|e| io_err(&format!("writing {}", a.out.display()), e))?;
    println!(
        "{} tokens in {} sentences ({} marker occurrences, seed {}) -> {}",
        summary.tokens,
        summary.sentences,
        summary.marker_occurrences,
        a.seed,
        a.out.display()
    );
    Ok(())
}

fn cmd_synth_scws(a: SynthScwsArgs) -> Result<(), AppError> {
    if a.per_kind == 0 {
        return Err(val_err("per-kind must be >= 1"));
    }
    let cfg = SynthConfig {
        seed: a.corpus_seed,
        ..SynthConfig::default()
    };
    let fx = ScwsFixtureConfig {
        same_topic: a.per_kind,
        cross_topic: a.per_kind,
        ambiguous: a.per_kind,
        seed: a.seed,
    };
    let n = write_scws_fixture(&cfg, &fx, &a.out)
        .map_err(|e| io_err(&format!("writing {}", a.out.display()), e))?;
    println!("{n} rated pairs -> {}", a.out.display());
    Ok(())
}

fn run() -> Result<(), AppError> {
    // encode reads stdin wholesale; everything else ignores it
    match Cli::parse().cmd {
        Cmd::BuildVocab(a) => cmd_build_vocab(a),
        Cmd::Train(a) => cmd_train(a),
        Cmd::EvalScws(a) => cmd_eval_scws(a),
        Cmd::Nn(a) => cmd_nn(a),
        Cmd::Pseudoword(PseudowordCmd::Generate(a)) => cmd_pw_generate(a),
        Cmd::Pseudoword(PseudowordCmd::Score(a)) => cmd_pw_score(a),
        Cmd::Encode(a) => cmd_encode(a),
        Cmd::ComposeDemo(a) => cmd_compose_demo(a),
        Cmd::SynthCorpus(a) => cmd_synth_corpus(a),
        Cmd::SynthScws(a) => cmd_synth_scws(a),
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {}", e.message());
        std::process::exit(e.code());
    }
}
