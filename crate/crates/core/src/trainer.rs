//! Baseline skip-gram training and the sense-allocating variant that
//! interleaves context-driven sense sampling with the embedding updates.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{subsample_keep, TokenStream, Vocabulary};
use crate::model::{CrpConfig, ModelMeta, MultiSenseModel, SenseEntry, TrainConfig, TrainMode};
use crate::scalar::{cosine, sigmoid, Scalar};

/// Dot products are clamped to this magnitude inside the sigmoid, bounding
/// per-step gradients.
pub const DOT_CLAMP: f64 = 6.0;

/// Hard bound on stored parameter magnitudes. Untouched at sane learning
/// rates (trained values stay O(1)); at adversarial rates the sigmoid clamp
/// alone bounds single steps but not the geometric growth of repeated
/// opposing updates, so stores saturate here instead of overflowing to
/// Inf/NaN.
pub const PARAM_CLAMP: f64 = 1e6;

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error("token stream is empty")]
    EmptyStream,
    #[error("no training pairs: every sentence has fewer than two in-vocabulary tokens")]
    NoTrainingPairs,
    #[error("window around position {0} contains no neighbors")]
    NoNeighbors(usize),
    #[error("warmstart model mismatch: {0}")]
    WarmstartMismatch(String),
    #[error("malformed posterior: {0}")]
    MalformedPosterior(String),
    #[error("sense cap reached for word {0}")]
    SenseCapReached(u32),
    #[error(transparent)]
    Config(#[from] crate::model::ConfigError),
}

// --- parameter views --------------------------------------------------------

/// Read access to the parameters the sense machinery needs, implemented by
/// both the plain model (inference) and the shared training state, so the
/// posterior code is written once.
pub trait ParamView<S: Scalar>: Sync {
    fn dim(&self) -> usize;
    /// acc += global_in[word]
    fn add_global_in(&self, word: u32, acc: &mut [S]);
    fn copy_global_in(&self, word: u32, out: &mut [S]);
    /// acc += sense vector `sense` of `word`
    fn add_sense_vector(&self, word: u32, sense: u32, acc: &mut [S]);
    /// Run `f` against the word's current sense list.
    fn with_senses<R>(&self, word: u32, f: impl FnOnce(&[SenseEntry<S>]) -> R) -> R;
}

impl<S: Scalar> ParamView<S> for MultiSenseModel<S> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn add_global_in(&self, word: u32, acc: &mut [S]) {
        for (a, &x) in acc.iter_mut().zip(self.global_in_row(word)) {
            *a += x;
        }
    }

    fn copy_global_in(&self, word: u32, out: &mut [S]) {
        out.copy_from_slice(self.global_in_row(word));
    }

    fn add_sense_vector(&self, word: u32, sense: u32, acc: &mut [S]) {
        let v = &self.senses[word as usize][sense as usize].vector;
        for (a, &x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }

    fn with_senses<R>(&self, word: u32, f: impl FnOnce(&[SenseEntry<S>]) -> R) -> R {
        f(&self.senses[word as usize])
    }
}

/// Training-time parameter state shared across workers.
///
/// Global matrices are relaxed atomics (element-level races are part of the
/// training contract); sense lists sit behind one mutex per word, which
/// serializes spawn/prune as required and, conservatively, sense-vector
/// element updates too.
pub struct SharedParams<S: Scalar> {
    dim: usize,
    global_in: Vec<S::Atomic>,
    global_out: Vec<S::Atomic>,
    senses: Vec<Mutex<Vec<SenseEntry<S>>>>,
    pub spawned: AtomicU64,
    pub pruned: AtomicU64,
}

impl<S: Scalar> SharedParams<S> {
    pub fn from_model(model: &MultiSenseModel<S>) -> Self {
        SharedParams {
            dim: model.dim,
            global_in: model.global_in.iter().map(|&x| S::atomic_new(x)).collect(),
            global_out: model.global_out.iter().map(|&x| S::atomic_new(x)).collect(),
            senses: model
                .senses
                .iter()
                .map(|list| Mutex::new(list.clone()))
                .collect(),
            spawned: AtomicU64::new(0),
            pruned: AtomicU64::new(0),
        }
    }

    /// Write the shared state back into `model` (parameter arrays and senses).
    pub fn store_into(&self, model: &mut MultiSenseModel<S>) {
        for (x, a) in model.global_in.iter_mut().zip(&self.global_in) {
            *x = S::atomic_get(a);
        }
        for (x, a) in model.global_out.iter_mut().zip(&self.global_out) {
            *x = S::atomic_get(a);
        }
        for (list, m) in model.senses.iter_mut().zip(&self.senses) {
            *list = m.lock().unwrap().clone();
        }
    }

    fn in_row(&self, word: u32) -> &[S::Atomic] {
        &self.global_in[word as usize * self.dim..(word as usize + 1) * self.dim]
    }

    fn out_row(&self, word: u32) -> &[S::Atomic] {
        &self.global_out[word as usize * self.dim..(word as usize + 1) * self.dim]
    }

    /// Zero every sense assignment counter (start of a counting epoch).
    pub fn reset_counts(&self) {
        for m in &self.senses {
            for e in m.lock().unwrap().iter_mut() {
                e.count = 0;
            }
        }
    }

    /// Drop senses with fewer than `min_count` assignments, compacting the
    /// per-word lists. Returns the number removed.
    pub fn prune(&self, min_count: u64) -> u64 {
        let mut removed = 0;
        for m in &self.senses {
            let mut list = m.lock().unwrap();
            let before = list.len();
            list.retain(|e| e.count >= min_count);
            removed += (before - list.len()) as u64;
        }
        self.pruned.fetch_add(removed, Ordering::Relaxed);
        removed
    }

    pub fn sense_len(&self, word: u32) -> usize {
        self.senses[word as usize].lock().unwrap().len()
    }
}

impl<S: Scalar> ParamView<S> for SharedParams<S> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn add_global_in(&self, word: u32, acc: &mut [S]) {
        for (a, cell) in acc.iter_mut().zip(self.in_row(word)) {
            *a += S::atomic_get(cell);
        }
    }

    fn copy_global_in(&self, word: u32, out: &mut [S]) {
        for (o, cell) in out.iter_mut().zip(self.in_row(word)) {
            *o = S::atomic_get(cell);
        }
    }

    fn add_sense_vector(&self, word: u32, sense: u32, acc: &mut [S]) {
        let list = self.senses[word as usize].lock().unwrap();
        for (a, &x) in acc.iter_mut().zip(&list[sense as usize].vector) {
            *a += x;
        }
    }

    fn with_senses<R>(&self, word: u32, f: impl FnOnce(&[SenseEntry<S>]) -> R) -> R {
        let list = self.senses[word as usize].lock().unwrap();
        f(&list)
    }
}

// --- context and posterior ---------------------------------------------------

/// Mean of the in-window neighbor representations around `pos`, skipping the
/// center. A neighbor whose sense was already decided this pass contributes
/// that sense vector; everything else contributes its global vector.
pub fn context_vector_into<S: Scalar, P: ParamView<S>>(
    params: &P,
    sentence: &[u32],
    pos: usize,
    window: usize,
    assignments: &[Option<u32>],
    out: &mut [S],
) -> Result<(), TrainerError> {
    out.fill(S::zero());
    let lo = pos.saturating_sub(window);
    let hi = (pos + window).min(sentence.len().saturating_sub(1));
    let mut n = 0;
    for j in lo..=hi {
        if j == pos {
            continue;
        }
        match assignments.get(j).copied().flatten() {
            Some(s) => params.add_sense_vector(sentence[j], s, out),
            None => params.add_global_in(sentence[j], out),
        }
        n += 1;
    }
    if n == 0 {
        return Err(TrainerError::NoNeighbors(pos));
    }
    let inv = S::of(1.0 / n as f64);
    for x in out.iter_mut() {
        *x *= inv;
    }
    Ok(())
}

pub fn context_vector<S: Scalar, P: ParamView<S>>(
    params: &P,
    sentence: &[u32],
    pos: usize,
    window: usize,
    assignments: &[Option<u32>],
) -> Result<Vec<S>, TrainerError> {
    let mut out = vec![S::zero(); params.dim()];
    context_vector_into(params, sentence, pos, window, assignments, &mut out)?;
    Ok(out)
}

/// exp(cos(v, c)/τ). Zero-norm vectors contribute cosine 0, so the
/// likelihood is never zero or infinite.
pub fn sense_likelihood<S: Scalar>(sense_vector: &[S], c: &[S], tau: f64) -> f64 {
    (cosine(sense_vector, c).as_f64() / tau).exp()
}

/// Posterior over a word's existing senses plus one trailing new-sense slot.
///
/// Unnormalized scores: occupancy(z)·likelihood(e_w^z) per existing sense and
/// γ·likelihood(e_w) for the new slot, where occupancy is the epoch
/// assignment count floored at 1 (counts restart at zero each epoch; a
/// not-yet-visited sense competes as if it held one assignment). At the
/// sense cap the new slot gets score 0 before normalization. Always sums
/// to 1; computed in f64 for every scalar type.
pub fn sense_posterior<S: Scalar, P: ParamView<S>>(
    params: &P,
    word: u32,
    c: &[S],
    crp: &CrpConfig,
) -> Vec<f64> {
    let tau = crp.temperature;
    let mut scores = params.with_senses(word, |list| {
        let mut scores = Vec::with_capacity(list.len() + 1);
        for e in list {
            let occupancy = e.count.max(1) as f64;
            scores.push(occupancy * sense_likelihood(&e.vector, c, tau));
        }
        scores
    });
    let n_existing = scores.len();
    if n_existing >= crp.max_senses_per_word {
        scores.push(0.0);
    } else {
        let mut global = vec![S::zero(); params.dim()];
        params.copy_global_in(word, &mut global);
        scores.push(crp.gamma * sense_likelihood(&global, c, tau));
    }
    let sum: f64 = scores.iter().sum();
    debug_assert!(sum > 0.0, "posterior mass vanished");
    for s in scores.iter_mut() {
        *s /= sum;
    }
    scores
}

// --- sense sampling and spawning ---------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SenseChoice {
    Existing(u32),
    New,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SenseDecision {
    pub choice: SenseChoice,
    /// Posterior mass of the chosen option, in (0, 1].
    pub mass: f64,
}

/// Inverse-CDF sampling over a posterior whose last entry is the new-sense
/// slot; existing senses are walked in index order first.
pub fn sample_sense(posterior: &[f64], draw: f64) -> Result<SenseDecision, TrainerError> {
    if posterior.is_empty() {
        return Err(TrainerError::MalformedPosterior("empty".into()));
    }
    if posterior.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(TrainerError::MalformedPosterior(
            "entry outside [0,1]".into(),
        ));
    }
    let sum: f64 = posterior.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(TrainerError::MalformedPosterior(format!(
            "sums to {sum}, expected 1"
        )));
    }
    let mut cum = 0.0;
    let mut chosen = None;
    for (i, &p) in posterior.iter().enumerate() {
        cum += p;
        if draw < cum && p > 0.0 {
            chosen = Some(i);
            break;
        }
    }
    // rounding can leave cum fractionally below 1; fall back to the last
    // option that has mass
    let i = match chosen {
        Some(i) => i,
        None => posterior
            .iter()
            .rposition(|&p| p > 0.0)
            .expect("posterior sums to 1"),
    };
    let choice = if i == posterior.len() - 1 {
        SenseChoice::New
    } else {
        SenseChoice::Existing(i as u32)
    };
    Ok(SenseDecision {
        choice,
        mass: posterior[i],
    })
}

/// Append a new sense for `word`: vector = context + uniform noise in
/// [−noise, +noise]^K, assignment count 1. Returns the new sense index.
pub fn spawn_sense<S: Scalar, R: Rng>(
    params: &SharedParams<S>,
    word: u32,
    c: &[S],
    crp: &CrpConfig,
    rng: &mut R,
) -> Result<u32, TrainerError> {
    let noise = crp.noise_scale(params.dim);
    let mut list = params.senses[word as usize].lock().unwrap();
    if list.len() >= crp.max_senses_per_word {
        return Err(TrainerError::SenseCapReached(word));
    }
    let vector: Vec<S> = if noise == 0.0 {
        c.to_vec()
    } else {
        let dist = Uniform::new_inclusive(-noise, noise);
        c.iter()
            .map(|&x| x + S::of(dist.sample(rng)))
            .collect()
    };
    list.push(SenseEntry { vector, count: 1 });
    params.spawned.fetch_add(1, Ordering::Relaxed);
    Ok((list.len() - 1) as u32)
}

// --- SGNS update --------------------------------------------------------------

/// Which vector acts as the center (input-side) representation of an update.
#[derive(Debug, Clone, Copy)]
pub enum Center {
    Global(u32),
    Sense { word: u32, sense: u32 },
}

/// Reusable per-worker buffers for the hot update path.
pub struct Scratch<S> {
    v: Vec<S>,
    u: Vec<S>,
    neu1e: Vec<S>,
    pub ctx: Vec<S>,
}

impl<S: Scalar> Scratch<S> {
    pub fn new(dim: usize) -> Self {
        Scratch {
            v: vec![S::zero(); dim],
            u: vec![S::zero(); dim],
            neu1e: vec![S::zero(); dim],
            ctx: vec![S::zero(); dim],
        }
    }
}

fn sigmoid_clamped<S: Scalar>(x: S) -> S {
    let hi = S::of(DOT_CLAMP);
    sigmoid(x.max(-hi).min(hi))
}

#[inline]
fn clamp_param<S: Scalar>(x: S) -> S {
    let hi = S::of(PARAM_CLAMP);
    x.max(-hi).min(hi)
}

/// Core negative-sampling step: given the (already snapshotted) center
/// vector, update the output rows of the positive context and the negatives,
/// accumulating the center gradient into `scratch.neu1e`.
fn sgns_core<S: Scalar>(
    params: &SharedParams<S>,
    v: &[S],
    context: u32,
    negatives: &[u32],
    lr: S,
    scratch_u: &mut [S],
    neu1e: &mut [S],
) {
    neu1e.fill(S::zero());
    let targets = std::iter::once((context, S::one()))
        .chain(negatives.iter().map(|&n| (n, S::zero())));
    for (target, label) in targets {
        if label == S::zero() && target == context {
            continue; // drawn negative collides with the true context
        }
        let row = params.out_row(target);
        for (u, cell) in scratch_u.iter_mut().zip(row) {
            *u = S::atomic_get(cell);
        }
        let f = sigmoid_clamped(crate::scalar::dot(v, scratch_u));
        let g = (label - f) * lr;
        for k in 0..v.len() {
            let u = scratch_u[k];
            neu1e[k] += g * u;
            S::atomic_set(&row[k], clamp_param(u + g * v[k]));
        }
    }
}

/// One negative-sampling gradient step: the center representation predicts
/// `context` against the shared output table. Gradients go to the center
/// vector and the touched output rows; a sense-vector center additionally
/// applies the same gradient at half weight to the word's global vector so
/// the global vector stays a usable summary of its senses.
pub fn sgns_update<S: Scalar>(
    params: &SharedParams<S>,
    center: Center,
    context: u32,
    negatives: &[u32],
    lr: f64,
    scratch: &mut Scratch<S>,
) {
    let lr = S::of(lr);
    let dim = params.dim;
    match center {
        Center::Global(word) => {
            params.copy_global_in(word, &mut scratch.v);
            // borrow u and neu1e apart from scratch.v
            let Scratch { v, u, neu1e, .. } = scratch;
            sgns_core(params, v, context, negatives, lr, u, neu1e);
            for (cell, &e) in params.in_row(word).iter().zip(neu1e.iter()) {
                S::atomic_set(cell, clamp_param(S::atomic_get(cell) + e));
            }
        }
        Center::Sense { word, sense } => {
            {
                let list = params.senses[word as usize].lock().unwrap();
                scratch.v.copy_from_slice(&list[sense as usize].vector);
            }
            let Scratch { v, u, neu1e, .. } = scratch;
            sgns_core(params, v, context, negatives, lr, u, neu1e);
            {
                let mut list = params.senses[word as usize].lock().unwrap();
                for (x, &e) in list[sense as usize].vector.iter_mut().zip(neu1e.iter()) {
                    *x = clamp_param(*x + e);
                }
            }
            let half = S::of(0.5);
            for (cell, &e) in params.in_row(word).iter().zip(neu1e.iter()) {
                S::atomic_set(cell, clamp_param(S::atomic_get(cell) + half * e));
            }
        }
    }
    debug_assert_eq!(scratch.v.len(), dim);
}

// --- negative sampling table ---------------------------------------------------

/// Unigram^0.75 sampling table: word ids repeated proportionally to
/// count^0.75, drawn by uniform index.
pub struct NegativeTable {
    table: Vec<u32>,
}

impl NegativeTable {
    pub fn new(vocab: &Vocabulary) -> Self {
        // Entry granularity 1/size; 256 slots per word keeps tail words
        // representable without word2vec's fixed 10^8 entries.
        let size = (vocab.len() * 256).clamp(1 << 16, 1 << 24);
        Self::with_size(vocab, size)
    }

    pub fn with_size(vocab: &Vocabulary, size: usize) -> Self {
        let v = vocab.len();
        let total: f64 = (0..v as u32).map(|w| (vocab.count(w) as f64).powf(0.75)).sum();
        let mut table = Vec::with_capacity(size);
        let mut w = 0u32;
        let mut next = (vocab.count(0) as f64).powf(0.75) / total;
        for i in 0..size {
            table.push(w);
            let cum = (i + 1) as f64 / size as f64;
            if cum > next && (w as usize) < v - 1 {
                w += 1;
                next += (vocab.count(w) as f64).powf(0.75) / total;
            }
        }
        NegativeTable { table }
    }

    #[inline]
    pub fn draw<R: Rng>(&self, rng: &mut R) -> u32 {
        self.table[rng.gen_range(0..self.table.len())]
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

// --- the trainer ----------------------------------------------------------------

/// One sense decision made during training; exposed so tests can audit the
/// assignment counters.
#[derive(Debug, Clone, Copy)]
pub struct AssignmentEvent {
    pub epoch: u32,
    pub word: u32,
    pub sense: u32,
    pub spawned: bool,
}

#[derive(Debug, Clone, Default)]
pub struct TrainStats {
    pub wall_secs: f64,
    pub tokens_per_sec: f64,
    pub tokens_scanned: u64,
    pub pairs_trained: u64,
    pub senses_spawned: u64,
    pub senses_pruned: u64,
}

pub struct TrainOutcome<S> {
    pub model: MultiSenseModel<S>,
    pub stats: TrainStats,
    /// Per-token sense decisions; populated only when requested and
    /// single-worker.
    pub assignments: Vec<AssignmentEvent>,
}

pub struct Trainer {
    pub train: TrainConfig,
    pub crp: CrpConfig,
    /// Emit tokens/sec, lr, and sense totals to stderr every 10^6 tokens.
    pub progress: bool,
    /// Record every sense decision (single-worker only).
    pub log_assignments: bool,
}

impl Trainer {
    pub fn new(train: TrainConfig, crp: CrpConfig) -> Self {
        Trainer {
            train,
            crp,
            progress: false,
            log_assignments: false,
        }
    }

    pub fn run<S: Scalar>(
        &self,
        mode: TrainMode,
        stream: &TokenStream,
        vocab: &Vocabulary,
        warmstart: Option<MultiSenseModel<S>>,
    ) -> Result<TrainOutcome<S>, TrainerError> {
        self.train.validate()?;
        self.crp.validate()?;
        if stream.sentences().is_empty() || stream.token_count() == 0 {
            return Err(TrainerError::EmptyStream);
        }
        if !stream.sentences().iter().any(|s| s.len() >= 2) {
            return Err(TrainerError::NoTrainingPairs);
        }

        let mut meta = ModelMeta::new(mode, self.train.clone(), self.crp.clone());
        meta.corpus_hash = stream.source_hash().map(str::to_string);
        meta.corpus_tokens = stream.token_count();

        let mut model = match warmstart {
            Some(m) => {
                if m.dim != self.train.dim {
                    return Err(TrainerError::WarmstartMismatch(format!(
                        "dim {} vs configured {}",
                        m.dim, self.train.dim
                    )));
                }
                if m.vocab_len() != vocab.len() {
                    return Err(TrainerError::WarmstartMismatch(format!(
                        "vocabulary size {} vs corpus vocabulary {}",
                        m.vocab_len(),
                        vocab.len()
                    )));
                }
                let mut m = m;
                m.meta = meta;
                m
            }
            None => MultiSenseModel::init(vocab.clone(), meta, self.train.seed),
        };

        let shared = SharedParams::from_model(&model);
        let table = NegativeTable::new(vocab);
        let total_tokens = stream.token_count();
        let schedule = self.train.epochs as u64 * total_tokens;
        let tokens_done = AtomicU64::new(0);
        let pairs = AtomicU64::new(0);
        let workers = self.train.workers;
        let log_on = self.log_assignments && workers == 1;
        let log = Mutex::new(Vec::new());
        let start = Instant::now();
        let prune_floor = self.crp.effective_prune_min_count(total_tokens);

        for epoch in 0..self.train.epochs {
            let crp_active = mode == TrainMode::MultiSense
                && !(self.crp.burn_in && epoch == 0);
            if crp_active {
                shared.reset_counts();
            }
            std::thread::scope(|scope| {
                for wid in 0..workers {
                    let worker = WorkerCtx {
                        trainer: self,
                        shared: &shared,
                        table: &table,
                        stream,
                        vocab,
                        tokens_done: &tokens_done,
                        pairs: &pairs,
                        log: if log_on { Some(&log) } else { None },
                        start: &start,
                        schedule,
                        epoch,
                        wid,
                        workers,
                        crp_active,
                    };
                    scope.spawn(move || worker.run());
                }
            });
            if crp_active {
                shared.prune(prune_floor);
            }
        }

        if pairs.load(Ordering::Relaxed) == 0 {
            return Err(TrainerError::NoTrainingPairs);
        }

        shared.store_into(&mut model);
        model.meta.epochs_completed = self.train.epochs;
        model.meta.pruned_senses = shared.pruned.load(Ordering::Relaxed);
        model.sync_meta();
        debug_assert!(model.is_finite());

        let wall = start.elapsed().as_secs_f64();
        let scanned = tokens_done.load(Ordering::Relaxed);
        let stats = TrainStats {
            wall_secs: wall,
            tokens_per_sec: scanned as f64 / wall.max(1e-9),
            tokens_scanned: scanned,
            pairs_trained: pairs.load(Ordering::Relaxed),
            senses_spawned: shared.spawned.load(Ordering::Relaxed),
            senses_pruned: shared.pruned.load(Ordering::Relaxed),
        };
        Ok(TrainOutcome {
            model,
            stats,
            assignments: log.into_inner().unwrap(),
        })
    }
}

/// Baseline skip-gram with negative sampling; the returned model has empty
/// sense lists.
pub fn train_baseline<S: Scalar>(
    stream: &TokenStream,
    vocab: &Vocabulary,
    config: &TrainConfig,
) -> Result<MultiSenseModel<S>, TrainerError> {
    Trainer::new(config.clone(), CrpConfig::default())
        .run(TrainMode::Baseline, stream, vocab, None)
        .map(|o| o.model)
}

/// Joint sense-allocation + embedding training.
pub fn train_multisense<S: Scalar>(
    stream: &TokenStream,
    vocab: &Vocabulary,
    config: &TrainConfig,
    crp: &CrpConfig,
    warmstart: Option<MultiSenseModel<S>>,
) -> Result<MultiSenseModel<S>, TrainerError> {
    Trainer::new(config.clone(), crp.clone())
        .run(TrainMode::MultiSense, stream, vocab, warmstart)
        .map(|o| o.model)
}

struct WorkerCtx<'a, S: Scalar> {
    trainer: &'a Trainer,
    shared: &'a SharedParams<S>,
    table: &'a NegativeTable,
    stream: &'a TokenStream,
    vocab: &'a Vocabulary,
    tokens_done: &'a AtomicU64,
    pairs: &'a AtomicU64,
    log: Option<&'a Mutex<Vec<AssignmentEvent>>>,
    start: &'a Instant,
    schedule: u64,
    epoch: u32,
    wid: usize,
    workers: usize,
    crp_active: bool,
}

impl<S: Scalar> WorkerCtx<'_, S> {
    fn run(self) {
        let cfg = &self.trainer.train;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1 + self.epoch as u64 * self.workers as u64 + self.wid as u64);
        let mut scratch = Scratch::new(cfg.dim);
        let mut negs = vec![0u32; cfg.negatives];
        let mut sen: Vec<u32> = Vec::with_capacity(64);
        let mut assignments: Vec<Option<u32>> = Vec::with_capacity(64);
        let mut local_pairs = 0u64;
        let mut local_log = Vec::new();

        for (idx, sentence) in self.stream.sentences().iter().enumerate() {
            if idx % self.workers != self.wid {
                continue;
            }
            let done = self
                .tokens_done
                .fetch_add(sentence.len() as u64, Ordering::Relaxed)
                + sentence.len() as u64;
            let lr = (cfg.lr_initial
                * (1.0 - done as f64 / (self.schedule + 1) as f64))
                .max(cfg.lr_floor);
            if self.trainer.progress
                && sentence.len() as u64 <= done
                && (done - sentence.len() as u64) / 1_000_000 != done / 1_000_000
            {
                self.report(done, lr);
            }

            sen.clear();
            for &w in sentence {
                if subsample_keep(self.vocab.frequency(w), cfg.subsample, rng.gen()) {
                    sen.push(w);
                }
            }
            if sen.len() < 2 {
                continue;
            }

            if self.crp_active {
                assignments.clear();
                assignments.resize(sen.len(), None);
                for i in 0..sen.len() {
                    local_pairs += self.step_multisense(
                        &sen,
                        i,
                        &mut assignments,
                        lr,
                        &mut rng,
                        &mut negs,
                        &mut scratch,
                        &mut local_log,
                    );
                }
            } else {
                for i in 0..sen.len() {
                    local_pairs +=
                        self.step_baseline(&sen, i, lr, &mut rng, &mut negs, &mut scratch);
                }
            }
        }

        self.pairs.fetch_add(local_pairs, Ordering::Relaxed);
        if let Some(log) = self.log {
            log.lock().unwrap().extend(local_log);
        }
    }

    /// Plain skip-gram: the center's global vector predicts each in-window
    /// neighbor.
    fn step_baseline<R: Rng>(
        &self,
        sen: &[u32],
        i: usize,
        lr: f64,
        rng: &mut R,
        negs: &mut [u32],
        scratch: &mut Scratch<S>,
    ) -> u64 {
        let cfg = &self.trainer.train;
        let lo = i.saturating_sub(cfg.window);
        let hi = (i + cfg.window).min(sen.len() - 1);
        let mut pairs = 0;
        for j in lo..=hi {
            if j == i {
                continue;
            }
            for n in negs.iter_mut() {
                *n = self.table.draw(rng);
            }
            sgns_update(self.shared, Center::Global(sen[i]), sen[j], negs, lr, scratch);
            pairs += 1;
        }
        pairs
    }

    /// Per-token joint step: (a) context vector, (b) neighbor globals
    /// predict the current token, (c) sample a sense from the posterior,
    /// (d) spawn, or update with the assigned sense predicting neighbors.
    #[allow(clippy::too_many_arguments)]
    fn step_multisense<R: Rng>(
        &self,
        sen: &[u32],
        i: usize,
        assignments: &mut [Option<u32>],
        lr: f64,
        rng: &mut R,
        negs: &mut [u32],
        scratch: &mut Scratch<S>,
        log: &mut Vec<AssignmentEvent>,
    ) -> u64 {
        let cfg = &self.trainer.train;
        let crp = &self.trainer.crp;
        let w = sen[i];
        let lo = i.saturating_sub(cfg.window);
        let hi = (i + cfg.window).min(sen.len() - 1);
        let mut pairs = 0;

        // (a) context from current assignments
        let mut ctx = std::mem::take(&mut scratch.ctx);
        context_vector_into(self.shared, sen, i, cfg.window, assignments, &mut ctx)
            .expect("sentence has >= 2 tokens");

        // (b) predict the current token from each neighbor's global vector
        for j in lo..=hi {
            if j == i {
                continue;
            }
            for n in negs.iter_mut() {
                *n = self.table.draw(rng);
            }
            sgns_update(self.shared, Center::Global(sen[j]), w, negs, lr, scratch);
            pairs += 1;
        }

        // (c) sense posterior and sample
        let posterior = sense_posterior(self.shared, w, &ctx, crp);
        let decision = sample_sense(&posterior, rng.gen()).expect("posterior is normalized");

        // (d) spawn or sense-side update
        let sense = match decision.choice {
            SenseChoice::New => match spawn_sense(self.shared, w, &ctx, crp, rng) {
                Ok(s) => {
                    if self.log.is_some() {
                        log.push(AssignmentEvent {
                            epoch: self.epoch,
                            word: w,
                            sense: s,
                            spawned: true,
                        });
                    }
                    s
                }
                Err(_) => {
                    // another worker hit the cap first; fall back to the
                    // best existing sense
                    let best = posterior[..posterior.len() - 1]
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.total_cmp(b.1))
                        .map(|(i, _)| i as u32)
                        .unwrap_or(0);
                    self.assign_existing(w, best, sen, i, lo, hi, lr, rng, negs, scratch, log);
                    pairs += (hi - lo) as u64;
                    assignments[i] = Some(best);
                    scratch.ctx = ctx;
                    return pairs;
                }
            },
            SenseChoice::Existing(s) => {
                self.assign_existing(w, s, sen, i, lo, hi, lr, rng, negs, scratch, log);
                pairs += (hi - lo) as u64;
                s
            }
        };
        assignments[i] = Some(sense);
        scratch.ctx = ctx;
        pairs
    }

    /// Count the assignment and run the sense-center update against every
    /// in-window neighbor.
    #[allow(clippy::too_many_arguments)]
    fn assign_existing<R: Rng>(
        &self,
        w: u32,
        s: u32,
        sen: &[u32],
        i: usize,
        lo: usize,
        hi: usize,
        lr: f64,
        rng: &mut R,
        negs: &mut [u32],
        scratch: &mut Scratch<S>,
        log: &mut Vec<AssignmentEvent>,
    ) {
        {
            let mut list = self.shared.senses[w as usize].lock().unwrap();
            list[s as usize].count += 1;
        }
        if self.log.is_some() {
            log.push(AssignmentEvent {
                epoch: self.epoch,
                word: w,
                sense: s,
                spawned: false,
            });
        }
        for j in lo..=hi {
            if j == i {
                continue;
            }
            for n in negs.iter_mut() {
                *n = self.table.draw(rng);
            }
            sgns_update(
                self.shared,
                Center::Sense { word: w, sense: s },
                sen[j],
                negs,
                lr,
                scratch,
            );
        }
    }

    fn report(&self, done: u64, lr: f64) {
        let secs = self.start.elapsed().as_secs_f64().max(1e-9);
        eprintln!(
            "[train] epoch {} tokens {:.1}M lr {:.5} tok/s {:.0} senses +{} -{}",
            self.epoch + 1,
            done as f64 / 1e6,
            lr,
            done as f64 / secs,
            self.shared.spawned.load(Ordering::Relaxed),
            self.shared.pruned.load(Ordering::Relaxed),
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TrainMode;

    fn params_with(
        dim: usize,
        globals: Vec<Vec<f64>>,
        senses: Vec<Vec<(Vec<f64>, u64)>>,
    ) -> SharedParams<f64> {
        let vocab = Vocabulary::build(
            [(0..globals.len()).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")],
            1,
        )
        .unwrap();
        let train = TrainConfig {
            dim,
            ..TrainConfig::default()
        };
        let meta = ModelMeta::new(TrainMode::MultiSense, train, CrpConfig::default());
        let mut model = MultiSenseModel::<f64>::init(vocab, meta, 1);
        for (i, g) in globals.iter().enumerate() {
            model.global_in[i * dim..(i + 1) * dim].copy_from_slice(g);
        }
        for (i, list) in senses.into_iter().enumerate() {
            model.senses[i] = list
                .into_iter()
                .map(|(vector, count)| SenseEntry { vector, count })
                .collect();
        }
        SharedParams::from_model(&model)
    }

    #[test]
    fn context_vector_mean() {
        // two-word sentence with orthogonal globals -> mean
        let p = params_with(2, vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![9.0, 9.0]], vec![
            vec![],
            vec![],
            vec![],
        ]);
        let c = context_vector(&p, &[2, 0, 1], 0, 5, &[None, None, None]).unwrap();
        assert_eq!(c, vec![0.5, 0.5]);
    }

    #[test]
    fn context_vector_uses_assigned_sense() {
        let p = params_with(
            2,
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![(vec![5.0, 5.0], 3)], vec![]],
        );
        // neighbor 0 labeled with its sense 0 -> contributes (5,5) not (1,0)
        let c = context_vector(&p, &[0, 1], 1, 5, &[Some(0), None]).unwrap();
        assert_eq!(c, vec![5.0, 5.0]);
        let c = context_vector(&p, &[0, 1], 1, 5, &[None, None]).unwrap();
        assert_eq!(c, vec![1.0, 0.0]);
    }

    #[test]
    fn context_vector_no_neighbors_errors() {
        let p = params_with(2, vec![vec![1.0, 0.0]], vec![vec![]]);
        assert!(matches!(
            context_vector(&p, &[0], 0, 5, &[None]),
            Err(TrainerError::NoNeighbors(0))
        ));
    }

    #[test]
    fn likelihood_hand_values() {
        // aligned: e^1; orthogonal: e^0; cos 0.5 at tau 0.25: e^2
        let c = [1.0f64, 0.0];
        assert!((sense_likelihood(&[2.0, 0.0], &c, 1.0) - 1.0f64.exp()).abs() < 1e-12);
        assert!((sense_likelihood(&[0.0, 3.0], &c, 1.0) - 1.0).abs() < 1e-12);
        let half = [0.5f64, 0.75f64.sqrt()];
        assert!((sense_likelihood(&half, &c, 0.25) - 2.0f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn likelihood_zero_norm_is_one() {
        assert_eq!(sense_likelihood(&[0.0f64, 0.0], &[1.0, 2.0], 0.5), 1.0);
    }

    #[test]
    fn posterior_no_senses_is_all_new() {
        let p = params_with(2, vec![vec![1.0, 0.0]], vec![vec![]]);
        let post = sense_posterior(&p, 0, &[1.0, 0.0], &CrpConfig::default());
        assert_eq!(post, vec![1.0]);
    }

    #[test]
    fn posterior_oracle_three_slots() {
        // counts (2,1); likelihoods (e^1, e^0); gamma=1; new-slot e^0.5
        // scores: (2e, 1, sqrt(e)) -> normalized by their sum
        let c = vec![1.0f64, 0.0, 0.0];
        let s1 = vec![2.0, 0.0, 0.0]; // cos 1
        let s2 = vec![0.0, 1.0, 0.0]; // cos 0
        let g = vec![0.5, 0.75f64.sqrt(), 0.0]; // cos 0.5
        let p = params_with(3, vec![g], vec![vec![(s1, 2), (s2, 1)]]);
        let crp = CrpConfig {
            gamma: 1.0,
            temperature: 1.0,
            ..CrpConfig::default()
        };
        let post = sense_posterior(&p, 0, &c, &crp);
        let e = 1.0f64.exp();
        let scores = [2.0 * e, 1.0, 0.5f64.exp()];
        assert!((scores[0] - 5.43656).abs() < 1e-5);
        assert!((scores[2] - 1.64872).abs() < 1e-5);
        let sum: f64 = scores.iter().sum();
        for (a, b) in post.iter().zip(scores.iter()) {
            assert!((a - b / sum).abs() < 1e-12, "{post:?}");
        }
        assert!((post[0] - 0.6725).abs() < 1e-4);
        assert!((post[1] - 0.1237).abs() < 1e-4);
        assert!((post[2] - 0.2039).abs() < 1e-4);
    }

    #[test]
    fn posterior_rich_get_richer() {
        // identical sense vectors -> identical likelihoods; gamma tiny
        let s = vec![1.0f64, 1.0];
        let p = params_with(
            2,
            vec![vec![1.0, 0.0]],
            vec![vec![(s.clone(), 3), (s.clone(), 1)]],
        );
        let crp = CrpConfig {
            gamma: 1e-12,
            ..CrpConfig::default()
        };
        let post = sense_posterior(&p, 0, &[1.0, 0.0], &crp);
        assert!((post[0] / post[1] - 3.0).abs() < 1e-12);
        assert!(post[2] < 1e-9);
    }

    #[test]
    fn posterior_cap_zeroes_new_slot() {
        let s = vec![1.0f64, 0.0];
        let p = params_with(
            2,
            vec![vec![1.0, 0.0]],
            vec![vec![(s.clone(), 5), (s.clone(), 5)]],
        );
        let crp = CrpConfig {
            max_senses_per_word: 2,
            ..CrpConfig::default()
        };
        let post = sense_posterior(&p, 0, &[1.0, 0.0], &crp);
        assert_eq!(post.len(), 3);
        assert_eq!(post[2], 0.0);
        assert!((post[0] + post[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn posterior_zero_count_competes_as_one() {
        // counts reset to 0 at epoch start must not silence existing senses
        let p = params_with(
            2,
            vec![vec![1.0, 0.0]],
            vec![vec![(vec![1.0, 0.0], 0), (vec![1.0, 0.0], 0)]],
        );
        let post = sense_posterior(&p, 0, &[1.0, 0.0], &CrpConfig::default());
        assert!(post[0] > 0.0 && (post[0] - post[1]).abs() < 1e-12);
    }

    #[test]
    fn sample_sense_cdf_walk() {
        let d = sample_sense(&[1.0], 0.73).unwrap();
        assert_eq!(d.choice, SenseChoice::New); // single slot = the new slot
        let d = sample_sense(&[0.75, 0.25], 0.8).unwrap();
        assert_eq!(d.choice, SenseChoice::New);
        assert_eq!(d.mass, 0.25);
        let d = sample_sense(&[0.75, 0.25], 0.5).unwrap();
        assert_eq!(d.choice, SenseChoice::Existing(0));
        let d = sample_sense(&[0.3, 0.45, 0.25], 0.74).unwrap();
        assert_eq!(d.choice, SenseChoice::Existing(1));
    }

    #[test]
    fn sample_sense_rejects_malformed() {
        assert!(sample_sense(&[0.5, 0.2], 0.5).is_err());
        assert!(sample_sense(&[1.5, -0.5], 0.5).is_err());
        assert!(sample_sense(&[], 0.5).is_err());
    }

    #[test]
    fn sample_sense_empirical_frequencies() {
        let post = [0.15, 0.55, 0.30];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut hits = [0u64; 3];
        for _ in 0..n {
            let d = sample_sense(&post, rng.gen()).unwrap();
            match d.choice {
                SenseChoice::Existing(i) => hits[i as usize] += 1,
                SenseChoice::New => hits[2] += 1,
            }
        }
        for (h, p) in hits.iter().zip(post.iter()) {
            let rate = *h as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((rate - p).abs() < 3.0 * se, "rate {rate} expected {p}");
        }
    }

    #[test]
    fn spawn_appends_with_count_one() {
        let p = params_with(2, vec![vec![1.0, 0.0]], vec![vec![]]);
        let crp = CrpConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = [0.25, -0.5];
        let idx = spawn_sense(&p, 0, &c, &crp, &mut rng).unwrap();
        assert_eq!(idx, 0);
        p.with_senses(0, |list| {
            assert_eq!(list.len(), 1);
            assert_eq!(list[0].count, 1);
            // noise half-width 0.01/2
            for (v, c) in list[0].vector.iter().zip(c.iter()) {
                assert!((v - c).abs() <= 0.005 + 1e-12);
            }
        });
    }

    #[test]
    fn spawn_zero_noise_copies_context() {
        let p = params_with(2, vec![vec![1.0, 0.0]], vec![vec![]]);
        let crp = CrpConfig {
            sense_init_noise: Some(0.0),
            ..CrpConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        spawn_sense(&p, 0, &[0.25, -0.5], &crp, &mut rng).unwrap();
        p.with_senses(0, |list| assert_eq!(list[0].vector, vec![0.25, -0.5]));
    }

    #[test]
    fn spawn_at_cap_errors() {
        let p = params_with(2, vec![vec![1.0, 0.0]], vec![vec![(vec![1.0, 0.0], 1)]]);
        let crp = CrpConfig {
            max_senses_per_word: 1,
            ..CrpConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(matches!(
            spawn_sense(&p, 0, &[1.0, 0.0], &crp, &mut rng),
            Err(TrainerError::SenseCapReached(0))
        ));
    }

    #[test]
    fn spawns_from_distinct_contexts_differ() {
        let p = params_with(2, vec![vec![1.0, 0.0]], vec![vec![]]);
        let crp = CrpConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        spawn_sense(&p, 0, &[1.0, 0.0], &crp, &mut rng).unwrap();
        spawn_sense(&p, 0, &[0.0, 1.0], &crp, &mut rng).unwrap();
        p.with_senses(0, |list| {
            let cos = cosine(&list[0].vector, &list[1].vector);
            assert!(cos < 0.9, "expected distinct directions, cos {cos}");
        });
    }

    #[test]
    fn sgns_gradient_matches_finite_differences() {
        // d/dv log sigma(u.v) = (1 - sigma(u.v)) u, in f64
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dist = Uniform::new(-1.0f64, 1.0);
        for _ in 0..50 {
            let u: Vec<f64> = (0..6).map(|_| dist.sample(&mut rng)).collect();
            let v: Vec<f64> = (0..6).map(|_| dist.sample(&mut rng)).collect();
            let loss = |v: &[f64]| sigmoid(crate::scalar::dot(&u, v)).ln();
            let s = sigmoid(crate::scalar::dot(&u, &v));
            let eps = 1e-5;
            for k in 0..6 {
                let mut vp = v.clone();
                let mut vm = v.clone();
                vp[k] += eps;
                vm[k] -= eps;
                let numeric = (loss(&vp) - loss(&vm)) / (2.0 * eps);
                let analytic = (1.0 - s) * u[k];
                let rel = (numeric - analytic).abs()
                    / (numeric.abs() + analytic.abs()).max(1e-8);
                assert!(rel < 1e-4, "rel err {rel}");
            }
        }
    }

    #[test]
    fn sgns_zero_lr_is_identity() {
        let p = params_with(2, vec![vec![0.5, -0.5], vec![1.0, 2.0]], vec![vec![], vec![]]);
        let mut scratch = Scratch::new(2);
        let before: Vec<f64> = (0..4).map(|i| f64::atomic_get(&p.global_in[i])).collect();
        sgns_update(&p, Center::Global(0), 1, &[1], 0.0, &mut scratch);
        let after: Vec<f64> = (0..4).map(|i| f64::atomic_get(&p.global_in[i])).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn sgns_orthogonal_positive_step_is_half_lr_u() {
        // v.u = 0 so sigma = 0.5 and the positive-pair center step is 0.5*lr*u
        let p = params_with(
            2,
            vec![vec![1.0, 0.0], vec![0.0, 2.0]],
            vec![vec![], vec![]],
        );
        let mut scratch = Scratch::new(2);
        // plant u as global_out of word 1
        f64::atomic_set(&p.global_out[2], 0.0);
        f64::atomic_set(&p.global_out[3], 2.0);
        sgns_update(&p, Center::Global(0), 1, &[], 1.0, &mut scratch);
        let v_after = [
            f64::atomic_get(&p.global_in[0]),
            f64::atomic_get(&p.global_in[1]),
        ];
        // delta = 0.5 * 1.0 * (0,2) = (0,1)
        assert!((v_after[0] - 1.0).abs() < 1e-12);
        assert!((v_after[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sgns_sense_center_mirrors_half_to_global() {
        let p = params_with(
            2,
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            vec![vec![(vec![1.0, 0.0], 1)], vec![]],
        );
        let mut scratch = Scratch::new(2);
        f64::atomic_set(&p.global_out[2], 0.0);
        f64::atomic_set(&p.global_out[3], 2.0);
        sgns_update(
            &p,
            Center::Sense { word: 0, sense: 0 },
            1,
            &[],
            1.0,
            &mut scratch,
        );
        // sense center got (0,1); global mirror half of that
        p.with_senses(0, |list| {
            assert!((list[0].vector[1] - 1.0).abs() < 1e-12);
        });
        assert!((f64::atomic_get(&p.global_in[1]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn adversarial_lr_stays_finite() {
        let vocab = Vocabulary::build(["a b c d a b c d a b"], 1).unwrap();
        let stream = TokenStream::from_lines(["a b c d a b c d a b"], &vocab);
        let cfg = TrainConfig {
            dim: 4,
            epochs: 2,
            lr_initial: 100.0,
            lr_floor: 50.0,
            subsample: 1e9, // keep everything
            ..TrainConfig::default()
        };
        let model = train_baseline::<f32>(&stream, &vocab, &cfg).unwrap();
        assert!(model.is_finite());
    }

    #[test]
    fn empty_and_pairless_streams_error() {
        let vocab = Vocabulary::build(["a b"], 1).unwrap();
        let empty = TokenStream::from_sentences(vec![]);
        assert!(matches!(
            train_baseline::<f32>(&empty, &vocab, &TrainConfig::default()),
            Err(TrainerError::EmptyStream)
        ));
        let singles = TokenStream::from_sentences(vec![vec![0], vec![1]]);
        assert!(matches!(
            train_baseline::<f32>(&singles, &vocab, &TrainConfig::default()),
            Err(TrainerError::NoTrainingPairs)
        ));
    }

    fn small_corpus() -> (Vocabulary, TokenStream) {
        // interleave two topic blocks so windows are topic-pure
        let mut lines = Vec::new();
        for i in 0..200 {
            if i % 2 == 0 {
                lines.push("x red green blue y red green blue x y".to_string());
            } else {
                lines.push("q loud soft noise r loud soft noise q r".to_string());
            }
        }
        let vocab = Vocabulary::build(lines.iter(), 1).unwrap();
        let stream = TokenStream::from_lines(lines.iter(), &vocab);
        (vocab, stream)
    }

    #[test]
    fn baseline_groups_interchangeable_tokens() {
        let (vocab, stream) = small_corpus();
        let cfg = TrainConfig {
            dim: 16,
            epochs: 8,
            window: 3,
            subsample: 1e9,
            seed: 2,
            ..TrainConfig::default()
        };
        let model = train_baseline::<f32>(&stream, &vocab, &cfg).unwrap();
        // x and y share all contexts; q lives in the other topic
        let x = vocab.id("x").unwrap();
        let y = vocab.id("y").unwrap();
        let q = vocab.id("q").unwrap();
        let cos_xy = cosine(model.global_in_row(x), model.global_in_row(y));
        let cos_xq = cosine(model.global_in_row(x), model.global_in_row(q));
        assert!(
            cos_xy > cos_xq,
            "interchangeable pair not grouped: xy {cos_xy} xq {cos_xq}"
        );
    }

    #[test]
    fn single_worker_determinism() {
        let (vocab, stream) = small_corpus();
        let cfg = TrainConfig {
            dim: 8,
            epochs: 2,
            seed: 42,
            workers: 1,
            ..TrainConfig::default()
        };
        let crp = CrpConfig::default();
        let a = train_multisense::<f32>(&stream, &vocab, &cfg, &crp, None).unwrap();
        let b = train_multisense::<f32>(&stream, &vocab, &cfg, &crp, None).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn assignment_log_matches_counts() {
        let (vocab, stream) = small_corpus();
        let cfg = TrainConfig {
            dim: 8,
            epochs: 3,
            seed: 7,
            workers: 1,
            subsample: 1e9,
            ..TrainConfig::default()
        };
        // prune floor 1 so zero-assignment senses drop but order is kept
        let crp = CrpConfig {
            prune_min_count: 1,
            ..CrpConfig::default()
        };
        let mut trainer = Trainer::new(cfg.clone(), crp);
        trainer.log_assignments = true;
        let out = trainer
            .run::<f32>(TrainMode::MultiSense, &stream, &vocab, None)
            .unwrap();
        let last_epoch = cfg.epochs - 1;
        // recount final-epoch assignments per (word, sense index)
        let mut counts: std::collections::HashMap<(u32, u32), u64> =
            std::collections::HashMap::new();
        for ev in out.assignments.iter().filter(|e| e.epoch == last_epoch) {
            *counts.entry((ev.word, ev.sense)).or_insert(0) += 1;
        }
        let floor = out
            .model
            .meta
            .crp
            .effective_prune_min_count(stream.token_count());
        for w in 0..vocab.len() as u32 {
            // survivors = senses with >= floor assignments, order preserved
            let mut expected: Vec<u64> = Vec::new();
            let max_idx = counts
                .keys()
                .filter(|(word, _)| *word == w)
                .map(|&(_, s)| s)
                .max();
            if let Some(max_idx) = max_idx {
                for s in 0..=max_idx {
                    let c = counts.get(&(w, s)).copied().unwrap_or(0);
                    if c >= floor {
                        expected.push(c);
                    }
                }
            }
            let actual: Vec<u64> = out.model.senses[w as usize]
                .iter()
                .map(|e| e.count)
                .collect();
            assert_eq!(actual, expected, "word {w} counter mismatch");
        }
    }

    #[test]
    fn multisense_respects_sense_cap() {
        let (vocab, stream) = small_corpus();
        let cfg = TrainConfig {
            dim: 8,
            epochs: 4,
            seed: 3,
            ..TrainConfig::default()
        };
        let crp = CrpConfig {
            max_senses_per_word: 2,
            gamma: 100.0, // push hard toward spawning
            prune_min_count: 1,
            ..CrpConfig::default()
        };
        let model = train_multisense::<f32>(&stream, &vocab, &cfg, &crp, None).unwrap();
        assert!(model.senses.iter().all(|l| l.len() <= 2));
        assert!(model.total_senses() > 0);
    }

    #[test]
    fn warmstart_dimension_mismatch_errors() {
        let (vocab, stream) = small_corpus();
        let cfg8 = TrainConfig {
            dim: 8,
            epochs: 1,
            ..TrainConfig::default()
        };
        let base = train_baseline::<f32>(&stream, &vocab, &cfg8).unwrap();
        let cfg16 = TrainConfig {
            dim: 16,
            epochs: 1,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train_multisense::<f32>(&stream, &vocab, &cfg16, &CrpConfig::default(), Some(base)),
            Err(TrainerError::WarmstartMismatch(_))
        ));
    }

    #[test]
    fn negative_table_tracks_powered_frequencies() {
        let vocab = Vocabulary::build(["a a a a a a a a b b c"], 1).unwrap();
        let table = NegativeTable::with_size(&vocab, 1 << 16);
        let mut hist = vec![0u64; vocab.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 200_000;
        for _ in 0..n {
            hist[table.draw(&mut rng) as usize] += 1;
        }
        let total: f64 = (0..vocab.len() as u32)
            .map(|w| (vocab.count(w) as f64).powf(0.75))
            .sum();
        for w in 0..vocab.len() as u32 {
            let expected = (vocab.count(w) as f64).powf(0.75) / total;
            let rate = hist[w as usize] as f64 / n as f64;
            assert!(
                (rate - expected).abs() < 0.01,
                "word {w}: rate {rate} expected {expected}"
            );
        }
    }
}
