//! Parameter storage for global and sense-specific embeddings, training
//! configuration, and the on-disk model format.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Vocabulary, TOKENIZER_RULE};
use crate::scalar::Scalar;

const MODEL_MAGIC: [u8; 4] = *b"MSEM";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model format version mismatch: {0}")]
    VersionMismatch(String),
    #[error("model file truncated: {0}")]
    Truncated(String),
    #[error("model file checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("model file corrupt: {0}")]
    Corrupt(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// Skip-gram training hyperparameters (shared by baseline and multi-sense
/// modes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Embedding width K.
    pub dim: usize,
    /// Context tokens considered on each side of the center.
    pub window: usize,
    pub epochs: u32,
    /// Negative samples per positive pair.
    pub negatives: usize,
    pub lr_initial: f64,
    /// Learning rate floor for the linear decay.
    pub lr_floor: f64,
    /// Frequent-word subsampling threshold.
    pub subsample: f64,
    pub min_count: u64,
    pub seed: u64,
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 50,
            window: 5,
            epochs: 3,
            negatives: 5,
            lr_initial: 0.025,
            lr_floor: 0.0001,
            subsample: 1e-4,
            min_count: 5,
            seed: 1,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.dim == 0 {
            return Err(invalid("dim must be >= 1"));
        }
        if self.window == 0 {
            return Err(invalid("window must be >= 1"));
        }
        if self.epochs == 0 {
            return Err(invalid("epochs must be >= 1"));
        }
        if self.negatives == 0 {
            return Err(invalid("negatives must be >= 1"));
        }
        if !(self.lr_floor > 0.0 && self.lr_floor <= self.lr_initial) {
            return Err(invalid("require 0 < lr_floor <= lr_initial"));
        }
        if self.subsample <= 0.0 {
            return Err(invalid("subsample threshold must be > 0"));
        }
        if self.workers == 0 {
            return Err(invalid("workers must be >= 1"));
        }
        Ok(())
    }
}

/// Sense-bookkeeping hyperparameters for the multi-sense trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrpConfig {
    /// Concentration: preference for opening a new sense.
    pub gamma: f64,
    /// Likelihood temperature; smaller values sharpen the sense posterior.
    pub temperature: f64,
    pub max_senses_per_word: usize,
    /// Assignment-count floor for a sense to survive an epoch, quoted per
    /// 10M corpus tokens and scaled linearly to the actual corpus size.
    pub prune_min_count: u64,
    /// Uniform noise half-width added on sense spawn; None means 0.01/K.
    pub sense_init_noise: Option<f64>,
    /// Run the first epoch without sense bookkeeping so spawning happens
    /// against trained rather than random global vectors.
    pub burn_in: bool,
}

impl Default for CrpConfig {
    fn default() -> Self {
        CrpConfig {
            gamma: 0.5,
            temperature: 0.2,
            max_senses_per_word: 8,
            prune_min_count: 20,
            sense_init_noise: None,
            burn_in: true,
        }
    }
}

impl CrpConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.gamma <= 0.0 {
            return Err(invalid("gamma must be > 0"));
        }
        if self.temperature <= 0.0 {
            return Err(invalid("temperature must be > 0"));
        }
        if self.max_senses_per_word == 0 {
            return Err(invalid("max_senses_per_word must be >= 1"));
        }
        if self.prune_min_count == 0 {
            return Err(invalid("prune_min_count must be >= 1"));
        }
        if let Some(n) = self.sense_init_noise {
            if n < 0.0 {
                return Err(invalid("sense_init_noise must be >= 0"));
            }
        }
        Ok(())
    }

    pub fn noise_scale(&self, dim: usize) -> f64 {
        self.sense_init_noise.unwrap_or(0.01 / dim as f64)
    }

    /// Prune threshold for a corpus of `corpus_tokens` tokens per epoch.
    pub fn effective_prune_min_count(&self, corpus_tokens: u64) -> u64 {
        let scaled = self.prune_min_count as f64 * corpus_tokens as f64 / 1e7;
        (scaled.round() as u64).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Baseline,
    MultiSense,
}

impl std::fmt::Display for TrainMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrainMode::Baseline => f.write_str("baseline"),
            TrainMode::MultiSense => f.write_str("multisense"),
        }
    }
}

/// Training provenance stored inside the model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub mode: TrainMode,
    pub train: TrainConfig,
    pub crp: CrpConfig,
    pub tokenizer_rule: String,
    pub corpus_hash: Option<String>,
    pub corpus_tokens: u64,
    pub epochs_completed: u32,
    /// Sum over the vocabulary of the number of retained senses.
    pub total_senses: u64,
    /// Senses dropped (and lists re-indexed) by end-of-epoch pruning.
    pub pruned_senses: u64,
    /// Run manifest JSON from the producing invocation, if any.
    pub manifest_json: Option<String>,
}

impl ModelMeta {
    pub fn new(mode: TrainMode, train: TrainConfig, crp: CrpConfig) -> Self {
        ModelMeta {
            mode,
            train,
            crp,
            tokenizer_rule: TOKENIZER_RULE.to_string(),
            corpus_hash: None,
            corpus_tokens: 0,
            epochs_completed: 0,
            total_senses: 0,
            pruned_senses: 0,
            manifest_json: None,
        }
    }
}

/// One sense of one word: its vector and the number of tokens assigned to
/// it in the most recent counting epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct SenseEntry<S> {
    pub vector: Vec<S>,
    pub count: u64,
}

/// Global input/output embedding tables plus per-word sense lists.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSenseModel<S> {
    pub dim: usize,
    pub vocab: Vocabulary,
    /// V×K row-major: input vector e_w per word.
    pub global_in: Vec<S>,
    /// V×K row-major: output (prediction) vector per word.
    pub global_out: Vec<S>,
    /// Ordered sense list per word; indices are the sense ids.
    pub senses: Vec<Vec<SenseEntry<S>>>,
    pub meta: ModelMeta,
}

impl<S: Scalar> MultiSenseModel<S> {
    /// Fresh model: global_in uniform in [-0.5/K, 0.5/K], global_out zero,
    /// no senses.
    pub fn init(vocab: Vocabulary, meta: ModelMeta, seed: u64) -> Self {
        let dim = meta.train.dim;
        let v = vocab.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = S::of(0.5 / dim as f64);
        let dist = Uniform::new_inclusive(-bound, bound);
        let global_in = (0..v * dim).map(|_| dist.sample(&mut rng)).collect();
        MultiSenseModel {
            dim,
            vocab,
            global_in,
            global_out: vec![S::zero(); v * dim],
            senses: vec![Vec::new(); v],
            meta,
        }
    }

    pub fn vocab_len(&self) -> usize {
        self.vocab.len()
    }

    pub fn global_in_row(&self, word: u32) -> &[S] {
        let k = self.dim;
        &self.global_in[word as usize * k..(word as usize + 1) * k]
    }

    pub fn global_in_row_mut(&mut self, word: u32) -> &mut [S] {
        let k = self.dim;
        &mut self.global_in[word as usize * k..(word as usize + 1) * k]
    }

    pub fn global_out_row(&self, word: u32) -> &[S] {
        let k = self.dim;
        &self.global_out[word as usize * k..(word as usize + 1) * k]
    }

    pub fn word_senses(&self, word: u32) -> &[SenseEntry<S>] {
        &self.senses[word as usize]
    }

    /// Sum over words of the number of senses.
    pub fn total_senses(&self) -> u64 {
        self.senses.iter().map(|s| s.len() as u64).sum()
    }

    /// Bring meta counters in line with the parameter state.
    pub fn sync_meta(&mut self) {
        self.meta.total_senses = self.total_senses();
    }

    pub fn is_finite(&self) -> bool {
        self.global_in.iter().all(|x| x.is_finite())
            && self.global_out.iter().all(|x| x.is_finite())
            && self
                .senses
                .iter()
                .flatten()
                .all(|e| e.vector.iter().all(|x| x.is_finite()))
    }

    /// Hex SHA-256 of the embedded manifest (or of the meta block when the
    /// model was produced without a manifest). Reports cite this.
    pub fn manifest_hash(&self) -> String {
        let payload = match &self.meta.manifest_json {
            Some(j) => j.clone(),
            None => serde_json::to_string(&self.meta).expect("meta serializes"),
        };
        let mut h = Sha256::new();
        h.update(payload.as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Text export: per word a `word GLOBAL - v1 ... vK` row followed by one
    /// `word sense_idx count v1 ... vK` row per sense.
    pub fn export_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut line = String::new();
        for id in 0..self.vocab.len() as u32 {
            let tok = self.vocab.token(id);
            line.clear();
            line.push_str(tok);
            line.push_str(" GLOBAL -");
            for x in self.global_in_row(id) {
                line.push(' ');
                line.push_str(&x.to_string());
            }
            writeln!(w, "{line}")?;
            for (idx, entry) in self.senses[id as usize].iter().enumerate() {
                line.clear();
                line.push_str(tok);
                line.push_str(&format!(" {idx} {}", entry.count));
                for x in &entry.vector {
                    line.push(' ');
                    line.push_str(&x.to_string());
                }
                writeln!(w, "{line}")?;
            }
        }
        Ok(())
    }
}

// --- binary format (f32 payload) -------------------------------------------
//
// Layout, all integers little-endian:
//   magic "MSEM" | version u32 | dim u32 | vocab_len u32
//   meta_len u32 | meta JSON bytes
//   vocab: total_tokens u64, min_count u64,
//          then per word: token_len u32, token bytes, count u64
//   per-word sense counts: V × u32
//   global_in: V*K × f32 | global_out: V*K × f32
//   senses per word in id order: per sense count u64, vector K × f32
//   crc32 u32 over every preceding byte

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], ModelError> {
        if self.pos + n > self.buf.len() {
            return Err(ModelError::Truncated(format!(
                "unexpected end of file reading {what}"
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32_vec(&mut self, n: usize, what: &str) -> Result<Vec<f32>, ModelError> {
        let bytes = self.take(n * 4, what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

impl MultiSenseModel<f32> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let v = self.vocab.len();
        let k = self.dim;
        let meta_json = {
            let mut meta = self.meta.clone();
            meta.total_senses = self.total_senses();
            serde_json::to_vec(&meta).expect("meta serializes")
        };
        let mut out = Vec::with_capacity(64 + meta_json.len() + v * k * 8);
        out.extend_from_slice(&MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&(k as u32).to_le_bytes());
        out.extend_from_slice(&(v as u32).to_le_bytes());
        out.extend_from_slice(&(meta_json.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta_json);
        out.extend_from_slice(&self.vocab.total_tokens().to_le_bytes());
        out.extend_from_slice(&self.vocab.min_count().to_le_bytes());
        for id in 0..v as u32 {
            let tok = self.vocab.token(id).as_bytes();
            out.extend_from_slice(&(tok.len() as u32).to_le_bytes());
            out.extend_from_slice(tok);
            out.extend_from_slice(&self.vocab.count(id).to_le_bytes());
        }
        for list in &self.senses {
            out.extend_from_slice(&(list.len() as u32).to_le_bytes());
        }
        for x in &self.global_in {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for x in &self.global_out {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for list in &self.senses {
            for entry in list {
                out.extend_from_slice(&entry.count.to_le_bytes());
                for x in &entry.vector {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&self.to_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, ModelError> {
        let mut c = Cursor { buf, pos: 0 };
        let magic = c.take(4, "magic")?;
        if magic != MODEL_MAGIC {
            return Err(ModelError::VersionMismatch(format!(
                "bad magic {magic:02x?}, expected {MODEL_MAGIC:02x?}"
            )));
        }
        let version = c.u32("version")?;
        if version != MODEL_VERSION {
            return Err(ModelError::VersionMismatch(format!(
                "file is version {version}, reader supports {MODEL_VERSION}"
            )));
        }
        let k = c.u32("dim")? as usize;
        let v = c.u32("vocab_len")? as usize;
        let meta_len = c.u32("meta length")? as usize;
        let meta_bytes = c.take(meta_len, "meta block")?;
        let meta: ModelMeta = serde_json::from_slice(meta_bytes)
            .map_err(|e| ModelError::Corrupt(format!("meta block: {e}")))?;

        let total_tokens = c.u64("vocab total")?;
        let min_count = c.u64("vocab min_count")?;
        let mut id_to_token = Vec::with_capacity(v);
        let mut counts = Vec::with_capacity(v);
        for i in 0..v {
            let len = c.u32("token length")? as usize;
            let tok = std::str::from_utf8(c.take(len, "token bytes")?)
                .map_err(|e| ModelError::Corrupt(format!("token {i}: {e}")))?;
            id_to_token.push(tok.to_string());
            counts.push(c.u64("token count")?);
        }
        let vocab = Vocabulary::from_parts(id_to_token, counts, total_tokens, min_count);

        let mut sense_counts = Vec::with_capacity(v);
        for _ in 0..v {
            sense_counts.push(c.u32("sense count header")? as usize);
        }
        let global_in = c.f32_vec(v * k, "global_in matrix")?;
        let global_out = c.f32_vec(v * k, "global_out matrix")?;
        let mut senses = Vec::with_capacity(v);
        for &n in &sense_counts {
            let mut list = Vec::with_capacity(n);
            for _ in 0..n {
                let count = c.u64("sense assignment count")?;
                let vector = c.f32_vec(k, "sense vector")?;
                list.push(SenseEntry { vector, count });
            }
            senses.push(list);
        }

        let body_end = c.pos;
        let stored = c.u32("checksum trailer")?;
        if c.pos != buf.len() {
            return Err(ModelError::Corrupt(format!(
                "{} trailing bytes after checksum",
                buf.len() - c.pos
            )));
        }
        let computed = crc32fast::hash(&buf[..body_end]);
        if stored != computed {
            return Err(ModelError::ChecksumMismatch { stored, computed });
        }
        Ok(MultiSenseModel {
            dim: k,
            vocab,
            global_in,
            global_out,
            senses,
            meta,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let mut buf = Vec::new();
        File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}
