//! Corpus ingestion: tokenization, vocabulary construction, token streams,
//! and frequent-word subsampling.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

/// Identifier for the tokenization rule, recorded in model metadata so
/// evaluation applies the same preprocessing as training.
pub const TOKENIZER_RULE: &str = "lowercase-ws-edgepunct-v1";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("no token meets min_count={0}; corpus is empty after filtering")]
    EmptyVocabulary(u64),
    #[error("vocabulary file is malformed: {0}")]
    MalformedVocabFile(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Lowercase, whitespace-split, and strip non-alphanumeric characters from
/// token edges. Empty tokens are dropped. Invalid UTF-8 must be replaced by
/// the caller before reaching here (readers below use lossy decoding).
pub fn tokenize(line: &str) -> Vec<String> {
    line.split_whitespace()
        .filter_map(|raw| {
            let t = raw.trim_matches(|c: char| !c.is_alphanumeric());
            if t.is_empty() {
                None
            } else {
                Some(t.to_lowercase())
            }
        })
        .collect()
}

/// Token-to-id map with corpus frequencies.
///
/// Ids are dense 0..V-1 assigned in descending frequency order, ties broken
/// lexicographically, so the unigram table can be laid out frequency-first.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
    counts: Vec<u64>,
    total_tokens: u64,
    min_count: u64,
}

impl Vocabulary {
    /// Count tokens in `sentences` and keep those with frequency >= min_count.
    pub fn build<I, T>(sentences: I, min_count: u64) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<str>,
    {
        let mut freq: HashMap<String, u64> = HashMap::new();
        for line in sentences {
            for tok in tokenize(line.as_ref()) {
                *freq.entry(tok).or_insert(0) += 1;
            }
        }
        Self::from_counts(freq, min_count)
    }

    /// Build from an already-counted table. Used by `build` and the vocab
    /// file loader; applies the same ordering rule in both paths.
    pub fn from_counts(
        freq: HashMap<String, u64>,
        min_count: u64,
    ) -> Result<Self, CorpusError> {
        let mut entries: Vec<(String, u64)> = freq
            .into_iter()
            .filter(|&(_, c)| c >= min_count)
            .collect();
        if entries.is_empty() {
            return Err(CorpusError::EmptyVocabulary(min_count));
        }
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut token_to_id = HashMap::with_capacity(entries.len());
        let mut id_to_token = Vec::with_capacity(entries.len());
        let mut counts = Vec::with_capacity(entries.len());
        let mut total = 0u64;
        for (id, (tok, c)) in entries.into_iter().enumerate() {
            token_to_id.insert(tok.clone(), id as u32);
            id_to_token.push(tok);
            counts.push(c);
            total += c;
        }
        Ok(Vocabulary {
            token_to_id,
            id_to_token,
            counts,
            total_tokens: total,
            min_count,
        })
    }

    /// Reassemble a vocabulary whose id order is already canonical
    /// (descending count, ties lexicographic). Used by model deserialization.
    pub(crate) fn from_parts(
        id_to_token: Vec<String>,
        counts: Vec<u64>,
        total_tokens: u64,
        min_count: u64,
    ) -> Self {
        debug_assert_eq!(id_to_token.len(), counts.len());
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(id, t)| (t.clone(), id as u32))
            .collect();
        Vocabulary {
            token_to_id,
            id_to_token,
            counts,
            total_tokens,
            min_count,
        }
    }

    /// Build from a one-sentence-per-line text file.
    pub fn build_from_file(path: &Path, min_count: u64) -> Result<Self, CorpusError> {
        let reader = lossy_lines(path)?;
        let mut freq: HashMap<String, u64> = HashMap::new();
        for line in reader {
            for tok in tokenize(&line?) {
                *freq.entry(tok).or_insert(0) += 1;
            }
        }
        Self::from_counts(freq, min_count)
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.id_to_token[id as usize]
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts[id as usize]
    }

    /// Sum of retained token counts.
    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    /// Corpus frequency of `id` as a fraction of retained tokens.
    pub fn frequency(&self, id: u32) -> f64 {
        self.counts[id as usize] as f64 / self.total_tokens as f64
    }

    /// Map a tokenized sentence to ids, None for out-of-vocabulary tokens.
    pub fn lookup_sentence(&self, tokens: &[String]) -> Vec<Option<u32>> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    /// Write the vocabulary file: header `VOCAB v1 <V> <total> <min_count>`,
    /// then one `<token>\t<count>` line per id in id order.
    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(
            w,
            "VOCAB v1 {} {} {}",
            self.len(),
            self.total_tokens,
            self.min_count
        )?;
        for id in 0..self.len() {
            writeln!(w, "{}\t{}", self.id_to_token[id], self.counts[id])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let mut lines = BufReader::new(File::open(path)?).lines();
        let header = lines
            .next()
            .ok_or_else(|| CorpusError::MalformedVocabFile("missing header".into()))??;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 || fields[0] != "VOCAB" || fields[1] != "v1" {
            return Err(CorpusError::MalformedVocabFile(format!(
                "bad header: {header:?}"
            )));
        }
        let v: usize = fields[2]
            .parse()
            .map_err(|_| CorpusError::MalformedVocabFile("bad V".into()))?;
        let total: u64 = fields[3]
            .parse()
            .map_err(|_| CorpusError::MalformedVocabFile("bad total".into()))?;
        let min_count: u64 = fields[4]
            .parse()
            .map_err(|_| CorpusError::MalformedVocabFile("bad min_count".into()))?;

        let mut token_to_id = HashMap::with_capacity(v);
        let mut id_to_token = Vec::with_capacity(v);
        let mut counts = Vec::with_capacity(v);
        for (id, line) in lines.enumerate() {
            let line = line?;
            let (tok, cnt) = line.split_once('\t').ok_or_else(|| {
                CorpusError::MalformedVocabFile(format!("line {} lacks a tab", id + 2))
            })?;
            let cnt: u64 = cnt.parse().map_err(|_| {
                CorpusError::MalformedVocabFile(format!("bad count on line {}", id + 2))
            })?;
            token_to_id.insert(tok.to_string(), id as u32);
            id_to_token.push(tok.to_string());
            counts.push(cnt);
        }
        if id_to_token.len() != v {
            return Err(CorpusError::MalformedVocabFile(format!(
                "header declares {} entries, file has {}",
                v,
                id_to_token.len()
            )));
        }
        Ok(Vocabulary {
            token_to_id,
            id_to_token,
            counts,
            total_tokens: total,
            min_count,
        })
    }
}

/// Ordered sentences as token-id arrays with unknown tokens dropped.
#[derive(Debug, Clone, Default)]
pub struct TokenStream {
    sentences: Vec<Vec<u32>>,
    /// SHA-256 of the source bytes when read from a file.
    source_hash: Option<String>,
}

impl TokenStream {
    pub fn from_sentences(sentences: Vec<Vec<u32>>) -> Self {
        TokenStream {
            sentences,
            source_hash: None,
        }
    }

    /// Tokenize `lines` and map through the vocabulary, dropping unknowns.
    pub fn from_lines<I, T>(lines: I, vocab: &Vocabulary) -> Self
    where
        I: IntoIterator<Item = T>,
        T: AsRef<str>,
    {
        let sentences = lines
            .into_iter()
            .map(|line| {
                tokenize(line.as_ref())
                    .iter()
                    .filter_map(|t| vocab.id(t))
                    .collect()
            })
            .collect();
        TokenStream {
            sentences,
            source_hash: None,
        }
    }

    /// Read a one-sentence-per-line file, recording the source hash.
    pub fn from_file(path: &Path, vocab: &Vocabulary) -> Result<Self, CorpusError> {
        let hash = hash_file(path)?;
        let mut sentences = Vec::new();
        for line in lossy_lines(path)? {
            let ids: Vec<u32> = tokenize(&line?)
                .iter()
                .filter_map(|t| vocab.id(t))
                .collect();
            sentences.push(ids);
        }
        Ok(TokenStream {
            sentences,
            source_hash: Some(hash),
        })
    }

    pub fn sentences(&self) -> &[Vec<u32>] {
        &self.sentences
    }

    pub fn source_hash(&self) -> Option<&str> {
        self.source_hash.as_deref()
    }

    pub fn token_count(&self) -> u64 {
        self.sentences.iter().map(|s| s.len() as u64).sum()
    }
}

/// Keep-probability for frequent-word subsampling:
/// min(1, sqrt(threshold/frequency) + threshold/frequency).
pub fn subsample_keep_probability(word_frequency: f64, threshold: f64) -> f64 {
    debug_assert!(word_frequency > 0.0 && threshold > 0.0);
    let r = threshold / word_frequency;
    (r.sqrt() + r).min(1.0)
}

/// Subsampling decision for one occurrence given a uniform draw in [0,1).
pub fn subsample_keep(word_frequency: f64, threshold: f64, draw: f64) -> bool {
    draw < subsample_keep_probability(word_frequency, threshold)
}

/// SHA-256 of a file's bytes, hex-encoded.
pub fn hash_file(path: &Path) -> Result<String, CorpusError> {
    let mut f = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex_string(&hasher.finalize()))
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Line iterator that replaces invalid UTF-8 instead of failing.
fn lossy_lines(path: &Path) -> Result<impl Iterator<Item = std::io::Result<String>>, CorpusError> {
    let reader = BufReader::new(File::open(path)?);
    Ok(reader.split(b'\n').map(|chunk| {
        chunk.map(|mut bytes| {
            if bytes.last() == Some(&b'\r') {
                bytes.pop();
            }
            String::from_utf8_lossy(&bytes).into_owned()
        })
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_strips_and_lowercases() {
        assert_eq!(
            tokenize("Apple releases its new ipads."),
            vec!["apple", "releases", "its", "new", "ipads"]
        );
    }

    #[test]
    fn tokenize_empty() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("  \t ").is_empty());
    }

    #[test]
    fn tokenize_collapses_whitespace_and_edge_punct() {
        assert_eq!(tokenize("river   bank,"), vec!["river", "bank"]);
        assert_eq!(tokenize("\"don't\" -- stop"), vec!["don't", "stop"]);
    }

    #[test]
    fn build_vocab_counts() {
        let v = Vocabulary::build(["a a b"], 1).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.id("a"), Some(0));
        assert_eq!(v.count(0), 2);
        assert_eq!(v.id("b"), Some(1));
        assert_eq!(v.count(1), 1);
        assert_eq!(v.total_tokens(), 3);
    }

    #[test]
    fn build_vocab_threshold() {
        let v = Vocabulary::build(["a a b"], 2).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v.id("a"), Some(0));
        assert_eq!(v.id("b"), None);
    }

    #[test]
    fn build_vocab_empty_is_error() {
        assert!(matches!(
            Vocabulary::build(["a b"], 5),
            Err(CorpusError::EmptyVocabulary(5))
        ));
    }

    #[test]
    fn vocab_ties_break_lexicographically() {
        let v = Vocabulary::build(["b a c b a c"], 1).unwrap();
        // all counts equal: ids alphabetical
        assert_eq!(v.id("a"), Some(0));
        assert_eq!(v.id("b"), Some(1));
        assert_eq!(v.id("c"), Some(2));
    }

    #[test]
    fn vocab_id_token_round_trip() {
        let v = Vocabulary::build(["the cat sat on the mat"], 1).unwrap();
        for id in 0..v.len() as u32 {
            assert_eq!(v.id(v.token(id)), Some(id));
        }
    }

    #[test]
    fn vocab_file_round_trip() {
        let v = Vocabulary::build(["the cat sat on the mat the end"], 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        v.save(&path).unwrap();
        let loaded = Vocabulary::load(&path).unwrap();
        assert_eq!(v, loaded);
    }

    #[test]
    fn token_stream_drops_unknowns_preserves_order() {
        let v = Vocabulary::build(["a a b"], 2).unwrap();
        let ts = TokenStream::from_lines(["a b a", "b b"], &v);
        assert_eq!(ts.sentences(), &[vec![0, 0], vec![]]);
    }

    #[test]
    fn subsample_clamps_to_one() {
        assert_eq!(subsample_keep_probability(1e-6, 1e-5), 1.0);
        assert!(subsample_keep(1e-6, 1e-5, 0.999999));
    }

    #[test]
    fn subsample_hand_value() {
        let p = subsample_keep_probability(1e-3, 1e-5);
        assert!((p - 0.11).abs() < 1e-12);
        assert!(!subsample_keep(1e-3, 1e-5, 0.5));
        assert!(subsample_keep(1e-3, 1e-5, 0.10));
    }

    #[test]
    fn subsample_empirical_rate() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let p = subsample_keep_probability(1e-3, 1e-5);
        let n = 100_000;
        let kept = (0..n)
            .filter(|_| subsample_keep(1e-3, 1e-5, rng.gen::<f64>()))
            .count();
        let rate = kept as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!(
            (rate - p).abs() < 3.0 * se,
            "rate {rate} vs p {p} (3se = {})",
            3.0 * se
        );
    }
}
