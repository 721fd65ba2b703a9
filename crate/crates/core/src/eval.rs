//! Evaluation: contextual word similarity against human ratings,
//! context-conditioned nearest neighbors, and the pseudoword
//! sense-recovery benchmark with its purity metric.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::tokenize;
use crate::inference::{resolve, InferenceOptions, ResolveMode};
use crate::model::{CrpConfig, MultiSenseModel};
use crate::scalar::{self, Scalar};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("vector dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("input length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least two observations, got {0}")]
    TooShort(usize),
    #[error("rank correlation undefined: {0} input is constant")]
    ConstantInput(&'static str),
    #[error("no scorable pairs in the dataset")]
    EmptyDataset,
    #[error("malformed record: {0}")]
    MalformedRecord(String),
    #[error("target word {0:?} not in the model vocabulary")]
    UnknownTarget(String),
    #[error("mode {0} is not usable here (needs a K-dim query)")]
    UnsupportedMode(ResolveMode),
    #[error("source word {word:?} occurs {count} times, need at least {need}")]
    UnderFrequentSource { word: String, count: u64, need: u64 },
    #[error("pseudoword {0:?} is not in the model vocabulary")]
    PseudowordMissing(String),
    #[error("pseudoword pair is degenerate: {0:?} paired with itself")]
    DegeneratePair(String),
    #[error("could not assemble {want} pseudoword pairs (found {got})")]
    NotEnoughPairs { want: usize, got: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Cosine with an explicit dimension check (the raw kernel lives in
/// [`crate::scalar::cosine`]). Zero-norm input gives 0.
pub fn cosine<S: Scalar>(a: &[S], b: &[S]) -> Result<S, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::DimensionMismatch(a.len(), b.len()));
    }
    Ok(scalar::cosine(a, b))
}

/// Average ranks (1-based), ties sharing the mean of the ranks they span.
fn average_ranks(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(EvalError::TooShort(x.len()));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(EvalError::ConstantInput("first"));
    }
    if syy == 0.0 {
        return Err(EvalError::ConstantInput("second"));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

// --- contextual word similarity ----------------------------------------------

/// One human-rated pair: each target word inside its own context sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct ScwsRecord {
    pub word1: String,
    pub tokens1: Vec<String>,
    pub pos1: usize,
    pub word2: String,
    pub tokens2: Vec<String>,
    pub pos2: usize,
    /// Mean of the per-pair human ratings (0-10 scale).
    pub score: f64,
}

/// Extract the `<b>...</b>`-marked target from a context string; returns the
/// tokenized context (markers stripped) and the target's token position.
fn parse_marked_context(ctx: &str) -> Result<(Vec<String>, usize), EvalError> {
    let open = ctx
        .find("<b>")
        .ok_or_else(|| EvalError::MalformedRecord("context lacks <b> marker".into()))?;
    let close = ctx[open..]
        .find("</b>")
        .map(|i| open + i)
        .ok_or_else(|| EvalError::MalformedRecord("context lacks </b> marker".into()))?;
    let before = &ctx[..open];
    let target = &ctx[open + 3..close];
    let after = &ctx[close + 4..];
    let pos = tokenize(before).len();
    let mut tokens = tokenize(before);
    let target_tokens = tokenize(target);
    if target_tokens.is_empty() {
        return Err(EvalError::MalformedRecord("empty <b></b> target".into()));
    }
    tokens.extend(target_tokens);
    tokens.extend(tokenize(after));
    Ok((tokens, pos))
}

/// Parse one line of the tab-separated contextual-similarity format:
/// `id  word1  pos1  word2  pos2  context1  context2  avg  r1..r10`
/// with the targets wrapped in `<b></b>` inside their contexts. The gold
/// score is the mean of the ten individual ratings when present, else the
/// average column.
pub fn parse_scws_line(line: &str) -> Result<ScwsRecord, EvalError> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() < 8 {
        return Err(EvalError::MalformedRecord(format!(
            "{} columns, expected at least 8",
            cols.len()
        )));
    }
    let (tokens1, pos1) = parse_marked_context(cols[5])?;
    let (tokens2, pos2) = parse_marked_context(cols[6])?;
    let score = if cols.len() >= 18 {
        let mut sum = 0.0;
        for c in &cols[8..18] {
            sum += c.trim().parse::<f64>().map_err(|_| {
                EvalError::MalformedRecord(format!("non-numeric rating {c:?}"))
            })?;
        }
        sum / 10.0
    } else {
        cols[7]
            .trim()
            .parse::<f64>()
            .map_err(|_| EvalError::MalformedRecord(format!("bad score {:?}", cols[7])))?
    };
    let word1 = cols[1].to_lowercase();
    let word2 = cols[3].to_lowercase();
    // the marked token must be the target word (tokenizer-normalized)
    for (w, toks, pos) in [(&word1, &tokens1, pos1), (&word2, &tokens2, pos2)] {
        let got = toks.get(pos).map(String::as_str).unwrap_or("");
        if got != w {
            return Err(EvalError::MalformedRecord(format!(
                "marked token {got:?} does not match target {w:?}"
            )));
        }
    }
    Ok(ScwsRecord {
        word1,
        tokens1,
        pos1,
        word2,
        tokens2,
        pos2,
        score,
    })
}

pub fn load_scws(path: &Path) -> Result<Vec<ScwsRecord>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_scws_line(&line).map_err(|e| {
            EvalError::MalformedRecord(format!("line {}: {e}", i + 1))
        })?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct ScwsPair {
    pub index: usize,
    pub predicted: f64,
    pub gold: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScwsReport {
    pub mode: String,
    pub rho: f64,
    pub scored: usize,
    /// Pairs skipped because a target word is out of vocabulary.
    pub excluded: usize,
    pub pairs: Vec<ScwsPair>,
    pub model_manifest_hash: String,
}

/// Score every pair by resolving each target inside its own context and
/// taking the cosine of the two resolved vectors; correlate with the human
/// scores. Pairs whose targets are out of vocabulary are excluded and
/// counted.
pub fn evaluate_scws<S: Scalar>(
    records: &[ScwsRecord],
    model: &MultiSenseModel<S>,
    crp: &CrpConfig,
    mode: ResolveMode,
    opts: &InferenceOptions,
) -> Result<ScwsReport, EvalError> {
    let mut pairs = Vec::new();
    let mut excluded = 0;
    for (index, r) in records.iter().enumerate() {
        if model.vocab.id(&r.word1).is_none() || model.vocab.id(&r.word2).is_none() {
            excluded += 1;
            continue;
        }
        let r1 = resolve(model, &r.tokens1, crp, mode, opts);
        let r2 = resolve(model, &r.tokens2, crp, mode, opts);
        let v1 = &r1[r.pos1].vector;
        let v2 = &r2[r.pos2].vector;
        let predicted = cosine(v1, v2)?.as_f64();
        pairs.push(ScwsPair {
            index,
            predicted,
            gold: r.score,
        });
    }
    if pairs.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let predicted: Vec<f64> = pairs.iter().map(|p| p.predicted).collect();
    let gold: Vec<f64> = pairs.iter().map(|p| p.gold).collect();
    let rho = spearman(&predicted, &gold)?;
    Ok(ScwsReport {
        mode: mode.to_string(),
        rho,
        scored: pairs.len(),
        excluded,
        pairs,
        model_manifest_hash: model.manifest_hash(),
    })
}

// --- nearest neighbors ---------------------------------------------------------

/// Resolve the token at `position` in context, then rank every other word's
/// global vector by cosine against it. Ties break toward the lower word id.
pub fn nearest_neighbors<S: Scalar>(
    model: &MultiSenseModel<S>,
    tokens: &[String],
    position: usize,
    k: usize,
    mode: ResolveMode,
    crp: &CrpConfig,
    opts: &InferenceOptions,
) -> Result<Vec<(String, f64)>, EvalError> {
    if matches!(mode, ResolveMode::ConcatGreedy | ResolveMode::ConcatExpectation) {
        return Err(EvalError::UnsupportedMode(mode));
    }
    let target = tokens
        .get(position)
        .ok_or_else(|| EvalError::MalformedRecord(format!("position {position} out of range")))?;
    let target_id = model
        .vocab
        .id(target)
        .ok_or_else(|| EvalError::UnknownTarget(target.clone()))?;
    let resolved = resolve(model, tokens, crp, mode, opts);
    let query = &resolved[position].vector;
    let mut scored: Vec<(u32, f64)> = (0..model.vocab_len() as u32)
        .filter(|&w| w != target_id)
        .map(|w| (w, scalar::cosine(query, model.global_in_row(w)).as_f64()))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored
        .into_iter()
        .map(|(w, c)| (model.vocab.token(w).to_string(), c))
        .collect())
}

// --- pseudowords -----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudowordPair {
    pub a: String,
    pub b: String,
    pub label: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudowordSpec {
    pub pairs: Vec<PseudowordPair>,
}

/// One replaced occurrence: where it sits in the substituted corpus
/// (indices into the tokenized sentence) and which source word it was.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldOccurrence {
    pub sentence: usize,
    pub token: usize,
    pub label: String,
    pub source: String,
}

/// Selection constraints for [`default_pseudoword_spec`].
#[derive(Debug, Clone)]
pub struct PairSelection {
    pub n_pairs: usize,
    /// Frequency-rank window the candidates come from.
    pub rank_lo: usize,
    pub rank_hi: usize,
    /// Pair members must look unrelated on the baseline model.
    pub max_cosine: f64,
    /// Minimum corpus occurrences per member.
    pub min_occurrences: u64,
    /// Count balance: max(cA,cB)/(cA+cB) must not exceed this, so a
    /// single-cluster solution cannot score above it.
    pub max_share: f64,
    pub seed: u64,
}

impl Default for PairSelection {
    fn default() -> Self {
        PairSelection {
            n_pairs: 20,
            rank_lo: 500,
            rank_hi: 5000,
            max_cosine: 0.2,
            min_occurrences: 100,
            max_share: 0.6,
            seed: 1,
        }
    }
}

/// Sample pseudoword pairs from the mid-frequency band of a baseline model:
/// members must be dissimilar (cosine below threshold), frequent enough,
/// and count-balanced. Deterministic for a fixed seed.
pub fn default_pseudoword_spec<S: Scalar>(
    baseline: &MultiSenseModel<S>,
    sel: &PairSelection,
) -> Result<PseudowordSpec, EvalError> {
    let v = baseline.vocab_len();
    let mut candidates: Vec<u32> = (sel.rank_lo..sel.rank_hi.min(v))
        .map(|r| r as u32)
        .filter(|&w| baseline.vocab.count(w) >= sel.min_occurrences)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(sel.seed);
    candidates.shuffle(&mut rng);
    let mut used = vec![false; v];
    let mut pairs = Vec::new();
    'outer: for i in 0..candidates.len() {
        if pairs.len() == sel.n_pairs {
            break;
        }
        let a = candidates[i];
        if used[a as usize] {
            continue;
        }
        for &b in &candidates[i + 1..] {
            if used[b as usize] {
                continue;
            }
            let ca = baseline.vocab.count(a) as f64;
            let cb = baseline.vocab.count(b) as f64;
            if ca.max(cb) / (ca + cb) > sel.max_share {
                continue;
            }
            let cos = scalar::cosine(
                baseline.global_in_row(a),
                baseline.global_in_row(b),
            )
            .as_f64();
            if cos >= sel.max_cosine {
                continue;
            }
            used[a as usize] = true;
            used[b as usize] = true;
            let wa = baseline.vocab.token(a).to_string();
            let wb = baseline.vocab.token(b).to_string();
            let mut label = format!("pw{}.{}.{}", pairs.len(), wa, wb);
            while baseline.vocab.id(&label).is_some() {
                label.push('x');
            }
            pairs.push(PseudowordPair {
                a: wa,
                b: wb,
                label,
            });
            continue 'outer;
        }
    }
    if pairs.len() < sel.n_pairs {
        return Err(EvalError::NotEnoughPairs {
            want: sel.n_pairs,
            got: pairs.len(),
        });
    }
    Ok(PseudowordSpec { pairs })
}

/// Replace every occurrence of each pair's source words with its pseudoword
/// label, recording which source produced each occurrence. Lines are
/// re-emitted as space-joined tokens (the tokenizer is idempotent over
/// them); an empty spec returns the corpus verbatim.
pub fn generate_pseudoword_corpus(
    lines: &[String],
    spec: &PseudowordSpec,
) -> Result<(Vec<String>, Vec<GoldOccurrence>), EvalError> {
    if spec.pairs.is_empty() {
        return Ok((lines.to_vec(), Vec::new()));
    }
    let mut mapping: HashMap<&str, (&str, &str)> = HashMap::new();
    for p in &spec.pairs {
        if p.a == p.b {
            return Err(EvalError::DegeneratePair(p.a.clone()));
        }
        mapping.insert(&p.a, (&p.label, &p.a));
        mapping.insert(&p.b, (&p.label, &p.b));
    }
    // frequency precondition on the source words
    let mut counts: HashMap<&str, u64> = HashMap::new();
    let tokenized: Vec<Vec<String>> = lines.iter().map(|l| tokenize(l)).collect();
    for sent in &tokenized {
        for t in sent {
            if let Some(c) = counts.get_mut(t.as_str()) {
                *c += 1;
            } else if mapping.contains_key(t.as_str()) {
                counts.insert(
                    mapping.get_key_value(t.as_str()).unwrap().0,
                    1,
                );
            }
        }
    }
    for p in &spec.pairs {
        for w in [&p.a, &p.b] {
            let c = counts.get(w.as_str()).copied().unwrap_or(0);
            if c < 100 {
                return Err(EvalError::UnderFrequentSource {
                    word: w.clone(),
                    count: c,
                    need: 100,
                });
            }
        }
    }
    let mut out_lines = Vec::with_capacity(lines.len());
    let mut gold = Vec::new();
    for (si, sent) in tokenized.into_iter().enumerate() {
        let mut toks = sent;
        for (ti, t) in toks.iter_mut().enumerate() {
            if let Some(&(label, source)) = mapping.get(t.as_str()) {
                gold.push(GoldOccurrence {
                    sentence: si,
                    token: ti,
                    label: label.to_string(),
                    source: source.to_string(),
                });
                *t = label.to_string();
            }
        }
        out_lines.push(toks.join(" "));
    }
    Ok((out_lines, gold))
}

/// Purity of a clustering given (cluster, source) assignments:
/// sum over clusters of the dominant source's count, over the total.
pub fn purity_from_assignments<'a, I>(assignments: I) -> f64
where
    I: IntoIterator<Item = (u32, &'a str)>,
{
    let mut clusters: HashMap<u32, HashMap<&str, u64>> = HashMap::new();
    let mut total = 0u64;
    for (cluster, source) in assignments {
        *clusters
            .entry(cluster)
            .or_default()
            .entry(source)
            .or_insert(0) += 1;
        total += 1;
    }
    if total == 0 {
        return 0.0;
    }
    let dominant: u64 = clusters
        .values()
        .map(|sources| sources.values().copied().max().unwrap_or(0))
        .sum();
    dominant as f64 / total as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct LabelPurity {
    pub label: String,
    pub purity: f64,
    pub occurrences: usize,
    /// Distinct senses the greedy pass actually used.
    pub senses_used: usize,
    /// Senses the trained model retains for this pseudoword.
    pub senses_in_model: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PurityReport {
    pub per_label: Vec<LabelPurity>,
    pub macro_purity: f64,
    pub model_manifest_hash: String,
}

/// Greedy-infer a sense for every gold occurrence in the substituted corpus
/// and measure, per pseudoword, how purely its senses separate the source
/// words.
pub fn sense_purity<S: Scalar>(
    model: &MultiSenseModel<S>,
    corpus_lines: &[String],
    gold: &[GoldOccurrence],
    crp: &CrpConfig,
    opts: &InferenceOptions,
) -> Result<PurityReport, EvalError> {
    let mut labels: Vec<&str> = Vec::new();
    for g in gold {
        if !labels.contains(&g.label.as_str()) {
            labels.push(&g.label);
        }
    }
    for label in &labels {
        if model.vocab.id(label).is_none() {
            return Err(EvalError::PseudowordMissing(label.to_string()));
        }
    }
    // group occurrences by sentence so each sentence is inferred once
    let mut by_sentence: HashMap<usize, Vec<&GoldOccurrence>> = HashMap::new();
    for g in gold {
        by_sentence.entry(g.sentence).or_default().push(g);
    }
    // (label -> list of (sense cluster, source))
    let mut assignments: HashMap<&str, Vec<(u32, &str)>> = HashMap::new();
    for (&si, occs) in &by_sentence {
        let line = corpus_lines.get(si).ok_or_else(|| {
            EvalError::MalformedRecord(format!("gold references sentence {si} beyond corpus"))
        })?;
        let tokens = tokenize(line);
        let resolved = crate::inference::infer_greedy(model, &tokens, crp, opts);
        for g in occs {
            let r = resolved.get(g.token).ok_or_else(|| {
                EvalError::MalformedRecord(format!(
                    "gold references token {} beyond sentence {si}",
                    g.token
                ))
            })?;
            if r.token != g.label {
                return Err(EvalError::MalformedRecord(format!(
                    "sentence {si} token {}: corpus has {:?}, gold expects {:?}",
                    g.token, r.token, g.label
                )));
            }
            let cluster = r.sense.unwrap_or(0);
            assignments
                .entry(g.label.as_str())
                .or_default()
                .push((cluster, g.source.as_str()));
        }
    }
    let mut per_label = Vec::new();
    let mut sum = 0.0;
    for label in labels {
        let list = assignments.remove(label).unwrap_or_default();
        let occurrences = list.len();
        let mut seen = Vec::new();
        for (c, _) in &list {
            if !seen.contains(c) {
                seen.push(*c);
            }
        }
        let purity = purity_from_assignments(list.iter().map(|(c, s)| (*c, *s)));
        sum += purity;
        per_label.push(LabelPurity {
            label: label.to_string(),
            purity,
            occurrences,
            senses_used: seen.len(),
            senses_in_model: model
                .vocab
                .id(label)
                .map(|w| model.word_senses(w).len())
                .unwrap_or(0),
        });
    }
    let macro_purity = if per_label.is_empty() {
        0.0
    } else {
        sum / per_label.len() as f64
    };
    Ok(PurityReport {
        per_label,
        macro_purity,
        model_manifest_hash: model.manifest_hash(),
    })
}
