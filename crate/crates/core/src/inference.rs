//! Context-driven sense resolution over a frozen model: greedy labeling,
//! posterior-weighted expectation vectors, and the global/concat variants.

use std::fmt;
use std::str::FromStr;

use crate::model::{CrpConfig, MultiSenseModel};
use crate::scalar::Scalar;
use crate::trainer::sense_likelihood;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResolveMode {
    Global,
    Greedy,
    Expectation,
    ConcatGreedy,
    ConcatExpectation,
}

impl ResolveMode {
    /// Output width for a model of dimension `k`.
    pub fn width(self, k: usize) -> usize {
        match self {
            ResolveMode::ConcatGreedy | ResolveMode::ConcatExpectation => 2 * k,
            _ => k,
        }
    }
}

impl FromStr for ResolveMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "global" => Ok(ResolveMode::Global),
            "greedy" => Ok(ResolveMode::Greedy),
            "expectation" => Ok(ResolveMode::Expectation),
            "concat-greedy" => Ok(ResolveMode::ConcatGreedy),
            "concat-expectation" => Ok(ResolveMode::ConcatExpectation),
            other => Err(format!(
                "unknown mode {other:?} (expected global|greedy|expectation|concat-greedy|concat-expectation)"
            )),
        }
    }
}

impl fmt::Display for ResolveMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResolveMode::Global => "global",
            ResolveMode::Greedy => "greedy",
            ResolveMode::Expectation => "expectation",
            ResolveMode::ConcatGreedy => "concat-greedy",
            ResolveMode::ConcatExpectation => "concat-expectation",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferenceOptions {
    /// Weight sense likelihoods by assignment counts (the training
    /// posterior). Disable to rank senses by context fit alone.
    pub include_counts: bool,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        InferenceOptions {
            include_counts: true,
        }
    }
}

/// One token of a resolved sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedToken<S> {
    pub token: String,
    /// None for out-of-vocabulary tokens, which get a zero vector.
    pub id: Option<u32>,
    pub mode: ResolveMode,
    /// Chosen sense index; set by greedy modes for words with senses.
    pub sense: Option<u32>,
    /// K floats, or 2K for concat modes.
    pub vector: Vec<S>,
}

impl<S> ResolvedToken<S> {
    pub fn unknown(&self) -> bool {
        self.id.is_none()
    }
}

/// Mean of known in-window neighbor representations. Left neighbors with a
/// decided sense contribute that sense vector; others their global vector;
/// out-of-vocabulary neighbors contribute nothing. With no usable neighbor
/// the context is the zero vector (every sense then scores likelihood 1 and
/// the posterior falls back to counts alone).
fn context_of<S: Scalar>(
    model: &MultiSenseModel<S>,
    ids: &[Option<u32>],
    assignments: &[Option<u32>],
    pos: usize,
    window: usize,
    out: &mut [S],
) {
    out.fill(S::zero());
    let lo = pos.saturating_sub(window);
    let hi = (pos + window).min(ids.len().saturating_sub(1));
    let mut n = 0;
    for j in lo..=hi {
        if j == pos {
            continue;
        }
        let Some(w) = ids[j] else { continue };
        let row = match assignments[j] {
            Some(s) => &model.senses[w as usize][s as usize].vector[..],
            None => model.global_in_row(w),
        };
        for (o, &x) in out.iter_mut().zip(row) {
            *o += x;
        }
        n += 1;
    }
    if n > 0 {
        let inv = S::of(1.0 / n as f64);
        for o in out.iter_mut() {
            *o *= inv;
        }
    }
}

/// Posterior over a word's existing senses only (no new-sense slot),
/// normalized to sum 1. Empty when the word has no senses.
fn existing_posterior<S: Scalar>(
    model: &MultiSenseModel<S>,
    word: u32,
    c: &[S],
    crp: &CrpConfig,
    opts: &InferenceOptions,
) -> Vec<f64> {
    let list = model.word_senses(word);
    let mut scores: Vec<f64> = list
        .iter()
        .map(|e| {
            let occupancy = if opts.include_counts {
                e.count.max(1) as f64
            } else {
                1.0
            };
            occupancy * sense_likelihood(&e.vector, c, crp.temperature)
        })
        .collect();
    let sum: f64 = scores.iter().sum();
    if sum > 0.0 {
        for s in scores.iter_mut() {
            *s /= sum;
        }
    }
    scores
}

/// Argmax with ties resolved to the lowest index.
fn argmax(scores: &[f64]) -> Option<u32> {
    let mut best: Option<(u32, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.map_or(true, |(_, b)| s > b) {
            best = Some((i as u32, s));
        }
    }
    best.map(|(i, _)| i)
}

/// Left-to-right locally-optimal sense labeling: each token takes the
/// highest-posterior existing sense given its context, and that choice feeds
/// the context vectors of the tokens to its right.
pub fn infer_greedy<S: Scalar>(
    model: &MultiSenseModel<S>,
    tokens: &[String],
    crp: &CrpConfig,
    opts: &InferenceOptions,
) -> Vec<ResolvedToken<S>> {
    let ids: Vec<Option<u32>> = tokens.iter().map(|t| model.vocab.id(t)).collect();
    let mut assignments: Vec<Option<u32>> = vec![None; tokens.len()];
    let mut ctx = vec![S::zero(); model.dim];
    let mut out = Vec::with_capacity(tokens.len());
    for (pos, token) in tokens.iter().enumerate() {
        let resolved = match ids[pos] {
            None => ResolvedToken {
                token: token.clone(),
                id: None,
                mode: ResolveMode::Greedy,
                sense: None,
                vector: vec![S::zero(); model.dim],
            },
            Some(w) => {
                let window = model.meta.train.window;
                context_of(model, &ids, &assignments, pos, window, &mut ctx);
                let posterior = existing_posterior(model, w, &ctx, crp, opts);
                match argmax(&posterior) {
                    Some(s) => {
                        assignments[pos] = Some(s);
                        ResolvedToken {
                            token: token.clone(),
                            id: Some(w),
                            mode: ResolveMode::Greedy,
                            sense: Some(s),
                            vector: model.senses[w as usize][s as usize].vector.clone(),
                        }
                    }
                    // no senses: the global vector stands in
                    None => ResolvedToken {
                        token: token.clone(),
                        id: Some(w),
                        mode: ResolveMode::Greedy,
                        sense: None,
                        vector: model.global_in_row(w).to_vec(),
                    },
                }
            }
        };
        out.push(resolved);
    }
    out
}

/// Posterior-weighted sense mixture per token; contexts are built from
/// global vectors (no hard assignments exist in this mode).
pub fn infer_expectation<S: Scalar>(
    model: &MultiSenseModel<S>,
    tokens: &[String],
    crp: &CrpConfig,
    opts: &InferenceOptions,
) -> Vec<ResolvedToken<S>> {
    let ids: Vec<Option<u32>> = tokens.iter().map(|t| model.vocab.id(t)).collect();
    let assignments: Vec<Option<u32>> = vec![None; tokens.len()];
    let mut ctx = vec![S::zero(); model.dim];
    let mut out = Vec::with_capacity(tokens.len());
    for (pos, token) in tokens.iter().enumerate() {
        let resolved = match ids[pos] {
            None => ResolvedToken {
                token: token.clone(),
                id: None,
                mode: ResolveMode::Expectation,
                sense: None,
                vector: vec![S::zero(); model.dim],
            },
            Some(w) => {
                let window = model.meta.train.window;
                context_of(model, &ids, &assignments, pos, window, &mut ctx);
                let posterior = existing_posterior(model, w, &ctx, crp, opts);
                let vector = if posterior.is_empty() {
                    model.global_in_row(w).to_vec()
                } else {
                    let mut v = vec![S::zero(); model.dim];
                    for (e, &p) in model.word_senses(w).iter().zip(&posterior) {
                        let p = S::of(p);
                        for (o, &x) in v.iter_mut().zip(&e.vector) {
                            *o += p * x;
                        }
                    }
                    v
                };
                ResolvedToken {
                    token: token.clone(),
                    id: Some(w),
                    mode: ResolveMode::Expectation,
                    sense: None,
                    vector,
                }
            }
        };
        out.push(resolved);
    }
    out
}

/// Resolve a sentence under any of the five output modes.
pub fn resolve<S: Scalar>(
    model: &MultiSenseModel<S>,
    tokens: &[String],
    crp: &CrpConfig,
    mode: ResolveMode,
    opts: &InferenceOptions,
) -> Vec<ResolvedToken<S>> {
    match mode {
        ResolveMode::Greedy => infer_greedy(model, tokens, crp, opts),
        ResolveMode::Expectation => infer_expectation(model, tokens, crp, opts),
        ResolveMode::Global => tokens
            .iter()
            .map(|token| {
                let id = model.vocab.id(token);
                ResolvedToken {
                    token: token.clone(),
                    id,
                    mode: ResolveMode::Global,
                    sense: None,
                    vector: match id {
                        Some(w) => model.global_in_row(w).to_vec(),
                        None => vec![S::zero(); model.dim],
                    },
                }
            })
            .collect(),
        ResolveMode::ConcatGreedy | ResolveMode::ConcatExpectation => {
            let inner = if mode == ResolveMode::ConcatGreedy {
                infer_greedy(model, tokens, crp, opts)
            } else {
                infer_expectation(model, tokens, crp, opts)
            };
            inner
                .into_iter()
                .map(|mut t| {
                    let mut vector = match t.id {
                        Some(w) => model.global_in_row(w).to_vec(),
                        None => vec![S::zero(); model.dim],
                    };
                    vector.append(&mut t.vector);
                    ResolvedToken {
                        token: t.token,
                        id: t.id,
                        mode,
                        sense: t.sense,
                        vector,
                    }
                })
                .collect()
        }
    }
}
