//! Reference-based text overlap metrics (BLEU-4, ROUGE-1/2/L, METEOR).
//!
//! Tokenization (`TOKENIZER_VERSION`): lowercase, split on every character
//! that is not a Unicode letter or digit, drop empty pieces.
//!
//! All scores are on a 0–100 scale. With several references, BLEU uses the
//! standard multi-reference clipping and closest reference length; ROUGE and
//! METEOR take the best single-reference score.

use std::collections::HashMap;
use std::sync::OnceLock;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TOKENIZER_VERSION: &str = "alnum-lower-v1";

/// Smoothing added to zero modified n-gram precision counts in BLEU.
pub const BLEU_EPSILON: f64 = 1e-9;

/// METEOR parameters: recall-weighted mean `α`, fragmentation exponent `β`
/// and penalty weight `γ`.
pub const METEOR_ALPHA: f64 = 0.9;
pub const METEOR_BETA: f64 = 3.0;
pub const METEOR_GAMMA: f64 = 0.5;

/// Upper bound on alignment-search nodes before settling for the best found.
const METEOR_SEARCH_BUDGET: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextMetric {
    Bleu4,
    Rouge1,
    Rouge2,
    #[serde(rename = "rougeL")]
    RougeL,
    Meteor,
}

impl TextMetric {
    pub const ALL: [TextMetric; 5] = [
        TextMetric::Bleu4,
        TextMetric::Rouge1,
        TextMetric::Rouge2,
        TextMetric::RougeL,
        TextMetric::Meteor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TextMetric::Bleu4 => "bleu4",
            TextMetric::Rouge1 => "rouge1",
            TextMetric::Rouge2 => "rouge2",
            TextMetric::RougeL => "rougeL",
            TextMetric::Meteor => "meteor",
        }
    }

    pub fn score<S: AsRef<str>>(self, hypothesis: &str, references: &[S]) -> Result<f64> {
        match self {
            TextMetric::Bleu4 => bleu4(hypothesis, references),
            TextMetric::Rouge1 => rouge_n(hypothesis, references, 1),
            TextMetric::Rouge2 => rouge_n(hypothesis, references, 2),
            TextMetric::RougeL => rouge_l(hypothesis, references),
            TextMetric::Meteor => meteor(hypothesis, references),
        }
    }
}

impl std::fmt::Display for TextMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn prepare<S: AsRef<str>>(hypothesis: &str, references: &[S]) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let hyp = tokenize(hypothesis);
    if hyp.is_empty() || references.is_empty() {
        return Err(Error::EmptyText);
    }
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r.as_ref())).collect();
    if refs.iter().all(Vec::is_empty) {
        return Err(Error::EmptyText);
    }
    Ok((hyp, refs))
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence BLEU-4 with brevity penalty and ε-smoothing of zero counts.
pub fn bleu4<S: AsRef<str>>(hypothesis: &str, references: &[S]) -> Result<f64> {
    let (hyp, refs) = prepare(hypothesis, references)?;
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let hyp_counts = ngram_counts(&hyp, n);
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for r in &refs {
            for (g, c) in ngram_counts(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        let clipped: usize = hyp_counts
            .iter()
            .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
        let total = hyp.len().saturating_sub(n - 1).max(1);
        let numerator = if clipped == 0 { BLEU_EPSILON } else { clipped as f64 };
        log_sum += (numerator / total as f64).ln();
    }
    let c = hyp.len();
    let r = refs
        .iter()
        .map(Vec::len)
        .min_by_key(|&len| (len.abs_diff(c), len))
        .unwrap();
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    Ok(100.0 * bp * (log_sum / 4.0).exp())
}

fn f1(overlap: usize, hyp_total: usize, ref_total: usize) -> f64 {
    if overlap == 0 || hyp_total == 0 || ref_total == 0 {
        return 0.0;
    }
    let p = overlap as f64 / hyp_total as f64;
    let r = overlap as f64 / ref_total as f64;
    2.0 * p * r / (p + r)
}

/// ROUGE-N F-measure, best over references.
pub fn rouge_n<S: AsRef<str>>(hypothesis: &str, references: &[S], n: usize) -> Result<f64> {
    let (hyp, refs) = prepare(hypothesis, references)?;
    let hyp_counts = ngram_counts(&hyp, n);
    let hyp_total: usize = hyp_counts.values().sum();
    let best = refs
        .iter()
        .map(|r| {
            let ref_counts = ngram_counts(r, n);
            let overlap: usize = hyp_counts
                .iter()
                .map(|(g, &c)| c.min(ref_counts.get(g).copied().unwrap_or(0)))
                .sum();
            f1(overlap, hyp_total, ref_counts.values().sum())
        })
        .fold(0.0, f64::max);
    Ok(100.0 * best)
}

pub(crate) fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L (longest common subsequence) F-measure, best over references.
pub fn rouge_l<S: AsRef<str>>(hypothesis: &str, references: &[S]) -> Result<f64> {
    let (hyp, refs) = prepare(hypothesis, references)?;
    let best = refs
        .iter()
        .map(|r| f1(lcs_len(&hyp, r), hyp.len(), r.len()))
        .fold(0.0, f64::max);
    Ok(100.0 * best)
}

pub fn stem(word: &str) -> String {
    static STEMMER: OnceLock<Stemmer> = OnceLock::new();
    STEMMER
        .get_or_init(|| Stemmer::create(Algorithm::English))
        .stem(word)
        .into_owned()
}

/// Match statistics of one hypothesis/reference alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeteorAlignment {
    pub matches: usize,
    pub chunks: usize,
}

/// METEOR from alignment statistics and sentence lengths.
pub fn meteor_from_alignment(a: MeteorAlignment, hyp_len: usize, ref_len: usize) -> f64 {
    if a.matches == 0 {
        return 0.0;
    }
    let p = a.matches as f64 / hyp_len as f64;
    let r = a.matches as f64 / ref_len as f64;
    let fmean = p * r / (METEOR_ALPHA * p + (1.0 - METEOR_ALPHA) * r);
    // a hypothesis identical to its reference is a single full chunk: no penalty
    let frag = if a.matches == hyp_len && a.matches == ref_len && a.chunks == 1 {
        0.0
    } else {
        a.chunks as f64 / a.matches as f64
    };
    let penalty = METEOR_GAMMA * frag.powf(METEOR_BETA);
    100.0 * fmean * (1.0 - penalty)
}

struct AlignSearch<'a> {
    hyp: &'a [String],
    hyp_stems: Vec<String>,
    reference: &'a [String],
    ref_stems: Vec<String>,
    target_exact: usize,
    target_total: usize,
    used: Vec<bool>,
    best_chunks: usize,
    nodes: usize,
}

impl AlignSearch<'_> {
    // DFS over hypothesis positions; `prev` is the ref index matched by the
    // previous hypothesis token when that token was matched.
    fn run(&mut self, i: usize, prev: Option<usize>, exact: usize, total: usize, chunks: usize) {
        self.nodes += 1;
        if chunks >= self.best_chunks || self.nodes > METEOR_SEARCH_BUDGET {
            return;
        }
        let remaining = self.hyp.len() - i;
        if total + remaining < self.target_total || exact + remaining < self.target_exact {
            return;
        }
        if i == self.hyp.len() {
            if exact == self.target_exact && total == self.target_total {
                self.best_chunks = chunks;
            }
            return;
        }
        let mut candidates: Vec<(usize, bool)> = (0..self.reference.len())
            .filter(|&j| !self.used[j])
            .filter_map(|j| {
                if self.hyp[i] == self.reference[j] {
                    Some((j, true))
                } else if self.hyp_stems[i] == self.ref_stems[j] {
                    Some((j, false))
                } else {
                    None
                }
            })
            .collect();
        // try the chunk-continuing position first to tighten the bound early
        if let Some(p) = prev {
            candidates.sort_by_key(|&(j, _)| j != p + 1);
        }
        for (j, is_exact) in candidates {
            let extends = prev == Some(j.wrapping_sub(1)) && j > 0;
            self.used[j] = true;
            self.run(
                i + 1,
                Some(j),
                exact + usize::from(is_exact),
                total + 1,
                chunks + usize::from(!extends),
            );
            self.used[j] = false;
        }
        self.run(i + 1, None, exact, total, chunks);
    }
}

/// Staged alignment: maximize exact matches, then stem matches among the
/// leftovers, then minimize the number of chunks.
pub fn meteor_align(hyp: &[String], reference: &[String]) -> MeteorAlignment {
    let mut hyp_count: HashMap<&str, usize> = HashMap::new();
    let mut ref_count: HashMap<&str, usize> = HashMap::new();
    for w in hyp {
        *hyp_count.entry(w).or_insert(0) += 1;
    }
    for w in reference {
        *ref_count.entry(w).or_insert(0) += 1;
    }
    let mut target_exact = 0;
    let mut hyp_left: HashMap<String, usize> = HashMap::new();
    let mut ref_left: HashMap<String, usize> = HashMap::new();
    for (w, &ch) in &hyp_count {
        let cr = ref_count.get(w).copied().unwrap_or(0);
        target_exact += ch.min(cr);
        if ch > cr {
            *hyp_left.entry(stem(w)).or_insert(0) += ch - cr;
        }
    }
    for (w, &cr) in &ref_count {
        let ch = hyp_count.get(w).copied().unwrap_or(0);
        if cr > ch {
            *ref_left.entry(stem(w)).or_insert(0) += cr - ch;
        }
    }
    let target_stem: usize = hyp_left
        .iter()
        .map(|(s, &h)| h.min(ref_left.get(s).copied().unwrap_or(0)))
        .sum();
    let target_total = target_exact + target_stem;
    if target_total == 0 {
        return MeteorAlignment { matches: 0, chunks: 0 };
    }
    let mut search = AlignSearch {
        hyp,
        hyp_stems: hyp.iter().map(|w| stem(w)).collect(),
        reference,
        ref_stems: reference.iter().map(|w| stem(w)).collect(),
        target_exact,
        target_total,
        used: vec![false; reference.len()],
        best_chunks: usize::MAX,
        nodes: 0,
    };
    search.run(0, None, 0, 0, 0);
    MeteorAlignment {
        matches: target_total,
        chunks: if search.best_chunks == usize::MAX { target_total } else { search.best_chunks },
    }
}

/// METEOR with exact and stem matching (no synonym stage), best over references.
pub fn meteor<S: AsRef<str>>(hypothesis: &str, references: &[S]) -> Result<f64> {
    let (hyp, refs) = prepare(hypothesis, references)?;
    Ok(refs
        .iter()
        .filter(|r| !r.is_empty())
        .map(|r| meteor_from_alignment(meteor_align(&hyp, r), hyp.len(), r.len()))
        .fold(0.0, f64::max))
}
