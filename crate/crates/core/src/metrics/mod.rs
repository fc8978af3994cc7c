//! Corpus metrics and bucketed analyses for translation output.

mod buckets;
mod compare;
mod report;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use buckets::{
    count_by_length_diff_bucket, count_by_sentence_bleu_bucket, sentence_bleu_by_length_bucket,
    word_f1_by_freq_bucket, Bucket, BucketDimension, BucketReport, BucketSpec,
};
pub use compare::{Comparison, ComparisonRow};
pub use report::{evaluate, EvalReport, LengthRatioReport, RougeReport, REPORT_SCHEMA};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalPair {
    pub reference: Vec<String>,
    pub hypothesis: Vec<String>,
}

impl EvalPair {
    pub fn new(reference: Vec<String>, hypothesis: Vec<String>) -> Result<Self> {
        if reference.is_empty() {
            return Err(Error::Contract("reference sentence is empty".into()));
        }
        Ok(EvalPair { reference, hypothesis })
    }

    /// Splits both sides on whitespace.
    pub fn from_text(reference: &str, hypothesis: &str) -> Result<Self> {
        let split = |s: &str| s.split_whitespace().map(str::to_owned).collect();
        Self::new(split(reference), split(hypothesis))
    }
}

pub fn ngram_counts<T: std::hash::Hash + Eq>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped matches and hypothesis n-gram count for one order.
fn clipped_overlap(hyp: &[String], reference: &[String], n: usize) -> (usize, usize) {
    let h = ngram_counts(hyp, n);
    let r = ngram_counts(reference, n);
    let matches = h.iter().map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0))).sum();
    (matches, hyp.len().saturating_sub(n - 1))
}

/// Raw counts behind corpus BLEU.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BleuStats {
    /// Clipped matches per order, index `n - 1`.
    pub matches: Vec<usize>,
    /// Hypothesis n-gram totals per order.
    pub totals: Vec<usize>,
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn collect(pairs: &[EvalPair], max_n: usize) -> Self {
        let mut s = BleuStats { matches: vec![0; max_n], totals: vec![0; max_n], hyp_len: 0, ref_len: 0 };
        for p in pairs {
            s.add(p);
        }
        s
    }

    fn add(&mut self, p: &EvalPair) {
        for n in 1..=self.matches.len() {
            let (m, t) = clipped_overlap(&p.hypothesis, &p.reference, n);
            self.matches[n - 1] += m;
            self.totals[n - 1] += t;
        }
        self.hyp_len += p.hypothesis.len();
        self.ref_len += p.reference.len();
    }

    pub fn brevity_penalty(&self) -> f64 {
        brevity_penalty(self.hyp_len, self.ref_len)
    }
}

/// `min(1, e^(1 − r/c))`, and 0 for an empty output.
pub fn brevity_penalty(hyp_len: usize, ref_len: usize) -> f64 {
    if hyp_len == 0 {
        0.0
    } else if hyp_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp().min(1.0)
    }
}

/// `BP · exp(mean ln pᵢ)` for every order up to `precisions.len()`.
fn geometric_scores(precisions: &[f64], bp: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(precisions.len());
    let mut log_sum = 0.0;
    let mut zero = false;
    for (i, &p) in precisions.iter().enumerate() {
        zero |= p == 0.0;
        log_sum += if zero { 0.0 } else { p.ln() };
        out.push(if zero { 0.0 } else { bp * (log_sum / (i + 1) as f64).exp() });
    }
    out
}

/// Corpus BLEU-1 … BLEU-`max_n` (index `n - 1`).
pub fn bleu(pairs: &[EvalPair], max_n: usize) -> Result<Vec<f64>> {
    if pairs.is_empty() {
        return Err(Error::EmptyHypotheses);
    }
    if max_n == 0 {
        return Err(Error::Config("max_n must be at least 1".into()));
    }
    let s = BleuStats::collect(pairs, max_n);
    let precisions: Vec<f64> = s
        .matches
        .iter()
        .zip(&s.totals)
        .map(|(&m, &t)| if t == 0 { 0.0 } else { m as f64 / t as f64 })
        .collect();
    Ok(geometric_scores(&precisions, s.brevity_penalty()))
}

/// Sentence BLEU-`max_n` with add-1 smoothing on orders without matches.
pub fn sentence_bleu(pair: &EvalPair, max_n: usize) -> f64 {
    let precisions: Vec<f64> = (1..=max_n)
        .map(|n| {
            let (m, t) = clipped_overlap(&pair.hypothesis, &pair.reference, n);
            if m == 0 {
                1.0 / (t + 1) as f64
            } else {
                m as f64 / t as f64
            }
        })
        .collect();
    let bp = brevity_penalty(pair.hypothesis.len(), pair.reference.len());
    geometric_scores(&precisions, bp).pop().unwrap_or(0.0)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    #[serde(rename = "F")]
    pub f: f64,
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "R")]
    pub r: f64,
}

impl Prf {
    /// Precision and recall of `overlap` against the two totals; an empty
    /// side counts as fully matched only when the other side is empty too.
    pub fn from_counts(overlap: usize, hyp_total: usize, ref_total: usize) -> Self {
        let ratio = |total: usize, other: usize| {
            if total > 0 {
                overlap as f64 / total as f64
            } else if other == 0 {
                1.0
            } else {
                0.0
            }
        };
        Self::from_pr(ratio(hyp_total, ref_total), ratio(ref_total, hyp_total))
    }

    pub fn from_pr(p: f64, r: f64) -> Self {
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        Prf { f, p, r }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RougeVariant {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "L")]
    L,
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
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

pub fn sentence_rouge(pair: &EvalPair, variant: RougeVariant) -> Prf {
    let (h, r) = (&pair.hypothesis, &pair.reference);
    match variant {
        RougeVariant::L => Prf::from_counts(lcs_len(h, r), h.len(), r.len()),
        RougeVariant::One | RougeVariant::Two => {
            let n = if variant == RougeVariant::One { 1 } else { 2 };
            let (overlap, hyp_total) = clipped_overlap(h, r, n);
            Prf::from_counts(overlap, hyp_total, r.len().saturating_sub(n - 1))
        }
    }
}

/// Macro average of sentence scores; all zeros for an empty corpus.
pub fn rouge(pairs: &[EvalPair], variant: RougeVariant) -> Prf {
    if pairs.is_empty() {
        return Prf::default();
    }
    let (mut f, mut p, mut r) = (0.0, 0.0, 0.0);
    for pair in pairs {
        let s = sentence_rouge(pair, variant);
        f += s.f;
        p += s.p;
        r += s.r;
    }
    let n = pairs.len() as f64;
    Prf { f: f / n, p: p / n, r: r / n }
}

/// Total output length over total reference length.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LengthRatio {
    pub ratio: f64,
    pub ref_total: usize,
    pub out_total: usize,
}

impl fmt::Display for LengthRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4} (ref={}, out={})", self.ratio, self.ref_total, self.out_total)
    }
}

pub fn length_ratio(pairs: &[EvalPair]) -> LengthRatio {
    let ref_total: usize = pairs.iter().map(|p| p.reference.len()).sum();
    let out_total: usize = pairs.iter().map(|p| p.hypothesis.len()).sum();
    let ratio = if ref_total == 0 { 0.0 } else { out_total as f64 / ref_total as f64 };
    LengthRatio { ratio, ref_total, out_total }
}

/// Token counts over a training corpus.
pub fn frequency_table<S: AsRef<str>>(sentences: &[Vec<S>]) -> HashMap<String, usize> {
    let mut f = HashMap::new();
    for s in sentences {
        for t in s {
            *f.entry(t.as_ref().to_owned()).or_insert(0) += 1;
        }
    }
    f
}
