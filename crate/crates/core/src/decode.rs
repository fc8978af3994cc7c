//! Autoregressive generation: greedy and beam search.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::corpus::{TaggedSentence, EOS};
use crate::error::{Error, Result};
use crate::model::{ModelParams, Translator};
use crate::training::argmax;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Greedy,
    Beam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub max_out_len: usize,
    pub strategy: Strategy,
    pub beam_width: usize,
    /// Exponent α in `Σ log P / len^α`.
    pub length_penalty: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig { max_out_len: 15, strategy: Strategy::Greedy, beam_width: 4, length_penalty: 0.0 }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_width == 0 {
            return Err(Error::Config("beam_width must be at least 1".into()));
        }
        if !self.length_penalty.is_finite() || self.length_penalty < 0.0 {
            return Err(Error::Config("length_penalty must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Source of next-token log-probabilities given the tokens generated so far.
pub trait StepScorer {
    fn next_log_probs(&mut self, generated: &[usize]) -> Result<Vec<f64>>;
}

impl StepScorer for Translator<'_> {
    fn next_log_probs(&mut self, generated: &[usize]) -> Result<Vec<f64>> {
        Translator::next_log_probs(self, generated)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Output tokens, BOS and EOS excluded.
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    /// Whether generation ended with EOS rather than at the length limit.
    pub finished: bool,
}

impl Hypothesis {
    /// Scored length: EOS counts as a generated token.
    pub fn length(&self) -> usize {
        self.tokens.len() + usize::from(self.finished)
    }

    pub fn score(&self, alpha: f64) -> f64 {
        length_normalized(self.log_prob, self.length(), alpha)
    }
}

pub fn length_normalized(log_prob: f64, len: usize, alpha: f64) -> f64 {
    if alpha == 0.0 {
        log_prob
    } else {
        log_prob / (len.max(1) as f64).powf(alpha)
    }
}

pub fn greedy_search<S: StepScorer>(scorer: &mut S, max_out_len: usize) -> Result<Hypothesis> {
    let mut tokens = Vec::new();
    let mut log_prob = 0.0;
    while tokens.len() < max_out_len {
        let lp = scorer.next_log_probs(&tokens)?;
        let tok = argmax(&lp);
        log_prob += lp[tok];
        if tok == EOS {
            return Ok(Hypothesis { tokens, log_prob, finished: true });
        }
        tokens.push(tok);
    }
    Ok(Hypothesis { tokens, log_prob, finished: false })
}

struct Candidate {
    tokens: Vec<usize>,
    log_prob: f64,
    last_log_prob: f64,
    finished: bool,
}

impl Candidate {
    /// Generated tokens with the closing EOS, if any.
    fn sequence(&self) -> impl Iterator<Item = &usize> {
        self.tokens.iter().chain(self.finished.then_some(&EOS))
    }

    fn hypothesis(&self) -> Hypothesis {
        Hypothesis { tokens: self.tokens.clone(), log_prob: self.log_prob, finished: self.finished }
    }
}

/// Best first: higher score, then higher last-step log-probability, then
/// lexicographically smaller sequence.
fn rank(a: &Candidate, b: &Candidate, alpha: f64) -> Ordering {
    let (sa, sb) = (a.hypothesis().score(alpha), b.hypothesis().score(alpha));
    sb.total_cmp(&sa)
        .then(b.last_log_prob.total_cmp(&a.last_log_prob))
        .then_with(|| a.sequence().cmp(b.sequence()))
}

/// Beam search keeping the `beam_width` best candidates per step. The greedy
/// hypothesis always joins the final pool, so the result never scores below
/// it.
pub fn beam_search<S: StepScorer>(scorer: &mut S, cfg: &DecodeConfig) -> Result<Hypothesis> {
    cfg.validate()?;
    let alpha = cfg.length_penalty;
    let mut beams = vec![Candidate { tokens: Vec::new(), log_prob: 0.0, last_log_prob: 0.0, finished: false }];
    let mut pool: Vec<Candidate> = Vec::new();
    for _ in 0..cfg.max_out_len {
        let mut next = Vec::with_capacity(beams.len() * 8);
        for beam in &beams {
            let lp = scorer.next_log_probs(&beam.tokens)?;
            for (tok, &l) in lp.iter().enumerate() {
                let finished = tok == EOS;
                let mut tokens = beam.tokens.clone();
                if !finished {
                    tokens.push(tok);
                }
                next.push(Candidate { tokens, log_prob: beam.log_prob + l, last_log_prob: l, finished });
            }
        }
        next.sort_by(|a, b| rank(a, b, alpha));
        next.truncate(cfg.beam_width);
        beams = Vec::with_capacity(next.len());
        for c in next {
            if c.finished {
                pool.push(c);
            } else {
                beams.push(c);
            }
        }
        if beams.is_empty() {
            break;
        }
    }
    pool.extend(beams);
    let g = greedy_search(scorer, cfg.max_out_len)?;
    pool.push(Candidate { tokens: g.tokens, log_prob: g.log_prob, last_log_prob: f64::NEG_INFINITY, finished: g.finished });
    pool.sort_by(|a, b| rank_final(a, b, alpha));
    Ok(pool[0].hypothesis())
}

fn rank_final(a: &Candidate, b: &Candidate, alpha: f64) -> Ordering {
    let (sa, sb) = (a.hypothesis().score(alpha), b.hypothesis().score(alpha));
    sb.total_cmp(&sa).then_with(|| a.sequence().cmp(b.sequence()))
}

fn effective(params: &ModelParams, cfg: &DecodeConfig) -> DecodeConfig {
    DecodeConfig { max_out_len: cfg.max_out_len.min(params.config().max_len), ..cfg.clone() }
}

pub fn greedy_decode(params: &ModelParams, src: &TaggedSentence, cfg: &DecodeConfig) -> Result<Vec<usize>> {
    let cfg = effective(params, cfg);
    let mut t = Translator::new(params, src)?;
    Ok(greedy_search(&mut t, cfg.max_out_len)?.tokens)
}

pub fn beam_decode(params: &ModelParams, src: &TaggedSentence, cfg: &DecodeConfig) -> Result<Vec<usize>> {
    let cfg = effective(params, cfg);
    let mut t = Translator::new(params, src)?;
    Ok(beam_search(&mut t, &cfg)?.tokens)
}

/// Decodes with the configured strategy.
pub fn decode(params: &ModelParams, src: &TaggedSentence, cfg: &DecodeConfig) -> Result<Vec<usize>> {
    match cfg.strategy {
        Strategy::Greedy => greedy_decode(params, src, cfg),
        Strategy::Beam => beam_decode(params, src, cfg),
    }
}
