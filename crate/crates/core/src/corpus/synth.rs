use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tagged::TaggedSentence;
use super::tagset::TagSet;
use super::vocab::{Vocabulary, RESERVED};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Copy,
    Reverse,
    /// Fixed token substitution plus a tag-triggered swap of neighbours.
    TaggedTranslation,
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "copy" => Ok(TaskKind::Copy),
            "reverse" => Ok(TaskKind::Reverse),
            "tagged-translation" => Ok(TaskKind::TaggedTranslation),
            other => Err(Error::Config(format!("unknown task {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub kind: TaskKind,
    pub n_samples: usize,
    /// Includes the four reserved ids.
    pub vocab_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

/// Synthetic tags. Adjective-noun and adverb-verb neighbours swap order in
/// the tagged-translation task.
const SYNTH_TAGS: [&str; 4] = ["NN", "VB", "JJ", "RB"];
const SWAP_PAIRS: [(usize, usize); 2] = [(2, 0), (3, 1)];

#[derive(Clone, Debug, PartialEq)]
pub struct ParallelCorpus {
    pub source_vocab: Vocabulary,
    pub target_vocab: Vocabulary,
    pub tagset: TagSet,
    pub pairs: Vec<(TaggedSentence, TaggedSentence)>,
}

impl ParallelCorpus {
    /// Splits off the last `n_test` pairs.
    pub fn split(mut self, n_test: usize) -> (ParallelCorpus, ParallelCorpus) {
        let at = self.pairs.len().saturating_sub(n_test);
        let test = self.pairs.split_off(at);
        let held_out = ParallelCorpus { pairs: test, ..self.clone() };
        (self, held_out)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Deterministic synthetic parallel corpus.
pub fn synth_task(cfg: &SynthConfig) -> Result<ParallelCorpus> {
    if cfg.vocab_size <= RESERVED.len() {
        return Err(Error::Config(format!("vocab_size must exceed {}", RESERVED.len())));
    }
    if cfg.min_len == 0 || cfg.min_len > cfg.max_len {
        return Err(Error::Config(format!(
            "invalid length range {}..={}",
            cfg.min_len, cfg.max_len
        )));
    }
    let content = cfg.vocab_size - RESERVED.len();
    let vocab = Vocabulary::from_tokens((0..content).map(|i| format!("w{i}")));
    let tagset = TagSet::from_names(SYNTH_TAGS)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut mapping: Vec<usize> = (RESERVED.len()..cfg.vocab_size).collect();
    if cfg.kind == TaskKind::TaggedTranslation {
        mapping.shuffle(&mut rng);
    }

    let mut pairs = Vec::with_capacity(cfg.n_samples);
    for _ in 0..cfg.n_samples {
        let len = rng.gen_range(cfg.min_len..=cfg.max_len);
        let tokens: Vec<usize> = (0..len).map(|_| rng.gen_range(RESERVED.len()..cfg.vocab_size)).collect();
        let tags: Vec<usize> = (0..len).map(|_| rng.gen_range(0..SYNTH_TAGS.len())).collect();
        let order: Vec<usize> = match cfg.kind {
            TaskKind::Copy => (0..len).collect(),
            TaskKind::Reverse => (0..len).rev().collect(),
            TaskKind::TaggedTranslation => reorder(&tags),
        };
        let map = |t: usize| mapping[t - RESERVED.len()];
        let tgt_tokens = order.iter().map(|&i| map(tokens[i])).collect();
        let tgt_tags = order.iter().map(|&i| tags[i]).collect();
        pairs.push((TaggedSentence::new(tokens, tags)?, TaggedSentence::new(tgt_tokens, tgt_tags)?));
    }
    Ok(ParallelCorpus {
        source_vocab: vocab.clone(),
        target_vocab: vocab,
        tagset,
        pairs,
    })
}

/// Left-to-right scan swapping each non-overlapping tagged neighbour pair.
fn reorder(tags: &[usize]) -> Vec<usize> {
    let mut order = Vec::with_capacity(tags.len());
    let mut i = 0;
    while i < tags.len() {
        if i + 1 < tags.len() && SWAP_PAIRS.contains(&(tags[i], tags[i + 1])) {
            order.extend([i + 1, i]);
            i += 2;
        } else {
            order.push(i);
            i += 1;
        }
    }
    order
}
