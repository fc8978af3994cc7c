//! Vocabularies, POS tag inventories, the vertical tagged-corpus format and
//! synthetic parallel tasks.

mod synth;
mod tagged;
mod tagset;
mod vocab;

pub use synth::{synth_task, ParallelCorpus, SynthConfig, TaskKind};
pub use tagged::{read_plain_corpus, read_tagged_corpus, write_tagged_corpus, TaggedSentence};
pub use tagset::{TagSet, PENN_TAGS, PUNCTUATION_TAGS};
pub use vocab::{build_vocab, Vocabulary, BOS, EOS, PAD, RESERVED, UNK};
