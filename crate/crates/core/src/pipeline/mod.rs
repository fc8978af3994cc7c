//! End-to-end runs over files: data loading, training with resume,
//! translation, evaluation and the three-system experiment.

mod config;
mod triple;

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

pub use config::{AnalysisConfig, DataConfig, RunConfig};
pub use triple::{experiment_triple, SystemSummary, TripleOptions, TripleOutcome, SYSTEM_NAMES};

use crate::corpus::{
    build_vocab, read_plain_corpus, read_tagged_corpus, synth_task, write_tagged_corpus, SynthConfig, TagSet,
    TaggedSentence, Vocabulary,
};
use crate::decode::{decode, DecodeConfig};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, frequency_table, EvalPair, EvalReport};
use crate::model::{load_checkpoint, save_checkpoint, ModelConfig, ModelParams};
use crate::training::{read_log, train, LogLine, Pair, TrainState};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const STATE_FILE: &str = "model.state";
pub const LOG_FILE: &str = "train.log";
pub const CONFIG_FILE: &str = "run_config.toml";
pub const SOURCE_VOCAB_FILE: &str = "src.vocab";
pub const TARGET_VOCAB_FILE: &str = "tgt.vocab";
pub const SOURCE_TAGS_FILE: &str = "src.tags";
pub const TARGET_TAGS_FILE: &str = "tgt.tags";
/// Held-out data written by `train`: tagged sides plus plain references.
pub const TEST_SOURCE_FILE: &str = "test.src";
pub const TEST_TARGET_FILE: &str = "test.tgt";
pub const TEST_REFERENCE_FILE: &str = "test.ref";
/// Plain training targets, the frequency table for word-level buckets.
pub const TRAIN_REFERENCE_FILE: &str = "train.ref";

/// Encoded training and test pairs with the vocabularies and tag sets that
/// produced them.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub source_vocab: Vocabulary,
    pub target_vocab: Vocabulary,
    pub source_tags: TagSet,
    pub target_tags: TagSet,
    pub train: Vec<Pair>,
    pub test: Vec<Pair>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))
}

fn read_tagset(path: Option<&Path>) -> Result<TagSet> {
    match path {
        Some(p) => TagSet::read(open(p)?),
        None => Ok(TagSet::penn()),
    }
}

fn read_pairs(src: &Path, tgt: &Path, src_tags: &TagSet, tgt_tags: &TagSet) -> Result<Vec<(TaggedSentence<String>, TaggedSentence<String>)>> {
    let s = read_tagged_corpus(open(src)?, src_tags)?;
    let t = read_tagged_corpus(open(tgt)?, tgt_tags)?;
    if s.len() != t.len() {
        return Err(Error::Config(format!(
            "{} has {} sentences but {} has {}",
            src.display(),
            s.len(),
            tgt.display(),
            t.len()
        )));
    }
    Ok(s.into_iter().zip(t).collect())
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let d = &cfg.data;
    let (Some(train_src), Some(train_tgt)) = (&d.train_source, &d.train_target) else {
        let corpus = synth_task(&SynthConfig {
            kind: d.task,
            n_samples: d.n_samples,
            vocab_size: d.vocab_size,
            min_len: d.min_len,
            max_len: d.max_len,
            seed: cfg.seed,
        })?;
        if d.n_test >= corpus.len() {
            return Err(Error::Config("n_test must be smaller than n_samples".into()));
        }
        let (train, test) = corpus.split(d.n_test);
        return Ok(Dataset {
            source_vocab: train.source_vocab,
            target_vocab: train.target_vocab,
            source_tags: train.tagset.clone(),
            target_tags: train.tagset,
            train: train.pairs,
            test: test.pairs,
        });
    };
    let source_tags = read_tagset(d.source_tagset.as_deref())?;
    let target_tags = read_tagset(d.target_tagset.as_deref())?;
    let train = read_pairs(train_src, train_tgt, &source_tags, &target_tags)?;
    let test = match (&d.test_source, &d.test_target) {
        (Some(s), Some(t)) => read_pairs(s, t, &source_tags, &target_tags)?,
        _ => Vec::new(),
    };
    let source_lines: Vec<String> = train.iter().map(|(s, _)| s.tokens().join(" ")).collect();
    let target_lines: Vec<String> = train.iter().map(|(_, t)| t.tokens().join(" ")).collect();
    let source_vocab = build_vocab(source_lines, d.min_freq, d.max_vocab)?;
    let target_vocab = build_vocab(target_lines, d.min_freq, d.max_vocab)?;
    let encode = |pairs: Vec<(TaggedSentence<String>, TaggedSentence<String>)>| -> Vec<Pair> {
        pairs.into_iter().map(|(s, t)| (s.encode(&source_vocab), t.encode(&target_vocab))).collect()
    };
    let (train, test) = (encode(train), encode(test));
    Ok(Dataset { source_vocab, target_vocab, source_tags, target_tags, train, test })
}

impl Dataset {
    /// `model` with vocabulary and tag-set sizes taken from this data.
    pub fn fit_model(&self, model: &ModelConfig) -> ModelConfig {
        ModelConfig {
            src_vocab: self.source_vocab.len(),
            tgt_vocab: self.target_vocab.len(),
            src_tags: self.source_tags.len(),
            tgt_tags: self.target_tags.len(),
            ..model.clone()
        }
    }

    fn check_lengths(&self, max_len: usize) -> Result<()> {
        for (i, (s, t)) in self.train.iter().chain(&self.test).enumerate() {
            if s.len() > max_len || t.len() + 1 > max_len {
                return Err(Error::Config(format!(
                    "pair {} (lengths {} and {}) does not fit max_len {max_len}",
                    i + 1,
                    s.len(),
                    t.len()
                )));
            }
        }
        Ok(())
    }

    /// Writes vocabularies, tag sets and the held-out data into `dir`.
    pub fn write_artifacts(&self, dir: &Path) -> Result<()> {
        let create = |name: &str| File::create(dir.join(name)).map(BufWriter::new);
        self.source_vocab.write(create(SOURCE_VOCAB_FILE)?)?;
        self.target_vocab.write(create(TARGET_VOCAB_FILE)?)?;
        self.source_tags.write(create(SOURCE_TAGS_FILE)?)?;
        self.target_tags.write(create(TARGET_TAGS_FILE)?)?;
        let src: Vec<_> = self.test.iter().map(|(s, _)| s.decode(&self.source_vocab)).collect();
        let tgt: Vec<_> = self.test.iter().map(|(_, t)| t.decode(&self.target_vocab)).collect();
        write_tagged_corpus(create(TEST_SOURCE_FILE)?, &src, &self.source_tags)?;
        write_tagged_corpus(create(TEST_TARGET_FILE)?, &tgt, &self.target_tags)?;
        write_lines(dir.join(TEST_REFERENCE_FILE), tgt.iter().map(|t| t.tokens().join(" ")))?;
        write_lines(
            dir.join(TRAIN_REFERENCE_FILE),
            self.train.iter().map(|(_, t)| self.target_vocab.decode(t.tokens()).join(" ")),
        )?;
        Ok(())
    }
}

pub fn write_lines<I: IntoIterator<Item = String>>(path: impl AsRef<Path>, lines: I) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for l in lines {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub config: RunConfig,
    pub params: ModelParams,
    pub dataset: Dataset,
    /// Log lines written by this invocation.
    pub log: Vec<LogLine>,
}

/// Trains per `cfg`, writing checkpoint, state, log, configuration and data
/// artifacts into `out_dir`. With `resume`, continues from the checkpoint
/// and state already there.
pub fn run_training(cfg: &RunConfig, out_dir: &Path, resume: bool) -> Result<TrainOutcome> {
    let mut cfg = cfg.clone().resolve()?;
    let dataset = load_dataset(&cfg)?;
    cfg.model = dataset.fit_model(&cfg.model);
    cfg.model.validate()?;
    dataset.check_lengths(cfg.model.max_len)?;
    std::fs::create_dir_all(out_dir)?;
    cfg.write(out_dir.join(CONFIG_FILE))?;
    dataset.write_artifacts(out_dir)?;

    let ckpt = out_dir.join(CHECKPOINT_FILE);
    let state_path = out_dir.join(STATE_FILE);
    let log_path = out_dir.join(LOG_FILE);
    let (mut params, mut state) = if resume {
        let params = load_checkpoint(&ckpt)?;
        if params.config() != &cfg.model {
            return Err(Error::Config("checkpoint was trained with a different model configuration".into()));
        }
        let state = TrainState::load(&state_path, &params)?;
        // Keep only log lines a straight run would also have written.
        let kept: Vec<String> = match File::open(&log_path) {
            Ok(f) => read_log(f)?
                .into_iter()
                .filter(|l| l.step <= state.step && cfg.train.eval_every > 0 && l.step % cfg.train.eval_every == 0)
                .map(|l| l.render())
                .collect(),
            Err(_) => Vec::new(),
        };
        write_lines(&log_path, kept)?;
        (params, state)
    } else {
        let params = ModelParams::init(&cfg.model, cfg.seed)?;
        let state = TrainState::new(&params, cfg.seed);
        File::create(&log_path)?;
        (params, state)
    };

    let log_file = BufWriter::new(OpenOptions::new().append(true).open(&log_path)?);
    let eval = &dataset.test[..cfg.data.eval_size.min(dataset.test.len())];
    let save = |p: &ModelParams, s: &TrainState| -> Result<()> {
        save_checkpoint(&ckpt, p)?;
        s.save(&state_path, p)
    };
    let log = train(&mut params, &mut state, &cfg.train, &dataset.train, eval, log_file, save)?;
    save(&params, &state)?;
    Ok(TrainOutcome { config: cfg, params, dataset, log })
}

/// A trained model with the vocabularies and tag sets it was trained on.
#[derive(Debug)]
pub struct ModelBundle {
    pub params: ModelParams,
    pub source_vocab: Vocabulary,
    pub target_vocab: Vocabulary,
    pub source_tags: TagSet,
    pub target_tags: TagSet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputFormat {
    /// `token<TAB>TAG` lines, blank line between sentences.
    Tagged,
    /// One sentence per line; every token gets the neutral tag.
    Plain,
}

impl ModelBundle {
    pub fn load(dir: &Path) -> Result<Self> {
        let params = load_checkpoint(dir.join(CHECKPOINT_FILE))?;
        let bundle = ModelBundle {
            source_vocab: Vocabulary::read(open(&dir.join(SOURCE_VOCAB_FILE))?)?,
            target_vocab: Vocabulary::read(open(&dir.join(TARGET_VOCAB_FILE))?)?,
            source_tags: TagSet::read(open(&dir.join(SOURCE_TAGS_FILE))?)?,
            target_tags: TagSet::read(open(&dir.join(TARGET_TAGS_FILE))?)?,
            params,
        };
        let c = bundle.params.config();
        if c.src_vocab != bundle.source_vocab.len() || c.tgt_vocab != bundle.target_vocab.len() {
            return Err(Error::Config("vocabulary files do not match the checkpoint".into()));
        }
        if c.src_tags != bundle.source_tags.len() || c.tgt_tags != bundle.target_tags.len() {
            return Err(Error::Config("tag files do not match the checkpoint".into()));
        }
        Ok(bundle)
    }

    /// Reads source sentences; a blank line in plain input yields `None`.
    pub fn read_source(&self, path: &Path, format: InputFormat) -> Result<Vec<Option<TaggedSentence<String>>>> {
        match format {
            InputFormat::Tagged => Ok(read_tagged_corpus(open(path)?, &self.source_tags)?.into_iter().map(Some).collect()),
            InputFormat::Plain => read_plain_corpus(open(path)?)?
                .into_iter()
                .map(|toks| {
                    if toks.is_empty() {
                        Ok(None)
                    } else {
                        TaggedSentence::uniform(toks, self.source_tags.neutral_id()).map(Some)
                    }
                })
                .collect(),
        }
    }

    /// One output token list per input; `None` inputs give empty outputs.
    pub fn translate(&self, inputs: &[Option<TaggedSentence<String>>], cfg: &DecodeConfig) -> Result<Vec<Vec<String>>> {
        let max_len = self.params.config().max_len;
        inputs
            .iter()
            .enumerate()
            .map(|(i, s)| match s {
                None => Ok(Vec::new()),
                Some(s) if s.len() > max_len => Err(Error::Config(format!(
                    "sentence {} has {} tokens, more than max_len {max_len}",
                    i + 1,
                    s.len()
                ))),
                Some(s) => Ok(self.target_vocab.decode(&decode(&self.params, &s.encode(&self.source_vocab), cfg)?)),
            })
            .collect()
    }
}

/// Pairs line `i` of `hyp` with line `i` of `reference`.
pub fn read_eval_pairs(hyp: &Path, reference: &Path) -> Result<Vec<EvalPair>> {
    let h = read_plain_corpus(open(hyp)?)?;
    let r = read_plain_corpus(open(reference)?)?;
    if h.len() != r.len() {
        return Err(Error::Config(format!("{} hypotheses but {} references", h.len(), r.len())));
    }
    r.into_iter()
        .zip(h)
        .enumerate()
        .map(|(i, (r, h))| {
            EvalPair::new(r, h).map_err(|_| Error::Parse { line: i + 1, msg: "empty reference".into() })
        })
        .collect()
}

/// Token frequencies of a plain corpus file.
pub fn read_frequency_table(path: &Path) -> Result<HashMap<String, usize>> {
    Ok(frequency_table(&read_plain_corpus(open(path)?)?))
}

/// Evaluation perplexity on the last line of a training log.
pub fn last_eval_perplexity(log: &Path) -> Result<Option<f64>> {
    let lines = read_log(open(log)?)?;
    Ok(lines.last().map(|l| l.eval_ppl).filter(|p| p.is_finite()))
}

pub fn evaluate_files(
    hyp: &Path,
    reference: &Path,
    freq_corpus: Option<&Path>,
    perplexity: Option<f64>,
) -> Result<EvalReport> {
    let pairs = read_eval_pairs(hyp, reference)?;
    let freq = freq_corpus.map(read_frequency_table).transpose()?;
    evaluate(&pairs, &EvalReport::default_specs(), freq.as_ref(), perplexity)
}

/// Reads `run_config.toml` from a training directory.
pub fn read_run_config(dir: &Path) -> Result<RunConfig> {
    RunConfig::load(dir.join(CONFIG_FILE))
}

/// Lines of a text file without trailing newlines.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    Ok(open(path)?.lines().collect::<std::io::Result<_>>()?)
}
