//! Teacher-forced training with Adam and an inverse-square-root warmup.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TaggedSentence;
use crate::error::{Error, Result};
use crate::model::{read_blocks, write_blocks, Batch, ModelParams};
use crate::numerics::{Tape, Tensor};

pub type Pair = (TaggedSentence, TaggedSentence);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: u64,
    pub peak_lr: f64,
    pub warmup_steps: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    /// Log (and evaluate) every this many steps; 0 logs only the last step.
    pub eval_every: u64,
    /// Write a checkpoint every this many steps; 0 disables.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    pub fn desk() -> Self {
        TrainConfig {
            batch_size: 32,
            steps: 2000,
            peak_lr: 2e-3,
            warmup_steps: 200,
            beta1: 0.9,
            beta2: 0.98,
            adam_eps: 1e-9,
            seed: 1,
            eval_every: 100,
            checkpoint_every: 0,
        }
    }

    pub fn large() -> Self {
        TrainConfig { batch_size: 1024, steps: 80_000, peak_lr: 7e-4, warmup_steps: 4000, ..Self::desk() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.peak_lr >= 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("learning rate or Adam betas out of range".into()));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::Config("adam_eps must be positive".into()));
        }
        Ok(())
    }
}

/// Learning rate for 1-based `step`: linear warmup to `peak_lr`, then decay
/// with `√(warmup/step)`.
pub fn learning_rate(cfg: &TrainConfig, step: u64) -> f64 {
    if cfg.warmup_steps == 0 {
        return cfg.peak_lr;
    }
    let (s, w) = (step.max(1) as f64, cfg.warmup_steps as f64);
    cfg.peak_lr * (s / w).min((w / s).sqrt())
}

pub fn perplexity(loss_per_token: f64) -> f64 {
    loss_per_token.exp()
}

/// Everything besides the parameters needed to continue a run exactly.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub loss_sum: f64,
    pub loss_count: u64,
    pub rng: ChaCha8Rng,
}

pub const STATE_MAGIC: &str = "augformer-state v1";

impl TrainState {
    pub fn new(params: &ModelParams, seed: u64) -> Self {
        let zeros: Vec<Tensor> = params.blocks().iter().map(|t| Tensor::zeros(t.shape())).collect();
        TrainState {
            step: 0,
            m: zeros.clone(),
            v: zeros,
            loss_sum: 0.0,
            loss_count: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn running_loss(&self) -> Option<f64> {
        (self.loss_count > 0).then(|| self.loss_sum / self.loss_count as f64)
    }

    /// Mean training loss since the last call, which resets it.
    pub fn take_running_loss(&mut self) -> Option<f64> {
        let mean = self.running_loss();
        self.loss_sum = 0.0;
        self.loss_count = 0;
        mean
    }

    pub fn write<W: Write>(&self, mut w: W, params: &ModelParams) -> Result<()> {
        let seed: String = self.rng.get_seed().iter().map(|b| format!("{b:02x}")).collect();
        writeln!(
            w,
            "{STATE_MAGIC} step={} loss_sum={:016x} loss_count={} seed={seed} stream={} word_pos={}",
            self.step,
            self.loss_sum.to_bits(),
            self.loss_count,
            self.rng.get_stream(),
            self.rng.get_word_pos(),
        )?;
        let mut blocks = Vec::with_capacity(2 * self.m.len());
        let names: Vec<(String, String)> =
            params.names().iter().map(|n| (format!("m.{n}"), format!("v.{n}"))).collect();
        for (i, (mn, _)) in names.iter().enumerate() {
            blocks.push((mn.as_str(), &self.m[i]));
        }
        for (i, (_, vn)) in names.iter().enumerate() {
            blocks.push((vn.as_str(), &self.v[i]));
        }
        write_blocks(&mut w, &blocks)?;
        w.flush()?;
        Ok(())
    }

    pub fn read<R: BufRead>(mut r: R, params: &ModelParams) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(format!("train state: {m}"));
        let mut header = String::new();
        r.read_line(&mut header)?;
        let rest = header.trim_end().strip_prefix(STATE_MAGIC).ok_or_else(|| bad("missing header"))?;
        let mut fields = std::collections::HashMap::new();
        for f in rest.split_whitespace() {
            let (k, v) = f.split_once('=').ok_or_else(|| bad("malformed header"))?;
            fields.insert(k, v);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| bad(&format!("missing {k}")));
        let num = |k: &str| -> Result<u128> { get(k)?.parse().map_err(|_| bad(&format!("bad {k}"))) };
        let seed_hex = get("seed")?;
        if seed_hex.len() != 64 {
            return Err(bad("bad seed"));
        }
        let mut seed = [0u8; 32];
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&seed_hex[2 * i..2 * i + 2], 16).map_err(|_| bad("bad seed"))?;
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(num("stream")? as u64);
        rng.set_word_pos(num("word_pos")?);
        let loss_bits = u64::from_str_radix(get("loss_sum")?, 16).map_err(|_| bad("bad loss_sum"))?;

        let blocks = read_blocks(&mut r)?;
        let n = params.blocks().len();
        if blocks.len() != 2 * n {
            return Err(bad("moment count does not match the model"));
        }
        let mut m = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for (i, (name, t)) in blocks.into_iter().enumerate() {
            let (prefix, idx) = if i < n { ("m.", i) } else { ("v.", i - n) };
            let want = format!("{prefix}{}", params.names()[idx]);
            if name != want || t.shape() != params.blocks()[idx].shape() {
                return Err(bad(&format!("unexpected block {name:?}")));
            }
            if i < n { m.push(t) } else { v.push(t) }
        }
        Ok(TrainState {
            step: num("step")? as u64,
            m,
            v,
            loss_sum: f64::from_bits(loss_bits),
            loss_count: num("loss_count")? as u64,
            rng,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>, params: &ModelParams) -> Result<()> {
        self.write(BufWriter::new(File::create(path)?), params)
    }

    pub fn load(path: impl AsRef<Path>, params: &ModelParams) -> Result<Self> {
        Self::read(BufReader::new(File::open(path)?), params)
    }
}

/// Masked mean cross-entropy of `batch` and, when `trainable`, the tape
/// holding its gradients.
pub fn batch_loss(params: &ModelParams, batch: &Batch, trainable: bool) -> Result<(f64, Tape, Vec<crate::numerics::Var>)> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, trainable);
    let logits = params.forward_batch(&mut tape, &bound, batch)?;
    let loss = tape.cross_entropy(logits, &batch.targets)?;
    let value = tape.value(loss).item();
    if trainable && value.is_finite() {
        tape.backward(loss)?;
    }
    Ok((value, tape, bound.vars().to_vec()))
}

/// One Adam update on `batch`; returns the pre-update loss.
pub fn train_step(params: &mut ModelParams, state: &mut TrainState, cfg: &TrainConfig, batch: &Batch) -> Result<f64> {
    let (loss, tape, vars) = batch_loss(params, batch, true)?;
    let step = state.step + 1;
    if !loss.is_finite() {
        return Err(non_finite(params, step));
    }
    let lr = learning_rate(cfg, step);
    let c1 = 1.0 - cfg.beta1.powf(step as f64);
    let c2 = 1.0 - cfg.beta2.powf(step as f64);
    for (i, var) in vars.iter().enumerate() {
        let Some(g) = tape.grad(*var) else { continue };
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let p = params.blocks_mut()[i].data_mut();
        for j in 0..p.len() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            let mhat = m[j] / c1;
            let vhat = v[j] / c2;
            p[j] -= lr * mhat / (vhat.sqrt() + cfg.adam_eps);
        }
    }
    state.step = step;
    state.loss_sum += loss;
    state.loss_count += 1;
    if params.first_non_finite().is_some() {
        return Err(non_finite(params, step));
    }
    Ok(loss)
}

fn non_finite(params: &ModelParams, step: u64) -> Error {
    let block = params.first_non_finite().unwrap_or("none (loss only)").to_string();
    Error::NonFinite { step, block }
}

/// Draws `cfg.batch_size` training pairs with replacement.
pub fn sample_batch(params: &ModelParams, data: &[Pair], state: &mut TrainState, cfg: &TrainConfig) -> Result<Batch> {
    if data.is_empty() {
        return Err(Error::DegenerateBatch("training set is empty".into()));
    }
    let picks: Vec<(&TaggedSentence, &TaggedSentence)> = (0..cfg.batch_size)
        .map(|_| {
            let (s, t) = &data[state.rng.gen_range(0..data.len())];
            (s, t)
        })
        .collect();
    Batch::new(&picks, params)
}

/// Token-weighted mean loss over `data`, in fixed-size chunks.
pub fn evaluate_loss(params: &ModelParams, data: &[Pair], batch_size: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for chunk in data.chunks(batch_size.max(1)) {
        let pairs: Vec<_> = chunk.iter().map(|(s, t)| (s, t)).collect();
        let batch = Batch::new(&pairs, params)?;
        let (loss, _, _) = batch_loss(params, &batch, false)?;
        let n = batch.target_count();
        total += loss * n as f64;
        count += n;
    }
    if count == 0 {
        return Err(Error::DegenerateBatch("evaluation set is empty".into()));
    }
    Ok(total / count as f64)
}

/// Fraction of target tokens (EOS included) whose argmax under teacher
/// forcing is the gold token.
pub fn teacher_forced_accuracy(params: &ModelParams, data: &[Pair], batch_size: usize) -> Result<f64> {
    let mut hits = 0usize;
    let mut count = 0usize;
    for chunk in data.chunks(batch_size.max(1)) {
        let pairs: Vec<_> = chunk.iter().map(|(s, t)| (s, t)).collect();
        let batch = Batch::new(&pairs, params)?;
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, false);
        let logits = params.forward_batch(&mut tape, &bound, &batch)?;
        let logits = tape.value(logits);
        for (r, gold) in batch.targets.iter().enumerate() {
            let Some(gold) = gold else { continue };
            count += 1;
            if argmax(logits.row(r)) == *gold {
                hits += 1;
            }
        }
    }
    Ok(if count == 0 { 0.0 } else { hits as f64 / count as f64 })
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

/// One training-log record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogLine {
    pub step: u64,
    pub train_loss: f64,
    pub eval_loss: f64,
    pub eval_ppl: f64,
}

impl LogLine {
    pub fn render(&self) -> String {
        use crate::encoding::fmt_f64;
        format!("{}\t{}\t{}\t{}", self.step, fmt_f64(self.train_loss), fmt_f64(self.eval_loss), fmt_f64(self.eval_ppl))
    }
}

/// Runs `params` forward from `state.step` to `cfg.steps`, logging every
/// `eval_every` steps and calling `on_checkpoint` every `checkpoint_every`.
pub fn train<W: Write>(
    params: &mut ModelParams,
    state: &mut TrainState,
    cfg: &TrainConfig,
    train_data: &[Pair],
    eval_data: &[Pair],
    mut log: W,
    mut on_checkpoint: impl FnMut(&ModelParams, &TrainState) -> Result<()>,
) -> Result<Vec<LogLine>> {
    cfg.validate()?;
    let mut lines = Vec::new();
    while state.step < cfg.steps {
        let batch = sample_batch(params, train_data, state, cfg)?;
        train_step(params, state, cfg, &batch)?;
        let s = state.step;
        // An off-grid final line leaves the running loss in place so that a
        // resumed run logs exactly what a straight run would.
        let on_grid = cfg.eval_every > 0 && s.is_multiple_of(cfg.eval_every);
        if on_grid || s == cfg.steps {
            let train_loss = if on_grid { state.take_running_loss() } else { state.running_loss() }.unwrap_or(f64::NAN);
            let eval_loss = if eval_data.is_empty() { f64::NAN } else { evaluate_loss(params, eval_data, cfg.batch_size)? };
            let line = LogLine { step: s, train_loss, eval_loss, eval_ppl: perplexity(eval_loss) };
            writeln!(log, "{}", line.render())?;
            lines.push(line);
        }
        if cfg.checkpoint_every > 0 && s.is_multiple_of(cfg.checkpoint_every) {
            on_checkpoint(params, state)?;
        }
    }
    log.flush()?;
    Ok(lines)
}

pub fn read_log<R: Read>(r: R) -> Result<Vec<LogLine>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let f: Vec<&str> = line.split('\t').collect();
        let parse_err = || Error::Parse { line: i + 1, msg: format!("bad log line {line:?}") };
        if f.len() != 4 {
            return Err(parse_err());
        }
        out.push(LogLine {
            step: f[0].parse().map_err(|_| parse_err())?,
            train_loss: f[1].parse().map_err(|_| parse_err())?,
            eval_loss: f[2].parse().map_err(|_| parse_err())?,
            eval_ppl: f[3].parse().map_err(|_| parse_err())?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn tiny() -> ModelParams {
        let cfg = ModelConfig { n_layers: 1, d_emb: 8, d_model: 8, n_heads: 2, d_ff: 16, src_vocab: 11, tgt_vocab: 11, ..ModelConfig::desk() };
        ModelParams::init(&cfg, 2).unwrap()
    }

    fn pair(src: &[usize], tgt: &[usize]) -> Pair {
        (TaggedSentence::uniform(src.to_vec(), 0).unwrap(), TaggedSentence::uniform(tgt.to_vec(), 1).unwrap())
    }

    #[test]
    fn schedule_peaks_at_warmup() {
        let cfg = TrainConfig { peak_lr: 1.0, warmup_steps: 100, ..TrainConfig::desk() };
        assert_eq!(learning_rate(&cfg, 100), 1.0);
        assert_eq!(learning_rate(&cfg, 50), 0.5);
        assert_eq!(learning_rate(&cfg, 400), 0.5);
        assert_eq!(learning_rate(&TrainConfig { warmup_steps: 0, ..cfg }, 7), 1.0);
    }

    #[test]
    fn perplexity_closed_forms() {
        assert_eq!(perplexity(0.0), 1.0);
        assert!((perplexity(100f64.ln()) - 100.0).abs() < 1e-10);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut p = tiny();
        let before = p.blocks().to_vec();
        let cfg = TrainConfig { peak_lr: 0.0, ..TrainConfig::desk() };
        let mut st = TrainState::new(&p, 0);
        let data = [pair(&[4, 5, 6], &[4, 5, 6])];
        let b = sample_batch(&p, &data, &mut st, &cfg).unwrap();
        train_step(&mut p, &mut st, &cfg, &b).unwrap();
        assert_eq!(p.blocks(), &before[..]);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn uniform_model_loss_is_log_vocab() {
        let mut p = tiny();
        p.zero_output_projection();
        let data = [pair(&[4, 5], &[6, 7, 8])];
        let loss = evaluate_loss(&p, &data, 4).unwrap();
        assert!((loss - 11f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn nan_parameters_abort_with_block_name() {
        let mut p = tiny();
        p.blocks_mut()[0].data_mut()[0] = f64::NAN;
        let mut st = TrainState::new(&p, 0);
        let cfg = TrainConfig::desk();
        let b = Batch::new(&[(&pair(&[0], &[4]).0, &pair(&[0], &[4]).1)], &p).unwrap();
        match train_step(&mut p, &mut st, &cfg, &b) {
            Err(Error::NonFinite { block, .. }) => assert_eq!(block, "src_embed"),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn state_round_trips() {
        let mut p = tiny();
        let cfg = TrainConfig { batch_size: 2, ..TrainConfig::desk() };
        let mut st = TrainState::new(&p, 9);
        let data = [pair(&[4, 5, 6], &[4, 5, 6]), pair(&[7], &[7])];
        for _ in 0..3 {
            let b = sample_batch(&p, &data, &mut st, &cfg).unwrap();
            train_step(&mut p, &mut st, &cfg, &b).unwrap();
        }
        let mut bytes = Vec::new();
        st.write(&mut bytes, &p).unwrap();
        let back = TrainState::read(bytes.as_slice(), &p).unwrap();
        assert_eq!(back.step, 3);
        assert_eq!(back.m, st.m);
        assert_eq!(back.v, st.v);
        assert_eq!(back.loss_sum.to_bits(), st.loss_sum.to_bits());
        assert_eq!(back.rng, st.rng);
    }

    #[test]
    fn log_lines_parse_back() {
        let l = LogLine { step: 5, train_loss: 1.25, eval_loss: 0.5, eval_ppl: 0.5f64.exp() };
        let parsed = read_log(format!("{}\n", l.render()).as_bytes()).unwrap();
        assert_eq!(parsed, vec![l]);
    }
}
