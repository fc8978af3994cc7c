use super::attention::{linear, multi_head_attention, AttentionMask};
use super::config::Side;
use super::params::{Bound, FfnIds, ModelParams, NormIds};
use crate::corpus::{TaggedSentence, BOS, EOS, PAD};
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Padded, teacher-forced training batch.
///
/// Decoder inputs are `BOS y₁ … yₙ` (BOS carries the neutral tag), targets
/// are `y₁ … yₙ EOS`; padding positions have no target.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub size: usize,
    pub src_len: usize,
    pub tgt_len: usize,
    pub src_tokens: Vec<usize>,
    pub src_tags: Vec<usize>,
    pub src_pad: Vec<bool>,
    pub tgt_tokens: Vec<usize>,
    pub tgt_tags: Vec<usize>,
    pub tgt_pad: Vec<bool>,
    pub targets: Vec<Option<usize>>,
}

impl Batch {
    pub fn new(pairs: &[(&TaggedSentence, &TaggedSentence)], params: &ModelParams) -> Result<Self> {
        Self::padded_to(pairs, params, 0, 0)
    }

    /// Like [`Batch::new`] but pads to at least the given lengths.
    pub fn padded_to(
        pairs: &[(&TaggedSentence, &TaggedSentence)],
        params: &ModelParams,
        min_src_len: usize,
        min_tgt_len: usize,
    ) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::DegenerateBatch("batch has no sentence pairs".into()));
        }
        let cfg = params.config();
        let src_len = pairs.iter().map(|(s, _)| s.len()).max().unwrap_or(0).max(min_src_len);
        let tgt_len = pairs.iter().map(|(_, t)| t.len() + 1).max().unwrap_or(0).max(min_tgt_len);
        for (what, len) in [("source length", src_len), ("target length", tgt_len)] {
            if len > cfg.max_len {
                return Err(Error::Range { what, index: len, limit: cfg.max_len });
            }
        }
        let (src_neutral, tgt_neutral) = (cfg.src_tags, cfg.tgt_tags);
        let size = pairs.len();
        let mut b = Batch {
            size,
            src_len,
            tgt_len,
            src_tokens: vec![PAD; size * src_len],
            src_tags: vec![src_neutral; size * src_len],
            src_pad: vec![true; size * src_len],
            tgt_tokens: vec![PAD; size * tgt_len],
            tgt_tags: vec![tgt_neutral; size * tgt_len],
            tgt_pad: vec![true; size * tgt_len],
            targets: vec![None; size * tgt_len],
        };
        for (i, (src, tgt)) in pairs.iter().enumerate() {
            check_tags(src.tags(), src_neutral)?;
            check_tags(tgt.tags(), tgt_neutral)?;
            let s0 = i * src_len;
            b.src_tokens[s0..s0 + src.len()].copy_from_slice(src.tokens());
            b.src_tags[s0..s0 + src.len()].copy_from_slice(src.tags());
            b.src_pad[s0..s0 + src.len()].fill(false);

            let t0 = i * tgt_len;
            b.tgt_tokens[t0] = BOS;
            b.tgt_tokens[t0 + 1..t0 + 1 + tgt.len()].copy_from_slice(tgt.tokens());
            b.tgt_tags[t0 + 1..t0 + 1 + tgt.len()].copy_from_slice(tgt.tags());
            b.tgt_pad[t0..t0 + 1 + tgt.len()].fill(false);
            for (j, &tok) in tgt.tokens().iter().enumerate() {
                b.targets[t0 + j] = Some(tok);
            }
            b.targets[t0 + tgt.len()] = Some(EOS);
        }
        Ok(b)
    }

    pub fn target_count(&self) -> usize {
        self.targets.iter().flatten().count()
    }
}

fn check_tags(tags: &[usize], neutral: usize) -> Result<()> {
    match tags.iter().find(|&&t| t > neutral) {
        Some(&bad) => Err(Error::Range { what: "tag id", index: bad, limit: neutral + 1 }),
        None => Ok(()),
    }
}

fn layer_norm(tape: &mut Tape, bound: &Bound, ids: &NormIds, x: Var) -> Result<Var> {
    tape.layer_norm(x, bound.get(ids.gain), bound.get(ids.bias), LAYER_NORM_EPS)
}

fn feed_forward(tape: &mut Tape, bound: &Bound, ids: &FfnIds, x: Var) -> Result<Var> {
    let h = linear(tape, x, bound.get(ids.w1), bound.get(ids.b1))?;
    let h = tape.relu(h);
    linear(tape, h, bound.get(ids.w2), bound.get(ids.b2))
}

impl ModelParams {
    /// Fused input rows (`concat(emb + position, tag code)`) projected to
    /// `d_model`, for `batch` sequences of `len` positions each.
    fn fused_input(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        side: Side,
        tokens: &[usize],
        tags: &[usize],
        len: usize,
    ) -> Result<Var> {
        let (tables, embed, w, b) = match side {
            Side::Source => (&self.src_tables, self.layout.src_embed, self.layout.enc_in_w, self.layout.enc_in_b),
            Side::Target => (&self.tgt_tables, self.layout.tgt_embed, self.layout.dec_in_w, self.layout.dec_in_b),
        };
        let rows = tokens.len();
        let d_emb = tables.config.d_emb;
        let emb = tape.gather_rows(bound.get(embed), tokens)?;
        let mut pe = Vec::with_capacity(rows * d_emb);
        for r in 0..rows {
            pe.extend_from_slice(tables.positions.row(r % len)?);
        }
        let pe = tape.constant(Tensor::new(&[rows, d_emb], pe)?);
        let mut x = tape.add(emb, pe)?;
        if let Some(tag_table) = &tables.tags {
            let mut codes = Vec::with_capacity(rows * tag_table.dim());
            for &t in tags {
                codes.extend_from_slice(tables.tag_row(t)?);
            }
            let codes = tape.constant(Tensor::new(&[rows, tag_table.dim()], codes)?);
            x = tape.concat_cols(x, codes)?;
        }
        linear(tape, x, bound.get(w), bound.get(b))
    }

    /// Encoder over `batch` padded sources; returns `[batch·len, d_model]`.
    pub(crate) fn encode_rows(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        tokens: &[usize],
        tags: &[usize],
        pad: &[bool],
        len: usize,
    ) -> Result<Var> {
        if len > self.config().max_len {
            return Err(Error::Range { what: "source length", index: len, limit: self.config().max_len });
        }
        let mut x = self.fused_input(tape, bound, Side::Source, tokens, tags, len)?;
        let mask = AttentionMask::key_padding(len, len, pad);
        let heads = self.config().n_heads;
        for layer in &self.layout.encoder {
            let a = multi_head_attention(tape, bound, &layer.self_attn, x, x, x, &mask, heads)?;
            let h = tape.add(x, a.output)?;
            x = layer_norm(tape, bound, &layer.norm1, h)?;
            let f = feed_forward(tape, bound, &layer.ffn, x)?;
            let h = tape.add(x, f)?;
            x = layer_norm(tape, bound, &layer.norm2, h)?;
        }
        Ok(x)
    }

    /// Decoder logits `[batch·len, tgt_vocab]` given encoder `memory`.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn decode_rows(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        memory: Var,
        src_pad: &[bool],
        src_len: usize,
        tokens: &[usize],
        tags: &[usize],
        pad: &[bool],
        len: usize,
    ) -> Result<Var> {
        if len > self.config().max_len {
            return Err(Error::Range { what: "target prefix length", index: len, limit: self.config().max_len });
        }
        let mut x = self.fused_input(tape, bound, Side::Target, tokens, tags, len)?;
        let self_mask = AttentionMask::causal(len, pad);
        let cross_mask = AttentionMask::key_padding(len, src_len, src_pad);
        let heads = self.config().n_heads;
        for layer in &self.layout.decoder {
            let a = multi_head_attention(tape, bound, &layer.self_attn, x, x, x, &self_mask, heads)?;
            let h = tape.add(x, a.output)?;
            x = layer_norm(tape, bound, &layer.norm1, h)?;
            let c = multi_head_attention(tape, bound, &layer.cross_attn, x, memory, memory, &cross_mask, heads)?;
            let h = tape.add(x, c.output)?;
            x = layer_norm(tape, bound, &layer.norm2, h)?;
            let f = feed_forward(tape, bound, &layer.ffn, x)?;
            let h = tape.add(x, f)?;
            x = layer_norm(tape, bound, &layer.norm3, h)?;
        }
        linear(tape, x, bound.get(self.layout.out_w), bound.get(self.layout.out_b))
    }

    /// Teacher-forced logits for a whole batch.
    pub fn forward_batch(&self, tape: &mut Tape, bound: &Bound, batch: &Batch) -> Result<Var> {
        let memory = self.encode_rows(tape, bound, &batch.src_tokens, &batch.src_tags, &batch.src_pad, batch.src_len)?;
        self.decode_rows(
            tape,
            bound,
            memory,
            &batch.src_pad,
            batch.src_len,
            &batch.tgt_tokens,
            &batch.tgt_tags,
            &batch.tgt_pad,
            batch.tgt_len,
        )
    }

    /// Encoder output `[len, d_model]` for one sentence.
    pub fn encoder_forward(&self, src: &TaggedSentence) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let pad = vec![false; src.len()];
        let h = self.encode_rows(&mut tape, &bound, src.tokens(), src.tags(), &pad, src.len())?;
        Ok(tape.value(h).clone())
    }

    /// Logits `[len, tgt_vocab]` for decoder inputs `prefix` attending to
    /// `memory` (`[src_len, d_model]`, no padding).
    pub fn decoder_forward(&self, prefix: &TaggedSentence, memory: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let src_len = memory.shape()[0];
        let mem = tape.constant(memory.clone());
        let logits = self.decode_rows(
            &mut tape,
            &bound,
            mem,
            &vec![false; src_len],
            src_len,
            prefix.tokens(),
            prefix.tags(),
            &vec![false; prefix.len()],
            prefix.len(),
        )?;
        Ok(tape.value(logits).clone())
    }
}

/// Inference state for one source sentence: parameters are bound and the
/// source encoded once, then each call re-runs only the decoder.
pub struct Translator<'a> {
    params: &'a ModelParams,
    tape: Tape,
    bound: Bound,
    memory: Var,
    src_len: usize,
    mark: usize,
}

impl<'a> Translator<'a> {
    pub fn new(params: &'a ModelParams, src: &TaggedSentence) -> Result<Self> {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, false);
        let pad = vec![false; src.len()];
        let memory = params.encode_rows(&mut tape, &bound, src.tokens(), src.tags(), &pad, src.len())?;
        let mark = tape.len();
        Ok(Translator { params, tape, bound, memory, src_len: src.len(), mark })
    }

    pub fn params(&self) -> &ModelParams {
        self.params
    }

    /// Decoder logits for explicit inputs (BOS included by the caller).
    pub fn logits(&mut self, tokens: &[usize], tags: &[usize]) -> Result<Tensor> {
        self.tape.truncate(self.mark);
        let len = tokens.len();
        let logits = self.params.decode_rows(
            &mut self.tape,
            &self.bound,
            self.memory,
            &vec![false; self.src_len],
            self.src_len,
            tokens,
            tags,
            &vec![false; len],
            len,
        )?;
        Ok(self.tape.value(logits).clone())
    }

    /// Log-probabilities of the next token after `BOS generated…`; every
    /// decoder input carries the neutral tag.
    pub fn next_log_probs(&mut self, generated: &[usize]) -> Result<Vec<f64>> {
        let mut tokens = Vec::with_capacity(generated.len() + 1);
        tokens.push(BOS);
        tokens.extend_from_slice(generated);
        let tags = vec![self.params.config().tgt_tags; tokens.len()];
        let logits = self.logits(&tokens, &tags)?;
        Ok(log_softmax(logits.row(tokens.len() - 1)))
    }
}

pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - log_z).collect()
}

#[cfg(test)]
mod tests {
    use super::super::config::ModelConfig;
    use super::*;

    fn small() -> ModelParams {
        let cfg = ModelConfig { n_layers: 1, d_emb: 16, d_post: 8, d_model: 16, n_heads: 2, d_ff: 32, ..ModelConfig::desk() };
        ModelParams::init(&cfg, 5).unwrap()
    }

    fn sent(tokens: &[usize], tag: usize) -> TaggedSentence {
        TaggedSentence::uniform(tokens.to_vec(), tag).unwrap()
    }

    fn batch_logits(p: &ModelParams, b: &Batch) -> Tensor {
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape, false);
        let v = p.forward_batch(&mut tape, &bound, b).unwrap();
        tape.value(v).clone()
    }

    #[test]
    fn batch_layout() {
        let p = small();
        let (s, t) = (sent(&[5, 6, 7], 1), sent(&[8, 9], 2));
        let b = Batch::new(&[(&s, &t)], &p).unwrap();
        assert_eq!(b.tgt_tokens, vec![BOS, 8, 9]);
        assert_eq!(b.tgt_tags, vec![4, 2, 2]);
        assert_eq!(b.targets, vec![Some(8), Some(9), Some(EOS)]);
        assert_eq!(b.target_count(), 3);
    }

    #[test]
    fn extra_padding_leaves_real_rows_unchanged() {
        let p = small();
        let (s, t) = (sent(&[5, 6, 7], 1), sent(&[8, 9], 2));
        let tight = batch_logits(&p, &Batch::new(&[(&s, &t)], &p).unwrap());
        let loose = batch_logits(&p, &Batch::padded_to(&[(&s, &t)], &p, 7, 6).unwrap());
        let v = p.config().tgt_vocab;
        for (a, b) in tight.data().iter().zip(&loose.data()[..3 * v]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn later_targets_do_not_affect_earlier_logits() {
        let p = small();
        let s = sent(&[5, 6, 7], 1);
        let a = batch_logits(&p, &Batch::new(&[(&s, &sent(&[8, 9, 10], 0))], &p).unwrap());
        let b = batch_logits(&p, &Batch::new(&[(&s, &sent(&[8, 11, 12], 0))], &p).unwrap());
        let v = p.config().tgt_vocab;
        assert_eq!(&a.data()[..2 * v], &b.data()[..2 * v]);
        assert_ne!(&a.data()[2 * v..3 * v], &b.data()[2 * v..3 * v]);
    }

    #[test]
    fn translator_agrees_with_single_sentence_forward() {
        let p = small();
        let s = sent(&[5, 6, 7, 8], 2);
        let memory = p.encoder_forward(&s).unwrap();
        assert_eq!(memory.shape(), &[4, 16]);
        let neutral = p.config().tgt_tags;
        let prefix = TaggedSentence::uniform(vec![BOS, 9, 10], neutral).unwrap();
        let direct = p.decoder_forward(&prefix, &memory).unwrap();
        let mut tr = Translator::new(&p, &s).unwrap();
        let lp = tr.next_log_probs(&[9, 10]).unwrap();
        let want = log_softmax(direct.row(2));
        for (a, b) in lp.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
        // Reusing the session gives the same answer.
        assert_eq!(tr.next_log_probs(&[9, 10]).unwrap(), lp);
    }

    #[test]
    fn zero_output_projection_predicts_uniformly() {
        let mut p = small();
        p.zero_output_projection();
        let mut tr = Translator::new(&p, &sent(&[5], 0)).unwrap();
        let lp = tr.next_log_probs(&[]).unwrap();
        let u = -(p.config().tgt_vocab as f64).ln();
        assert!(lp.iter().all(|x| (x - u).abs() < 1e-12));
    }

    #[test]
    fn over_length_and_bad_tags_are_rejected() {
        let p = small();
        let long = sent(&[5; 17], 0);
        assert!(Batch::new(&[(&long, &sent(&[5], 0))], &p).is_err());
        assert!(Batch::new(&[(&sent(&[5], 9), &sent(&[5], 0))], &p).is_err());
        assert!(Batch::new(&[], &p).is_err());
    }
}
