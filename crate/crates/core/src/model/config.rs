use serde::{Deserialize, Serialize};

use crate::encoding::{EncodingConfig, FusionConfig, DEFAULT_BASE};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_emb: usize,
    /// POS channel width; 0 turns the channel off on both sides.
    pub d_post: usize,
    pub d_model: usize,
    pub n_heads: usize,
    /// Depth of both the encoder and the decoder.
    pub n_layers: usize,
    pub d_ff: usize,
    /// Longest source sentence and longest decoder input (BOS included).
    pub max_len: usize,
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    /// Real tag counts; one extra neutral id is appended per side.
    pub src_tags: usize,
    pub tgt_tags: usize,
    pub use_mvpe: bool,
    pub step_k: u64,
    pub base: f64,
    pub tag_step_k: u64,
    pub pos_on_source: bool,
    pub pos_on_target: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    /// Small profile for single-CPU experiments.
    pub fn desk() -> Self {
        ModelConfig {
            d_emb: 64,
            d_post: 0,
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            d_ff: 256,
            max_len: 16,
            src_vocab: 50,
            tgt_vocab: 50,
            src_tags: 4,
            tgt_tags: 4,
            use_mvpe: false,
            step_k: 1,
            base: DEFAULT_BASE,
            tag_step_k: 1,
            pos_on_source: true,
            pos_on_target: true,
        }
    }

    /// Sizes used for the full-scale translation runs.
    pub fn large() -> Self {
        ModelConfig {
            d_emb: 300,
            d_post: 64,
            d_model: 512,
            n_heads: 8,
            n_layers: 4,
            d_ff: 2048,
            max_len: 500,
            src_vocab: 30_000,
            tgt_vocab: 30_000,
            src_tags: 45,
            tgt_tags: 40,
            use_mvpe: true,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_emb", self.d_emb),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("n_layers", self.n_layers),
            ("d_ff", self.d_ff),
            ("max_len", self.max_len),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !self.d_emb.is_multiple_of(2) || !self.d_post.is_multiple_of(2) {
            return Err(Error::Config("d_emb and d_post must be even".into()));
        }
        if self.src_vocab < 5 || self.tgt_vocab < 5 {
            return Err(Error::Config("vocabularies need at least one non-reserved entry".into()));
        }
        if self.step_k == 0 || self.tag_step_k == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub(crate) fn fusion(&self, side: Side) -> FusionConfig {
        let enabled = match side {
            Side::Source => self.pos_on_source,
            Side::Target => self.pos_on_target,
        };
        FusionConfig {
            d_emb: self.d_emb,
            d_post: if enabled { self.d_post } else { 0 },
            use_mvpe: self.use_mvpe,
            tag_step_k: self.tag_step_k,
        }
    }

    pub(crate) fn position_encoding(&self) -> EncodingConfig {
        EncodingConfig {
            d_model: self.d_emb,
            base: self.base,
            max_len: self.max_len,
            step_k: self.step_k,
        }
    }

    /// Width of the fused input vector on `side`.
    pub fn fused_dim(&self, side: Side) -> usize {
        self.fusion(side).fused_dim()
    }

    pub fn tag_count(&self, side: Side) -> usize {
        match side {
            Side::Source => self.src_tags,
            Side::Target => self.tgt_tags,
        }
    }

    /// `key=value` pairs in a fixed order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("d_emb", self.d_emb.to_string()),
            ("d_post", self.d_post.to_string()),
            ("d_model", self.d_model.to_string()),
            ("n_heads", self.n_heads.to_string()),
            ("n_layers", self.n_layers.to_string()),
            ("d_ff", self.d_ff.to_string()),
            ("max_len", self.max_len.to_string()),
            ("src_vocab", self.src_vocab.to_string()),
            ("tgt_vocab", self.tgt_vocab.to_string()),
            ("src_tags", self.src_tags.to_string()),
            ("tgt_tags", self.tgt_tags.to_string()),
            ("use_mvpe", self.use_mvpe.to_string()),
            ("step_k", self.step_k.to_string()),
            ("base", crate::encoding::fmt_f64(self.base)),
            ("tag_step_k", self.tag_step_k.to_string()),
            ("pos_on_source", self.pos_on_source.to_string()),
            ("pos_on_target", self.pos_on_target.to_string()),
        ]
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Checkpoint(format!("bad value {v:?} for {key}")))
        }
        let mut c = ModelConfig::desk();
        let mut seen = 0;
        for (k, v) in pairs {
            match k {
                "d_emb" => c.d_emb = num(k, v)?,
                "d_post" => c.d_post = num(k, v)?,
                "d_model" => c.d_model = num(k, v)?,
                "n_heads" => c.n_heads = num(k, v)?,
                "n_layers" => c.n_layers = num(k, v)?,
                "d_ff" => c.d_ff = num(k, v)?,
                "max_len" => c.max_len = num(k, v)?,
                "src_vocab" => c.src_vocab = num(k, v)?,
                "tgt_vocab" => c.tgt_vocab = num(k, v)?,
                "src_tags" => c.src_tags = num(k, v)?,
                "tgt_tags" => c.tgt_tags = num(k, v)?,
                "use_mvpe" => c.use_mvpe = num(k, v)?,
                "step_k" => c.step_k = num(k, v)?,
                "base" => c.base = num(k, v)?,
                "tag_step_k" => c.tag_step_k = num(k, v)?,
                "pos_on_source" => c.pos_on_source = num(k, v)?,
                "pos_on_target" => c.pos_on_target = num(k, v)?,
                other => return Err(Error::Checkpoint(format!("unknown config key {other:?}"))),
            }
            seen += 1;
        }
        if seen != 17 {
            return Err(Error::Checkpoint(format!("expected 17 config keys, found {seen}")));
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Source,
    Target,
}
