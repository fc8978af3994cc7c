use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, Side};
use crate::encoding::FusionTables;
use crate::error::Result;
use crate::numerics::{Tape, Tensor, Var};

pub(crate) type ParamId = usize;

#[derive(Clone, Copy, Debug)]
enum Init {
    Uniform { fan_in: usize, fan_out: usize },
    Zeros,
    Ones,
}

#[derive(Clone, Debug)]
pub(crate) struct AttnIds {
    pub wq: ParamId,
    pub bq: ParamId,
    pub wk: ParamId,
    pub bk: ParamId,
    pub wv: ParamId,
    pub bv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
}

#[derive(Clone, Debug)]
pub(crate) struct NormIds {
    pub gain: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Debug)]
pub(crate) struct FfnIds {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

#[derive(Clone, Debug)]
pub(crate) struct EncoderLayerIds {
    pub self_attn: AttnIds,
    pub norm1: NormIds,
    pub ffn: FfnIds,
    pub norm2: NormIds,
}

#[derive(Clone, Debug)]
pub(crate) struct DecoderLayerIds {
    pub self_attn: AttnIds,
    pub norm1: NormIds,
    pub cross_attn: AttnIds,
    pub norm2: NormIds,
    pub ffn: FfnIds,
    pub norm3: NormIds,
}

#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub src_embed: ParamId,
    pub tgt_embed: ParamId,
    pub enc_in_w: ParamId,
    pub enc_in_b: ParamId,
    pub dec_in_w: ParamId,
    pub dec_in_b: ParamId,
    pub encoder: Vec<EncoderLayerIds>,
    pub decoder: Vec<DecoderLayerIds>,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

#[derive(Default)]
struct Registry {
    specs: Vec<(String, Vec<usize>, Init)>,
}

impl Registry {
    fn add(&mut self, name: String, shape: &[usize], init: Init) -> ParamId {
        self.specs.push((name, shape.to_vec(), init));
        self.specs.len() - 1
    }

    fn matrix(&mut self, name: String, rows: usize, cols: usize) -> ParamId {
        self.add(name, &[rows, cols], Init::Uniform { fan_in: rows, fan_out: cols })
    }

    fn bias(&mut self, name: String, n: usize) -> ParamId {
        self.add(name, &[n], Init::Zeros)
    }

    fn attn(&mut self, prefix: &str, d: usize) -> AttnIds {
        AttnIds {
            wq: self.matrix(format!("{prefix}.wq"), d, d),
            bq: self.bias(format!("{prefix}.bq"), d),
            wk: self.matrix(format!("{prefix}.wk"), d, d),
            bk: self.bias(format!("{prefix}.bk"), d),
            wv: self.matrix(format!("{prefix}.wv"), d, d),
            bv: self.bias(format!("{prefix}.bv"), d),
            wo: self.matrix(format!("{prefix}.wo"), d, d),
            bo: self.bias(format!("{prefix}.bo"), d),
        }
    }

    fn norm(&mut self, prefix: &str, d: usize) -> NormIds {
        NormIds {
            gain: self.add(format!("{prefix}.gain"), &[d], Init::Ones),
            bias: self.bias(format!("{prefix}.bias"), d),
        }
    }

    fn ffn(&mut self, prefix: &str, d: usize, d_ff: usize) -> FfnIds {
        FfnIds {
            w1: self.matrix(format!("{prefix}.w1"), d, d_ff),
            b1: self.bias(format!("{prefix}.b1"), d_ff),
            w2: self.matrix(format!("{prefix}.w2"), d_ff, d),
            b2: self.bias(format!("{prefix}.b2"), d),
        }
    }
}

fn layout(cfg: &ModelConfig) -> (Layout, Registry) {
    let mut r = Registry::default();
    let d = cfg.d_model;
    let src_embed = r.matrix("src_embed".into(), cfg.src_vocab, cfg.d_emb);
    let tgt_embed = r.matrix("tgt_embed".into(), cfg.tgt_vocab, cfg.d_emb);
    let enc_in_w = r.matrix("enc_in.w".into(), cfg.fused_dim(Side::Source), d);
    let enc_in_b = r.bias("enc_in.b".into(), d);
    let dec_in_w = r.matrix("dec_in.w".into(), cfg.fused_dim(Side::Target), d);
    let dec_in_b = r.bias("dec_in.b".into(), d);
    let encoder = (0..cfg.n_layers)
        .map(|l| EncoderLayerIds {
            self_attn: r.attn(&format!("enc.{l}.self_attn"), d),
            norm1: r.norm(&format!("enc.{l}.norm1"), d),
            ffn: r.ffn(&format!("enc.{l}.ffn"), d, cfg.d_ff),
            norm2: r.norm(&format!("enc.{l}.norm2"), d),
        })
        .collect();
    let decoder = (0..cfg.n_layers)
        .map(|l| DecoderLayerIds {
            self_attn: r.attn(&format!("dec.{l}.self_attn"), d),
            norm1: r.norm(&format!("dec.{l}.norm1"), d),
            cross_attn: r.attn(&format!("dec.{l}.cross_attn"), d),
            norm2: r.norm(&format!("dec.{l}.norm2"), d),
            ffn: r.ffn(&format!("dec.{l}.ffn"), d, cfg.d_ff),
            norm3: r.norm(&format!("dec.{l}.norm3"), d),
        })
        .collect();
    let out_w = r.matrix("out.w".into(), d, cfg.tgt_vocab);
    let out_b = r.bias("out.b".into(), cfg.tgt_vocab);
    let layout = Layout {
        src_embed,
        tgt_embed,
        enc_in_w,
        enc_in_b,
        dec_in_w,
        dec_in_b,
        encoder,
        decoder,
        out_w,
        out_b,
    };
    (layout, r)
}

/// Every learnable block of the encoder-decoder plus the fixed encoding
/// tables derived from the configuration.
#[derive(Clone, Debug)]
pub struct ModelParams {
    config: ModelConfig,
    names: Vec<String>,
    blocks: Vec<Tensor>,
    pub(crate) layout: Layout,
    pub(crate) src_tables: FusionTables,
    pub(crate) tgt_tables: FusionTables,
}

impl ModelParams {
    /// Scaled-uniform weights `±√(6/(fan_in+fan_out))`, zero biases and unit
    /// norm gains, drawn from a generator seeded with `seed`.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (layout, registry) = layout(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::with_capacity(registry.specs.len());
        let mut blocks = Vec::with_capacity(registry.specs.len());
        for (name, shape, init) in registry.specs {
            let t = match init {
                Init::Uniform { fan_in, fan_out } => {
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    Tensor::from_fn(&shape, |_| rng.gen_range(-limit..limit))
                }
                Init::Zeros => Tensor::zeros(&shape),
                Init::Ones => Tensor::filled(&shape, 1.0),
            };
            names.push(name);
            blocks.push(t);
        }
        Self::assemble(config.clone(), layout, names, blocks)
    }

    fn assemble(config: ModelConfig, layout: Layout, names: Vec<String>, blocks: Vec<Tensor>) -> Result<Self> {
        let pe = config.position_encoding();
        let src_tables = FusionTables::build(config.fusion(Side::Source), pe, config.src_tags + 1)?;
        let tgt_tables = FusionTables::build(config.fusion(Side::Target), pe, config.tgt_tags + 1)?;
        Ok(ModelParams { config, names, blocks, layout, src_tables, tgt_tables })
    }

    /// Rebuilds parameters from named blocks, checking names and shapes
    /// against the layout implied by `config`.
    pub fn from_blocks(config: &ModelConfig, blocks: Vec<(String, Tensor)>) -> Result<Self> {
        config.validate()?;
        let (layout, registry) = layout(config);
        if registry.specs.len() != blocks.len() {
            return Err(crate::Error::Checkpoint(format!(
                "expected {} parameter blocks, found {}",
                registry.specs.len(),
                blocks.len()
            )));
        }
        let mut names = Vec::with_capacity(blocks.len());
        let mut tensors = Vec::with_capacity(blocks.len());
        for ((name, shape, _), (got_name, t)) in registry.specs.iter().zip(blocks) {
            if *name != got_name || shape.as_slice() != t.shape() {
                return Err(crate::Error::Checkpoint(format!(
                    "block {got_name:?} {:?} does not match expected {name:?} {shape:?}",
                    t.shape()
                )));
            }
            names.push(got_name);
            tensors.push(t);
        }
        Self::assemble(config.clone(), layout, names, tensors)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn blocks(&self) -> &[Tensor] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [Tensor] {
        &mut self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.blocks[i])
    }

    pub fn num_parameters(&self) -> usize {
        self.blocks.iter().map(Tensor::numel).sum()
    }

    pub fn source_tables(&self) -> &FusionTables {
        &self.src_tables
    }

    pub fn target_tables(&self) -> &FusionTables {
        &self.tgt_tables
    }

    /// Zeroes the output projection so every prediction starts uniform.
    pub fn zero_output_projection(&mut self) {
        for id in [self.layout.out_w, self.layout.out_b] {
            self.blocks[id].data_mut().fill(0.0);
        }
    }

    /// First block containing a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.names
            .iter()
            .zip(&self.blocks)
            .find(|(_, t)| !t.is_finite())
            .map(|(n, _)| n.as_str())
    }

    /// Records every block on `tape`, as trainable leaves or as constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        let vars = self
            .blocks
            .iter()
            .map(|t| if trainable { tape.param(t) } else { tape.constant(t.clone()) })
            .collect();
        Bound { vars }
    }
}

/// Tape handles for a bound [`ModelParams`], indexed like its blocks.
#[derive(Clone, Debug)]
pub struct Bound {
    pub(crate) vars: Vec<Var>,
}

impl Bound {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub(crate) fn get(&self, id: ParamId) -> Var {
        self.vars[id]
    }
}
