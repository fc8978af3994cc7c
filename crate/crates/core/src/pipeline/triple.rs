use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use super::{run_training, write_lines, RunConfig};
use crate::corpus::TaskKind;
use crate::decode::{decode, DecodeConfig};
use crate::encoding::{search_optimal_step, write_curve_csv, ObjectiveOptions, DEFAULT_PLATEAU_FRACTION};
use crate::error::Result;
use crate::metrics::{evaluate, frequency_table, Comparison, EvalPair, EvalReport};
use crate::model::Side;
use crate::training::{evaluate_loss, perplexity};

#[derive(Clone, Debug, PartialEq)]
pub struct TripleOptions {
    /// Total synthetic pairs, test split included.
    pub n_pairs: usize,
    pub n_test: usize,
    pub steps: u64,
    pub seed: u64,
    /// Largest step tried when choosing the mvPE step.
    pub k_max: u64,
    pub d_post: usize,
}

impl Default for TripleOptions {
    fn default() -> Self {
        TripleOptions { n_pairs: 10_000, n_test: 500, steps: 1500, seed: 1, k_max: 2000, d_post: 64 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SystemSummary {
    pub name: String,
    pub step_k: u64,
    pub d_post: usize,
    /// Encoder input width before projection.
    pub fused_dim: usize,
    pub test_perplexity: f64,
}

#[derive(Debug)]
pub struct TripleOutcome {
    pub best_k: u64,
    pub systems: Vec<SystemSummary>,
    pub reports: Vec<(String, EvalReport)>,
    pub comparison: Comparison,
}

pub const SYSTEM_NAMES: [&str; 3] = ["Transformer", "mvPE", "Augmented"];

/// Trains the vanilla, mvPE and POS-augmented systems on the same
/// tagged-translation data and seed, then scores and compares them.
///
/// Writes one directory per system plus `step_search.csv`,
/// `comparison.txt` and `comparison.csv` under `out_dir`.
pub fn experiment_triple(opts: &TripleOptions, out_dir: &Path) -> Result<TripleOutcome> {
    std::fs::create_dir_all(out_dir)?;
    let mut base = RunConfig { seed: opts.seed, ..RunConfig::default() };
    base.data.task = TaskKind::TaggedTranslation;
    base.data.n_samples = opts.n_pairs;
    base.data.n_test = opts.n_test;
    base.train.steps = opts.steps;

    let candidates: Vec<u64> = (1..=opts.k_max).collect();
    let search = search_optimal_step(
        base.model.d_emb,
        base.model.base,
        base.model.max_len,
        &candidates,
        DEFAULT_PLATEAU_FRACTION,
        ObjectiveOptions::default(),
    )?;
    write_curve_csv(BufWriter::new(File::create(out_dir.join("step_search.csv"))?), &search.curve)?;

    let variants = [(false, 0), (true, 0), (true, opts.d_post)];
    let mut systems = Vec::new();
    let mut reports = Vec::new();
    for (name, (mvpe, d_post)) in SYSTEM_NAMES.iter().zip(variants) {
        let mut cfg = base.clone();
        cfg.model.use_mvpe = mvpe;
        cfg.model.step_k = if mvpe { search.best_k } else { 1 };
        cfg.model.d_post = d_post;
        let dir = out_dir.join(name);
        let run = run_training(&cfg, &dir, false)?;
        let data = &run.dataset;

        let decode_cfg = DecodeConfig::default();
        let mut pairs = Vec::with_capacity(data.test.len());
        let mut hyp_lines = Vec::with_capacity(data.test.len());
        for (src, tgt) in &data.test {
            let out = data.target_vocab.decode(&decode(&run.params, src, &decode_cfg)?);
            hyp_lines.push(out.join(" "));
            pairs.push(EvalPair::new(data.target_vocab.decode(tgt.tokens()), out)?);
        }
        write_lines(dir.join("test.hyp"), hyp_lines)?;

        let ppl = perplexity(evaluate_loss(&run.params, &data.test, cfg.train.batch_size)?);
        let train_refs: Vec<Vec<String>> =
            data.train.iter().map(|(_, t)| data.target_vocab.decode(t.tokens())).collect();
        let freq = frequency_table(&train_refs);
        let report = evaluate(&pairs, &EvalReport::default_specs(), Some(&freq), Some(ppl))?;
        report.write_to_dir(dir.join("eval"))?;

        systems.push(SystemSummary {
            name: name.to_string(),
            step_k: run.config.model.step_k,
            d_post: run.config.model.d_post,
            fused_dim: run.config.model.fused_dim(Side::Source),
            test_perplexity: ppl,
        });
        reports.push((name.to_string(), report));
    }

    let comparison = Comparison::new(&reports)?;
    let mut text = String::new();
    text.push_str(&format!("mvPE step k* = {}\n", search.best_k));
    for s in &systems {
        text.push_str(&format!(
            "{}: step_k={} d_post={} fused_dim={} test_perplexity={:.4}\n",
            s.name, s.step_k, s.d_post, s.fused_dim, s.test_perplexity
        ));
    }
    text.push('\n');
    text.push_str(&comparison.render_table());
    std::fs::write(out_dir.join("comparison.txt"), &text)?;
    std::fs::write(out_dir.join("comparison.csv"), comparison.render_csv())?;
    Ok(TripleOutcome { best_k: search.best_k, systems, reports, comparison })
}
