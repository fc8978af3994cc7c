//! Trains the desk-size model on the copy task and reports held-out accuracy.
//!
//! cargo run --release --example train_copy -- [steps]

use std::time::Instant;

use augformer::corpus::{synth_task, SynthConfig, TaskKind};
use augformer::decode::{greedy_decode, DecodeConfig};
use augformer::model::{ModelConfig, ModelParams};
use augformer::training::{teacher_forced_accuracy, train, TrainConfig, TrainState};

fn main() -> augformer::Result<()> {
    let steps = std::env::args().nth(1).map_or(Ok(1500), |s| s.parse()).expect("steps must be an integer");
    let corpus = synth_task(&SynthConfig {
        kind: TaskKind::Copy,
        n_samples: 5200,
        vocab_size: 50,
        min_len: 1,
        max_len: 12,
        seed: 7,
    })?;
    let (train_set, test_set) = corpus.split(200);

    let model_cfg = ModelConfig::desk();
    let cfg = TrainConfig { steps, eval_every: 100, ..TrainConfig::desk() };
    let mut params = ModelParams::init(&model_cfg, cfg.seed)?;
    let mut state = TrainState::new(&params, cfg.seed);

    let start = Instant::now();
    train(&mut params, &mut state, &cfg, &train_set.pairs, &test_set.pairs[..50], std::io::stdout(), |_, _| Ok(()))?;
    println!("trained {steps} steps in {:.1?}", start.elapsed());

    let acc = teacher_forced_accuracy(&params, &test_set.pairs, 64)?;
    let dcfg = DecodeConfig::default();
    let mut exact = 0;
    for (src, tgt) in &test_set.pairs {
        if greedy_decode(&params, src, &dcfg)? == tgt.tokens() {
            exact += 1;
        }
    }
    println!("teacher-forced accuracy {acc:.4}");
    println!("greedy exact match {exact}/{}", test_set.len());
    Ok(())
}
