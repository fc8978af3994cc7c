//! Greedy and beam search over a fixed next-token table, where the greedy
//! first choice leads to a worse sequence.

use augformer::corpus::EOS;
use augformer::decode::{beam_search, greedy_search, DecodeConfig, StepScorer, Strategy};

/// Probabilities over {pad, bos, eos, x, y} depending only on the prefix.
struct Table;

impl StepScorer for Table {
    fn next_log_probs(&mut self, generated: &[usize]) -> augformer::Result<Vec<f64>> {
        let p = match generated {
            [] => [0.0, 0.0, 0.0, 0.55, 0.45],
            [3] => [0.0, 0.0, 0.4, 0.3, 0.3],
            [4] => [0.0, 0.0, 0.95, 0.03, 0.02],
            _ => [0.0, 0.0, 1.0, 0.0, 0.0],
        };
        Ok(p.iter().map(|x: &f64| x.ln()).collect())
    }
}

fn main() -> augformer::Result<()> {
    let g = greedy_search(&mut Table, 4)?;
    println!("greedy {:?} log P {:.4}", g.tokens, g.log_prob);
    for width in [1, 2, 4] {
        let cfg = DecodeConfig { strategy: Strategy::Beam, beam_width: width, max_out_len: 4, length_penalty: 0.0 };
        let h = beam_search(&mut Table, &cfg)?;
        println!("beam {width} {:?} log P {:.4}", h.tokens, h.log_prob);
    }
    println!("token {EOS} ends a sequence and is not part of the output");
    Ok(())
}
