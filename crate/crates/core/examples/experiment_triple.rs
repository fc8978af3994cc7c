//! Vanilla, step-scaled and POS-augmented systems trained on the same
//! synthetic tagged-translation data, then compared.
//!
//! cargo run --release --example experiment_triple -- [out_dir] [steps]

use std::path::PathBuf;

use augformer::pipeline::{experiment_triple, TripleOptions};

fn main() -> augformer::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "triple_out".into()));
    let steps = args.next().map_or(300, |s| s.parse().expect("steps must be an integer"));
    let opts = TripleOptions { steps, n_pairs: 3000, n_test: 200, ..TripleOptions::default() };
    let outcome = experiment_triple(&opts, &out)?;
    for s in &outcome.systems {
        println!("{:<12} step_k={:<4} fused_dim={:<3} test perplexity {:.4}", s.name, s.step_k, s.fused_dim, s.test_perplexity);
    }
    println!();
    print!("{}", outcome.comparison.render_table());
    println!("\nfull outputs in {}", out.display());
    Ok(())
}
