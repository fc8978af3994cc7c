//! Vanilla and step-scaled sinusoidal tables side by side.
//!
//! cargo run --example positional_encoding -- [step_k]

use augformer::encoding::{build_mvpe_table, build_pe_table, variance_objective, EncodingConfig, ObjectiveOptions};

fn main() -> augformer::Result<()> {
    let k: u64 = std::env::args().nth(1).map_or(Ok(273), |s| s.parse()).expect("step_k must be an integer");
    let cfg = EncodingConfig::new(16, 12);
    let pe = build_pe_table(&cfg)?;
    let mv = build_mvpe_table(&cfg.with_step(k))?;

    println!("first four dims, vanilla vs step {k}");
    for pos in 0..cfg.max_len {
        let a = &pe.row(pos)?[..4];
        let b = &mv.row(pos)?[..4];
        println!("{pos:>3}  {a:>8.4?}  {b:>8.4?}");
    }

    let opts = ObjectiveOptions::default();
    let base = variance_objective(&pe, cfg.max_len, opts)?;
    let scaled = variance_objective(&mv, cfg.max_len, opts)?;
    println!("summed pairwise distance over {} pairs: {:.4} vs {:.4}", base.pairs, base.total, scaled.total);
    Ok(())
}
