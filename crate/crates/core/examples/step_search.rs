//! Sweeps the position step and picks the smallest one on the plateau.
//!
//! cargo run --release --example step_search -- [d_model] [max_len] [k_max]

use augformer::encoding::{search_optimal_step, ObjectiveOptions, DEFAULT_BASE, DEFAULT_PLATEAU_FRACTION};

fn arg(i: usize, default: u64) -> u64 {
    std::env::args().nth(i).map_or(default, |s| s.parse().expect("arguments must be integers"))
}

fn main() -> augformer::Result<()> {
    let (d, len, k_max) = (arg(1, 128) as usize, arg(2, 100) as usize, arg(3, 2000));
    let candidates: Vec<u64> = (1..=k_max).collect();
    let search =
        search_optimal_step(d, DEFAULT_BASE, len, &candidates, DEFAULT_PLATEAU_FRACTION, ObjectiveOptions::default())?;
    for &(k, v) in search.curve.iter().filter(|(k, _)| k.is_power_of_two() || *k == k_max) {
        println!("k={k:<5} objective={v:.3}");
    }
    println!("chosen step: {}", search.best_k);
    Ok(())
}
