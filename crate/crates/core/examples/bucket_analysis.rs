//! Bucketed reports over a synthetic corpus with injected errors, written
//! as CSV to stdout.

use augformer::metrics::{evaluate, frequency_table, BucketDimension, EvalPair, EvalReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> augformer::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let word = |rng: &mut ChaCha8Rng| format!("w{}", (rng.gen::<f64>().powi(3) * 60.0) as usize);
    let train: Vec<Vec<String>> =
        (0..500).map(|_| (0..rng.gen_range(3..15)).map(|_| word(&mut rng)).collect()).collect();
    let mut pairs = Vec::new();
    for _ in 0..200 {
        let reference: Vec<String> = (0..rng.gen_range(3..40)).map(|_| word(&mut rng)).collect();
        let mut hypothesis = reference.clone();
        hypothesis.retain(|_| rng.gen_bool(0.85));
        for t in hypothesis.iter_mut() {
            if rng.gen_bool(0.1) {
                *t = word(&mut rng);
            }
        }
        pairs.push(EvalPair::new(reference, hypothesis)?);
    }

    let report = evaluate(&pairs, &EvalReport::default_specs(), Some(&frequency_table(&train)), None)?;
    for dim in BucketDimension::ALL {
        let b = report.bucket(dim).expect("default specs cover every dimension");
        println!("# {}", dim.name());
        b.write_csv(std::io::stdout())?;
    }
    Ok(())
}
