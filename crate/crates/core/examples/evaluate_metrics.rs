//! Corpus BLEU, ROUGE and length ratio for a handful of sentence pairs.

use augformer::metrics::{bleu, length_ratio, rouge, sentence_bleu, EvalPair, RougeVariant};

fn main() -> augformer::Result<()> {
    let pairs = [
        ("the cat sat on the mat", "the cat sat on a mat"),
        ("there is a cat on the mat", "a cat is on the mat"),
        ("the cat", "the the the"),
    ]
    .iter()
    .map(|(r, h)| EvalPair::from_text(r, h))
    .collect::<augformer::Result<Vec<_>>>()?;

    for (n, b) in bleu(&pairs, 4)?.iter().enumerate() {
        println!("BLEU-{} {b:.4}", n + 1);
    }
    for (name, v) in [("1", RougeVariant::One), ("2", RougeVariant::Two), ("L", RougeVariant::L)] {
        let s = rouge(&pairs, v);
        println!("ROUGE-{name} F {:.4} P {:.4} R {:.4}", s.f, s.p, s.r);
    }
    println!("length ratio {}", length_ratio(&pairs));
    for p in &pairs {
        println!("sentence BLEU {:.4}  {}", sentence_bleu(p, 4), p.hypothesis.join(" "));
    }
    Ok(())
}
