//! Brute-force oracles and fixtures shared by the integration tests.

#![allow(dead_code)]

use augformer::corpus::{TaggedSentence, EOS};
use augformer::metrics::EvalPair;
use augformer::model::{Batch, ModelConfig, ModelParams};
use augformer::numerics::Tensor;
use augformer::training::batch_loss;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ALPHABET: [&str; 4] = ["a", "b", "c", "d"];

/// Every sentence over `ALPHABET` with length in `lo..=hi`.
pub fn all_sentences(lo: usize, hi: usize) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    for len in lo..=hi {
        let total = ALPHABET.len().pow(len as u32);
        for mut code in 0..total {
            let mut s = Vec::with_capacity(len);
            for _ in 0..len {
                s.push(ALPHABET[code % ALPHABET.len()].to_string());
                code /= ALPHABET.len();
            }
            out.push(s);
        }
    }
    out
}

pub fn random_sentence(rng: &mut impl Rng, lo: usize, hi: usize) -> Vec<String> {
    let len = rng.gen_range(lo..=hi);
    (0..len).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())].to_string()).collect()
}

/// Up to `max_sentences` pairs, references of length 1..=6 and hypotheses
/// of length 0..=6.
pub fn random_corpus(rng: &mut impl Rng, max_sentences: usize) -> Vec<EvalPair> {
    let n = rng.gen_range(1..=max_sentences);
    (0..n)
        .map(|_| EvalPair::new(random_sentence(rng, 1, 6), random_sentence(rng, 0, 6)).unwrap())
        .collect()
}

fn grams(tokens: &[String], n: usize) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let mut i = 0;
    while i + n <= tokens.len() {
        out.push(tokens[i..i + n].to_vec());
        i += 1;
    }
    out
}

fn occurrences(list: &[Vec<String>], g: &[String]) -> usize {
    list.iter().filter(|x| x.as_slice() == g).count()
}

/// Clipped matches and hypothesis n-gram total, counted by linear scans.
pub fn brute_overlap(hyp: &[String], reference: &[String], n: usize) -> (usize, usize) {
    let h = grams(hyp, n);
    let r = grams(reference, n);
    let mut seen: Vec<Vec<String>> = Vec::new();
    let mut matched = 0;
    for g in &h {
        if seen.contains(g) {
            continue;
        }
        seen.push(g.clone());
        matched += occurrences(&h, g).min(occurrences(&r, g));
    }
    (matched, h.len())
}

fn brute_bp(c: usize, r: usize) -> f64 {
    if c == 0 {
        0.0
    } else if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    }
}

fn geometric(precisions: &[f64], bp: f64) -> f64 {
    if precisions.contains(&0.0) {
        return 0.0;
    }
    let mut s = 0.0;
    for p in precisions {
        s += p.ln();
    }
    bp * (s / precisions.len() as f64).exp()
}

/// Corpus BLEU-1..=max_n from pooled clipped counts.
pub fn brute_bleu(pairs: &[EvalPair], max_n: usize) -> Vec<f64> {
    let mut m = vec![0usize; max_n];
    let mut t = vec![0usize; max_n];
    let (mut c, mut r) = (0, 0);
    for p in pairs {
        for n in 1..=max_n {
            let (a, b) = brute_overlap(&p.hypothesis, &p.reference, n);
            m[n - 1] += a;
            t[n - 1] += b;
        }
        c += p.hypothesis.len();
        r += p.reference.len();
    }
    let precisions: Vec<f64> =
        (0..max_n).map(|i| if t[i] == 0 { 0.0 } else { m[i] as f64 / t[i] as f64 }).collect();
    (1..=max_n).map(|n| geometric(&precisions[..n], brute_bp(c, r))).collect()
}

pub fn brute_sentence_bleu(p: &EvalPair, max_n: usize) -> f64 {
    let precisions: Vec<f64> = (1..=max_n)
        .map(|n| {
            let (m, t) = brute_overlap(&p.hypothesis, &p.reference, n);
            if m == 0 {
                1.0 / (t + 1) as f64
            } else {
                m as f64 / t as f64
            }
        })
        .collect();
    geometric(&precisions, brute_bp(p.hypothesis.len(), p.reference.len()))
}

/// Longest common subsequence by enumerating every subsequence of `a`.
pub fn brute_lcs(a: &[String], b: &[String]) -> usize {
    let is_subsequence = |sub: &[&String]| {
        let mut it = b.iter();
        sub.iter().all(|x| it.any(|y| y == *x))
    };
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let sub: Vec<&String> = (0..a.len()).filter(|i| mask >> i & 1 == 1).map(|i| &a[i]).collect();
        if sub.len() > best && is_subsequence(&sub) {
            best = sub.len();
        }
    }
    best
}

/// `(F, P, R)` from an overlap and two side totals; an empty side scores 1
/// only against an empty other side.
pub fn brute_prf(overlap: usize, hyp_total: usize, ref_total: usize) -> (f64, f64, f64) {
    let ratio = |total: usize, other: usize| match (total, other) {
        (0, 0) => 1.0,
        (0, _) => 0.0,
        _ => overlap as f64 / total as f64,
    };
    let p = ratio(hyp_total, ref_total);
    let r = ratio(ref_total, hyp_total);
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (f, p, r)
}

/// Sentence ROUGE-n for n in {1, 2}, or ROUGE-L when `n == 0`.
pub fn brute_sentence_rouge(p: &EvalPair, n: usize) -> (f64, f64, f64) {
    if n == 0 {
        brute_prf(brute_lcs(&p.hypothesis, &p.reference), p.hypothesis.len(), p.reference.len())
    } else {
        let (m, t) = brute_overlap(&p.hypothesis, &p.reference, n);
        brute_prf(m, t, grams(&p.reference, n).len())
    }
}

pub fn brute_rouge(pairs: &[EvalPair], n: usize) -> (f64, f64, f64) {
    let (mut f, mut p, mut r) = (0.0, 0.0, 0.0);
    for pair in pairs {
        let s = brute_sentence_rouge(pair, n);
        f += s.0;
        p += s.1;
        r += s.2;
    }
    let k = pairs.len() as f64;
    (f / k, p / k, r / k)
}

/// Sinusoidal code of position `pos·k`, written out term by term.
pub fn brute_position(pos: u64, k: u64, d: usize, base: f64) -> Vec<f64> {
    let mut v = vec![0.0; d];
    for i in 0..d / 2 {
        let denom = base.powf((2 * i) as f64 / d as f64);
        v[2 * i] = ((pos * k) as f64 / denom).sin();
        v[2 * i + 1] = ((pos * k) as f64 / denom).cos();
    }
    v
}

/// Summed L2 distance over pairs `1 ≤ i < j < len`.
pub fn brute_objective(len: usize, d: usize, k: u64, base: f64) -> f64 {
    let mut total = 0.0;
    for i in 1..len {
        for j in i + 1..len {
            let a = brute_position(i as u64, k, d, base);
            let b = brute_position(j as u64, k, d, base);
            let mut sq = 0.0;
            for c in 0..d {
                sq += (a[c] - b[c]) * (a[c] - b[c]);
            }
            total += sq.sqrt();
        }
    }
    total
}

/// One layer, width 8, two heads, eleven-entry vocabularies and the POS
/// channel switched on.
pub fn micro_config() -> ModelConfig {
    ModelConfig {
        d_emb: 8,
        d_post: 4,
        d_model: 8,
        n_heads: 2,
        n_layers: 1,
        d_ff: 16,
        max_len: 6,
        src_vocab: 11,
        tgt_vocab: 11,
        src_tags: 3,
        tgt_tags: 3,
        ..ModelConfig::desk()
    }
}

/// Initialized parameters with every block nudged off its initial value so
/// biases and norm gains carry generic gradients too.
pub fn jittered_params(cfg: &ModelConfig, seed: u64) -> ModelParams {
    let mut params = ModelParams::init(cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for b in params.blocks_mut() {
        for x in b.data_mut() {
            *x += rng.gen_range(-0.1..0.1);
        }
    }
    params
}

pub fn random_tagged(rng: &mut impl Rng, len: usize, vocab: usize, tags: usize) -> TaggedSentence {
    let tokens = (0..len).map(|_| rng.gen_range(EOS + 2..vocab)).collect();
    let tags = (0..len).map(|_| rng.gen_range(0..tags)).collect();
    TaggedSentence::new(tokens, tags).unwrap()
}

/// Analytic against central-difference gradients for every parameter
/// entry. Returns `(block, max relative error)` per block, where entries
/// with both magnitudes below `floor` are compared against `floor`.
pub fn gradient_check(params: &ModelParams, batch: &Batch, h: f64, floor: f64) -> Vec<(String, f64)> {
    let (_, tape, vars) = batch_loss(params, batch, true).unwrap();
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(params.blocks())
        .map(|(v, b)| tape.grad(*v).map_or_else(|| vec![0.0; b.numel()], <[f64]>::to_vec))
        .collect();
    let mut probe = params.clone();
    let loss_at = |p: &ModelParams| batch_loss(p, batch, false).unwrap().0;
    let mut out = Vec::new();
    for (bi, name) in params.names().iter().enumerate() {
        let mut worst: f64 = 0.0;
        for j in 0..params.blocks()[bi].numel() {
            let x = params.blocks()[bi].data()[j];
            probe.blocks_mut()[bi].data_mut()[j] = x + h;
            let up = loss_at(&probe);
            probe.blocks_mut()[bi].data_mut()[j] = x - h;
            let down = loss_at(&probe);
            probe.blocks_mut()[bi].data_mut()[j] = x;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[bi][j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst = worst.max(rel);
        }
        out.push((name.clone(), worst));
    }
    out
}

pub fn tensor_bits(t: &Tensor) -> Vec<u64> {
    t.data().iter().map(|x| x.to_bits()).collect()
}
