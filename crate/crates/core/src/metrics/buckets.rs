use std::collections::HashMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::{ngram_counts, sentence_bleu, EvalPair, Prf};
use crate::encoding::fmt_f64;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BucketDimension {
    WordFrequency,
    SentenceLength,
    LengthDifference,
    SentenceBleu,
}

impl BucketDimension {
    pub const ALL: [BucketDimension; 4] = [
        BucketDimension::WordFrequency,
        BucketDimension::SentenceLength,
        BucketDimension::LengthDifference,
        BucketDimension::SentenceBleu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BucketDimension::WordFrequency => "word_frequency",
            BucketDimension::SentenceLength => "sentence_length",
            BucketDimension::LengthDifference => "length_difference",
            BucketDimension::SentenceBleu => "sentence_bleu",
        }
    }
}

/// Boundaries `b₀ < b₁ < …` cut the line into `(-∞, b₀), [b₀, b₁), …, [bₙ, ∞)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketSpec {
    pub dimension: BucketDimension,
    pub boundaries: Vec<f64>,
}

impl BucketSpec {
    pub fn new(dimension: BucketDimension, boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.iter().any(|b| !b.is_finite()) || boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "{} boundaries must be finite and strictly increasing",
                dimension.name()
            )));
        }
        Ok(BucketSpec { dimension, boundaries })
    }

    pub fn default_for(dimension: BucketDimension) -> Self {
        let boundaries = match dimension {
            // Below 1 collects words never seen in training.
            BucketDimension::WordFrequency => vec![1.0, 2.0, 3.0, 4.0, 5.0, 10.0, 100.0, 1000.0],
            BucketDimension::SentenceLength => vec![10.0, 20.0, 30.0, 40.0, 50.0, 60.0],
            BucketDimension::LengthDifference => (-5..=6).map(f64::from).collect(),
            BucketDimension::SentenceBleu => (1..10).map(|i| f64::from(i) / 10.0).collect(),
        };
        BucketSpec { dimension, boundaries }
    }

    pub fn len(&self) -> usize {
        self.boundaries.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, x: f64) -> usize {
        self.boundaries.partition_point(|&b| b <= x)
    }

    pub fn bounds(&self, i: usize) -> (Option<f64>, Option<f64>) {
        let lower = i.checked_sub(1).map(|j| self.boundaries[j]);
        (lower, self.boundaries.get(i).copied())
    }

    pub fn label(&self, i: usize) -> String {
        match self.bounds(i) {
            (None, Some(hi)) => format!("<{hi}"),
            (Some(lo), None) => format!(">={lo}"),
            (Some(lo), Some(hi)) => format!("[{lo},{hi})"),
            (None, None) => "all".into(),
        }
    }

    fn report(&self, counts: Vec<usize>, values: Vec<Option<f64>>) -> BucketReport {
        let buckets = (0..self.len())
            .map(|i| {
                let (lower, upper) = self.bounds(i);
                Bucket { label: self.label(i), lower, upper, count: counts[i], value: values[i] }
            })
            .collect();
        BucketReport { dimension: self.dimension, boundaries: self.boundaries.clone(), buckets }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub label: String,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub count: usize,
    /// Bucket statistic (F1 or mean sentence BLEU); absent for count-only
    /// reports and empty buckets.
    pub value: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketReport {
    pub dimension: BucketDimension,
    pub boundaries: Vec<f64>,
    pub buckets: Vec<Bucket>,
}

impl BucketReport {
    pub fn total(&self) -> usize {
        self.buckets.iter().map(|b| b.count).sum()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.buckets.iter().map(|b| b.count).collect()
    }

    /// `bucket,lower,upper,count,value`; open ends and missing values are blank.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "bucket,lower,upper,count,value")?;
        let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
        for b in &self.buckets {
            writeln!(w, "\"{}\",{},{},{},{}", b.label, opt(b.lower), opt(b.upper), b.count, opt(b.value))?;
        }
        Ok(())
    }
}

fn check(spec: &BucketSpec, want: BucketDimension) -> Result<()> {
    if spec.dimension != want {
        return Err(Error::Config(format!(
            "expected a {} bucket spec, got {}",
            want.name(),
            spec.dimension.name()
        )));
    }
    Ok(())
}

/// Word-level F1 per training-frequency bucket. Each bucket's count is the
/// number of reference tokens that fall in it.
pub fn word_f1_by_freq_bucket(
    pairs: &[EvalPair],
    train_freq: &HashMap<String, usize>,
    spec: &BucketSpec,
) -> Result<BucketReport> {
    check(spec, BucketDimension::WordFrequency)?;
    let k = spec.len();
    let (mut matched, mut hyp_total, mut ref_total) = (vec![0usize; k], vec![0usize; k], vec![0usize; k]);
    let bucket_of = |w: &String| spec.index(train_freq.get(w).copied().unwrap_or(0) as f64);
    for p in pairs {
        let h = ngram_counts(&p.hypothesis, 1);
        let r = ngram_counts(&p.reference, 1);
        for (g, &c) in &h {
            let b = bucket_of(&g[0]);
            hyp_total[b] += c;
            matched[b] += c.min(r.get(g).copied().unwrap_or(0));
        }
        for (g, &c) in &r {
            ref_total[bucket_of(&g[0])] += c;
        }
    }
    let values = (0..k)
        .map(|i| (hyp_total[i] + ref_total[i] > 0).then(|| Prf::from_counts(matched[i], hyp_total[i], ref_total[i]).f))
        .collect();
    Ok(spec.report(ref_total, values))
}

/// Mean smoothed sentence BLEU-4 per reference-length bucket.
pub fn sentence_bleu_by_length_bucket(pairs: &[EvalPair], spec: &BucketSpec) -> Result<BucketReport> {
    check(spec, BucketDimension::SentenceLength)?;
    let mut counts = vec![0usize; spec.len()];
    let mut sums = vec![0.0; spec.len()];
    for p in pairs {
        let i = spec.index(p.reference.len() as f64);
        counts[i] += 1;
        sums[i] += sentence_bleu(p, 4);
    }
    let values = counts.iter().zip(&sums).map(|(&c, &s)| (c > 0).then(|| s / c as f64)).collect();
    Ok(spec.report(counts, values))
}

/// Sentence counts keyed by `len(hyp) − len(ref)`.
pub fn count_by_length_diff_bucket(pairs: &[EvalPair], spec: &BucketSpec) -> Result<BucketReport> {
    check(spec, BucketDimension::LengthDifference)?;
    let mut counts = vec![0usize; spec.len()];
    for p in pairs {
        counts[spec.index(p.hypothesis.len() as f64 - p.reference.len() as f64)] += 1;
    }
    Ok(spec.report(counts, vec![None; spec.len()]))
}

/// Sentence counts keyed by smoothed sentence BLEU-4.
pub fn count_by_sentence_bleu_bucket(pairs: &[EvalPair], spec: &BucketSpec) -> Result<BucketReport> {
    check(spec, BucketDimension::SentenceBleu)?;
    let mut counts = vec![0usize; spec.len()];
    for p in pairs {
        counts[spec.index(sentence_bleu(p, 4))] += 1;
    }
    Ok(spec.report(counts, vec![None; spec.len()]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(r: &str, h: &str) -> EvalPair {
        EvalPair::from_text(r, h).unwrap()
    }

    #[test]
    fn boundaries_partition_the_line() {
        let s = BucketSpec::new(BucketDimension::SentenceLength, vec![1.0, 2.0]).unwrap();
        assert_eq!([0.5, 1.0, 1.5, 2.0, 9.0].map(|x| s.index(x)), [0, 1, 1, 2, 2]);
        assert_eq!(s.label(0), "<1");
        assert_eq!(s.label(1), "[1,2)");
        assert_eq!(s.label(2), ">=2");
        assert!(BucketSpec::new(BucketDimension::SentenceLength, vec![2.0, 2.0]).is_err());
    }

    #[test]
    fn identity_corpus_has_zero_length_difference() {
        let ps = [pair("a b c", "a b c"), pair("d", "d")];
        let r = count_by_length_diff_bucket(&ps, &BucketSpec::default_for(BucketDimension::LengthDifference)).unwrap();
        let zero = BucketSpec::default_for(BucketDimension::LengthDifference).index(0.0);
        assert_eq!(r.buckets[zero].count, 2);
        assert_eq!(r.buckets[zero].label, "[0,1)");
        assert_eq!(r.total(), 2);
    }

    #[test]
    fn perfect_corpus_lands_in_top_bleu_bucket() {
        let ps = [pair("a b c d", "a b c d"), pair("e f", "e f")];
        let spec = BucketSpec::default_for(BucketDimension::SentenceBleu);
        let r = count_by_sentence_bleu_bucket(&ps, &spec).unwrap();
        assert_eq!(r.buckets.last().unwrap().count, 2);
    }

    #[test]
    fn word_f1_perfect_and_missing() {
        let freq: HashMap<String, usize> = [("a".to_string(), 1), ("b".to_string(), 50)].into();
        let spec = BucketSpec::default_for(BucketDimension::WordFrequency);
        let perfect = word_f1_by_freq_bucket(&[pair("a b c", "a b c")], &freq, &spec).unwrap();
        for b in &perfect.buckets {
            assert_eq!(b.value, (b.count > 0).then_some(1.0));
        }
        let miss = word_f1_by_freq_bucket(&[pair("a b", "b")], &freq, &spec).unwrap();
        assert_eq!(miss.buckets[spec.index(1.0)].value, Some(0.0));
        assert_eq!(miss.total(), 2);
    }

    #[test]
    fn wrong_dimension_is_rejected() {
        let spec = BucketSpec::default_for(BucketDimension::SentenceBleu);
        assert!(count_by_length_diff_bucket(&[], &spec).is_err());
    }

    #[test]
    fn csv_shape() {
        let spec = BucketSpec::new(BucketDimension::SentenceLength, vec![2.0]).unwrap();
        let r = sentence_bleu_by_length_bucket(&[pair("a", "a")], &spec).unwrap();
        let mut out = Vec::new();
        r.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "bucket,lower,upper,count,value");
        assert_eq!(lines[1], "\"<2\",,2.0000000000000000e0,1,1.0000000000000000e0");
        assert_eq!(lines[2], "\">=2\",2.0000000000000000e0,,0,");
    }
}
