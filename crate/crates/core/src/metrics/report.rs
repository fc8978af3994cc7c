use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    bleu, count_by_length_diff_bucket, count_by_sentence_bleu_bucket, length_ratio, rouge,
    sentence_bleu_by_length_bucket, word_f1_by_freq_bucket, BucketDimension, BucketReport, BucketSpec, EvalPair, Prf,
    RougeVariant,
};
use crate::error::{Error, Result};

/// JSON schema every serialized [`EvalReport`] satisfies.
pub const REPORT_SCHEMA: &str = include_str!("../../schemas/eval_report.schema.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RougeReport {
    pub rouge_1: Prf,
    pub rouge_2: Prf,
    pub rouge_l: Prf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthRatioReport {
    pub ratio: f64,
    pub reference_length: usize,
    pub output_length: usize,
    pub display: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub sentences: usize,
    /// BLEU-1 … BLEU-4.
    pub bleu: Vec<f64>,
    pub rouge: RougeReport,
    pub length_ratio: LengthRatioReport,
    pub perplexity: Option<f64>,
    pub buckets: Vec<BucketReport>,
}

/// Scores a corpus and runs one bucket report per spec. Word-frequency
/// buckets look words up in `train_freq`; without it every word is unseen.
pub fn evaluate(
    pairs: &[EvalPair],
    specs: &[BucketSpec],
    train_freq: Option<&HashMap<String, usize>>,
    perplexity: Option<f64>,
) -> Result<EvalReport> {
    let bleu = bleu(pairs, 4)?;
    let lr = length_ratio(pairs);
    let empty = HashMap::new();
    let mut buckets = Vec::with_capacity(specs.len());
    for spec in specs {
        buckets.push(match spec.dimension {
            BucketDimension::WordFrequency => word_f1_by_freq_bucket(pairs, train_freq.unwrap_or(&empty), spec)?,
            BucketDimension::SentenceLength => sentence_bleu_by_length_bucket(pairs, spec)?,
            BucketDimension::LengthDifference => count_by_length_diff_bucket(pairs, spec)?,
            BucketDimension::SentenceBleu => count_by_sentence_bleu_bucket(pairs, spec)?,
        });
    }
    Ok(EvalReport {
        sentences: pairs.len(),
        bleu,
        rouge: RougeReport {
            rouge_1: rouge(pairs, RougeVariant::One),
            rouge_2: rouge(pairs, RougeVariant::Two),
            rouge_l: rouge(pairs, RougeVariant::L),
        },
        length_ratio: LengthRatioReport {
            ratio: lr.ratio,
            reference_length: lr.ref_total,
            output_length: lr.out_total,
            display: lr.to_string(),
        },
        perplexity,
        buckets,
    })
}

impl EvalReport {
    pub fn default_specs() -> Vec<BucketSpec> {
        [
            BucketDimension::WordFrequency,
            BucketDimension::SentenceLength,
            BucketDimension::LengthDifference,
            BucketDimension::SentenceBleu,
        ]
        .into_iter()
        .map(BucketSpec::default_for)
        .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Contract(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse { line: e.line(), msg: e.to_string() })
    }

    /// Writes `report.json` and one `buckets_<dimension>.csv` per bucket report.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json()?)?;
        for b in &self.buckets {
            let mut w = BufWriter::new(File::create(dir.join(format!("buckets_{}.csv", b.dimension.name())))?);
            b.write_csv(&mut w)?;
            w.flush()?;
        }
        Ok(())
    }

    pub fn bucket(&self, dimension: BucketDimension) -> Option<&BucketReport> {
        self.buckets.iter().find(|b| b.dimension == dimension)
    }
}
