use std::fmt::Write as _;

use super::EvalReport;
use crate::encoding::fmt_f64;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub metric: String,
    /// One value per system, in input order.
    pub values: Vec<f64>,
}

impl ComparisonRow {
    /// Differences of every system against the first one.
    pub fn deltas(&self) -> Vec<f64> {
        self.values.iter().map(|v| v - self.values[0]).collect()
    }
}

/// Side-by-side scores of several systems on the same test set.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub systems: Vec<String>,
    pub rows: Vec<ComparisonRow>,
    /// `ratio (ref=R, out=O)` per system.
    pub length_ratios: Vec<String>,
    /// Bucket counts per system, keyed by dimension name.
    pub bucket_counts: Vec<(String, Vec<Vec<usize>>)>,
}

impl Comparison {
    pub fn new(systems: &[(String, EvalReport)]) -> Result<Self> {
        let Some((_, first)) = systems.first() else {
            return Err(Error::Config("compare needs at least one system".into()));
        };
        if systems.iter().any(|(_, r)| r.sentences != first.sentences) {
            return Err(Error::Config("systems were evaluated on different numbers of sentences".into()));
        }
        let mut rows = Vec::new();
        let mut push = |metric: String, get: &dyn Fn(&EvalReport) -> f64| {
            rows.push(ComparisonRow { metric, values: systems.iter().map(|(_, r)| get(r)).collect() });
        };
        for n in 0..4 {
            push(format!("BLEU-{}", n + 1), &|r| r.bleu[n]);
        }
        for (name, pick) in [
            ("ROUGE-1", (|r: &EvalReport| r.rouge.rouge_1) as fn(&EvalReport) -> super::Prf),
            ("ROUGE-2", |r| r.rouge.rouge_2),
            ("ROUGE-L", |r| r.rouge.rouge_l),
        ] {
            push(format!("{name}^F"), &|r| pick(r).f);
            push(format!("{name}^P"), &|r| pick(r).p);
            push(format!("{name}^R"), &|r| pick(r).r);
        }
        push("Length Ratio".into(), &|r| r.length_ratio.ratio);
        if systems.iter().all(|(_, r)| r.perplexity.is_some()) {
            push("Perplexity".into(), &|r| r.perplexity.unwrap_or(f64::NAN));
        }
        let mut bucket_counts = Vec::new();
        for b in &first.buckets {
            let per_system = systems
                .iter()
                .map(|(_, r)| r.bucket(b.dimension).map(|x| x.counts()).unwrap_or_default())
                .collect();
            bucket_counts.push((b.dimension.name().to_string(), per_system));
        }
        Ok(Comparison {
            systems: systems.iter().map(|(n, _)| n.clone()).collect(),
            rows,
            length_ratios: systems.iter().map(|(_, r)| r.length_ratio.display.clone()).collect(),
            bucket_counts,
        })
    }

    pub fn row(&self, metric: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    /// Tab-separated table with four decimals, metrics as rows and one
    /// value column per system followed by its delta against the first.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str("metric");
        for (i, s) in self.systems.iter().enumerate() {
            let _ = write!(out, "\t{s}");
            if i > 0 {
                let _ = write!(out, "\tΔ{s}");
            }
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.metric);
            for (i, (v, d)) in row.values.iter().zip(row.deltas()).enumerate() {
                let _ = write!(out, "\t{v:.4}");
                if i > 0 {
                    let _ = write!(out, "\t{d:+.4}");
                }
            }
            out.push('\n');
        }
        out.push_str("\nLength Ratio\n");
        out.push_str(&self.systems.join("\t"));
        out.push('\n');
        out.push_str(&self.length_ratios.join("\t"));
        out.push('\n');
        out
    }

    /// `metric,system,value,delta` with full precision.
    pub fn render_csv(&self) -> String {
        let mut out = String::from("metric,system,value,delta\n");
        for row in &self.rows {
            for (s, (v, d)) in self.systems.iter().zip(row.values.iter().zip(row.deltas())) {
                let _ = writeln!(out, "{},{},{},{}", row.metric, s, fmt_f64(*v), fmt_f64(d));
            }
        }
        out
    }
}
