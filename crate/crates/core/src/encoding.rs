//! Sinusoidal position encodings, the step-scaled variant, the summed
//! pairwise-distance objective used to pick its step, and POS-tag fusion.
//!
//! A step-scaled table stores at row `p` the vanilla encoding of position
//! `p·k`. With `k = 1` the two tables are identical bit for bit.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BASE: f64 = 10_000.0;

/// Default fraction of the curve maximum that counts as "on the plateau".
pub const DEFAULT_PLATEAU_FRACTION: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodingConfig {
    pub d_model: usize,
    pub base: f64,
    pub max_len: usize,
    pub step_k: u64,
}

impl EncodingConfig {
    pub fn new(d_model: usize, max_len: usize) -> Self {
        EncodingConfig {
            d_model,
            base: DEFAULT_BASE,
            max_len,
            step_k: 1,
        }
    }

    /// Uses the maximum encodable length as the frequency base.
    pub fn max_length_base(d_model: usize, max_len: usize) -> Self {
        EncodingConfig {
            base: max_len as f64,
            ..Self::new(d_model, max_len)
        }
    }

    pub fn with_step(mut self, step_k: u64) -> Self {
        self.step_k = step_k;
        self
    }

    pub fn with_base(mut self, base: f64) -> Self {
        self.base = base;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || !self.d_model.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "encoding dimension must be even and positive, got {}",
                self.d_model
            )));
        }
        if !(self.base > 1.0) || !self.base.is_finite() {
            return Err(Error::Config(format!("encoding base must exceed 1, got {}", self.base)));
        }
        if self.max_len == 0 {
            return Err(Error::Config("max_len must be positive".into()));
        }
        if self.step_k == 0 {
            return Err(Error::Config("step k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Angular frequency of each sin/cos pair: `base^(-2i/d_model)`.
pub fn angular_frequencies(d_model: usize, base: f64) -> Vec<f64> {
    (0..d_model / 2)
        .map(|i| 1.0 / base.powf((2 * i) as f64 / d_model as f64))
        .collect()
}

/// Precomputed `max_len × d_model` position table.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodingTable {
    config: EncodingConfig,
    rows: Vec<f64>,
}

impl EncodingTable {
    pub fn config(&self) -> &EncodingConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.config.max_len
    }

    pub fn is_empty(&self) -> bool {
        self.config.max_len == 0
    }

    pub fn dim(&self) -> usize {
        self.config.d_model
    }

    pub fn row(&self, pos: usize) -> Result<&[f64]> {
        if pos >= self.config.max_len {
            return Err(Error::Range {
                what: "position",
                index: pos,
                limit: self.config.max_len,
            });
        }
        let d = self.config.d_model;
        Ok(&self.rows[pos * d..(pos + 1) * d])
    }

    /// All rows, flattened row-major.
    pub fn as_slice(&self) -> &[f64] {
        &self.rows
    }
}

/// Vanilla sinusoidal table; `cfg.step_k` is ignored.
pub fn build_pe_table(cfg: &EncodingConfig) -> Result<EncodingTable> {
    let cfg = cfg.with_step(1);
    cfg.validate()?;
    let d = cfg.d_model;
    let mut rows = Vec::with_capacity(cfg.max_len * d);
    for pos in 0..cfg.max_len {
        for i in 0..d / 2 {
            let angle = pos as f64 / cfg.base.powf((2 * i) as f64 / d as f64);
            rows.push(angle.sin());
            rows.push(angle.cos());
        }
    }
    Ok(EncodingTable { config: cfg, rows })
}

/// Step-scaled table: row `p` holds the vanilla encoding at position `p·k`.
pub fn build_mvpe_table(cfg: &EncodingConfig) -> Result<EncodingTable> {
    cfg.validate()?;
    let d = cfg.d_model;
    let denominators: Vec<f64> = (0..d / 2)
        .map(|i| cfg.base.powf((2 * i) as f64 / d as f64))
        .collect();
    let mut rows = vec![0.0; cfg.max_len * d];
    for pos in 0..cfg.max_len {
        let phase_pos = (pos as u64 * cfg.step_k) as f64;
        let row = &mut rows[pos * d..(pos + 1) * d];
        for (i, denom) in denominators.iter().enumerate() {
            let angle = phase_pos / denom;
            row[2 * i] = angle.sin();
            row[2 * i + 1] = angle.cos();
        }
    }
    Ok(EncodingTable { config: *cfg, rows })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceNorm {
    #[default]
    L2,
    L1,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairSet {
    /// Every pair `1 ≤ i < j < L`.
    #[default]
    All,
    /// Only neighbours `j = i + 1`.
    Consecutive,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectiveOptions {
    pub norm: DistanceNorm,
    pub pairs: PairSet,
}

/// Result of [`variance_objective`]. `pairs == 0` marks a degenerate input
/// (`L < 2`) whose total is zero by definition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveValue {
    pub total: f64,
    pub pairs: usize,
}

impl ObjectiveValue {
    pub fn is_degenerate(&self) -> bool {
        self.pairs == 0
    }
}

fn distance(a: &[f64], b: &[f64], norm: DistanceNorm) -> f64 {
    match norm {
        DistanceNorm::L2 => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
        DistanceNorm::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
    }
}

/// Summed distance between encoded positions `1 ≤ i < j < len`.
pub fn variance_objective(
    table: &EncodingTable,
    len: usize,
    opts: ObjectiveOptions,
) -> Result<ObjectiveValue> {
    if len > table.len() {
        return Err(Error::Range {
            what: "objective length",
            index: len,
            limit: table.len(),
        });
    }
    let mut total = 0.0;
    let mut pairs = 0;
    for i in 1..len {
        let a = table.row(i)?;
        let upper = match opts.pairs {
            PairSet::All => len,
            PairSet::Consecutive => (i + 2).min(len),
        };
        for j in i + 1..upper {
            total += distance(a, table.row(j)?, opts.norm);
            pairs += 1;
        }
    }
    Ok(ObjectiveValue { total, pairs })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepSearch {
    pub best_k: u64,
    /// `(k, objective)` for every candidate, in candidate order.
    pub curve: Vec<(u64, f64)>,
}

/// Evaluates the objective for every candidate step and returns the smallest
/// step whose objective lies within `plateau_fraction` of the curve maximum.
pub fn search_optimal_step(
    d_model: usize,
    base: f64,
    len: usize,
    candidates: &[u64],
    plateau_fraction: f64,
    opts: ObjectiveOptions,
) -> Result<StepSearch> {
    if candidates.is_empty() {
        return Err(Error::Config("step candidate list is empty".into()));
    }
    if !(0.0..1.0).contains(&plateau_fraction) {
        return Err(Error::Config(format!(
            "plateau fraction must lie in [0, 1), got {plateau_fraction}"
        )));
    }
    let mut curve = Vec::with_capacity(candidates.len());
    for &k in candidates {
        if k == 0 {
            return Err(Error::Config("step candidates must be at least 1".into()));
        }
        let cfg = EncodingConfig { d_model, base, max_len: len.max(1), step_k: k };
        let table = build_mvpe_table(&cfg)?;
        curve.push((k, variance_objective(&table, len, opts)?.total));
    }
    let max = curve.iter().map(|&(_, v)| v).fold(f64::NEG_INFINITY, f64::max);
    let threshold = max * (1.0 - plateau_fraction);
    let best_k = curve
        .iter()
        .filter(|&&(_, v)| v >= threshold)
        .map(|&(k, _)| k)
        .min()
        .expect("the maximum itself clears the threshold");
    Ok(StepSearch { best_k, curve })
}

/// Sinusoidal code of a POS tag id, treating the id as a position.
pub fn encode_pos_tag(
    tag_id: usize,
    tagset_size: usize,
    d_post: usize,
    base: f64,
    tag_step_k: u64,
) -> Result<Vec<f64>> {
    if tag_id >= tagset_size {
        return Err(Error::Range {
            what: "tag id",
            index: tag_id,
            limit: tagset_size,
        });
    }
    let cfg = EncodingConfig { d_model: d_post, base, max_len: tag_id + 1, step_k: tag_step_k };
    Ok(build_mvpe_table(&cfg)?.row(tag_id)?.to_vec())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub d_emb: usize,
    /// Width of the POS channel; zero disables it.
    pub d_post: usize,
    pub use_mvpe: bool,
    pub tag_step_k: u64,
}

impl FusionConfig {
    pub fn fused_dim(&self) -> usize {
        self.d_emb + self.d_post
    }
}

/// Fixed tables needed to build fused input vectors.
#[derive(Clone, Debug)]
pub struct FusionTables {
    pub config: FusionConfig,
    pub positions: EncodingTable,
    /// One row per tag id; `None` when the POS channel is disabled.
    pub tags: Option<EncodingTable>,
}

impl FusionTables {
    /// `position` carries `d_emb`, `max_len`, `base` and the step; the step is
    /// forced to 1 unless `fusion.use_mvpe` is set.
    pub fn build(fusion: FusionConfig, position: EncodingConfig, tagset_size: usize) -> Result<Self> {
        if position.d_model != fusion.d_emb {
            return Err(Error::Config(format!(
                "position encoding width {} must equal embedding width {}",
                position.d_model, fusion.d_emb
            )));
        }
        let step = if fusion.use_mvpe { position.step_k } else { 1 };
        let positions = build_mvpe_table(&position.with_step(step))?;
        let tags = if fusion.d_post == 0 {
            None
        } else {
            if tagset_size == 0 {
                return Err(Error::Config("POS channel enabled with an empty tagset".into()));
            }
            let cfg = EncodingConfig {
                d_model: fusion.d_post,
                base: position.base,
                max_len: tagset_size,
                step_k: fusion.tag_step_k,
            };
            Some(build_mvpe_table(&cfg)?)
        };
        Ok(FusionTables { config: fusion, positions, tags })
    }

    /// Row of the tag table, or an empty slice when the channel is off.
    pub fn tag_row(&self, tag_id: usize) -> Result<&[f64]> {
        match &self.tags {
            Some(t) => t.row(tag_id).map_err(|_| Error::Range {
                what: "tag id",
                index: tag_id,
                limit: t.len(),
            }),
            None => Ok(&[]),
        }
    }
}

/// `concat(word_emb + position_row, tag_code)`.
pub fn fuse_inputs(
    word_emb: &[f64],
    position: usize,
    tag_id: usize,
    tables: &FusionTables,
) -> Result<Vec<f64>> {
    let d_emb = tables.config.d_emb;
    if word_emb.len() != d_emb {
        return Err(Error::shape("fuse_inputs", &[word_emb.len()], &[d_emb]));
    }
    let pos_row = tables.positions.row(position)?;
    let mut out = Vec::with_capacity(tables.config.fused_dim());
    out.extend(word_emb.iter().zip(pos_row).map(|(e, p)| e + p));
    out.extend_from_slice(tables.tag_row(tag_id)?);
    Ok(out)
}

/// Formats with 17 significant digits so that values round-trip exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// `k,objective` CSV.
pub fn write_curve_csv<W: Write>(mut w: W, curve: &[(u64, f64)]) -> io::Result<()> {
    writeln!(w, "k,objective")?;
    for &(k, v) in curve {
        writeln!(w, "{k},{}", fmt_f64(v))?;
    }
    Ok(())
}

/// `pos,dim0,...` CSV, one line per table row.
pub fn write_table_csv<W: Write>(mut w: W, table: &EncodingTable) -> io::Result<()> {
    let header: Vec<String> = (0..table.dim()).map(|d| format!("dim{d}")).collect();
    writeln!(w, "pos,{}", header.join(","))?;
    for pos in 0..table.len() {
        let row = &table.as_slice()[pos * table.dim()..(pos + 1) * table.dim()];
        let cells: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        writeln!(w, "{pos},{}", cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn position_zero_alternates_zero_one() {
        let t = build_pe_table(&EncodingConfig::new(8, 4)).unwrap();
        assert_eq!(t.row(0).unwrap(), &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn first_entry_of_position_one_is_sin_one() {
        for base in [10_000.0, 500.0, 2.0] {
            let t = build_pe_table(&EncodingConfig::new(6, 3).with_base(base)).unwrap();
            assert!((t.row(1).unwrap()[0] - 0.841_470_984_807_896_5).abs() < 1e-15);
        }
    }

    #[test]
    fn frequencies_form_geometric_progression() {
        let f = angular_frequencies(128, DEFAULT_BASE);
        assert_eq!(f[0], 1.0);
        let top = DEFAULT_BASE.powf(-(126.0) / 128.0);
        assert!((f[63] - top).abs() / top < 1e-12);
        let ratio = f[1] / f[0];
        for w in f.windows(2) {
            assert!((w[1] / w[0] - ratio).abs() < 1e-12);
        }
    }

    #[test]
    fn odd_dimension_rejected() {
        assert!(matches!(
            build_pe_table(&EncodingConfig::new(7, 4)),
            Err(Error::Config(_))
        ));
        assert!(build_mvpe_table(&EncodingConfig::new(8, 4).with_step(0)).is_err());
        assert!(build_pe_table(&EncodingConfig::new(8, 4).with_base(1.0)).is_err());
    }

    #[test]
    fn step_two_row_three_is_vanilla_row_six() {
        let cfg = EncodingConfig::new(16, 10);
        let vanilla = build_pe_table(&cfg).unwrap();
        let stepped = build_mvpe_table(&cfg.with_step(2)).unwrap();
        assert_eq!(stepped.row(3).unwrap(), vanilla.row(6).unwrap());
    }

    #[test]
    fn large_step_spreads_late_positions() {
        let dist = |k| {
            let t = build_mvpe_table(&EncodingConfig::new(128, 101).with_step(k)).unwrap();
            distance(t.row(99).unwrap(), t.row(100).unwrap(), DistanceNorm::L2)
        };
        assert!(dist(1000) > dist(1));
    }

    #[test]
    fn objective_degenerate_and_range() {
        let t = build_pe_table(&EncodingConfig::new(4, 8)).unwrap();
        let v = variance_objective(&t, 1, ObjectiveOptions::default()).unwrap();
        assert_eq!(v.total, 0.0);
        assert!(v.is_degenerate());
        assert!(variance_objective(&t, 9, ObjectiveOptions::default()).is_err());
    }

    #[test]
    fn consecutive_variant_counts_neighbours_only() {
        let t = build_pe_table(&EncodingConfig::new(4, 6)).unwrap();
        let opts = ObjectiveOptions { pairs: PairSet::Consecutive, ..Default::default() };
        let v = variance_objective(&t, 6, opts).unwrap();
        assert_eq!(v.pairs, 4);
        let all = variance_objective(&t, 6, ObjectiveOptions::default()).unwrap();
        assert_eq!(all.pairs, 10);
        assert!(all.total > v.total);
    }

    #[test]
    fn single_candidate_search() {
        let s = search_optimal_step(8, DEFAULT_BASE, 10, &[1], 0.01, Default::default()).unwrap();
        assert_eq!(s.best_k, 1);
        assert_eq!(s.curve.len(), 1);
        assert!(search_optimal_step(8, DEFAULT_BASE, 10, &[], 0.01, Default::default()).is_err());
    }

    #[test]
    fn tag_zero_encodes_as_alternating() {
        let v = encode_pos_tag(0, 36, 6, DEFAULT_BASE, 1).unwrap();
        assert_eq!(v, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert!(encode_pos_tag(36, 36, 6, DEFAULT_BASE, 1).is_err());
        assert_eq!(
            encode_pos_tag(17, 36, 64, DEFAULT_BASE, 3).unwrap(),
            encode_pos_tag(17, 36, 64, DEFAULT_BASE, 3).unwrap()
        );
    }

    fn tables(d_emb: usize, d_post: usize, step: u64, use_mvpe: bool) -> FusionTables {
        let fusion = FusionConfig { d_emb, d_post, use_mvpe, tag_step_k: 1 };
        FusionTables::build(fusion, EncodingConfig::new(d_emb, 20).with_step(step), 36).unwrap()
    }

    #[test]
    fn fusion_without_tag_channel_is_elementwise_add() {
        let t = tables(8, 0, 1, true);
        let emb: Vec<f64> = (0..8).map(|i| i as f64 * 0.1).collect();
        let fused = fuse_inputs(&emb, 5, 3, &t).unwrap();
        let pe = build_pe_table(&EncodingConfig::new(8, 20)).unwrap();
        let want: Vec<f64> = emb.iter().zip(pe.row(5).unwrap()).map(|(a, b)| a + b).collect();
        assert_eq!(fused, want);
    }

    #[test]
    fn fusion_zero_embedding_and_width() {
        let t = tables(300, 64, 7, true);
        let fused = fuse_inputs(&vec![0.0; 300], 4, 11, &t).unwrap();
        assert_eq!(fused.len(), 364);
        assert_eq!(&fused[..300], t.positions.row(4).unwrap());
        assert_eq!(&fused[300..], encode_pos_tag(11, 36, 64, DEFAULT_BASE, 1).unwrap().as_slice());
        assert!(matches!(
            fuse_inputs(&vec![0.0; 300], 20, 0, &t),
            Err(Error::Range { .. })
        ));
    }

    #[test]
    fn fusion_ignores_step_without_mvpe() {
        let off = tables(8, 0, 9, false);
        let on = tables(8, 0, 1, true);
        assert_eq!(off.positions, on.positions);
    }

    #[test]
    fn csv_shapes() {
        let mut buf = Vec::new();
        write_curve_csv(&mut buf, &[(1, 0.5), (2, 1.0)]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().next(), Some("k,objective"));
        assert_eq!(s.lines().count(), 3);

        let t = build_pe_table(&EncodingConfig::new(4, 2)).unwrap();
        let mut buf = Vec::new();
        write_table_csv(&mut buf, &t).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("pos,dim0,dim1,dim2,dim3\n0,"));
        assert!(!s.contains('\r'));
    }
}
