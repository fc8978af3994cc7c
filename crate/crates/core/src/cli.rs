//! Command-line front end. Exit codes: 0 success, 2 usage or data errors,
//! 3 numerical abort.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::corpus::TaskKind;
use crate::decode::Strategy;
use crate::encoding::{
    build_mvpe_table, build_pe_table, search_optimal_step, write_curve_csv, write_table_csv, DistanceNorm,
    EncodingConfig, ObjectiveOptions, PairSet,
};
use crate::error::{Error, Result};
use crate::metrics::{Comparison, EvalReport};
use crate::model::ModelConfig;
use crate::pipeline::{
    evaluate_files, experiment_triple, last_eval_perplexity, read_run_config, run_training, write_lines,
    InputFormat, ModelBundle, RunConfig, TripleOptions, CONFIG_FILE,
};
use crate::training::TrainConfig;

#[derive(Debug, Parser)]
#[command(name = "augformer", version, about = "Positional-encoding analysis and a toy POS-augmented Transformer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Objective curve over steps 1..=k-max plus PE and mvPE table dumps.
    AnalyzePe(AnalyzeArgs),
    /// Prints the chosen mvPE step for a candidate grid.
    SearchStep(SearchArgs),
    /// Trains a model on a synthetic task or tagged corpus files.
    Train(TrainArgs),
    /// Translates a source file with a trained model.
    Translate(TranslateArgs),
    /// Scores hypotheses against references.
    Evaluate(EvaluateArgs),
    /// Side-by-side comparison of evaluation reports.
    Compare(CompareArgs),
    /// Trains and compares the vanilla, mvPE and augmented systems.
    ExperimentTriple(TripleArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum NormArg {
    L2,
    L1,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PairsArg {
    All,
    Consecutive,
}

#[derive(Debug, Args)]
pub struct AnalysisFlags {
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub base: Option<f64>,
    #[arg(long, value_enum)]
    pub norm: Option<NormArg>,
    #[arg(long, value_enum)]
    pub pairs: Option<PairsArg>,
    /// Relative distance from the maximum that still counts as the plateau.
    #[arg(long)]
    pub plateau: Option<f64>,
}

impl AnalysisFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        let a = &mut cfg.analysis;
        if let Some(v) = self.d_model {
            a.d_model = v;
        }
        if let Some(v) = self.max_len {
            a.max_len = v;
        }
        if let Some(v) = self.base {
            a.base = v;
        }
        if let Some(v) = self.norm {
            a.norm = match v {
                NormArg::L2 => DistanceNorm::L2,
                NormArg::L1 => DistanceNorm::L1,
            };
        }
        if let Some(v) = self.pairs {
            a.pairs = match v {
                PairsArg::All => PairSet::All,
                PairsArg::Consecutive => PairSet::Consecutive,
            };
        }
        if let Some(v) = self.plateau {
            a.plateau_fraction = v;
        }
    }
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub analysis: AnalysisFlags,
    #[arg(long)]
    pub k_max: Option<u64>,
    /// Receives curve.csv, pe_table.csv, mvpe_table.csv and run_config.toml.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub analysis: AnalysisFlags,
    #[arg(long)]
    pub k_max: Option<u64>,
    /// Explicit comma-separated candidate steps instead of 1..=k-max.
    #[arg(long, value_delimiter = ',')]
    pub candidates: Option<Vec<u64>>,
    /// Also write the `k,objective` curve here.
    #[arg(long)]
    pub curve: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PresetArg {
    Desk,
    Large,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Replaces the model and training sections of the config; flags still apply on top.
    #[arg(long, value_enum)]
    pub preset: Option<PresetArg>,
    #[arg(long, value_parser = parse_task)]
    pub task: Option<TaskKind>,
    #[arg(long)]
    pub n_samples: Option<usize>,
    /// Tagged training files; replace the synthetic task.
    #[arg(long, requires = "train_tgt")]
    pub train_src: Option<PathBuf>,
    #[arg(long, requires = "train_src")]
    pub train_tgt: Option<PathBuf>,
    #[arg(long, requires = "test_tgt")]
    pub test_src: Option<PathBuf>,
    #[arg(long, requires = "test_src")]
    pub test_tgt: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub d_post: Option<usize>,
    /// Use mvPE with this step on the word positions.
    #[arg(long)]
    pub step_k: Option<u64>,
    /// Continue from the checkpoint and state in the output directory.
    #[arg(long)]
    pub resume: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn parse_task(s: &str) -> std::result::Result<TaskKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FormatArg {
    Tagged,
    Plain,
}

#[derive(Debug, Args)]
pub struct TranslateArgs {
    /// Directory written by `train`.
    #[arg(long)]
    pub model_dir: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value = "plain")]
    pub format: FormatArg,
    /// Beam width; greedy decoding when absent.
    #[arg(long)]
    pub beam: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub max_out_len: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Hypotheses, one sentence per line.
    #[arg(long)]
    pub hyp: PathBuf,
    /// References, one sentence per line.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Plain training-side corpus for the word-frequency buckets.
    #[arg(long)]
    pub freq_corpus: Option<PathBuf>,
    /// Training directory whose last logged perplexity goes in the report.
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// `NAME=path/to/report.json`, first one is the baseline.
    #[arg(long = "report", required = true, value_parser = parse_named)]
    pub reports: Vec<(String, PathBuf)>,
    /// Writes comparison.txt and comparison.csv here as well.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn parse_named(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((n, p)) if !n.is_empty() && !p.is_empty() => Ok((n.to_string(), PathBuf::from(p))),
        _ => Err(format!("expected NAME=PATH, got {s:?}")),
    }
}

#[derive(Debug, Args)]
pub struct TripleArgs {
    #[arg(long, default_value_t = 10_000)]
    pub n_pairs: usize,
    #[arg(long, default_value_t = 500)]
    pub n_test: usize,
    #[arg(long, default_value_t = 1500)]
    pub steps: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 2000)]
    pub k_max: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite { .. } => 3,
            _ => 2,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::AnalyzePe(a) => analyze_pe(a),
        Command::SearchStep(a) => search_step(a),
        Command::Train(a) => train(a),
        Command::Translate(a) => translate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Compare(a) => compare(a),
        Command::ExperimentTriple(a) => triple(a),
    }
}

fn candidates_up_to(k_max: u64) -> Result<Vec<u64>> {
    if k_max == 0 {
        return Err(Error::Config("k-max must be at least 1".into()));
    }
    Ok((1..=k_max).collect())
}

fn analyze_pe(a: AnalyzeArgs) -> Result<()> {
    let mut cfg = a.config.load()?;
    a.analysis.apply(&mut cfg);
    if let Some(k) = a.k_max {
        cfg.analysis.k_max = k;
    }
    let cfg = cfg.resolve()?;
    let an = &cfg.analysis;
    let candidates = candidates_up_to(an.k_max)?;
    let opts = ObjectiveOptions { norm: an.norm, pairs: an.pairs };
    let search = search_optimal_step(an.d_model, an.base, an.max_len, &candidates, an.plateau_fraction, opts)?;
    std::fs::create_dir_all(&a.out_dir)?;
    write_curve_csv(BufWriter::new(File::create(a.out_dir.join("curve.csv"))?), &search.curve)?;
    let pe_cfg = EncodingConfig { d_model: an.d_model, base: an.base, max_len: an.max_len, step_k: 1 };
    write_table_csv(BufWriter::new(File::create(a.out_dir.join("pe_table.csv"))?), &build_pe_table(&pe_cfg)?)?;
    let mv = build_mvpe_table(&pe_cfg.with_step(search.best_k))?;
    write_table_csv(BufWriter::new(File::create(a.out_dir.join("mvpe_table.csv"))?), &mv)?;
    cfg.write(a.out_dir.join(CONFIG_FILE))?;
    println!("k*={}", search.best_k);
    Ok(())
}

fn search_step(a: SearchArgs) -> Result<()> {
    let mut cfg = a.config.load()?;
    a.analysis.apply(&mut cfg);
    if let Some(k) = a.k_max {
        cfg.analysis.k_max = k;
    }
    let cfg = cfg.resolve()?;
    let an = &cfg.analysis;
    let candidates = match a.candidates {
        Some(c) => c,
        None => candidates_up_to(an.k_max)?,
    };
    let opts = ObjectiveOptions { norm: an.norm, pairs: an.pairs };
    let search = search_optimal_step(an.d_model, an.base, an.max_len, &candidates, an.plateau_fraction, opts)?;
    if let Some(path) = &a.curve {
        write_curve_csv(BufWriter::new(File::create(path)?), &search.curve)?;
    }
    let value = search.curve.iter().find(|(k, _)| *k == search.best_k).map_or(f64::NAN, |c| c.1);
    println!("k*={}\tobjective={}", search.best_k, crate::encoding::fmt_f64(value));
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = a.config.load()?;
    match a.preset {
        Some(PresetArg::Large) => {
            cfg.model = ModelConfig::large();
            cfg.train = TrainConfig::large();
        }
        Some(PresetArg::Desk) => {
            cfg.model = ModelConfig::desk();
            cfg.train = TrainConfig::desk();
        }
        None => {}
    }
    let d = &mut cfg.data;
    if let Some(t) = a.task {
        d.task = t;
    }
    if let Some(n) = a.n_samples {
        d.n_samples = n;
    }
    if a.train_src.is_some() {
        d.train_source = a.train_src;
        d.train_target = a.train_tgt;
    }
    if a.test_src.is_some() {
        d.test_source = a.test_src;
        d.test_target = a.test_tgt;
    }
    if let Some(s) = a.steps {
        cfg.train.steps = s;
    }
    if let Some(b) = a.batch_size {
        cfg.train.batch_size = b;
    }
    if let Some(lr) = a.lr {
        cfg.train.peak_lr = lr;
    }
    if let Some(p) = a.d_post {
        cfg.model.d_post = p;
    }
    if let Some(k) = a.step_k {
        cfg.model.use_mvpe = true;
        cfg.model.step_k = k;
    }
    let out = run_training(&cfg, &a.out_dir, a.resume)?;
    match out.log.last() {
        Some(l) => println!("step {}\ttrain_loss={:.6}\teval_ppl={:.6}", l.step, l.train_loss, l.eval_ppl),
        None => println!("step {}\tno training steps run", out.config.train.steps),
    }
    Ok(())
}

fn translate(a: TranslateArgs) -> Result<()> {
    let bundle = ModelBundle::load(&a.model_dir)?;
    let mut cfg = read_run_config(&a.model_dir).unwrap_or_default();
    if let Some(w) = a.beam {
        cfg.decode.strategy = Strategy::Beam;
        cfg.decode.beam_width = w;
    }
    if let Some(al) = a.alpha {
        cfg.decode.length_penalty = al;
    }
    if let Some(m) = a.max_out_len {
        cfg.decode.max_out_len = m;
    }
    let cfg = cfg.resolve()?;
    let format = match a.format {
        FormatArg::Tagged => InputFormat::Tagged,
        FormatArg::Plain => InputFormat::Plain,
    };
    let inputs = bundle.read_source(&a.input, format)?;
    let outputs = bundle.translate(&inputs, &cfg.decode)?;
    write_lines(&a.output, outputs.into_iter().map(|t| t.join(" ")))?;
    cfg.write(sidecar(&a.output))?;
    Ok(())
}

/// `<file>.config.toml` next to a single-file output.
fn sidecar(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(OsString::from).unwrap_or_default();
    name.push(".config.toml");
    output.with_file_name(name)
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let ppl = match &a.model_dir {
        Some(dir) => last_eval_perplexity(&dir.join(crate::pipeline::LOG_FILE))?,
        None => None,
    };
    let report = evaluate_files(&a.hyp, &a.reference, a.freq_corpus.as_deref(), ppl)?;
    report.write_to_dir(&a.out_dir)?;
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    for (n, b) in report.bleu.iter().enumerate() {
        writeln!(w, "BLEU-{}\t{:.4}", n + 1, b)?;
    }
    writeln!(w, "ROUGE-L\t{:.4}", report.rouge.rouge_l.f)?;
    writeln!(w, "Length Ratio\t{}", report.length_ratio.display)?;
    Ok(())
}

fn compare(a: CompareArgs) -> Result<()> {
    let mut reports = Vec::with_capacity(a.reports.len());
    for (name, path) in &a.reports {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        reports.push((name.clone(), EvalReport::from_json(&text)?));
    }
    let cmp = Comparison::new(&reports)?;
    let table = cmp.render_table();
    print!("{table}");
    if let Some(dir) = &a.out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("comparison.txt"), &table)?;
        std::fs::write(dir.join("comparison.csv"), cmp.render_csv())?;
    }
    Ok(())
}

fn triple(a: TripleArgs) -> Result<()> {
    let opts = TripleOptions {
        n_pairs: a.n_pairs,
        n_test: a.n_test,
        steps: a.steps,
        seed: a.seed,
        k_max: a.k_max,
        ..TripleOptions::default()
    };
    let out = experiment_triple(&opts, &a.out_dir)?;
    print!("{}", std::fs::read_to_string(a.out_dir.join("comparison.txt"))?);
    let _ = out;
    Ok(())
}
