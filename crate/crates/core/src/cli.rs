//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::augment::InvalidSetting;
use crate::baselines::{
    feature_arithmetic_classify, kolmo_reference, solver_as_classifier, AleaSolver, AnalogySolver, ParallelogramSolver,
    SolverConfig, KOLMO_REFERENCE,
};
use crate::corpus::{
    cap_quadruples, extract_analogies, parse_inflection_file, parse_quadruples, quad_words, random_split,
    sniff_columns, write_quadruples, Quadruple, Vocabulary,
};
use crate::evaluator::{
    eval_classifier, eval_regressor, perturbation_study, read_report, ExperimentReport, Metric, PerturbationConfig,
};
use crate::numkit::Rng;
use crate::trainer::{
    load_checkpoint, train_classifier_with, train_regressor_with, EpochStats, ModelCheckpoint, Task, TrainConfig,
};

/// `println!` that ignores a closed stdout (e.g. when piped into `head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

#[derive(Debug, Parser)]
#[command(name = "morphan", version, about = "Morphological analogy detection and solving")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract base analogies from an inflection file.
    Extract(ExtractArgs),
    /// Train a classifier.
    TrainClf(TrainArgs),
    /// Train a regressor on top of a classifier's embedder.
    TrainReg(TrainArgs),
    /// Classification accuracy on a test set.
    EvalClf(EvalArgs),
    /// Retrieval accuracy on a test set.
    EvalReg(EvalArgs),
    /// Run a symbolic or embedding-arithmetic baseline.
    Baseline(BaselineArgs),
    /// Accuracy under dropout between embedder and head.
    Perturb(PerturbArgs),
    /// Summarise experiment CSVs and draw a bar chart.
    Report(ReportArgs),
}

#[derive(Debug, Args, Serialize)]
struct ExtractArgs {
    /// Inflection file (lemma, features, form per line).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 50_000)]
    cap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also split the extracted analogies, keeping this fraction for training.
    #[arg(long)]
    split_ratio: Option<f64>,
    /// Output TSV; with a split, the test part goes to `<stem>.test.tsv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    /// Training data: inflection file or quadruple TSV.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "")]
    language: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50_000)]
    cap: usize,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    /// Defaults to 1e-3 for classification and 1e-4 for regression.
    #[arg(long)]
    lr: Option<f64>,
    /// Defaults to 512 for Japanese and 64 otherwise.
    #[arg(long)]
    char_dim: Option<usize>,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    /// Invalid forms per base analogy: 3, 8 or 24.
    #[arg(long, default_value_t = 8, value_parser = parse_invalid)]
    invalid: u32,
    /// Classifier checkpoint whose embedder initialises the regressor.
    #[arg(long)]
    init_from: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    freeze_epochs: usize,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    /// Checkpoint(s); several regression checkpoints are averaged.
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
    ckpt: Vec<PathBuf>,
    #[arg(long)]
    data_test: PathBuf,
    /// Training data, used for the retrieval vocabulary.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "euclidean")]
    metric: Metric,
    /// Optional experiment CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum SolverKind {
    Alea,
    Feature,
    Parallelogram,
    /// Print the published minimal-complexity reference values.
    Kolmo,
}

#[derive(Debug, Args, Serialize)]
struct BaselineArgs {
    #[arg(long, value_enum)]
    solver: SolverKind,
    #[arg(long)]
    data_test: Option<PathBuf>,
    /// Training data, used for the parallelogram vocabulary.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Checkpoint providing the embedder for the parallelogram solver.
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long, default_value = "")]
    language: String,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    rho: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct PerturbArgs {
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
    ckpt: Vec<PathBuf>,
    #[arg(long)]
    data_test: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Defaults to 0,0.01,0.05,0.1,0.3 (classification) or
    /// 0,0.005,0.01,0.05,0.1,0.3,0.5 (regression).
    #[arg(long, value_delimiter = ',')]
    probs: Option<Vec<f64>>,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "euclidean")]
    metric: Metric,
    #[arg(long)]
    out: PathBuf,
    /// Also draw a bar chart.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct ReportArgs {
    /// Experiment CSV files to merge.
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
    data: Vec<PathBuf>,
    /// SVG chart output.
    #[arg(long)]
    out: PathBuf,
}

fn parse_invalid(s: &str) -> Result<u32, String> {
    let n: u32 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    InvalidSetting::from_count(n)
        .map(|_| n)
        .ok_or_else(|| format!("--invalid must be 3, 8 or 24, got {n}"))
}

#[derive(Debug, Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct RunManifest<'a, C: Serialize> {
    command: &'a str,
    config: &'a C,
    seeds: Vec<u64>,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
    tool_version: &'static str,
}

fn digest(path: &Path) -> Result<FileDigest> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn write_manifest<C: Serialize>(
    command: &str,
    config: &C,
    seeds: Vec<u64>,
    inputs: &[&Path],
    outputs: &[&Path],
) -> Result<()> {
    let manifest = RunManifest {
        command,
        config,
        seeds,
        inputs: inputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
        outputs: outputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
        tool_version: env!("CARGO_PKG_VERSION"),
    };
    let path = manifest_path(outputs[0]);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

/// Quadruples from an inflection file (extracted) or a quadruple TSV.
fn load_quads(path: &Path, cap: usize, seed: u64) -> Result<Vec<Quadruple>> {
    let bytes = read(path)?;
    let quads = match sniff_columns(&bytes)? {
        Some(3) => extract_analogies(&parse_inflection_file(&bytes)?, cap, seed),
        Some(4) => cap_quadruples(parse_quadruples(&bytes)?, cap, seed),
        Some(n) => bail!("{}: expected 3 or 4 tab-separated columns, found {n}", path.display()),
        None => Vec::new(),
    };
    Ok(quads)
}

/// Every word form of a data file.
fn load_words(path: &Path) -> Result<Vec<String>> {
    let bytes = read(path)?;
    Ok(match sniff_columns(&bytes)? {
        Some(3) => parse_inflection_file(&bytes)?
            .into_iter()
            .flat_map(|p| [p.source, p.target])
            .collect(),
        Some(4) => quad_words(&parse_quadruples(&bytes)?).map(str::to_string).collect(),
        Some(n) => bail!("{}: expected 3 or 4 tab-separated columns, found {n}", path.display()),
        None => Vec::new(),
    })
}

fn vocabulary(paths: &[&Path]) -> Result<Vocabulary> {
    let mut words = Vec::new();
    for p in paths {
        words.extend(load_words(p)?);
    }
    Ok(Vocabulary::from_words(words.iter().map(String::as_str)))
}

fn load_ckpt(path: &Path) -> Result<ModelCheckpoint> {
    load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn log_epoch(stats: &EpochStats) {
    match stats.accuracy {
        Some(acc) => eprintln!(
            "epoch {:>3}  loss {:.6}  train acc {:.2}%",
            stats.epoch,
            stats.mean_loss,
            100.0 * acc
        ),
        None => eprintln!(
            "epoch {:>3}  loss {:.6}{}",
            stats.epoch,
            stats.mean_loss,
            if stats.embedder_frozen {
                "  (embedder frozen)"
            } else {
                ""
            }
        ),
    }
}

fn cmd_extract(args: &ExtractArgs) -> Result<()> {
    let pairs = parse_inflection_file(&read(&args.data)?)?;
    let quads = extract_analogies(&pairs, args.cap, args.seed);
    let mut outputs = vec![args.out.clone()];
    match args.split_ratio {
        None => std::fs::write(&args.out, write_quadruples(&quads))?,
        Some(r) => {
            if !(0.0..=1.0).contains(&r) {
                bail!("--split-ratio must be in [0, 1], got {r}");
            }
            let (train, test) = random_split(&quads, r, args.seed);
            let stem = args.out.file_stem().unwrap_or_default().to_string_lossy();
            let test_path = args.out.with_file_name(format!("{stem}.test.tsv"));
            std::fs::write(&args.out, write_quadruples(&train))?;
            std::fs::write(&test_path, write_quadruples(&test))?;
            outputs.push(test_path);
        }
    }
    eprintln!("extracted {} analogies", quads.len());
    let outs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    write_manifest("extract", args, vec![args.seed], &[&args.data], &outs)
}

fn train_config(args: &TrainArgs, task: Task) -> TrainConfig {
    let mut c = match task {
        Task::Classification => TrainConfig::classification(&args.language, args.seed),
        Task::Regression => TrainConfig::regression(&args.language, args.seed),
    };
    c.epochs = args.epochs;
    c.cap = args.cap;
    c.batch_size = args.batch_size;
    if let Some(lr) = args.lr {
        c.lr = lr;
    }
    c.embedder.char_dim = args
        .char_dim
        .unwrap_or_else(|| TrainConfig::default_char_dim(&args.language));
    c.invalid_setting = InvalidSetting::from_count(args.invalid).expect("validated by parser");
    c.freeze_epochs = args.freeze_epochs;
    c
}

fn cmd_train(args: &TrainArgs, task: Task) -> Result<()> {
    let config = train_config(args, task);
    let mut inputs = vec![args.data.as_path()];
    let init = match (task, args.init_from.as_deref()) {
        (Task::Classification, Some(_)) => bail!("--init-from applies to train-reg only"),
        (Task::Classification, None) => None,
        (Task::Regression, None) => bail!("train-reg needs --init-from <classifier checkpoint>"),
        (Task::Regression, Some(path)) => {
            let init = load_ckpt(path)?;
            if init.task() != Task::Classification {
                bail!(
                    "--init-from {} is a {} checkpoint, expected classification",
                    path.display(),
                    init.task()
                );
            }
            inputs.push(path);
            Some(init)
        }
    };
    let quads = load_quads(&args.data, config.cap, config.seed)?;
    eprintln!("training {task} on {} base analogies", quads.len());
    let ckpt = match &init {
        None => train_classifier_with(&quads, &config, |s, _| log_epoch(s))?,
        Some(init) => train_regressor_with(&quads, &config, init, |s, _| log_epoch(s))?,
    };
    ckpt.save(&args.out)?;
    let name = match task {
        Task::Classification => "train-clf",
        Task::Regression => "train-reg",
    };
    write_manifest(name, &ckpt.meta.config, vec![args.seed], &inputs, &[&args.out])
}

fn cmd_eval(args: &EvalArgs, task: Task) -> Result<()> {
    let test = load_quads(&args.data_test, usize::MAX, 0)?;
    let ckpts = args.ckpt.iter().map(|p| load_ckpt(p)).collect::<Result<Vec<_>>>()?;
    let mut report = ExperimentReport::default();
    for (r, ckpt) in ckpts.iter().enumerate() {
        let lang = &ckpt.meta.language;
        match task {
            Task::Classification => {
                let rep = eval_classifier(ckpt, &test)?;
                say!(
                    "{lang}\tvalid {:.2}%\tinvalid {:.2}%\t({} valid, {} invalid forms)",
                    rep.valid_accuracy,
                    rep.invalid_accuracy,
                    rep.valid.total,
                    rep.invalid.total
                );
                report.push(lang, 0.0, r, "valid", rep.valid_accuracy);
                report.push(lang, 0.0, r, "invalid", rep.invalid_accuracy);
            }
            Task::Regression => {
                let train = args
                    .data
                    .as_deref()
                    .context("eval-reg needs --data for the vocabulary")?;
                let vocab = vocabulary(&[train, &args.data_test])?;
                let acc = eval_regressor(ckpt, &test, &vocab, args.metric)?;
                say!("{lang}\tretrieval {acc:.2}%\t(seed {})", ckpt.meta.seed);
                report.push(lang, 0.0, r, "retrieval", acc);
            }
        }
    }
    if task == Task::Regression && report.rows.len() > 1 {
        let s = &report.summaries()[0];
        say!("mean {:.2} ± {:.2} over {} models", s.mean, s.std, s.n);
    }
    if let Some(out) = &args.out {
        std::fs::write(out, report.to_csv()?)?;
        let mut inputs: Vec<&Path> = args.ckpt.iter().map(PathBuf::as_path).collect();
        inputs.push(&args.data_test);
        if let Some(d) = &args.data {
            inputs.push(d);
        }
        let name = if task == Task::Classification {
            "eval-clf"
        } else {
            "eval-reg"
        };
        write_manifest(name, args, Vec::new(), &inputs, &[out])?;
    }
    Ok(())
}

fn cmd_baseline(args: &BaselineArgs) -> Result<()> {
    if args.solver == SolverKind::Kolmo {
        let rows: Vec<_> = if args.language.is_empty() {
            KOLMO_REFERENCE.iter().collect()
        } else {
            vec![kolmo_reference(&args.language)
                .with_context(|| format!("no reference values for {:?}", args.language))?]
        };
        let fmt = |v: Option<f64>| v.map_or("--".to_string(), |v| format!("{v:.2}"));
        say!("language\t@1 valid\t@1 invalid\t@10 valid\t@10 invalid");
        for r in rows {
            say!(
                "{}\t{:.2}\t{:.2}\t{}\t{}",
                r.language,
                r.at1_valid,
                r.at1_invalid,
                fmt(r.at10_valid),
                fmt(r.at10_invalid)
            );
        }
        return Ok(());
    }
    let test_path = args.data_test.as_deref().context("--data-test is required")?;
    let test = load_quads(test_path, usize::MAX, 0)?;
    let k = args.k as usize;
    let ckpt;
    let solver: Option<Box<dyn AnalogySolver + '_>> = match args.solver {
        SolverKind::Alea => Some(Box::new(AleaSolver {
            config: SolverConfig {
                rho: args.rho as usize,
                k,
            },
            seed: args.seed,
        })),
        SolverKind::Parallelogram => {
            let path = args.ckpt.as_deref().context("parallelogram needs --ckpt")?;
            let train = args
                .data
                .as_deref()
                .context("parallelogram needs --data for the vocabulary")?;
            ckpt = load_ckpt(path)?;
            let vocab = vocabulary(&[train, test_path])?;
            Some(Box::new(ParallelogramSolver::new(
                &ckpt.embedder,
                ckpt.charset(),
                &vocab,
            )?))
        }
        SolverKind::Feature | SolverKind::Kolmo => None,
    };
    let (mut valid, mut invalid) = ((0usize, 0usize), (0usize, 0usize));
    for base in &test {
        for lq in crate::augment::augment_for_evaluation(base) {
            let said = match &solver {
                Some(s) => solver_as_classifier(s.as_ref(), &lq.quad, k),
                None => feature_arithmetic_classify(&lq.quad),
            };
            let is_valid = lq.label == crate::augment::Label::Valid;
            let slot = if is_valid { &mut valid } else { &mut invalid };
            slot.1 += 1;
            slot.0 += usize::from(said == is_valid);
        }
    }
    let pct = |(c, t): (usize, usize)| if t == 0 { 0.0 } else { 100.0 * c as f64 / t as f64 };
    say!("valid {:.2}%\tinvalid {:.2}%", pct(valid), pct(invalid));
    if let Some(out) = &args.out {
        let mut report = ExperimentReport::default();
        let metric = |m: &str| match args.solver {
            SolverKind::Feature => m.to_string(),
            _ => format!("{m}@{k}"),
        };
        report.push(&args.language, 0.0, 0, &metric("valid"), pct(valid));
        report.push(&args.language, 0.0, 0, &metric("invalid"), pct(invalid));
        std::fs::write(out, report.to_csv()?)?;
        let mut inputs = vec![test_path];
        inputs.extend(args.data.as_deref());
        inputs.extend(args.ckpt.as_deref());
        write_manifest("baseline", args, vec![args.seed], &inputs, &[out])?;
    }
    Ok(())
}

fn cmd_perturb(args: &PerturbArgs) -> Result<()> {
    let test = load_quads(&args.data_test, usize::MAX, 0)?;
    let ckpts = args.ckpt.iter().map(|p| load_ckpt(p)).collect::<Result<Vec<_>>>()?;
    let task = ckpts[0].task();
    let mut config = match task {
        Task::Classification => PerturbationConfig::classification(),
        Task::Regression => PerturbationConfig::regression(),
    };
    if let Some(p) = &args.probs {
        config.probs = p.clone();
    }
    config.repeats = args.repeats;
    config.metric = args.metric;
    let vocab = match (task, &args.data) {
        (Task::Regression, Some(train)) => Some(vocabulary(&[train, &args.data_test])?),
        (Task::Regression, None) => bail!("perturbing a regressor needs --data for the vocabulary"),
        _ => None,
    };
    let refs: Vec<&ModelCheckpoint> = ckpts.iter().collect();
    let report = perturbation_study(&refs, &test, vocab.as_ref(), &config, &Rng::new(args.seed, "perturb"))?;
    for p in &report.points {
        say!("p_d={}\t{}\t{:.2} ± {:.2}", p.p_d, p.metric, p.mean, p.std);
    }
    let exp = report.to_experiment();
    crate::evaluator::emit_report(&exp, &args.out, args.svg.as_deref())?;
    let mut inputs: Vec<&Path> = args.ckpt.iter().map(PathBuf::as_path).collect();
    inputs.push(&args.data_test);
    inputs.extend(args.data.as_deref());
    let mut outputs = vec![args.out.as_path()];
    outputs.extend(args.svg.as_deref());
    write_manifest("perturb", args, vec![args.seed], &inputs, &outputs)
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let mut merged = ExperimentReport::default();
    for p in &args.data {
        merged.extend(read_report(p)?);
    }
    say!("language\tp_d\tmetric\tmean\tstd\tn");
    for s in merged.summaries() {
        say!(
            "{}\t{}\t{}\t{:.2}\t{:.2}\t{}",
            s.language,
            s.p_d,
            s.metric,
            s.mean,
            s.std,
            s.n
        );
    }
    std::fs::write(&args.out, merged.to_svg()).with_context(|| format!("writing {}", args.out.display()))?;
    let inputs: Vec<&Path> = args.data.iter().map(PathBuf::as_path).collect();
    write_manifest("report", args, Vec::new(), &inputs, &[&args.out])
}

fn dispatch(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Extract(a) => cmd_extract(a),
        Command::TrainClf(a) => cmd_train(a, Task::Classification),
        Command::TrainReg(a) => cmd_train(a, Task::Regression),
        Command::EvalClf(a) => cmd_eval(a, Task::Classification),
        Command::EvalReg(a) => cmd_eval(a, Task::Regression),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Perturb(a) => cmd_perturb(a),
        Command::Report(a) => cmd_report(a),
    }
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
