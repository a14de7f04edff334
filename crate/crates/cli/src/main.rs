use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use layerprobe::dsp::{log_mel_spectrogram, read_wav, FbankConfig};
use layerprobe::pipeline::{emit_report, load_config, read_report, run_experiment, LayerCorpus};
use layerprobe::segments::{build_pooled_set, write_pooled_set, PoolStrategy};
use layerprobe::selftest::run_selftest;
use layerprobe::tensor_io::{read_alignments, write_matrix, SegmentKind};

#[derive(Parser)]
#[command(
    name = "layerprobe",
    version,
    about = "Layer-wise probes for speech representation models"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute log-mel filter bank features for WAV files.
    Fbank(FbankArgs),
    /// Pool one layer's frames over aligned phone or word segments.
    Pool(PoolArgs),
    /// Run an experiment described by a JSON config.
    Run(RunArgs),
    /// Print the per-layer curve stored in a report.
    Report(ReportArgs),
    /// Recover planted structure from a synthetic model.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct FbankArgs {
    /// WAV files, or directories scanned for *.wav.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 80)]
    n_mels: usize,
    #[arg(long)]
    overwrite: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Phone,
    Word,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Mean,
    CentralThird,
}

#[derive(Args)]
struct PoolArgs {
    #[arg(long)]
    layer_dir: PathBuf,
    #[arg(long)]
    layer: usize,
    #[arg(long)]
    alignments: PathBuf,
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Defaults to central-third for phones and mean for words.
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// Output .npy; labels go to a sibling .labels.tsv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    overwrite: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    overwrite: bool,
    /// Overrides the sample-plan seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// A report.json file or the directory holding one.
    path: PathBuf,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Keep the generated corpus and outputs here instead of a temp dir.
    #[arg(long)]
    workdir: Option<PathBuf>,
}

/// An invocation mistake caught by the CLI itself.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<layerprobe::Error>() {
            return if e.is_usage() { 1 } else { 2 };
        }
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LAYERPROBE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<u8> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Usage("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot start the worker pool")?;
    }
    match cli.command {
        Command::Fbank(a) => fbank(a),
        Command::Pool(a) => pool(a),
        Command::Run(a) => run(a),
        Command::Report(a) => report(a),
        Command::Selftest(a) => selftest(a),
    }
}

fn wav_inputs(inputs: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("cannot list {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
                .collect();
            found.sort();
            files.extend(found);
        } else if p.exists() {
            files.push(p.clone());
        } else {
            return Err(Usage(format!("no such input: {}", p.display())).into());
        }
    }
    if files.is_empty() {
        return Err(Usage("no WAV files found in the given inputs".into()).into());
    }
    Ok(files)
}

fn refuse_existing(path: &Path, overwrite: bool) -> anyhow::Result<()> {
    if !overwrite && path.exists() {
        return Err(layerprobe::Error::Refusal(path.to_path_buf()).into());
    }
    Ok(())
}

fn fbank(a: FbankArgs) -> anyhow::Result<u8> {
    let files = wav_inputs(&a.inputs)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    for wav in &files {
        let stem = wav.file_stem().unwrap_or_default().to_string_lossy();
        let out = a.out.join(format!("{stem}.npy"));
        refuse_existing(&out, a.overwrite)?;
        let (samples, rate) = read_wav(wav)?;
        let cfg = FbankConfig {
            n_mels: a.n_mels,
            ..FbankConfig::new(rate)
        };
        let m = log_mel_spectrogram(&samples, &cfg).with_context(|| wav.display().to_string())?;
        write_matrix(&m, &out)?;
        info!("{} -> {} ({} frames)", wav.display(), out.display(), m.rows());
    }
    println!("wrote {} feature files to {}", files.len(), a.out.display());
    Ok(0)
}

fn pool(a: PoolArgs) -> anyhow::Result<u8> {
    refuse_existing(&a.out, a.overwrite)?;
    let corpus = LayerCorpus::discover(&a.layer_dir)?;
    if !corpus.layers.contains(&a.layer) {
        return Err(Usage(format!(
            "layer {} not in {} (layers {:?})",
            a.layer,
            a.layer_dir.display(),
            corpus.layers
        ))
        .into());
    }
    let kind = match a.kind {
        KindArg::Phone => SegmentKind::Phone,
        KindArg::Word => SegmentKind::Word,
    };
    let strategy = match a.strategy {
        Some(StrategyArg::Mean) => PoolStrategy::Mean,
        Some(StrategyArg::CentralThird) => PoolStrategy::CentralThirdMean,
        None => PoolStrategy::default_for(kind),
    };
    let mut records = read_alignments(&a.alignments)?;
    records.retain(|r| r.kind == kind);
    let before = records.len();
    records.retain(|r| corpus.has_utterance(&r.utterance_id));
    if records.len() < before {
        log::warn!(
            "skipped {} {kind} records whose utterance has no layer files",
            before - records.len()
        );
    }
    let mut utts: Vec<String> = records.iter().map(|r| r.utterance_id.clone()).collect();
    utts.sort();
    utts.dedup();
    let layers = corpus.load(a.layer, utts.iter().map(String::as_str))?;
    let pooled = build_pooled_set(&layers, &records, kind, strategy)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    write_pooled_set(&pooled, &a.out)?;
    println!("pooled {} {kind} segments into {}", pooled.len(), a.out.display());
    Ok(0)
}

fn run(a: RunArgs) -> anyhow::Result<u8> {
    let mut cfg = load_config(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.sample_plan.seed = seed;
    }
    if let Some(out) = a.out {
        cfg.output_dir = out;
    }
    for f in ["curve.csv", "report.json", "tasks.csv"] {
        refuse_existing(&cfg.output_dir.join(f), a.overwrite)?;
    }
    info!(
        "running {} ({} sample sets)",
        cfg.experiment, cfg.sample_plan.n_sets
    );
    let report = run_experiment(&cfg)?;
    let written = emit_report(&report, &cfg, &cfg.output_dir, a.overwrite)?;
    for p in written {
        println!("{}", p.display());
    }
    Ok(0)
}

fn report(a: ReportArgs) -> anyhow::Result<u8> {
    let path = if a.path.is_dir() {
        a.path.join("report.json")
    } else {
        a.path
    };
    if !path.exists() {
        bail!(Usage(format!("no report at {}", path.display())));
    }
    let doc = read_report(&path)?;
    let r = &doc.report;
    println!(
        "experiment {}  metric {}  model {:?}",
        r.experiment, r.metric, r.model_tag
    );
    println!("{:>5}  {:>10}  {:>8}  {:>6}", "layer", "mean", "spread", "sets");
    for l in &r.layers {
        println!(
            "{:>5}  {:>10.4}  {:>8.4}  {:>6}",
            l.layer, l.mean, l.spread, l.n_sets
        );
    }
    for (name, v) in &r.baselines {
        println!("baseline {name}: {v:.4}");
    }
    Ok(0)
}

fn selftest(a: SelftestArgs) -> anyhow::Result<u8> {
    let rep = run_selftest(a.workdir.as_deref(), a.seed)?;
    for c in &rep.checks {
        println!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    Ok(if rep.passed() { 0 } else { 2 })
}
