//! Command-line driver for the stylebend toolkit.
//!
//! Subcommands: `synth-data` (generate the synthetic corpus), `train`,
//! `translate`, `evaluate`, `plot`, and `inspect-weights`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 I/O or data
//! error, 3 numerical failure.

mod plot;

use std::path::PathBuf;

use clap::{ArgAction, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stylebend::data::toy::{generate_toy_corpus, ToySpec, MANIFEST};
use stylebend::data::{load_domain, load_png, save_png, ImageBatch, Role};
use stylebend::evaluation::{anchor_based_translate, anchor_cycle_uncorrected, evaluate_run};
use stylebend::metrics::{read_metrics, series};
use stylebend::residual::ConditioningMode;
use stylebend::training::{fit, load_model, TrainConfig, TrainData, Trainer};
use stylebend::{DefaultScalar, Error, Result};

#[derive(Parser)]
#[command(
    name = "stylebend",
    version,
    about = "Few-shot image-to-image translation over a learned style manifold"
)]
struct Cli {
    /// Increase log detail (default info; -v debug, -vv trace).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic landscape corpus (source, anchor, few-shot).
    SynthData(SynthDataArgs),
    /// Train a model; every configuration key can come from a file or --set.
    Train(Box<TrainArgs>),
    /// Translate a directory of images with a trained checkpoint.
    Translate(TranslateArgs),
    /// Measure a checkpoint against a dataset and write a contact sheet.
    Evaluate(EvaluateArgs),
    /// Render metric curves from a training metrics log.
    Plot(PlotArgs),
    /// Print the learned anchor-blend weights of a checkpoint.
    InspectWeights(InspectWeightsArgs),
}

#[derive(clap::Args)]
struct SynthDataArgs {
    /// Corpus root to create.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 17)]
    seed: u64,
    /// Square image side in pixels.
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = 40)]
    n_source: usize,
    #[arg(long, default_value_t = 40)]
    n_anchor: usize,
    #[arg(long, default_value_t = 10)]
    n_fewshot: usize,
}

#[derive(clap::Args)]
struct TrainArgs {
    /// Configuration file with `key = value` lines; missing keys use
    /// built-in defaults. Command-line flags override the file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable), e.g. --set lr=2e-4.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Resume from a checkpoint; only iterations, log_every,
    /// checkpoint_every, data_root, and out_dir may be overridden.
    #[arg(long)]
    resume: Option<PathBuf>,

    // Dedicated flags mirroring common configuration keys; these take the
    // highest precedence (above --set, which is above --config).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    data_root: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Comma-separated ablation flags:
    /// no_style,no_patch,no_germ,no_wmi,lgfs_only.
    #[arg(long)]
    ablate: Option<String>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Mode {
    /// Blend anchor styles and condition the refinement on noise.
    General,
    /// Condition the refinement on a reference image (--exemplar).
    Exemplar,
}

#[derive(clap::Args)]
struct TranslateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Directory of input PNG images.
    #[arg(long)]
    input: PathBuf,
    /// Output directory; files keep their input names.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::General)]
    mode: Mode,
    /// Reference image for exemplar mode.
    #[arg(long)]
    exemplar: Option<PathBuf>,
    /// Treat inputs as images of the named anchor domain and route them
    /// through the source domain before translating.
    #[arg(long)]
    from_anchor: Option<String>,
    /// With --from-anchor: skip the learned refinement on the way back.
    #[arg(long, default_value_t = false)]
    uncorrected: bool,
    /// Seed for noise draws in general mode.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(clap::Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset root holding source/ and fewshot/ directories.
    #[arg(long)]
    data_root: PathBuf,
    /// Where the metrics file and contact sheet are written.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Number of source images to evaluate and show on the contact sheet.
    #[arg(long, default_value_t = 8)]
    count: usize,
}

#[derive(clap::Args)]
struct PlotArgs {
    /// metrics.tsv written during training.
    #[arg(long)]
    metrics: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Comma-separated metric names (default: every name in the log).
    #[arg(long)]
    names: Option<String>,
    #[arg(long, default_value_t = 640)]
    width: u32,
    #[arg(long, default_value_t = 360)]
    height: u32,
}

#[derive(clap::Args)]
struct InspectWeightsArgs {
    #[arg(long)]
    checkpoint: PathBuf,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Help and version requests print to stdout and succeed; real
            // usage errors print to stderr and exit 1.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::SynthData(a) => run_synth_data(a),
        Command::Train(a) => run_train(*a),
        Command::Translate(a) => run_translate(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Plot(a) => run_plot(a),
        Command::InspectWeights(a) => run_inspect_weights(a),
    }
}

fn run_synth_data(args: SynthDataArgs) -> Result<()> {
    let spec = ToySpec {
        seed: args.seed,
        size: args.size,
        n_source: args.n_source,
        n_anchor: args.n_anchor,
        n_fewshot: args.n_fewshot,
    };
    let manifest = generate_toy_corpus(&args.out, &spec)?;
    println!(
        "wrote {} images under {} (manifest: {})",
        manifest.len(),
        args.out.display(),
        args.out.join(MANIFEST).display()
    );
    Ok(())
}

/// Flag/`--set` overrides in ascending precedence order.
fn collect_overrides(args: &TrainArgs) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for pair in &args.set {
        let (k, v) = pair.split_once('=').ok_or_else(|| {
            Error::Config(format!("--set expects KEY=VALUE, got `{pair}`"))
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(v) = args.seed {
        out.push(("seed".into(), v.to_string()));
    }
    if let Some(v) = args.iterations {
        out.push(("iterations".into(), v.to_string()));
    }
    if let Some(v) = args.resolution {
        out.push(("resolution".into(), v.to_string()));
    }
    if let Some(v) = args.batch_size {
        out.push(("batch_size".into(), v.to_string()));
    }
    if let Some(v) = &args.data_root {
        out.push(("data_root".into(), v.display().to_string()));
    }
    if let Some(v) = &args.out_dir {
        out.push(("out_dir".into(), v.display().to_string()));
    }
    if let Some(v) = &args.ablate {
        out.push(("ablation".into(), v.clone()));
    }
    Ok(out)
}

/// Keys that may change when resuming; everything else is part of the run's
/// identity and must come from the checkpoint.
const RESUME_MUTABLE: [&str; 5] = [
    "iterations",
    "log_every",
    "checkpoint_every",
    "data_root",
    "out_dir",
];

fn run_train(args: TrainArgs) -> Result<()> {
    let overrides = collect_overrides(&args)?;
    let mut trainer = if let Some(resume) = &args.resume {
        if args.config.is_some() {
            return Err(Error::Config(
                "--config cannot be combined with --resume; the checkpoint carries its configuration"
                    .into(),
            ));
        }
        let mut t = Trainer::<DefaultScalar>::from_checkpoint(resume)?;
        for (k, v) in &overrides {
            if !RESUME_MUTABLE.contains(&k.as_str()) {
                return Err(Error::Config(format!(
                    "`{k}` cannot change when resuming; only {} may",
                    RESUME_MUTABLE.join(", ")
                )));
            }
            t.cfg.set(k, v)?;
        }
        t.cfg.validate()?;
        log::info!("resuming from step {}", t.step_count());
        t
    } else {
        let mut cfg = match &args.config {
            Some(p) => TrainConfig::from_file(p)?,
            None => TrainConfig::default(),
        };
        for (k, v) in &overrides {
            cfg.set(k, v)?;
        }
        Trainer::<DefaultScalar>::new(cfg)?
    };

    let data_root = PathBuf::from(&trainer.cfg.data_root);
    let out_dir = PathBuf::from(&trainer.cfg.out_dir);
    let mut data = TrainData::load(&trainer.cfg, &data_root)?;
    let outcome = fit(&mut trainer, &mut data, &out_dir)?;
    println!(
        "trained {} steps (now at {}); checkpoint: {}; metrics: {}; config: {}",
        outcome.steps_run,
        trainer.step_count(),
        outcome.final_checkpoint.display(),
        outcome.metrics_path.display(),
        out_dir.join("config.resolved.txt").display()
    );
    Ok(())
}

fn run_translate(args: TranslateArgs) -> Result<()> {
    let model = load_model::<DefaultScalar>(&args.checkpoint)?;
    let res = model.cfg.resolution;
    let inputs = load_domain::<DefaultScalar>(&args.input, Role::Source, res, None)?;

    let mode = match args.mode {
        Mode::General => ConditioningMode::General,
        Mode::Exemplar => ConditioningMode::Exemplar,
    };
    let exemplar: Option<ImageBatch<DefaultScalar>> = match (&args.exemplar, args.mode) {
        (Some(path), Mode::Exemplar) => Some(load_png(path, res)?),
        (None, Mode::Exemplar) => {
            return Err(Error::Config(
                "exemplar mode requires --exemplar <IMAGE>".into(),
            ))
        }
        (Some(_), Mode::General) => {
            return Err(Error::Config(
                "general mode takes no --exemplar; use --mode exemplar".into(),
            ))
        }
        (None, Mode::General) => None,
    };
    if args.uncorrected && args.from_anchor.is_none() {
        return Err(Error::Config(
            "--uncorrected applies only to --from-anchor translation".into(),
        ));
    }
    if args.uncorrected && exemplar.is_some() {
        return Err(Error::Config(
            "the uncorrected cycle takes no conditioning exemplar".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let batch = inputs.all()?;
    let translated = if let Some(anchor) = &args.from_anchor {
        let idx = model.manifold.anchor_index(anchor)?;
        if args.uncorrected {
            anchor_cycle_uncorrected(&model.nets, &model.bank, &batch, idx)?
        } else {
            anchor_based_translate(
                &model.nets,
                &model.bank,
                model.mask,
                &batch,
                idx,
                mode,
                exemplar.as_ref(),
                &mut rng,
            )?
        }
    } else {
        model.translate(&batch, mode, exemplar.as_ref(), &mut rng)?
    };

    std::fs::create_dir_all(&args.output).map_err(|e| Error::io(&args.output, e))?;
    for (i, file) in inputs.files.iter().enumerate() {
        let name = file
            .file_name()
            .ok_or_else(|| Error::Data(format!("input path `{}` has no file name", file.display())))?;
        save_png(&translated, i, &args.output.join(name))?;
    }
    println!(
        "translated {} images into {}",
        inputs.len(),
        args.output.display()
    );
    Ok(())
}

fn run_evaluate(args: EvaluateArgs) -> Result<()> {
    let outcome = evaluate_run::<DefaultScalar>(
        &args.checkpoint,
        &args.data_root,
        &args.out_dir,
        args.seed,
        args.count,
    )?;
    for (name, value) in &outcome.summary.entries {
        println!("{name}\t{value:.9e}");
    }
    println!("metrics: {}", outcome.metrics_path.display());
    println!("contact sheet: {}", outcome.sheet_path.display());
    Ok(())
}

fn run_plot(args: PlotArgs) -> Result<()> {
    let rows = read_metrics(&args.metrics)?;
    let names: Vec<String> = match &args.names {
        Some(list) => list
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect(),
        None => {
            let mut seen = Vec::new();
            for r in &rows {
                if !seen.contains(&r.name) {
                    seen.push(r.name.clone());
                }
            }
            seen
        }
    };
    if names.is_empty() {
        return Err(Error::Data("no metric names to plot".into()));
    }
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    for name in &names {
        let pts = series(&rows, name);
        if pts.is_empty() {
            return Err(Error::Data(format!(
                "metric `{name}` does not appear in {}",
                args.metrics.display()
            )));
        }
        let img = plot::render_series(&pts, args.width, args.height);
        let path = args.out_dir.join(format!("{name}.png"));
        img.save(&path).map_err(|e| Error::Image {
            path: path.clone(),
            detail: e.to_string(),
        })?;
        println!("wrote {} ({} points)", path.display(), pts.len());
    }
    Ok(())
}

fn run_inspect_weights(args: InspectWeightsArgs) -> Result<()> {
    let model = load_model::<DefaultScalar>(&args.checkpoint)?;
    let weights = model.manifold.weights(&model.nets.store);
    println!("anchor\tweight");
    for (name, w) in model.manifold.anchor_names().iter().zip(weights.iter()) {
        println!("{name}\t{w:.6}");
    }
    println!("# trained steps: {}", model.step);
    Ok(())
}
