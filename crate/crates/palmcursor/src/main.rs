use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use palmcursor::backend::{CursorBackend, OsBackend, SimulatedBackend};
use palmcursor::calibrate::calibrate;
use palmcursor::config::{RunOptions, SourceConfig};
use palmcursor::dataset::{load_dataset, Sample, Split};
use palmcursor::evaluate::{evaluate_recording, evaluate_samples, render_report, render_text};
use palmcursor::models::ModelSet;
use palmcursor::pipeline::{run_session, Pipeline, Settings, Sinks};
use palmcursor::recording::{record, Recording};
use palmcursor::references::{load_references, save_references};
use palmcursor::source::{open_camera, FrameSource, LatestFrameSource, PacedSource, ReplaySource};
use palmcursor::synth::write_demo;
use palmcursor::telemetry::{TelemetryHub, TelemetryServer};
use palmcursor_core::classifier::DecisionRule;
use palmcursor_core::cursor::ScreenGeometry;
use palmcursor_core::Gesture;

/// Hand-gesture cursor control.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the gesture pipeline on a camera or a recording.
    Run(RunArgs),
    /// Capture frames into a recording directory.
    Record(RecordArgs),
    /// Build references.json from a labeled dataset.
    Calibrate(CalibrateArgs),
    /// Score the models on a dataset split or an annotated recording.
    Eval(EvalArgs),
    /// Write a self-contained demo: stub models, references, a recording
    /// and a small dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML file with defaults for any of the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    models: Option<PathBuf>,
    #[arg(long)]
    references: Option<PathBuf>,
    #[arg(long, conflicts_with = "replay")]
    camera: Option<u32>,
    /// Recording directory to play back instead of a camera.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Log commands without moving the cursor.
    #[arg(long)]
    dry_run: bool,
    #[arg(long)]
    min_score: Option<f32>,
    #[arg(long, overrides_with = "no_mirror")]
    mirror: bool,
    #[arg(long)]
    no_mirror: bool,
    /// Cursor smoothing factor in (0, 1].
    #[arg(long)]
    alpha: Option<f64>,
    /// Identical accepted frames needed before a click.
    #[arg(long)]
    debounce: Option<u32>,
    /// Milliseconds between clicks of the same button.
    #[arg(long)]
    cooldown: Option<u64>,
    /// Serve telemetry on this loopback port.
    #[arg(long)]
    serve: Option<u16>,
    /// Reject frames where the nearest reference and the classifier disagree.
    #[arg(long)]
    strict_agreement: bool,
    #[arg(long)]
    fps_cap: Option<f64>,
    /// Write the command log here when the run ends.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Play a recording back at its recorded pace.
    #[arg(long, requires = "replay")]
    realtime: bool,
}

impl RunArgs {
    fn options(&self) -> RunOptions {
        RunOptions {
            models: self.models.clone(),
            references: self.references.clone(),
            camera: self.camera,
            replay: self.replay.clone(),
            dry_run: self.dry_run.then_some(true),
            min_score: self.min_score,
            mirror: if self.no_mirror { Some(false) } else { self.mirror.then_some(true) },
            alpha: self.alpha,
            debounce: self.debounce,
            cooldown: self.cooldown,
            serve: self.serve,
            strict_agreement: self.strict_agreement.then_some(true),
            fps_cap: self.fps_cap,
            log: self.log.clone(),
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct RecordArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    seconds: f64,
    #[arg(long, conflicts_with = "from")]
    camera: Option<u32>,
    /// Re-record an existing recording in real time.
    #[arg(long)]
    from: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    models: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, required_unless_present = "replay", conflicts_with = "replay")]
    dataset: Option<PathBuf>,
    /// Annotated recording to run through the full pipeline.
    #[arg(long)]
    replay: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    #[arg(long)]
    models: PathBuf,
    #[arg(long)]
    references: PathBuf,
    /// JSON report path; a `.txt` table is written next to it.
    #[arg(long)]
    report: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    min_score: f32,
    #[arg(long)]
    strict_agreement: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Record(args) => record_cmd(args),
        Command::Calibrate(args) => calibrate_cmd(args),
        Command::Eval(args) => eval(args),
        Command::Synth { out } => synth(&out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn synth(out: &Path) -> Result<()> {
    write_demo(out).with_context(|| format!("writing demo to {}", out.display()))?;
    println!("demo written to {}", out.display());
    Ok(())
}

fn load_models(dir: &Path) -> Result<ModelSet> {
    ModelSet::load(dir).with_context(|| format!("loading models from {}", dir.display()))
}

fn run(args: RunArgs) -> Result<()> {
    let mut options = args.options();
    if let Some(path) = &args.config {
        options = options.over(RunOptions::from_file(path)?);
    }
    let config = options.resolve()?;
    let mut settings = config.settings()?;
    let models = load_models(&config.models)?;
    let refs = load_references(&config.references)?;

    let mut source: Box<dyn FrameSource> = match &config.source {
        SourceConfig::Camera(index) => Box::new(LatestFrameSource::spawn(open_camera(*index)?)),
        SourceConfig::Replay(dir) if args.realtime => Box::new(PacedSource::new(ReplaySource::open(dir)?)),
        SourceConfig::Replay(dir) => Box::new(ReplaySource::open(dir)?),
    };

    let mut os_backend = None;
    if !config.dry_run {
        match OsBackend::connect() {
            Ok(b) => os_backend = Some(b),
            Err(e) => {
                log::warn!("{e}; running in dry-run mode");
                settings.dry_run = true;
            }
        }
    }
    let mut server = match config.serve {
        Some(port) => {
            let server = TelemetryServer::bind(port)?;
            log::info!("telemetry on ws://{}", server.local_addr());
            Some(server)
        }
        None => None,
    };

    let mut pipeline = Pipeline::new(models, refs, settings)?;
    let mut log = SimulatedBackend::new();
    let summary = run_session(
        &mut pipeline,
        source.as_mut(),
        Sinks {
            log: &mut log,
            cursor: os_backend.as_mut().map(|b| b as &mut dyn CursorBackend),
            telemetry: server.as_mut().map(|s| s as &mut dyn TelemetryHub),
        },
        config.fps_cap,
    )?;
    if let Some(path) = &config.log {
        std::fs::write(path, log.to_text()).with_context(|| format!("writing {}", path.display()))?;
    }
    println!(
        "{} frames, {} commands, {:.1} FPS, {} skipped frames",
        summary.frames, summary.commands, summary.mean_fps, summary.errors
    );
    Ok(())
}

fn record_cmd(args: RecordArgs) -> Result<()> {
    if !(args.seconds.is_finite() && args.seconds >= 0.0) {
        bail!("--seconds must be a non-negative number");
    }
    let mut source: Box<dyn FrameSource> = match &args.from {
        Some(dir) => Box::new(PacedSource::new(ReplaySource::open(dir)?)),
        None => open_camera(args.camera.unwrap_or(0))?,
    };
    let recording = record(source.as_mut(), &args.out, Duration::from_secs_f64(args.seconds))?;
    println!("{} frames written to {}", recording.len(), args.out.display());
    Ok(())
}

fn calibrate_cmd(args: CalibrateArgs) -> Result<()> {
    let dataset = load_dataset(&args.dataset)?;
    for path in &dataset.skipped {
        log::warn!("skipped unreadable image {}", path.display());
    }
    let models = load_models(&args.models)?;
    let c = calibrate(&dataset, &models.classifier)?;
    save_references(&c.references, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    for g in Gesture::ALL {
        println!(
            "{:<12} threshold {:.6}  ({} samples, {} held out)",
            g.name(),
            c.references.entry(g).threshold,
            c.mean_samples[g.index()],
            c.threshold_samples[g.index()]
        );
    }
    println!("references written to {}", args.out.display());
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let models = load_models(&args.models)?;
    let refs = load_references(&args.references)?;
    let rule = DecisionRule { strict_agreement: args.strict_agreement };
    let report = match (&args.dataset, &args.replay) {
        (Some(root), None) => {
            let dataset = load_dataset(root)?;
            let split = Split::from(args.split);
            let samples: Vec<&Sample> = dataset.split(split).collect();
            evaluate_samples(&samples, split.name(), &models.classifier, &refs, rule)?
        }
        (None, Some(dir)) => {
            let recording = Recording::open(dir)?;
            let mut settings = Settings::new(ScreenGeometry::new(1920, 1080, true, 0.6)?);
            settings.min_score = args.min_score;
            settings.rule = rule;
            let mut pipeline = Pipeline::new(models, refs, settings)?;
            evaluate_recording(&mut pipeline, &recording)?
        }
        _ => bail!("give exactly one of --dataset and --replay"),
    };
    let txt = render_report(&report, &args.report)?;
    print!("{}", render_text(&report));
    println!("report written to {} and {}", args.report.display(), txt.display());
    Ok(())
}
