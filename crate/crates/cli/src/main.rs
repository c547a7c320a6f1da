mod config;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use sdmeasure::calibration::{calibrate, CameraCalibration};
use sdmeasure::detections::{parse_stream, write_frame, StreamReader};
use sdmeasure::evaluator::{evaluate_against_labels, evaluate_against_truth, parse_edge_labels};
use sdmeasure::pipeline::{parse_reports, render_overlay, write_record, OverlayRecord, Pipeline};
use sdmeasure::simulator::{parse_truth, Scene};
use sdmeasure::sweep::{run_sweep, SweepConfig};

use config::{ConfigFile, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "sdmeasure", version, about = "Social-distancing measurement from person detections")]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Maximum worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive the focal length from a marker person at a known distance.
    Calibrate(CalibrateArgs),
    /// Track people and measure pairwise distances frame by frame.
    Run(RunArgs),
    /// Render a scene file into a detection stream and ground truth.
    Simulate(SimulateArgs),
    /// Score reports against ground truth or hand-labelled edges.
    Evaluate(EvaluateArgs),
    /// Percent error of pair distances against camera distance.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    frame: u64,
    #[arg(long)]
    det_index: usize,
    /// Marker distance from the camera, metres.
    #[arg(long)]
    marker_distance: f64,
    /// Assumed person width, metres.
    #[arg(long)]
    known_width: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Default)]
struct TuningArgs {
    #[arg(long)]
    person_class: Option<i64>,
    #[arg(long)]
    min_score: Option<f64>,
    #[arg(long)]
    max_disappeared: Option<u32>,
    /// Pixels; unlimited when omitted.
    #[arg(long)]
    max_match_distance: Option<f64>,
    /// Violation threshold, metres.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    min_bbox_width: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    calibration: PathBuf,
    #[command(flatten)]
    tuning: TuningArgs,
    /// Also write overlay drawing instructions here.
    #[arg(long)]
    overlay: Option<PathBuf>,
    /// Include intermediate pair quantities in the reports.
    #[arg(long)]
    verbose_pairs: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    truth: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Hand-labelled violation edges in track ids, used instead of truth.
    #[arg(long)]
    edges: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Track-to-person alignment gate, pixels.
    #[arg(long)]
    gate: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, default_value_t = 1000.0)]
    focal_length: f64,
    #[arg(long, default_value_t = 0.5)]
    width: f64,
    #[arg(long, value_delimiter = ',', default_values_t = vec![3.0, 5.0, 7.0, 9.0])]
    distances: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.6, 1.2, 1.8, 2.4])]
    separations: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

type CmdResult = Result<(), Failure>;

fn load_config(path: Option<&Path>) -> Result<ConfigFile, Failure> {
    match path {
        Some(p) => ConfigFile::load(p).map_err(|e| Failure::Usage(format!("{e:#}"))),
        None => Ok(ConfigFile::default()),
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn cmd_calibrate(args: CalibrateArgs, file: &ConfigFile) -> CmdResult {
    let flags = Overrides { known_width_m: args.known_width, ..Default::default() };
    let cfg = RunConfig::resolve(file, &flags).map_err(Failure::Usage)?;
    if !(args.marker_distance.is_finite() && args.marker_distance > 0.0) {
        return Err(Failure::Usage("marker distance must be positive".into()));
    }
    let parsed = parse_stream(open(&args.detections)?)
        .with_context(|| format!("parsing {}", args.detections.display()))?;
    let frame = parsed
        .frames
        .iter()
        .find(|f| f.frame_index == args.frame)
        .ok_or_else(|| anyhow!("frame {} not found in {}", args.frame, args.detections.display()))?;
    let det = frame.detections.get(args.det_index).ok_or_else(|| {
        anyhow!("frame {} has {} detections, no index {}", args.frame, frame.detections.len(), args.det_index)
    })?;
    let calib = calibrate(&det.bbox, args.marker_distance, cfg.known_width_m).context("calibrating")?;
    calib.save(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!(
        "calibrate: marker width {} px at {} m -> focal length {:.3} px",
        calib.marker_width_px, calib.marker_distance_m, calib.focal_length_px
    );
    Ok(())
}

fn cmd_run(args: RunArgs, file: &ConfigFile) -> CmdResult {
    let t = &args.tuning;
    let flags = Overrides {
        person_class: t.person_class,
        min_score: t.min_score,
        max_disappeared: t.max_disappeared,
        max_match_distance: t.max_match_distance,
        threshold_m: t.threshold,
        min_bbox_width_px: t.min_bbox_width,
        ..Default::default()
    };
    let cfg = RunConfig::resolve(file, &flags).map_err(Failure::Usage)?;
    let calib = CameraCalibration::load(&args.calibration)
        .map_err(|e| anyhow!("{}: {e}", args.calibration.display()))?;
    let mut pipeline = Pipeline::new(calib, cfg.pipeline).map_err(|e| Failure::Usage(e.to_string()))?;

    let mut reader = StreamReader::new(open(&args.detections)?);
    let mut out = create(&args.out)?;
    let mut overlay = args.overlay.as_deref().map(create).transpose()?;
    let (mut frames, mut violations, mut rejected) = (0usize, 0usize, 0usize);
    while let Some(frame) = reader.next() {
        for r in reader.take_rejections() {
            eprintln!("warning: {r}");
            rejected += 1;
        }
        let frame = frame.map_err(|e| anyhow!("{}: {e}", args.detections.display()))?;
        let report = pipeline.process_frame(&frame);
        write_record(&mut out, &report.to_record(args.verbose_pairs)).context("writing reports")?;
        if let Some(o) = overlay.as_mut() {
            let rec = OverlayRecord { frame: report.frame_index, overlay: render_overlay(&report) };
            write_record(o, &rec).context("writing overlay")?;
        }
        frames += 1;
        violations += report.violations.len();
    }
    out.flush().context("writing reports")?;
    if let Some(mut o) = overlay {
        o.flush().context("writing overlay")?;
    }
    eprintln!("run: {frames} frames, {violations} violation edges, {rejected} rejected detections");
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> CmdResult {
    if args.out == args.truth {
        return Err(Failure::Usage("--out and --truth must be different files".into()));
    }
    let scene = Scene::load(&args.scene).map_err(|e| anyhow!("{}: {e}", args.scene.display()))?;
    let generated: Vec<_> = (0..scene.frame_count)
        .into_par_iter()
        .map(|i| scene.generate_frame(args.seed, i))
        .collect::<Result<_, _>>()
        .map_err(|e| anyhow!("{}: {e}", args.scene.display()))?;
    let mut dets = create(&args.out)?;
    let mut truth = create(&args.truth)?;
    for (frame, record) in &generated {
        write_frame(&mut dets, frame).context("writing detections")?;
        write_record(&mut truth, record).context("writing truth")?;
    }
    dets.flush().context("writing detections")?;
    truth.flush().context("writing truth")?;
    eprintln!("simulate: {} frames, {} people, seed {}", scene.frame_count, scene.persons.len(), args.seed);
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs, file: &ConfigFile) -> CmdResult {
    let flags = Overrides { threshold_m: args.threshold, align_gate_px: args.gate, ..Default::default() };
    let cfg = RunConfig::resolve(file, &flags).map_err(Failure::Usage)?;
    let threshold = cfg.pipeline.geometry.threshold_m;
    let reports = parse_reports(&read(&args.pred)?).map_err(|e| anyhow!("{}: {e}", args.pred.display()))?;
    let evaluation = match (&args.edges, &args.truth) {
        (Some(edges), _) => {
            let labels = parse_edge_labels(&read(edges)?).map_err(|e| anyhow!("{}: {e}", edges.display()))?;
            evaluate_against_labels(&reports, &labels, threshold)
        }
        (None, Some(truth)) => {
            let records = parse_truth(&read(truth)?).map_err(|e| anyhow!("{}: {e}", truth.display()))?;
            evaluate_against_truth(&reports, &records, threshold, cfg.align_gate_px)
        }
        (None, None) => return Err(Failure::Usage("evaluate needs --truth or --edges".into())),
    }
    .map_err(|e| anyhow!("{e}"))?;

    let mut out = create(&args.out)?;
    serde_json::to_writer_pretty(&mut out, &evaluation).context("writing metrics")?;
    out.write_all(b"\n").context("writing metrics")?;
    out.flush().context("writing metrics")?;
    for row in evaluation.metrics.rows() {
        eprintln!("{row}");
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> CmdResult {
    let cfg = SweepConfig {
        focal_length_px: args.focal_length,
        width_m: args.width,
        camera_distances_m: args.distances,
        separations_m: args.separations,
        runs: args.runs,
        seed: args.seed,
        ..SweepConfig::default()
    };
    let result = run_sweep(&cfg).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut out = create(&args.out)?;
    serde_json::to_writer_pretty(&mut out, &result).context("writing sweep")?;
    out.write_all(b"\n").context("writing sweep")?;
    out.flush().context("writing sweep")?;
    for (d, e) in &result.by_distance {
        eprintln!("camera {d} m: mean error {e:.3}%");
    }
    Ok(())
}

fn run(cli: Cli) -> CmdResult {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Failure::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::Data(e.into()))?;
    }
    let file = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Calibrate(a) => cmd_calibrate(a, &file),
        Command::Run(a) => cmd_run(a, &file),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Evaluate(a) => cmd_evaluate(a, &file),
        Command::Sweep(a) => cmd_sweep(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
