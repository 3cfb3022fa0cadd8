//! `fldcrf` command-line tool.
//!
//! Every subcommand reads its inputs fully, validates them, and only then
//! writes its output file in one step, so a failed run leaves nothing
//! behind. Failures print one line, `fldcrf: error[<kind>]: <message>`, to
//! standard error and exit with status 1 (2 for usage errors).

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fldcrf::evaluation::{
    build_curves, curves_to_csv, default_grid, metric_mt, nested_cv, predict_dataset, predictions_to_csv,
    read_predictions_csv, GridSetting, NestedCvConfig, Window,
};
use fldcrf::features::{
    extract, mask_path, read_detections, CalibrationFile, ExtractConfig, RoadMask, SequenceAnnotation,
    VehicleContext,
};
use fldcrf::seqmodel::{dataset_to_jsonl_string, read_csv_dataset, read_jsonl_dataset};
use fldcrf::synthgen::{generate, ScenarioConfig, TypeCounts};
use fldcrf::training::{load_model, train, TrainConfig, TrainedModel};
use fldcrf::{Dataset, Error};

#[derive(Debug)]
struct CliError {
    kind: &'static str,
    message: String,
}

impl CliError {
    fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Self { kind, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self::new(e.kind(), e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flat = self.message.split_whitespace().collect::<Vec<_>>().join(" ");
        write!(f, "fldcrf: error[{}]: {}", self.kind, flat)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "fldcrf", version, about = "Factored latent-dynamic CRFs for pedestrian intention prediction")]
struct Cli {
    /// Worker threads for training, prediction and cross-validation.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: u16,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic gap-acceptance dataset as JSON lines.
    Generate(GenerateArgs),
    /// Build a labeled dataset from detections, calibration and annotations.
    Extract(ExtractArgs),
    /// Train an FLDCRF on a labeled dataset.
    Train(TrainArgs),
    /// Write per-frame filtered label probabilities as CSV.
    Predict(PredictArgs),
    /// Event-aligned curves and the mt metric of a prediction file.
    Evaluate(EvaluateArgs),
    /// Nested cross-validation over a grid of layer/state settings.
    Nestedcv(NestedCvArgs),
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Dataset file: JSON lines, or CSV when the name ends in `.csv`.
    #[arg(long)]
    data: PathBuf,

    /// Frame rate of the dataset in frames per second.
    #[arg(long, default_value_t = 15.0)]
    framerate: f64,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Output dataset (JSON lines).
    #[arg(long)]
    out: PathBuf,

    /// Episodes of each sequence type.
    #[arg(long, default_value_t = 10)]
    episodes: usize,

    /// Std of the motion noise in pixels.
    #[arg(long, default_value_t = 0.3)]
    noise: f64,

    /// Labels switch this many frames before the event.
    #[arg(long, default_value_t = 20)]
    pred_ahead: usize,

    #[arg(long, default_value_t = 15.0)]
    framerate: f64,

    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ContextArg {
    None,
    Ntu,
    Jaad,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    /// Detections file, one JSON frame record per line.
    #[arg(long)]
    data: PathBuf,

    /// JSON array of sequence annotations.
    #[arg(long)]
    annotations: PathBuf,

    /// JSON calibration file with three depth lines and intrinsics.
    #[arg(long)]
    calibration: PathBuf,

    /// Road mask path template; `{frame}` or `{frame:0N}` expands to the frame number.
    #[arg(long)]
    masks: Option<String>,

    /// Vehicle interaction features to append.
    #[arg(long, value_enum, default_value_t = ContextArg::None)]
    context: ContextArg,

    #[arg(long, default_value_t = 20)]
    pred_ahead: usize,

    #[arg(long, default_value_t = 15.0)]
    framerate: f64,

    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainOptions {
    /// Variance of the Gaussian prior on the weights.
    #[arg(long, default_value_t = 10.0)]
    sigma2: f64,

    #[arg(long, default_value_t = 500)]
    max_iterations: usize,

    /// Seed of the weight initialization and fold assignment.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Do not append a constant-1 feature to the observations.
    #[arg(long)]
    no_bias: bool,
}

impl TrainOptions {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            sigma2: self.sigma2,
            max_iterations: self.max_iterations,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Model shape as `<layers>/<states per label>`.
    #[arg(long, visible_alias = "model", value_parser = parse_setting, default_value = "1/2")]
    spec: GridSetting,

    #[command(flatten)]
    options: TrainOptions,

    /// Output model file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Trained model file.
    #[arg(long)]
    model: PathBuf,

    /// Output prediction CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Prediction CSV written by `predict`.
    #[arg(long)]
    predictions: PathBuf,

    /// Seconds before and after the event as `TL:TU`, e.g. `2:-0.5`.
    #[arg(long, value_parser = parse_window, allow_hyphen_values = true, default_value = "2:-0.5")]
    window: Window,

    /// Output curve CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct NestedCvArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Comma-separated `<layers>/<states>` settings; the default grid when omitted.
    #[arg(long, value_delimiter = ',', value_parser = parse_setting)]
    grid: Vec<GridSetting>,

    #[command(flatten)]
    options: TrainOptions,

    #[arg(long, value_parser = parse_window, allow_hyphen_values = true, default_value = "2:-0.5")]
    window: Window,

    #[arg(long, default_value_t = 5)]
    outer_folds: usize,

    #[arg(long, default_value_t = 4)]
    inner_folds: usize,

    /// Output report (JSON).
    #[arg(long)]
    out: PathBuf,
}

fn parse_setting(s: &str) -> Result<GridSetting, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_window(s: &str) -> Result<Window, String> {
    let bad = || format!("expected TL:TU in seconds, got {s:?}");
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let before: f64 = a.trim().parse().map_err(|_| bad())?;
    let after: f64 = b.trim().parse().map_err(|_| bad())?;
    if !(before.is_finite() && after.is_finite()) || before <= after {
        return Err(format!("window {s:?} must have TL > TU"));
    }
    Ok(Window::new(before, after))
}

fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::new("io", format!("input file {} does not exist", path.display())))
    }
}

fn require_out_dir(path: &Path) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if dir.is_dir() {
        Ok(())
    } else {
        Err(CliError::new("io", format!("output directory {} does not exist", dir.display())))
    }
}

/// Writes through a sibling temporary file so `path` appears only complete.
fn write_output(path: &Path, contents: &str) -> CliResult<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    let io = |e: std::io::Error| CliError::from(Error::io(path, e));
    fs::write(&tmp, contents).map_err(io)?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io(e)
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()).into())
}

fn load_dataset(args: &DataArgs) -> CliResult<Dataset> {
    let is_csv = args.data.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let data = if is_csv {
        read_csv_dataset(&args.data, args.framerate)?
    } else {
        read_jsonl_dataset(&args.data, args.framerate)?
    };
    if data.is_empty() {
        return Err(CliError::new("invalid_dataset", format!("{} holds no sequences", args.data.display())));
    }
    Ok(data)
}

fn cmd_generate(args: &GenerateArgs) -> CliResult<()> {
    require_out_dir(&args.out)?;
    let config = ScenarioConfig {
        counts: TypeCounts::uniform(args.episodes),
        framerate_fps: args.framerate,
        motion_noise_px: args.noise,
        pred_ahead: args.pred_ahead,
        seed: args.seed,
        ..ScenarioConfig::default()
    };
    let data = generate(&config)?;
    write_output(&args.out, &dataset_to_jsonl_string(&data))?;
    println!("sequences={} frames={}", data.len(), data.num_frames());
    Ok(())
}

fn cmd_extract(args: &ExtractArgs) -> CliResult<()> {
    for p in [&args.data, &args.annotations, &args.calibration] {
        require_file(p)?;
    }
    require_out_dir(&args.out)?;
    let detections = read_detections(&args.data)?;
    let annotations: Vec<SequenceAnnotation> = read_json(&args.annotations)?;
    let calibration: CalibrationFile = read_json(&args.calibration)?;
    let cal = calibration.calibrate()?;
    let config = ExtractConfig {
        pred_ahead: args.pred_ahead,
        vehicle_context: match args.context {
            ContextArg::None => VehicleContext::None,
            ContextArg::Ntu => VehicleContext::Ntu,
            ContextArg::Jaad => VehicleContext::Jaad,
        },
        ..ExtractConfig::default()
    };
    let mut load = |frame: i64| RoadMask::read_pgm(mask_path(args.masks.as_deref().unwrap_or_default(), frame));
    let masks: Option<&mut dyn FnMut(i64) -> fldcrf::Result<RoadMask>> =
        if args.masks.is_some() { Some(&mut load) } else { None };
    let data = extract(&detections, &annotations, &cal, masks, &config, args.framerate)?;
    write_output(&args.out, &dataset_to_jsonl_string(&data))?;
    println!("sequences={} frames={}", data.len(), data.num_frames());
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    require_file(&args.data.data)?;
    require_out_dir(&args.out)?;
    let mut data = load_dataset(&args.data)?;
    let bias = !args.options.no_bias;
    if bias {
        data = data.with_bias_feature();
    }
    let labels = fldcrf::evaluation::dataset_labels(&data)?;
    let spec = args.spec.build_spec(&labels, data.feature_dim().unwrap_or(0))?;
    let config = args.options.config();
    let (theta, report) = train(&spec, &data, &config)?;
    let model = TrainedModel { spec, theta, train_config: config, bias_feature: bias };
    write_output(&args.out, &model.to_json())?;
    println!(
        "model={} params={} iterations={} converged={} objective={:.9e}",
        args.spec,
        model.theta.len(),
        report.iterations,
        report.converged,
        report.final_objective
    );
    Ok(())
}

fn cmd_predict(args: &PredictArgs) -> CliResult<()> {
    require_file(&args.data.data)?;
    require_file(&args.model)?;
    require_out_dir(&args.out)?;
    let model = load_model(&args.model)?;
    let mut data = load_dataset(&args.data)?;
    if model.bias_feature {
        data = data.with_bias_feature();
    }
    let predictions = predict_dataset(&model.spec, &model.theta, &data)?;
    write_output(&args.out, &predictions_to_csv(&predictions)?)?;
    println!("sequences={} frames={}", predictions.len(), data.num_frames());
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> CliResult<()> {
    require_file(&args.data.data)?;
    require_file(&args.predictions)?;
    require_out_dir(&args.out)?;
    let data = load_dataset(&args.data)?;
    let predictions = read_predictions_csv(&args.predictions)?;
    let curves = build_curves(&predictions, &data)?;
    let mt = metric_mt(&curves.points, &args.window, data.framerate_fps())?;
    write_output(&args.out, &curves_to_csv(&curves))?;
    println!("mt={mt:.9}");
    Ok(())
}

fn cmd_nestedcv(args: &NestedCvArgs) -> CliResult<()> {
    require_file(&args.data.data)?;
    require_out_dir(&args.out)?;
    let mut data = load_dataset(&args.data)?;
    if !args.options.no_bias {
        data = data.with_bias_feature();
    }
    let config = NestedCvConfig {
        grid: if args.grid.is_empty() { default_grid() } else { args.grid.clone() },
        train: args.options.config(),
        window: args.window,
        outer_folds: args.outer_folds,
        inner_folds: args.inner_folds,
        seed: args.options.seed,
    };
    let report = nested_cv(&data, &config)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::new("internal", e.to_string()))?;
    write_output(&args.out, &(json + "\n"))?;
    for fold in &report.folds {
        println!("fold={} selected={} test_mt={:.9}", fold.fold, fold.selected, fold.test_mt);
    }
    println!("pooled_mt={:.9} mean_test_mt={:.9}", report.pooled_mt, report.mean_test_mt);
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Extract(a) => cmd_extract(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Nestedcv(a) => cmd_nestedcv(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", CliError::new("usage", first.trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs.into()).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("{}", CliError::new("internal", e.to_string()));
            return ExitCode::FAILURE;
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shorthand_and_windows() {
        assert_eq!(parse_setting("2/2").unwrap(), GridSetting::new(2, 2));
        assert!(parse_setting("0/2").is_err());
        assert!(parse_setting("2x2").is_err());
        let w = parse_window("2:-0.5").unwrap();
        assert_eq!(w, Window::NTU);
        assert!(parse_window("-0.5:2").is_err());
        assert!(parse_window("2").is_err());
    }

    #[test]
    fn model_alias_builds_two_by_two() {
        let cli = Cli::try_parse_from(["fldcrf", "train", "--data", "d", "--model", "2/2", "--out", "m"]).unwrap();
        let Command::Train(args) = cli.command else { panic!("train expected") };
        assert_eq!(args.spec, GridSetting::new(2, 2));
        let spec = args.spec.build_spec(&["crossing".into(), "not-crossing".into()], 3).unwrap();
        assert_eq!(spec.num_layers(), 2);
        assert!((0..2).all(|i| spec.layer(i).num_states() == 4));
    }

    #[test]
    fn error_lines_are_flat() {
        let e = CliError::new("io", "a\nb  c");
        assert_eq!(e.to_string(), "fldcrf: error[io]: a b c");
    }
}
