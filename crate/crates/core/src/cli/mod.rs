//! The `cgan` command-line driver.
//!
//! Exit codes: 0 on success, 2 for invalid arguments or inputs, 3 for
//! runtime failures (training divergence, unwritable outputs).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::conformal::{fit_scorer, simplex_grid, Calibrator, ConformalError, WeightVector};
use crate::data::{
    load_csv, make_gaussian_mixture, save_csv, split, DataError, LabeledDataset, MixtureSpec,
    Standardizer,
};
use crate::gan::{finetune_select, generate, train, GanError, SelectionCriterion, TrainConfig};
use crate::metrics::{MetricsError, MetricsReport};
use crate::nn::{Checkpoint, MlpModel, NnError};
use crate::par::Mode;

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<GanError> for CliError {
    fn from(e: GanError) -> Self {
        match e {
            GanError::Divergence { .. } | GanError::Nn(NnError::NonFinite(_)) => {
                CliError::Runtime(e.to_string())
            }
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<ConformalError> for CliError {
    fn from(e: ConformalError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Validation(e.to_string())
    }
}

fn reading(path: &Path) -> impl FnOnce(String) -> CliError + '_ {
    move |e| CliError::Validation(format!("cannot read {}: {e}", path.display()))
}

fn writing(path: &Path) -> impl FnOnce(String) -> CliError + '_ {
    move |e| CliError::Runtime(format!("cannot write {}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(
    name = "cgan",
    version,
    about = "Conditional GAN with conformal regularization"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a labeled Gaussian mixture and write it as CSV.
    MakeData(MakeDataArgs),
    /// Train a generator/discriminator pair into a run directory.
    Train(TrainArgs),
    /// Fit scores and calibrate them on held-out real data.
    Calibrate(CalibrateArgs),
    /// Sample synthetic rows from a trained generator.
    Generate(GenerateArgs),
    /// Compare synthetic against real data and emit curve tables.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, clap::Args)]
pub struct MakeDataArgs {
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Distance of the class means from the origin.
    #[arg(long, default_value_t = 4.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 1.0)]
    pub std: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write stratified train/calib/val/test pieces next to `--out`.
    #[arg(long, value_delimiter = ',')]
    pub split: Option<Vec<f64>>,
}

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    /// JSON file holding every training hyperparameter.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Run directory to create or overwrite.
    #[arg(long)]
    pub out: PathBuf,
    /// Drop both penalties (plain conditional GAN).
    #[arg(long)]
    pub baseline: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectMode {
    /// Use `--weights` or the run's configured weights.
    Fixed,
    /// Fine-tune per grid point, minimize validation squared error.
    Grid,
    /// Fine-tune per grid point, minimize coverage-calibration error.
    Ece,
}

#[derive(Debug, clap::Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Real data the score statistics are fitted on (usually the train split).
    #[arg(long)]
    pub fit_data: PathBuf,
    /// Held-out real calibration data.
    #[arg(long)]
    pub calib: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = SelectMode::Fixed)]
    pub select_weights: SelectMode,
    /// Validation data for `grid` and `ece` selection.
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    /// Fine-tuning iterations per candidate during selection.
    #[arg(long, default_value_t = 100)]
    pub finetune_iters: usize,
    /// Simplex grid resolution (`4` gives steps of 0.25).
    #[arg(long, default_value_t = 4)]
    pub grid_steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Keep only samples inside the calibrated prediction region.
    #[arg(long, requires = "calibrator")]
    pub filter_region: bool,
    #[arg(long)]
    pub calibrator: Option<PathBuf>,
    /// Condition every sample on this class instead of uniform labels.
    #[arg(long)]
    pub label: Option<usize>,
}

#[derive(Debug, clap::Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub real: PathBuf,
    #[arg(long)]
    pub synth: PathBuf,
    /// Output directory for report.json and curve CSVs.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub run: Option<PathBuf>,
    #[arg(long)]
    pub calibrator: Option<PathBuf>,
    /// Real calibration data, used for the local-width curve.
    #[arg(long)]
    pub calib: Option<PathBuf>,
    /// Emit the coverage, calibration and width curves.
    #[arg(long)]
    pub curves: bool,
    #[arg(long, default_value_t = 10)]
    pub k_nn: usize,
}

/// Files of one run directory.
pub struct RunDir {
    pub generator: MlpModel,
    pub discriminator: MlpModel,
    pub config: TrainConfig,
    pub standardizer: Standardizer,
}

impl RunDir {
    pub const GENERATOR: &'static str = "gen.json";
    pub const DISCRIMINATOR: &'static str = "disc.json";
    pub const LOG: &'static str = "train_log.ndjson";
    pub const CONFIG: &'static str = "resolved_config.json";
    pub const STANDARDIZER: &'static str = "standardizer.json";

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let model = |name: &str| -> Result<MlpModel, CliError> {
            let path = dir.join(name);
            Checkpoint::load(&path)
                .and_then(Checkpoint::into_model)
                .map_err(|e| reading(&path)(e.to_string()))
        };
        Ok(Self {
            generator: model(Self::GENERATOR)?,
            discriminator: model(Self::DISCRIMINATOR)?,
            config: read_json(&dir.join(Self::CONFIG))?,
            standardizer: read_json(&dir.join(Self::STANDARDIZER))?,
        })
    }

    fn standardize(&self, data: &LabeledDataset) -> Result<LabeledDataset, CliError> {
        if data.dim() != self.standardizer.dim() {
            return Err(CliError::Validation(format!(
                "data has {} features but the run was trained on {}",
                data.dim(),
                self.standardizer.dim()
            )));
        }
        if data.n_classes() > self.config.n_classes {
            return Err(CliError::Validation(format!(
                "data has labels up to {} but the run knows {} classes",
                data.n_classes() - 1,
                self.config.n_classes
            )));
        }
        Ok(data
            .clone()
            .with_n_classes(self.config.n_classes)?
            .standardize_with(&self.standardizer)?)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| reading(path)(e.to_string()))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| writing(path)(e.to_string()))
}

fn load_data(path: &Path) -> Result<LabeledDataset, CliError> {
    load_csv(path).map_err(|e| reading(path)(e.to_string()))
}

fn save_data(data: &LabeledDataset, path: &Path) -> Result<(), CliError> {
    save_csv(data, path).map_err(|e| writing(path)(e.to_string()))
}

fn four(values: &[f64], flag: &str) -> Result<[f64; 4], CliError> {
    values.try_into().map_err(|_| {
        CliError::Validation(format!(
            "--{flag} takes 4 comma-separated values, got {}",
            values.len()
        ))
    })
}

fn make_data(args: &MakeDataArgs) -> Result<String, CliError> {
    let spec = MixtureSpec::circle(
        args.classes,
        args.dim,
        args.radius,
        args.std,
        args.n,
        args.seed,
    );
    let data = make_gaussian_mixture(&spec)?;
    save_data(&data, &args.out)?;
    let mut msg = format!("{}\n", args.out.display());
    if let Some(f) = &args.split {
        let fractions = four(f, "split")?;
        let pieces = split(&data, fractions, args.seed)?;
        let stem = args
            .out
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("data");
        for (name, piece) in ["train", "calib", "val", "test"].iter().zip(pieces.parts()) {
            let path = args.out.with_file_name(format!("{stem}_{name}.csv"));
            save_data(piece, &path)?;
            writeln!(msg, "{}", path.display()).expect("string write");
        }
    }
    Ok(msg)
}

fn train_cmd(args: &TrainArgs) -> Result<String, CliError> {
    let mut config: TrainConfig = read_json(&args.config)?;
    if args.baseline {
        config = config.baseline();
    }
    config.validate()?;
    let raw = load_data(&args.data)?;
    if raw.n_classes() > config.n_classes {
        return Err(CliError::Validation(format!(
            "data has {} classes but n_classes is {}",
            raw.n_classes(),
            config.n_classes
        )));
    }
    let data = raw.with_n_classes(config.n_classes)?.standardize()?;
    let standardizer = data.standardizer().expect("standardized").clone();
    let out = train(&data, &config)?;

    std::fs::create_dir_all(&args.out).map_err(|e| writing(&args.out)(e.to_string()))?;
    for (name, model) in [
        (RunDir::GENERATOR, &out.generator),
        (RunDir::DISCRIMINATOR, &out.discriminator),
    ] {
        let path = args.out.join(name);
        Checkpoint::from_model(model, out.rng_state)
            .save(&path)
            .map_err(|e| writing(&path)(e.to_string()))?;
    }
    let mut log = String::new();
    for r in &out.log {
        log.push_str(&serde_json::to_string(r).map_err(|e| CliError::Runtime(e.to_string()))?);
        log.push('\n');
    }
    let log_path = args.out.join(RunDir::LOG);
    std::fs::write(&log_path, log).map_err(|e| writing(&log_path)(e.to_string()))?;
    write_json(&config, &args.out.join(RunDir::CONFIG))?;
    write_json(&standardizer, &args.out.join(RunDir::STANDARDIZER))?;
    let last = out.log.last();
    Ok(format!(
        "trained {} iterations into {} (final loss_d {}, loss_g {})\n",
        out.log.len(),
        args.out.display(),
        last.map_or(f64::NAN, |r| r.loss_d),
        last.map_or(f64::NAN, |r| r.loss_g),
    ))
}

fn calibrate_cmd(args: &CalibrateArgs) -> Result<String, CliError> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(ConformalError::Alpha(args.alpha).into());
    }
    let run = RunDir::load(&args.run)?;
    let fit_data = run.standardize(&load_data(&args.fit_data)?)?;
    let calib = run.standardize(&load_data(&args.calib)?)?;
    let mut msg = String::new();
    let weights = match args.select_weights {
        SelectMode::Fixed => match &args.weights {
            Some(w) => WeightVector::new(four(w, "weights")?)?,
            None => run.config.weights,
        },
        mode => {
            let val_path = args
                .val
                .as_ref()
                .ok_or_else(|| CliError::Validation("weight selection needs --val".into()))?;
            let val = run.standardize(&load_data(val_path)?)?;
            let criterion = if mode == SelectMode::Grid {
                SelectionCriterion::SquaredError
            } else {
                SelectionCriterion::Ece
            };
            let config = TrainConfig {
                seed: args.seed,
                ..run.config.clone()
            };
            let out = finetune_select(
                Mode::default(),
                &run.generator,
                &run.discriminator,
                &fit_data,
                &val,
                &config,
                &simplex_grid(args.grid_steps.max(1)),
                criterion,
                args.finetune_iters,
            )?;
            writeln!(
                msg,
                "selected weights {:?} (candidate {}, criterion {})",
                out.selection.best.as_array(),
                out.selection.best_index,
                out.selection.criteria[out.selection.best_index]
            )
            .expect("string write");
            out.selection.best
        }
    };
    let pool = generate(
        &run.generator,
        run.config.n_classes,
        run.config.pool_size,
        None,
        args.seed,
    )?;
    let scorer = fit_scorer(&fit_data, &pool, &run.discriminator, run.config.k_folds)?;
    let calibrator = Calibrator::fit(scorer, weights, &calib, &run.discriminator, args.alpha)?;
    calibrator
        .save(&args.out)
        .map_err(|e| writing(&args.out)(e.to_string()))?;
    writeln!(
        msg,
        "calibrated {} scores at alpha {} (threshold {}) into {}",
        calibrator.n(),
        args.alpha,
        calibrator.threshold(),
        args.out.display()
    )
    .expect("string write");
    Ok(msg)
}

fn load_calibrator(path: &Path) -> Result<Calibrator, CliError> {
    Calibrator::load(path).map_err(|e| reading(path)(e.to_string()))
}

fn generate_cmd(args: &GenerateArgs) -> Result<String, CliError> {
    let run = RunDir::load(&args.run)?;
    let k = run.config.n_classes;
    let labels = args.label.map(|c| vec![c; args.n]);
    let mut synth = generate(&run.generator, k, args.n, labels.as_deref(), args.seed)?;
    if args.filter_region {
        let path = args
            .calibrator
            .as_ref()
            .expect("clap enforces --calibrator");
        let calibrator = load_calibrator(path)?;
        let scores =
            calibrator.weighted_scores(synth.features(), synth.labels(), &run.discriminator)?;
        let keep: Vec<usize> = (0..synth.len())
            .filter(|&i| calibrator.contains_score(scores[i]))
            .collect();
        synth = synth.subset(&keep);
    }
    let raw = synth
        .with_standardizer(Some(run.standardizer.clone()))
        .unstandardize()?;
    save_data(&raw, &args.out)?;
    Ok(format!(
        "{} rows written to {}\n",
        raw.len(),
        args.out.display()
    ))
}

fn evaluate_cmd(args: &EvaluateArgs) -> Result<String, CliError> {
    let real = load_data(&args.real)?;
    let synth = load_data(&args.synth)?;
    if real.dim() != synth.dim() {
        return Err(MetricsError::DimensionMismatch {
            real: real.dim(),
            synth: synth.dim(),
        }
        .into());
    }
    let k = real.n_classes().max(synth.n_classes());
    let real = real.with_n_classes(k)?;
    let synth = synth.with_n_classes(k)?;
    let mut report = MetricsReport::fidelity(&real, &synth)?;
    if args.curves && args.calibrator.is_none() {
        return Err(CliError::Validation("--curves needs --calibrator".into()));
    }
    if let Some(cal_path) = &args.calibrator {
        let (Some(run_path), Some(calib_path)) = (&args.run, &args.calib) else {
            return Err(CliError::Validation(
                "--calibrator needs --run and --calib".into(),
            ));
        };
        let calibrator = load_calibrator(cal_path)?;
        let run = RunDir::load(run_path)?;
        let calib = run.standardize(&load_data(calib_path)?)?;
        let samples = run.standardize(&synth)?;
        report.add_conformal(&calibrator, &calib, &samples, &run.discriminator, args.k_nn)?;
    }
    report
        .save(&args.out)
        .map_err(|e| writing(&args.out)(e.to_string()))?;
    Ok(format!(
        "ks_mean,wasserstein_mean,downstream_accuracy\n{},{},{}\n",
        report.ks_mean, report.wasserstein_mean, report.downstream_accuracy
    ))
}

/// Executes one parsed invocation and returns its standard output.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::MakeData(a) => make_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Calibrate(a) => calibrate_cmd(a),
        Command::Generate(a) => generate_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
    }
}

/// Parses `args` (including the program name), runs the command, prints
/// its output or error and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
