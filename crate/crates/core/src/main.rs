use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use triboost::datagen::{simulate, SimSpec};
use triboost::io::{
    ingest_csv, ingest_features, load_model, save_dataset, save_model, write_matrix, write_results, write_score_table,
    write_trace,
};
use triboost::losses::score_to_response;
use triboost::tuning::{benchmark, grid_search, score, trace, DataSource, TuningGrid, Variant};
use triboost::{fit, Dataset, Error, FitConfig, LeafConstraint, LossSpec, Matrix, Result, TreeConfig, UpdateMode};

#[derive(Parser)]
#[command(name = "triboost", version, about = "Gradient, Newton and hybrid tree boosting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset and write it as CSV.
    Simulate(SimulateArgs),
    /// Fit a boosted model and save it as JSON.
    Fit(FitArgs),
    /// Write predicted responses (or raw scores) for a CSV of features.
    Predict(PredictArgs),
    /// Print the error rate (classification) or mean negative log-likelihood.
    Evaluate(EvaluateArgs),
    /// Grid-search one mode on a train/validation pair.
    Tune(TuneArgs),
    /// Tune every mode on repeated random splits and write the result table.
    Benchmark(BenchmarkArgs),
    /// Fixed-configuration training/test curves per mode and split.
    Trace(TraceArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Dataset name, e.g. poisson_f1, tobit_r, msr_f3, bin_classif_fht, multi_classif_fht.
    #[arg(long)]
    spec: String,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Squared,
    Binary,
    Multiclass,
    Poisson,
    Gamma,
    Tobit,
    MeanScale,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Gradient,
    Newton,
    Hybrid,
}

impl From<ModeArg> for UpdateMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Gradient => UpdateMode::Gradient,
            ModeArg::Newton => UpdateMode::Newton,
            ModeArg::Hybrid => UpdateMode::Hybrid,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ConstraintArg {
    Count,
    Equivalent,
    HessianSum,
}

impl From<ConstraintArg> for LeafConstraint {
    fn from(c: ConstraintArg) -> Self {
        match c {
            ConstraintArg::Count => LeafConstraint::RawCount,
            ConstraintArg::Equivalent => LeafConstraint::EquivalentWeighted,
            ConstraintArg::HessianSum => LeafConstraint::RawHessianSum,
        }
    }
}

fn default_constraint(mode: UpdateMode) -> LeafConstraint {
    match mode {
        UpdateMode::Newton => LeafConstraint::EquivalentWeighted,
        _ => LeafConstraint::RawCount,
    }
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "y")]
    target: String,
    /// Expand non-numeric columns into 0/1 dummies.
    #[arg(long)]
    one_hot: bool,
}

#[derive(Args)]
struct LossArgs {
    #[arg(long, value_enum)]
    loss: LossArg,
    /// Number of classes (multiclass); inferred from the labels when omitted.
    #[arg(long)]
    classes: Option<usize>,
    /// Gamma shape parameter.
    #[arg(long, default_value_t = 10.0)]
    gamma: f64,
    /// Tobit latent standard deviation.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Tobit lower censoring threshold (default: minimum response).
    #[arg(long, allow_hyphen_values = true)]
    y_lower: Option<f64>,
    /// Tobit upper censoring threshold (default: maximum response).
    #[arg(long, allow_hyphen_values = true)]
    y_upper: Option<f64>,
}

impl LossArgs {
    fn build(&self, response: &[f64]) -> Result<LossSpec> {
        match self.loss {
            LossArg::Squared => Ok(LossSpec::squared_error()),
            LossArg::Binary => Ok(LossSpec::binary_logistic()),
            LossArg::Multiclass => {
                let k = match self.classes {
                    Some(k) => k,
                    None => response.iter().copied().fold(0.0, f64::max) as usize + 1,
                };
                LossSpec::multiclass(k)
            }
            LossArg::Poisson => Ok(LossSpec::poisson()),
            LossArg::Gamma => LossSpec::gamma(self.gamma),
            LossArg::Tobit => {
                let lo = self.y_lower.unwrap_or_else(|| response.iter().copied().fold(f64::INFINITY, f64::min));
                let hi = self.y_upper.unwrap_or_else(|| response.iter().copied().fold(f64::NEG_INFINITY, f64::max));
                LossSpec::tobit(self.sigma, lo, hi)
            }
            LossArg::MeanScale => Ok(LossSpec::mean_scale()),
        }
    }
}

fn load_with_loss(data: &DataArgs, loss: &LossArgs) -> Result<(Dataset, LossSpec)> {
    let dataset = ingest_csv(&data.data, &data.target, None, data.one_hot)?;
    let spec = loss.build(&dataset.response)?;
    spec.check_responses(&dataset.response)?;
    Ok((dataset, spec))
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    loss: LossArgs,
    #[arg(long, value_enum, default_value = "newton")]
    mode: ModeArg,
    #[arg(long, default_value_t = 100)]
    iterations: usize,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 5)]
    max_depth: usize,
    #[arg(long, default_value_t = 1.0)]
    min_leaf: f64,
    /// Leaf constraint (default: equivalent for newton, count otherwise).
    #[arg(long, value_enum)]
    constraint: Option<ConstraintArg>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Feature CSV; a column named by --target is ignored if present.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "y")]
    target: String,
    #[arg(long)]
    one_hot: bool,
    /// Use only the first M trees per output.
    #[arg(long)]
    upto: Option<usize>,
    /// Write raw scores instead of responses.
    #[arg(long)]
    raw: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    upto: Option<usize>,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, default_value_t = 1000)]
    iterations_max: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 0.1, 0.01, 0.001])]
    learning_rates: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 5.0, 25.0, 100.0])]
    min_leaf_values: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    max_depth: usize,
}

impl GridArgs {
    fn grid(&self) -> TuningGrid {
        TuningGrid {
            iterations_max: self.iterations_max,
            learning_rates: self.learning_rates.clone(),
            min_per_leaf_values: self.min_leaf_values.clone(),
            max_depth: self.max_depth,
        }
    }
}

#[derive(Args)]
struct TuneArgs {
    /// Training CSV.
    #[command(flatten)]
    data: DataArgs,
    /// Validation CSV.
    #[arg(long)]
    valid: PathBuf,
    #[command(flatten)]
    loss: LossArgs,
    /// gradient, newton, hybrid or newton-hessian-sum.
    #[arg(long, default_value = "newton")]
    mode: String,
    #[command(flatten)]
    grid: GridArgs,
    /// Validation score for every (learning rate, min leaf, M).
    #[arg(long)]
    out_table: PathBuf,
    /// Selected model, truncated at the chosen M.
    #[arg(long)]
    out_model: Option<PathBuf>,
}

/// Either a simulated dataset name or a CSV table.
#[derive(Args)]
struct SourceArgs {
    /// Simulated dataset name (fresh data per split).
    #[arg(long, conflicts_with = "data")]
    spec: Option<String>,
    /// Rows per partition for simulated data.
    #[arg(long, default_value_t = 1000)]
    n_per_partition: usize,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "y")]
    target: String,
    #[arg(long)]
    one_hot: bool,
    #[arg(long, value_enum, required_unless_present = "spec")]
    loss: Option<LossArg>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long, default_value_t = 10.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, allow_hyphen_values = true)]
    y_lower: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    y_upper: Option<f64>,
    /// Comma-separated variants: gradient, newton, hybrid, newton-hessian-sum.
    #[arg(long, value_delimiter = ',', default_values_t = ["gradient".to_string(), "newton".to_string(), "hybrid".to_string()])]
    modes: Vec<String>,
    #[arg(long, default_value_t = 10)]
    splits: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SourceArgs {
    fn source(&self) -> Result<DataSource> {
        if let Some(name) = &self.spec {
            let spec = SimSpec::from_name(name, 3 * self.n_per_partition, self.seed)?;
            return Ok(DataSource::Simulated { spec, n_per_partition: self.n_per_partition });
        }
        let path = self.data.as_ref().ok_or_else(|| Error::Config("either --spec or --data is required".into()))?;
        let loss = LossArgs {
            loss: self.loss.ok_or_else(|| Error::Config("--loss is required with --data".into()))?,
            classes: self.classes,
            gamma: self.gamma,
            sigma: self.sigma,
            y_lower: self.y_lower,
            y_upper: self.y_upper,
        };
        let data = DataArgs { data: path.clone(), target: self.target.clone(), one_hot: self.one_hot };
        let (dataset, loss) = load_with_loss(&data, &loss)?;
        Ok(DataSource::Table { dataset, loss, caps: None })
    }

    fn variants(&self) -> Result<Vec<Variant>> {
        self.modes.iter().map(|m| m.parse()).collect()
    }
}

#[derive(Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    grid: GridArgs,
    /// Result CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Fixed learning rate.
    #[arg(long)]
    fixed_lr: f64,
    #[arg(long, default_value_t = 25.0)]
    min_leaf: f64,
    #[arg(long, default_value_t = 1000)]
    iterations: usize,
    #[arg(long, default_value_t = 5)]
    max_depth: usize,
    /// Directory receiving one `trace_<mode>_split<k>.csv` per mode and split.
    #[arg(long)]
    out_dir: PathBuf,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn run_simulate(args: SimulateArgs) -> Result<()> {
    let mut spec = SimSpec::from_name(&args.spec, args.n, args.seed)?;
    if let Some(g) = args.gamma {
        spec.gamma = g;
    }
    if let Some(s) = args.sigma {
        spec.sigma = s;
    }
    if let Some(k) = args.classes {
        spec.num_classes = k;
    }
    let sim = simulate(&spec)?;
    save_dataset(&args.out, &sim.dataset, "y")?;
    info!("wrote {} rows of {} to {}", sim.dataset.len(), spec.name(), args.out.display());
    Ok(())
}

fn run_fit(args: FitArgs) -> Result<()> {
    let (dataset, loss) = load_with_loss(&args.data, &args.loss)?;
    let mode = UpdateMode::from(args.mode);
    let constraint = args.constraint.map(LeafConstraint::from).unwrap_or_else(|| default_constraint(mode));
    let config = FitConfig::new(
        mode,
        args.iterations,
        args.learning_rate,
        TreeConfig::new(args.max_depth, constraint, args.min_leaf),
    );
    let model = fit(&dataset, &loss, &config)?;
    save_model(&args.out, &model)?;
    if let Some(last) = model.ensemble.train_loss.last() {
        info!("final mean training loss {}", last / dataset.len() as f64);
    }
    Ok(())
}

fn run_predict(args: PredictArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let (features, _) = ingest_features(&args.data, &args.target, args.one_hot)?;
    let scores = model.predict(&features, args.upto)?;
    let k = model.num_outputs();
    let (names, out) = if args.raw {
        ((0..k).map(|j| format!("score{j}")).collect(), scores)
    } else {
        let rows = scores.rows().map(|s| score_to_response(&model.loss, s)).collect::<Result<Vec<_>>>()?;
        let names: Vec<String> = match rows.first().map(Vec::len).unwrap_or(1) {
            1 => vec!["prediction".into()],
            w if model.loss.family == triboost::LossFamily::MeanScaleGaussian && w == 2 => {
                vec!["mean".into(), "sd".into()]
            }
            w => (0..w).map(|j| format!("p{j}")).collect(),
        };
        (names, Matrix::from_rows(&rows)?)
    };
    let mut w = create(&args.out)?;
    write_matrix(&mut w, &names, &out)?;
    w.flush()?;
    Ok(())
}

fn run_evaluate(args: EvaluateArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let dataset = ingest_csv(&args.data.data, &args.data.target, Some(&model.loss), args.data.one_hot)?;
    let scores = model.predict(&dataset.features, args.upto)?;
    let value = score(&model.loss, &scores, &dataset.response)?;
    let metric = if model.loss.family.is_classification() { "error_rate" } else { "nll" };
    println!("{metric},{value}");
    Ok(())
}

fn run_tune(args: TuneArgs) -> Result<()> {
    let (train, loss) = load_with_loss(&args.data, &args.loss)?;
    let valid = ingest_csv(&args.valid, &args.data.target, Some(&loss), args.data.one_hot)?;
    let variant: Variant = args.mode.parse()?;
    let result = grid_search(&train, &valid, &loss, variant, &args.grid.grid())?;
    let mut w = create(&args.out_table)?;
    write_score_table(&mut w, &variant.to_string(), &result.table)?;
    w.flush()?;
    if let Some(path) = &args.out_model {
        save_model(path, &result.model)?;
    }
    let b = result.best;
    println!("learning_rate={},min_leaf={},M={},valid_score={}", b.learning_rate, b.min_leaf, b.iterations, b.score);
    Ok(())
}

fn run_benchmark(args: BenchmarkArgs) -> Result<()> {
    let source = args.source.source()?;
    let variants = args.source.variants()?;
    let rows = benchmark(&source, &variants, args.source.splits, args.source.seed, &args.grid.grid())?;
    let mut w = create(&args.out)?;
    write_results(&mut w, &rows)?;
    w.flush()?;
    Ok(())
}

fn run_trace(args: TraceArgs) -> Result<()> {
    let source = args.source.source()?;
    let variants = args.source.variants()?;
    let traces = trace(
        &source,
        &variants,
        args.source.splits,
        args.source.seed,
        args.fixed_lr,
        args.min_leaf,
        args.iterations,
        args.max_depth,
    )?;
    fs::create_dir_all(&args.out_dir)?;
    for t in &traces {
        let path = args.out_dir.join(format!("trace_{}_split{}.csv", t.variant, t.split_id));
        let mut w = create(&path)?;
        write_trace(&mut w, t)?;
        w.flush()?;
    }
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("TRIBOOST_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("TRIBOOST_THREADS must be a non-negative integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot configure thread pool: {e}")))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Simulate(a) => run_simulate(a),
        Command::Fit(a) => run_fit(a),
        Command::Predict(a) => run_predict(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Tune(a) => run_tune(a),
        Command::Benchmark(a) => run_benchmark(a),
        Command::Trace(a) => run_trace(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
