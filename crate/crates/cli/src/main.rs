use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ndarray::Array1;

use wavelearn::dataio::{self, generate, GenKind, GenParams, Layout};
use wavelearn::dwt::{self, basis_function_1d, basis_function_2d, Signal, WaveletCoefficients};
use wavelearn::objective::ConditionMask;
use wavelearn::trainer::{self, cost_map, train, Termination, TrainConfig};
use wavelearn::{Dataset, Error, GridSpec};

const THREADS_VAR: &str = "WAVELEARN_THREADS";

/// Learn orthonormal wavelet filters by gradient descent on a sparsity objective.
#[derive(Parser, Debug)]
#[command(name = "wavelearn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train low-pass filter taps on a dataset.
    Train(TrainArgs),
    /// Apply the forward or inverse transform to every signal in a CSV file.
    Transform(TransformArgs),
    /// Write the position-space basis function of one coefficient.
    Basis(BasisArgs),
    /// Map the average total cost over a grid of two-tap filters.
    Costmap(CostmapArgs),
    /// Generate a toy dataset.
    Generate(GenerateArgs),
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct DataSource {
    /// CSV dataset.
    #[arg(long, value_name = "PATH")]
    data: Option<PathBuf>,

    /// Generated dataset: KIND[,SHAPE[,COUNT[,SEED]]], e.g. point-like,16x16,100,0.
    #[arg(long, value_name = "SPEC")]
    generate: Option<String>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    source: DataSource,

    /// CSV layout of --data: auto, 1d or 2d.
    #[arg(long, default_value = "auto")]
    layout: Layout,

    /// Number of low-pass taps (even).
    #[arg(long, default_value_t = 2)]
    nfilt: usize,

    #[arg(long, default_value_t = 1e-3)]
    lr: f64,

    #[arg(long, default_value_t = 0.9)]
    momentum: f64,

    /// Final regularisation weight.
    #[arg(long, default_value_t = 100.0)]
    lambda: f64,

    /// Steps over which the regularisation weight ramps up from zero.
    #[arg(long, default_value_t = 500)]
    anneal: usize,

    /// Examples per step; at least the dataset size gives full-batch descent.
    #[arg(long, default_value_t = 64)]
    batch: usize,

    /// Maximum number of steps. Zero writes the initial filter unchanged.
    #[arg(long, default_value_t = 5000)]
    steps: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Stop once the gradient max-norm stays below this for 10 steps.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,

    /// Five 0/1 characters switching conditions 1 to 5 on or off.
    #[arg(long, value_name = "BITS", default_value = "11111")]
    toggle_conditions: ConditionMask,

    /// Start from this filter file instead of a random unit vector.
    #[arg(long, value_name = "PATH")]
    init: Option<PathBuf>,

    /// Where to write the learned filter.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,

    /// Where to write the per-step history CSV.
    #[arg(long, value_name = "PATH")]
    history: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TransformArgs {
    #[arg(long, value_name = "PATH")]
    filter: PathBuf,

    #[arg(long, value_name = "PATH")]
    data: PathBuf,

    /// CSV layout of --data: auto, 1d or 2d.
    #[arg(long, default_value = "auto")]
    layout: Layout,

    /// Treat the input as coefficients and reconstruct signals.
    #[arg(long)]
    inverse: bool,

    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BasisArgs {
    #[arg(long, value_name = "PATH")]
    filter: PathBuf,

    /// Signal side length, a power of two.
    #[arg(long, value_name = "2^M")]
    size: usize,

    /// Coefficient index: I for a 1D basis function, I,J for 2D.
    #[arg(long, value_name = "I[,J]")]
    index: String,

    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CostmapArgs {
    #[command(flatten)]
    source: DataSource,

    /// CSV layout of --data: auto, 1d or 2d.
    #[arg(long, default_value = "auto")]
    layout: Layout,

    /// Axis range for both taps.
    #[arg(
        long,
        value_name = "MIN:MAX:STEPS",
        default_value = "-1.5:1.5:101",
        allow_hyphen_values = true
    )]
    grid: GridSpec,

    #[arg(long, default_value_t = 10.0)]
    lambda: f64,

    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// point-like, gaussian-blobs, sinusoid-noise or constant.
    #[arg(long)]
    kind: GenKind,

    /// N for 1D signals or NxN for 2D.
    #[arg(long, default_value = "16x16")]
    shape: String,

    #[arg(long, default_value_t = 100)]
    count: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Spikes per point-like signal.
    #[arg(long)]
    spikes: Option<usize>,

    /// Gaussians per blob signal.
    #[arg(long)]
    blobs: Option<usize>,

    /// Blob width in samples.
    #[arg(long)]
    sigma: Option<f64>,

    /// Sinusoids per sinusoid-noise signal.
    #[arg(long)]
    waves: Option<usize>,

    /// White-noise standard deviation.
    #[arg(long)]
    noise: Option<f64>,

    /// Mean level of constant signals.
    #[arg(long)]
    level: Option<f64>,

    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Lib(Error::NumericalFailure { .. }) => 3,
            Failure::Lib(
                Error::InvalidConfig(_) | Error::InvalidGrid(_) | Error::UnknownKind(_),
            ) => 1,
            Failure::Lib(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(msg) => f.write_str(msg),
            Failure::Lib(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn parse_shape(s: &str) -> CliResult<Vec<usize>> {
    let dims: Result<Vec<usize>, _> = s.split(['x', 'X']).map(|d| d.trim().parse()).collect();
    match dims {
        Ok(d) if !d.is_empty() && d.len() <= 2 => Ok(d),
        _ => Err(Failure::Usage(format!(
            "bad shape `{s}`, expected N or NxN"
        ))),
    }
}

/// `KIND[,SHAPE[,COUNT[,SEED]]]`.
fn generated(spec: &str) -> CliResult<Dataset> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    if parts.len() > 4 {
        return Err(Failure::Usage(format!("bad generator spec `{spec}`")));
    }
    let kind: GenKind = parts[0].parse()?;
    let shape = parse_shape(parts.get(1).copied().unwrap_or("16x16"))?;
    let number = |i: usize, default: u64| -> CliResult<u64> {
        parts.get(i).map_or(Ok(default), |p| {
            p.parse()
                .map_err(|_| Failure::Usage(format!("bad number `{p}` in generator spec")))
        })
    };
    let count = number(2, 100)? as usize;
    let seed = number(3, 0)?;
    Ok(generate(kind, &shape, count, seed, &GenParams::default())?)
}

fn load_data(source: &DataSource, layout: Layout) -> CliResult<Dataset> {
    match (&source.data, &source.generate) {
        (Some(path), None) => Ok(dataio::read_csv_with(path, layout)?),
        (None, Some(spec)) => generated(spec),
        _ => Err(Failure::Usage(
            "give exactly one of --data or --generate".into(),
        )),
    }
}

fn fmt_taps(a: &[f64]) -> String {
    let taps: Vec<String> = a.iter().map(|v| format!("{v:.6}")).collect();
    format!("[{}]", taps.join(", "))
}

fn cmd_train(args: TrainArgs) -> CliResult<()> {
    let data = load_data(&args.source, args.layout)?;
    let init = args
        .init
        .as_ref()
        .map(dataio::load_filter)
        .transpose()?
        .map(|fb| fb.into_coeffs());
    let config = TrainConfig {
        n_filt: args.nfilt,
        learning_rate: args.lr,
        momentum: args.momentum,
        lambda_final: args.lambda,
        anneal_steps: args.anneal,
        batch_size: args.batch,
        max_steps: args.steps,
        seed: args.seed,
        convergence_tol: args.tol,
        conditions: args.toggle_conditions,
        init,
    };
    let (fb, history) = train(&data, &config)?;
    dataio::save_filter(&fb, &args.out)?;
    if let Some(path) = &args.history {
        trainer::write_history_csv(&history, config.n_filt, path)?;
    }
    let cost = trainer::evaluate(&data, &fb, config.lambda_final, config.conditions)?;
    let how = match history.termination {
        Termination::Converged => "converged",
        Termination::MaxSteps => "max-steps",
    };
    let r = cost.reg;
    println!(
        "steps={} stop={how} sparsity={:.6} r1={:.3e} r2={:.3e} r3={:.3e} r4={:.3e} r5={:.3e} lambda={} total={:.6} a={}",
        history.steps,
        cost.sparsity,
        r[0],
        r[1],
        r[2],
        r[3],
        r[4],
        cost.lambda,
        cost.total,
        fmt_taps(fb.coeffs())
    );
    Ok(())
}

fn cmd_transform(args: TransformArgs) -> CliResult<()> {
    let fb = dataio::load_filter(&args.filter)?;
    let data = dataio::read_csv_with(&args.data, args.layout)?;
    let out = data
        .signals()
        .iter()
        .map(|s| {
            if args.inverse {
                dwt::inverse(&WaveletCoefficients(s.clone()), &fb)
            } else {
                dwt::forward(s, &fb).map(WaveletCoefficients::into_signal)
            }
        })
        .collect::<Result<Vec<Signal>, Error>>()?;
    let direction = if args.inverse { "inverse" } else { "forward" };
    let provenance = format!("{direction} transform of {}", args.data.display());
    dataio::write_csv(&Dataset::new(out, provenance)?, &args.out)?;
    Ok(())
}

fn cmd_basis(args: BasisArgs) -> CliResult<()> {
    if args.size < 2 || !args.size.is_power_of_two() {
        return Err(Failure::Usage(format!(
            "--size must be a power of two >= 2, got {}",
            args.size
        )));
    }
    let m = args.size.trailing_zeros();
    let index: Vec<usize> = args
        .index
        .split(',')
        .map(|p| p.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::Usage(format!("bad index `{}`", args.index)))?;
    if let Some(&i) = index.iter().find(|&&i| i >= args.size) {
        return Err(Failure::Usage(format!(
            "index {i} out of range for size {}",
            args.size
        )));
    }
    let fb = dataio::load_filter(&args.filter)?;
    let signal = match index[..] {
        [i] => Signal::OneD(Array1::from(basis_function_1d(i, m, &fb)?)),
        [i, j] => Signal::TwoD(basis_function_2d((i, j), m, &fb)?),
        _ => return Err(Failure::Usage(format!("bad index `{}`", args.index))),
    };
    write_signals(vec![signal], &args.out)
}

fn write_signals(signals: Vec<Signal>, path: &Path) -> CliResult<()> {
    dataio::write_csv(&Dataset::new(signals, "")?, path)?;
    Ok(())
}

fn cmd_costmap(args: CostmapArgs) -> CliResult<()> {
    let data = load_data(&args.source, args.layout)?;
    cost_map(&data, &args.grid, args.lambda)?.write_csv(&args.out)?;
    Ok(())
}

fn cmd_generate(args: GenerateArgs) -> CliResult<()> {
    let shape = parse_shape(&args.shape)?;
    let defaults = GenParams::default();
    let params = GenParams {
        spikes: args.spikes.unwrap_or(defaults.spikes),
        blobs: args.blobs.unwrap_or(defaults.blobs),
        sigma: args.sigma.unwrap_or(defaults.sigma),
        waves: args.waves.unwrap_or(defaults.waves),
        noise: args.noise.unwrap_or(defaults.noise),
        level: args.level.unwrap_or(defaults.level),
    };
    let data =
        generate(args.kind, &shape, args.count, args.seed, &params).map_err(|e| match e {
            Error::Shape(msg) => Failure::Usage(msg),
            other => Failure::Lib(other),
        })?;
    dataio::write_csv(&data, &args.out)?;
    Ok(())
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| {
        Failure::Usage(format!(
            "{THREADS_VAR} must be a nonnegative integer, got `{raw}`"
        ))
    })?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(format!("cannot configure thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Transform(a) => cmd_transform(a),
        Command::Basis(a) => cmd_basis(a),
        Command::Costmap(a) => cmd_costmap(a),
        Command::Generate(a) => cmd_generate(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
