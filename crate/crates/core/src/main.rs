use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sparse_glm::bounds::{plot1_data, BoundQuery, BoundReport};
use sparse_glm::harness::output::{plot1_svg, write_plot1_csv, write_sweep_csv};
use sparse_glm::harness::{
    estimate_m95, moment_check_logistic, moment_check_onebit, parse_grid, sweep, Decoder, TrialConfig,
    DEFAULT_CONFIDENCE, DEFAULT_THRESHOLD,
};
use sparse_glm::model::ModelSpec;
use sparse_glm::{Error, Result};

#[derive(Parser)]
#[command(name = "sparse-glm", version, about = "Sparse binary recovery from generalized linear measurements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run independent trials at a single measurement count.
    Simulate(SimulateArgs),
    /// Success rate over a grid of measurement counts.
    Sweep(SweepArgs),
    /// Smallest measurement count reaching the success threshold.
    M95(M95Args),
    /// Closed-form sample-complexity bounds as JSON.
    Bounds(BoundsArgs),
    /// MLE bound curves m1, m2 over a k grid as CSV.
    Plot1(Plot1Args),
    /// Monte Carlo checks of the link-slope moment identities.
    CheckMoments(MomentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Linear,
    Onebit,
    Logistic,
}

#[derive(Clone, Copy, ValueEnum)]
enum DecoderKind {
    Topk,
    Mle,
    Quantize,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum)]
    model: ModelKind,
    /// Noise variance (linear, onebit).
    #[arg(long)]
    sigma2: Option<f64>,
    /// Inverse temperature (logistic); `inf` for the noiseless limit.
    #[arg(long)]
    beta: Option<f64>,
}

impl ModelArgs {
    fn spec(&self) -> Result<ModelSpec> {
        model_spec(self.model, self.sigma2, self.beta)
    }
}

fn model_spec(kind: ModelKind, sigma2: Option<f64>, beta: Option<f64>) -> Result<ModelSpec> {
    let need = |flag: &str, model: &str| Error::InvalidConfig(format!("--{flag} is required for --model {model}"));
    let reject = |flag: &str, model: &str| Error::InvalidConfig(format!("--{flag} does not apply to --model {model}"));
    match kind {
        ModelKind::Linear | ModelKind::Onebit => {
            let name = if matches!(kind, ModelKind::Linear) { "linear" } else { "onebit" };
            if beta.is_some() {
                return Err(reject("beta", name));
            }
            let s = sigma2.ok_or_else(|| need("sigma2", name))?;
            if matches!(kind, ModelKind::Linear) {
                ModelSpec::linear(s)
            } else {
                ModelSpec::one_bit(s)
            }
        }
        ModelKind::Logistic => {
            if sigma2.is_some() {
                return Err(reject("sigma2", "logistic"));
            }
            ModelSpec::logistic(beta.ok_or_else(|| need("beta", "logistic"))?)
        }
    }
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[arg(long, value_enum, default_value = "topk")]
    decoder: DecoderKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Confidence level of the Wilson intervals.
    #[arg(long, default_value_t = DEFAULT_CONFIDENCE)]
    confidence: f64,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ExperimentArgs {
    fn config(&self, m: usize) -> Result<TrialConfig> {
        let decoder = match self.decoder {
            DecoderKind::Topk => Decoder::TopK,
            DecoderKind::Mle => Decoder::Mle,
            DecoderKind::Quantize => Decoder::Quantize,
        };
        let config = TrialConfig {
            model: self.model.spec()?,
            n: self.n,
            k: self.k,
            m,
            decoder,
            master_seed: self.seed,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: ExperimentArgs,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 100)]
    trials: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: ExperimentArgs,
    /// Inclusive grid `lo:hi:step`.
    #[arg(long)]
    m_grid: String,
    #[arg(long, default_value_t = 100)]
    trials: usize,
}

#[derive(Args)]
struct M95Args {
    #[command(flatten)]
    common: ExperimentArgs,
    #[arg(long)]
    m_lo: usize,
    #[arg(long)]
    m_hi: usize,
    #[arg(long, default_value_t = 400)]
    trials_per_probe: usize,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// Leading constant of the correlation-decoder bound.
    #[arg(long, default_value_t = 1.0)]
    c_const: f64,
    /// Per-measurement mutual information cap for the generic lower bound.
    #[arg(long)]
    mutual_info: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Plot1Args {
    #[arg(long, default_value_t = 50_000)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    #[arg(long, default_value_t = 1000)]
    k_min: usize,
    #[arg(long, default_value_t = 25_000)]
    k_max: usize,
    #[arg(long, default_value_t = 1000)]
    k_step: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write an SVG chart of the two curves.
    #[arg(long)]
    svg: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MomentModel {
    Onebit,
    Logistic,
}

#[derive(Args)]
struct MomentArgs {
    #[arg(long, value_enum)]
    model: MomentModel,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Correlate with a column outside the support (target 0).
    #[arg(long)]
    off_support: bool,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: serde::Serialize>(path: &Option<PathBuf>, value: &T) -> Result<()> {
    let mut w = sink(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(io::Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn with_workers<T: Send>(workers: Option<usize>, job: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let threads = workers.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    pool.install(job)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => {
            let config = args.common.config(args.m)?;
            let result = with_workers(args.common.workers, || {
                sweep(&config, &[args.m], args.trials, args.common.confidence)
            })?;
            let mut w = sink(&args.common.out)?;
            write_sweep_csv(&mut w, &result)?;
            w.flush()?;
        }
        Command::Sweep(args) => {
            let grid = parse_grid(&args.m_grid)?;
            let config = args.common.config(grid[0])?;
            let result = with_workers(args.common.workers, || {
                sweep(&config, &grid, args.trials, args.common.confidence)
            })?;
            let mut w = sink(&args.common.out)?;
            write_sweep_csv(&mut w, &result)?;
            w.flush()?;
        }
        Command::M95(args) => {
            let config = args.common.config(args.m_lo.max(1))?;
            let result = with_workers(args.common.workers, || {
                estimate_m95(
                    &config,
                    args.trials_per_probe,
                    args.m_lo,
                    args.m_hi,
                    args.threshold,
                    args.common.confidence,
                )
            })?;
            write_json(&args.common.out, &result)?;
        }
        Command::Bounds(args) => {
            let query = BoundQuery {
                n: args.n,
                k: args.k,
                model: args.model.spec()?,
                delta: args.delta,
                mutual_info_cap: args.mutual_info,
            };
            let report = with_workers(args.workers, || BoundReport::compute(&query, args.c_const))?;
            write_json(&args.out, &report)?;
        }
        Command::Plot1(args) => {
            if args.k_step == 0 || args.k_min == 0 || args.k_max < args.k_min {
                return Err(Error::InvalidConfig("need 1 <= k-min <= k-max and k-step >= 1".into()));
            }
            let grid: Vec<usize> = (args.k_min..=args.k_max).step_by(args.k_step).collect();
            let rows = with_workers(args.workers, || plot1_data(args.n, args.sigma2, &grid))?;
            let mut w = sink(&args.out)?;
            write_plot1_csv(&mut w, &rows)?;
            w.flush()?;
            if let Some(path) = &args.svg {
                std::fs::write(path, plot1_svg(&rows))?;
            }
        }
        Command::CheckMoments(args) => {
            let result = with_workers(args.workers, || match args.model {
                MomentModel::Onebit => {
                    if args.beta.is_some() {
                        return Err(Error::InvalidConfig("--beta does not apply to --model onebit".into()));
                    }
                    let s = args
                        .sigma2
                        .ok_or_else(|| Error::InvalidConfig("--sigma2 is required for --model onebit".into()))?;
                    moment_check_onebit(args.k, s, args.samples, !args.off_support, args.seed)
                }
                MomentModel::Logistic => {
                    if args.sigma2.is_some() || args.off_support {
                        return Err(Error::InvalidConfig(
                            "--sigma2 and --off-support do not apply to --model logistic".into(),
                        ));
                    }
                    let b = args
                        .beta
                        .ok_or_else(|| Error::InvalidConfig("--beta is required for --model logistic".into()))?;
                    moment_check_logistic(args.k, b, args.samples, args.seed)
                }
            })?;
            write_json(&args.out, &result)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
