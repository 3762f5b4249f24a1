use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use stereounif::coefficients::KernelSpec;
use stereounif::config::{ExperimentConfig, ExperimentKind};
use stereounif::harness::{self, TestOptions};
use stereounif::rng::RandomStream;
use stereounif::sample::{read_csv_rows, SphericalSample};
use stereounif::samplers::{
    north_pole, sample_cap, sample_rotsym, sample_uad, sample_uniform_sphere, AngularFunction, CapSpec, RotSymSpec,
};
use stereounif::statistics::{Calibration, TestStatistic};
use stereounif::{Error, Result};

/// Input rows further than this from unit norm are rejected.
const INPUT_NORM_TOL: f64 = 1e-6;

#[derive(Parser)]
#[command(name = "stereounif", version, about = "Stereographic uniformity tests on the hypersphere")]
struct Cli {
    /// Master seed for every random quantity.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file (default: stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Experiment configuration file (key = value lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test a sample file for uniformity.
    Test(TestArgs),
    /// Generate a sample from one of the data-generating processes.
    Sample(SampleArgs),
    /// Local-power experiment grid.
    Power,
    /// Rejection table for the uniform antipodal-dependent process.
    UadTable,
    /// Tabulate critical values.
    Critval(CritvalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum StatKind {
    Stereo,
    Rayleigh,
    Bingham,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Asymptotic,
    Exact,
    Kfold,
}

#[derive(Args)]
struct TestArgs {
    /// CSV file with one point per row.
    #[arg(long)]
    input: PathBuf,
    /// Sphere dimension (rows have q+1 columns).
    #[arg(long)]
    q: usize,
    #[arg(long, value_enum, default_value = "stereo")]
    stat: StatKind,
    /// Kernel parameter in [-1, 1].
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    a: f64,
    /// Truncation K of the stereographic statistic.
    #[arg(long = "K")]
    truncation: Option<usize>,
    #[arg(long, value_enum, default_value = "exact")]
    method: MethodArg,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Calibration draws.
    #[arg(long, default_value_t = 100_000)]
    m: usize,
    /// Folds of the K-fold test.
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Grid of a values for the K-fold test.
    #[arg(long, num_args = 1.., allow_negative_numbers = true, default_values_t = [-1.0, 0.0, 1.0])]
    grid: Vec<f64>,
    /// Directory for cached null distributions.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Process {
    Uniform,
    Vmf,
    Mixvmf,
    Smallcircle,
    Cap,
    Uad,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, value_enum)]
    process: Process,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    q: usize,
    /// Concentration of the rotationally symmetric processes.
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    /// Small-circle parameter.
    #[arg(long, default_value_t = 0.25, allow_negative_numbers = true)]
    nu: f64,
    /// Cap angle in degrees (cap and uad).
    #[arg(long)]
    theta: Option<f64>,
    /// Location, comma-separated (default: last basis vector).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    mu: Option<Vec<f64>>,
}

#[derive(Args)]
struct CritvalArgs {
    #[arg(long)]
    q: usize,
    #[arg(long, value_enum, default_value = "stereo")]
    stat: StatKind,
    /// Kernel parameters.
    #[arg(long, num_args = 1.., allow_negative_numbers = true, default_values_t = [0.0])]
    a: Vec<f64>,
    /// Truncation K of the stereographic statistic.
    #[arg(long = "K")]
    truncation: Option<usize>,
    #[arg(long, value_enum, default_value = "asymptotic")]
    method: MethodArg,
    /// Sample size for exact-n calibration.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 100_000)]
    m: usize,
    #[arg(long, num_args = 1.., default_values_t = [0.10, 0.05, 0.01])]
    alpha: Vec<f64>,
    #[arg(long, default_value = "cache")]
    cache: PathBuf,
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn statistic(kind: StatKind, a: f64, q: usize, truncation: Option<usize>) -> Result<TestStatistic> {
    Ok(match kind {
        StatKind::Rayleigh => TestStatistic::Rayleigh { q },
        StatKind::Bingham => TestStatistic::Bingham { q },
        StatKind::Stereo => TestStatistic::Stereo(match truncation {
            Some(k) => KernelSpec::truncated(a, q, k)?,
            None => KernelSpec::new(a, q)?,
        }),
    })
}

fn load_sample(path: &Path, q: usize) -> Result<SphericalSample> {
    let rows = read_csv_rows(BufReader::new(File::open(path)?), &path.display().to_string())?;
    if rows[0].len() != q + 1 {
        return Err(Error::Parse {
            location: path.display().to_string(),
            detail: format!("rows have {} columns, expected q + 1 = {}", rows[0].len(), q + 1),
        });
    }
    for (i, row) in rows.iter().enumerate() {
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > INPUT_NORM_TOL {
            return Err(Error::Parse {
                location: format!("{}: row {}", path.display(), i + 1),
                detail: format!("norm {norm} is not 1 within {INPUT_NORM_TOL:e}"),
            });
        }
    }
    let (sample, deviation) = SphericalSample::normalized(rows.concat(), q)?;
    if deviation > stereounif::sample::UNIT_NORM_TOL {
        log::warn!("rows renormalized (largest norm deviation {deviation:e})");
    }
    Ok(sample)
}

fn cmd_test(cli: &Cli, args: &TestArgs) -> Result<bool> {
    let sample = load_sample(&args.input, args.q)?;
    let method = match args.method {
        MethodArg::Asymptotic => Calibration::Asymptotic,
        MethodArg::Exact => Calibration::ExactMc,
        MethodArg::Kfold => Calibration::KFold,
    };
    let seed = cli.seed.unwrap_or(1);
    let opts = TestOptions {
        statistic: statistic(args.stat, args.a, args.q, args.truncation)?,
        method,
        alpha: args.alpha,
        seed,
        m: args.m,
        folds: args.folds,
        grid: args.grid.clone(),
        cache: args.cache.clone(),
    };
    let report = harness::run_test(&sample, &opts)?;
    println!("{report}");
    if let Some(path) = &cli.out {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "test,n,q,method,statistic,critical_value,p_value,alpha,reject,seed")?;
        writeln!(
            out,
            "{},{},{},{},{:.12e},{:.12e},{:.6e},{},{},{}",
            report.label,
            report.n,
            report.q,
            report.method.as_str(),
            report.statistic,
            report.critical_value,
            report.p_value,
            report.alpha,
            report.reject,
            report.seed
        )?;
        out.flush()?;
    }
    Ok(report.reject)
}

fn cmd_sample(cli: &Cli, args: &SampleArgs) -> Result<()> {
    let seed = cli.seed.unwrap_or(1);
    let mut rng = RandomStream::new(seed);
    let q = args.q;
    let mu = args.mu.clone().unwrap_or_else(|| north_pole(q));
    let theta = || {
        args.theta
            .map(f64::to_radians)
            .ok_or_else(|| Error::Config("--theta (degrees) is required for this process".into()))
    };
    let (sample, name) = match args.process {
        Process::Uniform => (sample_uniform_sphere(q, args.n, &mut rng)?, "uniform".to_string()),
        Process::Vmf | Process::Mixvmf | Process::Smallcircle => {
            let f = match args.process {
                Process::Vmf => AngularFunction::Vmf,
                Process::Mixvmf => AngularFunction::MixVmf,
                _ => AngularFunction::SmallCircle { nu: args.nu },
            };
            let spec = RotSymSpec::new(mu, args.kappa, f)?;
            (sample_rotsym(&spec, q, args.n, &mut rng)?, format!("{}(kappa={})", f.name(), args.kappa))
        }
        Process::Cap => {
            let spec = CapSpec::new(mu, theta()?)?;
            (sample_cap(&spec, q, args.n, &mut rng)?, format!("cap(theta={})", args.theta.unwrap_or_default()))
        }
        Process::Uad => (
            sample_uad(q, args.n, theta()?, &mut rng)?,
            format!("uad(theta={})", args.theta.unwrap_or_default()),
        ),
    };
    let mut out = output(&cli.out)?;
    sample.write_csv(&mut out, seed, &name)?;
    out.flush()?;
    Ok(())
}

fn experiment_config(cli: &Cli, kind: ExperimentKind) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::parse(&std::fs::read_to_string(path)?)?,
        None => ExperimentConfig::defaults(kind),
    };
    if cfg.experiment != kind {
        return Err(Error::Config(format!(
            "config is for '{}', not '{}'",
            cfg.experiment.as_str(),
            kind.as_str()
        )));
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.out.is_some() {
        cfg.output = cli.out.clone();
    }
    Ok(cfg)
}

fn cmd_experiment(cli: &Cli, kind: ExperimentKind) -> Result<()> {
    let cfg = experiment_config(cli, kind)?;
    let mut out = output(&cfg.output)?;
    match kind {
        ExperimentKind::LocalPower => harness::write_rate_csv(&harness::run_power(&cfg)?, &mut out)?,
        ExperimentKind::UadTable => harness::write_rate_csv(&harness::run_uad_table(&cfg)?, &mut out)?,
        ExperimentKind::NullCalibration => harness::write_critval_csv(&harness::run_null_calibration(&cfg)?, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn cmd_critval(cli: &Cli, args: &CritvalArgs) -> Result<()> {
    let seed = cli.seed.unwrap_or(1);
    let n = match args.method {
        MethodArg::Asymptotic => None,
        MethodArg::Exact => Some(args.n.ok_or_else(|| Error::Config("--n is required for exact calibration".into()))?),
        MethodArg::Kfold => return Err(Error::Config("critval supports asymptotic and exact methods".into())),
    };
    let mut rows = Vec::new();
    let grid: &[f64] = if matches!(args.stat, StatKind::Stereo) { &args.a } else { &[0.0] };
    for &a in grid {
        let stat = statistic(args.stat, a, args.q, args.truncation)?;
        rows.extend(harness::critical_values(stat, n, args.m, &args.alpha, seed, Some(&args.cache))?);
    }
    let mut out = output(&cli.out)?;
    harness::write_critval_csv(&rows, &mut out)?;
    out.flush()?;
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot configure thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Test(args) => cmd_test(cli, args),
        Command::Sample(args) => cmd_sample(cli, args).map(|_| false),
        Command::Power => cmd_experiment(cli, ExperimentKind::LocalPower).map(|_| false),
        Command::UadTable => cmd_experiment(cli, ExperimentKind::UadTable).map(|_| false),
        Command::Critval(args) => {
            if let Some(path) = &cli.config {
                log::info!("critval ignores --config {}", path.display());
            }
            cmd_critval(cli, args).map(|_| false)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
