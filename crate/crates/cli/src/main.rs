use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use meanpoint::bounds::{bound_report, DEFAULT_C};
use meanpoint::central::PmwConfig;
use meanpoint::geometry::{
    chaining_decomposition, default_delta, gaussian_mean_width, packing_profile, PackingMode,
    ProfilePoint, DEFAULT_EXACT_CAP,
};
use meanpoint::harness::{
    atomic_write, bench_csv, bench_sweep, errors, gen_dataset, measure_error, universe_to_csv,
    MechanismSpec,
};
use meanpoint::local::{simulate_protocol, ProtocolKind, ProtocolSpec, MAX_DEFAULT_EPSILON};
use meanpoint::{MetricKind, Norm};

mod source;

/// Bad arguments or inputs; exits with status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// A projection did not reach its certificate; the output is still written.
#[derive(Debug)]
struct NonConvergence(String);

impl std::fmt::Display for NonConvergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NonConvergence {}

#[derive(Parser)]
#[command(name = "meanpoint", version, about = "Private mean point estimation over finite universes")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Master seed; every random choice derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Number of repetitions for error measurement.
    #[arg(long, global = true, default_value_t = 20)]
    trials: usize,
    /// Output file (written atomically); stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    L2,
    Linf,
}

impl MetricArg {
    fn metric(self) -> MetricKind {
        match self {
            Self::L2 => MetricKind::NormalizedL2,
            Self::Linf => MetricKind::LInf,
        }
    }

    fn norm(self) -> Norm {
        match self {
            Self::L2 => Norm::L2,
            Self::Linf => Norm::LInf,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mechanism {
    Projection,
    CoarseProjection,
    Chaining,
    Pmw,
    ChainingLinf,
    LocalProjection,
    LocalCoarseProjection,
    LocalChaining,
}

#[derive(Clone, Copy, ValueEnum)]
enum Protocol {
    Lpm,
    Lcpm,
    Lcm,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a universe as CSV.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
    /// Separation-number profile over a geometric scale grid.
    Pack {
        #[arg(long)]
        universe: String,
        #[arg(long, value_enum, default_value = "l2")]
        metric: MetricArg,
        /// Smallest scale of the grid.
        #[arg(long, default_value_t = 0.05)]
        t_min: f64,
        /// Use exact separation numbers (small universes only).
        #[arg(long)]
        exact: bool,
        #[arg(long, default_value_t = DEFAULT_EXACT_CAP)]
        exact_cap: usize,
    },
    /// Monte Carlo Gaussian mean width.
    Width {
        #[arg(long)]
        universe: String,
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
    },
    /// Export a chaining decomposition.
    Decompose {
        #[arg(long)]
        universe: String,
        #[arg(long)]
        alpha: f64,
        #[arg(long, value_enum, default_value = "l2")]
        norm: MetricArg,
        /// Radius with the universe inside delta times the unit ball.
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Run a mechanism repeatedly and report its error.
    Run(RunArgs),
    /// Simulate a local protocol once and optionally save its transcript.
    #[command(alias = "ldp")]
    Local {
        #[arg(long)]
        universe: String,
        #[arg(long, value_enum)]
        protocol: Protocol,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value = "iid")]
        dataset: String,
        /// Write the message transcript as NDJSON.
        #[arg(long)]
        transcript: Option<PathBuf>,
        /// Permit epsilon above the default range.
        #[arg(long)]
        allow_large_epsilon: bool,
    },
    /// Bound estimates and the packing profile behind them.
    Bounds {
        #[arg(long)]
        universe: String,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_C)]
        c: f64,
    },
    /// Error-versus-n sweep as CSV.
    Bench {
        #[arg(long)]
        universe: String,
        #[arg(long, value_enum, value_delimiter = ',', required = true)]
        mechanisms: Vec<Mechanism>,
        #[arg(long, value_delimiter = ',', required = true)]
        n_grid: Vec<usize>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value = "iid")]
        dataset: String,
    },
}

#[derive(Subcommand)]
enum GenKind {
    Thresholds {
        #[arg(long)]
        m: usize,
    },
    Marginals2 {
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = meanpoint::harness::DEFAULT_MARGINALS_CAP)]
        cap: usize,
    },
    Cone {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = meanpoint::harness::DEFAULT_CONE_DENSITY)]
        density: usize,
    },
    Sphere {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    universe: String,
    #[arg(long, value_enum)]
    mechanism: Mechanism,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// iid, point:INDEX or mixture:WEIGHT:I,J,...
    #[arg(long, default_value = "iid")]
    dataset: String,
    /// Skip the bound evaluations.
    #[arg(long)]
    no_bounds: bool,
}

fn need(v: Option<f64>, flag: &str, m: Mechanism) -> Result<f64> {
    let name = m.to_possible_value().map(|p| p.get_name().to_string()).unwrap_or_default();
    v.ok_or_else(|| ConfigError(format!("{name} needs --{flag}")).into())
}

fn mechanism_spec(m: Mechanism, rho: Option<f64>, epsilon: Option<f64>, alpha: Option<f64>) -> Result<MechanismSpec> {
    use Mechanism as M;
    Ok(match m {
        M::Projection => MechanismSpec::Projection { rho: need(rho, "rho", m)? },
        M::CoarseProjection => MechanismSpec::CoarseProjection {
            rho: need(rho, "rho", m)?,
            alpha: need(alpha, "alpha", m)?,
        },
        M::Chaining => MechanismSpec::Chaining {
            rho: need(rho, "rho", m)?,
            alpha: need(alpha, "alpha", m)?,
        },
        M::Pmw => MechanismSpec::Pmw {
            rho: need(rho, "rho", m)?,
            pmw: alpha.map(PmwConfig::with_alpha).unwrap_or_default(),
        },
        M::ChainingLinf => MechanismSpec::ChainingLinf {
            rho: need(rho, "rho", m)?,
            alpha: need(alpha, "alpha", m)?,
        },
        M::LocalProjection => MechanismSpec::LocalProjection { epsilon: need(epsilon, "epsilon", m)? },
        M::LocalCoarseProjection => MechanismSpec::LocalCoarseProjection {
            epsilon: need(epsilon, "epsilon", m)?,
            alpha: need(alpha, "alpha", m)?,
        },
        M::LocalChaining => MechanismSpec::LocalChaining {
            epsilon: need(epsilon, "epsilon", m)?,
            alpha: need(alpha, "alpha", m)?,
        },
    })
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => atomic_write(path, text.as_bytes()).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(stdout.flush()?)
        }
    }
}

fn pretty<T: serde::Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn profile_csv(profile: &[ProfilePoint]) -> String {
    let mut s = String::from("t,packing,log_packing\n");
    for p in profile {
        let _ = writeln!(s, "{},{},{}", p.t, p.packing, p.log_packing);
    }
    s
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Gen { kind } => {
            if g.format == Some(Format::Json) {
                bail!(ConfigError("gen writes CSV only".into()));
            }
            let spec = match kind {
                GenKind::Thresholds { m } => format!("thresholds:{m}"),
                GenKind::Marginals2 { d, cap } => {
                    let u = meanpoint::harness::gen_marginals2(d, cap)?;
                    return emit(&g.out, &universe_to_csv(&u)?);
                }
                GenKind::Cone { m, alpha, density } => format!("cone:{m}:{alpha}:{density}"),
                GenKind::Sphere { m, size, radius } => format!("sphere:{m}:{size}:{radius}"),
            };
            let u = source::load(&spec, g.seed)?;
            emit(&g.out, &universe_to_csv(&u)?)
        }
        Command::Pack { universe, metric, t_min, exact, exact_cap } => {
            let u = source::load(&universe, g.seed)?;
            let mode = if exact { PackingMode::Exact } else { PackingMode::Greedy };
            let profile = packing_profile(&u, metric.metric(), t_min, mode, exact_cap)?;
            match g.format.unwrap_or(Format::Json) {
                Format::Csv => emit(&g.out, &profile_csv(&profile)),
                Format::Json => emit(&g.out, &pretty(&serde_json::json!({
                    "mode": mode,
                    "points": u.len(),
                    "profile": profile,
                }))?),
            }
        }
        Command::Width { universe, samples } => {
            let u = source::load(&universe, g.seed)?;
            let w = gaussian_mean_width(&u, samples, g.seed)?;
            match g.format.unwrap_or(Format::Json) {
                Format::Csv => emit(&g.out, &format!("mean,std_error,samples\n{},{},{}\n", w.mean, w.std_error, w.samples)),
                Format::Json => emit(&g.out, &pretty(&w)?),
            }
        }
        Command::Decompose { universe, alpha, norm, delta } => {
            if g.format == Some(Format::Csv) {
                bail!(ConfigError("decompose writes JSON only".into()));
            }
            let u = source::load(&universe, g.seed)?;
            let n = norm.norm();
            let delta = delta.unwrap_or_else(|| default_delta(n, u.dim()).max(u.max_norm(n)));
            let dec = chaining_decomposition(&u, alpha, n, delta)?;
            let violations = dec.verify(&u);
            if !violations.is_empty() {
                bail!("decomposition failed verification: {violations:?}");
            }
            emit(&g.out, &pretty(&dec.export())?)
        }
        Command::Run(args) => {
            let u = source::load(&args.universe, g.seed)?;
            let spec = mechanism_spec(args.mechanism, args.rho, args.epsilon, args.alpha)?;
            if spec.is_local() && spec.budget_parameter() > MAX_DEFAULT_EPSILON {
                bail!(ConfigError(format!(
                    "epsilon above {MAX_DEFAULT_EPSILON} is only available through `local --allow-large-epsilon`"
                )));
            }
            let d = gen_dataset(&u, args.n, &source::dataset_mode(&args.dataset)?, g.seed)?;
            let report = measure_error(&d, &spec, g.trials, g.seed, !args.no_bounds)?;
            match g.format.unwrap_or(Format::Json) {
                Format::Csv => {
                    let mut s = String::from("trial,seed,err2,errinf,certified\n");
                    for (i, t) in report.trials.iter().enumerate() {
                        let _ = writeln!(s, "{i},{},{},{},{}", t.seed, t.err2, t.errinf, t.certified);
                    }
                    emit(&g.out, &s)?;
                }
                Format::Json => emit(&g.out, &pretty(&report)?)?,
            }
            if !report.failures.is_empty() {
                bail!("{} of {} trials failed: {}", report.failures.len(), g.trials, report.failures[0].error);
            }
            if report.uncertified > 0 {
                bail!(NonConvergence(format!("{} of {} trials ended with an uncertified projection", report.uncertified, g.trials)));
            }
            Ok(())
        }
        Command::Local { universe, protocol, epsilon, alpha, n, dataset, transcript, allow_large_epsilon } => {
            if g.format == Some(Format::Csv) {
                bail!(ConfigError("local writes JSON only".into()));
            }
            if epsilon > MAX_DEFAULT_EPSILON && allow_large_epsilon {
                eprintln!(
                    "warning: epsilon = {epsilon} exceeds {MAX_DEFAULT_EPSILON}; the release's privacy guarantee is only checked numerically in this range"
                );
            }
            let u = source::load(&universe, g.seed)?;
            let d = gen_dataset(&u, n, &source::dataset_mode(&dataset)?, g.seed)?;
            let kind = match protocol {
                Protocol::Lpm => ProtocolKind::Lpm,
                Protocol::Lcpm => ProtocolKind::Lcpm,
                Protocol::Lcm => ProtocolKind::Lcm,
            };
            let mut spec = ProtocolSpec::new(kind, epsilon, alpha);
            spec.allow_large_epsilon = allow_large_epsilon;
            let run = simulate_protocol(&u, d.indices(), &spec, g.seed)?;
            if let Some(path) = &transcript {
                let mut buf = Vec::new();
                run.transcript.write_ndjson(&mut buf)?;
                atomic_write(path, &buf).with_context(|| format!("writing {}", path.display()))?;
            }
            let (err2, errinf) = errors(&run.output.estimate, &d.mean());
            let certified = run.output.certified;
            emit(&g.out, &pretty(&serde_json::json!({
                "spec": spec,
                "n": n,
                "err2": err2,
                "errinf": errinf,
                "output": run.output,
            }))?)?;
            if !certified {
                bail!(NonConvergence("server projection ended uncertified".into()));
            }
            Ok(())
        }
        Command::Bounds { universe, alpha, rho, epsilon, c } => {
            if rho.is_none() && epsilon.is_none() {
                bail!(ConfigError("bounds needs --rho and/or --epsilon".into()));
            }
            let u = source::load(&universe, g.seed)?;
            let r = bound_report(&u, alpha, c, rho, epsilon)?;
            match g.format.unwrap_or(Format::Json) {
                Format::Csv => emit(&g.out, &profile_csv(&r.profile.grid)),
                Format::Json => emit(&g.out, &pretty(&r)?),
            }
        }
        Command::Bench { universe, mechanisms, n_grid, rho, epsilon, alpha, dataset } => {
            let u = source::load(&universe, g.seed)?;
            let specs = mechanisms
                .iter()
                .map(|&m| mechanism_spec(m, rho, epsilon, alpha))
                .collect::<Result<Vec<_>>>()?;
            if specs.iter().any(|s| s.is_local() && s.budget_parameter() > MAX_DEFAULT_EPSILON) {
                bail!(ConfigError(format!("bench supports epsilon up to {MAX_DEFAULT_EPSILON}")));
            }
            let mode = source::dataset_mode(&dataset)?;
            let rows = bench_sweep(&universe, &u, &specs, &n_grid, &mode, g.trials, g.seed)?;
            match g.format.unwrap_or(Format::Csv) {
                Format::Csv => emit(&g.out, &bench_csv(&rows)?),
                Format::Json => emit(&g.out, &pretty(&rows)?),
            }
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.is::<NonConvergence>()) {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.global.trials == 0 {
        eprintln!("error: --trials must be at least 1");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
