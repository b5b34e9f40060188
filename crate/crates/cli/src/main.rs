use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use anneal_bench::exact::DEFAULT_MAX_STATE_BITS;
use anneal_bench::speedup::{CensoredPairs, Statistic};
use anneal_bench::sqa;
use anneal_bench_cli::analysis::{self, AnalysisOptions, RunLog, SpeedupOptions, TaChoice};
use anneal_bench_cli::config::{EffortUnit, KernelName, SaConfig, SqaConfig};
use anneal_bench_cli::pipeline::{self, AnnealJob, Solver, SweepOptions};
use anneal_bench_cli::{report, BenchmarkConfig, CliError, Outcome};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "anneal-bench",
    version,
    about = "Time-to-solution benchmarks for Chimera spin glasses"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write instance files and the manifest.
    Generate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Append exact ground energies for instances that lack them.
    SolveExact {
        #[arg(long)]
        config: PathBuf,
    },
    /// Anneal a single instance file and append to a run log.
    Anneal(AnnealArgs),
    /// Run every configured (instance, solver, t_a, gauge) block; resumable.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Stop after this many new blocks.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Compute TTS or speedup tables from the run log.
    Analyze(AnalyzeArgs),
    /// Render figures with the Python report package.
    Report {
        #[arg(long)]
        python: Option<OsString>,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        args: Vec<OsString>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Sa,
    Sqa,
}

#[derive(clap::Args)]
struct AnnealArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum)]
    solver: SolverArg,
    /// Annealing times in sweeps.
    #[arg(long, value_delimiter = ',', required = true)]
    t_a: Vec<u32>,
    #[arg(long, default_value_t = 1024)]
    runs: usize,
    #[arg(long, default_value_t = 1)]
    gauges: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = KernelArg::Multispin)]
    kernel: KernelArg,
    #[arg(long, default_value_t = 0.1)]
    beta_init: f64,
    /// Defaults to 3r.
    #[arg(long)]
    beta_final: Option<f64>,
    #[arg(long, default_value_t = sqa::DEFAULT_SLICES)]
    slices: u32,
    #[arg(long, default_value_t = sqa::DEFAULT_BETA)]
    beta: f64,
    #[arg(long, default_value_t = sqa::DEFAULT_A_INIT)]
    a_init: f64,
    #[arg(long, default_value_t = sqa::DEFAULT_B_FINAL)]
    b_final: f64,
    #[arg(long, default_value_t = sqa::DEFAULT_EPSILON)]
    epsilon: f64,
    /// Ground-truth CSV; without it the instance is solved exactly first.
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MAX_STATE_BITS)]
    max_state_bits: usize,
    #[arg(long)]
    log: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Multispin,
    Scalar,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Tts,
    Speedup,
}

#[derive(Clone, Copy, ValueEnum)]
enum StatisticArg {
    Rofq,
    Qofr,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum UnitArg {
    Mcs,
    SpinUpdates,
    Seconds,
}

#[derive(clap::Args)]
struct AnalyzeArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    mode: Mode,
    /// Run log (default: from the config).
    #[arg(long)]
    runs: Option<PathBuf>,
    /// Output directory (default: `<output_dir>/analysis`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    quantiles: Option<Vec<f64>>,
    #[arg(long)]
    p_target: Option<f64>,
    #[arg(long)]
    r_max: Option<u64>,
    #[arg(long, value_enum)]
    effort: Option<UnitArg>,
    #[arg(long, default_value = "sa")]
    classical: String,
    #[arg(long, default_value = "sqa")]
    device: String,
    /// `opt` or a fixed annealing time.
    #[arg(long, default_value = "opt")]
    classical_t_a: String,
    #[arg(long, default_value = "opt")]
    device_t_a: String,
    #[arg(long, value_enum, default_value_t = StatisticArg::Both)]
    statistic: StatisticArg,
    /// `none`, `per-site:M` or `floor:M`.
    #[arg(long, default_value = "none")]
    normalization: String,
    /// Leave out pairs censored on one side instead of using 0+/inf.
    #[arg(long)]
    drop_censored: bool,
}

fn anneal_job(a: AnnealArgs) -> Result<AnnealJob, CliError> {
    let solver = match a.solver {
        SolverArg::Sa => Solver::Sa(SaConfig {
            t_a: a.t_a.clone(),
            beta_init: a.beta_init,
            beta_final: a.beta_final,
            kernel: match a.kernel {
                KernelArg::Multispin => KernelName::Multispin,
                KernelArg::Scalar => KernelName::Scalar,
            },
        }),
        SolverArg::Sqa => Solver::Sqa(SqaConfig {
            t_a: a.t_a.clone(),
            slices: a.slices,
            beta: a.beta,
            a_init: a.a_init,
            b_final: a.b_final,
            epsilon: a.epsilon,
        }),
    };
    if a.t_a.contains(&0) || a.runs == 0 || a.gauges == 0 {
        return Err(CliError::invalid("t_a, runs and gauges must be positive"));
    }
    match &solver {
        Solver::Sa(c) => c
            .schedule(1, 1)
            .validate()
            .map_err(|e| CliError::invalid(format!("sa: {e}")))?,
        Solver::Sqa(c) => c
            .schedule(1)
            .validate()
            .map_err(|e| CliError::invalid(format!("sqa: {e}")))?,
    }
    Ok(AnnealJob {
        instance: a.instance,
        solver,
        runs: a.runs,
        gauges: a.gauges,
        seed: a.seed,
        ground_truth: a.ground_truth,
        max_state_bits: a.max_state_bits,
        log: a.log,
    })
}

fn analyze(a: AnalyzeArgs) -> Result<Outcome, CliError> {
    let cfg = BenchmarkConfig::load(&a.config)?;
    let mut ac = cfg.analysis.clone();
    if let Some(q) = a.quantiles {
        ac.quantiles = q;
    }
    if let Some(p) = a.p_target {
        ac.p_target = p;
    }
    if let Some(r) = a.r_max {
        ac.r_max = r;
    }
    if let Some(u) = a.effort {
        ac.effort = match u {
            UnitArg::Mcs => EffortUnit::Mcs,
            UnitArg::SpinUpdates => EffortUnit::SpinUpdates,
            UnitArg::Seconds => EffortUnit::Seconds,
        };
    }
    ac.validate()?;
    let opts = AnalysisOptions::from(&ac);
    let log = RunLog::read(&a.runs.unwrap_or_else(|| cfg.runs_path()))?;
    let out = a.out.unwrap_or_else(|| cfg.analysis_dir());
    match a.mode {
        Mode::Tts => analysis::write_tts(&analysis::tts_tables(&log, &opts)?, &out)?,
        Mode::Speedup => {
            let mut s = SpeedupOptions::new(&a.classical, &a.device);
            s.classical_t_a = a.classical_t_a.parse::<TaChoice>()?;
            s.device_t_a = a.device_t_a.parse::<TaChoice>()?;
            s.statistics = match a.statistic {
                StatisticArg::Rofq => vec![Statistic::RatioOfQuantiles],
                StatisticArg::Qofr => vec![Statistic::QuantilesOfRatio],
                StatisticArg::Both => {
                    vec![Statistic::RatioOfQuantiles, Statistic::QuantilesOfRatio]
                }
            };
            s.normalization = analysis::parse_normalization(&a.normalization)?;
            if a.drop_censored {
                s.policy = CensoredPairs::Drop;
            }
            analysis::write_speedup(&analysis::speedup_tables(&log, &opts, &s)?, &out)?;
        }
    }
    Ok(Outcome::Complete)
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let outcome = match cli.command {
        Command::Generate { config } => {
            let cfg = BenchmarkConfig::load(&config)?;
            let m = pipeline::generate(&cfg)?;
            eprintln!("generate: {} instance(s)", m.len());
            Outcome::Complete
        }
        Command::SolveExact { config } => pipeline::solve_exact(&BenchmarkConfig::load(&config)?)?,
        Command::Anneal(a) => pipeline::anneal(&anneal_job(a)?)?,
        Command::Sweep {
            config,
            workers,
            limit,
        } => pipeline::sweep(
            &BenchmarkConfig::load(&config)?,
            SweepOptions { workers, limit },
        )?,
        Command::Analyze(a) => analyze(a)?,
        Command::Report { python, args } => {
            return report::report(&report::python_command(python), &args)
        }
    };
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let code = match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code.clamp(0, 255) as u8)
}
