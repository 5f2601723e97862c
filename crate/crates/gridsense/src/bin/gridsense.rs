//! Command-line harness: validate network files, run benchmark scenarios,
//! and sweep the quantized-channel ladder.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use gridsense::gamp::SolverOptions;
use gridsense::report::{
    emit_report, load_scenario, run_scenario, AggregateReport, Estimator, ProfileConfig,
    ReportFormat, RunConfig, CSV_HEADER,
};
use gridsense::topology::{network_from_json, topology_for};

#[derive(Parser)]
#[command(name = "gridsense", version, about = "Distribution-grid state estimation benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a network file and print its dimensions.
    Validate {
        /// Path to a network JSON file.
        network: PathBuf,
    },
    /// Run one scenario and emit a report.
    Run {
        /// Path to a scenario JSON file.
        scenario: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Re-run a scenario at each listed ladder point K, emitting one report
    /// section per K.
    Sweep {
        /// Path to a scenario JSON file (its profile supplies the bit width).
        scenario: PathBuf,
        /// Comma-separated ladder points, e.g. 2,4,17,19,23,27,34,42.
        #[arg(long, value_delimiter = ',', required = true)]
        k: Vec<usize>,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Estimators to run.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [EstimatorArg::Emswgamp, EstimatorArg::Lmmse])]
    estimators: Vec<EstimatorArg>,
    /// Report format.
    #[arg(long, value_enum, default_value_t = FormatArg::PrettyTable)]
    format: FormatArg,
    /// Write the report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Solver iteration cap.
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    /// Solver stopping threshold on the squared update norm.
    #[arg(long, default_value_t = 1e-8)]
    epsilon: f64,
    /// Learn the state prior by EM.
    #[arg(long, value_enum, default_value_t = Toggle::On)]
    em: Toggle,
    /// Damping weight in [0, 1] on the factor quantities (0 = off).
    #[arg(long, default_value_t = 0.0)]
    damping: f64,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum EstimatorArg {
    Emswgamp,
    Lmmse,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    PrettyTable,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Toggle {
    On,
    Off,
}

impl From<EstimatorArg> for Estimator {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Emswgamp => Estimator::Emswgamp,
            EstimatorArg::Lmmse => Estimator::Lmmse,
        }
    }
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
            FormatArg::PrettyTable => ReportFormat::PrettyTable,
        }
    }
}

fn solver_options(args: &CommonArgs) -> SolverOptions {
    SolverOptions {
        max_iterations: args.max_iter,
        epsilon: args.epsilon,
        em_enabled: args.em == Toggle::On,
        damping: args.damping,
        ..Default::default()
    }
}

fn init_thread_pool() {
    if let Ok(v) = std::env::var("GRIDSENSE_THREADS") {
        if let Ok(threads) = v.parse::<usize>() {
            if threads >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }
}

fn write_out(text: &str, output: &Option<PathBuf>) -> anyhow::Result<()> {
    match output {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("cannot write report to {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn render(reports: &[AggregateReport], format: ReportFormat) -> anyhow::Result<String> {
    let mut buf = Vec::new();
    match format {
        ReportFormat::Csv => {
            // one shared header across report sections
            use std::io::Write;
            writeln!(buf, "{CSV_HEADER}")?;
            for r in reports {
                let mut section = Vec::new();
                emit_report(r, ReportFormat::Csv, &mut section)?;
                let text = String::from_utf8(section)?;
                for line in text.lines().skip(1) {
                    writeln!(buf, "{line}")?;
                }
            }
        }
        _ => {
            for r in reports {
                emit_report(r, format, &mut buf)?;
            }
        }
    }
    Ok(String::from_utf8(buf)?)
}

fn any_diverged(reports: &[AggregateReport]) -> bool {
    reports
        .iter()
        .flat_map(|r| &r.estimators)
        .any(|e| e.diverged_trials > 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_thread_pool();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Validate { network } => {
            let text = std::fs::read_to_string(&network)
                .with_context(|| format!("cannot read {}", network.display()))?;
            let net = network_from_json(&text)?;
            let topo = topology_for(&net)?;
            println!(
                "ok: {} buses, {} lines, {} voltage + {} current channels ({} phase), H is {} x {}",
                net.n(),
                net.model().lines.len(),
                net.l(),
                net.m(),
                if net.phases() == 3 { "three" } else { "single" },
                topo.rows(),
                topo.state_dim(),
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { scenario, common } => {
            let mut sc = load_scenario(&scenario)?;
            if let Some(seed) = common.seed {
                sc.seed = seed;
            }
            let config = RunConfig {
                scenario: sc,
                estimators: common.estimators.iter().map(|&e| e.into()).collect(),
                solver: solver_options(&common),
            };
            let report = run_scenario(&config)?;
            let reports = [report];
            write_out(&render(&reports, common.format.into())?, &common.output)?;
            Ok(if any_diverged(&reports) {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Sweep {
            scenario,
            k,
            common,
        } => {
            let mut sc = load_scenario(&scenario)?;
            if let Some(seed) = common.seed {
                sc.seed = seed;
            }
            let bits = sc
                .profile
                .bits()
                .ok_or_else(|| anyhow::anyhow!("sweep needs a quantized profile to supply the bit width"))?;
            let full_scale = match &sc.profile {
                ProfileConfig::KLadder { full_scale, .. }
                | ProfileConfig::Explicit { full_scale, .. } => *full_scale,
                ProfileConfig::Full => Default::default(),
            };
            let estimators: Vec<Estimator> =
                common.estimators.iter().map(|&e| e.into()).collect();
            let solver = solver_options(&common);
            let mut reports = Vec::new();
            for &point in &k {
                let mut sc_k = sc.clone();
                sc_k.profile = ProfileConfig::KLadder {
                    k: point,
                    bits,
                    full_scale,
                };
                reports.push(run_scenario(&RunConfig {
                    scenario: sc_k,
                    estimators: estimators.clone(),
                    solver,
                })?);
            }
            write_out(&render(&reports, common.format.into())?, &common.output)?;
            Ok(if any_diverged(&reports) {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            })
        }
    }
}
