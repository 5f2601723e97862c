//! Scenario configuration, Monte Carlo benchmark runs, and report emission.
//!
//! A scenario JSON names a network file, a state prior, the noise variance,
//! a resolution profile (which channels are coarsely quantized and at how
//! many bits), a trial count, and a seed. `run_scenario` executes the trials
//! across a worker pool — each trial owns an independent RNG stream derived
//! from the scenario seed — and aggregates the error metrics of the enabled
//! estimators together with the transmitted-bits accounting.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::{compute_metrics, lmmse_estimate};
use crate::gamp::{self, Hyperparams, SolverOptions};
use crate::quantizer::ResolutionTag;
use crate::sim::{
    apply_resolution_profile, build_profile, sample_state, selection_for_k,
    simulate_measurements, StatePrior,
};
use crate::topology::{network_from_json, topology_for, NetworkLoadError, ValidatedNetwork};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse scenario: {0}")]
    ConfigParse(#[from] serde_json::Error),
    #[error(transparent)]
    Network(#[from] NetworkLoadError),
    #[error(transparent)]
    Sim(#[from] crate::sim::SimError),
    #[error(transparent)]
    Solver(#[from] crate::gamp::GampError),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
}

/// Full-scale amplitude of a quantized channel: a fixed number or the
/// prior-derived automatic rule. Serialized as a number or the string
/// `"auto"`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum FullScale {
    #[default]
    Auto,
    Fixed(f64),
}

impl Serialize for FullScale {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            FullScale::Auto => s.serialize_str("auto"),
            FullScale::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for FullScale {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) if v > 0.0 && v.is_finite() => Ok(FullScale::Fixed(v)),
            Raw::Num(v) => Err(serde::de::Error::custom(format!(
                "full_scale must be positive and finite, got {v}"
            ))),
            Raw::Word(w) if w == "auto" => Ok(FullScale::Auto),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "full_scale must be a number or \"auto\", got {w:?}"
            ))),
        }
    }
}

/// Which channels are quantized, and how.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ProfileConfig {
    /// Every channel at full precision.
    Full,
    /// Quantize the first `k` current channels of the network's side-chain
    /// ladder.
    KLadder {
        k: usize,
        bits: u32,
        #[serde(default)]
        full_scale: FullScale,
    },
    /// Quantize an explicit list of 0-based channel indices.
    Explicit {
        channels: Vec<usize>,
        bits: u32,
        #[serde(default)]
        full_scale: FullScale,
    },
}

impl ProfileConfig {
    pub fn bits(&self) -> Option<u32> {
        match self {
            ProfileConfig::Full => None,
            ProfileConfig::KLadder { bits, .. } | ProfileConfig::Explicit { bits, .. } => {
                Some(*bits)
            }
        }
    }
}

/// One benchmark scenario as stored on disk.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scenario {
    pub network: PathBuf,
    pub prior: StatePrior,
    pub noise_variance: f64,
    pub profile: ProfileConfig,
    pub trials: usize,
    pub seed: u64,
}

pub fn scenario_from_json(text: &str) -> Result<Scenario, RunError> {
    let sc: Scenario = serde_json::from_str(text)?;
    if sc.trials == 0 {
        return Err(RunError::BadConfig("trials must be >= 1".into()));
    }
    if !(sc.noise_variance >= 0.0 && sc.noise_variance.is_finite()) {
        return Err(RunError::BadConfig(format!(
            "noise_variance must be finite and >= 0, got {}",
            sc.noise_variance
        )));
    }
    if sc.prior.variance <= 0.0 {
        return Err(RunError::BadConfig("prior variance must be positive".into()));
    }
    Ok(sc)
}

/// Load a scenario file, resolving the network path relative to the scenario
/// file's directory.
pub fn load_scenario(path: &Path) -> Result<Scenario, RunError> {
    let text = std::fs::read_to_string(path).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut sc = scenario_from_json(&text)?;
    if sc.network.is_relative() {
        if let Some(dir) = path.parent() {
            sc.network = dir.join(&sc.network);
        }
    }
    Ok(sc)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Emswgamp,
    Lmmse,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Emswgamp => "emswgamp",
            Estimator::Lmmse => "lmmse",
        }
    }
}

/// A scenario plus run-time choices made on the command line.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub estimators: Vec<Estimator>,
    pub solver: SolverOptions,
}

/// Transmitted-data accounting for one snapshot of all `P` channels.
///
/// `bits_total` follows the word convention (one B-bit word per quantized
/// measurement, one 16-bit word per full-precision measurement);
/// `component_bits` counts both real components, i.e. exactly twice that.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BitsAccounting {
    pub channels: usize,
    pub quantized_channels: usize,
    pub bits_total: u64,
    pub component_bits: u64,
    pub bits_saved_pct: f64,
}

pub fn bits_accounting(channels: usize, quantized: usize, bits: u32) -> BitsAccounting {
    let full = (channels - quantized) as u64 * 16;
    let coarse = quantized as u64 * bits as u64;
    let total = full + coarse;
    let baseline = channels as u64 * 16;
    BitsAccounting {
        channels,
        quantized_channels: quantized,
        bits_total: total,
        component_bits: 2 * total,
        bits_saved_pct: 100.0 * (1.0 - total as f64 / baseline as f64),
    }
}

/// Aggregated results for one estimator.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: Estimator,
    pub trials: usize,
    pub mse: f64,
    pub mse_magn: f64,
    pub mse_phase: f64,
    pub secs_per_trial: f64,
    pub nu_x_re: f64,
    pub nu_x_im: f64,
    pub sigma_x2: f64,
    pub diverged_trials: usize,
    pub converged_trials: usize,
    pub mean_iterations: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AggregateReport {
    pub trials: usize,
    pub seed: u64,
    pub noise_variance: f64,
    pub profile: ProfileConfig,
    /// Quantizer step of each quantized channel, keyed by channel index.
    pub channel_steps: Vec<(usize, f64)>,
    pub bits: BitsAccounting,
    pub estimators: Vec<EstimatorSummary>,
}

struct TrialOutcome {
    metrics: Option<crate::baseline::MetricsReport>,
    secs: f64,
    hyperparams: Option<Hyperparams>,
    converged: bool,
    iterations: usize,
}

fn resolve_quantized_channels(
    net: &ValidatedNetwork,
    channels_total: usize,
    profile: &ProfileConfig,
) -> Result<Vec<usize>, RunError> {
    match profile {
        ProfileConfig::Full => Ok(Vec::new()),
        ProfileConfig::KLadder { k, .. } => {
            if net.phases() != 1 {
                return Err(RunError::BadConfig(
                    "k_ladder profiles are defined for single-phase networks only".into(),
                ));
            }
            Ok(selection_for_k(net, *k)?)
        }
        ProfileConfig::Explicit { channels, .. } => {
            let mut seen = vec![false; channels_total];
            for &c in channels {
                if c >= channels_total {
                    return Err(RunError::BadConfig(format!(
                        "channel {c} out of range 0..{channels_total}"
                    )));
                }
                if std::mem::replace(&mut seen[c], true) {
                    return Err(RunError::BadConfig(format!("channel {c} listed twice")));
                }
            }
            Ok(channels.clone())
        }
    }
}

/// Execute every trial of the configured scenario and aggregate the results.
pub fn run_scenario(config: &RunConfig) -> Result<AggregateReport, RunError> {
    if config.estimators.is_empty() {
        return Err(RunError::BadConfig("no estimator enabled".into()));
    }
    let sc = &config.scenario;
    let net_text = std::fs::read_to_string(&sc.network).map_err(|source| RunError::Io {
        path: sc.network.clone(),
        source,
    })?;
    let net = network_from_json(&net_text)?;
    let topo = topology_for(&net).map_err(NetworkLoadError::from)?;
    let h = &topo.h;
    let channels_total = h.nrows();

    let quantized = resolve_quantized_channels(&net, channels_total, &sc.profile)?;
    let tags = match &sc.profile {
        ProfileConfig::Full => vec![ResolutionTag::Full; channels_total],
        ProfileConfig::KLadder {
            bits, full_scale, ..
        }
        | ProfileConfig::Explicit {
            bits, full_scale, ..
        } => {
            let f = match full_scale {
                FullScale::Auto => None,
                FullScale::Fixed(v) => Some(*v),
            };
            build_profile(h, &sc.prior, &quantized, *bits, f)?
        }
    };
    let channel_steps: Vec<(usize, f64)> = tags
        .iter()
        .enumerate()
        .filter_map(|(i, t)| match t {
            ResolutionTag::Quantized(spec) => Some((i, spec.step())),
            ResolutionTag::Full => None,
        })
        .collect();
    let bits = bits_accounting(
        channels_total,
        quantized.len(),
        sc.profile.bits().unwrap_or(16),
    );

    // With EM on, the solver starts from the generic unit prior and learns;
    // with EM off, the scenario prior is treated as known.
    let scenario_prior = Hyperparams {
        prior_mean: sc.prior.complex_mean(),
        prior_variance: sc.prior.variance,
    };
    let initial = if config.solver.em_enabled {
        Hyperparams::default()
    } else {
        scenario_prior
    };

    let trial_outcomes: Vec<Vec<TrialOutcome>> = (0..sc.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
            rng.set_stream(trial as u64 + 1);
            let x_true = sample_state(&sc.prior, h.ncols(), &mut rng);
            let y = simulate_measurements(h, &x_true, sc.noise_variance, &mut rng)
                .expect("dimensions fixed by construction");
            let set = apply_resolution_profile(&y, &tags).expect("profile covers all channels");

            config
                .estimators
                .iter()
                .map(|est| match est {
                    Estimator::Emswgamp => {
                        let opts = SolverOptions {
                            seed: sc.seed ^ (trial as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
                            ..config.solver
                        };
                        let start = Instant::now();
                        let result = gamp::run(&set, h, sc.noise_variance, &opts, initial);
                        let secs = start.elapsed().as_secs_f64();
                        match result {
                            Ok(est) => TrialOutcome {
                                metrics: compute_metrics(&x_true, &est.x_hat).ok(),
                                secs,
                                hyperparams: Some(est.hyperparams),
                                converged: est.converged,
                                iterations: est.iterations,
                            },
                            Err(_) => TrialOutcome {
                                metrics: None,
                                secs,
                                hyperparams: None,
                                converged: false,
                                iterations: 0,
                            },
                        }
                    }
                    Estimator::Lmmse => {
                        let observed = set.observed_vector();
                        let start = Instant::now();
                        let result = lmmse_estimate(h, &observed, sc.noise_variance);
                        let secs = start.elapsed().as_secs_f64();
                        match result {
                            Ok(x_hat) => TrialOutcome {
                                metrics: compute_metrics(&x_true, &x_hat).ok(),
                                secs,
                                hyperparams: None,
                                converged: true,
                                iterations: 0,
                            },
                            Err(_) => TrialOutcome {
                                metrics: None,
                                secs,
                                hyperparams: None,
                                converged: false,
                                iterations: 0,
                            },
                        }
                    }
                })
                .collect()
        })
        .collect();

    let estimators = config
        .estimators
        .iter()
        .enumerate()
        .map(|(idx, est)| {
            let outcomes: Vec<&TrialOutcome> =
                trial_outcomes.iter().map(|t| &t[idx]).collect();
            summarize(*est, &outcomes, sc.trials)
        })
        .collect();

    Ok(AggregateReport {
        trials: sc.trials,
        seed: sc.seed,
        noise_variance: sc.noise_variance,
        profile: sc.profile.clone(),
        channel_steps,
        bits,
        estimators,
    })
}

fn summarize(est: Estimator, outcomes: &[&TrialOutcome], trials: usize) -> EstimatorSummary {
    let ok: Vec<&crate::baseline::MetricsReport> =
        outcomes.iter().filter_map(|o| o.metrics.as_ref()).collect();
    let n_ok = ok.len().max(1) as f64;
    let mean = |f: fn(&crate::baseline::MetricsReport) -> f64| -> f64 {
        ok.iter().map(|m| f(m)).sum::<f64>() / n_ok
    };
    let hps: Vec<Hyperparams> = outcomes.iter().filter_map(|o| o.hyperparams).collect();
    let n_hp = hps.len().max(1) as f64;
    let nu: Complex64 = hps.iter().map(|h| h.prior_mean).sum::<Complex64>() / n_hp;
    let sigma_x2 = hps.iter().map(|h| h.prior_variance).sum::<f64>() / n_hp;
    EstimatorSummary {
        estimator: est,
        trials,
        mse: mean(|m| m.mse),
        mse_magn: mean(|m| m.mse_magnitude),
        mse_phase: mean(|m| m.mse_phase),
        secs_per_trial: outcomes.iter().map(|o| o.secs).sum::<f64>() / trials.max(1) as f64,
        nu_x_re: nu.re,
        nu_x_im: nu.im,
        sigma_x2,
        diverged_trials: outcomes.iter().filter(|o| o.metrics.is_none()).count(),
        converged_trials: outcomes.iter().filter(|o| o.converged).count(),
        mean_iterations: outcomes.iter().map(|o| o.iterations as f64).sum::<f64>()
            / trials.max(1) as f64,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Csv,
    Json,
    PrettyTable,
}

pub const CSV_HEADER: &str = "estimator, trials, mse, mse_magn, mse_phase, secs_per_trial, nu_x_re, nu_x_im, sigma_x2, bits_total, bits_saved_pct, seed";

/// Write the report in the chosen format.
pub fn emit_report<W: Write>(
    report: &AggregateReport,
    format: ReportFormat,
    out: &mut W,
) -> std::io::Result<()> {
    match format {
        ReportFormat::Csv => {
            writeln!(out, "{CSV_HEADER}")?;
            for e in &report.estimators {
                writeln!(
                    out,
                    "{}, {}, {:.6e}, {:.6e}, {:.6e}, {:.6e}, {:.9}, {:.9}, {:.6e}, {}, {:.2}, {}",
                    e.estimator.name(),
                    e.trials,
                    e.mse,
                    e.mse_magn,
                    e.mse_phase,
                    e.secs_per_trial,
                    e.nu_x_re,
                    e.nu_x_im,
                    e.sigma_x2,
                    report.bits.bits_total,
                    report.bits.bits_saved_pct,
                    report.seed,
                )?;
            }
            Ok(())
        }
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut *out, report)?;
            writeln!(out)
        }
        ReportFormat::PrettyTable => {
            writeln!(
                out,
                "{:<10} {:>7} {:>12} {:>12} {:>12} {:>10} {:>8}",
                "estimator", "trials", "mse", "mse_magn", "mse_phase", "secs", "conv"
            )?;
            for e in &report.estimators {
                writeln!(
                    out,
                    "{:<10} {:>7} {:>12.4e} {:>12.4e} {:>12.4e} {:>10.4} {:>7}%",
                    e.estimator.name(),
                    e.trials,
                    e.mse,
                    e.mse_magn,
                    e.mse_phase,
                    e.secs_per_trial,
                    (100.0 * e.converged_trials as f64 / e.trials.max(1) as f64).round(),
                )?;
            }
            writeln!(
                out,
                "bits: {} of {} ({}% saved), quantized channels: {}",
                report.bits.bits_total,
                report.bits.channels * 16,
                format_args!("{:.2}", report.bits.bits_saved_pct),
                report.bits.quantized_channels,
            )
        }
    }
}

/// Root-mean-square distance between two complex vectors; convenience used
/// by tests and the CLI.
pub fn rms_distance(a: &DVector<Complex64>, b: &DVector<Complex64>) -> f64 {
    (a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        / a.len().max(1) as f64)
        .sqrt()
}
