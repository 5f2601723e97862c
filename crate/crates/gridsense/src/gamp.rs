//! Swept generalized approximate message passing with EM prior learning.
//!
//! The solver estimates the complex state `x` from `y = Q(Hx + e)` where a
//! subset of channels passes through a coarse componentwise quantizer. Each
//! iteration runs a factor update (per-channel pseudo-prior `(omega, rho)`
//! and channel-posterior messages `(s_hat, zeta)`), then a sequential sweep
//! over variables in a freshly drawn random order; factors incident to a
//! variable are refreshed immediately so later variables in the same sweep
//! see the updated quantities. Optionally the complex-Gaussian prior
//! `(nu_x, sigma_x^2)` is re-learned by expectation-maximization after each
//! sweep.

use nalgebra::DMatrix;
use nalgebra::DVector;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::sim::{Channel, MeasurementSet};
use crate::truncated::trunc_std_normal_moments;

#[derive(Debug, Error)]
pub enum GampError {
    #[error("H is {rows} x {cols} but there are {channels} channels")]
    DimensionMismatch {
        rows: usize,
        cols: usize,
        channels: usize,
    },
    #[error("solver produced a non-finite quantity at iteration {iteration}")]
    NumericBlowup { iteration: usize },
    #[error("invalid solver options: {0}")]
    BadOptions(String),
}

/// Complex-Gaussian prior on every state entry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hyperparams {
    pub prior_mean: Complex64,
    pub prior_variance: f64,
}

impl Default for Hyperparams {
    /// Matches the solver's unit initialization of the state estimate.
    fn default() -> Self {
        Hyperparams {
            prior_mean: Complex64::new(1.0, 0.0),
            prior_variance: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Stop once the squared update norm drops below this.
    pub epsilon: f64,
    pub em_enabled: bool,
    /// Convex-combination weight on the previous iteration's `(omega, rho)`;
    /// 0 disables damping.
    pub damping: f64,
    /// Seed for the per-iteration sweep permutation.
    pub seed: u64,
    /// Test-only: sweep variables in index order instead of a random
    /// permutation.
    pub fixed_order: bool,
    /// Test-only: skip the in-sweep factor refresh, making the variable
    /// update fully parallel (plain GAMP).
    pub parallel_mode: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iterations: 500,
            epsilon: 1e-8,
            em_enabled: true,
            damping: 0.0,
            seed: 0,
            fixed_order: false,
            parallel_mode: false,
        }
    }
}

/// All per-variable and per-factor working quantities of one solver instance.
#[derive(Clone, Debug)]
pub struct SolverState {
    pub x_hat: DVector<Complex64>,
    pub tau: DVector<f64>,
    pub r: DVector<Complex64>,
    pub sigma2_i: DVector<f64>,
    pub omega: DVector<Complex64>,
    pub rho: DVector<f64>,
    pub z_hat: DVector<Complex64>,
    pub varsigma: DVector<f64>,
    pub s_hat: DVector<Complex64>,
    pub zeta: DVector<f64>,
    pub iteration: usize,
    pub hyperparams: Hyperparams,
    /// Number of times a nonpositive precision or variance had to be floored.
    pub precision_floor_events: usize,
}

/// Solver output: posterior means/variances plus run diagnostics.
#[derive(Clone, Debug)]
pub struct Estimate {
    pub x_hat: DVector<Complex64>,
    pub tau: DVector<f64>,
    pub hyperparams: Hyperparams,
    pub iterations: usize,
    pub final_delta: f64,
    pub delta_trace: Vec<f64>,
    pub converged: bool,
    pub precision_floor_events: usize,
}

/// Relative floor applied when a precision denominator goes nonpositive.
const PRECISION_FLOOR_REL: f64 = 1e-12;

pub fn init_state(
    measurements: &MeasurementSet,
    h: &DMatrix<Complex64>,
    hyperparams: Hyperparams,
) -> Result<SolverState, GampError> {
    let (p, n) = h.shape();
    if measurements.len() != p {
        return Err(GampError::DimensionMismatch {
            rows: p,
            cols: n,
            channels: measurements.len(),
        });
    }
    let y = measurements.observed_vector();
    Ok(SolverState {
        x_hat: DVector::from_element(n, Complex64::new(1.0, 0.0)),
        tau: DVector::from_element(n, 1.0),
        r: DVector::from_element(n, Complex64::default()),
        sigma2_i: DVector::from_element(n, 1.0),
        omega: y,
        rho: DVector::from_element(p, 1.0),
        z_hat: DVector::from_element(p, Complex64::default()),
        varsigma: DVector::from_element(p, 0.0),
        s_hat: DVector::from_element(p, Complex64::default()),
        zeta: DVector::from_element(p, 0.0),
        iteration: 1,
        hyperparams,
        precision_floor_events: 0,
    })
}

/// Posterior mean and variance of the noise-free channel value `z` given an
/// exactly observed `y_tilde`, with pseudo-prior `CN(omega, rho)` and noise
/// variance `sigma2`.
pub fn posterior_z_unquantized(
    omega: Complex64,
    rho: f64,
    y_tilde: Complex64,
    sigma2: f64,
) -> (Complex64, f64) {
    let gain = rho / (rho + sigma2);
    let z_hat = omega + gain * (y_tilde - omega);
    let varsigma = rho * sigma2 / (rho + sigma2);
    (z_hat, varsigma)
}

/// Posterior mean and variance of `z` given that the noisy observation fell
/// in a quantizer cell, with pseudo-prior `CN(omega, rho)`.
///
/// The noisy observation `y = z + e` is `CN(omega, rho + sigma2)`, which
/// splits into two independent real normals of variance `(rho + sigma2)/2`;
/// conditioning each component on its cell gives a truncated normal. With
/// `g = rho/(rho + sigma2)` the per-component posterior is
/// `E[z_c] = omega_c + g * (E[y_c | cell] - omega_c)` and
/// `Var[z_c] = rho*sigma2 / (2*(rho + sigma2)) + g^2 * Var[y_c | cell]`,
/// by the law of total variance over the truncated `y_c`. An unbounded cell
/// reduces to `(omega, rho)` since the truncated moments revert to `(0, 1)`.
pub fn posterior_z_quantized(
    omega: Complex64,
    rho: f64,
    re_bounds: (f64, f64),
    im_bounds: (f64, f64),
    sigma2: f64,
) -> (Complex64, f64) {
    let v = (rho + sigma2) / 2.0;
    let sd = v.sqrt();
    let gain = rho / (rho + sigma2);
    let cond_var = rho * sigma2 / (2.0 * (rho + sigma2));

    let component = |center: f64, (lo, hi): (f64, f64)| -> (f64, f64) {
        let a = (lo - center) / sd;
        let b = (hi - center) / sd;
        let (m, var) = trunc_std_normal_moments(a, b);
        (center + gain * sd * m, cond_var + gain * gain * v * var)
    };

    let (z_re, var_re) = component(omega.re, re_bounds);
    let (z_im, var_im) = component(omega.im, im_bounds);
    (Complex64::new(z_re, z_im), var_re + var_im)
}

fn channel_posterior(
    channel: &Channel,
    omega: Complex64,
    rho: f64,
    sigma2: f64,
) -> (Complex64, f64) {
    match channel {
        Channel::Full { value } => posterior_z_unquantized(omega, rho, *value, sigma2),
        Channel::Quantized {
            re_bounds,
            im_bounds,
            ..
        } => posterior_z_quantized(omega, rho, *re_bounds, *im_bounds, sigma2),
    }
}

/// Posterior mean and variance of a state entry given the extrinsic Gaussian
/// message `CN(r, sigma2_i)` and the prior.
pub fn posterior_x(r: Complex64, sigma2_i: f64, hp: &Hyperparams) -> (Complex64, f64) {
    if !hp.prior_variance.is_finite() {
        return (r, sigma2_i);
    }
    let gain = sigma2_i / (sigma2_i + hp.prior_variance);
    let x_hat = r + gain * (hp.prior_mean - r);
    let tau = sigma2_i * hp.prior_variance / (sigma2_i + hp.prior_variance);
    (x_hat, tau)
}

/// Per-factor phase of one iteration: recompute `(rho, omega)` from the
/// current variable marginals (with the Onsager correction carried by the
/// previous measurement message), then the channel posterior and the
/// measurement messages `(s_hat, zeta)`.
pub fn factor_update(
    state: &mut SolverState,
    h: &DMatrix<Complex64>,
    measurements: &MeasurementSet,
    sigma2: f64,
    damping: f64,
) {
    let p = h.nrows();
    for mu in 0..p {
        let row = h.row(mu);
        let mut rho_new = 0.0;
        let mut hx = Complex64::default();
        for (i, hmi) in row.iter().enumerate() {
            rho_new += hmi.norm_sqr() * state.tau[i];
            hx += hmi * state.x_hat[i];
        }
        let mut omega_new = hx - state.s_hat[mu] * rho_new;
        if damping > 0.0 {
            rho_new = (1.0 - damping) * rho_new + damping * state.rho[mu];
            omega_new = (1.0 - damping) * omega_new + damping * state.omega[mu];
        }
        state.rho[mu] = rho_new;
        state.omega[mu] = omega_new;

        let (z_hat, varsigma) =
            channel_posterior(&measurements.channels[mu], omega_new, rho_new, sigma2);
        state.z_hat[mu] = z_hat;
        state.varsigma[mu] = varsigma;
        state.s_hat[mu] = (z_hat - omega_new) / rho_new;
        state.zeta[mu] = (1.0 - varsigma / rho_new) / rho_new;
    }
}

/// Per-variable phase of one iteration, swept in the given order. After each
/// variable's update, every incident factor has `(rho, omega)` corrected
/// incrementally and its measurement message recomputed, so subsequent
/// variables in the same sweep work with up-to-date factors.
pub fn variable_sweep(
    state: &mut SolverState,
    h: &DMatrix<Complex64>,
    measurements: &MeasurementSet,
    sigma2: f64,
    order: &[usize],
    parallel_mode: bool,
) {
    for &i in order {
        let col = h.column(i);
        let mut denom = 0.0;
        let mut scale = 0.0;
        let mut hs = Complex64::default();
        for (mu, hmi) in col.iter().enumerate() {
            let w = hmi.norm_sqr();
            denom += w * state.zeta[mu];
            scale += w;
            hs += hmi.conj() * state.s_hat[mu];
        }
        let floor = PRECISION_FLOOR_REL * scale.max(f64::MIN_POSITIVE);
        if denom < floor {
            denom = floor;
            state.precision_floor_events += 1;
        }
        let sigma2_i = 1.0 / denom;
        let r = state.x_hat[i] + sigma2_i * hs;
        state.r[i] = r;
        state.sigma2_i[i] = sigma2_i;

        let (x_new, tau_new) = posterior_x(r, sigma2_i, &state.hyperparams);
        let dx = x_new - state.x_hat[i];
        let dtau = tau_new - state.tau[i];
        state.x_hat[i] = x_new;
        state.tau[i] = tau_new;

        if parallel_mode {
            continue;
        }
        for (mu, hmi) in col.iter().enumerate() {
            if hmi.norm_sqr() == 0.0 {
                continue;
            }
            let rho_breve = state.rho[mu];
            let mut rho_new = rho_breve + hmi.norm_sqr() * dtau;
            if rho_new <= 0.0 {
                rho_new = PRECISION_FLOOR_REL * rho_breve.max(f64::MIN_POSITIVE);
                state.precision_floor_events += 1;
            }
            let omega_new = state.omega[mu] + hmi * dx - state.s_hat[mu] * (rho_new - rho_breve);
            state.rho[mu] = rho_new;
            state.omega[mu] = omega_new;

            let (z_hat, varsigma) =
                channel_posterior(&measurements.channels[mu], omega_new, rho_new, sigma2);
            state.z_hat[mu] = z_hat;
            state.varsigma[mu] = varsigma;
            state.s_hat[mu] = (z_hat - omega_new) / rho_new;
            state.zeta[mu] = (1.0 - varsigma / rho_new) / rho_new;
        }
    }
}

/// EM refresh of the prior from the extrinsic quantities of the last sweep:
/// `nu_x = mean(R_i)`, `sigma_x^2 = mean(|nu_x - R_i|^2 + Sigma_i^2)`.
pub fn em_update(state: &SolverState) -> Hyperparams {
    let n = state.r.len() as f64;
    let nu: Complex64 = state.r.iter().sum::<Complex64>() / n;
    let var: f64 = state
        .r
        .iter()
        .zip(state.sigma2_i.iter())
        .map(|(r, s2)| (nu - r).norm_sqr() + s2)
        .sum::<f64>()
        / n;
    Hyperparams {
        prior_mean: nu,
        prior_variance: var.max(f64::MIN_POSITIVE),
    }
}

fn all_finite(state: &SolverState) -> bool {
    state.x_hat.iter().all(|v| v.re.is_finite() && v.im.is_finite())
        && state.tau.iter().all(|v| v.is_finite())
        && state.omega.iter().all(|v| v.re.is_finite() && v.im.is_finite())
        && state.rho.iter().all(|v| v.is_finite())
        && state.s_hat.iter().all(|v| v.re.is_finite() && v.im.is_finite())
        && state.zeta.iter().all(|v| v.is_finite())
}

/// Run the full solver: iterate factor update, swept variable update, and
/// (optionally) the EM prior refresh until the squared update norm drops
/// below `epsilon` or the iteration cap is hit.
pub fn run(
    measurements: &MeasurementSet,
    h: &DMatrix<Complex64>,
    sigma2: f64,
    options: &SolverOptions,
    initial: Hyperparams,
) -> Result<Estimate, GampError> {
    if options.epsilon <= 0.0 {
        return Err(GampError::BadOptions(format!(
            "epsilon must be positive, got {}",
            options.epsilon
        )));
    }
    if !(0.0..=1.0).contains(&options.damping) {
        return Err(GampError::BadOptions(format!(
            "damping must lie in [0, 1], got {}",
            options.damping
        )));
    }
    let mut state = init_state(measurements, h, initial)?;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let n = h.ncols();
    let mut order: Vec<usize> = (0..n).collect();
    let mut delta_trace = Vec::new();
    let mut converged = false;

    while state.iteration <= options.max_iterations {
        let x_prev = state.x_hat.clone();
        factor_update(&mut state, h, measurements, sigma2, options.damping);
        if !options.fixed_order {
            order.shuffle(&mut rng);
        }
        variable_sweep(
            &mut state,
            h,
            measurements,
            sigma2,
            &order,
            options.parallel_mode,
        );
        if options.em_enabled {
            state.hyperparams = em_update(&state);
        }
        let delta: f64 = state
            .x_hat
            .iter()
            .zip(x_prev.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        if !delta.is_finite() || !all_finite(&state) {
            return Err(GampError::NumericBlowup {
                iteration: state.iteration,
            });
        }
        delta_trace.push(delta);
        if delta < options.epsilon {
            converged = true;
            break;
        }
        state.iteration += 1;
    }

    let iterations = delta_trace.len();
    Ok(Estimate {
        x_hat: state.x_hat,
        tau: state.tau,
        hyperparams: state.hyperparams,
        iterations,
        final_delta: delta_trace.last().copied().unwrap_or(f64::INFINITY),
        delta_trace,
        converged,
        precision_floor_events: state.precision_floor_events,
    })
}
