//! Ground-truth sampling, noisy measurement synthesis, and resolution
//! profiles.
//!
//! States are i.i.d. complex Gaussian draws from the configured prior;
//! measurements are `y = H x + e` with i.i.d. complex Gaussian noise. A
//! resolution profile tags each of the `P` channels as full precision or
//! B-bit quantized; quantized channels carry their cell representative and
//! the real/imaginary cell bounds needed by the quantized likelihood.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::quantizer::{
    cell_bounds, quantize_complex, QuantizerError, QuantizerSpec, ResolutionTag,
};
use crate::topology::ValidatedNetwork;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("dimension mismatch: H is {rows} x {cols}, state has {state} entries")]
    DimensionMismatch {
        rows: usize,
        cols: usize,
        state: usize,
    },
    #[error("resolution profile covers {profile} channels but there are {channels}")]
    ProfileGap { profile: usize, channels: usize },
    #[error("K = {0} is not expressible from the declared side-chain groups")]
    UnsupportedK(usize),
    #[error(transparent)]
    Quantizer(#[from] QuantizerError),
}

/// Complex-Gaussian bus voltage prior: `CN(nu_x, sigma_x^2)` with
/// `nu_x = magnitude_mean * exp(j * phase_mean)`.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct StatePrior {
    pub magnitude_mean: f64,
    pub phase_mean: f64,
    pub variance: f64,
}

impl StatePrior {
    pub fn complex_mean(&self) -> Complex64 {
        Complex64::from_polar(self.magnitude_mean, self.phase_mean)
    }
}

/// One complex Gaussian draw `CN(mean, variance)`: independent real and
/// imaginary parts with variance `variance / 2` each.
pub fn sample_complex_gaussian<R: Rng>(mean: Complex64, variance: f64, rng: &mut R) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    mean + Complex64::new(s * re, s * im)
}

/// Draw an i.i.d. state vector of length `n` from the prior.
pub fn sample_state<R: Rng>(prior: &StatePrior, n: usize, rng: &mut R) -> DVector<Complex64> {
    let mean = prior.complex_mean();
    DVector::from_fn(n, |_, _| sample_complex_gaussian(mean, prior.variance, rng))
}

/// `y = H x + e` with `e ~ CN(0, sigma^2)` componentwise.
pub fn simulate_measurements<R: Rng>(
    h: &DMatrix<Complex64>,
    x: &DVector<Complex64>,
    noise_variance: f64,
    rng: &mut R,
) -> Result<DVector<Complex64>, SimError> {
    if h.ncols() != x.len() {
        return Err(SimError::DimensionMismatch {
            rows: h.nrows(),
            cols: h.ncols(),
            state: x.len(),
        });
    }
    let mut y = h * x;
    if noise_variance > 0.0 {
        for v in y.iter_mut() {
            *v += sample_complex_gaussian(Complex64::default(), noise_variance, rng);
        }
    }
    Ok(y)
}

/// One observed channel: either the exact complex value or a quantized cell
/// (representative plus per-component bounds).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Channel {
    Full {
        value: Complex64,
    },
    Quantized {
        value: Complex64,
        re_bounds: (f64, f64),
        im_bounds: (f64, f64),
    },
}

impl Channel {
    /// The transmitted value: exact for full channels, the representative
    /// pair for quantized ones.
    pub fn observed(&self) -> Complex64 {
        match self {
            Channel::Full { value } | Channel::Quantized { value, .. } => *value,
        }
    }

    pub fn is_quantized(&self) -> bool {
        matches!(self, Channel::Quantized { .. })
    }
}

/// The per-channel observations handed to the estimators.
#[derive(Clone, Debug)]
pub struct MeasurementSet {
    pub channels: Vec<Channel>,
}

impl MeasurementSet {
    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    /// Observed values as a vector (what LMMSE consumes).
    pub fn observed_vector(&self) -> DVector<Complex64> {
        DVector::from_iterator(self.len(), self.channels.iter().map(|c| c.observed()))
    }
}

/// Push the raw measurement vector through a per-channel resolution profile.
pub fn apply_resolution_profile(
    y: &DVector<Complex64>,
    profile: &[ResolutionTag],
) -> Result<MeasurementSet, SimError> {
    if profile.len() != y.len() {
        return Err(SimError::ProfileGap {
            profile: profile.len(),
            channels: y.len(),
        });
    }
    let mut channels = Vec::with_capacity(y.len());
    for (value, tag) in y.iter().zip(profile) {
        channels.push(match tag {
            ResolutionTag::Full => Channel::Full { value: *value },
            ResolutionTag::Quantized(spec) => {
                let (re, im) = quantize_complex(*value, spec)?;
                Channel::Quantized {
                    value: Complex64::new(re.representative, im.representative),
                    re_bounds: cell_bounds(&re, spec)?,
                    im_bounds: cell_bounds(&im, spec)?,
                }
            }
        });
    }
    Ok(MeasurementSet { channels })
}

/// Second moment `E|z_mu|^2` of the noiseless channel `z = H x` under the
/// prior: `|nu_x * sum_i H_mu_i|^2 + sigma_x^2 * sum_i |H_mu_i|^2`.
pub fn channel_second_moment(h: &DMatrix<Complex64>, prior: &StatePrior, channel: usize) -> f64 {
    let row = h.row(channel);
    let mean: Complex64 = prior.complex_mean() * row.iter().sum::<Complex64>();
    let var: f64 = prior.variance * row.iter().map(|v| v.norm_sqr()).sum::<f64>();
    mean.norm_sqr() + var
}

/// Default per-channel full scale: four times the per-component standard
/// deviation of the noiseless channel, `F = 4 * sqrt(E|z_mu|^2 / 2)`.
pub fn auto_full_scale(h: &DMatrix<Complex64>, prior: &StatePrior, channel: usize) -> f64 {
    4.0 * (channel_second_moment(h, prior, channel) / 2.0).sqrt()
}

/// Build a full-length resolution profile quantizing exactly the listed
/// 0-based channels at `bits`; `full_scale = None` applies the per-channel
/// auto rule.
pub fn build_profile(
    h: &DMatrix<Complex64>,
    prior: &StatePrior,
    quantized_channels: &[usize],
    bits: u32,
    full_scale: Option<f64>,
) -> Result<Vec<ResolutionTag>, SimError> {
    let mut profile = vec![ResolutionTag::Full; h.nrows()];
    for &ch in quantized_channels {
        let f = full_scale.unwrap_or_else(|| auto_full_scale(h, prior, ch));
        profile[ch] = ResolutionTag::Quantized(QuantizerSpec::with_full_scale(bits, f)?);
    }
    Ok(profile)
}

/// The 0-based global channel indices (voltage channels first) selected for
/// quantization at ladder point `K`: side-chain meter groups are accumulated
/// in declared order until exactly `K` current channels are picked.
pub fn selection_for_k(net: &ValidatedNetwork, k: usize) -> Result<Vec<usize>, SimError> {
    let l = net.l();
    let mut selected = Vec::with_capacity(k);
    for group in &net.model().side_chains {
        if selected.len() == k {
            break;
        }
        if selected.len() + group.len() > k {
            return Err(SimError::UnsupportedK(k));
        }
        selected.extend(group.iter().map(|serial| l + serial - 1));
    }
    if selected.len() != k {
        return Err(SimError::UnsupportedK(k));
    }
    Ok(selected)
}
