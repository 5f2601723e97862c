//! State estimation for power distribution networks from mixed-resolution
//! phasor measurements.
//!
//! The library reconstructs the complex bus-voltage vector of a distribution
//! feeder from a mix of full-precision PMU channels and coarsely quantized
//! (1-6 bit) meter channels. The estimator is a swept generalized approximate
//! message passing solver with expectation-maximization learning of the
//! complex-Gaussian state prior; an LMMSE baseline and a Monte Carlo
//! benchmarking harness are included.
//!
//! Modules:
//! - [`topology`]: network description, validation, and assembly of the
//!   complex topology matrix `H` from its incidence/admittance blocks.
//! - [`quantizer`]: the B-bit midrise quantizer and cell-boundary queries.
//! - [`truncated`]: numerically stable truncated-Gaussian moments.
//! - [`sim`]: ground-truth sampling, noisy measurement synthesis, and
//!   resolution profiles (which channels are coarsely quantized).
//! - [`gamp`]: the EMSwGAMP solver.
//! - [`baseline`]: LMMSE estimator and the three MSE metrics.
//! - [`report`]: scenario configs, Monte Carlo runs, and report emission.

pub mod baseline;
pub mod gamp;
pub mod quantizer;
pub mod report;
pub mod sim;
pub mod topology;
pub mod truncated;

pub use num_complex::Complex64;
