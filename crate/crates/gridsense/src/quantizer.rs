//! B-bit midrise quantizer and its componentwise complex extension.
//!
//! The real quantizer splits the line into `2^B` cells with boundaries
//! `r_b = (-2^(B-1) + b) * step` for `b = 1..2^B-1`; cell `b` is the
//! half-open interval `(r_{b-1}, r_b]` with the two end cells unbounded.
//! Interior cells emit their midpoint `r_b - step/2`; the end cells emit
//! `r_1 - step/2` and `r_{2^B-1} + step/2` so representative spacing stays
//! uniform. A complex value is quantized componentwise.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum QuantizerError {
    #[error("quantizer input must be finite, got {0}")]
    NonFiniteInput(f64),
    #[error("cell index {index} out of range 1..={cells}")]
    CellOutOfRange { index: usize, cells: usize },
    #[error("quantizer bits must be >= 1, got {0}")]
    BadBits(u32),
    #[error("quantizer step must be positive and finite, got {0}")]
    BadStep(f64),
}

/// A uniform midrise quantizer with `2^bits` cells of width `step`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantizerSpec {
    bits: u32,
    step: f64,
}

/// One quantized real component: the 1-based cell index and the emitted
/// representative value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantizedComponent {
    pub cell_index: usize,
    pub representative: f64,
}

/// Whether a channel is transmitted at full precision or through a quantizer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ResolutionTag {
    Full,
    Quantized(QuantizerSpec),
}

impl QuantizerSpec {
    pub fn new(bits: u32, step: f64) -> Result<Self, QuantizerError> {
        if bits == 0 || bits > 52 {
            return Err(QuantizerError::BadBits(bits));
        }
        if !(step.is_finite() && step > 0.0) {
            return Err(QuantizerError::BadStep(step));
        }
        Ok(QuantizerSpec { bits, step })
    }

    /// Quantizer covering `[-full_scale, full_scale]` with `2^bits` cells,
    /// i.e. `step = 2 * full_scale / 2^bits`.
    pub fn with_full_scale(bits: u32, full_scale: f64) -> Result<Self, QuantizerError> {
        if bits == 0 || bits > 52 {
            return Err(QuantizerError::BadBits(bits));
        }
        let step = 2.0 * full_scale / (1u64 << bits) as f64;
        QuantizerSpec::new(bits, step)
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn cell_count(&self) -> usize {
        1usize << self.bits
    }

    /// Boundary point `r_b` for `b` in `1..=2^bits - 1`.
    pub fn boundary(&self, b: usize) -> f64 {
        (b as f64 - (1u64 << (self.bits - 1)) as f64) * self.step
    }
}

/// The 1-based index of the cell containing `v`.
pub fn cell_index(v: f64, spec: &QuantizerSpec) -> Result<usize, QuantizerError> {
    if !v.is_finite() {
        return Err(QuantizerError::NonFiniteInput(v));
    }
    let cells = spec.cell_count();
    let half = (cells / 2) as f64;
    // v lies in (r_{b-1}, r_b] with r_b = (b - 2^(B-1)) * step, so
    // b - 2^(B-1) = ceil(v / step) off boundaries; the half-open convention
    // is exactly ceil.
    let b = (v / spec.step).ceil() + half;
    Ok(b.clamp(1.0, cells as f64) as usize)
}

/// The emitted value of cell `b`: interior midpoint, end cells extrapolated
/// half a step beyond the outermost boundary.
pub fn representative(b: usize, spec: &QuantizerSpec) -> Result<f64, QuantizerError> {
    let cells = spec.cell_count();
    if b == 0 || b > cells {
        return Err(QuantizerError::CellOutOfRange { index: b, cells });
    }
    if b == cells {
        Ok(spec.boundary(cells - 1) + spec.step / 2.0)
    } else {
        Ok(spec.boundary(b) - spec.step / 2.0)
    }
}

/// Quantize one real value: cell lookup plus representative.
pub fn quantize_real(v: f64, spec: &QuantizerSpec) -> Result<QuantizedComponent, QuantizerError> {
    let b = cell_index(v, spec)?;
    Ok(QuantizedComponent {
        cell_index: b,
        representative: representative(b, spec)?,
    })
}

/// Quantize a complex value componentwise; the emitted complex value is
/// `rep_re + j * rep_im`.
pub fn quantize_complex(
    y: Complex64,
    spec: &QuantizerSpec,
) -> Result<(QuantizedComponent, QuantizedComponent), QuantizerError> {
    Ok((quantize_real(y.re, spec)?, quantize_real(y.im, spec)?))
}

/// The half-open interval `(lower, upper]` of a cell; end cells extend to
/// plus or minus infinity.
pub fn cell_bounds(
    q: &QuantizedComponent,
    spec: &QuantizerSpec,
) -> Result<(f64, f64), QuantizerError> {
    let cells = spec.cell_count();
    let b = q.cell_index;
    if b == 0 || b > cells {
        return Err(QuantizerError::CellOutOfRange { index: b, cells });
    }
    let lower = if b == 1 {
        f64::NEG_INFINITY
    } else {
        spec.boundary(b - 1)
    };
    let upper = if b == cells {
        f64::INFINITY
    } else {
        spec.boundary(b)
    };
    Ok((lower, upper))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_bit_sign_split() {
        let spec = QuantizerSpec::new(1, 1.0).unwrap();
        assert_eq!(cell_index(-0.2, &spec).unwrap(), 1);
        assert_eq!(cell_index(0.0, &spec).unwrap(), 1); // 0 is in (-inf, 0]
        assert_eq!(cell_index(0.2, &spec).unwrap(), 2);
    }

    #[test]
    fn two_bit_boundaries() {
        let spec = QuantizerSpec::new(2, 1.0).unwrap();
        // boundaries -1, 0, 1
        assert_eq!(spec.boundary(1), -1.0);
        assert_eq!(spec.boundary(2), 0.0);
        assert_eq!(spec.boundary(3), 1.0);
        assert_eq!(cell_index(0.3, &spec).unwrap(), 3);
        assert_eq!(cell_index(0.0, &spec).unwrap(), 2); // 0 in (-1, 0]
        assert_eq!(cell_index(-3.5, &spec).unwrap(), 1);
        assert_eq!(cell_index(9.0, &spec).unwrap(), 4);
    }

    #[test]
    fn representatives_one_and_two_bit() {
        let spec = QuantizerSpec::new(1, 1.0).unwrap();
        assert_eq!(representative(1, &spec).unwrap(), -0.5);
        assert_eq!(representative(2, &spec).unwrap(), 0.5);

        let spec = QuantizerSpec::new(2, 1.0).unwrap();
        let reps: Vec<f64> = (1..=4).map(|b| representative(b, &spec).unwrap()).collect();
        assert_eq!(reps, vec![-1.5, -0.5, 0.5, 1.5]);
    }

    #[test]
    fn representative_out_of_range() {
        let spec = QuantizerSpec::new(2, 1.0).unwrap();
        assert!(matches!(
            representative(0, &spec),
            Err(QuantizerError::CellOutOfRange { .. })
        ));
        assert!(matches!(
            representative(5, &spec),
            Err(QuantizerError::CellOutOfRange { .. })
        ));
    }

    #[test]
    fn non_finite_rejected() {
        let spec = QuantizerSpec::new(3, 0.25).unwrap();
        assert!(matches!(
            cell_index(f64::NAN, &spec),
            Err(QuantizerError::NonFiniteInput(_))
        ));
        assert!(quantize_complex(Complex64::new(0.0, f64::INFINITY), &spec).is_err());
    }

    #[test]
    fn complex_quantization_is_componentwise() {
        let spec = QuantizerSpec::new(1, 1.0).unwrap();
        let (re, im) = quantize_complex(Complex64::new(0.3, -0.7), &spec).unwrap();
        assert_eq!(re.representative, 0.5);
        assert_eq!(im.representative, -0.5);
    }

    #[test]
    fn cell_bounds_examples() {
        let spec = QuantizerSpec::new(2, 1.0).unwrap();
        let q = quantize_real(0.5, &spec).unwrap();
        assert_eq!(q.representative, 0.5);
        assert_eq!(cell_bounds(&q, &spec).unwrap(), (0.0, 1.0));

        let spec = QuantizerSpec::new(1, 1.0).unwrap();
        let q = quantize_real(-0.4, &spec).unwrap();
        assert_eq!(q.representative, -0.5);
        let (lo, hi) = cell_bounds(&q, &spec).unwrap();
        assert_eq!(lo, f64::NEG_INFINITY);
        assert_eq!(hi, 0.0);
    }

    #[test]
    fn interior_cells_are_step_wide() {
        let spec = QuantizerSpec::new(3, 0.75).unwrap();
        for b in 2..spec.cell_count() {
            let q = QuantizedComponent {
                cell_index: b,
                representative: representative(b, &spec).unwrap(),
            };
            let (lo, hi) = cell_bounds(&q, &spec).unwrap();
            assert!((hi - lo - spec.step()).abs() < 1e-12);
        }
    }

    #[test]
    fn full_scale_constructor() {
        let spec = QuantizerSpec::with_full_scale(3, 4.0).unwrap();
        assert_eq!(spec.step(), 1.0);
        assert!(QuantizerSpec::with_full_scale(3, 0.0).is_err());
        assert!(QuantizerSpec::with_full_scale(0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn partition_and_consistency(v in -50.0f64..50.0, bits in 1u32..8, step in 0.01f64..4.0) {
            let spec = QuantizerSpec::new(bits, step).unwrap();
            let q = quantize_real(v, &spec).unwrap();
            let (lo, hi) = cell_bounds(&q, &spec).unwrap();
            prop_assert!(v > lo && v <= hi);
            if q.cell_index > 1 && q.cell_index < spec.cell_count() {
                prop_assert!((v - q.representative).abs() <= step / 2.0 + 1e-12);
            }
            // idempotence
            let q2 = quantize_real(q.representative, &spec).unwrap();
            prop_assert_eq!(q2.representative, q.representative);
        }

        #[test]
        fn monotone_cells(a in -50.0f64..50.0, b in -50.0f64..50.0, bits in 1u32..8, step in 0.01f64..4.0) {
            let spec = QuantizerSpec::new(bits, step).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(cell_index(lo, &spec).unwrap() <= cell_index(hi, &spec).unwrap());
        }
    }
}
