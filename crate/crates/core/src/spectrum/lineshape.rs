use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Lineshape {
    #[default]
    Lorentzian,
    Gaussian,
}

impl Lineshape {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Lorentzian => "lorentzian",
            Self::Gaussian => "gaussian",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lorentzian" => Ok(Self::Lorentzian),
            "gaussian" => Ok(Self::Gaussian),
            other => Err(Error::invalid(format!("unknown lineshape '{other}'"))),
        }
    }

    /// Unit-area kernel with full width at half maximum `fwhm`, at offset `x`.
    pub fn eval<T: Real>(&self, x: T, fwhm: T) -> T {
        match self {
            Self::Lorentzian => {
                let g = fwhm * T::lit(0.5);
                g / (T::pi() * (x * x + g * g))
            }
            Self::Gaussian => {
                let sigma = fwhm / T::lit(2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
                let z = x / sigma;
                (-(z * z) * T::lit(0.5)).exp()
                    / (sigma * T::lit((2.0 * std::f64::consts::PI).sqrt()))
            }
        }
    }

    /// Kernel area inside ±`half_window` around the center.
    pub fn window_area<T: Real>(&self, half_window: T, fwhm: T) -> T {
        match self {
            Self::Lorentzian => T::lit(2.0) / T::pi() * (half_window * T::lit(2.0) / fwhm).atan(),
            Self::Gaussian => {
                let sigma = fwhm.as_f64() / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
                T::lit(statrs::function::erf::erf(
                    half_window.as_f64() / (sigma * std::f64::consts::SQRT_2),
                ))
            }
        }
    }
}

const CHUNK: usize = 2048;

/// Broadens weighted stick components onto `field`.
///
/// `positions[s]` is the resonance field of stick `s` and `amplitudes` holds
/// one row per stick; the result has one row per field point.
pub fn broaden<T: Real>(
    field: &[T],
    positions: &[T],
    amplitudes: &DMatrix<T>,
    shape: Lineshape,
    fwhm: T,
) -> Result<DMatrix<T>> {
    if !(fwhm > T::zero()) {
        return Err(Error::invalid("linewidth must be > 0"));
    }
    if positions.len() != amplitudes.nrows() {
        return Err(Error::invalid("stick positions and amplitudes disagree"));
    }
    let nc = amplitudes.ncols();
    let mut out = DMatrix::<T>::zeros(field.len(), nc);
    for start in (0..positions.len()).step_by(CHUNK) {
        let end = (start + CHUNK).min(positions.len());
        let k = DMatrix::<T>::from_fn(field.len(), end - start, |i, j| {
            shape.eval(field[i] - positions[start + j], fwhm)
        });
        out.gemm(T::one(), &k, &amplitudes.rows(start, end - start), T::one());
    }
    Ok(out)
}

/// Lines (field, amplitude) broadened onto `field`.
pub fn convolve_lines<T: Real>(
    field: &[T],
    lines: &[(T, T)],
    shape: Lineshape,
    fwhm: T,
) -> Result<Vec<T>> {
    let pos: Vec<T> = lines.iter().map(|l| l.0).collect();
    let amp = DMatrix::from_iterator(lines.len(), 1, lines.iter().map(|l| l.1));
    Ok(broaden(field, &pos, &amp, shape, fwhm)?
        .column(0)
        .iter()
        .copied()
        .collect())
}
