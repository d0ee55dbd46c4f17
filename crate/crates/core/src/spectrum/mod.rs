//! Field-swept spectrum synthesis.
//!
//! Resonances are located per orientation on a dense field grid. Each stick
//! carries population-difference *components* so that a spectrum is
//! a fixed matrix times the polarization coefficient vector.

mod lineshape;
mod orientation;
mod resonance;
mod simulate;

pub use lineshape::{broaden, convolve_lines, Lineshape};
pub use orientation::{
    gauss_hermite, hemisphere_grid, rotate_points, AlignmentMode, OrientationPoint,
    OrientationScheme,
};
pub use resonance::{find_resonances, ResonanceSettings, ResonanceSystem, Stick, StickSet};
pub use simulate::{
    aligned_average, convolve_lineshape, powder_average, simulate_cw_doublet, simulate_triplet,
    stick_spectrum, ComponentSpectra, PopulationModel, Simulator, CW_TEMPERATURE_K,
};

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::scalar::{linspace, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSweepConfig<T: Real> {
    pub mw_frequency_ghz: T,
    pub field_start: T,
    pub field_stop: T,
    pub n_points: usize,
    pub lineshape: Lineshape,
    /// FWHM in mT.
    pub linewidth: T,
    /// Resonance-search grid spacing in mT.
    pub resonance_step: T,
    /// Minimum |dν/dB| in MHz/mT for a transition to be kept.
    pub slope_floor: T,
}

impl<T: Real> FieldSweepConfig<T> {
    pub fn new(field_start: T, field_stop: T, n_points: usize) -> Self {
        Self {
            mw_frequency_ghz: T::lit(9.5),
            field_start,
            field_stop,
            n_points,
            lineshape: Lineshape::Lorentzian,
            linewidth: T::lit(1.8),
            resonance_step: T::one(),
            slope_floor: T::lit(0.1),
        }
    }

    pub fn with_linewidth(mut self, shape: Lineshape, fwhm: T) -> Self {
        self.lineshape = shape;
        self.linewidth = fwhm;
        self
    }

    pub fn with_frequency(mut self, ghz: T) -> Self {
        self.mw_frequency_ghz = ghz;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.mw_frequency_ghz > T::zero()) {
            errs.push("mw frequency must be > 0".to_string());
        }
        if !(self.field_start >= T::zero()) {
            errs.push("field_start must be >= 0".to_string());
        }
        if !(self.field_stop > self.field_start) {
            errs.push("field_stop must exceed field_start".to_string());
        }
        if self.n_points < 2 {
            errs.push("n_points must be >= 2".to_string());
        }
        if !(self.linewidth > T::zero()) {
            errs.push("linewidth must be > 0".to_string());
        }
        if !(self.resonance_step > T::zero()) {
            errs.push("resonance step must be > 0".to_string());
        }
        if !(self.slope_floor >= T::zero()) {
            errs.push("slope floor must be >= 0".to_string());
        }
        match errs.len() {
            0 => Ok(()),
            1 => Err(Error::Invalid(errs.remove(0))),
            _ => Err(Error::Config(errs)),
        }
    }

    pub fn axis(&self) -> Vec<T> {
        linspace(self.field_start, self.field_stop, self.n_points)
    }
}

/// Signed field-swept spectrum; positive is absorptive.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<T: Real> {
    pub field: Vec<T>,
    pub intensity: Vec<T>,
    pub metadata: BTreeMap<String, String>,
}

impl<T: Real> Spectrum<T> {
    pub fn new(field: Vec<T>, intensity: Vec<T>) -> Result<Self> {
        if field.len() != intensity.len() {
            return Err(Error::invalid(format!(
                "field ({}) and intensity ({}) lengths differ",
                field.len(),
                intensity.len()
            )));
        }
        if field.iter().chain(&intensity).any(|v| !v.is_finite()) {
            return Err(Error::numerical("spectrum contains non-finite values"));
        }
        Ok(Self {
            field,
            intensity,
            metadata: BTreeMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.field.len()
    }

    pub fn is_empty(&self) -> bool {
        self.field.is_empty()
    }

    pub fn is_increasing(&self) -> bool {
        self.field.windows(2).all(|w| w[1] > w[0])
    }

    pub fn max_abs(&self) -> T {
        self.intensity.iter().fold(T::zero(), |a, v| a.max(v.abs()))
    }

    pub fn rms(&self) -> T {
        rms(&self.intensity)
    }

    /// Trapezoidal integral over the points inside [lo, hi].
    pub fn integral(&self, lo: T, hi: T) -> T {
        let mut acc = T::zero();
        for k in 1..self.len() {
            let (b0, b1) = (self.field[k - 1], self.field[k]);
            if b0 >= lo && b1 <= hi {
                acc += (b1 - b0) * (self.intensity[k] + self.intensity[k - 1]) * T::lit(0.5);
            }
        }
        acc
    }

    /// Width of the field interval holding the central `fraction` of ∫|I|.
    pub fn extent(&self, fraction: T) -> T {
        let tail = (T::one() - fraction) * T::lit(0.5);
        let mut cum = vec![T::zero(); self.len()];
        for k in 1..self.len() {
            cum[k] = cum[k - 1]
                + (self.field[k] - self.field[k - 1])
                    * (self.intensity[k].abs() + self.intensity[k - 1].abs())
                    * T::lit(0.5);
        }
        let total = *cum.last().unwrap_or(&T::zero());
        if total <= T::zero() {
            return T::zero();
        }
        let at = |q: T| -> T {
            let target = q * total;
            let k = cum
                .partition_point(|c| *c < target)
                .clamp(1, self.len() - 1);
            let (c0, c1) = (cum[k - 1], cum[k]);
            let t = if c1 > c0 {
                (target - c0) / (c1 - c0)
            } else {
                T::zero()
            };
            self.field[k - 1] + (self.field[k] - self.field[k - 1]) * t
        };
        at(T::one() - tail) - at(tail)
    }

    /// Numerical first derivative (central differences, one-sided at ends).
    pub fn derivative(&self) -> Spectrum<T> {
        let n = self.len();
        let d = (0..n)
            .map(|k| {
                let (a, b) = (k.saturating_sub(1), (k + 1).min(n - 1));
                if a == b {
                    T::zero()
                } else {
                    (self.intensity[b] - self.intensity[a]) / (self.field[b] - self.field[a])
                }
            })
            .collect();
        Spectrum {
            field: self.field.clone(),
            intensity: d,
            metadata: self.metadata.clone(),
        }
    }

    pub fn scaled(&self, s: T) -> Spectrum<T> {
        Spectrum {
            field: self.field.clone(),
            intensity: self.intensity.iter().map(|v| *v * s).collect(),
            metadata: self.metadata.clone(),
        }
    }

    /// Value at `b` by linear interpolation (zero outside the axis).
    pub fn interpolate(&self, b: T) -> T {
        if self.is_empty() || b < self.field[0] || b > self.field[self.len() - 1] {
            return T::zero();
        }
        let k = self
            .field
            .partition_point(|f| *f < b)
            .clamp(1, self.len() - 1);
        let (b0, b1) = (self.field[k - 1], self.field[k]);
        let t = (b - b0) / (b1 - b0);
        self.intensity[k - 1] + (self.intensity[k] - self.intensity[k - 1]) * t
    }
}

pub fn rms<T: Real>(v: &[T]) -> T {
    if v.is_empty() {
        return T::zero();
    }
    (v.iter().fold(T::zero(), |a, x| a + *x * *x) / T::from_usize_lossy(v.len())).sqrt()
}

#[cfg(test)]
mod tests;
