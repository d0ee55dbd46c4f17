//! Physical constants (CODATA 2018) and unit conversions.
//!
//! Energies are carried in MHz, fields in mT, times in ps.

use crate::scalar::Real;

/// 1 cm⁻¹ expressed in MHz (exact, from the defined speed of light).
pub const MHZ_PER_CM1: f64 = 29_979.245_8;
/// Bohr magneton over Planck constant, MHz per mT.
pub const BOHR_MHZ_PER_MT: f64 = 13.996_244_936_1;
/// Bohr magneton, J/T.
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
/// Planck constant, J s (exact).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Boltzmann constant, J/K (exact).
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Vacuum permeability, N/A².
pub const MU0: f64 = 1.256_637_062_12e-6;
/// h/k_B in K per MHz.
pub const KELVIN_PER_MHZ: f64 = PLANCK * 1.0e6 / BOLTZMANN;

#[inline]
pub fn cm1_to_mhz<T: Real>(x: T) -> T {
    x * T::lit(MHZ_PER_CM1)
}

#[inline]
pub fn ghz_to_mhz<T: Real>(x: T) -> T {
    x * T::lit(1.0e3)
}

/// Resonance field (mT) of a free spin-1/2 with isotropic `g` at `freq_mhz`.
#[inline]
pub fn resonance_field_mt<T: Real>(freq_mhz: T, g: T) -> T {
    freq_mhz / (g * T::lit(BOHR_MHZ_PER_MT))
}

#[inline]
pub fn deg<T: Real>(x: T) -> T {
    x * T::pi() / T::lit(180.0)
}

#[inline]
pub fn to_deg<T: Real>(x: T) -> T {
    x * T::lit(180.0) / T::pi()
}
