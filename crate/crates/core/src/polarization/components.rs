use nalgebra::Vector3;

use super::{angular_factors, OrientedOperators, QuartetFrame, TERM_POWER};
use crate::error::Result;
use crate::scalar::Real;
use crate::spin::{CMat, CVec, EigenSystem, InteractionTensor, SpinHamiltonian};
use crate::units::KELVIN_PER_MHZ;

use super::{
    thermal_populations, triplet_zero_field_states, NuclearPopulations, QuartetPolarizationParams,
};

/// Electron operators per nuclear sublevel: six (a, r) terms and the
/// trip-doublet term.
pub const N_ELECTRON_TERMS: usize = 7;

/// Level populations written as a linear combination of fixed components.
///
/// `components` returns, for each level of `eig` (ascending energy), the
/// component values `c_k(i)`; the population is `Σ_k coef_k · c_k(i)`.
pub trait LevelPopulations<T: Real>: Send + Sync {
    fn n_components(&self) -> usize;

    /// Component values of level `i`.
    fn level_components(&self, eig: &EigenSystem<T>, i: usize) -> Vec<T>;

    /// Row-major `[level][component]` values.
    fn components(&self, eig: &EigenSystem<T>) -> Vec<T> {
        (0..eig.len())
            .flat_map(|i| self.level_components(eig, i))
            .collect()
    }
}

/// Photo-quartet populations for one field direction.
///
/// Component `k * n_nuc + m` is `⟨v|O_k ⊗ |u_m⟩⟨u_m||v⟩`, where `O_k` is the
/// k-th electron term with its angular prefactor and `u_m` the m-th nuclear
/// sublevel.
pub struct QuartetComponents<T: Real> {
    ops: Vec<CMat<T>>,
    nuclear_states: Vec<CVec<T>>,
}

impl<T: Real> QuartetComponents<T> {
    pub fn new(h: &SpinHamiltonian<T>, dir: &Vector3<T>, frame: &QuartetFrame<T>) -> Result<Self> {
        let o = OrientedOperators::new(h, dir)?;
        let (theta, phi) = frame.angles(dir);
        let f = angular_factors(theta, phi);
        let id = CMat::<T>::identity(6, 6);
        let s1 = &o.quartet * &o.s_b;
        let s2 = &o.quartet * (&o.s_b * &o.s_b - id.scale(T::lit(1.25)));
        let s3 = &s1 * &o.s_b * &o.s_b;
        let mut ops: Vec<CMat<T>> = (0..6)
            .map(|k| {
                let q = match TERM_POWER[k] {
                    1 => &s1,
                    2 => &s2,
                    _ => &s3,
                };
                q.scale(f[k])
            })
            .collect();
        ops.push(&o.doublet * &o.s_b);
        Ok(Self {
            ops,
            nuclear_states: o.nuclear_states,
        })
    }

    pub fn n_nuclear(&self) -> usize {
        self.nuclear_states.len()
    }

    /// Component coefficients matching `components` ordering.
    pub fn coefficients(
        params: &QuartetPolarizationParams<T>,
        nuclear: &NuclearPopulations<T>,
        doublet_polarization: T,
    ) -> Vec<T> {
        let p = params.to_array();
        let mut out = Vec::with_capacity(N_ELECTRON_TERMS * nuclear.len());
        for c in p.into_iter().chain(std::iter::once(doublet_polarization)) {
            out.extend(nuclear.as_slice().iter().map(|&n| c * n));
        }
        out
    }
}

impl<T: Real> LevelPopulations<T> for QuartetComponents<T> {
    fn n_components(&self) -> usize {
        self.ops.len() * self.nuclear_states.len()
    }

    fn level_components(&self, eig: &EigenSystem<T>, i: usize) -> Vec<T> {
        let n_nuc = self.nuclear_states.len();
        let mut out = vec![T::zero(); self.n_components()];
        let v = eig.vectors.column(i);
        let mut w = CVec::<T>::zeros(6);
        for (m, u) in self.nuclear_states.iter().enumerate() {
            for e in 0..6 {
                let mut acc = T::cplx(T::zero(), T::zero());
                for n in 0..n_nuc {
                    acc += v[e * n_nuc + n] * u[n].conj();
                }
                w[e] = acc;
            }
            for (k, op) in self.ops.iter().enumerate() {
                let mut val = T::zero();
                for r in 0..6 {
                    let mut row = T::cplx(T::zero(), T::zero());
                    for c in 0..6 {
                        row += op[(r, c)] * w[c];
                    }
                    val += (w[r].conj() * row).re;
                }
                out[k * n_nuc + m] = val;
            }
        }
        out
    }
}

/// Boltzmann populations; a single component with coefficient 1.
pub struct ThermalPopulations<T: Real> {
    pub temperature_k: T,
}

impl<T: Real> LevelPopulations<T> for ThermalPopulations<T> {
    fn n_components(&self) -> usize {
        1
    }

    fn level_components(&self, eig: &EigenSystem<T>, i: usize) -> Vec<T> {
        let e0 = eig.values.iter().fold(eig.values[i], |a, b| a.min(*b));
        let beta = T::lit(KELVIN_PER_MHZ) / self.temperature_k;
        let z = eig
            .values
            .iter()
            .fold(T::zero(), |a, e| a + (-(*e - e0) * beta).exp());
        vec![(-(eig.values[i] - e0) * beta).exp() / z]
    }

    fn components(&self, eig: &EigenSystem<T>) -> Vec<T> {
        thermal_populations(&eig.values, self.temperature_k)
            .expect("temperature validated at construction")
    }
}

/// Spin-1 zero-field populations; component k is |⟨v|T_k⟩|², with the
/// zero-field populations as coefficients.
pub struct ZeroFieldComponents<T: Real> {
    states: [CVec<T>; 3],
}

impl<T: Real> ZeroFieldComponents<T> {
    pub fn new(zfs: &InteractionTensor<T>) -> Self {
        Self {
            states: triplet_zero_field_states(zfs),
        }
    }
}

impl<T: Real> LevelPopulations<T> for ZeroFieldComponents<T> {
    fn n_components(&self) -> usize {
        3
    }

    fn level_components(&self, eig: &EigenSystem<T>, i: usize) -> Vec<T> {
        let v = eig.vectors.column(i);
        self.states.iter().map(|t| v.dotc(t).norm_sqr()).collect()
    }
}
