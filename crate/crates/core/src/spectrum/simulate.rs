use nalgebra::{DMatrix, DVector, Vector3};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::{
    broaden, find_resonances, AlignmentMode, FieldSweepConfig, OrientationPoint, OrientationScheme,
    ResonanceSettings, ResonanceSystem, Spectrum, Stick, StickSet,
};
use crate::error::{Error, Result};
use crate::polarization::{
    LevelPopulations, PolarizationSpec, QuartetComponents, QuartetFrame, ThermalPopulations,
    ZeroFieldComponents,
};
use crate::scalar::Real;
use crate::spin::{
    EulerAngles, InteractionTensor, LabOrientation, SpinHamiltonian, SpinQuantum, SpinSystemSpec,
};
use crate::units::ghz_to_mhz;

/// Temperature used for the rigid-limit dark-state spectrum.
pub const CW_TEMPERATURE_K: f64 = 85.0;

/// Orientation-dependent population source.
#[derive(Debug, Clone)]
pub enum PopulationModel<T: Real> {
    PhotoQuartet {
        hamiltonian: Box<SpinHamiltonian<T>>,
        frame: QuartetFrame<T>,
    },
    Thermal {
        temperature_k: T,
    },
    ZeroField {
        zfs: InteractionTensor<T>,
    },
}

impl<T: Real> PopulationModel<T> {
    pub fn at(&self, dir: &Vector3<T>) -> Result<Box<dyn LevelPopulations<T>>> {
        Ok(match self {
            Self::PhotoQuartet { hamiltonian, frame } => {
                Box::new(QuartetComponents::new(hamiltonian, dir, frame)?)
            }
            Self::Thermal { temperature_k } => Box::new(ThermalPopulations {
                temperature_k: *temperature_k,
            }),
            Self::ZeroField { zfs } => Box::new(ZeroFieldComponents::new(zfs)),
        })
    }
}

/// Spectra of each population component on a common field axis.
#[derive(Debug, Clone)]
pub struct ComponentSpectra<T: Real> {
    pub field: Vec<T>,
    /// One row per field point, one column per component.
    pub values: DMatrix<T>,
    /// Orientation weight and stick, in deterministic order.
    pub sticks: Vec<(T, Stick<T>)>,
    pub warnings: Vec<String>,
}

impl<T: Real> ComponentSpectra<T> {
    pub fn n_components(&self) -> usize {
        self.values.ncols()
    }

    /// Signed stick lines (field, orientation-weighted amplitude).
    pub fn lines(&self, coefficients: &[T]) -> Vec<(T, T)> {
        self.sticks
            .iter()
            .map(|(w, s)| (s.field_mt, *w * s.amplitude(coefficients)))
            .collect()
    }

    /// Width of the field interval holding the central `fraction` of the
    /// summed |amplitude| of all sticks, independent of the lineshape.
    pub fn stick_extent(&self, coefficients: &[T], fraction: T) -> T {
        let mut lines = self.lines(coefficients);
        lines.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        let total = lines.iter().fold(T::zero(), |a, l| a + l.1.abs());
        if lines.is_empty() || total <= T::zero() {
            return T::zero();
        }
        let tail = (T::one() - fraction) * T::lit(0.5) * total;
        let quantile = |target: T| {
            let mut acc = T::zero();
            for l in &lines {
                acc += l.1.abs();
                if acc >= target {
                    return l.0;
                }
            }
            lines[lines.len() - 1].0
        };
        quantile(total - tail) - quantile(tail)
    }

    pub fn combine(&self, coefficients: &[T]) -> Vec<T> {
        let c = DVector::from_column_slice(coefficients);
        (&self.values * c).iter().copied().collect()
    }
}

#[derive(Debug, Clone)]
pub struct Simulator<T: Real> {
    pub system: ResonanceSystem<T>,
    pub populations: PopulationModel<T>,
    pub coefficients: Vec<T>,
    pub sweep: FieldSweepConfig<T>,
    fingerprint: String,
}

impl<T: Real> Simulator<T> {
    pub fn new(
        spec: &SpinSystemSpec<T>,
        pol: &PolarizationSpec<T>,
        sweep: &FieldSweepConfig<T>,
    ) -> Result<Self> {
        sweep.validate()?;
        pol.validate()?;
        let h = SpinHamiltonian::new(spec)?;
        let system = ResonanceSystem::from_hamiltonian(&h);
        let (populations, coefficients) = match pol {
            PolarizationSpec::PhotoQuartet {
                params,
                nuclear,
                doublet_polarization,
                frame_rotation,
            } => {
                let frame = QuartetFrame::from_zfs(&spec.zfs, *frame_rotation);
                let coef = QuartetComponents::coefficients(params, nuclear, *doublet_polarization);
                (
                    PopulationModel::PhotoQuartet {
                        hamiltonian: Box::new(h),
                        frame,
                    },
                    coef,
                )
            }
            PolarizationSpec::Thermal { temperature_k } => (
                PopulationModel::Thermal {
                    temperature_k: *temperature_k,
                },
                vec![T::one()],
            ),
            PolarizationSpec::TripletZeroField { .. } => {
                return Err(Error::invalid(
                    "zero-field triplet populations apply to the isolated triplet simulator only",
                ))
            }
        };
        Ok(Self {
            system,
            populations,
            coefficients,
            sweep: sweep.clone(),
            fingerprint: fingerprint(&(spec, pol, sweep)),
        })
    }

    /// Isolated S = 1 with isotropic g; the ZFS frame is the molecular frame.
    pub fn triplet(
        g: T,
        zfs: &InteractionTensor<T>,
        p: [T; 3],
        sweep: &FieldSweepConfig<T>,
    ) -> Result<Self> {
        sweep.validate()?;
        PolarizationSpec::TripletZeroField { p }.validate()?;
        Ok(Self {
            system: ResonanceSystem::triplet(g, zfs),
            populations: PopulationModel::ZeroField { zfs: *zfs },
            coefficients: p.to_vec(),
            sweep: sweep.clone(),
            fingerprint: fingerprint(&("triplet", g, zfs, p, sweep)),
        })
    }

    /// Thermal S = 1/2, I = 7/2 doublet.
    pub fn cw_doublet(
        g: &InteractionTensor<T>,
        a: &InteractionTensor<T>,
        temperature_k: T,
        sweep: &FieldSweepConfig<T>,
    ) -> Result<Self> {
        sweep.validate()?;
        PolarizationSpec::Thermal { temperature_k }.validate()?;
        Ok(Self {
            system: ResonanceSystem::doublet(g, a, SpinQuantum::SEVEN_HALVES),
            populations: PopulationModel::Thermal { temperature_k },
            coefficients: vec![T::one()],
            sweep: sweep.clone(),
            fingerprint: fingerprint(&("cw_doublet", g, a, temperature_k, sweep)),
        })
    }

    /// Resonance search covering `[lo, hi]` plus five linewidths each side.
    pub fn settings(&self, lo: T, hi: T) -> ResonanceSettings<T> {
        let margin = self.sweep.linewidth * T::lit(5.0);
        ResonanceSettings {
            frequency_mhz: ghz_to_mhz(self.sweep.mw_frequency_ghz),
            field_min: (lo - margin).max(T::zero()),
            field_max: hi + margin,
            step: self.sweep.resonance_step,
            slope_floor: self.sweep.slope_floor,
        }
    }

    pub fn sticks(&self, dir: &Vector3<T>) -> Result<StickSet<T>> {
        let pops = self.populations.at(dir)?;
        find_resonances(
            &self.system,
            dir,
            pops.as_ref(),
            &self.settings(self.sweep.field_start, self.sweep.field_stop),
        )
    }

    pub fn component_spectra(
        &self,
        scheme: &OrientationScheme<T>,
        field: &[T],
    ) -> Result<ComponentSpectra<T>> {
        self.component_spectra_at(&scheme.points()?, field)
    }

    pub fn component_spectra_at(
        &self,
        points: &[OrientationPoint<T>],
        field: &[T],
    ) -> Result<ComponentSpectra<T>> {
        if field.is_empty() {
            return Err(Error::invalid("empty field axis"));
        }
        let lo = field.iter().fold(field[0], |a, b| a.min(*b));
        let hi = field.iter().fold(field[0], |a, b| a.max(*b));
        let settings = self.settings(lo, hi);
        let sets: Vec<Result<StickSet<T>>> = points
            .par_iter()
            .map(|p| {
                let pops = self.populations.at(&p.direction)?;
                find_resonances(&self.system, &p.direction, pops.as_ref(), &settings)
            })
            .collect();
        let nc = self.coefficients.len();
        let mut sticks = Vec::new();
        let mut warnings = Vec::new();
        for (p, set) in points.iter().zip(sets) {
            let set = set?;
            for w in set.warnings {
                if !warnings.contains(&w) {
                    warnings.push(w);
                }
            }
            sticks.extend(set.sticks.into_iter().map(|s| (p.weight, s)));
        }
        let positions: Vec<T> = sticks.iter().map(|(_, s)| s.field_mt).collect();
        let amplitudes = DMatrix::from_fn(sticks.len(), nc, |i, c| {
            let (w, s) = &sticks[i];
            *w * s.weight() * s.components[c]
        });
        let values = broaden(
            field,
            &positions,
            &amplitudes,
            self.sweep.lineshape,
            self.sweep.linewidth,
        )?;
        Ok(ComponentSpectra {
            field: field.to_vec(),
            values,
            sticks,
            warnings,
        })
    }

    pub fn simulate(&self, scheme: &OrientationScheme<T>) -> Result<Spectrum<T>> {
        self.simulate_on(scheme, &self.sweep.axis())
    }

    pub fn simulate_on(&self, scheme: &OrientationScheme<T>, field: &[T]) -> Result<Spectrum<T>> {
        let comps = self.component_spectra(scheme, field)?;
        for w in &comps.warnings {
            log::warn!("{w}");
        }
        let mut s = Spectrum::new(field.to_vec(), comps.combine(&self.coefficients))?;
        s.metadata.insert("scheme".into(), scheme.describe());
        s.metadata
            .insert("lineshape".into(), self.sweep.lineshape.as_str().into());
        s.metadata
            .insert("linewidth_mT".into(), format!("{}", self.sweep.linewidth));
        s.metadata.insert(
            "mw_frequency_GHz".into(),
            format!("{}", self.sweep.mw_frequency_ghz),
        );
        s.metadata
            .insert("parameters_sha256".into(), self.fingerprint.clone());
        if !comps.warnings.is_empty() {
            s.metadata
                .insert("warnings".into(), comps.warnings.join("; "));
        }
        Ok(s)
    }
}

fn fingerprint<D: std::fmt::Debug>(x: &D) -> String {
    hex::encode(Sha256::digest(format!("{x:?}").as_bytes()))
}

/// Resonance fields and signed amplitudes for one orientation.
pub fn stick_spectrum<T: Real>(
    spec: &SpinSystemSpec<T>,
    orient: &LabOrientation<T>,
    pol: &PolarizationSpec<T>,
    sweep: &FieldSweepConfig<T>,
) -> Result<Vec<(T, T)>> {
    let sim = Simulator::new(spec, pol, sweep)?;
    let set = sim.sticks(&orient.unit_vector())?;
    Ok(set
        .sticks
        .iter()
        .map(|s| (s.field_mt, s.amplitude(&sim.coefficients)))
        .collect())
}

pub fn convolve_lineshape<T: Real>(
    lines: &[(T, T)],
    sweep: &FieldSweepConfig<T>,
) -> Result<Spectrum<T>> {
    sweep.validate()?;
    let axis = sweep.axis();
    let y = super::convolve_lines(&axis, lines, sweep.lineshape, sweep.linewidth)?;
    Spectrum::new(axis, y)
}

pub fn powder_average<T: Real>(
    spec: &SpinSystemSpec<T>,
    pol: &PolarizationSpec<T>,
    sweep: &FieldSweepConfig<T>,
    grid_size: usize,
) -> Result<Spectrum<T>> {
    Simulator::new(spec, pol, sweep)?.simulate(&OrientationScheme::Powder { grid_size })
}

pub fn aligned_average<T: Real>(
    spec: &SpinSystemSpec<T>,
    pol: &PolarizationSpec<T>,
    sweep: &FieldSweepConfig<T>,
    mode: AlignmentMode,
    sigma_deg: T,
    n_samples: usize,
) -> Result<Spectrum<T>> {
    Simulator::new(spec, pol, sweep)?
        .simulate(&OrientationScheme::aligned(mode, sigma_deg, n_samples))
}

/// Powder spectrum of an isolated triplet with zero-field populations.
pub fn simulate_triplet<T: Real>(
    g: T,
    d_mhz: T,
    e_mhz: T,
    p_zero_field: [T; 3],
    sweep: &FieldSweepConfig<T>,
    grid_size: usize,
) -> Result<Spectrum<T>> {
    let zfs = InteractionTensor::zero_field_splitting(d_mhz, e_mhz, EulerAngles::identity());
    Simulator::triplet(g, &zfs, p_zero_field, sweep)?
        .simulate(&OrientationScheme::Powder { grid_size })
}

/// First-derivative rigid-limit powder spectrum of the S = 1/2, I = 7/2 doublet.
pub fn simulate_cw_doublet<T: Real>(
    g: &InteractionTensor<T>,
    a: &InteractionTensor<T>,
    sweep: &FieldSweepConfig<T>,
    grid_size: usize,
) -> Result<Spectrum<T>> {
    let sim = Simulator::cw_doublet(g, a, T::lit(CW_TEMPERATURE_K), sweep)?;
    Ok(sim
        .simulate(&OrientationScheme::Powder { grid_size })?
        .derivative())
}
