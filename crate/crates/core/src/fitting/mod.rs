//! Simultaneous least-squares fit of quartet polarization parameters to
//! several experimental spectra.
//!
//! The population model is linear in its component coefficients, so each
//! dataset's component spectra are computed once on its own field axis and
//! every objective evaluation is a small matrix-vector product.

mod nelder_mead;

pub use nelder_mead::{multi_start, nelder_mead, Minimum, MultiStart, NelderMeadSettings};

use std::fmt::Write as _;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::polarization::{
    NuclearPopulations, PolarizationSpec, QuartetComponents, QuartetPolarizationParams,
};
use crate::scalar::Real;
use crate::spectrum::{ComponentSpectra, FieldSweepConfig, OrientationScheme, Simulator, Spectrum};
use crate::spin::SpinSystemSpec;

pub const PARAM_NAMES: [&str; 6] = ["a1", "a2", "a3", "r1", "r2", "r3"];

/// Logits of the nuclear populations are searched inside ±this bound.
const LOGIT_BOUND: f64 = 12.0;

#[derive(Debug, Clone)]
pub struct FitDataset<T: Real> {
    pub label: String,
    pub spectrum: Spectrum<T>,
    pub scheme: OrientationScheme<T>,
    pub weight: T,
    /// `None` solves the scale in closed form; `Some(s)` holds it fixed.
    pub fixed_scale: Option<T>,
}

impl<T: Real> FitDataset<T> {
    pub fn new(
        label: impl Into<String>,
        spectrum: Spectrum<T>,
        scheme: OrientationScheme<T>,
    ) -> Self {
        Self {
            label: label.into(),
            spectrum,
            scheme,
            weight: T::one(),
            fixed_scale: None,
        }
    }

    pub fn with_weight(mut self, weight: T) -> Self {
        self.weight = weight;
        self
    }

    pub fn with_fixed_scale(mut self, scale: T) -> Self {
        self.fixed_scale = Some(scale);
        self
    }

    fn validate(&self, errors: &mut Vec<String>) {
        let tag = &self.label;
        if !(self.weight > T::zero()) || !self.weight.is_finite() {
            errors.push(format!("dataset '{tag}': weight must be > 0"));
        }
        if self.spectrum.len() < 2 {
            errors.push(format!("dataset '{tag}': needs at least two points"));
        } else if !self.spectrum.is_increasing() {
            errors.push(format!(
                "dataset '{tag}': field axis must be strictly increasing"
            ));
        }
        if self.spectrum.intensity.iter().any(|v| !v.is_finite()) {
            errors.push(format!("dataset '{tag}': intensities must be finite"));
        }
        if let Err(e) = self.scheme.validate() {
            errors.push(format!("dataset '{tag}': {e}"));
        }
    }
}

/// Which parameters the optimizer may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FreeMask {
    /// a1, a2, a3, r1, r2, r3
    pub polarization: [bool; 6],
    pub nuclear: bool,
}

impl FreeMask {
    pub fn count(&self, n_nuclear: usize) -> usize {
        self.polarization.iter().filter(|f| **f).count()
            + if self.nuclear {
                n_nuclear.saturating_sub(1)
            } else {
                0
            }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitPreset {
    /// a2..r3 free, nuclear populations held at their initial values.
    ElectronicOnly,
    /// a2..r3 and the nuclear populations free.
    ElectronicNuclear,
}

impl FitPreset {
    pub fn mask(self) -> FreeMask {
        FreeMask {
            polarization: [false, true, true, true, true, true],
            nuclear: matches!(self, FitPreset::ElectronicNuclear),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "electronic" => Some(Self::ElectronicOnly),
            "electronic+nuclear" => Some(Self::ElectronicNuclear),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::ElectronicOnly => "electronic",
            Self::ElectronicNuclear => "electronic+nuclear",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSettings<T: Real> {
    /// Objective evaluations allowed per start.
    pub max_iterations: usize,
    /// Number of starts; the first is the initial guess.
    pub restarts: usize,
    pub tolerance: T,
    pub seed: u64,
}

impl<T: Real> Default for OptimizerSettings<T> {
    fn default() -> Self {
        Self {
            max_iterations: 20_000,
            restarts: 4,
            tolerance: T::lit(1e-10),
            seed: 2024,
        }
    }
}

/// A point in parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct FitParameters<T: Real> {
    pub polarization: QuartetPolarizationParams<T>,
    pub nuclear: NuclearPopulations<T>,
}

#[derive(Debug, Clone)]
pub struct FitProblem<T: Real> {
    pub system: SpinSystemSpec<T>,
    /// Lineshape, linewidth, frequency and resonance settings; the field
    /// range is taken from each dataset.
    pub sweep: FieldSweepConfig<T>,
    pub datasets: Vec<FitDataset<T>>,
    pub initial: FitParameters<T>,
    pub free: FreeMask,
    /// Box for a1..r3.
    pub bounds: [(T, T); 6],
    pub doublet_polarization: T,
    pub frame_rotation: T,
    pub optimizer: OptimizerSettings<T>,
}

impl<T: Real> FitProblem<T> {
    pub fn new(
        system: SpinSystemSpec<T>,
        sweep: FieldSweepConfig<T>,
        datasets: Vec<FitDataset<T>>,
        initial: FitParameters<T>,
        preset: FitPreset,
    ) -> Self {
        Self {
            system,
            sweep,
            datasets,
            initial,
            free: preset.mask(),
            bounds: [(T::lit(-1.0), T::lit(1.0)); 6],
            doublet_polarization: T::zero(),
            frame_rotation: T::zero(),
            optimizer: OptimizerSettings::default(),
        }
    }

    /// Collects every problem with the setup, not only the first.
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if self.datasets.is_empty() {
            errors.push("at least one dataset is required".to_string());
        }
        for d in &self.datasets {
            d.validate(&mut errors);
        }
        let n_nuc = self.initial.nuclear.len();
        if self.free.count(n_nuc) == 0 {
            errors.push("at least one parameter must be free".to_string());
        }
        let init = self.initial.polarization.to_array();
        for (k, (lo, hi)) in self.bounds.iter().enumerate() {
            if !(lo < hi) {
                errors.push(format!(
                    "bounds for {} must satisfy lower < upper",
                    PARAM_NAMES[k]
                ));
            } else if init[k] < *lo || init[k] > *hi {
                errors.push(format!(
                    "initial {} = {} lies outside [{lo}, {hi}]",
                    PARAM_NAMES[k], init[k]
                ));
            }
        }
        let all_scales_free = self.datasets.iter().all(|d| d.fixed_scale.is_none());
        if all_scales_free
            && self.free.polarization.iter().all(|f| *f)
            && self.doublet_polarization == T::zero()
        {
            errors.push(
                "a1..r3 all free together with free dataset scales leaves the overall amplitude undetermined; fix at least one of them"
                    .to_string(),
            );
        }
        if self.optimizer.restarts == 0 || self.optimizer.max_iterations == 0 {
            errors.push("optimizer restarts and max_iterations must be >= 1".to_string());
        }
        if let Err(e) = self.sweep.validate() {
            errors.push(e.to_string());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }

    fn polarization_spec(&self, p: &FitParameters<T>) -> PolarizationSpec<T> {
        PolarizationSpec::PhotoQuartet {
            params: p.polarization,
            nuclear: p.nuclear.clone(),
            doublet_polarization: self.doublet_polarization,
            frame_rotation: self.frame_rotation,
        }
    }

    /// Computes the component spectra of every dataset on its own axis.
    pub fn prepare(&self) -> Result<PreparedFit<T>> {
        self.validate()?;
        let pol = self.polarization_spec(&self.initial);
        let mut components = Vec::with_capacity(self.datasets.len());
        for (index, d) in self.datasets.iter().enumerate() {
            let wrap = |e: Error| Error::Dataset {
                index,
                source: Box::new(e),
            };
            let field = &d.spectrum.field;
            let mut sweep = self.sweep.clone();
            sweep.field_start = field[0];
            sweep.field_stop = field[field.len() - 1];
            sweep.n_points = field.len();
            let sim = Simulator::new(&self.system, &pol, &sweep).map_err(wrap)?;
            components.push(sim.component_spectra(&d.scheme, field).map_err(wrap)?);
        }
        Ok(PreparedFit::from_components(self.clone(), components))
    }
}

/// A problem with its component spectra precomputed.
#[derive(Debug, Clone)]
pub struct PreparedFit<T: Real> {
    pub problem: FitProblem<T>,
    pub components: Vec<ComponentSpectra<T>>,
    experimental: Vec<DVector<T>>,
    /// 1 / max|experimental| (1 for an all-zero dataset).
    normalization: Vec<T>,
}

impl<T: Real> PreparedFit<T> {
    pub fn from_components(problem: FitProblem<T>, components: Vec<ComponentSpectra<T>>) -> Self {
        let experimental: Vec<DVector<T>> = problem
            .datasets
            .iter()
            .map(|d| DVector::from_column_slice(&d.spectrum.intensity))
            .collect();
        let normalization = experimental
            .iter()
            .map(|e| {
                let m = e.iter().fold(T::zero(), |a, v| a.max(v.abs()));
                if m > T::zero() {
                    T::one() / m
                } else {
                    T::one()
                }
            })
            .collect();
        Self {
            problem,
            components,
            experimental,
            normalization,
        }
    }

    fn coefficients(&self, p: &FitParameters<T>) -> Vec<T> {
        QuartetComponents::coefficients(
            &p.polarization,
            &p.nuclear,
            self.problem.doublet_polarization,
        )
    }

    /// Unscaled simulated intensities per dataset.
    pub fn simulated(&self, p: &FitParameters<T>) -> Vec<DVector<T>> {
        let c = DVector::from_vec(self.coefficients(p));
        self.components.iter().map(|cs| &cs.values * &c).collect()
    }

    /// Least-squares scale per dataset, constrained to be non-negative.
    pub fn scales(&self, sims: &[DVector<T>]) -> Vec<T> {
        sims.iter()
            .zip(&self.experimental)
            .zip(&self.problem.datasets)
            .map(|((s, e), d)| {
                if let Some(fixed) = d.fixed_scale {
                    return fixed;
                }
                let ss = s.dot(s);
                if ss > T::zero() {
                    (s.dot(e) / ss).max(T::zero())
                } else {
                    T::one()
                }
            })
            .collect()
    }

    /// Concatenated weighted, max-normalized residuals and the scales used.
    pub fn residual_with_scales(&self, p: &FitParameters<T>) -> (Vec<T>, Vec<T>) {
        let sims = self.simulated(p);
        let scales = self.scales(&sims);
        let mut out = Vec::with_capacity(self.experimental.iter().map(|e| e.len()).sum());
        for (k, (s, e)) in sims.iter().zip(&self.experimental).enumerate() {
            let f = self.normalization[k] * self.problem.datasets[k].weight;
            out.extend(
                s.iter()
                    .zip(e.iter())
                    .map(|(s, e)| (scales[k] * *s - *e) * f),
            );
        }
        (out, scales)
    }

    pub fn residual(&self, p: &FitParameters<T>) -> Vec<T> {
        self.residual_with_scales(p).0
    }

    pub fn objective(&self, p: &FitParameters<T>) -> T {
        self.residual(p).iter().fold(T::zero(), |a, r| a + *r * *r)
    }

    /// Max-normalized RMS misfit of each dataset (unweighted).
    pub fn normalized_rms(&self, p: &FitParameters<T>) -> Vec<T> {
        let sims = self.simulated(p);
        let scales = self.scales(&sims);
        sims.iter()
            .zip(&self.experimental)
            .enumerate()
            .map(|(k, (s, e))| {
                let n = T::from_usize_lossy(e.len().max(1));
                let ss = s.iter().zip(e.iter()).fold(T::zero(), |a, (s, e)| {
                    let r = (scales[k] * *s - *e) * self.normalization[k];
                    a + r * r
                });
                (ss / n).sqrt()
            })
            .collect()
    }

    /// Best-fit spectra, scaled, on each dataset's axis.
    pub fn fitted_spectra(&self, p: &FitParameters<T>) -> Result<Vec<Spectrum<T>>> {
        let sims = self.simulated(p);
        let scales = self.scales(&sims);
        sims.iter()
            .zip(&self.problem.datasets)
            .zip(scales)
            .map(|((s, d), k)| {
                let mut sp =
                    Spectrum::new(d.spectrum.field.clone(), s.iter().map(|v| *v * k).collect())?;
                sp.metadata.insert("dataset".into(), d.label.clone());
                sp.metadata.insert("scheme".into(), d.scheme.describe());
                sp.metadata.insert("scale".into(), format!("{k:e}"));
                Ok(sp)
            })
            .collect()
    }

    fn layout(&self) -> Layout<T> {
        let pr = &self.problem;
        let init = pr.initial.polarization.to_array();
        let mut x0 = Vec::new();
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        let mut step = Vec::new();
        let mut names = Vec::new();
        for k in 0..6 {
            if pr.free.polarization[k] {
                let (lo, hi) = pr.bounds[k];
                x0.push(init[k]);
                lower.push(lo);
                upper.push(hi);
                step.push((hi - lo) * T::lit(0.05));
                names.push(PARAM_NAMES[k].to_string());
            }
        }
        let n_nuc = pr.initial.nuclear.len();
        if pr.free.nuclear {
            let logits = pr.initial.nuclear.to_logits();
            let b = T::lit(LOGIT_BOUND);
            for (m, l) in logits.iter().take(n_nuc - 1).enumerate() {
                x0.push(l.max(-b).min(b));
                lower.push(-b);
                upper.push(b);
                step.push(T::lit(0.5));
                names.push(format!("logit{}", m + 1));
            }
        }
        Layout {
            x0,
            lower,
            upper,
            step,
            names,
            base: init,
            free: pr.free,
            n_nuclear: n_nuc,
        }
    }

    /// Minimizes the objective with deterministic multi-start Nelder–Mead.
    pub fn fit(&self) -> FitResult<T> {
        let layout = self.layout();
        let pr = &self.problem;
        let settings = NelderMeadSettings {
            max_evaluations: pr.optimizer.max_iterations,
            f_tolerance: pr.optimizer.tolerance,
            f_floor: T::lit(1e-12),
            x_tolerance: pr.optimizer.tolerance.sqrt().max(T::lit(1e-9)),
            polish: 2,
        };
        let objective = |x: &[T]| self.objective(&layout.unpack(x, &pr.initial.nuclear));
        let ms = multi_start(
            objective,
            &layout.x0,
            &layout.step,
            &layout.lower,
            &layout.upper,
            pr.optimizer.restarts,
            pr.optimizer.seed,
            &settings,
        );
        let best = layout.unpack(&ms.best.x, &pr.initial.nuclear);
        let (residual, scales) = self.residual_with_scales(&best);
        let residual_norm = residual.iter().fold(T::zero(), |a, r| a + *r * *r).sqrt();
        let mut iterates = Vec::new();
        for (start, run) in ms.runs.iter().enumerate() {
            for (it, f, x) in &run.trace {
                iterates.push(FitIterate {
                    start,
                    iteration: *it,
                    objective: *f,
                    parameters: layout.unpack(x, &pr.initial.nuclear),
                });
            }
        }
        let mut warnings: Vec<String> = self
            .components
            .iter()
            .flat_map(|c| c.warnings.iter().cloned())
            .collect();
        warnings.sort();
        warnings.dedup();
        if !ms.best.converged {
            warnings.push(format!(
                "optimizer did not converge within {} evaluations per start; returning best point found",
                pr.optimizer.max_iterations
            ));
        }
        FitResult {
            rms: self.normalized_rms(&best),
            parameters: best,
            scales,
            residual_norm,
            objective: ms.best.f,
            converged: ms.best.converged,
            evaluations: ms.runs.iter().map(|r| r.evaluations).sum(),
            best_start: ms.best_start,
            starts: ms.runs.len(),
            free_names: layout.names,
            labels: pr.datasets.iter().map(|d| d.label.clone()).collect(),
            settings: pr.optimizer.clone(),
            iterates,
            warnings,
        }
    }
}

struct Layout<T: Real> {
    x0: Vec<T>,
    lower: Vec<T>,
    upper: Vec<T>,
    step: Vec<T>,
    names: Vec<String>,
    base: [T; 6],
    free: FreeMask,
    n_nuclear: usize,
}

impl<T: Real> Layout<T> {
    fn unpack(&self, x: &[T], fixed_nuclear: &NuclearPopulations<T>) -> FitParameters<T> {
        let mut a = self.base;
        let mut i = 0;
        for (k, slot) in a.iter_mut().enumerate() {
            if self.free.polarization[k] {
                *slot = x[i];
                i += 1;
            }
        }
        let nuclear = if self.free.nuclear {
            let mut logits = x[i..i + self.n_nuclear - 1].to_vec();
            logits.push(T::zero());
            NuclearPopulations::from_logits(&logits)
        } else {
            fixed_nuclear.clone()
        };
        FitParameters {
            polarization: QuartetPolarizationParams::from_array(&a),
            nuclear,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitIterate<T: Real> {
    pub start: usize,
    pub iteration: usize,
    pub objective: T,
    pub parameters: FitParameters<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<T: Real> {
    pub parameters: FitParameters<T>,
    pub scales: Vec<T>,
    pub residual_norm: T,
    pub objective: T,
    /// Max-normalized RMS misfit per dataset.
    pub rms: Vec<T>,
    pub converged: bool,
    pub evaluations: usize,
    pub best_start: usize,
    pub starts: usize,
    pub free_names: Vec<String>,
    pub labels: Vec<String>,
    pub settings: OptimizerSettings<T>,
    pub iterates: Vec<FitIterate<T>>,
    pub warnings: Vec<String>,
}

impl<T: Real> FitResult<T> {
    /// `key: value` report.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let a = self.parameters.polarization.to_array();
        let _ = writeln!(s, "converged: {}", self.converged);
        let _ = writeln!(s, "residual_norm: {:e}", self.residual_norm);
        let _ = writeln!(s, "objective: {:e}", self.objective);
        let _ = writeln!(s, "evaluations: {}", self.evaluations);
        let _ = writeln!(s, "starts: {}", self.starts);
        let _ = writeln!(s, "best_start: {}", self.best_start);
        let _ = writeln!(s, "seed: {}", self.settings.seed);
        let _ = writeln!(s, "max_iterations: {}", self.settings.max_iterations);
        let _ = writeln!(s, "tolerance: {:e}", self.settings.tolerance);
        let _ = writeln!(s, "free: {}", self.free_names.join(" "));
        for (k, name) in PARAM_NAMES.iter().enumerate() {
            let _ = writeln!(s, "{name}: {:.6}", a[k]);
        }
        let rho: Vec<String> = self
            .parameters
            .nuclear
            .as_slice()
            .iter()
            .map(|v| format!("{v:.4}"))
            .collect();
        let _ = writeln!(s, "rho_n: {}", rho.join(" "));
        for (k, label) in self.labels.iter().enumerate() {
            let _ = writeln!(s, "dataset.{label}.scale: {:e}", self.scales[k]);
            let _ = writeln!(s, "dataset.{label}.normalized_rms: {:.6}", self.rms[k]);
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }

    /// One row per optimizer iteration and start.
    pub fn iterates_csv(&self) -> String {
        let n_nuc = self.parameters.nuclear.len();
        let mut s = String::from("start,iteration,objective,a1,a2,a3,r1,r2,r3");
        for m in 0..n_nuc {
            let _ = write!(s, ",rho_n{}", m + 1);
        }
        s.push('\n');
        for it in &self.iterates {
            let _ = write!(s, "{},{},{:e}", it.start, it.iteration, it.objective);
            for v in it.parameters.polarization.to_array() {
                let _ = write!(s, ",{v:e}");
            }
            for v in it.parameters.nuclear.as_slice() {
                let _ = write!(s, ",{v:e}");
            }
            s.push('\n');
        }
        s
    }
}

/// Residual vector of `params` against a prepared problem.
pub fn residual<T: Real>(params: &FitParameters<T>, prepared: &PreparedFit<T>) -> Vec<T> {
    prepared.residual(params)
}

/// Prepares and fits in one step.
pub fn fit_simultaneous<T: Real>(problem: &FitProblem<T>) -> Result<FitResult<T>> {
    Ok(problem.prepare()?.fit())
}
