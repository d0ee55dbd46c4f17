//! Global analysis of transient-absorption surfaces with irreversible
//! sequential models A → B → … → ground state.
//!
//! Time is unit-agnostic: lifetimes, IRF width, t0 and the time axis must
//! share one unit (the CSV loader converts to ps).

use std::fmt::Write as _;

use nalgebra::DMatrix;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::fitting::{multi_start, NelderMeadSettings};
use crate::scalar::Real;

/// Relative separation below which two lifetimes count as coincident.
pub const COINCIDENT_LIFETIMES: f64 = 1e-9;
/// Largest accepted condition number of the concentration matrix.
pub const MAX_CONDITION: f64 = 1e10;
/// FWHM = this · σ for a Gaussian.
const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

#[derive(Debug, Clone, PartialEq)]
pub struct SequentialModel<T: Real> {
    pub lifetimes: Vec<T>,
    /// Gaussian instrument response FWHM; zero means a step excitation.
    pub irf_fwhm: T,
    pub t0: T,
    /// Adds an IRF-shaped component with its own spectrum (solvent response).
    pub solvent_component: bool,
}

impl<T: Real> SequentialModel<T> {
    pub fn new(lifetimes: Vec<T>, irf_fwhm: T, t0: T) -> Self {
        Self {
            lifetimes,
            irf_fwhm,
            t0,
            solvent_component: false,
        }
    }

    pub fn n_compartments(&self) -> usize {
        self.lifetimes.len()
    }

    /// Columns of the concentration matrix, including the solvent column.
    pub fn n_columns(&self) -> usize {
        self.lifetimes.len() + usize::from(self.solvent_component && self.irf_fwhm > T::zero())
    }

    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if self.lifetimes.is_empty() || self.lifetimes.len() > 4 {
            errors.push(format!(
                "sequential models need 1 to 4 compartments, got {}",
                self.lifetimes.len()
            ));
        }
        if self
            .lifetimes
            .iter()
            .any(|t| !(*t > T::zero()) || !t.is_finite())
        {
            errors.push("lifetimes must be finite and > 0".to_string());
        }
        if !(self.irf_fwhm >= T::zero()) || !self.irf_fwhm.is_finite() {
            errors.push("irf_fwhm must be >= 0".to_string());
        }
        if !self.t0.is_finite() {
            errors.push("t0 must be finite".to_string());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TADataset<T: Real> {
    pub times: Vec<T>,
    /// Wavelengths in nm.
    pub wavelengths: Vec<T>,
    /// ΔA, rows = times, columns = wavelengths.
    pub delta_a: DMatrix<T>,
}

impl<T: Real> TADataset<T> {
    pub fn new(times: Vec<T>, wavelengths: Vec<T>, delta_a: DMatrix<T>) -> Result<Self> {
        if delta_a.shape() != (times.len(), wavelengths.len()) {
            return Err(Error::invalid(format!(
                "ΔA is {}×{} but axes are {} times × {} wavelengths",
                delta_a.nrows(),
                delta_a.ncols(),
                times.len(),
                wavelengths.len()
            )));
        }
        for (name, axis) in [("time", &times), ("wavelength", &wavelengths)] {
            if let Some(i) = axis.windows(2).position(|w| !(w[1] > w[0])) {
                return Err(Error::invalid(format!(
                    "{name} axis not strictly increasing at index {}",
                    i + 1
                )));
            }
        }
        if delta_a.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("ΔA contains non-finite values"));
        }
        Ok(Self {
            times,
            wavelengths,
            delta_a,
        })
    }
}

/// exp(z²)·erfc(z) without overflow for large z.
pub fn erfcx(z: f64) -> f64 {
    if z < 26.0 {
        (z * z).exp() * erfc(z)
    } else {
        let r = 1.0 / (2.0 * z * z);
        let series =
            1.0 - r * (1.0 - 3.0 * r * (1.0 - 5.0 * r * (1.0 - 7.0 * r * (1.0 - 9.0 * r))));
        series / (z * std::f64::consts::PI.sqrt())
    }
}

/// A unit step at t0 followed by exp(−k·(t−t0)), convolved with a normalized
/// Gaussian of width σ.
pub fn emg(t: f64, k: f64, sigma: f64, t0: f64) -> f64 {
    let dt = t - t0;
    if sigma <= 0.0 {
        return if dt >= 0.0 { (-k * dt).exp() } else { 0.0 };
    }
    let z = (k * sigma * sigma - dt) / (sigma * std::f64::consts::SQRT_2);
    if z < 0.0 {
        0.5 * (-k * dt + 0.5 * k * k * sigma * sigma).exp() * erfc(z)
    } else {
        0.5 * (-dt * dt / (2.0 * sigma * sigma)).exp() * erfcx(z)
    }
}

/// Coefficients b[j][i] with c_j(t) = Σ_i b[j][i]·e^{−k_i t} for the chain
/// started with c_0(0) = 1.
fn bateman(rates: &[f64]) -> Vec<Vec<f64>> {
    let n = rates.len();
    let mut b = vec![vec![0.0; n]; n];
    for j in 0..n {
        let feed: f64 = rates[..j].iter().product();
        for i in 0..=j {
            let mut den = 1.0;
            for l in 0..=j {
                if l != i {
                    den *= rates[l] - rates[i];
                }
            }
            b[j][i] = feed / den;
        }
    }
    b
}

fn check_distinct<T: Real>(lifetimes: &[T]) -> Result<()> {
    for i in 0..lifetimes.len() {
        for j in 0..i {
            let (a, b) = (lifetimes[i].as_f64(), lifetimes[j].as_f64());
            if (a - b).abs() <= COINCIDENT_LIFETIMES * a.abs().max(b.abs()) {
                return Err(Error::invalid(format!(
                    "lifetimes {j} and {i} coincide ({b:e} vs {a:e}); perturb one of them"
                )));
            }
        }
    }
    Ok(())
}

/// Population of each compartment (columns) at each time (rows). With the
/// solvent component enabled a final column holds the IRF profile scaled to
/// unit peak.
pub fn concentrations<T: Real>(model: &SequentialModel<T>, times: &[T]) -> Result<DMatrix<T>> {
    model.validate()?;
    check_distinct(&model.lifetimes)?;
    let rates: Vec<f64> = model.lifetimes.iter().map(|t| 1.0 / t.as_f64()).collect();
    let b = bateman(&rates);
    let sigma = model.irf_fwhm.as_f64() / FWHM_PER_SIGMA;
    let t0 = model.t0.as_f64();
    let n = rates.len();
    let mut c = DMatrix::<T>::zeros(times.len(), model.n_columns());
    for (row, t) in times.iter().enumerate() {
        let t = t.as_f64();
        let basis: Vec<f64> = rates.iter().map(|k| emg(t, *k, sigma, t0)).collect();
        for j in 0..n {
            let v: f64 = (0..=j).map(|i| b[j][i] * basis[i]).sum();
            c[(row, j)] = T::lit(v.max(0.0));
        }
        if model.n_columns() > n {
            let d = (t - t0) / sigma;
            c[(row, n)] = T::lit((-0.5 * d * d).exp());
        }
    }
    Ok(c)
}

/// Least-squares EAS (columns of `c` × wavelengths) minimizing ‖data − C·EAS‖_F.
pub fn eas_solve<T: Real>(c: &DMatrix<T>, data: &TADataset<T>) -> Result<DMatrix<T>> {
    if c.nrows() != data.delta_a.nrows() {
        return Err(Error::invalid(format!(
            "concentration matrix has {} rows, data has {} times",
            c.nrows(),
            data.delta_a.nrows()
        )));
    }
    solve_projection(c, &data.delta_a)
}

fn solve_projection<T: Real>(c: &DMatrix<T>, d: &DMatrix<T>) -> Result<DMatrix<T>> {
    let svd = c.clone().svd(true, true);
    let s = &svd.singular_values;
    let smax = s.iter().fold(T::zero(), |a, v| a.max(*v));
    let smin = s.iter().fold(T::max_value().unwrap(), |a, v| a.min(*v));
    let cond = if smin > T::zero() {
        smax / smin
    } else {
        T::max_value().unwrap()
    };
    if !(cond <= T::lit(MAX_CONDITION)) {
        return Err(Error::numerical(format!(
            "concentration matrix is rank deficient (condition number {cond:e} > {MAX_CONDITION:e})"
        )));
    }
    let (u, vt) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
    let utd = u.transpose() * d;
    let scaled = DMatrix::from_fn(utd.nrows(), utd.ncols(), |i, j| utd[(i, j)] / s[i]);
    Ok(vt.transpose() * scaled)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KineticFitSettings<T: Real> {
    pub restarts: usize,
    pub max_iterations: usize,
    pub tolerance: T,
    pub seed: u64,
    /// Each lifetime is searched within [τ/f, τ·f] of its initial value.
    pub lifetime_factor: T,
    /// IRF width searched within [w/f, w·f].
    pub irf_factor: T,
    /// t0 searched within ± this many initial IRF widths.
    pub t0_window: T,
}

impl<T: Real> Default for KineticFitSettings<T> {
    fn default() -> Self {
        Self {
            restarts: 4,
            max_iterations: 4000,
            tolerance: T::lit(1e-12),
            seed: 2024,
            lifetime_factor: T::lit(20.0),
            irf_factor: T::lit(5.0),
            t0_window: T::lit(2.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalFitResult<T: Real> {
    /// Fitted model; lifetimes ascending.
    pub model: SequentialModel<T>,
    /// Rows = compartments (then the solvent component), columns = wavelengths.
    pub eas: DMatrix<T>,
    pub concentrations: DMatrix<T>,
    pub residual_norm: T,
    pub data_norm: T,
    pub converged: bool,
    /// The objective did not depend on the nonlinear parameters.
    pub flat_objective: bool,
    pub evaluations: usize,
    pub settings: KineticFitSettings<T>,
    pub warnings: Vec<String>,
}

impl<T: Real> GlobalFitResult<T> {
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "converged: {}", self.converged);
        let _ = writeln!(s, "flat_objective: {}", self.flat_objective);
        let _ = writeln!(s, "residual_norm: {:e}", self.residual_norm);
        let _ = writeln!(
            s,
            "relative_residual: {:e}",
            if self.data_norm > T::zero() {
                self.residual_norm / self.data_norm
            } else {
                T::zero()
            }
        );
        let _ = writeln!(s, "evaluations: {}", self.evaluations);
        let _ = writeln!(s, "seed: {}", self.settings.seed);
        let _ = writeln!(s, "restarts: {}", self.settings.restarts);
        for (i, tau) in self.model.lifetimes.iter().enumerate() {
            let _ = writeln!(s, "tau{}_ps: {:e}", i + 1, tau);
        }
        let _ = writeln!(s, "irf_fwhm_ps: {:e}", self.model.irf_fwhm);
        let _ = writeln!(s, "t0_ps: {:e}", self.model.t0);
        let _ = writeln!(s, "solvent_component: {}", self.model.solvent_component);
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }

    fn column_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.model.n_compartments())
            .map(|i| char::from(b'A' + i as u8).to_string())
            .collect();
        if self.eas.nrows() > names.len() {
            names.push("solvent".into());
        }
        names
    }

    /// wavelength_nm, then one column per compartment.
    pub fn eas_csv(&self, wavelengths: &[T]) -> String {
        let mut s = format!("wavelength_nm,{}\n", self.column_names().join(","));
        for (j, w) in wavelengths.iter().enumerate() {
            let _ = write!(s, "{w}");
            for i in 0..self.eas.nrows() {
                let _ = write!(s, ",{:e}", self.eas[(i, j)]);
            }
            s.push('\n');
        }
        s
    }

    /// time_ps, then one column per compartment.
    pub fn concentrations_csv(&self, times: &[T]) -> String {
        let mut s = format!("time_ps,{}\n", self.column_names().join(","));
        for (r, t) in times.iter().enumerate() {
            let _ = write!(s, "{t:e}");
            for i in 0..self.concentrations.ncols() {
                let _ = write!(s, ",{:e}", self.concentrations[(r, i)]);
            }
            s.push('\n');
        }
        s
    }
}

struct Packing<T: Real> {
    n: usize,
    fit_irf: bool,
    template: SequentialModel<T>,
}

impl<T: Real> Packing<T> {
    fn unpack(&self, x: &[T]) -> SequentialModel<T> {
        let mut lifetimes: Vec<T> = x[..self.n].iter().map(|l| l.exp()).collect();
        lifetimes.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        SequentialModel {
            lifetimes,
            t0: x[self.n],
            irf_fwhm: if self.fit_irf {
                x[self.n + 1].exp()
            } else {
                self.template.irf_fwhm
            },
            solvent_component: self.template.solvent_component,
        }
    }
}

fn projected_residual<T: Real>(
    model: &SequentialModel<T>,
    data: &TADataset<T>,
) -> Result<(T, DMatrix<T>, DMatrix<T>)> {
    let c = concentrations(model, &data.times)?;
    let eas = solve_projection(&c, &data.delta_a)?;
    let r = &data.delta_a - &c * &eas;
    Ok((r.norm_squared(), eas, c))
}

/// Variable-projection fit: Nelder–Mead over (ln τ, t0, ln irf) with the
/// EAS solved exactly at every evaluation.
pub fn global_fit<T: Real>(
    data: &TADataset<T>,
    init: &SequentialModel<T>,
    settings: &KineticFitSettings<T>,
) -> Result<GlobalFitResult<T>> {
    init.validate()?;
    check_distinct(&init.lifetimes)?;
    let n = init.n_compartments();
    let fit_irf = init.irf_fwhm > T::zero();
    let packing = Packing {
        n,
        fit_irf,
        template: init.clone(),
    };
    let data_norm = data.delta_a.norm();
    let mut warnings = Vec::new();

    if data_norm == T::zero() {
        let c = concentrations(init, &data.times)?;
        return Ok(GlobalFitResult {
            model: init.clone(),
            eas: DMatrix::zeros(c.ncols(), data.wavelengths.len()),
            concentrations: c,
            residual_norm: T::zero(),
            data_norm,
            converged: true,
            flat_objective: true,
            evaluations: 0,
            settings: settings.clone(),
            warnings: vec!["data are identically zero; lifetimes are undetermined".into()],
        });
    }

    let lf = settings.lifetime_factor.ln();
    let mut x0 = Vec::new();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut step = Vec::new();
    for tau in &init.lifetimes {
        let l = tau.ln();
        x0.push(l);
        lower.push(l - lf);
        upper.push(l + lf);
        step.push(T::lit(0.2));
    }
    let span = data.times[data.times.len() - 1] - data.times[0];
    let window = if fit_irf {
        init.irf_fwhm * settings.t0_window
    } else {
        span * T::lit(1e-3)
    };
    x0.push(init.t0);
    lower.push(init.t0 - window);
    upper.push(init.t0 + window);
    step.push(window * T::lit(0.1));
    if fit_irf {
        let l = init.irf_fwhm.ln();
        let f = settings.irf_factor.ln();
        x0.push(l);
        lower.push(l - f);
        upper.push(l + f);
        step.push(T::lit(0.2));
    }

    let objective = |x: &[T]| match projected_residual(&packing.unpack(x), data) {
        Ok((r, _, _)) => r / (data_norm * data_norm),
        Err(_) => T::max_value().unwrap(),
    };
    let nm = NelderMeadSettings {
        max_evaluations: settings.max_iterations,
        f_tolerance: settings.tolerance,
        f_floor: T::lit(1e-15),
        x_tolerance: T::lit(1e-7),
        polish: 2,
    };
    let ms = multi_start(
        objective,
        &x0,
        &step,
        &lower,
        &upper,
        settings.restarts,
        settings.seed,
        &nm,
    );
    let model = packing.unpack(&ms.best.x);
    let (r2, eas, c) = projected_residual(&model, data)?;
    let flat_objective = ms
        .runs
        .iter()
        .all(|r| r.trace.iter().all(|(_, f, _)| *f == ms.best.f));
    if !ms.best.converged {
        warnings.push(format!(
            "optimizer did not converge within {} evaluations per start; returning best point found",
            settings.max_iterations
        ));
    }
    for (i, (tau, (lo, hi))) in model
        .lifetimes
        .iter()
        .zip(lower.iter().zip(&upper))
        .enumerate()
    {
        let l = tau.ln();
        let margin = T::lit(1e-3);
        if l - *lo < margin || *hi - l < margin {
            warnings.push(format!("lifetime {} ended on its search bound", i + 1));
        }
    }
    Ok(GlobalFitResult {
        model,
        eas: eas.clone(),
        concentrations: c,
        residual_norm: r2.sqrt(),
        data_norm,
        converged: ms.best.converged,
        flat_objective,
        evaluations: ms.runs.iter().map(|r| r.evaluations).sum(),
        settings: settings.clone(),
        warnings,
    })
}

/// ΔA = C·EAS for a model and spectra (rows = columns of C).
pub fn synthesize<T: Real>(
    model: &SequentialModel<T>,
    times: &[T],
    eas: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    let c = concentrations(model, times)?;
    if c.ncols() != eas.nrows() {
        return Err(Error::invalid(format!(
            "model has {} components, EAS has {} rows",
            c.ncols(),
            eas.nrows()
        )));
    }
    Ok(c * eas)
}

/// Pearson correlation of two equally long vectors.
pub fn correlation<T: Real>(a: &[T], b: &[T]) -> T {
    let n = T::from_usize_lossy(a.len());
    let ma = a.iter().fold(T::zero(), |s, v| s + *v) / n;
    let mb = b.iter().fold(T::zero(), |s, v| s + *v) / n;
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for (x, y) in a.iter().zip(b) {
        sab += (*x - ma) * (*y - mb);
        saa += (*x - ma) * (*x - ma);
        sbb += (*y - mb) * (*y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Spectrum-like rows for synthetic data: one Gaussian band (or bleach) per
/// compartment across `wavelengths`.
pub fn synthetic_eas<T: Real>(n_compartments: usize, wavelengths: &[T]) -> DMatrix<T> {
    let lo = wavelengths[0].as_f64();
    let hi = wavelengths[wavelengths.len() - 1].as_f64();
    DMatrix::from_fn(n_compartments, wavelengths.len(), |i, j| {
        let w = wavelengths[j].as_f64();
        let frac = (i as f64 + 0.5) / n_compartments as f64;
        let centre = lo + (hi - lo) * frac;
        let width = (hi - lo) * 0.12;
        let bleach_centre = lo + (hi - lo) * 0.15;
        let band = (-((w - centre) / width).powi(2)).exp();
        let bleach = -0.6 * (-((w - bleach_centre) / (0.5 * width)).powi(2)).exp();
        T::lit(band + bleach)
    })
}

/// Noisy synthetic surface: ΔA = C·EAS + N(0, (noise·max|C·EAS|)²), with
/// [`synthetic_eas`] spectra and a ChaCha8 stream seeded by `seed`.
pub fn synthetic_dataset(
    model: &SequentialModel<f64>,
    times: Vec<f64>,
    wavelengths: Vec<f64>,
    noise: f64,
    seed: u64,
) -> Result<(TADataset<f64>, DMatrix<f64>)> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    let eas = synthetic_eas(model.n_columns(), &wavelengths);
    let clean = synthesize(model, &times, &eas)?;
    let sd = noise * clean.amax();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let data = if sd > 0.0 {
        let n = Normal::new(0.0, sd).map_err(|e| Error::invalid(e.to_string()))?;
        clean.map(|v| v + n.sample(&mut rng))
    } else {
        clean
    };
    Ok((TADataset::new(times, wavelengths, data)?, eas))
}

/// Nonuniform time axis: linear from `start` to `linear_end` with
/// `n_linear` points, then log-spaced up to `stop` with `n_log` points.
pub fn mixed_time_axis<T: Real>(
    start: T,
    linear_end: T,
    n_linear: usize,
    stop: T,
    n_log: usize,
) -> Vec<T> {
    let mut t: Vec<T> = crate::scalar::linspace(start, linear_end, n_linear);
    let (a, b) = (linear_end.as_f64().ln(), stop.as_f64().ln());
    for k in 1..=n_log {
        t.push(T::lit((a + (b - a) * k as f64 / n_log as f64).exp()));
    }
    t
}
