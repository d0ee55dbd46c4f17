//! Run configuration: a TOML document whose physical quantities always carry
//! a unit suffix in the key name (`zfs_D_MHz`, `linewidth_mT`, ...).
//!
//! Grammar (sections are optional unless a command requires them):
//!
//! ```toml
//! schema_version = 1
//! [system]        exchange_J_cm1, dipolar_d_MHz, zfs_D_MHz, zfs_E_MHz, g_fp,
//!                 g_vo_perp, g_vo_par, A_vo_perp_MHz, A_vo_par_MHz,
//!                 alpha_deg, beta_deg, alpha_sign
//! [polarization]  model = "photo-quartet" | "thermal" | "triplet-zero-field"
//! [sweep]         mw_frequency_GHz, field_start_mT, field_stop_mT, n_points,
//!                 lineshape, linewidth_mT, resonance_step_mT, slope_floor_MHz_per_mT
//! [scheme]        type = "powder" | "aligned" | "single"
//! [fit]           preset, restarts, max_iterations, tolerance, seed,
//!                 lower, upper, [[fit.dataset]] with an optional [fit.dataset.scheme]
//! [kinetics]      lifetimes_ps, irf_fwhm_ps, t0_ps, solvent_component, ...
//! [output]        directory, prefix, plot_script
//! ```
//!
//! Alternative units are accepted where listed in the unit tables below and
//! converted to the canonical (first) unit on parsing.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::fitting::{FitDataset, FitParameters, FitPreset, FitProblem, OptimizerSettings};
use crate::kinetics::{KineticFitSettings, SequentialModel};
use crate::polarization::{NuclearPopulations, PolarizationSpec, QuartetPolarizationParams};
use crate::spectrum::{AlignmentMode, FieldSweepConfig, Lineshape, OrientationScheme, Spectrum};
use crate::spin::{AlphaSign, FrameGeometry, InteractionTensor, LabOrientation, SpinSystemSpec};
use crate::units::{deg, MHZ_PER_CM1};

pub const SCHEMA_VERSION: i64 = 1;

const SECTIONS: [&str; 7] = [
    "system",
    "polarization",
    "sweep",
    "scheme",
    "fit",
    "kinetics",
    "output",
];

type Units = &'static [(&'static str, f64)];

const CM1: Units = &[("cm1", 1.0), ("MHz", 1.0 / MHZ_PER_CM1)];
const MHZ: Units = &[("MHz", 1.0), ("GHz", 1.0e3), ("cm1", MHZ_PER_CM1)];
const GHZ: Units = &[("GHz", 1.0), ("MHz", 1.0e-3)];
const MT: Units = &[("mT", 1.0), ("G", 0.1), ("T", 1.0e3)];
const DEG: Units = &[("deg", 1.0), ("rad", 180.0 / std::f64::consts::PI)];
const KELVIN: Units = &[("K", 1.0)];
const PS: Units = &[
    ("ps", 1.0),
    ("fs", 1.0e-3),
    ("ns", 1.0e3),
    ("us", 1.0e6),
    ("ms", 1.0e9),
];
const SLOPE: Units = &[("MHz_per_mT", 1.0)];

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub exchange_cm1: f64,
    pub dipolar_mhz: f64,
    pub zfs_d_mhz: f64,
    pub zfs_e_mhz: f64,
    pub g_fp: f64,
    pub g_vo_perp: f64,
    pub g_vo_par: f64,
    pub a_vo_perp_mhz: f64,
    pub a_vo_par_mhz: f64,
    pub alpha_deg: f64,
    pub beta_deg: f64,
    pub alpha_sign: AlphaSign,
}

impl SystemConfig {
    pub fn to_spec(&self) -> Result<SpinSystemSpec<f64>> {
        let frames = FrameGeometry::from_degrees(self.alpha_deg, self.beta_deg, self.alpha_sign)?;
        let spec = SpinSystemSpec::triplet_doublet(
            self.exchange_cm1,
            self.dipolar_mhz,
            self.zfs_d_mhz,
            self.zfs_e_mhz,
            self.g_fp,
            (self.g_vo_perp, self.g_vo_par),
            (self.a_vo_perp_mhz, self.a_vo_par_mhz),
            frames,
        );
        spec.validate()?;
        Ok(spec)
    }

    /// ZFS tensor of the isolated triplet in its own principal frame.
    pub fn triplet_zfs(&self) -> InteractionTensor<f64> {
        InteractionTensor::zero_field_splitting(
            self.zfs_d_mhz,
            self.zfs_e_mhz,
            crate::spin::EulerAngles::identity(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolarizationConfig {
    PhotoQuartet {
        a: [f64; 3],
        r: [f64; 3],
        rho_n: Vec<f64>,
        doublet_polarization: f64,
        frame_rotation_deg: f64,
    },
    Thermal {
        temperature_k: f64,
    },
    TripletZeroField {
        p: [f64; 3],
    },
}

impl PolarizationConfig {
    pub fn to_spec(&self) -> Result<PolarizationSpec<f64>> {
        let spec = match self {
            Self::PhotoQuartet {
                a,
                r,
                rho_n,
                doublet_polarization,
                frame_rotation_deg,
            } => PolarizationSpec::PhotoQuartet {
                params: QuartetPolarizationParams::new(*a, *r),
                nuclear: NuclearPopulations::new(rho_n.clone())?,
                doublet_polarization: *doublet_polarization,
                frame_rotation: deg(*frame_rotation_deg),
            },
            Self::Thermal { temperature_k } => PolarizationSpec::Thermal {
                temperature_k: *temperature_k,
            },
            Self::TripletZeroField { p } => PolarizationSpec::TripletZeroField { p: *p },
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub mw_frequency_ghz: f64,
    pub field_start_mt: f64,
    pub field_stop_mt: f64,
    pub n_points: usize,
    pub lineshape: Lineshape,
    pub linewidth_mt: f64,
    pub resonance_step_mt: f64,
    pub slope_floor: f64,
}

impl SweepConfig {
    pub fn to_sweep(&self) -> FieldSweepConfig<f64> {
        FieldSweepConfig {
            mw_frequency_ghz: self.mw_frequency_ghz,
            field_start: self.field_start_mt,
            field_stop: self.field_stop_mt,
            n_points: self.n_points,
            lineshape: self.lineshape,
            linewidth: self.linewidth_mt,
            resonance_step: self.resonance_step_mt,
            slope_floor: self.slope_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SchemeConfig {
    Powder {
        grid_size: usize,
    },
    Aligned {
        mode: AlignmentMode,
        sigma_deg: f64,
        n_samples: usize,
        n_azimuth: usize,
    },
    Single {
        theta_deg: f64,
        phi_deg: f64,
    },
}

impl SchemeConfig {
    pub fn to_scheme(&self) -> Result<OrientationScheme<f64>> {
        let s = match self {
            Self::Powder { grid_size } => OrientationScheme::Powder {
                grid_size: *grid_size,
            },
            Self::Aligned {
                mode,
                sigma_deg,
                n_samples,
                n_azimuth,
            } => OrientationScheme::Aligned {
                mode: *mode,
                sigma: deg(*sigma_deg),
                n_samples: *n_samples,
                n_azimuth: *n_azimuth,
            },
            Self::Single { theta_deg, phi_deg } => {
                OrientationScheme::Single(LabOrientation::new(deg(*theta_deg), deg(*phi_deg))?)
            }
        };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitDatasetConfig {
    pub label: String,
    pub weight: f64,
    pub fixed_scale: Option<f64>,
    /// Falls back to the top-level [scheme] when absent.
    pub scheme: Option<SchemeConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub preset: FitPreset,
    pub restarts: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
    pub lower: [f64; 6],
    pub upper: [f64; 6],
    pub datasets: Vec<FitDatasetConfig>,
}

impl FitConfig {
    pub fn optimizer(&self) -> OptimizerSettings<f64> {
        OptimizerSettings {
            max_iterations: self.max_iterations,
            restarts: self.restarts,
            tolerance: self.tolerance,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KineticsConfig {
    pub lifetimes_ps: Vec<f64>,
    pub irf_fwhm_ps: f64,
    pub t0_ps: f64,
    pub solvent_component: bool,
    pub restarts: usize,
    pub max_iterations: usize,
    pub seed: u64,
    pub lifetime_factor: f64,
}

impl KineticsConfig {
    pub fn model(&self) -> SequentialModel<f64> {
        SequentialModel {
            lifetimes: self.lifetimes_ps.clone(),
            irf_fwhm: self.irf_fwhm_ps,
            t0: self.t0_ps,
            solvent_component: self.solvent_component,
        }
    }

    pub fn settings(&self) -> KineticFitSettings<f64> {
        KineticFitSettings {
            restarts: self.restarts,
            max_iterations: self.max_iterations,
            seed: self.seed,
            lifetime_factor: self.lifetime_factor,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub directory: String,
    pub prefix: String,
    pub plot_script: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: "out".into(),
            prefix: "run".into(),
            plot_script: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub schema_version: i64,
    pub system: Option<SystemConfig>,
    pub polarization: Option<PolarizationConfig>,
    pub sweep: Option<SweepConfig>,
    pub scheme: Option<SchemeConfig>,
    pub fit: Option<FitConfig>,
    pub kinetics: Option<KineticsConfig>,
    pub output: Option<OutputConfig>,
}

/// Sections each command needs.
pub fn required_sections(command: &str) -> &'static [&'static str] {
    match command {
        "simulate" => &["system", "polarization", "sweep", "scheme"],
        "fit-trepr" => &["system", "sweep", "fit"],
        "fit-ta" => &["kinetics"],
        "validate" => &["system"],
        _ => &[],
    }
}

impl RunConfig {
    /// Errors naming every section `command` needs but the file lacks.
    pub fn require(&self, command: &str) -> Result<()> {
        let missing: Vec<String> = required_sections(command)
            .iter()
            .filter(|s| !self.has(s))
            .map(|s| format!("missing section [{s}] required by `{command}`"))
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(missing))
        }
    }

    fn has(&self, section: &str) -> bool {
        match section {
            "system" => self.system.is_some(),
            "polarization" => self.polarization.is_some(),
            "sweep" => self.sweep.is_some(),
            "scheme" => self.scheme.is_some(),
            "fit" => self.fit.is_some(),
            "kinetics" => self.kinetics.is_some(),
            "output" => self.output.is_some(),
            _ => false,
        }
    }

    pub fn output(&self) -> OutputConfig {
        self.output.clone().unwrap_or_default()
    }
}

/// Builds the fit of `spectra` (in [[fit.dataset]] order). The starting
/// point is the photo-quartet [polarization] section when present.
pub fn fit_problem(cfg: &RunConfig, spectra: Vec<Spectrum<f64>>) -> Result<FitProblem<f64>> {
    cfg.require("fit-trepr")?;
    let (Some(system), Some(sweep), Some(fit)) = (&cfg.system, &cfg.sweep, &cfg.fit) else {
        unreachable!("checked by require")
    };
    let mut errors = Vec::new();
    let specs: Vec<FitDatasetConfig> = if fit.datasets.is_empty() {
        (0..spectra.len())
            .map(|i| FitDatasetConfig {
                label: format!("dataset{i}"),
                weight: 1.0,
                fixed_scale: None,
                scheme: None,
            })
            .collect()
    } else {
        fit.datasets.clone()
    };
    if specs.len() != spectra.len() {
        errors.push(format!(
            "[fit] declares {} datasets but {} data files were given",
            specs.len(),
            spectra.len()
        ));
    }
    let mut datasets = Vec::new();
    for (d, s) in specs.iter().zip(spectra) {
        let Some(scheme) = d.scheme.as_ref().or(cfg.scheme.as_ref()) else {
            errors.push(format!(
                "dataset '{}' has no scheme and there is no [scheme] section",
                d.label
            ));
            continue;
        };
        match scheme.to_scheme() {
            Ok(sc) => {
                let mut ds = FitDataset::new(d.label.clone(), s, sc).with_weight(d.weight);
                ds.fixed_scale = d.fixed_scale;
                datasets.push(ds);
            }
            Err(e) => errors.push(format!("dataset '{}': {e}", d.label)),
        }
    }
    if !errors.is_empty() {
        return Err(Error::Config(errors));
    }
    let (initial, doublet, rotation) = match &cfg.polarization {
        Some(PolarizationConfig::PhotoQuartet {
            a,
            r,
            rho_n,
            doublet_polarization,
            frame_rotation_deg,
        }) => (
            FitParameters {
                polarization: QuartetPolarizationParams::new(*a, *r),
                nuclear: NuclearPopulations::new(rho_n.clone())?,
            },
            *doublet_polarization,
            deg(*frame_rotation_deg),
        ),
        Some(_) => {
            return Err(Error::invalid(
                "fit-trepr needs a photo-quartet [polarization] (or none)",
            ))
        }
        None => (
            FitParameters {
                polarization: QuartetPolarizationParams::new([0.1, 0.0, 0.0], [0.0; 3]),
                nuclear: NuclearPopulations::uniform(8),
            },
            0.0,
            0.0,
        ),
    };
    let mut problem = FitProblem::new(
        system.to_spec()?,
        sweep.to_sweep(),
        datasets,
        initial,
        fit.preset,
    );
    problem.bounds = std::array::from_fn(|k| (fit.lower[k], fit.upper[k]));
    problem.doublet_polarization = doublet;
    problem.frame_rotation = rotation;
    problem.optimizer = fit.optimizer();
    problem.validate()?;
    Ok(problem)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

/// Parses and validates, collecting every violation.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let root: Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(vec![format!("syntax: {}", e.message())]))?;
    let mut errors = Vec::new();
    let schema_version = match root.get("schema_version") {
        Some(Value::Integer(v)) if *v == SCHEMA_VERSION => *v,
        Some(Value::Integer(v)) => {
            errors.push(format!(
                "schema_version {v} is not supported (expected {SCHEMA_VERSION})"
            ));
            *v
        }
        Some(_) => {
            errors.push("schema_version must be an integer".into());
            0
        }
        None => {
            errors.push("schema_version is mandatory".into());
            0
        }
    };
    for (k, v) in &root {
        if k == "schema_version" {
            continue;
        }
        if !SECTIONS.contains(&k.as_str()) {
            errors.push(format!("unknown section [{k}]"));
        } else if !v.is_table() {
            errors.push(format!("[{k}] must be a table"));
        }
    }
    let section = |name: &str| root.get(name).and_then(Value::as_table);
    let system = section("system").map(|t| parse_system(t, &mut errors));
    let polarization = section("polarization").map(|t| parse_polarization(t, &mut errors));
    let sweep = section("sweep").map(|t| parse_sweep(t, &mut errors));
    let scheme = section("scheme").map(|t| parse_scheme(t, "scheme", &mut errors));
    let fit = section("fit").map(|t| parse_fit(t, &mut errors));
    let kinetics = section("kinetics").map(|t| parse_kinetics(t, &mut errors));
    let output = section("output").map(|t| parse_output(t, &mut errors));
    if !errors.is_empty() {
        return Err(Error::Config(errors));
    }
    Ok(RunConfig {
        schema_version,
        system,
        polarization,
        sweep,
        scheme,
        fit,
        kinetics,
        output,
    })
}

/// Key reader for one table; tracks consumed keys so leftovers can be
/// reported as unknown.
struct Reader<'a> {
    name: String,
    table: &'a Table,
    used: BTreeSet<String>,
    quantities: Vec<(&'static str, Units)>,
    errors: &'a mut Vec<String>,
}

impl<'a> Reader<'a> {
    fn new(name: &str, table: &'a Table, errors: &'a mut Vec<String>) -> Self {
        Self {
            name: name.to_string(),
            table,
            used: BTreeSet::new(),
            quantities: Vec::new(),
            errors,
        }
    }

    fn err(&mut self, key: &str, msg: impl std::fmt::Display) {
        self.errors.push(format!("[{}] {key}: {msg}", self.name));
    }

    fn raw(&mut self, key: &str) -> Option<&'a Value> {
        let v = self.table.get(key);
        if v.is_some() {
            self.used.insert(key.to_string());
        }
        v
    }

    fn number_value(&mut self, key: &str, v: &Value) -> Option<f64> {
        match v {
            Value::Float(f) => Some(*f),
            Value::Integer(i) => Some(*i as f64),
            _ => {
                self.err(key, "expected a number");
                None
            }
        }
    }

    fn number(&mut self, key: &str) -> Option<f64> {
        let v = self.raw(key)?;
        self.number_value(key, v)
    }

    fn number_or(&mut self, key: &str, default: f64) -> f64 {
        self.number(key).unwrap_or(default)
    }

    fn required_number(&mut self, key: &str) -> f64 {
        match self.number(key) {
            Some(v) => v,
            None => {
                if !self.table.contains_key(key) {
                    self.err(key, "required key is missing");
                }
                f64::NAN
            }
        }
    }

    fn integer(&mut self, key: &str, default: i64) -> i64 {
        match self.raw(key) {
            None => default,
            Some(Value::Integer(i)) => *i,
            Some(_) => {
                self.err(key, "expected an integer");
                default
            }
        }
    }

    fn count(&mut self, key: &str, default: usize, min: usize) -> usize {
        let v = self.integer(key, default as i64);
        if v < min as i64 {
            self.err(key, format!("must be >= {min}"));
            return default;
        }
        v as usize
    }

    fn string(&mut self, key: &str) -> Option<String> {
        match self.raw(key)? {
            Value::String(s) => Some(s.clone()),
            _ => {
                self.err(key, "expected a string");
                None
            }
        }
    }

    fn boolean(&mut self, key: &str, default: bool) -> bool {
        match self.raw(key) {
            None => default,
            Some(Value::Boolean(b)) => *b,
            Some(_) => {
                self.err(key, "expected true or false");
                default
            }
        }
    }

    fn numbers(&mut self, key: &str) -> Option<Vec<f64>> {
        match self.raw(key)? {
            Value::Array(a) => {
                let mut out = Vec::with_capacity(a.len());
                for v in a {
                    out.push(self.number_value(key, v)?);
                }
                Some(out)
            }
            _ => {
                self.err(key, "expected an array of numbers");
                None
            }
        }
    }

    /// Reads `base_<unit>` for any accepted unit, converted to the first one.
    fn quantity(&mut self, base: &'static str, units: Units) -> Option<f64> {
        self.quantities.push((base, units));
        let mut found = None;
        for (unit, factor) in units {
            let key = format!("{base}_{unit}");
            if let Some(v) = self.number(&key) {
                if found.is_some() {
                    self.err(&key, format!("{base} given more than once"));
                }
                found = Some(v * factor);
            }
        }
        found
    }

    fn required_quantity(&mut self, base: &'static str, units: Units) -> f64 {
        match self.quantity(base, units) {
            Some(v) => v,
            None => {
                if !self.table.contains_key(base) {
                    self.err(&format!("{base}_{}", units[0].0), "required key is missing");
                }
                f64::NAN
            }
        }
    }

    fn quantities_list(&mut self, base: &'static str, units: Units) -> Option<Vec<f64>> {
        self.quantities.push((base, units));
        for (unit, factor) in units {
            let key = format!("{base}_{unit}");
            if self.table.contains_key(&key) {
                return self
                    .numbers(&key)
                    .map(|v| v.into_iter().map(|x| x * factor).collect());
            }
        }
        None
    }

    fn check(&mut self, ok: bool, key: &str, msg: &str) {
        if !ok {
            self.err(key, msg);
        }
    }

    /// Reports keys never read, recognizing quantities written without a unit.
    fn finish(self) {
        let name = self.name.clone();
        for key in self.table.keys() {
            if self.used.contains(key)
                || (name == "fit" && key == "dataset")
                || (name.starts_with("fit.dataset") && key == "scheme")
            {
                continue;
            }
            let msg = if let Some((base, units)) = self.quantities.iter().find(|(b, _)| b == key) {
                let opts: Vec<String> = units.iter().map(|(u, _)| format!("{base}_{u}")).collect();
                format!("missing unit suffix (use {})", opts.join(" or "))
            } else if let Some((base, units)) = self
                .quantities
                .iter()
                .find(|(b, _)| key.starts_with(&format!("{b}_")))
            {
                let opts: Vec<&str> = units.iter().map(|(u, _)| *u).collect();
                format!(
                    "unsupported unit for {base} (accepted: {})",
                    opts.join(", ")
                )
            } else {
                "unknown key".to_string()
            };
            self.errors.push(format!("[{name}] {key}: {msg}"));
        }
    }
}

fn finite(v: f64) -> bool {
    v.is_finite()
}

fn parse_system(t: &Table, errors: &mut Vec<String>) -> SystemConfig {
    let mut r = Reader::new("system", t, errors);
    let c = SystemConfig {
        exchange_cm1: r.required_quantity("exchange_J", CM1),
        dipolar_mhz: r.required_quantity("dipolar_d", MHZ),
        zfs_d_mhz: r.required_quantity("zfs_D", MHZ),
        zfs_e_mhz: r.required_quantity("zfs_E", MHZ),
        g_fp: r.required_number("g_fp"),
        g_vo_perp: r.required_number("g_vo_perp"),
        g_vo_par: r.required_number("g_vo_par"),
        a_vo_perp_mhz: r.required_quantity("A_vo_perp", MHZ),
        a_vo_par_mhz: r.required_quantity("A_vo_par", MHZ),
        alpha_deg: r.required_quantity("alpha", DEG),
        beta_deg: r.required_quantity("beta", DEG),
        alpha_sign: match r.string("alpha_sign").as_deref() {
            None | Some("positive") => AlphaSign::Positive,
            Some("negative") => AlphaSign::Negative,
            Some(other) => {
                r.err(
                    "alpha_sign",
                    format!("expected \"positive\" or \"negative\", got \"{other}\""),
                );
                AlphaSign::Positive
            }
        },
    };
    for (key, v) in [
        ("g_fp", c.g_fp),
        ("g_vo_perp", c.g_vo_perp),
        ("g_vo_par", c.g_vo_par),
    ] {
        if finite(v) {
            r.check(v > 0.0 && v < 10.0, key, "g must lie in (0, 10)");
        }
    }
    if finite(c.zfs_d_mhz) && finite(c.zfs_e_mhz) {
        r.check(
            c.zfs_e_mhz.abs() <= c.zfs_d_mhz.abs() / 3.0 + 1e-9,
            "zfs_E_MHz",
            "|E| must not exceed |D|/3",
        );
    }
    for (key, v) in [("alpha_deg", c.alpha_deg), ("beta_deg", c.beta_deg)] {
        if finite(v) {
            r.check(
                (0.0..180.0).contains(&v),
                key,
                "angle must lie in [0, 180) deg",
            );
        }
    }
    r.finish();
    c
}

fn parse_polarization(t: &Table, errors: &mut Vec<String>) -> PolarizationConfig {
    let mut r = Reader::new("polarization", t, errors);
    let model = r.string("model").unwrap_or_else(|| "photo-quartet".into());
    let c = match model.as_str() {
        "photo-quartet" => {
            let a = [
                r.required_number("a1"),
                r.required_number("a2"),
                r.required_number("a3"),
            ];
            let rr = [
                r.required_number("r1"),
                r.required_number("r2"),
                r.required_number("r3"),
            ];
            let rho_n = r
                .numbers("rho_n")
                .unwrap_or_else(|| NuclearPopulations::<f64>::uniform(8).as_slice().to_vec());
            if rho_n.len() != 8 {
                r.err(
                    "rho_n",
                    format!("expected 8 nuclear populations, got {}", rho_n.len()),
                );
            } else if NuclearPopulations::new(rho_n.clone()).is_err() {
                r.err("rho_n", "populations must be >= 0 and sum to 1");
            }
            PolarizationConfig::PhotoQuartet {
                a,
                r: rr,
                rho_n,
                doublet_polarization: r.number_or("doublet_polarization", 0.0),
                frame_rotation_deg: r.quantity("frame_rotation", DEG).unwrap_or(0.0),
            }
        }
        "thermal" => {
            let temperature_k = r.required_quantity("temperature", KELVIN);
            if finite(temperature_k) {
                r.check(
                    temperature_k > 0.0,
                    "temperature_K",
                    "temperature must be > 0 K",
                );
            }
            PolarizationConfig::Thermal { temperature_k }
        }
        "triplet-zero-field" => {
            let p = [
                r.required_number("p_x"),
                r.required_number("p_y"),
                r.required_number("p_z"),
            ];
            if p.iter().all(|v| finite(*v)) {
                let ok = p.iter().all(|v| *v >= 0.0) && (p.iter().sum::<f64>() - 1.0).abs() < 1e-6;
                r.check(
                    ok,
                    "p_x",
                    "zero-field populations must be >= 0 and sum to 1",
                );
            }
            PolarizationConfig::TripletZeroField { p }
        }
        other => {
            r.err("model", format!("unknown model \"{other}\""));
            PolarizationConfig::Thermal {
                temperature_k: f64::NAN,
            }
        }
    };
    r.finish();
    c
}

fn parse_sweep(t: &Table, errors: &mut Vec<String>) -> SweepConfig {
    let mut r = Reader::new("sweep", t, errors);
    let lineshape = match r.string("lineshape") {
        None => Lineshape::Lorentzian,
        Some(s) => Lineshape::parse(&s).unwrap_or_else(|e| {
            r.err("lineshape", e);
            Lineshape::Lorentzian
        }),
    };
    let c = SweepConfig {
        mw_frequency_ghz: r.required_quantity("mw_frequency", GHZ),
        field_start_mt: r.required_quantity("field_start", MT),
        field_stop_mt: r.required_quantity("field_stop", MT),
        n_points: r.count("n_points", 1024, 2),
        lineshape,
        linewidth_mt: r.required_quantity("linewidth", MT),
        resonance_step_mt: r.quantity("resonance_step", MT).unwrap_or(1.0),
        slope_floor: r.quantity("slope_floor", SLOPE).unwrap_or(0.1),
    };
    if finite(c.linewidth_mt) {
        r.check(
            c.linewidth_mt > 0.0,
            "linewidth_mT",
            "linewidth must be > 0",
        );
    }
    if finite(c.mw_frequency_ghz) {
        r.check(
            c.mw_frequency_ghz > 0.0,
            "mw_frequency_GHz",
            "frequency must be > 0",
        );
    }
    if finite(c.field_start_mt) && finite(c.field_stop_mt) {
        r.check(
            c.field_start_mt >= 0.0,
            "field_start_mT",
            "field_start must be >= 0",
        );
        r.check(
            c.field_stop_mt > c.field_start_mt,
            "field_stop_mT",
            "field_stop must exceed field_start",
        );
    }
    r.check(
        c.resonance_step_mt > 0.0,
        "resonance_step_mT",
        "resonance step must be > 0",
    );
    r.check(
        c.slope_floor > 0.0,
        "slope_floor_MHz_per_mT",
        "slope floor must be > 0",
    );
    r.finish();
    c
}

fn parse_scheme(t: &Table, name: &str, errors: &mut Vec<String>) -> SchemeConfig {
    let mut r = Reader::new(name, t, errors);
    let kind = r.string("type").unwrap_or_else(|| {
        r.err("type", "required key is missing");
        "powder".into()
    });
    let c = match kind.as_str() {
        "powder" => SchemeConfig::Powder {
            grid_size: r.count("grid_size", 256, 16),
        },
        "aligned" => {
            let mode = match r.string("mode") {
                Some(m) => AlignmentMode::parse(&m).unwrap_or_else(|e| {
                    r.err("mode", e);
                    AlignmentMode::Parallel
                }),
                None => {
                    r.err("mode", "required key is missing");
                    AlignmentMode::Parallel
                }
            };
            let sigma_deg = r.quantity("sigma", DEG).unwrap_or(10.0);
            r.check(sigma_deg >= 0.0, "sigma_deg", "sigma must be >= 0");
            SchemeConfig::Aligned {
                mode,
                sigma_deg,
                n_samples: r.count("n_samples", 8, 8),
                n_azimuth: r.count("n_azimuth", OrientationScheme::<f64>::DEFAULT_AZIMUTH, 1),
            }
        }
        "single" => {
            let theta_deg = r.required_quantity("theta", DEG);
            let phi_deg = r.quantity("phi", DEG).unwrap_or(0.0);
            if finite(theta_deg) {
                r.check(
                    (0.0..=180.0).contains(&theta_deg),
                    "theta_deg",
                    "theta must lie in [0, 180] deg",
                );
            }
            SchemeConfig::Single { theta_deg, phi_deg }
        }
        other => {
            r.err("type", format!("unknown scheme \"{other}\""));
            SchemeConfig::Powder { grid_size: 256 }
        }
    };
    r.finish();
    c
}

fn parse_fit(t: &Table, errors: &mut Vec<String>) -> FitConfig {
    let mut r = Reader::new("fit", t, errors);
    let preset = match r.string("preset") {
        None => FitPreset::ElectronicNuclear,
        Some(s) => FitPreset::parse(&s).unwrap_or_else(|| {
            r.err(
                "preset",
                format!("expected \"electronic\" or \"electronic+nuclear\", got \"{s}\""),
            );
            FitPreset::ElectronicNuclear
        }),
    };
    let defaults = OptimizerSettings::<f64>::default();
    let bounds = |key: &str, default: f64, r: &mut Reader| -> [f64; 6] {
        match r.numbers(key) {
            Some(v) if v.len() == 6 => [v[0], v[1], v[2], v[3], v[4], v[5]],
            Some(v) => {
                r.err(key, format!("expected 6 values (a1..r3), got {}", v.len()));
                [default; 6]
            }
            None => [default; 6],
        }
    };
    let lower = bounds("lower", -1.0, &mut r);
    let upper = bounds("upper", 1.0, &mut r);
    if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
        r.err("lower", "each lower bound must be below its upper bound");
    }
    let tolerance = r.number_or("tolerance", defaults.tolerance);
    r.check(tolerance > 0.0, "tolerance", "tolerance must be > 0");
    let seed = r.integer("seed", defaults.seed as i64);
    r.check(seed >= 0, "seed", "seed must be >= 0");
    let mut c = FitConfig {
        preset,
        restarts: r.count("restarts", defaults.restarts, 1),
        max_iterations: r.count("max_iterations", defaults.max_iterations, 1),
        tolerance,
        seed: seed.max(0) as u64,
        lower,
        upper,
        datasets: Vec::new(),
    };
    r.finish();
    match t.get("dataset") {
        None => {}
        Some(Value::Array(items)) => {
            for (i, item) in items.iter().enumerate() {
                match item.as_table() {
                    Some(dt) => c.datasets.push(parse_fit_dataset(dt, i, errors)),
                    None => errors.push(format!("[[fit.dataset]] entry {i} must be a table")),
                }
            }
        }
        Some(_) => errors.push("[fit] dataset must be written as [[fit.dataset]] tables".into()),
    }
    c
}

fn parse_fit_dataset(t: &Table, index: usize, errors: &mut Vec<String>) -> FitDatasetConfig {
    let name = format!("fit.dataset.{index}");
    let scheme = match t.get("scheme") {
        Some(Value::Table(st)) => Some(parse_scheme(st, &format!("{name}.scheme"), errors)),
        Some(_) => {
            errors.push(format!("[{name}] scheme must be a table"));
            None
        }
        None => None,
    };
    let mut r = Reader::new(&name, t, errors);
    let label = r
        .string("label")
        .unwrap_or_else(|| format!("dataset{index}"));
    let weight = r.number_or("weight", 1.0);
    r.check(weight > 0.0, "weight", "weight must be > 0");
    let fixed_scale = r.number("fixed_scale");
    r.finish();
    FitDatasetConfig {
        label,
        weight,
        fixed_scale,
        scheme,
    }
}

fn parse_kinetics(t: &Table, errors: &mut Vec<String>) -> KineticsConfig {
    let mut r = Reader::new("kinetics", t, errors);
    let defaults = KineticFitSettings::<f64>::default();
    let lifetimes_ps = r.quantities_list("lifetimes", PS).unwrap_or_else(|| {
        r.err("lifetimes_ps", "required key is missing");
        vec![]
    });
    if !lifetimes_ps.is_empty() {
        r.check(
            lifetimes_ps.len() <= 4,
            "lifetimes_ps",
            "at most 4 compartments are supported",
        );
        r.check(
            lifetimes_ps.iter().all(|v| *v > 0.0 && v.is_finite()),
            "lifetimes_ps",
            "lifetimes must be > 0",
        );
    }
    let irf_fwhm_ps = r.quantity("irf_fwhm", PS).unwrap_or(0.0);
    r.check(irf_fwhm_ps >= 0.0, "irf_fwhm_ps", "IRF width must be >= 0");
    let seed = r.integer("seed", defaults.seed as i64);
    r.check(seed >= 0, "seed", "seed must be >= 0");
    let lifetime_factor = r.number_or("lifetime_factor", defaults.lifetime_factor);
    r.check(
        lifetime_factor > 1.0,
        "lifetime_factor",
        "lifetime_factor must be > 1",
    );
    let c = KineticsConfig {
        lifetimes_ps,
        irf_fwhm_ps,
        t0_ps: r.quantity("t0", PS).unwrap_or(0.0),
        solvent_component: r.boolean("solvent_component", false),
        restarts: r.count("restarts", defaults.restarts, 1),
        max_iterations: r.count("max_iterations", defaults.max_iterations, 1),
        seed: seed.max(0) as u64,
        lifetime_factor,
    };
    r.finish();
    c
}

fn parse_output(t: &Table, errors: &mut Vec<String>) -> OutputConfig {
    let mut r = Reader::new("output", t, errors);
    let d = OutputConfig::default();
    let c = OutputConfig {
        directory: r.string("directory").unwrap_or(d.directory),
        prefix: r.string("prefix").unwrap_or(d.prefix),
        plot_script: r.boolean("plot_script", d.plot_script),
    };
    r.check(!c.prefix.is_empty(), "prefix", "prefix must not be empty");
    r.finish();
    c
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn quoted(s: &str) -> String {
    Value::String(s.to_string()).to_string()
}

fn list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| num(*x)).collect();
    format!("[{}]", items.join(", "))
}

fn emit_scheme(out: &mut String, s: &SchemeConfig) {
    match s {
        SchemeConfig::Powder { grid_size } => {
            let _ = writeln!(out, "type = \"powder\"\ngrid_size = {grid_size}");
        }
        SchemeConfig::Aligned {
            mode,
            sigma_deg,
            n_samples,
            n_azimuth,
        } => {
            let _ = writeln!(
                out,
                "type = \"aligned\"\nmode = {}\nsigma_deg = {}\nn_samples = {n_samples}\nn_azimuth = {n_azimuth}",
                quoted(mode.as_str()),
                num(*sigma_deg)
            );
        }
        SchemeConfig::Single { theta_deg, phi_deg } => {
            let _ = writeln!(
                out,
                "type = \"single\"\ntheta_deg = {}\nphi_deg = {}",
                num(*theta_deg),
                num(*phi_deg)
            );
        }
    }
}

/// Canonical text: fixed section and key order, canonical units, every
/// defaulted key written out. `parse(emit(c)) == c`.
pub fn emit_config(c: &RunConfig) -> String {
    let mut o = String::new();
    let _ = writeln!(o, "schema_version = {}", c.schema_version);
    if let Some(s) = &c.system {
        let _ = writeln!(o, "\n[system]");
        let _ = writeln!(o, "exchange_J_cm1 = {}", num(s.exchange_cm1));
        let _ = writeln!(o, "dipolar_d_MHz = {}", num(s.dipolar_mhz));
        let _ = writeln!(o, "zfs_D_MHz = {}", num(s.zfs_d_mhz));
        let _ = writeln!(o, "zfs_E_MHz = {}", num(s.zfs_e_mhz));
        let _ = writeln!(o, "g_fp = {}", num(s.g_fp));
        let _ = writeln!(o, "g_vo_perp = {}", num(s.g_vo_perp));
        let _ = writeln!(o, "g_vo_par = {}", num(s.g_vo_par));
        let _ = writeln!(o, "A_vo_perp_MHz = {}", num(s.a_vo_perp_mhz));
        let _ = writeln!(o, "A_vo_par_MHz = {}", num(s.a_vo_par_mhz));
        let _ = writeln!(o, "alpha_deg = {}", num(s.alpha_deg));
        let _ = writeln!(o, "beta_deg = {}", num(s.beta_deg));
        let _ = writeln!(o, "alpha_sign = {}", quoted(s.alpha_sign.as_str()));
    }
    if let Some(p) = &c.polarization {
        let _ = writeln!(o, "\n[polarization]");
        match p {
            PolarizationConfig::PhotoQuartet {
                a,
                r,
                rho_n,
                doublet_polarization,
                frame_rotation_deg,
            } => {
                let _ = writeln!(o, "model = \"photo-quartet\"");
                for (k, v) in a.iter().enumerate() {
                    let _ = writeln!(o, "a{} = {}", k + 1, num(*v));
                }
                for (k, v) in r.iter().enumerate() {
                    let _ = writeln!(o, "r{} = {}", k + 1, num(*v));
                }
                let _ = writeln!(o, "rho_n = {}", list(rho_n));
                let _ = writeln!(o, "doublet_polarization = {}", num(*doublet_polarization));
                let _ = writeln!(o, "frame_rotation_deg = {}", num(*frame_rotation_deg));
            }
            PolarizationConfig::Thermal { temperature_k } => {
                let _ = writeln!(
                    o,
                    "model = \"thermal\"\ntemperature_K = {}",
                    num(*temperature_k)
                );
            }
            PolarizationConfig::TripletZeroField { p } => {
                let _ = writeln!(
                    o,
                    "model = \"triplet-zero-field\"\np_x = {}\np_y = {}\np_z = {}",
                    num(p[0]),
                    num(p[1]),
                    num(p[2])
                );
            }
        }
    }
    if let Some(s) = &c.sweep {
        let _ = writeln!(o, "\n[sweep]");
        let _ = writeln!(o, "mw_frequency_GHz = {}", num(s.mw_frequency_ghz));
        let _ = writeln!(o, "field_start_mT = {}", num(s.field_start_mt));
        let _ = writeln!(o, "field_stop_mT = {}", num(s.field_stop_mt));
        let _ = writeln!(o, "n_points = {}", s.n_points);
        let _ = writeln!(o, "lineshape = {}", quoted(s.lineshape.as_str()));
        let _ = writeln!(o, "linewidth_mT = {}", num(s.linewidth_mt));
        let _ = writeln!(o, "resonance_step_mT = {}", num(s.resonance_step_mt));
        let _ = writeln!(o, "slope_floor_MHz_per_mT = {}", num(s.slope_floor));
    }
    if let Some(s) = &c.scheme {
        let _ = writeln!(o, "\n[scheme]");
        emit_scheme(&mut o, s);
    }
    if let Some(f) = &c.fit {
        let _ = writeln!(o, "\n[fit]");
        let _ = writeln!(o, "preset = {}", quoted(f.preset.as_str()));
        let _ = writeln!(o, "restarts = {}", f.restarts);
        let _ = writeln!(o, "max_iterations = {}", f.max_iterations);
        let _ = writeln!(o, "tolerance = {}", num(f.tolerance));
        let _ = writeln!(o, "seed = {}", f.seed);
        let _ = writeln!(o, "lower = {}", list(&f.lower));
        let _ = writeln!(o, "upper = {}", list(&f.upper));
        for d in &f.datasets {
            let _ = writeln!(o, "\n[[fit.dataset]]");
            let _ = writeln!(o, "label = {}", quoted(&d.label));
            let _ = writeln!(o, "weight = {}", num(d.weight));
            if let Some(s) = d.fixed_scale {
                let _ = writeln!(o, "fixed_scale = {}", num(s));
            }
            if let Some(s) = &d.scheme {
                let _ = writeln!(o, "\n[fit.dataset.scheme]");
                emit_scheme(&mut o, s);
            }
        }
    }
    if let Some(k) = &c.kinetics {
        let _ = writeln!(o, "\n[kinetics]");
        let _ = writeln!(o, "lifetimes_ps = {}", list(&k.lifetimes_ps));
        let _ = writeln!(o, "irf_fwhm_ps = {}", num(k.irf_fwhm_ps));
        let _ = writeln!(o, "t0_ps = {}", num(k.t0_ps));
        let _ = writeln!(o, "solvent_component = {}", k.solvent_component);
        let _ = writeln!(o, "restarts = {}", k.restarts);
        let _ = writeln!(o, "max_iterations = {}", k.max_iterations);
        let _ = writeln!(o, "seed = {}", k.seed);
        let _ = writeln!(o, "lifetime_factor = {}", num(k.lifetime_factor));
    }
    if let Some(out) = &c.output {
        let _ = writeln!(o, "\n[output]");
        let _ = writeln!(o, "directory = {}", quoted(&out.directory));
        let _ = writeln!(o, "prefix = {}", quoted(&out.prefix));
        let _ = writeln!(o, "plot_script = {}", out.plot_script);
    }
    o
}
