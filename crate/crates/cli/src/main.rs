//! `spinpol` command-line interface.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 numerical
//! failure, 4 optimizer did not converge. Errors are printed to stderr as
//! `error[<category>]: <message>`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use spinpol::fitting::PreparedFit;
use spinpol::io::{
    emit_config, fit_problem, load_spectrum_csv, load_ta_csv, parse_config, plot_script,
    spectrum_csv, spectrum_metadata, ta_csv, FileDigest, PolarizationConfig, RunConfig,
    RunManifest,
};
use spinpol::kinetics::{global_fit, mixed_time_axis, synthetic_dataset, SequentialModel};
use spinpol::spectrum::Simulator;
use spinpol::spin::{point_dipole_coupling, validate_strong_exchange, ExchangeRegime};
use spinpol::{Error, Result};

#[derive(Parser)]
#[command(
    name = "spinpol",
    version,
    about = "Spin-polarized TREPR simulation, fitting and TA global analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the field-swept spectrum described by a config.
    Simulate {
        config: PathBuf,
        /// Output directory (overrides [output] directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit polarization parameters to one or more experimental spectra.
    FitTrepr {
        config: PathBuf,
        #[arg(required = true)]
        data: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Global sequential-kinetics fit of a transient-absorption surface.
    FitTa {
        config: PathBuf,
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Point-dipole coupling d (MHz) between two spins.
    Dipole {
        #[arg(long = "r-nm")]
        r_nm: f64,
        #[arg(long)]
        g1: f64,
        #[arg(long)]
        g2: f64,
    },
    /// Report whether the system is in the strong-exchange regime.
    Validate {
        config: PathBuf,
        /// Field for the Zeeman comparison; defaults to the sweep centre or 340 mT.
        #[arg(long = "field-mt")]
        field_mt: Option<f64>,
        #[arg(long, default_value_t = 10.0)]
        threshold: f64,
    },
    /// Write a synthetic sequential-model TA surface as CSV.
    SynthTa {
        #[arg(long)]
        out: PathBuf,
        #[arg(
            long = "lifetimes-ps",
            value_delimiter = ',',
            default_value = "1.1,46300000"
        )]
        lifetimes_ps: Vec<f64>,
        #[arg(long = "irf-fwhm-ps", default_value_t = 0.15)]
        irf_fwhm_ps: f64,
        #[arg(long, default_value_t = 0.01)]
        noise: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

/// Outcome of a command that may finish without converging.
enum Status {
    Done,
    NotConverged,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) => {
            eprintln!(
                "error[non-convergence]: optimizer stopped before convergence; best point written"
            );
            ExitCode::from(4)
        }
        Err(e) => {
            let category = e.category();
            eprintln!("error[{category}]: {e}");
            ExitCode::from(match category {
                "numerical" => 3,
                _ => 2,
            })
        }
    }
}

fn run(command: Command) -> Result<Status> {
    match command {
        Command::Simulate { config, out } => simulate(&config, out),
        Command::FitTrepr { config, data, out } => fit_trepr(&config, &data, out),
        Command::FitTa { config, data, out } => fit_ta(&config, &data, out),
        Command::Dipole { r_nm, g1, g2 } => {
            let d = point_dipole_coupling(r_nm, g1, g2)?;
            println!("{d:.3}");
            Ok(Status::Done)
        }
        Command::Validate {
            config,
            field_mt,
            threshold,
        } => validate(&config, field_mt, threshold),
        Command::SynthTa {
            out,
            lifetimes_ps,
            irf_fwhm_ps,
            noise,
            seed,
        } => synth_ta(&out, lifetimes_ps, irf_fwhm_ps, noise, seed),
    }
}

fn load(config: &Path, command: &str) -> Result<RunConfig> {
    let cfg = parse_config(config)?;
    cfg.require(command)?;
    Ok(cfg)
}

/// Writes run outputs and their manifest into one directory.
struct Outputs {
    dir: PathBuf,
    prefix: String,
    manifest: RunManifest,
    started: Instant,
}

impl Outputs {
    fn new(
        cfg: &RunConfig,
        out: Option<PathBuf>,
        command: Vec<String>,
        config: &Path,
    ) -> Result<Self> {
        let o = cfg.output();
        let dir = out.unwrap_or_else(|| PathBuf::from(&o.directory));
        std::fs::create_dir_all(&dir)?;
        let mut manifest = RunManifest::new(command, emit_config(cfg));
        manifest.inputs.push(FileDigest::of(config)?);
        Ok(Self {
            dir,
            prefix: o.prefix,
            manifest,
            started: Instant::now(),
        })
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.manifest.inputs.push(FileDigest::of(path)?);
        Ok(())
    }

    fn write(&mut self, suffix: &str, contents: &str) -> Result<PathBuf> {
        let path = self.dir.join(format!("{}_{suffix}", self.prefix));
        std::fs::write(&path, contents)?;
        self.manifest.outputs.push(FileDigest::of(&path)?);
        println!("wrote {}", path.display());
        Ok(path)
    }

    fn finish(mut self) -> Result<()> {
        self.manifest.wall_clock_s = self.started.elapsed().as_secs_f64();
        let path = self.dir.join(format!("{}_manifest.toml", self.prefix));
        std::fs::write(&path, self.manifest.to_toml())?;
        println!("wrote {}", path.display());
        Ok(())
    }
}

fn command_line(name: &str, args: &[&Path]) -> Vec<String> {
    std::iter::once(name.to_string())
        .chain(args.iter().map(|p| p.display().to_string()))
        .collect()
}

fn simulate(config: &Path, out: Option<PathBuf>) -> Result<Status> {
    let cfg = load(config, "simulate")?;
    let (Some(system), Some(pol), Some(sweep), Some(scheme)) =
        (&cfg.system, &cfg.polarization, &cfg.sweep, &cfg.scheme)
    else {
        unreachable!("checked by require")
    };
    let sweep = sweep.to_sweep();
    let scheme = scheme.to_scheme()?;
    let sim = match pol {
        PolarizationConfig::TripletZeroField { p } => {
            Simulator::triplet(system.g_fp, &system.triplet_zfs(), *p, &sweep)?
        }
        _ => Simulator::new(&system.to_spec()?, &pol.to_spec()?, &sweep)?,
    };
    let spectrum = sim.simulate(&scheme)?;
    let mut outputs = Outputs::new(&cfg, out, command_line("simulate", &[config]), config)?;
    let csv_path = outputs.write("spectrum.csv", &spectrum_csv(&spectrum))?;
    outputs.write("spectrum.meta.toml", &spectrum_metadata(&spectrum))?;
    if cfg.output().plot_script {
        let name = file_name(&csv_path);
        outputs.write(
            "plot.gp",
            &plot_script("simulated spectrum", &[name], "B (mT)"),
        )?;
    }
    outputs.finish()?;
    Ok(Status::Done)
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn fit_trepr(config: &Path, data: &[PathBuf], out: Option<PathBuf>) -> Result<Status> {
    let cfg = load(config, "fit-trepr")?;
    let spectra = data
        .iter()
        .enumerate()
        .map(|(index, p)| {
            load_spectrum_csv(p).map_err(|e| Error::Dataset {
                index,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let problem = fit_problem(&cfg, spectra)?;
    let prepared: PreparedFit<f64> = problem.prepare()?;
    let result = prepared.fit();
    let fitted = prepared.fitted_spectra(&result.parameters)?;

    let mut args: Vec<&Path> = vec![config];
    args.extend(data.iter().map(PathBuf::as_path));
    let mut outputs = Outputs::new(&cfg, out, command_line("fit-trepr", &args), config)?;
    for p in data {
        outputs.input(p)?;
    }
    outputs.write("fit_report.txt", &result.report())?;
    outputs.write("fit_iterates.csv", &result.iterates_csv())?;
    let mut names = Vec::new();
    for (s, label) in fitted.iter().zip(&result.labels) {
        let p = outputs.write(&format!("fit_{label}.csv"), &spectrum_csv(s))?;
        names.push(file_name(&p));
    }
    if cfg.output().plot_script {
        outputs.write(
            "fit_plot.gp",
            &plot_script("best-fit spectra", &names, "B (mT)"),
        )?;
    }
    outputs.finish()?;
    print!("{}", result.report());
    Ok(if result.converged {
        Status::Done
    } else {
        Status::NotConverged
    })
}

fn fit_ta(config: &Path, data: &Path, out: Option<PathBuf>) -> Result<Status> {
    let cfg = load(config, "fit-ta")?;
    let kin = cfg.kinetics.as_ref().expect("checked by require");
    let dataset = load_ta_csv(data)?;
    let result = global_fit(&dataset, &kin.model(), &kin.settings())?;
    let mut outputs = Outputs::new(&cfg, out, command_line("fit-ta", &[config, data]), config)?;
    outputs.input(data)?;
    outputs.write("ta_report.txt", &result.report())?;
    outputs.write("eas.csv", &result.eas_csv(&dataset.wavelengths))?;
    outputs.write(
        "concentrations.csv",
        &result.concentrations_csv(&dataset.times),
    )?;
    outputs.finish()?;
    print!("{}", result.report());
    Ok(if result.converged {
        Status::Done
    } else {
        Status::NotConverged
    })
}

fn validate(config: &Path, field_mt: Option<f64>, threshold: f64) -> Result<Status> {
    let cfg = load(config, "validate")?;
    let spec = cfg.system.as_ref().expect("checked by require").to_spec()?;
    let field = field_mt
        .or_else(|| {
            cfg.sweep
                .as_ref()
                .map(|s| 0.5 * (s.field_start_mt + s.field_stop_mt))
        })
        .unwrap_or(340.0);
    let report = validate_strong_exchange(&spec, field, threshold);
    println!("field_mT: {field}");
    println!("exchange_MHz: {:.3}", report.exchange_mhz);
    println!("threshold: {}", report.threshold);
    for (name, ratio) in report.ratios() {
        match ratio {
            Some(r) => println!("J_over_{name}: {r:.3}"),
            None => println!("J_over_{name}: unbounded"),
        }
    }
    let regime = match report.regime {
        ExchangeRegime::Strong => "strong",
        ExchangeRegime::Weak => "weak",
    };
    println!("regime: {regime}");
    Ok(Status::Done)
}

fn synth_ta(
    out: &Path,
    lifetimes_ps: Vec<f64>,
    irf_fwhm_ps: f64,
    noise: f64,
    seed: u64,
) -> Result<Status> {
    let model = SequentialModel::new(lifetimes_ps, irf_fwhm_ps, 0.0);
    model.validate()?;
    let slowest = model.lifetimes.iter().fold(0.0f64, |a, b| a.max(*b));
    let times = mixed_time_axis(-2.0, 10.0, 120, (4.0 * slowest).max(100.0), 120);
    let wavelengths: Vec<f64> = (0..60).map(|i| 450.0 + 5.0 * i as f64).collect();
    let (dataset, _) = synthetic_dataset(&model, times, wavelengths, noise, seed)?;
    let mut text = format!(
        "# synthetic sequential model: lifetimes_ps = {:?}, irf_fwhm_ps = {irf_fwhm_ps}, noise = {noise}, seed = {seed}\n",
        model.lifetimes
    );
    text.push_str(&ta_csv(&dataset));
    std::fs::write(out, text)?;
    println!("wrote {}", out.display());
    Ok(Status::Done)
}
