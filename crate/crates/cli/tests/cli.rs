use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spinpol"))
}

fn example(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("examples")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Reference config with a coarse grid so the test stays fast.
fn small_config(dir: &Path) -> PathBuf {
    let text = std::fs::read_to_string(example("vofp.cfg"))
        .unwrap()
        .replacen("grid_size = 256", "grid_size = 24", 1)
        .replace("n_points = 1201", "n_points = 241");
    let p = dir.join("small.cfg");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn dipole_prints_coupling_near_90_mhz() {
    let o = run(&[
        "dipole", "--r-nm", "0.84", "--g1", "2.0023", "--g2", "1.978",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let d: f64 = stdout(&o).trim().parse().unwrap();
    assert!((85.0..=95.0).contains(&d), "{d}");
}

#[test]
fn dipole_rejects_bad_distance_with_validation_code() {
    let o = run(&["dipole", "--r-nm=-1", "--g1", "2", "--g2", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).starts_with("error[validation]"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn simulate_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut csvs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        let o = run(&[
            "simulate",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        for f in [
            "vofp_spectrum.csv",
            "vofp_spectrum.meta.toml",
            "vofp_plot.gp",
            "vofp_manifest.toml",
        ] {
            assert!(out.join(f).exists(), "{f}");
        }
        csvs.push((
            std::fs::read(out.join("vofp_spectrum.csv")).unwrap(),
            std::fs::read(out.join("vofp_spectrum.meta.toml")).unwrap(),
        ));
    }
    assert_eq!(csvs[0], csvs[1]);
    let manifest = std::fs::read_to_string(dir.path().join("run0/vofp_manifest.toml")).unwrap();
    assert!(manifest.contains("config_sha256"));
    assert!(manifest.contains("vofp_spectrum.csv"));
}

#[test]
fn simulate_without_sweep_names_the_section() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(example("vofp.cfg")).unwrap();
    let (a, b) = (
        text.find("[sweep]").unwrap(),
        text.find("[scheme]").unwrap(),
    );
    let p = dir.path().join("nosweep.cfg");
    std::fs::write(&p, format!("{}{}", &text[..a], &text[b..])).unwrap();
    let o = run(&["simulate", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("[sweep]"), "{}", stderr(&o));
}

#[test]
fn invalid_config_lists_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(example("vofp.cfg"))
        .unwrap()
        .replace("linewidth_mT = 1.8", "linewidth_mT = -1.0")
        .replace("zfs_E_MHz = 235.0", "zfs_E = 235.0");
    let p = dir.path().join("bad.cfg");
    std::fs::write(&p, text).unwrap();
    let o = run(&["validate", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(
        err.contains("linewidth must be > 0") && err.contains("missing unit suffix"),
        "{err}"
    );
}

#[test]
fn validate_reports_strong_exchange() {
    let o = run(&["validate", example("vofp.cfg").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("regime: strong"));
}

fn report_value(report: &str, key: &str) -> f64 {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")))
        .unwrap_or_else(|| panic!("{key} missing from report"))
        .parse()
        .unwrap()
}

#[test]
fn fit_ta_on_bundled_dataset_recovers_lifetimes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "fit-ta",
        example("vofp.cfg").to_str().unwrap(),
        example("synthetic_ta.csv").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = std::fs::read_to_string(dir.path().join("vofp_ta_report.txt")).unwrap();
    for (key, truth) in [("tau1_ps", 1.1), ("tau2_ps", 46.3e6)] {
        let v = report_value(&report, key);
        assert!((v / truth - 1.0).abs() < 0.02, "{key} = {v}");
    }
    let eas = std::fs::read_to_string(dir.path().join("vofp_eas.csv")).unwrap();
    assert!(eas.starts_with("wavelength_nm,A,B"));
}

#[test]
fn fit_ta_without_convergence_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(example("vofp.cfg"))
        .unwrap()
        .replace("max_iterations = 4000", "max_iterations = 5")
        .replace(
            "restarts = 4\nmax_iterations = 5",
            "restarts = 1\nmax_iterations = 5",
        );
    let p = dir.path().join("short.cfg");
    std::fs::write(&p, text).unwrap();
    let o = run(&[
        "fit-ta",
        p.to_str().unwrap(),
        example("synthetic_ta.csv").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("error[non-convergence]"));
    assert!(dir.path().join("vofp_ta_report.txt").exists());
}

#[test]
fn fit_trepr_recovers_its_own_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = small_config(dir.path());
    let sim_out = dir.path().join("sim");
    let o = run(&[
        "simulate",
        cfg_path.to_str().unwrap(),
        "--out",
        sim_out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    // fit only the isotropic dataset, starting from zeroed a2..r3
    let text = std::fs::read_to_string(&cfg_path).unwrap();
    let fit_start = text.find("[[fit.dataset]]").unwrap();
    let kin = text.find("[kinetics]").unwrap();
    let text = format!("{}{}", &text[..fit_start], &text[kin..])
        .replace("a2 = -0.002", "a2 = 0.0")
        .replace("a3 = -0.027", "a3 = 0.0")
        .replace("r2 = -0.01", "r2 = 0.0")
        .replace("preset = \"electronic+nuclear\"", "preset = \"electronic\"")
        .replace(
            "rho_n = [0.146, 0.078, 0.194, 0.126, 0.117, 0.165, 0.078, 0.097]",
            "rho_n = [0.125, 0.125, 0.125, 0.125, 0.125, 0.125, 0.125, 0.125]",
        )
        .replace(
            "restarts = 4\nmax_iterations = 20000",
            "restarts = 2\nmax_iterations = 6000",
        );
    let fit_cfg = dir.path().join("fit.cfg");
    std::fs::write(&fit_cfg, text).unwrap();
    let fit_out = dir.path().join("fit");
    let o = run(&[
        "fit-trepr",
        fit_cfg.to_str().unwrap(),
        sim_out.join("vofp_spectrum.csv").to_str().unwrap(),
        "--out",
        fit_out.to_str().unwrap(),
    ]);
    let report = std::fs::read_to_string(fit_out.join("vofp_fit_report.txt")).unwrap();
    assert!(
        matches!(o.status.code(), Some(0) | Some(4)),
        "{}",
        stderr(&o)
    );
    assert!(fit_out.join("vofp_fit_iterates.csv").exists());
    assert!(fit_out.join("vofp_fit_dataset0.csv").exists());
    let rms = report_value(&report, "dataset.dataset0.normalized_rms");
    assert!(rms < 0.05, "{report}");
}
