use std::io::Write;
use std::path::PathBuf;

use proptest::prelude::*;

use spinpol::io::{
    emit_config, fit_problem, load_spectrum_csv, load_ta_csv, parse_config, parse_config_str,
    parse_spectrum_csv, parse_ta_csv, spectrum_csv, ta_csv, PolarizationConfig, RunManifest,
    SchemeConfig,
};
use spinpol::spectrum::Spectrum;
use spinpol::Error;

fn reference_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../cli/examples/vofp.cfg")
}

fn reference_text() -> String {
    std::fs::read_to_string(reference_path()).unwrap()
}

fn messages(e: Error) -> Vec<String> {
    match e {
        Error::Config(v) => v,
        other => vec![other.to_string()],
    }
}

#[test]
fn bundled_reference_parses_and_is_canonical() {
    let cfg = parse_config(&reference_path()).unwrap();
    let text = reference_text();
    assert_eq!(emit_config(&cfg), text);
    let again = parse_config_str(&emit_config(&cfg)).unwrap();
    assert_eq!(again, cfg);

    let s = cfg.system.as_ref().unwrap();
    assert_eq!((s.zfs_d_mhz, s.zfs_e_mhz), (1135.0, 235.0));
    assert_eq!((s.a_vo_perp_mhz, s.a_vo_par_mhz), (162.0, 475.0));
    let spec = s.to_spec().unwrap();
    assert_eq!(spec.dimension(), 48);
    match cfg.polarization.as_ref().unwrap() {
        PolarizationConfig::PhotoQuartet { a, r, rho_n, .. } => {
            assert_eq!(*a, [0.11, -0.002, -0.027]);
            assert_eq!(*r, [0.0, -0.01, 0.0]);
            assert_eq!(rho_n[2], 0.194);
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(cfg.fit.as_ref().unwrap().datasets.len(), 3);
    for cmd in ["simulate", "fit-trepr", "fit-ta", "validate"] {
        cfg.require(cmd).unwrap();
    }
}

#[test]
fn canonicalization_is_idempotent_with_alternative_units() {
    let text = r#"
schema_version = 1
[system]
exchange_J_MHz = 29979.2458
dipolar_d_MHz = 90
zfs_D_cm1 = 0.0378
zfs_E_MHz = 235
g_fp = 2.0023
g_vo_perp = 1.985
g_vo_par = 1.964
A_vo_perp_MHz = 162
A_vo_par_MHz = 475
alpha_rad = 0.7853981633974483
beta_deg = 60
[sweep]
mw_frequency_MHz = 9500
field_start_G = 2800
field_stop_mT = 400
linewidth_G = 18
[kinetics]
lifetimes_ns = [0.0011, 46300]
"#;
    let a = parse_config_str(text).unwrap();
    let s = a.system.as_ref().unwrap();
    assert!((s.exchange_cm1 - 1.0).abs() < 1e-12);
    assert!((s.alpha_deg - 45.0).abs() < 1e-12);
    let sw = a.sweep.as_ref().unwrap();
    assert!((sw.field_start_mt - 280.0).abs() < 1e-12 && (sw.linewidth_mt - 1.8).abs() < 1e-12);
    assert!((a.kinetics.as_ref().unwrap().lifetimes_ps[0] - 1.1).abs() < 1e-12);
    let e1 = emit_config(&a);
    let b = parse_config_str(&e1).unwrap();
    assert_eq!(a, b);
    assert_eq!(e1, emit_config(&b));
}

#[test]
fn missing_sweep_is_named_for_simulate() {
    let text = reference_text();
    let start = text.find("[sweep]").unwrap();
    let end = text.find("[scheme]").unwrap();
    let cut = format!("{}{}", &text[..start], &text[end..]);
    let cfg = parse_config_str(&cut).unwrap();
    let msg = messages(cfg.require("simulate").unwrap_err()).join("\n");
    assert!(msg.contains("[sweep]"), "{msg}");
}

#[test]
fn negative_linewidth_rejected() {
    let text = reference_text().replace("linewidth_mT = 1.8", "linewidth_mT = -1.8");
    let msg = messages(parse_config_str(&text).unwrap_err()).join("\n");
    assert!(msg.contains("linewidth must be > 0"), "{msg}");
}

#[test]
fn all_violations_are_reported_together() {
    let text = reference_text()
        .replace("zfs_D_MHz = 1135.0", "zfs_D = 1135.0")
        .replace("linewidth_mT = 1.8", "linewidth_mT = 0.0")
        .replace(
            "grid_size = 256\n\n[fit]",
            "grid_size = 256\ncolour = \"blue\"\n\n[fit]",
        )
        .replace(
            "schema_version = 1",
            "schema_version = 1\n[plotting]\nx = 1",
        );
    let errs = messages(parse_config_str(&text).unwrap_err());
    let all = errs.join("\n");
    assert!(all.contains("zfs_D: missing unit suffix"), "{all}");
    assert!(all.contains("linewidth must be > 0"), "{all}");
    assert!(all.contains("[scheme] colour: unknown key"), "{all}");
    assert!(all.contains("unknown section [plotting]"), "{all}");
    assert!(errs.len() >= 4);
}

#[test]
fn schema_version_is_mandatory() {
    let text = reference_text().replace("schema_version = 1\n", "");
    let msg = messages(parse_config_str(&text).unwrap_err()).join("\n");
    assert!(msg.contains("schema_version"), "{msg}");
}

#[test]
fn fit_problem_uses_dataset_schemes() {
    let cfg = parse_config(&reference_path()).unwrap();
    let axis: Vec<f64> = (0..50).map(|i| 300.0 + i as f64).collect();
    let sp = || Spectrum::new(axis.clone(), vec![0.0; 50]).unwrap();
    let p = fit_problem(&cfg, vec![sp(), sp(), sp()]).unwrap();
    assert_eq!(p.datasets[0].label, "perpendicular");
    assert!(matches!(
        cfg.fit.as_ref().unwrap().datasets[2].scheme,
        Some(SchemeConfig::Powder { grid_size: 256 })
    ));
    assert!(fit_problem(&cfg, vec![sp()]).is_err());
}

#[test]
fn spectrum_csv_round_trip_1024_rows() {
    let mut text = String::from("field_mT,intensity\n");
    for i in 0..1024 {
        text.push_str(&format!(
            "{},{}\n",
            280.0 + 0.1 * i as f64,
            (i as f64 * 0.01).sin()
        ));
    }
    let s = parse_spectrum_csv(text.as_bytes(), "mem").unwrap();
    assert_eq!(s.len(), 1024);
    let back = parse_spectrum_csv(spectrum_csv(&s).as_bytes(), "mem").unwrap();
    assert_eq!(back.field, s.field);
    assert_eq!(back.intensity, s.intensity);
}

#[test]
fn spectrum_csv_rejects_descending_axis_with_row() {
    let text = "field_mT,intensity\n300,1\n301,2\n300.5,3\n";
    match parse_spectrum_csv(text.as_bytes(), "mem").unwrap_err() {
        Error::Csv { row, message, .. } => {
            assert_eq!(row, 4);
            assert!(message.contains("not strictly increasing"));
        }
        e => panic!("{e}"),
    }
}

#[test]
fn spectrum_csv_rejects_ragged_and_non_numeric() {
    assert!(matches!(
        parse_spectrum_csv("300,1\n301\n".as_bytes(), "m"),
        Err(Error::Csv { row: 2, .. })
    ));
    assert!(matches!(
        parse_spectrum_csv("300,1\n301,x\n".as_bytes(), "m"),
        Err(Error::Csv { row: 2, .. })
    ));
    let g = parse_spectrum_csv("field_G,intensity\n3000,1\n3010,2\n".as_bytes(), "m").unwrap();
    assert_eq!(g.field, vec![300.0, 301.0]);
}

#[test]
fn ta_csv_shape_and_units() {
    let mut text = String::from("time_ns");
    for w in 0..600 {
        text.push_str(&format!(",{}", 400 + w));
    }
    text.push('\n');
    for t in 0..500 {
        text.push_str(&format!("{}", t as f64 * 0.01));
        for w in 0..600 {
            text.push_str(&format!(",{}", (t * w) as f64 * 1e-6));
        }
        text.push('\n');
    }
    let d = parse_ta_csv(text.as_bytes(), "mem").unwrap();
    assert_eq!(d.delta_a.shape(), (500, 600));
    assert!((d.times[1] - 10.0).abs() < 1e-12);
    let again = parse_ta_csv(ta_csv(&d).as_bytes(), "mem").unwrap();
    assert_eq!(again, d);
}

#[test]
fn ta_csv_errors() {
    assert!(parse_ta_csv("t,500,510\n0,1,2\n".as_bytes(), "m").is_err());
    assert!(matches!(
        parse_ta_csv("time_ps,500,510\n0,1\n".as_bytes(), "m"),
        Err(Error::Csv { row: 2, .. })
    ));
    assert!(matches!(
        parse_ta_csv("time_ps,500,510\n1,1,2\n0,1,2\n".as_bytes(), "m"),
        Err(Error::Csv { row: 3, .. })
    ));
}

#[test]
fn files_and_manifest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sp = dir.path().join("s.csv");
    std::fs::File::create(&sp)
        .unwrap()
        .write_all(b"300,1\n301,2\n")
        .unwrap();
    assert_eq!(load_spectrum_csv(&sp).unwrap().len(), 2);
    let ta = dir.path().join("t.csv");
    std::fs::write(&ta, "time_us,500,510\n0,1,2\n1,3,4\n").unwrap();
    assert_eq!(load_ta_csv(&ta).unwrap().times, vec![0.0, 1e6]);

    let mut m = RunManifest::new(vec!["simulate".into()], "schema_version = 1\n".into());
    m.inputs.push(spinpol::io::FileDigest::of(&sp).unwrap());
    let back = RunManifest::from_toml(&m.to_toml()).unwrap();
    assert_eq!(back, m);
    assert_eq!(m.inputs[0].sha256.len(), 64);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn emitted_config_round_trips(
        j in -10.0..10.0f64,
        zfs in (-3000.0..3000.0f64, -1.0..1.0f64),
        width in 0.01..10.0f64,
        start in 0.0..500.0f64,
        span in 1.0..500.0f64,
        a in prop::array::uniform3(-1.0..1.0f64),
        taus in prop::collection::vec(1e-3..1e9f64, 1..4),
    ) {
        let mut cfg = parse_config(&reference_path()).unwrap();
        let sys = cfg.system.as_mut().unwrap();
        sys.exchange_cm1 = j;
        sys.zfs_d_mhz = zfs.0;
        sys.zfs_e_mhz = zfs.1 * zfs.0.abs() / 3.0;
        let sw = cfg.sweep.as_mut().unwrap();
        sw.linewidth_mt = width;
        sw.field_start_mt = start;
        sw.field_stop_mt = start + span;
        if let Some(PolarizationConfig::PhotoQuartet { a: coeffs, .. }) = cfg.polarization.as_mut() {
            *coeffs = a;
        }
        cfg.kinetics.as_mut().unwrap().lifetimes_ps = taus;
        let text = emit_config(&cfg);
        let back = parse_config_str(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(emit_config(&back), text);
    }
}
