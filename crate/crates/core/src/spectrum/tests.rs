use super::*;
use crate::polarization::{
    NuclearPopulations, PolarizationSpec, QuartetPolarizationParams, ThermalPopulations,
};
use crate::spin::{
    spin_operators, EulerAngles, InteractionTensor, LabOrientation, SpinQuantum, SpinSystemSpec,
};
use crate::units::{BOHR_MAGNETON, BOHR_MHZ_PER_MT, PLANCK};
use approx::assert_abs_diff_eq;
use nalgebra::{Matrix3, Vector3};

fn free_spin(g: f64) -> ResonanceSystem<f64> {
    let s = spin_operators::<f64>(SpinQuantum::HALF);
    let beta = g * BOHR_MHZ_PER_MT;
    ResonanceSystem {
        static_part: s.z.scale(0.0),
        zeeman: [s.x.scale(beta), s.y.scale(beta), s.z.scale(beta)],
        spin: s,
        nuclear: None,
        hyperfine: Matrix3::zeros(),
    }
}

fn settings(lo: f64, hi: f64) -> ResonanceSettings<f64> {
    ResonanceSettings {
        frequency_mhz: 9500.0,
        field_min: lo,
        field_max: hi,
        step: 1.0,
        slope_floor: 0.1,
    }
}

#[test]
fn free_electron_resonance_matches_closed_form() {
    let sys = free_spin(2.0023);
    let pops = ThermalPopulations {
        temperature_k: 85.0,
    };
    let set = find_resonances(
        &sys,
        &Vector3::new(0.3, 0.1, 0.9),
        &pops,
        &settings(300.0, 380.0),
    )
    .unwrap();
    assert_eq!(set.sticks.len(), 1);
    // h·ν/(g·μB) from SI constants.
    let oracle = PLANCK * 9.5e9 / (2.0023 * BOHR_MAGNETON) * 1e3;
    assert_abs_diff_eq!(set.sticks[0].field_mt, oracle, epsilon = 0.05);
    assert_abs_diff_eq!(set.sticks[0].field_mt, 339.0, epsilon = 0.05);
    assert!(set.sticks[0].amplitude(&[1.0]) > 0.0);
    // Transverse moment of a free spin-1/2 averaged over the B1 direction.
    assert_abs_diff_eq!(set.sticks[0].transition, 0.25, epsilon = 1e-12);
}

#[test]
fn axial_triplet_along_z_matches_exact_fields() {
    let d = 1153.0;
    let zfs = InteractionTensor::zero_field_splitting(d, 0.0, EulerAngles::identity());
    let g = 2.002;
    let sys = ResonanceSystem::triplet(g, &zfs);
    let pops = ThermalPopulations {
        temperature_k: 85.0,
    };
    let set = find_resonances(&sys, &Vector3::z(), &pops, &settings(250.0, 420.0)).unwrap();
    let gb = g * BOHR_MHZ_PER_MT;
    let fields: Vec<f64> = set.sticks.iter().map(|s| s.field_mt).collect();
    assert_eq!(fields.len(), 2, "{fields:?}");
    assert_abs_diff_eq!(fields[0], (9500.0 - d) / gb, epsilon = 0.05);
    assert_abs_diff_eq!(fields[1], (9500.0 + d) / gb, epsilon = 0.05);
}

#[test]
fn lineshapes_are_unit_area() {
    let fwhm = 1.8;
    let n = 200_001;
    let half = 50.0 * fwhm;
    let h = 2.0 * half / (n - 1) as f64;
    for shape in [Lineshape::Gaussian, Lineshape::Lorentzian] {
        let area: f64 = (0..n)
            .map(|k| {
                let x = -half + k as f64 * h;
                let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
                w * shape.eval(x, fwhm)
            })
            .sum::<f64>()
            * h;
        assert_abs_diff_eq!(area, shape.window_area(half, fwhm), epsilon = 1e-6);
    }
    assert_abs_diff_eq!(
        Lineshape::Gaussian.window_area(half, fwhm),
        1.0,
        epsilon = 1e-3
    );
    // A Lorentzian keeps 2/π·atan(100) of its area inside ±50 FWHM.
    assert_abs_diff_eq!(
        Lineshape::Lorentzian.window_area(half, fwhm),
        0.993634,
        epsilon = 1e-6
    );
    assert_abs_diff_eq!(
        Lineshape::Lorentzian.window_area(1e9, fwhm),
        1.0,
        epsilon = 1e-8
    );
}

#[test]
fn opposite_sticks_cancel_and_width_scales_peak() {
    let sweep = FieldSweepConfig::new(300.0, 380.0, 801);
    let s = convolve_lineshape(&[(340.0, 1.0), (340.0, -1.0)], &sweep).unwrap();
    assert!(s.intensity.iter().all(|v| *v == 0.0));
    for shape in [Lineshape::Lorentzian, Lineshape::Gaussian] {
        let wide =
            convolve_lineshape(&[(340.0, 1.0)], &sweep.clone().with_linewidth(shape, 2.0)).unwrap();
        let narrow =
            convolve_lineshape(&[(340.0, 1.0)], &sweep.clone().with_linewidth(shape, 1.0)).unwrap();
        assert_abs_diff_eq!(narrow.max_abs() / wide.max_abs(), 2.0, epsilon = 0.02);
    }
}

#[test]
fn gauss_hermite_moments() {
    let (x, w) = gauss_hermite(8);
    let sp = std::f64::consts::PI.sqrt();
    assert_abs_diff_eq!(w.iter().sum::<f64>(), sp, epsilon = 1e-12);
    let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
    assert_abs_diff_eq!(m2, sp / 2.0, epsilon = 1e-12);
    let m4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
    assert_abs_diff_eq!(m4, 0.75 * sp, epsilon = 1e-12);
    assert_abs_diff_eq!(x[0], -x[7]);
}

#[test]
fn hemisphere_grid_is_equal_area() {
    for n in [16usize, 64, 256, 512, 1000] {
        let g = hemisphere_grid::<f64>(n);
        assert_eq!(g.len(), n);
        assert_abs_diff_eq!(
            g.iter().map(|p| p.weight).sum::<f64>(),
            1.0,
            epsilon = 1e-12
        );
        assert!(g
            .iter()
            .all(|p| p.direction[2] >= 0.0 && (p.direction.norm() - 1.0).abs() < 1e-12));
        let m1: f64 = g.iter().map(|p| p.weight * p.direction[2]).sum();
        let m2: f64 = g.iter().map(|p| p.weight * p.direction[2].powi(2)).sum();
        let tol = 2.0 / n as f64;
        assert_abs_diff_eq!(m1, 0.5, epsilon = tol);
        assert_abs_diff_eq!(m2, 1.0 / 3.0, epsilon = tol);
        let x2: f64 = g.iter().map(|p| p.weight * p.direction[0].powi(2)).sum();
        assert_abs_diff_eq!(x2, 1.0 / 3.0, epsilon = 4.0 * tol);
    }
}

#[test]
fn aligned_grids() {
    let par = OrientationScheme::<f64>::aligned(AlignmentMode::Parallel, 0.0, 8)
        .points()
        .unwrap();
    assert_eq!(par.len(), 1);
    assert_eq!(par[0].direction, Vector3::y());
    let par = OrientationScheme::<f64>::aligned(AlignmentMode::Parallel, 10.0, 8)
        .points()
        .unwrap();
    assert_eq!(par.len(), 64);
    assert_abs_diff_eq!(
        par.iter().map(|p| p.weight).sum::<f64>(),
        1.0,
        epsilon = 1e-12
    );
    let y2: f64 = par.iter().map(|p| p.weight * p.direction[1].powi(2)).sum();
    assert!(y2 > 0.9 && y2 < 1.0);
    let perp = OrientationScheme::<f64>::aligned(AlignmentMode::Perpendicular, 10.0, 8)
        .points()
        .unwrap();
    assert_eq!(perp.len(), 8 * 24);
    assert_abs_diff_eq!(
        perp.iter().map(|p| p.weight).sum::<f64>(),
        1.0,
        epsilon = 1e-12
    );
    let y2: f64 = perp.iter().map(|p| p.weight * p.direction[1].powi(2)).sum();
    assert!(y2 < 0.05);
    assert!(
        OrientationScheme::<f64>::aligned(AlignmentMode::Parallel, 10.0, 4)
            .points()
            .is_err()
    );
    assert!(OrientationScheme::<f64>::Powder { grid_size: 8 }
        .points()
        .is_err());
}

#[test]
fn isotropic_powder_equals_single_orientation() {
    let g = InteractionTensor::isotropic(2.0023);
    let a = InteractionTensor::isotropic(0.0);
    let sweep = FieldSweepConfig::new(320.0, 360.0, 401);
    let sim = Simulator::cw_doublet(&g, &a, 85.0, &sweep).unwrap();
    let p = sim
        .simulate(&OrientationScheme::Powder { grid_size: 16 })
        .unwrap();
    let s = sim
        .simulate(&OrientationScheme::Single(
            LabOrientation::new(0.4, 1.0).unwrap(),
        ))
        .unwrap();
    let scale = s.max_abs();
    for (x, y) in p.intensity.iter().zip(&s.intensity) {
        assert_abs_diff_eq!(x / scale, y / scale, epsilon = 1e-9);
    }
    assert!(p.intensity.iter().all(|v| *v >= -1e-12));
}

#[test]
fn cw_doublet_limits() {
    let g = InteractionTensor::axial(1.985, 1.964);
    let sweep = FieldSweepConfig::new(260.0, 420.0, 641);
    // No hyperfine: resonances bounded by the principal g values.
    let sim = Simulator::cw_doublet(&g, &InteractionTensor::isotropic(0.0), 85.0, &sweep).unwrap();
    let lo = 9500.0 / (1.985 * BOHR_MHZ_PER_MT);
    let hi = 9500.0 / (1.964 * BOHR_MHZ_PER_MT);
    let comps = sim
        .component_spectra(&OrientationScheme::Powder { grid_size: 64 }, &sweep.axis())
        .unwrap();
    assert!(comps
        .sticks
        .iter()
        .all(|(_, s)| s.field_mt > lo - 0.01 && s.field_mt < hi + 0.01));
    // Octet along z spans about 7·A_z.
    let a = InteractionTensor::axial(162.0, 475.0);
    let sim = Simulator::cw_doublet(&g, &a, 85.0, &sweep).unwrap();
    let set = sim.sticks(&Vector3::z()).unwrap();
    let strong: Vec<f64> = {
        let max = set.sticks.iter().map(|s| s.weight()).fold(0.0, f64::max);
        set.sticks
            .iter()
            .filter(|s| s.weight() > 0.1 * max)
            .map(|s| s.field_mt)
            .collect()
    };
    assert_eq!(strong.len(), 8, "{strong:?}");
    let width = strong[7] - strong[0];
    let oracle = 7.0 * 475.0 / (1.964 * BOHR_MHZ_PER_MT);
    assert!(
        (width - oracle).abs() / oracle < 0.03,
        "{width} vs {oracle}"
    );
    let cw = simulate_cw_doublet(&g, &a, &sweep, 32).unwrap();
    let total = cw.integral(260.0, 420.0);
    assert!(total.abs() < 0.01 * cw.max_abs() * 160.0, "{total}");
}

#[test]
fn triplet_uniform_populations_give_no_signal() {
    let sweep = FieldSweepConfig::new(280.0, 400.0, 241).with_linewidth(Lineshape::Gaussian, 2.5);
    let third = 1.0 / 3.0;
    let s = simulate_triplet(2.002, 1153.0, -224.0, [third; 3], &sweep, 64).unwrap();
    assert!(s.max_abs() < 1e-9);
}

#[test]
fn spectra_are_linear_in_coefficients() {
    let sweep = FieldSweepConfig::new(280.0, 400.0, 241).with_linewidth(Lineshape::Gaussian, 2.5);
    let zfs = InteractionTensor::zero_field_splitting(1153.0, -224.0, EulerAngles::identity());
    let sim = Simulator::triplet(2.002, &zfs, [0.29, 0.71, 0.0], &sweep).unwrap();
    let comps = sim
        .component_spectra(&OrientationScheme::Powder { grid_size: 32 }, &sweep.axis())
        .unwrap();
    let base = comps.combine(&[0.29, 0.71, 0.0]);
    let scaled = comps.combine(&[0.29 * 3.5, 0.71 * 3.5, 0.0]);
    for (x, y) in base.iter().zip(scaled.iter()) {
        let (x, y): (&f64, &f64) = (x, y);
        assert_abs_diff_eq!(3.5 * x, *y, epsilon = 1e-12 * (1.0 + y.abs()));
    }
}

#[test]
fn spectrum_metrics() {
    let field: Vec<f64> = (0..101).map(|k| k as f64).collect();
    let box_: Vec<f64> = field
        .iter()
        .map(|b| if (40.0..=60.0).contains(b) { -1.0 } else { 0.0 })
        .collect();
    let s = Spectrum::new(field, box_).unwrap();
    // Trapezoids straddling each edge add half a step.
    assert_abs_diff_eq!(s.integral(0.0, 100.0), -21.0, epsilon = 1e-12);
    assert!(
        s.extent(0.99) > 20.0 && s.extent(0.99) < 22.0,
        "{}",
        s.extent(0.99)
    );
    assert_abs_diff_eq!(s.interpolate(39.5), -0.5, epsilon = 1e-12);
    assert!(Spectrum::new(vec![0.0, 1.0], vec![1.0]).is_err());
}

#[test]
fn thermal_sticks_absorb_in_coupled_system() {
    let spec = SpinSystemSpec::<f64>::vofp_reference();
    let sweep = FieldSweepConfig::new(290.0, 390.0, 401);
    let pol = PolarizationSpec::Thermal {
        temperature_k: 85.0,
    };
    let lines =
        stick_spectrum(&spec, &LabOrientation::new(0.7, 0.3).unwrap(), &pol, &sweep).unwrap();
    assert!(!lines.is_empty());
    assert!(lines.iter().all(|(_, a)| *a >= 0.0));
}

#[test]
fn quartet_octet_along_z() {
    let spec = SpinSystemSpec::<f64>::vofp_reference();
    let pol = PolarizationSpec::photo_quartet(
        QuartetPolarizationParams::vofp_reference(),
        NuclearPopulations::vofp_reference(),
    );
    let sweep = FieldSweepConfig::new(290.0, 390.0, 401);
    let sim = Simulator::new(&spec, &pol, &sweep).unwrap();
    let set = sim.sticks(&Vector3::z()).unwrap();
    // Central quartet transition M = −1/2 ↔ +1/2, nuclear-allowed; the 32
    // lowest tracked levels form the quartet.
    let mut central: Vec<&Stick<f64>> = set
        .sticks
        .iter()
        .filter(|s| s.lower < 32 && s.upper < 32)
        .filter(|s| (s.lower_sb + 0.5).abs() < 0.1 && (s.upper_sb - 0.5).abs() < 0.1)
        .filter(|s| (s.lower_mi - s.upper_mi).abs() < 0.25)
        .collect();
    central.sort_by(|a, b| a.field_mt.partial_cmp(&b.field_mt).unwrap());
    assert_eq!(central.len(), 8);
    let spacing = (central[7].field_mt - central[0].field_mt) / 7.0;
    assert!((4.7..=6.0).contains(&spacing), "{spacing}");
}
