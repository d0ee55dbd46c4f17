//! Independent reference implementations shared by integration tests.
#![allow(dead_code)]

use nalgebra::{Complex, DMatrix, Matrix3, Vector3};

pub type C = Complex<f64>;
pub type M = DMatrix<C>;

pub const MHZ_PER_CM1: f64 = 29_979.245_8;
pub const BOHR_MHZ_PER_MT: f64 = 13.996_244_936_1;

/// Textbook (Sx, Sy, Sz) for spin twice_s/2 in the |s, s⟩ … |s, −s⟩ basis.
pub fn spin(twice_s: usize) -> [M; 3] {
    let n = twice_s + 1;
    let s = twice_s as f64 / 2.0;
    let mut sx = M::zeros(n, n);
    let mut sy = M::zeros(n, n);
    let mut sz = M::zeros(n, n);
    for r in 0..n {
        let m = s - r as f64;
        sz[(r, r)] = C::new(m, 0.0);
        if r + 1 < n {
            // ⟨m|S+|m−1⟩
            let mm = m - 1.0;
            let v = (s * (s + 1.0) - m * mm).sqrt();
            sx[(r, r + 1)] = C::new(v / 2.0, 0.0);
            sx[(r + 1, r)] = C::new(v / 2.0, 0.0);
            sy[(r, r + 1)] = C::new(0.0, -v / 2.0);
            sy[(r + 1, r)] = C::new(0.0, v / 2.0);
        }
    }
    [sx, sy, sz]
}

pub fn kron(a: &M, b: &M) -> M {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    let mut out = M::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    out
}

pub fn eye(n: usize) -> M {
    M::identity(n, n)
}

/// Parameters in the units used on paper: J in cm⁻¹, the rest in MHz / degrees.
#[derive(Debug, Clone, Copy)]
pub struct Params {
    pub j_cm1: f64,
    pub d_mhz: f64,
    pub zfs_d: f64,
    pub zfs_e: f64,
    pub g_fp: f64,
    pub g_perp: f64,
    pub g_par: f64,
    pub a_perp: f64,
    pub a_par: f64,
    pub alpha_deg: f64,
    pub beta_deg: f64,
}

impl Params {
    pub fn reference() -> Self {
        Self {
            j_cm1: 1.0,
            d_mhz: 90.0,
            zfs_d: 1135.0,
            zfs_e: 235.0,
            g_fp: 2.0023,
            g_perp: 1.985,
            g_par: 1.964,
            a_perp: 162.0,
            a_par: 475.0,
            alpha_deg: 45.0,
            beta_deg: 60.0,
        }
    }
}

/// Triplet principal axes (columns) in the VO frame: Ry(β)·Rz(α).
pub fn triplet_axes(alpha_deg: f64, beta_deg: f64) -> Matrix3<f64> {
    let (a, b) = (alpha_deg.to_radians(), beta_deg.to_radians());
    let ry = Matrix3::new(b.cos(), 0.0, b.sin(), 0.0, 1.0, 0.0, -b.sin(), 0.0, b.cos());
    let rz = Matrix3::new(a.cos(), -a.sin(), 0.0, a.sin(), a.cos(), 0.0, 0.0, 0.0, 1.0);
    ry * rz
}

/// H assembled term by term from Kronecker products, basis FP ⊗ VO ⊗ I.
/// Exchange is written −J s_FP·s_VO so that J > 0 puts the quartet lowest.
pub fn naive_hamiltonian(p: &Params, field_mt: f64, dir: &Vector3<f64>) -> M {
    let [fx, fy, fz] = spin(2);
    let [vx, vy, vz] = spin(1);
    let [ix, iy, iz] = spin(7);
    let (i3, i2, i8) = (eye(3), eye(2), eye(8));
    let fp = |m: &M| kron(&kron(m, &i2), &i8);
    let vo = |m: &M| kron(&kron(&i3, m), &i8);
    let nu = |m: &M| kron(&kron(&i3, &i2), m);
    let (sfx, sfy, sfz) = (fp(&fx), fp(&fy), fp(&fz));
    let (svx, svy, svz) = (vo(&vx), vo(&vy), vo(&vz));
    let (six, siy, siz) = (nu(&ix), nu(&iy), nu(&iz));
    let r = |v: f64| C::new(v, 0.0);

    let j = p.j_cm1 * MHZ_PER_CM1;
    let mut h = (&sfx * &svx + &sfy * &svy + &sfz * &svz) * r(-j);
    h += (&sfx * &svx + &sfz * &svz - (&sfy * &svy) * r(2.0)) * r(p.d_mhz);

    let q = triplet_axes(p.alpha_deg, p.beta_deg);
    let prime = |k: usize| &sfx * r(q[(0, k)]) + &sfy * r(q[(1, k)]) + &sfz * r(q[(2, k)]);
    let (px, py, pz) = (prime(0), prime(1), prime(2));
    let n = h.nrows();
    h += (&pz * &pz - eye(n) * r(2.0 / 3.0)) * r(p.zfs_d);
    h += (&px * &px - &py * &py) * r(p.zfs_e);

    let b = dir * (field_mt * BOHR_MHZ_PER_MT);
    h += (&sfx * r(b[0]) + &sfy * r(b[1]) + &sfz * r(b[2])) * r(p.g_fp);
    h += (&svx * r(b[0]) + &svy * r(b[1])) * r(p.g_perp);
    h += &svz * r(b[2] * p.g_par);
    h += (&six * &svx + &siy * &svy) * r(p.a_perp);
    h += (&siz * &svz) * r(p.a_par);
    h
}

pub fn sorted_eigenvalues(h: &M) -> Vec<f64> {
    let mut v: Vec<f64> = h
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

/// Library spec matching [`Params`].
pub fn spec(p: &Params) -> spinpol::spin::SpinSystemSpec<f64> {
    use spinpol::spin::{AlphaSign, FrameGeometry, SpinSystemSpec};
    SpinSystemSpec::triplet_doublet(
        p.j_cm1,
        p.d_mhz,
        p.zfs_d,
        p.zfs_e,
        p.g_fp,
        (p.g_perp, p.g_par),
        (p.a_perp, p.a_par),
        FrameGeometry::from_degrees(p.alpha_deg, p.beta_deg, AlphaSign::Positive).unwrap(),
    )
}

/// Maximum |Δλ| between two sorted spectra relative to the spectral scale.
pub fn relative_spectrum_gap(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().chain(b).fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}
