//! The coupled triplet–doublet–nucleus spin Hamiltonian.
//!
//! Product basis |m_FP⟩ ⊗ |m_VO⟩ ⊗ |m_I⟩, each factor in descending m, so
//! the flat index is `i_fp * (n_vo * n_i) + i_vo * n_i + i_i`. Energies are
//! in MHz and fields in mT.

use nalgebra::{Matrix3, Vector3};

use super::operators::{
    spin_operators, CMat, HermitianOperator, SpinCenter, SpinOperators, SpinQuantum,
};
use super::tensor::{AlphaSign, EulerAngles, FrameGeometry, InteractionTensor};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::units::{cm1_to_mhz, BOHR_MAGNETON, BOHR_MHZ_PER_MT, MU0, PLANCK};

/// Direction of the static field in the molecular frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabOrientation<T: Real> {
    pub theta: T,
    pub phi: T,
}

impl<T: Real> LabOrientation<T> {
    pub fn new(theta: T, phi: T) -> Result<Self> {
        if !(theta >= T::zero() && theta <= T::pi()) {
            return Err(Error::invalid(format!("theta = {theta} outside [0, pi]")));
        }
        if !(phi >= T::zero() && phi < T::two_pi()) {
            return Err(Error::invalid(format!("phi = {phi} outside [0, 2pi)")));
        }
        Ok(Self { theta, phi })
    }

    pub fn along_z() -> Self {
        Self {
            theta: T::zero(),
            phi: T::zero(),
        }
    }

    pub fn along_x() -> Self {
        Self {
            theta: T::frac_pi_2(),
            phi: T::zero(),
        }
    }

    pub fn along_y() -> Self {
        Self {
            theta: T::frac_pi_2(),
            phi: T::frac_pi_2(),
        }
    }

    pub fn from_vector(v: &Vector3<T>) -> Self {
        let n = v.normalize();
        let theta = n[2].clamp(-T::one(), T::one()).acos();
        let mut phi = n[1].atan2(n[0]);
        if phi < T::zero() {
            phi += T::two_pi();
        }
        if phi >= T::two_pi() {
            phi = T::zero();
        }
        Self { theta, phi }
    }

    pub fn unit_vector(&self) -> Vector3<T> {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        Vector3::new(st * cp, st * sp, ct)
    }
}

/// All Hamiltonian parameters, MHz unless stated otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinSystemSpec<T: Real> {
    /// Isotropic exchange in cm⁻¹; positive puts the quartet lowest.
    pub exchange_cm1: T,
    /// Point-dipole coupling d.
    pub dipolar_mhz: T,
    /// Orientation of the dipolar tensor diag(d, d, −2d); unique axis on y by default.
    pub dipolar_frame: EulerAngles<T>,
    pub zfs: InteractionTensor<T>,
    pub g_fp: InteractionTensor<T>,
    pub g_vo: InteractionTensor<T>,
    pub a_vo: InteractionTensor<T>,
    pub frames: FrameGeometry<T>,
    pub fp: SpinCenter,
    pub vo: SpinCenter,
}

impl<T: Real> SpinSystemSpec<T> {
    /// Triplet chromophore (s = 1) exchange-coupled to a vanadyl doublet
    /// (s = 1/2, I = 7/2).
    #[allow(clippy::too_many_arguments)]
    pub fn triplet_doublet(
        exchange_cm1: T,
        dipolar_mhz: T,
        zfs_d: T,
        zfs_e: T,
        g_fp: T,
        g_vo: (T, T),
        a_vo: (T, T),
        frames: FrameGeometry<T>,
    ) -> Self {
        Self {
            exchange_cm1,
            dipolar_mhz,
            dipolar_frame: InteractionTensor::dipolar_along_y(T::one()).frame,
            zfs: InteractionTensor::zero_field_splitting(zfs_d, zfs_e, frames.triplet_frame()),
            g_fp: InteractionTensor::isotropic(g_fp),
            g_vo: InteractionTensor::axial(g_vo.0, g_vo.1),
            a_vo: InteractionTensor::axial(a_vo.0, a_vo.1),
            frames,
            fp: SpinCenter {
                spin: SpinQuantum::ONE,
                nuclear_spin: None,
            },
            vo: SpinCenter {
                spin: SpinQuantum::HALF,
                nuclear_spin: Some(SpinQuantum::SEVEN_HALVES),
            },
        }
    }

    /// Fixed Hamiltonian parameters of the VO–FP dimer.
    pub fn vofp_reference() -> Self {
        let frames = FrameGeometry::from_degrees(T::lit(45.0), T::lit(60.0), AlphaSign::Positive)
            .expect("reference angles in range");
        Self::triplet_doublet(
            T::one(),
            T::lit(90.0),
            T::lit(1135.0),
            T::lit(235.0),
            T::lit(2.0023),
            (T::lit(1.985), T::lit(1.964)),
            (T::lit(162.0), T::lit(475.0)),
            frames,
        )
    }

    /// Every coupling and g-value zero: the null Hamiltonian.
    pub fn null() -> Self {
        let z = T::zero();
        Self::triplet_doublet(z, z, z, z, z, (z, z), (z, z), FrameGeometry::aligned())
    }

    /// Only isotropic exchange.
    pub fn exchange_only(exchange_cm1: T) -> Self {
        Self {
            exchange_cm1,
            ..Self::null()
        }
    }

    pub fn zfs_d(&self) -> T {
        self.zfs.principal[2] * T::lit(1.5)
    }

    pub fn zfs_e(&self) -> T {
        (self.zfs.principal[0] - self.zfs.principal[1]) / T::lit(2.0)
    }

    pub fn dipolar_tensor(&self) -> InteractionTensor<T> {
        let d = self.dipolar_mhz;
        InteractionTensor::new(Vector3::new(d, d, d * T::lit(-2.0)), self.dipolar_frame)
    }

    pub fn dimension(&self) -> usize {
        self.fp.dimension() * self.vo.dimension()
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !self.exchange_cm1.is_finite() {
            bad.push("exchange");
        }
        if !self.dipolar_mhz.is_finite() || !self.dipolar_frame.is_finite() {
            bad.push("dipolar coupling");
        }
        for (name, t) in [
            ("zfs", &self.zfs),
            ("g_fp", &self.g_fp),
            ("g_vo", &self.g_vo),
            ("a_vo", &self.a_vo),
        ] {
            if !t.is_finite() {
                bad.push(name);
            }
        }
        if self.fp.nuclear_spin.is_some() {
            return Err(Error::invalid(
                "nuclear spin on the triplet center is not supported",
            ));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "non-finite parameters: {}",
                bad.join(", ")
            )))
        }
    }

    /// Applies one active rotation to every tensor frame.
    pub fn rotated(&self, q: &Matrix3<T>) -> Self {
        Self {
            dipolar_frame: self.dipolar_tensor().rotated(q).frame,
            zfs: self.zfs.rotated(q),
            g_fp: self.g_fp.rotated(q),
            g_vo: self.g_vo.rotated(q),
            a_vo: self.a_vo.rotated(q),
            ..self.clone()
        }
    }
}

/// Hamiltonian split into field-independent and field-linear parts, with the
/// embedded spin operators needed downstream.
#[derive(Debug, Clone)]
pub struct SpinHamiltonian<T: Real> {
    pub static_part: CMat<T>,
    /// Zeeman operator per mT of field along molecular x, y, z.
    pub zeeman: [CMat<T>; 3],
    pub fp_spin: SpinOperators<T>,
    pub vo_spin: SpinOperators<T>,
    pub nuclear_spin: Option<SpinOperators<T>>,
    pub electron_spin: SpinOperators<T>,
    pub hyperfine_tensor: Matrix3<T>,
    pub fp: SpinCenter,
    pub vo: SpinCenter,
}

/// `Σ_ab t_ab u_a v_b`
pub fn bilinear<T: Real>(t: &Matrix3<T>, u: &SpinOperators<T>, v: &SpinOperators<T>) -> CMat<T> {
    let n = u.dimension();
    let mut out = CMat::<T>::zeros(n, n);
    for a in 0..3 {
        for b in 0..3 {
            let c = t[(a, b)];
            if c != T::zero() {
                out += (u.component(a) * v.component(b)).scale(c);
            }
        }
    }
    out
}

/// `Σ_ab g_ab s_b` for each molecular axis a.
fn linear<T: Real>(t: &Matrix3<T>, s: &SpinOperators<T>) -> [CMat<T>; 3] {
    std::array::from_fn(|a| {
        let mut m = CMat::<T>::zeros(s.dimension(), s.dimension());
        for b in 0..3 {
            m += s.component(b).scale(t[(a, b)]);
        }
        m
    })
}

impl<T: Real> SpinHamiltonian<T> {
    pub fn new(spec: &SpinSystemSpec<T>) -> Result<Self> {
        spec.validate()?;
        let n_fp = spec.fp.spin.multiplicity();
        let n_vo = spec.vo.spin.multiplicity();
        let n_i = spec.vo.nuclear_spin.map_or(1, |i| i.multiplicity());

        let fp_spin = spin_operators::<T>(spec.fp.spin).embed(1, n_vo * n_i);
        let vo_spin = spin_operators::<T>(spec.vo.spin).embed(n_fp, n_i);
        let nuclear_spin = spec
            .vo
            .nuclear_spin
            .map(|i| spin_operators::<T>(i).embed(n_fp * n_vo, 1));
        let electron_spin = SpinOperators {
            x: &fp_spin.x + &vo_spin.x,
            y: &fp_spin.y + &vo_spin.y,
            z: &fp_spin.z + &vo_spin.z,
        };

        // Exchange enters with a negative sign so that J > 0 lowers the quartet.
        let j = cm1_to_mhz(spec.exchange_cm1);
        let mut static_part = bilinear(&Matrix3::from_diagonal_element(-j), &fp_spin, &vo_spin);
        static_part += bilinear(&spec.dipolar_tensor().matrix(), &fp_spin, &vo_spin);
        static_part += bilinear(&spec.zfs.matrix(), &fp_spin, &fp_spin);
        let hyperfine_tensor = spec.a_vo.matrix();
        if let Some(nuc) = &nuclear_spin {
            static_part += bilinear(&hyperfine_tensor, &vo_spin, nuc);
        }

        let beta = T::lit(BOHR_MHZ_PER_MT);
        let zf = linear(&(spec.g_fp.matrix() * beta), &fp_spin);
        let zv = linear(&(spec.g_vo.matrix() * beta), &vo_spin);
        let zeeman = std::array::from_fn(|a| &zf[a] + &zv[a]);

        Ok(Self {
            static_part,
            zeeman,
            fp_spin,
            vo_spin,
            nuclear_spin,
            electron_spin,
            hyperfine_tensor,
            fp: spec.fp,
            vo: spec.vo,
        })
    }

    pub fn dimension(&self) -> usize {
        self.static_part.nrows()
    }

    /// Zeeman operator per mT along unit direction `dir`.
    pub fn zeeman_along(&self, dir: &Vector3<T>) -> CMat<T> {
        self.zeeman[0].scale(dir[0]) + self.zeeman[1].scale(dir[1]) + self.zeeman[2].scale(dir[2])
    }

    pub fn matrix_at(&self, field_mt: T, dir: &Vector3<T>) -> CMat<T> {
        &self.static_part + self.zeeman_along(dir).scale(field_mt)
    }

    pub fn at(&self, field_mt: T, orientation: &LabOrientation<T>) -> HermitianOperator<T> {
        HermitianOperator::from_upper(self.matrix_at(field_mt, &orientation.unit_vector()))
    }
}

pub fn build_hamiltonian<T: Real>(
    spec: &SpinSystemSpec<T>,
    field_mt: T,
    orientation: &LabOrientation<T>,
) -> Result<HermitianOperator<T>> {
    if !(field_mt >= T::zero()) || !field_mt.is_finite() {
        return Err(Error::invalid(format!(
            "field must be finite and >= 0, got {field_mt}"
        )));
    }
    Ok(SpinHamiltonian::new(spec)?.at(field_mt, orientation))
}

/// Point-dipole coupling constant d = (μ0/4π) g1 g2 μB² / (h r³), in MHz.
pub fn point_dipole_coupling<T: Real>(r_nm: T, g1: T, g2: T) -> Result<T> {
    if !(r_nm > T::zero()) || !r_nm.is_finite() {
        return Err(Error::invalid(format!(
            "distance must be > 0 nm, got {r_nm}"
        )));
    }
    let r = r_nm.as_f64() * 1e-9;
    let k = MU0 / (4.0 * std::f64::consts::PI) * BOHR_MAGNETON * BOHR_MAGNETON / (PLANCK * 1e6);
    Ok(T::lit(k / (r * r * r)) * g1 * g2)
}

/// Projectors onto total electron spin 3/2 (quartet) and 1/2 (doublet),
/// tensored with the nuclear identity.
#[derive(Debug, Clone)]
pub struct TotalSpinBlocks<T: Real> {
    pub quartet: CMat<T>,
    pub doublet: CMat<T>,
}

pub fn total_spin_blocks<T: Real>(h: &SpinHamiltonian<T>) -> Result<TotalSpinBlocks<T>> {
    let s = &h.electron_spin;
    let n = h.dimension();
    let s2 = &s.x * &s.x + &s.y * &s.y + &s.z * &s.z;
    let id = CMat::<T>::identity(n, n);
    let three = T::lit(3.0);
    let quartet = (&s2 - id.scale(T::lit(0.75))).scale(T::one() / three);
    let doublet = (id.scale(T::lit(3.75)) - &s2).scale(T::one() / three);
    let idem = super::operators::max_abs(&(&quartet * &quartet - &quartet));
    if idem > T::lit(1e-6) {
        return Err(Error::invalid(
            "electron subspace is not spin 1 ⊗ spin 1/2; quartet/doublet split undefined",
        ));
    }
    Ok(TotalSpinBlocks { quartet, doublet })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExchangeRegime {
    Strong,
    Weak,
}

/// J divided by each competing interaction; `None` when that interaction is
/// zero (ratio unbounded).
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeReport<T: Real> {
    pub exchange_mhz: T,
    pub zeeman_ratio: Option<T>,
    pub zfs_d_ratio: Option<T>,
    pub zfs_e_ratio: Option<T>,
    pub hyperfine_ratio: Option<T>,
    pub threshold: T,
    pub regime: ExchangeRegime,
}

impl<T: Real> RegimeReport<T> {
    pub fn ratios(&self) -> [(&'static str, Option<T>); 4] {
        [
            ("zeeman_difference", self.zeeman_ratio),
            ("zfs_D", self.zfs_d_ratio),
            ("zfs_E", self.zfs_e_ratio),
            ("hyperfine", self.hyperfine_ratio),
        ]
    }
}

pub fn validate_strong_exchange<T: Real>(
    spec: &SpinSystemSpec<T>,
    field_mt: T,
    threshold: T,
) -> RegimeReport<T> {
    let j = cm1_to_mhz(spec.exchange_cm1).abs();
    let ratio = |den: T| {
        if den == T::zero() {
            None
        } else {
            Some(j / den.abs())
        }
    };
    let dg = (spec.g_fp.mean() - spec.g_vo.mean()).abs();
    let zeeman = dg * T::lit(BOHR_MHZ_PER_MT) * field_mt;
    let report_ratios = [
        ratio(zeeman),
        ratio(spec.zfs_d()),
        ratio(spec.zfs_e()),
        ratio(spec.a_vo.max_abs_principal()),
    ];
    let strong = j > T::zero() && report_ratios.iter().flatten().all(|r| *r > threshold);
    RegimeReport {
        exchange_mhz: j,
        zeeman_ratio: report_ratios[0],
        zfs_d_ratio: report_ratios[1],
        zfs_e_ratio: report_ratios[2],
        hyperfine_ratio: report_ratios[3],
        threshold,
        regime: if strong {
            ExchangeRegime::Strong
        } else {
            ExchangeRegime::Weak
        },
    }
}
