//! Non-equilibrium and thermal population models.
//!
//! The photo-quartet density matrix is a polynomial in `S·b̂` (total
//! electron spin along the field) restricted to the quartet block, times
//! nuclear sublevel populations quantized along the hyperfine field `A·b̂`.
//! Because it is linear in each of (a, r) and ρ_N, level populations are
//! exposed as components that spectra can be synthesized from once and
//! recombined for any parameter values.

mod components;

pub use components::{
    LevelPopulations, QuartetComponents, ThermalPopulations, ZeroFieldComponents, N_ELECTRON_TERMS,
};

use nalgebra::{Complex, Vector3};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spin::{
    eigh, spin_operators, CMat, CVec, EigenSystem, HermitianOperator, InteractionTensor,
    SpinHamiltonian, SpinQuantum,
};
use crate::units::KELVIN_PER_MHZ;

/// Quartet M values in basis order.
pub const QUARTET_M: [f64; 4] = [1.5, 0.5, -0.5, -1.5];

/// (a1, a2, a3) and (r1, r2, r3) population coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuartetPolarizationParams<T: Real> {
    pub a: [T; 3],
    pub r: [T; 3],
}

impl<T: Real> QuartetPolarizationParams<T> {
    pub fn new(a: [T; 3], r: [T; 3]) -> Self {
        Self { a, r }
    }

    pub fn zero() -> Self {
        Self::new([T::zero(); 3], [T::zero(); 3])
    }

    /// Best-fit values reported for the VO–FP dimer.
    pub fn vofp_reference() -> Self {
        Self::new(
            [T::lit(0.11), T::lit(-0.002), T::lit(-0.027)],
            [T::zero(), T::lit(-0.01), T::zero()],
        )
    }

    /// (a1, a2, a3, r1, r2, r3)
    pub fn to_array(&self) -> [T; 6] {
        [
            self.a[0], self.a[1], self.a[2], self.r[0], self.r[1], self.r[2],
        ]
    }

    pub fn from_array(v: &[T]) -> Self {
        Self::new([v[0], v[1], v[2]], [v[3], v[4], v[5]])
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().chain(&self.r).all(|v| v.is_finite())
    }
}

/// Populations of the 2I+1 = 8 nuclear sublevels, ordered m_I = +7/2 … −7/2.
#[derive(Debug, Clone, PartialEq)]
pub struct NuclearPopulations<T: Real> {
    p: Vec<T>,
}

impl<T: Real> NuclearPopulations<T> {
    pub const NORMALIZATION_TOLERANCE: f64 = 2e-3;

    pub fn new(p: Vec<T>) -> Result<Self> {
        if p.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::invalid(
                "nuclear populations must be finite and >= 0",
            ));
        }
        let sum = p.iter().fold(T::zero(), |a, b| a + *b);
        if (sum - T::one()).abs() > T::lit(Self::NORMALIZATION_TOLERANCE) {
            return Err(Error::invalid(format!(
                "nuclear populations sum to {sum}, expected 1"
            )));
        }
        Ok(Self { p })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            p: vec![T::one() / T::from_usize_lossy(n); n],
        }
    }

    /// Fitted ⁵¹V sublevel populations of the VO–FP quartet.
    pub fn vofp_reference() -> Self {
        Self::new(
            [0.146, 0.078, 0.194, 0.126, 0.117, 0.165, 0.078, 0.097]
                .iter()
                .map(|&v| T::lit(v))
                .collect(),
        )
        .expect("reference populations are valid")
    }

    /// Softmax of `logits` (exactly on the simplex).
    pub fn from_logits(logits: &[T]) -> Self {
        let m = logits.iter().fold(
            T::min_value().unwrap_or(-T::max_value().unwrap()),
            |a, b| a.max(*b),
        );
        let e: Vec<T> = logits.iter().map(|l| (*l - m).exp()).collect();
        let s = e.iter().fold(T::zero(), |a, b| a + *b);
        Self {
            p: e.into_iter().map(|v| v / s).collect(),
        }
    }

    /// Logits with the last entry pinned to zero.
    pub fn to_logits(&self) -> Vec<T> {
        let floor = T::lit(1e-12);
        let last = self.p[self.p.len() - 1].max(floor);
        self.p.iter().map(|v| (v.max(floor) / last).ln()).collect()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolarizationSpec<T: Real> {
    PhotoQuartet {
        params: QuartetPolarizationParams<T>,
        nuclear: NuclearPopulations<T>,
        /// Coefficient of S·b̂ inside the trip-doublet block; zero by default.
        doublet_polarization: T,
        /// Extra rotation (radians) of x_Q about z_Q.
        frame_rotation: T,
    },
    Thermal {
        temperature_k: T,
    },
    TripletZeroField {
        p: [T; 3],
    },
}

impl<T: Real> PolarizationSpec<T> {
    pub fn photo_quartet(
        params: QuartetPolarizationParams<T>,
        nuclear: NuclearPopulations<T>,
    ) -> Self {
        Self::PhotoQuartet {
            params,
            nuclear,
            doublet_polarization: T::zero(),
            frame_rotation: T::zero(),
        }
    }

    pub fn vofp_reference() -> Self {
        Self::photo_quartet(
            QuartetPolarizationParams::vofp_reference(),
            NuclearPopulations::vofp_reference(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::PhotoQuartet {
                params,
                doublet_polarization,
                frame_rotation,
                ..
            } => {
                if !params.is_finite()
                    || !doublet_polarization.is_finite()
                    || !frame_rotation.is_finite()
                {
                    return Err(Error::invalid("polarization coefficients must be finite"));
                }
            }
            Self::Thermal { temperature_k } => {
                if !(*temperature_k > T::zero()) {
                    return Err(Error::invalid("temperature must be > 0 K"));
                }
            }
            Self::TripletZeroField { p } => validate_triplet_populations(p)?,
        }
        Ok(())
    }
}

fn validate_triplet_populations<T: Real>(p: &[T; 3]) -> Result<()> {
    let sum = p[0] + p[1] + p[2];
    if p.iter().any(|v| !(*v >= T::zero())) || (sum - T::one()).abs() > T::lit(1e-6) {
        return Err(Error::invalid(format!(
            "zero-field populations must be >= 0 and sum to 1, got [{}, {}, {}]",
            p[0], p[1], p[2]
        )));
    }
    Ok(())
}

/// Polarization frame of the quartet: z_Q normal to the triplet plane, x_Q in
/// that plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuartetFrame<T: Real> {
    pub z_q: Vector3<T>,
    pub x_q: Vector3<T>,
}

impl<T: Real> QuartetFrame<T> {
    pub fn new(z_q: Vector3<T>, x_q: Vector3<T>) -> Result<Self> {
        let z = z_q.normalize();
        let x = x_q.normalize();
        if z.dot(&x).abs() > T::lit(1e-9) || !z.iter().chain(x.iter()).all(|v| v.is_finite()) {
            return Err(Error::invalid("quartet frame axes must be orthonormal"));
        }
        Ok(Self { z_q: z, x_q: x })
    }

    /// z_Q = z', x_Q = projection of x' on the triplet plane (x' itself),
    /// optionally rotated by `extra` about z_Q.
    pub fn from_zfs(zfs: &InteractionTensor<T>, extra: T) -> Self {
        let z = zfs.axis(2);
        let x0 = zfs.axis(0);
        let x_plane = (x0 - z * z.dot(&x0)).normalize();
        let y_plane = z.cross(&x_plane);
        let (s, c) = extra.sin_cos();
        Self {
            z_q: z,
            x_q: x_plane * c + y_plane * s,
        }
    }

    pub fn y_q(&self) -> Vector3<T> {
        self.z_q.cross(&self.x_q)
    }

    /// Polar and azimuthal angle of `dir` in this frame.
    pub fn angles(&self, dir: &Vector3<T>) -> (T, T) {
        let n = dir.normalize();
        let cz = n.dot(&self.z_q).clamp(-T::one(), T::one());
        let phi = n.dot(&self.y_q()).atan2(n.dot(&self.x_q));
        (cz.acos(), phi)
    }
}

/// Angular prefactors of the six population operators, in parameter order
/// (a1, a2, a3, r1, r2, r3). Operators: a1, r1 → S_z; a2, r2 → S_z² − S(S+1)/3;
/// a3, r3 → S_z³.
pub fn angular_factors<T: Real>(theta: T, phi: T) -> [T; 6] {
    let c2 = theta.cos().powi(2);
    let s2 = theta.sin().powi(2);
    let three = T::lit(3.0);
    [
        s2,
        T::one() - three * c2,
        s2,
        c2,
        s2 * (phi * T::lit(2.0)).cos(),
        c2,
    ]
}

/// Which power of S_z each parameter multiplies.
pub(crate) const TERM_POWER: [u8; 6] = [1, 2, 3, 1, 2, 3];

fn term_value<T: Real>(power: u8, m: T) -> T {
    match power {
        1 => m,
        2 => m * m - T::lit(1.25),
        _ => m * m * m,
    }
}

/// Diagonal of ρ_S(θ, φ) on the quartet sublevels in basis order
/// M = +3/2, +1/2, −1/2, −3/2.
pub fn rho_s<T: Real>(theta: T, phi: T, params: &QuartetPolarizationParams<T>) -> [T; 4] {
    let f = angular_factors(theta, phi);
    let p = params.to_array();
    std::array::from_fn(|i| {
        let m = T::lit(QUARTET_M[i]);
        (0..6).fold(T::zero(), |acc, k| {
            acc + p[k] * f[k] * term_value(TERM_POWER[k], m)
        })
    })
}

/// ρ_0 diagonal in the coupled basis |S, M; m_I⟩: quartet first
/// (M descending, then m_I descending), followed by the doublet block,
/// which carries no population.
pub fn rho_0_coupled<T: Real>(rho_s: &[T; 4], rho_n: &NuclearPopulations<T>) -> Vec<T> {
    let n = rho_n.len();
    let mut out = Vec::with_capacity(6 * n);
    for &ps in rho_s {
        for &pn in rho_n.as_slice() {
            out.push(ps * pn);
        }
    }
    out.extend(std::iter::repeat_n(T::zero(), 2 * n));
    out
}

/// Operators oriented along a field direction, on the 6-dimensional electron
/// space and the nuclear space.
pub(crate) struct OrientedOperators<T: Real> {
    /// Total electron spin along b̂.
    pub s_b: CMat<T>,
    pub quartet: CMat<T>,
    pub doublet: CMat<T>,
    /// Nuclear eigenstates of I·n̂, m_I descending.
    pub nuclear_states: Vec<CVec<T>>,
}

impl<T: Real> OrientedOperators<T> {
    pub fn new(h: &SpinHamiltonian<T>, dir: &Vector3<T>) -> Result<Self> {
        if h.fp.spin != SpinQuantum::ONE || h.vo.spin != SpinQuantum::HALF {
            return Err(Error::invalid(
                "photo-quartet populations need a spin-1 ⊗ spin-1/2 electron space",
            ));
        }
        let n_nuc = h.vo.nuclear_spin.map_or(1, |i| i.multiplicity());
        let s1 = spin_operators::<T>(SpinQuantum::ONE);
        let s2 = spin_operators::<T>(SpinQuantum::HALF);
        let b = dir.normalize();
        let e1 = s1.embed(1, 2);
        let e2 = s2.embed(3, 1);
        let sx = &e1.x + &e2.x;
        let sy = &e1.y + &e2.y;
        let sz = &e1.z + &e2.z;
        let s_b = sx.scale(b[0]) + sy.scale(b[1]) + sz.scale(b[2]);
        let s_sq = &sx * &sx + &sy * &sy + &sz * &sz;
        let id = CMat::<T>::identity(6, 6);
        let third = T::one() / T::lit(3.0);
        let quartet = (&s_sq - id.scale(T::lit(0.75))).scale(third);
        let doublet = (id.scale(T::lit(3.75)) - &s_sq).scale(third);

        let nuclear_states = if n_nuc == 1 {
            vec![CVec::<T>::from_element(1, T::c_real(T::one()))]
        } else {
            let i = spin_operators::<T>(h.vo.nuclear_spin.expect("nuclear spin present"));
            let a_b = h.hyperfine_tensor * b;
            let axis = if a_b.norm() > T::lit(1e-12) {
                a_b.normalize()
            } else {
                b
            };
            let eig = eigh(&i.along(&axis));
            (0..n_nuc).rev().map(|k| eig.vector(k)).collect()
        };
        Ok(Self {
            s_b,
            quartet,
            doublet,
            nuclear_states,
        })
    }

    /// Projector on the quartet sublevel with quantum number `m` along b̂.
    pub fn quartet_sublevel(&self, m: f64) -> CMat<T> {
        let mut p = self.quartet.clone();
        let id = CMat::<T>::identity(6, 6);
        for &other in QUARTET_M.iter().filter(|&&o| o != m) {
            let f = (&self.s_b - id.scale(T::lit(other))).scale(T::one() / T::lit(m - other));
            p = &p * f;
        }
        p
    }
}

/// ρ_0 = ρ_S ⊗ ρ_N as an operator on the product basis of `h`.
///
/// `rho_s` is in basis order M = +3/2 … −3/2, quantized along `dir`;
/// nuclear sublevels are quantized along the hyperfine field A·b̂.
pub fn rho_0<T: Real>(
    h: &SpinHamiltonian<T>,
    dir: &Vector3<T>,
    rho_s: &[T; 4],
    rho_n: &NuclearPopulations<T>,
) -> Result<HermitianOperator<T>> {
    let ops = OrientedOperators::new(h, dir)?;
    if ops.nuclear_states.len() != rho_n.len() {
        return Err(Error::invalid(format!(
            "{} nuclear populations for {} sublevels",
            rho_n.len(),
            ops.nuclear_states.len()
        )));
    }
    let mut electron = CMat::<T>::zeros(6, 6);
    for (k, &m) in QUARTET_M.iter().enumerate() {
        electron += ops.quartet_sublevel(m).scale(rho_s[k]);
    }
    let n = ops.nuclear_states.len();
    let mut nuclear = CMat::<T>::zeros(n, n);
    for (u, &p) in ops.nuclear_states.iter().zip(rho_n.as_slice()) {
        nuclear += (u * u.adjoint()).scale(p);
    }
    Ok(HermitianOperator::from_upper(electron.kronecker(&nuclear)))
}

/// Level populations ⟨v_i|ρ_0|v_i⟩ in ascending-energy order.
#[derive(Debug, Clone)]
pub struct EigenbasisPopulations<T: Real> {
    pub energies: Vec<T>,
    pub populations: Vec<T>,
    /// True when some eigenvalues are degenerate, making the populations
    /// inside those blocks depend on the chosen eigenbasis.
    pub basis_dependent: bool,
}

pub fn eigenbasis_populations<T: Real>(
    h: &HermitianOperator<T>,
    rho0: &HermitianOperator<T>,
) -> Result<EigenbasisPopulations<T>> {
    if h.dimension() != rho0.dimension() {
        return Err(Error::invalid(
            "Hamiltonian and density matrix dimensions differ",
        ));
    }
    let eig = h.eigh();
    Ok(populations_in(&eig, rho0))
}

pub fn populations_in<T: Real>(
    eig: &EigenSystem<T>,
    rho0: &HermitianOperator<T>,
) -> EigenbasisPopulations<T> {
    let populations = (0..eig.len())
        .map(|i| rho0.expectation(&eig.vector(i)))
        .collect();
    let scale = eig.values.iter().fold(T::one(), |a, v| a.max(v.abs()));
    let basis_dependent = eig
        .values
        .windows(2)
        .any(|w| (w[1] - w[0]).abs() <= T::lit(1e-9) * scale);
    EigenbasisPopulations {
        energies: eig.values.clone(),
        populations,
        basis_dependent,
    }
}

/// Normalized Boltzmann populations of levels with energies in MHz.
pub fn thermal_populations<T: Real>(energies_mhz: &[T], temperature_k: T) -> Result<Vec<T>> {
    if !(temperature_k > T::zero()) || !temperature_k.is_finite() {
        return Err(Error::invalid(format!(
            "temperature must be > 0 K, got {temperature_k}"
        )));
    }
    let e0 = energies_mhz
        .iter()
        .fold(T::max_value().unwrap(), |a, b| a.min(*b));
    let beta = T::lit(KELVIN_PER_MHZ) / temperature_k;
    let w: Vec<T> = energies_mhz
        .iter()
        .map(|e| (-(*e - e0) * beta).exp())
        .collect();
    let z = w.iter().fold(T::zero(), |a, b| a + *b);
    Ok(w.into_iter().map(|v| v / z).collect())
}

/// Zero-field eigenstates T_x, T_y, T_z of a spin-1 ZFS tensor, written in
/// the descending-m basis of the frame the tensor is expressed in.
pub fn triplet_zero_field_states<T: Real>(zfs: &InteractionTensor<T>) -> [CVec<T>; 3] {
    let r = zfs.rotation();
    let h = T::lit(std::f64::consts::FRAC_1_SQRT_2);
    let o = T::zero();
    let c = |re: T, im: T| Complex::new(re, im);
    // Cartesian triplet functions in the (|+1>, |0>, |-1>) basis.
    let cart = [
        CVec::<T>::from_vec(vec![c(-h, o), c(o, o), c(h, o)]),
        CVec::<T>::from_vec(vec![c(o, h), c(o, o), c(o, h)]),
        CVec::<T>::from_vec(vec![c(o, o), c(T::one(), o), c(o, o)]),
    ];
    std::array::from_fn(|k| {
        let mut v = CVec::<T>::zeros(3);
        for a in 0..3 {
            v += cart[a].scale(r[(a, k)]);
        }
        v
    })
}

/// High-field populations P_i = Σ_k |⟨v_i|T_k⟩|² p_k of a spin-1 system.
pub fn triplet_highfield_populations<T: Real>(
    p_zero_field: &[T; 3],
    eig: &EigenSystem<T>,
    zfs: &InteractionTensor<T>,
) -> Result<Vec<T>> {
    validate_triplet_populations(p_zero_field)?;
    if eig.len() != 3 {
        return Err(Error::invalid(
            "zero-field population transfer needs a spin-1 eigenbasis",
        ));
    }
    let states = triplet_zero_field_states(zfs);
    Ok((0..3)
        .map(|i| {
            let v = eig.vector(i);
            (0..3).fold(T::zero(), |acc, k| {
                acc + v.dotc(&states[k]).norm_sqr() * p_zero_field[k]
            })
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Multiplet {
    Quartet,
    Doublet,
}

/// Hyperfine coupling of the doublet center projected onto a strong-exchange
/// multiplet: +A/3 in the quartet, −A/3 in the trip-doublet.
pub fn project_hyperfine<T: Real>(a_mhz: T, multiplet: Multiplet) -> T {
    let third = a_mhz / T::lit(3.0);
    match multiplet {
        Multiplet::Quartet => third,
        Multiplet::Doublet => -third,
    }
}

/// Largest population difference between any two nuclear sublevels.
pub fn nuclear_polarization_gain<T: Real>(p: &NuclearPopulations<T>) -> T {
    let s = p.as_slice();
    let hi = s.iter().fold(T::min_value().unwrap(), |a, b| a.max(*b));
    let lo = s.iter().fold(T::max_value().unwrap(), |a, b| a.min(*b));
    hi - lo
}
