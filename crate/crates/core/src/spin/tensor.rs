//! Rank-2 interaction tensors and the frames they live in.
//!
//! Rotations use the active Z-Y-Z convention `R = Rz(a) · Ry(b) · Rz(c)`;
//! the columns of `R` are the principal axes expressed in the molecular
//! (VO) frame, so the molecular-frame tensor is `R · diag(p) · Rᵀ`.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::units::deg;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EulerAngles<T: Real> {
    pub alpha: T,
    pub beta: T,
    pub gamma: T,
}

impl<T: Real> EulerAngles<T> {
    pub fn new(alpha: T, beta: T, gamma: T) -> Self {
        Self { alpha, beta, gamma }
    }

    pub fn identity() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn from_degrees(a: T, b: T, c: T) -> Self {
        Self::new(deg(a), deg(b), deg(c))
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.is_finite() && self.beta.is_finite() && self.gamma.is_finite()
    }

    pub fn matrix(&self) -> Matrix3<T> {
        rot_z(self.alpha) * rot_y(self.beta) * rot_z(self.gamma)
    }

    /// Z-Y-Z angles of a proper rotation matrix.
    pub fn from_matrix(r: &Matrix3<T>) -> Self {
        let cb = r[(2, 2)].clamp(-T::one(), T::one());
        let beta = cb.acos();
        let sb = beta.sin();
        if sb > T::lit(1e-12) {
            Self::new(
                r[(1, 2)].atan2(r[(0, 2)]),
                beta,
                r[(2, 1)].atan2(-r[(2, 0)]),
            )
        } else if cb > T::zero() {
            Self::new(r[(1, 0)].atan2(r[(0, 0)]), T::zero(), T::zero())
        } else {
            Self::new((-r[(1, 0)]).atan2(-r[(0, 0)]), T::pi(), T::zero())
        }
    }
}

pub fn rot_z<T: Real>(a: T) -> Matrix3<T> {
    let (s, c) = a.sin_cos();
    let o = T::zero();
    let l = T::one();
    Matrix3::new(c, -s, o, s, c, o, o, o, l)
}

pub fn rot_y<T: Real>(b: T) -> Matrix3<T> {
    let (s, c) = b.sin_cos();
    let o = T::zero();
    let l = T::one();
    Matrix3::new(c, o, s, o, l, o, -s, o, c)
}

pub fn rot_x<T: Real>(g: T) -> Matrix3<T> {
    let (s, c) = g.sin_cos();
    let o = T::zero();
    let l = T::one();
    Matrix3::new(l, o, o, o, c, -s, o, s, c)
}

/// Principal values plus the orientation of the principal frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractionTensor<T: Real> {
    pub principal: Vector3<T>,
    pub frame: EulerAngles<T>,
}

impl<T: Real> InteractionTensor<T> {
    pub fn new(principal: Vector3<T>, frame: EulerAngles<T>) -> Self {
        Self { principal, frame }
    }

    pub fn isotropic(v: T) -> Self {
        Self::new(Vector3::new(v, v, v), EulerAngles::identity())
    }

    /// Axial tensor (perp, perp, parallel) aligned with the molecular frame.
    pub fn axial(perp: T, par: T) -> Self {
        Self::new(Vector3::new(perp, perp, par), EulerAngles::identity())
    }

    /// Traceless zero-field splitting tensor (−D/3+E, −D/3−E, 2D/3).
    pub fn zero_field_splitting(d: T, e: T, frame: EulerAngles<T>) -> Self {
        let third = d / T::lit(3.0);
        Self::new(
            Vector3::new(-third + e, -third - e, third * T::lit(2.0)),
            frame,
        )
    }

    /// Point-dipole tensor diag(d, d, −2d) with its unique axis along the
    /// molecular y axis.
    pub fn dipolar_along_y(d: T) -> Self {
        let half_pi = T::frac_pi_2();
        Self::new(
            Vector3::new(d, d, d * T::lit(-2.0)),
            EulerAngles::new(half_pi, half_pi, T::zero()),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.principal.iter().all(|v| v.is_finite()) && self.frame.is_finite()
    }

    pub fn rotation(&self) -> Matrix3<T> {
        self.frame.matrix()
    }

    /// Principal axis `k` (0 = x, 1 = y, 2 = z) in the molecular frame.
    pub fn axis(&self, k: usize) -> Vector3<T> {
        self.rotation().column(k).into_owned()
    }

    /// Molecular-frame matrix.
    pub fn matrix(&self) -> Matrix3<T> {
        rotate_tensor(self)
    }

    /// The same tensor after an active rotation `q` of the whole molecule.
    pub fn rotated(&self, q: &Matrix3<T>) -> Self {
        Self::new(
            self.principal,
            EulerAngles::from_matrix(&(q * self.rotation())),
        )
    }

    pub fn max_abs_principal(&self) -> T {
        self.principal.iter().fold(T::zero(), |a, v| a.max(v.abs()))
    }

    pub fn mean(&self) -> T {
        (self.principal[0] + self.principal[1] + self.principal[2]) / T::lit(3.0)
    }
}

pub fn rotate_tensor<T: Real>(t: &InteractionTensor<T>) -> Matrix3<T> {
    let r = t.rotation();
    r * Matrix3::from_diagonal(&t.principal) * r.transpose()
}

/// Relative orientation of the triplet (FP) principal axes.
///
/// z' is z rotated by `beta` about the bond axis y; x' and y' are then
/// rotated by `alpha` about z', starting from y' parallel to y. The sign of
/// the in-plane rotation is not fixed by the molecular sketch, so both are
/// available.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameGeometry<T: Real> {
    pub alpha: T,
    pub beta: T,
    pub alpha_sign: AlphaSign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlphaSign {
    #[default]
    Positive,
    Negative,
}

impl AlphaSign {
    pub fn as_str(&self) -> &'static str {
        match self {
            AlphaSign::Positive => "positive",
            AlphaSign::Negative => "negative",
        }
    }
}

impl<T: Real> FrameGeometry<T> {
    pub fn from_degrees(alpha: T, beta: T, alpha_sign: AlphaSign) -> Result<Self> {
        let in_range = |x: T| x >= T::zero() && x < T::lit(180.0);
        if !in_range(alpha) || !in_range(beta) {
            return Err(Error::invalid(format!(
                "frame angles must lie in [0, 180) degrees (alpha = {alpha}, beta = {beta})"
            )));
        }
        Ok(Self {
            alpha: deg(alpha),
            beta: deg(beta),
            alpha_sign,
        })
    }

    pub fn aligned() -> Self {
        Self {
            alpha: T::zero(),
            beta: T::zero(),
            alpha_sign: AlphaSign::Positive,
        }
    }

    pub fn triplet_frame(&self) -> EulerAngles<T> {
        let a = match self.alpha_sign {
            AlphaSign::Positive => self.alpha,
            AlphaSign::Negative => -self.alpha,
        };
        EulerAngles::new(T::zero(), self.beta, a)
    }
}

pub fn is_proper_rotation<T: Real>(r: &Matrix3<T>, tol: T) -> bool {
    let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
    ortho < tol && (r.determinant() - T::one()).abs() < tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sorted_eigs(m: &Matrix3<f64>) -> Vec<f64> {
        let mut v: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    #[test]
    fn identity_frame_gives_diagonal() {
        let t = InteractionTensor::new(Vector3::new(1.0, 2.0, 3.0), EulerAngles::identity());
        assert_eq!(
            rotate_tensor(&t),
            Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 3.0))
        );
    }

    #[test]
    fn quarter_turn_about_z_swaps_xx_yy() {
        let t = InteractionTensor::new(
            Vector3::new(1.0, 2.0, 3.0),
            EulerAngles::from_degrees(90.0, 0.0, 0.0),
        );
        let m = rotate_tensor(&t);
        assert_relative_eq!(m[(0, 0)], 2.0, epsilon = 1e-14);
        assert_relative_eq!(m[(1, 1)], 1.0, epsilon = 1e-14);
        assert_relative_eq!(m[(2, 2)], 3.0, epsilon = 1e-14);
    }

    #[test]
    fn zfs_eigenvalues_survive_rotation() {
        let g = FrameGeometry::from_degrees(45.0, 60.0, AlphaSign::Positive).unwrap();
        let t = InteractionTensor::zero_field_splitting(1135.0, 235.0, g.triplet_frame());
        let m = rotate_tensor(&t);
        let e = sorted_eigs(&m);
        let mut p = vec![
            -1135.0 / 3.0 + 235.0,
            -1135.0 / 3.0 - 235.0,
            2.0 * 1135.0 / 3.0,
        ];
        p.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in e.iter().zip(&p) {
            assert_relative_eq!(a, b, epsilon = 1e-9);
        }
        assert_relative_eq!(m.trace(), 0.0, epsilon = 1e-10);
        assert!(is_proper_rotation(&t.rotation(), 1e-12));
        assert_relative_eq!(m, m.transpose(), epsilon = 1e-12);
    }

    #[test]
    fn dipolar_tensor_unique_axis_on_y() {
        let m = rotate_tensor(&InteractionTensor::dipolar_along_y(90.0));
        let expect = Matrix3::from_diagonal(&Vector3::new(90.0, -180.0, 90.0));
        assert_relative_eq!(m, expect, epsilon = 1e-12);
    }

    #[test]
    fn triplet_axes_follow_geometry() {
        let g = FrameGeometry::from_degrees(45.0, 60.0, AlphaSign::Positive).unwrap();
        let r = g.triplet_frame().matrix();
        let zp = r.column(2);
        // dihedral between z and z'
        assert_relative_eq!(zp[2], 0.5, epsilon = 1e-12);
        // y' makes 45 degrees with the bond axis
        assert_relative_eq!(
            r.column(1)[1],
            (45.0f64).to_radians().cos(),
            epsilon = 1e-12
        );
        // z' stays perpendicular to the bond axis
        assert_relative_eq!(zp[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn frame_angles_out_of_range_rejected() {
        assert!(FrameGeometry::<f64>::from_degrees(180.0, 10.0, AlphaSign::Positive).is_err());
        assert!(FrameGeometry::<f64>::from_degrees(10.0, -1.0, AlphaSign::Positive).is_err());
    }

    #[test]
    fn euler_round_trip() {
        for &(a, b, c) in &[
            (0.3, 1.1, -2.0),
            (0.0, 0.0, 0.7),
            (1.0, std::f64::consts::PI, 0.0),
            (-2.5, 2.9, 3.0),
        ] {
            let r = EulerAngles::new(a, b, c).matrix();
            let back = EulerAngles::from_matrix(&r).matrix();
            assert_relative_eq!(r, back, epsilon = 1e-10);
        }
    }
}
