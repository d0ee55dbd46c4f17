//! Deterministic orientation grids.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spin::LabOrientation;

/// Field direction in the molecular frame with its quadrature weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationPoint<T: Real> {
    pub direction: Vector3<T>,
    pub weight: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignmentMode {
    /// Director parallel to the field.
    Parallel,
    /// Director perpendicular to the field.
    Perpendicular,
}

impl AlignmentMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Parallel => "parallel",
            Self::Perpendicular => "perpendicular",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "parallel" => Ok(Self::Parallel),
            "perpendicular" => Ok(Self::Perpendicular),
            other => Err(Error::invalid(format!("unknown alignment mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OrientationScheme<T: Real> {
    Powder {
        grid_size: usize,
    },
    /// Molecular y axis distributed about a director with Gaussian tilt.
    Aligned {
        mode: AlignmentMode,
        /// Tilt standard deviation in radians.
        sigma: T,
        n_samples: usize,
        /// Azimuth points about the field (perpendicular mode only).
        n_azimuth: usize,
    },
    Single(LabOrientation<T>),
}

impl<T: Real> OrientationScheme<T> {
    pub const DEFAULT_AZIMUTH: usize = 24;

    pub fn aligned(mode: AlignmentMode, sigma_deg: T, n_samples: usize) -> Self {
        Self::Aligned {
            mode,
            sigma: crate::units::deg(sigma_deg),
            n_samples,
            n_azimuth: Self::DEFAULT_AZIMUTH,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Powder { grid_size } if *grid_size < 16 => Err(Error::invalid(format!(
                "powder grid_size must be >= 16, got {grid_size}"
            ))),
            Self::Aligned {
                sigma,
                n_samples,
                n_azimuth,
                ..
            } => {
                if !(*sigma >= T::zero()) || !sigma.is_finite() {
                    Err(Error::invalid("alignment sigma must be >= 0"))
                } else if *n_samples < 8 {
                    Err(Error::invalid(format!(
                        "aligned n_samples must be >= 8, got {n_samples}"
                    )))
                } else if *n_azimuth < 1 {
                    Err(Error::invalid("n_azimuth must be >= 1"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Self::Powder { grid_size } => format!("powder(grid_size={grid_size})"),
            Self::Aligned {
                mode,
                sigma,
                n_samples,
                n_azimuth,
            } => format!(
                "aligned(mode={}, sigma_deg={}, n_samples={n_samples}, n_azimuth={n_azimuth})",
                mode.as_str(),
                crate::units::to_deg(*sigma)
            ),
            Self::Single(o) => format!(
                "single(theta_deg={}, phi_deg={})",
                crate::units::to_deg(o.theta),
                crate::units::to_deg(o.phi)
            ),
        }
    }

    pub fn points(&self) -> Result<Vec<OrientationPoint<T>>> {
        self.validate()?;
        Ok(match self {
            Self::Powder { grid_size } => hemisphere_grid(*grid_size),
            Self::Aligned {
                mode: AlignmentMode::Parallel,
                sigma,
                n_samples,
                ..
            } => parallel_points(*sigma, *n_samples),
            Self::Aligned {
                mode: AlignmentMode::Perpendicular,
                sigma,
                n_samples,
                n_azimuth,
            } => perpendicular_points(*sigma, *n_samples, *n_azimuth),
            Self::Single(o) => vec![OrientationPoint {
                direction: o.unit_vector(),
                weight: T::one(),
            }],
        })
    }
}

/// Equal-area partition of the upper hemisphere into `n` cells: a polar cap
/// and collars of equal-area cells. Returns cell centers with weight 1/n.
pub fn hemisphere_grid<T: Real>(n: usize) -> Vec<OrientationPoint<T>> {
    let n = n.max(1);
    let w = T::one() / T::from_usize_lossy(n);
    let mut out = vec![OrientationPoint {
        direction: Vector3::z(),
        weight: w,
    }];
    if n == 1 {
        return out;
    }
    let nf = n as f64;
    let theta_cap = (1.0 - 1.0 / nf).acos();
    let side = (2.0 * PI / nf).sqrt();
    let n_collars = (((FRAC_PI_2 - theta_cap) / side).round() as usize).max(1);
    let dtheta = (FRAC_PI_2 - theta_cap) / n_collars as f64;
    let mut cos_top = 1.0 - 1.0 / nf;
    let mut carry = 0.0;
    let mut assigned = 1usize;
    for c in 0..n_collars {
        let ideal_bottom = (theta_cap + dtheta * (c + 1) as f64).cos();
        let ideal = nf * (cos_top - ideal_bottom) + carry;
        let cells = if c + 1 == n_collars {
            n - assigned
        } else {
            (ideal.round() as usize)
                .max(1)
                .min(n - assigned - (n_collars - c - 1))
        };
        carry = ideal - cells as f64;
        let cos_bottom = cos_top - cells as f64 / nf;
        let cos_mid = 0.5 * (cos_top + cos_bottom);
        let sin_mid = (1.0 - cos_mid * cos_mid).max(0.0).sqrt();
        let offset = if c % 2 == 0 { 0.0 } else { 0.5 };
        for j in 0..cells {
            let phi = 2.0 * PI * (j as f64 + offset) / cells as f64;
            out.push(OrientationPoint {
                direction: Vector3::new(
                    T::lit(sin_mid * phi.cos()),
                    T::lit(sin_mid * phi.sin()),
                    T::lit(cos_mid),
                ),
                weight: w,
            });
        }
        assigned += cells;
        cos_top = cos_bottom;
    }
    out
}

/// Gauss–Hermite rule for ∫ exp(−x²) f(x) dx (Golub–Welsch).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jm = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        jm[(k - 1, k)] = b;
        jm[(k, k - 1)] = b;
    }
    let eig = jm.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            (
                eig.eigenvalues[i],
                PI.sqrt() * eig.eigenvectors[(0, i)].powi(2),
            )
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    // Symmetrize against round-off.
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (pairs[j].0 - pairs[i].0);
        let w = 0.5 * (pairs[i].1 + pairs[j].1);
        pairs[i] = (-x, w);
        pairs[j] = (x, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    pairs.into_iter().unzip()
}

/// Nodes and probability weights for a zero-mean normal with std `sigma`.
fn normal_rule(sigma: f64, n: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_hermite(n);
    x.iter()
        .zip(&w)
        .map(|(x, w)| (std::f64::consts::SQRT_2 * sigma * x, w / PI.sqrt()))
        .collect()
}

/// Field along molecular y tilted by a 2-D Gaussian (exponential map).
fn parallel_points<T: Real>(sigma: T, n: usize) -> Vec<OrientationPoint<T>> {
    let s = sigma.as_f64();
    if s == 0.0 {
        return vec![OrientationPoint {
            direction: Vector3::y(),
            weight: T::one(),
        }];
    }
    let rule = normal_rule(s, n);
    let mut out = Vec::with_capacity(n * n);
    for &(t1, w1) in &rule {
        for &(t2, w2) in &rule {
            let t = (t1 * t1 + t2 * t2).sqrt();
            let dir = if t == 0.0 {
                Vector3::new(0.0, 1.0, 0.0)
            } else {
                let (st, ct) = t.sin_cos();
                Vector3::new(st * t1 / t, ct, st * t2 / t)
            };
            out.push(OrientationPoint {
                direction: dir.map(T::lit),
                weight: T::lit(w1 * w2),
            });
        }
    }
    out
}

/// Field perpendicular to the (tilted) molecular y axis, uniform in the
/// azimuth ψ ∈ [0, π) about y.
fn perpendicular_points<T: Real>(sigma: T, n: usize, n_azimuth: usize) -> Vec<OrientationPoint<T>> {
    let s = sigma.as_f64();
    let rule = if s == 0.0 {
        vec![(0.0, 1.0)]
    } else {
        normal_rule(s, n)
    };
    let mut out = Vec::with_capacity(rule.len() * n_azimuth);
    for &(t, wt) in &rule {
        let (st, ct) = t.sin_cos();
        for j in 0..n_azimuth {
            let psi = PI * (j as f64 + 0.5) / n_azimuth as f64;
            let dir = Vector3::new(ct * psi.cos(), st, ct * psi.sin());
            out.push(OrientationPoint {
                direction: dir.map(T::lit),
                weight: T::lit(wt / n_azimuth as f64),
            });
        }
    }
    out
}

/// Applies `r` to every grid direction.
pub fn rotate_points<T: Real>(
    points: &[OrientationPoint<T>],
    r: &Matrix3<T>,
) -> Vec<OrientationPoint<T>> {
    points
        .iter()
        .map(|p| OrientationPoint {
            direction: r * p.direction,
            weight: p.weight,
        })
        .collect()
}
