//! Angular-momentum matrices and the Hermitian operator carrier.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub type CMat<T> = DMatrix<Complex<T>>;
pub type CVec<T> = DVector<Complex<T>>;

/// Spin quantum number stored as twice its value, so 1/2 is `SpinQuantum(1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpinQuantum(u32);

impl SpinQuantum {
    pub const HALF: SpinQuantum = SpinQuantum(1);
    pub const ONE: SpinQuantum = SpinQuantum(2);
    pub const THREE_HALVES: SpinQuantum = SpinQuantum(3);
    pub const SEVEN_HALVES: SpinQuantum = SpinQuantum(7);

    pub fn from_twice(twice: u32) -> Self {
        SpinQuantum(twice)
    }

    /// Rejects anything that is not a non-negative multiple of 1/2.
    pub fn new(s: f64) -> Result<Self> {
        let twice = 2.0 * s;
        if !s.is_finite() || s < 0.0 || (twice - twice.round()).abs() > 1e-9 {
            return Err(Error::invalid(format!("spin {s} is not a half-integer")));
        }
        Ok(SpinQuantum(twice.round() as u32))
    }

    pub fn twice(self) -> u32 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 2.0
    }

    /// 2s+1
    pub fn multiplicity(self) -> usize {
        self.0 as usize + 1
    }

    /// m values in basis order: +s, s-1, ..., -s.
    pub fn m_values(self) -> Vec<f64> {
        (0..self.multiplicity())
            .map(|k| self.value() - k as f64)
            .collect()
    }
}

/// A spin center: an electron spin with an optional nuclear spin attached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinCenter {
    pub spin: SpinQuantum,
    pub nuclear_spin: Option<SpinQuantum>,
}

impl SpinCenter {
    pub fn dimension(&self) -> usize {
        self.spin.multiplicity() * self.nuclear_spin.map_or(1, |i| i.multiplicity())
    }
}

/// Cartesian spin matrices in the descending-m basis.
#[derive(Debug, Clone)]
pub struct SpinOperators<T: Real> {
    pub x: CMat<T>,
    pub y: CMat<T>,
    pub z: CMat<T>,
}

impl<T: Real> SpinOperators<T> {
    pub fn dimension(&self) -> usize {
        self.z.nrows()
    }

    pub fn component(&self, axis: usize) -> &CMat<T> {
        match axis {
            0 => &self.x,
            1 => &self.y,
            _ => &self.z,
        }
    }

    /// n·S for a (not necessarily unit) real vector n.
    pub fn along(&self, n: &nalgebra::Vector3<T>) -> CMat<T> {
        self.x.scale(n[0]) + self.y.scale(n[1]) + self.z.scale(n[2])
    }

    /// Embeds each component as `left ⊗ S ⊗ right` identities.
    pub fn embed(&self, left: usize, right: usize) -> SpinOperators<T> {
        let l = CMat::<T>::identity(left, left);
        let r = CMat::<T>::identity(right, right);
        let e = |m: &CMat<T>| l.kronecker(m).kronecker(&r);
        SpinOperators {
            x: e(&self.x),
            y: e(&self.y),
            z: e(&self.z),
        }
    }
}

pub fn spin_operators<T: Real>(s: SpinQuantum) -> SpinOperators<T> {
    let n = s.multiplicity();
    let sv = s.value();
    let ms = s.m_values();
    let mut plus = CMat::<T>::zeros(n, n);
    let mut z = CMat::<T>::zeros(n, n);
    for k in 0..n {
        z[(k, k)] = T::c_real(T::lit(ms[k]));
        if k > 0 {
            // S+ |m> = sqrt(s(s+1) - m(m+1)) |m+1>, and |m+1> sits at index k-1
            let m = ms[k];
            plus[(k - 1, k)] = T::c_real(T::lit((sv * (sv + 1.0) - m * (m + 1.0)).sqrt()));
        }
    }
    let minus = plus.adjoint();
    let half = T::lit(0.5);
    let x = (&plus + &minus).scale(half);
    // (S+ - S-)/(2i) = -i/2 (S+ - S-)
    let y = (&plus - &minus) * T::cplx(T::zero(), -half);
    SpinOperators { x, y, z }
}

/// Eigen-decomposition with eigenvalues sorted ascending.
#[derive(Debug, Clone)]
pub struct EigenSystem<T: Real> {
    pub values: Vec<T>,
    /// Eigenvectors as columns, in the same order as `values`.
    pub vectors: CMat<T>,
}

impl<T: Real> EigenSystem<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn vector(&self, i: usize) -> CVec<T> {
        self.vectors.column(i).into_owned()
    }
}

/// Complex matrix known to be Hermitian.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator<T: Real> {
    matrix: CMat<T>,
}

impl<T: Real> HermitianOperator<T> {
    /// Validates Hermiticity to a relative tolerance scaled by machine epsilon.
    pub fn new(matrix: CMat<T>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::invalid("operator matrix is not square"));
        }
        let dev = hermiticity_defect(&matrix);
        let scale = max_abs(&matrix).max(T::one());
        let tol = T::default_epsilon() * T::lit(1.0e4) * scale;
        if dev > tol {
            return Err(Error::numerical(format!(
                "matrix is not Hermitian (max |H - H†| = {dev:e})"
            )));
        }
        Ok(Self { matrix })
    }

    /// Wraps a matrix that is Hermitian by construction; the lower triangle
    /// is replaced by the conjugate of the upper one.
    pub fn from_upper(mut matrix: CMat<T>) -> Self {
        let n = matrix.nrows();
        for i in 0..n {
            matrix[(i, i)].im = T::zero();
            for j in 0..i {
                matrix[(i, j)] = matrix[(j, i)].conj();
            }
        }
        Self { matrix }
    }

    pub fn matrix(&self) -> &CMat<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat<T> {
        self.matrix
    }

    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn eigh(&self) -> EigenSystem<T> {
        eigh(&self.matrix)
    }

    pub fn eigenvalues(&self) -> Vec<T> {
        self.eigh().values
    }

    pub fn expectation(&self, v: &CVec<T>) -> T {
        let w = &self.matrix * v;
        v.dotc(&w).re
    }
}

/// Hermitian eigen-decomposition, eigenvalues ascending.
pub fn eigh<T: Real>(m: &CMat<T>) -> EigenSystem<T> {
    let eig = m.clone().symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    EigenSystem { values, vectors }
}

pub fn max_abs<T: Real>(m: &CMat<T>) -> T {
    m.iter()
        .fold(T::zero(), |acc, z| acc.max(z.norm_sqr().sqrt()))
}

pub fn hermiticity_defect<T: Real>(m: &CMat<T>) -> T {
    max_abs(&(m - m.adjoint()))
}

pub fn commutator<T: Real>(a: &CMat<T>, b: &CMat<T>) -> CMat<T> {
    a * b - b * a
}
