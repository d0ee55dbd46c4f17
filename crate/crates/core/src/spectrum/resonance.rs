//! Resonance-field search on a dense field grid with level tracking.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::polarization::LevelPopulations;
use crate::scalar::Real;
use crate::spin::{
    bilinear, eigh, spin_operators, CMat, CVec, EigenSystem, InteractionTensor, SpinHamiltonian,
    SpinOperators, SpinQuantum,
};
use crate::units::BOHR_MHZ_PER_MT;

/// Field-dependent Hamiltonian H(B) = H0 + B·(b̂·Z), in MHz with B in mT.
#[derive(Debug, Clone)]
pub struct ResonanceSystem<T: Real> {
    pub static_part: CMat<T>,
    /// Zeeman operators per mT along x, y, z.
    pub zeeman: [CMat<T>; 3],
    /// Total electron spin, used for transition moments.
    pub spin: SpinOperators<T>,
    pub nuclear: Option<SpinOperators<T>>,
    pub hyperfine: Matrix3<T>,
}

impl<T: Real> ResonanceSystem<T> {
    pub fn from_hamiltonian(h: &SpinHamiltonian<T>) -> Self {
        Self {
            static_part: h.static_part.clone(),
            zeeman: h.zeeman.clone(),
            spin: h.electron_spin.clone(),
            nuclear: h.nuclear_spin.clone(),
            hyperfine: h.hyperfine_tensor,
        }
    }

    /// Isolated S = 1 with isotropic g and a ZFS tensor.
    pub fn triplet(g: T, zfs: &InteractionTensor<T>) -> Self {
        let s = spin_operators::<T>(SpinQuantum::ONE);
        let beta = g * T::lit(BOHR_MHZ_PER_MT);
        Self {
            static_part: bilinear(&zfs.matrix(), &s, &s),
            zeeman: [s.x.scale(beta), s.y.scale(beta), s.z.scale(beta)],
            spin: s,
            nuclear: None,
            hyperfine: Matrix3::zeros(),
        }
    }

    /// S = 1/2 coupled to a nuclear spin (rigid-limit doublet).
    pub fn doublet(
        g: &InteractionTensor<T>,
        a: &InteractionTensor<T>,
        nuclear: SpinQuantum,
    ) -> Self {
        let n = nuclear.multiplicity();
        let s = spin_operators::<T>(SpinQuantum::HALF).embed(1, n);
        let i = spin_operators::<T>(nuclear).embed(2, 1);
        let gm = g.matrix() * T::lit(BOHR_MHZ_PER_MT);
        let zeeman = std::array::from_fn(|k| {
            let mut m = CMat::<T>::zeros(2 * n, 2 * n);
            for b in 0..3 {
                m += s.component(b).scale(gm[(k, b)]);
            }
            m
        });
        let hyperfine = a.matrix();
        Self {
            static_part: bilinear(&hyperfine, &s, &i),
            zeeman,
            spin: s,
            nuclear: Some(i),
            hyperfine,
        }
    }

    pub fn dimension(&self) -> usize {
        self.static_part.nrows()
    }

    pub fn zeeman_along(&self, dir: &Vector3<T>) -> CMat<T> {
        self.zeeman[0].scale(dir[0]) + self.zeeman[1].scale(dir[1]) + self.zeeman[2].scale(dir[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonanceSettings<T: Real> {
    pub frequency_mhz: T,
    pub field_min: T,
    pub field_max: T,
    /// Target grid spacing in mT.
    pub step: T,
    /// Transitions with |dν/dB| below this (MHz/mT) are discarded.
    pub slope_floor: T,
}

impl<T: Real> ResonanceSettings<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = self.frequency_mhz > T::zero()
            && self.field_min >= T::zero()
            && self.field_max > self.field_min
            && self.step > T::zero()
            && self.slope_floor >= T::zero();
        if !ok {
            return Err(Error::invalid(format!(
                "invalid resonance settings: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<T> {
        let span = self.field_max - self.field_min;
        let n = (span / self.step).ceil().to_usize().unwrap_or(1).max(1) + 1;
        crate::scalar::linspace(self.field_min, self.field_max, n)
    }
}

/// One allowed transition at a resonance field.
#[derive(Debug, Clone)]
pub struct Stick<T: Real> {
    pub field_mt: T,
    /// |d(ΔE)/dB| in MHz/mT.
    pub slope: T,
    /// Powder-averaged transverse moment ½(|⟨S_u⟩|² + |⟨S_v⟩|²).
    pub transition: T,
    /// Population-difference components, lower minus upper level.
    pub components: Vec<T>,
    /// Tracked labels (ascending energy at the first grid point).
    pub lower: usize,
    pub upper: usize,
    /// ⟨S·b̂⟩ of lower and upper level.
    pub lower_sb: T,
    pub upper_sb: T,
    /// ⟨I·n̂⟩ of lower and upper level (zero without a nucleus).
    pub lower_mi: T,
    pub upper_mi: T,
}

impl<T: Real> Stick<T> {
    pub fn weight(&self) -> T {
        self.transition / self.slope
    }

    pub fn amplitude(&self, coefficients: &[T]) -> T {
        let p = self
            .components
            .iter()
            .zip(coefficients)
            .fold(T::zero(), |a, (c, k)| a + *c * *k);
        self.weight() * p
    }
}

#[derive(Debug, Clone)]
pub struct StickSet<T: Real> {
    pub sticks: Vec<Stick<T>>,
    pub n_components: usize,
    pub warnings: Vec<String>,
}

struct GridPoint<T: Real> {
    eig: EigenSystem<T>,
    /// tracked label -> eigen index
    perm: Vec<usize>,
    /// Per eigen index: (dE/dB, ⟨S·b̂⟩, ⟨I·n̂⟩) and population components.
    levels: Vec<Option<([T; 3], Vec<T>)>>,
}

/// Locate all resonances with b̂ = `dir` (molecular frame).
pub fn find_resonances<T: Real>(
    sys: &ResonanceSystem<T>,
    dir: &Vector3<T>,
    pops: &dyn LevelPopulations<T>,
    settings: &ResonanceSettings<T>,
) -> Result<StickSet<T>> {
    settings.validate()?;
    let b = dir.normalize();
    if !b.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid(
            "field direction must be a finite non-zero vector",
        ));
    }
    let n = sys.dimension();
    let z = sys.zeeman_along(&b);
    let (u, v) = transverse_pair(&b);
    let s_u = sys.spin.along(&u);
    let s_v = sys.spin.along(&v);
    let s_b = sys.spin.along(&b);
    let i_n = sys.nuclear.as_ref().map(|i| {
        let ab = sys.hyperfine * b;
        let axis = if ab.norm() > T::lit(1e-12) {
            ab.normalize()
        } else {
            b
        };
        i.along(&axis)
    });
    let nc = pops.n_components();
    let fields = settings.grid();
    let mut warnings = Vec::new();

    let mut points: Vec<GridPoint<T>> = Vec::with_capacity(fields.len());
    let mut poor_tracking = 0usize;
    for &bf in &fields {
        let h = &sys.static_part + z.scale(bf);
        let eig = eigh(&h);
        let perm = match points.last() {
            None => (0..n).collect(),
            Some(prev) => {
                let (perm, worst) = track(prev, &eig);
                if worst < T::lit(0.5) {
                    poor_tracking += 1;
                }
                perm
            }
        };
        points.push(GridPoint {
            eig,
            perm,
            levels: vec![None; n],
        });
    }
    if poor_tracking > 0 {
        warnings.push(format!(
            "level tracking ambiguous at {poor_tracking} grid steps (overlap < 0.5); consider a finer resonance step"
        ));
    }

    let nu = settings.frequency_mhz;
    let mut sticks = Vec::new();
    let mut flat = 0usize;
    for k in 0..fields.len().saturating_sub(1) {
        let (p0, p1) = (&points[k], &points[k + 1]);
        let mut hits = Vec::new();
        for a in 0..n {
            for bb in (a + 1)..n {
                let d0 = p0.eig.values[p0.perm[bb]] - p0.eig.values[p0.perm[a]];
                let d1 = p1.eig.values[p1.perm[bb]] - p1.eig.values[p1.perm[a]];
                let f0 = d0.abs() - nu;
                let f1 = d1.abs() - nu;
                if (f0 <= T::zero()) != (f1 <= T::zero()) {
                    let t = f0 / (f0 - f1);
                    hits.push((a, bb, t, d0 + (d1 - d0) * t));
                }
            }
        }
        if hits.is_empty() {
            continue;
        }
        for idx in [k, k + 1] {
            let p = &mut points[idx];
            for &(a, bb, _, _) in &hits {
                for label in [a, bb] {
                    let e = p.perm[label];
                    if p.levels[e].is_none() {
                        let v = p.eig.vector(e);
                        let mi = i_n.as_ref().map_or(T::zero(), |op| expect(op, &v));
                        p.levels[e] = Some((
                            [expect(&z, &v), expect(&s_b, &v), mi],
                            pops.level_components(&p.eig, e),
                        ));
                    }
                }
            }
        }
        let (p0, p1) = (&points[k], &points[k + 1]);
        for (a, bb, t, delta) in hits {
            let at = |p: &GridPoint<T>| {
                let ia = p.perm[a];
                let ib = p.perm[bb];
                let va = p.eig.vectors.column(ia);
                let vb = p.eig.vectors.column(ib);
                let mu = T::lit(0.5)
                    * (va.dotc(&(&s_u * vb)).norm_sqr() + va.dotc(&(&s_v * vb)).norm_sqr());
                let (la, ca) = p.levels[ia].as_ref().expect("filled above");
                let (lb, cb) = p.levels[ib].as_ref().expect("filled above");
                let diff: Vec<T> = (0..nc).map(|c| ca[c] - cb[c]).collect();
                (mu, lb[0] - la[0], diff, la[1], lb[1], la[2], lb[2])
            };
            let x0 = at(p0);
            let x1 = at(p1);
            let lerp = |a: T, b: T| a + (b - a) * t;
            // Positive delta means tracked level `bb` is the upper one.
            let sign = if delta >= T::zero() {
                T::one()
            } else {
                -T::one()
            };
            let slope = (lerp(x0.1, x1.1) * sign).abs();
            if slope < settings.slope_floor {
                flat += 1;
                continue;
            }
            let comps: Vec<T> =
                x0.2.iter()
                    .zip(&x1.2)
                    .map(|(c0, c1)| lerp(*c0, *c1) * sign)
                    .collect();
            let (mut lower, mut upper) = (a, bb);
            let (mut lsb, mut usb) = (lerp(x0.3, x1.3), lerp(x0.4, x1.4));
            let (mut lmi, mut umi) = (lerp(x0.5, x1.5), lerp(x0.6, x1.6));
            if sign < T::zero() {
                std::mem::swap(&mut lower, &mut upper);
                std::mem::swap(&mut lsb, &mut usb);
                std::mem::swap(&mut lmi, &mut umi);
            }
            sticks.push(Stick {
                field_mt: lerp(fields[k], fields[k + 1]),
                slope,
                transition: lerp(x0.0, x1.0),
                components: comps,
                lower,
                upper,
                lower_sb: lsb,
                upper_sb: usb,
                lower_mi: lmi,
                upper_mi: umi,
            });
        }
    }
    if flat > 0 {
        warnings.push(format!(
            "discarded {flat} transitions with |slope| below {} MHz/mT",
            settings.slope_floor
        ));
    }
    sticks.sort_by(|x, y| {
        x.field_mt
            .partial_cmp(&y.field_mt)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(StickSet {
        sticks,
        n_components: nc,
        warnings,
    })
}

fn expect<T: Real>(op: &CMat<T>, v: &CVec<T>) -> T {
    v.dotc(&(op * v)).re
}

/// Two unit vectors spanning the plane perpendicular to `b`.
pub(crate) fn transverse_pair<T: Real>(b: &Vector3<T>) -> (Vector3<T>, Vector3<T>) {
    let seed = if b[0].abs() < T::lit(0.9) {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let u = (seed - b * b.dot(&seed)).normalize();
    (u, b.cross(&u))
}

/// Greedy maximum-overlap assignment of the previous tracked levels onto
/// the new eigenvectors. Returns the new permutation and the weakest
/// assigned overlap.
fn track<T: Real>(prev: &GridPoint<T>, cur: &EigenSystem<T>) -> (Vec<usize>, T) {
    let n = cur.len();
    // Fast path: ordering preserved, checked from diagonal overlaps only.
    let mut worst = T::one();
    let mut identity = true;
    for i in 0..n {
        let o = prev
            .eig
            .vectors
            .column(i)
            .dotc(&cur.vectors.column(i))
            .norm_sqr();
        if o <= T::lit(0.5) {
            identity = false;
            break;
        }
        worst = worst.min(o);
    }
    if identity {
        return (prev.perm.clone(), worst);
    }
    let ov = prev.eig.vectors.adjoint() * &cur.vectors;
    let mut inv_prev = vec![0; n];
    for (label, &e) in prev.perm.iter().enumerate() {
        inv_prev[e] = label;
    }
    let mut pairs: Vec<(T, usize, usize)> = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            pairs.push((ov[(i, j)].norm_sqr(), i, j));
        }
    }
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut used_prev = vec![false; n];
    let mut used_cur = vec![false; n];
    let mut perm = vec![0; n];
    let mut worst = T::one();
    let mut left = n;
    for (o, i, j) in pairs {
        if left == 0 {
            break;
        }
        if used_prev[i] || used_cur[j] {
            continue;
        }
        used_prev[i] = true;
        used_cur[j] = true;
        perm[inv_prev[i]] = j;
        // Degenerate levels mix freely; only flag isolated ones.
        if !degenerate(&cur.values, j) {
            worst = worst.min(o);
        }
        left -= 1;
    }
    (perm, worst)
}

fn degenerate<T: Real>(values: &[T], j: usize) -> bool {
    let tol = T::lit(1e-6) * values.iter().fold(T::one(), |a, v| a.max(v.abs()));
    (j > 0 && (values[j] - values[j - 1]).abs() < tol)
        || (j + 1 < values.len() && (values[j + 1] - values[j]).abs() < tol)
}
