//! Bounded Nelder–Mead simplex minimizer with deterministic multi-start.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadSettings<T: Real> {
    pub max_evaluations: usize,
    /// Stop when the simplex objective spread falls below
    /// `f_tolerance · (|f_best| + f_floor)` and its diameter below `x_tolerance`.
    pub f_tolerance: T,
    pub f_floor: T,
    pub x_tolerance: T,
    /// Number of restarts from the best vertex after convergence.
    pub polish: usize,
}

impl<T: Real> Default for NelderMeadSettings<T> {
    fn default() -> Self {
        Self {
            max_evaluations: 20_000,
            f_tolerance: T::lit(1e-10),
            f_floor: T::lit(1e-12),
            x_tolerance: T::lit(1e-8),
            polish: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum<T: Real> {
    pub x: Vec<T>,
    pub f: T,
    pub evaluations: usize,
    pub converged: bool,
    /// (iteration, best objective, best point) once per iteration.
    pub trace: Vec<(usize, T, Vec<T>)>,
}

fn clamp_into<T: Real>(x: &mut [T], lower: &[T], upper: &[T]) {
    for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.max(*lo).min(*hi);
    }
}

/// Minimizes `f` inside the box [`lower`, `upper`]; trial points are clamped
/// onto the box.
pub fn nelder_mead<T: Real, F: FnMut(&[T]) -> T>(
    mut f: F,
    x0: &[T],
    step: &[T],
    lower: &[T],
    upper: &[T],
    settings: &NelderMeadSettings<T>,
) -> Minimum<T> {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[T], evals: &mut usize| -> T {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            T::max_value().unwrap()
        }
    };
    let mut start = x0.to_vec();
    clamp_into(&mut start, lower, upper);
    if n == 0 {
        let fx = eval(&start, &mut evals);
        return Minimum {
            x: start,
            f: fx,
            evaluations: evals,
            converged: true,
            trace: vec![],
        };
    }
    let mut trace = Vec::new();
    let mut converged = false;
    let mut best = (start.clone(), T::max_value().unwrap());
    let mut iteration = 0usize;
    for round in 0..=settings.polish {
        let mut simplex: Vec<Vec<T>> = vec![best.0.clone()];
        if round == 0 {
            simplex[0] = start.clone();
        }
        for i in 0..n {
            let mut v = simplex[0].clone();
            let h = if step[i] != T::zero() {
                step[i]
            } else {
                T::lit(0.05)
            };
            v[i] += h;
            if v[i] > upper[i] {
                v[i] = simplex[0][i] - h;
            }
            clamp_into(&mut v, lower, upper);
            simplex.push(v);
        }
        let mut fs: Vec<T> = simplex.iter().map(|v| eval(v, &mut evals)).collect();
        converged = false;
        while evals < settings.max_evaluations {
            iteration += 1;
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| {
                fs[a]
                    .partial_cmp(&fs[b])
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            fs = order.iter().map(|&i| fs[i]).collect();
            trace.push((iteration, fs[0], simplex[0].clone()));

            let spread = fs[n] - fs[0];
            let diameter = simplex[1..]
                .iter()
                .map(|v| {
                    v.iter()
                        .zip(&simplex[0])
                        .fold(T::zero(), |a, (x, y)| a.max((*x - *y).abs()))
                })
                .fold(T::zero(), |a, b| a.max(b));
            if spread <= settings.f_tolerance * (fs[0].abs() + settings.f_floor)
                && diameter <= settings.x_tolerance
            {
                converged = true;
                break;
            }

            let inv_n = T::one() / T::from_usize_lossy(n);
            let centroid: Vec<T> = (0..n)
                .map(|j| simplex[..n].iter().fold(T::zero(), |a, v| a + v[j]) * inv_n)
                .collect();
            let along = |c: T| -> Vec<T> {
                let mut p: Vec<T> = (0..n)
                    .map(|j| centroid[j] + (centroid[j] - simplex[n][j]) * c)
                    .collect();
                clamp_into(&mut p, lower, upper);
                p
            };
            let xr = along(T::one());
            let fr = eval(&xr, &mut evals);
            if fr < fs[0] {
                let xe = along(T::lit(2.0));
                let fe = eval(&xe, &mut evals);
                if fe < fr {
                    simplex[n] = xe;
                    fs[n] = fe;
                } else {
                    simplex[n] = xr;
                    fs[n] = fr;
                }
                continue;
            }
            if fr < fs[n - 1] {
                simplex[n] = xr;
                fs[n] = fr;
                continue;
            }
            let (xc, fc) = if fr < fs[n] {
                let x = along(T::lit(0.5));
                let v = eval(&x, &mut evals);
                (x, v)
            } else {
                let x = along(T::lit(-0.5));
                let v = eval(&x, &mut evals);
                (x, v)
            };
            if fc < fs[n].min(fr) {
                simplex[n] = xc;
                fs[n] = fc;
                continue;
            }
            for i in 1..=n {
                let mut v: Vec<T> = (0..n)
                    .map(|j| simplex[0][j] + (simplex[i][j] - simplex[0][j]) * T::lit(0.5))
                    .collect();
                clamp_into(&mut v, lower, upper);
                fs[i] = eval(&v, &mut evals);
                simplex[i] = v;
            }
        }
        let ib = (0..=n)
            .min_by(|&a, &b| {
                fs[a]
                    .partial_cmp(&fs[b])
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(0);
        let improved = fs[ib] < best.1;
        if improved || round == 0 {
            best = (simplex[ib].clone(), fs[ib]);
        }
        if !converged || (!improved && round > 0) {
            break;
        }
    }
    Minimum {
        x: best.0,
        f: best.1,
        evaluations: evals,
        converged,
        trace,
    }
}

#[derive(Debug, Clone)]
pub struct MultiStart<T: Real> {
    pub best: Minimum<T>,
    pub best_start: usize,
    pub runs: Vec<Minimum<T>>,
}

/// Runs Nelder–Mead from `x0` and from `starts − 1` points drawn uniformly in
/// the box with ChaCha8 seeded by `seed + k`. Results are merged in start
/// order, so the outcome does not depend on scheduling.
#[allow(clippy::too_many_arguments)]
pub fn multi_start<T: Real, F: Fn(&[T]) -> T + Sync>(
    f: F,
    x0: &[T],
    step: &[T],
    lower: &[T],
    upper: &[T],
    starts: usize,
    seed: u64,
    settings: &NelderMeadSettings<T>,
) -> MultiStart<T> {
    let points: Vec<Vec<T>> = (0..starts.max(1))
        .map(|k| {
            if k == 0 {
                return x0.to_vec();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
            lower
                .iter()
                .zip(upper)
                .map(|(lo, hi)| {
                    let u: f64 = rng.gen();
                    *lo + (*hi - *lo) * T::lit(u)
                })
                .collect()
        })
        .collect();
    let runs: Vec<Minimum<T>> = points
        .par_iter()
        .map(|p| nelder_mead(&f, p, step, lower, upper, settings))
        .collect();
    let mut best_start = 0;
    for (k, r) in runs.iter().enumerate() {
        if r.f < runs[best_start].f {
            best_start = k;
        }
    }
    MultiStart {
        best: runs[best_start].clone(),
        best_start,
        runs,
    }
}
