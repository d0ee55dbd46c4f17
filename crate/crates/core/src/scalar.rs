//! Scalar abstraction shared by every numerical module.
//!
//! All physics and fitting code is written against [`Real`], which is
//! satisfied by `f32` and `f64`. Tolerance-sensitive checks in the test
//! suites run in `f64`.

use std::fmt::{Debug, Display, LowerExp};

use nalgebra::{Complex, RealField};
use num_traits::{FromPrimitive, ToPrimitive};

pub trait Real:
    RealField
    + Copy
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Panics only for values the target type
    /// cannot represent at all, which never happens for finite inputs.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize fits in a float")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn cplx(re: Self, im: Self) -> Complex<Self> {
        Complex::new(re, im)
    }

    #[inline]
    fn c_real(re: Self) -> Complex<Self> {
        Complex::new(re, Self::zero())
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Linear grid of `n` points from `start` to `stop` inclusive.
pub fn linspace<T: Real>(start: T, stop: T, n: usize) -> Vec<T> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / T::from_usize_lossy(n - 1);
            (0..n)
                .map(|i| {
                    if i == n - 1 {
                        stop
                    } else {
                        start + step * T::from_usize_lossy(i)
                    }
                })
                .collect()
        }
    }
}
