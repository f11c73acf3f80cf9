//! Scalar abstraction shared by every solver.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::sync::Arc;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use rustfft::FftPlanner;

/// In-place complex transform of a fixed length.
#[derive(Clone)]
pub struct FftPlan<T> {
    len: usize,
    run: Arc<dyn Fn(&mut [Complex<T>]) + Send + Sync>,
}

impl<T> FftPlan<T> {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Transforms `buf` in place; `buf.len()` must be a multiple of the plan length.
    pub fn process(&self, buf: &mut [Complex<T>]) {
        (self.run)(buf)
    }
}

pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Default
    + Debug
    + Display
    + LowerExp
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Unnormalized forward (`inverse = false`) or backward transform.
    fn fft_plan(len: usize, inverse: bool) -> FftPlan<Self>;

    fn lit(x: f64) -> Self {
        Self::from_f64(x).unwrap()
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).unwrap()
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap()
    }
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            fn fft_plan(len: usize, inverse: bool) -> FftPlan<Self> {
                let mut planner = FftPlanner::<$t>::new();
                let fft = if inverse { planner.plan_fft_inverse(len) } else { planner.plan_fft_forward(len) };
                FftPlan { len, run: Arc::new(move |buf: &mut [Complex<$t>]| fft.process(buf)) }
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

pub type C<T> = Complex<T>;

#[inline]
pub fn re<T: Real>(x: T) -> Complex<T> {
    Complex::new(x, T::zero())
}

#[inline]
pub fn cz<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

/// Principal square root with the cut on the negative real axis.
#[inline]
pub fn principal_sqrt<T: Real>(z: Complex<T>) -> Complex<T> {
    let r = z.norm();
    if r == T::zero() {
        return cz();
    }
    let half = T::lit(0.5);
    let a = ((r + z.re) * half).sqrt();
    let b = ((r - z.re) * half).sqrt();
    Complex::new(a, if z.im < T::zero() { -b } else { b })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_branch() {
        let s = principal_sqrt(Complex::new(0.0f64, 2.0));
        assert!((s - Complex::new(1.0, 1.0)).norm() < 1e-15);
        let s = principal_sqrt(Complex::new(-4.0f64, -1e-300));
        assert!(s.re >= 0.0 && s.im < 0.0);
        let s = principal_sqrt(Complex::new(9.0f32, 0.0));
        assert!((s.re - 3.0).abs() < 1e-6);
    }

    #[test]
    fn fft_roundtrip_f32() {
        let fwd = f32::fft_plan(8, false);
        let inv = f32::fft_plan(8, true);
        let mut buf: Vec<Complex<f32>> = (0..8).map(|k| Complex::new(k as f32, 0.0)).collect();
        let orig = buf.clone();
        fwd.process(&mut buf);
        inv.process(&mut buf);
        for (a, b) in buf.iter().zip(&orig) {
            assert!((a / 8.0 - b).norm() < 1e-5);
        }
    }
}
