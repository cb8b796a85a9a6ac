use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar used by the kernel and measure primitives: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    /// Tolerance used for "equal within 1e-12" invariants, widened to a few
    /// ulps for low-precision scalars.
    #[inline]
    fn invariant_tol() -> Self {
        let eps = Self::epsilon() * Self::lit(16.0);
        let tight = Self::lit(1e-12);
        if eps > tight {
            eps
        } else {
            tight
        }
    }
}

impl Real for f32 {}
impl Real for f64 {}
