//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All operator algebra is written against [`Real`], which is implemented for
//! `f32` and `f64`. Matrix entries are `Complex<T>` for `T: Real`.

use std::fmt::{Debug, Display, LowerExp};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

pub use nalgebra::Complex;

/// Real floating-point type usable as the base field of complex operators.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + LowerExp + Send + Sync
{
    /// Numerical tolerances appropriate for this precision.
    fn default_tolerances() -> Tolerances;

    /// Lossy conversion from `f64`; panics only on non-representable input,
    /// which cannot happen for finite values.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f64 {
    fn default_tolerances() -> Tolerances {
        Tolerances::DOUBLE
    }
}

impl Real for f32 {
    fn default_tolerances() -> Tolerances {
        Tolerances::SINGLE
    }
}

/// Numerical tolerances used by validation and spectral cutoffs.
///
/// `spec` is relative to the operator norm of the input.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tolerances {
    pub herm: f64,
    pub trace: f64,
    pub psd: f64,
    pub spec: f64,
    /// Probabilities at or below this value are treated as zero.
    pub prob: f64,
    /// Relative eigenvalue cutoff for support detection.
    pub support: f64,
}

impl Tolerances {
    pub const DOUBLE: Tolerances = Tolerances {
        herm: 1e-9,
        trace: 1e-9,
        psd: 1e-10,
        spec: 1e-8,
        prob: 1e-12,
        support: 1e-10,
    };

    pub const SINGLE: Tolerances = Tolerances {
        herm: 1e-4,
        trace: 1e-4,
        psd: 1e-5,
        spec: 1e-3,
        prob: 1e-6,
        support: 1e-5,
    };
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances::DOUBLE
    }
}

/// Complex number built from a real part.
#[inline]
pub fn cplx<T: Real>(re: T) -> Complex<T> {
    Complex::new(re, T::zero())
}

/// `|z|` without requiring `num_traits::Float` on the base field.
#[inline]
pub fn modulus<T: Real>(z: Complex<T>) -> T {
    (z.re * z.re + z.im * z.im).sqrt()
}
