use std::fmt::Debug;
use std::ops::AddAssign;

use num_traits::Float;

/// Numeric precision a computation graph runs in. A graph never mixes modes:
/// standard (32-bit) is used for training, verification (64-bit) for
/// gradient checking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    Standard,
    Verification,
}

impl Precision {
    pub fn bits(self) -> u32 {
        match self {
            Precision::Standard => 32,
            Precision::Verification => 64,
        }
    }
}

/// Scalar element of a tensor. Implemented for `f32` (standard precision)
/// and `f64` (verification precision).
pub trait Element: Float + AddAssign + Debug + Send + Sync + 'static {
    const PRECISION: Precision;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    fn from_f32(v: f32) -> Self {
        Self::from_f64(v as f64)
    }
}

impl Element for f32 {
    const PRECISION: Precision = Precision::Standard;

    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn to_f64(self) -> f64 {
        self as f64
    }

    fn from_f32(v: f32) -> Self {
        v
    }
}

impl Element for f64 {
    const PRECISION: Precision = Precision::Verification;

    fn from_f64(v: f64) -> Self {
        v
    }

    fn to_f64(self) -> f64 {
        self
    }
}
