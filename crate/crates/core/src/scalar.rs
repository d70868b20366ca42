//! Scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};

use nalgebra::{Matrix2, Matrix4, RealField, Vector2, Vector4};
use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point type the filter runs on: `f32` or `f64`.
pub trait Real:
    RealField
    + Copy
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + Default
    + Display
    + Debug
    + Send
    + Sync
    + 'static
{
    /// Converts a literal. Panics only for values the type cannot hold at all.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal not representable")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count not representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type Vec2<T> = Vector2<T>;
pub type Vec4<T> = Vector4<T>;
pub type Mat2<T> = Matrix2<T>;
pub type Mat4<T> = Matrix4<T>;
