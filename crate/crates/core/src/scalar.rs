use std::fmt::Debug;

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating point scalar the geometry and rendering math is written against: f32 or f64.
pub trait Scalar: Float + FloatConst + FromPrimitive + Debug + Default + Send + Sync + 'static {
    /// Converts an `f64` literal into the scalar type.
    #[inline]
    fn lit(v: f64) -> Self {
        // from_f64 only fails for non-float implementors
        Self::from_f64(v).expect("float scalar conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
