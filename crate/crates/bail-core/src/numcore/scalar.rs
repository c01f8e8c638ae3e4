use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar the numeric core is generic over: `f32` or `f64`.
///
/// The rest of the crate pins [`crate::Real`] (`f64`); the generic core keeps
/// the math reusable at lower precision.
pub trait Scalar:
    Float + FromPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    fn two() -> Self {
        Self::one() + Self::one()
    }

    /// Convert a constant; panics only for values outside the type's range.
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
