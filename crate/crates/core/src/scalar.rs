use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar the Pauli-basis algebra is generic over (`f32` or `f64`).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal; every literal used by this crate is representable.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal must be representable")
    }

    /// Tolerance used when a caller asks for "exact to 1e-12" and the type cannot resolve it.
    fn tol(requested: f64) -> Self {
        let requested = Self::lit(requested);
        let floor = Self::epsilon() * Self::lit(64.0);
        if requested > floor {
            requested
        } else {
            floor
        }
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
