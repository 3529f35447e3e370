//! Scalar abstraction for bounding-box coordinates.

use num_traits::Num;

/// Any scalar usable as a bounding-box coordinate: integers for grid-aligned
/// boxes, `f32`/`f64` for fractional annotation coordinates.
pub trait Coordinate: Num + PartialOrd + Copy {}

impl<T: Num + PartialOrd + Copy> Coordinate for T {}
