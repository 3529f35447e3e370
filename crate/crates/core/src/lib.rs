//! Slot-based augmentation toolkit for object-detection datasets.
//!
//! The toolkit treats every isolated foreground object of an annotated image
//! as a "slot": a rectangular region that can be re-filled with another
//! isolated foreground of compatible shape, scale and category. On top of
//! that core idea it provides:
//!
//! * COCO-style annotation parsing and writing ([`coco`]),
//! * the overlap / isolation geometry that defines slots ([`geometry`]),
//! * a queryable database of slots with derived scale attributes ([`slots`]),
//! * the three-filter candidate matcher and deterministic plan builder
//!   ([`matcher`]),
//! * pixel-level plan execution and the horizontal-flip baseline
//!   ([`compositor`]),
//! * a greedy balanced mini-dataset builder ([`mini`]),
//! * dataset and augmentation-run statistics ([`stats`]).
//!
//! Geometry is generic over the coordinate scalar via `num-traits`; the
//! pipeline itself works in `f64` pixel coordinates, exposed through the
//! [`Coord`] and [`BBox`] aliases below.

pub mod coco;
pub mod compositor;
pub mod error;
pub mod geometry;
pub mod matcher;
pub mod mini;
pub mod num;
pub mod slots;
pub mod stats;

/// Canonical pixel scalar used throughout the pipeline.
///
/// COCO annotations carry fractional pixel coordinates, so the pipeline keeps
/// every bounding box in `f64` and only snaps to integer pixels at
/// compositing time.
pub type Coord = f64;

/// Bounding box in canonical pipeline coordinates.
pub type BBox = geometry::BBox<Coord>;

/// Single-precision bounding box, for callers that trade precision for size.
pub type BBox32 = geometry::BBox<f32>;

/// Decoded raster image (8-bit RGB).
pub type RasterImage = image::RgbImage;

pub use error::Error;

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;
