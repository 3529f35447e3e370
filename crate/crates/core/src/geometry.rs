//! Bounding-box algebra: the overlap predicate and isolation detection.
//!
//! Two boxes count as overlapped only when all four strict inequalities hold
//! (`a.x1 < b.x2`, `a.x2 > b.x1`, `a.y1 < b.y2`, `a.y2 > b.y1`); boxes that
//! merely share an edge or a corner are NOT overlapped. An instance is
//! *isolated* when its box overlaps no other annotated box in the same
//! image, and only isolated foregrounds can become slots.

use serde::{Deserialize, Serialize};

use crate::coco::Instance;
use crate::num::Coordinate;
use crate::{Error, Result};

/// Axis-aligned rectangle with top-left `(x1, y1)` and bottom-right
/// `(x2, y2)` corners, generic over the coordinate scalar.
///
/// Valid boxes satisfy `x1 < x2` and `y1 < y2`; construction sites that take
/// untrusted input go through [`BBox::is_valid`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox<T> {
    pub x1: T,
    pub y1: T,
    pub x2: T,
    pub y2: T,
}

impl<T: Coordinate> BBox<T> {
    pub fn new(x1: T, y1: T, x2: T, y2: T) -> Self {
        BBox { x1, y1, x2, y2 }
    }

    /// Builds a corner box from COCO `[x, y, width, height]` form.
    pub fn from_xywh(x: T, y: T, w: T, h: T) -> Self {
        BBox {
            x1: x,
            y1: y,
            x2: x + w,
            y2: y + h,
        }
    }

    /// Converts back to COCO `[x, y, width, height]` form.
    pub fn to_xywh(&self) -> [T; 4] {
        [self.x1, self.y1, self.width(), self.height()]
    }

    pub fn is_valid(&self) -> bool {
        self.x1 < self.x2 && self.y1 < self.y2
    }

    pub fn width(&self) -> T {
        self.x2 - self.x1
    }

    pub fn height(&self) -> T {
        self.y2 - self.y1
    }

    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    /// Width divided by height.
    pub fn aspect_ratio(&self) -> T {
        self.width() / self.height()
    }

    /// True when `other` lies entirely inside `self` (boundary contact allowed).
    pub fn contains(&self, other: &BBox<T>) -> bool {
        self.x1 <= other.x1 && self.y1 <= other.y1 && other.x2 <= self.x2 && other.y2 <= self.y2
    }

    /// The overlap predicate: all four strict inequalities must hold, so a
    /// zero-area intersection (shared edge or corner) is not overlap.
    pub fn overlaps(&self, other: &BBox<T>) -> bool {
        self.x1 < other.x2 && self.x2 > other.x1 && self.y1 < other.y2 && self.y2 > other.y1
    }
}

/// Free-function form of [`BBox::overlaps`].
pub fn overlaps<T: Coordinate>(a: &BBox<T>, b: &BBox<T>) -> bool {
    a.overlaps(b)
}

/// Returns the non-crowd instances whose box overlaps no other instance's
/// box in the image, preserving input order.
///
/// Crowd instances can never be isolated themselves but still block the
/// isolation of their neighbours: substituting a foreground next to an
/// unlabeled crowd region would corrupt pixels the annotations do not cover.
///
/// All instances must belong to one image; mixing image ids is an error.
pub fn find_isolated(instances: &[Instance]) -> Result<Vec<&Instance>> {
    if let Some(first) = instances.first() {
        if let Some(bad) = instances.iter().find(|i| i.image_id != first.image_id) {
            return Err(Error::InvalidArgument(format!(
                "find_isolated requires instances of a single image, got image ids {} and {}",
                first.image_id, bad.image_id
            )));
        }
    }

    Ok(instances
        .iter()
        .enumerate()
        .filter(|(idx, inst)| {
            !inst.is_crowd
                && instances
                    .iter()
                    .enumerate()
                    .all(|(jdx, other)| jdx == *idx || !inst.bbox.overlaps(&other.bbox))
        })
        .map(|(_, inst)| inst)
        .collect())
}
