//! Axis-aligned boxes in continuous pixel coordinates.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle `(x0, y0, w, h)` with `(x0, y0)` the top-left
/// corner. Width and height are strictly positive and finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
}

impl BoundingBox {
    pub fn new(x0: f64, y0: f64, w: f64, h: f64) -> Result<Self> {
        if !(x0.is_finite() && y0.is_finite()) {
            return Err(Error::Input(format!("non-finite box origin ({x0}, {y0})")));
        }
        if !(w.is_finite() && w > 0.0 && h.is_finite() && h > 0.0) {
            return Err(Error::Input(format!(
                "box extent must be positive, got {w}x{h}"
            )));
        }
        Ok(Self { x0, y0, w, h })
    }

    /// Builds a box from its center, aspect ratio `w / h` and height.
    pub fn from_center_aspect(cx: f64, cy: f64, aspect: f64, h: f64) -> Result<Self> {
        let w = aspect * h;
        Self::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn y0(&self) -> f64 {
        self.y0
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn x1(&self) -> f64 {
        self.x0 + self.w
    }

    pub fn y1(&self) -> f64 {
        self.y0 + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x0 + self.w / 2.0, self.y0 + self.h / 2.0)
    }

    pub fn aspect(&self) -> f64 {
        self.w / self.h
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            x0: self.x0 + dx,
            y0: self.y0 + dy,
            ..*self
        }
    }

    /// Area of the intersection with `other`; zero for disjoint or
    /// edge-touching boxes.
    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let iw = self.x1().min(other.x1()) - self.x0.max(other.x0);
        let ih = self.y1().min(other.y1()) - self.y0.max(other.y0);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    /// Largest absolute coordinate difference against `other`.
    pub fn max_coord_diff(&self, other: &BoundingBox) -> f64 {
        (self.x0 - other.x0)
            .abs()
            .max((self.y0 - other.y0).abs())
            .max((self.w - other.w).abs())
            .max((self.h - other.h).abs())
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x0, b.y0, b.w, b.h]
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.x0, self.y0, self.w, self.h)
    }
}

/// Intersection over union of two boxes, in `[0, 1]`.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}
