use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

/// `k * k` position-sensitive score planes over one frame.
///
/// Planes are stored plane-major, row-major. A summed-area table per plane
/// is built at construction so pooling costs `O(k^2)` per region.
#[derive(Debug, Clone)]
pub struct ScoreMapGrid {
    frame: u32,
    k: usize,
    width: usize,
    height: usize,
    scale: f32,
    planes: Vec<f32>,
    integral: Vec<f64>,
}

impl PartialEq for ScoreMapGrid {
    fn eq(&self, other: &Self) -> bool {
        self.frame == other.frame
            && self.k == other.k
            && self.width == other.width
            && self.height == other.height
            && self.scale.to_bits() == other.scale.to_bits()
            && self.planes.len() == other.planes.len()
            && self
                .planes
                .iter()
                .zip(&other.planes)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Half-open range of cells `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct CellSpan {
    pub start: usize,
    pub end: usize,
}

impl CellSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    /// Start of bin `j` when the span is split into `k` contiguous ranges
    /// whose sizes differ by at most one. `edge(k) == end`.
    pub fn edge(&self, j: usize, k: usize) -> usize {
        self.start + j * self.len() / k
    }
}

/// Cells whose centers fall inside `[lo_px, hi_px)` after clipping to the
/// map. A region narrower than a cell that contains no center falls back
/// to the cell under its midpoint.
pub(crate) fn cell_span(lo_px: f64, hi_px: f64, scale: f64, extent: usize) -> Option<CellSpan> {
    let lo = (lo_px / scale).max(0.0);
    let hi = (hi_px / scale).min(extent as f64);
    if !(hi > lo) {
        return None;
    }
    let start = ((lo - 0.5).ceil().max(0.0) as usize).min(extent);
    let end = ((hi - 0.5).ceil().max(0.0) as usize).min(extent);
    if end > start {
        Some(CellSpan { start, end })
    } else {
        let c = (((lo + hi) / 2.0).floor() as usize).min(extent - 1);
        Some(CellSpan { start: c, end: c + 1 })
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl ScoreMapGrid {
    pub fn new(
        frame: u32,
        k: usize,
        width: usize,
        height: usize,
        scale: f32,
        planes: Vec<f32>,
    ) -> Result<Self> {
        if k == 0 || width == 0 || height == 0 {
            return Err(Error::Format(format!(
                "grid dimensions must be positive (k={k}, {width}x{height})"
            )));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Format(format!("scale must be positive, got {scale}")));
        }
        let expected = k * k * width * height;
        if planes.len() != expected {
            return Err(Error::Format(format!(
                "expected {expected} score values, got {}",
                planes.len()
            )));
        }
        let integral = build_integral(&planes, k * k, width, height);
        Ok(Self {
            frame,
            k,
            width,
            height,
            scale,
            planes,
            integral,
        })
    }

    /// Grid with every plane set to `value`.
    pub fn constant(frame: u32, k: usize, width: usize, height: usize, scale: f32, value: f32) -> Result<Self> {
        Self::new(frame, k, width, height, scale, vec![value; k * k * width * height])
    }

    pub fn frame(&self) -> u32 {
        self.frame
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn scale(&self) -> f32 {
        self.scale
    }

    pub fn values(&self) -> &[f32] {
        &self.planes
    }

    pub fn value(&self, plane: usize, x: usize, y: usize) -> f32 {
        self.planes[(plane * self.height + y) * self.width + x]
    }

    pub(crate) fn spans(&self, roi: &BoundingBox) -> Result<(CellSpan, CellSpan)> {
        let scale = self.scale as f64;
        let xs = cell_span(roi.x0(), roi.x1(), scale, self.width).ok_or(Error::OutOfBounds)?;
        let ys = cell_span(roi.y0(), roi.y1(), scale, self.height).ok_or(Error::OutOfBounds)?;
        Ok((xs, ys))
    }

    fn rect_sum(&self, plane: usize, x0: usize, x1: usize, y0: usize, y1: usize) -> f64 {
        let stride = self.width + 1;
        let base = plane * stride * (self.height + 1);
        let at = |x: usize, y: usize| self.integral[base + y * stride + x];
        at(x1, y1) - at(x0, y1) - at(x1, y0) + at(x0, y0)
    }

    /// Classification probability of `roi`: the sigmoid of the mean over
    /// covered cells, where bin `i` of the `k x k` split reads plane `i`.
    pub fn classify_roi(&self, roi: &BoundingBox) -> Result<f64> {
        let (xs, ys) = self.spans(roi)?;
        let k = self.k;
        let mut total = 0.0;
        for by in 0..k {
            let (y0, y1) = (ys.edge(by, k), ys.edge(by + 1, k));
            if y0 == y1 {
                continue;
            }
            for bx in 0..k {
                let (x0, x1) = (xs.edge(bx, k), xs.edge(bx + 1, k));
                if x0 == x1 {
                    continue;
                }
                total += self.rect_sum(by * k + bx, x0, x1, y0, y1);
            }
        }
        let cells = (xs.len() * ys.len()) as f64;
        Ok(sigmoid(total / cells))
    }

    /// Straight per-cell evaluation of [`classify_roi`](Self::classify_roi)
    /// without summed-area tables. Used as a reference in tests.
    pub fn classify_roi_naive(&self, roi: &BoundingBox) -> Result<f64> {
        let (xs, ys) = self.spans(roi)?;
        let k = self.k;
        let mut total = 0.0;
        for i in 0..k * k {
            let (bx, by) = (i % k, i / k);
            for y in ys.start..ys.end {
                if y < ys.edge(by, k) || y >= ys.edge(by + 1, k) {
                    continue;
                }
                for x in xs.start..xs.end {
                    if x < xs.edge(bx, k) || x >= xs.edge(bx + 1, k) {
                        continue;
                    }
                    total += self.value(i, x, y) as f64;
                }
            }
        }
        let cells = (xs.len() * ys.len()) as f64;
        Ok(sigmoid(total / cells))
    }

    /// Copy of this grid with `offset` added to every value.
    pub fn offset(&self, offset: f32) -> Self {
        let planes = self.planes.iter().map(|v| v + offset).collect();
        Self::new(self.frame, self.k, self.width, self.height, self.scale, planes)
            .expect("same shape")
    }
}

fn build_integral(planes: &[f32], count: usize, width: usize, height: usize) -> Vec<f64> {
    let stride = width + 1;
    let per_plane = stride * (height + 1);
    let mut out = vec![0.0f64; count * per_plane];
    for p in 0..count {
        let src = &planes[p * width * height..(p + 1) * width * height];
        let dst = &mut out[p * per_plane..(p + 1) * per_plane];
        for y in 0..height {
            let mut row = 0.0f64;
            for x in 0..width {
                row += src[y * width + x] as f64;
                dst[(y + 1) * stride + x + 1] = dst[y * stride + x + 1] + row;
            }
        }
    }
    out
}
