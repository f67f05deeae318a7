use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::grid::{cell_span, ScoreMapGrid};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::rng;

/// Parameters for generating stand-in score maps from known object boxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub k: usize,
    /// Frame pixels per map cell.
    pub scale: f32,
    pub noise_sigma: f64,
    /// Response of plane `i` on the `i`-th sub-region of an object.
    pub foreground: f32,
    /// Response everywhere else.
    pub background: f32,
    /// Each plane's positive region extends this many bins past its own
    /// sub-region, so slightly misaligned boxes still score well.
    pub spread: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            k: 7,
            scale: 8.0,
            noise_sigma: 0.0,
            foreground: 3.0,
            background: -2.0,
            spread: 1.0,
            seed: 0,
        }
    }
}

/// Builds score maps for `frame` where plane `i` responds positively on the
/// `i`-th spatial bin of every object in `objects` and negatively elsewhere,
/// plus Gaussian noise. Output is a pure function of the inputs.
pub fn synth_score_maps(
    frame: u32,
    objects: &[BoundingBox],
    frame_dims: (u32, u32),
    params: &SynthParams,
) -> Result<ScoreMapGrid> {
    let (fw, fh) = frame_dims;
    if fw == 0 || fh == 0 {
        return Err(Error::Input(format!("frame dims must be positive, got {fw}x{fh}")));
    }
    if params.k == 0 {
        return Err(Error::Input("k must be at least 1".into()));
    }
    if !(params.spread.is_finite() && params.spread >= 0.0) {
        return Err(Error::Input(format!("spread must be non-negative, got {}", params.spread)));
    }
    if !(params.scale.is_finite() && params.scale > 0.0) {
        return Err(Error::Input(format!("scale must be positive, got {}", params.scale)));
    }
    let k = params.k;
    let scale = params.scale as f64;
    let width = (fw as f64 / scale).ceil() as usize;
    let height = (fh as f64 / scale).ceil() as usize;
    let plane_len = width * height;
    let mut planes = vec![params.background; k * k * plane_len];

    for obj in objects {
        let (Some(xs), Some(ys)) = (
            cell_span(obj.x0(), obj.x1(), scale, width),
            cell_span(obj.y0(), obj.y1(), scale, height),
        ) else {
            continue;
        };
        let grow = |len: usize| (params.spread * len as f64 / k as f64).ceil() as usize;
        let (gx, gy) = (grow(xs.len()), grow(ys.len()));
        for by in 0..k {
            let y_lo = ys.edge(by, k).saturating_sub(gy);
            let y_hi = (ys.edge(by + 1, k) + gy).min(height);
            for bx in 0..k {
                let plane = by * k + bx;
                let x_lo = xs.edge(bx, k).saturating_sub(gx);
                let x_hi = (xs.edge(bx + 1, k) + gx).min(width);
                for y in y_lo..y_hi {
                    let row = plane * plane_len + y * width;
                    planes[row + x_lo..row + x_hi].fill(params.foreground);
                }
            }
        }
    }

    if params.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, params.noise_sigma)
            .map_err(|e| Error::Input(format!("noise sigma: {e}")))?;
        let mut rng = rng::seeded(&[params.seed, frame as u64, 0x5C0E]);
        for v in planes.iter_mut() {
            *v += normal.sample(&mut rng) as f32;
        }
    }

    ScoreMapGrid::new(frame, k, width, height, params.scale, planes)
}
