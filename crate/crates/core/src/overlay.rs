//! Static SVG renderings of tracker output, one file per frame.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::types::{FrameResult, TrackId};

/// Stable, well-spread color for a track id.
pub fn track_color(id: TrackId) -> String {
    // golden-ratio hue steps keep consecutive ids apart
    let hue = (id as f64 * 0.618_033_988_749_895).fract() * 360.0;
    format!("hsl({hue:.0},80%,45%)")
}

/// Smallest canvas containing every box, at least 1x1.
pub fn extent(results: &[FrameResult]) -> (u32, u32) {
    let (mut w, mut h) = (1.0f64, 1.0f64);
    for (_, b) in results.iter().flat_map(|r| &r.tracks) {
        w = w.max(b.x1());
        h = h.max(b.y1());
    }
    (w.ceil() as u32, h.ceil() as u32)
}

pub fn render_svg(result: &FrameResult, dims: (u32, u32)) -> String {
    let (w, h) = dims;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(out, r##"<rect width="{w}" height="{h}" fill="#202020"/>"##);
    let _ = writeln!(
        out,
        r##"<text x="4" y="14" fill="#ffffff" font-family="monospace" font-size="12">frame {}</text>"##,
        result.frame
    );
    for (id, b) in &result.tracks {
        let color = track_color(*id);
        let _ = writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            b.x0(),
            b.y0(),
            b.w(),
            b.h()
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" fill="{color}" font-family="monospace" font-size="12">{id}</text>"#,
            b.x0() + 2.0,
            b.y0() - 2.0
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Writes `frame_NNNNNN.svg` for each result into `dir`.
pub fn write_overlays(results: &[FrameResult], dims: (u32, u32), dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::with_capacity(results.len());
    for r in results {
        let path = dir.join(format!("frame_{:06}.svg", r.frame));
        std::fs::write(&path, render_svg(r, dims)).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
