//! MOTChallenge CSV files: `frame,id,left,top,width,height,conf,x,y,z`.
//!
//! An id of `-1` marks an anonymous detection. Extra trailing columns (class,
//! visibility in ground-truth files) are accepted and ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::metrics::GroundTruth;
use crate::types::{Detection, FrameResult, TrackId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotRecord {
    pub frame: u32,
    pub id: Option<u64>,
    pub bbox: BoundingBox,
    pub confidence: f64,
}

/// Records grouped by frame; within a frame ordered by id, anonymous first,
/// then by file order.
pub type MotFrames = BTreeMap<u32, Vec<MotRecord>>;

pub fn parse_mot(path: impl AsRef<Path>) -> Result<MotFrames> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mot_str(&text, &path.display().to_string())
}

/// Parses CSV text; `source` names the input in error messages.
pub fn parse_mot_str(text: &str, source: &str) -> Result<MotFrames> {
    let mut frames = MotFrames::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: String| Error::Parse {
            path: source.to_string(),
            line: idx + 1,
            reason,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 6 {
            return Err(err(format!("expected at least 6 fields, found {}", fields.len())));
        }
        let num = |i: usize, name: &str| -> Result<f64> {
            let v: f64 = fields[i].parse().map_err(|_| err(format!("{name} `{}` is not a number", fields[i])))?;
            if !v.is_finite() {
                return Err(err(format!("{name} is not finite")));
            }
            Ok(v)
        };
        let frame = num(0, "frame")?;
        if frame.fract() != 0.0 || !(0.0..=u32::MAX as f64).contains(&frame) {
            return Err(err(format!("frame `{}` is not a non-negative integer", fields[0])));
        }
        let id = num(1, "id")?;
        let id = if id == -1.0 {
            None
        } else if id.fract() == 0.0 && id >= 0.0 && id < 2f64.powi(53) {
            Some(id as u64)
        } else {
            return Err(err(format!("id `{}` is neither -1 nor a non-negative integer", fields[1])));
        };
        let (x, y, w, h) = (num(2, "bb_left")?, num(3, "bb_top")?, num(4, "bb_width")?, num(5, "bb_height")?);
        let confidence = if fields.len() > 6 { num(6, "conf")? } else { 1.0 };
        if w <= 0.0 || h <= 0.0 {
            log::warn!("{source}:{}: dropping box with non-positive size {w}x{h}", idx + 1);
            continue;
        }
        let bbox = BoundingBox::new(x, y, w, h).map_err(|e| err(e.to_string()))?;
        let frame = frame as u32;
        frames.entry(frame).or_default().push(MotRecord { frame, id, bbox, confidence });
    }
    for records in frames.values_mut() {
        records.sort_by_key(|r| r.id.map_or(0, |id| id as u128 + 1));
    }
    Ok(frames)
}

pub fn detections(frames: &MotFrames) -> BTreeMap<u32, Vec<Detection>> {
    frames
        .iter()
        .map(|(&f, rs)| {
            let dets = rs
                .iter()
                .map(|r| Detection {
                    frame: f,
                    bbox: r.bbox,
                    confidence: r.confidence,
                })
                .collect();
            (f, dets)
        })
        .collect()
}

/// Fails on anonymous records or ids repeated within a frame.
pub fn ground_truth(frames: &MotFrames) -> Result<GroundTruth> {
    GroundTruth::new(labelled(frames)?.into_iter().collect())
}

pub fn frame_results(frames: &MotFrames) -> Result<Vec<FrameResult>> {
    Ok(labelled(frames)?
        .into_iter()
        .map(|(frame, tracks)| FrameResult { frame, tracks })
        .collect())
}

fn labelled(frames: &MotFrames) -> Result<Vec<(u32, Vec<(TrackId, BoundingBox)>)>> {
    frames
        .iter()
        .map(|(&f, rs)| {
            let objs = rs
                .iter()
                .map(|r| {
                    r.id.map(|id| (id, r.bbox))
                        .ok_or_else(|| Error::Input(format!("frame {f}: record without identity (id -1)")))
                })
                .collect::<Result<_>>()?;
            Ok((f, objs))
        })
        .collect()
}

fn push_line(out: &mut String, frame: u32, id: Option<u64>, b: &BoundingBox, conf: &str) {
    let id = id.map_or_else(|| "-1".to_string(), |v| v.to_string());
    let _ = writeln!(
        out,
        "{frame},{id},{:.2},{:.2},{:.2},{:.2},{conf},-1,-1,-1",
        b.x0(),
        b.y0(),
        b.w(),
        b.h()
    );
}

/// Tracker output as CSV text, ascending frame then id, confidence 1.
pub fn format_results(results: &[FrameResult]) -> String {
    let mut rows: Vec<(u32, TrackId, BoundingBox)> = results
        .iter()
        .flat_map(|r| r.tracks.iter().map(move |&(id, b)| (r.frame, id, b)))
        .collect();
    rows.sort_by_key(|r| (r.0, r.1));
    let mut out = String::new();
    for (frame, id, b) in rows {
        push_line(&mut out, frame, Some(id), &b, "1");
    }
    out
}

pub fn write_mot(results: &[FrameResult], path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &format_results(results))
}

/// Anonymous detections, frame order then input order.
pub fn format_detections(dets: &BTreeMap<u32, Vec<Detection>>) -> String {
    let mut out = String::new();
    for (&frame, ds) in dets {
        for d in ds {
            push_line(&mut out, frame, None, &d.bbox, &format!("{:.4}", d.confidence));
        }
    }
    out
}

pub fn write_detections(dets: &BTreeMap<u32, Vec<Detection>>, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &format_detections(dets))
}

pub fn write_ground_truth(gt: &GroundTruth, path: impl AsRef<Path>) -> Result<()> {
    let results: Vec<FrameResult> = gt
        .frames()
        .iter()
        .map(|(&frame, objs)| FrameResult {
            frame,
            tracks: objs.clone(),
        })
        .collect();
    write_mot(&results, path)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
