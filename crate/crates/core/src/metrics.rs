//! CLEAR-MOT and identity metrics.
//!
//! Per frame, ground truth and hypotheses are matched at IoU >= threshold.
//! A ground-truth object keeps last frame's hypothesis when that pair still
//! overlaps enough; the rest is solved as a min-cost assignment on 1 - IoU.
//! Identity measures (IDF1, IDP, IDR) come from one global matching of
//! trajectories on the number of frames each pair overlaps.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::association::min_cost_match;
use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox};
use crate::types::{FrameResult, TrackId};

pub type GtId = u64;

/// Annotated objects per frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    frames: BTreeMap<u32, Vec<(GtId, BoundingBox)>>,
}

impl GroundTruth {
    /// Fails if an id repeats within a frame.
    pub fn new(frames: BTreeMap<u32, Vec<(GtId, BoundingBox)>>) -> Result<Self> {
        for (&frame, objects) in &frames {
            check_unique(frame, objects.iter().map(|o| o.0), "ground-truth")?;
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &BTreeMap<u32, Vec<(GtId, BoundingBox)>> {
        &self.frames
    }

    pub fn total_boxes(&self) -> usize {
        self.frames.values().map(Vec::len).sum()
    }

    /// Treats a tracker output as ground truth, e.g. to compare two runs.
    pub fn from_results(results: &[FrameResult]) -> Result<Self> {
        let mut frames = BTreeMap::new();
        for r in results {
            frames
                .entry(r.frame)
                .or_insert_with(Vec::new)
                .extend(r.tracks.iter().copied());
        }
        Self::new(frames)
    }
}

fn check_unique(frame: u32, ids: impl Iterator<Item = u64>, what: &str) -> Result<()> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::Input(format!("{what} id {id} appears twice in frame {frame}")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub iou_threshold: f64,
    /// Regions per frame where unmatched hypotheses are not counted.
    pub ignore_regions: BTreeMap<u32, Vec<BoundingBox>>,
    /// Fraction of a hypothesis' area that must fall inside one region for
    /// it to be ignored.
    pub ignore_coverage: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            ignore_regions: BTreeMap::new(),
            ignore_coverage: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mota: f64,
    /// False alarms per frame.
    pub faf: f64,
    pub mt: usize,
    pub ml: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub ids: usize,
    pub idf1: f64,
    pub idp: f64,
    pub idr: f64,
    pub num_frames: usize,
    pub num_gt: usize,
    pub num_hyp: usize,
    pub num_matches: usize,
    pub num_gt_tracks: usize,
    pub num_hyp_tracks: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
}

impl MetricsReport {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("metrics report is always representable")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>7} {:>7} {:>7} {:>7} {:>7} {:>5} {:>5} {:>7} {:>7} {:>6}",
            "MOTA", "IDF1", "IDP", "IDR", "FAF", "MT", "ML", "FP", "FN", "IDS"
        )?;
        write!(
            f,
            "{:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>5} {:>5} {:>7} {:>7} {:>6}",
            self.mota, self.idf1, self.idp, self.idr, self.faf, self.mt, self.ml, self.fp, self.fn_, self.ids
        )?;
        if let Some(fps) = self.fps {
            write!(f, "\nFPS {fps:.1}")?;
        }
        Ok(())
    }
}

fn box_key(b: &BoundingBox) -> [u64; 4] {
    // order-preserving for the finite values a box can hold
    [b.x0(), b.y0(), b.w(), b.h()].map(|v| {
        let bits = v.to_bits();
        if v.is_sign_negative() {
            !bits
        } else {
            bits | (1 << 63)
        }
    })
}

#[derive(Default)]
struct GtTally {
    present: usize,
    matched: usize,
}

/// Scores `hyp` against `gt`.
pub fn evaluate(gt: &GroundTruth, hyp: &[FrameResult], options: &EvalOptions) -> Result<MetricsReport> {
    let thr = options.iou_threshold;
    if !(thr > 0.0 && thr <= 1.0) {
        return Err(Error::Validation {
            key: "iou_threshold",
            reason: format!("{thr} is not in (0, 1]"),
        });
    }

    let mut hyp_frames: BTreeMap<u32, Vec<(TrackId, BoundingBox)>> = BTreeMap::new();
    for r in hyp {
        hyp_frames.entry(r.frame).or_default().extend(r.tracks.iter().copied());
    }
    for (&frame, tracks) in &hyp_frames {
        check_unique(frame, tracks.iter().map(|t| t.0), "hypothesis")?;
    }

    let frames: BTreeSet<u32> = gt.frames.keys().chain(hyp_frames.keys()).copied().collect();
    let empty = Vec::new();

    let (mut fp, mut fn_, mut ids, mut matches_total, mut num_hyp) = (0, 0, 0, 0, 0);
    let mut last_match: HashMap<GtId, TrackId> = HashMap::new();
    let mut tally: BTreeMap<GtId, GtTally> = BTreeMap::new();
    let mut hyp_len: BTreeMap<TrackId, usize> = BTreeMap::new();
    let mut overlap: BTreeMap<(GtId, TrackId), usize> = BTreeMap::new();

    for &frame in &frames {
        let mut g = gt.frames.get(&frame).unwrap_or(&empty).clone();
        let mut h = hyp_frames.get(&frame).unwrap_or(&empty).clone();
        // input order must not matter, and neither may hypothesis labels
        g.sort_by_key(|o| o.0);
        h.sort_by_key(|t| (box_key(&t.1), t.0));

        let ious: Vec<Vec<f64>> = g.iter().map(|(_, gb)| h.iter().map(|(_, hb)| iou(gb, hb)).collect()).collect();
        let mut g_match: Vec<Option<usize>> = vec![None; g.len()];
        let mut h_taken = vec![false; h.len()];

        for (gi, (gid, _)) in g.iter().enumerate() {
            let Some(&prev) = last_match.get(gid) else { continue };
            if let Some(hi) = h.iter().position(|t| t.0 == prev) {
                if !h_taken[hi] && ious[gi][hi] >= thr {
                    g_match[gi] = Some(hi);
                    h_taken[hi] = true;
                }
            }
        }

        let free_g: Vec<usize> = (0..g.len()).filter(|&i| g_match[i].is_none()).collect();
        let free_h: Vec<usize> = (0..h.len()).filter(|&j| !h_taken[j]).collect();
        let cost: Vec<Vec<f64>> = free_g
            .iter()
            .map(|&gi| {
                free_h
                    .iter()
                    .map(|&hi| if ious[gi][hi] >= thr { 1.0 - ious[gi][hi] } else { f64::INFINITY })
                    .collect()
            })
            .collect();
        for (r, c) in min_cost_match(&cost, f64::INFINITY).matches {
            g_match[free_g[r]] = Some(free_h[c]);
            h_taken[free_h[c]] = true;
        }

        for (gi, (gid, _)) in g.iter().enumerate() {
            let t = tally.entry(*gid).or_default();
            t.present += 1;
            match g_match[gi] {
                Some(hi) => {
                    t.matched += 1;
                    matches_total += 1;
                    let hid = h[hi].0;
                    if last_match.insert(*gid, hid).is_some_and(|p| p != hid) {
                        ids += 1;
                    }
                }
                None => fn_ += 1,
            }
        }

        let regions = options.ignore_regions.get(&frame);
        let ignored: Vec<bool> = h
            .iter()
            .enumerate()
            .map(|(hi, (_, hb))| {
                !h_taken[hi]
                    && regions.is_some_and(|rs| {
                        rs.iter().any(|r| hb.intersection_area(r) >= options.ignore_coverage * hb.area())
                    })
            })
            .collect();
        for (hi, (hid, _)) in h.iter().enumerate() {
            if ignored[hi] {
                continue;
            }
            num_hyp += 1;
            *hyp_len.entry(*hid).or_default() += 1;
            if !h_taken[hi] {
                fp += 1;
            }
        }

        for (gi, (gid, _)) in g.iter().enumerate() {
            for (hi, (hid, _)) in h.iter().enumerate() {
                if !ignored[hi] && ious[gi][hi] >= thr {
                    *overlap.entry((*gid, *hid)).or_default() += 1;
                }
            }
        }
    }

    let num_gt = gt.total_boxes();
    let gt_ids: Vec<GtId> = tally.keys().copied().collect();
    let hyp_ids: Vec<TrackId> = hyp_len.keys().copied().collect();
    let cost: Vec<Vec<f64>> = gt_ids
        .iter()
        .map(|g| {
            hyp_ids
                .iter()
                .map(|h| overlap.get(&(*g, *h)).map_or(f64::INFINITY, |&n| -(n as f64)))
                .collect()
        })
        .collect();
    let id_assignment = min_cost_match(&cost, 0.0);
    let idtp: usize = id_assignment.matches.iter().map(|&(r, c)| overlap[&(gt_ids[r], hyp_ids[c])]).sum();

    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let errors = fp + fn_ + ids;
    let mota = if num_gt == 0 {
        if errors == 0 { 1.0 } else { -(errors as f64) }
    } else {
        1.0 - errors as f64 / num_gt as f64
    };
    let coverage = |t: &GtTally| t.matched as f64 / t.present as f64;

    Ok(MetricsReport {
        mota,
        faf: ratio(fp, frames.len()),
        mt: tally.values().filter(|t| coverage(t) > 0.8).count(),
        ml: tally.values().filter(|t| coverage(t) < 0.2).count(),
        fp,
        fn_,
        ids,
        idf1: ratio(2 * idtp, num_gt + num_hyp),
        idp: ratio(idtp, num_hyp),
        idr: ratio(idtp, num_gt),
        num_frames: frames.len(),
        num_gt,
        num_hyp,
        num_matches: matches_total,
        num_gt_tracks: tally.len(),
        num_hyp_tracks: hyp_len.len(),
        fps: None,
    })
}
