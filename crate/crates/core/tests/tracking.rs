use std::collections::{BTreeMap, BTreeSet};

use mottrack_core::appearance::OracleEmbeddings;
use mottrack_core::association::{run_sequence, TrackState, Tracker};
use mottrack_core::classifier::{SynthParams, SyntheticScoreMaps};
use mottrack_core::metrics::{evaluate, EvalOptions};
use mottrack_core::scenario::{gen_scenario, ObjectPath, ScenarioSpec, Waypoint};
use mottrack_core::{BoundingBox, CandidateSource, Detection, Error, TrackerConfig};
use proptest::prelude::*;

const DIMS: (u32, u32) = (320, 240);

fn bb(x: f64, y: f64) -> BoundingBox {
    BoundingBox::new(x, y, 32.0, 80.0).unwrap()
}

fn det(frame: u32, b: BoundingBox) -> Detection {
    Detection {
        frame,
        bbox: b,
        confidence: 0.9,
    }
}

fn config() -> TrackerConfig {
    TrackerConfig {
        k: 3,
        embedding_dim: 16,
        ..TrackerConfig::default()
    }
}

/// Providers that know where the objects really are.
fn providers(truth: &BTreeMap<u32, Vec<(u64, BoundingBox)>>) -> (SyntheticScoreMaps, OracleEmbeddings) {
    let boxes = truth.iter().map(|(&f, v)| (f, v.iter().map(|o| o.1).collect())).collect();
    let ids = truth.iter().map(|(&f, v)| (f, v.iter().map(|&(id, b)| (b, id)).collect())).collect();
    (
        SyntheticScoreMaps::new(boxes, DIMS, SynthParams { k: 3, ..SynthParams::default() }),
        OracleEmbeddings::new(ids, 16, 0.0, 1).unwrap(),
    )
}

#[test]
fn first_detection_is_tentative() {
    let truth = BTreeMap::from([(1, vec![(1, bb(50.0, 50.0))])]);
    let (maps, emb) = providers(&truth);
    let mut t = Tracker::new(config()).unwrap();
    let r = t.step(1, &[det(1, bb(50.0, 50.0))], &maps, &emb).unwrap();
    assert!(r.tracks.is_empty());
    assert_eq!(t.tracks().len(), 1);
    assert_eq!(t.tracks()[0].state, TrackState::Tentative);
}

#[test]
fn second_detection_confirms() {
    let truth = BTreeMap::from([(1, vec![(1, bb(50.0, 50.0))]), (2, vec![(1, bb(50.0, 50.0))])]);
    let (maps, emb) = providers(&truth);
    let mut t = Tracker::new(config()).unwrap();
    t.step(1, &[det(1, bb(50.0, 50.0))], &maps, &emb).unwrap();
    let r = t.step(2, &[det(2, bb(50.0, 50.0))], &maps, &emb).unwrap();
    assert_eq!(r.tracks, vec![(1, bb(50.0, 50.0))]);
    assert_eq!(t.track(1).unwrap().state, TrackState::Confirmed);
    assert_eq!(t.track(1).unwrap().counters.l_det, 2);
}

#[test]
fn prediction_bridges_missing_detection() {
    let truth: BTreeMap<u32, Vec<(u64, BoundingBox)>> = (1..=4).map(|f| (f, vec![(1, bb(50.0, 50.0))])).collect();
    let (maps, emb) = providers(&truth);
    let mut t = Tracker::new(config()).unwrap();
    for f in 1..=3 {
        t.step(f, &[det(f, bb(50.0, 50.0))], &maps, &emb).unwrap();
    }
    let gallery_before = t.track(1).unwrap().gallery.len();
    let r = t.step(4, &[], &maps, &emb).unwrap();
    assert_eq!(r.tracks.len(), 1);
    assert_eq!(r.tracks[0].0, 1);
    let track = t.track(1).unwrap();
    assert_eq!(track.counters.l_trk, 1);
    assert_eq!(track.gallery.len(), gallery_before);
    assert_eq!(track.state, TrackState::Confirmed);
    assert_eq!(t.last_stats().iou_matches, 1);
    assert_eq!(t.last_stats().matches, vec![(1, CandidateSource::FromTrack(1))]);
}

#[test]
fn lost_track_is_retrieved_by_appearance() {
    // the object vanishes for 5 frames and reappears 60 px away
    let mut truth = BTreeMap::new();
    for f in 1..=3 {
        truth.insert(f, vec![(1, bb(50.0, 50.0))]);
    }
    for f in 9..=10 {
        truth.insert(f, vec![(1, bb(110.0, 50.0))]);
    }
    let (maps, emb) = providers(&truth);
    let mut t = Tracker::new(TrackerConfig {
        use_track_candidates: false,
        ..config()
    })
    .unwrap();
    for f in 1..=10 {
        let dets: Vec<Detection> = truth.get(&f).map_or(vec![], |v| v.iter().map(|o| det(f, o.1)).collect());
        let r = t.step(f, &dets, &maps, &emb).unwrap();
        if f == 5 {
            assert_eq!(t.track(1).unwrap().state, TrackState::Lost);
        }
        if f == 9 {
            assert_eq!(r.tracks, vec![(1, bb(110.0, 50.0))]);
            assert_eq!(t.last_stats().appearance_matches, 1);
            let track = t.track(1).unwrap();
            assert_eq!((track.frames_lost, track.counters.l_det), (0, 1));
        }
    }
    assert_eq!(t.tracks().len(), 1);
}

#[test]
fn lost_tracks_expire() {
    let truth = BTreeMap::from([(1, vec![(1, bb(50.0, 50.0))]), (2, vec![(1, bb(50.0, 50.0))])]);
    let (maps, emb) = providers(&truth);
    let cfg = TrackerConfig {
        max_lost_frames: 3,
        use_track_candidates: false,
        ..config()
    };
    let mut t = Tracker::new(cfg).unwrap();
    t.step(1, &[det(1, bb(50.0, 50.0))], &maps, &emb).unwrap();
    t.step(2, &[det(2, bb(50.0, 50.0))], &maps, &emb).unwrap();
    for f in 3..=5 {
        t.step(f, &[], &maps, &emb).unwrap();
        assert_eq!(t.track(1).unwrap().frames_lost, f - 2);
    }
    t.step(6, &[], &maps, &emb).unwrap();
    assert!(t.tracks().is_empty());
}

#[test]
fn frame_order_and_map_shape_are_checked() {
    let truth = BTreeMap::from([(1, vec![(1, bb(50.0, 50.0))])]);
    let (maps, emb) = providers(&truth);
    let mut t = Tracker::new(config()).unwrap();
    t.step(5, &[], &maps, &emb).unwrap();
    assert!(matches!(t.step(5, &[], &maps, &emb), Err(Error::Sequence { previous: 5, got: 5 })));

    let mut wrong_k = Tracker::new(TrackerConfig { k: 7, ..config() }).unwrap();
    let e = wrong_k.step(1, &[], &maps, &emb).unwrap_err();
    assert!(matches!(e, Error::Frame { frame: 1, .. }), "{e}");
}

#[test]
fn empty_input_gives_empty_results() {
    let (maps, emb) = providers(&BTreeMap::new());
    let out = run_sequence(&BTreeMap::new(), 1..=10, &maps, &emb, &config()).unwrap();
    assert_eq!(out.len(), 10);
    assert!(out.iter().all(|r| r.tracks.is_empty()));
}

#[test]
fn single_object_keeps_one_id() {
    let truth: BTreeMap<u32, Vec<(u64, BoundingBox)>> =
        (1..=60).map(|f| (f, vec![(1, bb(20.0 + 2.0 * f as f64, 60.0))])).collect();
    let (maps, emb) = providers(&truth);
    let dets = truth.iter().map(|(&f, v)| (f, v.iter().map(|o| det(f, o.1)).collect())).collect();
    let out = run_sequence(&dets, 1..=60, &maps, &emb, &config()).unwrap();
    let ids: BTreeSet<u64> = out.iter().flat_map(|r| r.tracks.iter().map(|t| t.0)).collect();
    assert_eq!(ids.len(), 1);
    let gt = mottrack_core::metrics::GroundTruth::new(truth).unwrap();
    let r = evaluate(&gt, &out, &EvalOptions::default()).unwrap();
    assert_eq!((r.ids, r.mota), (0, 1.0));
}

#[test]
fn crossing_with_dropout_keeps_both_identities() {
    let path = |x0: f64, x1: f64, y: f64| ObjectPath {
        width: 32.0,
        height: 80.0,
        waypoints: vec![Waypoint { frame: 1, x: x0, y }, Waypoint { frame: 60, x: x1, y }],
    };
    let spec = ScenarioSpec {
        frame_count: 60,
        frame_width: 320,
        frame_height: 240,
        paths: vec![path(40.0, 280.0, 100.0), path(280.0, 40.0, 108.0)],
        k: 3,
        embedding_dim: 16,
        ..ScenarioSpec::default()
    };
    let mut s = gen_scenario(&spec).unwrap();
    // both detections vanish for three frames around the crossing
    for f in 29..=31 {
        s.detections.get_mut(&f).unwrap().clear();
    }
    let out = run_sequence(&s.detections, 1..=60, &s.score_maps(), &s.embeddings().unwrap(), &s.spec.tracker_config()).unwrap();
    let ids: BTreeSet<u64> = out.iter().flat_map(|r| r.tracks.iter().map(|t| t.0)).collect();
    let r = evaluate(&s.ground_truth, &out, &EvalOptions::default()).unwrap();
    assert_eq!(ids.len(), 2, "{r}");
    assert_eq!(r.ids, 0);
}

#[test]
fn noiseless_scenario_is_perfect() {
    let s = gen_scenario(&ScenarioSpec { seed: 11, ..ScenarioSpec::default() }).unwrap();
    let out = run_sequence(&s.detections, 1..=100, &s.score_maps(), &s.embeddings().unwrap(), &s.spec.tracker_config()).unwrap();
    let r = evaluate(&s.ground_truth, &out, &EvalOptions::default()).unwrap();
    assert_eq!((r.mota, r.ids, r.idf1), (1.0, 0, 1.0));
}

#[test]
fn without_backfill_first_frames_are_missed() {
    let s = gen_scenario(&ScenarioSpec { seed: 11, ..ScenarioSpec::default() }).unwrap();
    let cfg = TrackerConfig {
        backfill_tentative: false,
        ..s.spec.tracker_config()
    };
    let out = run_sequence(&s.detections, 1..=100, &s.score_maps(), &s.embeddings().unwrap(), &cfg).unwrap();
    assert!(out[0].tracks.is_empty());
    let r = evaluate(&s.ground_truth, &out, &EvalOptions::default()).unwrap();
    assert_eq!((r.fn_, r.ids), (5, 0));
}

fn noisy(seed: u64) -> ScenarioSpec {
    ScenarioSpec {
        num_objects: 8,
        frame_count: 40,
        max_random_overlap: 1.0,
        dropout: 0.3,
        jitter_sigma: 2.0,
        fp_rate: 0.3,
        embedding_sigma: 0.02,
        map_noise_sigma: 0.5,
        k: 3,
        embedding_dim: 32,
        seed,
        ..ScenarioSpec::default()
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let s = gen_scenario(&ScenarioSpec { num_objects: 30, ..noisy(5) }).unwrap();
    let (maps, emb) = (s.score_maps(), s.embeddings().unwrap());
    let one = run_sequence(&s.detections, 1..=40, &maps, &emb, &s.spec.tracker_config()).unwrap();
    let four = Tracker::new(s.spec.tracker_config())
        .unwrap()
        .with_threads(4)
        .run(&s.detections, 1..=40, &maps, &emb)
        .unwrap();
    assert_eq!(one, four);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn association_integrity(seed in 0u64..10_000) {
        let s = gen_scenario(&noisy(seed)).unwrap();
        let (maps, emb) = (s.score_maps(), s.embeddings().unwrap());
        let mut t = Tracker::new(s.spec.tracker_config()).unwrap();
        let mut det_assoc: BTreeMap<u64, usize> = BTreeMap::new();
        let mut seen_ids = BTreeSet::new();
        for f in 1..=40 {
            let live_before = t.tracks().len();
            let r = t.step(f, &s.detections[&f], &maps, &emb).unwrap();
            let st = t.last_stats();

            let ids: BTreeSet<u64> = st.matches.iter().map(|m| m.0).collect();
            prop_assert_eq!(ids.len(), st.matches.len());
            prop_assert_eq!(st.appearance_matches + st.iou_matches, st.matches.len());
            prop_assert_eq!(st.matches.len() + st.unmatched_candidates, st.selected);
            prop_assert!(st.tracks_in_association <= live_before);
            prop_assert_eq!(st.matches.len() + st.unmatched_tracks, st.tracks_in_association);

            for (id, src) in &st.matches {
                if src.is_detection() {
                    *det_assoc.entry(*id).or_default() += 1;
                }
            }
            for tr in t.tracks() {
                if seen_ids.insert(tr.id) {
                    prop_assert!(tr.id > seen_ids.iter().copied().filter(|&i| i != tr.id).max().unwrap_or(0));
                    det_assoc.entry(tr.id).or_insert(0);
                    *det_assoc.get_mut(&tr.id).unwrap() += 1;
                }
                let expected = det_assoc[&tr.id].min(tr.gallery.capacity());
                prop_assert_eq!(tr.gallery.len(), expected);
                prop_assert_eq!(tr.frames_lost == 0, tr.state != TrackState::Lost);
                if tr.state == TrackState::Confirmed {
                    prop_assert!(tr.detections_total >= 2);
                }
            }
            let out_ids: Vec<u64> = r.tracks.iter().map(|x| x.0).collect();
            let mut sorted = out_ids.clone();
            sorted.sort_unstable();
            sorted.dedup();
            prop_assert_eq!(out_ids, sorted);
        }
    }

    #[test]
    fn runs_are_deterministic(seed in 0u64..10_000) {
        let s = gen_scenario(&noisy(seed)).unwrap();
        let run = || run_sequence(&s.detections, 1..=40, &s.score_maps(), &s.embeddings().unwrap(), &s.spec.tracker_config()).unwrap();
        prop_assert_eq!(run(), run());
    }
}
