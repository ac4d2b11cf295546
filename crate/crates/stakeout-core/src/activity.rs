//! Rule-based per-track activity classification over sliding trajectory
//! windows. Sits behind a sequence-classifier trait so a learned model can
//! replace the rules without touching the windowing machinery.
//!
//! Features are height-normalized (heights/frame, heights) so object size
//! and camera distance cancel out of the thresholds.

use crate::geom::BoundingBox;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct ActivityParams {
    /// Samples per classification window.
    pub window: usize,
    /// New window every `hop` samples (50% overlap at the defaults).
    pub hop: usize,
    /// History retained per track; loitering needs this many samples.
    pub loiter_window: usize,
    /// Frame-edge band (px) for entering/exiting decisions.
    pub border_band: u32,
    /// Heights/frame at or above which motion counts as running.
    pub run_speed: f64,
    /// Heights/frame at or above which motion counts as walking.
    pub walk_speed: f64,
    /// Loitering: moving but net displacement over the full history stays
    /// under this many heights.
    pub loiter_displacement: f64,
}

impl Default for ActivityParams {
    fn default() -> Self {
        Self {
            window: 30,
            hop: 15,
            loiter_window: 150,
            border_band: 8,
            run_speed: 0.15,
            walk_speed: 0.02,
            loiter_displacement: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activity {
    Stationary,
    Walking,
    Running,
    Loitering,
    Entering,
    Exiting,
}

impl Activity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Activity::Stationary => "stationary",
            Activity::Walking => "walking",
            Activity::Running => "running",
            Activity::Loitering => "loitering",
            Activity::Entering => "entering",
            Activity::Exiting => "exiting",
        }
    }
}

impl std::fmt::Display for Activity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivityLabel {
    pub label: Activity,
    pub confidence: f64,
    /// Inclusive (first, last) frame of the classified window.
    pub window: (u64, u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    /// Mean per-frame centroid step, in box heights.
    pub mean_speed: f64,
    /// ‖last − first centroid‖, in box heights.
    pub net_displacement: f64,
    /// Direction of the net motion, atan2(dy, dx), y down.
    pub heading: f64,
    /// First/last sample's box touches the frame-edge band.
    pub border_start: bool,
    pub border_end: bool,
}

#[derive(Debug, Error, PartialEq)]
#[error("need at least 2 samples to compute trajectory features, got {got}")]
pub struct InsufficientSamples {
    pub got: usize,
}

pub fn track_features(
    samples: &[(u64, BoundingBox)],
    frame_dims: (u32, u32),
    border_band: u32,
) -> Result<Features, InsufficientSamples> {
    if samples.len() < 2 {
        return Err(InsufficientSamples { got: samples.len() });
    }
    let centers: Vec<(f64, f64)> = samples.iter().map(|(_, b)| b.center()).collect();
    let mean_height =
        samples.iter().map(|(_, b)| b.h).sum::<f64>() / samples.len() as f64;
    let mean_height = mean_height.max(1.0);
    let step_sum: f64 = centers
        .windows(2)
        .map(|p| (p[1].0 - p[0].0).hypot(p[1].1 - p[0].1))
        .sum();
    let mean_speed = step_sum / (samples.len() - 1) as f64 / mean_height;
    let (dx, dy) = (
        centers[centers.len() - 1].0 - centers[0].0,
        centers[centers.len() - 1].1 - centers[0].1,
    );
    let (fw, fh) = frame_dims;
    Ok(Features {
        mean_speed,
        net_displacement: dx.hypot(dy) / mean_height,
        heading: dy.atan2(dx),
        border_start: samples[0].1.touches_border_band(fw, fh, border_band),
        border_end: samples[samples.len() - 1]
            .1
            .touches_border_band(fw, fh, border_band),
    })
}

/// A classification request: the window itself plus the extended history
/// (which contains the window as its suffix) for the loitering rule.
#[derive(Debug)]
pub struct TrackWindow<'a> {
    pub track_id: u64,
    pub samples: &'a [(u64, BoundingBox)],
    pub history: &'a [(u64, BoundingBox)],
    pub frame_dims: (u32, u32),
}

/// The slot a learned sequence model would fill.
pub trait SequenceClassifier {
    fn classify_window(&self, w: &TrackWindow<'_>) -> ActivityLabel;
}

/// Deterministic rule table over the kinematic features.
///
/// Priority: entering (border contact at the window start only — the track
/// moved inward) > exiting (contact at the end only) > loitering (full
/// `loiter_window` history available, in motion, but net displacement under
/// `loiter_displacement` heights — checked before the speed labels, which
/// would otherwise always shadow it) > running > walking > stationary.
///
/// Confidence is the deciding feature's distance from its threshold,
/// squashed by `min(1, 2·|margin|/threshold)`; entering/exiting decide on a
/// boolean and report 1.0.
#[derive(Debug, Clone)]
pub struct RuleClassifier {
    pub params: ActivityParams,
}

impl SequenceClassifier for RuleClassifier {
    fn classify_window(&self, w: &TrackWindow<'_>) -> ActivityLabel {
        let p = &self.params;
        let f = track_features(w.samples, w.frame_dims, p.border_band)
            .expect("windows have >= 2 samples");
        let window = (w.samples[0].0, w.samples[w.samples.len() - 1].0);
        let squash = |margin: f64, threshold: f64| (2.0 * margin.abs() / threshold).min(1.0);
        let history_displacement = (w.history.len() >= p.loiter_window
            && f.mean_speed >= p.walk_speed)
            .then(|| {
                track_features(w.history, w.frame_dims, p.border_band)
                    .expect("history contains the window")
                    .net_displacement
            })
            .filter(|nd| *nd < p.loiter_displacement);
        let (label, confidence) = if f.border_start && !f.border_end {
            (Activity::Entering, 1.0)
        } else if f.border_end && !f.border_start {
            (Activity::Exiting, 1.0)
        } else if let Some(nd) = history_displacement {
            (
                Activity::Loitering,
                squash(p.loiter_displacement - nd, p.loiter_displacement),
            )
        } else if f.mean_speed >= p.run_speed {
            (Activity::Running, squash(f.mean_speed - p.run_speed, p.run_speed))
        } else if f.mean_speed >= p.walk_speed {
            // Margin to the nearer of the two boundaries.
            let lo = f.mean_speed - p.walk_speed;
            let hi = p.run_speed - f.mean_speed;
            let (margin, threshold) = if lo <= hi {
                (lo, p.walk_speed)
            } else {
                (hi, p.run_speed)
            };
            (Activity::Walking, squash(margin, threshold))
        } else {
            (
                Activity::Stationary,
                squash(p.walk_speed - f.mean_speed, p.walk_speed),
            )
        };
        ActivityLabel {
            label,
            confidence,
            window,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivityRecord {
    pub track_id: u64,
    pub label: ActivityLabel,
    /// Track box at the window's first/last frame.
    pub bbox_first: BoundingBox,
    pub bbox_last: BoundingBox,
}

struct TrackBuf {
    samples: Vec<(u64, BoundingBox)>,
    /// Total samples ever observed (the buffer truncates to loiter_window).
    count: u64,
    emitted: bool,
}

/// Drives per-track sample buffers and window cadence: a window is emitted
/// once a track has `window` samples and then every `hop` samples; tracks
/// shorter than a full window get one classification when they close.
pub struct ActivityEngine<C: SequenceClassifier = RuleClassifier> {
    params: ActivityParams,
    frame_dims: (u32, u32),
    classifier: C,
    tracks: BTreeMap<u64, TrackBuf>,
}

impl ActivityEngine<RuleClassifier> {
    pub fn new(params: ActivityParams, frame_w: u32, frame_h: u32) -> Self {
        let classifier = RuleClassifier {
            params: params.clone(),
        };
        Self::with_classifier(params, frame_w, frame_h, classifier)
    }
}

impl<C: SequenceClassifier> ActivityEngine<C> {
    pub fn with_classifier(
        params: ActivityParams,
        frame_w: u32,
        frame_h: u32,
        classifier: C,
    ) -> Self {
        Self {
            params,
            frame_dims: (frame_w, frame_h),
            classifier,
            tracks: BTreeMap::new(),
        }
    }

    /// Feed one per-frame track box (coasted boxes included: they keep the
    /// sample stream contiguous through occlusions).
    pub fn observe(
        &mut self,
        frame: u64,
        track_id: u64,
        bbox: &BoundingBox,
    ) -> Option<ActivityRecord> {
        let buf = self.tracks.entry(track_id).or_insert_with(|| TrackBuf {
            samples: Vec::new(),
            count: 0,
            emitted: false,
        });
        buf.samples.push((frame, bbox.clone()));
        if buf.samples.len() > self.params.loiter_window {
            let excess = buf.samples.len() - self.params.loiter_window;
            buf.samples.drain(..excess);
        }
        buf.count += 1;
        let w = self.params.window as u64;
        let hop = self.params.hop.max(1) as u64;
        if buf.count < w || (buf.count - w) % hop != 0 {
            return None;
        }
        buf.emitted = true;
        let start = buf.samples.len() - self.params.window.min(buf.samples.len());
        let tw = TrackWindow {
            track_id,
            samples: &buf.samples[start..],
            history: &buf.samples,
            frame_dims: self.frame_dims,
        };
        let label = self.classifier.classify_window(&tw);
        Some(ActivityRecord {
            track_id,
            label,
            bbox_first: buf.samples[start].1,
            bbox_last: buf.samples[buf.samples.len() - 1].1,
        })
    }

    /// The track ended: classify a never-emitted short track (≥ 2 samples)
    /// over everything it has, then drop its buffer.
    pub fn close_track(&mut self, track_id: u64) -> Option<ActivityRecord> {
        let buf = self.tracks.remove(&track_id)?;
        if buf.emitted || buf.samples.len() < 2 {
            return None;
        }
        let tw = TrackWindow {
            track_id,
            samples: &buf.samples,
            history: &buf.samples,
            frame_dims: self.frame_dims,
        };
        let label = self.classifier.classify_window(&tw);
        Some(ActivityRecord {
            track_id,
            label,
            bbox_first: buf.samples[0].1,
            bbox_last: buf.samples[buf.samples.len() - 1].1,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn boxed(cx: f64, cy: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    fn walk(
        n: usize,
        start: (f64, f64),
        step: (f64, f64),
        size: (f64, f64),
    ) -> Vec<(u64, BoundingBox)> {
        (0..n)
            .map(|i| {
                let t = i as f64;
                (
                    i as u64,
                    boxed(
                        start.0 + step.0 * t,
                        start.1 + step.1 * t,
                        size.0,
                        size.1,
                    ),
                )
            })
            .collect()
    }

    const DIMS: (u32, u32) = (320, 240);

    fn rules() -> RuleClassifier {
        RuleClassifier {
            params: ActivityParams::default(),
        }
    }

    fn classify(samples: &[(u64, BoundingBox)]) -> ActivityLabel {
        rules().classify_window(&TrackWindow {
            track_id: 1,
            samples,
            history: samples,
            frame_dims: DIMS,
        })
    }

    #[test]
    fn features_match_direct_recomputation() {
        // Deterministic jagged walk, recomputed with independent arithmetic.
        let mut samples = Vec::new();
        let (mut cx, mut cy) = (100.0, 120.0);
        let mut s = 7u64;
        for i in 0..30u64 {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            cx += ((s >> 33) % 7) as f64 - 3.0;
            cy += ((s >> 43) % 5) as f64 - 2.0;
            samples.push((i, boxed(cx, cy, 14.0, 28.0 + (i % 3) as f64)));
        }
        let f = track_features(&samples, DIMS, 8).unwrap();

        let centers: Vec<(f64, f64)> = samples.iter().map(|(_, b)| b.center()).collect();
        let mh: f64 = samples.iter().map(|(_, b)| b.h).sum::<f64>() / 30.0;
        let mut total = 0.0;
        for i in 1..centers.len() {
            let dx = centers[i].0 - centers[i - 1].0;
            let dy = centers[i].1 - centers[i - 1].1;
            total += (dx * dx + dy * dy).sqrt();
        }
        let dx = centers[29].0 - centers[0].0;
        let dy = centers[29].1 - centers[0].1;
        assert!((f.mean_speed - total / 29.0 / mh).abs() < 1e-9);
        assert!((f.net_displacement - (dx * dx + dy * dy).sqrt() / mh).abs() < 1e-9);
        assert!((f.heading - dy.atan2(dx)).abs() < 1e-9);
    }

    #[test]
    fn feature_arithmetic_on_worked_examples() {
        // Static box: both motion features zero.
        let still = walk(10, (60.0, 60.0), (0.0, 0.0), (10.0, 20.0));
        let f = track_features(&still, DIMS, 8).unwrap();
        assert_eq!(f.mean_speed, 0.0);
        assert_eq!(f.net_displacement, 0.0);
        // 2 px/frame at height 20 → 0.1 heights/frame.
        let moving = walk(10, (60.0, 60.0), (2.0, 0.0), (10.0, 20.0));
        let f = track_features(&moving, DIMS, 8).unwrap();
        assert!((f.mean_speed - 0.1).abs() < 1e-12);
        assert_eq!(f.heading, 0.0);
        assert!(matches!(
            track_features(&still[..1], DIMS, 8),
            Err(InsufficientSamples { got: 1 })
        ));
    }

    #[test]
    fn speed_rules_with_confidence() {
        // 0.1 heights/frame: walking, margin 0.05 to the running boundary.
        let l = classify(&walk(30, (100.0, 100.0), (2.0, 0.0), (10.0, 20.0)));
        assert_eq!(l.label, Activity::Walking);
        assert!((l.confidence - 2.0 * 0.05 / 0.15).abs() < 1e-9);
        assert_eq!(l.window, (0, 29));

        // 4 px/frame at height 20 = 0.2: running, conf min(1, 2·0.05/0.15).
        let l = classify(&walk(30, (60.0, 100.0), (4.0, 0.0), (10.0, 20.0)));
        assert_eq!(l.label, Activity::Running);
        assert!((l.confidence - (2.0 * 0.05 / 0.15f64).min(1.0)).abs() < 1e-9);

        let l = classify(&walk(30, (100.0, 100.0), (0.0, 0.0), (10.0, 20.0)));
        assert_eq!(l.label, Activity::Stationary);
        assert_eq!(l.confidence, 1.0);
    }

    #[test]
    fn border_rules_win_regardless_of_speed() {
        // Starts inside the 8 px band, runs inward fast: entering.
        let l = classify(&walk(30, (10.0, 100.0), (6.0, 0.0), (12.0, 24.0)));
        assert_eq!(l.label, Activity::Entering);
        assert_eq!(l.confidence, 1.0);
        // Mirror image: exiting.
        let l = classify(&walk(30, (184.0, 100.0), (6.0, 0.0), (12.0, 24.0)));
        assert_ne!(l.label, Activity::Entering);
        // (184 + 29·6 = 358 − 6 = 352 > 312, so it ends in the band.)
        assert_eq!(l.label, Activity::Exiting);
        // Hugging the edge the whole way is neither: falls through to speed.
        let l = classify(&walk(30, (5.0, 100.0), (0.0, 2.0), (12.0, 24.0)));
        assert_eq!(l.label, Activity::Walking);
    }

    #[test]
    fn loitering_needs_full_history_and_small_displacement() {
        // Pacing back and forth 2 px/frame over a 30 px span: mean_speed 0.1
        // but the 150-sample net displacement stays near zero (the triangle
        // wave has period 30, so 150 samples end 1 step from home).
        let mut samples = Vec::new();
        for i in 0..150u64 {
            let phase = (i % 15) as f64;
            let x = if (i / 15) % 2 == 0 { phase } else { 15.0 - phase };
            samples.push((i, boxed(150.0 + 2.0 * x, 120.0, 10.0, 20.0)));
        }
        let window = &samples[120..];
        let l = rules().classify_window(&TrackWindow {
            track_id: 1,
            samples: window,
            history: &samples,
            frame_dims: DIMS,
        });
        assert_eq!(l.label, Activity::Loitering);
        assert!(l.confidence > 0.9, "pacing returns home: {}", l.confidence);
        // Same window with only its own 30 samples of history: walking.
        let l = rules().classify_window(&TrackWindow {
            track_id: 1,
            samples: window,
            history: window,
            frame_dims: DIMS,
        });
        assert_eq!(l.label, Activity::Walking);
    }

    #[test]
    fn labels_are_scale_invariant_on_interior_windows() {
        let base = walk(30, (100.0, 100.0), (2.4, 0.7), (12.0, 24.0));
        let reference = classify(&base);
        assert_eq!(reference.label, Activity::Walking);
        assert!(
            reference.confidence > 0.0 && reference.confidence < 1.0,
            "fixture should not saturate confidence: {}",
            reference.confidence
        );
        for s in [0.5, 2.0] {
            let scaled: Vec<(u64, BoundingBox)> = base
                .iter()
                .map(|(f, b)| {
                    (*f, BoundingBox::new(b.x * s, b.y * s, b.w * s, b.h * s))
                })
                .collect();
            let l = rules().classify_window(&TrackWindow {
                track_id: 1,
                samples: &scaled,
                history: &scaled,
                frame_dims: ((320.0 * s) as u32, (240.0 * s) as u32),
            });
            assert_eq!(l.label, reference.label, "scale {s}");
            assert!((l.confidence - reference.confidence).abs() < 1e-9, "scale {s}");
        }
    }

    #[test]
    fn engine_emits_on_the_window_hop_cadence() {
        let mut engine = ActivityEngine::new(ActivityParams::default(), 320, 240);
        let mut emitted = Vec::new();
        for i in 0..80u64 {
            let b = boxed(100.0 + 2.0 * i as f64, 120.0, 10.0, 20.0);
            if let Some(rec) = engine.observe(i, 7, &b) {
                emitted.push((i, rec));
            }
        }
        let frames: Vec<u64> = emitted.iter().map(|(f, _)| *f).collect();
        assert_eq!(frames, vec![29, 44, 59, 74]);
        let windows: Vec<(u64, u64)> = emitted.iter().map(|(_, r)| r.label.window).collect();
        assert_eq!(windows, vec![(0, 29), (15, 44), (30, 59), (45, 74)]);
        assert!(emitted.iter().all(|(_, r)| r.track_id == 7));
        assert!(emitted.iter().all(|(_, r)| r.label.label == Activity::Walking));
        // Already emitted: closing adds nothing.
        assert_eq!(engine.close_track(7), None);
    }

    #[test]
    fn short_tracks_classify_once_at_close() {
        let mut engine = ActivityEngine::new(ActivityParams::default(), 320, 240);
        for i in 0..10u64 {
            let b = boxed(100.0 + 4.0 * i as f64, 120.0, 10.0, 20.0);
            assert_eq!(engine.observe(i, 3, &b), None);
        }
        let rec = engine.close_track(3).unwrap();
        assert_eq!(rec.label.window, (0, 9));
        assert_eq!(rec.label.label, Activity::Running);
        // Single-sample track: nothing to classify.
        engine.observe(0, 9, &boxed(50.0, 50.0, 10.0, 20.0));
        assert_eq!(engine.close_track(9), None);
        assert_eq!(engine.close_track(42), None);
    }
}
