//! Multi-object tracking: constant-velocity Kalman boxes associated to
//! detections per frame by a Hungarian assignment over a blended
//! IoU + appearance cost, with tentative/confirmed lifecycle management.

pub mod hungarian;
pub mod kalman;

use crate::detect::Detection;
use crate::frame_io::Frame;
use crate::geom::BoundingBox;
use kalman::{KalmanBox, KalmanParams};
use std::collections::BTreeMap;
use thiserror::Error;

pub const HIST_BINS: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackParams {
    /// Consecutive-ish hits (total matches) before a track is reported.
    pub min_hits: u32,
    /// Misses tolerated before a track is dropped.
    pub max_age: u32,
    /// Weight of the IoU term in the association cost; the appearance term
    /// gets the complement.
    pub lambda_iou: f64,
    /// Predicted/detected overlap below this forbids the pairing.
    pub gate_iou: f64,
    pub process_noise: f64,
    pub measurement_noise: f64,
}

impl Default for TrackParams {
    fn default() -> Self {
        Self {
            min_hits: 3,
            max_age: 30,
            lambda_iou: 0.7,
            gate_iou: 0.05,
            process_noise: 1.0,
            measurement_noise: 2.0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TrackError {
    #[error("frame {frame} arrived after frame {last}; input must be in order")]
    OutOfOrder { frame: u64, last: u64 },
}

/// 32-bin grayscale histogram of the pixels inside `bbox` (clipped to the
/// frame), L1-normalized. A box with no interior pixels yields the uniform
/// histogram, which is neutral under the Bhattacharyya distance.
pub fn histogram(frame: &Frame, bbox: &BoundingBox) -> [f64; HIST_BINS] {
    let x0 = bbox.x.floor().max(0.0) as usize;
    let y0 = bbox.y.floor().max(0.0) as usize;
    let x1 = ((bbox.x + bbox.w).ceil().min(frame.width as f64)) as usize;
    let y1 = ((bbox.y + bbox.h).ceil().min(frame.height as f64)) as usize;
    let mut counts = [0u64; HIST_BINS];
    let mut total = 0u64;
    for y in y0..y1 {
        for x in x0..x1 {
            counts[(frame.pixels[y * frame.width as usize + x] >> 3) as usize] += 1;
            total += 1;
        }
    }
    let mut out = [0.0; HIST_BINS];
    if total == 0 {
        out.fill(1.0 / HIST_BINS as f64);
    } else {
        for (o, &c) in out.iter_mut().zip(&counts) {
            *o = c as f64 / total as f64;
        }
    }
    out
}

/// Bhattacharyya distance between two L1-normalized histograms: 0 for
/// identical, 1 for disjoint support.
pub fn bhattacharyya(a: &[f64; HIST_BINS], b: &[f64; HIST_BINS]) -> f64 {
    let bc: f64 = a.iter().zip(b).map(|(&p, &q)| (p * q).sqrt()).sum();
    (1.0 - bc.min(1.0)).sqrt()
}

#[derive(Debug, Clone)]
struct Track {
    id: u64,
    kf: KalmanBox,
    hits: u32,
    misses: u32,
    confirmed: bool,
    class_votes: BTreeMap<String, u32>,
    appearance: [f64; HIST_BINS],
    frame_start: u64,
    bbox_first: BoundingBox,
    last_hit_frame: u64,
    bbox_last: BoundingBox,
}

impl Track {
    fn class_label(&self) -> String {
        self.class_votes
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(label, _)| label.clone())
            .unwrap_or_else(|| "object".into())
    }
}

/// Per-frame row for a confirmed track.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutput {
    pub frame: u64,
    pub id: u64,
    pub bbox: BoundingBox,
    /// Matched detection's score; 0 when coasting.
    pub score: f64,
    pub class_label: String,
    pub coasted: bool,
}

/// Summary of a confirmed track that aged out or was flushed.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedTrack {
    pub id: u64,
    pub class_label: String,
    pub frame_start: u64,
    /// Last frame with a matched detection (coasting does not extend it).
    pub frame_end: u64,
    pub bbox_first: BoundingBox,
    pub bbox_last: BoundingBox,
}

#[derive(Debug, Default, PartialEq)]
pub struct StepResult {
    pub outputs: Vec<TrackOutput>,
    pub closed: Vec<ClosedTrack>,
}

#[derive(Debug)]
pub struct Tracker {
    params: TrackParams,
    tracks: Vec<Track>,
    next_id: u64,
    last_frame: Option<u64>,
}

impl Tracker {
    pub fn new(params: TrackParams) -> Self {
        Self {
            params,
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
        }
    }

    pub fn live_tracks(&self) -> usize {
        self.tracks.len()
    }

    /// Advance one frame: predict, associate, update, manage lifecycle.
    /// Outputs cover confirmed tracks only and are sorted by id; closures
    /// are confirmed tracks whose miss count just exceeded `max_age`.
    pub fn step(
        &mut self,
        frame: u64,
        dets: &[Detection],
        image: &Frame,
    ) -> Result<StepResult, TrackError> {
        if let Some(last) = self.last_frame {
            if frame <= last {
                return Err(TrackError::OutOfOrder { frame, last });
            }
        }
        self.last_frame = Some(frame);

        for t in &mut self.tracks {
            t.kf.predict();
        }

        // Association cost: blended (1 − IoU) and appearance distance,
        // gated on minimum overlap.
        let cost: Vec<Vec<f64>> = self
            .tracks
            .iter()
            .map(|t| {
                let pred = t.kf.bbox();
                dets.iter()
                    .map(|d| {
                        let iou = pred.iou(&d.bbox);
                        if iou < self.params.gate_iou {
                            f64::INFINITY
                        } else {
                            let app = bhattacharyya(&t.appearance, &histogram(image, &d.bbox));
                            self.params.lambda_iou * (1.0 - iou)
                                + (1.0 - self.params.lambda_iou) * app
                        }
                    })
                    .collect()
            })
            .collect();
        let pairs = hungarian::assign(&cost);

        let mut det_matched = vec![false; dets.len()];
        let mut track_matched = vec![false; self.tracks.len()];
        for &(ti, di) in &pairs {
            track_matched[ti] = true;
            det_matched[di] = true;
            let t = &mut self.tracks[ti];
            let d = &dets[di];
            t.kf.update(&d.bbox);
            t.hits += 1;
            t.misses = 0;
            *t.class_votes.entry(d.class_label.clone()).or_insert(0) += 1;
            let new_hist = histogram(image, &d.bbox);
            let mut sum = 0.0;
            for (a, n) in t.appearance.iter_mut().zip(&new_hist) {
                *a = 0.9 * *a + 0.1 * n;
                sum += *a;
            }
            if sum > 0.0 {
                for a in &mut t.appearance {
                    *a /= sum;
                }
            }
            if t.hits >= self.params.min_hits {
                t.confirmed = true;
            }
            t.last_hit_frame = frame;
            t.bbox_last = t.kf.bbox();
        }

        let mut result = StepResult::default();
        for (ti, t) in self.tracks.iter_mut().enumerate() {
            if !track_matched[ti] {
                t.misses += 1;
            }
            if t.confirmed && t.misses <= self.params.max_age {
                let (score, coasted) = if track_matched[ti] {
                    let di = pairs.iter().find(|p| p.0 == ti).unwrap().1;
                    (dets[di].score, false)
                } else {
                    (0.0, true)
                };
                result.outputs.push(TrackOutput {
                    frame,
                    id: t.id,
                    bbox: t.kf.bbox(),
                    score,
                    class_label: t.class_label(),
                    coasted,
                });
            }
        }

        // Age out stale tracks; only confirmed ones produce close records.
        let max_age = self.params.max_age;
        let mut survivors = Vec::with_capacity(self.tracks.len());
        for t in self.tracks.drain(..) {
            if t.misses > max_age {
                if t.confirmed {
                    result.closed.push(close(&t));
                }
            } else {
                survivors.push(t);
            }
        }
        self.tracks = survivors;

        // Unmatched detections seed tentative tracks, in detection order.
        for (di, d) in dets.iter().enumerate() {
            if det_matched[di] {
                continue;
            }
            let kf = KalmanBox::new(
                &d.bbox,
                KalmanParams {
                    process_noise: self.params.process_noise,
                    measurement_noise: self.params.measurement_noise,
                },
            );
            let bbox = kf.bbox();
            let mut class_votes = BTreeMap::new();
            class_votes.insert(d.class_label.clone(), 1);
            self.tracks.push(Track {
                id: self.next_id,
                kf,
                hits: 1,
                misses: 0,
                confirmed: self.params.min_hits <= 1,
                class_votes,
                appearance: histogram(image, &d.bbox),
                frame_start: frame,
                bbox_first: bbox.clone(),
                last_hit_frame: frame,
                bbox_last: bbox,
            });
            self.next_id += 1;
        }

        result.outputs.sort_by_key(|o| o.id);
        result.closed.sort_by_key(|c| c.id);
        Ok(result)
    }

    /// End of input: close every remaining confirmed track.
    pub fn flush(&mut self) -> Vec<ClosedTrack> {
        let mut closed: Vec<ClosedTrack> = self
            .tracks
            .drain(..)
            .filter(|t| t.confirmed)
            .map(|t| close(&t))
            .collect();
        closed.sort_by_key(|c| c.id);
        closed
    }
}

fn close(t: &Track) -> ClosedTrack {
    ClosedTrack {
        id: t.id,
        class_label: t.class_label(),
        frame_start: t.frame_start,
        frame_end: t.last_hit_frame,
        bbox_first: t.bbox_first.clone(),
        bbox_last: t.bbox_last.clone(),
    }
}
