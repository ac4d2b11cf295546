//! Motion segmentation: combines the background-subtraction and optical-flow
//! masks, cleans the result morphologically, extracts connected components,
//! and turns per-frame activity scores into recording windows ("clips") via a
//! hysteresis state machine.

use crate::geom::BoundingBox;
use crate::mask::{check_dims, DimensionMismatch, Mask};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMode {
    /// Pixel moves if either detector says so (default).
    Union,
    /// Pixel moves only if both detectors agree.
    Intersection,
    BgOnly,
    FlowOnly,
}

pub fn fuse_masks(bg: &Mask, flow: &Mask, mode: FusionMode) -> Result<Mask, DimensionMismatch> {
    check_dims(bg.dims(), flow.dims())?;
    let (w, h) = bg.dims();
    let bits = bg
        .bits()
        .iter()
        .zip(flow.bits())
        .map(|(&a, &b)| match mode {
            FusionMode::Union => a || b,
            FusionMode::Intersection => a && b,
            FusionMode::BgOnly => a,
            FusionMode::FlowOnly => b,
        })
        .collect();
    Ok(Mask::from_bits(w, h, bits))
}

/// Fraction of set pixels, the per-frame activity score.
pub fn activity_score(mask: &Mask) -> f64 {
    let (w, h) = mask.dims();
    let total = (w as usize) * (h as usize);
    if total == 0 {
        return 0.0;
    }
    mask.count_set() as f64 / total as f64
}

/// 3×3 erosion; everything outside the frame counts as background, so set
/// pixels touching the border erode away.
pub fn erode(mask: &Mask) -> Mask {
    neighborhood_op(mask, true)
}

/// 3×3 dilation; out-of-frame pixels count as background.
pub fn dilate(mask: &Mask) -> Mask {
    neighborhood_op(mask, false)
}

fn neighborhood_op(mask: &Mask, all: bool) -> Mask {
    let (w, h) = mask.dims();
    let (wi, hi) = (w as i64, h as i64);
    let mut out = Mask::new(w, h);
    for y in 0..hi {
        for x in 0..wi {
            let mut acc = all;
            'scan: for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    let bit = nx >= 0
                        && ny >= 0
                        && nx < wi
                        && ny < hi
                        && mask.get(nx as u32, ny as u32);
                    if all != bit {
                        acc = bit;
                        break 'scan;
                    }
                }
            }
            if acc {
                out.set(x as u32, y as u32, true);
            }
        }
    }
    out
}

/// Opening (kills speckle and 1-px-thin structure) followed by closing
/// (fills small holes): the standard cleanup before component extraction.
pub fn morph_clean(mask: &Mask) -> Mask {
    let opened = dilate(&erode(mask));
    erode(&dilate(&opened))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub area: usize,
    pub bbox: BoundingBox,
    pub centroid: (f64, f64),
}

/// 8-connected components with at least `min_area` pixels, sorted by
/// (bbox.y, bbox.x).
pub fn connected_components(mask: &Mask, min_area: usize) -> Vec<Blob> {
    let (w, h) = mask.dims();
    let (wu, hu) = (w as usize, h as usize);
    let mut seen = vec![false; wu * hu];
    let mut blobs = Vec::new();
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for sy in 0..hu {
        for sx in 0..wu {
            if seen[sy * wu + sx] || !mask.get(sx as u32, sy as u32) {
                continue;
            }
            seen[sy * wu + sx] = true;
            stack.push((sx, sy));
            let (mut min_x, mut max_x, mut min_y, mut max_y) = (sx, sx, sy, sy);
            let (mut sum_x, mut sum_y, mut area) = (0u64, 0u64, 0usize);
            while let Some((x, y)) = stack.pop() {
                area += 1;
                sum_x += x as u64;
                sum_y += y as u64;
                min_x = min_x.min(x);
                max_x = max_x.max(x);
                min_y = min_y.min(y);
                max_y = max_y.max(y);
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= wu as i64 || ny >= hu as i64 {
                            continue;
                        }
                        let ni = ny as usize * wu + nx as usize;
                        if !seen[ni] && mask.get(nx as u32, ny as u32) {
                            seen[ni] = true;
                            stack.push((nx as usize, ny as usize));
                        }
                    }
                }
            }
            if area >= min_area {
                blobs.push(Blob {
                    area,
                    bbox: BoundingBox::new(
                        min_x as f64,
                        min_y as f64,
                        (max_x - min_x + 1) as f64,
                        (max_y - min_y + 1) as f64,
                    ),
                    centroid: (sum_x as f64 / area as f64, sum_y as f64 / area as f64),
                });
            }
        }
    }
    blobs.sort_by(|a, b| {
        (a.bbox.y, a.bbox.x)
            .partial_cmp(&(b.bbox.y, b.bbox.x))
            .unwrap()
    });
    blobs
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmenterParams {
    /// Activity score that counts toward opening a clip.
    pub t_on: f64,
    /// Score below which a frame counts toward closing one.
    pub t_off: f64,
    /// Consecutive loud frames required to open.
    pub n_on: u32,
    /// Consecutive quiet frames required to close.
    pub n_off: u32,
    /// Frames prepended before the first loud frame.
    pub pre_roll: u32,
    /// Frames appended after the last loud frame.
    pub post_roll: u32,
}

impl Default for SegmenterParams {
    fn default() -> Self {
        Self {
            t_on: 0.005,
            t_off: 0.002,
            n_on: 3,
            n_off: 30,
            pre_roll: 15,
            post_roll: 15,
        }
    }
}

/// Inclusive frame range of a recorded clip. `end` can point past the frame
/// that closed the clip when `post_roll > n_off`; callers buffering frames
/// must keep collecting until they reach it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClipBounds {
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentEvent {
    None,
    /// Recording begins; `start` is already adjusted for pre-roll and lies at
    /// or before the current frame.
    Started { start: u64 },
    Closed(ClipBounds),
}

/// Hysteresis clip segmenter: `n_on` consecutive frames above `t_on` open a
/// clip (backdated by `pre_roll`); `n_off` consecutive frames below `t_off`
/// close it at the last active frame plus `post_roll`. Consecutive clips
/// never overlap: a new clip starts no earlier than one frame after the
/// previous one ended.
#[derive(Debug, Clone)]
pub struct Segmenter {
    params: SegmenterParams,
    recording: bool,
    consec_on: u32,
    consec_off: u32,
    clip_start: u64,
    prev_end: Option<u64>,
}

impl Segmenter {
    pub fn new(params: SegmenterParams) -> Self {
        Self {
            params,
            recording: false,
            consec_on: 0,
            consec_off: 0,
            clip_start: 0,
            prev_end: None,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    /// Start of the currently open clip, if any.
    pub fn open_clip_start(&self) -> Option<u64> {
        self.recording.then_some(self.clip_start)
    }

    pub fn observe(&mut self, frame: u64, score: f64) -> SegmentEvent {
        if !self.recording {
            if score > self.params.t_on {
                self.consec_on += 1;
            } else {
                self.consec_on = 0;
            }
            if self.consec_on >= self.params.n_on {
                let run_start = frame + 1 - self.params.n_on as u64;
                let mut start = run_start.saturating_sub(self.params.pre_roll as u64);
                if let Some(prev) = self.prev_end {
                    start = start.max(prev + 1);
                }
                self.recording = true;
                self.clip_start = start;
                self.consec_on = 0;
                self.consec_off = 0;
                return SegmentEvent::Started { start };
            }
            SegmentEvent::None
        } else {
            if score < self.params.t_off {
                self.consec_off += 1;
            } else {
                self.consec_off = 0;
            }
            if self.consec_off >= self.params.n_off {
                let last_active = frame - self.params.n_off as u64;
                let end = (last_active + self.params.post_roll as u64).max(self.clip_start);
                self.recording = false;
                self.consec_on = 0;
                self.prev_end = Some(end);
                return SegmentEvent::Closed(ClipBounds {
                    start: self.clip_start,
                    end,
                });
            }
            SegmentEvent::None
        }
    }

    /// End of input: an open clip closes at `last_frame`.
    pub fn flush(&mut self, last_frame: u64) -> Option<ClipBounds> {
        if !self.recording {
            return None;
        }
        self.recording = false;
        let end = last_frame.max(self.clip_start);
        self.prev_end = Some(end);
        Some(ClipBounds {
            start: self.clip_start,
            end,
        })
    }
}
