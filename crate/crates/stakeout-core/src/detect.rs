//! Blob detection over the cleaned motion mask: multi-scale component
//! extraction, greedy non-maximum suppression, plausibility filtering, and
//! merging with externally supplied detections.

use crate::exchange::Record;
use crate::geom::BoundingBox;
use crate::mask::Mask;
use crate::motionseg::connected_components;
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectParams {
    /// Mask pyramid levels to scan (level L sees a 2^L-downsampled mask).
    pub levels: usize,
    /// NMS overlap threshold; also gates the external merge.
    pub iou_threshold: f64,
    /// Minimum blob area in pixels at the 320×240 reference size; scales
    /// with frame area.
    pub min_area: usize,
    pub aspect_min: f64,
    pub aspect_max: f64,
    /// Boxes covering more than this fraction of the frame are implausible.
    pub max_area_fraction: f64,
    /// Width of the frame-edge band that sets `Detection::border`.
    pub border_band: u32,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self {
            levels: 3,
            iou_threshold: 0.5,
            min_area: 50,
            aspect_min: 0.2,
            aspect_max: 5.0,
            max_area_fraction: 0.5,
            border_band: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub score: f64,
    pub class_label: String,
    /// Touches the frame-edge band; the box likely clips a partially
    /// visible object.
    pub border: bool,
}

/// `min_area` at the 320×240 reference, scaled to the actual frame area.
pub fn effective_min_area(min_area: usize, frame_w: u32, frame_h: u32) -> usize {
    let scaled = min_area as f64 * (frame_w as f64 * frame_h as f64) / (320.0 * 240.0);
    (scaled.round() as usize).max(1)
}

/// Halve the mask: each output pixel is set iff at least two of its 2×2
/// source pixels are (majority-ish vote; trailing odd row/column dropped).
pub fn downsample_mask(mask: &Mask) -> Mask {
    let (w, h) = mask.dims();
    let (w2, h2) = (w / 2, h / 2);
    let mut out = Mask::new(w2, h2);
    for y in 0..h2 {
        for x in 0..w2 {
            let count = [(0, 0), (1, 0), (0, 1), (1, 1)]
                .iter()
                .filter(|&&(dx, dy)| mask.get(2 * x + dx, 2 * y + dy))
                .count();
            if count >= 2 {
                out.set(x, y, true);
            }
        }
    }
    out
}

/// Greedy NMS. Order: score descending, then larger box, then (y, x); a
/// candidate survives only if it overlaps every kept box by at most
/// `iou_threshold`. Score ties therefore resolve toward the coarser
/// (slightly inflated) pyramid box, which keeps the ordering deterministic.
pub fn nms(mut dets: Vec<Detection>, iou_threshold: f64) -> Vec<Detection> {
    dets.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(b.bbox.area().total_cmp(&a.bbox.area()))
            .then(a.bbox.y.total_cmp(&b.bbox.y))
            .then(a.bbox.x.total_cmp(&b.bbox.x))
    });
    let mut kept: Vec<Detection> = Vec::new();
    'candidates: for d in dets {
        for k in &kept {
            if k.bbox.iou(&d.bbox) > iou_threshold {
                continue 'candidates;
            }
        }
        kept.push(d);
    }
    kept
}

/// Extract blobs at every pyramid level, map boxes back to full resolution,
/// score by area relative to `4 × min_area` (saturating at 1), and dedup
/// across levels with NMS.
pub fn detect_multiscale(mask: &Mask, params: &DetectParams) -> Vec<Detection> {
    let (w, h) = mask.dims();
    let eff = effective_min_area(params.min_area, w, h);
    let mut dets = Vec::new();
    let mut level_mask = mask.clone();
    for level in 0..params.levels.max(1) as u32 {
        if level > 0 {
            let (lw, lh) = level_mask.dims();
            if lw < 2 || lh < 2 {
                break;
            }
            level_mask = downsample_mask(&level_mask);
        }
        let scale = (1usize << level) as f64;
        let level_min = (eff / 4usize.pow(level)).max(1);
        for blob in connected_components(&level_mask, level_min) {
            let area_fullres = blob.area << (2 * level);
            dets.push(Detection {
                bbox: BoundingBox::new(
                    blob.bbox.x * scale,
                    blob.bbox.y * scale,
                    blob.bbox.w * scale,
                    blob.bbox.h * scale,
                ),
                score: (area_fullres as f64 / (4 * eff) as f64).min(1.0),
                class_label: "object".into(),
                border: false,
            });
        }
    }
    nms(dets, params.iou_threshold)
}

/// Drop implausible boxes (too small, too large, extreme aspect) and flag
/// survivors that touch the frame-edge band. Border contact itself never
/// drops a detection.
pub fn contextual_filter(
    dets: Vec<Detection>,
    frame_w: u32,
    frame_h: u32,
    params: &DetectParams,
) -> Vec<Detection> {
    let eff = effective_min_area(params.min_area, frame_w, frame_h) as f64;
    let max_area = params.max_area_fraction * frame_w as f64 * frame_h as f64;
    dets.into_iter()
        .filter_map(|mut d| {
            let area = d.bbox.area();
            if area < eff || area > max_area {
                return None;
            }
            let aspect = if d.bbox.h > 0.0 {
                d.bbox.w / d.bbox.h
            } else {
                f64::INFINITY
            };
            if aspect < params.aspect_min || aspect > params.aspect_max {
                return None;
            }
            d.border = d
                .bbox
                .touches_border_band(frame_w, frame_h, params.border_band);
            Some(d)
        })
        .collect()
}

/// Combine externally supplied detections with mask blobs: externals are
/// authoritative (all kept, listed first); a blob survives only if it does
/// not overlap any external by more than `iou_threshold`.
pub fn merge_external(
    external: Vec<Detection>,
    blobs: Vec<Detection>,
    iou_threshold: f64,
) -> Vec<Detection> {
    let n_ext = external.len();
    let mut out = external;
    for b in blobs {
        if !out[..n_ext]
            .iter()
            .any(|e| e.bbox.iou(&b.bbox) > iou_threshold)
        {
            out.push(b);
        }
    }
    out
}

/// Group exchange records into per-frame external detections (record ids are
/// ignored; a detections file carries `-1`).
pub fn external_by_frame(records: &[Record]) -> BTreeMap<u64, Vec<Detection>> {
    let mut map: BTreeMap<u64, Vec<Detection>> = BTreeMap::new();
    for r in records {
        map.entry(r.frame).or_default().push(Detection {
            bbox: r.bbox.clone(),
            score: r.score,
            class_label: r.class_label.clone(),
            border: false,
        });
    }
    map
}
