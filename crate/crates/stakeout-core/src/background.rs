//! Per-pixel adaptive background mixture (K Gaussians per pixel) and the
//! frame-differencing baseline.
//!
//! The per-pixel recurrence is the contract: tests hold the full-frame
//! implementation bit-exactly equal to a scalar reference, for any parallel
//! partition. Keep the arithmetic here in f32 and in this exact order.

use crate::frame_io::Frame;
use crate::mask::{check_dims, DimensionMismatch, Mask};
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct GmmParams {
    /// Components per pixel.
    pub k: usize,
    /// Learning rate; also used as the mean/variance update rate.
    pub alpha: f32,
    /// Match gate in standard deviations.
    pub match_sigmas: f32,
    /// Cumulative-weight prefix that counts as background (T).
    pub background_threshold: f32,
    pub variance_init: f32,
    pub variance_floor: f32,
    /// Weight given to a component created on a non-match.
    pub weight_init: f32,
}

impl Default for GmmParams {
    fn default() -> Self {
        Self {
            k: 3,
            alpha: 0.005,
            match_sigmas: 2.5,
            background_threshold: 0.7,
            variance_init: 225.0,
            variance_floor: 4.0,
            weight_init: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub weight: f32,
    pub mean: f32,
    pub variance: f32,
}

/// One mixture per pixel, components kept sorted by `weight/σ` descending.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    width: u32,
    height: u32,
    params: GmmParams,
    initialized: bool,
    components: Vec<Component>,
}

fn rank_key(c: &Component) -> f32 {
    c.weight / c.variance.sqrt()
}

fn sort_components(comps: &mut [Component]) {
    // Stable: ties keep component index order.
    comps.sort_by(|a, b| {
        rank_key(b)
            .partial_cmp(&rank_key(a))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
}

/// Advance one pixel's mixture by one observation; returns `true` for
/// foreground. Classification (match + background prefix) uses the
/// pre-update state.
fn update_pixel(comps: &mut [Component], x: f32, p: &GmmParams, seed_first: bool) -> bool {
    if seed_first {
        comps[0].mean = x;
    }
    let mut matched = None;
    for (i, c) in comps.iter().enumerate() {
        let d = x - c.mean;
        if d * d <= p.match_sigmas * p.match_sigmas * c.variance {
            matched = Some(i);
            break;
        }
    }
    let mut bg_len = 0usize;
    let mut cum = 0.0f32;
    for c in comps.iter() {
        cum += c.weight;
        bg_len += 1;
        if cum > p.background_threshold {
            break;
        }
    }
    let is_bg = matched.is_some_and(|m| m < bg_len);
    match matched {
        Some(m) => {
            for (i, c) in comps.iter_mut().enumerate() {
                c.weight = (1.0 - p.alpha) * c.weight + if i == m { p.alpha } else { 0.0 };
            }
            let rho = p.alpha;
            let c = &mut comps[m];
            c.mean = (1.0 - rho) * c.mean + rho * x;
            let d = x - c.mean; // distance to the *updated* mean
            c.variance = ((1.0 - rho) * c.variance + rho * d * d).max(p.variance_floor);
        }
        None => {
            for c in comps.iter_mut() {
                c.weight = (1.0 - p.alpha) * c.weight;
            }
            let last = comps.len() - 1;
            comps[last] = Component {
                weight: p.weight_init,
                mean: x,
                variance: p.variance_init,
            };
        }
    }
    let sum: f32 = comps.iter().map(|c| c.weight).sum();
    for c in comps.iter_mut() {
        c.weight /= sum;
    }
    sort_components(comps);
    !is_bg
}

impl GmmModel {
    pub fn new(width: u32, height: u32, params: GmmParams) -> Self {
        assert!(params.k >= 1, "need at least one component");
        let n = width as usize * height as usize * params.k;
        let mut components = vec![
            Component {
                weight: 0.0,
                mean: 0.0,
                variance: params.variance_init,
            };
            n
        ];
        // Component 0 carries all weight until the first frame seeds its mean.
        for pixel in components.chunks_mut(params.k) {
            pixel[0].weight = 1.0;
        }
        Self {
            width,
            height,
            params,
            initialized: false,
            components,
        }
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn params(&self) -> &GmmParams {
        &self.params
    }

    pub fn components(&self, x: u32, y: u32) -> &[Component] {
        let k = self.params.k;
        let i = (y as usize * self.width as usize + x as usize) * k;
        &self.components[i..i + k]
    }

    /// Classify `frame` against the current model, then fold the frame in.
    /// The very first frame seeds component 0's mean per pixel (and is
    /// therefore classified all-background).
    pub fn apply(&mut self, frame: &Frame) -> Result<Mask, DimensionMismatch> {
        check_dims((self.width, self.height), frame.dims())?;
        let k = self.params.k;
        let w = self.width as usize;
        let seed_first = !self.initialized;
        self.initialized = true;
        let params = &self.params;
        let mut mask = Mask::new(self.width, self.height);
        // Row-sized chunks: each worker owns disjoint pixels, and the pixel
        // update is a pure function of (its components, its observation), so
        // any partition produces identical state.
        mask.bits
            .par_chunks_mut(w)
            .zip(self.components.par_chunks_mut(w * k))
            .zip(frame.pixels.par_chunks(w))
            .for_each(|((mask_row, comp_row), pixel_row)| {
                for ((out, comps), &px) in mask_row
                    .iter_mut()
                    .zip(comp_row.chunks_mut(k))
                    .zip(pixel_row)
                {
                    *out = update_pixel(comps, px as f32, params, seed_first);
                }
            });
        Ok(mask)
    }

    /// Mean of the top-ranked component per pixel: the modal background.
    pub fn background_image(&self) -> Frame {
        let k = self.params.k;
        let pixels = self
            .components
            .chunks(k)
            .map(|comps| comps[0].mean.round().clamp(0.0, 255.0) as u8)
            .collect();
        Frame::new(self.width, self.height, pixels)
    }
}

/// Baseline: `|b - a| > threshold` per pixel.
pub fn frame_diff(a: &Frame, b: &Frame, threshold: u8) -> Result<Mask, DimensionMismatch> {
    check_dims(a.dims(), b.dims())?;
    let bits = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(&pa, &pb)| (pa as i16 - pb as i16).abs() > threshold as i16)
        .collect();
    Ok(Mask::from_bits(a.width, a.height, bits))
}
