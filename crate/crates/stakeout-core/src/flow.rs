//! Dense pyramidal Lucas–Kanade optical flow.
//!
//! Coarse-to-fine over a box-filtered 2× pyramid; at each level the current
//! estimate warps the new frame (bilinear), gradients come from the average
//! of the two images, and each pixel solves the 2×2 normal equations over a
//! `(2r+1)²` window (window sums via integral images). A pixel is valid iff
//! the structure matrix's smaller eigenvalue at the finest level clears
//! `min_eigenvalue × window area`; invalid pixels report exactly zero flow.

use crate::frame_io::Frame;
use crate::mask::{check_dims, DimensionMismatch, Mask};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct LkParams {
    pub window_radius: usize,
    pub pyramid_levels: usize,
    pub iterations_per_level: usize,
    /// Per-pixel threshold on the smaller eigenvalue of the structure matrix,
    /// scaled by window area at the finest level.
    pub min_eigenvalue: f64,
    /// Motion-mask gate in pixels/frame.
    pub magnitude_threshold: f64,
    /// Solve every `stride`-th pixel at the finest level and fill blocks.
    pub stride: usize,
}

impl Default for LkParams {
    fn default() -> Self {
        Self {
            window_radius: 3,
            pyramid_levels: 3,
            iterations_per_level: 3,
            min_eigenvalue: 1e-4,
            magnitude_threshold: 0.5,
            stride: 1,
        }
    }
}

#[derive(Debug, Error)]
pub enum FlowError {
    #[error(transparent)]
    Dims(#[from] DimensionMismatch),
    #[error("frame {w}x{h} smaller than the {need}x{need} analysis window")]
    TooSmall { w: u32, h: u32, need: usize },
}

/// Row-major f32 image plane (intensities normalized to [0,1] for flow).
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Bilinear sample with coordinates clamped to the plane.
    #[inline]
    fn sample(&self, fx: f32, fy: f32) -> f32 {
        bilinear(&self.data, self.width, self.height, fx, fy)
    }
}

#[inline]
fn bilinear(data: &[f32], w: usize, h: usize, fx: f32, fy: f32) -> f32 {
    let fx = fx.clamp(0.0, (w - 1) as f32);
    let fy = fy.clamp(0.0, (h - 1) as f32);
    let x0 = fx as usize;
    let y0 = fy as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let ax = fx - x0 as f32;
    let ay = fy - y0 as f32;
    let top = data[y0 * w + x0] * (1.0 - ax) + data[y0 * w + x1] * ax;
    let bot = data[y1 * w + x0] * (1.0 - ax) + data[y1 * w + x1] * ax;
    top * (1.0 - ay) + bot * ay
}

/// Median of nine values via Paeth's 19-exchange min/max network. The
/// exchanges compile to branchless min/max, which matters: flow fields are
/// noisy enough that a compare-and-swap branch is unpredictable.
#[inline]
fn median9(mut p: [f32; 9]) -> f32 {
    #[inline]
    fn mnmx(p: &mut [f32; 9], a: usize, b: usize) {
        let (lo, hi) = (p[a].min(p[b]), p[a].max(p[b]));
        p[a] = lo;
        p[b] = hi;
    }
    mnmx(&mut p, 1, 2);
    mnmx(&mut p, 4, 5);
    mnmx(&mut p, 7, 8);
    mnmx(&mut p, 0, 1);
    mnmx(&mut p, 3, 4);
    mnmx(&mut p, 6, 7);
    mnmx(&mut p, 1, 2);
    mnmx(&mut p, 4, 5);
    mnmx(&mut p, 7, 8);
    mnmx(&mut p, 0, 3);
    mnmx(&mut p, 5, 8);
    mnmx(&mut p, 4, 7);
    mnmx(&mut p, 3, 6);
    mnmx(&mut p, 1, 4);
    mnmx(&mut p, 2, 5);
    mnmx(&mut p, 4, 7);
    mnmx(&mut p, 4, 2);
    mnmx(&mut p, 6, 4);
    mnmx(&mut p, 4, 2);
    p[4]
}

/// 3×3 median over the solve grid (`step`-spaced anchors, clamped at the
/// borders), written into `out`. Regularizes the field between iterations so
/// per-pixel solve jitter cannot feed back through the warp.
fn median_pass(src: &[f32], w: usize, h: usize, step: usize, out: &mut [f32]) {
    if step > 1 {
        // Off-anchor cells keep their input values; anchor rows below
        // overwrite only anchor columns.
        out.copy_from_slice(src);
    }
    out.par_chunks_mut(w)
        .enumerate()
        .filter(|(y, _)| y % step == 0)
        .for_each(|(y, row)| {
            let ym = y.saturating_sub(step);
            let yp = if y + step < h { y + step } else { y };
            let mut x = 0;
            while x < w {
                let xm = x.saturating_sub(step);
                let xp = if x + step < w { x + step } else { x };
                row[x] = median9([
                    src[ym * w + xm],
                    src[ym * w + x],
                    src[ym * w + xp],
                    src[y * w + xm],
                    src[y * w + x],
                    src[y * w + xp],
                    src[yp * w + xm],
                    src[yp * w + x],
                    src[yp * w + xp],
                ]);
                x += step;
            }
        });
}

pub fn normalize_frame(frame: &Frame) -> Plane {
    Plane {
        width: frame.width as usize,
        height: frame.height as usize,
        data: frame.pixels.iter().map(|&p| p as f32 / 255.0).collect(),
    }
}

/// Separable binomial smoothing ([1,4,6,4,1]/16, borders clamped). Applied to
/// every pyramid level before differentiation: without it the central
/// differences underestimate the local slope on barely-correlated texture and
/// the Gauss–Newton steps overshoot instead of damping.
fn smooth(p: &Plane) -> Plane {
    const K: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let (w, h) = (p.width, p.height);
    // Borders use per-tap clamping; the interior skips it. Accumulation
    // order matches between the two paths.
    let mut tmp = Plane::new(w, h);
    tmp.data
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(y, row)| {
            let src = &p.data[y * w..(y + 1) * w];
            let clamped = |x: usize, o: &mut f32| {
                let mut acc = 0.0;
                for (k, &c) in K.iter().enumerate() {
                    let sx = (x as i64 + k as i64 - 2).clamp(0, w as i64 - 1) as usize;
                    acc += c * src[sx];
                }
                *o = acc;
            };
            for x in 0..w.min(2) {
                clamped(x, &mut row[x]);
            }
            for x in 2..w.saturating_sub(2) {
                row[x] = K[0] * src[x - 2]
                    + K[1] * src[x - 1]
                    + K[2] * src[x]
                    + K[3] * src[x + 1]
                    + K[4] * src[x + 2];
            }
            for x in w.saturating_sub(2).max(2)..w {
                clamped(x, &mut row[x]);
            }
        });
    let mut out = Plane::new(w, h);
    out.data
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(y, row)| {
            if y >= 2 && y + 2 < h {
                let r0 = &tmp.data[(y - 2) * w..(y - 1) * w];
                let r1 = &tmp.data[(y - 1) * w..y * w];
                let r2 = &tmp.data[y * w..(y + 1) * w];
                let r3 = &tmp.data[(y + 1) * w..(y + 2) * w];
                let r4 = &tmp.data[(y + 2) * w..(y + 3) * w];
                for (x, o) in row.iter_mut().enumerate() {
                    *o = K[0] * r0[x] + K[1] * r1[x] + K[2] * r2[x] + K[3] * r3[x] + K[4] * r4[x];
                }
            } else {
                for (x, o) in row.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (k, &c) in K.iter().enumerate() {
                        let sy = (y as i64 + k as i64 - 2).clamp(0, h as i64 - 1) as usize;
                        acc += c * tmp.at(x, sy);
                    }
                    *o = acc;
                }
            }
        });
    out
}

fn downsample2x(p: &Plane) -> Plane {
    let (w2, h2) = (p.width / 2, p.height / 2);
    let mut out = Plane::new(w2, h2);
    out.data
        .par_chunks_mut(w2)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, o) in row.iter_mut().enumerate() {
                let (sx, sy) = (2 * x, 2 * y);
                *o = 0.25
                    * (p.at(sx, sy) + p.at(sx + 1, sy) + p.at(sx, sy + 1) + p.at(sx + 1, sy + 1));
            }
        });
    out
}

/// Spatial gradients of the average image `(a+b)/2` (central differences,
/// borders clamped) and the temporal difference `b − a`.
pub fn gradients(a: &Plane, b: &Plane) -> Result<(Plane, Plane, Plane), DimensionMismatch> {
    check_dims(
        (a.width as u32, a.height as u32),
        (b.width as u32, b.height as u32),
    )?;
    let (w, h) = (a.width, a.height);
    let mut avg = vec![0.0f32; w * h];
    let mut ix = Plane::new(w, h);
    let mut iy = Plane::new(w, h);
    let mut it = Plane::new(w, h);
    gradients_into(a, b, &mut avg, &mut ix, &mut iy, &mut it);
    Ok((ix, iy, it))
}

/// `gradients`, writing into caller-owned buffers so the per-iteration inner
/// loop allocates nothing. Every cell of each buffer is overwritten.
fn gradients_into(
    a: &Plane,
    b: &Plane,
    avg: &mut [f32],
    ix: &mut Plane,
    iy: &mut Plane,
    it: &mut Plane,
) {
    let (w, h) = (a.width, a.height);
    for (i, o) in it.data.iter_mut().enumerate() {
        let (pa, pb) = (a.data[i], b.data[i]);
        *o = pb - pa;
        avg[i] = 0.5 * (pa + pb);
    }
    ix.data
        .par_chunks_mut(w)
        .zip(iy.data.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (rx, ry))| {
            let ym = y.saturating_sub(1);
            let yp = (y + 1).min(h - 1);
            for x in 0..w {
                let xm = x.saturating_sub(1);
                let xp = (x + 1).min(w - 1);
                rx[x] = 0.5 * (avg[y * w + xp] - avg[y * w + xm]);
                ry[x] = 0.5 * (avg[yp * w + x] - avg[ym * w + x]);
            }
        });
}

/// Integral image with a zero top row/left column: `I[y][x]` sums over
/// `[0,x) × [0,y)`.
struct Integral {
    width: usize, // = plane width + 1
    data: Vec<f64>,
}

impl Integral {
    /// Zeroed table; the top row and left column stay zero for good.
    fn new(w: usize, h: usize) -> Self {
        Self {
            width: w + 1,
            data: vec![0.0f64; (w + 1) * (h + 1)],
        }
    }

    /// Sum over `[xa, xb) × [ya, yb)`.
    #[inline]
    fn rect(&self, xa: usize, ya: usize, xb: usize, yb: usize) -> f64 {
        let iw = self.width;
        self.data[yb * iw + xb] - self.data[ya * iw + xb] - self.data[yb * iw + xa]
            + self.data[ya * iw + xa]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: u32,
    pub height: u32,
    /// Horizontal displacement (prev → curr), pixels.
    pub u: Vec<f32>,
    /// Vertical displacement, pixels.
    pub v: Vec<f32>,
    pub valid: Vec<bool>,
}

impl FlowField {
    #[inline]
    pub fn magnitude_at(&self, i: usize) -> f64 {
        (self.u[i] as f64).hypot(self.v[i] as f64)
    }
}

/// `true` where the flow is valid and faster than `threshold` px/frame.
pub fn flow_mask(flow: &FlowField, threshold: f64) -> Mask {
    let bits = (0..flow.u.len())
        .map(|i| flow.valid[i] && flow.magnitude_at(i) > threshold)
        .collect();
    Mask::from_bits(flow.width, flow.height, bits)
}

struct LevelSums {
    sxx: Integral,
    sxy: Integral,
    syy: Integral,
    sxt: Integral,
    syt: Integral,
}

impl LevelSums {
    fn new(w: usize, h: usize) -> Self {
        Self {
            sxx: Integral::new(w, h),
            sxy: Integral::new(w, h),
            syy: Integral::new(w, h),
            sxt: Integral::new(w, h),
            syt: Integral::new(w, h),
        }
    }

    /// Integral images of the five gradient products, built in one pass over
    /// the gradient planes. Products stay in f32 before the f64 row prefix,
    /// matching a build from materialized f32 product planes bit for bit.
    fn build(&mut self, ix: &Plane, iy: &Plane, it: &Plane) {
        let (w, h) = (ix.width, ix.height);
        let iw = w + 1;
        for y in 0..h {
            let src = y * w;
            let above = y * iw;
            let out = (y + 1) * iw;
            let (mut rxx, mut rxy, mut ryy, mut rxt, mut ryt) =
                (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
            for x in 0..w {
                let (gx, gy, gt) = (ix.data[src + x], iy.data[src + x], it.data[src + x]);
                rxx += (gx * gx) as f64;
                rxy += (gx * gy) as f64;
                ryy += (gy * gy) as f64;
                rxt += (gx * gt) as f64;
                ryt += (gy * gt) as f64;
                self.sxx.data[out + x + 1] = self.sxx.data[above + x + 1] + rxx;
                self.sxy.data[out + x + 1] = self.sxy.data[above + x + 1] + rxy;
                self.syy.data[out + x + 1] = self.syy.data[above + x + 1] + ryy;
                self.sxt.data[out + x + 1] = self.sxt.data[above + x + 1] + rxt;
                self.syt.data[out + x + 1] = self.syt.data[above + x + 1] + ryt;
            }
        }
    }
}

pub fn lk_flow(prev: &Frame, curr: &Frame, params: &LkParams) -> Result<FlowField, FlowError> {
    check_dims(prev.dims(), curr.dims())?;
    let win = 2 * params.window_radius + 1;
    if (prev.width as usize) < win || (prev.height as usize) < win {
        return Err(FlowError::TooSmall {
            w: prev.width,
            h: prev.height,
            need: win,
        });
    }
    let stride = params.stride.max(1);

    // Build pyramids, stopping early if a level would get smaller than the
    // analysis window.
    let mut prev_pyr = vec![normalize_frame(prev)];
    let mut curr_pyr = vec![normalize_frame(curr)];
    while prev_pyr.len() < params.pyramid_levels.max(1) {
        let top = prev_pyr.last().unwrap();
        if top.width / 2 < win || top.height / 2 < win {
            break;
        }
        prev_pyr.push(downsample2x(top));
        curr_pyr.push(downsample2x(curr_pyr.last().unwrap()));
    }
    let prev_pyr: Vec<Plane> = prev_pyr.iter().map(smooth).collect();
    let curr_pyr: Vec<Plane> = curr_pyr.iter().map(smooth).collect();

    let mut u: Vec<f32> = Vec::new();
    let mut v: Vec<f32> = Vec::new();
    let mut valid: Vec<bool> = Vec::new();
    let r = params.window_radius;
    let window_area = (win * win) as f64;

    for level in (0..prev_pyr.len()).rev() {
        let pl = &prev_pyr[level];
        let cl = &curr_pyr[level];
        let (w, h) = (pl.width, pl.height);
        if level == prev_pyr.len() - 1 {
            u = vec![0.0; w * h];
            v = vec![0.0; w * h];
        } else {
            // Flow doubles when moving to the next finer level; bilinear
            // upsampling (pixel centers aligned) avoids blocky seams that
            // would corrupt the next warp.
            let (cw, ch) = (prev_pyr[level + 1].width, prev_pyr[level + 1].height);
            let mut nu = vec![0.0f32; w * h];
            let mut nv = vec![0.0f32; w * h];
            nu.par_chunks_mut(w)
                .zip(nv.par_chunks_mut(w))
                .enumerate()
                .for_each(|(y, (ru, rv))| {
                    let cy = (y as f32 + 0.5) * 0.5 - 0.5;
                    for x in 0..w {
                        let cx = (x as f32 + 0.5) * 0.5 - 0.5;
                        ru[x] = 2.0 * bilinear(&u, cw, ch, cx, cy);
                        rv[x] = 2.0 * bilinear(&v, cw, ch, cx, cy);
                    }
                });
            u = nu;
            v = nv;
        }
        let level_stride = if level == 0 { stride } else { 1 };
        if level == 0 {
            valid = vec![false; w * h];
        }
        let last_level = level == 0;
        let mut scratch_u = vec![0.0f32; w * h];
        let mut scratch_v = vec![0.0f32; w * h];
        // Iteration workspace, reused so the hot loop never allocates.
        let mut warped = Plane::new(w, h);
        let mut avg = vec![0.0f32; w * h];
        let mut ix = Plane::new(w, h);
        let mut iy = Plane::new(w, h);
        let mut it = Plane::new(w, h);
        let mut sums = LevelSums::new(w, h);

        for iter in 0..params.iterations_per_level.max(1) {
            // Warp curr by the current field, gradients from the average.
            warped
                .data
                .par_chunks_mut(w)
                .enumerate()
                .for_each(|(y, row)| {
                    for (x, o) in row.iter_mut().enumerate() {
                        let i = y * w + x;
                        *o = cl.sample(x as f32 + u[i], y as f32 + v[i]);
                    }
                });
            gradients_into(pl, &warped, &mut avg, &mut ix, &mut iy, &mut it);
            sums.build(&ix, &iy, &it);
            let check_validity = last_level && iter == params.iterations_per_level.max(1) - 1;
            let min_eig_floor = params.min_eigenvalue * window_area;

            let rows: Vec<(usize, &mut [f32], &mut [f32], &mut [bool])> = {
                let vchunks: Vec<&mut [bool]> = if last_level {
                    valid.chunks_mut(w).collect()
                } else {
                    Vec::new()
                };
                let mut out = Vec::new();
                let mut vit = vchunks.into_iter();
                for (y, (ru, rv)) in u.chunks_mut(w).zip(v.chunks_mut(w)).enumerate() {
                    let rb: &mut [bool] = if last_level {
                        vit.next().unwrap()
                    } else {
                        &mut []
                    };
                    out.push((y, ru, rv, rb));
                }
                out
            };
            rows.into_par_iter()
                .filter(|(y, ..)| y % level_stride == 0)
                .for_each(|(y, ru, rv, rb)| {
                    let ya = y.saturating_sub(r);
                    let yb = (y + r + 1).min(h);
                    let mut x = 0;
                    while x < w {
                        let xa = x.saturating_sub(r);
                        let xb = (x + r + 1).min(w);
                        let sxx = sums.sxx.rect(xa, ya, xb, yb);
                        let sxy = sums.sxy.rect(xa, ya, xb, yb);
                        let syy = sums.syy.rect(xa, ya, xb, yb);
                        let det = sxx * syy - sxy * sxy;
                        if det.abs() > 1e-12 {
                            let sxt = sums.sxt.rect(xa, ya, xb, yb);
                            let syt = sums.syt.rect(xa, ya, xb, yb);
                            // Near-singular windows can produce wild ratios;
                            // cap the per-iteration step at the window radius.
                            let cap = r as f64;
                            let du = ((sxy * syt - syy * sxt) / det).clamp(-cap, cap);
                            let dv = ((sxy * sxt - sxx * syt) / det).clamp(-cap, cap);
                            ru[x] += du as f32;
                            rv[x] += dv as f32;
                        }
                        if check_validity {
                            let trace = sxx + syy;
                            let d = sxx - syy;
                            let min_eig = 0.5 * (trace - (d * d + 4.0 * sxy * sxy).sqrt());
                            rb[x] = min_eig >= min_eig_floor;
                        }
                        x += level_stride;
                    }
                });
            median_pass(&u, w, h, level_stride, &mut scratch_u);
            median_pass(&v, w, h, level_stride, &mut scratch_v);
            std::mem::swap(&mut u, &mut scratch_u);
            std::mem::swap(&mut v, &mut scratch_v);
        }
        // Broadcast anchor results over their stride blocks.
        if last_level && level_stride > 1 {
            for y in 0..h {
                let ay = (y / level_stride) * level_stride;
                for x in 0..w {
                    let ax = (x / level_stride) * level_stride;
                    let (src, dst) = (ay * w + ax, y * w + x);
                    u[dst] = u[src];
                    v[dst] = v[src];
                    valid[dst] = valid[src];
                }
            }
        }
    }

    // Invalid pixels report exactly zero flow.
    for i in 0..u.len() {
        if !valid[i] {
            u[i] = 0.0;
            v[i] = 0.0;
        }
    }
    Ok(FlowField {
        width: prev.width,
        height: prev.height,
        u,
        v,
        valid,
    })
}
