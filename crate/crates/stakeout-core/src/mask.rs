//! Binary raster masks produced by the background model and the flow stage.

use thiserror::Error;

/// Two rasters were combined but their dimensions disagree.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("dimension mismatch: expected {expected_w}x{expected_h}, got {got_w}x{got_h}")]
pub struct DimensionMismatch {
    pub expected_w: u32,
    pub expected_h: u32,
    pub got_w: u32,
    pub got_h: u32,
}

pub(crate) fn check_dims(
    (ew, eh): (u32, u32),
    (gw, gh): (u32, u32),
) -> Result<(), DimensionMismatch> {
    if (ew, eh) == (gw, gh) {
        Ok(())
    } else {
        Err(DimensionMismatch {
            expected_w: ew,
            expected_h: eh,
            got_w: gw,
            got_h: gh,
        })
    }
}

/// Row-major binary mask; `true` = foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), width as usize * height as usize);
        Self {
            width,
            height,
            bits,
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = v;
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count_set(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Set every pixel covered by the clipped integer rectangle.
    pub fn paint_rect(&mut self, x0: i64, y0: i64, w: i64, h: i64) {
        let xa = x0.max(0) as usize;
        let ya = y0.max(0) as usize;
        let xb = (x0 + w).clamp(0, self.width as i64) as usize;
        let yb = (y0 + h).clamp(0, self.height as i64) as usize;
        for y in ya..yb {
            let row = y * self.width as usize;
            self.bits[row + xa..row + xb].fill(true);
        }
    }
}
