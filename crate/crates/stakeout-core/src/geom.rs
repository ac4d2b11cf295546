//! Axis-aligned boxes and the geometric predicates shared by detection,
//! tracking, activity rules, and evaluation.

use serde::{Deserialize, Serialize};

/// Axis-aligned box in pixel coordinates: `(x, y)` is the top-left corner.
///
/// Coordinates are `f64` because boxes flow through the Kalman filter; blob
/// boxes are integer-valued.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let ix = (self.x + self.w).min(other.x + other.w) - self.x.max(other.x);
        let iy = (self.y + self.h).min(other.y + other.h) - self.y.max(other.y);
        ix.max(0.0) * iy.max(0.0)
    }

    /// Intersection over union; 0 when both boxes are degenerate.
    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// True when the box reaches into the `band`-pixel frame margin (or pokes
    /// outside the frame entirely).
    pub fn touches_border_band(&self, frame_w: u32, frame_h: u32, band: u32) -> bool {
        let band = band as f64;
        self.x < band
            || self.y < band
            || self.x + self.w > frame_w as f64 - band
            || self.y + self.h > frame_h as f64 - band
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_identical_boxes_is_one() {
        let b = BoundingBox::new(3.0, 4.0, 10.0, 20.0);
        assert_eq!(b.iou(&b), 1.0);
    }

    #[test]
    fn iou_disjoint_boxes_is_zero() {
        let a = BoundingBox::new(0.0, 0.0, 5.0, 5.0);
        let b = BoundingBox::new(10.0, 10.0, 5.0, 5.0);
        assert_eq!(a.iou(&b), 0.0);
    }

    #[test]
    fn iou_half_overlap() {
        // Two 10x10 boxes offset by 5 in x: inter 50, union 150.
        let a = BoundingBox::new(0.0, 0.0, 10.0, 10.0);
        let b = BoundingBox::new(5.0, 0.0, 10.0, 10.0);
        let got = a.iou(&b);
        assert!((got - 1.0 / 3.0).abs() < 1e-12, "iou {got}");
        assert_eq!(a.iou(&b), b.iou(&a));
    }

    #[test]
    fn degenerate_boxes_do_not_blow_up() {
        let a = BoundingBox::new(0.0, 0.0, 0.0, 0.0);
        assert_eq!(a.iou(&a), 0.0);
        assert_eq!(a.area(), 0.0);
    }

    #[test]
    fn border_band_contact() {
        let inside = BoundingBox::new(50.0, 50.0, 10.0, 10.0);
        assert!(!inside.touches_border_band(320, 240, 8));
        let left = BoundingBox::new(3.0, 50.0, 10.0, 10.0);
        assert!(left.touches_border_band(320, 240, 8));
        let bottom = BoundingBox::new(50.0, 225.0, 10.0, 10.0);
        assert!(bottom.touches_border_band(320, 240, 8));
        let outside = BoundingBox::new(-4.0, 100.0, 10.0, 10.0);
        assert!(outside.touches_border_band(320, 240, 8));
    }
}
