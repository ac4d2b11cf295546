//! Motion-triggered video analysis engine.
//!
//! A frame stream is decoded, split into foreground evidence by an adaptive
//! per-pixel background mixture and dense pyramidal optical flow, fused into a
//! motion mask that drives hysteresis clip segmentation, blob detection,
//! Kalman/Hungarian multi-object tracking, and rule-based activity labels.
//! Everything downstream of decoding is deterministic for a given input,
//! configuration, and seed — independent of thread count.

pub mod activity;
pub mod background;
pub mod config;
pub mod detect;
pub mod eval;
pub mod exchange;
pub mod flow;
pub mod frame_io;
pub mod geom;
pub mod pipeline;
pub mod store;
pub mod synth;
pub mod track;
pub mod mask;
pub mod motionseg;

pub use frame_io::Frame;
pub use geom::BoundingBox;
pub use mask::{DimensionMismatch, Mask};
