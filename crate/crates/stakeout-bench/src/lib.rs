//! Shared fixtures for the benchmarks: short synthetic clips rendered once
//! per process so every bench measures the same data.

use stakeout_core::frame_io::Frame;
use stakeout_core::synth::{preset, render_scene};

/// The first `n` frames of the `single_walker` preset (320x240, one moving
/// person over sensor noise).
pub fn walker_frames(n: u32) -> Vec<Frame> {
    let mut spec = preset("single_walker").expect("preset exists");
    spec.n_frames = spec.n_frames.min(n);
    render_scene(&spec)
}
