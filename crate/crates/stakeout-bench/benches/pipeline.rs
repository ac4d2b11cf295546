//! Whole-pipeline benchmark: one frame through every stage in processing
//! order (background, flow, fusion, cleanup, detection, tracking), holding
//! model state across iterations the way the real loop does.

use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use stakeout_bench::walker_frames;
use stakeout_core::background::{GmmModel, GmmParams};
use stakeout_core::detect::{contextual_filter, detect_multiscale, DetectParams};
use stakeout_core::flow::{flow_mask, lk_flow, LkParams};
use stakeout_core::motionseg::{activity_score, fuse_masks, morph_clean, FusionMode};
use stakeout_core::track::{TrackParams, Tracker};

fn bench_pipeline(c: &mut Criterion) {
    let frames = walker_frames(60);
    let (w, h) = (frames[0].width, frames[0].height);
    let dp = DetectParams::default();

    let mut group = c.benchmark_group("pipeline");
    group.throughput(Throughput::Elements(1));
    for stride in [1usize, 2] {
        let lk = LkParams {
            stride,
            ..LkParams::default()
        };
        group.bench_function(format!("per_frame_stride{stride}"), |b| {
            let mut gmm = GmmModel::new(w, h, GmmParams::default());
            let mut tracker = Tracker::new(TrackParams::default());
            for (t, f) in frames.iter().enumerate() {
                gmm.apply(f).expect("dims fixed");
                if t > 0 {
                    tracker.step(t as u64, &[], f).expect("dims fixed");
                }
            }
            let mut t = frames.len() as u64;
            b.iter(|| {
                let i = (t as usize) % (frames.len() - 1);
                let (prev, curr) = (&frames[i], &frames[i + 1]);
                let bg = gmm.apply(curr).expect("dims fixed");
                let fl = flow_mask(
                    &lk_flow(prev, curr, &lk).expect("large enough"),
                    lk.magnitude_threshold,
                );
                let fused = morph_clean(&fuse_masks(&bg, &fl, FusionMode::Union).expect("dims"));
                let score = activity_score(&fused);
                let dets = contextual_filter(detect_multiscale(&fused, &dp), w, h, &dp);
                let out = tracker.step(t, &dets, curr).expect("dims fixed");
                t += 1;
                (score, out)
            });
        });
    }
    group.finish();
}

criterion_group!(benches, bench_pipeline);
criterion_main!(benches);
