//! End-to-end tests of the `stakeout` binary: exit codes, output files,
//! and agreement between `search` and the library query.

use stakeout_core::exchange::{format_records, Record};
use stakeout_core::geom::BoundingBox;
use stakeout_core::store::{EventKind, EventRecord, EventWriter, QueryFilter};
use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use tempfile::TempDir;

fn stakeout(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stakeout"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SMALL_SCENE: &str = "\
[scene]
width = 96
height = 72
frames = 80
background = 60
noise_sigma = 1
seed = 5

[object.1]
class = person
intensity = 210
w = 10
h = 20
trajectory = 10:8,36; 70:88,36
visible = 10..70
";

fn synth_small(dir: &Path) {
    let scene = dir.join("scene.cfg");
    fs::write(&scene, SMALL_SCENE).unwrap();
    let out = stakeout(&[
        "synth",
        "--scene",
        scene.to_str().unwrap(),
        "--out",
        dir.join("frames").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let out = stakeout(&[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("Usage"));

    let out = stakeout(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("synth"));

    let out = stakeout(&["process", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));

    // synth needs exactly one scene source.
    let out = stakeout(&["synth", "--out", "x"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn data_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let out = stakeout(&[
        "process",
        "--input",
        dir.path().join("nowhere").to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));

    let bad_cfg = dir.path().join("bad.cfg");
    fs::write(&bad_cfg, "[flow]\nstride = fast\n").unwrap();
    synth_small(dir.path());
    let out = stakeout(&[
        "process",
        "--input",
        dir.path().join("frames").to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
        "--config",
        bad_cfg.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));

    let out = stakeout(&["synth", "--preset", "no_such_preset", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_writes_frames_ground_truth_and_sidecars() {
    let dir = TempDir::new().unwrap();
    synth_small(dir.path());
    let frames = dir.path().join("frames");
    assert!(frames.join("frame_000000.pgm").exists());
    assert!(frames.join("frame_000079.pgm").exists());
    let gt = fs::read_to_string(frames.join("gt.txt")).unwrap();
    assert!(gt.lines().count() > 50, "one line per visible frame");
    assert!(gt.lines().all(|l| l.contains("person")));
    let intervals = fs::read_to_string(frames.join("activity.txt")).unwrap();
    assert_eq!(intervals.trim(), "10..70");
    assert!(frames.join("scene.cfg").exists());
}

#[test]
fn process_is_reproducible_and_search_matches_the_library_query() {
    let dir = TempDir::new().unwrap();
    synth_small(dir.path());
    let frames = dir.path().join("frames");

    let mut bytes = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let out = stakeout(&[
            "process",
            "--input",
            frames.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        assert!(stdout(&out).contains("frames=80"));
        bytes.push(fs::read(out_dir.join("events.jsonl")).unwrap());
    }
    assert_eq!(bytes[0], bytes[1], "re-run must be byte-identical");
    assert!(!bytes[0].is_empty(), "the walker must produce events");

    let index = dir.path().join("a").join("events.jsonl");
    let out = stakeout(&[
        "search",
        "--index",
        index.to_str().unwrap(),
        "--kind",
        "track",
        "--class",
        "object",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let printed: Vec<EventRecord> = stdout(&out)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let expected = stakeout_core::store::query(
        &index,
        &QueryFilter {
            kind: Some(EventKind::Track),
            class_label: Some("object".into()),
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(printed, expected);
    assert!(!printed.is_empty());
}

#[test]
fn search_rejects_mixed_time_and_frame_ranges() {
    let dir = TempDir::new().unwrap();
    let index = dir.path().join("events.jsonl");
    let mut w = EventWriter::open(&index).unwrap();
    w.append(&EventRecord {
        kind: EventKind::Clip,
        clip_id: 1,
        track_id: -1,
        frame_start: 0,
        frame_end: 10,
        t_start_ms: 0,
        t_end_ms: 333,
        class_label: String::new(),
        activity_label: String::new(),
        bbox_first: BoundingBox::new(0.0, 0.0, 0.0, 0.0),
        bbox_last: BoundingBox::new(0.0, 0.0, 0.0, 0.0),
        source: "t".into(),
    })
    .unwrap();
    drop(w);
    let out = stakeout(&[
        "search",
        "--index",
        index.to_str().unwrap(),
        "--from",
        "0",
        "--frame-to",
        "5",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("not both"), "{}", stderr(&out));

    // Time-only range works and uses interval overlap.
    let out = stakeout(&[
        "search",
        "--index",
        index.to_str().unwrap(),
        "--from",
        "300",
        "--to",
        "400",
    ]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).lines().count(), 1);
}

#[test]
fn eval_prints_detection_and_tracking_reports() {
    let dir = TempDir::new().unwrap();
    let b = |x: f64| BoundingBox::new(x, 10.0, 10.0, 10.0);
    let gt: Vec<Record> = (0..10)
        .map(|f| Record {
            frame: f,
            id: 1,
            bbox: b(10.0 + f as f64),
            score: 1.0,
            class_label: "person".into(),
        })
        .collect();
    let mut pred = gt.clone();
    for r in &mut pred {
        r.id = 7;
    }
    pred.truncate(9); // one miss
    let gt_path = dir.path().join("gt.txt");
    let pred_path = dir.path().join("pred.txt");
    fs::write(&gt_path, format_records(&gt)).unwrap();
    fs::write(&pred_path, format_records(&pred)).unwrap();

    let report = dir.path().join("det.json");
    let out = stakeout(&[
        "eval",
        "--gt",
        gt_path.to_str().unwrap(),
        "--pred",
        pred_path.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("tp=9"));
    assert!(text.contains("fn=1"));
    assert!(text.contains("precision=1.0000"));
    assert!(text.contains("recall=0.9000"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["tp"], 9);
    assert_eq!(json["fn"], 1);

    let out = stakeout(&[
        "eval",
        "--mode",
        "track",
        "--gt",
        gt_path.to_str().unwrap(),
        "--pred",
        pred_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("id_switches=0"));
    assert!(text.contains("mota=0.9000"));
}

#[test]
fn bench_reports_stage_times() {
    let dir = TempDir::new().unwrap();
    synth_small(dir.path());
    let report = dir.path().join("bench.json");
    let out = stakeout(&[
        "bench",
        "--input",
        dir.path().join("frames").to_str().unwrap(),
        "--threads",
        "1",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    for key in [
        "frames=80",
        "threads=1",
        "background_ms=",
        "flow_ms=",
        "motionseg_ms=",
        "detect_ms=",
        "track_ms=",
        "activity_ms=",
        "store_ms=",
        "total_ms=",
        "fps=",
    ] {
        assert!(text.contains(key), "missing {key} in:\n{text}");
    }
    assert!(report.exists());
}
