//! `stakeout` — motion-triggered video analysis from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/format error.

use anyhow::{bail, Context, Result};
use clap::{ArgGroup, Parser, Subcommand, ValueEnum};
use stakeout_core::config::{load_config, load_scene, scene_to_text, PipelineConfig};
use stakeout_core::eval::{det_metrics, track_metrics};
use stakeout_core::exchange::{read_records, write_records, Record};
use stakeout_core::frame_io::pgm::write_pgm;
use stakeout_core::pipeline::{self, ProcessOptions};
use stakeout_core::store::{query, EventKind, QueryFilter};
use stakeout_core::synth::{ground_truth, preset, render_scene};
use std::fmt::Write as FmtWrite;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "stakeout",
    version,
    about = "Motion-triggered video analysis: clip segmentation, object tracking, activity labels, searchable events"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Clip,
    Track,
    Activity,
}

impl From<KindArg> for EventKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Clip => EventKind::Clip,
            KindArg::Track => EventKind::Track,
            KindArg::Activity => EventKind::Activity,
        }
    }
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum EvalMode {
    #[default]
    Det,
    Track,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render a synthetic scene: PGM frames, ground-truth boxes
    /// (exchange format), activity intervals, and the scene file itself.
    #[command(group = ArgGroup::new("source").required(true).args(["preset", "scene"]))]
    Synth {
        /// Built-in scene: quiet, single_walker, three_objects,
        /// occlusion_crossing, illumination_ramp
        #[arg(long)]
        preset: Option<String>,
        /// Scene description file (same dialect as the pipeline config)
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Override the scene's noise seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the full pipeline over a PGM directory or .y4m file.
    Process {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// INI-style config; defaults apply when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// External detections (exchange format) merged in as authoritative
        #[arg(long)]
        detections: Option<PathBuf>,
        /// Write the cleaned motion mask per frame under masks/
        #[arg(long)]
        save_masks: bool,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Accepted for interface compatibility; processing is fully
        /// deterministic and does not consume randomness
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Query an event index; matching records print as JSON lines.
    Search {
        #[arg(long)]
        index: PathBuf,
        /// Time range start, milliseconds (interval overlap)
        #[arg(long)]
        from: Option<u64>,
        /// Time range end, milliseconds
        #[arg(long)]
        to: Option<u64>,
        /// Frame range start (cannot be combined with --from/--to)
        #[arg(long)]
        frame_from: Option<u64>,
        /// Frame range end
        #[arg(long)]
        frame_to: Option<u64>,
        /// Exact class label
        #[arg(long)]
        class: Option<String>,
        /// Exact activity label
        #[arg(long)]
        activity: Option<String>,
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
    },
    /// Score predictions against ground truth (exchange-format files).
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
        #[arg(long, value_enum, default_value_t)]
        mode: EvalMode,
        /// Also write the metrics as JSON
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Time the pipeline and print a per-stage report.
    Bench {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Keep pipeline outputs here (defaults to a scratch dir)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the report as JSON
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(2);
    }
}

fn load_cfg(path: Option<&PathBuf>) -> Result<PipelineConfig> {
    match path {
        Some(p) => load_config(p).with_context(|| format!("config {}", p.display())),
        None => Ok(PipelineConfig::default()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Synth {
            preset: preset_name,
            scene,
            out,
            seed,
        } => {
            let mut spec = match (&preset_name, &scene) {
                (Some(name), None) => preset(name).with_context(|| {
                    format!(
                        "unknown preset `{name}` (quiet, single_walker, three_objects, \
                         occlusion_crossing, illumination_ramp)"
                    )
                })?,
                (None, Some(path)) => {
                    load_scene(path).with_context(|| format!("scene {}", path.display()))?
                }
                _ => unreachable!("clap enforces exactly one source"),
            };
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            fs::create_dir_all(&out)
                .with_context(|| format!("creating {}", out.display()))?;
            let frames = render_scene(&spec);
            for frame in &frames {
                let path = out.join(format!("frame_{:06}.pgm", frame.index));
                fs::write(&path, write_pgm(frame))
                    .with_context(|| path.display().to_string())?;
            }
            let gt = ground_truth(&spec);
            let mut records = Vec::new();
            for (t, objects) in gt.per_frame.iter().enumerate() {
                for o in objects {
                    records.push(Record {
                        frame: t as u64,
                        id: o.object_id as i64,
                        bbox: o.bbox,
                        score: 1.0,
                        class_label: o.class_label.clone(),
                    });
                }
            }
            write_records(&out.join("gt.txt"), &records)?;
            let mut intervals = String::new();
            for (a, b) in &gt.activity_intervals {
                writeln!(intervals, "{a}..{b}").unwrap();
            }
            fs::write(out.join("activity.txt"), intervals)?;
            fs::write(out.join("scene.cfg"), scene_to_text(&spec))?;
            println!("frames={}", frames.len());
            println!("objects={}", spec.objects.len());
            println!("out={}", out.display());
        }
        Cmd::Process {
            input,
            out,
            config,
            detections,
            save_masks,
            threads,
            seed: _,
        } => {
            let cfg = load_cfg(config.as_ref())?;
            let external = detections
                .as_ref()
                .map(|p| read_records(p))
                .transpose()?;
            let opts = ProcessOptions {
                threads,
                save_masks,
                external,
            };
            let result = pipeline::process(&input, &out, &cfg, &opts)?;
            println!("frames={}", result.frames);
            println!("clips={}", result.manifests.len());
            println!("fps={:.2}", result.bench.fps());
        }
        Cmd::Search {
            index,
            from,
            to,
            frame_from,
            frame_to,
            class,
            activity,
            kind,
        } => {
            let filter = QueryFilter {
                time_range_ms: (from.is_some() || to.is_some())
                    .then(|| (from.unwrap_or(0), to.unwrap_or(u64::MAX))),
                frame_range: (frame_from.is_some() || frame_to.is_some())
                    .then(|| (frame_from.unwrap_or(0), frame_to.unwrap_or(u64::MAX))),
                class_label: class,
                activity_label: activity,
                kind: kind.map(Into::into),
            };
            let stdout = io::stdout();
            let mut out = stdout.lock();
            for record in query(&index, &filter)? {
                // A closed pipe (e.g. `stakeout search ... | head`) ends the
                // listing cleanly instead of surfacing an I/O error.
                match writeln!(out, "{}", serde_json::to_string(&record)?) {
                    Err(e) if e.kind() == io::ErrorKind::BrokenPipe => return Ok(()),
                    other => other?,
                }
            }
        }
        Cmd::Eval {
            gt,
            pred,
            iou,
            mode,
            report,
        } => {
            if !(0.0..=1.0).contains(&iou) {
                bail!("--iou must be in [0, 1]");
            }
            let gt = read_records(&gt)?;
            let pred = read_records(&pred)?;
            let json = match mode {
                EvalMode::Det => {
                    let m = det_metrics(&gt, &pred, iou);
                    println!("tp={}", m.tp);
                    println!("fp={}", m.fp);
                    println!("fn={}", m.fn_);
                    println!("precision={:.4}", m.precision);
                    println!("recall={:.4}", m.recall);
                    println!("f1={:.4}", m.f1);
                    serde_json::to_string_pretty(&m)?
                }
                EvalMode::Track => {
                    let m = track_metrics(&gt, &pred, iou);
                    println!("tp={}", m.det.tp);
                    println!("fp={}", m.det.fp);
                    println!("fn={}", m.det.fn_);
                    println!("id_switches={}", m.id_switches);
                    println!("mostly_tracked={:.4}", m.mostly_tracked_fraction);
                    println!("mota={:.4}", m.mota);
                    println!("f1={:.4}", m.f1);
                    serde_json::to_string_pretty(&m)?
                }
            };
            if let Some(path) = report {
                fs::write(&path, json).with_context(|| path.display().to_string())?;
            }
        }
        Cmd::Bench {
            input,
            config,
            threads,
            out,
            report,
        } => {
            let cfg = load_cfg(config.as_ref())?;
            let keep = out.is_some();
            let out_dir = out.unwrap_or_else(|| {
                std::env::temp_dir().join(format!("stakeout-bench-{}", std::process::id()))
            });
            let opts = ProcessOptions {
                threads,
                ..Default::default()
            };
            let result = pipeline::process(&input, &out_dir, &cfg, &opts)?;
            print!("{}", result.bench.render());
            if let Some(path) = report {
                fs::write(&path, serde_json::to_string_pretty(&result.bench)?)
                    .with_context(|| path.display().to_string())?;
            }
            if !keep {
                let _ = fs::remove_dir_all(&out_dir);
            }
        }
    }
    Ok(())
}
