//! INI-style configuration: `[section] key = value`, UTF-8, `#` comments.
//! Unknown sections and keys are rejected with line numbers, values are
//! range-checked, and every key is optional (defaults come from the param
//! structs). The same dialect describes synthetic scenes.

use crate::activity::ActivityParams;
use crate::background::GmmParams;
use crate::detect::DetectParams;
use crate::flow::LkParams;
use crate::motionseg::{FusionMode, SegmenterParams};
use crate::synth::{ObjectSpec, Occluder, SceneSpec};
use crate::track::TrackParams;
use std::collections::BTreeMap;
use std::fmt::Write as FmtWrite;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {what}")]
    Invalid { line: usize, what: String },
}

fn invalid(line: usize, what: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        line,
        what: what.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub frame_rate: f64,
    pub background: GmmParams,
    pub flow: LkParams,
    pub fusion: FusionMode,
    pub segmenter: SegmenterParams,
    pub detect: DetectParams,
    pub track: TrackParams,
    pub activity: ActivityParams,
    pub save_masks: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            frame_rate: 30.0,
            background: GmmParams::default(),
            flow: LkParams::default(),
            fusion: FusionMode::Union,
            segmenter: SegmenterParams::default(),
            detect: DetectParams::default(),
            track: TrackParams::default(),
            activity: ActivityParams::default(),
            save_masks: false,
        }
    }
}

enum Item<'a> {
    Section { line: usize, name: &'a str },
    Pair { line: usize, key: &'a str, value: &'a str },
}

fn scan(text: &str) -> Result<Vec<Item<'_>>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| invalid(line, "section header is missing `]`"))?
                .trim();
            if name.is_empty() {
                return Err(invalid(line, "empty section name"));
            }
            out.push(Item::Section { line, name });
        } else if let Some((key, value)) = body.split_once('=') {
            let key = key.trim();
            if key.is_empty() {
                return Err(invalid(line, "missing key before `=`"));
            }
            out.push(Item::Pair {
                line,
                key,
                value: value.trim(),
            });
        } else {
            return Err(invalid(
                line,
                format!("expected `[section]` or `key = value`, got `{body}`"),
            ));
        }
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse()
        .map_err(|_| invalid(line, format!("{key}: cannot parse `{value}`")))
}

fn check(cond: bool, line: usize, what: impl Into<String>) -> Result<(), ConfigError> {
    if cond {
        Ok(())
    } else {
        Err(invalid(line, what))
    }
}

pub fn parse_config(text: &str) -> Result<PipelineConfig, ConfigError> {
    const SECTIONS: [&str; 8] = [
        "input",
        "background",
        "flow",
        "segmenter",
        "detect",
        "track",
        "activity",
        "output",
    ];
    let mut cfg = PipelineConfig::default();
    let mut section: Option<&str> = None;
    // Lines of the keys that take part in cross-field checks, so those
    // errors can still point somewhere useful.
    let mut seen: BTreeMap<&'static str, usize> = BTreeMap::new();
    for item in scan(text)? {
        match item {
            Item::Section { line, name } => {
                check(
                    SECTIONS.contains(&name),
                    line,
                    format!("unknown section [{name}]"),
                )?;
                section = Some(name);
            }
            Item::Pair { line, key, value } => {
                let section =
                    section.ok_or_else(|| invalid(line, "key before any [section]"))?;
                apply(&mut cfg, section, key, value, line, &mut seen)?;
            }
        }
    }
    let at = |keys: [&str; 2]| {
        keys.iter()
            .filter_map(|k| seen.get(k))
            .copied()
            .max()
            .unwrap_or(0)
    };
    check(
        cfg.segmenter.t_off <= cfg.segmenter.t_on,
        at(["t_on", "t_off"]),
        "segmenter: t_off must not exceed t_on",
    )?;
    check(
        cfg.detect.aspect_min <= cfg.detect.aspect_max,
        at(["aspect_min", "aspect_max"]),
        "detect: aspect_min must not exceed aspect_max",
    )?;
    check(
        cfg.activity.walk_speed < cfg.activity.run_speed,
        at(["walk_speed", "run_speed"]),
        "activity: walk_speed must be below run_speed",
    )?;
    check(
        cfg.activity.loiter_window >= cfg.activity.window,
        at(["window", "loiter_window"]),
        "activity: loiter_window must be at least window",
    )?;
    check(
        cfg.background.variance_floor <= cfg.background.variance_init,
        at(["variance_floor", "variance_init"]),
        "background: variance_floor must not exceed variance_init",
    )?;
    Ok(cfg)
}

fn apply(
    cfg: &mut PipelineConfig,
    section: &str,
    key: &str,
    value: &str,
    line: usize,
    seen: &mut BTreeMap<&'static str, usize>,
) -> Result<(), ConfigError> {
    // The few keys involved in cross-field checks remember their line.
    for tracked in [
        "t_on",
        "t_off",
        "aspect_min",
        "aspect_max",
        "walk_speed",
        "run_speed",
        "window",
        "loiter_window",
        "variance_floor",
        "variance_init",
    ] {
        if key == tracked {
            seen.insert(tracked, line);
        }
    }
    let unit = |v: f64| (0.0..=1.0).contains(&v);
    match (section, key) {
        ("input", "frame_rate") => {
            let v: f64 = num(line, key, value)?;
            check(v.is_finite() && v > 0.0, line, "frame_rate must be positive")?;
            cfg.frame_rate = v;
        }
        ("background", "k") => {
            let v: usize = num(line, key, value)?;
            check((1..=8).contains(&v), line, "k must be in 1..=8")?;
            cfg.background.k = v;
        }
        ("background", "alpha") => {
            let v: f32 = num(line, key, value)?;
            check(v > 0.0 && v < 1.0, line, "alpha must be in (0, 1)")?;
            cfg.background.alpha = v;
        }
        ("background", "match_sigmas") => {
            let v: f32 = num(line, key, value)?;
            check(v > 0.0, line, "match_sigmas must be positive")?;
            cfg.background.match_sigmas = v;
        }
        ("background", "background_threshold") => {
            let v: f32 = num(line, key, value)?;
            check(
                v > 0.0 && v <= 1.0,
                line,
                "background_threshold must be in (0, 1]",
            )?;
            cfg.background.background_threshold = v;
        }
        ("background", "variance_init") => {
            let v: f32 = num(line, key, value)?;
            check(v > 0.0, line, "variance_init must be positive")?;
            cfg.background.variance_init = v;
        }
        ("background", "variance_floor") => {
            let v: f32 = num(line, key, value)?;
            check(v > 0.0, line, "variance_floor must be positive")?;
            cfg.background.variance_floor = v;
        }
        ("background", "weight_init") => {
            let v: f32 = num(line, key, value)?;
            check(v > 0.0 && v <= 1.0, line, "weight_init must be in (0, 1]")?;
            cfg.background.weight_init = v;
        }
        ("flow", "window_radius") => {
            let v: usize = num(line, key, value)?;
            check(v >= 1, line, "window_radius must be at least 1")?;
            cfg.flow.window_radius = v;
        }
        ("flow", "pyramid_levels") => {
            let v: usize = num(line, key, value)?;
            check(v >= 1, line, "pyramid_levels must be at least 1")?;
            cfg.flow.pyramid_levels = v;
        }
        ("flow", "iterations_per_level") => {
            let v: usize = num(line, key, value)?;
            check(v >= 1, line, "iterations_per_level must be at least 1")?;
            cfg.flow.iterations_per_level = v;
        }
        ("flow", "min_eigenvalue") => {
            let v: f64 = num(line, key, value)?;
            check(v > 0.0, line, "min_eigenvalue must be positive")?;
            cfg.flow.min_eigenvalue = v;
        }
        ("flow", "magnitude_threshold") => {
            let v: f64 = num(line, key, value)?;
            check(v >= 0.0, line, "magnitude_threshold must not be negative")?;
            cfg.flow.magnitude_threshold = v;
        }
        ("flow", "stride") => {
            let v: usize = num(line, key, value)?;
            check(v >= 1, line, "stride must be at least 1")?;
            cfg.flow.stride = v;
        }
        ("segmenter", "t_on") => {
            let v: f64 = num(line, key, value)?;
            check(v > 0.0 && v <= 1.0, line, "t_on must be in (0, 1]")?;
            cfg.segmenter.t_on = v;
        }
        ("segmenter", "t_off") => {
            let v: f64 = num(line, key, value)?;
            check(unit(v), line, "t_off must be in [0, 1]")?;
            cfg.segmenter.t_off = v;
        }
        ("segmenter", "n_on") => {
            let v: u32 = num(line, key, value)?;
            check(v >= 1, line, "n_on must be at least 1")?;
            cfg.segmenter.n_on = v;
        }
        ("segmenter", "n_off") => {
            let v: u32 = num(line, key, value)?;
            check(v >= 1, line, "n_off must be at least 1")?;
            cfg.segmenter.n_off = v;
        }
        ("segmenter", "pre_roll") => cfg.segmenter.pre_roll = num(line, key, value)?,
        ("segmenter", "post_roll") => cfg.segmenter.post_roll = num(line, key, value)?,
        ("segmenter", "fusion") => {
            cfg.fusion = match value {
                "union" => FusionMode::Union,
                "intersection" => FusionMode::Intersection,
                "bg_only" => FusionMode::BgOnly,
                "flow_only" => FusionMode::FlowOnly,
                other => {
                    return Err(invalid(
                        line,
                        format!(
                            "fusion must be union|intersection|bg_only|flow_only, got `{other}`"
                        ),
                    ))
                }
            };
        }
        ("detect", "levels") => {
            let v: usize = num(line, key, value)?;
            check(v >= 1, line, "levels must be at least 1")?;
            cfg.detect.levels = v;
        }
        ("detect", "iou_threshold") => {
            let v: f64 = num(line, key, value)?;
            check(unit(v), line, "iou_threshold must be in [0, 1]")?;
            cfg.detect.iou_threshold = v;
        }
        ("detect", "min_area") => {
            let v: usize = num(line, key, value)?;
            check(v >= 1, line, "min_area must be at least 1")?;
            cfg.detect.min_area = v;
        }
        ("detect", "aspect_min") => {
            let v: f64 = num(line, key, value)?;
            check(v > 0.0, line, "aspect_min must be positive")?;
            cfg.detect.aspect_min = v;
        }
        ("detect", "aspect_max") => {
            let v: f64 = num(line, key, value)?;
            check(v > 0.0, line, "aspect_max must be positive")?;
            cfg.detect.aspect_max = v;
        }
        ("detect", "max_area_fraction") => {
            let v: f64 = num(line, key, value)?;
            check(
                v > 0.0 && v <= 1.0,
                line,
                "max_area_fraction must be in (0, 1]",
            )?;
            cfg.detect.max_area_fraction = v;
        }
        ("detect", "border_band") => cfg.detect.border_band = num(line, key, value)?,
        ("track", "min_hits") => {
            let v: u32 = num(line, key, value)?;
            check(v >= 1, line, "min_hits must be at least 1")?;
            cfg.track.min_hits = v;
        }
        ("track", "max_age") => cfg.track.max_age = num(line, key, value)?,
        ("track", "lambda_iou") => {
            let v: f64 = num(line, key, value)?;
            check(unit(v), line, "lambda_iou must be in [0, 1]")?;
            cfg.track.lambda_iou = v;
        }
        ("track", "gate_iou") => {
            let v: f64 = num(line, key, value)?;
            check(unit(v), line, "gate_iou must be in [0, 1]")?;
            cfg.track.gate_iou = v;
        }
        ("track", "process_noise") => {
            let v: f64 = num(line, key, value)?;
            check(v > 0.0, line, "process_noise must be positive")?;
            cfg.track.process_noise = v;
        }
        ("track", "measurement_noise") => {
            let v: f64 = num(line, key, value)?;
            check(v > 0.0, line, "measurement_noise must be positive")?;
            cfg.track.measurement_noise = v;
        }
        ("activity", "window") => {
            let v: usize = num(line, key, value)?;
            check(v >= 2, line, "window must be at least 2")?;
            cfg.activity.window = v;
        }
        ("activity", "hop") => {
            let v: usize = num(line, key, value)?;
            check(v >= 1, line, "hop must be at least 1")?;
            cfg.activity.hop = v;
        }
        ("activity", "loiter_window") => {
            let v: usize = num(line, key, value)?;
            check(v >= 2, line, "loiter_window must be at least 2")?;
            cfg.activity.loiter_window = v;
        }
        ("activity", "border_band") => cfg.activity.border_band = num(line, key, value)?,
        ("activity", "run_speed") => {
            let v: f64 = num(line, key, value)?;
            check(v > 0.0, line, "run_speed must be positive")?;
            cfg.activity.run_speed = v;
        }
        ("activity", "walk_speed") => {
            let v: f64 = num(line, key, value)?;
            check(v > 0.0, line, "walk_speed must be positive")?;
            cfg.activity.walk_speed = v;
        }
        ("activity", "loiter_displacement") => {
            let v: f64 = num(line, key, value)?;
            check(v > 0.0, line, "loiter_displacement must be positive")?;
            cfg.activity.loiter_displacement = v;
        }
        ("output", "save_masks") => {
            cfg.save_masks = match value {
                "true" => true,
                "false" => false,
                other => {
                    return Err(invalid(
                        line,
                        format!("save_masks must be true or false, got `{other}`"),
                    ))
                }
            };
        }
        _ => {
            return Err(invalid(
                line,
                format!("unknown key `{key}` in [{section}]"),
            ))
        }
    }
    Ok(())
}

pub fn load_config(path: &Path) -> Result<PipelineConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

// ---- scene files -------------------------------------------------------

#[derive(Default)]
struct ObjBuild {
    line: usize,
    class: Option<String>,
    intensity: Option<u8>,
    w: Option<u32>,
    h: Option<u32>,
    trajectory: Option<Vec<(u32, (f64, f64))>>,
    visible: Option<(u32, u32)>,
}

#[derive(Default)]
struct OccBuild {
    line: usize,
    x: Option<i64>,
    y: Option<i64>,
    w: Option<u32>,
    h: Option<u32>,
    intensity: Option<u8>,
    active: Option<(u32, u32)>,
}

fn parse_range(line: usize, key: &str, value: &str) -> Result<(u32, u32), ConfigError> {
    let (a, b) = value
        .split_once("..")
        .ok_or_else(|| invalid(line, format!("{key}: expected `first..last`")))?;
    let a: u32 = num(line, key, a.trim())?;
    let b: u32 = num(line, key, b.trim())?;
    check(a <= b, line, format!("{key}: range is backwards"))?;
    Ok((a, b))
}

fn parse_trajectory(line: usize, value: &str) -> Result<Vec<(u32, (f64, f64))>, ConfigError> {
    let mut points = Vec::new();
    for part in value.split(';') {
        let part = part.trim();
        let (frame, xy) = part
            .split_once(':')
            .ok_or_else(|| invalid(line, format!("trajectory: expected `frame:x,y`, got `{part}`")))?;
        let (x, y) = xy
            .split_once(',')
            .ok_or_else(|| invalid(line, format!("trajectory: expected `frame:x,y`, got `{part}`")))?;
        let frame: u32 = num(line, "trajectory frame", frame.trim())?;
        let x: f64 = num(line, "trajectory x", x.trim())?;
        let y: f64 = num(line, "trajectory y", y.trim())?;
        if let Some((prev, _)) = points.last() {
            check(frame > *prev, line, "trajectory frames must be ascending")?;
        }
        points.push((frame, (x, y)));
    }
    check(!points.is_empty(), line, "trajectory needs a waypoint")?;
    Ok(points)
}

fn parse_waypoints(line: usize, value: &str) -> Result<Vec<(u32, f64)>, ConfigError> {
    let mut points = Vec::new();
    for part in value.split(',') {
        let part = part.trim();
        let (frame, gain) = part
            .split_once(':')
            .ok_or_else(|| invalid(line, format!("waypoints: expected `frame:gain`, got `{part}`")))?;
        let frame: u32 = num(line, "waypoint frame", frame.trim())?;
        let gain: f64 = num(line, "waypoint gain", gain.trim())?;
        check(gain.is_finite() && gain > 0.0, line, "gain must be positive")?;
        if let Some((prev, _)) = points.last() {
            check(frame > *prev, line, "waypoint frames must be ascending")?;
        }
        points.push((frame, gain));
    }
    Ok(points)
}

pub fn parse_scene(text: &str) -> Result<SceneSpec, ConfigError> {
    enum Target {
        Scene,
        Illumination,
        Object(u32),
        Occluder(u32),
    }
    let mut spec = SceneSpec {
        width: 0,
        height: 0,
        n_frames: 0,
        background_level: 60,
        noise_sigma: 0.0,
        seed: 0,
        illumination: Vec::new(),
        objects: Vec::new(),
        occluders: Vec::new(),
    };
    let (mut saw_w, mut saw_h, mut saw_n) = (false, false, false);
    let mut objects: BTreeMap<u32, ObjBuild> = BTreeMap::new();
    let mut occluders: BTreeMap<u32, OccBuild> = BTreeMap::new();
    let mut target: Option<Target> = None;
    for item in scan(text)? {
        match item {
            Item::Section { line, name } => {
                target = Some(match name {
                    "scene" => Target::Scene,
                    "illumination" => Target::Illumination,
                    _ => {
                        let (kind, index) = name
                            .split_once('.')
                            .ok_or_else(|| invalid(line, format!("unknown section [{name}]")))?;
                        let index: u32 = index.parse().map_err(|_| {
                            invalid(line, format!("[{name}]: index must be a number"))
                        })?;
                        match kind {
                            "object" => {
                                objects.entry(index).or_default().line = line;
                                Target::Object(index)
                            }
                            "occluder" => {
                                occluders.entry(index).or_default().line = line;
                                Target::Occluder(index)
                            }
                            _ => return Err(invalid(line, format!("unknown section [{name}]"))),
                        }
                    }
                });
            }
            Item::Pair { line, key, value } => {
                let target = target
                    .as_ref()
                    .ok_or_else(|| invalid(line, "key before any [section]"))?;
                match target {
                    Target::Scene => match key {
                        "width" => {
                            spec.width = num(line, key, value)?;
                            check(spec.width >= 1, line, "width must be positive")?;
                            saw_w = true;
                        }
                        "height" => {
                            spec.height = num(line, key, value)?;
                            check(spec.height >= 1, line, "height must be positive")?;
                            saw_h = true;
                        }
                        "frames" => {
                            spec.n_frames = num(line, key, value)?;
                            check(spec.n_frames >= 1, line, "frames must be positive")?;
                            saw_n = true;
                        }
                        "background" => spec.background_level = num(line, key, value)?,
                        "noise_sigma" => {
                            spec.noise_sigma = num(line, key, value)?;
                            check(
                                spec.noise_sigma >= 0.0,
                                line,
                                "noise_sigma must not be negative",
                            )?;
                        }
                        "seed" => spec.seed = num(line, key, value)?,
                        _ => {
                            return Err(invalid(line, format!("unknown key `{key}` in [scene]")))
                        }
                    },
                    Target::Illumination => match key {
                        "waypoints" => spec.illumination = parse_waypoints(line, value)?,
                        _ => {
                            return Err(invalid(
                                line,
                                format!("unknown key `{key}` in [illumination]"),
                            ))
                        }
                    },
                    Target::Object(index) => {
                        let build = objects.get_mut(index).unwrap();
                        match key {
                            "class" => {
                                check(!value.is_empty(), line, "class must not be empty")?;
                                build.class = Some(value.to_string());
                            }
                            "intensity" => build.intensity = Some(num(line, key, value)?),
                            "w" => build.w = Some(num(line, key, value)?),
                            "h" => build.h = Some(num(line, key, value)?),
                            "trajectory" => {
                                build.trajectory = Some(parse_trajectory(line, value)?)
                            }
                            "visible" => build.visible = Some(parse_range(line, key, value)?),
                            _ => {
                                return Err(invalid(
                                    line,
                                    format!("unknown key `{key}` in [object.{index}]"),
                                ))
                            }
                        }
                    }
                    Target::Occluder(index) => {
                        let build = occluders.get_mut(index).unwrap();
                        match key {
                            "x" => build.x = Some(num(line, key, value)?),
                            "y" => build.y = Some(num(line, key, value)?),
                            "w" => build.w = Some(num(line, key, value)?),
                            "h" => build.h = Some(num(line, key, value)?),
                            "intensity" => build.intensity = Some(num(line, key, value)?),
                            "active" => build.active = Some(parse_range(line, key, value)?),
                            _ => {
                                return Err(invalid(
                                    line,
                                    format!("unknown key `{key}` in [occluder.{index}]"),
                                ))
                            }
                        }
                    }
                }
            }
        }
    }
    check(saw_w && saw_h && saw_n, 0, "[scene] needs width, height and frames")?;
    let last = spec.n_frames - 1;
    for (index, b) in objects {
        let missing = |line: usize, what: &str| {
            invalid(line, format!("[object.{index}] is missing `{what}`"))
        };
        let visible = b.visible.unwrap_or((0, last));
        check(
            visible.1 <= last,
            b.line,
            format!("[object.{index}]: visible extends past the last frame"),
        )?;
        spec.objects.push(ObjectSpec {
            class_label: b.class.ok_or_else(|| missing(b.line, "class"))?,
            intensity: b.intensity.ok_or_else(|| missing(b.line, "intensity"))?,
            width: b.w.ok_or_else(|| missing(b.line, "w"))?,
            height: b.h.ok_or_else(|| missing(b.line, "h"))?,
            trajectory: b.trajectory.ok_or_else(|| missing(b.line, "trajectory"))?,
            visible,
        });
    }
    for (index, b) in occluders {
        let missing = |line: usize, what: &str| {
            invalid(line, format!("[occluder.{index}] is missing `{what}`"))
        };
        spec.occluders.push(Occluder {
            x: b.x.ok_or_else(|| missing(b.line, "x"))?,
            y: b.y.ok_or_else(|| missing(b.line, "y"))?,
            width: b.w.ok_or_else(|| missing(b.line, "w"))?,
            height: b.h.ok_or_else(|| missing(b.line, "h"))?,
            intensity: b.intensity.ok_or_else(|| missing(b.line, "intensity"))?,
            active: b.active.unwrap_or((0, last)),
        });
    }
    Ok(spec)
}

pub fn load_scene(path: &Path) -> Result<SceneSpec, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scene(&text)
}

/// Serialize a scene in the same dialect `parse_scene` reads.
pub fn scene_to_text(spec: &SceneSpec) -> String {
    let mut s = String::new();
    writeln!(s, "[scene]").unwrap();
    writeln!(s, "width = {}", spec.width).unwrap();
    writeln!(s, "height = {}", spec.height).unwrap();
    writeln!(s, "frames = {}", spec.n_frames).unwrap();
    writeln!(s, "background = {}", spec.background_level).unwrap();
    writeln!(s, "noise_sigma = {}", spec.noise_sigma).unwrap();
    writeln!(s, "seed = {}", spec.seed).unwrap();
    if !spec.illumination.is_empty() {
        writeln!(s, "\n[illumination]").unwrap();
        let points: Vec<String> = spec
            .illumination
            .iter()
            .map(|(f, g)| format!("{f}:{g}"))
            .collect();
        writeln!(s, "waypoints = {}", points.join(", ")).unwrap();
    }
    for (i, o) in spec.objects.iter().enumerate() {
        writeln!(s, "\n[object.{}]", i + 1).unwrap();
        writeln!(s, "class = {}", o.class_label).unwrap();
        writeln!(s, "intensity = {}", o.intensity).unwrap();
        writeln!(s, "w = {}", o.width).unwrap();
        writeln!(s, "h = {}", o.height).unwrap();
        let points: Vec<String> = o
            .trajectory
            .iter()
            .map(|(f, (x, y))| format!("{f}:{x},{y}"))
            .collect();
        writeln!(s, "trajectory = {}", points.join("; ")).unwrap();
        writeln!(s, "visible = {}..{}", o.visible.0, o.visible.1).unwrap();
    }
    for (i, o) in spec.occluders.iter().enumerate() {
        writeln!(s, "\n[occluder.{}]", i + 1).unwrap();
        writeln!(s, "x = {}", o.x).unwrap();
        writeln!(s, "y = {}", o.y).unwrap();
        writeln!(s, "w = {}", o.width).unwrap();
        writeln!(s, "h = {}", o.height).unwrap();
        writeln!(s, "intensity = {}", o.intensity).unwrap();
        writeln!(s, "active = {}..{}", o.active.0, o.active.1).unwrap();
    }
    s
}
