//! Clip persistence and the searchable event index.
//!
//! Events live in an append-only UTF-8 JSON-lines file (one object per
//! line, LF-terminated, flushed per write); clips are directories of
//! zero-padded PGM frames described by a `manifest.json` with per-file
//! CRC-32 checksums. Search is a full scan — desk-scale data volumes make
//! anything fancier a liability.

use crate::frame_io::pgm::write_pgm;
use crate::frame_io::Frame;
use crate::geom::BoundingBox;
use serde::{Deserialize, Serialize};
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write as IoWrite};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Clip,
    Track,
    Activity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub kind: EventKind,
    pub clip_id: i64,
    /// −1 for clip records.
    pub track_id: i64,
    pub frame_start: u64,
    pub frame_end: u64,
    pub t_start_ms: u64,
    pub t_end_ms: u64,
    pub class_label: String,
    /// Empty for non-activity records.
    pub activity_label: String,
    pub bbox_first: BoundingBox,
    pub bbox_last: BoundingBox,
    pub source: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryFilter {
    pub time_range_ms: Option<(u64, u64)>,
    pub frame_range: Option<(u64, u64)>,
    pub class_label: Option<String>,
    pub activity_label: Option<String>,
    pub kind: Option<EventKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub crc32: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipManifest {
    pub clip_id: u64,
    pub frame_start: u64,
    pub frame_end: u64,
    pub files: Vec<ManifestEntry>,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {what}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        what: String,
    },
    #[error("a filter may use a time range or a frame range, not both")]
    ConflictingRanges,
    #[error("clip frames must be non-empty with consecutive indices")]
    BadClipFrames,
    #[error("{file}: checksum mismatch (manifest {expected:#010x}, on disk {actual:#010x})")]
    ChecksumMismatch {
        file: String,
        expected: u32,
        actual: u32,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// CRC-32 (IEEE 802.3, reflected 0xEDB88320), the variant zip/png use.
pub fn crc32(bytes: &[u8]) -> u32 {
    static TABLE: std::sync::OnceLock<[u32; 256]> = std::sync::OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = [0u32; 256];
        for (i, slot) in t.iter_mut().enumerate() {
            let mut c = i as u32;
            for _ in 0..8 {
                c = if c & 1 != 0 { 0xEDB88320 ^ (c >> 1) } else { c >> 1 };
            }
            *slot = c;
        }
        t
    });
    let mut c = 0xFFFFFFFFu32;
    for &b in bytes {
        c = table[((c ^ b as u32) & 0xFF) as usize] ^ (c >> 8);
    }
    !c
}

/// Write `frames` (global frame index, image) under
/// `out_dir/clip_<id>/frame_<NNNNNN>.pgm` and describe them in
/// `manifest.json`. Indices must be consecutive.
pub fn write_clip(
    frames: &[(u64, Frame)],
    clip_id: u64,
    out_dir: &Path,
) -> Result<ClipManifest, StoreError> {
    if frames.is_empty()
        || frames
            .windows(2)
            .any(|pair| pair[1].0 != pair[0].0 + 1)
    {
        return Err(StoreError::BadClipFrames);
    }
    let dir = out_dir.join(format!("clip_{clip_id}"));
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut files = Vec::with_capacity(frames.len());
    for (index, frame) in frames {
        let name = format!("frame_{index:06}.pgm");
        let bytes = write_pgm(frame);
        let path = dir.join(&name);
        fs::write(&path, &bytes).map_err(io_err(&path))?;
        files.push(ManifestEntry {
            name,
            crc32: crc32(&bytes),
        });
    }
    let manifest = ClipManifest {
        clip_id,
        frame_start: frames[0].0,
        frame_end: frames[frames.len() - 1].0,
        files,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json.as_bytes()).map_err(io_err(&path))?;
    Ok(manifest)
}

pub fn read_manifest(clip_dir: &Path) -> Result<ClipManifest, StoreError> {
    let path = clip_dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| StoreError::MalformedLine {
        path: path.clone(),
        line: e.line(),
        what: e.to_string(),
    })
}

/// Recompute every file's CRC-32 against the manifest.
pub fn verify_clip(clip_dir: &Path) -> Result<ClipManifest, StoreError> {
    let manifest = read_manifest(clip_dir)?;
    for entry in &manifest.files {
        let path = clip_dir.join(&entry.name);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let actual = crc32(&bytes);
        if actual != entry.crc32 {
            return Err(StoreError::ChecksumMismatch {
                file: entry.name.clone(),
                expected: entry.crc32,
                actual,
            });
        }
    }
    Ok(manifest)
}

/// The single writer an index file gets: append-only, one JSON object per
/// line, flushed after every record so readers see whole lines.
pub struct EventWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl EventWriter {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent).map_err(io_err(parent))?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn append(&mut self, record: &EventRecord) -> Result<(), StoreError> {
        let line = serde_json::to_string(record).expect("record serializes");
        self.out
            .write_all(line.as_bytes())
            .and_then(|_| self.out.write_all(b"\n"))
            .and_then(|_| self.out.flush())
            .map_err(io_err(&self.path))
    }
}

pub fn append_event(index_path: &Path, record: &EventRecord) -> Result<(), StoreError> {
    EventWriter::open(index_path)?.append(record)
}

fn overlaps(a: u64, b: u64, c: u64, d: u64) -> bool {
    a <= d && c <= b
}

impl QueryFilter {
    pub fn matches(&self, r: &EventRecord) -> bool {
        if let Some((from, to)) = self.time_range_ms {
            if !overlaps(r.t_start_ms, r.t_end_ms, from, to) {
                return false;
            }
        }
        if let Some((from, to)) = self.frame_range {
            if !overlaps(r.frame_start, r.frame_end, from, to) {
                return false;
            }
        }
        if let Some(class) = &self.class_label {
            if &r.class_label != class {
                return false;
            }
        }
        if let Some(activity) = &self.activity_label {
            if &r.activity_label != activity {
                return false;
            }
        }
        if let Some(kind) = self.kind {
            if r.kind != kind {
                return false;
            }
        }
        true
    }
}

pub fn scan_index(index_path: &Path) -> Result<Vec<EventRecord>, StoreError> {
    let text = fs::read_to_string(index_path).map_err(io_err(index_path))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: EventRecord =
            serde_json::from_str(line).map_err(|e| StoreError::MalformedLine {
                path: index_path.to_path_buf(),
                line: i + 1,
                what: e.to_string(),
            })?;
        records.push(record);
    }
    Ok(records)
}

/// Full-scan search: a record matches when every present filter field
/// matches; ranges use interval overlap. Results sorted by
/// (t_start_ms, clip_id, track_id).
pub fn query(index_path: &Path, filter: &QueryFilter) -> Result<Vec<EventRecord>, StoreError> {
    if filter.time_range_ms.is_some() && filter.frame_range.is_some() {
        return Err(StoreError::ConflictingRanges);
    }
    let mut hits: Vec<EventRecord> = scan_index(index_path)?
        .into_iter()
        .filter(|r| filter.matches(r))
        .collect();
    hits.sort_by_key(|r| (r.t_start_ms, r.clip_id, r.track_id));
    Ok(hits)
}
