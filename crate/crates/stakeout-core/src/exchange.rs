//! Plain-text exchange format for detections, tracks, and ground truth.
//!
//! One record per line, LF-terminated:
//!
//! ```text
//! frame,id,x,y,w,h,score,class
//! ```
//!
//! `id` is `-1` for raw detections and a non-negative track id for tracker
//! output and ground truth. Files are written sorted by frame (stable within
//! a frame); readers accept any order.

use crate::geom::BoundingBox;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub frame: u64,
    pub id: i64,
    pub bbox: BoundingBox,
    pub score: f64,
    pub class_label: String,
}

#[derive(Debug, Error)]
pub enum ExchangeError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {what}")]
    Malformed { line: usize, what: String },
}

fn bad(line: usize, what: impl Into<String>) -> ExchangeError {
    ExchangeError::Malformed {
        line,
        what: what.into(),
    }
}

pub fn parse_records(text: &str) -> Result<Vec<Record>, ExchangeError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 8 {
            return Err(bad(line, format!("expected 8 fields, got {}", fields.len())));
        }
        let frame: u64 = fields[0]
            .trim()
            .parse()
            .map_err(|_| bad(line, format!("bad frame {:?}", fields[0])))?;
        let id: i64 = fields[1]
            .trim()
            .parse()
            .map_err(|_| bad(line, format!("bad id {:?}", fields[1])))?;
        let mut nums = [0.0f64; 5];
        for (k, f) in fields[2..7].iter().enumerate() {
            nums[k] = f
                .trim()
                .parse()
                .map_err(|_| bad(line, format!("bad number {f:?}")))?;
            if !nums[k].is_finite() {
                return Err(bad(line, format!("non-finite number {f:?}")));
            }
        }
        let [x, y, w, h, score] = nums;
        if w < 0.0 || h < 0.0 {
            return Err(bad(line, format!("negative box size {w}x{h}")));
        }
        let class_label = fields[7].trim().to_string();
        if class_label.is_empty() {
            return Err(bad(line, "empty class label"));
        }
        out.push(Record {
            frame,
            id,
            bbox: BoundingBox::new(x, y, w, h),
            score,
            class_label,
        });
    }
    Ok(out)
}

pub fn read_records(path: &Path) -> Result<Vec<Record>, ExchangeError> {
    let text = std::fs::read_to_string(path).map_err(|source| ExchangeError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_records(&text)
}

pub fn format_records(records: &[Record]) -> String {
    let mut sorted: Vec<&Record> = records.iter().collect();
    sorted.sort_by_key(|r| r.frame);
    let mut out = String::new();
    for r in sorted {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.frame, r.id, r.bbox.x, r.bbox.y, r.bbox.w, r.bbox.h, r.score, r.class_label
        ));
    }
    out
}

pub fn write_records(path: &Path, records: &[Record]) -> Result<(), ExchangeError> {
    let io_err = |source| ExchangeError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut f = std::fs::File::create(path).map_err(io_err)?;
    f.write_all(format_records(records).as_bytes())
        .map_err(io_err)
}
