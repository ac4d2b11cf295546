//! Frame ingestion: the shared `Frame` type, binary PGM (P5) codec, Y4M
//! stream decoding, and directory/stream sources that hand frames to the
//! pipeline with consecutive indices and derived timestamps.

pub mod pgm;
pub mod y4m;

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Single 8-bit grayscale frame, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
    /// Position in the originating sequence, starting at 0.
    pub index: u64,
    /// `round(index * 1000 / frame_rate)`.
    pub timestamp_ms: u64,
    pub pixels: Vec<u8>,
}

impl Frame {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Self {
        assert_eq!(pixels.len(), width as usize * height as usize);
        Self {
            width,
            height,
            index: 0,
            timestamp_ms: 0,
            pixels,
        }
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Self::new(width, height, vec![value; width as usize * height as usize])
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }
}

/// Rec.601 luma from 8-bit RGB, rounded to nearest.
pub fn luma_from_rgb(r: u8, g: u8, b: u8) -> u8 {
    let y = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
    y.round().clamp(0.0, 255.0) as u8
}

pub fn timestamp_ms(index: u64, frame_rate: f64) -> u64 {
    (index as f64 * 1000.0 / frame_rate).round() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    PgmSequence,
    Y4mStream,
}

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("io error on {path}: {err}")]
    Io {
        path: PathBuf,
        #[source]
        err: std::io::Error,
    },
    #[error("{path}: {err}")]
    Pgm {
        path: PathBuf,
        #[source]
        err: pgm::PgmError,
    },
    #[error(transparent)]
    Y4m(#[from] y4m::Y4mError),
    #[error("no .pgm files in {0}")]
    EmptySequence(PathBuf),
    #[error("{path} is {got_w}x{got_h}, sequence started as {expected_w}x{expected_h}")]
    DimensionChanged {
        path: PathBuf,
        expected_w: u32,
        expected_h: u32,
        got_w: u32,
        got_h: u32,
    },
    #[error("unsupported input {0}: expected a directory of .pgm frames or a .y4m file")]
    UnsupportedInput(PathBuf),
}

enum SourceInner {
    Pgm { files: Vec<PathBuf>, next: usize },
    Y4m(y4m::Y4mReader<BufReader<File>>),
}

/// Ordered frame supply for the pipeline. Frames come out indexed 0,1,2,…
/// with `timestamp_ms` derived from the frame rate.
pub struct FrameSource {
    kind: SourceKind,
    frame_rate: f64,
    dims: Option<(u32, u32)>,
    emitted: u64,
    inner: SourceInner,
}

impl FrameSource {
    /// Open a directory of `.pgm` frames (sorted by file name) or a `.y4m`
    /// stream. `default_frame_rate` applies to PGM sequences; a Y4M header's
    /// `F` parameter wins for streams.
    pub fn open(path: &Path, default_frame_rate: f64) -> Result<Self, SourceError> {
        if path.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(path)
                .map_err(|err| SourceError::Io {
                    path: path.to_path_buf(),
                    err,
                })?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "pgm"))
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(SourceError::EmptySequence(path.to_path_buf()));
            }
            Ok(Self {
                kind: SourceKind::PgmSequence,
                frame_rate: default_frame_rate,
                dims: None,
                emitted: 0,
                inner: SourceInner::Pgm { files, next: 0 },
            })
        } else if path.extension().is_some_and(|e| e == "y4m") {
            let file = File::open(path).map_err(|err| SourceError::Io {
                path: path.to_path_buf(),
                err,
            })?;
            let reader = y4m::Y4mReader::new(BufReader::new(file))?;
            let frame_rate = reader.frame_rate();
            Ok(Self {
                kind: SourceKind::Y4mStream,
                frame_rate,
                dims: Some((reader.width(), reader.height())),
                emitted: 0,
                inner: SourceInner::Y4m(reader),
            })
        } else {
            Err(SourceError::UnsupportedInput(path.to_path_buf()))
        }
    }

    pub fn kind(&self) -> SourceKind {
        self.kind
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn next_frame(&mut self) -> Result<Option<Frame>, SourceError> {
        let mut frame = match &mut self.inner {
            SourceInner::Pgm { files, next } => {
                if *next >= files.len() {
                    return Ok(None);
                }
                let path = &files[*next];
                *next += 1;
                let bytes = std::fs::read(path).map_err(|err| SourceError::Io {
                    path: path.clone(),
                    err,
                })?;
                let frame = pgm::decode_pgm(&bytes).map_err(|err| SourceError::Pgm {
                    path: path.clone(),
                    err,
                })?;
                match self.dims {
                    None => self.dims = Some(frame.dims()),
                    Some((ew, eh)) if (ew, eh) != frame.dims() => {
                        return Err(SourceError::DimensionChanged {
                            path: path.clone(),
                            expected_w: ew,
                            expected_h: eh,
                            got_w: frame.width,
                            got_h: frame.height,
                        });
                    }
                    Some(_) => {}
                }
                frame
            }
            SourceInner::Y4m(reader) => match reader.read_frame()? {
                Some(frame) => frame,
                None => return Ok(None),
            },
        };
        frame.index = self.emitted;
        frame.timestamp_ms = timestamp_ms(self.emitted, self.frame_rate);
        self.emitted += 1;
        Ok(Some(frame))
    }
}
