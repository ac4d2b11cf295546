//! Y4M (YUV4MPEG2) stream decoding. Only the luma plane is kept; 4:2:0
//! chroma is read and discarded. Header/marker lines are read one byte at a
//! time so the reader never consumes bytes past the final frame it returns —
//! callers who want buffered file IO pass a `BufReader` as the underlying
//! stream.

use super::Frame;
use std::io::Read;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Y4mError {
    #[error("io error while reading y4m stream: {0}")]
    Io(#[from] std::io::Error),
    #[error("missing YUV4MPEG2 signature")]
    BadSignature,
    #[error("malformed y4m header: {0}")]
    MalformedHeader(String),
    #[error("unsupported y4m colorspace {0:?}")]
    UnsupportedColorspace(String),
    #[error("missing FRAME marker before frame {at_frame}")]
    MissingFrameMarker { at_frame: u64 },
    #[error("truncated frame {at_frame}: expected {expected} plane bytes")]
    TruncatedFrame { at_frame: u64, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Colorspace {
    Mono,
    /// C420, C420jpeg, C420mpeg2 — identical plane layout, different siting.
    C420,
}

pub struct Y4mReader<R: Read> {
    stream: R,
    width: u32,
    height: u32,
    fps_num: u32,
    fps_den: u32,
    colorspace: Colorspace,
    frames_read: u64,
    scratch: Vec<u8>,
}

fn read_byte<R: Read>(stream: &mut R) -> std::io::Result<Option<u8>> {
    let mut buf = [0u8; 1];
    loop {
        match stream.read(&mut buf) {
            Ok(0) => return Ok(None),
            Ok(_) => return Ok(Some(buf[0])),
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        }
    }
}

/// Read until (and including) `\n`, returning the line without it.
fn read_line<R: Read>(stream: &mut R, limit: usize) -> Result<Option<Vec<u8>>, Y4mError> {
    let mut line = Vec::new();
    loop {
        match read_byte(stream)? {
            None => {
                if line.is_empty() {
                    return Ok(None);
                }
                return Err(Y4mError::MalformedHeader("unterminated line".into()));
            }
            Some(b'\n') => return Ok(Some(line)),
            Some(b) => {
                line.push(b);
                if line.len() > limit {
                    return Err(Y4mError::MalformedHeader("header line too long".into()));
                }
            }
        }
    }
}

impl<R: Read> Y4mReader<R> {
    pub fn new(mut stream: R) -> Result<Self, Y4mError> {
        let line = read_line(&mut stream, 4096)?.ok_or(Y4mError::BadSignature)?;
        let line = String::from_utf8(line)
            .map_err(|_| Y4mError::MalformedHeader("non-utf8 header".into()))?;
        let mut parts = line.split(' ');
        if parts.next() != Some("YUV4MPEG2") {
            return Err(Y4mError::BadSignature);
        }
        let mut width = None;
        let mut height = None;
        let mut fps = (30u32, 1u32);
        let mut colorspace = Colorspace::C420; // absent C parameter means 4:2:0
        for param in parts {
            let (tag, value) = match param.split_at_checked(1) {
                Some(split) => split,
                None => continue, // tolerate repeated spaces
            };
            match tag {
                "W" => {
                    width = Some(value.parse::<u32>().map_err(|_| {
                        Y4mError::MalformedHeader(format!("bad width {value:?}"))
                    })?)
                }
                "H" => {
                    height = Some(value.parse::<u32>().map_err(|_| {
                        Y4mError::MalformedHeader(format!("bad height {value:?}"))
                    })?)
                }
                "F" => {
                    let (num, den) = value
                        .split_once(':')
                        .ok_or_else(|| Y4mError::MalformedHeader(format!("bad rate {value:?}")))?;
                    let num = num.parse::<u32>().ok();
                    let den = den.parse::<u32>().ok();
                    match (num, den) {
                        (Some(n), Some(d)) if n > 0 && d > 0 => fps = (n, d),
                        _ => {
                            return Err(Y4mError::MalformedHeader(format!("bad rate {value:?}")))
                        }
                    }
                }
                "C" => {
                    colorspace = match value {
                        "420" | "420jpeg" | "420mpeg2" => Colorspace::C420,
                        "mono" => Colorspace::Mono,
                        other => return Err(Y4mError::UnsupportedColorspace(other.to_string())),
                    }
                }
                // Interlacing, aspect, and extension parameters don't affect
                // the luma layout we consume.
                "I" | "A" | "X" => {}
                _ => {
                    return Err(Y4mError::MalformedHeader(format!(
                        "unknown parameter {param:?}"
                    )))
                }
            }
        }
        let width = width.ok_or_else(|| Y4mError::MalformedHeader("missing W".into()))?;
        let height = height.ok_or_else(|| Y4mError::MalformedHeader("missing H".into()))?;
        if width == 0 || height == 0 {
            return Err(Y4mError::MalformedHeader("zero dimension".into()));
        }
        Ok(Self {
            stream,
            width,
            height,
            fps_num: fps.0,
            fps_den: fps.1,
            colorspace,
            frames_read: 0,
            scratch: Vec::new(),
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn frame_rate(&self) -> f64 {
        self.fps_num as f64 / self.fps_den as f64
    }

    fn chroma_bytes(&self) -> usize {
        match self.colorspace {
            Colorspace::Mono => 0,
            Colorspace::C420 => 2 * (self.width as usize / 2) * (self.height as usize / 2),
        }
    }

    /// Next frame, or `None` at a clean end of stream. Frame indices and
    /// timestamps are filled in by the caller (`FrameSource`).
    pub fn read_frame(&mut self) -> Result<Option<Frame>, Y4mError> {
        let marker = match read_line(&mut self.stream, 4096)? {
            None => return Ok(None),
            Some(line) => line,
        };
        // "FRAME" optionally followed by space-separated parameters.
        let ok = marker == b"FRAME" || marker.starts_with(b"FRAME ");
        if !ok {
            return Err(Y4mError::MissingFrameMarker {
                at_frame: self.frames_read,
            });
        }
        let luma_len = self.width as usize * self.height as usize;
        let mut pixels = vec![0u8; luma_len];
        self.stream.read_exact(&mut pixels).map_err(|_| {
            Y4mError::TruncatedFrame {
                at_frame: self.frames_read,
                expected: luma_len + self.chroma_bytes(),
            }
        })?;
        let chroma = self.chroma_bytes();
        if chroma > 0 {
            self.scratch.resize(chroma, 0);
            self.stream
                .read_exact(&mut self.scratch)
                .map_err(|_| Y4mError::TruncatedFrame {
                    at_frame: self.frames_read,
                    expected: luma_len + chroma,
                })?;
        }
        self.frames_read += 1;
        Ok(Some(Frame::new(self.width, self.height, pixels)))
    }
}
