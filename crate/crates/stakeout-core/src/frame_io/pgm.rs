//! Binary PGM (P5) encode/decode.
//!
//! Header grammar: `P5 <width> <height> <maxval>` with tokens separated by
//! whitespace, `#` comments allowed anywhere whitespace is, exactly one
//! whitespace byte between maxval and pixel data. Only maxval 255 is
//! supported. Trailing bytes after the pixel payload are ignored.

use super::Frame;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PgmError {
    #[error("not a binary pgm: expected magic \"P5\" at offset 0")]
    BadMagic,
    #[error("malformed header at byte {offset}: {what}")]
    MalformedHeader { offset: usize, what: &'static str },
    #[error("unsupported maxval {got}: only 255 is supported")]
    UnsupportedMaxval { got: u64 },
    #[error("truncated pixel data: header promises {expected} bytes, found {got}")]
    Truncated { expected: usize, got: usize },
}

struct Tokenizer<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Tokenizer<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\r' | b'\n' => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => return,
            }
        }
    }

    fn read_number(&mut self, what: &'static str) -> Result<u64, PgmError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(PgmError::MalformedHeader { offset: start, what });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(PgmError::MalformedHeader { offset: start, what })
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Frame, PgmError> {
    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(PgmError::BadMagic);
    }
    let mut tok = Tokenizer { bytes, pos: 2 };
    let width = tok.read_number("expected width")?;
    let height = tok.read_number("expected height")?;
    let maxval = tok.read_number("expected maxval")?;
    if maxval != 255 {
        return Err(PgmError::UnsupportedMaxval { got: maxval });
    }
    if width == 0 || height == 0 || width > u32::MAX as u64 || height > u32::MAX as u64 {
        return Err(PgmError::MalformedHeader {
            offset: 2,
            what: "dimensions out of range",
        });
    }
    // Exactly one whitespace byte separates maxval from the payload.
    match bytes.get(tok.pos) {
        Some(b' ' | b'\t' | b'\r' | b'\n') => tok.pos += 1,
        _ => {
            return Err(PgmError::MalformedHeader {
                offset: tok.pos,
                what: "expected single whitespace before pixel data",
            })
        }
    }
    let expected = width as usize * height as usize;
    let available = bytes.len() - tok.pos;
    if available < expected {
        return Err(PgmError::Truncated {
            expected,
            got: available,
        });
    }
    Ok(Frame::new(
        width as u32,
        height as u32,
        bytes[tok.pos..tok.pos + expected].to_vec(),
    ))
}

/// Canonical encoding: `P5\n<w> <h>\n255\n` followed by the pixels.
pub fn write_pgm(frame: &Frame) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", frame.width, frame.height);
    let mut out = Vec::with_capacity(header.len() + frame.pixels.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&frame.pixels);
    out
}
