//! Binary netpbm I/O: PGM (P5) and PPM (P6), maxval 255 only.
//!
//! Writers emit the canonical header `P5\n<w> <h>\n255\n` with no comments.
//! Readers accept arbitrary whitespace and `#` comment lines between header
//! fields, then exactly one whitespace byte before the payload.

use super::{FrameError, GrayFrame, RawFrame};

/// A decoded netpbm file of either flavour.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PnmImage {
    Gray(GrayFrame),
    Rgb(RawFrame),
}

impl PnmImage {
    /// Equal-channel expansion for gray files, so both kinds feed the same
    /// pipeline entry point.
    pub fn into_raw(self) -> RawFrame {
        match self {
            PnmImage::Gray(g) => RawFrame::from_gray(&g),
            PnmImage::Rgb(r) => r,
        }
    }

    pub fn dimensions(&self) -> (usize, usize) {
        match self {
            PnmImage::Gray(g) => (g.width(), g.height()),
            PnmImage::Rgb(r) => (r.width(), r.height()),
        }
    }
}

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    payload_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, FrameError> {
    if bytes.len() < 2 {
        return Err(FrameError::MalformedHeader("file too short".into()));
    }
    let magic = [bytes[0], bytes[1]];
    if magic != *b"P5" && magic != *b"P6" {
        return Err(FrameError::UnsupportedFormat(
            String::from_utf8_lossy(&magic).into_owned(),
        ));
    }

    let mut pos = 2;
    let mut fields = [0usize; 3];
    for (i, field) in fields.iter_mut().enumerate() {
        // Whitespace (at least one byte) and comments before each field.
        let start = pos;
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        if pos == start {
            return Err(FrameError::MalformedHeader(format!(
                "missing separator before header field {}",
                i + 1
            )));
        }
        let digits_start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if pos == digits_start {
            return Err(FrameError::MalformedHeader(format!(
                "header field {} is not a number",
                i + 1
            )));
        }
        let text = std::str::from_utf8(&bytes[digits_start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| FrameError::MalformedHeader(format!("header field {text} overflows")))?;
    }

    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => {
            return Err(FrameError::MalformedHeader(
                "expected one whitespace byte after maxval".into(),
            ))
        }
    }

    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(FrameError::UnsupportedFormat(format!("maxval {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(FrameError::MalformedHeader(format!("zero dimension {width}x{height}")));
    }

    Ok(Header {
        magic,
        width,
        height,
        payload_offset: pos,
    })
}

fn payload(bytes: &[u8], header: &Header, channels: usize) -> Result<Vec<u8>, FrameError> {
    let expected = header
        .width
        .checked_mul(header.height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| FrameError::MalformedHeader("dimensions overflow".into()))?;
    let body = &bytes[header.payload_offset..];
    if body.len() < expected {
        return Err(FrameError::Truncated {
            expected,
            actual: body.len(),
        });
    }
    if body.len() > expected {
        return Err(FrameError::TrailingData(body.len() - expected));
    }
    Ok(body.to_vec())
}

/// Decodes either a P5 or a P6 file.
pub fn read_pnm(bytes: &[u8]) -> Result<PnmImage, FrameError> {
    let header = parse_header(bytes)?;
    if header.magic == *b"P5" {
        let data = payload(bytes, &header, 1)?;
        Ok(PnmImage::Gray(GrayFrame::new(header.width, header.height, data)?))
    } else {
        let data = payload(bytes, &header, 3)?;
        Ok(PnmImage::Rgb(RawFrame::new(header.width, header.height, data)?))
    }
}

pub fn read_pgm(bytes: &[u8]) -> Result<GrayFrame, FrameError> {
    match read_pnm(bytes)? {
        PnmImage::Gray(g) => Ok(g),
        PnmImage::Rgb(_) => Err(FrameError::UnsupportedFormat("P6 where P5 expected".into())),
    }
}

pub fn read_ppm(bytes: &[u8]) -> Result<RawFrame, FrameError> {
    match read_pnm(bytes)? {
        PnmImage::Rgb(r) => Ok(r),
        PnmImage::Gray(_) => Err(FrameError::UnsupportedFormat("P5 where P6 expected".into())),
    }
}

pub fn write_pgm(frame: &GrayFrame) -> Vec<u8> {
    encode(b"P5", frame.width(), frame.height(), frame.data())
}

pub fn write_ppm(frame: &RawFrame) -> Vec<u8> {
    encode(b"P6", frame.width(), frame.height(), frame.data())
}

fn encode(magic: &[u8], width: usize, height: usize, data: &[u8]) -> Vec<u8> {
    let header = format!("{width} {height}\n255\n");
    let mut out = Vec::with_capacity(3 + header.len() + data.len());
    out.extend_from_slice(magic);
    out.push(b'\n');
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(data);
    out
}
