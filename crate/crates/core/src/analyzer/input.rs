//! Y4M and raw planar YUV 4:2:0 readers.

use std::fs;
use std::path::Path;

use super::AnalyzerError;

/// Smallest accepted luma width/height.
pub const MIN_DIMENSION: usize = 64;

/// One plane of samples, stored as `u16` regardless of bit depth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u16>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<u16>) -> Result<Self, AnalyzerError> {
        if data.len() != width * height {
            return Err(AnalyzerError::InvalidGeometry(format!(
                "plane {}x{} needs {} samples, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u16) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u16) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[u16] {
        &self.data[y * self.width..(y + 1) * self.width]
    }
}

/// A 4:2:0 frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub y: Plane,
    pub u: Plane,
    pub v: Plane,
}

impl Frame {
    /// A frame with every sample of each plane set to the given value.
    pub fn constant(width: usize, height: usize, y: u16, u: u16, v: u16) -> Self {
        Self {
            y: Plane::filled(width, height, y),
            u: Plane::filled(width / 2, height / 2, u),
            v: Plane::filled(width / 2, height / 2, v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChromaFormat {
    Yuv420,
}

/// A decoded video segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameSequence {
    width: usize,
    height: usize,
    bit_depth: u8,
    frames: Vec<Frame>,
}

impl FrameSequence {
    /// Builds a sequence, checking dimensions, plane geometry and sample range.
    pub fn new(
        width: usize,
        height: usize,
        bit_depth: u8,
        frames: Vec<Frame>,
    ) -> Result<Self, AnalyzerError> {
        check_geometry(width, height)?;
        if bit_depth != 8 && bit_depth != 10 {
            return Err(AnalyzerError::InvalidGeometry(format!(
                "bit depth {bit_depth} not supported (8 or 10)"
            )));
        }
        let max_sample = (1u32 << bit_depth) - 1;
        for (idx, frame) in frames.iter().enumerate() {
            let planes = [
                (&frame.y, width, height),
                (&frame.u, width / 2, height / 2),
                (&frame.v, width / 2, height / 2),
            ];
            for (plane, w, h) in planes {
                if plane.width != w || plane.height != h || plane.data.len() != w * h {
                    return Err(AnalyzerError::InvalidGeometry(format!(
                        "frame {idx}: plane is {}x{}, expected {w}x{h}",
                        plane.width, plane.height
                    )));
                }
                if plane.data.iter().any(|&s| u32::from(s) > max_sample) {
                    return Err(AnalyzerError::SampleOutOfRange { frame: idx, bit_depth });
                }
            }
        }
        Ok(Self { width, height, bit_depth, frames })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn chroma_format(&self) -> ChromaFormat {
        ChromaFormat::Yuv420
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }
}

fn check_geometry(width: usize, height: usize) -> Result<(), AnalyzerError> {
    if width < MIN_DIMENSION
        || height < MIN_DIMENSION
        || !width.is_multiple_of(2)
        || !height.is_multiple_of(2)
    {
        return Err(AnalyzerError::InvalidGeometry(format!(
            "{width}x{height}: width and height must be even and at least {MIN_DIMENSION}"
        )));
    }
    Ok(())
}

/// Geometry of a headerless planar file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawGeometry {
    pub width: usize,
    pub height: usize,
    pub bit_depth: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Y4m,
    Raw(RawGeometry),
}

/// Reads a segment from disk.
pub fn load_segment(path: &Path, format: InputFormat) -> Result<FrameSequence, AnalyzerError> {
    let bytes = fs::read(path).map_err(|source| AnalyzerError::Io { path: path.to_path_buf(), source })?;
    match format {
        InputFormat::Y4m => parse_y4m(&bytes),
        InputFormat::Raw(geom) => parse_raw(&bytes, geom),
    }
}

/// Bytes per 4:2:0 frame.
pub fn frame_size(width: usize, height: usize, bit_depth: u8) -> usize {
    let bytes_per_sample = if bit_depth > 8 { 2 } else { 1 };
    (width * height + 2 * (width / 2) * (height / 2)) * bytes_per_sample
}

pub fn parse_raw(bytes: &[u8], geom: RawGeometry) -> Result<FrameSequence, AnalyzerError> {
    check_geometry(geom.width, geom.height)?;
    let size = frame_size(geom.width, geom.height, geom.bit_depth);
    if !bytes.len().is_multiple_of(size) {
        return Err(AnalyzerError::TruncatedFrame {
            frame: bytes.len() / size,
            expected: size,
            found: bytes.len() % size,
        });
    }
    let frames = bytes
        .chunks_exact(size)
        .map(|chunk| read_frame(chunk, geom.width, geom.height, geom.bit_depth))
        .collect();
    FrameSequence::new(geom.width, geom.height, geom.bit_depth, frames)
}

fn read_plane(bytes: &[u8], width: usize, height: usize, bit_depth: u8) -> Plane {
    let data = if bit_depth > 8 {
        bytes.chunks_exact(2).map(|b| u16::from_le_bytes([b[0], b[1]])).collect()
    } else {
        bytes.iter().map(|&b| u16::from(b)).collect()
    };
    Plane { width, height, data }
}

fn read_frame(bytes: &[u8], width: usize, height: usize, bit_depth: u8) -> Frame {
    let bps = if bit_depth > 8 { 2 } else { 1 };
    let luma = width * height * bps;
    let chroma = (width / 2) * (height / 2) * bps;
    Frame {
        y: read_plane(&bytes[..luma], width, height, bit_depth),
        u: read_plane(&bytes[luma..luma + chroma], width / 2, height / 2, bit_depth),
        v: read_plane(&bytes[luma + chroma..luma + 2 * chroma], width / 2, height / 2, bit_depth),
    }
}

/// Parsed `YUV4MPEG2` stream header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Y4mHeader {
    pub width: usize,
    pub height: usize,
    pub bit_depth: u8,
    pub framerate: Option<(u32, u32)>,
}

const Y4M_MAGIC: &str = "YUV4MPEG2";

pub fn parse_y4m_header(line: &str) -> Result<Y4mHeader, AnalyzerError> {
    let mut tokens = line.split_ascii_whitespace();
    if tokens.next() != Some(Y4M_MAGIC) {
        return Err(AnalyzerError::MalformedHeader("missing YUV4MPEG2 signature".into()));
    }
    let mut width = None;
    let mut height = None;
    let mut framerate = None;
    let mut bit_depth = 8;
    for tok in tokens {
        let (tag, value) = tok.split_at(1);
        match tag {
            "W" => width = Some(parse_dim(value, "W")?),
            "H" => height = Some(parse_dim(value, "H")?),
            "F" => {
                let (num, den) = value
                    .split_once(':')
                    .ok_or_else(|| AnalyzerError::MalformedHeader(format!("bad frame rate {tok}")))?;
                let num = num.parse().map_err(|_| bad_token(tok))?;
                let den = den.parse().map_err(|_| bad_token(tok))?;
                framerate = Some((num, den));
            }
            "C" => {
                bit_depth = match value {
                    "420" | "420jpeg" | "420paldv" | "420mpeg2" => 8,
                    "420p10" => 10,
                    other => return Err(AnalyzerError::UnsupportedChroma(other.to_string())),
                }
            }
            // Interlacing, aspect ratio and extension tags carry nothing we use.
            "I" | "A" | "X" => {}
            _ => return Err(bad_token(tok)),
        }
    }
    let width = width.ok_or_else(|| AnalyzerError::MalformedHeader("missing W".into()))?;
    let height = height.ok_or_else(|| AnalyzerError::MalformedHeader("missing H".into()))?;
    Ok(Y4mHeader { width, height, bit_depth, framerate })
}

fn parse_dim(value: &str, tag: &str) -> Result<usize, AnalyzerError> {
    value.parse().map_err(|_| AnalyzerError::MalformedHeader(format!("bad {tag} value {value:?}")))
}

fn bad_token(tok: &str) -> AnalyzerError {
    AnalyzerError::MalformedHeader(format!("unexpected header token {tok:?}"))
}

pub fn parse_y4m(bytes: &[u8]) -> Result<FrameSequence, AnalyzerError> {
    let header_end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| AnalyzerError::MalformedHeader("unterminated header line".into()))?;
    let header_line = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| AnalyzerError::MalformedHeader("header is not ASCII".into()))?;
    let header = parse_y4m_header(header_line)?;
    check_geometry(header.width, header.height)?;

    let size = frame_size(header.width, header.height, header.bit_depth);
    let mut frames = Vec::new();
    let mut pos = header_end + 1;
    while pos < bytes.len() {
        let rest = &bytes[pos..];
        let line_end = rest.iter().position(|&b| b == b'\n').ok_or_else(|| {
            AnalyzerError::MalformedHeader(format!("unterminated FRAME marker at byte {pos}"))
        })?;
        if !rest[..line_end].starts_with(b"FRAME") {
            return Err(AnalyzerError::MalformedHeader(format!("expected FRAME marker at byte {pos}")));
        }
        pos += line_end + 1;
        if bytes.len() - pos < size {
            return Err(AnalyzerError::TruncatedFrame {
                frame: frames.len(),
                expected: size,
                found: bytes.len() - pos,
            });
        }
        frames.push(read_frame(&bytes[pos..pos + size], header.width, header.height, header.bit_depth));
        pos += size;
    }
    FrameSequence::new(header.width, header.height, header.bit_depth, frames)
}

/// Serializes a sequence as a Y4M stream at the given frame rate.
pub fn write_y4m(seq: &FrameSequence, framerate: (u32, u32)) -> Vec<u8> {
    let chroma = if seq.bit_depth() > 8 { "C420p10" } else { "C420" };
    let mut out = format!(
        "{Y4M_MAGIC} W{} H{} F{}:{} Ip A1:1 {chroma}\n",
        seq.width(),
        seq.height(),
        framerate.0,
        framerate.1
    )
    .into_bytes();
    for frame in seq.frames() {
        out.extend_from_slice(b"FRAME\n");
        for plane in [&frame.y, &frame.u, &frame.v] {
            if seq.bit_depth() > 8 {
                plane.data.iter().for_each(|s| out.extend_from_slice(&s.to_le_bytes()));
            } else {
                out.extend(plane.data.iter().map(|&s| s as u8));
            }
        }
    }
    out
}
