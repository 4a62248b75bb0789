//! DCT-energy complexity analysis of raw video segments.
//!
//! Each plane is split into non-overlapping 32x32 blocks in raster order.
//! For every block the orthonormal 2-D DCT-II is taken and two quantities are
//! kept: the weighted AC energy and the DC coefficient. Segment features are
//! averages of those over blocks and frames:
//!
//! * `E` — mean block energy divided by the block area,
//! * `h` — mean absolute frame-to-frame change of luma block energy, same scale,
//! * `L` — mean `|DC| / 32`, which equals the block mean for an orthonormal DCT.
//!
//! Ten-bit input is shifted down to eight bits first.

mod dct;
mod features;
mod input;

use std::path::PathBuf;

use thiserror::Error;

pub use dct::{block_texture_energy, energy_weights, BlockTransform, Dct2d, BLOCK_AREA, BLOCK_SIZE};
pub use features::{
    analyze_segment, features_to_csv, read_features_csv, SegmentFeatures, FEATURE_COUNT, FEATURE_CSV_HEADER,
    FEATURE_NAMES,
};
pub use input::{
    frame_size, load_segment, parse_raw, parse_y4m, parse_y4m_header, write_y4m, ChromaFormat, Frame,
    FrameSequence, InputFormat, Plane, RawGeometry, Y4mHeader, MIN_DIMENSION,
};

#[derive(Debug, Error)]
pub enum AnalyzerError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Csv { path: PathBuf, message: String },
    #[error("malformed Y4M header: {0}")]
    MalformedHeader(String),
    #[error("unsupported chroma format {0:?} (only 4:2:0 is supported)")]
    UnsupportedChroma(String),
    #[error("truncated frame {frame}: expected {expected} bytes, found {found}")]
    TruncatedFrame { frame: usize, expected: usize, found: usize },
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("frame {frame}: sample exceeds {bit_depth}-bit range")]
    SampleOutOfRange { frame: usize, bit_depth: u8 },
    #[error("empty sequence: at least one frame is required")]
    EmptySequence,
}
