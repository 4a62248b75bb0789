use std::fs::{self, OpenOptions};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dct::{BlockTransform, BLOCK_AREA, BLOCK_SIZE};
use super::input::{FrameSequence, Plane};
use super::AnalyzerError;

/// Per-segment spatiotemporal complexity features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentFeatures {
    /// Luma texture energy.
    pub e_y: f64,
    /// Average temporal gradient of luma texture energy.
    pub h: f64,
    /// Average luminescence.
    pub l_y: f64,
    pub e_u: f64,
    pub e_v: f64,
    pub l_u: f64,
    pub l_v: f64,
}

pub const FEATURE_COUNT: usize = 7;
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = ["E_Y", "h", "L_Y", "E_U", "E_V", "L_U", "L_V"];

impl SegmentFeatures {
    /// Model input order: E_Y, h, L_Y, E_U, E_V, L_U, L_V.
    pub fn to_array(&self) -> [f64; FEATURE_COUNT] {
        [self.e_y, self.h, self.l_y, self.e_u, self.e_v, self.l_u, self.l_v]
    }

    pub fn from_array(v: [f64; FEATURE_COUNT]) -> Self {
        Self { e_y: v[0], h: v[1], l_y: v[2], e_u: v[3], e_v: v[4], l_u: v[5], l_v: v[6] }
    }

    pub fn is_valid(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite() && *v >= 0.0)
    }
}

/// Per-block texture energy and DC coefficient for one plane of one frame.
#[derive(Debug, Clone, Default)]
struct PlaneBlocks {
    energy: Vec<f64>,
    dc: Vec<f64>,
}

fn analyze_plane(plane: &Plane, shift: u32) -> PlaneBlocks {
    let bx = plane.width.div_ceil(BLOCK_SIZE);
    let by = plane.height.div_ceil(BLOCK_SIZE);
    let mut out = PlaneBlocks { energy: Vec::with_capacity(bx * by), dc: Vec::with_capacity(bx * by) };
    let mut transform = BlockTransform::default();
    let mut block = vec![0.0; BLOCK_AREA];
    for row in 0..by {
        for col in 0..bx {
            fill_block(plane, col * BLOCK_SIZE, row * BLOCK_SIZE, shift, &mut block);
            let (energy, dc) = transform.analyze(&block);
            out.energy.push(energy);
            out.dc.push(dc);
        }
    }
    out
}

/// Copies a block, padding any part outside the plane with the mean of the
/// samples inside it.
fn fill_block(plane: &Plane, x0: usize, y0: usize, shift: u32, block: &mut [f64]) {
    let w = BLOCK_SIZE.min(plane.width - x0);
    let h = BLOCK_SIZE.min(plane.height - y0);
    let mut sum = 0.0;
    for y in 0..h {
        let src = &plane.row(y0 + y)[x0..x0 + w];
        let dst = &mut block[y * BLOCK_SIZE..y * BLOCK_SIZE + w];
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = f64::from(s >> shift);
            sum += *d;
        }
    }
    if w == BLOCK_SIZE && h == BLOCK_SIZE {
        return;
    }
    let mean = sum / (w * h) as f64;
    for y in 0..BLOCK_SIZE {
        let start = if y < h { w } else { 0 };
        block[y * BLOCK_SIZE + start..(y + 1) * BLOCK_SIZE].fill(mean);
    }
}

struct FrameBlocks {
    y: PlaneBlocks,
    u: PlaneBlocks,
    v: PlaneBlocks,
}

const NORM_ENERGY: f64 = (BLOCK_SIZE * BLOCK_SIZE) as f64;
const NORM_DC: f64 = BLOCK_SIZE as f64;

fn mean_energy<'a>(planes: impl Iterator<Item = &'a PlaneBlocks>) -> f64 {
    let (sum, count) =
        planes.fold((0.0, 0usize), |(s, c), p| (s + p.energy.iter().sum::<f64>(), c + p.energy.len()));
    sum / count as f64 / NORM_ENERGY
}

fn mean_luminescence<'a>(planes: impl Iterator<Item = &'a PlaneBlocks>) -> f64 {
    let (sum, count) = planes
        .fold((0.0, 0usize), |(s, c), p| (s + p.dc.iter().map(|d| d.abs()).sum::<f64>(), c + p.dc.len()));
    sum / count as f64 / NORM_DC
}

/// Computes the seven complexity features over a segment.
///
/// Frames are transformed in parallel; all reductions run sequentially in
/// frame/raster order so the result does not depend on scheduling.
pub fn analyze_segment(seq: &FrameSequence) -> Result<SegmentFeatures, AnalyzerError> {
    if seq.frame_count() == 0 {
        return Err(AnalyzerError::EmptySequence);
    }
    let shift = u32::from(seq.bit_depth() - 8);
    let blocks: Vec<FrameBlocks> = seq
        .frames()
        .par_iter()
        .map(|f| FrameBlocks {
            y: analyze_plane(&f.y, shift),
            u: analyze_plane(&f.u, shift),
            v: analyze_plane(&f.v, shift),
        })
        .collect();

    let mut h = 0.0;
    if blocks.len() > 1 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for pair in blocks.windows(2) {
            for (cur, prev) in pair[1].y.energy.iter().zip(&pair[0].y.energy) {
                sum += (cur - prev).abs();
                count += 1;
            }
        }
        h = sum / count as f64 / NORM_ENERGY;
    }

    Ok(SegmentFeatures {
        e_y: mean_energy(blocks.iter().map(|b| &b.y)),
        h,
        l_y: mean_luminescence(blocks.iter().map(|b| &b.y)),
        e_u: mean_energy(blocks.iter().map(|b| &b.u)),
        e_v: mean_energy(blocks.iter().map(|b| &b.v)),
        l_u: mean_luminescence(blocks.iter().map(|b| &b.u)),
        l_v: mean_luminescence(blocks.iter().map(|b| &b.v)),
    })
}

pub const FEATURE_CSV_HEADER: [&str; 8] = ["segment_id", "E_Y", "h", "L_Y", "E_U", "E_V", "L_U", "L_V"];

/// Appends one row to a feature CSV, writing the header first if the file is new or empty.
pub fn features_to_csv(
    features: &SegmentFeatures,
    segment_id: &str,
    path: &Path,
) -> Result<(), AnalyzerError> {
    let io_err = |source| AnalyzerError::Io { path: path.to_path_buf(), source };
    let needs_header = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path).map_err(io_err)?;
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    let csv_err = |e: csv::Error| AnalyzerError::Csv { path: path.to_path_buf(), message: e.to_string() };
    if needs_header {
        writer.write_record(FEATURE_CSV_HEADER).map_err(csv_err)?;
    }
    let mut row = vec![segment_id.to_string()];
    row.extend(features.to_array().iter().map(|v| format!("{v:.6}")));
    writer.write_record(&row).map_err(csv_err)?;
    writer.flush().map_err(io_err)?;
    Ok(())
}

/// Reads every `(segment_id, features)` row of a feature CSV.
pub fn read_features_csv(path: &Path) -> Result<Vec<(String, SegmentFeatures)>, AnalyzerError> {
    let csv_err = |message: String| AnalyzerError::Csv { path: path.to_path_buf(), message };
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => AnalyzerError::Io { path: path.to_path_buf(), source },
        other => csv_err(format!("{other:?}")),
    })?;
    let headers = reader.headers().map_err(|e| csv_err(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != FEATURE_CSV_HEADER {
        return Err(csv_err(format!(
            "unexpected header {:?}, expected {}",
            headers.iter().collect::<Vec<_>>(),
            FEATURE_CSV_HEADER.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(e.to_string()))?;
        let mut values = [0.0; FEATURE_COUNT];
        for (k, value) in values.iter_mut().enumerate() {
            let cell = record.get(k + 1).unwrap_or("");
            *value = cell.trim().parse().map_err(|_| {
                csv_err(format!("row {}: {} is not a number: {cell:?}", idx + 1, FEATURE_NAMES[k]))
            })?;
        }
        let features = SegmentFeatures::from_array(values);
        if !features.is_valid() {
            return Err(csv_err(format!("row {}: features must be finite and non-negative", idx + 1)));
        }
        rows.push((record[0].to_string(), features));
    }
    Ok(rows)
}
