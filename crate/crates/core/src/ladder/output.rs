use std::fs::File;
use std::path::Path;

use super::{BitrateLadder, LadderConfig, LadderError, RungStatus};
use crate::models::Resolution;

pub const DEFAULT_RESULTS_CSV: &str = "results.csv";

pub const RESULTS_CSV_HEADER: [&str; 8] = [
    "segment_id",
    "bitrate_mbps",
    "resolution",
    "qp",
    "pred_xpsnr",
    "pred_enc_time_s",
    "pred_dec_time_s",
    "status",
];

/// One parsed row of a results CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub segment_id: String,
    pub bitrate_mbps: f64,
    pub resolution: u32,
    pub qp: u32,
    pub pred_xpsnr: f64,
    pub pred_enc_time_s: f64,
    pub pred_dec_time_s: f64,
    pub status: RungStatus,
}

fn output_err(path: &Path, e: impl ToString) -> LadderError {
    LadderError::Output { path: path.to_path_buf(), message: e.to_string() }
}

/// Writes every rung of every ladder, dropped rungs included.
pub fn write_results_csv(ladders: &[BitrateLadder], path: &Path) -> Result<(), LadderError> {
    let file = File::create(path).map_err(|e| output_err(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(RESULTS_CSV_HEADER).map_err(|e| output_err(path, e))?;
    for ladder in ladders {
        for rung in &ladder.rungs {
            w.write_record([
                ladder.segment_id.clone(),
                format!("{:.3}", rung.target_bitrate),
                rung.resolution.to_string(),
                rung.qp.to_string(),
                format!("{:.4}", rung.predicted_xpsnr),
                format!("{:.3}", rung.predicted_enc_time),
                format!("{:.3}", rung.predicted_dec_time),
                rung.status.to_string(),
            ])
            .map_err(|e| output_err(path, e))?;
        }
    }
    w.flush().map_err(|e| output_err(path, e))
}

pub fn emit_results_csv(ladder: &BitrateLadder, path: &Path) -> Result<(), LadderError> {
    write_results_csv(std::slice::from_ref(ladder), path)
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>, LadderError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| output_err(path, e))?;
    let header = reader.headers().map_err(|e| output_err(path, e))?.clone();
    if header.iter().ne(RESULTS_CSV_HEADER) {
        return Err(output_err(path, format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| output_err(path, e))?;
        let field = |k: usize| record.get(k).unwrap_or("");
        let num = |k: usize| {
            field(k).parse::<f64>().map_err(|_| {
                output_err(path, format!("row {}: bad {} {:?}", i + 1, RESULTS_CSV_HEADER[k], field(k)))
            })
        };
        let int = |k: usize| {
            field(k).parse::<u32>().map_err(|_| {
                output_err(path, format!("row {}: bad {} {:?}", i + 1, RESULTS_CSV_HEADER[k], field(k)))
            })
        };
        rows.push(ResultRow {
            segment_id: field(0).to_string(),
            bitrate_mbps: num(1)?,
            resolution: int(2)?,
            qp: int(3)?,
            pred_xpsnr: num(4)?,
            pred_enc_time_s: num(5)?,
            pred_dec_time_s: num(6)?,
            status: field(7).parse().map_err(|e| output_err(path, format!("row {}: {e}", i + 1)))?,
        });
    }
    Ok(rows)
}

/// Frame rate assumed for the encoder input.
const ENCODE_FPS: u32 = 60;

fn vvenc_command(input: &str, output: &str, r: Resolution, qp: u32, max_bitrate_bps: u64) -> String {
    let (w, h) = (r.width(), r.lines());
    format!(
        "ffmpeg -y -v error -i {input} -vf scale={w}:{h}:flags=lanczos -pix_fmt yuv420p -f rawvideo {output}.yuv \
         && vvencFFapp --preset faster -i {output}.yuv -s {w}x{h} --InputBitDepth 8 -fr {ENCODE_FPS} \
         --qp {qp} --MaxBitrate {max_bitrate_bps} -b {output}.266"
    )
}

/// One shell command per kept rung. `input` is the source media path.
pub fn emit_encoder_commands(
    ladder: &BitrateLadder,
    cfg: &LadderConfig,
    input: &str,
) -> Result<Vec<String>, LadderError> {
    if cfg.codec != "vvenc" {
        return Err(LadderError::UnknownCodec(cfg.codec.clone()));
    }
    Ok(ladder
        .kept()
        .map(|rung| {
            let bps = (rung.target_bitrate * 1e6).round() as u64;
            let output = format!("{}_{}p_{}k", ladder.segment_id, rung.resolution, bps / 1000);
            vvenc_command(input, &output, rung.resolution, rung.qp, bps)
        })
        .collect())
}
