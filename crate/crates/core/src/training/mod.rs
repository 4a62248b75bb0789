//! Training data, bundle training and held-out evaluation.

mod synthetic;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::analyzer::{SegmentFeatures, FEATURE_COUNT, FEATURE_NAMES};
use crate::gbt::{fit, GbtError, GbtParams, TrainMatrix};
use crate::models::{
    AnchorPair, BundleManifest, ModelBundle, ModelError, Resolution, ANCHOR_INPUTS, Q_MAX, Q_MIN,
};

pub use synthetic::{generate_synthetic_dataset, Latent, Noise, SyntheticConfig, SyntheticOracle};

pub const TRAINING_CSV_HEADER: [&str; 15] = [
    "segment_id",
    "E_Y",
    "h",
    "L_Y",
    "E_U",
    "E_V",
    "L_U",
    "L_V",
    "resolution",
    "qp",
    "bitrate_mbps",
    "xpsnr_db",
    "psnr_db",
    "enc_time_s",
    "dec_time_s",
];

/// Default share of segments used for training.
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Csv { path: PathBuf, message: String },
    #[error("missing columns: {}", .0.join(", "))]
    MissingColumns(Vec<String>),
    #[error("row {row}: {message}")]
    InvalidRow { row: usize, message: String },
    #[error("missing {anchor} anchor for segment {segment:?} at {resolution}p")]
    MissingAnchor { anchor: &'static str, segment: String, resolution: Resolution },
    #[error("no training records")]
    Empty,
    #[error("training {role}: {source}")]
    Fit {
        role: &'static str,
        #[source]
        source: GbtError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One encode of one segment at one (resolution, QP).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRecord {
    pub segment_id: String,
    pub features: SegmentFeatures,
    pub resolution: Resolution,
    pub qp: u32,
    /// Achieved bitrate in Mbps.
    pub bitrate_mbps: f64,
    pub xpsnr_db: f64,
    /// Recorded for completeness; no model uses it.
    pub psnr_db: f64,
    pub enc_time_s: f64,
    pub dec_time_s: f64,
}

impl TrainingRecord {
    pub fn validate(&self) -> Result<(), String> {
        if !(Q_MIN..=Q_MAX).contains(&self.qp) {
            return Err(format!("qp {} outside [{Q_MIN},{Q_MAX}]", self.qp));
        }
        if !self.features.is_valid() {
            return Err("features must be finite and non-negative".into());
        }
        for (name, v) in [
            ("bitrate_mbps", self.bitrate_mbps),
            ("enc_time_s", self.enc_time_s),
            ("dec_time_s", self.dec_time_s),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if !self.xpsnr_db.is_finite() || !self.psnr_db.is_finite() {
            return Err("quality values must be finite".into());
        }
        Ok(())
    }
}

/// Reads a training CSV. Columns are matched by header name; any invalid row
/// aborts the read with its 1-based data row number.
pub fn ingest_training_csv(path: &Path) -> Result<Vec<TrainingRecord>, TrainingError> {
    let csv_err = |e: csv::Error| TrainingError::Csv { path: path.into(), message: e.to_string() };
    let file = File::open(path).map_err(|source| TrainingError::Io { path: path.into(), source })?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers().map_err(csv_err)?.clone();
    let mut columns = [0usize; TRAINING_CSV_HEADER.len()];
    let mut missing = Vec::new();
    for (k, name) in TRAINING_CSV_HEADER.iter().enumerate() {
        match headers.iter().position(|h| h.trim() == *name) {
            Some(pos) => columns[k] = pos,
            None => missing.push(name.to_string()),
        }
    }
    if !missing.is_empty() {
        return Err(TrainingError::MissingColumns(missing));
    }

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(csv_err)?;
        let cell = |k: usize| row.get(columns[k]).unwrap_or("").trim();
        let num = |k: usize| -> Result<f64, TrainingError> {
            cell(k).parse::<f64>().map_err(|_| TrainingError::InvalidRow {
                row: row_no,
                message: format!("{} is not a number: {:?}", TRAINING_CSV_HEADER[k], cell(k)),
            })
        };
        let mut feats = [0.0; FEATURE_COUNT];
        for (j, v) in feats.iter_mut().enumerate() {
            *v = num(j + 1)?;
        }
        let lines = num(8)?;
        let resolution =
            Resolution::new(lines as u32).ok().filter(|_| lines.fract() == 0.0).ok_or_else(|| {
                TrainingError::InvalidRow { row: row_no, message: format!("unsupported resolution {lines}") }
            })?;
        let qp = num(9)?;
        if qp.fract() != 0.0 || !(f64::from(Q_MIN)..=f64::from(Q_MAX)).contains(&qp) {
            return Err(TrainingError::InvalidRow {
                row: row_no,
                message: format!("qp {qp} outside [{Q_MIN},{Q_MAX}]"),
            });
        }
        let record = TrainingRecord {
            segment_id: cell(0).to_string(),
            features: SegmentFeatures::from_array(feats),
            resolution,
            qp: qp as u32,
            bitrate_mbps: num(10)?,
            xpsnr_db: num(11)?,
            psnr_db: num(12)?,
            enc_time_s: num(13)?,
            dec_time_s: num(14)?,
        };
        record.validate().map_err(|message| TrainingError::InvalidRow { row: row_no, message })?;
        records.push(record);
    }
    Ok(records)
}

/// Writes records with full float precision.
pub fn write_training_csv(records: &[TrainingRecord], path: &Path) -> Result<(), TrainingError> {
    let csv_err = |e: csv::Error| TrainingError::Csv { path: path.into(), message: e.to_string() };
    let file = File::create(path).map_err(|source| TrainingError::Io { path: path.into(), source })?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(TRAINING_CSV_HEADER).map_err(csv_err)?;
    for r in records {
        let mut row = vec![r.segment_id.clone()];
        row.extend(r.features.to_array().iter().map(f64::to_string));
        row.push(r.resolution.to_string());
        row.push(r.qp.to_string());
        for v in [r.bitrate_mbps, r.xpsnr_db, r.psnr_db, r.enc_time_s, r.dec_time_s] {
            row.push(v.to_string());
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| TrainingError::Io { path: path.into(), source })
}

/// Splits records by segment so no segment appears on both sides.
///
/// Segment ids are sorted, shuffled with `seed` and the first
/// `round(train_fraction * n)` go to training.
pub fn split_by_segment(
    records: &[TrainingRecord],
    train_fraction: f64,
    seed: u64,
) -> (Vec<TrainingRecord>, Vec<TrainingRecord>) {
    let mut ids: Vec<&str> =
        records.iter().map(|r| r.segment_id.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((ids.len() as f64) * train_fraction).round() as usize;
    let train_ids: BTreeSet<&str> = ids[..n_train.min(ids.len())].iter().copied().collect();
    records.iter().cloned().partition(|r| train_ids.contains(r.segment_id.as_str()))
}

fn check_anchor_coverage(records: &[TrainingRecord]) -> Result<(), TrainingError> {
    let mut seen: BTreeMap<(&str, Resolution), (bool, bool)> = BTreeMap::new();
    for r in records {
        let entry = seen.entry((r.segment_id.as_str(), r.resolution)).or_default();
        entry.0 |= r.qp == Q_MIN;
        entry.1 |= r.qp == Q_MAX;
    }
    for ((segment, resolution), (has_min, has_max)) in seen {
        let anchor = match (has_min, has_max) {
            (true, true) => continue,
            (false, _) => "q_min",
            (true, false) => "q_max",
        };
        return Err(TrainingError::MissingAnchor { anchor, segment: segment.to_string(), resolution });
    }
    Ok(())
}

struct Job {
    role: &'static str,
    inputs: Vec<f64>,
    width: usize,
    targets: Vec<f64>,
}

/// Trains all seven ensembles.
///
/// Anchor models see only rows at exactly `q_min` / `q_max` and learn log2
/// bitrate and log2 times. The quality model sees every row, with achieved
/// bitrate as an input.
pub fn train_bundle(
    records: &[TrainingRecord],
    params: &GbtParams,
    split_seed: Option<u64>,
) -> Result<ModelBundle, TrainingError> {
    if records.is_empty() {
        return Err(TrainingError::Empty);
    }
    check_anchor_coverage(records)?;
    let manifest = BundleManifest { split_seed, ..BundleManifest::default() };
    let norm = |r: Resolution| f64::from(r.lines()) / f64::from(manifest.r_norm_base);
    let anchor_row = |r: &TrainingRecord| {
        let mut x = r.features.to_array().to_vec();
        x.push(norm(r.resolution));
        x
    };

    type Target = fn(&TrainingRecord) -> f64;
    let anchor_roles: [(u32, [(&'static str, Target); 3]); 2] = [
        (
            Q_MIN,
            [
                ("bitrate_qmin", |r| r.bitrate_mbps.log2()),
                ("enctime_qmin", |r| r.enc_time_s.log2()),
                ("dectime_qmin", |r| r.dec_time_s.log2()),
            ],
        ),
        (
            Q_MAX,
            [
                ("bitrate_qmax", |r| r.bitrate_mbps.log2()),
                ("enctime_qmax", |r| r.enc_time_s.log2()),
                ("dectime_qmax", |r| r.dec_time_s.log2()),
            ],
        ),
    ];
    let mut jobs = Vec::with_capacity(7);
    for (qp, roles) in anchor_roles {
        let rows: Vec<&TrainingRecord> = records.iter().filter(|r| r.qp == qp).collect();
        let inputs: Vec<f64> = rows.iter().flat_map(|r| anchor_row(r)).collect();
        for (role, target) in roles {
            jobs.push(Job {
                role,
                inputs: inputs.clone(),
                width: ANCHOR_INPUTS,
                targets: rows.iter().map(|r| target(r)).collect(),
            });
        }
    }
    jobs.push(Job {
        role: "xpsnr",
        inputs: records
            .iter()
            .flat_map(|r| {
                let mut x = anchor_row(r);
                x.push(r.bitrate_mbps);
                x
            })
            .collect(),
        width: ANCHOR_INPUTS + 1,
        targets: records.iter().map(|r| r.xpsnr_db).collect(),
    });

    let mut fitted: BTreeMap<&'static str, _> = jobs
        .into_par_iter()
        .map(|job| {
            let fit_err = |source| TrainingError::Fit { role: job.role, source };
            let data = TrainMatrix::new(job.width, job.inputs, job.targets).map_err(fit_err)?;
            let model = fit(&data, params).map_err(fit_err)?;
            Ok((job.role, model))
        })
        .collect::<Result<_, TrainingError>>()?;
    let mut take = |role: &str| fitted.remove(role).expect("every role was trained");

    Ok(ModelBundle::new(
        take("xpsnr"),
        AnchorPair { at_qmin: take("bitrate_qmin"), at_qmax: take("bitrate_qmax") },
        AnchorPair { at_qmin: take("enctime_qmin"), at_qmax: take("enctime_qmax") },
        AnchorPair { at_qmin: take("dectime_qmin"), at_qmax: take("dectime_qmax") },
        manifest,
    )?)
}

/// Mean and standard deviation of absolute errors.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorStats {
    pub mae: f64,
    pub std: f64,
}

impl ErrorStats {
    /// Sums run over sorted values so the result ignores input order.
    pub fn from_abs_errors(mut errors: Vec<f64>) -> Self {
        if errors.is_empty() {
            return Self::default();
        }
        errors.sort_by(f64::total_cmp);
        let n = errors.len() as f64;
        let mae = errors.iter().sum::<f64>() / n;
        let mut sq: Vec<f64> = errors.iter().map(|e| (e - mae).powi(2)).collect();
        sq.sort_by(f64::total_cmp);
        Self { mae, std: (sq.iter().sum::<f64>() / n).sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MaeReport {
    pub records: usize,
    pub qp: ErrorStats,
    /// dB.
    pub xpsnr: ErrorStats,
    /// Seconds.
    pub enc_time: ErrorStats,
    pub dec_time: ErrorStats,
    /// Relative (|pred - true| / true).
    pub enc_time_rel: ErrorStats,
    pub dec_time_rel: ErrorStats,
}

/// Compares bundle predictions with held-out records. QP is predicted from
/// each record's achieved bitrate and compared with the QP it was encoded at.
pub fn evaluate_bundle(bundle: &ModelBundle, holdout: &[TrainingRecord]) -> Result<MaeReport, TrainingError> {
    if holdout.is_empty() {
        return Err(TrainingError::Empty);
    }
    let mut qp = Vec::with_capacity(holdout.len());
    let mut xpsnr = Vec::with_capacity(holdout.len());
    let mut enc = Vec::with_capacity(holdout.len());
    let mut dec = Vec::with_capacity(holdout.len());
    let mut enc_rel = Vec::with_capacity(holdout.len());
    let mut dec_rel = Vec::with_capacity(holdout.len());
    for r in holdout {
        let p = bundle.predict(&r.features, r.resolution, r.bitrate_mbps)?;
        qp.push((f64::from(p.qp) - f64::from(r.qp)).abs());
        xpsnr.push((p.xpsnr - r.xpsnr_db).abs());
        enc.push((p.enc_time - r.enc_time_s).abs());
        dec.push((p.dec_time - r.dec_time_s).abs());
        enc_rel.push((p.enc_time - r.enc_time_s).abs() / r.enc_time_s);
        dec_rel.push((p.dec_time - r.dec_time_s).abs() / r.dec_time_s);
    }
    Ok(MaeReport {
        records: holdout.len(),
        qp: ErrorStats::from_abs_errors(qp),
        xpsnr: ErrorStats::from_abs_errors(xpsnr),
        enc_time: ErrorStats::from_abs_errors(enc),
        dec_time: ErrorStats::from_abs_errors(dec),
        enc_time_rel: ErrorStats::from_abs_errors(enc_rel),
        dec_time_rel: ErrorStats::from_abs_errors(dec_rel),
    })
}

/// Column names of the feature part of a training row.
pub fn feature_columns() -> [&'static str; FEATURE_COUNT] {
    FEATURE_NAMES
}
