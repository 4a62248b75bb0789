//! Quality, QP and timing predictors built on tree ensembles.
//!
//! Bitrate, encoding time and decoding time are each modelled by a pair of
//! anchor ensembles evaluated at `q_min` and `q_max`. Their outputs are log2
//! values and are joined by a straight line in QP, so a target bitrate maps to
//! a QP by inverting the bitrate line and that QP maps to a time on the time
//! line. Quality is predicted directly from features, resolution and bitrate.

mod resolution;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyzer::{SegmentFeatures, FEATURE_COUNT};
use crate::gbt::{GbtError, TreeEnsemble};

pub use resolution::{Resolution, SUPPORTED_RESOLUTIONS};

pub const Q_MIN: u32 = 10;
pub const Q_MAX: u32 = 50;
pub const R_NORM_BASE: u32 = 2160;
pub const BUNDLE_SCHEMA: &str = "1";

/// Inputs of the anchor models: seven features and normalized resolution.
pub const ANCHOR_INPUTS: usize = FEATURE_COUNT + 1;
/// Inputs of the quality model: anchor inputs plus bitrate in Mbps.
pub const QUALITY_INPUTS: usize = FEATURE_COUNT + 2;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model {role}: {source}")]
    Model {
        role: &'static str,
        #[source]
        source: GbtError,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad bundle manifest: {0}")]
    Manifest(String),
    #[error("invalid bundle: {0}")]
    InvalidBundle(String),
    #[error("target bitrate must be positive and finite, got {0}")]
    InvalidBitrate(f64),
    #[error("unsupported resolution {0} (supported: {{360,432,540,720,1080,1440,2160}})")]
    UnsupportedResolution(u32),
}

/// Ensembles evaluated at the two QP anchors. Outputs are log2 values.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorPair {
    pub at_qmin: TreeEnsemble,
    pub at_qmax: TreeEnsemble,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub q_min: u32,
    pub q_max: u32,
    pub r_norm_base: u32,
    pub schema: String,
    /// Seed of the train/holdout split the bundle was trained with, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_seed: Option<u64>,
}

impl Default for BundleManifest {
    fn default() -> Self {
        Self {
            q_min: Q_MIN,
            q_max: Q_MAX,
            r_norm_base: R_NORM_BASE,
            schema: BUNDLE_SCHEMA.into(),
            split_seed: None,
        }
    }
}

/// Fixed file names inside a bundle directory.
pub mod files {
    pub const MANIFEST: &str = "manifest.json";
    pub const XPSNR: &str = "xpsnr.json";
    pub const BITRATE_QMIN: &str = "bitrate_qmin.json";
    pub const BITRATE_QMAX: &str = "bitrate_qmax.json";
    pub const ENCTIME_QMIN: &str = "enctime_qmin.json";
    pub const ENCTIME_QMAX: &str = "enctime_qmax.json";
    pub const DECTIME_QMIN: &str = "dectime_qmin.json";
    pub const DECTIME_QMAX: &str = "dectime_qmax.json";
}

/// Everything predicted for one (segment, resolution, bitrate) triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub xpsnr: f64,
    /// Clamped, unrounded QP.
    pub qp_real: f64,
    pub qp: u32,
    pub enc_time: f64,
    pub dec_time: f64,
    /// The q_min bitrate anchor came out below the q_max anchor and was raised to it.
    pub anchor_inverted: bool,
}

/// The seven trained ensembles plus the constants that tie them together.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    xpsnr: TreeEnsemble,
    bitrate: AnchorPair,
    enc_time: AnchorPair,
    dec_time: AnchorPair,
    manifest: BundleManifest,
}

/// Point on the line through `(q_min, at_qmin)` and `(q_max, at_qmax)`.
pub fn qp_line(at_qmin: f64, at_qmax: f64, q: f64, q_min: f64, q_max: f64) -> f64 {
    at_qmin + (q - q_min) * (at_qmax - at_qmin) / (q_max - q_min)
}

/// Inverts the log-bitrate line for `log2_target`.
///
/// `log2_at_qmin` is raised to `log2_at_qmax` if the anchors cross. The result
/// is clamped to `[q_min, q_max]` but not rounded.
pub fn qp_from_anchors(
    log2_at_qmin: f64,
    log2_at_qmax: f64,
    log2_target: f64,
    q_min: f64,
    q_max: f64,
) -> f64 {
    let l_max = log2_at_qmin.max(log2_at_qmax);
    let l_min = log2_at_qmax;
    if l_max == l_min {
        return if log2_target >= l_max { q_min } else { q_max };
    }
    let q = q_min + (q_max - q_min) * (l_max - log2_target) / (l_max - l_min);
    q.clamp(q_min, q_max)
}

fn check_bitrate(b: f64) -> Result<(), ModelError> {
    if b > 0.0 && b.is_finite() {
        Ok(())
    } else {
        Err(ModelError::InvalidBitrate(b))
    }
}

impl ModelBundle {
    pub fn new(
        xpsnr: TreeEnsemble,
        bitrate: AnchorPair,
        enc_time: AnchorPair,
        dec_time: AnchorPair,
        manifest: BundleManifest,
    ) -> Result<Self, ModelError> {
        if manifest.q_min >= manifest.q_max {
            return Err(ModelError::InvalidBundle(format!(
                "q_min {} must be below q_max {}",
                manifest.q_min, manifest.q_max
            )));
        }
        if manifest.r_norm_base == 0 {
            return Err(ModelError::InvalidBundle("r_norm_base must be positive".into()));
        }
        if manifest.schema != BUNDLE_SCHEMA {
            return Err(ModelError::Manifest(format!(
                "schema {:?}, expected {BUNDLE_SCHEMA:?}",
                manifest.schema
            )));
        }
        let expect = |role: &str, model: &TreeEnsemble, n: usize| {
            if model.feature_count == n {
                Ok(())
            } else {
                Err(ModelError::InvalidBundle(format!(
                    "{role} expects {} inputs, bundle provides {n}",
                    model.feature_count
                )))
            }
        };
        expect("xpsnr", &xpsnr, QUALITY_INPUTS)?;
        for (role, pair) in [("bitrate", &bitrate), ("enctime", &enc_time), ("dectime", &dec_time)] {
            expect(role, &pair.at_qmin, ANCHOR_INPUTS)?;
            expect(role, &pair.at_qmax, ANCHOR_INPUTS)?;
        }
        Ok(Self { xpsnr, bitrate, enc_time, dec_time, manifest })
    }

    pub fn manifest(&self) -> &BundleManifest {
        &self.manifest
    }

    pub fn xpsnr_model(&self) -> &TreeEnsemble {
        &self.xpsnr
    }

    pub fn bitrate_models(&self) -> &AnchorPair {
        &self.bitrate
    }

    pub fn enc_time_models(&self) -> &AnchorPair {
        &self.enc_time
    }

    pub fn dec_time_models(&self) -> &AnchorPair {
        &self.dec_time
    }

    pub fn normalized(&self, r: Resolution) -> f64 {
        f64::from(r.lines()) / f64::from(self.manifest.r_norm_base)
    }

    fn q_bounds(&self) -> (f64, f64) {
        (f64::from(self.manifest.q_min), f64::from(self.manifest.q_max))
    }

    pub fn anchor_input(&self, f: &SegmentFeatures, r: Resolution) -> [f64; ANCHOR_INPUTS] {
        let mut x = [0.0; ANCHOR_INPUTS];
        x[..FEATURE_COUNT].copy_from_slice(&f.to_array());
        x[FEATURE_COUNT] = self.normalized(r);
        x
    }

    pub fn quality_input(&self, f: &SegmentFeatures, r: Resolution, b_t: f64) -> [f64; QUALITY_INPUTS] {
        let mut x = [0.0; QUALITY_INPUTS];
        x[..ANCHOR_INPUTS].copy_from_slice(&self.anchor_input(f, r));
        x[ANCHOR_INPUTS] = b_t;
        x
    }

    /// Predicted XPSNR in dB.
    pub fn predict_xpsnr(&self, f: &SegmentFeatures, r: Resolution, b_t: f64) -> Result<f64, ModelError> {
        check_bitrate(b_t)?;
        Ok(self.xpsnr.eval(&self.quality_input(f, r, b_t)))
    }

    /// Clamped QP before rounding.
    pub fn predict_qp_real(&self, f: &SegmentFeatures, r: Resolution, b_t: f64) -> Result<f64, ModelError> {
        check_bitrate(b_t)?;
        Ok(self.qp_for(&self.anchor_input(f, r), b_t).0)
    }

    /// QP whose predicted bitrate is closest to `b_t`, rounded half away from zero.
    pub fn predict_qp(&self, f: &SegmentFeatures, r: Resolution, b_t: f64) -> Result<u32, ModelError> {
        Ok(self.predict_qp_real(f, r, b_t)?.round() as u32)
    }

    pub fn predict_enc_time(&self, f: &SegmentFeatures, r: Resolution, b_t: f64) -> Result<f64, ModelError> {
        check_bitrate(b_t)?;
        let x = self.anchor_input(f, r);
        let (q, _) = self.qp_for(&x, b_t);
        Ok(self.time_at(&self.enc_time, &x, q))
    }

    pub fn predict_dec_time(&self, f: &SegmentFeatures, r: Resolution, b_t: f64) -> Result<f64, ModelError> {
        check_bitrate(b_t)?;
        let x = self.anchor_input(f, r);
        let (q, _) = self.qp_for(&x, b_t);
        Ok(self.time_at(&self.dec_time, &x, q))
    }

    /// All four predictions, sharing the anchor evaluations.
    pub fn predict(&self, f: &SegmentFeatures, r: Resolution, b_t: f64) -> Result<Prediction, ModelError> {
        check_bitrate(b_t)?;
        let x = self.anchor_input(f, r);
        let (qp_real, anchor_inverted) = self.qp_for(&x, b_t);
        Ok(Prediction {
            xpsnr: self.xpsnr.eval(&self.quality_input(f, r, b_t)),
            qp_real,
            qp: qp_real.round() as u32,
            enc_time: self.time_at(&self.enc_time, &x, qp_real),
            dec_time: self.time_at(&self.dec_time, &x, qp_real),
            anchor_inverted,
        })
    }

    /// Predicted bitrate in Mbps at an arbitrary QP, from the anchor line.
    pub fn bitrate_at_qp(&self, f: &SegmentFeatures, r: Resolution, q: f64) -> f64 {
        self.time_at(&self.bitrate, &self.anchor_input(f, r), q)
    }

    fn qp_for(&self, x: &[f64], b_t: f64) -> (f64, bool) {
        let (q_min, q_max) = self.q_bounds();
        let hi = self.bitrate.at_qmin.eval(x);
        let lo = self.bitrate.at_qmax.eval(x);
        (qp_from_anchors(hi, lo, b_t.log2(), q_min, q_max), hi < lo)
    }

    fn time_at(&self, pair: &AnchorPair, x: &[f64], q: f64) -> f64 {
        let (q_min, q_max) = self.q_bounds();
        qp_line(pair.at_qmin.eval(x), pair.at_qmax.eval(x), q, q_min, q_max).exp2()
    }

    /// Writes the seven model files and the manifest into `dir`, creating it if needed.
    pub fn save_dir(&self, dir: &Path) -> Result<(), ModelError> {
        fs::create_dir_all(dir).map_err(|source| ModelError::Io { path: dir.into(), source })?;
        for (name, model) in self.roles() {
            model.save(&dir.join(name)).map_err(|source| ModelError::Model { role: name, source })?;
        }
        let manifest = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        let path = dir.join(files::MANIFEST);
        fs::write(&path, manifest).map_err(|source| ModelError::Io { path, source })
    }

    pub fn load_dir(dir: &Path) -> Result<Self, ModelError> {
        let path = dir.join(files::MANIFEST);
        let text = fs::read_to_string(&path).map_err(|source| ModelError::Io { path, source })?;
        let manifest: BundleManifest =
            serde_json::from_str(&text).map_err(|e| ModelError::Manifest(e.to_string()))?;
        let load = |name: &'static str| {
            TreeEnsemble::load(&dir.join(name)).map_err(|source| ModelError::Model { role: name, source })
        };
        Self::new(
            load(files::XPSNR)?,
            AnchorPair { at_qmin: load(files::BITRATE_QMIN)?, at_qmax: load(files::BITRATE_QMAX)? },
            AnchorPair { at_qmin: load(files::ENCTIME_QMIN)?, at_qmax: load(files::ENCTIME_QMAX)? },
            AnchorPair { at_qmin: load(files::DECTIME_QMIN)?, at_qmax: load(files::DECTIME_QMAX)? },
            manifest,
        )
    }

    fn roles(&self) -> [(&'static str, &TreeEnsemble); 7] {
        [
            (files::XPSNR, &self.xpsnr),
            (files::BITRATE_QMIN, &self.bitrate.at_qmin),
            (files::BITRATE_QMAX, &self.bitrate.at_qmax),
            (files::ENCTIME_QMIN, &self.enc_time.at_qmin),
            (files::ENCTIME_QMAX, &self.enc_time.at_qmax),
            (files::DECTIME_QMIN, &self.dec_time.at_qmin),
            (files::DECTIME_QMAX, &self.dec_time.at_qmax),
        ]
    }
}

/// Builds a bundle of constant models; handy for exercising the interpolation logic.
pub fn constant_bundle(
    xpsnr_db: f64,
    bitrate_mbps: (f64, f64),
    enc_time_s: (f64, f64),
    dec_time_s: (f64, f64),
) -> ModelBundle {
    let pair = |(a, b): (f64, f64)| AnchorPair {
        at_qmin: TreeEnsemble::constant(a.log2(), ANCHOR_INPUTS),
        at_qmax: TreeEnsemble::constant(b.log2(), ANCHOR_INPUTS),
    };
    ModelBundle::new(
        TreeEnsemble::constant(xpsnr_db, QUALITY_INPUTS),
        pair(bitrate_mbps),
        pair(enc_time_s),
        pair(dec_time_s),
        BundleManifest::default(),
    )
    .expect("constant bundle is well formed")
}
