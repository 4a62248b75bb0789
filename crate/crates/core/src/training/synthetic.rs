//! Closed-form ground truth standing in for real encodes.
//!
//! Every quantity is a smooth function of the segment features, the
//! resolution and the QP:
//!
//! * `log2 bitrate` is affine in QP and in `log2` of the pixel count,
//! * XPSNR saturates towards a resolution-dependent ceiling as bitrate grows,
//!   so low resolutions win at low rates and high resolutions at high rates,
//! * `log2` encoding/decoding time is affine in QP and grows faster than the
//!   pixel count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TrainingRecord;
use crate::analyzer::SegmentFeatures;
use crate::models::{Resolution, Q_MAX, Q_MIN};

/// Content coefficients derived from the features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Latent {
    /// Spatial complexity in [0, 1].
    pub spatial: f64,
    /// Temporal complexity in [0, 1].
    pub temporal: f64,
    /// Chroma complexity in [0, 1].
    pub chroma: f64,
    /// Brightness in [0, 1].
    pub brightness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticOracle {
    /// Bitrate at QP 10, 2160p, zero complexity (Mbps).
    pub bitrate_base: f64,
    /// QP steps per halving of bitrate.
    pub qp_per_octave: f64,
    /// Exponent of pixel count in bitrate.
    pub bitrate_pixel_exp: f64,
    /// XPSNR ceiling at 2160p for flat content (dB).
    pub quality_ceiling: f64,
    /// XPSNR slope below the knee (dB per octave of bitrate).
    pub quality_slope: f64,
    /// Knee bitrate at 2160p for flat content (Mbps).
    pub knee_base: f64,
    /// Encoding time at QP 10, 2160p, zero complexity (s).
    pub enc_time_base: f64,
    pub enc_pixel_exp: f64,
    /// log2 encoding time lost per QP step.
    pub enc_qp_slope: f64,
    pub dec_time_base: f64,
    pub dec_pixel_exp: f64,
    pub dec_qp_slope: f64,
}

impl Default for SyntheticOracle {
    fn default() -> Self {
        Self {
            bitrate_base: 24.0,
            qp_per_octave: 4.5,
            bitrate_pixel_exp: 0.75,
            quality_ceiling: 46.0,
            quality_slope: 4.0,
            knee_base: 6.0,
            enc_time_base: 500.0,
            enc_pixel_exp: 1.1,
            enc_qp_slope: 0.05,
            dec_time_base: 8.0,
            dec_pixel_exp: 1.0,
            dec_qp_slope: 0.02,
        }
    }
}

fn unit(v: f64, lo: f64, hi: f64) -> f64 {
    ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
}

fn log2_pixel_ratio(r: Resolution) -> f64 {
    let top = Resolution::new(2160).expect("2160 is supported");
    (r.pixels() as f64 / top.pixels() as f64).log2()
}

impl SyntheticOracle {
    pub fn latent(&self, f: &SegmentFeatures) -> Latent {
        Latent {
            spatial: unit(f.e_y, 5.0, 60.0),
            temporal: unit(f.h, 0.5, 20.0),
            chroma: unit((f.e_u + f.e_v) / 2.0, 0.5, 24.0),
            brightness: unit(f.l_y, 40.0, 200.0),
        }
    }

    pub fn log2_bitrate(&self, f: &SegmentFeatures, r: Resolution, qp: f64) -> f64 {
        let c = self.latent(f);
        self.bitrate_base.log2() + 1.6 * c.spatial + 1.2 * c.temporal + 0.3 * c.chroma - 0.2 * c.brightness
            + self.bitrate_pixel_exp * log2_pixel_ratio(r)
            - (qp - f64::from(Q_MIN)) / self.qp_per_octave
    }

    /// Achieved bitrate in Mbps.
    pub fn bitrate(&self, f: &SegmentFeatures, r: Resolution, qp: f64) -> f64 {
        self.log2_bitrate(f, r, qp).exp2()
    }

    /// QP reaching `b` exactly, clamped to the QP range.
    pub fn qp_for_bitrate(&self, f: &SegmentFeatures, r: Resolution, b: f64) -> f64 {
        let at_qmin = self.log2_bitrate(f, r, f64::from(Q_MIN));
        (f64::from(Q_MIN) + (at_qmin - b.log2()) * self.qp_per_octave)
            .clamp(f64::from(Q_MIN), f64::from(Q_MAX))
    }

    pub fn xpsnr(&self, f: &SegmentFeatures, r: Resolution, b: f64) -> f64 {
        let c = self.latent(f);
        let ratio = log2_pixel_ratio(r);
        let downscale = (2160.0 / f64::from(r.lines())).log2();
        let ceiling =
            self.quality_ceiling - 2.0 * c.spatial - (2.5 + 3.5 * c.spatial) * downscale + 0.5 * c.brightness;
        let log2_knee =
            self.knee_base.log2() + 1.2 * c.spatial + 1.0 * c.temporal + 0.2 * c.chroma + 0.9 * ratio;
        let u = b.log2() - log2_knee;
        ceiling - self.quality_slope * (-u).exp2().ln_1p() / std::f64::consts::LN_2
    }

    pub fn psnr(&self, f: &SegmentFeatures, r: Resolution, b: f64) -> f64 {
        self.xpsnr(f, r, b) - 1.5 - self.latent(f).spatial
    }

    pub fn enc_time(&self, f: &SegmentFeatures, r: Resolution, qp: f64) -> f64 {
        let c = self.latent(f);
        (self.enc_time_base.log2()
            + self.enc_pixel_exp * log2_pixel_ratio(r)
            + 0.8 * c.spatial
            + 0.5 * c.temporal
            - self.enc_qp_slope * (qp - f64::from(Q_MIN)))
        .exp2()
    }

    pub fn dec_time(&self, f: &SegmentFeatures, r: Resolution, qp: f64) -> f64 {
        let c = self.latent(f);
        (self.dec_time_base.log2()
            + self.dec_pixel_exp * log2_pixel_ratio(r)
            + 0.3 * c.spatial
            + 0.2 * c.temporal
            - self.dec_qp_slope * (qp - f64::from(Q_MIN)))
        .exp2()
    }

    /// Resolution with the highest true XPSNR at bitrate `b`; ties go low.
    pub fn best_resolution(&self, f: &SegmentFeatures, b: f64, resolutions: &[Resolution]) -> Resolution {
        let mut best = resolutions[0];
        let mut best_q = self.xpsnr(f, best, b);
        for &r in &resolutions[1..] {
            let q = self.xpsnr(f, r, b);
            if q > best_q {
                best = r;
                best_q = q;
            }
        }
        best
    }

    /// Draws features uniformly over typical ranges of real content.
    pub fn sample_features(&self, rng: &mut impl Rng) -> SegmentFeatures {
        let e_y = rng.random_range(5.0..=60.0);
        SegmentFeatures {
            e_y,
            h: rng.random_range(0.5..=20.0),
            l_y: rng.random_range(40.0..=200.0),
            e_u: e_y * rng.random_range(0.1..=0.4),
            e_v: e_y * rng.random_range(0.1..=0.4),
            l_u: rng.random_range(100.0..=150.0),
            l_v: rng.random_range(100.0..=160.0),
        }
    }

    /// One record per (resolution, QP) for the given segment.
    pub fn records_for(
        &self,
        segment_id: &str,
        f: &SegmentFeatures,
        resolutions: &[Resolution],
        qps: &[u32],
    ) -> Vec<TrainingRecord> {
        let mut out = Vec::with_capacity(resolutions.len() * qps.len());
        for &r in resolutions {
            for &qp in qps {
                let q = f64::from(qp);
                let b = self.bitrate(f, r, q);
                out.push(TrainingRecord {
                    segment_id: segment_id.to_string(),
                    features: *f,
                    resolution: r,
                    qp,
                    bitrate_mbps: b,
                    xpsnr_db: self.xpsnr(f, r, b),
                    psnr_db: self.psnr(f, r, b),
                    enc_time_s: self.enc_time(f, r, q),
                    dec_time_s: self.dec_time(f, r, q),
                });
            }
        }
        out
    }
}

/// Bounded uniform perturbation applied to generated records.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Noise {
    /// Maximum absolute XPSNR/PSNR perturbation in dB.
    pub quality_db: f64,
    /// Maximum absolute perturbation of log2 bitrate and log2 times.
    pub log2_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_segments: usize,
    pub resolutions: Vec<Resolution>,
    /// Sampled QPs; must include both anchors for the data to be trainable.
    pub qps: Vec<u32>,
    pub seed: u64,
    pub noise: Noise,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_segments: 200,
            resolutions: Resolution::all().collect(),
            qps: (Q_MIN..=Q_MAX).step_by(2).collect(),
            seed: 0x5eed,
            noise: Noise::default(),
        }
    }
}

/// Segment ids are `syn0000`, `syn0001`, ...
pub fn generate_synthetic_dataset(oracle: &SyntheticOracle, cfg: &SyntheticConfig) -> Vec<TrainingRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // separate stream so noise never shifts the feature draws
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut qps = cfg.qps.clone();
    qps.sort_unstable();
    qps.dedup();
    let mut records = Vec::with_capacity(cfg.n_segments * cfg.resolutions.len() * qps.len());
    for s in 0..cfg.n_segments {
        let f = oracle.sample_features(&mut rng);
        let mut rows = oracle.records_for(&format!("syn{s:04}"), &f, &cfg.resolutions, &qps);
        if cfg.noise != Noise::default() {
            for rec in &mut rows {
                let mut jitter = |amp: f64| if amp > 0.0 { noise_rng.random_range(-amp..=amp) } else { 0.0 };
                let dq = jitter(cfg.noise.quality_db);
                rec.xpsnr_db += dq;
                rec.psnr_db += dq;
                rec.bitrate_mbps *= jitter(cfg.noise.log2_rate).exp2();
                rec.enc_time_s *= jitter(cfg.noise.log2_rate).exp2();
                rec.dec_time_s *= jitter(cfg.noise.log2_rate).exp2();
            }
        }
        records.extend(rows);
    }
    records
}
