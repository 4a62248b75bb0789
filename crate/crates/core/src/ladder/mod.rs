//! Per-bitrate resolution/QP selection under encoding and decoding time budgets.

mod jnd;
mod output;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyzer::SegmentFeatures;
use crate::models::{ModelBundle, ModelError, Prediction, Resolution, SUPPORTED_RESOLUTIONS};

pub use jnd::{jnd_elimination, jnd_verdicts, JndVerdict};
pub use output::{
    emit_encoder_commands, emit_results_csv, read_results_csv, write_results_csv, ResultRow,
    DEFAULT_RESULTS_CSV, RESULTS_CSV_HEADER,
};

/// Target bitrates (Mbps) of the reference ladder.
pub const DEFAULT_BITRATES: [f64; 12] = [0.145, 0.3, 0.6, 0.9, 1.6, 2.4, 3.4, 4.5, 5.8, 8.1, 11.6, 16.8];

/// Encoding-time budgets (seconds) of the reference sweep.
pub const TAU_E_SWEEP: [f64; 5] = [100.0, 200.0, 400.0, 800.0, f64::INFINITY];

#[derive(Debug, Error)]
pub enum LadderError {
    #[error("invalid ladder config: {0}")]
    InvalidConfig(String),
    #[error("no candidate resolution at or below r_max {0}")]
    NoResolutions(Resolution),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no template for codec {0:?}")]
    UnknownCodec(String),
    #[error("{}: {message}", path.display())]
    Output { path: std::path::PathBuf, message: String },
}

/// What to do with a bitrate for which no resolution meets the time budgets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackPolicy {
    /// Leave the rung out of the ladder.
    #[default]
    Drop,
    /// Encode it at the lowest configured resolution anyway.
    LowestResolution,
}

impl FromStr for FallbackPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "drop" => Ok(Self::Drop),
            "lowest_resolution" | "lowest-resolution" | "lowest" => Ok(Self::LowestResolution),
            other => Err(format!("unknown fallback policy {other:?} (drop | lowest_resolution)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderConfig {
    /// Candidate resolutions, ascending.
    pub resolutions: Vec<Resolution>,
    /// Target bitrates in Mbps, strictly ascending.
    pub bitrates: Vec<f64>,
    /// Encoding-time budget in seconds (`f64::INFINITY` for none).
    pub tau_e: f64,
    /// Decoding-time budget in seconds (`f64::INFINITY` for none).
    pub tau_d: f64,
    pub r_max: Resolution,
    /// Minimum XPSNR gap (dB) between kept rungs; 0 disables pruning.
    pub jnd: f64,
    /// XPSNR above which a rung counts as perceptually lossless.
    pub max_quality: f64,
    pub codec: String,
    pub fallback: FallbackPolicy,
}

impl Default for LadderConfig {
    fn default() -> Self {
        Self {
            resolutions: Resolution::all().collect(),
            bitrates: DEFAULT_BITRATES.to_vec(),
            tau_e: f64::INFINITY,
            tau_d: f64::INFINITY,
            r_max: Resolution::new(2160).expect("2160 is supported"),
            jnd: 0.0,
            max_quality: 100.0,
            codec: "vvenc".into(),
            fallback: FallbackPolicy::Drop,
        }
    }
}

impl LadderConfig {
    pub fn validate(&self) -> Result<(), LadderError> {
        let bad = |msg: String| Err(LadderError::InvalidConfig(msg));
        if self.resolutions.is_empty() {
            return bad("resolution set is empty".into());
        }
        if self.resolutions.windows(2).any(|w| w[0] >= w[1]) {
            return bad("resolutions must be strictly ascending".into());
        }
        if !self.resolutions.contains(&self.r_max) {
            return bad(format!("r_max {} is not in the resolution set", self.r_max));
        }
        if self.bitrates.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return bad("bitrates must be positive and finite".into());
        }
        if self.bitrates.windows(2).any(|w| w[0] >= w[1]) {
            return bad("bitrates must be strictly ascending".into());
        }
        for (name, tau) in [("tau_E", self.tau_e), ("tau_D", self.tau_d)] {
            if tau.is_nan() || tau <= 0.0 {
                return bad(format!("{name} must be positive, got {tau}"));
            }
        }
        if !(self.jnd.is_finite() && self.jnd >= 0.0) {
            return bad(format!("jnd must be non-negative, got {}", self.jnd));
        }
        if self.max_quality.is_nan() {
            return bad("max_quality is NaN".into());
        }
        Ok(())
    }

    /// Configured resolutions not above `r_max`.
    pub fn candidate_resolutions(&self) -> impl Iterator<Item = Resolution> + '_ {
        self.resolutions.iter().copied().filter(|r| *r <= self.r_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RungStatus {
    Selected,
    /// No resolution met the budgets; kept at the lowest resolution per
    /// [`FallbackPolicy::LowestResolution`]. Its times may exceed the budgets.
    Fallback,
    DroppedTimeBudget,
    DroppedJnd,
    DroppedLossless,
}

impl RungStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Selected => "selected",
            Self::Fallback => "fallback",
            Self::DroppedTimeBudget => "dropped_time_budget",
            Self::DroppedJnd => "dropped_jnd",
            Self::DroppedLossless => "dropped_lossless",
        }
    }

    /// Whether the rung is part of the emitted ladder.
    pub fn is_kept(self) -> bool {
        matches!(self, Self::Selected | Self::Fallback)
    }
}

impl fmt::Display for RungStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RungStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Self::Selected, Self::Fallback, Self::DroppedTimeBudget, Self::DroppedJnd, Self::DroppedLossless]
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown rung status {s:?}"))
    }
}

/// One rung of a ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    pub target_bitrate: f64,
    pub resolution: Resolution,
    pub qp: u32,
    pub predicted_xpsnr: f64,
    pub predicted_enc_time: f64,
    pub predicted_dec_time: f64,
    pub status: RungStatus,
    /// Wall time spent predicting this rung.
    pub prediction_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BitrateLadder {
    pub segment_id: String,
    /// Ascending target bitrate.
    pub rungs: Vec<Representation>,
}

impl BitrateLadder {
    pub fn kept(&self) -> impl Iterator<Item = &Representation> {
        self.rungs.iter().filter(|r| r.status.is_kept())
    }
}

/// Predictions for one candidate resolution at one bitrate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub resolution: Resolution,
    pub prediction: Prediction,
}

impl Candidate {
    pub fn within_budget(&self, tau_e: f64, tau_d: f64) -> bool {
        self.prediction.enc_time <= tau_e && self.prediction.dec_time <= tau_d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Choice {
    Selected(usize),
    Fallback(usize),
    Dropped,
}

/// Picks the candidate with the highest predicted quality among those within
/// both budgets. Equal quality goes to the earlier (lower) resolution.
pub fn choose_resolution(
    candidates: &[Candidate],
    tau_e: f64,
    tau_d: f64,
    fallback: FallbackPolicy,
) -> Choice {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        if !c.within_budget(tau_e, tau_d) {
            continue;
        }
        if best.is_none_or(|(_, q)| c.prediction.xpsnr > q) {
            best = Some((i, c.prediction.xpsnr));
        }
    }
    match (best, fallback) {
        (Some((i, _)), _) => Choice::Selected(i),
        (None, FallbackPolicy::LowestResolution) if !candidates.is_empty() => Choice::Fallback(0),
        (None, _) => Choice::Dropped,
    }
}

/// Outcome of [`select_best_resolution`] with the per-resolution diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub choice: Choice,
    pub candidates: Vec<Candidate>,
}

impl Selection {
    pub fn chosen(&self) -> Option<&Candidate> {
        match self.choice {
            Choice::Selected(i) | Choice::Fallback(i) => Some(&self.candidates[i]),
            Choice::Dropped => None,
        }
    }

    pub fn resolution(&self) -> Option<Resolution> {
        self.chosen().map(|c| c.resolution)
    }
}

/// Evaluates every resolution up to `r_max` at bitrate `b_t` and picks the best
/// one that meets the time budgets.
pub fn select_best_resolution(
    bundle: &ModelBundle,
    features: &SegmentFeatures,
    b_t: f64,
    cfg: &LadderConfig,
) -> Result<Selection, LadderError> {
    let candidates = cfg
        .candidate_resolutions()
        .map(|r| Ok(Candidate { resolution: r, prediction: bundle.predict(features, r, b_t)? }))
        .collect::<Result<Vec<_>, ModelError>>()?;
    if candidates.is_empty() {
        return Err(LadderError::NoResolutions(cfg.r_max));
    }
    let choice = choose_resolution(&candidates, cfg.tau_e, cfg.tau_d, cfg.fallback);
    Ok(Selection { choice, candidates })
}

fn representation(b_t: f64, c: &Candidate, status: RungStatus, elapsed: Duration) -> Representation {
    Representation {
        target_bitrate: b_t,
        resolution: c.resolution,
        qp: c.prediction.qp,
        predicted_xpsnr: c.prediction.xpsnr,
        predicted_enc_time: c.prediction.enc_time,
        predicted_dec_time: c.prediction.dec_time,
        status,
        prediction_time: elapsed,
    }
}

/// Applies JND pruning to the kept rungs of `rungs`, updating their status.
pub fn apply_jnd(rungs: &mut [Representation], jnd: f64, max_quality: f64) {
    let kept: Vec<usize> = (0..rungs.len()).filter(|&i| rungs[i].status.is_kept()).collect();
    let quality: Vec<f64> = kept.iter().map(|&i| rungs[i].predicted_xpsnr).collect();
    for (&i, verdict) in kept.iter().zip(jnd_verdicts(&quality, jnd, max_quality)) {
        match verdict {
            JndVerdict::Kept => {}
            JndVerdict::DroppedJnd => rungs[i].status = RungStatus::DroppedJnd,
            JndVerdict::DroppedLossless => rungs[i].status = RungStatus::DroppedLossless,
        }
    }
}

/// Builds the full ladder for one segment.
///
/// Rungs that miss the time budgets stay in the output with status
/// `dropped_time_budget` and the lowest candidate's predictions.
pub fn build_ladder(
    bundle: &ModelBundle,
    features: &SegmentFeatures,
    cfg: &LadderConfig,
    segment_id: &str,
) -> Result<BitrateLadder, LadderError> {
    cfg.validate()?;
    let mut rungs = Vec::with_capacity(cfg.bitrates.len());
    for &b_t in &cfg.bitrates {
        let start = Instant::now();
        let selection = select_best_resolution(bundle, features, b_t, cfg)?;
        let elapsed = start.elapsed();
        let (candidate, status) = match selection.choice {
            Choice::Selected(i) => (&selection.candidates[i], RungStatus::Selected),
            Choice::Fallback(i) => (&selection.candidates[i], RungStatus::Fallback),
            Choice::Dropped => (&selection.candidates[0], RungStatus::DroppedTimeBudget),
        };
        rungs.push(representation(b_t, candidate, status, elapsed));
    }
    apply_jnd(&mut rungs, cfg.jnd, cfg.max_quality);
    Ok(BitrateLadder { segment_id: segment_id.to_string(), rungs })
}

/// Supported resolutions rendered for diagnostics.
pub fn supported_resolutions_list() -> String {
    let items: Vec<String> = SUPPORTED_RESOLUTIONS.iter().map(u32::to_string).collect();
    format!("{{{}}}", items.join(","))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::constant_bundle;

    fn candidate(lines: u32, xpsnr: f64, enc: f64, dec: f64) -> Candidate {
        Candidate {
            resolution: Resolution::new(lines).unwrap(),
            prediction: Prediction {
                xpsnr,
                qp_real: 30.0,
                qp: 30,
                enc_time: enc,
                dec_time: dec,
                anchor_inverted: false,
            },
        }
    }

    #[test]
    fn picks_highest_quality_within_budget() {
        let c = [
            candidate(360, 30.0, 10.0, 1.0),
            candidate(720, 34.0, 90.0, 2.0),
            candidate(1080, 36.0, 150.0, 3.0),
        ];
        assert_eq!(
            choose_resolution(&c, f64::INFINITY, f64::INFINITY, FallbackPolicy::Drop),
            Choice::Selected(2)
        );
        assert_eq!(choose_resolution(&c, 100.0, f64::INFINITY, FallbackPolicy::Drop), Choice::Selected(1));
        assert_eq!(choose_resolution(&c, 100.0, 1.5, FallbackPolicy::Drop), Choice::Selected(0));
    }

    #[test]
    fn ties_go_to_lower_resolution() {
        let c = [candidate(360, 35.0, 1.0, 1.0), candidate(540, 35.0, 2.0, 1.0)];
        assert_eq!(choose_resolution(&c, 10.0, 10.0, FallbackPolicy::Drop), Choice::Selected(0));
    }

    #[test]
    fn fallback_policies() {
        let c = [candidate(360, 30.0, 500.0, 1.0), candidate(720, 34.0, 900.0, 2.0)];
        assert_eq!(choose_resolution(&c, 100.0, 10.0, FallbackPolicy::Drop), Choice::Dropped);
        assert_eq!(choose_resolution(&c, 100.0, 10.0, FallbackPolicy::LowestResolution), Choice::Fallback(0));
    }

    #[test]
    fn config_validation() {
        let mut cfg = LadderConfig::default();
        cfg.validate().unwrap();
        cfg.r_max = Resolution::new(720).unwrap();
        cfg.resolutions = vec![Resolution::new(1080).unwrap()];
        assert!(cfg.validate().is_err());
        let mut cfg = LadderConfig { bitrates: vec![1.0, 1.0], ..LadderConfig::default() };
        assert!(cfg.validate().is_err());
        cfg.bitrates = vec![1.0];
        cfg.jnd = -1.0;
        assert!(cfg.validate().is_err());
        cfg.jnd = 0.0;
        cfg.tau_e = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unconstrained_ladder_keeps_every_rung() {
        let bundle = constant_bundle(40.0, (10.0, 0.1), (400.0, 100.0), (4.0, 1.0));
        let f = SegmentFeatures::from_array([20.0, 5.0, 120.0, 4.0, 4.0, 128.0, 128.0]);
        let ladder = build_ladder(&bundle, &f, &LadderConfig::default(), "s").unwrap();
        assert_eq!(ladder.rungs.len(), 12);
        assert!(ladder.rungs.iter().all(|r| r.status == RungStatus::Selected));
        // constant quality: ties resolve to the lowest resolution
        assert!(ladder.rungs.iter().all(|r| r.resolution.lines() == 360));
    }

    #[test]
    fn budget_below_everything_drops() {
        let bundle = constant_bundle(40.0, (10.0, 0.1), (400.0, 100.0), (4.0, 1.0));
        let f = SegmentFeatures::from_array([20.0, 5.0, 120.0, 4.0, 4.0, 128.0, 128.0]);
        let cfg = LadderConfig { tau_e: 50.0, ..LadderConfig::default() };
        let ladder = build_ladder(&bundle, &f, &cfg, "s").unwrap();
        assert!(ladder.rungs.iter().all(|r| r.status == RungStatus::DroppedTimeBudget));
        let cfg = LadderConfig { fallback: FallbackPolicy::LowestResolution, ..cfg };
        let ladder = build_ladder(&bundle, &f, &cfg, "s").unwrap();
        assert!(ladder.rungs.iter().all(|r| r.status == RungStatus::Fallback));
    }

    #[test]
    fn status_strings_round_trip() {
        for s in ["selected", "fallback", "dropped_time_budget", "dropped_jnd", "dropped_lossless"] {
            assert_eq!(s.parse::<RungStatus>().unwrap().as_str(), s);
        }
    }
}
