//! Removal of perceptually redundant rungs.

use super::Representation;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JndVerdict {
    Kept,
    /// Less than one JND above the previously kept rung.
    DroppedJnd,
    /// Follows a kept rung that already exceeded the lossless threshold.
    DroppedLossless,
}

/// Decides which rungs survive, given their quality in ascending bitrate order.
///
/// A zero `jnd` keeps everything. Otherwise the first rung is kept, and each
/// later rung is kept only if it is at least `jnd` above the last kept one.
/// As soon as a kept rung is above `max_quality` the walk stops and the
/// remaining rungs are marked lossless.
pub fn jnd_verdicts(quality: &[f64], jnd: f64, max_quality: f64) -> Vec<JndVerdict> {
    if jnd == 0.0 {
        return vec![JndVerdict::Kept; quality.len()];
    }
    let mut verdicts = vec![JndVerdict::DroppedLossless; quality.len()];
    let Some(&first) = quality.first() else {
        return verdicts;
    };
    verdicts[0] = JndVerdict::Kept;
    if first > max_quality {
        return verdicts;
    }
    let mut last_kept = first;
    for (i, &q) in quality.iter().enumerate().skip(1) {
        if q - last_kept >= jnd {
            verdicts[i] = JndVerdict::Kept;
            last_kept = q;
            if q > max_quality {
                return verdicts;
            }
        } else {
            verdicts[i] = JndVerdict::DroppedJnd;
        }
    }
    verdicts
}

/// Returns the rungs that survive pruning, in input order.
pub fn jnd_elimination(rungs: &[Representation], jnd: f64, max_quality: f64) -> Vec<Representation> {
    let quality: Vec<f64> = rungs.iter().map(|r| r.predicted_xpsnr).collect();
    rungs
        .iter()
        .zip(jnd_verdicts(&quality, jnd, max_quality))
        .filter(|(_, v)| *v == JndVerdict::Kept)
        .map(|(r, _)| r.clone())
        .collect()
}
