//! Content-adaptive bitrate ladder construction: segment analysis, boosted
//! tree regressors, prediction models and per-segment ladder building.

pub mod analyzer;
pub mod gbt;
pub mod ladder;
pub mod models;
pub mod training;
