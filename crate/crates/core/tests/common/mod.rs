#![allow(dead_code)]

use std::sync::OnceLock;

use ladder_core::analyzer::SegmentFeatures;
use ladder_core::gbt::GbtParams;
use ladder_core::models::ModelBundle;
use ladder_core::training::{generate_synthetic_dataset, train_bundle, SyntheticConfig, SyntheticOracle};
use rand::Rng;

/// Small bundle trained on noise-free synthetic data, shared across tests.
pub fn trained_bundle() -> &'static ModelBundle {
    static BUNDLE: OnceLock<ModelBundle> = OnceLock::new();
    BUNDLE.get_or_init(|| {
        let cfg = SyntheticConfig {
            n_segments: 40,
            qps: (10..=50).step_by(4).collect(),
            ..SyntheticConfig::default()
        };
        let records = generate_synthetic_dataset(&SyntheticOracle::default(), &cfg);
        let params = GbtParams { max_depth: 5, n_trees: 80, learning_rate: 0.2, min_samples_leaf: 2 };
        train_bundle(&records, &params, None).expect("synthetic data trains")
    })
}

pub fn random_features(rng: &mut impl Rng) -> SegmentFeatures {
    SyntheticOracle::default().sample_features(rng)
}
