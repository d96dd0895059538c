#![allow(dead_code)]

use slicewatch_core::attack::inject_all;
use slicewatch_core::eval::experiment::{default_attacks, of_slice};
use slicewatch_core::features::{extract_all, FeatureVector};
use slicewatch_core::flow::aggregate;
use slicewatch_core::learn::{train_artifact_on_grid, GridPoint, ModelArtifact, ModelKind, Scope};
use slicewatch_core::traffic::ScenarioConfig;
use slicewatch_core::{PacketRecord, SliceId};

use slicewatch::registry::ModelRegistry;

/// Attacked desk-density capture of `secs` seconds.
pub fn capture(seed: u64, secs: f64) -> Vec<PacketRecord> {
    let mut c = ScenarioConfig::desk_scale(seed);
    c.duration_s = secs;
    let benign = c.generate().unwrap();
    inject_all(&benign, &default_attacks(0.2, seed ^ 0x77))
        .unwrap()
        .0
}

pub fn features(packets: &[PacketRecord]) -> Vec<FeatureVector> {
    extract_all(&aggregate(packets, 2).unwrap())
}

pub fn small_model(kind: ModelKind, scope: Scope, data: &[FeatureVector]) -> ModelArtifact {
    let grid = match kind {
        ModelKind::Lr => vec![GridPoint::Lr { c: 1.0 }],
        ModelKind::Rf => vec![GridPoint::Rf {
            n_estimators: 20,
            max_depth: Some(10),
        }],
    };
    train_artifact_on_grid(kind, scope, data, &grid, 3, 5)
        .unwrap()
        .0
}

/// Per-slice RF models trained on their own capture.
pub fn rf_registry(seed: u64, secs: f64) -> ModelRegistry {
    let data = features(&capture(seed, secs));
    let mut r = ModelRegistry::new();
    for s in SliceId::ALL {
        r = r.with_slice(
            s,
            small_model(ModelKind::Rf, Scope::PerSlice(s), &of_slice(&data, s)),
        );
    }
    r
}
