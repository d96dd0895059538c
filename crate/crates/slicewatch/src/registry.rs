//! Per-slice model lookup by slice or S-NSSAI slice/service type.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use slicewatch_core::learn::{ModelArtifact, Scope};
use slicewatch_core::SliceId;

use crate::error::{Error, Result};
use crate::formats::read_model;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteKey {
    Slice(SliceId),
    Sst(u8),
}

impl From<SliceId> for RouteKey {
    fn from(s: SliceId) -> Self {
        RouteKey::Slice(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no model for {0} and no fallback configured")]
pub struct RoutingError(pub String);

/// Immutable once built; shared read-only by the service workers.
#[derive(Debug, Clone, Default)]
pub struct ModelRegistry {
    per_slice: BTreeMap<SliceId, Arc<ModelArtifact>>,
    fallback: Option<Arc<ModelArtifact>>,
}

impl ModelRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_slice(mut self, slice: SliceId, model: ModelArtifact) -> Self {
        self.per_slice.insert(slice, Arc::new(model));
        self
    }

    pub fn with_fallback(mut self, model: ModelArtifact) -> Self {
        self.fallback = Some(Arc::new(model));
        self
    }

    /// Files the artifact under its own scope: per-slice models by slice,
    /// global ones as the fallback.
    pub fn insert(&mut self, model: ModelArtifact) {
        match model.scope {
            Scope::PerSlice(s) => {
                self.per_slice.insert(s, Arc::new(model));
            }
            Scope::Global => self.fallback = Some(Arc::new(model)),
        }
    }

    pub fn load(paths: &[impl AsRef<Path>]) -> Result<Self> {
        let mut r = Self::new();
        for p in paths {
            r.insert(read_model(p.as_ref())?);
        }
        if r.is_empty() {
            return Err(Error::Usage("at least one model is required".into()));
        }
        Ok(r)
    }

    pub fn is_empty(&self) -> bool {
        self.per_slice.is_empty() && self.fallback.is_none()
    }

    pub fn slices(&self) -> impl Iterator<Item = SliceId> + '_ {
        self.per_slice.keys().copied()
    }

    pub fn has_fallback(&self) -> bool {
        self.fallback.is_some()
    }

    pub fn route(
        &self,
        key: impl Into<RouteKey>,
    ) -> std::result::Result<&Arc<ModelArtifact>, RoutingError> {
        let key = key.into();
        let slice = match key {
            RouteKey::Slice(s) => Some(s),
            RouteKey::Sst(sst) => SliceId::from_sst(sst).ok(),
        };
        slice
            .and_then(|s| self.per_slice.get(&s))
            .or(self.fallback.as_ref())
            .ok_or_else(|| {
                RoutingError(match key {
                    RouteKey::Slice(s) => format!("slice {s}"),
                    RouteKey::Sst(sst) => format!("sst {sst}"),
                })
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use slicewatch_core::features::NormalizationParams;
    use slicewatch_core::learn::{GridPoint, LogisticModel, Model, TrainingMeta, ARTIFACT_VERSION};

    fn artifact(scope: Scope, bias: f64) -> ModelArtifact {
        let mut m = LogisticModel::zeros(12);
        m.bias = bias;
        ModelArtifact {
            version: ARTIFACT_VERSION,
            scope,
            normalization: NormalizationParams {
                min: [0.0; 12],
                max: [1.0; 12],
            },
            meta: TrainingMeta {
                grid_point: GridPoint::Lr { c: 1.0 },
                cv_f1: None,
                seed: 0,
                dataset_digest: String::new(),
                n_train: 0,
            },
            model: Model::Lr(m),
        }
    }

    #[test]
    fn routes_by_slice_and_sst() {
        let r = ModelRegistry::new()
            .with_slice(SliceId::Embb, artifact(Scope::PerSlice(SliceId::Embb), 1.0))
            .with_slice(SliceId::Mmtc, artifact(Scope::PerSlice(SliceId::Mmtc), 3.0));
        assert_eq!(
            r.route(RouteKey::Sst(1)).unwrap().scope,
            Scope::PerSlice(SliceId::Embb)
        );
        assert_eq!(
            r.route(SliceId::Mmtc).unwrap().scope,
            Scope::PerSlice(SliceId::Mmtc)
        );
        assert!(r.route(SliceId::Urllc).is_err());
        assert_eq!(r.route(RouteKey::Sst(9)), Err(RoutingError("sst 9".into())));
    }

    #[test]
    fn fallback_catches_unknown() {
        let r = ModelRegistry::new()
            .with_slice(SliceId::Embb, artifact(Scope::PerSlice(SliceId::Embb), 1.0))
            .with_fallback(artifact(Scope::Global, 2.0));
        assert_eq!(r.route(RouteKey::Sst(9)).unwrap().scope, Scope::Global);
        assert_eq!(r.route(SliceId::Urllc).unwrap().scope, Scope::Global);
        assert_eq!(
            r.route(SliceId::Embb).unwrap().scope,
            Scope::PerSlice(SliceId::Embb)
        );
    }
}
