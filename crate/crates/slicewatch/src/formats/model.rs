//! Model artifact files: pretty JSON of the artifact under a small header.
//! Floats are written shortest-round-trip, so loading gives back the exact bits.

use std::path::Path;

use serde::{Deserialize, Serialize};
use slicewatch_core::learn::{ModelArtifact, ModelKind, ARTIFACT_VERSION};

use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "slicewatch-model";

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    kind: ModelKind,
    artifact: ModelArtifact,
}

pub fn model_to_string(a: &ModelArtifact) -> Result<String> {
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        kind: a.kind(),
        artifact: a.clone(),
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_model(path: &Path, a: &ModelArtifact) -> Result<()> {
    let mut text = model_to_string(a)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: &Path) -> Result<ModelArtifact> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: String| Error::Parse {
        path: path.into(),
        line: 0,
        msg,
    };
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    if file.format != MODEL_FORMAT {
        return Err(bad(format!("not a model file (format `{}`)", file.format)));
    }
    if file.artifact.version != ARTIFACT_VERSION {
        return Err(bad(format!(
            "unsupported artifact version {}",
            file.artifact.version
        )));
    }
    if file.kind != file.artifact.kind() {
        return Err(bad("header kind disagrees with the model body".into()));
    }
    Ok(file.artifact)
}

#[cfg(test)]
mod tests {
    use super::*;
    use slicewatch_core::eval::experiment::{build_labeled, of_slice, train_pair, CampaignSpec};
    use slicewatch_core::learn::{GridPoint, Scope};
    use slicewatch_core::SliceId;

    #[test]
    fn artifacts_round_trip_exactly() {
        let spec = CampaignSpec {
            duration_s: 40.0,
            rf_grid: vec![GridPoint::Rf {
                n_estimators: 10,
                max_depth: None,
            }],
            lr_grid: vec![GridPoint::Lr { c: 1.0 }],
            folds: 3,
            ..CampaignSpec::desk(0.2)
        };
        let data = of_slice(&build_labeled(&spec, 1).unwrap().vectors, SliceId::Mmtc);
        let pair = train_pair(Scope::PerSlice(SliceId::Mmtc), &data, &spec, 7).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for a in [&pair.lr, &pair.rf] {
            let path = dir.path().join(format!("{}.json", a.kind().as_str()));
            write_model(&path, a).unwrap();
            let back = read_model(&path).unwrap();
            assert_eq!(&back, a);
            for f in &data {
                assert_eq!(
                    back.confidence(&f.values).to_bits(),
                    a.confidence(&f.values).to_bits()
                );
            }
        }
    }

    #[test]
    fn rejects_foreign_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(&path, "{\"format\":\"x\"}").unwrap();
        assert!(matches!(read_model(&path), Err(Error::Parse { .. })));
        assert!(matches!(
            read_model(&dir.path().join("none.json")),
            Err(Error::MissingInput(_))
        ));
    }
}
