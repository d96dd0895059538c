//! Experiment manifests: every knob of a campaign in one JSON document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use slicewatch_core::attack::AttackConfig;
use slicewatch_core::eval::experiment::{default_attacks, CampaignSpec};
use slicewatch_core::learn::{lr_grid, rf_grid, GridPoint};
use slicewatch_core::traffic::{ScenarioConfig, TrafficParams};
use slicewatch_core::{SliceId, SliceProfile};

use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub duration_s: f64,
    pub params: TrafficParams,
    pub profiles: Vec<SliceProfile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub window_lens: Vec<u64>,
    pub intensities: Vec<f64>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemporalSection {
    pub slices: Vec<SliceId>,
    /// Seed of the onset scenario; distinct from the training seeds.
    pub seed: u64,
    pub onset_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub format_version: u32,
    pub scenario: ScenarioSection,
    /// Templates; each run splits its intensity evenly over them.
    pub attacks: Vec<AttackConfig>,
    pub seeds: Vec<u64>,
    pub intensities: Vec<f64>,
    /// Intensity of the headline table, comparison and cross-session study.
    pub headline_intensity: f64,
    pub window_len_s: u64,
    pub test_fraction: f64,
    pub folds: usize,
    pub tolerance_ms: u64,
    pub threshold: f64,
    pub lr_grid: Vec<GridPoint>,
    pub rf_grid: Vec<GridPoint>,
    pub sweep: SweepSection,
    pub temporal: TemporalSection,
    pub output_dir: PathBuf,
}

impl ExperimentManifest {
    fn from_scenario(s: ScenarioConfig, output_dir: PathBuf) -> Self {
        ExperimentManifest {
            format_version: MANIFEST_VERSION,
            scenario: ScenarioSection {
                duration_s: s.duration_s,
                params: s.params,
                profiles: s.profiles,
            },
            attacks: default_attacks(0.2, 0),
            seeds: vec![0, 1, 2],
            intensities: vec![0.1, 0.2, 0.4],
            headline_intensity: 0.2,
            window_len_s: 2,
            test_fraction: 0.2,
            folds: 5,
            tolerance_ms: 1,
            threshold: 0.5,
            lr_grid: lr_grid(),
            rf_grid: rf_grid(),
            sweep: SweepSection {
                window_lens: vec![1, 2, 3, 4],
                intensities: vec![0.1, 0.2, 0.4],
                seeds: vec![0, 1, 2],
            },
            temporal: TemporalSection {
                slices: SliceId::ALL.to_vec(),
                seed: 100,
                onset_s: s.duration_s / 3.0,
            },
            output_dir,
        }
    }

    pub fn desk(output_dir: impl Into<PathBuf>) -> Self {
        Self::from_scenario(ScenarioConfig::desk_scale(0), output_dir.into())
    }

    pub fn paper(output_dir: impl Into<PathBuf>) -> Self {
        Self::from_scenario(ScenarioConfig::paper_scale(0), output_dir.into())
    }

    /// Campaign settings of one cell.
    pub fn spec(&self, intensity: f64, window_len_s: u64) -> CampaignSpec {
        CampaignSpec {
            duration_s: self.scenario.duration_s,
            params: self.scenario.params.clone(),
            profiles: self.scenario.profiles.clone(),
            intensity,
            window_len_s,
            test_fraction: self.test_fraction,
            folds: self.folds,
            tolerance_ms: self.tolerance_ms,
            threshold: self.threshold,
            lr_grid: self.lr_grid.clone(),
            rf_grid: self.rf_grid.clone(),
            attacks: self.attacks.clone(),
        }
    }

    pub fn headline_spec(&self) -> CampaignSpec {
        self.spec(self.headline_intensity, self.window_len_s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Usage(m.into()));
        if self.format_version != MANIFEST_VERSION {
            return bad("unsupported manifest format_version");
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        if !(self.scenario.duration_s > 0.0) {
            return bad("duration must be positive");
        }
        if self.attacks.is_empty() {
            return bad("at least one attack template is required");
        }
        let intensities = self
            .intensities
            .iter()
            .chain(&self.sweep.intensities)
            .chain([&self.headline_intensity]);
        for &i in intensities {
            if !(i > 0.0 && i <= 1.0) {
                return bad("intensities must be in (0, 1]");
            }
        }
        if !self.intensities.contains(&self.headline_intensity) {
            return bad("headline_intensity must be one of the campaign intensities");
        }
        for &w in self.sweep.window_lens.iter().chain([&self.window_len_s]) {
            if !(1..=4).contains(&w) {
                return bad("window lengths must be 1 to 4 seconds");
            }
        }
        if self.folds < 2 || !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad("folds must be >= 2 and test_fraction in (0, 1)");
        }
        if self.lr_grid.is_empty() || self.rf_grid.is_empty() {
            return bad("model grids must not be empty");
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad("threshold must be in [0, 1]");
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return bad("seeds must be distinct");
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// Hex SHA-256 of everything except the output directory.
    pub fn digest(&self) -> String {
        let m = ExperimentManifest {
            output_dir: PathBuf::new(),
            ..self.clone()
        };
        hex_digest(
            serde_json::to_string(&m)
                .expect("manifest serializes")
                .as_bytes(),
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: ExperimentManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.into(),
            line: e.line() as u64,
            msg: e.to_string(),
        })?;
        m.validate()?;
        Ok(m)
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
