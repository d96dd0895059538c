//! End-to-end experiment drivers: labeled dataset construction, per-seed
//! campaigns, the slice-aware comparison, cross-session validation, the
//! temporal onset study and the robustness sweep.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::attack::{inject_all, AttackConfig, AttackStrategy, Onset};
use crate::error::{Error, Result};
use crate::features::{extract_all, Feature, FeatureVector};
use crate::flow::{aggregate, join_agreement, join_labels, FlowKey, LabelJoinReport};
use crate::learn::{
    feature_importance, lr_grid, rf_grid, train_artifact_on_grid, GridPoint, ModelArtifact,
    ModelKind, Scope,
};
use crate::rng::{derive, rng_for};
use crate::slice::{SliceId, SliceProfile};
use crate::traffic::{ScenarioConfig, TrafficParams, US_PER_SEC};

use super::baseline::{rule_baseline, RuleBaselineConfig, DEFAULT_SIGMAS};
use super::metrics::{compute_metrics, compute_scored_metrics, roc_auc, MetricsRecord, RocCurve};
use super::ttest::{paired_t_test, TTestResult, DEFAULT_ALPHA};

/// Everything that determines one campaign cell apart from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub duration_s: f64,
    pub params: TrafficParams,
    pub profiles: Vec<SliceProfile>,
    pub intensity: f64,
    pub window_len_s: u64,
    pub test_fraction: f64,
    pub folds: usize,
    pub tolerance_ms: u64,
    pub threshold: f64,
    pub lr_grid: Vec<GridPoint>,
    pub rf_grid: Vec<GridPoint>,
    /// Attack templates; each run splits the intensity evenly over them and
    /// overrides their seeds.
    pub attacks: Vec<AttackConfig>,
}

impl CampaignSpec {
    pub fn desk(intensity: f64) -> Self {
        let s = ScenarioConfig::desk_scale(0);
        CampaignSpec {
            duration_s: s.duration_s,
            params: s.params,
            profiles: s.profiles,
            intensity,
            window_len_s: 2,
            test_fraction: 0.2,
            folds: 5,
            tolerance_ms: 1,
            threshold: 0.5,
            lr_grid: lr_grid(),
            rf_grid: rf_grid(),
            attacks: default_attacks(intensity, 0),
        }
    }

    pub fn paper(intensity: f64) -> Self {
        let s = ScenarioConfig::paper_scale(0);
        CampaignSpec {
            duration_s: s.duration_s,
            params: s.params,
            profiles: s.profiles,
            ..CampaignSpec::desk(intensity)
        }
    }

    /// The attack configs of one run.
    pub fn attacks_for(&self, seed: u64) -> Vec<AttackConfig> {
        let share = self.intensity / self.attacks.len().max(1) as f64;
        self.attacks
            .iter()
            .map(|a| AttackConfig {
                intensity: share,
                seed,
                ..a.clone()
            })
            .collect()
    }

    pub fn scenario(&self, seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            duration_s: self.duration_s,
            seed,
            params: self.params.clone(),
            profiles: self.profiles.clone(),
        }
    }
}

/// Seeds of the stages of one run, all derived from the run seed.
pub fn stage_seed(seed: u64, stage: Stage) -> u64 {
    derive(seed, stage as u64 + 0x5747_0000)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Scenario,
    Attack,
    Split,
    Model,
}

/// The default campaign: half the intensity impersonation, half replay,
/// over disjoint flows of every slice.
pub fn default_attacks(intensity: f64, seed: u64) -> Vec<AttackConfig> {
    alloc::vec![
        AttackConfig::new(AttackStrategy::IdentityImpersonation, intensity / 2.0, seed),
        AttackConfig::new(AttackStrategy::Replay, intensity / 2.0, seed),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub packets: usize,
    pub attack_packets: usize,
    pub flows: usize,
    pub attacked_flows: usize,
    pub windows: usize,
    pub spoofed_windows: usize,
    pub join: LabelJoinReport,
    pub join_agreement: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    pub vectors: Vec<FeatureVector>,
    pub summary: DatasetSummary,
}

/// Scenario, attacks, windows, joined labels and features for one seed.
pub fn build_labeled(spec: &CampaignSpec, seed: u64) -> Result<LabeledData> {
    build_labeled_with(
        spec,
        seed,
        &spec.attacks_for(stage_seed(seed, Stage::Attack)),
    )
}

pub fn build_labeled_with(
    spec: &CampaignSpec,
    seed: u64,
    attacks: &[AttackConfig],
) -> Result<LabeledData> {
    let benign = spec
        .scenario(stage_seed(seed, Stage::Scenario))
        .generate()?;
    let (packets, events) = inject_all(&benign, attacks)?;
    let windows = aggregate(&packets, spec.window_len_s)?;
    let (joined, join) = join_labels(&windows, &events, spec.tolerance_ms);
    let flows: BTreeSet<FlowKey> = packets.iter().map(FlowKey::of).collect();
    let attacked: BTreeSet<FlowKey> = events.iter().map(|e| e.flow_key).collect();
    let vectors = extract_all(&joined);
    let summary = DatasetSummary {
        packets: packets.len(),
        attack_packets: packets.iter().filter(|p| p.label.is_attack()).count(),
        flows: flows.len(),
        attacked_flows: attacked.len(),
        windows: joined.len(),
        spoofed_windows: joined.iter().filter(|w| w.label.is_spoofed()).count(),
        join,
        join_agreement: join_agreement(&joined),
    };
    Ok(LabeledData { vectors, summary })
}

/// Held-out split stratified by slice and label.
pub fn train_test_split(
    data: &[FeatureVector],
    test_fraction: f64,
    seed: u64,
) -> (Vec<FeatureVector>, Vec<FeatureVector>) {
    let mut groups: BTreeMap<(SliceId, bool), Vec<usize>> = BTreeMap::new();
    for (i, f) in data.iter().enumerate() {
        groups
            .entry((f.slice, f.label.is_spoofed()))
            .or_default()
            .push(i);
    }
    let mut test_idx = BTreeSet::new();
    for ((slice, label), mut idx) in groups {
        idx.shuffle(&mut rng_for(seed, (slice.sst() as u64) << 1 | label as u64));
        let k = crate::math::round(test_fraction * idx.len() as f64) as usize;
        test_idx.extend(idx.into_iter().take(k));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, f) in data.iter().enumerate() {
        if test_idx.contains(&i) {
            test.push(f.clone());
        } else {
            train.push(f.clone());
        }
    }
    (train, test)
}

pub fn of_slice(data: &[FeatureVector], slice: SliceId) -> Vec<FeatureVector> {
    data.iter().filter(|f| f.slice == slice).cloned().collect()
}

fn labels(data: &[FeatureVector]) -> Vec<bool> {
    data.iter().map(|f| f.label.is_spoofed()).collect()
}

/// Scored metrics of an artifact on raw feature vectors.
pub fn evaluate(
    model: &ModelArtifact,
    test: &[FeatureVector],
    threshold: f64,
) -> Result<MetricsRecord> {
    let conf: Vec<f64> = test.iter().map(|f| model.confidence(&f.values)).collect();
    compute_scored_metrics(&conf, &labels(test), threshold)
}

pub fn roc_of(model: &ModelArtifact, test: &[FeatureVector]) -> Result<RocCurve> {
    let conf: Vec<f64> = test.iter().map(|f| model.confidence(&f.values)).collect();
    roc_auc(&conf, &labels(test))
}

#[derive(Debug, Clone)]
pub struct ModelPair {
    pub lr: ModelArtifact,
    pub rf: ModelArtifact,
}

impl ModelPair {
    pub fn get(&self, kind: ModelKind) -> &ModelArtifact {
        match kind {
            ModelKind::Lr => &self.lr,
            ModelKind::Rf => &self.rf,
        }
    }
}

/// LR and RF, each selected by cross-validation over the spec's grids.
pub fn train_pair(
    scope: Scope,
    train: &[FeatureVector],
    spec: &CampaignSpec,
    seed: u64,
) -> Result<ModelPair> {
    Ok(ModelPair {
        lr: train_artifact_on_grid(ModelKind::Lr, scope, train, &spec.lr_grid, spec.folds, seed)?.0,
        rf: train_artifact_on_grid(ModelKind::Rf, scope, train, &spec.rf_grid, spec.folds, seed)?.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceResult {
    pub slice: SliceId,
    pub n_train: usize,
    pub n_test: usize,
    pub lr: MetricsRecord,
    pub rf: MetricsRecord,
    pub agnostic_lr: Option<MetricsRecord>,
    pub agnostic_rf: Option<MetricsRecord>,
    pub baseline: MetricsRecord,
    pub rf_roc: RocCurve,
    pub rf_importance: Vec<(Feature, f64)>,
}

impl SliceResult {
    pub fn aware_mean_f1(&self) -> f64 {
        (self.lr.f1 + self.rf.f1) / 2.0
    }

    pub fn agnostic_mean_f1(&self) -> Option<f64> {
        Some((self.agnostic_lr?.f1 + self.agnostic_rf?.f1) / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub summary: DatasetSummary,
    pub slices: Vec<SliceResult>,
}

impl SeedResult {
    pub fn slice(&self, s: SliceId) -> Option<&SliceResult> {
        self.slices.iter().find(|r| r.slice == s)
    }
}

/// Trained models and data of one seed, kept for downstream studies.
#[derive(Debug, Clone)]
pub struct SeedArtifacts {
    pub per_slice: BTreeMap<SliceId, ModelPair>,
    pub global: Option<ModelPair>,
    pub train: Vec<FeatureVector>,
    pub test: Vec<FeatureVector>,
}

/// One seeded run: per-slice LR and RF with CV, the pooled slice-agnostic
/// pair when `agnostic` is set, and the rule baseline, all scored on the
/// same held-out windows.
pub fn run_seed(
    spec: &CampaignSpec,
    seed: u64,
    agnostic: bool,
) -> Result<(SeedResult, SeedArtifacts)> {
    let data = build_labeled(spec, seed)?;
    let (train, test) = train_test_split(
        &data.vectors,
        spec.test_fraction,
        stage_seed(seed, Stage::Split),
    );
    let model_seed = stage_seed(seed, Stage::Model);
    let global = if agnostic {
        Some(train_pair(Scope::Global, &train, spec, model_seed)?)
    } else {
        None
    };
    let rules = RuleBaselineConfig::calibrate(&train, DEFAULT_SIGMAS);
    let mut per_slice = BTreeMap::new();
    let mut slices = Vec::new();
    for slice in SliceId::ALL {
        let tr = of_slice(&train, slice);
        let te = of_slice(&test, slice);
        if tr.is_empty() || te.is_empty() {
            continue;
        }
        let pair = train_pair(Scope::PerSlice(slice), &tr, spec, model_seed)?;
        let baseline = compute_metrics(&rule_baseline(&te, &rules), &labels(&te))?;
        slices.push(SliceResult {
            slice,
            n_train: tr.len(),
            n_test: te.len(),
            lr: evaluate(&pair.lr, &te, spec.threshold)?,
            rf: evaluate(&pair.rf, &te, spec.threshold)?,
            agnostic_lr: global
                .as_ref()
                .map(|g| evaluate(&g.lr, &te, spec.threshold))
                .transpose()?,
            agnostic_rf: global
                .as_ref()
                .map(|g| evaluate(&g.rf, &te, spec.threshold))
                .transpose()?,
            baseline,
            rf_roc: roc_of(&pair.rf, &te)?,
            rf_importance: feature_importance(&pair.rf)?,
        });
        per_slice.insert(slice, pair);
    }
    Ok((
        SeedResult {
            seed,
            summary: data.summary,
            slices,
        },
        SeedArtifacts {
            per_slice,
            global,
            train,
            test,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceComparison {
    pub slice: SliceId,
    /// Mean over seeds of the mean of LR and RF F1.
    pub a_f1: f64,
    pub b_f1: f64,
    pub delta: f64,
    pub per_seed_delta: Vec<f64>,
    pub t_test: Option<TTestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub slices: Vec<SliceComparison>,
    /// Mean over slices of the per-slice deltas.
    pub mean_delta: f64,
    /// Paired over seeds on the slice-averaged scores.
    pub t_test: Option<TTestResult>,
}

/// `a[s][k]` and `b[s][k]`: score of seed `s` on slice `k` (NaN when absent).
pub fn compare_scores(a: &[[f64; 3]], b: &[[f64; 3]]) -> Result<ComparisonReport> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut slices = Vec::new();
    for slice in SliceId::ALL {
        let k = slice.index();
        let pairs: Vec<(f64, f64)> = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x[k], y[k]))
            .filter(|(x, y)| !x.is_nan() && !y.is_nan())
            .collect();
        if pairs.is_empty() {
            continue;
        }
        let n = pairs.len() as f64;
        let xa: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let xb: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let a_f1 = xa.iter().sum::<f64>() / n;
        let b_f1 = xb.iter().sum::<f64>() / n;
        slices.push(SliceComparison {
            slice,
            a_f1,
            b_f1,
            delta: a_f1 - b_f1,
            per_seed_delta: pairs.iter().map(|p| p.0 - p.1).collect(),
            t_test: paired_t_test(&xa, &xb, DEFAULT_ALPHA).ok(),
        });
    }
    let present: Vec<usize> = slices.iter().map(|s| s.slice.index()).collect();
    let macro_of = |t: &[[f64; 3]]| -> Vec<f64> {
        t.iter()
            .map(|r| present.iter().map(|&k| r[k]).sum::<f64>() / present.len() as f64)
            .collect()
    };
    let mean_delta = slices.iter().map(|s| s.delta).sum::<f64>() / slices.len().max(1) as f64;
    Ok(ComparisonReport {
        t_test: paired_t_test(&macro_of(a), &macro_of(b), DEFAULT_ALPHA).ok(),
        slices,
        mean_delta,
    })
}

/// Per-slice-model versus pooled-model comparison on the mean of LR and RF F1.
pub fn compare_slice_aware_vs_agnostic(runs: &[SeedResult]) -> Result<ComparisonReport> {
    let mut aware = Vec::new();
    let mut agnostic = Vec::new();
    for r in runs {
        let mut a = [f64::NAN; 3];
        let mut b = [f64::NAN; 3];
        for s in &r.slices {
            a[s.slice.index()] = s.aware_mean_f1();
            b[s.slice.index()] = s.agnostic_mean_f1().unwrap_or(f64::NAN);
        }
        aware.push(a);
        agnostic.push(b);
    }
    compare_scores(&aware, &agnostic)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionCell {
    pub slice: SliceId,
    pub kind: ModelKind,
    pub in_session_f1: Vec<f64>,
    pub loso_f1: Vec<f64>,
    /// Mean leave-one-session-out F1 over mean in-session F1.
    pub retention: f64,
}

/// Trains on the training splits of all sessions but one and tests on the
/// held-out session's test split, for every session, slice and family.
/// `sessions[i]` is `(train, test)`; `in_session[i][slice][kind]` the
/// in-session F1 of that session.
pub fn cross_session_validation(
    sessions: &[(Vec<FeatureVector>, Vec<FeatureVector>)],
    in_session: &[BTreeMap<(SliceId, ModelKind), f64>],
    spec: &CampaignSpec,
    seed: u64,
) -> Result<Vec<RetentionCell>> {
    if sessions.len() < 3 {
        return Err(Error::TooFewSessions {
            needed: 3,
            got: sessions.len(),
        });
    }
    let mut cells: BTreeMap<(SliceId, ModelKind), RetentionCell> = BTreeMap::new();
    for (held, (_, test)) in sessions.iter().enumerate() {
        for slice in SliceId::ALL {
            let train: Vec<FeatureVector> = sessions
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != held)
                .flat_map(|(_, (tr, _))| tr.iter().filter(|f| f.slice == slice).cloned())
                .collect();
            let te = of_slice(test, slice);
            if train.is_empty() || te.is_empty() {
                continue;
            }
            let pair = train_pair(
                Scope::PerSlice(slice),
                &train,
                spec,
                derive(seed, held as u64),
            )?;
            for kind in [ModelKind::Lr, ModelKind::Rf] {
                let Some(&base) = in_session[held].get(&(slice, kind)) else {
                    continue;
                };
                let f1 = evaluate(pair.get(kind), &te, spec.threshold)?.f1;
                let cell = cells.entry((slice, kind)).or_insert_with(|| RetentionCell {
                    slice,
                    kind,
                    in_session_f1: Vec::new(),
                    loso_f1: Vec::new(),
                    retention: 0.0,
                });
                cell.in_session_f1.push(base);
                cell.loso_f1.push(f1);
            }
        }
    }
    let mut out: Vec<RetentionCell> = cells.into_values().collect();
    for c in out.iter_mut() {
        let a: f64 = c.loso_f1.iter().sum();
        let b: f64 = c.in_session_f1.iter().sum();
        c.retention = if b > 0.0 { a / b } else { 0.0 };
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalPoint {
    /// Window index relative to the onset window.
    pub rel_window: i64,
    pub mean_confidence: f64,
    pub windows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalReport {
    pub slice: SliceId,
    pub onset_us: u64,
    pub window_len_s: u64,
    pub series: Vec<TemporalPoint>,
    /// First relative window at or after onset whose mean confidence reaches the level.
    pub detection_delay_windows: Option<i64>,
    pub steady_confidence: f64,
    pub level: f64,
    /// Share of control-scenario windows flagged at the level.
    pub control_alarm_rate: f64,
}

pub const DETECTION_LEVEL: f64 = 0.9;

/// Mean confidence per window index relative to onset over the attacked
/// flows (windows carrying attack packets from onset on, and the flows'
/// benign windows before). `control` holds confidences of an attack-free run.
pub fn temporal_confidence(
    scored: &[(FeatureVector, f64, bool)],
    attacked_flows: &BTreeSet<FlowKey>,
    onset_us: u64,
    window_len_s: u64,
    control: &[f64],
    steady_after: i64,
) -> TemporalReport {
    let len = window_len_s * US_PER_SEC;
    let onset_w = (onset_us / len) as i64;
    let mut acc: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    let mut slice = SliceId::Embb;
    for (f, conf, has_attack) in scored {
        if !attacked_flows.contains(&f.key) {
            continue;
        }
        slice = f.slice;
        let rel = (f.window_start_us / len) as i64 - onset_w;
        if rel >= 0 && !has_attack {
            continue;
        }
        let e = acc.entry(rel).or_insert((0.0, 0));
        e.0 += conf;
        e.1 += 1;
    }
    let series: Vec<TemporalPoint> = acc
        .into_iter()
        .map(|(rel, (s, n))| TemporalPoint {
            rel_window: rel,
            mean_confidence: s / n as f64,
            windows: n,
        })
        .collect();
    let detection = series
        .iter()
        .find(|p| p.rel_window >= 0 && p.mean_confidence >= DETECTION_LEVEL)
        .map(|p| p.rel_window);
    let steady: Vec<&TemporalPoint> = series
        .iter()
        .filter(|p| p.rel_window >= steady_after)
        .collect();
    let steady_n: usize = steady.iter().map(|p| p.windows).sum();
    let steady_confidence = if steady_n > 0 {
        steady
            .iter()
            .map(|p| p.mean_confidence * p.windows as f64)
            .sum::<f64>()
            / steady_n as f64
    } else {
        0.0
    };
    let alarms = control.iter().filter(|&&c| c >= DETECTION_LEVEL).count();
    TemporalReport {
        slice,
        onset_us,
        window_len_s,
        series,
        detection_delay_windows: detection,
        steady_confidence,
        level: DETECTION_LEVEL,
        control_alarm_rate: if control.is_empty() {
            0.0
        } else {
            alarms as f64 / control.len() as f64
        },
    }
}

/// Runs the onset study for one slice: impersonation on a share of the
/// slice's flows starting at `onset_s`, scored by `model`; the control run
/// is the same scenario without attacks.
pub fn onset_study(
    spec: &CampaignSpec,
    seed: u64,
    slice: SliceId,
    onset_s: f64,
    model: &ModelArtifact,
) -> Result<TemporalReport> {
    let onset_us = (onset_s * US_PER_SEC as f64) as u64;
    let mut attack = AttackConfig::new(
        AttackStrategy::IdentityImpersonation,
        spec.intensity,
        stage_seed(seed, Stage::Attack),
    );
    attack.target_slices = alloc::vec![slice];
    attack.onset = Onset::At(onset_us);
    let benign = spec
        .scenario(stage_seed(seed, Stage::Scenario))
        .generate()?;
    let (packets, events) = inject_all(&benign, &[attack])?;
    let windows = aggregate(&packets, spec.window_len_s)?;
    let attacked: BTreeSet<FlowKey> = events.iter().map(|e| e.flow_key).collect();
    let scored: Vec<(FeatureVector, f64, bool)> = extract_all(&windows)
        .into_iter()
        .zip(&windows)
        .filter(|(f, _)| f.slice == slice)
        .map(|(f, w)| {
            let c = model.confidence(&f.values);
            (f, c, w.truth().is_spoofed())
        })
        .collect();
    let control_windows = aggregate(&benign, spec.window_len_s)?;
    let control: Vec<f64> = extract_all(&control_windows)
        .iter()
        .filter(|f| f.slice == slice)
        .map(|f| model.confidence(&f.values))
        .collect();
    Ok(temporal_confidence(
        &scored,
        &attacked,
        onset_us,
        spec.window_len_s,
        &control,
        2,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub window_len_s: u64,
    pub intensity: f64,
    /// `f1[seed][slice]`, RF per-slice F1.
    pub f1: Vec<[f64; 3]>,
}

impl SweepCell {
    pub fn mean_f1(&self) -> f64 {
        let v: Vec<f64> = self
            .f1
            .iter()
            .flat_map(|r| r.iter().copied().filter(|x| !x.is_nan()))
            .collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    }

    /// Largest seed-to-seed range of any slice's F1.
    pub fn seed_spread(&self) -> f64 {
        (0..3)
            .map(|k| {
                let v: Vec<f64> = self
                    .f1
                    .iter()
                    .map(|r| r[k])
                    .filter(|x| !x.is_nan())
                    .collect();
                let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
                if v.is_empty() {
                    0.0
                } else {
                    hi - lo
                }
            })
            .fold(0.0, f64::max)
    }
}

/// RF F1 per slice for one (window, intensity) cell and seed.
pub fn sweep_cell_seed(spec: &CampaignSpec, seed: u64) -> Result<[f64; 3]> {
    let data = build_labeled(spec, seed)?;
    let (train, test) = train_test_split(
        &data.vectors,
        spec.test_fraction,
        stage_seed(seed, Stage::Split),
    );
    let mut out = [f64::NAN; 3];
    for slice in SliceId::ALL {
        let tr = of_slice(&train, slice);
        let te = of_slice(&test, slice);
        if tr.is_empty() || te.is_empty() {
            continue;
        }
        let (rf, _) = train_artifact_on_grid(
            ModelKind::Rf,
            Scope::PerSlice(slice),
            &tr,
            &spec.rf_grid,
            spec.folds,
            stage_seed(seed, Stage::Model),
        )?;
        out[slice.index()] = evaluate(&rf, &te, spec.threshold)?.f1;
    }
    Ok(out)
}
