//! Runs a manifest: seeded campaign cells, the slice-aware comparison, the
//! robustness sweep, cross-session validation, the onset study and the
//! feature correlation audit. Cells are independent and run on a worker
//! pool; each finished cell is cached under its content digest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use slicewatch_core::eval::experiment::{
    build_labeled, compare_slice_aware_vs_agnostic, cross_session_validation, onset_study,
    run_seed, stage_seed, sweep_cell_seed, train_test_split, ComparisonReport, RetentionCell,
    SeedResult, Stage, SweepCell, TemporalReport,
};
use slicewatch_core::features::{correlation_audit, CorrelationAudit, Vector};
use slicewatch_core::learn::{ModelArtifact, ModelKind};
use slicewatch_core::rng::derive;
use slicewatch_core::SliceId;

use crate::error::{Error, Result};
use crate::formats::{read_model, write_model};
use crate::manifest::{hex_digest, ExperimentManifest, MANIFEST_VERSION};

pub const WORKERS_ENV: &str = "SLICEWATCH_WORKERS";

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub workers: usize,
    /// Reuse cached cells whose digests match.
    pub resume: bool,
    pub progress: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            workers: default_workers(),
            resume: true,
            progress: false,
        }
    }
}

/// Worker count from `SLICEWATCH_WORKERS`, else the available cores.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// Maps `f` over `items` on up to `workers` threads, keeping input order.
pub fn par_map<T: Sync, R: Send>(
    items: &[T],
    workers: usize,
    f: impl Fn(&T) -> Result<R> + Sync,
) -> Result<Vec<R>> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<R>>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, items.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("result slots")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots")
        .into_iter()
        .map(|r| r.expect("every item ran"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub intensity: f64,
    pub result: SeedResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRecord {
    /// `all` or a slice name.
    pub scope: String,
    pub windows: usize,
    pub audit: CorrelationAudit,
}

#[derive(Debug, Clone)]
pub struct CampaignOutput {
    pub manifest: ExperimentManifest,
    pub runs: Vec<RunRecord>,
    pub comparisons: Vec<(f64, ComparisonReport)>,
    pub sweep: Vec<SweepCell>,
    pub retention: Vec<RetentionCell>,
    pub temporal: Vec<TemporalReport>,
    pub correlation: Vec<CorrelationRecord>,
    /// Per-slice models of the first seed at the headline intensity.
    pub models: BTreeMap<(SliceId, ModelKind), ModelArtifact>,
}

impl CampaignOutput {
    pub fn runs_at(&self, intensity: f64) -> impl Iterator<Item = &SeedResult> {
        self.runs
            .iter()
            .filter(move |r| r.intensity == intensity)
            .map(|r| &r.result)
    }

    pub fn headline_runs(&self) -> Vec<&SeedResult> {
        self.runs_at(self.manifest.headline_intensity).collect()
    }

    pub fn headline_comparison(&self) -> Option<&ComparisonReport> {
        self.comparisons
            .iter()
            .find(|(i, _)| *i == self.manifest.headline_intensity)
            .map(|(_, c)| c)
    }
}

struct Cache {
    dir: Option<PathBuf>,
    resume: bool,
}

#[derive(Serialize, Deserialize)]
struct CellFile<T> {
    key: String,
    value: T,
}

impl Cache {
    fn key(material: &impl Serialize) -> String {
        hex_digest(
            serde_json::to_string(material)
                .expect("cell key serializes")
                .as_bytes(),
        )
    }

    fn path(&self, kind: &str, key: &str) -> Option<PathBuf> {
        self.dir
            .as_ref()
            .map(|d| d.join(format!("{kind}-{}.json", &key[..16])))
    }

    fn get<T: DeserializeOwned>(&self, kind: &str, key: &str) -> Option<T> {
        if !self.resume {
            return None;
        }
        let text = std::fs::read_to_string(self.path(kind, key)?).ok()?;
        let f: CellFile<T> = serde_json::from_str(&text).ok()?;
        (f.key == key).then_some(f.value)
    }

    fn put<T: Serialize>(&self, kind: &str, key: &str, value: &T) -> Result<()> {
        let Some(path) = self.path(kind, key) else {
            return Ok(());
        };
        let text = serde_json::to_string(&CellFile {
            key: key.to_string(),
            value,
        })
        .map_err(|e| Error::Format(e.to_string()))?;
        // Written whole then renamed so an interrupted run leaves no half cell.
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    fn cached<T: Serialize + DeserializeOwned>(
        &self,
        kind: &str,
        material: &impl Serialize,
        f: impl FnOnce() -> Result<T>,
    ) -> Result<T> {
        let key = Self::key(&(MANIFEST_VERSION, kind, material));
        if let Some(v) = self.get(kind, &key) {
            return Ok(v);
        }
        let v = f()?;
        self.put(kind, &key, &v)?;
        Ok(v)
    }
}

pub fn model_path(dir: &Path, slice: SliceId, kind: ModelKind) -> PathBuf {
    dir.join(format!("{slice}-{}.json", kind.as_str()))
}

#[derive(Clone, Copy)]
enum Job {
    Run {
        intensity: f64,
        seed: u64,
    },
    Sweep {
        window: u64,
        intensity: f64,
        seed: u64,
    },
}

enum JobOut {
    Run(RunRecord),
    Sweep([f64; 3]),
}

/// Runs the whole manifest. With an output directory, cells are cached
/// under `<out>/cells` and the deployable models written to `<out>/models`.
pub fn run_campaign(
    m: &ExperimentManifest,
    out: Option<&Path>,
    opts: &RunOptions,
) -> Result<CampaignOutput> {
    m.validate()?;
    let started = Instant::now();
    let log = |msg: String| {
        if opts.progress {
            eprintln!("[{:7.1}s] {msg}", started.elapsed().as_secs_f64());
        }
    };
    let cells_dir = out.map(|o| o.join("cells"));
    let models_dir = out.map(|o| o.join("models"));
    for d in cells_dir.iter().chain(&models_dir) {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let cache = Cache {
        dir: cells_dir,
        resume: opts.resume,
    };
    let deploy_seed = m.seeds[0];

    let mut jobs = Vec::new();
    for &intensity in &m.intensities {
        for &seed in &m.seeds {
            jobs.push(Job::Run { intensity, seed });
        }
    }
    for &window in &m.sweep.window_lens {
        for &intensity in &m.sweep.intensities {
            for &seed in &m.sweep.seeds {
                let covered = window == m.window_len_s
                    && m.intensities.contains(&intensity)
                    && m.seeds.contains(&seed);
                if !covered {
                    jobs.push(Job::Sweep {
                        window,
                        intensity,
                        seed,
                    });
                }
            }
        }
    }
    log(format!("{} cells on {} workers", jobs.len(), opts.workers));
    let models: Mutex<BTreeMap<(SliceId, ModelKind), ModelArtifact>> = Mutex::new(BTreeMap::new());
    let outs = par_map(&jobs, opts.workers, |job| {
        let t = Instant::now();
        let r = match *job {
            Job::Run { intensity, seed } => {
                let spec = m.spec(intensity, m.window_len_s);
                let deploy = seed == deploy_seed && intensity == m.headline_intensity;
                let stored = deploy
                    .then(|| load_models(models_dir.as_deref()))
                    .flatten()
                    .filter(|_| opts.resume);
                let need_models = deploy && stored.is_none();
                let key_material = (&spec, seed);
                let key = Cache::key(&(MANIFEST_VERSION, "run", &key_material));
                let result = match (need_models, cache.get::<SeedResult>("run", &key)) {
                    (false, Some(r)) => r,
                    _ => {
                        let (r, artifacts) = run_seed(&spec, seed, true)?;
                        if deploy {
                            let mut fresh = BTreeMap::new();
                            for (slice, pair) in artifacts.per_slice {
                                fresh.insert((slice, ModelKind::Lr), pair.lr);
                                fresh.insert((slice, ModelKind::Rf), pair.rf);
                            }
                            if let Some(dir) = models_dir.as_deref() {
                                for ((slice, kind), a) in &fresh {
                                    write_model(&model_path(dir, *slice, *kind), a)?;
                                }
                            }
                            *models.lock().expect("models") = fresh;
                        }
                        cache.put("run", &key, &r)?;
                        r
                    }
                };
                if let Some(s) = stored {
                    *models.lock().expect("models") = s;
                }
                JobOut::Run(RunRecord { intensity, result })
            }
            Job::Sweep {
                window,
                intensity,
                seed,
            } => {
                let spec = m.spec(intensity, window);
                let f1 = cache.cached("sweep", &(&spec, seed), || {
                    Ok(sweep_cell_seed(&spec, seed)?.map(nan_to_none))
                })?;
                JobOut::Sweep(f1.map(|v| v.unwrap_or(f64::NAN)))
            }
        };
        let what = match *job {
            Job::Run { intensity, seed } => format!("run intensity {intensity} seed {seed}"),
            Job::Sweep {
                window,
                intensity,
                seed,
            } => format!("sweep {window}s intensity {intensity} seed {seed}"),
        };
        log(format!("{what} done in {:.1}s", t.elapsed().as_secs_f64()));
        Ok(r)
    })?;

    let mut runs = Vec::new();
    let mut sweep_f1: BTreeMap<(u64, u64, u64), [f64; 3]> = BTreeMap::new();
    for (job, o) in jobs.iter().zip(outs) {
        match (job, o) {
            (_, JobOut::Run(r)) => runs.push(r),
            (
                Job::Sweep {
                    window,
                    intensity,
                    seed,
                },
                JobOut::Sweep(f),
            ) => {
                sweep_f1.insert((*window, intensity.to_bits(), *seed), f);
            }
            _ => unreachable!(),
        }
    }
    for r in &runs {
        let mut f = [f64::NAN; 3];
        for s in &r.result.slices {
            f[s.slice.index()] = s.rf.f1;
        }
        sweep_f1.insert((m.window_len_s, r.intensity.to_bits(), r.result.seed), f);
    }
    let mut sweep = Vec::new();
    for &window_len_s in &m.sweep.window_lens {
        for &intensity in &m.sweep.intensities {
            let f1 = m
                .sweep
                .seeds
                .iter()
                .map(|&s| sweep_f1[&(window_len_s, intensity.to_bits(), s)])
                .collect();
            sweep.push(SweepCell {
                window_len_s,
                intensity,
                f1,
            });
        }
    }

    let mut comparisons = Vec::new();
    for &i in &m.intensities {
        let rs: Vec<SeedResult> = runs
            .iter()
            .filter(|r| r.intensity == i)
            .map(|r| r.result.clone())
            .collect();
        if rs.len() >= 2 {
            comparisons.push((i, compare_slice_aware_vs_agnostic(&rs)?));
        }
    }

    let models = models.into_inner().expect("models");
    let headline = m.headline_spec();
    let mut tail: Vec<Tail> = Vec::new();
    if m.seeds.len() >= 3 {
        tail.push(Tail::Retention);
    }
    tail.push(Tail::Correlation);
    for &s in &m.temporal.slices {
        if models.contains_key(&(s, ModelKind::Rf)) {
            tail.push(Tail::Temporal(s));
        }
    }
    let headline_runs: Vec<&SeedResult> = runs
        .iter()
        .filter(|r| r.intensity == m.headline_intensity)
        .map(|r| &r.result)
        .collect();
    let tails = par_map(&tail, opts.workers, |t| {
        let started = Instant::now();
        let r = match *t {
            Tail::Retention => {
                let in_session: Vec<BTreeMap<(SliceId, ModelKind), f64>> = headline_runs
                    .iter()
                    .map(|r| {
                        r.slices
                            .iter()
                            .flat_map(|s| {
                                [
                                    ((s.slice, ModelKind::Lr), s.lr.f1),
                                    ((s.slice, ModelKind::Rf), s.rf.f1),
                                ]
                            })
                            .collect()
                    })
                    .collect();
                TailOut::Retention(cache.cached("loso", &(&headline, &m.seeds), || {
                    let sessions = m
                        .seeds
                        .iter()
                        .map(|&seed| {
                            let d = build_labeled(&headline, seed)?;
                            Ok(train_test_split(
                                &d.vectors,
                                headline.test_fraction,
                                stage_seed(seed, Stage::Split),
                            ))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok(cross_session_validation(
                        &sessions,
                        &in_session,
                        &headline,
                        derive(m.seeds[0], 0x1050),
                    )?)
                })?)
            }
            Tail::Correlation => {
                TailOut::Correlation(cache.cached("corr", &(&headline, deploy_seed), || {
                    let d = build_labeled(&headline, deploy_seed)?;
                    let mut out = Vec::new();
                    let all: Vec<Vector> = d.vectors.iter().map(|f| f.values).collect();
                    out.push(CorrelationRecord {
                        scope: "all".into(),
                        windows: all.len(),
                        audit: correlation_audit(&all)?,
                    });
                    for s in SliceId::ALL {
                        let rows: Vec<Vector> = d
                            .vectors
                            .iter()
                            .filter(|f| f.slice == s)
                            .map(|f| f.values)
                            .collect();
                        if rows.len() >= 3 {
                            out.push(CorrelationRecord {
                                scope: s.to_string(),
                                windows: rows.len(),
                                audit: correlation_audit(&rows)?,
                            });
                        }
                    }
                    Ok(out)
                })?)
            }
            Tail::Temporal(s) => {
                let model = &models[&(s, ModelKind::Rf)];
                TailOut::Temporal(cache.cached(
                    "onset",
                    &(&headline, &m.temporal, s, &model.meta.dataset_digest),
                    || {
                        Ok(onset_study(
                            &headline,
                            m.temporal.seed,
                            s,
                            m.temporal.onset_s,
                            model,
                        )?)
                    },
                )?)
            }
        };
        log(format!(
            "{} done in {:.1}s",
            t.name(),
            started.elapsed().as_secs_f64()
        ));
        Ok(r)
    })?;
    let mut retention = Vec::new();
    let mut correlation = Vec::new();
    let mut temporal = Vec::new();
    for t in tails {
        match t {
            TailOut::Retention(r) => retention = r,
            TailOut::Correlation(c) => correlation = c,
            TailOut::Temporal(r) => temporal.push(r),
        }
    }
    log("campaign complete".into());
    Ok(CampaignOutput {
        manifest: m.clone(),
        runs,
        comparisons,
        sweep,
        retention,
        temporal,
        correlation,
        models,
    })
}

fn nan_to_none(v: f64) -> Option<f64> {
    (!v.is_nan()).then_some(v)
}

fn load_models(dir: Option<&Path>) -> Option<BTreeMap<(SliceId, ModelKind), ModelArtifact>> {
    let dir = dir?;
    let mut out = BTreeMap::new();
    for s in SliceId::ALL {
        for k in [ModelKind::Lr, ModelKind::Rf] {
            out.insert((s, k), read_model(&model_path(dir, s, k)).ok()?);
        }
    }
    Some(out)
}

#[derive(Clone, Copy)]
enum Tail {
    Retention,
    Correlation,
    Temporal(SliceId),
}

impl Tail {
    fn name(&self) -> String {
        match self {
            Tail::Retention => "cross-session validation".into(),
            Tail::Correlation => "correlation audit".into(),
            Tail::Temporal(s) => format!("onset study {s}"),
        }
    }
}

enum TailOut {
    Retention(Vec<RetentionCell>),
    Correlation(Vec<CorrelationRecord>),
    Temporal(TemporalReport),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_map_keeps_order_and_errors() {
        let v: Vec<u64> = (0..50).collect();
        for w in [1, 3, 8] {
            assert_eq!(
                par_map(&v, w, |&x| Ok(x * 2)).unwrap(),
                v.iter().map(|x| x * 2).collect::<Vec<_>>()
            );
        }
        let e = par_map(&v, 2, |&x| {
            if x == 7 {
                Err(Error::Format("x".into()))
            } else {
                Ok(x)
            }
        });
        assert!(e.is_err());
        assert!(par_map(&Vec::<u64>::new(), 4, |&x| Ok(x))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn cache_round_trips_and_checks_keys() {
        let dir = tempfile::tempdir().unwrap();
        let c = Cache {
            dir: Some(dir.path().into()),
            resume: true,
        };
        let mut calls = 0;
        for _ in 0..2 {
            let v: Vec<f64> = c
                .cached("t", &("a", 1), || {
                    calls += 1;
                    Ok(vec![0.1, 1.0 / 3.0])
                })
                .unwrap();
            assert_eq!(v, vec![0.1, 1.0 / 3.0]);
        }
        assert_eq!(calls, 1);
        let fresh = Cache {
            dir: Some(dir.path().into()),
            resume: false,
        };
        let _: u8 = fresh.cached("t", &("a", 1), || Ok(3)).unwrap();
        let key = Cache::key(&(MANIFEST_VERSION, "t", &("a", 1)));
        assert_eq!(c.get::<u8>("t", &key), Some(3));
    }
}
