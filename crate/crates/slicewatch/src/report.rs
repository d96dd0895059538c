//! Report bundle: plain delimited tables for plotting plus a readable summary.
//!
//! | file | rows |
//! |---|---|
//! | `metrics.csv` | mean per slice and model at the headline intensity |
//! | `runs.csv` | every intensity, seed, slice and model |
//! | `roc_<slice>.csv` | RF ROC points per seed |
//! | `importance.csv` | RF Gini importance per slice, mean over seeds |
//! | `comparison.csv` | slice-aware versus pooled F1 per intensity |
//! | `temporal.csv` | mean confidence by window relative to onset |
//! | `sweep.csv` | RF F1 per window length, intensity, seed and slice |
//! | `retention.csv` | leave-one-session-out over in-session F1 |
//! | `correlation.csv` | Pearson r between features |
//! | `datasets.csv` | size of every generated dataset |
//! | `summary.txt` | all of the above in words, plus the checks |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use slicewatch_core::eval::experiment::SliceResult;
use slicewatch_core::eval::MetricsRecord;
use slicewatch_core::features::{Feature, N_FEATURES};
use slicewatch_core::SliceId;

use crate::campaign::CampaignOutput;
use crate::error::{Error, Result};

pub const REPORT_FILES: [&str; 11] = [
    "metrics.csv",
    "runs.csv",
    "importance.csv",
    "comparison.csv",
    "temporal.csv",
    "sweep.csv",
    "retention.csv",
    "correlation.csv",
    "datasets.csv",
    "summary.txt",
    "checks.csv",
];

/// The importance triple of the detection story.
pub const KEY_FEATURES: [Feature; 3] = [
    Feature::IdEntropy,
    Feature::IatVariance,
    Feature::BurstIntensity,
];

fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.6}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

const METRIC_COLUMNS: &str = "accuracy,precision,recall,f1,auc,fpr,fnr,tp,fp,tn,fn";

fn metric_cells(m: &MetricsRecord) -> String {
    let c = m.confusion;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        num(m.accuracy),
        num(m.precision),
        num(m.recall),
        num(m.f1),
        opt(m.auc),
        num(m.fpr),
        num(m.fnr),
        c.tp,
        c.fp,
        c.tn,
        c.fn_
    )
}

/// Named metric rows of one slice result.
fn models_of(s: &SliceResult) -> Vec<(&'static str, &MetricsRecord)> {
    let mut v = vec![("lr", &s.lr), ("rf", &s.rf)];
    if let Some(m) = &s.agnostic_lr {
        v.push(("pooled_lr", m));
    }
    if let Some(m) = &s.agnostic_rf {
        v.push(("pooled_rf", m));
    }
    v.push(("rule_baseline", &s.baseline));
    v
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.into_iter().collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Mean over headline seeds of a per-slice quantity.
pub fn headline_mean(o: &CampaignOutput, slice: SliceId, f: impl Fn(&SliceResult) -> f64) -> f64 {
    mean(
        o.headline_runs()
            .iter()
            .filter_map(|r| r.slice(slice))
            .map(f),
    )
}

/// Mean RF importance per feature on one slice over the headline seeds,
/// sorted by weight.
pub fn mean_importance(o: &CampaignOutput, slice: SliceId) -> Vec<(Feature, f64)> {
    let mut acc = [0.0; N_FEATURES];
    let mut n = 0usize;
    for r in o.headline_runs() {
        if let Some(s) = r.slice(slice) {
            n += 1;
            for (f, w) in &s.rf_importance {
                acc[f.index()] += w;
            }
        }
    }
    let mut v: Vec<(Feature, f64)> = Feature::ALL
        .iter()
        .map(|&f| (f, acc[f.index()] / n.max(1) as f64))
        .collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub id: u8,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

/// The quantitative checks a campaign output can answer on its own.
pub fn campaign_checks(o: &CampaignOutput) -> Vec<Check> {
    let mut out = Vec::new();
    let slices: Vec<SliceId> = SliceId::ALL
        .into_iter()
        .filter(|&s| o.headline_runs().iter().any(|r| r.slice(s).is_some()))
        .collect();

    let mut pass = !slices.is_empty();
    let mut d = String::new();
    for &s in &slices {
        let lr = headline_mean(o, s, |r| r.lr.f1);
        let rf = headline_mean(o, s, |r| r.rf.f1);
        pass &= rf >= 0.90 && lr >= 0.85 && rf >= lr;
        let _ = write!(d, "{s} lr {lr:.4} rf {rf:.4}; ");
    }
    out.push(Check {
        id: 1,
        name: "per-slice detection band",
        pass,
        detail: d,
    });

    let (pass, d) = match o.headline_comparison() {
        Some(c) => {
            let p = c.t_test.as_ref().map(|t| t.p_value).unwrap_or(f64::NAN);
            let every = c.slices.iter().all(|s| s.delta > 0.0) && c.slices.len() == slices.len();
            let deltas: Vec<String> = c
                .slices
                .iter()
                .map(|s| format!("{} {:+.4}", s.slice, s.delta))
                .collect();
            (
                every && c.mean_delta >= 0.02 && p < 0.05,
                format!("{}; mean {:+.4}; p {p:.4}", deltas.join(", "), c.mean_delta),
            )
        }
        None => (false, "needs at least two seeds".into()),
    };
    out.push(Check {
        id: 2,
        name: "slice-aware advantage",
        pass,
        detail: d,
    });

    let mut pass = !slices.is_empty();
    let mut d = String::new();
    for &s in &slices {
        let gap = headline_mean(o, s, |r| r.rf.f1 - r.baseline.f1);
        pass &= gap >= 0.05;
        let _ = write!(d, "{s} gap {gap:+.4}; ");
    }
    out.push(Check {
        id: 3,
        name: "rule-baseline gap",
        pass,
        detail: d,
    });

    let imp = mean_importance(o, SliceId::Embb);
    let top4: Vec<Feature> = imp.iter().take(4).map(|p| p.0).collect();
    let share: f64 = imp
        .iter()
        .filter(|p| KEY_FEATURES.contains(&p.0))
        .map(|p| p.1)
        .sum();
    let in_top = KEY_FEATURES.iter().all(|f| top4.contains(f));
    let corr = o.correlation.iter().find(|c| c.scope == "all");
    let max_r = corr
        .map(|c| {
            let mut m: f64 = 0.0;
            for (i, a) in KEY_FEATURES.iter().enumerate() {
                for b in &KEY_FEATURES[i + 1..] {
                    m = m.max(c.audit.matrix[a.index()][b.index()].abs());
                }
            }
            m
        })
        .unwrap_or(f64::NAN);
    let ranks: Vec<String> = KEY_FEATURES
        .iter()
        .map(|f| {
            format!(
                "{} #{}",
                f.name(),
                imp.iter().position(|p| p.0 == *f).map_or(0, |i| i + 1)
            )
        })
        .collect();
    out.push(Check {
        id: 4,
        name: "feature-importance structure",
        pass: in_top && share >= 0.5 && max_r < 0.35,
        detail: format!("{}; share {share:.3}; max |r| {max_r:.3}", ranks.join(", ")),
    });

    let mut pass = !slices.is_empty();
    let mut d = String::new();
    for &s in &slices {
        let rs: Vec<&SliceResult> = o
            .headline_runs()
            .iter()
            .filter_map(|r| r.slice(s))
            .collect();
        let fpr = rs.iter().map(|r| r.rf.fpr).fold(0.0, f64::max);
        let fnr = rs.iter().map(|r| r.rf.fnr).fold(0.0, f64::max);
        let hi = rs.iter().map(|r| r.rf.f1).fold(f64::NEG_INFINITY, f64::max);
        let lo = rs.iter().map(|r| r.rf.f1).fold(f64::INFINITY, f64::min);
        pass &= fpr <= 0.05 && fnr <= 0.06 && hi - lo <= 0.02;
        let _ = write!(
            d,
            "{s} max fpr {fpr:.4} max fnr {fnr:.4} spread {:.4}; ",
            hi - lo
        );
    }
    out.push(Check {
        id: 5,
        name: "error-rate balance",
        pass,
        detail: d,
    });

    let mut pass = !o.sweep.is_empty();
    let mut d = String::new();
    for &s in &slices {
        let cell_means: Vec<f64> = o
            .sweep
            .iter()
            .map(|c| mean(c.f1.iter().map(|r| r[s.index()]).filter(|x| !x.is_nan())))
            .collect();
        let hi = cell_means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = cell_means.iter().cloned().fold(f64::INFINITY, f64::min);
        pass &= hi - lo <= 0.05;
        let _ = write!(d, "{s} range {lo:.4}..{hi:.4}; ");
    }
    out.push(Check {
        id: 6,
        name: "robustness sweep",
        pass,
        detail: d,
    });

    let pass = !o.retention.is_empty() && o.retention.iter().all(|c| c.retention >= 0.94);
    let d: Vec<String> = o
        .retention
        .iter()
        .map(|c| format!("{} {} {:.4}", c.slice, c.kind.as_str(), c.retention))
        .collect();
    out.push(Check {
        id: 7,
        name: "cross-session retention",
        pass,
        detail: if d.is_empty() {
            "needs three seeds".into()
        } else {
            d.join(", ")
        },
    });

    let embb = o.temporal.iter().find(|t| t.slice == SliceId::Embb);
    let delays_ok = !o.temporal.is_empty()
        && o.temporal
            .iter()
            .all(|t| t.detection_delay_windows.is_some_and(|d| d <= 2));
    let steady = embb.map(|t| t.steady_confidence).unwrap_or(f64::NAN);
    let d: Vec<String> = o
        .temporal
        .iter()
        .map(|t| {
            format!(
                "{} delay {:?} steady {:.4}",
                t.slice, t.detection_delay_windows, t.steady_confidence
            )
        })
        .collect();
    out.push(Check {
        id: 8,
        name: "temporal response",
        pass: delays_ok && steady >= 0.9,
        detail: d.join(", "),
    });
    out
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let p = dir.join(name);
    std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
}

/// Writes every report file into `dir`.
pub fn write_bundle(dir: &Path, o: &CampaignOutput) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let m = &o.manifest;

    let mut t = format!("slice,model,seeds,{METRIC_COLUMNS}\n");
    for s in SliceId::ALL {
        let rs: Vec<&SliceResult> = o
            .headline_runs()
            .iter()
            .filter_map(|r| r.slice(s))
            .collect();
        if rs.is_empty() {
            continue;
        }
        let names: Vec<&str> = models_of(rs[0]).iter().map(|p| p.0).collect();
        for (k, name) in names.iter().enumerate() {
            let ms: Vec<&MetricsRecord> = rs.iter().map(|r| models_of(r)[k].1).collect();
            let avg = |f: &dyn Fn(&MetricsRecord) -> f64| num(mean(ms.iter().map(|x| f(x))));
            let auc = if ms.iter().all(|x| x.auc.is_some()) {
                avg(&|x| x.auc.unwrap())
            } else {
                String::new()
            };
            let sum = |f: &dyn Fn(&MetricsRecord) -> u64| ms.iter().map(|x| f(x)).sum::<u64>();
            let _ = writeln!(
                t,
                "{s},{name},{},{},{},{},{},{auc},{},{},{},{},{},{}",
                ms.len(),
                avg(&|x| x.accuracy),
                avg(&|x| x.precision),
                avg(&|x| x.recall),
                avg(&|x| x.f1),
                avg(&|x| x.fpr),
                avg(&|x| x.fnr),
                sum(&|x| x.confusion.tp),
                sum(&|x| x.confusion.fp),
                sum(&|x| x.confusion.tn),
                sum(&|x| x.confusion.fn_),
            );
        }
    }
    write(dir, "metrics.csv", &t)?;

    let mut t = format!("intensity,seed,slice,model,n_train,n_test,{METRIC_COLUMNS}\n");
    for r in &o.runs {
        for s in &r.result.slices {
            for (name, mr) in models_of(s) {
                let _ = writeln!(
                    t,
                    "{},{},{},{name},{},{},{}",
                    r.intensity,
                    r.result.seed,
                    s.slice,
                    s.n_train,
                    s.n_test,
                    metric_cells(mr)
                );
            }
        }
    }
    write(dir, "runs.csv", &t)?;

    for s in SliceId::ALL {
        let mut t = String::from("seed,fpr,tpr,threshold\n");
        for r in o.headline_runs() {
            if let Some(sr) = r.slice(s) {
                for (p, th) in sr.rf_roc.points.iter().zip(&sr.rf_roc.thresholds) {
                    let _ = writeln!(t, "{},{},{},{}", r.seed, num(p.0), num(p.1), num(*th));
                }
            }
        }
        write(dir, &format!("roc_{s}.csv"), &t)?;
    }

    let mut t = String::from("slice,rank,feature,importance\n");
    for s in SliceId::ALL {
        if o.headline_runs().iter().all(|r| r.slice(s).is_none()) {
            continue;
        }
        for (i, (f, w)) in mean_importance(o, s).iter().enumerate() {
            let _ = writeln!(t, "{s},{},{},{}", i + 1, f.name(), num(*w));
        }
    }
    write(dir, "importance.csv", &t)?;

    let mut t = String::from("intensity,slice,aware_f1,pooled_f1,delta,t,p_value\n");
    for (i, c) in &o.comparisons {
        for s in &c.slices {
            let (tt, p) = s
                .t_test
                .as_ref()
                .map_or((f64::NAN, f64::NAN), |x| (x.t_statistic, x.p_value));
            let _ = writeln!(
                t,
                "{i},{},{},{},{},{},{}",
                s.slice,
                num(s.a_f1),
                num(s.b_f1),
                num(s.delta),
                num(tt),
                num(p)
            );
        }
        let (tt, p) = c
            .t_test
            .as_ref()
            .map_or((f64::NAN, f64::NAN), |x| (x.t_statistic, x.p_value));
        let aw = mean(c.slices.iter().map(|s| s.a_f1));
        let pl = mean(c.slices.iter().map(|s| s.b_f1));
        let _ = writeln!(
            t,
            "{i},all,{},{},{},{},{}",
            num(aw),
            num(pl),
            num(c.mean_delta),
            num(tt),
            num(p)
        );
    }
    write(dir, "comparison.csv", &t)?;

    let mut t = String::from("slice,rel_window,time_s,mean_confidence,windows\n");
    for r in &o.temporal {
        for p in &r.series {
            let _ = writeln!(
                t,
                "{},{},{},{},{}",
                r.slice,
                p.rel_window,
                p.rel_window * r.window_len_s as i64,
                num(p.mean_confidence),
                p.windows
            );
        }
    }
    write(dir, "temporal.csv", &t)?;

    let mut t = String::from("window_len_s,intensity,seed,slice,rf_f1\n");
    for c in &o.sweep {
        for (seed, row) in m.sweep.seeds.iter().zip(&c.f1) {
            for s in SliceId::ALL {
                let _ = writeln!(
                    t,
                    "{},{},{seed},{s},{}",
                    c.window_len_s,
                    c.intensity,
                    num(row[s.index()])
                );
            }
        }
    }
    write(dir, "sweep.csv", &t)?;

    let mut t = String::from("slice,model,in_session_f1,loso_f1,retention\n");
    for c in &o.retention {
        let _ = writeln!(
            t,
            "{},{},{},{},{}",
            c.slice,
            c.kind.as_str(),
            num(mean(c.in_session_f1.iter().copied())),
            num(mean(c.loso_f1.iter().copied())),
            num(c.retention)
        );
    }
    write(dir, "retention.csv", &t)?;

    let mut t = String::from("scope,windows,feature_a,feature_b,r\n");
    for c in &o.correlation {
        for i in 0..N_FEATURES {
            for j in i + 1..N_FEATURES {
                let _ = writeln!(
                    t,
                    "{},{},{},{},{}",
                    c.scope,
                    c.windows,
                    Feature::ALL[i].name(),
                    Feature::ALL[j].name(),
                    num(c.audit.matrix[i][j])
                );
            }
        }
    }
    write(dir, "correlation.csv", &t)?;

    let mut t = String::from("intensity,seed,packets,attack_packets,flows,attacked_flows,windows,spoofed_windows,join_agreement\n");
    for r in &o.runs {
        let s = &r.result.summary;
        let _ = writeln!(
            t,
            "{},{},{},{},{},{},{},{},{}",
            r.intensity,
            r.result.seed,
            s.packets,
            s.attack_packets,
            s.flows,
            s.attacked_flows,
            s.windows,
            s.spoofed_windows,
            num(s.join_agreement)
        );
    }
    write(dir, "datasets.csv", &t)?;

    let checks = campaign_checks(o);
    let mut t = String::from("criterion,name,result,detail\n");
    for c in &checks {
        let _ = writeln!(
            t,
            "{},{},{},\"{}\"",
            c.id,
            c.name,
            if c.pass { "pass" } else { "fail" },
            c.detail.trim_end_matches("; ")
        );
    }
    write(dir, "checks.csv", &t)?;

    write(dir, "summary.txt", &summary(o, &checks))
}

fn summary(o: &CampaignOutput, checks: &[Check]) -> String {
    let m = &o.manifest;
    let mut t = String::new();
    let _ = writeln!(t, "manifest {}", m.digest());
    let _ = writeln!(
        t,
        "scenario {} s, seeds {:?}, intensities {:?} (headline {}), window {} s",
        m.scenario.duration_s, m.seeds, m.intensities, m.headline_intensity, m.window_len_s
    );
    let _ = writeln!(t);
    let _ = writeln!(
        t,
        "Held-out detection at intensity {}, mean over seeds",
        m.headline_intensity
    );
    let _ = writeln!(
        t,
        "{:<7} {:<14} {:>8} {:>9} {:>7} {:>7} {:>7}",
        "slice", "model", "accuracy", "precision", "recall", "f1", "auc"
    );
    for s in SliceId::ALL {
        let rs: Vec<&SliceResult> = o
            .headline_runs()
            .iter()
            .filter_map(|r| r.slice(s))
            .collect();
        if rs.is_empty() {
            continue;
        }
        let names: Vec<&str> = models_of(rs[0]).iter().map(|p| p.0).collect();
        for (k, name) in names.iter().enumerate() {
            let ms: Vec<&MetricsRecord> = rs.iter().map(|r| models_of(r)[k].1).collect();
            let avg = |f: &dyn Fn(&MetricsRecord) -> f64| mean(ms.iter().map(|x| f(x)));
            let auc = if ms.iter().all(|x| x.auc.is_some()) {
                format!("{:.4}", avg(&|x| x.auc.unwrap()))
            } else {
                "-".into()
            };
            let _ = writeln!(
                t,
                "{:<7} {:<14} {:>8.4} {:>9.4} {:>7.4} {:>7.4} {:>7}",
                s.to_string(),
                name,
                avg(&|x| x.accuracy),
                avg(&|x| x.precision),
                avg(&|x| x.recall),
                avg(&|x| x.f1),
                auc
            );
        }
    }
    let _ = writeln!(t);
    if let Some(c) = o.headline_comparison() {
        let _ = writeln!(t, "Slice-aware minus pooled, mean of LR and RF F1");
        for s in &c.slices {
            let _ = writeln!(
                t,
                "  {:<6} {:+.4}  per seed {:?}",
                s.slice.to_string(),
                s.delta,
                s.per_seed_delta
                    .iter()
                    .map(|d| format!("{d:+.4}"))
                    .collect::<Vec<_>>()
            );
        }
        if let Some(tt) = &c.t_test {
            let _ = writeln!(
                t,
                "  mean {:+.4}, paired t {:.4}, df {}, p {:.4}",
                c.mean_delta, tt.t_statistic, tt.degrees_of_freedom, tt.p_value
            );
        }
        let _ = writeln!(t);
    }
    let _ = writeln!(t, "RF importance, eMBB");
    for (i, (f, w)) in mean_importance(o, SliceId::Embb).iter().enumerate().take(6) {
        let _ = writeln!(t, "  {:>2}. {:<16} {:.4}", i + 1, f.name(), w);
    }
    let _ = writeln!(t);
    if !o.retention.is_empty() {
        let _ = writeln!(t, "Cross-session retention");
        for c in &o.retention {
            let _ = writeln!(
                t,
                "  {:<6} {} {:.4}",
                c.slice.to_string(),
                c.kind.as_str(),
                c.retention
            );
        }
        let _ = writeln!(t);
    }
    for r in &o.temporal {
        let _ = writeln!(
            t,
            "Onset study {}: delay {} windows, steady confidence {:.4}, control alarms {:.4}",
            r.slice,
            r.detection_delay_windows
                .map_or("none".into(), |d| d.to_string()),
            r.steady_confidence,
            r.control_alarm_rate
        );
    }
    if !o.sweep.is_empty() {
        let _ = writeln!(t);
        let _ = writeln!(t, "Sweep, RF F1 mean over slices and seeds");
        let mut grid: BTreeMap<u64, Vec<String>> = BTreeMap::new();
        for c in &o.sweep {
            grid.entry(c.window_len_s).or_default().push(format!(
                "{}: {:.4}",
                c.intensity,
                c.mean_f1()
            ));
        }
        for (w, cells) in grid {
            let _ = writeln!(t, "  {w} s  {}", cells.join("  "));
        }
    }
    let _ = writeln!(t);
    let _ = writeln!(t, "AUC reference band: 0.97 on eMBB.");
    let _ = writeln!(t);
    let _ = writeln!(t, "Checks");
    for c in checks {
        let _ = writeln!(
            t,
            "  {:>2} {:<30} {}  {}",
            c.id,
            c.name,
            if c.pass { "PASS" } else { "FAIL" },
            c.detail.trim_end_matches("; ")
        );
    }
    t
}
