//! Per-window statistical features, min-max normalization and the pairwise
//! correlation audit.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowKey, FlowWindow};
use crate::math;
use crate::packet::WindowLabel;
use crate::slice::SliceId;

pub const N_FEATURES: usize = 12;
pub const SUBBIN_US: u64 = 100_000;
pub const CORRELATION_THRESHOLD: f64 = 0.75;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "pkt_count",
    "byte_count",
    "mean_pkt_size",
    "std_pkt_size",
    "min_pkt_size",
    "max_pkt_size",
    "mean_iat_ms",
    "iat_variance",
    "burst_intensity",
    "id_entropy",
    "active_fraction",
    "sport_entropy",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(usize)]
pub enum Feature {
    PktCount,
    ByteCount,
    MeanPktSize,
    StdPktSize,
    MinPktSize,
    MaxPktSize,
    MeanIat,
    /// `ln(1 + var)` of the gaps in microseconds squared.
    IatVariance,
    BurstIntensity,
    IdEntropy,
    ActiveFraction,
    SportEntropy,
}

impl Feature {
    pub const ALL: [Feature; N_FEATURES] = [
        Feature::PktCount,
        Feature::ByteCount,
        Feature::MeanPktSize,
        Feature::StdPktSize,
        Feature::MinPktSize,
        Feature::MaxPktSize,
        Feature::MeanIat,
        Feature::IatVariance,
        Feature::BurstIntensity,
        Feature::IdEntropy,
        Feature::ActiveFraction,
        Feature::SportEntropy,
    ];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn name(self) -> &'static str {
        FEATURE_NAMES[self as usize]
    }

    pub fn from_index(i: usize) -> Option<Feature> {
        Feature::ALL.get(i).copied()
    }
}

pub type Vector = [f64; N_FEATURES];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vector,
    pub slice: SliceId,
    pub label: WindowLabel,
    pub window_start_us: u64,
    pub key: FlowKey,
}

/// Shannon entropy in bits of the empirical token distribution.
pub fn shannon_entropy<T: Ord + Clone>(tokens: &[T]) -> Result<f64> {
    if tokens.is_empty() {
        return Err(Error::EmptyMultiset);
    }
    let mut sorted = tokens.to_vec();
    sorted.sort_unstable();
    let mut runs = Vec::new();
    let mut run = 1usize;
    for i in 1..=sorted.len() {
        if i < sorted.len() && sorted[i] == sorted[i - 1] {
            run += 1;
            continue;
        }
        runs.push(run);
        run = 1;
    }
    // summed in ascending count order
    runs.sort_unstable();
    let n = sorted.len() as f64;
    let mut h = 0.0;
    for r in runs {
        let p = r as f64 / n;
        h -= p * math::log2(p);
    }
    // -0.0 for a single type
    Ok(h.max(0.0))
}

fn bin_counts(arrival_ts: &[u64], window_len_us: u64, subbin_us: u64) -> Vec<u32> {
    let n_bins = (window_len_us / subbin_us).max(1) as usize;
    let start = arrival_ts
        .first()
        .map_or(0, |t| t / window_len_us * window_len_us);
    let mut bins = alloc::vec![0u32; n_bins];
    for &t in arrival_ts {
        let b = (((t - start) / subbin_us) as usize).min(n_bins - 1);
        bins[b] += 1;
    }
    bins
}

/// Peak sub-bin count over the mean count of all sub-bins of the window.
/// Bins are aligned to the tumbling window containing the first arrival.
pub fn burst_intensity(arrival_ts: &[u64], window_len_us: u64, subbin_us: u64) -> f64 {
    if arrival_ts.len() <= 1 {
        return 1.0;
    }
    let bins = bin_counts(arrival_ts, window_len_us, subbin_us);
    let max = *bins.iter().max().unwrap_or(&0) as f64;
    max / (arrival_ts.len() as f64 / bins.len() as f64)
}

/// Occupied sub-bins over all sub-bins.
pub fn active_fraction(arrival_ts: &[u64], window_len_us: u64, subbin_us: u64) -> f64 {
    let bins = bin_counts(arrival_ts, window_len_us, subbin_us);
    bins.iter().filter(|&&c| c > 0).count() as f64 / bins.len() as f64
}

/// Raw (unnormalized) feature vector of one window.
pub fn extract(w: &FlowWindow) -> Vector {
    let n = w.pkt_sizes.len().max(1) as f64;
    let sizes = || w.pkt_sizes.iter().map(|&s| s as f64);
    let mean = sizes().sum::<f64>() / n;
    let var = sizes().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    let min = w.pkt_sizes.iter().copied().min().unwrap_or(0) as f64;
    let max = w.pkt_sizes.iter().copied().max().unwrap_or(0) as f64;

    let (mean_iat, iat_var) = if w.arrival_ts.len() >= 2 {
        let gaps: Vec<f64> = w
            .arrival_ts
            .windows(2)
            .map(|p| (p[1] - p[0]) as f64)
            .collect();
        let m = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let v = gaps.iter().map(|g| (g - m) * (g - m)).sum::<f64>() / gaps.len() as f64;
        (m / 1000.0, math::ln_1p(v))
    } else {
        (0.0, 0.0)
    };

    let ports = alloc::vec![w.key.src_port; w.pkt_sizes.len().max(1)];
    let mut v = [0.0; N_FEATURES];
    v[Feature::PktCount.index()] = w.pkt_count as f64;
    v[Feature::ByteCount.index()] = w.byte_count as f64;
    v[Feature::MeanPktSize.index()] = mean;
    v[Feature::StdPktSize.index()] = math::sqrt(var);
    v[Feature::MinPktSize.index()] = min;
    v[Feature::MaxPktSize.index()] = max;
    v[Feature::MeanIat.index()] = mean_iat;
    v[Feature::IatVariance.index()] = iat_var;
    v[Feature::BurstIntensity.index()] = burst_intensity(&w.arrival_ts, w.window_len_us, SUBBIN_US);
    v[Feature::IdEntropy.index()] = shannon_entropy(&w.identifiers).unwrap_or(0.0);
    v[Feature::ActiveFraction.index()] = active_fraction(&w.arrival_ts, w.window_len_us, SUBBIN_US);
    v[Feature::SportEntropy.index()] = shannon_entropy(&ports).unwrap_or(0.0);
    v
}

pub fn extract_all(windows: &[FlowWindow]) -> Vec<FeatureVector> {
    windows
        .iter()
        .map(|w| FeatureVector {
            values: extract(w),
            slice: w.slice,
            label: w.label,
            window_start_us: w.window_start_us,
            key: w.key,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub min: Vector,
    pub max: Vector,
}

impl NormalizationParams {
    /// Column-wise min and max; needs at least two vectors.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a Vector>) -> Result<Self> {
        let mut min = [f64::INFINITY; N_FEATURES];
        let mut max = [f64::NEG_INFINITY; N_FEATURES];
        let mut n = 0;
        for r in rows {
            for j in 0..N_FEATURES {
                min[j] = min[j].min(r[j]);
                max[j] = max[j].max(r[j]);
            }
            n += 1;
        }
        if n < 2 {
            return Err(Error::TooFewSamples { needed: 2, got: n });
        }
        Ok(NormalizationParams { min, max })
    }

    /// Maps into [0,1], clamping; constant columns map to 0.
    pub fn apply(&self, v: &Vector) -> Vector {
        let mut out = [0.0; N_FEATURES];
        for j in 0..N_FEATURES {
            let span = self.max[j] - self.min[j];
            out[j] = if span > 0.0 {
                ((v[j] - self.min[j]) / span).clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
        out
    }
}

pub fn normalize_fit(train: &[FeatureVector]) -> Result<NormalizationParams> {
    NormalizationParams::fit(train.iter().map(|f| &f.values))
}

pub fn normalize_apply(params: &NormalizationParams, v: &FeatureVector) -> FeatureVector {
    FeatureVector {
        values: params.apply(&v.values),
        ..v.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationAudit {
    pub matrix: [[f64; N_FEATURES]; N_FEATURES],
    pub max_offdiag_abs: f64,
    pub threshold: f64,
    pub zero_variance: [bool; N_FEATURES],
}

impl CorrelationAudit {
    pub fn passes(&self) -> bool {
        self.max_offdiag_abs <= self.threshold
    }

    /// Pairs `(i, j, r)` with `i < j` and `|r|` above the threshold.
    pub fn flagged_pairs(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..N_FEATURES {
            for j in i + 1..N_FEATURES {
                if math::abs(self.matrix[i][j]) > self.threshold {
                    out.push((i, j, self.matrix[i][j]));
                }
            }
        }
        out
    }
}

/// Pearson correlation matrix; columns without variance correlate 0 with
/// everything, themselves included.
pub fn correlation_audit(rows: &[Vector]) -> Result<CorrelationAudit> {
    if rows.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: rows.len(),
        });
    }
    let n = rows.len() as f64;
    let mut mean = [0.0; N_FEATURES];
    for r in rows {
        for j in 0..N_FEATURES {
            mean[j] += r[j] / n;
        }
    }
    let mut cov = [[0.0; N_FEATURES]; N_FEATURES];
    for r in rows {
        for i in 0..N_FEATURES {
            let di = r[i] - mean[i];
            for j in i..N_FEATURES {
                cov[i][j] += di * (r[j] - mean[j]);
            }
        }
    }
    let mut zero_variance = [false; N_FEATURES];
    for j in 0..N_FEATURES {
        // relative to the column scale so rounding noise is not variance
        let scale = rows.iter().map(|r| math::abs(r[j])).fold(0.0, f64::max);
        zero_variance[j] = cov[j][j] <= (scale * 1e-12) * (scale * 1e-12) * n;
    }
    let mut matrix = [[0.0; N_FEATURES]; N_FEATURES];
    let mut max_off: f64 = 0.0;
    for i in 0..N_FEATURES {
        for j in i..N_FEATURES {
            let r = if zero_variance[i] || zero_variance[j] {
                0.0
            } else if i == j {
                1.0
            } else {
                (cov[i][j] / math::sqrt(cov[i][i] * cov[j][j])).clamp(-1.0, 1.0)
            };
            matrix[i][j] = r;
            matrix[j][i] = r;
            if i != j {
                max_off = max_off.max(math::abs(r));
            }
        }
    }
    Ok(CorrelationAudit {
        matrix,
        max_offdiag_abs: max_off,
        threshold: CORRELATION_THRESHOLD,
        zero_variance,
    })
}
