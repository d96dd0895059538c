//! Static-threshold rule detector on packet-size variance and identifier
//! entropy.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::features::{Feature, FeatureVector, Vector};
use crate::math;
use crate::slice::SliceId;

pub const DEFAULT_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceThresholds {
    pub pkt_size_variance: f64,
    pub id_entropy: f64,
}

impl SliceThresholds {
    pub const NEVER: SliceThresholds = SliceThresholds {
        pkt_size_variance: f64::INFINITY,
        id_entropy: f64::INFINITY,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleBaselineConfig {
    /// Indexed by [`SliceId::index`].
    pub thresholds: [SliceThresholds; 3],
}

pub fn pkt_size_variance(v: &Vector) -> f64 {
    let s = v[Feature::StdPktSize.index()];
    s * s
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, math::sqrt(var))
}

impl RuleBaselineConfig {
    /// Benign mean plus `sigmas` standard deviations per slice, from benign
    /// training windows only. Slices without benign data never fire.
    pub fn calibrate(train: &[FeatureVector], sigmas: f64) -> Self {
        let mut thresholds = [SliceThresholds::NEVER; 3];
        for slice in SliceId::ALL {
            let benign: Vec<&FeatureVector> = train
                .iter()
                .filter(|f| f.slice == slice && !f.label.is_spoofed())
                .collect();
            if benign.is_empty() {
                continue;
            }
            let var: Vec<f64> = benign
                .iter()
                .map(|f| pkt_size_variance(&f.values))
                .collect();
            let ent: Vec<f64> = benign
                .iter()
                .map(|f| f.values[Feature::IdEntropy.index()])
                .collect();
            let (vm, vs) = mean_sd(&var);
            let (em, es) = mean_sd(&ent);
            thresholds[slice.index()] = SliceThresholds {
                pkt_size_variance: vm + sigmas * vs,
                id_entropy: em + sigmas * es,
            };
        }
        RuleBaselineConfig { thresholds }
    }

    pub fn flags(&self, f: &FeatureVector) -> bool {
        let t = self.thresholds[f.slice.index()];
        pkt_size_variance(&f.values) > t.pkt_size_variance
            || f.values[Feature::IdEntropy.index()] > t.id_entropy
    }
}

pub fn rule_baseline(data: &[FeatureVector], config: &RuleBaselineConfig) -> Vec<bool> {
    data.iter().map(|f| config.flags(f)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FlowKey;
    use crate::packet::{Addr, Protocol, WindowLabel};

    fn fv(std: f64, ent: f64, spoofed: bool) -> FeatureVector {
        let mut values = [0.0; 12];
        values[Feature::StdPktSize.index()] = std;
        values[Feature::IdEntropy.index()] = ent;
        FeatureVector {
            values,
            slice: SliceId::Urllc,
            label: WindowLabel::from_bool(spoofed),
            window_start_us: 0,
            key: FlowKey {
                src_addr: Addr(0),
                dst_addr: Addr(0),
                src_port: 0,
                dst_port: 0,
                protocol: Protocol::Tcp,
            },
        }
    }

    #[test]
    fn calibrates_on_benign_only() {
        let train = [
            fv(1.0, 0.0, false),
            fv(3.0, 0.0, false),
            fv(50.0, 2.0, true),
        ];
        let c = RuleBaselineConfig::calibrate(&train, 3.0);
        let t = c.thresholds[SliceId::Urllc.index()];
        // variances 1 and 9: mean 5, sd 4
        assert_eq!(t.pkt_size_variance, 17.0);
        assert_eq!(t.id_entropy, 0.0);
        assert_eq!(c.thresholds[SliceId::Embb.index()], SliceThresholds::NEVER);
        assert!(!c.flags(&fv(2.0, 0.0, false)));
        assert!(c.flags(&fv(2.0, 0.5, false)));
        assert!(c.flags(&fv(5.0, 0.0, false)));
    }

    #[test]
    fn infinite_thresholds_never_fire() {
        let c = RuleBaselineConfig {
            thresholds: [SliceThresholds::NEVER; 3],
        };
        let data = [fv(1e9, 9.0, true), fv(0.0, 0.0, true)];
        assert_eq!(rule_baseline(&data, &c), [false, false]);
    }
}
