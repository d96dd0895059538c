//! Metrics, statistical tests, the rule baseline and the experiment drivers.

pub mod baseline;
pub mod experiment;
pub mod metrics;
pub mod ttest;

use alloc::vec::Vec;

pub use baseline::{rule_baseline, RuleBaselineConfig};
pub use metrics::{
    compute_metrics, compute_scored_metrics, f1_score, roc_auc, Confusion, MetricsRecord, RocCurve,
};
pub use ttest::{paired_t_test, TTestResult};

/// Nearest-rank percentile of unsorted samples, `p` in `[0, 100]`.
pub fn percentile(samples: &[f64], p: f64) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = crate::math::ceil(p / 100.0 * v.len() as f64) as usize;
    Some(v[rank.clamp(1, v.len()) - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank() {
        let v: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        assert_eq!(percentile(&v, 50.0), Some(5.0));
        assert_eq!(percentile(&v, 95.0), Some(10.0));
        assert_eq!(percentile(&v, 0.0), Some(1.0));
        assert_eq!(percentile(&[], 50.0), None);
    }
}
