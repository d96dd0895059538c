//! CART trees on Gini impurity and bagged forests of them.
//!
//! Every node draws its candidate features from a seed derived from its
//! position in the tree, and every tree from a seed derived from its index.
//! A depth-limited tree is therefore exactly the unlimited tree cut at that
//! depth, and a smaller forest is a prefix of a larger one; cross-validation
//! exploits this to score a whole grid from one grown forest.

use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::rng::{derive, rng_from};

use super::check_training_set;

pub const N_ESTIMATORS_GRID: [usize; 3] = [50, 100, 200];
pub const MAX_DEPTH_GRID: [Option<usize>; 3] = [Some(10), Some(20), None];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// `ceil(sqrt(d))` candidates per node.
    Sqrt,
    All,
    Fixed(usize),
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => (math::ceil(math::sqrt(d as f64)) as usize).clamp(1, d),
            MaxFeatures::All => d,
            MaxFeatures::Fixed(k) => k.clamp(1, d),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RfConfig {
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for RfConfig {
    fn default() -> Self {
        RfConfig {
            n_estimators: 100,
            max_depth: None,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            min_samples_leaf: 2,
            seed: 0,
        }
    }
}

impl RfConfig {
    pub fn grid_point(n_estimators: usize, max_depth: Option<usize>, seed: u64) -> Self {
        RfConfig {
            n_estimators,
            max_depth,
            seed,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 {
            return Err(Error::InvalidConfig(
                "n_estimators must be at least 1".into(),
            ));
        }
        if self.max_depth == Some(0) {
            return Err(Error::InvalidConfig("max_depth must be at least 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::InvalidConfig(
                "min_samples_leaf must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

pub const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    /// `[benign, spoofed]` training counts reaching the node.
    pub counts: [u32; 2],
    pub feature: u32,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    /// Weighted Gini decrease of the split, in sample units.
    pub gain: f64,
}

impl Node {
    fn leaf(counts: [u32; 2]) -> Self {
        Node {
            counts,
            feature: LEAF,
            threshold: 0.0,
            left: LEAF,
            right: LEAF,
            gain: 0.0,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.feature == LEAF
    }

    /// Class frequencies `[benign, spoofed]`; always sums to 1.
    pub fn probabilities(&self) -> [f64; 2] {
        let n = (self.counts[0] + self.counts[1]) as f64;
        let p = self.counts[1] as f64 / n;
        [1.0 - p, p]
    }

    pub fn gini(&self) -> f64 {
        gini(self.counts)
    }
}

pub fn gini(counts: [u32; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = counts[1] as f64 / n;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Root at index 0.
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Node reached by `x` when the tree is cut at `max_depth`.
    pub fn leaf_for(&self, x: &[f64], max_depth: Option<usize>) -> &Node {
        let limit = max_depth.unwrap_or(usize::MAX);
        let mut node = &self.nodes[0];
        let mut depth = 0;
        while !node.is_leaf() && depth < limit {
            let next = if x[node.feature as usize] <= node.threshold {
                node.left
            } else {
                node.right
            };
            node = &self.nodes[next as usize];
            depth += 1;
        }
        node
    }

    pub fn probability(&self, x: &[f64], max_depth: Option<usize>) -> f64 {
        self.leaf_for(x, max_depth).probabilities()[1]
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            let n = &t.nodes[i];
            if n.is_leaf() {
                0
            } else {
                1 + walk(t, n.left as usize).max(walk(t, n.right as usize))
            }
        }
        walk(self, 0)
    }

    /// Gain per feature over splits shallower than `max_depth`.
    pub fn gains(&self, d: usize, max_depth: Option<usize>) -> Vec<f64> {
        let limit = max_depth.unwrap_or(usize::MAX);
        let mut out = alloc::vec![0.0; d];
        let mut stack = alloc::vec![(0usize, 0usize)];
        while let Some((i, depth)) = stack.pop() {
            let n = &self.nodes[i];
            if n.is_leaf() || depth >= limit {
                continue;
            }
            out[n.feature as usize] += n.gain;
            stack.push((n.left as usize, depth + 1));
            stack.push((n.right as usize, depth + 1));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    /// Depth at which trees are read; `None` reads them whole.
    pub max_depth: Option<usize>,
    pub n_features: usize,
}

impl Forest {
    /// Mean spoofed probability over the first `n_trees` trees cut at `max_depth`.
    pub fn confidence_with(&self, x: &[f64], n_trees: usize, max_depth: Option<usize>) -> f64 {
        let n = n_trees.min(self.trees.len());
        let s: f64 = self.trees[..n]
            .iter()
            .map(|t| t.probability(x, max_depth))
            .sum();
        s / n as f64
    }

    pub fn confidence(&self, x: &[f64]) -> f64 {
        self.confidence_with(x, self.trees.len(), self.max_depth)
    }

    /// Per-tree normalized Gini importance, averaged over trees and renormalized.
    pub fn importance(&self) -> Vec<f64> {
        let mut total = alloc::vec![0.0; self.n_features];
        for t in &self.trees {
            let g = t.gains(self.n_features, self.max_depth);
            let s: f64 = g.iter().sum();
            if s > 0.0 {
                for (acc, v) in total.iter_mut().zip(&g) {
                    *acc += v / s;
                }
            }
        }
        let s: f64 = total.iter().sum();
        if s > 0.0 {
            for v in total.iter_mut() {
                *v /= s;
            }
        }
        total
    }

    /// A view of the first `n_trees` trees cut at `max_depth`.
    pub fn truncated(&self, n_trees: usize, max_depth: Option<usize>) -> Forest {
        Forest {
            trees: self.trees[..n_trees.min(self.trees.len())].to_vec(),
            max_depth: tighter(self.max_depth, max_depth),
            n_features: self.n_features,
        }
    }
}

fn tighter(a: Option<usize>, b: Option<usize>) -> Option<usize> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Seed of tree `t` under master seed `seed`.
pub fn tree_seed(seed: u64, t: usize) -> u64 {
    derive(seed, t as u64)
}

pub fn train_rf<X: AsRef<[f64]>>(x: &[X], y: &[bool], config: &RfConfig) -> Result<Forest> {
    config.validate()?;
    check_training_set(x.len(), y)?;
    let d = x[0].as_ref().len();
    if let Some(bad) = x.iter().find(|r| r.as_ref().len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bad.as_ref().len(),
        });
    }
    let trees = (0..config.n_estimators)
        .map(|t| grow_tree(x, y, config, tree_seed(config.seed, t)))
        .collect();
    Ok(Forest {
        trees,
        max_depth: config.max_depth,
        n_features: d,
    })
}

/// One tree from its own seed; bootstrap sample drawn from that seed.
pub fn grow_tree<X: AsRef<[f64]>>(x: &[X], y: &[bool], config: &RfConfig, seed: u64) -> Tree {
    let n = x.len();
    let sample: Vec<u32> = if config.bootstrap {
        let mut rng = rng_from(derive(seed, 0xB007));
        (0..n).map(|_| rng.random_range(0..n as u32)).collect()
    } else {
        (0..n as u32).collect()
    };
    let d = x[0].as_ref().len();
    let mut g = Grower {
        x,
        y,
        k: config.max_features.resolve(d),
        d,
        min_leaf: config.min_samples_leaf.max(1),
        max_depth: config.max_depth.unwrap_or(usize::MAX),
        nodes: Vec::new(),
        scratch: Vec::with_capacity(n),
    };
    let mut sample = sample;
    g.grow(&mut sample, 0, derive(seed, 0x5EED));
    Tree { nodes: g.nodes }
}

struct Grower<'a, X> {
    x: &'a [X],
    y: &'a [bool],
    k: usize,
    d: usize,
    min_leaf: usize,
    max_depth: usize,
    nodes: Vec<Node>,
    scratch: Vec<(f64, bool)>,
}

/// Split score `sum_c a_c^2 / n_a + sum_c b_c^2 / n_b` as an exact fraction.
#[derive(Clone, Copy)]
struct Score {
    num: u128,
    den: u128,
}

impl Score {
    fn of(l: [u64; 2], r: [u64; 2]) -> Score {
        let nl = (l[0] + l[1]) as u128;
        let nr = (r[0] + r[1]) as u128;
        let sl = (l[0] * l[0] + l[1] * l[1]) as u128;
        let sr = (r[0] * r[0] + r[1] * r[1]) as u128;
        Score {
            num: sl * nr + sr * nl,
            den: nl * nr,
        }
    }

    fn parent(c: [u64; 2]) -> Score {
        Score {
            num: (c[0] * c[0] + c[1] * c[1]) as u128,
            den: (c[0] + c[1]) as u128,
        }
    }

    fn cmp(&self, o: &Score) -> Ordering {
        (self.num * o.den).cmp(&(o.num * self.den))
    }

    fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

struct Split {
    feature: usize,
    threshold: f64,
    score: Score,
}

impl<X: AsRef<[f64]>> Grower<'_, X> {
    fn grow(&mut self, idx: &mut [u32], depth: usize, seed: u64) -> u32 {
        let mut counts = [0u32; 2];
        for &i in idx.iter() {
            counts[self.y[i as usize] as usize] += 1;
        }
        let id = self.nodes.len() as u32;
        self.nodes.push(Node::leaf(counts));
        let pure = counts[0] == 0 || counts[1] == 0;
        if pure || depth >= self.max_depth || idx.len() < 2 * self.min_leaf {
            return id;
        }
        let Some(split) = self.best_split(idx, counts, seed) else {
            return id;
        };
        // Partition in place: left part holds x <= threshold.
        let mut lo = 0;
        for j in 0..idx.len() {
            if self.x[idx[j] as usize].as_ref()[split.feature] <= split.threshold {
                idx.swap(lo, j);
                lo += 1;
            }
        }
        let parent = Score::parent([counts[0] as u64, counts[1] as u64]);
        let gain = split.score.value() - parent.value();
        let (left_idx, right_idx) = idx.split_at_mut(lo);
        let left = self.grow(left_idx, depth + 1, derive(seed, 1));
        let right = self.grow(right_idx, depth + 1, derive(seed, 2));
        let node = &mut self.nodes[id as usize];
        node.feature = split.feature as u32;
        node.threshold = split.threshold;
        node.left = left;
        node.right = right;
        node.gain = gain;
        id
    }

    fn candidate_features(&self, seed: u64) -> Vec<usize> {
        let mut all: Vec<usize> = (0..self.d).collect();
        if self.k < self.d {
            let mut rng = rng_from(seed);
            for i in 0..self.k {
                let j = rng.random_range(i..self.d);
                all.swap(i, j);
            }
            all.truncate(self.k);
            all.sort_unstable();
        }
        all
    }

    fn best_split(&mut self, idx: &[u32], counts: [u32; 2], seed: u64) -> Option<Split> {
        let total = [counts[0] as u64, counts[1] as u64];
        let parent = Score::parent(total);
        let mut best: Option<Split> = None;
        let n = idx.len();
        for f in self.candidate_features(seed) {
            self.scratch.clear();
            self.scratch.extend(
                idx.iter()
                    .map(|&i| (self.x[i as usize].as_ref()[f], self.y[i as usize])),
            );
            self.scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = [0u64; 2];
            for j in 0..n - 1 {
                left[self.scratch[j].1 as usize] += 1;
                let (a, b) = (self.scratch[j].0, self.scratch[j + 1].0);
                let nl = j + 1;
                if a == b || nl < self.min_leaf || n - nl < self.min_leaf {
                    continue;
                }
                let right = [total[0] - left[0], total[1] - left[1]];
                let score = Score::of(left, right);
                if score.cmp(&parent) != Ordering::Greater {
                    continue;
                }
                let better = match &best {
                    None => true,
                    Some(s) => score.cmp(&s.score) == Ordering::Greater,
                };
                if better {
                    best = Some(Split {
                        feature: f,
                        threshold: midpoint(a, b),
                        score,
                    });
                }
            }
        }
        best
    }
}

/// Midpoint of two adjacent distinct values; falls back to the lower one
/// when rounding lands on the upper.
pub fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b || m < a {
        a
    } else {
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    fn noisy(n: usize, seed: u64) -> (Vec<[f64; 12]>, Vec<bool>) {
        let mut rng = rng_from(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let mut r = [0.0; 12];
            for v in r.iter_mut() {
                *v = (rng.random_range(0..20) as f64) / 20.0;
            }
            y.push(r[3] + r[7] * 0.5 + rng.random::<f64>() * 0.4 > 0.9);
            x.push(r);
        }
        (x, y)
    }

    #[test]
    fn gini_values() {
        assert_eq!(gini([5, 0]), 0.0);
        assert_eq!(gini([4, 4]), 0.5);
    }

    #[test]
    fn pure_node_is_leaf() {
        let x = [[0.0], [1.0], [2.0], [3.0]];
        let t = grow_tree(&x, &[true; 4], &RfConfig::default(), 1);
        assert_eq!(t.nodes.len(), 1);
        assert!(t.nodes[0].is_leaf());
        assert_eq!(t.nodes[0].probabilities(), [0.0, 1.0]);
    }

    #[test]
    fn leaves_sum_to_one() {
        let (x, y) = noisy(300, 1);
        let f = train_rf(&x, &y, &RfConfig::grid_point(10, None, 3)).unwrap();
        for t in &f.trees {
            for n in &t.nodes {
                let p = n.probabilities();
                assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn depth_limit_equals_truncation() {
        let (x, y) = noisy(400, 2);
        let full = train_rf(&x, &y, &RfConfig::grid_point(20, None, 7)).unwrap();
        for depth in [1, 3, 6] {
            let limited = train_rf(&x, &y, &RfConfig::grid_point(8, Some(depth), 7)).unwrap();
            assert!(limited.trees.iter().all(|t| t.depth() <= depth));
            let view = full.truncated(8, Some(depth));
            for r in &x {
                assert_eq!(limited.confidence(r), view.confidence(r));
            }
            assert_eq!(limited.importance(), view.importance());
        }
    }

    #[test]
    fn confidence_is_mean_of_trees() {
        let (x, y) = noisy(200, 4);
        let f = train_rf(&x, &y, &RfConfig::grid_point(7, Some(5), 1)).unwrap();
        for r in x.iter().take(20) {
            let m = f
                .trees
                .iter()
                .map(|t| t.probability(r, Some(5)))
                .sum::<f64>()
                / 7.0;
            assert_eq!(f.confidence(r), m);
        }
    }

    #[test]
    fn stumps_on_one_feature() {
        let x: Vec<[f64; 3]> = (0..40).map(|i| [0.5, i as f64, 1.0]).collect();
        let y: Vec<bool> = (0..40).map(|i| i >= 20).collect();
        let mut cfg = RfConfig::grid_point(5, Some(1), 2);
        cfg.max_features = MaxFeatures::All;
        let f = train_rf(&x, &y, &cfg).unwrap();
        assert_eq!(f.importance(), [0.0, 1.0, 0.0]);
    }

    #[test]
    fn unanimous_pure_leaves_give_full_confidence() {
        let x: Vec<[f64; 1]> = (0..20).map(|i| [i as f64]).collect();
        let y: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        let mut cfg = RfConfig::grid_point(5, None, 2);
        cfg.bootstrap = false;
        let f = train_rf(&x, &y, &cfg).unwrap();
        assert_eq!(f.confidence(&[15.0]), 1.0);
        assert_eq!(f.confidence(&[2.0]), 0.0);
    }

    #[test]
    fn midpoint_guard() {
        assert_eq!(midpoint(1.0, 2.0), 1.5);
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        assert_eq!(midpoint(a, b), a);
    }

    #[test]
    fn rejects_bad_input() {
        let (x, y) = noisy(10, 1);
        assert_eq!(
            train_rf(&x, &[false; 10], &RfConfig::default()),
            Err(Error::SingleClass)
        );
        let cfg = RfConfig {
            n_estimators: 0,
            ..Default::default()
        };
        assert!(train_rf(&x, &y, &cfg).is_err());
    }
}
