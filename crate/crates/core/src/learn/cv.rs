//! Stratified k-fold cross-validation over a hyper-parameter grid.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::metrics::f1_score;
use crate::math;
use crate::rng::rng_for;

use super::forest::{self, train_rf, Forest, MaxFeatures, RfConfig};
use super::logistic::{self, train_lr, LrConfig};

pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridPoint {
    Lr {
        c: f64,
    },
    Rf {
        n_estimators: usize,
        max_depth: Option<usize>,
    },
}

impl GridPoint {
    /// Ordering used to break ties: lighter models first.
    fn simplicity(&self) -> (usize, usize, u64) {
        match *self {
            GridPoint::Lr { c } => (0, 0, c.to_bits()),
            GridPoint::Rf {
                n_estimators,
                max_depth,
            } => (n_estimators, max_depth.unwrap_or(usize::MAX), 0),
        }
    }
}

pub fn lr_grid() -> Vec<GridPoint> {
    logistic::C_GRID
        .iter()
        .map(|&c| GridPoint::Lr { c })
        .collect()
}

pub fn rf_grid() -> Vec<GridPoint> {
    let mut g = Vec::new();
    for n in forest::N_ESTIMATORS_GRID {
        for d in forest::MAX_DEPTH_GRID {
            g.push(GridPoint::Rf {
                n_estimators: n,
                max_depth: d,
            });
        }
    }
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub grid: Vec<GridPoint>,
    /// `fold_f1[g][k]`: F1 of grid point `g` on held-out fold `k`.
    pub fold_f1: Vec<Vec<f64>>,
    pub mean_f1: Vec<f64>,
    pub std_f1: Vec<f64>,
    pub selected: usize,
}

impl CvResult {
    pub fn best(&self) -> GridPoint {
        self.grid[self.selected]
    }

    pub fn best_mean_f1(&self) -> f64 {
        self.mean_f1[self.selected]
    }
}

/// Fold of every sample. Each class is shuffled on its own and dealt
/// round-robin, so every fold is within one sample of the class proportions.
pub fn stratified_folds(y: &[bool], folds: usize, seed: u64) -> Vec<usize> {
    let mut out = alloc::vec![0; y.len()];
    let mut offset = 0;
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut rng_for(seed, class as u64));
        for (r, &i) in idx.iter().enumerate() {
            out[i] = (offset + r) % folds;
        }
        offset += idx.len();
    }
    out
}

/// Cross-validates every grid point and selects the best mean F1, breaking
/// ties toward the smaller C, or the fewer and shallower trees. `seed`
/// drives fold assignment and forest seeds.
pub fn cross_validate<X: AsRef<[f64]>>(
    x: &[X],
    y: &[bool],
    grid: &[GridPoint],
    folds: usize,
    seed: u64,
) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty grid".into()));
    }
    if folds < 2 {
        return Err(Error::InvalidConfig("need at least two folds".into()));
    }
    let pos = y.iter().filter(|&&v| v).count();
    let neg = y.len() - pos;
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if pos.min(neg) < folds {
        if pos == 0 || neg == 0 {
            return Err(Error::SingleClass);
        }
        return Err(Error::TooFewSamples {
            needed: folds,
            got: pos.min(neg),
        });
    }
    let assign = stratified_folds(y, folds, seed);
    let mut fold_f1 = alloc::vec![Vec::with_capacity(folds); grid.len()];
    for k in 0..folds {
        let (tx, ty, vx, vy) = split(x, y, &assign, k);
        let scores = score_fold(&tx, &ty, &vx, &vy, grid, seed)?;
        for (g, s) in scores.into_iter().enumerate() {
            fold_f1[g].push(s);
        }
    }
    let mean_f1: Vec<f64> = fold_f1
        .iter()
        .map(|f| f.iter().sum::<f64>() / folds as f64)
        .collect();
    let std_f1: Vec<f64> = fold_f1
        .iter()
        .zip(&mean_f1)
        .map(|(f, m)| math::sqrt(f.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / folds as f64))
        .collect();
    let selected = select(grid, &mean_f1);
    Ok(CvResult {
        grid: grid.to_vec(),
        fold_f1,
        mean_f1,
        std_f1,
        selected,
    })
}

/// Index of the best mean F1, ties to the lighter model.
pub fn select(grid: &[GridPoint], mean_f1: &[f64]) -> usize {
    let mut selected = 0;
    for g in 1..grid.len() {
        let better = mean_f1[g] > mean_f1[selected]
            || (mean_f1[g] == mean_f1[selected]
                && grid[g].simplicity() < grid[selected].simplicity());
        if better {
            selected = g;
        }
    }
    selected
}

type Split<'a> = (Vec<&'a [f64]>, Vec<bool>, Vec<&'a [f64]>, Vec<bool>);

fn split<'a, X: AsRef<[f64]>>(x: &'a [X], y: &[bool], assign: &[usize], k: usize) -> Split<'a> {
    let (mut tx, mut ty, mut vx, mut vy) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for i in 0..x.len() {
        if assign[i] == k {
            vx.push(x[i].as_ref());
            vy.push(y[i]);
        } else {
            tx.push(x[i].as_ref());
            ty.push(y[i]);
        }
    }
    (tx, ty, vx, vy)
}

fn score_fold(
    tx: &[&[f64]],
    ty: &[bool],
    vx: &[&[f64]],
    vy: &[bool],
    grid: &[GridPoint],
    seed: u64,
) -> Result<Vec<f64>> {
    // All forest points are read off one forest of the largest size, unlimited depth.
    let max_trees = grid
        .iter()
        .filter_map(|g| match g {
            GridPoint::Rf { n_estimators, .. } => Some(*n_estimators),
            _ => None,
        })
        .max();
    let forest: Option<Forest> = match max_trees {
        Some(n) => Some(train_rf(tx, ty, &rf_config(n, None, seed))?),
        None => None,
    };
    grid.iter()
        .map(|g| {
            let pred: Vec<bool> = match *g {
                GridPoint::Lr { c } => {
                    let m = train_lr(tx, ty, &LrConfig::with_c(c))?;
                    vx.iter().map(|v| m.confidence(v) >= 0.5).collect()
                }
                GridPoint::Rf {
                    n_estimators,
                    max_depth,
                } => {
                    let f = forest.as_ref().expect("forest grown for rf points");
                    vx.iter()
                        .map(|v| f.confidence_with(v, n_estimators, max_depth) >= 0.5)
                        .collect()
                }
            };
            Ok(f1_score(&pred, vy))
        })
        .collect()
}

pub fn rf_config(n_estimators: usize, max_depth: Option<usize>, seed: u64) -> RfConfig {
    RfConfig {
        n_estimators,
        max_depth,
        max_features: MaxFeatures::Sqrt,
        bootstrap: true,
        min_samples_leaf: 2,
        seed,
    }
}
