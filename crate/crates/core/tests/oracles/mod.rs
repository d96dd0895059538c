//! Independent reference implementations and the checks that hold the
//! library to them. Shared by the property tests and the acceptance run.
#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use slicewatch_core::eval::metrics::roc_auc;
use slicewatch_core::eval::ttest::{paired_t_test, student_t_two_tailed};
use slicewatch_core::features::{extract, shannon_entropy, Feature};
use slicewatch_core::flow::{Anonymizer, FlowKey, FlowWindow};
use slicewatch_core::learn::forest::{grow_tree, MaxFeatures, RfConfig};
use slicewatch_core::learn::logistic::objective_grad;
use slicewatch_core::{Addr, Imsi, Label, Mac, Protocol, SliceId, WindowLabel};

pub const GRAD_REL_TOL: f64 = 1e-5;
pub const FD_STEP: f64 = 1e-6;
pub const P_VALUE_TOL: f64 = 1e-6;
pub const ENTROPY_TOL: f64 = 1e-12;

// ---- logistic regression ----

/// Penalized mean log-loss written out directly.
pub fn lr_loss(theta: &[f64], x: &[Vec<f64>], y: &[bool], c: f64) -> f64 {
    let d = theta.len() - 1;
    let n = x.len() as f64;
    let mut total = 0.0;
    for (row, &label) in x.iter().zip(y) {
        let z: f64 = row.iter().zip(&theta[..d]).map(|(a, b)| a * b).sum::<f64>() + theta[d];
        let softplus = if z > 0.0 {
            z + (-z).exp().ln_1p()
        } else {
            z.exp().ln_1p()
        };
        total += softplus - if label { z } else { 0.0 };
    }
    let w2: f64 = theta[..d].iter().map(|w| w * w).sum();
    total / n + w2 / (2.0 * c * n)
}

pub fn central_difference(theta: &[f64], x: &[Vec<f64>], y: &[bool], c: f64) -> Vec<f64> {
    (0..theta.len())
        .map(|j| {
            let mut hi = theta.to_vec();
            let mut lo = theta.to_vec();
            hi[j] += FD_STEP;
            lo[j] -= FD_STEP;
            (lr_loss(&hi, x, y, c) - lr_loss(&lo, x, y, c)) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Largest componentwise gap relative to the largest gradient entry.
pub fn gradient_relative_error(theta: &[f64], x: &[Vec<f64>], y: &[bool], c: f64) -> f64 {
    let (_, g) = objective_grad(theta, x, y, c);
    let fd = central_difference(theta, x, y, c);
    let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-8);
    g.iter()
        .zip(&fd)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / scale
}

pub fn lr_batch() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>, Vec<bool>)> {
    (8usize..64).prop_flat_map(|n| {
        (
            prop::collection::vec(-2.0f64..2.0, 13),
            prop::collection::vec(prop::collection::vec(0.0f64..1.0, 12), n),
            prop::collection::vec(any::<bool>(), n),
        )
    })
}

pub fn check_gradient(theta: &[f64], x: &[Vec<f64>], y: &[bool]) -> Result<(), TestCaseError> {
    for c in [0.1, 1.0, 10.0] {
        let e = gradient_relative_error(theta, x, y, c);
        prop_assert!(e <= GRAD_REL_TOL, "C={c}: relative error {e:e}");
    }
    Ok(())
}

// ---- CART ----

pub enum Cart {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Cart>,
        right: Box<Cart>,
    },
}

impl Cart {
    pub fn predict(&self, q: &[f64]) -> f64 {
        match self {
            Cart::Leaf(p) => *p,
            Cart::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if q[*feature] <= *threshold {
                    left.predict(q)
                } else {
                    right.predict(q)
                }
            }
        }
    }
}

fn tally(y: &[bool], idx: &[usize]) -> (u128, u128) {
    let pos = idx.iter().filter(|&&i| y[i]).count() as u128;
    (idx.len() as u128 - pos, pos)
}

/// Greedy Gini CART by exhaustive search: every feature, every cut between
/// adjacent distinct values, each partition recounted from scratch.
/// Impurities are compared as exact fractions.
pub fn cart(x: &[Vec<f64>], y: &[bool], idx: &[usize]) -> Cart {
    let (neg, pos) = tally(y, idx);
    let n = neg + pos;
    if neg == 0 || pos == 0 || n < 2 {
        return Cart::Leaf(pos as f64 / n as f64);
    }
    // weighted impurity of a partition is n - (sum_l/n_l + sum_r/n_r);
    // track the bracket as num/den and keep the largest
    let mut best: Option<(u128, u128, usize, f64)> = None;
    let (pnum, pden) = (neg * neg + pos * pos, n);
    for f in 0..x[0].len() {
        let mut vals: Vec<f64> = idx.iter().map(|&i| x[i][f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let left: Vec<usize> = idx.iter().copied().filter(|&i| x[i][f] <= t).collect();
            let right: Vec<usize> = idx.iter().copied().filter(|&i| x[i][f] > t).collect();
            let (l0, l1) = tally(y, &left);
            let (r0, r1) = tally(y, &right);
            let (nl, nr) = (l0 + l1, r0 + r1);
            let num = (l0 * l0 + l1 * l1) * nr + (r0 * r0 + r1 * r1) * nl;
            let den = nl * nr;
            if num * pden <= pnum * den {
                continue;
            }
            if best.is_none_or(|(bn, bd, _, _)| num * bd > bn * den) {
                best = Some((num, den, f, t));
            }
        }
    }
    match best {
        None => Cart::Leaf(pos as f64 / n as f64),
        Some((_, _, feature, threshold)) => {
            let left: Vec<usize> = idx
                .iter()
                .copied()
                .filter(|&i| x[i][feature] <= threshold)
                .collect();
            let right: Vec<usize> = idx
                .iter()
                .copied()
                .filter(|&i| x[i][feature] > threshold)
                .collect();
            Cart::Split {
                feature,
                threshold,
                left: Box::new(cart(x, y, &left)),
                right: Box::new(cart(x, y, &right)),
            }
        }
    }
}

/// A single full-depth tree on all features without bootstrap.
pub fn plain_tree_config() -> RfConfig {
    RfConfig {
        n_estimators: 1,
        max_depth: None,
        max_features: MaxFeatures::All,
        bootstrap: false,
        min_samples_leaf: 1,
        seed: 0,
    }
}

/// Toy sets with both continuous and heavily tied (small integer) columns.
pub fn cart_set() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<bool>, Vec<Vec<f64>>)> {
    (2usize..=200, 1usize..=6, any::<bool>()).prop_flat_map(|(n, d, discrete)| {
        let cell = if discrete {
            (0u8..5).prop_map(f64::from).boxed()
        } else {
            (-10.0f64..10.0).boxed()
        };
        (
            prop::collection::vec(prop::collection::vec(cell.clone(), d), n),
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(prop::collection::vec(-10.0f64..10.0, d), 20),
        )
    })
}

pub fn check_cart(x: &[Vec<f64>], y: &[bool], queries: &[Vec<f64>]) -> Result<(), TestCaseError> {
    let config = plain_tree_config();
    let tree = grow_tree(x, y, &config, 0);
    let idx: Vec<usize> = (0..x.len()).collect();
    let oracle = cart(x, y, &idx);
    for q in x.iter().chain(queries) {
        let a = tree.probability(q, None);
        let b = oracle.predict(q);
        prop_assert_eq!(a.to_bits(), b.to_bits(), "query {:?}", q);
    }
    Ok(())
}

// ---- AUC ----

/// Fraction of positive/negative pairs ordered correctly, ties count half.
pub fn concordant_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut good = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                good += 1.0;
            } else if si == sj {
                good += 0.5;
            }
        }
    }
    good / pairs
}

pub fn auc_set() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..=1000, any::<bool>()).prop_flat_map(|(n, coarse)| {
        let score = if coarse {
            (0u8..=10).prop_map(|v| f64::from(v) / 10.0).boxed()
        } else {
            (0.0f64..1.0).boxed()
        };
        let labels = prop::collection::vec(any::<bool>(), n).prop_map(|mut l| {
            l[0] = true;
            l[1] = false;
            l
        });
        (prop::collection::vec(score, n), labels)
    })
}

pub fn check_auc(scores: &[f64], labels: &[bool]) -> Result<(), TestCaseError> {
    let roc = roc_auc(scores, labels).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let oracle = concordant_auc(scores, labels);
    prop_assert!(
        (roc.auc - oracle).abs() <= 1e-12,
        "auc {} vs {}",
        roc.auc,
        oracle
    );
    Ok(())
}

// ---- Student t ----

/// Gamma at `k / 2` for positive integer `k`.
pub fn gamma_half(k: u32) -> f64 {
    match k {
        1 => std::f64::consts::PI.sqrt(),
        2 => 1.0,
        _ => (k as f64 / 2.0 - 1.0) * gamma_half(k - 2),
    }
}

pub fn t_density(x: f64, df: u32) -> f64 {
    let v = df as f64;
    let c = gamma_half(df + 1) / ((v * std::f64::consts::PI).sqrt() * gamma_half(df));
    c * (1.0 + x * x / v).powf(-(v + 1.0) / 2.0)
}

/// Two-tailed p by composite Simpson integration of the density on [0, |t|].
pub fn t_two_tailed_numeric(t: f64, df: u32) -> f64 {
    let b = t.abs();
    if b == 0.0 {
        return 1.0;
    }
    let mut m = ((b * 2000.0).ceil() as usize).max(2000);
    m += m % 2;
    let h = b / m as f64;
    let mut s = t_density(0.0, df) + t_density(b, df);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * t_density(i as f64 * h, df);
    }
    1.0 - 2.0 * (s * h / 3.0)
}

pub fn t_case() -> impl Strategy<Value = (f64, u32)> {
    (-25.0f64..25.0, prop::sample::select(vec![2u32, 4, 9]))
}

pub fn check_t(t: f64, df: u32) -> Result<(), TestCaseError> {
    let a = student_t_two_tailed(t, df as f64);
    let b = t_two_tailed_numeric(t, df);
    prop_assert!((a - b).abs() <= P_VALUE_TOL, "t={t} df={df}: {a} vs {b}");
    Ok(())
}

/// Paired samples of size 3, 5 or 10 so the test runs at df 2, 4 and 9.
pub fn paired_case() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    prop::sample::select(vec![3usize, 5, 10]).prop_flat_map(|n| {
        (
            prop::collection::vec(0.5f64..1.0, n),
            prop::collection::vec(0.5f64..1.0, n),
        )
    })
}

pub fn check_paired(a: &[f64], b: &[f64]) -> Result<(), TestCaseError> {
    let r = paired_t_test(a, b, 0.05).map_err(|e| TestCaseError::fail(e.to_string()))?;
    if r.zero_variance {
        return Ok(());
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let sd = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let t = mean / (sd / n.sqrt());
    let p = t_two_tailed_numeric(t, d.len() as u32 - 1);
    prop_assert!(
        (r.p_value - p).abs() <= P_VALUE_TOL,
        "{} vs {}",
        r.p_value,
        p
    );
    prop_assert_eq!(r.significant, r.p_value < 0.05);
    Ok(())
}

// ---- entropy ----

/// `log2 n - (1/n) sum c log2 c` over the token counts.
pub fn entropy_closed_form(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let nf = n as f64;
    nf.log2()
        - counts
            .iter()
            .map(|&c| c as f64 * (c as f64).log2())
            .sum::<f64>()
            / nf
}

pub fn token_set() -> impl Strategy<Value = Vec<u16>> {
    (1u16..200).prop_flat_map(|k| prop::collection::vec(0..k, 1..400))
}

pub fn check_entropy(tokens: &[u16]) -> Result<(), TestCaseError> {
    let mut counts = std::collections::BTreeMap::new();
    for t in tokens {
        *counts.entry(*t).or_insert(0u64) += 1;
    }
    let c: Vec<u64> = counts.into_values().collect();
    let h = shannon_entropy(tokens).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let oracle = entropy_closed_form(&c);
    prop_assert!((h - oracle).abs() <= ENTROPY_TOL, "{h} vs {oracle}");
    Ok(())
}

// ---- anonymization ----

pub fn synthetic_window(ids: &[(u64, u64, u64)], ts: &[u64], sport: u16) -> FlowWindow {
    let n = ids.len();
    let mut arrival: Vec<u64> = ts.iter().cycle().take(n).copied().collect();
    arrival.sort_unstable();
    let sizes: Vec<u32> = (0..n as u32).map(|i| 60 + i % 7).collect();
    FlowWindow {
        key: FlowKey {
            src_addr: Addr(ids[0].2),
            dst_addr: Addr(7),
            src_port: sport,
            dst_port: 443,
            protocol: Protocol::Tcp,
        },
        slice: SliceId::Embb,
        window_index: 0,
        window_start_us: 0,
        window_len_us: 2_000_000,
        byte_count: sizes.iter().map(|&s| s as u64).sum(),
        pkt_count: n as u32,
        pkt_sizes: sizes,
        arrival_ts: arrival,
        identifiers: ids
            .iter()
            .map(|&(i, m, a)| (Imsi(i), Mac(m), Addr(a)))
            .collect(),
        pkt_labels: vec![Label::Benign; n],
        label: WindowLabel::Benign,
    }
}

pub fn window_case() -> impl Strategy<Value = (FlowWindow, Vec<u8>)> {
    (1usize..120).prop_flat_map(|n| {
        (
            prop::collection::vec((0u64..6, 0u64..4, 0u64..3), n),
            prop::collection::vec(0u64..2_000_000, 1..8),
            any::<u16>(),
            prop::collection::vec(any::<u8>(), 0..32),
        )
            .prop_map(|(ids, ts, sport, key)| (synthetic_window(&ids, &ts, sport), key))
    })
}

/// Entropy features of `w` and of its anonymized copy, as bit patterns.
pub fn entropy_bits(w: &FlowWindow, key: &[u8]) -> ([u64; 2], [u64; 2]) {
    let pick = |v: [f64; 12]| {
        [
            v[Feature::IdEntropy.index()].to_bits(),
            v[Feature::SportEntropy.index()].to_bits(),
        ]
    };
    (
        pick(extract(w)),
        pick(extract(&Anonymizer::new(key).window(w))),
    )
}

pub fn check_anonymized(w: &FlowWindow, key: &[u8]) -> Result<(), TestCaseError> {
    let (before, after) = entropy_bits(w, key);
    prop_assert_eq!(before, after);
    Ok(())
}

// ---- suite ----

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn outcome<T: std::fmt::Debug>(
    r: Result<(), proptest::test_runner::TestError<T>>,
) -> Result<(), String> {
    r.map_err(|e| match e {
        proptest::test_runner::TestError::Fail(why, _) => why.to_string(),
        other => other.to_string(),
    })
}

/// Every oracle comparison at `cases` random instances each, seeded
/// deterministically; one entry per oracle.
pub fn run_suite(cases: u32) -> Vec<(&'static str, Result<(), String>)> {
    vec![
        (
            "lr gradient vs central differences",
            outcome(runner(cases).run(&lr_batch(), |(t, x, y)| check_gradient(&t, &x, &y))),
        ),
        (
            "single tree vs exhaustive cart",
            outcome(runner(cases).run(&cart_set(), |(x, y, q)| check_cart(&x, &y, &q))),
        ),
        (
            "auc vs concordant pairs",
            outcome(runner(cases).run(&auc_set(), |(s, l)| check_auc(&s, &l))),
        ),
        (
            "t tail vs numeric integration",
            outcome(runner(cases).run(&t_case(), |(t, df)| check_t(t, df))),
        ),
        (
            "paired t-test p vs numeric integration",
            outcome(runner(cases).run(&paired_case(), |(a, b)| check_paired(&a, &b))),
        ),
        (
            "entropy vs closed form",
            outcome(runner(cases).run(&token_set(), |t| check_entropy(&t))),
        ),
        (
            "entropy features under anonymization",
            outcome(runner(cases).run(&window_case(), |(w, k)| check_anonymized(&w, &k))),
        ),
    ]
}
