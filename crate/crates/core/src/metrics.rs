//! Scoring: OSPA distance, misclassification rate and the joint performance
//! metric (JPM).
//!
//! The JPM combines the three cost channels of the risk:
//! `α · misclassification + β · OSPA² + γ · |N̂ − N|`, with scalar weights
//! taken from the run's risk coefficients. It is a stand-in for the metric of
//! the original study, whose exact definition is not available.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::association::hungarian;
use crate::risk::RiskCoefficients;

/// OSPA distance with cutoff `c` and order `p`, plus the optimal pairs
/// `(index in x, index in y)` whose distance is below the cutoff.
pub fn ospa_with_assignment(x: &[Vector2<f64>], y: &[Vector2<f64>], c: f64, p: f64) -> (f64, Vec<(usize, usize)>) {
    let (m, n) = (x.len(), y.len());
    if m == 0 && n == 0 {
        return (0.0, Vec::new());
    }
    if m == 0 || n == 0 {
        return (c, Vec::new());
    }
    // rows index the smaller set; equal sizes are ordered by value so both
    // argument orders run the same arithmetic and give identical bits
    let swap = m > n || (m == n && lex_greater(x, y));
    let (a, b) = if swap { (y, x) } else { (x, y) };
    let cost: Vec<Vec<f64>> = a
        .iter()
        .map(|u| b.iter().map(|v| (u - v).norm().min(c).powf(p)).collect())
        .collect();
    let (assign, _) = hungarian(&cost).expect("complete bipartite cost is always feasible");
    let total: f64 = assign.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    let matched: Vec<(usize, usize)> = assign
        .iter()
        .enumerate()
        .map(|(i, &j)| if swap { (j, i) } else { (i, j) })
        .collect();
    let big = m.max(n);
    let small = m.min(n);
    let value = ((total + c.powf(p) * (big - small) as f64) / big as f64).powf(1.0 / p);
    let pairs = matched.into_iter().filter(|(i, j)| (x[*i] - y[*j]).norm() < c).collect();
    (value.min(c), pairs)
}

fn lex_greater(x: &[Vector2<f64>], y: &[Vector2<f64>]) -> bool {
    let key = |v: &[Vector2<f64>]| -> Vec<f64> { v.iter().flat_map(|p| [p.x, p.y]).collect() };
    key(x).partial_cmp(&key(y)) == Some(std::cmp::Ordering::Greater)
}

pub fn ospa(x: &[Vector2<f64>], y: &[Vector2<f64>], c: f64, p: f64) -> f64 {
    ospa_with_assignment(x, y, c, p).0
}

/// Fraction of true targets that are either matched to an estimate of the
/// wrong class or not matched at all. No truths scores 0.
pub fn misclassification_rate(truth_classes: &[usize], estimate_classes: &[usize], pairs: &[(usize, usize)]) -> f64 {
    if truth_classes.is_empty() {
        return 0.0;
    }
    let correct = pairs
        .iter()
        .filter(|(t, e)| truth_classes[*t] == estimate_classes[*e])
        .count();
    (truth_classes.len() - correct) as f64 / truth_classes.len() as f64
}

/// Scalar weights of the JPM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JpmWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl JpmWeights {
    /// Largest α and β entries and γ of the risk coefficients.
    pub fn from_coefficients(c: &RiskCoefficients) -> Self {
        Self {
            alpha: c.alpha_max(),
            beta: c.beta_max(),
            gamma: c.gamma,
        }
    }

    pub fn value(&self, miscls: f64, ospa: f64, card_error: f64) -> f64 {
        self.alpha * miscls + self.beta * ospa * ospa + self.gamma * card_error.abs()
    }
}

/// Score of one scan of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanScore {
    pub k: u32,
    pub true_n: usize,
    pub est_n: usize,
    pub ospa: f64,
    pub miscls: f64,
    pub jpm: f64,
}

/// OSPA parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OspaConfig {
    pub cutoff: f64,
    pub order: f64,
}

impl Default for OspaConfig {
    fn default() -> Self {
        Self { cutoff: 100.0, order: 2.0 }
    }
}

/// Scores one scan from true and estimated positions and classes.
pub fn score_scan(
    k: u32,
    truth: &[(Vector2<f64>, usize)],
    estimates: &[(Vector2<f64>, usize)],
    ospa_cfg: &OspaConfig,
    weights: &JpmWeights,
) -> ScanScore {
    let x: Vec<_> = truth.iter().map(|(p, _)| *p).collect();
    let y: Vec<_> = estimates.iter().map(|(p, _)| *p).collect();
    let (d, pairs) = ospa_with_assignment(&x, &y, ospa_cfg.cutoff, ospa_cfg.order);
    let tc: Vec<usize> = truth.iter().map(|(_, c)| *c).collect();
    let ec: Vec<usize> = estimates.iter().map(|(_, c)| *c).collect();
    let miscls = misclassification_rate(&tc, &ec, &pairs);
    let card_error = estimates.len() as f64 - truth.len() as f64;
    ScanScore {
        k,
        true_n: truth.len(),
        est_n: estimates.len(),
        ospa: d,
        miscls,
        jpm: weights.value(miscls, d, card_error),
    }
}

/// Per-scan mean JPM over trials. Every trial must cover the same scans.
pub fn jpm(trials: &[Vec<ScanScore>]) -> Vec<f64> {
    let Some(first) = trials.first() else {
        return Vec::new();
    };
    (0..first.len())
        .map(|s| trials.iter().map(|t| t[s].jpm).sum::<f64>() / trials.len() as f64)
        .collect()
}
