//! Conditional joint decision and estimation risk: decision regions, cost
//! terms, decision selection and the coefficient advisor for γ.
//!
//! For one track with class likelihoods `L_j` and class probabilities `P_j`
//! the intermediate cost of deciding `i` is
//! `C_i = Σ_j (α_ij c_ij + β_ij ε_ij) L_j P_j`; the measurement lies in the
//! decision region of the class with the smallest cost (lower index on ties).

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};
use crate::rfs::{HypothesisWeight, StateCovariance, StateVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskCoefficients {
    /// `alpha[i][j]`: weight of the decision cost of deciding `i` under class `j`.
    pub alpha: Vec<Vec<f64>>,
    /// `beta[i][j]`: weight of the estimation cost.
    pub beta: Vec<Vec<f64>>,
    /// Weight of the cardinality cost, shared by all hypotheses.
    pub gamma: f64,
    /// Decision cost `c[i][j]`, zero on the diagonal.
    pub cost: Vec<Vec<f64>>,
}

impl RiskCoefficients {
    /// Constant α and β, unit off-diagonal decision cost.
    pub fn uniform(num_classes: usize, alpha: f64, beta: f64, gamma: f64) -> Self {
        let j = num_classes;
        Self {
            alpha: vec![vec![alpha; j]; j],
            beta: vec![vec![beta; j]; j],
            gamma,
            cost: (0..j).map(|i| (0..j).map(|k| if i == k { 0.0 } else { 1.0 }).collect()).collect(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.cost.len()
    }

    pub fn alpha_max(&self) -> f64 {
        self.alpha.iter().flatten().copied().fold(0.0, f64::max)
    }

    pub fn beta_max(&self) -> f64 {
        self.beta.iter().flatten().copied().fold(0.0, f64::max)
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        let j = num_classes;
        for (name, m) in [("alpha", &self.alpha), ("beta", &self.beta), ("cost", &self.cost)] {
            if m.len() != j || m.iter().any(|r| r.len() != j) {
                return config(format!("risk {name} must be {j}x{j}"));
            }
            if m.iter().flatten().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return config(format!("risk {name} entries must be finite and nonnegative"));
            }
        }
        if (0..j).any(|i| self.cost[i][i] != 0.0) {
            return config("risk cost diagonal must be zero");
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return config("risk gamma must be finite and nonnegative");
        }
        Ok(())
    }

    /// `α_ij c_ij + β_ij ε_ij`.
    fn weight(&self, i: usize, j: usize, eps: f64) -> f64 {
        self.alpha[i][j] * self.cost[i][j] + self.beta[i][j] * eps
    }
}

/// Intermediate costs `C_i` for every decision `i`. `eps[i][j]` is the
/// estimation cost of deciding `i` under class `j`.
pub fn intermediate_costs(likelihoods: &[f64], priors: &[f64], eps: &[Vec<f64>], coeffs: &RiskCoefficients) -> Vec<f64> {
    let j = likelihoods.len();
    (0..j)
        .map(|i| (0..j).map(|k| coeffs.weight(i, k, eps[i][k]) * likelihoods[k] * priors[k]).sum())
        .collect()
}

/// Index of the smallest value, lower index on ties.
pub fn argmin_lower(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// The decision whose region contains the measurement(s) with the given
/// class likelihoods.
pub fn region_for(likelihoods: &[f64], priors: &[f64], eps: &[Vec<f64>], coeffs: &RiskCoefficients) -> usize {
    argmin_lower(&intermediate_costs(likelihoods, priors, eps, coeffs))
}

/// Whether measurement(s) with the given class likelihoods lie in the region
/// of `decision`.
pub fn decision_region_membership(
    likelihoods: &[f64],
    priors: &[f64],
    eps: &[Vec<f64>],
    decision: usize,
    coeffs: &RiskCoefficients,
) -> bool {
    region_for(likelihoods, priors, eps, coeffs) == decision
}

/// Two-class likelihood-ratio test. Decides class 0 when
/// `L₀P₀ / (L₁P₁)` clears the threshold set by the coefficients; the
/// direction of the comparison follows the sign of the threshold
/// denominator. Ties go to class 0.
pub fn likelihood_ratio_decision(likelihoods: [f64; 2], priors: [f64; 2], eps: [[f64; 2]; 2], coeffs: &RiskCoefficients) -> usize {
    let a = |i: usize, j: usize| coeffs.weight(i, j, eps[i][j]);
    // decide 0 iff (A10 − A00) L0P0 ≥ (A01 − A11) L1P1
    let den = a(1, 0) - a(0, 0);
    let num = a(0, 1) - a(1, 1);
    let x = likelihoods[0] * priors[0];
    let y = likelihoods[1] * priors[1];
    let decide_zero = if y > 0.0 {
        let ratio = x / y;
        if den > 0.0 {
            ratio >= num / den
        } else if den < 0.0 {
            ratio <= num / den
        } else {
            num <= 0.0
        }
    } else {
        den * x >= 0.0
    };
    if decide_zero {
        0
    } else {
        1
    }
}

/// `tr(P) + ‖x̂ − x̌‖²`.
pub fn state_estimation_cost(mean: &StateVector, cov: &StateCovariance, x_check: &StateVector) -> f64 {
    cov.trace() + (mean - x_check).norm_squared()
}

/// `Σ_h N(I_h) (ω_h − ω_h^decided)`: the unconditioned mean cardinality
/// minus the decided one. The tables need not list the same hypotheses;
/// missing entries count as zero weight.
pub fn cardinality_cost(unconditioned: &[HypothesisWeight], decided: &[HypothesisWeight]) -> f64 {
    let mean = |t: &[HypothesisWeight]| t.iter().map(|h| h.cardinality() as f64 * h.weight).sum::<f64>();
    mean(unconditioned) - mean(decided)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    /// `Σ α c` term.
    pub classification: f64,
    /// `Σ β ε_X` term.
    pub estimation: f64,
    /// `γ ε_I` term.
    pub cardinality: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.classification + self.estimation + self.cardinality
    }
}

/// Per-track class decisions with the cost that selected them.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionSet {
    pub decisions: Vec<usize>,
    pub cost: CostBreakdown,
}

impl DecisionSet {
    pub fn total(&self) -> f64 {
        self.cost.total()
    }
}

/// Index of the cheapest candidate; ties are broken lexicographically on the
/// decision vectors.
pub fn select_decision(candidates: &[DecisionSet]) -> Result<usize> {
    if candidates.is_empty() {
        return domain("no candidate decision sets");
    }
    let mut best = 0;
    for (i, c) in candidates.iter().enumerate().skip(1) {
        let b = &candidates[best];
        if c.total() < b.total() || (c.total() == b.total() && c.decisions < b.decisions) {
            best = i;
        }
    }
    Ok(best)
}

/// Cardinality weight that balances the largest classification and
/// estimation cost against the existence lost on a missed detection:
/// `(α_max + β_max · max ε_X) / (1 − p̄)`, where `p̄` is the existence
/// probability after an empty scan.
pub fn advise_gamma(coeffs: &RiskCoefficients, max_eps_x: f64, p_bar: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p_bar) {
        return domain(format!("p_bar must lie in [0,1), got {p_bar}"));
    }
    Ok((coeffs.alpha_max() + coeffs.beta_max() * max_eps_x) / (1.0 - p_bar))
}
