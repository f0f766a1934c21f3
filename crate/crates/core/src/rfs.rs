//! Labeled random finite set value types.
//!
//! Tracks are labeled Bernoulli components whose spatial density is
//! conditioned on a target class. Each class carries one Gaussian mixture per
//! motion model together with the model probabilities, so single-model and
//! multi-model (IMM) classes share one representation.
//!
//! The kinematic state is fixed at six dimensions, ordered
//! `[x, vx, ax, y, vy, ay]`. Constant-velocity models carry the acceleration
//! entries along without coupling them into position or velocity.

use std::collections::BTreeSet;

use nalgebra::{Matrix6, SymmetricEigen, Vector6};
use serde::{Deserialize, Serialize};

use crate::association::AssociationMap;
use crate::error::{domain, JdtcError, Result};

pub const STATE_DIM: usize = 6;
/// Index of the x position inside the state vector.
pub const POS_X: usize = 0;
/// Index of the y position inside the state vector.
pub const POS_Y: usize = 3;

pub type StateVector = Vector6<f64>;
pub type StateCovariance = Matrix6<f64>;

/// Tolerance used when checking that probability vectors sum to one.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Unique track label: the scan a track was born in and its index among the
/// births of that scan. Ordered lexicographically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Label {
    pub birth_time: u32,
    pub birth_index: u32,
}

impl Label {
    pub fn new(birth_time: u32, birth_index: u32) -> Self {
        Self {
            birth_time,
            birth_index,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.birth_time, self.birth_index)
    }
}

/// Returns `(P + Pᵀ) / 2`.
pub fn symmetrize(p: &StateCovariance) -> StateCovariance {
    (p + p.transpose()) * 0.5
}

/// Checks symmetry (relative 1e-9) and positive semi-definiteness
/// (smallest eigenvalue ≥ −1e-9 · largest).
pub fn is_valid_covariance(p: &StateCovariance) -> bool {
    let scale = p.abs().max().max(1e-300);
    if (p - p.transpose()).abs().max() > 1e-9 * scale {
        return false;
    }
    if !p.iter().all(|v| v.is_finite()) {
        return false;
    }
    let eig = SymmetricEigen::new(symmetrize(p)).eigenvalues;
    let largest = eig.max().max(0.0);
    eig.min() >= -1e-9 * largest.max(1e-12)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: StateVector,
    pub cov: StateCovariance,
}

impl GaussianComponent {
    pub fn new(weight: f64, mean: StateVector, cov: StateCovariance) -> Self {
        Self { weight, mean, cov }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.weight >= 0.0) || !self.weight.is_finite() {
            return domain(format!("component weight {} is not a finite nonnegative number", self.weight));
        }
        if !self.mean.iter().all(|v| v.is_finite()) {
            return domain("component mean is not finite");
        }
        if !is_valid_covariance(&self.cov) {
            return domain("component covariance is not symmetric positive semi-definite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaussianMixture {
    pub components: Vec<GaussianComponent>,
}

impl GaussianMixture {
    pub fn new(components: Vec<GaussianComponent>) -> Self {
        Self { components }
    }

    pub fn single(mean: StateVector, cov: StateCovariance) -> Self {
        Self::new(vec![GaussianComponent::new(1.0, mean, cov)])
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn total_weight(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.total_weight() - 1.0).abs() <= tol
    }

    /// Rescales weights to sum to one. A mixture with zero total weight is
    /// left untouched.
    pub fn normalize(&mut self) {
        let total = self.total_weight();
        if total > 0.0 {
            for c in &mut self.components {
                c.weight /= total;
            }
        }
    }
}

/// First two moments of a weighted set of Gaussians. Weights need not sum
/// to one; they are normalized here.
pub(crate) fn moment_match<'a, I>(parts: I) -> Option<(StateVector, StateCovariance)>
where
    I: IntoIterator<Item = (f64, &'a StateVector, &'a StateCovariance)> + Clone,
{
    let mut total = 0.0;
    let mut mean = StateVector::zeros();
    for (w, m, _) in parts.clone() {
        total += w;
        mean += m * w;
    }
    if !(total > 0.0) {
        return None;
    }
    mean /= total;
    let mut cov = StateCovariance::zeros();
    for (w, m, p) in parts {
        let d = m - mean;
        cov += (p + d * d.transpose()) * w;
    }
    Some((mean, symmetrize(&(cov / total))))
}

/// Mean and covariance of a Gaussian mixture:
/// `mean = Σ wₙ mₙ`, `cov = Σ wₙ (Pₙ + (mₙ − mean)(mₙ − mean)ᵀ)`.
pub fn mixture_moments(gm: &GaussianMixture) -> Result<(StateVector, StateCovariance)> {
    if gm.is_empty() {
        return domain("moments of an empty mixture");
    }
    moment_match(gm.components.iter().map(|c| (c.weight, &c.mean, &c.cov)))
        .ok_or_else(|| JdtcError::Domain("mixture has zero total weight".into()))
}

/// Gaussian-mixture housekeeping parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PruneConfig {
    pub prune_threshold: f64,
    pub merge_distance: f64,
    pub max_components: usize,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            prune_threshold: 1e-5,
            merge_distance: 4.0,
            max_components: 20,
        }
    }
}

fn mahalanobis_sq(d: &StateVector, p: &StateCovariance) -> f64 {
    if d.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    match p.cholesky() {
        Some(ch) => d.dot(&ch.solve(d)),
        None => f64::INFINITY,
    }
}

/// Prune/merge/cap without the final renormalization.
fn reduce_components(
    gm: &GaussianMixture,
    prune_thresh: f64,
    merge_dist: f64,
    max_components: usize,
) -> Vec<GaussianComponent> {
    if gm.is_empty() {
        return Vec::new();
    }
    let mut kept: Vec<(usize, &GaussianComponent)> = gm
        .components
        .iter()
        .enumerate()
        .filter(|(_, c)| c.weight >= prune_thresh)
        .collect();
    if kept.is_empty() {
        let best = gm
            .components
            .iter()
            .enumerate()
            .fold(0, |best, (i, c)| if c.weight > gm.components[best].weight { i } else { best });
        kept.push((best, &gm.components[best]));
    }

    // leaders are taken in order of decreasing weight; ties keep input order
    let mut order: Vec<usize> = (0..kept.len()).collect();
    order.sort_by(|&a, &b| kept[b].1.weight.total_cmp(&kept[a].1.weight).then(a.cmp(&b)));

    let mut used = vec![false; kept.len()];
    let mut merged: Vec<(usize, GaussianComponent)> = Vec::new();
    for &lead in &order {
        if used[lead] {
            continue;
        }
        let leader = kept[lead].1;
        let cluster: Vec<usize> = order
            .iter()
            .copied()
            .filter(|&i| {
                !used[i] && {
                    let c = kept[i].1;
                    i == lead || mahalanobis_sq(&(c.mean - leader.mean), &c.cov) < merge_dist
                }
            })
            .collect();
        for &i in &cluster {
            used[i] = true;
        }
        let component = if cluster.len() == 1 {
            leader.clone()
        } else {
            let weight: f64 = cluster.iter().map(|&i| kept[i].1.weight).sum();
            let (mean, cov) = moment_match(cluster.iter().map(|&i| {
                let c = kept[i].1;
                (c.weight, &c.mean, &c.cov)
            }))
            .unwrap_or((leader.mean, leader.cov));
            GaussianComponent::new(weight, mean, cov)
        };
        merged.push((kept[lead].0, component));
    }

    if merged.len() > max_components.max(1) {
        merged.sort_by(|a, b| b.1.weight.total_cmp(&a.1.weight).then(a.0.cmp(&b.0)));
        merged.truncate(max_components.max(1));
    }
    merged.sort_by_key(|(idx, _)| *idx);
    merged.into_iter().map(|(_, c)| c).collect()
}

/// Drops components below `prune_thresh`, merges components whose squared
/// Mahalanobis distance to a heavier leader is below `merge_dist`
/// (moment-preserving), keeps at most `max_components` and renormalizes.
/// Surviving components keep their input order.
pub fn prune_and_merge(
    gm: &GaussianMixture,
    prune_thresh: f64,
    merge_dist: f64,
    max_components: usize,
) -> GaussianMixture {
    let mut out = GaussianMixture::new(reduce_components(gm, prune_thresh, merge_dist, max_components));
    out.normalize();
    out
}

/// One motion model's share of a class-conditioned density.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDensity {
    pub prob: f64,
    pub mixture: GaussianMixture,
}

/// Density of a track under one class hypothesis: a mixture per motion model.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDensity {
    pub models: Vec<ModelDensity>,
}

impl ClassDensity {
    pub fn single_model(mixture: GaussianMixture) -> Self {
        Self {
            models: vec![ModelDensity { prob: 1.0, mixture }],
        }
    }

    pub fn model_probs(&self) -> Vec<f64> {
        self.models.iter().map(|m| m.prob).collect()
    }

    /// Moments of `Σ_m μ_m Σ_n w_mn N(m_mn, P_mn)`.
    pub fn moments(&self) -> Result<(StateVector, StateCovariance)> {
        let parts: Vec<(f64, &StateVector, &StateCovariance)> = self
            .models
            .iter()
            .flat_map(|m| m.mixture.components.iter().map(move |c| (m.prob * c.weight, &c.mean, &c.cov)))
            .collect();
        if parts.is_empty() {
            return domain("class density has no components");
        }
        moment_match(parts.iter().copied())
            .ok_or_else(|| JdtcError::Domain("class density has zero total weight".into()))
    }

    pub fn prune(&mut self, cfg: &PruneConfig) {
        for m in &mut self.models {
            m.mixture = prune_and_merge(&m.mixture, cfg.prune_threshold, cfg.merge_distance, cfg.max_components);
        }
    }
}

/// Per-class densities together with the class probability vector.
/// Class ids are the vector indices `0..J`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassConditionedDensity {
    pub classes: Vec<ClassDensity>,
    pub class_probs: Vec<f64>,
}

impl ClassConditionedDensity {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_moments(&self, class: usize) -> Result<(StateVector, StateCovariance)> {
        self.classes
            .get(class)
            .ok_or_else(|| JdtcError::Domain(format!("unknown class {class}")))?
            .moments()
    }

    /// Moments of the class-marginal density `Σ_j P(H^j) p(x|H^j)`.
    pub fn marginal_moments(&self) -> Result<(StateVector, StateCovariance)> {
        let per_class = self
            .classes
            .iter()
            .map(ClassDensity::moments)
            .collect::<Result<Vec<_>>>()?;
        moment_match(
            per_class
                .iter()
                .zip(&self.class_probs)
                .map(|((m, p), w)| (*w, m, p)),
        )
        .ok_or_else(|| JdtcError::Domain("class probabilities sum to zero".into()))
    }

    /// Checks the probability-vector and covariance invariants.
    pub fn validate(&self) -> Result<()> {
        if self.classes.len() != self.class_probs.len() {
            return domain("class probability vector length does not match class count");
        }
        check_probability_vector(&self.class_probs, "class probabilities")?;
        for (j, class) in self.classes.iter().enumerate() {
            if class.models.is_empty() {
                return domain(format!("class {j} has no motion models"));
            }
            let probs = class.model_probs();
            check_probability_vector(&probs, "model probabilities")?;
            for m in &class.models {
                for c in &m.mixture.components {
                    c.validate()?;
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn check_probability_vector(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|v| !(0.0..=1.0 + NORMALIZATION_TOL).contains(v)) {
        return domain(format!("{what} outside [0,1]: {p:?}"));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > NORMALIZATION_TOL {
        return domain(format!("{what} sum to {s}, not 1"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub label: Label,
    pub existence: f64,
    pub density: ClassConditionedDensity,
}

impl Track {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.existence) {
            return domain(format!("track {} existence {} outside [0,1]", self.label, self.existence));
        }
        self.density.validate()
    }
}

/// Labeled multi-Bernoulli density.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LmbDensity {
    pub tracks: Vec<Track>,
}

impl LmbDensity {
    pub fn new(tracks: Vec<Track>) -> Self {
        Self { tracks }
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.tracks.iter().map(|t| t.label).collect()
    }

    /// Mean cardinality `Σ r`.
    pub fn expected_cardinality(&self) -> f64 {
        self.tracks.iter().map(|t| t.existence).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for t in &self.tracks {
            if !seen.insert(t.label) {
                return domain(format!("duplicate label {}", t.label));
            }
            t.validate()?;
        }
        Ok(())
    }
}

/// Probability that the set of existing labels is exactly `label_set`:
/// `∏_{i∉L}(1 − rᵢ) · ∏_{ℓ∈L} r_ℓ`.
pub fn lmb_set_weight(density: &LmbDensity, label_set: &BTreeSet<Label>) -> Result<f64> {
    let known: BTreeSet<Label> = density.labels().into_iter().collect();
    if let Some(l) = label_set.iter().find(|l| !known.contains(l)) {
        return domain(format!("label {l} is not in the density"));
    }
    Ok(density
        .tracks
        .iter()
        .map(|t| {
            if label_set.contains(&t.label) {
                t.existence
            } else {
                1.0 - t.existence
            }
        })
        .product())
}

/// Weight of one `(label set, association map)` hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisWeight {
    pub label_set: BTreeSet<Label>,
    pub assoc: AssociationMap,
    pub weight: f64,
}

impl HypothesisWeight {
    pub fn cardinality(&self) -> usize {
        self.label_set.len()
    }
}
