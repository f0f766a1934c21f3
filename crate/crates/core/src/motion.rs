//! Class-dependent motion models (CV, CA) on the shared 6-D state, per-class
//! model sets with Markov switching, and the class-conditioned prediction.

use nalgebra::{Matrix2, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, JdtcError, Result};
use crate::kalman::{kalman_update, Linearized};
use crate::rfs::{
    moment_match, symmetrize, ClassConditionedDensity, ClassDensity, GaussianComponent, GaussianMixture, ModelDensity,
    StateCovariance, StateVector,
};
use nalgebra::DVector;

/// Process variance given to the acceleration entries of CV models.
pub const CV_ACCEL_VARIANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    CV,
    CA,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionModel {
    pub kind: ModelKind,
    pub transition: StateCovariance,
    pub process_noise: StateCovariance,
}

impl MotionModel {
    pub fn predict(&self, mean: &StateVector, cov: &StateCovariance) -> (StateVector, StateCovariance) {
        let f = &self.transition;
        (f * mean, symmetrize(&(f * cov * f.transpose() + self.process_noise)))
    }

    fn predict_mixture(&self, gm: &GaussianMixture) -> GaussianMixture {
        GaussianMixture::new(
            gm.components
                .iter()
                .map(|c| {
                    let (m, p) = self.predict(&c.mean, &c.cov);
                    GaussianComponent::new(c.weight, m, p)
                })
                .collect(),
        )
    }
}

/// Places a per-axis block at the x rows (0..3) and y rows (3..6).
fn per_axis(block: &Matrix3<f64>) -> StateCovariance {
    let mut m = StateCovariance::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(block);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(block);
    m
}

/// Constant-velocity model. Acceleration entries are carried unchanged and
/// uncoupled, with a small process variance.
pub fn build_cv_model(t: f64, sigma_v2: f64) -> Result<MotionModel> {
    if !(t > 0.0) {
        return domain(format!("scan period must be positive, got {t}"));
    }
    if !(sigma_v2 >= 0.0) {
        return domain("process variance must be nonnegative");
    }
    let mut f = Matrix3::identity();
    f[(0, 1)] = t;
    let q2 = Matrix2::new(t * t, t, t, 1.0) * sigma_v2;
    let mut q = Matrix3::zeros();
    q.fixed_view_mut::<2, 2>(0, 0).copy_from(&q2);
    q[(2, 2)] = CV_ACCEL_VARIANCE;
    Ok(MotionModel {
        kind: ModelKind::CV,
        transition: per_axis(&f),
        process_noise: per_axis(&q),
    })
}

/// Constant-acceleration model with white-jerk-style process noise.
pub fn build_ca_model(t: f64, sigma_a2: f64) -> Result<MotionModel> {
    if !(t > 0.0) {
        return domain(format!("scan period must be positive, got {t}"));
    }
    if !(sigma_a2 >= 0.0) {
        return domain("process variance must be nonnegative");
    }
    let f = Matrix3::new(1.0, t, 0.5 * t * t, 0.0, 1.0, t, 0.0, 0.0, 1.0);
    let (t2, t3, t4) = (t * t, t * t * t, t * t * t * t);
    let q = Matrix3::new(
        t4 / 4.0,
        t3 / 2.0,
        t2 / 2.0,
        t3 / 2.0,
        t2,
        t,
        t2 / 2.0,
        t,
        1.0,
    ) * sigma_a2;
    Ok(MotionModel {
        kind: ModelKind::CA,
        transition: per_axis(&f),
        process_noise: per_axis(&q),
    })
}

/// Motion models of one class together with their Markov switching matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassModelSet {
    pub class_id: usize,
    pub models: Vec<MotionModel>,
    /// Row-stochastic, `switch_matrix[from][to]`.
    pub switch_matrix: Vec<Vec<f64>>,
}

impl ClassModelSet {
    pub fn single(class_id: usize, model: MotionModel) -> Self {
        Self {
            class_id,
            models: vec![model],
            switch_matrix: vec![vec![1.0]],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.models.len();
        if n == 0 {
            return config(format!("class {} has no motion models", self.class_id));
        }
        if self.switch_matrix.len() != n || self.switch_matrix.iter().any(|r| r.len() != n) {
            return config(format!("class {} switch matrix must be {n}x{n}", self.class_id));
        }
        for row in &self.switch_matrix {
            let s: f64 = row.iter().sum();
            if row.iter().any(|v| *v < 0.0) || (s - 1.0).abs() > 1e-9 {
                return config(format!("class {} switch matrix rows must sum to 1", self.class_id));
            }
        }
        Ok(())
    }

    /// Predicted model probabilities `Σ_i π[i][m] μ_i`.
    pub fn predict_model_probs(&self, probs: &[f64]) -> Vec<f64> {
        (0..self.models.len())
            .map(|m| probs.iter().zip(&self.switch_matrix).map(|(p, row)| p * row[m]).sum())
            .collect()
    }

    /// Predicts one class density. Single-model classes keep their mixture;
    /// multi-model classes are IMM-mixed and collapse to one Gaussian per
    /// model before the model-matched prediction.
    pub fn predict(&self, density: &ClassDensity) -> Result<ClassDensity> {
        if density.models.len() != self.models.len() {
            return Err(JdtcError::Config(format!(
                "class {} density has {} models, model set has {}",
                self.class_id,
                density.models.len(),
                self.models.len()
            )));
        }
        if self.models.len() == 1 {
            return Ok(ClassDensity {
                models: vec![ModelDensity {
                    prob: density.models[0].prob,
                    mixture: self.models[0].predict_mixture(&density.models[0].mixture),
                }],
            });
        }
        let prior = density.model_probs();
        let predicted = self.predict_model_probs(&prior);
        let mut models = Vec::with_capacity(self.models.len());
        for (m, model) in self.models.iter().enumerate() {
            let c = predicted[m];
            let parts: Vec<(f64, &StateVector, &StateCovariance)> = density
                .models
                .iter()
                .enumerate()
                .flat_map(|(i, md)| {
                    let mix = if c > 0.0 { self.switch_matrix[i][m] * prior[i] / c } else { prior[i] };
                    md.mixture.components.iter().map(move |comp| (mix * comp.weight, &comp.mean, &comp.cov))
                })
                .collect();
            let (mean, cov) = moment_match(parts.iter().copied())
                .ok_or_else(|| JdtcError::Domain(format!("class {} has an empty model mixture", self.class_id)))?;
            let (mean, cov) = model.predict(&mean, &cov);
            models.push(ModelDensity {
                prob: c,
                mixture: GaussianMixture::single(mean, cov),
            });
        }
        Ok(ClassDensity { models })
    }
}

/// Predicts every class density; returns the predicted density and the
/// existence factor `p_s`.
pub fn predict_class_density(
    d: &ClassConditionedDensity,
    models: &[ClassModelSet],
    p_s: f64,
) -> Result<(ClassConditionedDensity, f64)> {
    if models.len() < d.classes.len() {
        return config(format!("{} classes but only {} model sets", d.classes.len(), models.len()));
    }
    let classes = d
        .classes
        .iter()
        .zip(models)
        .map(|(c, set)| set.predict(c))
        .collect::<Result<Vec<_>>>()?;
    Ok((
        ClassConditionedDensity {
            classes,
            class_probs: d.class_probs.clone(),
        },
        p_s,
    ))
}

// ============================================================================
// IMM bank used by the single-hypothesis baselines
// ============================================================================

/// Interacting-multiple-model filter with one Gaussian per model.
#[derive(Debug, Clone, PartialEq)]
pub struct ImmBank {
    pub models: Vec<MotionModel>,
    pub switch_matrix: Vec<Vec<f64>>,
    pub means: Vec<StateVector>,
    pub covs: Vec<StateCovariance>,
    pub probs: Vec<f64>,
}

impl ImmBank {
    pub fn new(set: &ClassModelSet, mean: StateVector, cov: StateCovariance, probs: Vec<f64>) -> Self {
        let n = set.models.len();
        Self {
            models: set.models.clone(),
            switch_matrix: set.switch_matrix.clone(),
            means: vec![mean; n],
            covs: vec![cov; n],
            probs,
        }
    }

    /// Interaction and model-matched prediction.
    pub fn predict(&mut self) {
        let n = self.models.len();
        let mut c = vec![0.0; n];
        for (m, cm) in c.iter_mut().enumerate() {
            *cm = (0..n).map(|i| self.switch_matrix[i][m] * self.probs[i]).sum();
        }
        let mut means = Vec::with_capacity(n);
        let mut covs = Vec::with_capacity(n);
        for m in 0..n {
            let parts: Vec<(f64, &StateVector, &StateCovariance)> = (0..n)
                .map(|i| {
                    let w = if c[m] > 0.0 { self.switch_matrix[i][m] * self.probs[i] / c[m] } else { self.probs[i] };
                    (w, &self.means[i], &self.covs[i])
                })
                .collect();
            let (mean, cov) = moment_match(parts.iter().copied()).unwrap_or((self.means[m], self.covs[m]));
            let (mean, cov) = self.models[m].predict(&mean, &cov);
            means.push(mean);
            covs.push(cov);
        }
        self.means = means;
        self.covs = covs;
        self.probs = c;
    }

    /// Per-model measurement likelihoods against the current (predicted)
    /// states, without changing the bank.
    pub fn likelihoods<F: Fn(&StateVector) -> Linearized>(&self, z: &DVector<f64>, linearize: F) -> Vec<f64> {
        self.means
            .iter()
            .zip(&self.covs)
            .map(|(m, p)| kalman_update(m, p, z, &linearize(m)).map_or(0.0, |u| u.likelihood))
            .collect()
    }

    /// Model-matched update; returns the mixture likelihood `Σ μ_m Λ_m`.
    pub fn update<F: Fn(&StateVector) -> Linearized>(&mut self, z: &DVector<f64>, linearize: F) -> f64 {
        let mut total = 0.0;
        let mut lik = Vec::with_capacity(self.models.len());
        for m in 0..self.models.len() {
            match kalman_update(&self.means[m], &self.covs[m], z, &linearize(&self.means[m])) {
                Some(u) => {
                    self.means[m] = u.mean;
                    self.covs[m] = u.cov;
                    lik.push(u.likelihood);
                }
                None => lik.push(0.0),
            }
            total += self.probs[m] * lik[m];
        }
        if total > 0.0 {
            for (p, l) in self.probs.iter_mut().zip(&lik) {
                *p = *p * l / total;
            }
        }
        total
    }

    /// Fused estimate over the models.
    pub fn estimate(&self) -> (StateVector, StateCovariance) {
        let parts: Vec<_> = (0..self.models.len()).map(|m| (self.probs[m], &self.means[m], &self.covs[m])).collect();
        moment_match(parts.iter().copied()).unwrap_or((self.means[0], self.covs[0]))
    }

    /// Resets every model to the given estimate, keeping model probabilities.
    pub fn reseed(&mut self, mean: StateVector, cov: StateCovariance) {
        for m in 0..self.models.len() {
            self.means[m] = mean;
            self.covs[m] = cov;
        }
    }
}
