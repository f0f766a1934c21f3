//! Scenario configuration, ground truth and the built-in examples.
//!
//! Truth is noise-free: a target keeps its initial acceleration until a
//! [`MotionSegment`] takes over. Scans are numbered `1..=horizon` and a target
//! is present for `birth <= k <= death`.

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineConfig, BirthPrior, DteTracker, EtdTracker};
use crate::error::{config, JdtcError, Result};
use crate::filter::{BirthComponent, BirthModel, CjdeLmbFilter, FilterConfig};
use crate::metrics::OspaConfig;
use crate::motion::{build_ca_model, build_cv_model, ClassModelSet, ModelKind};
use crate::rfs::{
    check_probability_vector, ClassConditionedDensity, ClassDensity, GaussianMixture, Label, ModelDensity, StateCovariance,
    StateVector, POS_X, POS_Y,
};
use crate::risk::RiskCoefficients;
use crate::sensing::{Sensors, TruthEntry};
use crate::tracker::Tracker;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Algorithm {
    #[default]
    #[serde(rename = "cjde-lmb")]
    CjdeLmb,
    #[serde(rename = "etd")]
    Etd,
    #[serde(rename = "dte")]
    Dte,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::CjdeLmb => "cjde-lmb",
            Algorithm::Etd => "etd",
            Algorithm::Dte => "dte",
        }
    }
}

/// From `start_scan` on, the target moves with this acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionSegment {
    pub start_scan: u32,
    pub acceleration: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub birth: u32,
    /// Last scan the target is present; `None` keeps it to the horizon.
    #[serde(default)]
    pub death: Option<u32>,
    /// `[x, ẋ, ẍ, y, ẏ, ÿ]` at the birth scan.
    pub initial_state: [f64; 6],
    pub class: usize,
    #[serde(default)]
    pub segments: Vec<MotionSegment>,
}

impl TargetSpec {
    pub fn present(&self, k: u32) -> bool {
        k >= self.birth && self.death.is_none_or(|d| k <= d)
    }

    fn acceleration_into(&self, k: u32) -> [f64; 2] {
        self.segments
            .iter()
            .filter(|s| s.start_scan <= k)
            .max_by_key(|s| s.start_scan)
            .map_or([self.initial_state[2], self.initial_state[5]], |s| s.acceleration)
    }

    /// True state at scan `k >= birth`.
    pub fn state_at(&self, k: u32, period: f64) -> StateVector {
        let mut x = StateVector::from_row_slice(&self.initial_state);
        for scan in self.birth + 1..=k {
            let a = self.acceleration_into(scan);
            for (axis, base) in [POS_X, POS_Y].into_iter().enumerate() {
                let (p, v) = (x[base], x[base + 1]);
                x[base] = p + v * period + 0.5 * a[axis] * period * period;
                x[base + 1] = v + a[axis] * period;
                x[base + 2] = a[axis];
            }
        }
        x
    }

    fn accelerates(&self) -> bool {
        let nonzero = |a: [f64; 2]| a.iter().any(|v| *v != 0.0);
        nonzero([self.initial_state[2], self.initial_state[5]]) || self.segments.iter().any(|s| nonzero(s.acceleration))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// σ_v² for CV, σ_a² for CA.
    pub noise_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub models: Vec<ModelSpec>,
    /// Row-stochastic, `switch_matrix[from][to]`.
    pub switch_matrix: Vec<Vec<f64>>,
    pub initial_model_probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirthSpec {
    pub existence: f64,
    pub mean: [f64; 6],
    pub cov_diag: [f64; 6],
    pub class_probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Scan period in seconds.
    pub period: f64,
    /// Number of scans.
    pub horizon: u32,
    pub targets: Vec<TargetSpec>,
    pub classes: Vec<ClassSpec>,
    pub sensors: Sensors,
    pub births: Vec<BirthSpec>,
    pub coefficients: RiskCoefficients,
    pub filter: FilterConfig,
    pub baseline: BaselineConfig,
    pub ospa: OspaConfig,
    pub trials: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::example1()
    }
}

fn as_config(e: JdtcError) -> JdtcError {
    JdtcError::Config(e.to_string())
}

const BIRTH_COV: [f64; 6] = [100.0, 10.0, 1.0, 100.0, 10.0, 1.0];

impl ScenarioConfig {
    /// Two constant-velocity targets and one accelerating target over 30
    /// scans, radar only.
    pub fn example1() -> Self {
        let birth = |mean: [f64; 6]| BirthSpec {
            existence: 0.02,
            mean,
            cov_diag: BIRTH_COV,
            class_probs: vec![0.5, 0.5],
        };
        let mut sensors = Sensors::default();
        sensors.esm.enabled = false;
        Self {
            name: "example1".into(),
            period: 1.0,
            horizon: 30,
            targets: vec![
                TargetSpec {
                    birth: 1,
                    death: None,
                    initial_state: [-200.0, 50.0, 0.0, 700.0, 0.0, 0.0],
                    class: 0,
                    segments: vec![],
                },
                TargetSpec {
                    birth: 5,
                    death: Some(25),
                    initial_state: [-200.0, 40.0, 0.0, 1000.0, 30.0, 0.0],
                    class: 0,
                    segments: vec![],
                },
                TargetSpec {
                    birth: 3,
                    death: Some(27),
                    initial_state: [0.0, 20.0, 4.0, 1900.0, -15.0, -3.0],
                    class: 1,
                    segments: vec![],
                },
            ],
            classes: vec![
                ClassSpec {
                    models: vec![ModelSpec {
                        kind: ModelKind::CV,
                        noise_variance: 1.0,
                    }],
                    switch_matrix: vec![vec![1.0]],
                    initial_model_probs: vec![1.0],
                },
                ClassSpec {
                    models: vec![
                        ModelSpec {
                            kind: ModelKind::CV,
                            noise_variance: 1.0,
                        },
                        ModelSpec {
                            kind: ModelKind::CA,
                            noise_variance: 10.0,
                        },
                    ],
                    switch_matrix: vec![vec![0.7, 0.3], vec![0.3, 0.7]],
                    initial_model_probs: vec![0.5, 0.5],
                },
            ],
            sensors,
            births: vec![
                birth([-200.0, 50.0, 0.0, 700.0, 0.0, 0.0]),
                birth([-200.0, 40.0, 0.0, 1000.0, 30.0, 0.0]),
                birth([0.0, 20.0, 4.0, 1900.0, -15.0, -3.0]),
            ],
            coefficients: RiskCoefficients::uniform(2, 20.0, 1.0, 100.0),
            filter: FilterConfig::default(),
            baseline: BaselineConfig::default(),
            ospa: OspaConfig::default(),
            trials: 100,
            seed: 1,
            algorithm: Algorithm::CjdeLmb,
        }
    }

    /// Example 1 with a late maneuver: target 3 flies at constant velocity
    /// for its first five scans and accelerates by (4, −3) from scan 8.
    pub fn example2(gamma: f64) -> Self {
        let mut c = Self::example1();
        c.name = "example2".into();
        let t3 = &mut c.targets[2];
        t3.initial_state = [0.0, 20.0, 0.0, 1900.0, -15.0, 0.0];
        t3.segments = vec![MotionSegment {
            start_scan: 8,
            acceleration: [4.0, -3.0],
        }];
        c.coefficients.gamma = gamma;
        c
    }

    /// Example 1 with the ESM enabled alongside the radar.
    pub fn fusion_demo() -> Self {
        let mut c = Self::example1();
        c.name = "fusion-demo".into();
        c.sensors.esm.enabled = true;
        c
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// True targets present at scan `k`.
    pub fn truth_at(&self, k: u32) -> Vec<TruthEntry> {
        self.targets
            .iter()
            .enumerate()
            .filter(|(_, t)| t.present(k))
            .map(|(i, t)| TruthEntry {
                label: Label::new(t.birth, i as u32),
                state: t.state_at(k, self.period),
                class: t.class,
            })
            .collect()
    }

    pub fn model_sets(&self) -> Result<Vec<ClassModelSet>> {
        self.classes
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let models = c
                    .models
                    .iter()
                    .map(|m| match m.kind {
                        ModelKind::CV => build_cv_model(self.period, m.noise_variance),
                        ModelKind::CA => build_ca_model(self.period, m.noise_variance),
                    })
                    .collect::<Result<Vec<_>>>()?;
                let set = ClassModelSet {
                    class_id: j,
                    models,
                    switch_matrix: c.switch_matrix.clone(),
                };
                set.validate()?;
                Ok(set)
            })
            .collect()
    }

    pub fn birth_model(&self) -> BirthModel {
        BirthModel {
            components: self
                .births
                .iter()
                .map(|b| {
                    let mean = StateVector::from_row_slice(&b.mean);
                    let cov = StateCovariance::from_diagonal(&StateVector::from_row_slice(&b.cov_diag));
                    let classes = self
                        .classes
                        .iter()
                        .map(|c| ClassDensity {
                            models: c
                                .initial_model_probs
                                .iter()
                                .map(|&p| ModelDensity {
                                    prob: p,
                                    mixture: GaussianMixture::single(mean, cov),
                                })
                                .collect(),
                        })
                        .collect();
                    BirthComponent {
                        existence: b.existence,
                        density: ClassConditionedDensity {
                            classes,
                            class_probs: b.class_probs.clone(),
                        },
                    }
                })
                .collect(),
        }
    }

    /// Birth means and covariances, for the baselines' track initiation.
    pub fn birth_priors(&self) -> Vec<BirthPrior> {
        self.births
            .iter()
            .map(|b| {
                (
                    StateVector::from_row_slice(&b.mean),
                    StateCovariance::from_diagonal(&StateVector::from_row_slice(&b.cov_diag)),
                )
            })
            .collect()
    }

    /// Checks the configuration; returns warnings for accepted but
    /// degenerate settings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        if !(self.period > 0.0) || !self.period.is_finite() {
            return config("period must be positive");
        }
        if self.horizon == 0 {
            return config("horizon must be at least 1 scan");
        }
        if self.trials == 0 {
            return config("trials must be at least 1");
        }
        let j = self.num_classes();
        if j == 0 {
            return config("at least one class is required");
        }
        for (i, c) in self.classes.iter().enumerate() {
            let n = c.models.len();
            if n == 0 {
                return config(format!("class {i} has no motion models"));
            }
            if c.initial_model_probs.len() != n {
                return config(format!("class {i} needs {n} initial model probabilities"));
            }
            check_probability_vector(&c.initial_model_probs, &format!("class {i} initial model probabilities")).map_err(as_config)?;
            if c.models.iter().any(|m| !(m.noise_variance > 0.0)) {
                return config(format!("class {i} model noise variances must be positive"));
            }
        }
        self.model_sets()?;
        for (i, t) in self.targets.iter().enumerate() {
            if t.birth == 0 || t.birth > self.horizon {
                return config(format!("target {i} birth scan {} outside 1..={}", t.birth, self.horizon));
            }
            if let Some(d) = t.death {
                if d <= t.birth || d > self.horizon {
                    return config(format!("target {i} needs birth < death <= horizon"));
                }
            }
            if t.initial_state.iter().any(|v| !v.is_finite()) {
                return config(format!("target {i} initial state is not finite"));
            }
            if t.class >= j {
                return config(format!("target {i} class {} but only {j} classes", t.class));
            }
            let has_ca = self.classes[t.class].models.iter().any(|m| m.kind == ModelKind::CA);
            if !has_ca && t.accelerates() {
                return config(format!("target {i} accelerates but class {} has no CA model", t.class));
            }
        }
        for (i, b) in self.births.iter().enumerate() {
            if !(0.0..=1.0).contains(&b.existence) {
                return config(format!("birth {i} existence outside [0,1]"));
            }
            if b.cov_diag.iter().any(|v| !(*v > 0.0)) || b.mean.iter().any(|v| !v.is_finite()) {
                return config(format!("birth {i} needs a finite mean and positive variances"));
            }
            if b.class_probs.len() != j {
                return config(format!("birth {i} needs {j} class probabilities"));
            }
            check_probability_vector(&b.class_probs, &format!("birth {i} class probabilities")).map_err(as_config)?;
        }
        self.sensors.radar.validate()?;
        if self.sensors.esm.enabled {
            self.sensors.esm.validate(j)?;
        }
        self.coefficients.validate(j)?;
        self.filter.validate()?;
        self.baseline.validate()?;
        if !(self.ospa.cutoff > 0.0) || !(self.ospa.order >= 1.0) {
            return config("ospa needs cutoff > 0 and order >= 1");
        }
        if self.coefficients.gamma == 0.0 {
            warnings.push("gamma = 0 removes the cardinality cost; detection decisions follow classification and estimation costs only".into());
        }
        Ok(warnings)
    }

    /// A fresh tracker for the configured algorithm.
    pub fn build_tracker(&self) -> Result<Box<dyn Tracker>> {
        let models = self.model_sets()?;
        Ok(match self.algorithm {
            Algorithm::CjdeLmb => Box::new(CjdeLmbFilter::new(
                self.filter.clone(),
                models,
                self.sensors.clone(),
                self.birth_model(),
                self.coefficients.clone(),
            )),
            Algorithm::Etd => Box::new(EtdTracker::new(self.baseline.clone(), &models, self.sensors.clone(), self.birth_priors())?),
            Algorithm::Dte => Box::new(DteTracker::new(
                self.baseline.clone(),
                &models,
                self.sensors.clone(),
                self.birth_priors(),
                self.coefficients.clone(),
            )?),
        })
    }
}
