//! The conditional LMB filter: prediction with births, decision search and
//! the decision-conditioned update.

pub mod update;

use serde::{Deserialize, Serialize};

use crate::error::{JdtcError, Result};
use crate::motion::{predict_class_density, ClassModelSet};
use crate::rfs::{ClassConditionedDensity, Label, LmbDensity, PruneConfig, StateVector, Track};
use crate::risk::{argmin_lower, select_decision, CostBreakdown, DecisionSet, RiskCoefficients};
use crate::sensing::{Measurements, Sensors};

pub use update::{enumerate_associations, update_conditioned, Marginals, ScanContext, TrackCache, TrackOption, UpdateOutput};

/// Existence update for surviving tracks that have no gated measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissedExistence {
    /// Bernoulli miss update `r q / (1 − r + r q)`.
    #[default]
    Standard,
    /// `r_{k−1} p_s p_d / (p_s (1 − p_d) + 1 − p_s)` with `p_d = p_d^r p_d^e`,
    /// clamped to `[0, 1]`.
    DetectionRatio,
}

/// How candidate decision vectors are searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecisionSearch {
    /// Exhaustive up to `exhaustive_limit` contested tracks, per track with
    /// refinement above.
    #[default]
    Auto,
    Exhaustive,
    PerTrack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub p_s: f64,
    /// χ² gate for radar measurements (2 degrees of freedom).
    pub gate_radar: f64,
    /// χ² gate for ESM bearings (1 degree of freedom).
    pub gate_esm: f64,
    /// Number of ranked association maps kept; `None` enumerates all.
    pub k_best: Option<usize>,
    pub prune: PruneConfig,
    /// Tracks below this existence are dropped after the update.
    pub track_prune: f64,
    /// Tracks above this existence are reported.
    pub extract_threshold: f64,
    pub missed_existence: MissedExistence,
    pub decision_search: DecisionSearch,
    pub exhaustive_limit: usize,
    /// Coordinate-descent sweeps over the per-track decisions; 0 keeps the
    /// per-track choices.
    pub refine_sweeps: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            p_s: 0.98,
            gate_radar: 9.21,
            gate_esm: 6.63,
            k_best: Some(100),
            prune: PruneConfig::default(),
            track_prune: 1e-5,
            extract_threshold: 0.5,
            missed_existence: MissedExistence::Standard,
            decision_search: DecisionSearch::Auto,
            exhaustive_limit: 6,
            refine_sweeps: 10,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(JdtcError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.p_s) {
            return bad("filter p_s must lie in [0,1]");
        }
        if !(self.gate_radar > 0.0) || !(self.gate_esm > 0.0) {
            return bad("filter gates must be positive");
        }
        if self.k_best == Some(0) {
            return bad("filter k_best must be at least 1");
        }
        if !(0.0..1.0).contains(&self.track_prune) || !(0.0..1.0).contains(&self.extract_threshold) {
            return bad("filter thresholds must lie in [0,1)");
        }
        if self.prune.max_components == 0 {
            return bad("filter prune.max_components must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BirthComponent {
    pub existence: f64,
    pub density: ClassConditionedDensity,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BirthModel {
    pub components: Vec<BirthComponent>,
}

/// LMB prediction: survivors get `r ← p_s r` and model-predicted densities,
/// births are appended with labels `(k, index)`.
pub fn predict(prior: &LmbDensity, births: &BirthModel, models: &[ClassModelSet], p_s: f64, k: u32) -> Result<LmbDensity> {
    let mut tracks = Vec::with_capacity(prior.len() + births.components.len());
    for t in &prior.tracks {
        let (density, factor) = predict_class_density(&t.density, models, p_s)?;
        tracks.push(Track {
            label: t.label,
            existence: t.existence * factor,
            density,
        });
    }
    for (i, b) in births.components.iter().enumerate() {
        let label = Label::new(k, i as u32);
        if prior.tracks.iter().any(|t| t.label == label) {
            return Err(JdtcError::Internal(format!("birth label {label} already in use")));
        }
        tracks.push(Track {
            label,
            existence: b.existence,
            density: b.density.clone(),
        });
    }
    Ok(LmbDensity::new(tracks))
}

/// A reported track.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub label: Label,
    pub existence: f64,
    /// Class-probability-weighted mean of the per-class estimates.
    pub state: StateVector,
    pub class_probs: Vec<f64>,
    /// The class decision for this track.
    pub class: usize,
}

/// Reports tracks with existence above `r_threshold`. `decisions` gives the
/// class decision per track; without one the most probable class is used.
pub fn extract_estimates(posterior: &LmbDensity, decisions: &[Option<usize>], r_threshold: f64) -> Result<(usize, Vec<Estimate>)> {
    let mut out = Vec::new();
    for (i, t) in posterior.tracks.iter().enumerate() {
        if t.existence <= r_threshold {
            continue;
        }
        let (state, _) = t.density.marginal_moments()?;
        let class = decisions.get(i).copied().flatten().unwrap_or_else(|| {
            let neg: Vec<f64> = t.density.class_probs.iter().map(|p| -p).collect();
            argmin_lower(&neg)
        });
        out.push(Estimate {
            label: t.label,
            existence: t.existence,
            state,
            class_probs: t.density.class_probs.clone(),
            class,
        });
    }
    Ok((out.len(), out))
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub estimates: Vec<Estimate>,
    pub decision: DecisionSet,
    pub fallback: bool,
    /// Σ r after the update, before track pruning.
    pub mean_cardinality: f64,
    /// Sum of the admissible map weights, 1 up to rounding.
    pub hypothesis_weight_sum: f64,
}

/// Conditional joint decision and estimation LMB filter.
#[derive(Debug, Clone)]
pub struct CjdeLmbFilter {
    pub cfg: FilterConfig,
    pub models: Vec<ClassModelSet>,
    pub sensors: Sensors,
    pub births: BirthModel,
    pub coeffs: RiskCoefficients,
    posterior: LmbDensity,
}

impl CjdeLmbFilter {
    pub fn new(cfg: FilterConfig, models: Vec<ClassModelSet>, sensors: Sensors, births: BirthModel, coeffs: RiskCoefficients) -> Self {
        Self {
            cfg,
            models,
            sensors,
            births,
            coeffs,
            posterior: LmbDensity::default(),
        }
    }

    pub fn posterior(&self) -> &LmbDensity {
        &self.posterior
    }

    /// Picks the decision vector for this scan.
    fn search_decisions(&self, ctx: &ScanContext<'_>) -> Result<DecisionSet> {
        let n = ctx.tracks.len();
        let j = self.coeffs.num_classes();
        let unconditioned = vec![None; n];
        let (_, base) = ctx.cost(&unconditioned, 0.0);
        let reference = base.mean_cardinality();

        // tracks without a gated measurement have vacuous regions: their
        // own cost term decides them
        let mut decisions = vec![0usize; n];
        let mut contested = Vec::new();
        for (t, tc) in ctx.tracks.iter().enumerate() {
            if tc.contested() {
                contested.push(t);
            } else {
                let costs: Vec<f64> = (0..j)
                    .map(|i| {
                        let (c, e) = ctx.track_cost(t, i, &base);
                        c + e
                    })
                    .collect();
                decisions[t] = argmin_lower(&costs);
            }
        }

        let exhaustive = match self.cfg.decision_search {
            DecisionSearch::Exhaustive => true,
            DecisionSearch::PerTrack => false,
            DecisionSearch::Auto => contested.len() <= self.cfg.exhaustive_limit,
        };
        let to_opts = |d: &[usize]| d.iter().map(|&i| Some(i)).collect::<Vec<_>>();
        if exhaustive {
            let total = j.checked_pow(contested.len() as u32).unwrap_or(usize::MAX);
            let mut candidates = Vec::with_capacity(total.min(1 << 16));
            for code in 0..total {
                let mut d = decisions.clone();
                let mut c = code;
                for &t in &contested {
                    d[t] = c % j;
                    c /= j;
                }
                let (cost, _) = ctx.cost(&to_opts(&d), reference);
                candidates.push(DecisionSet { decisions: d, cost });
            }
            let best = select_decision(&candidates)?;
            return Ok(candidates.swap_remove(best));
        }

        for &t in &contested {
            let costs: Vec<f64> = (0..j)
                .map(|i| {
                    let mut d = unconditioned.clone();
                    d[t] = Some(i);
                    let marg = ctx.marginals(&d);
                    let (c, e) = ctx.track_cost(t, i, &marg);
                    c + e + self.coeffs.gamma * (reference - marg.mean_cardinality())
                })
                .collect();
            decisions[t] = argmin_lower(&costs);
        }
        // the per-track choices ignore how tracks trade measurements; refine
        // them by single-track changes on the full cost
        let (mut cost, _) = ctx.cost(&to_opts(&decisions), reference);
        for _ in 0..self.cfg.refine_sweeps {
            let mut improved = false;
            for &t in &contested {
                for i in 0..j {
                    if i == decisions[t] {
                        continue;
                    }
                    let mut d = decisions.clone();
                    d[t] = i;
                    let (c, _) = ctx.cost(&to_opts(&d), reference);
                    if c.total() < cost.total() {
                        decisions = d;
                        cost = c;
                        improved = true;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        Ok(DecisionSet { decisions, cost })
    }

    /// Predicts to scan `k`, updates with `meas` under the minimum-risk
    /// decisions, prunes, and reports estimates.
    pub fn step(&mut self, k: u32, meas: &Measurements) -> Result<StepOutput> {
        let predicted = predict(&self.posterior, &self.births, &self.models, self.cfg.p_s, k)?;
        let n_survivors = self.posterior.len();
        let ctx = ScanContext::new(&predicted, n_survivors, meas, &self.sensors, &self.coeffs, &self.cfg)?;
        let decision = if ctx.tracks.is_empty() {
            DecisionSet {
                decisions: Vec::new(),
                cost: CostBreakdown::default(),
            }
        } else {
            self.search_decisions(&ctx)?
        };
        let chosen: Vec<Option<usize>> = decision.decisions.iter().map(|&i| Some(i)).collect();
        let out = ctx.update_conditioned(&chosen);
        let mean_cardinality = out.mean_cardinality();
        let hypothesis_weight_sum = out.maps.iter().map(|(_, w)| w).sum();

        let mut kept = Vec::new();
        let mut kept_decisions = Vec::new();
        for (t, d) in out.posterior.tracks.into_iter().zip(&chosen) {
            if t.existence >= self.cfg.track_prune {
                kept.push(t);
                kept_decisions.push(*d);
            }
        }
        self.posterior = LmbDensity::new(kept);
        let (_, estimates) = extract_estimates(&self.posterior, &kept_decisions, self.cfg.extract_threshold)?;
        Ok(StepOutput {
            estimates,
            decision,
            fallback: out.fallback,
            mean_cardinality,
            hypothesis_weight_sum,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::Assignment;
    use crate::motion::{MotionModel, ModelKind};
    use crate::rfs::{ClassDensity, GaussianMixture, StateCovariance, POS_X};
    use crate::sensing::EsmMeasurement;
    use approx::assert_abs_diff_eq;
    use nalgebra::Vector2;

    fn class_density(mean: StateVector, var: f64) -> ClassDensity {
        ClassDensity::single_model(GaussianMixture::single(mean, StateCovariance::identity() * var))
    }

    fn track(label: u32, r: f64, classes: Vec<ClassDensity>, probs: Vec<f64>) -> Track {
        Track {
            label: Label::new(0, label),
            existence: r,
            density: ClassConditionedDensity { classes, class_probs: probs },
        }
    }

    fn identity_models(j: usize) -> Vec<ClassModelSet> {
        let m = MotionModel {
            kind: ModelKind::CV,
            transition: StateCovariance::identity(),
            process_noise: StateCovariance::zeros(),
        };
        (0..j).map(|c| ClassModelSet::single(c, m.clone())).collect()
    }

    #[test]
    fn predict_examples() {
        let b = BirthModel {
            components: vec![BirthComponent {
                existence: 0.02,
                density: ClassConditionedDensity {
                    classes: vec![class_density(StateVector::zeros(), 1.0)],
                    class_probs: vec![1.0],
                },
            }],
        };
        let p = predict(&LmbDensity::default(), &b, &identity_models(1), 0.98, 1).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.tracks[0].existence, 0.02);
        assert_eq!(p.tracks[0].label, Label::new(1, 0));

        let prior = LmbDensity::new(vec![track(0, 1.0, vec![class_density(StateVector::zeros(), 1.0)], vec![1.0])]);
        let p = predict(&prior, &BirthModel::default(), &identity_models(1), 0.98, 1).unwrap();
        assert_eq!(p.tracks[0].existence, 0.98);
        let p = predict(&prior, &BirthModel::default(), &identity_models(1), 1.0, 1).unwrap();
        assert_eq!(p, prior);

        let clash = LmbDensity::new(vec![Track {
            label: Label::new(1, 0),
            ..prior.tracks[0].clone()
        }]);
        assert!(matches!(predict(&clash, &b, &identity_models(1), 0.98, 1), Err(JdtcError::Internal(_))));
    }

    fn no_clutter_sensors() -> Sensors {
        let mut s = Sensors::default();
        s.radar.clutter_rate = Some(0.0);
        s
    }

    #[test]
    fn association_examples() {
        let mut sensors = Sensors::default();
        sensors.esm.enabled = true;
        let cfg = FilterConfig {
            gate_radar: f64::INFINITY,
            gate_esm: f64::INFINITY,
            k_best: None,
            ..FilterConfig::default()
        };
        let coeffs = RiskCoefficients::uniform(2, 20.0, 1.0, 100.0);
        let mut mean = StateVector::zeros();
        mean[POS_X] = 100.0;
        mean[3] = 800.0;
        let classes = vec![class_density(mean, 10.0), class_density(mean, 10.0)];
        let one = LmbDensity::new(vec![track(0, 0.5, classes.clone(), vec![0.5, 0.5])]);
        let meas = Measurements {
            radar: vec![Vector2::new(101.0, 801.0)],
            esm: vec![EsmMeasurement {
                bearing: (800f64).atan2(100.0),
                declared: 0,
            }],
        };
        let maps = enumerate_associations(&one, &meas, &sensors, &coeffs, &cfg).unwrap();
        let mut got: Vec<Assignment> = maps.iter().map(|m| m.entries()[0].1).collect();
        got.sort();
        let mut want = vec![
            Assignment::new(None, None),
            Assignment::new(Some(0), None),
            Assignment::new(None, Some(0)),
            Assignment::new(Some(0), Some(0)),
        ];
        want.sort();
        assert_eq!(got, want);

        let two = LmbDensity::new(vec![
            track(0, 0.5, classes.clone(), vec![0.5, 0.5]),
            track(1, 0.5, classes.clone(), vec![0.5, 0.5]),
        ]);
        let radar_only = Measurements {
            radar: meas.radar.clone(),
            esm: vec![],
        };
        let maps = enumerate_associations(&two, &radar_only, &sensors, &coeffs, &cfg).unwrap();
        assert_eq!(maps.len(), 3);
        assert!(maps.iter().all(|m| m.is_injective()));

        let two_meas = Measurements {
            radar: vec![Vector2::new(101.0, 801.0), Vector2::new(99.0, 799.0)],
            esm: vec![],
        };
        let maps = enumerate_associations(&two, &two_meas, &sensors, &coeffs, &cfg).unwrap();
        assert_eq!(maps.len(), 7);
        // ranked enumeration with a large K finds the same set
        let ranked = FilterConfig {
            k_best: Some(1000),
            ..cfg.clone()
        };
        assert_eq!(enumerate_associations(&two, &two_meas, &sensors, &coeffs, &ranked).unwrap().len(), 7);
    }

    #[test]
    fn certain_track_stays_certain_on_a_miss() {
        let coeffs = RiskCoefficients::uniform(1, 20.0, 1.0, 100.0);
        let d = LmbDensity::new(vec![track(0, 1.0, vec![class_density(StateVector::zeros(), 1.0)], vec![1.0])]);
        let out = update_conditioned(&d, &Measurements::default(), &[Some(0)], &no_clutter_sensors(), &coeffs, &FilterConfig::default()).unwrap();
        assert_abs_diff_eq!(out.posterior.tracks[0].existence, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn scalar_kalman_example() {
        // prior N(0,1) on x, z = 1, R = 1, p_d = 1, no clutter
        let mut sensors = no_clutter_sensors();
        sensors.radar.p_d = 1.0;
        sensors.radar.noise_cov = [[1.0, 0.0], [0.0, 1.0]];
        sensors.radar.clutter_rate = Some(1e-12);
        let coeffs = RiskCoefficients::uniform(1, 20.0, 1.0, 100.0);
        let d = LmbDensity::new(vec![track(0, 1.0, vec![class_density(StateVector::zeros(), 1.0)], vec![1.0])]);
        let meas = Measurements {
            radar: vec![Vector2::new(1.0, 0.0)],
            esm: vec![],
        };
        let cfg = FilterConfig {
            gate_radar: f64::INFINITY,
            ..FilterConfig::default()
        };
        let out = update_conditioned(&d, &meas, &[Some(0)], &sensors, &coeffs, &cfg).unwrap();
        let (m, p) = out.class_estimates[0][0];
        assert_abs_diff_eq!(m[POS_X], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p[(POS_X, POS_X)], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn esm_declaration_bayes_example() {
        let mut sensors = no_clutter_sensors();
        sensors.radar.p_d = 0.0;
        sensors.esm.enabled = true;
        sensors.esm.p_d = 1.0;
        let coeffs = RiskCoefficients::uniform(2, 20.0, 1.0, 100.0);
        let mut mean = StateVector::zeros();
        mean[POS_X] = 500.0;
        mean[3] = 500.0;
        let d = LmbDensity::new(vec![track(
            0,
            1.0,
            vec![class_density(mean, 1.0), class_density(mean, 1.0)],
            vec![0.5, 0.5],
        )]);
        let meas = Measurements {
            radar: vec![],
            esm: vec![EsmMeasurement {
                bearing: std::f64::consts::FRAC_PI_4,
                declared: 0,
            }],
        };
        let out = update_conditioned(&d, &meas, &[None], &sensors, &coeffs, &FilterConfig::default()).unwrap();
        assert_abs_diff_eq!(out.posterior.tracks[0].density.class_probs[0], 0.9, epsilon = 1e-12);
    }

    #[test]
    fn extraction_examples() {
        let coeffs_free = vec![None, None];
        let d = LmbDensity::new(vec![
            track(0, 0.9, vec![class_density(StateVector::zeros(), 1.0)], vec![1.0]),
            track(1, 0.1, vec![class_density(StateVector::zeros(), 1.0)], vec![1.0]),
        ]);
        let (n, _) = extract_estimates(&d, &coeffs_free, 0.5).unwrap();
        assert_eq!(n, 1);

        let mut far = StateVector::zeros();
        far[POS_X] = 2.0;
        let mixed = LmbDensity::new(vec![track(
            0,
            0.9,
            vec![class_density(StateVector::zeros(), 1.0), class_density(far, 1.0)],
            vec![0.5, 0.5],
        )]);
        let (_, est) = extract_estimates(&mixed, &[None], 0.5).unwrap();
        assert_abs_diff_eq!(est[0].state[POS_X], 1.0, epsilon = 1e-15);

        let certain = LmbDensity::new(vec![track(
            0,
            0.9,
            vec![class_density(StateVector::zeros(), 1.0), class_density(far, 1.0)],
            vec![1.0, 0.0],
        )]);
        let (_, est) = extract_estimates(&certain, &[Some(0)], 0.5).unwrap();
        assert_eq!(est[0].state[POS_X], 0.0);
        assert_eq!(est[0].class, 0);
    }

    #[test]
    fn refinement_never_raises_the_per_track_cost() {
        let mut sensors = Sensors::default();
        sensors.esm.enabled = true;
        let coeffs = RiskCoefficients::uniform(2, 20.0, 1.0, 100.0);
        let at = |x: f64| {
            let mut m = StateVector::zeros();
            m[POS_X] = x;
            m[3] = 800.0;
            m
        };
        let tracks: Vec<Track> = (0..4)
            .map(|i| {
                let x = 100.0 + 5.0 * i as f64;
                track(i, 0.6, vec![class_density(at(x - 2.0), 15.0), class_density(at(x + 2.0), 15.0)], vec![0.5, 0.5])
            })
            .collect();
        let prior = LmbDensity::new(tracks);
        let meas = Measurements {
            radar: (0..4).map(|i| Vector2::new(99.0 + 5.5 * i as f64, 800.0 + (i as f64 - 1.5))).collect(),
            esm: vec![EsmMeasurement {
                bearing: (800f64).atan2(107.0),
                declared: 1,
            }],
        };
        let cost_with = |sweeps: usize| {
            let cfg = FilterConfig {
                decision_search: DecisionSearch::PerTrack,
                refine_sweeps: sweeps,
                ..FilterConfig::default()
            };
            let f = CjdeLmbFilter::new(cfg.clone(), identity_models(2), sensors.clone(), BirthModel::default(), coeffs.clone());
            let ctx = ScanContext::new(&prior, prior.len(), &meas, &sensors, &coeffs, &cfg).unwrap();
            assert!(ctx.tracks.iter().filter(|t| t.contested()).count() >= 2);
            f.search_decisions(&ctx).unwrap().cost.total()
        };
        let exhaustive = {
            let cfg = FilterConfig {
                decision_search: DecisionSearch::Exhaustive,
                ..FilterConfig::default()
            };
            let f = CjdeLmbFilter::new(cfg.clone(), identity_models(2), sensors.clone(), BirthModel::default(), coeffs.clone());
            let ctx = ScanContext::new(&prior, prior.len(), &meas, &sensors, &coeffs, &cfg).unwrap();
            f.search_decisions(&ctx).unwrap().cost.total()
        };
        let (plain, refined) = (cost_with(0), cost_with(10));
        assert!(refined <= plain);
        assert!(exhaustive <= refined + 1e-12);
    }
}
