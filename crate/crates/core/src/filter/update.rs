//! Decision-conditioned LMB update.
//!
//! Everything that does not depend on the class decisions is computed once
//! per scan in a [`ScanContext`]: per-track association options with their
//! class likelihoods and Kalman posteriors, the decision region of each
//! option, and the ranked list of association maps. A decision vector that
//! excludes options is ranked again over its admissible maps only, so the
//! K-best truncation never conditions on the tail of the unconditioned list.

use nalgebra::DVector;

use crate::association::{enumerate_partial, ranked_with_misses, Assignment, AssociationMap};
use crate::error::Result;
use crate::kalman::{kalman_update, mahalanobis_sq, Linearized};
use crate::rfs::{
    moment_match, ClassConditionedDensity, ClassDensity, GaussianComponent, GaussianMixture, HypothesisWeight, Label,
    LmbDensity, ModelDensity, StateCovariance, StateVector, Track,
};
use crate::risk::{region_for, state_estimation_cost, CostBreakdown, RiskCoefficients};
use crate::sensing::{Measurements, Sensors};

use super::{FilterConfig, MissedExistence};

/// Cap on a widened side list when conditioned ranking rejects maps.
const MAX_SIDE_LIST: usize = 4096;

/// One way a track can be associated in this scan.
#[derive(Debug, Clone)]
pub struct TrackOption {
    pub assignment: Assignment,
    /// Per-class likelihood `η_j`, including detection and clutter factors.
    pub eta: Vec<f64>,
    /// `Σ_j P_j η_j`.
    pub eta_bar: f64,
    /// Per-class posterior class probability under this option.
    pub class_post: Vec<f64>,
    /// Per-class posterior density under this option.
    pub posterior: Vec<ClassDensity>,
    /// Per-class posterior moments.
    pub moments: Vec<(StateVector, StateCovariance)>,
    /// Decision whose region holds the assigned measurements; `None` for the
    /// miss option, which lies in every region.
    pub region: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct TrackCache {
    pub label: Label,
    pub existence: f64,
    pub is_birth: bool,
    pub class_probs: Vec<f64>,
    /// Option 0 is always the miss.
    pub options: Vec<TrackOption>,
    /// Log of the unconditioned per-option hypothesis factor.
    pub log_weight: Vec<f64>,
    /// Existence given the miss option.
    pub miss_existence: f64,
}

impl TrackCache {
    pub fn contested(&self) -> bool {
        self.options.len() > 1
    }

    fn admissible(&self, option: usize, decision: Option<usize>) -> bool {
        match (self.options[option].region, decision) {
            (None, _) | (_, None) => true,
            (Some(r), Some(d)) => r == d,
        }
    }
}

/// Track marginals under one decision vector.
#[derive(Debug, Clone)]
pub struct Marginals {
    pub existence: Vec<f64>,
    pub class_probs: Vec<Vec<f64>>,
    /// Per track, per option: `W(o) · e(o)`.
    pub option_mass: Vec<Vec<f64>>,
    /// Ranked maps under these decisions, as option indices per track.
    pub maps: Vec<Vec<usize>>,
    /// Normalized weight of each map in `maps`.
    pub map_weights: Vec<f64>,
    pub fallback: bool,
}

impl Marginals {
    pub fn mean_cardinality(&self) -> f64 {
        self.existence.iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct UpdateOutput {
    pub posterior: LmbDensity,
    pub decisions: Vec<Option<usize>>,
    /// Admissible association maps and their normalized weights.
    pub maps: Vec<(AssociationMap, f64)>,
    /// Existence of each track given a missed detection.
    pub miss_existence: Vec<f64>,
    /// Per track, per class: posterior mean and covariance.
    pub class_estimates: Vec<Vec<(StateVector, StateCovariance)>>,
    /// Set when the decisions excluded every hypothesis and the update fell
    /// back to the all-miss hypothesis.
    pub fallback: bool,
}

impl UpdateOutput {
    /// Σ r over the posterior tracks.
    pub fn mean_cardinality(&self) -> f64 {
        self.posterior.expected_cardinality()
    }

    /// Expands every map into its `(label set, map)` hypotheses by splitting
    /// missed tracks into existing and absent. Exponential in the number of
    /// missed tracks; meant for small problems.
    pub fn hypotheses(&self) -> Vec<HypothesisWeight> {
        let labels = self.posterior.labels();
        let mut out = Vec::new();
        for (map, w) in &self.maps {
            let missed: Vec<usize> = (0..labels.len())
                .filter(|&i| map.get(&labels[i]).is_none_or(|a| a.is_miss()))
                .collect();
            for mask in 0u64..(1u64 << missed.len()) {
                let mut weight = *w;
                let mut set: std::collections::BTreeSet<Label> = labels
                    .iter()
                    .filter(|l| map.get(l).is_some_and(|a| !a.is_miss()))
                    .copied()
                    .collect();
                for (bit, &i) in missed.iter().enumerate() {
                    let e = self.miss_existence[i];
                    if mask & (1 << bit) != 0 {
                        weight *= e;
                        set.insert(labels[i]);
                    } else {
                        weight *= 1.0 - e;
                    }
                }
                out.push(HypothesisWeight {
                    label_set: set,
                    assoc: map.clone(),
                    weight,
                });
            }
        }
        out
    }
}

/// Decision-independent state of one scan's update.
#[derive(Debug, Clone)]
pub struct ScanContext<'a> {
    pub predicted: &'a LmbDensity,
    pub coeffs: &'a RiskCoefficients,
    pub cfg: &'a FilterConfig,
    /// Joint detection probability `p_d^r p_d^e` (ESM factor 1 when disabled).
    pub p_d_joint: f64,
    pub tracks: Vec<TrackCache>,
    /// Association maps as option indices per track.
    pub maps: Vec<Vec<usize>>,
    /// Unconditioned log weight of each map.
    pub map_log_weights: Vec<f64>,
    radar_allowed: Vec<Vec<bool>>,
    esm_allowed: Vec<Vec<bool>>,
}

struct OptionPosterior {
    eta: Vec<f64>,
    posterior: Vec<ClassDensity>,
}

fn option_posterior(
    density: &ClassConditionedDensity,
    sensors: &Sensors,
    meas: &Measurements,
    a: Assignment,
) -> OptionPosterior {
    let radar = &sensors.radar;
    let esm = &sensors.esm;
    let q_r = 1.0 - radar.p_d;
    let q_e = if esm.enabled { 1.0 - esm.p_d } else { 1.0 };
    let mut eta = Vec::with_capacity(density.classes.len());
    let mut posterior = Vec::with_capacity(density.classes.len());

    let z = match (a.radar, a.esm) {
        (None, None) => None,
        (Some(r), None) => Some(DVector::from_column_slice(meas.radar[r].as_slice())),
        (None, Some(e)) => Some(DVector::from_element(1, meas.esm[e].bearing)),
        (Some(r), Some(e)) => Some(DVector::from_vec(vec![meas.radar[r][0], meas.radar[r][1], meas.esm[e].bearing])),
    };
    let linearize = |x: &StateVector| -> Linearized {
        match (a.radar, a.esm) {
            (Some(_), None) => radar.linearize(x),
            (None, Some(_)) => esm.linearize(x),
            _ => Linearized::stack(&[radar.linearize(x), esm.linearize(x)]),
        }
    };

    for (j, class) in density.classes.iter().enumerate() {
        let Some(z) = &z else {
            eta.push(q_r * q_e);
            posterior.push(class.clone());
            continue;
        };
        let scale = match (a.radar, a.esm) {
            (Some(_), None) => radar.p_d / radar.clutter_intensity() * q_e,
            (None, Some(e)) => q_r * esm.p_d * esm.confusion[j][meas.esm[e].declared] / esm.clutter_intensity(),
            (Some(_), Some(e)) => {
                radar.p_d * esm.p_d * esm.confusion[j][meas.esm[e].declared]
                    / (radar.clutter_intensity() * esm.clutter_intensity())
            }
            (None, None) => unreachable!(),
        };
        let mut total = 0.0;
        let mut models = Vec::with_capacity(class.models.len());
        let mut model_mass = Vec::with_capacity(class.models.len());
        for md in &class.models {
            let mut comps = Vec::with_capacity(md.mixture.len());
            let mut mass = 0.0;
            for c in &md.mixture.components {
                let lin = linearize(&c.mean);
                if let Some(u) = kalman_update(&c.mean, &c.cov, z, &lin) {
                    let w = c.weight * u.likelihood * scale;
                    mass += w;
                    comps.push(GaussianComponent::new(w, u.mean, u.cov));
                }
            }
            total += md.prob * mass;
            model_mass.push(mass);
            models.push(comps);
        }
        eta.push(total);
        if total > 0.0 {
            posterior.push(ClassDensity {
                models: class
                    .models
                    .iter()
                    .zip(models)
                    .zip(&model_mass)
                    .map(|((md, comps), mass)| {
                        if *mass > 0.0 {
                            let mut gm = GaussianMixture::new(comps);
                            gm.normalize();
                            ModelDensity {
                                prob: md.prob * mass / total,
                                mixture: gm,
                            }
                        } else {
                            ModelDensity {
                                prob: 0.0,
                                mixture: md.mixture.clone(),
                            }
                        }
                    })
                    .collect(),
            });
        } else {
            posterior.push(class.clone());
        }
    }
    OptionPosterior { eta, posterior }
}

fn ln_or_neg_inf(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Gated association options per track as `(radar indices, ESM indices)`.
fn gate(density: &ClassConditionedDensity, sensors: &Sensors, meas: &Measurements, cfg: &FilterConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    let (mean, cov) = density.marginal_moments()?;
    let radar_lin = sensors.radar.linearize(&mean);
    let radar = (0..meas.radar.len())
        .filter(|&i| {
            cfg.gate_radar.is_infinite()
                || mahalanobis_sq(&cov, &DVector::from_column_slice(meas.radar[i].as_slice()), &radar_lin)
                    .is_some_and(|d2| d2 <= cfg.gate_radar)
        })
        .collect();
    let esm = if sensors.esm.enabled {
        let esm_lin = sensors.esm.linearize(&mean);
        (0..meas.esm.len())
            .filter(|&i| {
                cfg.gate_esm.is_infinite()
                    || mahalanobis_sq(&cov, &DVector::from_element(1, meas.esm[i].bearing), &esm_lin)
                        .is_some_and(|d2| d2 <= cfg.gate_esm)
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok((radar, esm))
}

/// Predicted estimation cost per class used inside the decision-region
/// predicate: `tr(P^j) + ‖x̂^j − x̄‖²` with `x̄` the class-marginal mean.
fn predicted_eps(density: &ClassConditionedDensity) -> Result<Vec<f64>> {
    let (marginal, _) = density.marginal_moments()?;
    density
        .classes
        .iter()
        .map(|c| c.moments().map(|(m, p)| state_estimation_cost(&m, &p, &marginal)))
        .collect()
}

impl<'a> ScanContext<'a> {
    pub fn new(
        predicted: &'a LmbDensity,
        birth_labels_from: usize,
        meas: &Measurements,
        sensors: &Sensors,
        coeffs: &'a RiskCoefficients,
        cfg: &'a FilterConfig,
    ) -> Result<Self> {
        let mut tracks = Vec::with_capacity(predicted.len());
        let mut radar_allowed = Vec::with_capacity(predicted.len());
        let mut esm_allowed = Vec::with_capacity(predicted.len());
        for (idx, track) in predicted.tracks.iter().enumerate() {
            let (radar_idx, esm_idx) = gate(&track.density, sensors, meas, cfg)?;
            let mut assignments = vec![Assignment::MISS];
            assignments.extend(radar_idx.iter().map(|&r| Assignment::new(Some(r), None)));
            assignments.extend(esm_idx.iter().map(|&e| Assignment::new(None, Some(e))));
            for &r in &radar_idx {
                for &e in &esm_idx {
                    assignments.push(Assignment::new(Some(r), Some(e)));
                }
            }
            let probs = &track.density.class_probs;
            let eps_pred = predicted_eps(&track.density)?;
            let eps: Vec<Vec<f64>> = vec![eps_pred; probs.len()];
            let r = track.existence;
            let mut options = Vec::with_capacity(assignments.len());
            let mut log_weight = Vec::with_capacity(assignments.len());
            let mut miss_existence = 0.0;
            for a in assignments {
                let op = option_posterior(&track.density, sensors, meas, a);
                let eta_bar: f64 = op.eta.iter().zip(probs).map(|(e, p)| e * p).sum();
                if !a.is_miss() && !(eta_bar > 0.0) {
                    continue;
                }
                let class_post: Vec<f64> = if eta_bar > 0.0 {
                    op.eta.iter().zip(probs).map(|(e, p)| e * p / eta_bar).collect()
                } else {
                    probs.clone()
                };
                let moments = op.posterior.iter().map(ClassDensity::moments).collect::<Result<Vec<_>>>()?;
                let region = (!a.is_miss()).then(|| region_for(&op.eta, probs, &eps, coeffs));
                if a.is_miss() {
                    let w = (1.0 - r) + r * eta_bar;
                    miss_existence = if w > 0.0 { r * eta_bar / w } else { 0.0 };
                    log_weight.push(ln_or_neg_inf(w));
                } else {
                    log_weight.push(ln_or_neg_inf(r * eta_bar));
                }
                options.push(TrackOption {
                    assignment: a,
                    eta: op.eta,
                    eta_bar,
                    class_post,
                    posterior: op.posterior,
                    moments,
                    region,
                });
            }
            let mut ra = vec![false; meas.radar.len()];
            let mut ea = vec![false; meas.esm.len()];
            for o in &options {
                if let (Some(r), None) = (o.assignment.radar, o.assignment.esm) {
                    ra[r] = true;
                }
                if let (None, Some(e)) = (o.assignment.radar, o.assignment.esm) {
                    ea[e] = true;
                }
            }
            radar_allowed.push(ra);
            esm_allowed.push(ea);
            tracks.push(TrackCache {
                label: track.label,
                existence: r,
                is_birth: idx >= birth_labels_from,
                class_probs: probs.clone(),
                options,
                log_weight,
                miss_existence,
            });
        }
        let mut ctx = Self {
            predicted,
            coeffs,
            cfg,
            p_d_joint: sensors.radar.p_d * if sensors.esm.enabled { sensors.esm.p_d } else { 1.0 },
            tracks,
            maps: Vec::new(),
            map_log_weights: Vec::new(),
            radar_allowed,
            esm_allowed,
        };
        let (maps, weights) = ctx.enumerate_maps(&ctx.radar_allowed, &ctx.esm_allowed, &|_, _| true);
        ctx.maps = maps;
        ctx.map_log_weights = weights;
        Ok(ctx)
    }

    fn option_of(&self, track: usize, a: Assignment) -> Option<usize> {
        self.tracks[track].options.iter().position(|o| o.assignment == a)
    }

    fn map_log_weight(&self, map: &[usize]) -> f64 {
        map.iter().enumerate().map(|(t, &o)| self.tracks[t].log_weight[o]).sum()
    }

    /// Side-specific candidate lists: per participating track, the chosen
    /// measurement of that sensor or a miss.
    fn side_lists(
        &self,
        k_best: Option<usize>,
        allowed: &[Vec<bool>],
        m: usize,
        side_cost: impl Fn(usize, usize) -> f64,
        miss_cost: impl Fn(usize) -> f64,
    ) -> (Vec<usize>, Vec<Vec<Option<usize>>>) {
        let part: Vec<usize> = (0..allowed.len()).filter(|&t| allowed[t].iter().any(|a| *a)).collect();
        let sub: Vec<Vec<bool>> = part.iter().map(|&t| allowed[t].clone()).collect();
        let lists = match k_best {
            None => enumerate_partial(&sub, m),
            Some(k) => {
                let det: Vec<Vec<f64>> = part
                    .iter()
                    .map(|&t| (0..m).map(|j| if allowed[t][j] { side_cost(t, j) } else { f64::INFINITY }).collect())
                    .collect();
                let miss: Vec<f64> = part.iter().map(|&t| miss_cost(t)).collect();
                ranked_with_misses(&det, &miss, k).into_iter().map(|(a, _)| a).collect()
            }
        };
        (part, lists)
    }

    /// Ranks the association maps whose options all pass `keep`. A sensor
    /// measurement stays a candidate for a track while some kept option of
    /// that track uses it.
    fn enumerate_maps(
        &self,
        radar_allowed: &[Vec<bool>],
        esm_allowed: &[Vec<bool>],
        keep: &dyn Fn(usize, usize) -> bool,
    ) -> (Vec<Vec<usize>>, Vec<f64>) {
        let n = self.tracks.len();
        let uses = |t: usize, radar: bool, j: usize| {
            self.tracks[t].options.iter().enumerate().any(|(o, opt)| {
                let side = if radar { opt.assignment.radar } else { opt.assignment.esm };
                side == Some(j) && keep(t, o)
            })
        };
        let filter = |allowed: &[Vec<bool>], radar: bool| -> Vec<Vec<bool>> {
            allowed
                .iter()
                .enumerate()
                .map(|(t, row)| row.iter().enumerate().map(|(j, a)| *a && uses(t, radar, j)).collect())
                .collect()
        };
        let radar_allowed = filter(radar_allowed, true);
        let esm_allowed = filter(esm_allowed, false);
        let n_radar = radar_allowed.first().map_or(0, Vec::len);
        let n_esm = esm_allowed.first().map_or(0, Vec::len);

        // costs are negative log factors; infeasible factors get a large
        // finite cost so that ranking stays well defined
        let finite = |lw: f64| if lw.is_finite() { -lw } else { 1e9 };
        let miss_lw = |t: usize| self.tracks[t].log_weight[0];
        // admissibility of a joint option does not factor over the sensors,
        // so when `keep` rejects maps the side lists are widened until K
        // maps survive or the lists are exhausted
        let mut side_k = self.cfg.k_best;
        loop {
            let (rp, radar_lists) = self.side_lists(
                side_k,
                &radar_allowed,
                n_radar,
                |t, j| finite(self.tracks[t].log_weight[self.option_of(t, Assignment::new(Some(j), None)).unwrap_or(0)]),
                |t| finite(miss_lw(t)),
            );
            let (ep, esm_lists) = self.side_lists(
                side_k,
                &esm_allowed,
                n_esm,
                |t, j| {
                    let o = self.option_of(t, Assignment::new(None, Some(j))).unwrap_or(0);
                    finite(self.tracks[t].log_weight[o] - if miss_lw(t).is_finite() { miss_lw(t) } else { 0.0 })
                },
                |_| 0.0,
            );

            let mut maps: Vec<(Vec<usize>, f64)> = Vec::with_capacity(radar_lists.len() * esm_lists.len());
            for rl in &radar_lists {
                for el in &esm_lists {
                    let mut a = vec![Assignment::MISS; n];
                    for (i, &t) in rp.iter().enumerate() {
                        a[t].radar = rl[i];
                    }
                    for (i, &t) in ep.iter().enumerate() {
                        a[t].esm = el[i];
                    }
                    let opts: Option<Vec<usize>> = (0..n).map(|t| self.option_of(t, a[t]).filter(|&o| keep(t, o))).collect();
                    if let Some(opts) = opts {
                        let lw = self.map_log_weight(&opts);
                        maps.push((opts, lw));
                    }
                }
            }
            if let (Some(k), Some(sk)) = (self.cfg.k_best, side_k) {
                let truncated = radar_lists.len() >= sk || esm_lists.len() >= sk;
                if maps.len() < k && truncated && sk < MAX_SIDE_LIST {
                    side_k = Some((sk * 4).min(MAX_SIDE_LIST));
                    continue;
                }
                // stable: equal weights keep enumeration order
                maps.sort_by(|a, b| b.1.total_cmp(&a.1));
                maps.truncate(k.max(1));
            }
            return self.finish_maps(maps, n);
        }
    }

    fn finish_maps(&self, mut maps: Vec<(Vec<usize>, f64)>, n: usize) -> (Vec<Vec<usize>>, Vec<f64>) {
        let all_miss = vec![0usize; n];
        if !maps.iter().any(|(m, _)| *m == all_miss) {
            let lw = self.map_log_weight(&all_miss);
            maps.push((all_miss, lw));
        }
        let weights = maps.iter().map(|(_, w)| *w).collect();
        (maps.into_iter().map(|(m, _)| m).collect(), weights)
    }

    /// Maps and log weights under `decisions`: the unconditioned list when
    /// the decisions exclude no option, otherwise a fresh ranking of the
    /// admissible maps.
    fn conditioned_maps(&self, decisions: &[Option<usize>]) -> (Vec<Vec<usize>>, Vec<f64>) {
        let restricts = self
            .tracks
            .iter()
            .zip(decisions)
            .any(|(tc, d)| (0..tc.options.len()).any(|o| !tc.admissible(o, *d)));
        if !restricts {
            return (self.maps.clone(), self.map_log_weights.clone());
        }
        self.enumerate_maps(&self.radar_allowed, &self.esm_allowed, &|t, o| self.tracks[t].admissible(o, decisions[t]))
    }

    pub fn labels(&self) -> Vec<Label> {
        self.tracks.iter().map(|t| t.label).collect()
    }

    pub fn association_map(&self, map: &[usize]) -> AssociationMap {
        AssociationMap::new(
            self.tracks
                .iter()
                .zip(map)
                .map(|(t, &o)| (t.label, t.options[o].assignment))
                .collect(),
        )
    }

    /// Existence, class probabilities and option masses under `decisions`.
    pub fn marginals(&self, decisions: &[Option<usize>]) -> Marginals {
        let n = self.tracks.len();
        let (maps, log_weights) = self.conditioned_maps(decisions);
        let max_lw = log_weights
            .iter()
            .filter(|w| w.is_finite())
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let fallback = !max_lw.is_finite();
        let mut map_weights: Vec<f64> = if fallback {
            maps.iter().map(|m| if m.iter().all(|&o| o == 0) { 1.0 } else { 0.0 }).collect()
        } else {
            log_weights.iter().map(|w| (w - max_lw).exp()).collect()
        };
        let total: f64 = map_weights.iter().sum();
        for w in &mut map_weights {
            *w /= total;
        }

        let mut option_mass: Vec<Vec<f64>> = self.tracks.iter().map(|t| vec![0.0; t.options.len()]).collect();
        for (m, w) in maps.iter().zip(&map_weights) {
            if *w == 0.0 {
                continue;
            }
            for (t, &o) in m.iter().enumerate() {
                option_mass[t][o] += w;
            }
        }
        let mut existence = vec![0.0; n];
        let mut class_probs = Vec::with_capacity(n);
        for t in 0..n {
            let tc = &self.tracks[t];
            option_mass[t][0] *= tc.miss_existence;
            let mut r: f64 = option_mass[t].iter().sum();
            if self.cfg.missed_existence == MissedExistence::DetectionRatio && !tc.is_birth && !tc.contested() {
                let p_s = self.cfg.p_s;
                let p_d = self.p_d_joint;
                let den = p_s * (1.0 - p_d) + 1.0 - p_s;
                let prev = if p_s > 0.0 { tc.existence / p_s } else { 0.0 };
                let variant = if den > 0.0 { (prev * p_s * p_d / den).clamp(0.0, 1.0) } else { 1.0 };
                if r > 0.0 {
                    option_mass[t][0] *= variant / r;
                }
                r = variant;
            }
            existence[t] = r.clamp(0.0, 1.0);
            let j = tc.class_probs.len();
            let mut probs = vec![0.0; j];
            for (o, mass) in option_mass[t].iter().enumerate() {
                for (k, p) in probs.iter_mut().enumerate() {
                    *p += mass * tc.options[o].class_post[k];
                }
            }
            let s: f64 = probs.iter().sum();
            if s > 0.0 {
                probs.iter_mut().for_each(|p| *p /= s);
            } else {
                probs = tc.options[0].class_post.clone();
            }
            class_probs.push(probs);
        }
        Marginals {
            existence,
            class_probs,
            option_mass,
            maps,
            map_weights,
            fallback,
        }
    }

    /// Per-class posterior moments of one track given the option masses.
    pub fn class_moments(&self, track: usize, marg: &Marginals) -> Vec<(StateVector, StateCovariance)> {
        let tc = &self.tracks[track];
        (0..tc.class_probs.len())
            .map(|j| {
                let parts: Vec<(f64, &StateVector, &StateCovariance)> = tc
                    .options
                    .iter()
                    .zip(&marg.option_mass[track])
                    .map(|(o, m)| (m * o.class_post[j], &o.moments[j].0, &o.moments[j].1))
                    .collect();
                moment_match(parts.iter().copied()).unwrap_or(tc.options[0].moments[j])
            })
            .collect()
    }

    /// Classification and estimation cost of one track under decision `i`.
    pub fn track_cost(&self, track: usize, decision: usize, marg: &Marginals) -> (f64, f64) {
        let moments = self.class_moments(track, marg);
        let probs = &marg.class_probs[track];
        let r = marg.existence[track];
        let x_check = moments
            .iter()
            .zip(probs)
            .fold(StateVector::zeros(), |acc, ((m, _), p)| acc + m * *p);
        let c = self.coeffs;
        let mut class_cost = 0.0;
        let mut est_cost = 0.0;
        for (j, ((m, p), pj)) in moments.iter().zip(probs).enumerate() {
            class_cost += c.alpha[decision][j] * c.cost[decision][j] * pj;
            est_cost += c.beta[decision][j] * state_estimation_cost(m, p, &x_check) * pj;
        }
        (r * class_cost, r * est_cost)
    }

    /// Full cost of a decision vector; `reference` is the unconditioned mean
    /// cardinality. Tracks with `None` contribute no classification or
    /// estimation term.
    pub fn cost(&self, decisions: &[Option<usize>], reference: f64) -> (CostBreakdown, Marginals) {
        let marg = self.marginals(decisions);
        let mut out = CostBreakdown::default();
        for (t, d) in decisions.iter().enumerate() {
            if let Some(i) = d {
                let (c, e) = self.track_cost(t, *i, &marg);
                out.classification += c;
                out.estimation += e;
            }
        }
        out.cardinality = self.coeffs.gamma * (reference - marg.mean_cardinality());
        (out, marg)
    }

    /// The decision-conditioned posterior.
    pub fn update_conditioned(&self, decisions: &[Option<usize>]) -> UpdateOutput {
        let marg = self.marginals(decisions);
        let prune = &self.cfg.prune;
        let mut tracks = Vec::with_capacity(self.tracks.len());
        let mut class_estimates = Vec::with_capacity(self.tracks.len());
        for (t, tc) in self.tracks.iter().enumerate() {
            let pred = &self.predicted.tracks[t].density;
            let mut classes = Vec::with_capacity(pred.classes.len());
            for j in 0..pred.classes.len() {
                let a: Vec<f64> = marg.option_mass[t].iter().zip(&tc.options).map(|(m, o)| m * o.class_post[j]).collect();
                let a_total: f64 = a.iter().sum();
                if !(a_total > 0.0) {
                    classes.push(tc.options[0].posterior[j].clone());
                    continue;
                }
                let n_models = pred.classes[j].models.len();
                let mut models = Vec::with_capacity(n_models);
                for m in 0..n_models {
                    let mut comps = Vec::new();
                    let mut prob = 0.0;
                    for (o, ao) in tc.options.iter().zip(&a) {
                        if *ao == 0.0 {
                            continue;
                        }
                        let md = &o.posterior[j].models[m];
                        let w = ao * md.prob;
                        prob += w;
                        if w > 0.0 {
                            comps.extend(
                                md.mixture
                                    .components
                                    .iter()
                                    .map(|c| GaussianComponent::new(w * c.weight, c.mean, c.cov)),
                            );
                        }
                    }
                    let mixture = if comps.is_empty() {
                        tc.options[0].posterior[j].models[m].mixture.clone()
                    } else {
                        let mut gm = GaussianMixture::new(comps);
                        gm.normalize();
                        crate::rfs::prune_and_merge(&gm, prune.prune_threshold, prune.merge_distance, prune.max_components)
                    };
                    models.push(ModelDensity {
                        prob: prob / a_total,
                        mixture,
                    });
                }
                classes.push(ClassDensity { models });
            }
            class_estimates.push(self.class_moments(t, &marg));
            tracks.push(Track {
                label: tc.label,
                existence: marg.existence[t],
                density: ClassConditionedDensity {
                    classes,
                    class_probs: marg.class_probs[t].clone(),
                },
            });
        }
        let maps = marg
            .maps
            .iter()
            .zip(&marg.map_weights)
            .filter(|(_, w)| **w > 0.0)
            .map(|(m, w)| (self.association_map(m), *w))
            .collect();
        UpdateOutput {
            posterior: LmbDensity::new(tracks),
            decisions: decisions.to_vec(),
            maps,
            miss_existence: self.tracks.iter().map(|t| t.miss_existence).collect(),
            class_estimates,
            fallback: marg.fallback,
        }
    }
}

/// The association maps a scan admits, best first, always including the
/// all-miss map.
pub fn enumerate_associations(
    predicted: &LmbDensity,
    meas: &Measurements,
    sensors: &Sensors,
    coeffs: &RiskCoefficients,
    cfg: &FilterConfig,
) -> Result<Vec<AssociationMap>> {
    let ctx = ScanContext::new(predicted, predicted.len(), meas, sensors, coeffs, cfg)?;
    Ok(ctx.maps.iter().map(|m| ctx.association_map(m)).collect())
}

/// Decision-conditioned update of `predicted` with one scan. `decisions`
/// holds one entry per predicted track; `None` leaves the track
/// unconditioned.
pub fn update_conditioned(
    predicted: &LmbDensity,
    meas: &Measurements,
    decisions: &[Option<usize>],
    sensors: &Sensors,
    coeffs: &RiskCoefficients,
    cfg: &FilterConfig,
) -> Result<UpdateOutput> {
    if decisions.len() != predicted.len() {
        return crate::error::domain(format!(
            "{} decisions for {} tracks",
            decisions.len(),
            predicted.len()
        ));
    }
    let ctx = ScanContext::new(predicted, predicted.len(), meas, sensors, coeffs, cfg)?;
    Ok(ctx.update_conditioned(decisions))
}
