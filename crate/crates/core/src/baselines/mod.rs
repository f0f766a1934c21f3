//! Comparison trackers built on global nearest neighbor (GNN) association.
//!
//! Both baselines share the same track management: unassigned radar
//! measurements start tentative tracks, a tentative track is confirmed once
//! it has 2 hits in its first 3 scans, and a confirmed track is dropped after
//! 3 consecutive misses. Only confirmed tracks are reported.
//!
//! When the scenario has a birth model, new tracks start only from
//! measurements that gate with a birth component and are initialized by a
//! Kalman update of that component, so the baselines share the filter's
//! prior knowledge of where targets appear. Without births any unassigned
//! measurement starts a track.
//!
//! * [`etd`]: estimation then decision. One IMM bank over the union of all
//!   class models; the class follows from per-class measurement likelihoods.
//! * [`dte`]: decision then estimation. A minimum-risk class decision first,
//!   then an update with the decided class's models only.

pub mod dte;
pub mod etd;

use nalgebra::{DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::association::ranked_with_misses;
use crate::error::{config, Result};
use crate::filter::Estimate;
use crate::kalman::{kalman_update, mahalanobis_sq};
use crate::motion::ImmBank;
use crate::rfs::{Label, StateCovariance, StateVector, POS_X, POS_Y};
use crate::sensing::{Measurements, RadarMode, Sensors};

pub use dte::{dte_decide, DteTracker};
pub use etd::{union_model_set, EtdTracker};

/// How the ETD class belief evolves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassMode {
    /// Recursive Bayes over scans.
    #[default]
    Recursive,
    /// Only the current scan's likelihood ratio, from a uniform prior.
    PerScan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    /// χ² gate on the radar Mahalanobis distance; also the miss cost.
    pub gate_radar: f64,
    /// χ² gate on the ESM bearing.
    pub gate_esm: f64,
    /// Hits needed among the first `confirm_n` scans of a tentative track.
    pub confirm_m: u32,
    pub confirm_n: u32,
    /// Consecutive misses after which a confirmed track is dropped.
    pub max_misses: u32,
    /// Initial velocity and acceleration standard deviations of new tracks.
    pub init_vel_std: f64,
    pub init_acc_std: f64,
    pub class_mode: ClassMode,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            gate_radar: 9.21,
            gate_esm: 6.63,
            confirm_m: 2,
            confirm_n: 3,
            max_misses: 3,
            init_vel_std: 25.0,
            init_acc_std: 5.0,
            class_mode: ClassMode::Recursive,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gate_radar > 0.0) || !(self.gate_esm > 0.0) {
            return config("baseline gates must be positive");
        }
        if self.confirm_m == 0 || self.confirm_m > self.confirm_n || self.confirm_n > 32 {
            return config("baseline confirmation needs 1 <= confirm_m <= confirm_n <= 32");
        }
        if self.max_misses == 0 {
            return config("baseline max_misses must be at least 1");
        }
        if !(self.init_vel_std > 0.0) || !(self.init_acc_std > 0.0) {
            return config("baseline initial standard deviations must be positive");
        }
        Ok(())
    }
}

/// Mean and covariance of a birth prior; class content is not used.
pub type BirthPrior = (StateVector, StateCovariance);

/// One GNN track.
#[derive(Debug, Clone)]
pub struct GnnTrack {
    pub label: Label,
    /// ETD keeps a single union bank, DTE one bank per class.
    pub banks: Vec<ImmBank>,
    /// Normalized class probabilities.
    pub class_belief: Vec<f64>,
    /// Current class decision.
    pub class: usize,
    pub miss_streak: u32,
    /// Scans seen since creation, creation scan included.
    pub age: u32,
    pub hits: u32,
    pub confirmed: bool,
}

/// Measurements given to one track in one scan.
#[derive(Debug, Clone, Copy)]
pub struct TrackMeasurement {
    pub radar: Vector2<f64>,
    pub esm_declared: Option<usize>,
}

/// What differs between the baselines: how tracks are built, which moments
/// gate, and how a measurement updates state and class.
pub(crate) trait ClassPolicy {
    fn new_track(&self, label: Label, mean: StateVector, cov: StateCovariance) -> GnnTrack;
    fn gating_moments(&self, track: &GnnTrack) -> (StateVector, StateCovariance);
    fn update(&self, track: &mut GnnTrack, m: TrackMeasurement);
    fn estimate(&self, track: &GnnTrack) -> StateVector;
}

/// GNN assignment of rows to columns under squared distances `d2`, gated at
/// `gate` with a private miss per row costing `gate`. Returns the column per
/// row (or `None`) and the total cost.
pub fn gnn_assign(d2: &[Vec<f64>], gate: f64) -> (Vec<Option<usize>>, f64) {
    let gated: Vec<Vec<f64>> = d2
        .iter()
        .map(|row| row.iter().map(|&d| if d <= gate { d } else { f64::INFINITY }).collect())
        .collect();
    let miss = vec![gate; d2.len()];
    ranked_with_misses(&gated, &miss, 1)
        .into_iter()
        .next()
        .unwrap_or_else(|| (vec![None; d2.len()], gate * d2.len() as f64))
}

/// Initial state of a track started from a radar measurement.
pub fn initial_state(z: &Vector2<f64>, sensors: &Sensors, cfg: &BaselineConfig) -> (StateVector, StateCovariance) {
    let radar = &sensors.radar;
    let r = radar.noise_cov;
    let (pos, pos_cov) = match radar.mode {
        RadarMode::LinearPosition => (*z, [[r[0][0], r[0][1]], [r[1][0], r[1][1]]]),
        RadarMode::RangeBearing => {
            let (rho, b) = (z[0], z[1]);
            let (s, c) = b.sin_cos();
            let pos = Vector2::new(radar.position[0] + rho * c, radar.position[1] + rho * s);
            // J R Jᵀ with J the polar-to-Cartesian Jacobian
            let jac = nalgebra::Matrix2::new(c, -rho * s, s, rho * c);
            let rm = nalgebra::Matrix2::new(r[0][0], r[0][1], r[1][0], r[1][1]);
            let p = jac * rm * jac.transpose();
            (pos, [[p[(0, 0)], p[(0, 1)]], [p[(1, 0)], p[(1, 1)]]])
        }
    };
    let mut mean = StateVector::zeros();
    mean[POS_X] = pos[0];
    mean[POS_Y] = pos[1];
    let mut cov = StateCovariance::zeros();
    let (v, a) = (cfg.init_vel_std.powi(2), cfg.init_acc_std.powi(2));
    for (axis, base) in [POS_X, POS_Y].into_iter().enumerate() {
        cov[(base, base)] = pos_cov[axis][axis];
        cov[(base + 1, base + 1)] = v;
        cov[(base + 2, base + 2)] = a;
    }
    cov[(POS_X, POS_Y)] = pos_cov[0][1];
    cov[(POS_Y, POS_X)] = pos_cov[1][0];
    (mean, cov)
}

/// Initial state for an unassigned measurement: the best-gating birth prior
/// updated with it, or `None` when no prior gates it. Without priors the
/// measurement alone initializes the track.
pub fn initiate(z: &Vector2<f64>, births: &[BirthPrior], sensors: &Sensors, cfg: &BaselineConfig) -> Option<(StateVector, StateCovariance)> {
    if births.is_empty() {
        return Some(initial_state(z, sensors, cfg));
    }
    let zv = DVector::from_column_slice(z.as_slice());
    births
        .iter()
        .filter_map(|(m, p)| {
            let lin = sensors.radar.linearize(m);
            let d2 = mahalanobis_sq(p, &zv, &lin)?;
            (d2 <= cfg.gate_radar).then_some((d2, m, p, lin))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .and_then(|(_, m, p, lin)| kalman_update(m, p, &zv, &lin))
        .map(|u| (u.mean, u.cov))
}

fn radar_d2(tracks: &[GnnTrack], meas: &Measurements, sensors: &Sensors, policy: &impl ClassPolicy) -> Vec<Vec<f64>> {
    tracks
        .iter()
        .map(|t| {
            let (m, p) = policy.gating_moments(t);
            let lin = sensors.radar.linearize(&m);
            meas.radar
                .iter()
                .map(|z| mahalanobis_sq(&p, &DVector::from_column_slice(z.as_slice()), &lin).unwrap_or(f64::INFINITY))
                .collect()
        })
        .collect()
}

fn esm_d2(tracks: &[GnnTrack], meas: &Measurements, sensors: &Sensors, policy: &impl ClassPolicy) -> Vec<Vec<f64>> {
    tracks
        .iter()
        .map(|t| {
            let (m, p) = policy.gating_moments(t);
            let lin = sensors.esm.linearize(&m);
            meas.esm
                .iter()
                .map(|e| mahalanobis_sq(&p, &DVector::from_element(1, e.bearing), &lin).unwrap_or(f64::INFINITY))
                .collect()
        })
        .collect()
}

/// One scan of a GNN tracker: predict, associate, update, manage tracks.
/// Returns the confirmed tracks.
pub(crate) fn gnn_step(
    policy: &impl ClassPolicy,
    tracks: &mut Vec<GnnTrack>,
    k: u32,
    meas: &Measurements,
    sensors: &Sensors,
    births: &[BirthPrior],
    cfg: &BaselineConfig,
) -> Vec<Estimate> {
    for t in tracks.iter_mut() {
        for b in &mut t.banks {
            b.predict();
        }
    }

    let (radar_assign, _) = gnn_assign(&radar_d2(tracks, meas, sensors, policy), cfg.gate_radar);
    let esm_assign = if sensors.esm.enabled && !meas.esm.is_empty() {
        gnn_assign(&esm_d2(tracks, meas, sensors, policy), cfg.gate_esm).0
    } else {
        vec![None; tracks.len()]
    };

    let mut used = vec![false; meas.radar.len()];
    for (i, t) in tracks.iter_mut().enumerate() {
        t.age += 1;
        match radar_assign[i] {
            Some(r) => {
                used[r] = true;
                let m = TrackMeasurement {
                    radar: meas.radar[r],
                    esm_declared: esm_assign[i].map(|e| meas.esm[e].declared),
                };
                policy.update(t, m);
                t.hits += 1;
                t.miss_streak = 0;
            }
            None => t.miss_streak += 1,
        }
        if !t.confirmed && t.age <= cfg.confirm_n && t.hits >= cfg.confirm_m {
            t.confirmed = true;
        }
    }

    tracks.retain(|t| {
        if t.confirmed {
            t.miss_streak < cfg.max_misses
        } else {
            // still able to reach confirmation
            t.age < cfg.confirm_n && t.hits + (cfg.confirm_n - t.age) >= cfg.confirm_m
        }
    });

    let out = tracks
        .iter()
        .filter(|t| t.confirmed)
        .map(|t| Estimate {
            label: t.label,
            existence: 1.0,
            state: policy.estimate(t),
            class_probs: t.class_belief.clone(),
            class: t.class,
        })
        .collect();

    let mut index = 0;
    for (r, z) in meas.radar.iter().enumerate() {
        if used[r] {
            continue;
        }
        let Some((mean, cov)) = initiate(z, births, sensors, cfg) else {
            continue;
        };
        let mut t = policy.new_track(Label::new(k, index), mean, cov);
        t.age = 1;
        t.hits = 1;
        t.confirmed = cfg.confirm_m <= 1;
        tracks.push(t);
        index += 1;
    }
    out
}

/// Normalizes `v` in place; leaves it unchanged when the sum is not positive.
pub(crate) fn normalize_belief(v: &mut [f64]) -> bool {
    let s: f64 = v.iter().sum();
    if s > 0.0 && s.is_finite() {
        v.iter_mut().for_each(|x| *x /= s);
        true
    } else {
        false
    }
}
