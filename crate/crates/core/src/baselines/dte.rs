//! Decision then estimation: a minimum-risk class decision per track, then
//! a state update with the decided class's models only.

use nalgebra::DVector;

use crate::error::Result;
use crate::filter::Estimate;
use crate::motion::{ClassModelSet, ImmBank};
use crate::rfs::{Label, StateCovariance, StateVector};
use crate::risk::{argmin_lower, intermediate_costs, RiskCoefficients};
use crate::sensing::{Measurements, Sensors};

use super::{gnn_step, BirthPrior, normalize_belief, BaselineConfig, ClassPolicy, GnnTrack, TrackMeasurement};

/// `argmin_i Σ_j α_ij c_ij L_j P_j` with no estimation or cardinality cost,
/// lower index on ties.
pub fn dte_decide(likelihoods: &[f64], priors: &[f64], coeffs: &RiskCoefficients) -> usize {
    let j = likelihoods.len();
    let zero = vec![vec![0.0; j]; j];
    argmin_lower(&intermediate_costs(likelihoods, priors, &zero, coeffs))
}

#[derive(Debug, Clone)]
pub struct DteTracker {
    pub cfg: BaselineConfig,
    pub sensors: Sensors,
    pub births: Vec<BirthPrior>,
    pub coeffs: RiskCoefficients,
    models: Vec<ClassModelSet>,
    tracks: Vec<GnnTrack>,
}

impl DteTracker {
    pub fn new(cfg: BaselineConfig, models: &[ClassModelSet], sensors: Sensors, births: Vec<BirthPrior>, coeffs: RiskCoefficients) -> Result<Self> {
        cfg.validate()?;
        for m in models {
            m.validate()?;
        }
        coeffs.validate(models.len())?;
        Ok(Self {
            cfg,
            sensors,
            births,
            coeffs,
            models: models.to_vec(),
            tracks: Vec::new(),
        })
    }

    pub fn tracks(&self) -> &[GnnTrack] {
        &self.tracks
    }

    /// Mixture likelihood `Σ_m μ_m Λ_m` of each class bank.
    pub fn class_likelihoods(&self, track: &GnnTrack, z: &nalgebra::Vector2<f64>) -> Vec<f64> {
        let z = DVector::from_column_slice(z.as_slice());
        track
            .banks
            .iter()
            .map(|b| {
                let lik = b.likelihoods(&z, |x| self.sensors.radar.linearize(x));
                b.probs.iter().zip(&lik).map(|(p, l)| p * l).sum()
            })
            .collect()
    }

    /// One scan; returns the confirmed tracks.
    pub fn step(&mut self, k: u32, meas: &Measurements) -> Vec<Estimate> {
        let mut tracks = std::mem::take(&mut self.tracks);
        let sensors = self.sensors.clone();
        let cfg = self.cfg.clone();
        let births = std::mem::take(&mut self.births);
        let out = gnn_step(self, &mut tracks, k, meas, &sensors, &births, &cfg);
        self.births = births;
        self.tracks = tracks;
        out
    }
}

impl ClassPolicy for DteTracker {
    fn new_track(&self, label: Label, mean: StateVector, cov: StateCovariance) -> GnnTrack {
        let j = self.models.len();
        GnnTrack {
            label,
            banks: self
                .models
                .iter()
                .map(|set| {
                    let n = set.models.len();
                    ImmBank::new(set, mean, cov, vec![1.0 / n as f64; n])
                })
                .collect(),
            class_belief: vec![1.0 / j as f64; j],
            class: 0,
            miss_streak: 0,
            age: 0,
            hits: 0,
            confirmed: false,
        }
    }

    fn gating_moments(&self, track: &GnnTrack) -> (StateVector, StateCovariance) {
        track.banks[track.class].estimate()
    }

    fn update(&self, track: &mut GnnTrack, m: TrackMeasurement) {
        let mut l = self.class_likelihoods(track, &m.radar);
        if let Some(d) = m.esm_declared {
            for (j, lj) in l.iter_mut().enumerate() {
                *lj *= self.sensors.esm.confusion[j][d];
            }
        }
        let decided = dte_decide(&l, &track.class_belief, &self.coeffs);
        let mut belief: Vec<f64> = track.class_belief.iter().zip(&l).map(|(p, x)| p * x).collect();
        if normalize_belief(&mut belief) {
            track.class_belief = belief;
        }
        track.class = decided;
        let z = DVector::from_column_slice(m.radar.as_slice());
        track.banks[decided].update(&z, |x| self.sensors.radar.linearize(x));
        let (mean, cov) = track.banks[decided].estimate();
        for (j, b) in track.banks.iter_mut().enumerate() {
            if j != decided {
                b.reseed(mean, cov);
            }
        }
    }

    fn estimate(&self, track: &GnnTrack) -> StateVector {
        track.banks[track.class].estimate().0
    }
}
