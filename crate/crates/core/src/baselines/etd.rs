//! Estimation then decision: GNN tracking with a union IMM, classification
//! by per-class likelihoods of the predicted states.

use nalgebra::DVector;

use crate::error::Result;
use crate::filter::Estimate;
use crate::motion::{ClassModelSet, ImmBank, MotionModel};
use crate::rfs::{Label, StateCovariance, StateVector};
use crate::risk::argmin_lower;
use crate::sensing::{Measurements, Sensors};

use super::{gnn_step, BirthPrior, normalize_belief, BaselineConfig, ClassMode, ClassPolicy, GnnTrack, TrackMeasurement};

/// Deduplicated union of all class models, and for each class the indices of
/// its models within the union. A class holding the whole union lends its
/// switch matrix; otherwise the union switches with 0.9 on the diagonal.
pub fn union_model_set(models: &[ClassModelSet]) -> (ClassModelSet, Vec<Vec<usize>>) {
    let mut union: Vec<MotionModel> = Vec::new();
    let mut subsets = Vec::with_capacity(models.len());
    for set in models {
        let mut idx = Vec::with_capacity(set.models.len());
        for m in &set.models {
            let pos = union.iter().position(|u| u == m).unwrap_or_else(|| {
                union.push(m.clone());
                union.len() - 1
            });
            idx.push(pos);
        }
        subsets.push(idx);
    }
    let n = union.len();
    let mut switch: Vec<Vec<f64>> = if n == 1 {
        vec![vec![1.0]]
    } else {
        let off = 0.1 / (n - 1) as f64;
        (0..n).map(|i| (0..n).map(|j| if i == j { 0.9 } else { off }).collect()).collect()
    };
    if let Some((set, idx)) = models.iter().zip(&subsets).find(|(s, _)| s.models.len() == n) {
        for (a, &ua) in idx.iter().enumerate() {
            for (b, &ub) in idx.iter().enumerate() {
                switch[ua][ub] = set.switch_matrix[a][b];
            }
        }
    }
    (
        ClassModelSet {
            class_id: 0,
            models: union,
            switch_matrix: switch,
        },
        subsets,
    )
}

#[derive(Debug, Clone)]
pub struct EtdTracker {
    pub cfg: BaselineConfig,
    pub sensors: Sensors,
    pub births: Vec<BirthPrior>,
    union: ClassModelSet,
    subsets: Vec<Vec<usize>>,
    tracks: Vec<GnnTrack>,
}

impl EtdTracker {
    pub fn new(cfg: BaselineConfig, models: &[ClassModelSet], sensors: Sensors, births: Vec<BirthPrior>) -> Result<Self> {
        cfg.validate()?;
        for m in models {
            m.validate()?;
        }
        let (union, subsets) = union_model_set(models);
        Ok(Self {
            cfg,
            sensors,
            births,
            union,
            subsets,
            tracks: Vec::new(),
        })
    }

    pub fn tracks(&self) -> &[GnnTrack] {
        &self.tracks
    }

    /// Per-class likelihoods of a radar measurement against the predicted
    /// union bank: each class mixes its own models, renormalized.
    pub fn class_likelihoods(&self, bank: &ImmBank, z: &nalgebra::Vector2<f64>) -> Vec<f64> {
        let z = DVector::from_column_slice(z.as_slice());
        let lik = bank.likelihoods(&z, |x| self.sensors.radar.linearize(x));
        self.subsets
            .iter()
            .map(|idx| {
                let mass: f64 = idx.iter().map(|&m| bank.probs[m]).sum();
                if mass > 0.0 {
                    idx.iter().map(|&m| bank.probs[m] * lik[m]).sum::<f64>() / mass
                } else {
                    idx.iter().map(|&m| lik[m]).sum::<f64>() / idx.len() as f64
                }
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

impl ClassPolicy for EtdTracker {
    fn new_track(&self, label: Label, mean: StateVector, cov: StateCovariance) -> GnnTrack {
        let n = self.union.models.len();
        let j = self.subsets.len();
        GnnTrack {
            label,
            banks: vec![ImmBank::new(&self.union, mean, cov, vec![1.0 / n as f64; n])],
            class_belief: vec![1.0 / j as f64; j],
            class: 0,
            miss_streak: 0,
            age: 0,
            hits: 0,
            confirmed: false,
        }
    }

    fn gating_moments(&self, track: &GnnTrack) -> (StateVector, StateCovariance) {
        track.banks[0].estimate()
    }

    fn update(&self, track: &mut GnnTrack, m: TrackMeasurement) {
        let mut l = self.class_likelihoods(&track.banks[0], &m.radar);
        if let Some(d) = m.esm_declared {
            for (j, lj) in l.iter_mut().enumerate() {
                *lj *= self.sensors.esm.confusion[j][d];
            }
        }
        let mut belief: Vec<f64> = match self.cfg.class_mode {
            ClassMode::Recursive => track.class_belief.iter().zip(&l).map(|(p, x)| p * x).collect(),
            ClassMode::PerScan => l,
        };
        if normalize_belief(&mut belief) {
            track.class_belief = belief;
        }
        let neg: Vec<f64> = track.class_belief.iter().map(|p| -p).collect();
        track.class = argmin_lower(&neg);
        let z = DVector::from_column_slice(m.radar.as_slice());
        track.banks[0].update(&z, |x| self.sensors.radar.linearize(x));
    }

    fn estimate(&self, track: &GnnTrack) -> StateVector {
        track.banks[0].estimate().0
    }
}
