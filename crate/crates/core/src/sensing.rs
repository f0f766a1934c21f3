//! Radar and ESM sensor models, clutter, class declarations and scan
//! simulation.
//!
//! The radar reports 2-D measurements (position or range-bearing). The ESM
//! reports a bearing and a declared class drawn from the confusion matrix row
//! of the true class.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::kalman::{gaussian_density, wrap_angle, Linearized};
use crate::rfs::{Label, StateVector, POS_X, POS_Y, STATE_DIM};

/// Axis-aligned surveillance rectangle in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for Region {
    fn default() -> Self {
        Self {
            x_min: -400.0,
            x_max: 1600.0,
            y_min: 400.0,
            y_max: 2200.0,
        }
    }
}

impl Region {
    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }

    fn corners(&self) -> [(f64, f64); 4] {
        [
            (self.x_min, self.y_min),
            (self.x_min, self.y_max),
            (self.x_max, self.y_min),
            (self.x_max, self.y_max),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadarMode {
    LinearPosition,
    RangeBearing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadarModel {
    pub mode: RadarMode,
    /// Measurement noise covariance: `[x, y]` in linear mode, `[range, bearing]`
    /// in range-bearing mode.
    pub noise_cov: [[f64; 2]; 2],
    pub p_d: f64,
    /// Expected clutter count per scan. When absent the count is
    /// `clutter_density · area`.
    pub clutter_rate: Option<f64>,
    /// Clutter density per m².
    pub clutter_density: f64,
    pub region: Region,
    /// Sensor position, used by range-bearing mode.
    pub position: [f64; 2],
}

impl Default for RadarModel {
    fn default() -> Self {
        Self {
            mode: RadarMode::LinearPosition,
            noise_cov: [[4.0, 0.0], [0.0, 4.0]],
            p_d: 0.98,
            clutter_rate: Some(10.0),
            clutter_density: 6e-5,
            region: Region::default(),
            position: [0.0, 0.0],
        }
    }
}

impl RadarModel {
    pub fn expected_clutter(&self) -> f64 {
        self.clutter_rate.unwrap_or(self.clutter_density * self.region.area())
    }

    fn max_range(&self) -> f64 {
        self.region
            .corners()
            .iter()
            .map(|(x, y)| ((x - self.position[0]).powi(2) + (y - self.position[1]).powi(2)).sqrt())
            .fold(0.0, f64::max)
    }

    /// Clutter intensity κ(z): expected count times the uniform density of
    /// the clutter support.
    pub fn clutter_intensity(&self) -> f64 {
        let support = match self.mode {
            RadarMode::LinearPosition => self.region.area(),
            RadarMode::RangeBearing => self.max_range() * 2.0 * PI,
        };
        self.expected_clutter() / support
    }

    fn noise(&self) -> Matrix2<f64> {
        Matrix2::new(self.noise_cov[0][0], self.noise_cov[0][1], self.noise_cov[1][0], self.noise_cov[1][1])
    }

    /// Noise-free measurement of a state.
    pub fn observe(&self, x: &StateVector) -> Vector2<f64> {
        match self.mode {
            RadarMode::LinearPosition => Vector2::new(x[POS_X], x[POS_Y]),
            RadarMode::RangeBearing => {
                let dx = x[POS_X] - self.position[0];
                let dy = x[POS_Y] - self.position[1];
                Vector2::new((dx * dx + dy * dy).sqrt(), dy.atan2(dx))
            }
        }
    }

    /// Measurement model linearized at `x`.
    pub fn linearize(&self, x: &StateVector) -> Linearized {
        let mut h = DMatrix::zeros(2, STATE_DIM);
        let angle_rows = match self.mode {
            RadarMode::LinearPosition => {
                h[(0, POS_X)] = 1.0;
                h[(1, POS_Y)] = 1.0;
                vec![]
            }
            RadarMode::RangeBearing => {
                let dx = x[POS_X] - self.position[0];
                let dy = x[POS_Y] - self.position[1];
                let r2 = (dx * dx + dy * dy).max(1e-12);
                let r = r2.sqrt();
                h[(0, POS_X)] = dx / r;
                h[(0, POS_Y)] = dy / r;
                h[(1, POS_X)] = -dy / r2;
                h[(1, POS_Y)] = dx / r2;
                vec![1]
            }
        };
        let z = self.observe(x);
        Linearized {
            z_hat: DVector::from_column_slice(z.as_slice()),
            h,
            r: DMatrix::from_column_slice(2, 2, self.noise().as_slice()),
            angle_rows,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_d) {
            return config(format!("radar p_d {} outside [0,1]", self.p_d));
        }
        // κ divides the detection likelihoods; clutter-free runs use a tiny rate
        if !(self.expected_clutter() > 0.0) || !self.expected_clutter().is_finite() {
            return config("radar clutter rate must be finite and positive");
        }
        let n = self.noise();
        if n[(0, 1)] != n[(1, 0)] || n[(0, 0)] <= 0.0 || n.determinant() <= 0.0 {
            return config("radar noise covariance must be symmetric positive definite");
        }
        if self.region.area() <= 0.0 {
            return config("radar region must have positive area");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EsmModel {
    pub enabled: bool,
    pub p_d: f64,
    /// Bearing noise standard deviation in radians.
    pub bearing_std: f64,
    /// Row-stochastic `confusion[true][declared]`.
    pub confusion: Vec<Vec<f64>>,
    /// Expected false bearings per scan.
    pub clutter_rate: f64,
    pub position: [f64; 2],
}

impl Default for EsmModel {
    fn default() -> Self {
        Self {
            enabled: false,
            p_d: 0.9,
            bearing_std: 1f64.to_radians(),
            confusion: vec![vec![0.9, 0.1], vec![0.1, 0.9]],
            clutter_rate: 2.0,
            position: [0.0, 0.0],
        }
    }
}

impl EsmModel {
    pub fn num_classes(&self) -> usize {
        self.confusion.len()
    }

    /// Clutter intensity: bearings uniform on the circle, declarations uniform
    /// over the classes.
    pub fn clutter_intensity(&self) -> f64 {
        self.clutter_rate / (2.0 * PI * self.num_classes().max(1) as f64)
    }

    pub fn observe(&self, x: &StateVector) -> f64 {
        (x[POS_Y] - self.position[1]).atan2(x[POS_X] - self.position[0])
    }

    pub fn linearize(&self, x: &StateVector) -> Linearized {
        let dx = x[POS_X] - self.position[0];
        let dy = x[POS_Y] - self.position[1];
        let r2 = (dx * dx + dy * dy).max(1e-12);
        let mut h = DMatrix::zeros(1, STATE_DIM);
        h[(0, POS_X)] = -dy / r2;
        h[(0, POS_Y)] = dx / r2;
        Linearized {
            z_hat: DVector::from_element(1, self.observe(x)),
            h,
            r: DMatrix::from_element(1, 1, self.bearing_std * self.bearing_std),
            angle_rows: vec![0],
        }
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_d) {
            return config(format!("esm p_d {} outside [0,1]", self.p_d));
        }
        if !(self.bearing_std > 0.0) {
            return config("esm bearing_std must be positive");
        }
        if !(self.clutter_rate > 0.0) || !self.clutter_rate.is_finite() {
            return config("esm clutter_rate must be finite and positive");
        }
        if self.confusion.len() != num_classes || self.confusion.iter().any(|r| r.len() != num_classes) {
            return config(format!("esm confusion matrix must be {num_classes}x{num_classes}"));
        }
        for row in &self.confusion {
            let s: f64 = row.iter().sum();
            if row.iter().any(|v| *v < 0.0) || (s - 1.0).abs() > 1e-9 {
                return config("esm confusion matrix rows must be probability vectors");
            }
        }
        Ok(())
    }
}

/// Both sensors of a scenario.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Sensors {
    pub radar: RadarModel,
    pub esm: EsmModel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EsmMeasurement {
    pub bearing: f64,
    /// Declared class id.
    pub declared: usize,
}

/// The measurements of one scan. This is all a filter ever sees.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Measurements {
    pub radar: Vec<Vector2<f64>>,
    pub esm: Vec<EsmMeasurement>,
}

/// A true target at one scan, for scoring only.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthEntry {
    pub label: Label,
    pub state: StateVector,
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanData {
    pub k: u32,
    pub meas: Measurements,
    pub truth: Vec<TruthEntry>,
}

/// Samples a declared class from row `true_class` of the confusion matrix.
pub fn declare_class<R: Rng + ?Sized>(true_class: usize, confusion: &[Vec<f64>], rng: &mut R) -> usize {
    let row = &confusion[true_class];
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    // rounding in the row sum: fall back to the last class with mass
    row.iter().rposition(|p| *p > 0.0).unwrap_or(row.len() - 1)
}

fn gaussian2<R: Rng + ?Sized>(cov: &Matrix2<f64>, rng: &mut R) -> Vector2<f64> {
    let w = Vector2::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal));
    match cov.cholesky() {
        Some(ch) => ch.l() * w,
        None => Vector2::zeros(),
    }
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as usize).unwrap_or(0)
}

/// Simulates one scan's measurements from the true targets.
pub fn simulate_measurements<R: Rng + ?Sized>(truth: &[TruthEntry], sensors: &Sensors, rng: &mut R) -> Measurements {
    let radar = &sensors.radar;
    let mut radar_meas = Vec::new();
    for t in truth {
        if rng.random::<f64>() < radar.p_d {
            let mut z = radar.observe(&t.state) + gaussian2(&radar.noise(), rng);
            if radar.mode == RadarMode::RangeBearing {
                z[1] = wrap_angle(z[1]);
            }
            radar_meas.push(z);
        }
    }
    for _ in 0..poisson(radar.expected_clutter(), rng) {
        let z = match radar.mode {
            RadarMode::LinearPosition => Vector2::new(
                rng.random_range(radar.region.x_min..radar.region.x_max),
                rng.random_range(radar.region.y_min..radar.region.y_max),
            ),
            RadarMode::RangeBearing => Vector2::new(rng.random_range(0.0..radar.max_range()), rng.random_range(-PI..PI)),
        };
        radar_meas.push(z);
    }
    radar_meas.shuffle(rng);

    let esm = &sensors.esm;
    let mut esm_meas = Vec::new();
    if esm.enabled {
        for t in truth {
            if rng.random::<f64>() < esm.p_d {
                let noise: f64 = rng.sample::<f64, _>(StandardNormal) * esm.bearing_std;
                esm_meas.push(EsmMeasurement {
                    bearing: wrap_angle(esm.observe(&t.state) + noise),
                    declared: declare_class(t.class, &esm.confusion, rng),
                });
            }
        }
        for _ in 0..poisson(esm.clutter_rate, rng) {
            esm_meas.push(EsmMeasurement {
                bearing: rng.random_range(-PI..PI),
                declared: rng.random_range(0..esm.num_classes()),
            });
        }
        esm_meas.shuffle(rng);
    }
    Measurements {
        radar: radar_meas,
        esm: esm_meas,
    }
}

/// Simulates one scan from a seed.
pub fn simulate_scan(k: u32, truth: &[TruthEntry], sensors: &Sensors, seed: u64) -> ScanData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ScanData {
        k,
        meas: simulate_measurements(truth, sensors, &mut rng),
        truth: truth.to_vec(),
    }
}

/// Radar single-target likelihood: `1 − p_d` for a miss, otherwise
/// `p_d g(z|x) / κ`.
pub fn radar_likelihood(z: Option<&Vector2<f64>>, x: &StateVector, radar: &RadarModel) -> f64 {
    match z {
        None => 1.0 - radar.p_d,
        Some(z) => {
            let lin = radar.linearize(x);
            let nu = lin.innovation(&DVector::from_column_slice(z.as_slice()));
            let g = gaussian_density(&nu, &lin.r).map_or(0.0, |(g, _)| g);
            radar.p_d * g / radar.clutter_intensity()
        }
    }
}

/// ESM single-target likelihood under class `class`: `1 − p_d` for a miss,
/// otherwise `p_d g(bearing|x) Π[class][declared] / κ`.
pub fn esm_likelihood(z: Option<&EsmMeasurement>, x: &StateVector, class: usize, esm: &EsmModel) -> f64 {
    match z {
        None => 1.0 - esm.p_d,
        Some(z) => {
            let lin = esm.linearize(x);
            let nu = lin.innovation(&DVector::from_element(1, z.bearing));
            let g = gaussian_density(&nu, &lin.r).map_or(0.0, |(g, _)| g);
            esm.p_d * g * esm.confusion[class][z.declared] / esm.clutter_intensity()
        }
    }
}
