//! Kalman measurement update against a (possibly linearized, possibly
//! stacked) measurement model.

use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

use crate::rfs::{symmetrize, StateCovariance, StateVector, STATE_DIM};

/// Wraps an angle to `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Measurement model linearized around one state: predicted measurement,
/// Jacobian, noise covariance and the rows that hold angles.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearized {
    pub z_hat: DVector<f64>,
    pub h: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub angle_rows: Vec<usize>,
}

impl Linearized {
    pub fn dim(&self) -> usize {
        self.z_hat.len()
    }

    /// Stacks several models into one with block-diagonal noise.
    pub fn stack(parts: &[Linearized]) -> Linearized {
        let p: usize = parts.iter().map(Linearized::dim).sum();
        let mut z_hat = DVector::zeros(p);
        let mut h = DMatrix::zeros(p, STATE_DIM);
        let mut r = DMatrix::zeros(p, p);
        let mut angle_rows = Vec::new();
        let mut off = 0;
        for part in parts {
            let d = part.dim();
            z_hat.rows_mut(off, d).copy_from(&part.z_hat);
            h.rows_mut(off, d).copy_from(&part.h);
            r.view_mut((off, off), (d, d)).copy_from(&part.r);
            angle_rows.extend(part.angle_rows.iter().map(|a| a + off));
            off += d;
        }
        Linearized { z_hat, h, r, angle_rows }
    }

    /// Innovation `z − ẑ`, with angle rows wrapped.
    pub fn innovation(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut nu = z - &self.z_hat;
        for &a in &self.angle_rows {
            nu[a] = wrap_angle(nu[a]);
        }
        nu
    }

    /// Innovation covariance `H P Hᵀ + R`.
    pub fn innovation_cov(&self, cov: &StateCovariance) -> DMatrix<f64> {
        let p = DMatrix::from_column_slice(STATE_DIM, STATE_DIM, cov.as_slice());
        let s = &self.h * p * self.h.transpose() + &self.r;
        (&s + s.transpose()) * 0.5
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanUpdate {
    pub mean: StateVector,
    pub cov: StateCovariance,
    /// Gaussian density of the innovation, `N(ν; 0, S)`.
    pub likelihood: f64,
    pub mahalanobis_sq: f64,
}

/// `N(ν; 0, S)` and `νᵀ S⁻¹ ν`; `None` when `S` is not positive definite.
pub fn gaussian_density(nu: &DVector<f64>, s: &DMatrix<f64>) -> Option<(f64, f64)> {
    let ch = s.clone().cholesky()?;
    let d2 = nu.dot(&ch.solve(nu));
    let log_det: f64 = ch.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    let n = nu.len() as f64;
    let log_pdf = -0.5 * (d2 + log_det + n * (2.0 * PI).ln());
    Some((log_pdf.exp(), d2))
}

/// Squared Mahalanobis distance of `z` to the predicted measurement.
pub fn mahalanobis_sq(cov: &StateCovariance, z: &DVector<f64>, lin: &Linearized) -> Option<f64> {
    let nu = lin.innovation(z);
    let s = lin.innovation_cov(cov);
    let ch = s.cholesky()?;
    Some(nu.dot(&ch.solve(&nu)))
}

/// Joseph-form Kalman update. The linearization must have been taken at
/// `mean`.
pub fn kalman_update(mean: &StateVector, cov: &StateCovariance, z: &DVector<f64>, lin: &Linearized) -> Option<KalmanUpdate> {
    let nu = lin.innovation(z);
    let s = lin.innovation_cov(cov);
    let (likelihood, d2) = gaussian_density(&nu, &s)?;
    let ch = s.cholesky()?;
    let p = DMatrix::from_column_slice(STATE_DIM, STATE_DIM, cov.as_slice());
    let pht = &p * lin.h.transpose();
    // K = P Hᵀ S⁻¹, solved as S Kᵀ = H P
    let k = ch.solve(&pht.transpose()).transpose();
    let x = DVector::from_column_slice(mean.as_slice()) + &k * nu;
    let ikh = DMatrix::identity(STATE_DIM, STATE_DIM) - &k * &lin.h;
    let joseph = &ikh * p * ikh.transpose() + &k * &lin.r * k.transpose();
    let cov = symmetrize(&StateCovariance::from_column_slice(joseph.as_slice()));
    Some(KalmanUpdate {
        mean: StateVector::from_column_slice(x.as_slice()),
        cov,
        likelihood,
        mahalanobis_sq: d2,
    })
}
