//! Reference implementations for the integration tests. They share only
//! plain data types with the library: likelihoods, Kalman updates,
//! decision regions and hypothesis enumeration are written out here.

#![allow(dead_code)]

use std::f64::consts::PI;

use jdtc_core::rfs::{GaussianComponent, GaussianMixture, LmbDensity, PruneConfig, StateCovariance, StateVector, POS_X, POS_Y};
use jdtc_core::risk::RiskCoefficients;
use jdtc_core::sensing::{Measurements, Sensors};
use nalgebra::{DMatrix, DVector};

pub type Comp = (f64, StateVector, StateCovariance);

// ============================================================================
// Small Gaussian helpers
// ============================================================================

fn wrap(a: f64) -> f64 {
    let mut x = a % (2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    } else if x <= -PI {
        x += 2.0 * PI;
    }
    x
}

/// Observation row(s) linearized at `x`: (predicted z, H, R, angle rows).
struct Obs {
    z_hat: DVector<f64>,
    h: DMatrix<f64>,
    r: DMatrix<f64>,
    angles: Vec<usize>,
}

fn radar_obs(s: &Sensors) -> impl Fn(&StateVector) -> Obs + '_ {
    move |x| {
        let mut h = DMatrix::zeros(2, 6);
        h[(0, POS_X)] = 1.0;
        h[(1, POS_Y)] = 1.0;
        let n = s.radar.noise_cov;
        Obs {
            z_hat: DVector::from_vec(vec![x[POS_X], x[POS_Y]]),
            h,
            r: DMatrix::from_row_slice(2, 2, &[n[0][0], n[0][1], n[1][0], n[1][1]]),
            angles: vec![],
        }
    }
}

fn esm_obs(s: &Sensors, x: &StateVector) -> Obs {
    let dx = x[POS_X] - s.esm.position[0];
    let dy = x[POS_Y] - s.esm.position[1];
    let q = dx * dx + dy * dy;
    let mut h = DMatrix::zeros(1, 6);
    h[(0, POS_X)] = -dy / q;
    h[(0, POS_Y)] = dx / q;
    Obs {
        z_hat: DVector::from_element(1, dy.atan2(dx)),
        h,
        r: DMatrix::from_element(1, 1, s.esm.bearing_std.powi(2)),
        angles: vec![0],
    }
}

fn stack(a: Obs, b: Obs) -> Obs {
    let (p, q) = (a.z_hat.len(), b.z_hat.len());
    let mut z_hat = DVector::zeros(p + q);
    let mut h = DMatrix::zeros(p + q, 6);
    let mut r = DMatrix::zeros(p + q, p + q);
    for i in 0..p {
        z_hat[i] = a.z_hat[i];
        for c in 0..6 {
            h[(i, c)] = a.h[(i, c)];
        }
        for c in 0..p {
            r[(i, c)] = a.r[(i, c)];
        }
    }
    for i in 0..q {
        z_hat[p + i] = b.z_hat[i];
        for c in 0..6 {
            h[(p + i, c)] = b.h[(i, c)];
        }
        for c in 0..q {
            r[(p + i, p + c)] = b.r[(i, c)];
        }
    }
    let angles = a.angles.into_iter().chain(b.angles.into_iter().map(|i| i + p)).collect();
    Obs { z_hat, h, r, angles }
}

/// Textbook Kalman update: returns (likelihood, mean, cov).
fn kalman(m: &StateVector, p: &StateCovariance, z: &DVector<f64>, o: &Obs) -> (f64, StateVector, StateCovariance) {
    let pd = DMatrix::from_column_slice(6, 6, p.as_slice());
    let mut nu = z - &o.z_hat;
    for &a in &o.angles {
        nu[a] = wrap(nu[a]);
    }
    let s = &o.h * &pd * o.h.transpose() + &o.r;
    let s_inv = s.clone().try_inverse().expect("innovation covariance is invertible");
    let d2 = (nu.transpose() * &s_inv * &nu)[(0, 0)];
    let lik = (-0.5 * d2).exp() / ((2.0 * PI).powi(nu.len() as i32) * s.determinant()).sqrt();
    let k = &pd * o.h.transpose() * s_inv;
    let mean = DVector::from_column_slice(m.as_slice()) + &k * nu;
    let cov = (DMatrix::identity(6, 6) - &k * &o.h) * pd;
    (
        lik,
        StateVector::from_column_slice(mean.as_slice()),
        StateCovariance::from_column_slice(cov.as_slice()),
    )
}

fn mahalanobis(m: &StateVector, p: &StateCovariance, z: &DVector<f64>, o: &Obs) -> f64 {
    let pd = DMatrix::from_column_slice(6, 6, p.as_slice());
    let mut nu = z - &o.z_hat;
    for &a in &o.angles {
        nu[a] = wrap(nu[a]);
    }
    let _ = m;
    let s = &o.h * pd * o.h.transpose() + &o.r;
    (nu.transpose() * s.try_inverse().unwrap() * &nu)[(0, 0)]
}

/// Mean and covariance of weighted components (weights need not sum to 1).
pub fn moments(comps: &[Comp]) -> (StateVector, StateCovariance) {
    let w: f64 = comps.iter().map(|c| c.0).sum();
    let mean = comps.iter().fold(StateVector::zeros(), |a, c| a + c.1 * (c.0 / w));
    let cov = comps.iter().fold(StateCovariance::zeros(), |a, c| {
        let d = c.1 - mean;
        a + (c.2 + d * d.transpose()) * (c.0 / w)
    });
    (mean, cov)
}

fn radar_kappa(s: &Sensors) -> f64 {
    let g = &s.radar.region;
    let area = (g.x_max - g.x_min) * (g.y_max - g.y_min);
    s.radar.clutter_rate.unwrap_or(s.radar.clutter_density * area) / area
}

fn esm_kappa(s: &Sensors) -> f64 {
    s.esm.clutter_rate / (2.0 * PI * s.esm.confusion[0].len() as f64)
}

// ============================================================================
// Exhaustive decision-conditioned update for micro-instances
// ============================================================================

/// One predicted track: existence, class probabilities and per class a
/// flattened mixture (model probability times component weight).
#[derive(Debug, Clone)]
pub struct MicroTrack {
    pub r: f64,
    pub class_probs: Vec<f64>,
    pub classes: Vec<Vec<Comp>>,
}

impl MicroTrack {
    pub fn from_density(density: &LmbDensity) -> Vec<MicroTrack> {
        density
            .tracks
            .iter()
            .map(|t| MicroTrack {
                r: t.existence,
                class_probs: t.density.class_probs.clone(),
                classes: t
                    .density
                    .classes
                    .iter()
                    .map(|c| {
                        c.models
                            .iter()
                            .flat_map(|md| md.mixture.components.iter().map(move |g| (md.prob * g.weight, g.mean, g.cov)))
                            .collect()
                    })
                    .collect(),
            })
            .collect()
    }

    fn marginal(&self) -> (StateVector, StateCovariance) {
        let all: Vec<Comp> = self
            .classes
            .iter()
            .zip(&self.class_probs)
            .flat_map(|(c, p)| c.iter().map(move |x| (x.0 * p, x.1, x.2)))
            .collect();
        moments(&all)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Opt {
    radar: Option<usize>,
    esm: Option<usize>,
}

struct OptResult {
    eta: Vec<f64>,
    /// Per class posterior mean given this option.
    class_means: Vec<StateVector>,
}

fn option_result(t: &MicroTrack, o: Opt, meas: &Measurements, s: &Sensors) -> OptResult {
    let q_r = 1.0 - s.radar.p_d;
    let q_e = if s.esm.enabled { 1.0 - s.esm.p_d } else { 1.0 };
    let mut eta = Vec::new();
    let mut class_means = Vec::new();
    for (j, comps) in t.classes.iter().enumerate() {
        if o.radar.is_none() && o.esm.is_none() {
            eta.push(q_r * q_e);
            class_means.push(moments(comps).0);
            continue;
        }
        let factor = match (o.radar, o.esm) {
            (Some(_), None) => s.radar.p_d * q_e / radar_kappa(s),
            (None, Some(e)) => q_r * s.esm.p_d * s.esm.confusion[j][meas.esm[e].declared] / esm_kappa(s),
            (Some(_), Some(e)) => {
                s.radar.p_d * s.esm.p_d * s.esm.confusion[j][meas.esm[e].declared] / (radar_kappa(s) * esm_kappa(s))
            }
            (None, None) => unreachable!(),
        };
        let mut post = Vec::new();
        for (w, m, p) in comps {
            let (z, ob) = match (o.radar, o.esm) {
                (Some(r), None) => (DVector::from_column_slice(meas.radar[r].as_slice()), radar_obs(s)(m)),
                (None, Some(e)) => (DVector::from_element(1, meas.esm[e].bearing), esm_obs(s, m)),
                (Some(r), Some(e)) => (
                    DVector::from_vec(vec![meas.radar[r][0], meas.radar[r][1], meas.esm[e].bearing]),
                    stack(radar_obs(s)(m), esm_obs(s, m)),
                ),
                (None, None) => unreachable!(),
            };
            let (lik, mp, pp) = kalman(m, p, &z, &ob);
            post.push((w * lik, mp, pp));
        }
        let mass: f64 = post.iter().map(|c| c.0).sum();
        eta.push(factor * mass);
        class_means.push(if mass > 0.0 { moments(&post).0 } else { moments(comps).0 });
    }
    OptResult { eta, class_means }
}

/// `argmin_i Σ_k (α_ik c_ik + β_ik ε_k) η_k P_k`, lower index on ties, with
/// `ε_k` the predicted class-k estimation cost about the marginal mean.
fn region(t: &MicroTrack, eta: &[f64], coeffs: &RiskCoefficients) -> usize {
    let (mbar, _) = t.marginal();
    let eps: Vec<f64> = t
        .classes
        .iter()
        .map(|c| {
            let (m, p) = moments(c);
            p.trace() + (m - mbar).norm_squared()
        })
        .collect();
    let j = eta.len();
    let cost = |i: usize| -> f64 {
        (0..j)
            .map(|k| (coeffs.alpha[i][k] * coeffs.cost[i][k] + coeffs.beta[i][k] * eps[k]) * eta[k] * t.class_probs[k])
            .sum()
    };
    let mut best = 0;
    for i in 1..j {
        if cost(i) < cost(best) {
            best = i;
        }
    }
    best
}

/// Per track: posterior existence, marginal mean, class probabilities.
#[derive(Debug, Clone)]
pub struct OracleTrack {
    pub r: f64,
    pub mean: StateVector,
    pub class_probs: Vec<f64>,
}

/// Enumerates every (label set, association) hypothesis admitted by the
/// decisions and accumulates the track marginals. `gates` are the radar and
/// ESM χ² thresholds applied around the class-marginal prediction.
pub fn exhaustive_update(
    tracks: &[MicroTrack],
    meas: &Measurements,
    decisions: &[usize],
    sensors: &Sensors,
    coeffs: &RiskCoefficients,
    gates: (f64, f64),
) -> Vec<OracleTrack> {
    // per track: the options, their results and admissibility
    let mut per_track: Vec<Vec<(Opt, OptResult, bool)>> = Vec::new();
    for (t, tr) in tracks.iter().enumerate() {
        let (mbar, pbar) = tr.marginal();
        let radar_ok: Vec<usize> = (0..meas.radar.len())
            .filter(|&i| mahalanobis(&mbar, &pbar, &DVector::from_column_slice(meas.radar[i].as_slice()), &radar_obs(sensors)(&mbar)) <= gates.0)
            .collect();
        let esm_ok: Vec<usize> = if sensors.esm.enabled {
            (0..meas.esm.len())
                .filter(|&i| mahalanobis(&mbar, &pbar, &DVector::from_element(1, meas.esm[i].bearing), &esm_obs(sensors, &mbar)) <= gates.1)
                .collect()
        } else {
            vec![]
        };
        let mut opts = vec![Opt { radar: None, esm: None }];
        opts.extend(radar_ok.iter().map(|&r| Opt { radar: Some(r), esm: None }));
        opts.extend(esm_ok.iter().map(|&e| Opt { radar: None, esm: Some(e) }));
        for &r in &radar_ok {
            for &e in &esm_ok {
                opts.push(Opt { radar: Some(r), esm: Some(e) });
            }
        }
        let mut list = Vec::new();
        for o in opts {
            let res = option_result(tr, o, meas, sensors);
            let eta_bar: f64 = res.eta.iter().zip(&tr.class_probs).map(|(e, p)| e * p).sum();
            let miss = o.radar.is_none() && o.esm.is_none();
            if !miss && !(eta_bar > 0.0) {
                continue;
            }
            let ok = miss || region(tr, &res.eta, coeffs) == decisions[t];
            list.push((o, res, ok));
        }
        per_track.push(list);
    }

    let n = tracks.len();
    let mut r_acc = vec![0.0; n];
    let mut mean_acc = vec![StateVector::zeros(); n];
    let mut class_acc: Vec<Vec<f64>> = tracks.iter().map(|t| vec![0.0; t.class_probs.len()]).collect();
    let mut total = 0.0;

    // choice per track: (option index, exists)
    let mut choice = vec![(0usize, false); n];
    fn recurse(
        t: usize,
        tracks: &[MicroTrack],
        per_track: &[Vec<(Opt, OptResult, bool)>],
        choice: &mut Vec<(usize, bool)>,
        visit: &mut dyn FnMut(&[(usize, bool)]),
    ) {
        if t == tracks.len() {
            visit(choice);
            return;
        }
        for (oi, (o, _, ok)) in per_track[t].iter().enumerate() {
            if !ok {
                continue;
            }
            let clash = choice[..t].iter().enumerate().any(|(u, &(ou, _))| {
                let other = per_track[u][ou].0;
                (o.radar.is_some() && o.radar == other.radar) || (o.esm.is_some() && o.esm == other.esm)
            });
            if clash {
                continue;
            }
            let miss = o.radar.is_none() && o.esm.is_none();
            let exists: &[bool] = if miss { &[false, true] } else { &[true] };
            for &e in exists {
                choice[t] = (oi, e);
                recurse(t + 1, tracks, per_track, choice, visit);
            }
        }
    }
    let mut visit = |c: &[(usize, bool)]| {
        let mut w = 1.0;
        for (t, &(oi, e)) in c.iter().enumerate() {
            let tr = &tracks[t];
            if e {
                let eta = &per_track[t][oi].1.eta;
                w *= tr.r * eta.iter().zip(&tr.class_probs).map(|(a, b)| a * b).sum::<f64>();
            } else {
                w *= 1.0 - tr.r;
            }
        }
        total += w;
        for (t, &(oi, e)) in c.iter().enumerate() {
            if !e {
                continue;
            }
            let tr = &tracks[t];
            let res = &per_track[t][oi].1;
            let eta_bar: f64 = res.eta.iter().zip(&tr.class_probs).map(|(a, b)| a * b).sum();
            r_acc[t] += w;
            for j in 0..tr.class_probs.len() {
                let pj = tr.class_probs[j] * res.eta[j] / eta_bar;
                class_acc[t][j] += w * pj;
                mean_acc[t] += res.class_means[j] * (w * pj);
            }
        }
    };
    recurse(0, tracks, &per_track, &mut choice, &mut visit);

    (0..n)
        .map(|t| OracleTrack {
            r: r_acc[t] / total,
            mean: if r_acc[t] > 0.0 { mean_acc[t] / r_acc[t] } else { StateVector::zeros() },
            class_probs: class_acc[t].iter().map(|c| if r_acc[t] > 0.0 { c / r_acc[t] } else { 0.0 }).collect(),
        })
        .collect()
}

// ============================================================================
// Plain single-class LMB filter (radar only)
// ============================================================================

#[derive(Debug, Clone)]
pub struct PlainTrack {
    pub label: (u32, u32),
    pub r: f64,
    pub comps: Vec<Comp>,
}

/// GM-LMB filter with one motion model, linear radar and exhaustive
/// association over gated measurements.
pub struct PlainLmb {
    pub transition: StateCovariance,
    pub process_noise: StateCovariance,
    pub sensors: Sensors,
    pub p_s: f64,
    pub gate: f64,
    pub births: Vec<(f64, StateVector, StateCovariance)>,
    pub prune: PruneConfig,
    pub track_prune: f64,
    pub tracks: Vec<PlainTrack>,
}

impl PlainLmb {
    pub fn step(&mut self, k: u32, z: &[nalgebra::Vector2<f64>]) {
        let f = self.transition;
        let mut pred: Vec<PlainTrack> = self
            .tracks
            .iter()
            .map(|t| PlainTrack {
                label: t.label,
                r: t.r * self.p_s,
                comps: t.comps.iter().map(|(w, m, p)| (*w, f * m, f * p * f.transpose() + self.process_noise)).collect(),
            })
            .collect();
        for (i, (r, m, p)) in self.births.iter().enumerate() {
            pred.push(PlainTrack {
                label: (k, i as u32),
                r: *r,
                comps: vec![(1.0, *m, *p)],
            });
        }

        let p_d = self.sensors.radar.p_d;
        let kappa = radar_kappa(&self.sensors);
        let obs = radar_obs(&self.sensors);
        // options per track: None = miss, Some(i) = measurement i
        let mut options: Vec<Vec<(Option<usize>, f64, Vec<Comp>)>> = Vec::new();
        for t in &pred {
            let (mbar, pbar) = moments(&t.comps);
            let mut list = vec![(None, 1.0 - p_d, t.comps.clone())];
            for (i, zi) in z.iter().enumerate() {
                let zv = DVector::from_column_slice(zi.as_slice());
                if mahalanobis(&mbar, &pbar, &zv, &obs(&mbar)) > self.gate {
                    continue;
                }
                let post: Vec<Comp> = t
                    .comps
                    .iter()
                    .map(|(w, m, p)| {
                        let (lik, mp, pp) = kalman(m, p, &zv, &obs(m));
                        (w * lik, mp, pp)
                    })
                    .collect();
                let eta = p_d / kappa * post.iter().map(|c| c.0).sum::<f64>();
                if eta > 0.0 {
                    list.push((Some(i), eta, post));
                }
            }
            options.push(list);
        }

        let n = pred.len();
        let mut mass: Vec<Vec<f64>> = options.iter().map(|o| vec![0.0; o.len()]).collect();
        let mut total = 0.0;
        let mut choice = vec![0usize; n];
        fn recurse(t: usize, opts: &[Vec<(Option<usize>, f64, Vec<Comp>)>], choice: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
            if t == opts.len() {
                visit(choice);
                return;
            }
            for (oi, (zi, _, _)) in opts[t].iter().enumerate() {
                if zi.is_some() && choice[..t].iter().enumerate().any(|(u, &ou)| opts[u][ou].0 == *zi) {
                    continue;
                }
                choice[t] = oi;
                recurse(t + 1, opts, choice, visit);
            }
        }
        let mut visit = |c: &[usize]| {
            let w: f64 = c
                .iter()
                .enumerate()
                .map(|(t, &oi)| {
                    let r = pred[t].r;
                    if oi == 0 {
                        1.0 - r + r * (1.0 - p_d)
                    } else {
                        r * options[t][oi].1
                    }
                })
                .product();
            total += w;
            for (t, &oi) in c.iter().enumerate() {
                mass[t][oi] += w;
            }
        };
        recurse(0, &options, &mut choice, &mut visit);

        let mut out = Vec::new();
        for (t, tr) in pred.iter().enumerate() {
            let r = tr.r;
            let miss_r = r * (1.0 - p_d) / (1.0 - r + r * (1.0 - p_d));
            let m: Vec<f64> = mass[t]
                .iter()
                .enumerate()
                .map(|(oi, w)| w / total * if oi == 0 { miss_r } else { 1.0 })
                .collect();
            let r_post: f64 = m.iter().sum();
            let mut comps = Vec::new();
            for ((_, _, post), w) in options[t].iter().zip(&m) {
                if *w == 0.0 {
                    continue;
                }
                let s: f64 = post.iter().map(|c| c.0).sum();
                comps.extend(post.iter().map(|(cw, cm, cp)| GaussianComponent::new(w * cw / s, *cm, *cp)));
            }
            let mut gm = GaussianMixture::new(comps);
            gm.normalize();
            let gm = jdtc_core::rfs::prune_and_merge(&gm, self.prune.prune_threshold, self.prune.merge_distance, self.prune.max_components);
            if r_post >= self.track_prune {
                out.push(PlainTrack {
                    label: tr.label,
                    r: r_post.clamp(0.0, 1.0),
                    comps: gm.components.iter().map(|c| (c.weight, c.mean, c.cov)).collect(),
                });
            }
        }
        self.tracks = out;
    }
}
