//! Seeded Monte-Carlo runs and their CSV/JSON outputs.
//!
//! Trial `t` draws everything from a ChaCha8 stream seeded with
//! `master_seed + t`, and trial results are reduced in trial order, so the
//! output does not depend on the number of worker threads.

use std::io::Write;

use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{JdtcError, Result};
use crate::metrics::{score_scan, JpmWeights, ScanScore};
use crate::rfs::{POS_X, POS_Y};
use crate::scenario::ScenarioConfig;
use crate::sensing::simulate_measurements;

pub const CSV_HEADER: &str = "scan,true_n,mean_est_n,mean_ospa,mean_miscls,mean_jpm,trials,failures";
pub const RAW_HEADER: &str = "trial,seed,scan,true_n,est_n,ospa,miscls,jpm";

/// Flag carried by every manifest: the JPM here is not the original study's.
pub const JPM_NOTE: &str = "jpm = alpha_max * misclassification + beta_max * ospa^2 + gamma * |cardinality error|; \
                            a stand-in, not the metric of the original study";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub scores: Vec<ScanScore>,
    /// Set when the trial diverged or errored; its scores are then excluded.
    pub failure: Option<String>,
}

/// One row of the aggregated table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub scan: u32,
    pub true_n: usize,
    pub mean_est_n: f64,
    pub mean_ospa: f64,
    pub mean_miscls: f64,
    pub mean_jpm: f64,
    /// Trials that contributed to the means.
    pub trials: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloResult {
    pub rows: Vec<AggregateRow>,
    pub trials: Vec<TrialRecord>,
}

/// Runs one trial of the configured algorithm.
pub fn run_trial(cfg: &ScenarioConfig, trial: usize) -> TrialRecord {
    let seed = cfg.seed.wrapping_add(trial as u64);
    let mut record = TrialRecord {
        trial,
        seed,
        scores: Vec::with_capacity(cfg.horizon as usize),
        failure: None,
    };
    let weights = JpmWeights::from_coefficients(&cfg.coefficients);
    let mut tracker = match cfg.build_tracker() {
        Ok(t) => t,
        Err(e) => {
            record.failure = Some(e.to_string());
            return record;
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 1..=cfg.horizon {
        let truth = cfg.truth_at(k);
        let meas = simulate_measurements(&truth, &cfg.sensors, &mut rng);
        let estimates = match tracker.step(k, &meas) {
            Ok(e) => e,
            Err(e) => {
                record.failure = Some(format!("scan {k}: {e}"));
                return record;
            }
        };
        if estimates.iter().any(|e| e.state.iter().any(|v| !v.is_finite())) {
            record.failure = Some(format!("scan {k}: non-finite state estimate"));
            return record;
        }
        let t: Vec<_> = truth.iter().map(|t| (Vector2::new(t.state[POS_X], t.state[POS_Y]), t.class)).collect();
        let e: Vec<_> = estimates.iter().map(|e| (Vector2::new(e.state[POS_X], e.state[POS_Y]), e.class)).collect();
        record.scores.push(score_scan(k, &t, &e, &cfg.ospa, &weights));
    }
    record
}

/// Mean curves over the successful trials, in trial order.
pub fn aggregate(cfg: &ScenarioConfig, trials: &[TrialRecord]) -> Vec<AggregateRow> {
    let ok: Vec<&TrialRecord> = trials.iter().filter(|t| t.failure.is_none()).collect();
    let failures = trials.len() - ok.len();
    let n = ok.len() as f64;
    (1..=cfg.horizon)
        .map(|k| {
            let s = (k - 1) as usize;
            let mean = |f: &dyn Fn(&ScanScore) -> f64| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|t| f(&t.scores[s])).sum::<f64>() / n
                }
            };
            AggregateRow {
                scan: k,
                true_n: cfg.truth_at(k).len(),
                mean_est_n: mean(&|x| x.est_n as f64),
                mean_ospa: mean(&|x| x.ospa),
                mean_miscls: mean(&|x| x.miscls),
                mean_jpm: mean(&|x| x.jpm),
                trials: ok.len(),
                failures,
            }
        })
        .collect()
}

/// Runs `cfg.trials` trials on `threads` workers (all cores when `None`).
pub fn run_monte_carlo(cfg: &ScenarioConfig, threads: Option<usize>) -> Result<MonteCarloResult> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(JdtcError::Config("threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| JdtcError::Internal(format!("thread pool: {e}")))?;
    let trials: Vec<TrialRecord> = pool.install(|| (0..cfg.trials).into_par_iter().map(|t| run_trial(cfg, t)).collect());
    Ok(MonteCarloResult {
        rows: aggregate(cfg, &trials),
        trials,
    })
}

pub fn write_csv<W: Write>(rows: &[AggregateRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.scan, r.true_n, r.mean_est_n, r.mean_ospa, r.mean_miscls, r.mean_jpm, r.trials, r.failures
        )?;
    }
    Ok(())
}

/// Per-trial, per-scan scores. Failed trials keep the scans they finished.
pub fn write_raw<W: Write>(trials: &[TrialRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{RAW_HEADER}")?;
    for t in trials {
        for s in &t.scores {
            writeln!(w, "{},{},{},{},{},{},{},{}", t.trial, t.seed, s.k, s.true_n, s.est_n, s.ospa, s.miscls, s.jpm)?;
        }
    }
    Ok(())
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub scenario: String,
    pub algorithm: String,
    pub seed: u64,
    pub trials: usize,
    pub failures: usize,
    pub jpm_note: String,
    pub config: ScenarioConfig,
}

impl Manifest {
    pub fn new(cfg: &ScenarioConfig, result: &MonteCarloResult) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            scenario: cfg.name.clone(),
            algorithm: cfg.algorithm.name().to_string(),
            seed: cfg.seed,
            trials: cfg.trials,
            failures: result.trials.iter().filter(|t| t.failure.is_some()).count(),
            jpm_note: JPM_NOTE.to_string(),
            config: cfg.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Algorithm;

    fn small(algo: Algorithm, trials: usize) -> ScenarioConfig {
        let mut c = ScenarioConfig::example1();
        c.trials = trials;
        c.seed = 42;
        c.algorithm = algo;
        c
    }

    fn csv(rows: &[AggregateRow]) -> Vec<u8> {
        let mut out = Vec::new();
        write_csv(rows, &mut out).unwrap();
        out
    }

    #[test]
    fn repeated_runs_are_identical() {
        for algo in [Algorithm::CjdeLmb, Algorithm::Etd, Algorithm::Dte] {
            let c = small(algo, 1);
            let a = run_monte_carlo(&c, Some(1)).unwrap();
            let b = run_monte_carlo(&c, Some(1)).unwrap();
            assert_eq!(csv(&a.rows), csv(&b.rows));
        }
    }

    #[test]
    fn two_trials_average_their_curves() {
        let c = small(Algorithm::CjdeLmb, 2);
        let r = run_monte_carlo(&c, Some(2)).unwrap();
        let (a, b) = (&r.trials[0].scores, &r.trials[1].scores);
        for (s, row) in r.rows.iter().enumerate() {
            assert_eq!(row.mean_ospa, (a[s].ospa + b[s].ospa) / 2.0);
            assert_eq!(row.mean_jpm, (a[s].jpm + b[s].jpm) / 2.0);
            assert_eq!(row.mean_est_n, (a[s].est_n + b[s].est_n) as f64 / 2.0);
            assert_eq!(row.trials, 2);
        }
        assert_eq!(r.trials[1].seed, 43);
    }

    #[test]
    fn failed_trials_are_excluded_and_counted() {
        let c = small(Algorithm::Etd, 3);
        let mut trials: Vec<TrialRecord> = (0..3).map(|t| run_trial(&c, t)).collect();
        trials[1].failure = Some("diverged".into());
        let rows = aggregate(&c, &trials);
        for (s, row) in rows.iter().enumerate() {
            assert_eq!((row.trials, row.failures), (2, 1));
            assert_eq!(row.mean_ospa, (trials[0].scores[s].ospa + trials[2].scores[s].ospa) / 2.0);
        }
    }

    #[test]
    fn csv_schema() {
        let c = small(Algorithm::Dte, 1);
        let r = run_monte_carlo(&c, None).unwrap();
        let text = String::from_utf8(csv(&r.rows)).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert_eq!(lines.count(), 30);
        let m = Manifest::new(&c, &r);
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"jpm_note\""));
        assert_eq!(serde_json::from_str::<Manifest>(&json).unwrap(), m);
    }

    #[test]
    fn noise_free_run_converges() {
        let mut c = ScenarioConfig::example1();
        c.sensors.radar.p_d = 1.0;
        c.sensors.radar.clutter_rate = Some(1e-9);
        c.sensors.radar.noise_cov = [[1e-6, 0.0], [0.0, 1e-6]];
        let r = run_trial(&c, 0);
        assert!(r.failure.is_none());
        assert!(r.scores[9].ospa < 1.0, "ospa at k=10: {}", r.scores[9].ospa);
    }
}
