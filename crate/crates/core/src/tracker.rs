//! A common scan-by-scan interface over the CJDE-LMB filter and the baselines.

use crate::baselines::{DteTracker, EtdTracker};
use crate::error::Result;
use crate::filter::{CjdeLmbFilter, Estimate};
use crate::sensing::Measurements;

pub trait Tracker: Send {
    /// Processes scan `k` and returns the reported tracks.
    fn step(&mut self, k: u32, meas: &Measurements) -> Result<Vec<Estimate>>;
}

impl Tracker for CjdeLmbFilter {
    fn step(&mut self, k: u32, meas: &Measurements) -> Result<Vec<Estimate>> {
        CjdeLmbFilter::step(self, k, meas).map(|o| o.estimates)
    }
}

impl Tracker for EtdTracker {
    fn step(&mut self, k: u32, meas: &Measurements) -> Result<Vec<Estimate>> {
        Ok(EtdTracker::step(self, k, meas))
    }
}

impl Tracker for DteTracker {
    fn step(&mut self, k: u32, meas: &Measurements) -> Result<Vec<Estimate>> {
        Ok(DteTracker::step(self, k, meas))
    }
}
