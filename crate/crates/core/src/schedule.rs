//! Step-size and value-bound schedules, and clock-major indexing.

use crate::error::{Error, Result};

/// `eta(t) = eta0 / sqrt(t - drift_r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    pub eta0: f64,
    pub drift_r: u64,
}

impl StepSchedule {
    pub fn new(eta0: f64) -> Self {
        StepSchedule { eta0, drift_r: 0 }
    }

    pub fn with_drift(mut self, drift_r: u64) -> Self {
        self.drift_r = drift_r;
        self
    }
}

/// Step size for the 1-based global update index `t`.
pub fn step_size(t: u64, schedule: &StepSchedule) -> Result<f64> {
    if t == 0 {
        return Err(Error::ClockIndexZero(t));
    }
    if t <= schedule.drift_r {
        return Err(Error::DriftExceedsIndex { t, drift: schedule.drift_r });
    }
    Ok(schedule.eta0 / ((t - schedule.drift_r) as f64).sqrt())
}

/// VAP value bound `v0 / sqrt(t)`.
pub fn vap_threshold(t: u64, v0: f64) -> Result<f64> {
    if t == 0 {
        return Err(Error::ClockIndexZero(t));
    }
    if v0.is_nan() || v0 <= 0.0 {
        return Err(Error::Config(format!("v0 must be positive, got {v0}")));
    }
    Ok(v0 / (t as f64).sqrt())
}

/// Maps the clock-major index `t` to `(worker, clock) = (t mod P, t / P)`.
pub fn clock_major_index(t: u64, workers: usize) -> Result<(usize, u64)> {
    if workers == 0 {
        return Err(Error::NoWorkers);
    }
    let p = workers as u64;
    Ok(((t % p) as usize, t / p))
}

/// Inverse of [`clock_major_index`]: `clock * P + worker`.
pub fn clock_major_inverse(worker: usize, clock: u64, workers: usize) -> Result<u64> {
    if workers == 0 {
        return Err(Error::NoWorkers);
    }
    if worker >= workers {
        return Err(Error::Config(format!("worker {worker} out of range for P = {workers}")));
    }
    Ok(clock * workers as u64 + worker as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn step_size_examples() {
        let s = StepSchedule::new(0.1);
        assert_eq!(step_size(1, &s).unwrap(), 0.1);
        assert_eq!(step_size(4, &s).unwrap(), 0.05);
        assert_eq!(step_size(100, &StepSchedule::new(1.0)).unwrap(), 0.1);
        assert_eq!(step_size(0, &s), Err(Error::ClockIndexZero(0)));
    }

    #[test]
    fn drifted_step_size() {
        let s = StepSchedule::new(1.0).with_drift(3);
        assert_eq!(step_size(7, &s).unwrap(), 0.5);
        assert!(step_size(3, &s).is_err());
    }

    #[test]
    fn vap_threshold_examples() {
        assert_eq!(vap_threshold(1, 0.5).unwrap(), 0.5);
        assert_eq!(vap_threshold(25, 0.5).unwrap(), 0.1);
        assert_eq!(vap_threshold(4, 1.0).unwrap(), 0.5);
        assert!(vap_threshold(0, 1.0).is_err());
    }

    #[test]
    fn clock_major_examples() {
        assert_eq!(clock_major_index(0, 4).unwrap(), (0, 0));
        assert_eq!(clock_major_index(5, 4).unwrap(), (1, 1));
        assert_eq!(clock_major_index(7, 1).unwrap(), (0, 7));
        assert_eq!(clock_major_index(3, 0), Err(Error::NoWorkers));
    }

    #[test]
    fn clock_major_round_trip_exhaustive_small() {
        for p in 1..=64usize {
            for t in (0..1_000_000u64).step_by(997) {
                let (w, c) = clock_major_index(t, p).unwrap();
                assert_eq!(clock_major_inverse(w, c, p).unwrap(), t);
            }
        }
    }

    proptest! {
        #[test]
        fn schedules_strictly_decrease(t in 1u64..10_000_000, eta in 1e-6f64..10.0) {
            let s = StepSchedule::new(eta);
            prop_assert!(step_size(t + 1, &s).unwrap() < step_size(t, &s).unwrap());
            prop_assert!(vap_threshold(t + 1, eta).unwrap() < vap_threshold(t, eta).unwrap());
        }

        #[test]
        fn clock_major_round_trips(t in 0u64..1_000_000, p in 1usize..=64) {
            let (w, c) = clock_major_index(t, p).unwrap();
            prop_assert!(w < p);
            prop_assert_eq!(clock_major_inverse(w, c, p).unwrap(), t);
        }
    }
}
