//! Shared fixtures for the kernel benchmarks.

use bahadur_core::{CoefficientSchedule, EmpiricalSample, InnovationModel, PathSimulator, TruncationPolicy};

pub fn gaussian() -> InnovationModel {
    InnovationModel::gaussian(1.0).expect("unit scale")
}

pub fn lrd(beta: f64) -> CoefficientSchedule {
    CoefficientSchedule::Lrd { beta, l_const: 1.0, l_log_power: 0.0 }
}

pub fn simulator(schedule: CoefficientSchedule, n: usize) -> PathSimulator {
    PathSimulator::new(schedule, gaussian(), n, &TruncationPolicy::default()).expect("valid schedule")
}

/// A linear-process sample with one-step-ahead locations.
pub fn lagged_sample(schedule: CoefficientSchedule, n: usize, seed: u64) -> EmpiricalSample {
    EmpiricalSample::from_path(&simulator(schedule, n).simulate(seed)).expect("finite path")
}
