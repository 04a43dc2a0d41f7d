//! Case-study scenarios, sweeps, metrics and file output.

mod metrics;
mod output;
mod run;
mod spec;
mod sweep;

pub use metrics::{compute_metrics, BusMetrics, MetricsSummary};
pub use output::{check_outputs, write_outputs, CheckReport, CSV_NAME, ECHO_NAME, SUMMARY_NAME};
pub use run::{
    controller_session, run_scenario, run_scenario_with, run_split_in_memory, run_split_over, RunOptions,
};
pub use spec::{load_scenario, FeederRef, MeasurementCfg, RunMode, ScenarioSpec, SweepParam};
pub use sweep::{run_sweep, write_sweep_outputs, SweepPoint, SweepSpec, SWEEP_SUMMARY_NAME};

use crate::dynamics::{StepRecord, World};
use crate::netmodel::MeasurementPoint;
use crate::pvplant::InverterMode;

/// Recorded trajectory of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub spec: ScenarioSpec,
    /// Hex SHA-256 of the canonical scenario.
    pub digest: String,
    pub dt: f64,
    /// Steps the run was meant to take.
    pub step_count: usize,
    /// Bus names at start, middle and end.
    pub buses: [String; 3],
    pub steps: Vec<StepRecord>,
    /// False when the run stopped early.
    pub valid: bool,
}

impl RunResult {
    pub fn from_world(world: &World, spec: &ScenarioSpec, steps: Vec<StepRecord>, step_count: usize, valid: bool) -> Self {
        let model = world.model();
        let buses = MeasurementPoint::ALL.map(|p| model.buses[world.measurement_bus(p)].clone());
        Self {
            spec: spec.clone(),
            digest: spec.digest_hex(),
            dt: world.config().dt,
            step_count,
            buses,
            steps,
            valid,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.t).collect()
    }

    pub fn rocof(&self, point: MeasurementPoint) -> Vec<f64> {
        self.steps.iter().map(|s| s.rocof[point.index()]).collect()
    }

    pub fn voltage(&self, point: MeasurementPoint) -> Vec<f64> {
        self.steps.iter().map(|s| s.v_mag[point.index()]).collect()
    }

    pub fn frequency(&self, point: MeasurementPoint) -> Vec<f64> {
        self.steps.iter().map(|s| s.f_local[point.index()]).collect()
    }

    pub fn modes(&self) -> Vec<InverterMode> {
        self.steps.iter().map(|s| s.mode).collect()
    }

    /// Step index at which the online relay at `point` tripped.
    pub fn online_trip_index(&self, point: MeasurementPoint) -> Option<usize> {
        self.steps.iter().position(|s| s.relay_tripped[point.index()])
    }
}
