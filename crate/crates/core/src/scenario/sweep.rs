use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::output::{to_json_pretty, write_atomic};
use super::{compute_metrics, run_scenario_with, write_outputs, MetricsSummary, RunOptions, RunResult, ScenarioSpec, SweepParam};
use crate::error::{Error, Result};

pub const SWEEP_SUMMARY_NAME: &str = "sweep_summary.json";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: ScenarioSpec,
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl SweepSpec {
    /// Validates every point up front so a bad value fails the whole sweep
    /// before any run starts.
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Invalid("sweep needs at least one value".into()));
        }
        let mut errs = Vec::new();
        for &v in &self.values {
            if let Err(e) = self.base.with_param(self.param, v).validate() {
                errs.push(format!("{}={v}: {e}", self.param));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }
}

#[derive(Debug)]
pub struct SweepPoint {
    pub value: f64,
    pub outcome: Result<(RunResult, MetricsSummary)>,
}

impl SweepPoint {
    pub fn dir_name(&self, param: SweepParam) -> String {
        format!("{param}_{}", self.value)
    }
}

/// Runs every sweep point in parallel. Results come back in input order.
pub fn run_sweep(sweep: &SweepSpec, opts: &RunOptions) -> Result<Vec<SweepPoint>> {
    sweep.validate()?;
    Ok(sweep
        .values
        .par_iter()
        .map(|&value| {
            let spec = sweep.base.with_param(sweep.param, value);
            let outcome = run_scenario_with(&spec, opts).and_then(|r| {
                let m = compute_metrics(&r, &spec.relay)?;
                Ok((r, m))
            });
            SweepPoint { value, outcome }
        })
        .collect())
}

#[derive(Serialize)]
struct SweepEntry<'a> {
    value: f64,
    dir: Option<String>,
    error: Option<String>,
    metrics: Option<&'a MetricsSummary>,
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    param: SweepParam,
    points: Vec<SweepEntry<'a>>,
}

/// Writes one output directory per successful point plus an overall
/// summary. Returns the per-point directories.
pub fn write_sweep_outputs(param: SweepParam, points: &[SweepPoint], dir: &Path) -> Result<Vec<Option<PathBuf>>> {
    fs::create_dir_all(dir)?;
    let mut dirs = Vec::with_capacity(points.len());
    let mut entries = Vec::with_capacity(points.len());
    for p in points {
        match &p.outcome {
            Ok((r, m)) => {
                let name = p.dir_name(param);
                let sub = dir.join(&name);
                write_outputs(r, m, &sub)?;
                dirs.push(Some(sub));
                entries.push(SweepEntry { value: p.value, dir: Some(name), error: None, metrics: Some(m) });
            }
            Err(e) => {
                dirs.push(None);
                entries.push(SweepEntry { value: p.value, dir: None, error: Some(e.to_string()), metrics: None });
            }
        }
    }
    write_atomic(dir, SWEEP_SUMMARY_NAME, &to_json_pretty(&SweepSummary { param, points: entries })?)?;
    Ok(dirs)
}
