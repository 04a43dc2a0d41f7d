use num_complex::Complex64;

use super::solve::{assemble, NetworkSolution};
use super::FeederModel;
use crate::error::{Error, Result};

/// Sweep stops once no bus voltage moves by more than this (pu).
pub const SWEEP_TOLERANCE: f64 = 1e-10;
pub const SWEEP_ITERATION_CAP: usize = 100;

/// Converged steady state plus the constant-admittance load equivalents
/// used during transients.
#[derive(Debug, Clone)]
pub struct PowerFlow {
    pub solution: NetworkSolution,
    /// Per bus, `conj(S) / |V|^2` of the aggregated load.
    pub load_admittances: Vec<Complex64>,
    pub iterations: usize,
}

/// Backward/forward sweep with constant-power loads scaled by `load_scale`
/// and a constant-power PV injection at the PV bus.
pub fn init_power_flow(model: &FeederModel, pv_power: Complex64, load_scale: f64) -> Result<PowerFlow> {
    if !(load_scale.is_finite() && load_scale >= 0.0) {
        return Err(Error::Invalid(format!("load_scale must be >= 0, got {load_scale}")));
    }
    if !(pv_power.re.is_finite() && pv_power.im.is_finite()) {
        return Err(Error::Invalid("PV power must be finite".into()));
    }

    let n = model.bus_count();
    let emf = Complex64::new(model.source_emf, 0.0);
    let z = model.branch_impedances_pu();
    let demand = model.nominal_demand(load_scale);
    let mut net_draw = demand.clone();
    net_draw[model.pv_bus] -= pv_power;

    let mut v = vec![emf; n];
    let mut through = vec![Complex64::new(0.0, 0.0); n];
    let mut last_delta = f64::INFINITY;
    for iteration in 1..=SWEEP_ITERATION_CAP {
        // Backward: accumulate bus currents toward the source.
        for (bus, acc) in through.iter_mut().enumerate() {
            *acc = (net_draw[bus] / v[bus]).conj();
        }
        for &bus in model.order().iter().rev() {
            if let Some((up, _)) = model.parent(bus) {
                let i = through[bus];
                through[up] += i;
            }
        }
        // Forward: voltage drops away from the source.
        let mut next = vec![Complex64::new(0.0, 0.0); n];
        next[0] = emf - model.source_impedance * through[0];
        for &bus in &model.order()[1..] {
            let (up, branch) = model.parent(bus).expect("non-source bus has a parent");
            next[bus] = next[up] - z[branch] * through[bus];
        }
        last_delta = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        v = next;
        if !last_delta.is_finite() || v.iter().any(|x| x.norm() < 1e-6) {
            break;
        }
        if last_delta < SWEEP_TOLERANCE {
            let pv_current = (pv_power / v[model.pv_bus]).conj();
            let load_admittances = demand
                .iter()
                .zip(&v)
                .map(|(s, v)| s.conj() / v.norm_sqr())
                .collect();
            let solution = assemble(model, v, emf, pv_current, &demand);
            return Ok(PowerFlow { solution, load_admittances, iterations: iteration });
        }
    }
    Err(Error::NonConvergence { iterations: SWEEP_ITERATION_CAP, last_delta })
}
