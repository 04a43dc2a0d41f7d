use nalgebra::{DMatrix, DVector, LU};
use num_complex::Complex64;

use super::FeederModel;
use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Phasor state of the feeder at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSolution {
    pub bus_voltages: Vec<Complex64>,
    /// Per model branch, flowing from the source side toward the far side.
    pub branch_currents: Vec<Complex64>,
    /// Current delivered by the source EMF into the source bus.
    pub source_current: Complex64,
    /// Net complex power injected into the network at each bus by the
    /// source, the PV plant and the loads (loads count negative).
    pub injections: Vec<Complex64>,
    /// PV injected current at the PV bus.
    pub pv_current: Complex64,
    /// Source EMF this solution was computed for.
    pub source_emf: Complex64,
}

impl NetworkSolution {
    /// Electrical power delivered by the source EMF (pu).
    pub fn source_power(&self) -> Complex64 {
        self.source_emf * self.source_current.conj()
    }

    pub fn pv_power(&self, model: &FeederModel) -> Complex64 {
        self.bus_voltages[model.pv_bus] * self.pv_current.conj()
    }

    /// Worst per-bus mismatch between the injected power and the power
    /// leaving the bus through its branches (pu).
    pub fn power_balance_residual(&self, model: &FeederModel) -> f64 {
        let mut outflow = vec![ZERO; model.bus_count()];
        for (bus, parent) in (0..model.bus_count()).filter_map(|b| model.parent(b).map(|p| (b, p))) {
            let (up, branch) = parent;
            let i = self.branch_currents[branch];
            outflow[up] += i;
            outflow[bus] -= i;
        }
        (0..model.bus_count())
            .map(|b| (self.injections[b] - self.bus_voltages[b] * outflow[b].conj()).norm())
            .fold(0.0, f64::max)
    }
}

/// Assembles a solution from bus voltages: branch currents follow from the
/// voltage drops, injections from the external elements at each bus.
pub(super) fn assemble(
    model: &FeederModel,
    voltages: Vec<Complex64>,
    source_emf: Complex64,
    pv_current: Complex64,
    demand: &[Complex64],
) -> NetworkSolution {
    let z = model.branch_impedances_pu();
    let mut branch_currents = vec![ZERO; model.branches.len()];
    for bus in 0..model.bus_count() {
        if let Some((up, branch)) = model.parent(bus) {
            branch_currents[branch] = (voltages[up] - voltages[bus]) / z[branch];
        }
    }
    let source_current = (source_emf - voltages[0]) / model.source_impedance;
    let mut injections: Vec<Complex64> = demand.iter().map(|s| -s).collect();
    injections[0] += voltages[0] * source_current.conj();
    injections[model.pv_bus] += voltages[model.pv_bus] * pv_current.conj();
    NetworkSolution {
        bus_voltages: voltages,
        branch_currents,
        source_current,
        injections,
        pv_current,
        source_emf,
    }
}

/// Factorized nodal network with frozen constant-admittance loads.
///
/// The admittance matrix never changes during a transient, so it is
/// factored once and every step is a forward/back substitution.
#[derive(Debug, Clone)]
pub struct NetworkSolver {
    model: FeederModel,
    load_admittances: Vec<Complex64>,
    lu: LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl NetworkSolver {
    pub fn new(model: &FeederModel, load_admittances: &[Complex64]) -> Result<Self> {
        let n = model.bus_count();
        if load_admittances.len() != n {
            return Err(Error::Invalid(format!(
                "expected {n} load admittances, got {}",
                load_admittances.len()
            )));
        }
        let mut y = DMatrix::<Complex64>::zeros(n, n);
        for (branch, z) in model.branches.iter().zip(model.branch_impedances_pu()) {
            if z.norm() == 0.0 {
                return Err(Error::SingularNetwork);
            }
            let yb = z.inv();
            let (a, b) = (branch.from_bus, branch.to_bus);
            y[(a, a)] += yb;
            y[(b, b)] += yb;
            y[(a, b)] -= yb;
            y[(b, a)] -= yb;
        }
        y[(0, 0)] += model.source_impedance.inv();
        for (i, yl) in load_admittances.iter().enumerate() {
            y[(i, i)] += yl;
        }
        let lu = y.lu();
        if !lu.is_invertible() {
            return Err(Error::SingularNetwork);
        }
        Ok(Self {
            model: model.clone(),
            load_admittances: load_admittances.to_vec(),
            lu,
        })
    }

    pub fn model(&self) -> &FeederModel {
        &self.model
    }

    pub fn load_admittances(&self) -> &[Complex64] {
        &self.load_admittances
    }

    /// Bus voltages for a source EMF and a PV current injected at the PV bus.
    pub fn voltages(&self, source_emf: Complex64, pv_current: Complex64) -> Result<Vec<Complex64>> {
        let n = self.model.bus_count();
        let mut rhs = DVector::<Complex64>::zeros(n);
        rhs[0] = source_emf / self.model.source_impedance;
        rhs[self.model.pv_bus] += pv_current;
        let v = self.lu.solve(&rhs).ok_or(Error::SingularNetwork)?;
        if v.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Numerical("non-finite bus voltage".into()));
        }
        Ok(v.iter().copied().collect())
    }

    pub fn solve(&self, source_emf: Complex64, pv_current: Complex64) -> Result<NetworkSolution> {
        let v = self.voltages(source_emf, pv_current)?;
        let demand: Vec<Complex64> = v
            .iter()
            .zip(&self.load_admittances)
            .map(|(v, y)| y.conj() * v.norm_sqr())
            .collect();
        Ok(assemble(&self.model, v, source_emf, pv_current, &demand))
    }
}

/// One-shot linear network solve; see [`NetworkSolver`] for repeated use.
pub fn solve_network(
    model: &FeederModel,
    source_emf: Complex64,
    pv_current: Complex64,
    load_admittances: &[Complex64],
) -> Result<NetworkSolution> {
    NetworkSolver::new(model, load_admittances)?.solve(source_emf, pv_current)
}
