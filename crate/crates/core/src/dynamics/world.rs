use num_complex::Complex64;

use super::{
    apply_events, swing_step, BusFrequencyTracker, EventSchedule, SwingParams, SwingState, TimeGrid,
};
use crate::error::{Error, Result};
use crate::netmodel::{init_power_flow, FeederModel, MeasurementPoint, NetworkSolution, NetworkSolver};
use crate::protection::{relay_step, RelaySettings, RelayState, RocofEstimator, RocofEstimatorCfg};
use crate::pvplant::{current_reference, CurrentRef, InverterMode, InverterParams, InverterState};

/// What the inverter controller sees at the start of a step: the PCC state
/// left behind by the previous step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub seq: u64,
    /// Time of the step being commanded (s).
    pub t: f64,
    pub v_mag: f64,
    pub v_ang: f64,
    pub f_local: f64,
    pub rocof: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Command {
    pub seq: u64,
    pub current: CurrentRef,
    pub breaker_open: bool,
    pub mode: InverterMode,
}

/// Anything that turns a PCC measurement into an inverter command: the
/// in-process control law or a remote peer.
pub trait Controller {
    fn control(&mut self, meas: &Measurement) -> Result<Command>;
}

impl<C: Controller + ?Sized> Controller for &mut C {
    fn control(&mut self, meas: &Measurement) -> Result<Command> {
        (**self).control(meas)
    }
}

#[derive(Debug, Clone)]
pub struct WorldConfig {
    pub model: FeederModel,
    pub swing: SwingParams,
    pub events: Option<EventSchedule>,
    pub dt: f64,
    pub load_scale: f64,
    /// Available array power (pu).
    pub p_avail: f64,
    pub inverter: InverterParams,
    pub relay: RelaySettings,
    pub frequency_tau: f64,
    pub rocof_window: f64,
}

/// One recorded step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    /// Start, middle, end.
    pub v_mag: [f64; 3],
    pub f_local: [f64; 3],
    pub rocof: [f64; 3],
    pub relay_tripped: [bool; 3],
    pub pv_p: f64,
    pub pv_q: f64,
    pub mode: InverterMode,
    pub delta_f: f64,
    pub current: CurrentRef,
}

/// Complete simulation state of one run.
#[derive(Debug, Clone)]
pub struct World {
    cfg: WorldConfig,
    solver: NetworkSolver,
    grid: TimeGrid,
    nominal_emf: Complex64,
    swing: SwingState,
    solution: NetworkSolution,
    buses: [usize; 3],
    trackers: [BusFrequencyTracker; 3],
    estimators: [RocofEstimator; 3],
    relays: [RelayState; 3],
    step: u64,
}

/// Fixed-point passes used to settle the initial PV current against the
/// linear network.
const INIT_PASSES: usize = 20;

impl World {
    /// Initializes from a steady-state power flow with the inverter in
    /// normal operation, so that an undisturbed world stays put.
    pub fn new(cfg: WorldConfig) -> Result<Self> {
        cfg.swing.validate()?;
        cfg.inverter.validate()?;
        cfg.relay.validate()?;
        if let Some(ev) = &cfg.events {
            ev.validate()?;
        }
        let rocof_cfg = RocofEstimatorCfg::new(cfg.rocof_window, cfg.dt)?;
        if !(cfg.p_avail.is_finite() && cfg.p_avail >= 0.0) {
            return Err(Error::Invalid(format!("available PV power must be >= 0, got {}", cfg.p_avail)));
        }
        let model = &cfg.model;
        let pv_power = cfg.p_avail.min(cfg.inverter.s_rated);
        let pf = init_power_flow(model, Complex64::new(pv_power, 0.0), cfg.load_scale)?;
        let solver = NetworkSolver::new(model, &pf.load_admittances)?;
        let nominal_emf = Complex64::new(model.source_emf, 0.0);

        let inverter = InverterState::normal(pv_power);
        let mut voltages = pf.solution.bus_voltages.clone();
        let mut solution = pf.solution;
        for _ in 0..INIT_PASSES {
            let v = voltages[model.pv_bus];
            let i = current_reference(&inverter, v.norm(), &cfg.inverter, cfg.p_avail).phasor(v.arg());
            solution = solver.solve(nominal_emf, i)?;
            let settled = solution.bus_voltages == voltages;
            voltages.clone_from(&solution.bus_voltages);
            if settled {
                break;
            }
        }
        let swing = SwingState { delta_f: 0.0, delta: 0.0, p_mech: solution.source_power().re };

        let buses = model.measurement.as_array();
        let f_n = cfg.swing.f_n;
        let mut trackers = Vec::with_capacity(3);
        for &b in &buses {
            trackers.push(BusFrequencyTracker::new(solution.bus_voltages[b], f_n, cfg.frequency_tau)?);
        }
        let trackers: [BusFrequencyTracker; 3] = trackers.try_into().expect("three trackers");
        let estimators = std::array::from_fn(|_| RocofEstimator::primed(rocof_cfg, 0.0, f_n));

        Ok(Self {
            grid: TimeGrid::new(cfg.dt),
            solver,
            nominal_emf,
            swing,
            solution,
            buses,
            trackers,
            estimators,
            relays: [RelayState::default(); 3],
            step: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.cfg
    }

    pub fn model(&self) -> &FeederModel {
        &self.cfg.model
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn time_grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn swing(&self) -> &SwingState {
        &self.swing
    }

    pub fn solution(&self) -> &NetworkSolution {
        &self.solution
    }

    pub fn relays(&self) -> &[RelayState; 3] {
        &self.relays
    }

    pub fn measurement_bus(&self, point: MeasurementPoint) -> usize {
        self.buses[point.index()]
    }

    /// Measurement handed to the controller for the next step.
    pub fn measurement(&self) -> Measurement {
        let end = MeasurementPoint::End.index();
        let v = self.solution.bus_voltages[self.cfg.model.pv_bus];
        Measurement {
            seq: self.step,
            t: self.grid.time(self.step as usize),
            v_mag: v.norm(),
            v_ang: v.arg(),
            f_local: self.trackers[end].frequency(),
            rocof: self.estimators[end].estimate(),
        }
    }

    /// Advances one step: source EMF, controller command from the previous
    /// PCC state, network solve, swing update, local frequency, protection.
    pub fn step(&mut self, controller: &mut dyn Controller) -> Result<StepRecord> {
        let dt = self.cfg.dt;
        let meas = self.measurement();
        let t = meas.t;
        let emf = apply_events(t, self.cfg.events.as_ref(), self.nominal_emf, self.swing.delta);

        let cmd = controller.control(&meas)?;
        if cmd.seq != meas.seq {
            return Err(Error::Protocol(format!("command for step {} while at step {}", cmd.seq, meas.seq)));
        }
        let limit = self.cfg.inverter.current_limit();
        if !(cmd.current.i_p.is_finite() && cmd.current.i_q.is_finite())
            || cmd.current.magnitude() > limit * (1.0 + 1e-12)
        {
            return Err(Error::Protocol(format!(
                "commanded current {:?} exceeds the {limit} pu limit",
                cmd.current
            )));
        }
        let pcc_tripped = self.relays[MeasurementPoint::End.index()].tripped;
        let isolated = cmd.breaker_open || pcc_tripped || cmd.mode == InverterMode::Isolated;
        let current = if isolated { CurrentRef::ZERO } else { cmd.current };
        let i_pv = current.phasor(meas.v_ang);

        let solution = self.solver.solve(emf, i_pv)?;
        let p_elec = solution.source_power().re;
        let swing = swing_step(&self.swing, &self.cfg.swing, p_elec, dt)?;
        let system_f = self.cfg.swing.f_n + swing.delta_f;
        let rotate = Complex64::from_polar(1.0, -swing.delta);

        let mut v_mag = [0.0; 3];
        let mut f_local = [0.0; 3];
        let mut rocof = [0.0; 3];
        let mut relay_tripped = [false; 3];
        for i in 0..3 {
            let v = solution.bus_voltages[self.buses[i]];
            v_mag[i] = v.norm();
            f_local[i] = self.trackers[i].update(v * rotate, system_f, dt)?;
            rocof[i] = self.estimators[i].update(f_local[i], t)?;
            self.relays[i] = relay_step(&self.relays[i], rocof[i], t, dt, &self.cfg.relay);
            relay_tripped[i] = self.relays[i].tripped;
        }

        let s_pv = solution.bus_voltages[self.cfg.model.pv_bus] * i_pv.conj();
        let record = StepRecord {
            t,
            v_mag,
            f_local,
            rocof,
            relay_tripped,
            pv_p: s_pv.re,
            pv_q: s_pv.im,
            mode: if isolated { InverterMode::Isolated } else { cmd.mode },
            delta_f: swing.delta_f,
            current,
        };
        self.swing = swing;
        self.solution = solution;
        self.step += 1;
        Ok(record)
    }
}
