use super::{apply_trip, current_reference, lvrt_transition, InverterParams, InverterState};
use crate::dynamics::{Command, Controller, Measurement};
use crate::error::Result;
use crate::protection::{relay_step, RelaySettings, RelayState};

/// The inverter control law together with the interface RoCoF relay that
/// opens its breaker. Used in-process and by the remote controller.
#[derive(Debug, Clone)]
pub struct LocalController {
    params: InverterParams,
    p_avail: f64,
    relay_settings: RelaySettings,
    dt: f64,
    state: InverterState,
    relay: RelayState,
}

impl LocalController {
    pub fn new(params: InverterParams, p_avail: f64, relay_settings: RelaySettings, dt: f64) -> Self {
        Self {
            state: InverterState::normal(p_avail.min(params.s_rated)),
            params,
            p_avail,
            relay_settings,
            dt,
            relay: RelayState::default(),
        }
    }

    pub fn state(&self) -> &InverterState {
        &self.state
    }

    pub fn relay(&self) -> &RelayState {
        &self.relay
    }
}

impl Controller for LocalController {
    fn control(&mut self, meas: &Measurement) -> Result<Command> {
        self.relay = relay_step(&self.relay, meas.rocof, meas.t, self.dt, &self.relay_settings);
        if self.relay.tripped {
            self.state = apply_trip(&self.state);
        }
        self.state = lvrt_transition(&self.state, meas.v_mag, meas.t, &self.params);
        let current = current_reference(&self.state, meas.v_mag, &self.params, self.p_avail);
        self.state.p_ref = meas.v_mag * current.i_p;
        self.state.q_ref = meas.v_mag * current.i_q;
        Ok(Command {
            seq: meas.seq,
            current,
            breaker_open: self.relay.tripped,
            mode: self.state.mode,
        })
    }
}
