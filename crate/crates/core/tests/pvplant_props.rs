use proptest::prelude::*;

use pvhil::dynamics::{Controller, Measurement};
use pvhil::protection::RelaySettings;
use pvhil::pvplant::{
    apply_trip, current_reference, irradiance_for_fraction, lvrt_transition, mpp_power, InverterMode, InverterParams,
    InverterState, LocalController, ModuleParams, OperatingEnv,
};

const MODES: [InverterMode; 4] = [InverterMode::Normal, InverterMode::Lvrt, InverterMode::Recovery, InverterMode::Isolated];

fn mode() -> impl Strategy<Value = InverterMode> {
    prop::sample::select(MODES.to_vec())
}

fn params() -> impl Strategy<Value = InverterParams> {
    (0.01f64..1.0, 1.0f64..1.5, 0.5f64..1.0, 0.5f64..4.0, 0.0f64..0.9).prop_map(|(s, i_max, v_enter, k_q, block)| {
        InverterParams {
            s_rated: s,
            i_max,
            v_enter,
            v_exit: v_enter,
            k_q,
            active_block_voltage: block,
            ..InverterParams::default()
        }
    })
}

fn meas(seq: u64, t: f64, v: f64, rocof: f64) -> Measurement {
    Measurement { seq, t, v_mag: v, v_ang: 0.0, f_local: 50.0, rocof }
}

#[test]
fn generation_levels_map_to_irradiance() {
    let mp = ModuleParams::default();
    for (frac, g) in [(0.10, 100.0), (0.25, 250.0), (0.50, 500.0), (0.75, 750.0), (1.00, 1000.0)] {
        let irr = irradiance_for_fraction(&mp, frac, 25.0).unwrap();
        assert!((irr - g).abs() < 1e-9, "{frac}: {irr}");
        let p = mpp_power(&mp, &OperatingEnv { irradiance: irr, cell_temp: 25.0 });
        assert!((p - frac * mp.p_stc).abs() < 1e-15);
    }
}

#[test]
fn mpp_is_clamped_and_temperature_derated() {
    let mp = ModuleParams::default();
    let hot = mpp_power(&mp, &OperatingEnv { irradiance: 1000.0, cell_temp: 50.0 });
    assert!((hot - mp.p_stc * (1.0 - 0.004 * 25.0)).abs() < 1e-15);
    let cold_bright = mpp_power(&mp, &OperatingEnv { irradiance: 1400.0, cell_temp: -40.0 });
    assert_eq!(cold_bright, mp.p_stc * 1.05);
    assert_eq!(mpp_power(&mp, &OperatingEnv { irradiance: 0.0, cell_temp: 25.0 }), 0.0);
}

#[test]
fn isolated_cannot_reach_normal() {
    let mut seen = vec![InverterMode::Isolated];
    let mut frontier = seen.clone();
    while let Some(m) = frontier.pop() {
        for n in MODES {
            if m.can_transition_to(n) && !seen.contains(&n) {
                seen.push(n);
                frontier.push(n);
            }
        }
    }
    assert_eq!(seen, vec![InverterMode::Isolated]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn current_never_exceeds_limit(
        p in params(),
        m in mode(),
        v in 0.0f64..1.3,
        p_avail in 0.0f64..1.2,
        p_ref in 0.0f64..1.2,
    ) {
        let st = InverterState { mode: m, p_ref, ..InverterState::normal(p_ref) };
        let i = current_reference(&st, v, &p, p_avail);
        prop_assert!(i.magnitude() <= p.i_max * p.i_rated() * (1.0 + 1e-12), "{m}: {i:?}");
        prop_assert!(i.i_p >= 0.0 && i.i_q >= 0.0);
    }

    #[test]
    fn normal_mode_has_no_reactive_current(p in params(), v in 0.0f64..1.3, p_avail in 0.0f64..1.2) {
        let st = InverterState::normal(p_avail);
        prop_assert_eq!(current_reference(&st, v, &p, p_avail).i_q, 0.0);
    }

    #[test]
    fn lower_voltage_never_means_less_reactive_current(
        p in params(),
        v_hi in 0.0f64..1.2,
        drop in 0.0f64..1.0,
        p_avail in 0.0f64..1.2,
    ) {
        let st = InverterState { mode: InverterMode::Lvrt, ..InverterState::normal(p_avail) };
        let v_lo = (v_hi - drop).max(0.0);
        let hi = current_reference(&st, v_hi, &p, p_avail);
        let lo = current_reference(&st, v_lo, &p, p_avail);
        prop_assert!(lo.i_q >= hi.i_q, "{} < {}", lo.i_q, hi.i_q);
        prop_assert!(lo.i_q <= p.i_max * p.i_rated() * (1.0 + 1e-12));
    }

    #[test]
    fn isolated_absorbs_every_input(
        m in mode(),
        vs in prop::collection::vec(0.0f64..1.3, 1..200),
    ) {
        let p = InverterParams::default();
        let mut st = apply_trip(&InverterState { mode: m, ..InverterState::normal(0.1) });
        prop_assert_eq!(st.mode, InverterMode::Isolated);
        for (k, v) in vs.into_iter().enumerate() {
            st = lvrt_transition(&st, v, k as f64 * 1e-3, &p);
            prop_assert_eq!(st.mode, InverterMode::Isolated);
            prop_assert_eq!(current_reference(&st, v, &p, 0.15).magnitude(), 0.0);
        }
    }

    /// Driving the controller with arbitrary voltage and RoCoF sequences only
    /// ever produces allowed transitions, bounded apparent power and zero
    /// reactive power in normal operation.
    #[test]
    fn controller_respects_mode_and_power_limits(
        samples in prop::collection::vec((0.0f64..1.3, -3.0f64..3.0), 1..600),
        p_avail in 0.0f64..0.16,
    ) {
        let params = InverterParams::default();
        let mut ctl = LocalController::new(params, p_avail, RelaySettings::default(), 1e-3);
        let mut prev = ctl.state().mode;
        for (k, (v, rocof)) in samples.into_iter().enumerate() {
            let cmd = ctl.control(&meas(k as u64, k as f64 * 1e-3, v, rocof)).unwrap();
            let st = *ctl.state();
            prop_assert!(prev.can_transition_to(st.mode), "{prev} -> {}", st.mode);
            prop_assert_eq!(cmd.mode, st.mode);
            prop_assert_eq!(cmd.seq, k as u64);
            let s_max = params.s_rated * params.i_max * v.max(0.1);
            prop_assert!(st.p_ref.hypot(st.q_ref) <= s_max * (1.0 + 1e-12));
            if st.mode == InverterMode::Normal {
                prop_assert_eq!(st.q_ref, 0.0);
                prop_assert_eq!(cmd.current.i_q, 0.0);
            }
            if cmd.breaker_open {
                prop_assert_eq!(st.mode, InverterMode::Isolated);
            }
            prev = st.mode;
        }
    }
}
