//! Engine output against closed-form piecewise-linear solutions.

use bdc_core::analysis::predicted_ripple_buck;
use bdc_core::sim::{self, Engine, Scenario, SourceProfile, WarmStart};
use bdc_core::Mode;

fn buck_at(duty: f64, i0: f64) -> Scenario {
    let mut sc = Scenario::nominal(SourceProfile::constant(24.0), 50e-6);
    sc.initial = WarmStart {
        i_l: Some(i0),
        mode: Some(Mode::Charging),
        duty: Some(duty),
        ..WarmStart::default()
    };
    sc
}

/// Triangle wave of an ideal buck: rises at (V_bus - V_batt)/L while S1 is on,
/// falls at V_batt/L after.
fn triangle(t: f64, i0: f64, duty: f64, period: f64, v_bus: f64, v_batt: f64, l: f64) -> f64 {
    let t_on = duty * period;
    if t <= t_on {
        i0 + (v_bus - v_batt) / l * t
    } else {
        i0 + (v_bus - v_batt) / l * t_on - v_batt / l * (t - t_on)
    }
}

#[test]
fn one_open_loop_period_follows_the_triangle() {
    for (duty, i0) in [(0.5, 2.85), (0.3, 4.0), (0.7, 1.0)] {
        let sc = buck_at(duty, i0);
        let period = sc.params.switching_period();
        let mut engine = Engine::new(&sc).unwrap();
        let n = engine.steps_per_period();
        let mut worst = 0.0f64;
        let mut hi = f64::NEG_INFINITY;
        for _ in 0..n {
            engine.step().unwrap();
            let s = engine.state();
            let expect = triangle(s.t, i0, duty, period, 24.0, 12.0, sc.params.l_p);
            worst = worst.max((s.i_l - expect).abs());
            hi = hi.max(s.i_l);
        }
        let ripple = predicted_ripple_buck(24.0, 12.0, sc.params.l_p, duty, sc.params.f_s).ripple;
        assert!(worst <= 0.005 * ripple, "duty {duty}: deviation {worst} A");
        let rise = (24.0 - 12.0) * duty / (sc.params.l_p * sc.params.f_s);
        assert!((hi - i0 - rise).abs() <= 0.005 * rise);
    }
}

#[test]
fn closed_loop_ripple_matches_the_ccm_law() {
    let mut sc = Scenario::nominal(SourceProfile::constant(24.0), 30e-3);
    sc.record_decimation = 10;
    let trace = sim::run(&sc).unwrap();
    let w = sim::steady_window(&trace, 40, sc.params.f_s).unwrap();
    let law = predicted_ripple_buck(24.0, w.v_batt_terminal.mean, sc.params.l_p, w.duty.mean, sc.params.f_s);
    assert!(
        (w.i_l_period_p2p - law.ripple).abs() <= 0.05 * law.ripple,
        "measured {} predicted {}",
        w.i_l_period_p2p,
        law.ripple
    );
}
