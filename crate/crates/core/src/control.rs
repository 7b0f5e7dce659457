//! Digital controller: mode supervisor, PWM generation and the incremental
//! duty regulator. Everything here runs once per switching period, the way a
//! timer interrupt on a small microcontroller would.

use crate::circuit::{check, CircuitError, GateCommand};
use crate::design;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Buck: DC bus charges the battery through S1.
    Charging,
    /// Boost: battery supplies the bus through S2.
    Discharging,
    /// Rest: both switches off.
    Trickle,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Charging, Mode::Discharging, Mode::Trickle];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Charging => "Charging",
            Mode::Discharging => "Discharging",
            Mode::Trickle => "Trickle",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Mode::Charging => 0,
            Mode::Discharging => 1,
            Mode::Trickle => 2,
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown mode `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChargePhase {
    ConstantCurrent,
    ConstantVoltage,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    /// Regulated load voltage in discharging mode.
    pub v_ref_load: f64,
    /// Constant-current charging setpoint.
    pub i_charge_ref: f64,
    /// Largest discharge current the voltage loop may request (magnitude).
    pub i_discharge_ref: f64,
    /// Battery voltage where constant current hands over to constant voltage.
    pub v_float: f64,
    /// Source at or below this is insufficient: discharge.
    pub v_bus_low: f64,
    /// Source at or above this is sufficient: charge.
    pub v_bus_high: f64,
    pub duty_step: f64,
    /// Per-period change of the discharge current target, amperes.
    pub current_step: f64,
    /// Larger target step used while the load voltage is outside `coarse_band`.
    pub coarse_current_step: f64,
    /// Load-voltage error, volts, beyond which the coarse step applies.
    pub coarse_band: f64,
    pub duty_min: f64,
    pub duty_max: f64,
    /// Rest ends once the battery falls this far below `v_float`.
    pub trickle_exit_margin: f64,
    /// Weight, in control periods, of the error trend in the duty
    /// comparator. Zero gives the bare sign-of-error increment rule.
    pub trend_gain: f64,
    /// Same, for the load-voltage comparator that moves the discharge current target.
    pub voltage_trend_gain: f64,
}

impl ControllerConfig {
    /// Defaults for a given load reference and nominal battery voltage.
    pub fn for_plant(v_ref_load: f64, v_batt_nominal: f64) -> Self {
        Self {
            v_ref_load,
            i_charge_ref: 3.0,
            i_discharge_ref: 8.0,
            v_float: 13.8,
            v_bus_low: 1.05 * v_batt_nominal,
            v_bus_high: 0.85 * v_ref_load,
            duty_step: 0.005,
            current_step: 0.01,
            coarse_current_step: 0.03,
            coarse_band: 1.0,
            duty_min: 0.02,
            duty_max: 0.95,
            trickle_exit_margin: 0.2,
            trend_gain: 8.0,
            voltage_trend_gain: 16.0,
        }
    }

    pub fn nominal() -> Self {
        Self::for_plant(24.0, 12.0)
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        check(self.v_ref_load > 0.0, "v_ref_load", self.v_ref_load, "must be > 0")?;
        check(self.i_charge_ref >= 0.0, "i_charge_ref", self.i_charge_ref, "must be >= 0")?;
        check(self.i_discharge_ref > 0.0, "i_discharge_ref", self.i_discharge_ref, "must be > 0")?;
        check(self.v_float > 0.0, "v_float", self.v_float, "must be > 0")?;
        check(self.v_bus_low.is_finite(), "v_bus_low", self.v_bus_low, "must be finite")?;
        check(
            self.v_bus_low < self.v_bus_high,
            "v_bus_high",
            self.v_bus_high,
            "must exceed v_bus_low",
        )?;
        check(self.duty_step > 0.0, "duty_step", self.duty_step, "must be > 0")?;
        check(self.current_step > 0.0, "current_step", self.current_step, "must be > 0")?;
        check(
            self.coarse_current_step >= self.current_step,
            "coarse_current_step",
            self.coarse_current_step,
            "must be >= current_step",
        )?;
        check(self.coarse_band > 0.0, "coarse_band", self.coarse_band, "must be > 0")?;
        check(self.duty_min >= 0.0, "duty_min", self.duty_min, "must be >= 0")?;
        check(
            self.duty_max <= 1.0 && self.duty_min < self.duty_max,
            "duty_max",
            self.duty_max,
            "must satisfy duty_min < duty_max <= 1",
        )?;
        check(
            self.trickle_exit_margin >= 0.0,
            "trickle_exit_margin",
            self.trickle_exit_margin,
            "must be >= 0",
        )?;
        check(self.trend_gain >= 0.0, "trend_gain", self.trend_gain, "must be >= 0")?;
        check(
            self.voltage_trend_gain >= 0.0,
            "voltage_trend_gain",
            self.voltage_trend_gain,
            "must be >= 0",
        )?;
        Ok(())
    }

    pub fn clamp_duty(&self, duty: f64) -> f64 {
        duty.clamp(self.duty_min, self.duty_max)
    }
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self::nominal()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerState {
    pub mode: Mode,
    pub duty: f64,
    pub phase: ChargePhase,
    /// Position inside the switching period, in [0, 1).
    pub carrier_phase: f64,
    /// Error seen by the duty comparator at the previous control instant.
    pub last_error: Option<f64>,
    /// Discharge current target (magnitude) set by the load-voltage loop.
    pub i_target: f64,
    /// Load-voltage error at the previous control instant.
    pub last_voltage_error: Option<f64>,
}

impl ControllerState {
    pub fn new(mode: Mode, duty: f64) -> Self {
        Self {
            mode,
            duty,
            phase: ChargePhase::ConstantCurrent,
            carrier_phase: 0.0,
            last_error: None,
            i_target: 0.0,
            last_voltage_error: None,
        }
    }

    /// Switches mode, restarting the regulator from `duty`.
    pub fn enter(&self, mode: Mode, duty: f64, cfg: &ControllerConfig) -> Self {
        Self {
            carrier_phase: self.carrier_phase,
            ..Self::new(mode, cfg.clamp_duty(duty))
        }
    }
}

/// Duty a mode starts from: the ideal conversion ratio at the present
/// operating point, so the regulator only trims around it.
pub fn preset_duty(mode: Mode, v_source: f64, v_batt: f64, cfg: &ControllerConfig) -> f64 {
    let duty = match mode {
        Mode::Charging => design::buck_duty(v_source, v_batt).unwrap_or(cfg.duty_max),
        Mode::Discharging => design::boost_duty(v_batt, cfg.v_ref_load).unwrap_or(cfg.duty_min),
        Mode::Trickle => cfg.duty_min,
    };
    cfg.clamp_duty(duty)
}

/// Hysteretic supervisor.
///
/// `v_bus` is the sensed PV source voltage. At or above `v_bus_high` the
/// source is sufficient and the battery charges, resting in trickle once it
/// reaches `v_float`; at or below `v_bus_low` the battery discharges into the
/// load. Between the two thresholds the previous decision stands.
pub fn select_mode(v_bus: f64, v_batt: f64, soc: f64, prev: Mode, cfg: &ControllerConfig) -> Mode {
    let source_ok = if v_bus >= cfg.v_bus_high {
        true
    } else if v_bus <= cfg.v_bus_low {
        false
    } else {
        prev != Mode::Discharging
    };
    if !source_ok {
        return Mode::Discharging;
    }
    let full = v_batt >= cfg.v_float || soc >= 1.0;
    let still_resting = prev == Mode::Trickle && v_batt >= cfg.v_float - cfg.trickle_exit_margin;
    if full || still_resting {
        Mode::Trickle
    } else {
        Mode::Charging
    }
}

/// Gate pattern for one instant of the carrier.
pub fn pwm_gate(carrier_phase: f64, duty: f64, mode: Mode) -> GateCommand {
    let on = carrier_phase < duty;
    match mode {
        Mode::Charging => GateCommand {
            s1_on: on,
            s2_on: false,
        },
        Mode::Discharging => GateCommand {
            s1_on: false,
            s2_on: on,
        },
        Mode::Trickle => GateCommand::OFF,
    }
}

fn comparator(error: f64, last: Option<f64>, gain: f64) -> f64 {
    let predicted = match last {
        Some(prev) => error + gain * (error - prev),
        None => error,
    };
    if predicted > 0.0 {
        1.0
    } else if predicted < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// One control update from period-averaged measurements.
///
/// Every decision is a comparator: the regulated quantity is compared with
/// its reference (plus `trend_gain` periods of its recent trend) and the
/// duty moves one `duty_step` up, down, or not at all.
///
/// - Charging, constant current: battery current against `i_charge_ref`,
///   handing over to constant voltage once the battery reaches `v_float`.
/// - Charging, constant voltage: battery voltage against `v_float`, never
///   exceeding `i_charge_ref`.
/// - Discharging: the load voltage against `v_ref_load` moves the discharge
///   current target by `current_step` (bounded by `i_discharge_ref`), and the
///   discharge current against that target moves the duty. The target moves
///   by `coarse_current_step` while the voltage error exceeds `coarse_band`.
///   Boost gain rises
///   with duty, so both comparators act in the same direction.
/// - Trickle: nothing moves.
pub fn regulate(
    meas_v_load: f64,
    meas_i_batt: f64,
    meas_v_batt: f64,
    st: &ControllerState,
    cfg: &ControllerConfig,
) -> ControllerState {
    let mut next = *st;
    let error = match st.mode {
        Mode::Trickle => return next,
        Mode::Discharging => {
            let e_v = cfg.v_ref_load - meas_v_load;
            let dir = comparator(e_v, st.last_voltage_error, cfg.voltage_trend_gain);
            next.last_voltage_error = Some(e_v);
            let step = if e_v.abs() > cfg.coarse_band {
                cfg.coarse_current_step
            } else {
                cfg.current_step
            };
            next.i_target = (st.i_target + dir * step).clamp(0.0, cfg.i_discharge_ref);
            // positive error: more discharge current wanted
            Some(next.i_target + meas_i_batt)
        }
        Mode::Charging => {
            if next.phase == ChargePhase::ConstantCurrent && meas_v_batt >= cfg.v_float {
                next.phase = ChargePhase::ConstantVoltage;
                next.last_error = None;
            }
            match next.phase {
                ChargePhase::ConstantCurrent => Some(cfg.i_charge_ref - meas_i_batt),
                ChargePhase::ConstantVoltage if meas_i_batt > cfg.i_charge_ref => None,
                ChargePhase::ConstantVoltage => Some(cfg.v_float - meas_v_batt),
            }
        }
    };
    next.duty = match error {
        Some(e) => {
            let dir = comparator(e, next.last_error, cfg.trend_gain);
            next.last_error = Some(e);
            st.duty + dir * cfg.duty_step
        }
        // current limit in constant voltage: back off and restart the trend
        None => {
            next.last_error = None;
            st.duty - cfg.duty_step
        }
    };
    next.duty = cfg.clamp_duty(next.duty);
    next
}

/// Predicted valley and peak of the inductor current around its average.
pub fn desired_current_envelope(i_star: f64, ripple: f64) -> (f64, f64) {
    debug_assert!(ripple >= 0.0);
    (i_star - ripple / 2.0, i_star + ripple / 2.0)
}
