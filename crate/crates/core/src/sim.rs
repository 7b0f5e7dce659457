//! Fixed-step time-domain engine.
//!
//! Explicit Euler at a step that divides the switching period exactly, so
//! every carrier wrap lands on a step boundary and duty is quantized to
//! `1 / steps_per_period`. The controller runs once per period at the wrap,
//! fed with averages taken over the period that just ended.

use std::io::{self, Write};

use thiserror::Error;

use crate::circuit::{
    self, BatteryModel, CircuitError, CircuitState, ConductionPath, ConverterParams, GateCommand,
};
use crate::control::{self, ControllerConfig, ControllerState, Mode};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("diverged at t = {t:.9} s: {quantity} = {value}")]
    Diverged {
        t: f64,
        quantity: &'static str,
        value: f64,
    },
    #[error("window of {needed} samples exceeds trace length {available}")]
    WindowTooLong { needed: usize, available: usize },
    #[error("trace too short or irregular: {0}")]
    BadTrace(String),
}

impl SimError {
    pub fn is_divergence(&self) -> bool {
        matches!(self, SimError::Diverged { .. })
    }
}

/// One piece of the PV source profile. Each segment ends at `until`; a ramp
/// starts where the previous segment ended (or at t = 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceSegment {
    Hold { until: f64, volts: f64 },
    Ramp { until: f64, from: f64, to: f64 },
}

impl SourceSegment {
    pub fn until(&self) -> f64 {
        match *self {
            SourceSegment::Hold { until, .. } | SourceSegment::Ramp { until, .. } => until,
        }
    }

    fn end_value(&self) -> f64 {
        match *self {
            SourceSegment::Hold { volts, .. } => volts,
            SourceSegment::Ramp { to, .. } => to,
        }
    }
}

/// PV source voltage against time. Past the last segment the final value holds.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceProfile {
    segments: Vec<SourceSegment>,
}

impl SourceProfile {
    pub fn constant(volts: f64) -> Self {
        Self {
            segments: vec![SourceSegment::Hold {
                until: f64::INFINITY,
                volts,
            }],
        }
    }

    /// Holds `before` until `t_step`, then `after`.
    pub fn step(before: f64, t_step: f64, after: f64) -> Self {
        Self {
            segments: vec![
                SourceSegment::Hold {
                    until: t_step,
                    volts: before,
                },
                SourceSegment::Hold {
                    until: f64::INFINITY,
                    volts: after,
                },
            ],
        }
    }

    pub fn new(segments: Vec<SourceSegment>) -> Result<Self, SimError> {
        if segments.is_empty() {
            return Err(SimError::Scenario("source profile has no segments".into()));
        }
        let mut last = 0.0;
        for (k, seg) in segments.iter().enumerate() {
            let until = seg.until();
            if until.is_nan() || until <= last {
                return Err(SimError::Scenario(format!(
                    "source segment {} ends at {until} s, not after {last} s",
                    k + 1
                )));
            }
            let values_ok = match *seg {
                SourceSegment::Hold { volts, .. } => volts.is_finite() && volts >= 0.0,
                SourceSegment::Ramp { from, to, .. } => {
                    from.is_finite() && to.is_finite() && from >= 0.0 && to >= 0.0 && until.is_finite()
                }
            };
            if !values_ok {
                return Err(SimError::Scenario(format!(
                    "source segment {} has a negative, non-finite or unbounded value",
                    k + 1
                )));
            }
            last = until;
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[SourceSegment] {
        &self.segments
    }

    pub fn at(&self, t: f64) -> f64 {
        let mut start = 0.0;
        for seg in &self.segments {
            let until = seg.until();
            if t < until {
                return match *seg {
                    SourceSegment::Hold { volts, .. } => volts,
                    SourceSegment::Ramp { from, to, .. } => {
                        let frac = ((t - start) / (until - start)).clamp(0.0, 1.0);
                        from + (to - from) * frac
                    }
                };
            }
            start = until;
        }
        self.segments.last().map_or(0.0, SourceSegment::end_value)
    }
}

/// Overrides for the cold-start initial condition.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WarmStart {
    pub i_l: Option<f64>,
    pub v_c_bus: Option<f64>,
    pub v_c_o: Option<f64>,
    pub mode: Option<Mode>,
    pub duty: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceLimits {
    pub max_current: f64,
    pub max_voltage: f64,
}

impl Default for DivergenceLimits {
    fn default() -> Self {
        Self {
            max_current: 100.0,
            max_voltage: 200.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub params: ConverterParams,
    pub battery: BatteryModel,
    pub controller: ControllerConfig,
    pub source: SourceProfile,
    pub t_end: f64,
    pub dt: f64,
    /// Keep every k-th step in the trace.
    pub record_decimation: usize,
    pub initial: WarmStart,
    pub limits: DivergenceLimits,
}

impl Scenario {
    /// Design-point plant with a constant source, 1000 steps per period.
    pub fn nominal(source: SourceProfile, t_end: f64) -> Self {
        let params = ConverterParams::nominal();
        Self {
            dt: params.switching_period() / 1000.0,
            params,
            battery: BatteryModel::nominal(),
            controller: ControllerConfig::nominal(),
            source,
            t_end,
            record_decimation: 1,
            initial: WarmStart::default(),
            limits: DivergenceLimits::default(),
        }
    }

    /// Integration steps in one switching period.
    pub fn steps_per_period(&self) -> Result<u32, SimError> {
        let ratio = 1.0 / (self.params.f_s * self.dt);
        let n = ratio.round();
        if !(ratio.is_finite() && n >= 20.0 && (ratio - n).abs() <= 1e-6 * n && n <= u32::MAX as f64) {
            return Err(SimError::Scenario(format!(
                "dt = {} s must divide the switching period into an integer number (>= 20) of steps",
                self.dt
            )));
        }
        Ok(n as u32)
    }

    pub fn total_steps(&self) -> u64 {
        (self.t_end / self.dt).round() as u64
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.params.validate()?;
        self.battery.validate()?;
        self.controller.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::Scenario(format!("dt = {} must be > 0", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(SimError::Scenario(format!("t_end = {} must be >= 0", self.t_end)));
        }
        if self.record_decimation == 0 {
            return Err(SimError::Scenario("record_decimation must be >= 1".into()));
        }
        self.steps_per_period()?;
        // explicit Euler needs every RC time constant well above the step
        let p = &self.params;
        let node_c = p.bus_node_capacitance();
        let mut taus = vec![("r_load", p.r_load * if p.merged_link() { node_c } else { p.c_o })];
        if p.r_source > 0.0 {
            taus.push(("r_source", p.r_source * node_c));
        }
        if !p.merged_link() {
            taus.push(("r_link", p.r_link * p.c_bus.min(p.c_o)));
        }
        for (name, tau) in taus {
            if tau < 2.0 * self.dt {
                return Err(SimError::Scenario(format!(
                    "{name} time constant {tau:e} s is too short for dt = {:e} s",
                    self.dt
                )));
            }
        }
        for (name, v) in [("max_current", self.limits.max_current), ("max_voltage", self.limits.max_voltage)] {
            if v.is_nan() || v <= 0.0 {
                return Err(SimError::Scenario(format!("{name} must be > 0")));
            }
        }
        Ok(())
    }

    pub fn initial_state(&self) -> CircuitState {
        let v_src = self.source.at(0.0);
        let v_c_bus = self.initial.v_c_bus.unwrap_or(v_src);
        let v_c_o = if self.params.merged_link() {
            v_c_bus
        } else {
            self.initial.v_c_o.unwrap_or(0.0)
        };
        CircuitState {
            i_l: self.initial.i_l.unwrap_or(0.0),
            v_c_bus,
            v_c_o,
            soc: self.battery.soc,
            t: 0.0,
        }
    }
}

/// Cumulative energy bookkeeping, joules.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyAccount {
    /// Delivered by the PV source EMF.
    pub source: f64,
    /// Dissipated in the load resistor.
    pub load: f64,
    /// Absorbed by the battery EMF (negative when discharging).
    pub battery: f64,
    /// Conduction and charge-transfer losses.
    pub loss: f64,
}

/// Averages over one switching period, as the sampling front end sees them.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct PeriodMeter {
    n: u32,
    i_l: f64,
    v_c_bus: f64,
    v_c_o: f64,
    v_batt: f64,
}

impl PeriodMeter {
    fn add(&mut self, state: &CircuitState, v_batt: f64) {
        self.n += 1;
        self.i_l += state.i_l;
        self.v_c_bus += state.v_c_bus;
        self.v_c_o += state.v_c_o;
        self.v_batt += v_batt;
    }

    fn averages(&self) -> (f64, f64, f64, f64) {
        let n = f64::from(self.n.max(1));
        (self.i_l / n, self.v_c_bus / n, self.v_c_o / n, self.v_batt / n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeTransition {
    pub t: f64,
    pub from: Mode,
    pub to: Mode,
}

/// Steps a scenario forward one `dt` at a time.
#[derive(Debug, Clone)]
pub struct Engine<'a> {
    scenario: &'a Scenario,
    state: CircuitState,
    ctrl: ControllerState,
    steps_per_period: u32,
    tick: u32,
    duty_ticks: u32,
    step_index: u64,
    meter: PeriodMeter,
    energy: EnergyAccount,
    transitions: Vec<ModeTransition>,
    last_path: ConductionPath,
}

impl<'a> Engine<'a> {
    pub fn new(scenario: &'a Scenario) -> Result<Self, SimError> {
        scenario.validate()?;
        let steps_per_period = scenario.steps_per_period()?;
        let state = scenario.initial_state();
        let cfg = &scenario.controller;
        let v_src = scenario.source.at(0.0);
        let v_batt = scenario.battery.emf(state.soc);
        let mode = scenario
            .initial
            .mode
            .unwrap_or_else(|| control::select_mode(v_src, v_batt, state.soc, Mode::Discharging, cfg));
        let duty = scenario
            .initial
            .duty
            .map(|d| cfg.clamp_duty(d))
            .unwrap_or_else(|| control::preset_duty(mode, state.v_c_bus.max(v_src), v_batt, cfg));
        let mut engine = Self {
            scenario,
            state,
            ctrl: ControllerState::new(mode, duty),
            steps_per_period,
            tick: 0,
            duty_ticks: 0,
            step_index: 0,
            meter: PeriodMeter::default(),
            energy: EnergyAccount::default(),
            transitions: Vec::new(),
            last_path: ConductionPath::Idle,
        };
        engine.quantize_duty();
        Ok(engine)
    }

    pub fn state(&self) -> &CircuitState {
        &self.state
    }

    pub fn controller(&self) -> &ControllerState {
        &self.ctrl
    }

    pub fn energy(&self) -> &EnergyAccount {
        &self.energy
    }

    pub fn transitions(&self) -> &[ModeTransition] {
        &self.transitions
    }

    pub fn steps_per_period(&self) -> u32 {
        self.steps_per_period
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    /// Path used by the most recent step.
    pub fn last_path(&self) -> ConductionPath {
        self.last_path
    }

    /// Duty actually applied, after quantization to the step grid.
    pub fn applied_duty(&self) -> f64 {
        f64::from(self.duty_ticks) / f64::from(self.steps_per_period)
    }

    /// Gate command for the step about to be taken.
    pub fn gates(&self) -> GateCommand {
        let phase = f64::from(self.tick) / f64::from(self.steps_per_period);
        control::pwm_gate(phase, self.applied_duty(), self.ctrl.mode)
    }

    pub fn source_voltage(&self) -> f64 {
        self.scenario.source.at(self.state.t)
    }

    pub fn battery_voltage(&self) -> f64 {
        self.state.battery_voltage(&self.scenario.battery)
    }

    fn quantize_duty(&mut self) {
        let n = f64::from(self.steps_per_period);
        self.duty_ticks = (self.ctrl.duty * n).round() as u32;
    }

    /// Overrides the controller, e.g. to run open loop at a fixed duty.
    pub fn set_controller(&mut self, ctrl: ControllerState) {
        self.ctrl = ctrl;
        self.quantize_duty();
    }

    /// Advances one integration step.
    pub fn step(&mut self) -> Result<(), SimError> {
        let sc = self.scenario;
        let p = &sc.params;
        let battery = &sc.battery;
        let dt = sc.dt;

        let gates = self.gates();
        let path = circuit::resolve_topology(gates, &self.state, p, battery)?;
        self.last_path = path;
        let v_src = sc.source.at(self.state.t);
        let i_src = circuit::source_current(v_src, &self.state, p);
        let d = circuit::derivatives(&self.state, path, p, battery, i_src);

        let s = self.state;
        let emf = battery.emf(s.soc);
        self.energy.source += v_src * i_src * dt;
        self.energy.load += s.v_c_o * s.v_c_o / p.r_load * dt;
        self.energy.battery += emf * s.i_l * dt;
        self.energy.loss += (circuit::conduction_loss(path, &s, p, battery) + p.r_source * i_src * i_src) * dt;
        self.meter.add(&s, s.battery_voltage(battery));

        let mut next = CircuitState {
            i_l: s.i_l + dt * d.di_l,
            v_c_bus: s.v_c_bus + dt * d.dv_c_bus,
            v_c_o: s.v_c_o + dt * d.dv_c_o,
            soc: (s.soc + dt * d.dsoc).clamp(0.0, 1.0),
            t: (self.step_index + 1) as f64 * dt,
        };
        // body diodes cannot reverse: the branch opens at zero current
        match path {
            ConductionPath::D2 if next.i_l < 0.0 => next.i_l = 0.0,
            ConductionPath::D1 if next.i_l > 0.0 => next.i_l = 0.0,
            ConductionPath::Idle => next.i_l = 0.0,
            _ => {}
        }
        let v_src_next = sc.source.at(next.t);
        let sagged = next.v_c_bus;
        let q = circuit::pin_to_stiff_source(&mut next, v_src_next, p);
        if q > 0.0 {
            self.energy.source += v_src_next * q;
            self.energy.loss += 0.5 * q * (v_src_next - sagged);
        }

        self.check_bounds(&next)?;
        self.state = next;
        self.step_index += 1;
        self.tick += 1;
        if self.tick == self.steps_per_period {
            self.tick = 0;
            self.control_update();
        }
        self.ctrl.carrier_phase = f64::from(self.tick) / f64::from(self.steps_per_period);
        Ok(())
    }

    fn check_bounds(&self, s: &CircuitState) -> Result<(), SimError> {
        let lim = &self.scenario.limits;
        let checks = [
            ("i_l", s.i_l, lim.max_current),
            ("v_c_bus", s.v_c_bus, lim.max_voltage),
            ("v_c_o", s.v_c_o, lim.max_voltage),
        ];
        for (quantity, value, bound) in checks {
            if !value.is_finite() || value.abs() > bound {
                return Err(SimError::Diverged { t: s.t, quantity, value });
            }
        }
        if !s.soc.is_finite() {
            return Err(SimError::Diverged {
                t: s.t,
                quantity: "soc",
                value: s.soc,
            });
        }
        Ok(())
    }

    fn control_update(&mut self) {
        let sc = self.scenario;
        let cfg = &sc.controller;
        let (i_avg, v_bus_avg, v_load_avg, v_batt_avg) = self.meter.averages();
        self.meter = PeriodMeter::default();
        let v_src = sc.source.at(self.state.t);
        // open-circuit estimate from terminal voltage and current
        let v_rest = v_batt_avg - sc.battery.r_int * i_avg;
        let mode = control::select_mode(v_src, v_rest, self.state.soc, self.ctrl.mode, cfg);
        if mode != self.ctrl.mode {
            self.transitions.push(ModeTransition {
                t: self.state.t,
                from: self.ctrl.mode,
                to: mode,
            });
            let duty = control::preset_duty(mode, v_bus_avg, v_rest, cfg);
            self.ctrl = self.ctrl.enter(mode, duty, cfg);
        } else {
            self.ctrl = control::regulate(v_load_avg, i_avg, v_batt_avg, &self.ctrl, cfg);
        }
        self.quantize_duty();
    }
}

/// Recorded waveforms, one entry per kept step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub time: Vec<f64>,
    pub i_l: Vec<f64>,
    pub v_c_bus: Vec<f64>,
    pub v_c_o: Vec<f64>,
    pub v_batt_terminal: Vec<f64>,
    pub i_batt: Vec<f64>,
    pub soc: Vec<f64>,
    pub mode: Vec<Mode>,
    pub duty: Vec<f64>,
    pub s1: Vec<bool>,
    pub s2: Vec<bool>,
    pub v_source: Vec<f64>,
    pub e_source: Vec<f64>,
    pub e_load: Vec<f64>,
    pub e_battery: Vec<f64>,
    pub e_loss: Vec<f64>,
    /// Every supervisor mode change, including those between kept samples.
    pub transitions: Vec<ModeTransition>,
}

impl Trace {
    pub const COLUMNS: [&'static str; 16] = [
        "time",
        "i_l",
        "v_c_bus",
        "v_c_o",
        "v_batt_terminal",
        "i_batt",
        "soc",
        "mode",
        "duty",
        "s1",
        "s2",
        "v_source",
        "e_source",
        "e_load",
        "e_battery",
        "e_loss",
    ];

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    fn record(&mut self, engine: &Engine<'_>) {
        let s = engine.state();
        let gates = engine.gates();
        let e = engine.energy();
        self.time.push(s.t);
        self.i_l.push(s.i_l);
        self.v_c_bus.push(s.v_c_bus);
        self.v_c_o.push(s.v_c_o);
        self.v_batt_terminal.push(engine.battery_voltage());
        self.i_batt.push(s.i_l);
        self.soc.push(s.soc);
        self.mode.push(engine.controller().mode);
        self.duty.push(engine.applied_duty());
        self.s1.push(gates.s1_on);
        self.s2.push(gates.s2_on);
        self.v_source.push(engine.source_voltage());
        self.e_source.push(e.source);
        self.e_load.push(e.load);
        self.e_battery.push(e.battery);
        self.e_loss.push(e.loss);
    }

    /// CSV with a header row; time printed with 9 decimals.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", Self::COLUMNS.join(","))?;
        for k in 0..self.len() {
            writeln!(
                out,
                "{:.9},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                self.time[k],
                self.i_l[k],
                self.v_c_bus[k],
                self.v_c_o[k],
                self.v_batt_terminal[k],
                self.i_batt[k],
                self.soc[k],
                self.mode[k],
                self.duty[k],
                u8::from(self.s1[k]),
                u8::from(self.s2[k]),
                self.v_source[k],
                self.e_source[k],
                self.e_load[k],
                self.e_battery[k],
                self.e_loss[k],
            )?;
        }
        Ok(())
    }
}

/// Runs a scenario from its initial state to `t_end`.
pub fn run(scenario: &Scenario) -> Result<Trace, SimError> {
    let mut engine = Engine::new(scenario)?;
    let mut trace = Trace::default();
    trace.record(&engine);
    let total = scenario.total_steps();
    let keep = scenario.record_decimation as u64;
    for n in 1..=total {
        engine.step()?;
        if n % keep == 0 {
            trace.record(&engine);
        }
    }
    trace.transitions = engine.transitions().to_vec();
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ColumnStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub p2p: f64,
}

impl ColumnStats {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let (min, max, sum) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY, 0.0), |(lo, hi, s), &v| (lo.min(v), hi.max(v), s + v));
        Self {
            mean: sum / values.len() as f64,
            min,
            max,
            p2p: max - min,
        }
    }
}

/// Statistics over the last `n_periods` switching periods of a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowMetrics {
    pub n_periods: usize,
    pub samples_per_period: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub i_l: ColumnStats,
    pub v_c_bus: ColumnStats,
    pub v_c_o: ColumnStats,
    pub v_batt_terminal: ColumnStats,
    pub i_batt: ColumnStats,
    pub soc: ColumnStats,
    pub duty: ColumnStats,
    pub v_source: ColumnStats,
    /// Mean over periods of the within-period peak-to-peak inductor current.
    pub i_l_period_p2p: f64,
    /// Fraction of window samples in Charging, Discharging, Trickle.
    pub mode_occupancy: [f64; 3],
    /// Last two periods agree to 0.1 % in mean inductor current and load voltage.
    pub steady: bool,
}

impl WindowMetrics {
    pub fn occupancy(&self, mode: Mode) -> f64 {
        self.mode_occupancy[mode.index()]
    }
}

fn periods_agree(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-3 * a.abs().max(b.abs()).max(1e-6)
}

pub fn steady_window(trace: &Trace, n_periods: usize, f_s: f64) -> Result<WindowMetrics, SimError> {
    if trace.len() < 2 {
        return Err(SimError::BadTrace(format!("{} samples", trace.len())));
    }
    if n_periods == 0 || f_s.is_nan() || f_s <= 0.0 {
        return Err(SimError::BadTrace("need n_periods >= 1 and f_s > 0".into()));
    }
    let interval = trace.time[1] - trace.time[0];
    let ratio = 1.0 / (f_s * interval);
    let spp = ratio.round();
    if !(spp >= 1.0 && (ratio - spp).abs() <= 1e-3 * spp) {
        return Err(SimError::BadTrace(format!(
            "sample interval {interval:e} s does not divide the switching period"
        )));
    }
    let spp = spp as usize;
    let needed = n_periods * spp;
    if needed > trace.len() {
        return Err(SimError::WindowTooLong {
            needed,
            available: trace.len(),
        });
    }
    let start = trace.len() - needed;
    let w = |col: &[f64]| ColumnStats::of(&col[start..]);

    let i_l = &trace.i_l[start..];
    let i_l_period_p2p = i_l.chunks(spp).map(|c| ColumnStats::of(c).p2p).sum::<f64>() / n_periods as f64;

    let mut counts = [0usize; 3];
    for m in &trace.mode[start..] {
        counts[m.index()] += 1;
    }
    let mode_occupancy = counts.map(|c| c as f64 / needed as f64);

    let steady = n_periods >= 2 && {
        let last = trace.len() - spp;
        let prev = last - spp;
        let mean = |col: &[f64], a: usize| ColumnStats::of(&col[a..a + spp]).mean;
        periods_agree(mean(&trace.i_l, last), mean(&trace.i_l, prev))
            && periods_agree(mean(&trace.v_c_o, last), mean(&trace.v_c_o, prev))
    };

    Ok(WindowMetrics {
        n_periods,
        samples_per_period: spp,
        t_start: trace.time[start],
        t_end: trace.time[trace.len() - 1],
        i_l: w(&trace.i_l),
        v_c_bus: w(&trace.v_c_bus),
        v_c_o: w(&trace.v_c_o),
        v_batt_terminal: w(&trace.v_batt_terminal),
        i_batt: w(&trace.i_batt),
        soc: w(&trace.soc),
        duty: w(&trace.duty),
        v_source: w(&trace.v_source),
        i_l_period_p2p,
        mode_occupancy,
        steady,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn synthetic(values: Vec<f64>, interval: f64) -> Trace {
        let n = values.len();
        Trace {
            time: (0..n).map(|k| k as f64 * interval).collect(),
            i_l: values.clone(),
            v_c_bus: vec![24.0; n],
            v_c_o: vec![24.0; n],
            v_batt_terminal: vec![12.0; n],
            i_batt: values,
            soc: vec![0.5; n],
            mode: vec![Mode::Charging; n],
            duty: vec![0.5; n],
            s1: vec![false; n],
            s2: vec![false; n],
            v_source: vec![24.0; n],
            e_source: vec![0.0; n],
            e_load: vec![0.0; n],
            e_battery: vec![0.0; n],
            e_loss: vec![0.0; n],
            transitions: Vec::new(),
        }
    }

    #[test]
    fn profile_segments() {
        let p = SourceProfile::new(vec![
            SourceSegment::Hold { until: 1.0, volts: 24.0 },
            SourceSegment::Ramp {
                until: 3.0,
                from: 24.0,
                to: 0.0,
            },
        ])
        .unwrap();
        assert_eq!(p.at(0.0), 24.0);
        assert_eq!(p.at(0.999), 24.0);
        assert_eq!(p.at(2.0), 12.0);
        assert_eq!(p.at(5.0), 0.0);
        assert!(SourceProfile::new(vec![
            SourceSegment::Hold { until: 2.0, volts: 1.0 },
            SourceSegment::Hold { until: 1.0, volts: 1.0 },
        ])
        .is_err());
        assert!(SourceProfile::new(vec![]).is_err());
    }

    #[test]
    fn step_size_must_divide_period() {
        let mut sc = Scenario::nominal(SourceProfile::constant(24.0), 1e-3);
        sc.dt = 3.3e-7;
        assert!(matches!(sc.validate(), Err(SimError::Scenario(_))));
        sc.dt = 1e-5; // only 5 steps per period
        assert!(sc.validate().is_err());
        sc.dt = 5e-8;
        assert!(sc.validate().is_ok());
    }

    #[test]
    fn one_step_under_s1_follows_euler() {
        let mut sc = Scenario::nominal(SourceProfile::constant(24.0), 1e-3);
        sc.initial.mode = Some(Mode::Charging);
        sc.initial.duty = Some(0.5);
        let mut e = Engine::new(&sc).unwrap();
        assert!(e.gates().s1_on);
        e.step().unwrap();
        assert_eq!(e.last_path(), ConductionPath::S1);
        assert_relative_eq!(e.state().i_l, sc.dt * 12.0 / 1e-3, max_relative = 1e-12);
    }

    #[test]
    fn trickle_hold_keeps_battery_untouched() {
        let mut sc = Scenario::nominal(SourceProfile::constant(24.0), 1e-3);
        sc.initial.mode = Some(Mode::Trickle);
        sc.battery.v_emf_full = 13.0;
        sc.battery.v_emf_empty = 11.0;
        sc.battery.soc = 0.95;
        sc.controller.v_float = 12.5;
        let mut e = Engine::new(&sc).unwrap();
        let soc0 = e.state().soc;
        for _ in 0..5000 {
            e.step().unwrap();
            assert!(!e.gates().s1_on && !e.gates().s2_on);
            assert_eq!(e.state().i_l, 0.0);
        }
        assert_eq!(e.state().soc, soc0);
        assert_eq!(e.controller().mode, Mode::Trickle);
    }

    #[test]
    fn zero_horizon_keeps_initial_sample() {
        let sc = Scenario::nominal(SourceProfile::constant(24.0), 0.0);
        let t = run(&sc).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.time[0], 0.0);
        assert_eq!(t.v_c_bus[0], 24.0);
    }

    #[test]
    fn divergence_is_reported_with_time() {
        let mut sc = Scenario::nominal(SourceProfile::constant(24.0), 2e-3);
        sc.initial.mode = Some(Mode::Charging);
        sc.initial.duty = Some(0.95);
        sc.controller.i_charge_ref = 1000.0;
        sc.limits.max_current = 5.0;
        match run(&sc) {
            Err(SimError::Diverged { t, quantity, value }) => {
                assert_eq!(quantity, "i_l");
                assert!(value > 5.0);
                assert!(t > 0.0 && t < 2e-3);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn window_of_constant_column() {
        let t = synthetic(vec![2.5; 40], 1e-6);
        let m = steady_window(&t, 2, 1.0 / 20e-6).unwrap();
        assert_eq!(m.samples_per_period, 20);
        assert_eq!(m.i_l.mean, 2.5);
        assert_eq!(m.i_l.p2p, 0.0);
        assert!(m.steady);
        assert_eq!(m.occupancy(Mode::Charging), 1.0);
    }

    #[test]
    fn window_of_triangle_wave() {
        // amplitude 0.15 about 3.0, 20 samples per period
        let a = 0.15;
        let wave: Vec<f64> = (0..60)
            .map(|k| {
                let ph = (k % 20) as f64 / 20.0;
                let tri = if ph < 0.5 { 4.0 * ph - 1.0 } else { 3.0 - 4.0 * ph };
                3.0 + a * tri
            })
            .collect();
        let t = synthetic(wave, 1e-6);
        let m = steady_window(&t, 3, 1.0 / 20e-6).unwrap();
        assert_relative_eq!(m.i_l.p2p, 2.0 * a, max_relative = 1e-9);
        assert_relative_eq!(m.i_l_period_p2p, 2.0 * a, max_relative = 1e-9);
    }

    #[test]
    fn window_longer_than_trace_rejected() {
        let t = synthetic(vec![1.0; 30], 1e-6);
        assert!(matches!(
            steady_window(&t, 2, 1.0 / 20e-6),
            Err(SimError::WindowTooLong { needed: 40, available: 30 })
        ));
    }

    #[test]
    fn csv_header_and_time_format() {
        let sc = Scenario::nominal(SourceProfile::constant(24.0), 1e-7);
        let t = run(&sc).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), Trace::COLUMNS.join(","));
        assert!(lines.next().unwrap().starts_with("0.000000000,"));
        assert!(lines.next().unwrap().starts_with("0.000000050,"));
        assert!(lines.next().unwrap().starts_with("0.000000100,"));
    }
}
