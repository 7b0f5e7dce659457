//! Power stage of the bidirectional converter.
//!
//! The half-bridge sits between the DC link (PV side, `v_c_bus`) and the
//! battery. S1 is the high-side switch with body diode D1, S2 the low-side
//! switch with body diode D2, and the filtering inductor runs from the switch
//! node to the battery terminal. The load and output capacitor hang off the DC
//! link, optionally behind a link resistance `r_link`; with `r_link = 0` the two
//! capacitors share a single node.
//!
//! Sign convention: positive inductor current flows from the switch node into
//! the battery (charging), so the inductor current and the battery current are
//! the same quantity.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CircuitError {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("shoot-through: S1 and S2 commanded on together")]
    ShootThrough,
}

pub(crate) fn check(
    ok: bool,
    name: &'static str,
    value: f64,
    reason: &'static str,
) -> Result<(), CircuitError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(CircuitError::InvalidParameter {
            name,
            value,
            reason,
        })
    }
}

/// Fixed electrical parameters of the plant. SI units throughout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConverterParams {
    /// Nominal PV-side bus voltage.
    pub v_bus_nominal: f64,
    /// Filtering inductor.
    pub l_p: f64,
    /// DC bus capacitor.
    pub c_bus: f64,
    /// Output capacitor across the load.
    pub c_o: f64,
    /// Switching frequency.
    pub f_s: f64,
    /// Resistive load on the regulated bus.
    pub r_load: f64,
    /// MOSFET on-resistance.
    pub r_on: f64,
    /// Body-diode forward drop.
    pub v_f: f64,
    /// PV source series resistance. Zero means a stiff source.
    pub r_source: f64,
    /// Resistance between the bus capacitor and the load node. Zero merges
    /// the two capacitors into one node.
    pub r_link: f64,
}

impl ConverterParams {
    /// The design point: 24 V PV bus, 1 mH, 250 µF output capacitor, 20 kHz,
    /// 10 Ω load (2.4 A at 24 V), ideal devices.
    pub fn nominal() -> Self {
        Self {
            v_bus_nominal: 24.0,
            l_p: 1.0e-3,
            c_bus: 220.0e-6,
            c_o: 250.0e-6,
            f_s: 20.0e3,
            r_load: 10.0,
            r_on: 0.0,
            v_f: 0.0,
            r_source: 0.0,
            r_link: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        check(self.v_bus_nominal >= 0.0, "v_bus_nominal", self.v_bus_nominal, "must be >= 0")?;
        check(self.l_p > 0.0, "l_p", self.l_p, "must be > 0")?;
        check(self.c_bus > 0.0, "c_bus", self.c_bus, "must be > 0")?;
        check(self.c_o > 0.0, "c_o", self.c_o, "must be > 0")?;
        check(self.f_s > 0.0, "f_s", self.f_s, "must be > 0")?;
        check(self.r_load > 0.0, "r_load", self.r_load, "must be > 0")?;
        check(self.r_on >= 0.0, "r_on", self.r_on, "must be >= 0")?;
        check(self.v_f >= 0.0, "v_f", self.v_f, "must be >= 0")?;
        check(self.r_source >= 0.0, "r_source", self.r_source, "must be >= 0")?;
        check(self.r_link >= 0.0, "r_link", self.r_link, "must be >= 0")?;
        Ok(())
    }

    pub fn switching_period(&self) -> f64 {
        1.0 / self.f_s
    }

    /// True when bus and output capacitors form one node.
    pub fn merged_link(&self) -> bool {
        self.r_link == 0.0
    }

    /// Capacitance seen by the PV source when it charges the bus node.
    pub fn bus_node_capacitance(&self) -> f64 {
        if self.merged_link() {
            self.c_bus + self.c_o
        } else {
            self.c_bus
        }
    }
}

impl Default for ConverterParams {
    fn default() -> Self {
        Self::nominal()
    }
}

/// Thevenin battery: EMF linear in state of charge, series resistance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryModel {
    pub v_emf_full: f64,
    pub v_emf_empty: f64,
    pub r_int: f64,
    /// Charge capacity in ampere-seconds.
    pub capacity: f64,
    pub soc: f64,
}

impl BatteryModel {
    /// Fixed 12 V source: flat EMF, no internal resistance, 100 Ah.
    pub fn nominal() -> Self {
        Self {
            v_emf_full: 12.0,
            v_emf_empty: 12.0,
            r_int: 0.0,
            capacity: 100.0 * 3600.0,
            soc: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        check((0.0..=1.0).contains(&self.soc), "soc", self.soc, "must lie in [0, 1]")?;
        check(self.v_emf_empty >= 0.0, "v_emf_empty", self.v_emf_empty, "must be >= 0")?;
        check(
            self.v_emf_full >= self.v_emf_empty,
            "v_emf_full",
            self.v_emf_full,
            "must be >= v_emf_empty",
        )?;
        check(self.r_int >= 0.0, "r_int", self.r_int, "must be >= 0")?;
        check(self.capacity > 0.0, "capacity", self.capacity, "must be > 0")?;
        Ok(())
    }

    pub fn emf(&self, soc: f64) -> f64 {
        let soc = soc.clamp(0.0, 1.0);
        self.v_emf_empty + (self.v_emf_full - self.v_emf_empty) * soc
    }

    /// Terminal voltage at `soc` with `i_batt` flowing in (positive = charging).
    pub fn terminal_voltage_at(&self, soc: f64, i_batt: f64) -> f64 {
        self.emf(soc) + self.r_int * i_batt
    }
}

impl Default for BatteryModel {
    fn default() -> Self {
        Self::nominal()
    }
}

/// Terminal voltage using the model's own state of charge.
pub fn battery_terminal_voltage(battery: &BatteryModel, i_batt: f64) -> f64 {
    battery.terminal_voltage_at(battery.soc, i_batt)
}

/// Integrated state vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircuitState {
    pub i_l: f64,
    pub v_c_bus: f64,
    pub v_c_o: f64,
    pub soc: f64,
    pub t: f64,
}

impl CircuitState {
    pub fn is_finite(&self) -> bool {
        self.i_l.is_finite()
            && self.v_c_bus.is_finite()
            && self.v_c_o.is_finite()
            && self.soc.is_finite()
            && self.t.is_finite()
    }

    pub fn battery_voltage(&self, battery: &BatteryModel) -> f64 {
        battery.terminal_voltage_at(self.soc, self.i_l)
    }

    /// Energy held in the inductor and both capacitors.
    pub fn stored_energy(&self, params: &ConverterParams) -> f64 {
        let e_l = 0.5 * params.l_p * self.i_l * self.i_l;
        if params.merged_link() {
            e_l + 0.5 * (params.c_bus + params.c_o) * self.v_c_bus * self.v_c_bus
        } else {
            e_l + 0.5 * params.c_bus * self.v_c_bus * self.v_c_bus
                + 0.5 * params.c_o * self.v_c_o * self.v_c_o
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GateCommand {
    pub s1_on: bool,
    pub s2_on: bool,
}

impl GateCommand {
    pub const OFF: GateCommand = GateCommand {
        s1_on: false,
        s2_on: false,
    };

    pub fn is_shoot_through(&self) -> bool {
        self.s1_on && self.s2_on
    }
}

/// The single device carrying the inductor current.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConductionPath {
    S1,
    S2,
    D1,
    D2,
    /// Branch open, inductor current clamped at zero.
    Idle,
}

impl ConductionPath {
    /// S1 or D1: the switch node is tied to the DC bus.
    pub fn high_side(self) -> bool {
        matches!(self, ConductionPath::S1 | ConductionPath::D1)
    }

    /// S2 or D2: the switch node is tied to ground.
    pub fn low_side(self) -> bool {
        matches!(self, ConductionPath::S2 | ConductionPath::D2)
    }

    pub fn is_diode(self) -> bool {
        matches!(self, ConductionPath::D1 | ConductionPath::D2)
    }
}

/// Works out which device carries the inductor current for the commanded gates.
///
/// With both gates off the current freewheels through the body diode that
/// matches its direction. From zero current, D1 can still turn on when the
/// battery sits above the bus by more than a diode drop.
pub fn resolve_topology(
    gates: GateCommand,
    state: &CircuitState,
    params: &ConverterParams,
    battery: &BatteryModel,
) -> Result<ConductionPath, CircuitError> {
    if gates.is_shoot_through() {
        return Err(CircuitError::ShootThrough);
    }
    let path = if gates.s1_on {
        ConductionPath::S1
    } else if gates.s2_on {
        ConductionPath::S2
    } else if state.i_l > 0.0 {
        ConductionPath::D2
    } else if state.i_l < 0.0 || battery.emf(state.soc) > state.v_c_bus + params.v_f {
        ConductionPath::D1
    } else {
        ConductionPath::Idle
    };
    Ok(path)
}

/// Voltage across the filtering inductor, switch-node side positive.
pub fn inductor_voltage(
    path: ConductionPath,
    state: &CircuitState,
    params: &ConverterParams,
    battery: &BatteryModel,
) -> f64 {
    let v_batt = state.battery_voltage(battery);
    let i = state.i_l;
    match path {
        ConductionPath::S1 => state.v_c_bus - params.r_on * i - v_batt,
        ConductionPath::S2 => -params.r_on * i - v_batt,
        // D1 carries negative current, so the switch node sits one drop above the bus.
        ConductionPath::D1 => state.v_c_bus + params.v_f - v_batt,
        ConductionPath::D2 => -params.v_f - v_batt,
        ConductionPath::Idle => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateDerivative {
    pub di_l: f64,
    pub dv_c_bus: f64,
    pub dv_c_o: f64,
    pub dsoc: f64,
}

/// Current drawn from the bus node by the half-bridge.
pub fn bus_branch_current(path: ConductionPath, state: &CircuitState) -> f64 {
    if path.high_side() {
        state.i_l
    } else {
        0.0
    }
}

/// Current from the bus capacitor into the load node through `r_link`.
pub fn link_current(state: &CircuitState, params: &ConverterParams) -> f64 {
    if params.merged_link() {
        0.0
    } else {
        (state.v_c_bus - state.v_c_o) / params.r_link
    }
}

pub fn derivatives(
    state: &CircuitState,
    path: ConductionPath,
    params: &ConverterParams,
    battery: &BatteryModel,
    source_current: f64,
) -> StateDerivative {
    let di_l = inductor_voltage(path, state, params, battery) / params.l_p;
    let i_branch = bus_branch_current(path, state);
    let i_load = state.v_c_o / params.r_load;
    let (dv_c_bus, dv_c_o) = if params.merged_link() {
        let dv = (source_current - i_branch - i_load) / (params.c_bus + params.c_o);
        (dv, dv)
    } else {
        let i_link = link_current(state, params);
        (
            (source_current - i_branch - i_link) / params.c_bus,
            (i_link - i_load) / params.c_o,
        )
    };
    StateDerivative {
        di_l,
        dv_c_bus,
        dv_c_o,
        dsoc: state.i_l / battery.capacity,
    }
}

/// Current delivered by a resistive PV source through its blocking diode.
/// A stiff source (`r_source = 0`) contributes nothing here; see
/// [`pin_to_stiff_source`].
pub fn source_current(v_source: f64, state: &CircuitState, params: &ConverterParams) -> f64 {
    if params.r_source > 0.0 {
        ((v_source - state.v_c_bus) / params.r_source).max(0.0)
    } else {
        0.0
    }
}

/// Restores the bus node to a stiff source voltage when it has sagged below
/// it, returning the charge the source delivered. The blocking diode keeps the
/// source from sinking current, so a bus above the source is left alone.
pub fn pin_to_stiff_source(
    state: &mut CircuitState,
    v_source: f64,
    params: &ConverterParams,
) -> f64 {
    if params.r_source > 0.0 || state.v_c_bus >= v_source {
        return 0.0;
    }
    let charge = params.bus_node_capacitance() * (v_source - state.v_c_bus);
    state.v_c_bus = v_source;
    if params.merged_link() {
        state.v_c_o = v_source;
    }
    charge
}

/// Power dissipated in the non-ideal elements for the given path.
pub fn conduction_loss(
    path: ConductionPath,
    state: &CircuitState,
    params: &ConverterParams,
    battery: &BatteryModel,
) -> f64 {
    let i = state.i_l;
    let device = match path {
        ConductionPath::S1 | ConductionPath::S2 => params.r_on * i * i,
        ConductionPath::D1 | ConductionPath::D2 => params.v_f * i.abs(),
        ConductionPath::Idle => 0.0,
    };
    let i_link = link_current(state, params);
    device + battery.r_int * i * i + params.r_link * i_link * i_link
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn state(i_l: f64, v_bus: f64) -> CircuitState {
        CircuitState {
            i_l,
            v_c_bus: v_bus,
            v_c_o: v_bus,
            soc: 1.0,
            t: 0.0,
        }
    }

    fn setup() -> (ConverterParams, BatteryModel) {
        (ConverterParams::nominal(), BatteryModel::nominal())
    }

    #[test]
    fn s1_gate_selects_s1() {
        let (p, b) = setup();
        let gates = GateCommand {
            s1_on: true,
            s2_on: false,
        };
        assert_eq!(resolve_topology(gates, &state(1.0, 24.0), &p, &b), Ok(ConductionPath::S1));
    }

    #[test]
    fn zero_current_with_gates_off_is_idle() {
        let (p, b) = setup();
        assert_eq!(
            resolve_topology(GateCommand::OFF, &state(0.0, 24.0), &p, &b),
            Ok(ConductionPath::Idle)
        );
    }

    #[test]
    fn negative_freewheel_uses_d1() {
        let (p, b) = setup();
        assert_eq!(
            resolve_topology(GateCommand::OFF, &state(-0.8, 24.0), &p, &b),
            Ok(ConductionPath::D1)
        );
        assert_eq!(
            resolve_topology(GateCommand::OFF, &state(0.8, 24.0), &p, &b),
            Ok(ConductionPath::D2)
        );
    }

    #[test]
    fn d1_turns_on_when_bus_below_battery() {
        let (p, b) = setup();
        assert_eq!(
            resolve_topology(GateCommand::OFF, &state(0.0, 5.0), &p, &b),
            Ok(ConductionPath::D1)
        );
    }

    #[test]
    fn both_gates_rejected() {
        let (p, b) = setup();
        let gates = GateCommand {
            s1_on: true,
            s2_on: true,
        };
        assert_eq!(
            resolve_topology(gates, &state(0.0, 24.0), &p, &b),
            Err(CircuitError::ShootThrough)
        );
    }

    #[test]
    fn inductor_voltage_per_path() {
        let (p, b) = setup();
        let s = state(1.0, 24.0);
        assert_eq!(inductor_voltage(ConductionPath::S1, &s, &p, &b), 12.0);
        assert_eq!(inductor_voltage(ConductionPath::D1, &s, &p, &b), 12.0);
        assert_eq!(inductor_voltage(ConductionPath::D2, &s, &p, &b), -12.0);
        assert_eq!(inductor_voltage(ConductionPath::S2, &s, &p, &b), -12.0);
        assert_eq!(inductor_voltage(ConductionPath::Idle, &s, &p, &b), 0.0);
    }

    #[test]
    fn parasitic_drops_oppose_current() {
        let (mut p, b) = setup();
        p.r_on = 0.1;
        p.v_f = 0.7;
        let s = state(2.0, 24.0);
        assert_relative_eq!(inductor_voltage(ConductionPath::S1, &s, &p, &b), 11.8);
        assert_relative_eq!(inductor_voltage(ConductionPath::D2, &s, &p, &b), -12.7);
        let s = state(-2.0, 24.0);
        assert_relative_eq!(inductor_voltage(ConductionPath::S2, &s, &p, &b), -11.8);
        assert_relative_eq!(inductor_voltage(ConductionPath::D1, &s, &p, &b), 12.7);
    }

    #[test]
    fn slopes_match_design_point() {
        let (p, b) = setup();
        let s = state(1.0, 24.0);
        let d = derivatives(&s, ConductionPath::S1, &p, &b, 0.0);
        assert_relative_eq!(d.di_l, 12_000.0, max_relative = 1e-12);
        let d = derivatives(&s, ConductionPath::D2, &p, &b, 0.0);
        assert_relative_eq!(d.di_l, -12_000.0, max_relative = 1e-12);
        let d = derivatives(&state(0.0, 24.0), ConductionPath::Idle, &p, &b, 0.0);
        assert_eq!(d.di_l, 0.0);
    }

    #[test]
    fn discharge_current_charges_bus() {
        let (p, b) = setup();
        let mut s = state(-5.0, 24.0);
        s.v_c_o = 24.0;
        let d = derivatives(&s, ConductionPath::D1, &p, &b, 0.0);
        // 5 A in, 2.4 A to the load, shared by both capacitors
        assert_relative_eq!(d.dv_c_bus, 2.6 / 470e-6, max_relative = 1e-12);
        assert_eq!(d.dv_c_bus, d.dv_c_o);
        // low-side conduction leaves the bus to the load alone
        let d = derivatives(&s, ConductionPath::S2, &p, &b, 0.0);
        assert_relative_eq!(d.dv_c_bus, -2.4 / 470e-6, max_relative = 1e-12);
        assert!(d.dsoc < 0.0);
    }

    #[test]
    fn split_link_feeds_load_node() {
        let (mut p, b) = setup();
        p.r_link = 0.05;
        let s = CircuitState {
            i_l: 0.0,
            v_c_bus: 24.0,
            v_c_o: 23.9,
            soc: 1.0,
            t: 0.0,
        };
        let d = derivatives(&s, ConductionPath::Idle, &p, &b, 0.0);
        assert_relative_eq!(d.dv_c_bus, -2.0 / p.c_bus, max_relative = 1e-9);
        assert_relative_eq!(d.dv_c_o, (2.0 - 2.39) / p.c_o, max_relative = 1e-9);
    }

    #[test]
    fn terminal_voltage_follows_thevenin_model() {
        let b = BatteryModel::nominal();
        assert_eq!(battery_terminal_voltage(&BatteryModel { soc: 1.0, ..b }, 0.0), 12.0);
        let b = BatteryModel {
            r_int: 0.1,
            soc: 1.0,
            ..b
        };
        assert_relative_eq!(battery_terminal_voltage(&b, 3.0), 12.3);
        let b = BatteryModel {
            v_emf_empty: 11.0,
            v_emf_full: 13.0,
            r_int: 0.0,
            soc: 0.25,
            ..b
        };
        assert_relative_eq!(battery_terminal_voltage(&b, 0.0), 11.5);
    }

    #[test]
    fn stiff_source_pins_bus_only_from_below() {
        let p = ConverterParams::nominal();
        let mut s = state(0.0, 23.9);
        let q = pin_to_stiff_source(&mut s, 24.0, &p);
        assert_relative_eq!(q, 0.1 * 470e-6, max_relative = 1e-9);
        assert_eq!(s.v_c_bus, 24.0);
        let mut s = state(0.0, 24.5);
        assert_eq!(pin_to_stiff_source(&mut s, 24.0, &p), 0.0);
        assert_eq!(s.v_c_bus, 24.5);
    }

    #[test]
    fn blocking_diode_stops_reverse_source_current() {
        let mut p = ConverterParams::nominal();
        p.r_source = 2.0;
        assert_relative_eq!(source_current(30.0, &state(0.0, 24.0), &p), 3.0);
        assert_eq!(source_current(20.0, &state(0.0, 24.0), &p), 0.0);
    }

    #[test]
    fn parameter_validation() {
        let mut p = ConverterParams::nominal();
        assert!(p.validate().is_ok());
        p.l_p = 0.0;
        assert!(matches!(
            p.validate(),
            Err(CircuitError::InvalidParameter { name: "l_p", .. })
        ));
        let mut b = BatteryModel::nominal();
        b.soc = 1.5;
        assert!(b.validate().is_err());
        b.soc = 0.5;
        b.v_emf_empty = 13.0;
        assert!(b.validate().is_err());
    }
}
