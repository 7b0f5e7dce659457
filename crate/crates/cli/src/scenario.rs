//! Scenario files.
//!
//! TOML with five optional sections and one required one:
//!
//! ```toml
//! [converter]      # v_bus_nominal l_p c_bus c_o f_s r_load r_on v_f r_source r_link
//! [battery]        # v_emf_full v_emf_empty r_int capacity soc
//! [controller]     # any ControllerConfig field
//! [[source]]       # until + volts, or until + from + to; `until` may be
//!                  # left off the last segment
//! [initial]        # i_l v_c_bus v_c_o mode duty
//! [limits]         # max_current max_voltage
//! [sim]            # t_end (required), dt, record_decimation
//! ```
//!
//! Values are SI base units; strings such as `"1m"` or `"20k"` take a multiplier.
//! Anything left out falls back to the design-point plant.

use std::fmt;
use std::path::Path;

use bdc_core::control::ControllerConfig;
use bdc_core::sim::{DivergenceLimits, Scenario, SourceProfile, SourceSegment, WarmStart};
use bdc_core::{BatteryModel, ConverterParams, Mode};
use serde::de::{self, Deserializer};
use serde::Deserialize;

use crate::si::Si;

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ParseError {}

fn plain(message: impl Into<String>) -> ParseError {
    ParseError {
        line: None,
        message: message.into(),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConverterSection {
    v_bus_nominal: Option<Si>,
    l_p: Option<Si>,
    c_bus: Option<Si>,
    c_o: Option<Si>,
    f_s: Option<Si>,
    r_load: Option<Si>,
    r_on: Option<Si>,
    v_f: Option<Si>,
    r_source: Option<Si>,
    r_link: Option<Si>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct BatterySection {
    v_emf_full: Option<Si>,
    v_emf_empty: Option<Si>,
    r_int: Option<Si>,
    capacity: Option<Si>,
    soc: Option<Si>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControllerSection {
    v_ref_load: Option<Si>,
    i_charge_ref: Option<Si>,
    i_discharge_ref: Option<Si>,
    v_float: Option<Si>,
    v_bus_low: Option<Si>,
    v_bus_high: Option<Si>,
    duty_step: Option<Si>,
    current_step: Option<Si>,
    coarse_current_step: Option<Si>,
    coarse_band: Option<Si>,
    duty_min: Option<Si>,
    duty_max: Option<Si>,
    trickle_exit_margin: Option<Si>,
    trend_gain: Option<Si>,
    voltage_trend_gain: Option<Si>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentEntry {
    until: Option<Si>,
    volts: Option<Si>,
    from: Option<Si>,
    to: Option<Si>,
}

#[derive(Debug, Clone, Copy)]
struct ModeName(Mode);

impl<'de> Deserialize<'de> for ModeName {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map(ModeName).map_err(de::Error::custom)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialSection {
    i_l: Option<Si>,
    v_c_bus: Option<Si>,
    v_c_o: Option<Si>,
    mode: Option<ModeName>,
    duty: Option<Si>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LimitsSection {
    max_current: Option<Si>,
    max_voltage: Option<Si>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimSection {
    t_end: Si,
    dt: Option<Si>,
    record_decimation: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    #[serde(default)]
    converter: ConverterSection,
    #[serde(default)]
    battery: BatterySection,
    #[serde(default)]
    controller: ControllerSection,
    #[serde(default)]
    source: Vec<SegmentEntry>,
    #[serde(default)]
    initial: InitialSection,
    #[serde(default)]
    limits: LimitsSection,
    sim: Option<SimSection>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn set(slot: &mut f64, value: Option<Si>) {
    if let Some(Si(v)) = value {
        *slot = v;
    }
}

fn source_profile(entries: &[SegmentEntry], default_volts: f64) -> Result<SourceProfile, ParseError> {
    if entries.is_empty() {
        return Ok(SourceProfile::constant(default_volts));
    }
    let mut segments = Vec::with_capacity(entries.len());
    for (k, e) in entries.iter().enumerate() {
        let last = k + 1 == entries.len();
        let until = match (e.until, last) {
            (Some(Si(u)), _) => u,
            (None, true) => f64::INFINITY,
            (None, false) => return Err(plain(format!("source segment {}: `until` is required", k + 1))),
        };
        let seg = match (e.volts, e.from, e.to) {
            (Some(Si(volts)), None, None) => SourceSegment::Hold { until, volts },
            (None, Some(Si(from)), Some(Si(to))) => SourceSegment::Ramp { until, from, to },
            _ => {
                return Err(plain(format!(
                    "source segment {}: give either `volts` or both `from` and `to`",
                    k + 1
                )))
            }
        };
        segments.push(seg);
    }
    SourceProfile::new(segments).map_err(|e| plain(e.to_string()))
}

/// Parses scenario text into a validated [`Scenario`].
pub fn parse_scenario(text: &str) -> Result<Scenario, ParseError> {
    let doc: ScenarioDoc = toml::from_str(text).map_err(|e| ParseError {
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    let sim = doc.sim.ok_or_else(|| ParseError {
        line: Some(line_of(text, text.len())),
        message: if text.trim().is_empty() {
            "scenario is empty".to_string()
        } else {
            "missing [sim] section with t_end".to_string()
        },
    })?;

    let mut p = ConverterParams::nominal();
    let c = &doc.converter;
    set(&mut p.v_bus_nominal, c.v_bus_nominal);
    set(&mut p.l_p, c.l_p);
    set(&mut p.c_bus, c.c_bus);
    set(&mut p.c_o, c.c_o);
    set(&mut p.f_s, c.f_s);
    set(&mut p.r_load, c.r_load);
    set(&mut p.r_on, c.r_on);
    set(&mut p.v_f, c.v_f);
    set(&mut p.r_source, c.r_source);
    set(&mut p.r_link, c.r_link);

    let mut b = BatteryModel::nominal();
    let bs = &doc.battery;
    set(&mut b.v_emf_full, bs.v_emf_full);
    set(&mut b.v_emf_empty, bs.v_emf_empty);
    set(&mut b.r_int, bs.r_int);
    set(&mut b.capacity, bs.capacity);
    set(&mut b.soc, bs.soc);

    let cs = &doc.controller;
    let v_ref = cs.v_ref_load.map_or(p.v_bus_nominal, |Si(v)| v);
    let mut k = ControllerConfig::for_plant(v_ref, b.emf(0.5));
    set(&mut k.i_charge_ref, cs.i_charge_ref);
    set(&mut k.i_discharge_ref, cs.i_discharge_ref);
    set(&mut k.v_float, cs.v_float);
    set(&mut k.v_bus_low, cs.v_bus_low);
    set(&mut k.v_bus_high, cs.v_bus_high);
    set(&mut k.duty_step, cs.duty_step);
    set(&mut k.current_step, cs.current_step);
    set(&mut k.coarse_current_step, cs.coarse_current_step);
    set(&mut k.coarse_band, cs.coarse_band);
    set(&mut k.duty_min, cs.duty_min);
    set(&mut k.duty_max, cs.duty_max);
    set(&mut k.trickle_exit_margin, cs.trickle_exit_margin);
    set(&mut k.trend_gain, cs.trend_gain);
    set(&mut k.voltage_trend_gain, cs.voltage_trend_gain);

    let mut limits = DivergenceLimits::default();
    set(&mut limits.max_current, doc.limits.max_current);
    set(&mut limits.max_voltage, doc.limits.max_voltage);

    let i = &doc.initial;
    let initial = WarmStart {
        i_l: i.i_l.map(|s| s.0),
        v_c_bus: i.v_c_bus.map(|s| s.0),
        v_c_o: i.v_c_o.map(|s| s.0),
        mode: i.mode.map(|m| m.0),
        duty: i.duty.map(|s| s.0),
    };

    let scenario = Scenario {
        dt: sim.dt.map_or(p.switching_period() / 1000.0, |s| s.0),
        source: source_profile(&doc.source, p.v_bus_nominal)?,
        params: p,
        battery: b,
        controller: k,
        t_end: sim.t_end.0,
        record_decimation: sim.record_decimation.unwrap_or(1),
        initial,
        limits,
    };
    scenario.validate().map_err(|e| plain(e.to_string()))?;
    Ok(scenario)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ParseError> {
    let text = std::fs::read_to_string(path).map_err(|e| plain(format!("cannot read {}: {e}", path.display())))?;
    parse_scenario(&text)
}
