//! Converter design calculator: duty ratios, inductance bounds and output
//! capacitance for a given operating point.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DesignError {
    #[error("buck cannot step up: v_o = {v_o} V exceeds v_s = {v_s} V")]
    BuckStepUp { v_s: f64, v_o: f64 },
    #[error("boost cannot step down: v_in = {v_in} V exceeds v_o = {v_o} V")]
    BoostStepDown { v_in: f64, v_o: f64 },
    #[error("ripple voltage must be positive (got {0} V)")]
    ZeroRipple(f64),
    #[error("invalid design input `{name}` = {value}: {reason}")]
    InvalidInput {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
}

fn require(ok: bool, name: &'static str, value: f64, reason: &'static str) -> Result<(), DesignError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(DesignError::InvalidInput { name, value, reason })
    }
}

/// Operating point the converter is designed around.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignSpec {
    /// PV array voltage.
    pub v_p: f64,
    /// PV array current.
    pub i_p: f64,
    /// Battery voltage.
    pub v_b: f64,
    pub f_s: f64,
    pub v_load: f64,
    pub i_load: f64,
    /// Target peak-to-peak inductor ripple current.
    pub delta_i: f64,
    /// Output voltage ripple as a fraction of `v_load`.
    pub ripple_fraction: f64,
}

impl DesignSpec {
    /// 24 V / 3 A array, 12 V battery, 20 kHz, 24 V / 2.4 A load, 0.3 A ripple, 1 %.
    pub fn reference() -> Self {
        Self {
            v_p: 24.0,
            i_p: 3.0,
            v_b: 12.0,
            f_s: 20.0e3,
            v_load: 24.0,
            i_load: 2.4,
            delta_i: 0.3,
            ripple_fraction: 0.01,
        }
    }

    pub fn validate(&self) -> Result<(), DesignError> {
        require(self.v_b > 0.0, "v_b", self.v_b, "must be > 0")?;
        require(self.v_p > self.v_b, "v_p", self.v_p, "must exceed v_b")?;
        require(self.v_load > self.v_b, "v_load", self.v_load, "must exceed v_b")?;
        require(self.i_p >= 0.0, "i_p", self.i_p, "must be >= 0")?;
        require(self.i_load > 0.0, "i_load", self.i_load, "must be > 0")?;
        require(self.f_s > 0.0, "f_s", self.f_s, "must be > 0")?;
        require(self.delta_i > 0.0, "delta_i", self.delta_i, "must be > 0")?;
        require(
            self.ripple_fraction > 0.0 && self.ripple_fraction < 1.0,
            "ripple_fraction",
            self.ripple_fraction,
            "must lie in (0, 1)",
        )?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignResult {
    /// Buck (charging) duty.
    pub d1: f64,
    /// Boost (discharging) duty.
    pub d2: f64,
    /// Minimum inductance from the buck ripple requirement.
    pub l_min: f64,
    /// Inductance from the boost ripple requirement.
    pub l_boost: f64,
    pub c_out: f64,
    /// Absolute output ripple voltage.
    pub dv: f64,
}

/// Ideal buck conversion ratio `v_o / v_s`.
pub fn buck_duty(v_s: f64, v_o: f64) -> Result<f64, DesignError> {
    require(v_s > 0.0, "v_s", v_s, "must be > 0")?;
    require(v_o > 0.0, "v_o", v_o, "must be > 0")?;
    if v_o > v_s {
        return Err(DesignError::BuckStepUp { v_s, v_o });
    }
    Ok(v_o / v_s)
}

/// Ideal boost duty `(v_o - v_in) / v_o`.
pub fn boost_duty(v_in: f64, v_o: f64) -> Result<f64, DesignError> {
    require(v_in > 0.0, "v_in", v_in, "must be > 0")?;
    require(v_o > 0.0, "v_o", v_o, "must be > 0")?;
    if v_in > v_o {
        return Err(DesignError::BoostStepDown { v_in, v_o });
    }
    Ok((v_o - v_in) / v_o)
}

fn check_ripple_inputs(d: f64, f_s: f64, delta_i: f64) -> Result<(), DesignError> {
    require((0.0..=1.0).contains(&d), "duty", d, "must lie in [0, 1]")?;
    require(f_s > 0.0, "f_s", f_s, "must be > 0")?;
    require(delta_i > 0.0, "delta_i", delta_i, "must be > 0")
}

/// `v_p·d1·(1 − d1) / (f_s·ΔI)`
pub fn min_inductance_buck(v_p: f64, d1: f64, f_s: f64, delta_i: f64) -> Result<f64, DesignError> {
    check_ripple_inputs(d1, f_s, delta_i)?;
    Ok(v_p * d1 * (1.0 - d1) / (f_s * delta_i))
}

/// `v_b·d2 / (f_s·ΔI)`
pub fn min_inductance_boost(v_b: f64, d2: f64, f_s: f64, delta_i: f64) -> Result<f64, DesignError> {
    check_ripple_inputs(d2, f_s, delta_i)?;
    Ok(v_b * d2 / (f_s * delta_i))
}

/// Capacitance that holds the load for `on_time` with a droop of `dv`.
pub fn output_capacitance(i_o: f64, on_time: f64, dv: f64) -> Result<f64, DesignError> {
    if dv == 0.0 {
        return Err(DesignError::ZeroRipple(dv));
    }
    require(dv > 0.0, "dv", dv, "must be > 0")?;
    require(i_o >= 0.0, "i_o", i_o, "must be >= 0")?;
    require(on_time >= 0.0, "on_time", on_time, "must be >= 0")?;
    Ok(i_o * on_time / dv)
}

/// Full design pass. The capacitor hold-up time is `d1 / f_s`, the switching
/// period scaled by the buck duty.
pub fn design(spec: &DesignSpec) -> Result<DesignResult, DesignError> {
    spec.validate()?;
    let d1 = buck_duty(spec.v_p, spec.v_b)?;
    let d2 = boost_duty(spec.v_b, spec.v_load)?;
    let l_min = min_inductance_buck(spec.v_p, d1, spec.f_s, spec.delta_i)?;
    let l_boost = min_inductance_boost(spec.v_b, d2, spec.f_s, spec.delta_i)?;
    let dv = spec.ripple_fraction * spec.v_load;
    let c_out = output_capacitance(spec.i_load, d1 / spec.f_s, dv)?;
    Ok(DesignResult {
        d1,
        d2,
        l_min,
        l_boost,
        c_out,
        dv,
    })
}
