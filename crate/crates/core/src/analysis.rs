//! Ripple predictions, current envelopes and line/load regulation metrics.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("regulation needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("duplicate setting {0} in regulation rows")]
    DuplicateSetting(f64),
    #[error("row {row}: {reason}")]
    BadRow { row: usize, reason: String },
    #[error("nominal voltage must be positive (got {0})")]
    BadNominal(f64),
}

/// Ripple from the off-interval slope together with the on-interval form of
/// the same quantity. The two agree only at the converter's steady duty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RipplePrediction {
    pub ripple: f64,
    pub companion: f64,
}

impl RipplePrediction {
    pub fn forms_agree(&self, rel_tol: f64) -> bool {
        (self.ripple - self.companion).abs() <= rel_tol * self.ripple.abs().max(self.companion.abs())
    }
}

/// Charging (buck) ripple `v_batt·(1 − d) / (l_p·f_s)`; the companion form is
/// `(v_bus − v_batt)·d / (l_p·f_s)`.
pub fn predicted_ripple_buck(v_bus: f64, v_batt: f64, l_p: f64, d: f64, f_s: f64) -> RipplePrediction {
    let k = l_p * f_s;
    RipplePrediction {
        ripple: v_batt * (1.0 - d) / k,
        companion: (v_bus - v_batt) * d / k,
    }
}

/// Discharging (boost) ripple `v_batt·d / (l_p·f_s)`; the companion form is
/// `(v_bus − v_batt)·(1 − d) / (l_p·f_s)`.
pub fn predicted_ripple_boost(v_bus: f64, v_batt: f64, l_p: f64, d: f64, f_s: f64) -> RipplePrediction {
    let k = l_p * f_s;
    RipplePrediction {
        ripple: v_batt * d / k,
        companion: (v_bus - v_batt) * (1.0 - d) / k,
    }
}

/// Valley and peak of the inductor current for an average `i_star`.
pub fn current_envelope(i_star: f64, delta_i: f64) -> (f64, f64) {
    crate::control::desired_current_envelope(i_star, delta_i)
}

/// One operating point of a regulation sweep. `setting` is an input voltage
/// for line regulation or a load resistance for load regulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegulationRow {
    pub setting: f64,
    pub v_out: f64,
    pub i_out: f64,
}

impl RegulationRow {
    pub fn new(setting: f64, v_out: f64, i_out: f64) -> Self {
        Self { setting, v_out, i_out }
    }
}

fn checked_sorted(rows: &[RegulationRow]) -> Result<Vec<RegulationRow>, AnalysisError> {
    if rows.len() < 2 {
        return Err(AnalysisError::TooFewRows(rows.len()));
    }
    for (k, r) in rows.iter().enumerate() {
        let finite = r.setting.is_finite() && r.v_out.is_finite() && r.i_out.is_finite();
        if !finite || r.v_out < 0.0 {
            return Err(AnalysisError::BadRow {
                row: k + 1,
                reason: "values must be finite and v_out >= 0".into(),
            });
        }
    }
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| a.setting.total_cmp(&b.setting));
    if let Some(w) = sorted.windows(2).find(|w| w[0].setting == w[1].setting) {
        return Err(AnalysisError::DuplicateSetting(w[0].setting));
    }
    Ok(sorted)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairRegulation {
    pub from: f64,
    pub to: f64,
    /// Percent.
    pub value: f64,
}

/// Line regulation in percent, per consecutive pair of input settings.
#[derive(Debug, Clone, PartialEq)]
pub struct LineRegulation {
    /// Pairs in ascending input order.
    pub pairs: Vec<PairRegulation>,
    /// First step up from the lowest input; the headline figure.
    pub headline: f64,
    /// Worst consecutive pair.
    pub max_pair: f64,
    /// Lowest to highest input in one ratio.
    pub full_span: f64,
}

fn ratio_percent(a: &RegulationRow, b: &RegulationRow) -> f64 {
    (b.v_out - a.v_out).abs() * 100.0 / (b.setting - a.setting).abs()
}

/// `ΔV_out·100 % / ΔV_in` between consecutive rows after sorting by input.
pub fn line_regulation(rows: &[RegulationRow]) -> Result<LineRegulation, AnalysisError> {
    let sorted = checked_sorted(rows)?;
    let pairs: Vec<PairRegulation> = sorted
        .windows(2)
        .map(|w| PairRegulation {
            from: w[0].setting,
            to: w[1].setting,
            value: ratio_percent(&w[0], &w[1]),
        })
        .collect();
    let max_pair = pairs.iter().map(|p| p.value).fold(0.0, f64::max);
    Ok(LineRegulation {
        headline: pairs[0].value,
        max_pair,
        full_span: ratio_percent(&sorted[0], &sorted[sorted.len() - 1]),
        pairs,
    })
}

/// `(V_min_load − V_full_load)·100 % / v_nominal`, where full load is the
/// smallest resistance and minimum load the largest.
pub fn load_regulation(rows: &[RegulationRow], v_nominal: f64) -> Result<f64, AnalysisError> {
    if !(v_nominal > 0.0 && v_nominal.is_finite()) {
        return Err(AnalysisError::BadNominal(v_nominal));
    }
    let sorted = checked_sorted(rows)?;
    let full_load = sorted[0];
    let min_load = sorted[sorted.len() - 1];
    Ok((min_load.v_out - full_load.v_out) * 100.0 / v_nominal)
}

/// Three significant figures with trailing zeros dropped: 0.0600 → "0.06".
pub fn format_percent(value: f64) -> String {
    if value == 0.0 || !value.is_finite() {
        return format!("{value}");
    }
    let digits = 2 - value.abs().log10().floor() as i32;
    let text = format!("{:.*}", digits.max(0) as usize, value);
    if text.contains('.') {
        text.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        text
    }
}
