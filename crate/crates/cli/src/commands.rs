//! The three subcommands, as functions from inputs to report text.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use bdc_core::analysis::{self, format_percent};
use bdc_core::design::{self, DesignResult, DesignSpec};
use bdc_core::sim::{self, Scenario, SimError, Trace, WindowMetrics};
use bdc_core::Mode;
use serde::Deserialize;
use thiserror::Error;

use crate::scenario;
use crate::si::Si;
use crate::tables::{self, CsvKind};

#[derive(Debug, Error, PartialEq)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Divergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Divergence(_) => 2,
        }
    }
}

fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum OutputFormat {
    #[default]
    Table,
    Csv,
}

/// Four significant figures, trailing zeros dropped.
pub fn sig4(value: f64) -> String {
    if value == 0.0 || !value.is_finite() {
        return format!("{value}");
    }
    let digits = (3 - value.abs().log10().floor() as i32).max(0) as usize;
    let text = format!("{value:.digits$}");
    if text.contains('.') {
        text.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        text
    }
}

// ---- design ----

/// Design inputs, from flags or a spec file. Unset fields are an error.
#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignInputs {
    pub v_p: Option<Si>,
    pub i_p: Option<Si>,
    pub v_b: Option<Si>,
    pub f_s: Option<Si>,
    pub v_load: Option<Si>,
    pub i_load: Option<Si>,
    pub delta_i: Option<Si>,
    pub ripple_fraction: Option<Si>,
}

impl DesignInputs {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| input(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| {
            let line = e.span().map_or(1, |s| text[..s.start].matches('\n').count() + 1);
            input(format!("{}: line {line}: {}", path.display(), e.message()))
        })
    }

    /// Fields set in `other` win.
    pub fn overlay(self, other: DesignInputs) -> Self {
        Self {
            v_p: other.v_p.or(self.v_p),
            i_p: other.i_p.or(self.i_p),
            v_b: other.v_b.or(self.v_b),
            f_s: other.f_s.or(self.f_s),
            v_load: other.v_load.or(self.v_load),
            i_load: other.i_load.or(self.i_load),
            delta_i: other.delta_i.or(self.delta_i),
            ripple_fraction: other.ripple_fraction.or(self.ripple_fraction),
        }
    }

    pub fn spec(&self) -> Result<DesignSpec, CliError> {
        let get = |v: Option<Si>, name: &str| v.map(|s| s.0).ok_or_else(|| input(format!("missing design input `{name}`")));
        Ok(DesignSpec {
            v_p: get(self.v_p, "v_p")?,
            i_p: get(self.i_p, "i_p")?,
            v_b: get(self.v_b, "v_b")?,
            f_s: get(self.f_s, "f_s")?,
            v_load: get(self.v_load, "v_load")?,
            i_load: get(self.i_load, "i_load")?,
            delta_i: get(self.delta_i, "delta_i")?,
            ripple_fraction: get(self.ripple_fraction, "ripple_fraction")?,
        })
    }
}

pub fn design_report(spec: &DesignSpec, format: OutputFormat) -> Result<String, CliError> {
    let r: DesignResult = design::design(spec).map_err(|e| input(e.to_string()))?;
    let mut out = String::new();
    match format {
        OutputFormat::Table => {
            let _ = writeln!(
                out,
                "design point: v_p = {} V, i_p = {} A, v_b = {} V, f_s = {} Hz, v_load = {} V, i_load = {} A, delta_i = {} A, ripple = {} %",
                spec.v_p, spec.i_p, spec.v_b, spec.f_s, spec.v_load, spec.i_load, spec.delta_i,
                sig4(spec.ripple_fraction * 100.0)
            );
            let _ = writeln!(out, "D1 = {:.3}", r.d1);
            let _ = writeln!(out, "D2 = {:.3}", r.d2);
            let _ = writeln!(out, "Lmin = {} µH", sig4(r.l_min * 1e6));
            let _ = writeln!(out, "Lboost = {} µH", sig4(r.l_boost * 1e6));
            let _ = writeln!(out, "dv = {} V", sig4(r.dv));
            let _ = writeln!(out, "C = {} µF", sig4(r.c_out * 1e6));
        }
        OutputFormat::Csv => {
            out.push_str("quantity,value\n");
            for (name, v) in [
                ("d1", r.d1),
                ("d2", r.d2),
                ("l_min", r.l_min),
                ("l_boost", r.l_boost),
                ("dv", r.dv),
                ("c_out", r.c_out),
            ] {
                let _ = writeln!(out, "{name},{v}");
            }
        }
    }
    Ok(out)
}

// ---- simulate ----

/// What `simulate` reports about the tail of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSummary {
    pub samples: usize,
    pub window: Result<WindowMetrics, String>,
    pub transitions: Vec<sim::ModeTransition>,
}

impl SimSummary {
    pub fn of(trace: &Trace, f_s: f64, window_periods: usize) -> Self {
        let window = match trace_periods(trace, f_s) {
            Some(available) if available >= 1 => {
                sim::steady_window(trace, window_periods.min(available), f_s).map_err(|e| e.to_string())
            }
            _ => Err("trace shorter than one switching period".to_string()),
        };
        Self {
            samples: trace.len(),
            window,
            transitions: trace.transitions.clone(),
        }
    }

    pub fn render(&self, name: &str, format: OutputFormat) -> String {
        let mut out = String::new();
        match format {
            OutputFormat::Table => {
                let _ = writeln!(out, "scenario: {name}");
                let _ = writeln!(out, "samples: {}", self.samples);
                match &self.window {
                    Ok(w) => {
                        let _ = writeln!(
                            out,
                            "window: last {} periods, t = {:.9} .. {:.9} s",
                            w.n_periods, w.t_start, w.t_end
                        );
                        for m in Mode::ALL {
                            let _ = writeln!(out, "occupancy {}: {:.1}%", m, 100.0 * w.occupancy(m));
                        }
                        let _ = writeln!(out, "mean v_c_o: {:.4} V", w.v_c_o.mean);
                        let _ = writeln!(out, "mean i_batt: {:.4} A", w.i_batt.mean);
                        let _ = writeln!(out, "mean v_batt: {:.4} V", w.v_batt_terminal.mean);
                        let _ = writeln!(out, "mean duty: {:.4}", w.duty.mean);
                        let _ = writeln!(out, "i_l p2p: {:.4} A", w.i_l_period_p2p);
                        let _ = writeln!(out, "steady: {}", if w.steady { "yes" } else { "no" });
                    }
                    Err(e) => {
                        let _ = writeln!(out, "window: unavailable ({e})");
                    }
                }
                let _ = writeln!(out, "transitions: {}", self.transitions.len());
                for t in &self.transitions {
                    let _ = writeln!(out, "  {:.9} s: {} -> {}", t.t, t.from, t.to);
                }
            }
            OutputFormat::Csv => {
                out.push_str("scenario,quantity,value\n");
                let mut row = |q: &str, v: String| {
                    let _ = writeln!(out, "{name},{q},{v}");
                };
                row("samples", self.samples.to_string());
                if let Ok(w) = &self.window {
                    row("window_periods", w.n_periods.to_string());
                    for m in Mode::ALL {
                        row(&format!("occupancy_{}", m.name().to_lowercase()), w.occupancy(m).to_string());
                    }
                    row("mean_v_c_o", w.v_c_o.mean.to_string());
                    row("mean_i_batt", w.i_batt.mean.to_string());
                    row("mean_v_batt", w.v_batt_terminal.mean.to_string());
                    row("mean_duty", w.duty.mean.to_string());
                    row("i_l_p2p", w.i_l_period_p2p.to_string());
                    row("steady", u8::from(w.steady).to_string());
                }
                row("transitions", self.transitions.len().to_string());
            }
        }
        out
    }
}

fn trace_periods(trace: &Trace, f_s: f64) -> Option<usize> {
    if trace.len() < 2 {
        return None;
    }
    let interval = trace.time[1] - trace.time[0];
    let spp = (1.0 / (f_s * interval)).round();
    (spp >= 1.0).then(|| trace.len() / spp as usize)
}

fn sim_error(name: &str, e: SimError) -> CliError {
    if e.is_divergence() {
        CliError::Divergence(format!("{name}: {e}"))
    } else {
        input(format!("{name}: {e}"))
    }
}

fn write_trace(trace: &Trace, path: &Path) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| input(format!("cannot write {}: {e}", path.display())))?;
    trace
        .write_csv(BufWriter::new(file))
        .map_err(|e| input(format!("cannot write {}: {e}", path.display())))
}

/// Runs one scenario, writing its trace to `trace_out` when given.
pub fn simulate_scenario(
    name: &str,
    scenario: &Scenario,
    trace_out: Option<&Path>,
    window_periods: usize,
    format: OutputFormat,
) -> Result<String, CliError> {
    let trace = sim::run(scenario).map_err(|e| sim_error(name, e))?;
    if let Some(path) = trace_out {
        write_trace(&trace, path)?;
    }
    Ok(SimSummary::of(&trace, scenario.params.f_s, window_periods).render(name, format))
}

/// Parses and runs one scenario file.
pub fn simulate_file(
    path: &Path,
    trace_out: Option<&Path>,
    window_periods: usize,
    format: OutputFormat,
) -> Result<String, CliError> {
    let name = path.display().to_string();
    let sc = scenario::load_scenario(path).map_err(|e| input(format!("{name}: {e}")))?;
    simulate_scenario(&name, &sc, trace_out, window_periods, format)
}

/// Where each scenario's trace goes: the output path itself for a single
/// file, `<dir>/<stem>.csv` when several run together.
pub fn trace_destinations(paths: &[PathBuf], output: Option<&Path>) -> Result<Vec<Option<PathBuf>>, CliError> {
    let Some(out) = output else {
        return Ok(vec![None; paths.len()]);
    };
    if paths.len() == 1 {
        return Ok(vec![Some(out.to_path_buf())]);
    }
    fs::create_dir_all(out).map_err(|e| input(format!("cannot create {}: {e}", out.display())))?;
    let mut dests = Vec::with_capacity(paths.len());
    for p in paths {
        let stem = p
            .file_stem()
            .ok_or_else(|| input(format!("{}: no file name", p.display())))?;
        let dest = out.join(stem).with_extension("csv");
        if dests.contains(&Some(dest.clone())) {
            return Err(input(format!("two scenarios would both write {}", dest.display())));
        }
        dests.push(Some(dest));
    }
    Ok(dests)
}

/// Runs every file on its own thread; results come back in input order.
pub fn simulate_files(
    paths: &[PathBuf],
    output: Option<&Path>,
    window_periods: usize,
    format: OutputFormat,
) -> Result<Vec<Result<String, CliError>>, CliError> {
    let dests = trace_destinations(paths, output)?;
    Ok(std::thread::scope(|s| {
        let handles: Vec<_> = paths
            .iter()
            .zip(&dests)
            .map(|(p, d)| s.spawn(move || simulate_file(p, d.as_deref(), window_periods, format)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(input("simulation thread panicked"))))
            .collect()
    }))
}

// ---- analyze ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum RegulationKind {
    Line,
    Load,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyzeOptions {
    /// Nominal output voltage; selects load regulation when no kind is given.
    pub nominal: Option<f64>,
    pub kind: Option<RegulationKind>,
    /// Switching frequency and inductance assumed for trace ripple predictions.
    pub f_s: f64,
    pub l_p: f64,
    pub window_periods: usize,
    pub format: OutputFormat,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        let p = bdc_core::ConverterParams::nominal();
        Self {
            nominal: None,
            kind: None,
            f_s: p.f_s,
            l_p: p.l_p,
            window_periods: 100,
            format: OutputFormat::Table,
        }
    }
}

pub fn analyze_text(text: &str, opts: &AnalyzeOptions) -> Result<String, CliError> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| input(format!("line 1: {e}")))?.clone();
    match tables::detect_kind(&header).map_err(input)? {
        CsvKind::Regulation => {
            let rows = tables::read_regulation(text.as_bytes()).map_err(input)?;
            regulation_report(&rows, opts)
        }
        CsvKind::Trace => {
            let trace = tables::read_trace(text.as_bytes()).map_err(input)?;
            trace_report(&trace, opts)
        }
    }
}

pub fn analyze_file(path: &Path, opts: &AnalyzeOptions) -> Result<String, CliError> {
    let text = fs::read_to_string(path).map_err(|e| input(format!("cannot read {}: {e}", path.display())))?;
    analyze_text(&text, opts).map_err(|e| match e {
        CliError::Input(m) => input(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn regulation_report(rows: &[analysis::RegulationRow], opts: &AnalyzeOptions) -> Result<String, CliError> {
    let kind = opts.kind.unwrap_or(if opts.nominal.is_some() {
        RegulationKind::Load
    } else {
        RegulationKind::Line
    });
    let mut out = String::new();
    match kind {
        RegulationKind::Line => {
            let lr = analysis::line_regulation(rows).map_err(|e| input(e.to_string()))?;
            match opts.format {
                OutputFormat::Table => {
                    let _ = writeln!(out, "line regulation: {}%", format_percent(lr.headline));
                    for p in &lr.pairs {
                        let _ = writeln!(out, "  {} -> {}: {}%", p.from, p.to, format_percent(p.value));
                    }
                    let _ = writeln!(out, "max pair: {}%", format_percent(lr.max_pair));
                    let _ = writeln!(out, "full span: {}%", format_percent(lr.full_span));
                }
                OutputFormat::Csv => {
                    out.push_str("metric,from,to,percent\n");
                    let (lo, hi) = (lr.pairs[0].from, lr.pairs[lr.pairs.len() - 1].to);
                    let _ = writeln!(out, "line_regulation,{},{},{}", lr.pairs[0].from, lr.pairs[0].to, lr.headline);
                    for p in &lr.pairs {
                        let _ = writeln!(out, "pair,{},{},{}", p.from, p.to, p.value);
                    }
                    let _ = writeln!(out, "max_pair,,,{}", lr.max_pair);
                    let _ = writeln!(out, "full_span,{lo},{hi},{}", lr.full_span);
                }
            }
        }
        RegulationKind::Load => {
            let nominal = opts
                .nominal
                .ok_or_else(|| input("load regulation needs --nominal <volts>"))?;
            let value = analysis::load_regulation(rows, nominal).map_err(|e| input(e.to_string()))?;
            match opts.format {
                OutputFormat::Table => {
                    let _ = writeln!(out, "load regulation: {}%", format_percent(value));
                }
                OutputFormat::Csv => {
                    out.push_str("metric,nominal,percent\n");
                    let _ = writeln!(out, "load_regulation,{nominal},{value}");
                }
            }
        }
    }
    Ok(out)
}

fn trace_report(trace: &Trace, opts: &AnalyzeOptions) -> Result<String, CliError> {
    let periods = trace_periods(trace, opts.f_s).unwrap_or(0);
    if periods == 0 {
        return Err(input("trace shorter than one switching period"));
    }
    let w = sim::steady_window(trace, opts.window_periods.min(periods), opts.f_s).map_err(|e| input(e.to_string()))?;
    let mode = Mode::ALL
        .into_iter()
        .max_by(|a, b| w.occupancy(*a).total_cmp(&w.occupancy(*b)))
        .unwrap_or(Mode::Charging);
    let (v_bus, v_batt, d) = (w.v_c_bus.mean, w.v_batt_terminal.mean, w.duty.mean);
    let prediction = match mode {
        Mode::Charging => Some(analysis::predicted_ripple_buck(v_bus, v_batt, opts.l_p, d, opts.f_s)),
        Mode::Discharging => Some(analysis::predicted_ripple_boost(v_bus, v_batt, opts.l_p, d, opts.f_s)),
        Mode::Trickle => None,
    };
    let mut out = String::new();
    match opts.format {
        OutputFormat::Table => {
            let _ = writeln!(out, "window: last {} periods, dominant mode {}", w.n_periods, mode);
            let _ = writeln!(out, "mean i_l: {:.4} A", w.i_l.mean);
            let _ = writeln!(out, "mean v_c_bus: {:.4} V", v_bus);
            let _ = writeln!(out, "mean v_batt: {:.4} V", v_batt);
            let _ = writeln!(out, "mean duty: {:.4}", d);
            let _ = writeln!(out, "measured ripple: {:.4} A", w.i_l_period_p2p);
            if let Some(p) = prediction {
                let (lo, hi) = analysis::current_envelope(w.i_l.mean, p.ripple);
                let _ = writeln!(out, "predicted ripple: {:.4} A (companion form {:.4} A)", p.ripple, p.companion);
                let _ = writeln!(out, "predicted envelope: {lo:.4} .. {hi:.4} A");
                let _ = writeln!(out, "measured envelope: {:.4} .. {:.4} A", w.i_l.min, w.i_l.max);
            }
        }
        OutputFormat::Csv => {
            out.push_str("quantity,value\n");
            let _ = writeln!(out, "window_periods,{}", w.n_periods);
            let _ = writeln!(out, "mode,{mode}");
            let _ = writeln!(out, "mean_i_l,{}", w.i_l.mean);
            let _ = writeln!(out, "mean_v_c_bus,{v_bus}");
            let _ = writeln!(out, "mean_v_batt,{v_batt}");
            let _ = writeln!(out, "mean_duty,{d}");
            let _ = writeln!(out, "measured_ripple,{}", w.i_l_period_p2p);
            if let Some(p) = prediction {
                let _ = writeln!(out, "predicted_ripple,{}", p.ripple);
                let _ = writeln!(out, "companion_ripple,{}", p.companion);
            }
        }
    }
    Ok(out)
}
