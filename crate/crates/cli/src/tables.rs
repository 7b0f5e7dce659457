//! CSV input: regulation tables and recorded traces.

use std::io::Read;

use bdc_core::analysis::RegulationRow;
use bdc_core::sim::Trace;
use bdc_core::Mode;
use serde::Deserialize;

pub const REGULATION_HEADER: [&str; 3] = ["setting", "v_out", "i_out"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvKind {
    Regulation,
    Trace,
}

#[derive(Debug, Deserialize)]
struct RegulationRecord {
    setting: f64,
    v_out: f64,
    i_out: f64,
}

fn csv_error(e: &csv::Error) -> String {
    match e.position() {
        Some(pos) => format!("line {}: {}", pos.line(), e),
        None => e.to_string(),
    }
}

/// Works out what a CSV holds from its header row.
pub fn detect_kind(header: &csv::StringRecord) -> Result<CsvKind, String> {
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names == REGULATION_HEADER {
        Ok(CsvKind::Regulation)
    } else if names.first() == Some(&"time") {
        Ok(CsvKind::Trace)
    } else {
        Err(format!(
            "line 1: unrecognized header `{}`; expected `{}` or a trace starting with `time`",
            names.join(","),
            REGULATION_HEADER.join(",")
        ))
    }
}

pub fn read_regulation<R: Read>(input: R) -> Result<Vec<RegulationRow>, String> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = reader.headers().map_err(|e| csv_error(&e))?.clone();
    if detect_kind(&header)? != CsvKind::Regulation {
        return Err(format!("line 1: expected header `{}`", REGULATION_HEADER.join(",")));
    }
    let mut rows = Vec::new();
    for record in reader.deserialize::<RegulationRecord>() {
        let r = record.map_err(|e| csv_error(&e))?;
        rows.push(RegulationRow::new(r.setting, r.v_out, r.i_out));
    }
    Ok(rows)
}

fn column(header: &csv::StringRecord, name: &str) -> Result<usize, String> {
    header
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| format!("line 1: trace has no `{name}` column"))
}

/// Reads a trace written by `simulate`. Columns are located by name, so
/// extra or reordered columns are fine.
pub fn read_trace<R: Read>(input: R) -> Result<Trace, String> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = reader.headers().map_err(|e| csv_error(&e))?.clone();
    let idx: Vec<usize> = Trace::COLUMNS
        .iter()
        .map(|name| column(&header, name))
        .collect::<Result<_, _>>()?;
    let mut t = Trace::default();
    for record in reader.records() {
        let rec = record.map_err(|e| csv_error(&e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |k: usize| rec.get(idx[k]).unwrap_or("");
        let num = |k: usize| -> Result<f64, String> {
            field(k)
                .parse::<f64>()
                .map_err(|_| format!("line {line}: `{}` is not a number in column `{}`", field(k), Trace::COLUMNS[k]))
        };
        let flag = |k: usize| -> Result<bool, String> {
            match field(k) {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(format!("line {line}: `{other}` is not 0/1 in column `{}`", Trace::COLUMNS[k])),
            }
        };
        let time = num(0)?;
        if let Some(&prev) = t.time.last() {
            if time <= prev {
                return Err(format!("line {line}: time must be strictly increasing"));
            }
        }
        t.time.push(time);
        t.i_l.push(num(1)?);
        t.v_c_bus.push(num(2)?);
        t.v_c_o.push(num(3)?);
        t.v_batt_terminal.push(num(4)?);
        t.i_batt.push(num(5)?);
        t.soc.push(num(6)?);
        t.mode.push(field(7).parse::<Mode>().map_err(|e| format!("line {line}: {e}"))?);
        t.duty.push(num(8)?);
        t.s1.push(flag(9)?);
        t.s2.push(flag(10)?);
        t.v_source.push(num(11)?);
        t.e_source.push(num(12)?);
        t.e_load.push(num(13)?);
        t.e_battery.push(num(14)?);
        t.e_loss.push(num(15)?);
    }
    Ok(t)
}
