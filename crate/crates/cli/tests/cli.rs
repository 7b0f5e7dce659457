//! End-to-end runs of the `bdc` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn bdc<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_bdc")).args(args).output().expect("run bdc")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn summary_value(text: &str, key: &str) -> f64 {
    let line = text
        .lines()
        .find_map(|l| l.strip_prefix(key))
        .unwrap_or_else(|| panic!("no `{key}` in\n{text}"));
    line.trim()
        .trim_end_matches(|c: char| c.is_alphabetic() || c == '%' || c == ' ')
        .parse()
        .unwrap()
}

const REFERENCE_FLAGS: [&str; 16] = [
    "--v-p", "24", "--i-p", "3", "--v-b", "12", "--f-s", "20k", "--v-load", "24", "--i-load", "2.4",
    "--delta-i", "300m", "--ripple-fraction", "0.01",
];

#[test]
fn design_flags_and_spec_file_agree() {
    let mut args = vec!["design"];
    args.extend(REFERENCE_FLAGS);
    let flags = bdc(&args);
    let file = bdc(["design", "--spec", fixture("reference.design").to_str().unwrap()]);
    assert!(flags.status.success() && file.status.success());
    assert_eq!(stdout(&flags), stdout(&file));
    for want in ["D1 = 0.500", "Lmin = 1000 µH", "C = 250 µF"] {
        assert!(stdout(&flags).contains(want), "{}", stdout(&flags));
    }
}

#[test]
fn design_csv_has_no_multiplier_suffixes() {
    let mut args = vec!["design", "--format", "csv"];
    args.extend(REFERENCE_FLAGS);
    let out = stdout(&bdc(&args));
    assert!(out.starts_with("quantity,value\n"));
    assert!(out.contains("l_min,0.001\n"), "{out}");
    assert!(!out.contains('µ') && !out.contains("1m"));
}

#[test]
fn design_usage_and_input_errors_exit_one() {
    let missing = bdc(["design", "--v-p", "24"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(stderr(&missing).contains("--i-p"));

    let mut args = vec!["design"];
    args.extend(REFERENCE_FLAGS);
    args[2] = "6";
    let step_up = bdc(&args);
    assert_eq!(step_up.status.code(), Some(1));
    assert!(stderr(&step_up).contains("v_p"), "{}", stderr(&step_up));
}

#[test]
fn buck_fixture_charges() {
    let out = bdc(["simulate", fixture("buck.scenario").to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(summary_value(&text, "occupancy Charging:") > 95.0);
    assert!(summary_value(&text, "mean i_batt:") > 0.0);
}

#[test]
fn boost_fixture_holds_the_load() {
    let out = bdc(["simulate", fixture("boost.scenario").to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v = summary_value(&stdout(&out), "mean v_c_o:");
    assert!((v - 24.0).abs() <= 0.02 * 24.0, "{v}");
}

#[test]
fn empty_scenario_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.scenario");
    fs::write(&path, "").unwrap();
    let out = bdc(["simulate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 1"), "{}", stderr(&out));
}

#[test]
fn scenario_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.scenario");
    fs::write(&path, "[sim]\nt_end = \"1m\"\n\n[converter]\nl_p = \"1 mH\"\n").unwrap();
    let out = bdc(["simulate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 5"), "{}", stderr(&out));
}

#[test]
fn divergence_exits_two_with_a_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tight.scenario");
    fs::write(&path, "[limits]\nmax_current = 1\n\n[sim]\nt_end = \"5m\"\n").unwrap();
    let out = bdc(["simulate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("diverged at t = "), "{}", stderr(&out));
}

fn short_scenario(dir: &Path, name: &str, volts: f64) -> PathBuf {
    let path = dir.join(name);
    fs::write(
        &path,
        format!("[[source]]\nvolts = {volts}\n\n[sim]\nt_end = \"2m\"\nrecord_decimation = 10\n"),
    )
    .unwrap();
    path
}

#[test]
fn trace_csv_format_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let sc = short_scenario(dir.path(), "a.scenario", 24.0);
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for out in [&a, &b] {
        let o = bdc(["simulate", sc.to_str().unwrap(), "--output", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let (ta, tb) = (fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(ta, tb);
    let text = String::from_utf8(ta).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("time,i_l,v_c_bus,v_c_o,v_batt_terminal,i_batt,soc,mode,duty,s1,s2"));
    let second = lines.nth(1).unwrap();
    assert_eq!(second.split(',').next().unwrap(), "0.000000500");
}

#[test]
fn several_scenarios_run_side_by_side() {
    let dir = tempfile::tempdir().unwrap();
    let a = short_scenario(dir.path(), "charge.scenario", 24.0);
    let b = short_scenario(dir.path(), "dark.scenario", 0.0);
    let out_dir = dir.path().join("traces");
    let together = bdc([
        "simulate",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
        "--output",
        out_dir.to_str().unwrap(),
    ]);
    assert!(together.status.success(), "{}", stderr(&together));
    let alone = bdc(["simulate", b.to_str().unwrap(), "--output", dir.path().join("alone.csv").to_str().unwrap()]);
    assert_eq!(
        fs::read(out_dir.join("dark.csv")).unwrap(),
        fs::read(dir.path().join("alone.csv")).unwrap()
    );
    assert!(out_dir.join("charge.csv").exists());
    // summaries come back in argument order
    let text = stdout(&together);
    assert!(text.find("charge.scenario").unwrap() < text.find("dark.scenario").unwrap());
    assert!(stdout(&alone).contains("occupancy Discharging: 100.0%"));
}

#[test]
fn one_bad_file_does_not_sink_the_others() {
    let dir = tempfile::tempdir().unwrap();
    let good = short_scenario(dir.path(), "good.scenario", 24.0);
    let bad = dir.path().join("bad.scenario");
    fs::write(&bad, "").unwrap();
    let out = bdc(["simulate", good.to_str().unwrap(), bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("good.scenario"));
    assert!(stderr(&out).contains("bad.scenario"));
}

#[test]
fn analyze_regulation_tables() {
    let t1 = bdc(["analyze", fixture("table1.csv").to_str().unwrap()]);
    assert!(stdout(&t1).contains("line regulation: 0.06%"));
    let t2 = bdc(["analyze", fixture("table2.csv").to_str().unwrap(), "--nominal", "24"]);
    assert!(stdout(&t2).contains("load regulation: 0.208%"));
    let csv = bdc(["analyze", fixture("table2.csv").to_str().unwrap(), "--nominal", "24", "--format", "csv"]);
    assert!(stdout(&csv).starts_with("metric,nominal,percent\nload_regulation,24,0.208"));
}

#[test]
fn analyze_rejects_bad_tables() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one.csv");
    fs::write(&one, "setting,v_out,i_out\n10,24,2.4\n").unwrap();
    let out = bdc(["analyze", one.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    let broken = dir.path().join("broken.csv");
    fs::write(&broken, "setting,v_out,i_out\n10,24,2.4\n15,x,2.4\n").unwrap();
    let out = bdc(["analyze", broken.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

#[test]
fn analyze_a_trace_reports_ripple_against_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("buck.scenario");
    fs::write(&sc, "[sim]\nt_end = \"20m\"\n").unwrap();
    let trace = dir.path().join("buck.csv");
    assert!(bdc(["simulate", sc.to_str().unwrap(), "--output", trace.to_str().unwrap()]).status.success());
    let out = bdc(["analyze", trace.to_str().unwrap(), "--window", "40"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let measured = summary_value(&text, "measured ripple:");
    let predicted: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("predicted ripple: "))
        .and_then(|l| l.split(' ').next())
        .unwrap()
        .parse()
        .unwrap();
    assert!((measured - predicted).abs() <= 0.05 * predicted, "{text}");
}
