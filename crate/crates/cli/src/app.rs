//! Argument parsing and dispatch.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::commands::{self, AnalyzeOptions, CliError, DesignInputs, OutputFormat, RegulationKind};
use crate::si::{parse_si, Si};

#[derive(Debug, Parser)]
#[command(name = "bdc", version, about = "Bidirectional buck-boost converter design, simulation and analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Size duty ratios, inductance and output capacitance.
    Design(DesignArgs),
    /// Run one or more scenario files.
    Simulate(SimulateArgs),
    /// Regulation metrics from a table, or ripple metrics from a trace.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Clone, Copy, Args)]
pub struct CommonArgs {
    #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
    pub format: OutputFormat,
}

fn si_arg(s: &str) -> Result<f64, String> {
    parse_si(s)
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    /// TOML file with the same keys as the flags (v_p, i_p, ...). Flags override it.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// PV array voltage.
    #[arg(long, value_parser = si_arg, required_unless_present = "spec")]
    pub v_p: Option<f64>,
    /// PV array current.
    #[arg(long, value_parser = si_arg, required_unless_present = "spec")]
    pub i_p: Option<f64>,
    /// Battery voltage.
    #[arg(long, value_parser = si_arg, required_unless_present = "spec")]
    pub v_b: Option<f64>,
    /// Switching frequency.
    #[arg(long, value_parser = si_arg, required_unless_present = "spec")]
    pub f_s: Option<f64>,
    #[arg(long, value_parser = si_arg, required_unless_present = "spec")]
    pub v_load: Option<f64>,
    #[arg(long, value_parser = si_arg, required_unless_present = "spec")]
    pub i_load: Option<f64>,
    /// Peak-to-peak inductor ripple current.
    #[arg(long, value_parser = si_arg, required_unless_present = "spec")]
    pub delta_i: Option<f64>,
    /// Output ripple as a fraction of v_load.
    #[arg(long, value_parser = si_arg, required_unless_present = "spec")]
    pub ripple_fraction: Option<f64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

impl DesignArgs {
    fn inputs(&self) -> DesignInputs {
        DesignInputs {
            v_p: self.v_p.map(Si),
            i_p: self.i_p.map(Si),
            v_b: self.v_b.map(Si),
            f_s: self.f_s.map(Si),
            v_load: self.v_load.map(Si),
            i_load: self.i_load.map(Si),
            delta_i: self.delta_i.map(Si),
            ripple_fraction: self.ripple_fraction.map(Si),
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario files; several run in parallel.
    #[arg(required = true)]
    pub scenarios: Vec<PathBuf>,
    /// Trace CSV path, or a directory when several scenarios are given.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Switching periods in the summary window.
    #[arg(long, default_value_t = 100)]
    pub window: usize,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Regulation CSV (`setting,v_out,i_out`) or a trace written by `simulate`.
    pub input: PathBuf,
    /// Nominal output voltage; implies load regulation.
    #[arg(long, value_parser = si_arg)]
    pub nominal: Option<f64>,
    #[arg(long, value_enum)]
    pub kind: Option<RegulationKind>,
    /// Switching frequency for trace ripple predictions.
    #[arg(long, value_parser = si_arg, default_value = "20k")]
    pub f_s: f64,
    /// Inductance for trace ripple predictions.
    #[arg(long, value_parser = si_arg, default_value = "1m")]
    pub l_p: f64,
    #[arg(long, default_value_t = 100)]
    pub window: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

fn emit(text: &str, output: Option<&Path>, stdout: &mut dyn Write) -> Result<(), CliError> {
    match output {
        Some(path) => {
            fs::write(path, text).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
        }
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Input(format!("stdout: {e}"))),
    }
}

/// Runs a parsed command, returning the exit code.
pub fn execute(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let result = match cli.command {
        Command::Design(args) => (|| {
            let mut inputs = DesignInputs::default();
            if let Some(path) = &args.spec {
                inputs = DesignInputs::from_file(path)?;
            }
            let spec = inputs.overlay(args.inputs()).spec()?;
            let report = commands::design_report(&spec, args.common.format)?;
            emit(&report, args.output.as_deref(), stdout)
        })(),
        Command::Simulate(args) => {
            match commands::simulate_files(&args.scenarios, args.output.as_deref(), args.window, args.common.format) {
                Err(e) => Err(e),
                Ok(results) => {
                    let mut worst: Option<CliError> = None;
                    for r in results {
                        match r {
                            Ok(text) => {
                                let _ = stdout.write_all(text.as_bytes());
                            }
                            Err(e) => {
                                let _ = writeln!(stderr, "error: {e}");
                                if worst.as_ref().is_none_or(|w| e.exit_code() > w.exit_code()) {
                                    worst = Some(e);
                                }
                            }
                        }
                    }
                    return worst.map_or(0, |e| e.exit_code());
                }
            }
        }
        Command::Analyze(args) => (|| {
            let opts = AnalyzeOptions {
                nominal: args.nominal,
                kind: args.kind,
                f_s: args.f_s,
                l_p: args.l_p,
                window_periods: args.window,
                format: args.common.format,
            };
            let report = commands::analyze_file(&args.input, &opts)?;
            emit(&report, args.output.as_deref(), stdout)
        })(),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

/// Parses `args` and runs. Usage errors exit 1 so that 2 stays reserved for divergence.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli, stdout, stderr),
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            code
        }
    }
}
