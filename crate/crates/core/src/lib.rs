//! Bidirectional buck-boost converter between a PV-fed DC bus and a battery.
//!
//! - [`circuit`]: power stage, switch-network resolution and state derivatives
//! - [`control`]: mode supervisor, PWM and the incremental duty regulator
//! - [`design`]: duty, inductance and capacitance sizing
//! - [`sim`]: fixed-step engine, traces and steady-window metrics
//! - [`analysis`]: ripple predictions and line/load regulation

pub mod analysis;
pub mod circuit;
pub mod control;
pub mod design;
pub mod sim;

pub use circuit::{BatteryModel, CircuitState, ConductionPath, ConverterParams, GateCommand};
pub use control::{ControllerConfig, ControllerState, Mode};
pub use design::{DesignResult, DesignSpec};
pub use sim::{Scenario, SourceProfile, Trace, WindowMetrics};
