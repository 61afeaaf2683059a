//! Islanded AC microgrid with grid-forming inverters under droop primary control
//! and a distributed secondary controller.
//!
//! * [`network`]: quasi-static phasor plant (star network at the PCC).
//! * [`droop`]: P~f / Q~V droop laws.
//! * [`graph`]: directed communication graph and synchronous message bus.
//! * [`consensus`]: ratio consensus with max/min termination.
//! * [`secondary`]: gradient + consensus secondary control and its oracles.
//! * [`scenario`], [`presets`], [`runner`], [`log`]: configuration, the
//!   simulation loop, and CSV output.

pub mod consensus;
pub mod droop;
pub mod error;
pub mod graph;
pub mod log;
pub mod network;
pub mod presets;
pub mod runner;
pub mod scenario;
pub mod secondary;

pub use consensus::{consensus_epsilon, ConsensusConfig, ConsensusOutcome, ConsensusState};
pub use droop::{DroopParams, NominalSetpoints};
pub use error::{ConfigError, ConsensusError, ControlError, NetworkError};
pub use graph::{diameter, is_strongly_connected, CommGraph, RoundMessage};
pub use log::{emit_csv, TimeSeriesLog};
pub use network::{Impedance, LoadDemand, NetworkSolution, PerUnitBase, Phasor, SolverOptions};
pub use presets::{preset, PresetName};
pub use runner::{run, RunError, RunFailure, Simulation, TickOutcome};
pub use scenario::{load_scenario, Scenario, ScenarioFile};
pub use secondary::{CtrlParams, ObjectiveGains, ObjectiveMode, Role, SecondaryState};
