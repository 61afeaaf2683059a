//! Three event sequences on a ten-inverter, 240 V / 60 Hz microgrid with
//! equal 200 kVA ratings.
//!
//! Line reactances and droop gains are chosen for this simulator rather than
//! taken from a measured feeder (see the `notes` of each preset).

use std::fmt;
use std::str::FromStr;

use crate::droop::{CONSISTENT_M_V_PER_KVAR, CONSISTENT_N_HZ_PER_KW, DEFAULT_TAU_S};
use crate::graph::CommGraph;
use crate::scenario::{
    IbrFile, LoadEventFile, NominalFile, ScenarioFile, SecondaryFile, SolverFile,
};
use crate::secondary::{Role, DEFAULT_EPSILON_TARGET, DEFAULT_GAMMA};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetName {
    Case1,
    Case2,
    Case3,
}

impl PresetName {
    pub const ALL: [PresetName; 3] = [PresetName::Case1, PresetName::Case2, PresetName::Case3];

    pub fn as_str(self) -> &'static str {
        match self {
            PresetName::Case1 => "case1",
            PresetName::Case2 => "case2",
            PresetName::Case3 => "case3",
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "case1" => Ok(PresetName::Case1),
            "case2" => Ok(PresetName::Case2),
            "case3" => Ok(PresetName::Case3),
            other => Err(format!(
                "unknown preset {other:?} (expected case1, case2 or case3)"
            )),
        }
    }
}

/// Line reactances in ohms; the largest is three times the smallest.
pub const LINE_REACTANCE_OHM: [f64; 10] = [
    0.0043, 0.0130, 0.0058, 0.0115, 0.0072, 0.0101, 0.0086, 0.0052, 0.0121, 0.0081,
];

pub const BASE_LOAD_KW: f64 = 1000.0;
pub const BASE_LOAD_KVAR: f64 = 750.0;
pub const STEP_LOAD_KW: f64 = 1250.0;
pub const STEP_LOAD_KVAR: f64 = 1125.0;

/// Enable time, load-up time, load-down time, duration (seconds).
pub fn timing(name: PresetName) -> (f64, f64, f64, f64) {
    match name {
        PresetName::Case1 => (4.5, 13.5, 24.0, 34.0),
        PresetName::Case2 => (23.0, 34.0, 47.0, 60.0),
        PresetName::Case3 => (6.0, 11.5, 17.0, 27.0),
    }
}

fn role(name: PresetName, id: usize) -> Role {
    match name {
        PresetName::Case1 => Role::ShareQ,
        PresetName::Case2 => Role::RegulateV,
        PresetName::Case3 if id <= 7 => Role::ShareQ,
        PresetName::Case3 => Role::RegulateV,
    }
}

pub fn preset(name: PresetName) -> ScenarioFile {
    let (enable, up, down, duration) = timing(name);
    let mut notes = vec![
        "Line reactances and droop gains are simulator choices, not measured feeder data."
            .to_string(),
        "Droop gains are the reference table values read per MW / MVAr (0.32 Hz/MW, 4 V/MVAr)."
            .to_string(),
        "Lines are purely inductive, so active power is lossless and shared exactly by n_i."
            .to_string(),
    ];
    if name == PresetName::Case3 {
        notes.push(
            "IBRs 1-7 share reactive power and 8-10 regulate voltage. \
             Some write-ups of this case swap the two groups."
                .to_string(),
        );
    }
    let ibrs = (1..=10)
        .map(|id| IbrFile {
            id,
            n_hz_per_kw: CONSISTENT_N_HZ_PER_KW,
            m_v_per_kvar: CONSISTENT_M_V_PER_KVAR,
            tau_s: DEFAULT_TAU_S,
            r_ohm: 0.0,
            x_ohm: LINE_REACTANCE_OHM[id - 1],
            mode: role(name, id),
            a_v: None,
            a_q: None,
        })
        .collect();
    let comm_edges = CommGraph::ten_node_preset()
        .edges()
        .iter()
        .map(|&(receiver, sender)| [receiver + 1, sender + 1])
        .collect();
    ScenarioFile {
        name: name.as_str().to_string(),
        notes,
        nominal: NominalFile {
            voltage_v: 240.0,
            frequency_hz: 60.0,
        },
        base_power_kva: 200.0,
        tick_s: 0.05,
        duration_s: duration,
        seed: 0,
        secondary: SecondaryFile {
            enable_s: Some(enable),
            gamma: DEFAULT_GAMMA,
            rho: None,
            epsilon_target_v: DEFAULT_EPSILON_TARGET,
            reset_period: 5,
            max_rounds: 100_000,
        },
        ibrs,
        comm_edges,
        load_events: vec![
            LoadEventFile {
                t_s: 0.0,
                p_kw: BASE_LOAD_KW,
                q_kvar: BASE_LOAD_KVAR,
            },
            LoadEventFile {
                t_s: up,
                p_kw: STEP_LOAD_KW,
                q_kvar: STEP_LOAD_KVAR,
            },
            LoadEventFile {
                t_s: down,
                p_kw: BASE_LOAD_KW,
                q_kvar: BASE_LOAD_KVAR,
            },
        ],
        solver: SolverFile::default(),
    }
}
