//! Scenario files and their validated, SI-unit form.
//!
//! Files are JSON and use customary units (kW, kVAr, Hz, kVA). Inverter ids
//! are 1-based in files and logs, 0-based everywhere else. A communication
//! edge `[i, j]` means inverter `i` listens to inverter `j`.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::consensus::ConsensusConfig;
use crate::droop::{DroopParams, NominalSetpoints, DEFAULT_TAU_S};
use crate::error::ConfigError;
use crate::graph::{diameter, is_strongly_connected, CommGraph};
use crate::network::{Impedance, LoadDemand, PerUnitBase, SolverOptions};
use crate::secondary::{
    CtrlParams, EpsilonSchedule, ObjectiveGains, ObjectiveMode, Role, DEFAULT_SHARE_A_V,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub nominal: NominalFile,
    /// Per-unit power base, also the inverter rating.
    pub base_power_kva: f64,
    pub tick_s: f64,
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
    pub secondary: SecondaryFile,
    pub ibrs: Vec<IbrFile>,
    pub comm_edges: Vec<[usize; 2]>,
    pub load_events: Vec<LoadEventFile>,
    #[serde(default)]
    pub solver: SolverFile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NominalFile {
    pub voltage_v: f64,
    pub frequency_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecondaryFile {
    /// Time the secondary controller switches on; absent means never.
    pub enable_s: Option<f64>,
    pub gamma: f64,
    /// Gradient step; defaults to 1/(1+γ).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    pub epsilon_target_v: f64,
    /// Rounds per max/min detection cycle.
    pub reset_period: usize,
    pub max_rounds: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IbrFile {
    pub id: usize,
    pub n_hz_per_kw: f64,
    pub m_v_per_kvar: f64,
    #[serde(default = "default_tau")]
    pub tau_s: f64,
    pub r_ohm: f64,
    pub x_ohm: f64,
    pub mode: Role,
    /// Local-target gains; only meaningful for `share_q`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_v: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_q: Option<f64>,
}

fn default_tau() -> f64 {
    DEFAULT_TAU_S
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadEventFile {
    pub t_s: f64,
    pub p_kw: f64,
    pub q_kvar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverFile {
    pub tol_pu: f64,
    pub max_iter: usize,
}

impl Default for SolverFile {
    fn default() -> Self {
        Self {
            tol_pu: 1e-9,
            max_iter: 200,
        }
    }
}

/// Load step applied at `time` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadEvent {
    pub time: f64,
    pub load: LoadDemand,
}

/// Validated scenario in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub nominal: NominalSetpoints,
    pub base: PerUnitBase,
    pub droop: Vec<DroopParams>,
    pub lines: Vec<Impedance>,
    pub roles: Vec<Role>,
    pub control: CtrlParams,
    pub graph: CommGraph,
    pub consensus: ConsensusConfig,
    pub load_events: Vec<LoadEvent>,
    pub tick: f64,
    pub duration: f64,
    pub seed: u64,
    pub secondary_enable: Option<f64>,
    pub solver: SolverOptions,
    /// The file this scenario was built from, echoed into logs.
    pub source: ScenarioFile,
}

impl Scenario {
    pub fn units(&self) -> usize {
        self.droop.len()
    }

    pub fn mode(&self) -> ObjectiveMode {
        ObjectiveMode::from_roles(&self.roles)
    }

    /// Number of ticks, including the one at t = 0.
    pub fn tick_count(&self) -> u64 {
        (self.duration / self.tick + 1e-9).floor() as u64 + 1
    }

    pub fn time_of(&self, tick: u64) -> f64 {
        tick as f64 * self.tick
    }
}

fn positive(field: &str, value: f64) -> Result<f64, ConfigError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(ConfigError::invalid(
            field,
            format!("must be finite and > 0, got {value}"),
        ))
    }
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(self) -> Result<Scenario, ConfigError> {
        let nominal = NominalSetpoints::from_hz(
            positive("nominal.frequency_hz", self.nominal.frequency_hz)?,
            positive("nominal.voltage_v", self.nominal.voltage_v)?,
        )?;
        let base = PerUnitBase {
            voltage: nominal.v_star,
            power: positive("base_power_kva", self.base_power_kva)? * 1e3,
        };
        let tick = positive("tick_s", self.tick_s)?;
        let duration = positive("duration_s", self.duration_s)?;

        let units = self.ibrs.len();
        if units == 0 {
            return Err(ConfigError::invalid(
                "ibrs",
                "at least one inverter is required",
            ));
        }
        let mut ordered: Vec<Option<&IbrFile>> = vec![None; units];
        for ibr in &self.ibrs {
            if ibr.id == 0 || ibr.id > units {
                return Err(ConfigError::invalid(
                    "ibrs.id",
                    format!("id {} outside 1..={units}", ibr.id),
                ));
            }
            if ordered[ibr.id - 1].replace(ibr).is_some() {
                return Err(ConfigError::invalid(
                    "ibrs.id",
                    format!("duplicate id {}", ibr.id),
                ));
            }
        }
        let ibrs: Vec<&IbrFile> = ordered
            .into_iter()
            .map(|o| o.expect("ids cover 1..=N"))
            .collect();

        let mut droop = Vec::with_capacity(units);
        let mut lines = Vec::with_capacity(units);
        let mut roles = Vec::with_capacity(units);
        let mut gains = Vec::with_capacity(units);
        for ibr in &ibrs {
            let field = |name: &str| format!("ibrs[id={}].{name}", ibr.id);
            let params =
                DroopParams::from_rated_units(ibr.n_hz_per_kw, ibr.m_v_per_kvar, ibr.tau_s)
                    .map_err(|e| match e {
                        ConfigError::Invalid { field: f, message } => ConfigError::Invalid {
                            field: field(&f),
                            message,
                        },
                        other => other,
                    })?;
            droop.push(params);
            lines.push(
                Impedance::new(ibr.r_ohm, ibr.x_ohm)
                    .map_err(|e| ConfigError::invalid(field("line"), e.to_string()))?,
            );
            roles.push(ibr.mode);
            gains.push(match ibr.mode {
                Role::ShareQ => ObjectiveGains::share_q(
                    ibr.a_v.unwrap_or(DEFAULT_SHARE_A_V),
                    ibr.a_q.unwrap_or(0.0),
                ),
                Role::RegulateV => {
                    if ibr.a_v.unwrap_or(0.0) != 0.0 || ibr.a_q.unwrap_or(0.0) != 0.0 {
                        return Err(ConfigError::invalid(
                            field("a_v"),
                            "regulate_v units require a_v = a_q = 0",
                        ));
                    }
                    ObjectiveGains::regulate_v()
                }
            });
        }

        let sec = &self.secondary;
        let gamma = sec.gamma;
        let control = CtrlParams {
            gains,
            rho: sec.rho.unwrap_or(1.0 / (1.0 + gamma)),
            gamma,
            epsilon: EpsilonSchedule {
                target: sec.epsilon_target_v,
            },
        };
        control.validate()?;
        if let Some(t) = sec.enable_s {
            if !(t.is_finite() && t >= 0.0) {
                return Err(ConfigError::invalid(
                    "secondary.enable_s",
                    "must be finite and ≥ 0",
                ));
            }
        }

        let mut edges = Vec::with_capacity(self.comm_edges.len());
        for [receiver, sender] in &self.comm_edges {
            for id in [receiver, sender] {
                if *id == 0 || *id > units {
                    return Err(ConfigError::invalid(
                        "comm_edges",
                        format!("edge [{receiver}, {sender}] references unknown inverter {id}"),
                    ));
                }
            }
            edges.push((receiver - 1, sender - 1));
        }
        let graph = CommGraph::new(units, &edges)?;
        if !is_strongly_connected(&graph) {
            return Err(ConfigError::NotStronglyConnected);
        }
        let consensus = ConsensusConfig {
            epsilon: control.epsilon.at(0),
            reset_period: sec.reset_period,
            max_rounds: sec.max_rounds,
        };
        consensus.validate(&graph).map_err(|e| {
            let d = diameter(&graph).unwrap_or(0);
            ConfigError::invalid("secondary", format!("{e} (graph diameter {d})"))
        })?;

        let mut load_events = Vec::with_capacity(self.load_events.len());
        let mut last = f64::NEG_INFINITY;
        for (k, ev) in self.load_events.iter().enumerate() {
            if !(ev.t_s.is_finite() && ev.t_s >= 0.0) {
                return Err(ConfigError::invalid(
                    format!("load_events[{k}].t_s"),
                    "must be finite and ≥ 0",
                ));
            }
            if ev.t_s <= last {
                return Err(ConfigError::invalid(
                    format!("load_events[{k}].t_s"),
                    "event times must be strictly increasing",
                ));
            }
            last = ev.t_s;
            let load = LoadDemand::new(ev.p_kw * 1e3, ev.q_kvar * 1e3)
                .map_err(|e| ConfigError::invalid(format!("load_events[{k}]"), e.to_string()))?;
            load_events.push(LoadEvent { time: ev.t_s, load });
        }
        if duration < last {
            return Err(ConfigError::invalid(
                "duration_s",
                format!("{duration} s ends before the last load event at {last} s"),
            ));
        }

        let solver = SolverOptions {
            base,
            tol_pu: positive("solver.tol_pu", self.solver.tol_pu)?,
            max_iter: self.solver.max_iter.max(1),
        };

        Ok(Scenario {
            name: self.name.clone(),
            nominal,
            base,
            droop,
            lines,
            roles,
            control,
            graph,
            consensus,
            load_events,
            tick,
            duration,
            seed: self.seed,
            secondary_enable: sec.enable_s,
            solver,
            source: self,
        })
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ScenarioFile::from_json(&text)?.validate()
}
