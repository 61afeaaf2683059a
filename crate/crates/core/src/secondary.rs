//! Distributed secondary control of the Q~V droop.
//!
//! Every secondary tick each inverter forms a local target
//! `α = a_V·(V* − V) + a_Q·m·Q`, takes one gradient step on
//! `fᵢ(x) = ½(x − αᵢ)² + (γ/2)·x²` and averages the result with
//! [`consensus_epsilon`]. The agreed estimate feeds the adjustment
//! `v = x + β_Q·m·Q − β_V·(V* − V)` that is added to the droop law.
//!
//! The gains select the steady state: β_V = 1, β_Q = 0 gives equal
//! per-unit reactive sharing (m·Q equal at every unit); β_V = 0, β_Q = 1,
//! a_V = a_Q = 0 regulates the unit's voltage; a mix of both is allowed.

use serde::{Deserialize, Serialize};

use crate::consensus::{consensus_epsilon, ConsensusConfig, EPSILON_FLOOR};
use crate::droop::{DroopParams, NominalSetpoints};
use crate::error::{ConfigError, ControlError};
use crate::graph::CommGraph;

/// Default local-target voltage gain for reactive sharing units.
///
/// With ρ = 1/(1+γ) the mean of the estimates follows
/// `z² − z + a_V/(1+γ) = 0`; a_V = 0.25 puts both roots near 0.5.
pub const DEFAULT_SHARE_A_V: f64 = 0.25;
pub const DEFAULT_GAMMA: f64 = 0.01;
pub const DEFAULT_EPSILON_TARGET: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    ShareQ,
    RegulateV,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::ShareQ => "share_q",
            Role::RegulateV => "regulate_v",
        }
    }
}

/// Steady-state objective of the whole microgrid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectiveMode {
    ShareQ,
    RegulateV,
    Mixed(Vec<Role>),
}

impl ObjectiveMode {
    /// Collapses a per-unit role list to the simplest equivalent mode.
    pub fn from_roles(roles: &[Role]) -> Self {
        if roles.iter().all(|r| *r == Role::ShareQ) {
            ObjectiveMode::ShareQ
        } else if roles.iter().all(|r| *r == Role::RegulateV) {
            ObjectiveMode::RegulateV
        } else {
            ObjectiveMode::Mixed(roles.to_vec())
        }
    }

    pub fn role(&self, unit: usize) -> Role {
        match self {
            ObjectiveMode::ShareQ => Role::ShareQ,
            ObjectiveMode::RegulateV => Role::RegulateV,
            ObjectiveMode::Mixed(roles) => roles[unit],
        }
    }
}

/// Per-unit objective gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveGains {
    pub a_v: f64,
    pub a_q: f64,
    pub beta_v: f64,
    pub beta_q: f64,
}

impl ObjectiveGains {
    pub fn share_q(a_v: f64, a_q: f64) -> Self {
        Self {
            a_v,
            a_q,
            beta_v: 1.0,
            beta_q: 0.0,
        }
    }

    pub fn regulate_v() -> Self {
        Self {
            a_v: 0.0,
            a_q: 0.0,
            beta_v: 0.0,
            beta_q: 1.0,
        }
    }

    pub fn for_role(role: Role) -> Self {
        match role {
            Role::ShareQ => Self::share_q(DEFAULT_SHARE_A_V, 0.0),
            Role::RegulateV => Self::regulate_v(),
        }
    }

    /// The role these gains implement, if they match one of the supported cases.
    pub fn role(&self) -> Option<Role> {
        if self.beta_v == 1.0 && self.beta_q == 0.0 {
            Some(Role::ShareQ)
        } else if self.beta_v == 0.0 && self.beta_q == 1.0 && self.a_v == 0.0 && self.a_q == 0.0 {
            Some(Role::RegulateV)
        } else {
            None
        }
    }
}

/// Per-tick consensus tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    /// Accuracy wanted on the estimates, volts.
    pub target: f64,
}

impl EpsilonSchedule {
    /// Tolerance handed to the consensus run at `tick`: half the target.
    pub fn at(&self, _tick: u64) -> f64 {
        self.target / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtrlParams {
    pub gains: Vec<ObjectiveGains>,
    pub rho: f64,
    pub gamma: f64,
    pub epsilon: EpsilonSchedule,
}

impl CtrlParams {
    /// ρ defaults to 1/(1+γ).
    pub fn new(gains: Vec<ObjectiveGains>, gamma: f64, epsilon_target: f64) -> Self {
        Self {
            gains,
            rho: 1.0 / (1.0 + gamma),
            gamma,
            epsilon: EpsilonSchedule {
                target: epsilon_target,
            },
        }
    }

    pub fn for_mode(mode: &ObjectiveMode, units: usize) -> Self {
        let gains = (0..units)
            .map(|i| ObjectiveGains::for_role(mode.role(i)))
            .collect();
        Self::new(gains, DEFAULT_GAMMA, DEFAULT_EPSILON_TARGET)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(ConfigError::invalid("control.gamma", "must be > 0"));
        }
        let bound = 2.0 / (1.0 + self.gamma);
        if !(self.rho > 0.0 && self.rho < bound) {
            return Err(ConfigError::invalid(
                "control.rho",
                format!("must lie in (0, {bound}), got {}", self.rho),
            ));
        }
        if !(self.epsilon.at(0).is_finite() && self.epsilon.at(0) >= EPSILON_FLOOR) {
            return Err(ConfigError::invalid(
                "control.epsilon_target_v",
                format!("per-tick tolerance must be at least {EPSILON_FLOOR:e}"),
            ));
        }
        for (i, g) in self.gains.iter().enumerate() {
            if ![g.a_v, g.a_q, g.beta_v, g.beta_q]
                .iter()
                .all(|v| v.is_finite())
            {
                return Err(ConfigError::invalid(
                    format!("ibrs[{i}].gains"),
                    "must be finite",
                ));
            }
            if g.role().is_none() {
                return Err(ConfigError::invalid(
                    format!("ibrs[{i}].gains"),
                    "only the share_q (β_V=1, β_Q=0) and regulate_v (β_V=0, β_Q=1, a_V=a_Q=0) settings are supported",
                ));
            }
        }
        Ok(())
    }

    pub fn mode(&self) -> ObjectiveMode {
        let roles: Vec<Role> = self
            .gains
            .iter()
            .map(|g| g.role().unwrap_or(Role::ShareQ))
            .collect();
        ObjectiveMode::from_roles(&roles)
    }
}

/// Controller state owned by one inverter.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SecondaryState {
    /// Local estimate of the optimum, volts.
    pub x: f64,
    /// Local target from the latest measurements, volts.
    pub alpha: f64,
    /// Adjustment added to the droop law, volts.
    pub v: f64,
}

/// Voltage magnitude and filtered reactive power seen by one inverter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub v: f64,
    pub q: f64,
}

pub fn compute_alpha(
    gains: &ObjectiveGains,
    droop: &DroopParams,
    nominal: &NominalSetpoints,
    v_meas: f64,
    q_filtered: f64,
) -> f64 {
    gains.a_v * (nominal.v_star - v_meas) + gains.a_q * droop.m * q_filtered
}

/// Centralized optimum: Σαᵢ / (N(1+γ)).
pub fn x_star_oracle(alphas: &[f64], gamma: f64) -> Result<f64, ControlError> {
    if alphas.is_empty() {
        return Err(ControlError::InvalidInput("no targets".into()));
    }
    Ok(alphas.iter().sum::<f64>() / (alphas.len() as f64 * (1.0 + gamma)))
}

/// Descent step on fᵢ: x − ρ((1+γ)x − α).
pub fn gradient_step(x_prev: f64, alpha_prev: f64, rho: f64, gamma: f64) -> f64 {
    x_prev - rho * ((1.0 + gamma) * x_prev - alpha_prev)
}

/// v = x + β_Q·m·Q − β_V·(V* − V)
pub fn adjustment(
    gains: &ObjectiveGains,
    droop: &DroopParams,
    nominal: &NominalSetpoints,
    x: f64,
    v_meas: f64,
    q_filtered: f64,
) -> f64 {
    x + gains.beta_q * droop.m * q_filtered - gains.beta_v * (nominal.v_star - v_meas)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickReport {
    pub consensus_rounds: usize,
    pub epsilon: f64,
}

/// One secondary update: gradient step on the stored targets, consensus on the
/// stepped estimates, then refresh the targets from `measurements`.
///
/// `consensus.epsilon` is replaced by the schedule's value for `tick`.
#[allow(clippy::too_many_arguments)]
pub fn secondary_tick(
    states: &mut [SecondaryState],
    measurements: &[Measurement],
    params: &CtrlParams,
    droop: &[DroopParams],
    nominal: &NominalSetpoints,
    graph: &CommGraph,
    consensus: &ConsensusConfig,
    tick: u64,
) -> Result<TickReport, ControlError> {
    let units = states.len();
    if measurements.len() != units || droop.len() != units || params.gains.len() != units {
        return Err(ControlError::InvalidInput(format!(
            "{units} controller states, {} measurements, {} droop entries, {} gain entries",
            measurements.len(),
            droop.len(),
            params.gains.len()
        )));
    }
    let stepped: Vec<f64> = states
        .iter()
        .map(|s| gradient_step(s.x, s.alpha, params.rho, params.gamma))
        .collect();
    let epsilon = params.epsilon.at(tick);
    let config = ConsensusConfig {
        epsilon,
        ..*consensus
    };
    let outcome = consensus_epsilon(&stepped, graph, &config)?;
    for (i, state) in states.iter_mut().enumerate() {
        state.x = outcome.values[i];
        state.alpha = compute_alpha(
            &params.gains[i],
            &droop[i],
            nominal,
            measurements[i].v,
            measurements[i].q,
        );
    }
    Ok(TickReport {
        consensus_rounds: outcome.rounds,
        epsilon,
    })
}

/// Final operating point handed to [`steady_state_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct SteadySnapshot {
    pub v: Vec<f64>,
    pub q: Vec<f64>,
    /// Largest |Δx| over the last tick, volts.
    pub x_step: f64,
    /// Plant power-balance residual, VA.
    pub plant_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyTolerance {
    /// Allowed (max − min)/mean of m·Q within a sharing group.
    pub share_rel: f64,
    /// Allowed |V − V*| for regulating units, volts.
    pub voltage_abs: f64,
    pub x_step: f64,
    pub plant_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyReport {
    /// Relative m·Q spread of the sharing group, if it has members.
    pub share_spread: Option<f64>,
    /// Largest |V − V*| over regulating units, if any.
    pub max_voltage_deviation: Option<f64>,
    pub share_ok: bool,
    pub voltage_ok: bool,
}

impl SteadyReport {
    pub fn holds(&self) -> bool {
        self.share_ok && self.voltage_ok
    }
}

/// (max − min)/|mean| of `values`.
pub fn relative_spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (max - min) / mean.abs()
}

/// Checks the objective each unit's role promises at steady state.
pub fn steady_state_check(
    mode: &ObjectiveMode,
    snapshot: &SteadySnapshot,
    droop: &[DroopParams],
    nominal: &NominalSetpoints,
    tol: &SteadyTolerance,
) -> Result<SteadyReport, ControlError> {
    let units = snapshot.v.len();
    if snapshot.q.len() != units || droop.len() != units {
        return Err(ControlError::InvalidInput(
            "snapshot and droop sizes differ".into(),
        ));
    }
    if let ObjectiveMode::Mixed(roles) = mode {
        if roles.len() != units {
            return Err(ControlError::InvalidInput("role list size differs".into()));
        }
    }
    if snapshot.x_step > tol.x_step || snapshot.plant_residual > tol.plant_residual {
        return Err(ControlError::NotSteady(format!(
            "x step {:.3e} V (limit {:.3e}), plant residual {:.3e} VA (limit {:.3e})",
            snapshot.x_step, tol.x_step, snapshot.plant_residual, tol.plant_residual
        )));
    }
    let shared: Vec<f64> = (0..units)
        .filter(|&i| mode.role(i) == Role::ShareQ)
        .map(|i| droop[i].m * snapshot.q[i])
        .collect();
    let deviations: Vec<f64> = (0..units)
        .filter(|&i| mode.role(i) == Role::RegulateV)
        .map(|i| (snapshot.v[i] - nominal.v_star).abs())
        .collect();
    let share_spread = (!shared.is_empty()).then(|| relative_spread(&shared));
    let max_voltage_deviation = deviations.iter().copied().reduce(f64::max);
    Ok(SteadyReport {
        share_spread,
        max_voltage_deviation,
        share_ok: share_spread.is_none_or(|s| s <= tol.share_rel),
        voltage_ok: max_voltage_deviation.is_none_or(|d| d <= tol.voltage_abs),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn nominal() -> NominalSetpoints {
        NominalSetpoints::from_hz(60.0, 240.0).unwrap()
    }

    fn table() -> DroopParams {
        DroopParams::reference_table()
    }

    #[test]
    fn alpha_cases() {
        let nom = nominal();
        let g = ObjectiveGains::share_q(1.0, 0.0);
        assert_eq!(compute_alpha(&g, &table(), &nom, nom.v_star, 5e3), 0.0);
        let g = ObjectiveGains::share_q(0.0, 1.0);
        assert_relative_eq!(
            compute_alpha(&g, &table(), &nom, 231.0, 75e3),
            3000.0,
            max_relative = 1e-12
        );
        let g = ObjectiveGains::regulate_v();
        assert_eq!(compute_alpha(&g, &table(), &nom, 200.0, 9e4), 0.0);
    }

    #[test]
    fn oracle_cases() {
        assert_eq!(x_star_oracle(&[0.0, 0.0], 0.3).unwrap(), 0.0);
        assert_relative_eq!(x_star_oracle(&[1.0, 2.0, 3.0], 0.0).unwrap(), 2.0);
        assert_relative_eq!(x_star_oracle(&[2.0, 2.0], 1.0).unwrap(), 1.0);
        assert!(x_star_oracle(&[], 0.1).is_err());
    }

    #[test]
    fn oracle_minimizes_the_consensus_objective() {
        let alphas = [2.0, 2.0];
        let gamma = 1.0;
        let objective = |x: f64| {
            alphas
                .iter()
                .map(|a| 0.5 * (x - a).powi(2) + 0.5 * gamma * x * x)
                .sum::<f64>()
        };
        let best = (0..=40_000)
            .map(|k| -10.0 + k as f64 * 5e-4)
            .min_by(|a, b| objective(*a).total_cmp(&objective(*b)))
            .unwrap();
        assert!((best - x_star_oracle(&alphas, gamma).unwrap()).abs() <= 5e-4);
    }

    #[test]
    fn gradient_step_cases() {
        let (alpha, gamma) = (3.3, 0.25);
        let stationary = alpha / (1.0 + gamma);
        assert_relative_eq!(
            gradient_step(stationary, alpha, 0.7, gamma),
            stationary,
            max_relative = 1e-15
        );
        assert_eq!(gradient_step(5.0, 3.0, 1.0, 0.0), 3.0);
        let rho = 1.0 / (1.0 + gamma);
        assert_relative_eq!(
            gradient_step(-41.0, alpha, rho, gamma),
            stationary,
            max_relative = 1e-14
        );
    }

    #[test]
    fn adjustment_cases() {
        let nom = nominal();
        let p = table();
        let none = ObjectiveGains {
            a_v: 0.0,
            a_q: 0.0,
            beta_v: 0.0,
            beta_q: 0.0,
        };
        assert_eq!(adjustment(&none, &p, &nom, 1.25, 230.0, 4e3), 1.25);
        let share = ObjectiveGains::share_q(1.0, 0.0);
        assert_eq!(
            adjustment(&share, &p, &nom, 2.0, nom.v_star - 2.0, 4e3),
            0.0
        );
        // regulate: droop term cancels, next set-point is V* + x
        let reg = ObjectiveGains::regulate_v();
        let q = 31e3;
        let x = 0.75;
        let v = adjustment(&reg, &p, &nom, x, 228.0, q);
        assert_relative_eq!(
            crate::droop::droop_voltage(&p, &nom, q, v),
            nom.v_star + x,
            max_relative = 1e-14
        );
    }

    #[test]
    fn gains_roles() {
        assert_eq!(ObjectiveGains::share_q(0.3, 1.0).role(), Some(Role::ShareQ));
        assert_eq!(ObjectiveGains::regulate_v().role(), Some(Role::RegulateV));
        let odd = ObjectiveGains {
            beta_v: 0.5,
            ..ObjectiveGains::regulate_v()
        };
        assert_eq!(odd.role(), None);
    }

    #[test]
    fn params_validation() {
        let mut p = CtrlParams::for_mode(&ObjectiveMode::ShareQ, 3);
        assert!(p.validate().is_ok());
        p.rho = 3.0 / (1.0 + p.gamma);
        assert!(p.validate().is_err());
        let mut p = CtrlParams::for_mode(&ObjectiveMode::ShareQ, 3);
        p.gamma = 0.0;
        assert!(p.validate().is_err());
        let mut p = CtrlParams::for_mode(&ObjectiveMode::ShareQ, 3);
        p.epsilon.target = 1e-13;
        assert!(p.validate().is_err());
        let mut p = CtrlParams::for_mode(&ObjectiveMode::RegulateV, 3);
        p.gains[1].a_v = 0.5;
        assert!(p.validate().is_err());
    }

    #[test]
    fn mode_from_roles() {
        use Role::*;
        assert_eq!(
            ObjectiveMode::from_roles(&[ShareQ, ShareQ]),
            ObjectiveMode::ShareQ
        );
        assert_eq!(
            ObjectiveMode::from_roles(&[RegulateV]),
            ObjectiveMode::RegulateV
        );
        let mixed = ObjectiveMode::from_roles(&[ShareQ, RegulateV]);
        assert_eq!(mixed.role(1), RegulateV);
        let p = CtrlParams::for_mode(&mixed, 2);
        assert_eq!(p.mode(), mixed);
    }

    fn four_node_setup() -> (CommGraph, Vec<DroopParams>, ConsensusConfig) {
        let g = CommGraph::new(4, &[(1, 0), (2, 1), (3, 2), (0, 3), (2, 0)]).unwrap();
        let droop = vec![DroopParams::consistent(); 4];
        let cfg = ConsensusConfig {
            epsilon: 1.0,
            reset_period: 3,
            max_rounds: 100_000,
        };
        (g, droop, cfg)
    }

    #[test]
    fn symmetric_inputs_stay_identical() {
        let (g, droop, cfg) = four_node_setup();
        let params = CtrlParams::for_mode(&ObjectiveMode::ShareQ, 4);
        let mut states = vec![
            SecondaryState {
                x: 0.4,
                alpha: 1.2,
                v: 0.0
            };
            4
        ];
        let meas = vec![Measurement { v: 238.0, q: 5e4 }; 4];
        let report =
            secondary_tick(&mut states, &meas, &params, &droop, &nominal(), &g, &cfg, 0).unwrap();
        assert_eq!(report.consensus_rounds, 3);
        for s in &states {
            assert_relative_eq!(s.x, states[0].x, max_relative = 1e-14);
            assert_eq!(s.alpha, states[0].alpha);
        }
    }

    #[test]
    fn one_tick_matches_oracle_with_exact_contraction() {
        let (g, droop, cfg) = four_node_setup();
        let mut params = CtrlParams::for_mode(&ObjectiveMode::ShareQ, 4);
        params.gamma = 0.2;
        params.rho = 1.0 / 1.2;
        params.epsilon.target = 2e-8;
        let alphas = [3.0, -1.0, 0.5, 7.25];
        let mut states: Vec<SecondaryState> = alphas
            .iter()
            .zip([9.0, -4.0, 0.0, 2.5])
            .map(|(&alpha, x)| SecondaryState { x, alpha, v: 0.0 })
            .collect();
        let meas = vec![Measurement { v: 240.0, q: 0.0 }; 4];
        secondary_tick(&mut states, &meas, &params, &droop, &nominal(), &g, &cfg, 0).unwrap();
        let star = x_star_oracle(&alphas, params.gamma).unwrap();
        for s in &states {
            assert!((s.x - star).abs() <= 1e-8, "{} vs {star}", s.x);
        }
    }

    #[test]
    fn tick_rejects_size_mismatch() {
        let (g, droop, cfg) = four_node_setup();
        let params = CtrlParams::for_mode(&ObjectiveMode::ShareQ, 4);
        let mut states = vec![SecondaryState::default(); 4];
        let meas = vec![Measurement { v: 240.0, q: 0.0 }; 3];
        assert!(
            secondary_tick(&mut states, &meas, &params, &droop, &nominal(), &g, &cfg, 0).is_err()
        );
    }

    #[test]
    fn steady_check_modes() {
        let nom = nominal();
        let droop = vec![DroopParams::consistent(); 2];
        let tol = SteadyTolerance {
            share_rel: 0.01,
            voltage_abs: 0.5,
            x_step: 1e-3,
            plant_residual: 1.0,
        };
        let snap = SteadySnapshot {
            v: vec![238.0, 240.2],
            q: vec![7e4, 7e4],
            x_step: 0.0,
            plant_residual: 0.0,
        };
        let r = steady_state_check(&ObjectiveMode::ShareQ, &snap, &droop, &nom, &tol).unwrap();
        assert!(r.holds());
        assert_eq!(r.max_voltage_deviation, None);
        let r = steady_state_check(&ObjectiveMode::RegulateV, &snap, &droop, &nom, &tol).unwrap();
        assert!(!r.holds());
        let mixed = ObjectiveMode::Mixed(vec![Role::ShareQ, Role::RegulateV]);
        let r = steady_state_check(&mixed, &snap, &droop, &nom, &tol).unwrap();
        assert!(r.holds());
        assert_relative_eq!(r.max_voltage_deviation.unwrap(), 0.2, epsilon = 1e-12);

        let moving = SteadySnapshot {
            x_step: 0.1,
            ..snap
        };
        assert!(matches!(
            steady_state_check(&ObjectiveMode::ShareQ, &moving, &droop, &nom, &tol),
            Err(ControlError::NotSteady(_))
        ));
    }
}
