//! Ratio (push-sum) consensus with max/min envelope termination.
//!
//! Each node keeps a mass numerator `y` and denominator `z`; every round it
//! keeps the share `1/(d⁺+1)` of both and sends the same share to each of its
//! d⁺ out-neighbors. The ratio `r = y/z` converges to the average of the
//! initial `y` on any strongly connected digraph.
//!
//! Termination: the envelopes `max`/`min` are seeded with `r` and flooded over
//! in-neighborhoods. After `reset_period ≥ diameter` rounds every node's
//! envelope spans the spread of `r` at the seeding round. Since later ratios and
//! the true average are convex combinations of those seeded ratios, an envelope
//! narrower than ε certifies ε-agreement. Otherwise the envelopes are re-seeded
//! from the current `r` and another detection cycle starts.

use serde::{Deserialize, Serialize};

use crate::error::ConsensusError;
use crate::graph::{broadcast_round, diameter, is_strongly_connected, CommGraph, RoundMessage};

/// Smallest tolerance accepted by [`ConsensusConfig::validate`].
pub const EPSILON_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsensusState {
    pub y: f64,
    pub z: f64,
    pub r: f64,
    pub max: f64,
    pub min: f64,
    pub rounds_since_reset: usize,
    /// Rounds executed since [`init`].
    pub rounds: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsensusConfig {
    pub epsilon: f64,
    pub reset_period: usize,
    pub max_rounds: usize,
}

impl ConsensusConfig {
    pub fn validate(&self, g: &CommGraph) -> Result<(), ConsensusError> {
        if !(self.epsilon.is_finite() && self.epsilon >= EPSILON_FLOOR) {
            return Err(ConsensusError::InvalidConfig(format!(
                "epsilon {} is below the floor {EPSILON_FLOOR:e}",
                self.epsilon
            )));
        }
        let d = diameter(g)
            .map_err(|_| ConsensusError::InvalidConfig("graph is not strongly connected".into()))?;
        if self.reset_period < d.max(1) {
            return Err(ConsensusError::InvalidConfig(format!(
                "reset period {} is shorter than the graph diameter {d}",
                self.reset_period
            )));
        }
        if self.max_rounds == 0 {
            return Err(ConsensusError::InvalidConfig(
                "max_rounds must be positive".into(),
            ));
        }
        Ok(())
    }
}

pub fn init(y0: &[f64]) -> Vec<ConsensusState> {
    y0.iter()
        .map(|&y| ConsensusState {
            y,
            z: 1.0,
            r: y,
            max: y,
            min: y,
            rounds_since_reset: 0,
            rounds: 0,
        })
        .collect()
}

/// One push-sum mixing round over the bus.
pub fn mix_round(states: &mut [ConsensusState], g: &CommGraph) -> Result<(), ConsensusError> {
    check_size(states, g)?;
    let outgoing: Vec<RoundMessage> = states
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let share = 1.0 / (g.out_degree(i) + 1) as f64;
            RoundMessage {
                sender: i,
                y_hat: s.y * share,
                z_hat: s.z * share,
            }
        })
        .collect();
    let inboxes = broadcast_round(g, &outgoing);
    for (i, (state, inbox)) in states.iter_mut().zip(inboxes).enumerate() {
        let own = &outgoing[i];
        let y = own.y_hat + inbox.iter().map(|m| m.y_hat).sum::<f64>();
        let z = own.z_hat + inbox.iter().map(|m| m.z_hat).sum::<f64>();
        if z.is_nan() || z <= 0.0 {
            return Err(ConsensusError::NonPositiveDenominator {
                node: i,
                round: state.rounds + 1,
                value: z,
            });
        }
        state.y = y;
        state.z = z;
        state.r = y / z;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Envelope {
    max: f64,
    min: f64,
}

/// Floods the envelopes one hop: each node takes the max/min over itself and its in-neighbors.
pub fn maxmin_round(states: &mut [ConsensusState], g: &CommGraph) -> Result<(), ConsensusError> {
    check_size(states, g)?;
    let outgoing: Vec<Envelope> = states
        .iter()
        .map(|s| Envelope {
            max: s.max,
            min: s.min,
        })
        .collect();
    let inboxes = broadcast_round(g, &outgoing);
    for (state, inbox) in states.iter_mut().zip(inboxes) {
        for env in inbox {
            state.max = state.max.max(env.max);
            state.min = state.min.min(env.min);
        }
    }
    Ok(())
}

/// Closes a round: counts it and, at the end of a detection cycle, evaluates
/// each node's halt flag. If not every node halts, all envelopes are re-seeded
/// from the current ratios.
///
/// Returns the per-node flags; they are all `false` between cycle boundaries.
pub fn detect_and_reset(
    states: &mut [ConsensusState],
    config: &ConsensusConfig,
) -> Result<Vec<bool>, ConsensusError> {
    let mut flags = vec![false; states.len()];
    let mut cycle_end = false;
    for (state, flag) in states.iter_mut().zip(flags.iter_mut()) {
        state.rounds += 1;
        state.rounds_since_reset += 1;
        if state.rounds_since_reset >= config.reset_period {
            cycle_end = true;
            *flag = (state.max - state.min).abs() <= config.epsilon;
        }
    }
    let all_halted = cycle_end && flags.iter().all(|f| *f);
    if cycle_end && !all_halted {
        for state in states.iter_mut() {
            state.max = state.r;
            state.min = state.r;
            state.rounds_since_reset = 0;
        }
    }
    if !all_halted {
        let rounds = states.iter().map(|s| s.rounds).max().unwrap_or(0);
        if rounds >= config.max_rounds {
            return Err(ConsensusError::NoTermination { rounds });
        }
    }
    Ok(flags)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusOutcome {
    pub values: Vec<f64>,
    pub rounds: usize,
    pub states: Vec<ConsensusState>,
}

/// Runs the protocol from `y0` until every node halts in the same cycle.
pub fn consensus_epsilon(
    y0: &[f64],
    g: &CommGraph,
    config: &ConsensusConfig,
) -> Result<ConsensusOutcome, ConsensusError> {
    if y0.len() != g.node_count() {
        return Err(ConsensusError::SizeMismatch {
            expected: g.node_count(),
            got: y0.len(),
        });
    }
    if !is_strongly_connected(g) {
        return Err(ConsensusError::InvalidConfig(
            "graph is not strongly connected".into(),
        ));
    }
    if config.epsilon.is_nan() || config.epsilon <= 0.0 {
        return Err(ConsensusError::InvalidConfig(
            "epsilon must be positive".into(),
        ));
    }
    let mut states = init(y0);
    loop {
        mix_round(&mut states, g)?;
        maxmin_round(&mut states, g)?;
        let flags = detect_and_reset(&mut states, config)?;
        if flags.iter().all(|f| *f) {
            return Ok(ConsensusOutcome {
                values: states.iter().map(|s| s.r).collect(),
                rounds: states[0].rounds,
                states,
            });
        }
    }
}

fn check_size(states: &[ConsensusState], g: &CommGraph) -> Result<(), ConsensusError> {
    if states.len() != g.node_count() {
        return Err(ConsensusError::SizeMismatch {
            expected: g.node_count(),
            got: states.len(),
        });
    }
    Ok(())
}
