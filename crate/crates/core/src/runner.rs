//! Outer simulation loop.
//!
//! Each tick: apply due load events, solve the plant at the current voltage
//! set-points, advance the P/Q filters, run the secondary controller when it is
//! enabled, form next tick's set-points from the droop law, and log.

use log::{debug, info};
use thiserror::Error;

use crate::droop::{droop_frequency, droop_voltage};
use crate::error::{ControlError, NetworkError};
use crate::log::{IbrSample, TickRow, TimeSeriesLog};
use crate::network::{lowpass_step, solve_droop_equilibrium, LoadDemand, NetworkSolution};
use crate::scenario::Scenario;
use crate::secondary::{adjustment, compute_alpha, secondary_tick, Measurement, SecondaryState};

#[derive(Debug, Error)]
pub enum RunFailure {
    #[error("plant: {0}")]
    Plant(#[from] NetworkError),
    #[error("secondary control: {0}")]
    Control(#[from] ControlError),
}

/// A run that stopped early. `partial` holds every tick completed before `tick`.
#[derive(Debug, Error)]
#[error("run aborted at tick {tick} (t = {time} s): {failure}")]
pub struct RunError {
    pub tick: u64,
    pub time: f64,
    pub failure: RunFailure,
    pub partial: Box<TimeSeriesLog>,
}

/// Everything produced by one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TickOutcome {
    pub tick: u64,
    pub row: TickRow,
    pub solution: NetworkSolution,
    pub load: LoadDemand,
    pub secondary_active: bool,
}

/// Step-by-step driver over a validated scenario.
pub struct Simulation<'a> {
    scenario: &'a Scenario,
    tick: u64,
    setpoints: Vec<f64>,
    p_filtered: Vec<f64>,
    q_filtered: Vec<f64>,
    controllers: Vec<SecondaryState>,
    load: LoadDemand,
    next_event: usize,
    secondary_ticks: u64,
}

impl<'a> Simulation<'a> {
    pub fn new(scenario: &'a Scenario) -> Self {
        let units = scenario.units();
        Self {
            scenario,
            tick: 0,
            setpoints: vec![scenario.nominal.v_star; units],
            p_filtered: vec![0.0; units],
            q_filtered: vec![0.0; units],
            controllers: vec![SecondaryState::default(); units],
            load: LoadDemand::default(),
            next_event: 0,
            secondary_ticks: 0,
        }
    }

    pub fn is_finished(&self) -> bool {
        self.tick >= self.scenario.tick_count()
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn controllers(&self) -> &[SecondaryState] {
        &self.controllers
    }

    /// Voltage set-points the next tick will use.
    pub fn setpoints(&self) -> &[f64] {
        &self.setpoints
    }

    fn quantum(&self) -> f64 {
        self.scenario.tick * 1e-6
    }

    pub fn step(&mut self) -> Result<TickOutcome, RunFailure> {
        let sc = self.scenario;
        let t = sc.time_of(self.tick);

        while let Some(ev) = sc.load_events.get(self.next_event) {
            if ev.time > t + self.quantum() {
                break;
            }
            debug!(
                "t = {t:.3} s: load -> {:.1} W, {:.1} var",
                ev.load.active, ev.load.reactive
            );
            self.load = ev.load;
            self.next_event += 1;
        }

        let n: Vec<f64> = sc.droop.iter().map(|d| d.n).collect();
        let solution =
            solve_droop_equilibrium(&self.setpoints, &sc.lines, &self.load, &n, &sc.solver)?;

        for i in 0..sc.units() {
            let (p, q) = (solution.active[i], solution.reactive[i]);
            if self.tick == 0 {
                self.p_filtered[i] = p;
                self.q_filtered[i] = q;
            } else {
                let tau = sc.droop[i].tau_s;
                self.p_filtered[i] = lowpass_step(self.p_filtered[i], p, tau, sc.tick);
                self.q_filtered[i] = lowpass_step(self.q_filtered[i], q, tau, sc.tick);
            }
        }

        let measurements: Vec<Measurement> = (0..sc.units())
            .map(|i| Measurement {
                v: solution.ibr_voltages[i].magnitude,
                q: self.q_filtered[i],
            })
            .collect();
        let active = sc
            .secondary_enable
            .is_some_and(|start| t + self.quantum() >= start);
        let mut rounds = 0;
        if active {
            if self.secondary_ticks == 0 {
                info!("t = {t:.3} s: secondary control enabled");
            }
            let report = secondary_tick(
                &mut self.controllers,
                &measurements,
                &sc.control,
                &sc.droop,
                &sc.nominal,
                &sc.graph,
                &sc.consensus,
                self.secondary_ticks,
            )?;
            self.secondary_ticks += 1;
            rounds = report.consensus_rounds;
            for (i, ctrl) in self.controllers.iter_mut().enumerate() {
                ctrl.v = adjustment(
                    &sc.control.gains[i],
                    &sc.droop[i],
                    &sc.nominal,
                    ctrl.x,
                    measurements[i].v,
                    measurements[i].q,
                );
            }
        } else {
            // targets stay current so the first enabled tick steps on fresh data
            for (i, ctrl) in self.controllers.iter_mut().enumerate() {
                ctrl.alpha = compute_alpha(
                    &sc.control.gains[i],
                    &sc.droop[i],
                    &sc.nominal,
                    measurements[i].v,
                    measurements[i].q,
                );
            }
        }

        let samples: Vec<IbrSample> = (0..sc.units())
            .map(|i| IbrSample {
                p: self.p_filtered[i],
                q: self.q_filtered[i],
                v: measurements[i].v,
                omega: droop_frequency(&sc.droop[i], &sc.nominal, self.p_filtered[i]),
                v_adj: self.controllers[i].v,
                x: self.controllers[i].x,
                mode: sc.roles[i],
            })
            .collect();

        for i in 0..sc.units() {
            self.setpoints[i] = droop_voltage(
                &sc.droop[i],
                &sc.nominal,
                self.q_filtered[i],
                self.controllers[i].v,
            );
        }

        let outcome = TickOutcome {
            tick: self.tick,
            row: TickRow {
                t,
                ibrs: samples,
                pcc_v: solution.pcc_voltage.magnitude,
                load_p: self.load.active,
                load_q: self.load.reactive,
                consensus_rounds: rounds,
            },
            solution,
            load: self.load,
            secondary_active: active,
        };
        self.tick += 1;
        Ok(outcome)
    }
}

/// Comment lines describing the scenario, for the log header.
pub fn header_lines(scenario: &Scenario) -> Vec<String> {
    let mut lines = vec![format!("droopsec scenario {}", scenario.name)];
    lines.push(format!(
        "control rho={} gamma={} epsilon_per_tick_v={:e} reset_period={} max_rounds={}",
        scenario.control.rho,
        scenario.control.gamma,
        scenario.control.epsilon.at(0),
        scenario.consensus.reset_period,
        scenario.consensus.max_rounds
    ));
    for i in 0..scenario.units() {
        let g = &scenario.control.gains[i];
        let d = &scenario.droop[i];
        let z = &scenario.lines[i];
        lines.push(format!(
            "ibr {} mode={} a_v={} a_q={} beta_v={} beta_q={} n_rad_s_per_w={:e} m_v_per_var={:e} tau_s={} r_ohm={} x_ohm={}",
            i + 1,
            scenario.roles[i].as_str(),
            g.a_v,
            g.a_q,
            g.beta_v,
            g.beta_q,
            d.n,
            d.m,
            d.tau_s,
            z.resistance,
            z.reactance
        ));
    }
    lines.push("config:".to_string());
    lines.extend(scenario.source.to_json().lines().map(str::to_string));
    lines
}

/// Runs the scenario to completion.
pub fn run(scenario: &Scenario) -> Result<TimeSeriesLog, RunError> {
    let mut log = TimeSeriesLog {
        header: header_lines(scenario),
        rows: Vec::with_capacity(scenario.tick_count() as usize),
    };
    let mut sim = Simulation::new(scenario);
    while !sim.is_finished() {
        let tick = sim.tick();
        match sim.step() {
            Ok(outcome) => log.rows.push(outcome.row),
            Err(failure) => {
                return Err(RunError {
                    tick,
                    time: scenario.time_of(tick),
                    failure,
                    partial: Box::new(log),
                })
            }
        }
    }
    Ok(log)
}
