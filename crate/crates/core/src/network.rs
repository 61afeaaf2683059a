//! Quasi-static phasor model of a star microgrid.
//!
//! N voltage-source inverters feed a point of common coupling (PCC) through
//! series line impedances; a constant-power load sits at the PCC. Every solve
//! is a pure function of its inputs. Internally the solvers work in per-unit on
//! the [`PerUnitBase`] carried by [`SolverOptions`]; inputs and outputs are SI.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::NetworkError;

/// Voltage phasor. Magnitude in volts, angle in radians normalized to (−π, π].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phasor {
    pub magnitude: f64,
    pub angle: f64,
}

impl Phasor {
    /// A negative magnitude is folded into the angle.
    pub fn new(magnitude: f64, angle: f64) -> Self {
        if magnitude < 0.0 {
            Self::new(-magnitude, angle + PI)
        } else {
            Self {
                magnitude,
                angle: normalize_angle(angle),
            }
        }
    }

    pub fn from_complex(value: Complex64) -> Self {
        let (magnitude, angle) = value.to_polar();
        Self::new(magnitude, angle)
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::from_polar(self.magnitude, self.angle)
    }
}

/// Wraps an angle into (−π, π].
pub fn normalize_angle(angle: f64) -> f64 {
    let wrapped = angle.rem_euclid(2.0 * PI);
    if wrapped > PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

/// Series line impedance in ohms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Impedance {
    pub resistance: f64,
    pub reactance: f64,
}

impl Impedance {
    pub fn new(resistance: f64, reactance: f64) -> Result<Self, NetworkError> {
        let z = Self {
            resistance,
            reactance,
        };
        z.validate()?;
        Ok(z)
    }

    pub fn inductive(reactance: f64) -> Result<Self, NetworkError> {
        Self::new(0.0, reactance)
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if !(self.resistance.is_finite() && self.reactance.is_finite()) {
            return Err(NetworkError::InvalidInput(
                "impedance must be finite".into(),
            ));
        }
        if self.resistance < 0.0 {
            return Err(NetworkError::InvalidInput(format!(
                "negative resistance {}",
                self.resistance
            )));
        }
        if self.to_complex().norm() <= 0.0 {
            return Err(NetworkError::InvalidInput("zero line impedance".into()));
        }
        Ok(())
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.resistance, self.reactance)
    }
}

/// Constant-power demand at the PCC: watts and vars.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LoadDemand {
    pub active: f64,
    pub reactive: f64,
}

impl LoadDemand {
    pub fn new(active: f64, reactive: f64) -> Result<Self, NetworkError> {
        if !(active.is_finite() && reactive.is_finite()) {
            return Err(NetworkError::InvalidInput("load must be finite".into()));
        }
        if active < 0.0 {
            return Err(NetworkError::InvalidInput(format!(
                "negative active load {active}"
            )));
        }
        Ok(Self { active, reactive })
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.active, self.reactive)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerUnitBase {
    pub voltage: f64,
    pub power: f64,
}

impl PerUnitBase {
    pub fn impedance(&self) -> f64 {
        self.voltage * self.voltage / self.power
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub base: PerUnitBase,
    /// Complex power mismatch tolerance, per-unit of `base.power`.
    pub tol_pu: f64,
    pub max_iter: usize,
}

impl SolverOptions {
    pub fn new(base: PerUnitBase) -> Self {
        Self {
            base,
            tol_pu: 1e-9,
            max_iter: 200,
        }
    }
}

/// Solved network operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSolution {
    pub pcc_voltage: Phasor,
    /// Source voltage of each inverter (angles as solved).
    pub ibr_voltages: Vec<Phasor>,
    /// Active power injected at each inverter terminal, W.
    pub active: Vec<f64>,
    /// Reactive power injected at each inverter terminal, var.
    pub reactive: Vec<f64>,
    /// |S_pcc − S_load| at the solution, VA.
    pub residual: f64,
    pub iterations: usize,
}

struct PuNetwork {
    admittances: Vec<Complex64>,
    load: Complex64,
    base: PerUnitBase,
}

impl PuNetwork {
    fn new(
        lines: &[Impedance],
        load: &LoadDemand,
        base: PerUnitBase,
    ) -> Result<Self, NetworkError> {
        if lines.is_empty() {
            return Err(NetworkError::InvalidInput(
                "at least one inverter is required".into(),
            ));
        }
        for line in lines {
            line.validate()?;
        }
        if !(load.active.is_finite() && load.reactive.is_finite()) {
            return Err(NetworkError::InvalidInput("load must be finite".into()));
        }
        if !(base.voltage > 0.0 && base.power > 0.0) {
            return Err(NetworkError::InvalidInput(
                "per-unit base must be positive".into(),
            ));
        }
        let z_base = base.impedance();
        Ok(Self {
            admittances: lines
                .iter()
                .map(|z| 1.0 / (z.to_complex() / z_base))
                .collect(),
            load: load.to_complex() / base.power,
            base,
        })
    }

    /// Net current into the PCC: Σ Yᵢ(Eᵢ − V) − conj(S_L / V).
    fn current_mismatch(&self, sources: &[Complex64], pcc: Complex64) -> Complex64 {
        let injected: Complex64 = sources
            .iter()
            .zip(&self.admittances)
            .map(|(e, y)| y * (e - pcc))
            .sum();
        injected - (self.load / pcc).conj()
    }

    fn solution(
        &self,
        sources: &[Complex64],
        pcc: Complex64,
        iterations: usize,
    ) -> NetworkSolution {
        let mut active = Vec::with_capacity(sources.len());
        let mut reactive = Vec::with_capacity(sources.len());
        for (e, y) in sources.iter().zip(&self.admittances) {
            let s = e * (y * (e - pcc)).conj() * self.base.power;
            active.push(s.re);
            reactive.push(s.im);
        }
        let mismatch = pcc * self.current_mismatch(sources, pcc).conj();
        NetworkSolution {
            pcc_voltage: Phasor::from_complex(pcc * self.base.voltage),
            ibr_voltages: sources
                .iter()
                .map(|e| Phasor::from_complex(e * self.base.voltage))
                .collect(),
            active,
            reactive,
            residual: mismatch.norm() * self.base.power,
            iterations,
        }
    }
}

const COLLAPSE_PU: f64 = 1e-9;
const FIXED_POINT_BUDGET: usize = 50;

/// Solves for the PCC voltage given fixed inverter source phasors.
///
/// Fixed-point iteration on the current balance from a flat start at the base
/// voltage; falls back to Newton on the real and imaginary parts when the
/// fixed point stalls or diverges.
pub fn solve_network(
    ibr_voltages: &[Phasor],
    lines: &[Impedance],
    load: &LoadDemand,
    opts: &SolverOptions,
) -> Result<NetworkSolution, NetworkError> {
    if ibr_voltages.len() != lines.len() {
        return Err(NetworkError::InvalidInput(format!(
            "{} source voltages for {} lines",
            ibr_voltages.len(),
            lines.len()
        )));
    }
    let net = PuNetwork::new(lines, load, opts.base)?;
    let sources: Vec<Complex64> = ibr_voltages
        .iter()
        .map(|v| v.to_complex() / opts.base.voltage)
        .collect();
    let y_total: Complex64 = net.admittances.iter().sum();
    let driven: Complex64 = sources
        .iter()
        .zip(&net.admittances)
        .map(|(e, y)| y * e)
        .sum();

    let mismatch_pu = |v: Complex64| (v * net.current_mismatch(&sources, v).conj()).norm();

    let mut pcc = Complex64::new(1.0, 0.0);
    let mut best = mismatch_pu(pcc);
    if best <= opts.tol_pu {
        return Ok(net.solution(&sources, pcc, 0));
    }
    let budget = opts.max_iter.min(FIXED_POINT_BUDGET);
    for it in 1..=budget {
        let next = (driven - (net.load / pcc).conj()) / y_total;
        if next.norm() <= COLLAPSE_PU {
            return Err(NetworkError::VoltageCollapse { iteration: it });
        }
        pcc = next;
        let err = mismatch_pu(pcc);
        if !err.is_finite() {
            break;
        }
        if err <= opts.tol_pu {
            return Ok(net.solution(&sources, pcc, it));
        }
        if err > best * 1e3 {
            // diverging
            break;
        }
        best = best.min(err);
    }

    // Newton on (Re V, Im V) from the flat start.
    pcc = Complex64::new(1.0, 0.0);
    for it in 1..=opts.max_iter {
        let f = net.current_mismatch(&sources, pcc);
        if (pcc * f.conj()).norm() <= opts.tol_pu {
            return Ok(net.solution(&sources, pcc, budget + it - 1));
        }
        // f(V) = A − Yt·V − conj(S)·conj(V)⁻¹
        let c = net.load.conj() / (pcc.conj() * pcc.conj());
        let d_re = -y_total + c;
        let d_im = Complex64::i() * (-y_total - c);
        let det = d_re.re * d_im.im - d_im.re * d_re.im;
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let step_re = (f.re * d_im.im - d_im.re * f.im) / det;
        let step_im = (d_re.re * f.im - f.re * d_re.im) / det;
        pcc -= Complex64::new(step_re, step_im);
        if pcc.norm() <= COLLAPSE_PU {
            return Err(NetworkError::VoltageCollapse {
                iteration: budget + it,
            });
        }
    }
    let residual_pu = mismatch_pu(pcc);
    if residual_pu <= opts.tol_pu {
        return Ok(net.solution(&sources, pcc, budget + opts.max_iter));
    }
    Err(NetworkError::NoConvergence {
        iterations: budget + opts.max_iter,
        residual_pu,
    })
}

/// Solves the operating point at which every droop frequency agrees.
///
/// Source magnitudes are the inverters' voltage set-points. The unknowns are
/// the PCC magnitude (PCC angle is the reference, fixed at zero), each source
/// angle, and the common value λ = nᵢ·Pᵢ. Damped Newton from a flat start.
pub fn solve_droop_equilibrium(
    magnitudes: &[f64],
    lines: &[Impedance],
    load: &LoadDemand,
    droop_n: &[f64],
    opts: &SolverOptions,
) -> Result<NetworkSolution, NetworkError> {
    let count = lines.len();
    if magnitudes.len() != count || droop_n.len() != count {
        return Err(NetworkError::InvalidInput(format!(
            "{} magnitudes and {} droop gains for {} lines",
            magnitudes.len(),
            droop_n.len(),
            count
        )));
    }
    if let Some(bad) = magnitudes.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
        return Err(NetworkError::InvalidInput(format!(
            "source magnitude {bad} must be > 0"
        )));
    }
    if let Some(bad) = droop_n.iter().find(|n| !(n.is_finite() && **n > 0.0)) {
        return Err(NetworkError::InvalidInput(format!(
            "droop gain {bad} must be > 0"
        )));
    }
    let net = PuNetwork::new(lines, load, opts.base)?;
    let mean_n = droop_n.iter().sum::<f64>() / count as f64;
    let weights: Vec<f64> = droop_n.iter().map(|n| n / mean_n).collect();
    let mags: Vec<f64> = magnitudes.iter().map(|m| m / opts.base.voltage).collect();

    let dim = count + 2;
    // layout: [Vm, δ₀ … δₙ₋₁, λ]
    let mut state = DVector::<f64>::zeros(dim);
    state[0] = 1.0;

    let sources_of = |x: &DVector<f64>| -> Vec<Complex64> {
        (0..count)
            .map(|i| Complex64::from_polar(mags[i], x[1 + i]))
            .collect()
    };
    let residual_of = |x: &DVector<f64>| -> DVector<f64> {
        let pcc = Complex64::new(x[0], 0.0);
        let sources = sources_of(x);
        let f = net.current_mismatch(&sources, pcc);
        let mut r = DVector::<f64>::zeros(dim);
        r[0] = f.re;
        r[1] = f.im;
        for i in 0..count {
            let s = sources[i] * (net.admittances[i] * (sources[i] - pcc)).conj();
            r[2 + i] = weights[i] * s.re - x[count + 1];
        }
        r
    };
    let converged = |x: &DVector<f64>, r: &DVector<f64>| {
        let power = x[0].abs() * Complex64::new(r[0], r[1]).norm();
        let share = r.rows(2, count).amax();
        power <= opts.tol_pu && share <= opts.tol_pu
    };

    let mut r = residual_of(&state);
    for it in 0..=opts.max_iter {
        if converged(&state, &r) {
            let pcc = Complex64::new(state[0], 0.0);
            return Ok(net.solution(&sources_of(&state), pcc, it));
        }
        if it == opts.max_iter {
            break;
        }
        let vm = state[0];
        let sources = sources_of(&state);
        let mut jac = DMatrix::<f64>::zeros(dim, dim);
        let d_vm = -net.admittances.iter().sum::<Complex64>() + net.load.conj() / (vm * vm);
        jac[(0, 0)] = d_vm.re;
        jac[(1, 0)] = d_vm.im;
        for i in 0..count {
            let e = sources[i];
            let y = net.admittances[i];
            let d_delta = Complex64::i() * e * y;
            jac[(0, 1 + i)] = d_delta.re;
            jac[(1, 1 + i)] = d_delta.im;
            // Sᵢ = |Eᵢ|²·conj(Yᵢ) − Eᵢ·Vm·conj(Yᵢ)
            let ds_dvm = -e * y.conj();
            let ds_ddelta = -Complex64::i() * e * vm * y.conj();
            jac[(2 + i, 0)] = weights[i] * ds_dvm.re;
            jac[(2 + i, 1 + i)] = weights[i] * ds_ddelta.re;
            jac[(2 + i, count + 1)] = -1.0;
        }
        let Some(step) = jac.lu().solve(&r) else {
            return Err(NetworkError::NoConvergence {
                iterations: it,
                residual_pu: r.amax(),
            });
        };
        let merit = r.norm_squared();
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = &state - &step * scale;
            if trial[0] > COLLAPSE_PU {
                let trial_r = residual_of(&trial);
                if trial_r.norm_squared() < merit || trial_r.iter().all(|v| v.abs() <= opts.tol_pu)
                {
                    state = trial;
                    r = trial_r;
                    accepted = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !accepted {
            if state[0] - step[0] <= COLLAPSE_PU {
                return Err(NetworkError::VoltageCollapse { iteration: it + 1 });
            }
            return Err(NetworkError::NoConvergence {
                iterations: it + 1,
                residual_pu: r.amax(),
            });
        }
    }
    Err(NetworkError::NoConvergence {
        iterations: opts.max_iter,
        residual_pu: r.amax(),
    })
}

/// One backward-Euler step of the first-order filter 1/(τs + 1).
pub fn lowpass_step(prev_filtered: f64, instantaneous: f64, tau: f64, dt: f64) -> f64 {
    let a = dt / tau;
    (prev_filtered + a * instantaneous) / (1.0 + a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn opts() -> SolverOptions {
        SolverOptions::new(PerUnitBase {
            voltage: 240.0,
            power: 200e3,
        })
    }

    fn x(pu: f64) -> Impedance {
        Impedance::inductive(pu * 0.288).unwrap()
    }

    #[test]
    fn angle_normalization() {
        assert_relative_eq!(normalize_angle(PI), PI);
        assert_relative_eq!(normalize_angle(-PI), PI);
        assert_relative_eq!(normalize_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-15);
        let p = Phasor::new(-2.0, 0.0);
        assert_eq!(p.magnitude, 2.0);
        assert_relative_eq!(p.angle, PI);
    }

    #[test]
    fn impedance_and_load_validation() {
        assert!(Impedance::new(0.0, 0.0).is_err());
        assert!(Impedance::new(-0.1, 0.1).is_err());
        assert!(LoadDemand::new(-1.0, 0.0).is_err());
        assert!(LoadDemand::new(f64::INFINITY, 0.0).is_err());
        assert!(LoadDemand::new(1.0, -5.0).is_ok());
    }

    #[test]
    fn symmetric_pair_shares_exactly() {
        let v = Phasor::new(240.0, 0.0);
        let lines = [x(0.03), x(0.03)];
        let load = LoadDemand::new(150e3, 90e3).unwrap();
        let sol = solve_network(&[v, v], &lines, &load, &opts()).unwrap();
        assert_eq!(sol.active[0], sol.active[1]);
        assert_eq!(sol.reactive[0], sol.reactive[1]);
    }

    #[test]
    fn zero_load_equal_sources_carry_nothing() {
        let v = Phasor::new(237.5, 0.2);
        let lines = [x(0.01), x(0.04), x(0.02)];
        let sol = solve_network(&[v, v, v], &lines, &LoadDemand::default(), &opts()).unwrap();
        assert_relative_eq!(sol.pcc_voltage.magnitude, 237.5, max_relative = 1e-12);
        assert_relative_eq!(sol.pcc_voltage.angle, 0.2, epsilon = 1e-12);
        for (p, q) in sol.active.iter().zip(&sol.reactive) {
            assert!(p.abs() < 1e-6 && q.abs() < 1e-6);
        }
    }

    #[test]
    fn longer_line_supplies_less_reactive_power() {
        let v = Phasor::new(240.0, 0.0);
        let lines = [x(0.02), x(0.05)];
        let load = LoadDemand::new(100e3, 80e3).unwrap();
        let sol = solve_network(&[v, v], &lines, &load, &opts()).unwrap();
        assert!(sol.reactive[0] > sol.reactive[1]);
    }

    #[test]
    fn newton_fallback_handles_weak_network() {
        // heavy load on weak lines: the fixed point map is not a contraction
        let v = Phasor::new(240.0, 0.0);
        let lines = [x(0.3), x(0.35)];
        let load = LoadDemand::new(120e3, 100e3).unwrap();
        let sol = solve_network(&[v, v], &lines, &load, &opts()).unwrap();
        assert!(sol.residual <= 1e-9 * 200e3);
        assert!(sol.pcc_voltage.magnitude > 120.0);
    }

    #[test]
    fn infeasible_load_is_reported() {
        let v = Phasor::new(240.0, 0.0);
        let lines = [x(0.5)];
        let load = LoadDemand::new(2e6, 2e6).unwrap();
        let err = solve_network(&[v], &lines, &load, &opts()).unwrap_err();
        assert!(matches!(
            err,
            NetworkError::NoConvergence { .. } | NetworkError::VoltageCollapse { .. }
        ));
        let err = solve_droop_equilibrium(&[240.0], &lines, &load, &[1e-6], &opts()).unwrap_err();
        assert!(matches!(
            err,
            NetworkError::NoConvergence { .. } | NetworkError::VoltageCollapse { .. }
        ));
    }

    #[test]
    fn equilibrium_equalizes_droop_frequencies() {
        let lines = [x(0.015), x(0.03), x(0.045)];
        let n = [2e-6, 4e-6, 1e-6];
        let load = LoadDemand::new(300e3, 200e3).unwrap();
        let sol =
            solve_droop_equilibrium(&[240.0, 239.0, 241.0], &lines, &load, &n, &opts()).unwrap();
        let np: Vec<f64> = n.iter().zip(&sol.active).map(|(n, p)| n * p).collect();
        for v in &np {
            assert_relative_eq!(*v, np[0], max_relative = 1e-8);
        }
        assert_eq!(sol.pcc_voltage.angle, 0.0);
        // purely inductive lines are lossless in P
        assert_relative_eq!(sol.active.iter().sum::<f64>(), 300e3, max_relative = 1e-9);
        for (m, v) in [240.0, 239.0, 241.0].iter().zip(&sol.ibr_voltages) {
            assert_relative_eq!(v.magnitude, *m, max_relative = 1e-12);
        }
    }

    #[test]
    fn equilibrium_rejects_bad_inputs() {
        let lines = [x(0.02)];
        let load = LoadDemand::default();
        assert!(solve_droop_equilibrium(&[0.0], &lines, &load, &[1e-6], &opts()).is_err());
        assert!(solve_droop_equilibrium(&[240.0], &lines, &load, &[0.0], &opts()).is_err());
        assert!(solve_droop_equilibrium(&[240.0, 240.0], &lines, &load, &[1e-6], &opts()).is_err());
        assert!(solve_network(&[], &[], &load, &opts()).is_err());
    }

    #[test]
    fn lowpass_fixed_point_and_limit() {
        assert_eq!(lowpass_step(3.5, 3.5, 0.1, 0.05), 3.5);
        let slow = lowpass_step(1.0, 100.0, 1e12, 0.05);
        assert!((slow - 1.0).abs() < 1e-8);
    }

    #[test]
    fn lowpass_step_response_at_one_time_constant() {
        let tau = 0.1;
        let dt = tau / 50.0;
        let mut y = 0.0;
        for _ in 0..50 {
            y = lowpass_step(y, 1.0, tau, dt);
        }
        // analytic 1 − e⁻¹ ≈ 0.632
        assert!((0.60..=0.66).contains(&y), "{y}");
    }
}
