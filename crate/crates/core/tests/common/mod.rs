#![allow(dead_code)]

use droopsec_core::{CommGraph, Impedance, LoadDemand, NetworkSolution, PerUnitBase};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random strongly connected digraph: a shuffled Hamiltonian cycle plus extra edges.
pub fn random_strong_graph(rng: &mut ChaCha8Rng, nodes: usize) -> CommGraph {
    let mut order: Vec<usize> = (0..nodes).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for k in 0..nodes {
        let sender = order[k];
        let receiver = order[(k + 1) % nodes];
        if sender != receiver {
            edges.push((receiver, sender));
        }
    }
    let p = rng.random_range(0.0..0.5);
    for i in 0..nodes {
        for j in 0..nodes {
            if i != j && rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    CommGraph::new(nodes, &edges).expect("valid edges")
}

/// Worst power-balance mismatch of a solved network, per unit.
///
/// Recomputes the line currents from the solved phasors and checks both the
/// PCC balance V·conj(ΣI) = S_L and the source-side balance
/// Σ E·conj(I) = S_L + Σ |I|²Z, plus the reported per-unit P and Q.
pub fn plant_residual_pu(
    sol: &NetworkSolution,
    lines: &[Impedance],
    load: &LoadDemand,
    base: &PerUnitBase,
) -> f64 {
    let v = Complex64::from_polar(sol.pcc_voltage.magnitude, sol.pcc_voltage.angle);
    let s_load = Complex64::new(load.active, load.reactive);
    let mut injected = Complex64::new(0.0, 0.0);
    let mut losses = Complex64::new(0.0, 0.0);
    let mut total_current = Complex64::new(0.0, 0.0);
    let mut reported = 0.0f64;
    for (i, line) in lines.iter().enumerate() {
        let e = Complex64::from_polar(sol.ibr_voltages[i].magnitude, sol.ibr_voltages[i].angle);
        let z = Complex64::new(line.resistance, line.reactance);
        let current = (e - v) / z;
        let s = e * current.conj();
        injected += s;
        losses += z * current.norm_sqr();
        total_current += current;
        reported = reported
            .max((s.re - sol.active[i]).abs())
            .max((s.im - sol.reactive[i]).abs());
    }
    let pcc = (v * total_current.conj() - s_load).norm();
    let source = (injected - s_load - losses).norm();
    pcc.max(source).max(reported) / base.power
}
