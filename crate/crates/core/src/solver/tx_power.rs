//! Transmit powers with the schedule and training frequencies fixed.
//!
//! Same deadline reduction as the training stage: for a deadline T each
//! scheduled client transmits at the lowest power whose upload fits in
//! `T − c_n` (`c_n` its fixed training time). Upload energy `P·γ/r(P)` is
//! increasing in P, and as a function of the upload time t it is the
//! perspective `t·(2^{γ/(B·t)} − 1)·B·N0/h` of a convex function, so the
//! scalar problem in T is convex again.

use std::f64::consts::LN_2;

use super::search::golden_min;
use super::{CommPoint, RoundProblem};

const DEADLINE_REL_TOL: f64 = 1e-13;

/// Power needed to upload client `n`'s model in exactly `t` seconds.
pub fn required_power(problem: &RoundProblem, n: usize, t: f64) -> f64 {
    let cfg = problem.config;
    let bits = problem.profiles[n].model_bits;
    (bits * LN_2 / (cfg.bandwidth * t)).exp_m1() * cfg.noise_power() / problem.channel.gain[n]
}

pub fn solve_tx_power(problem: &RoundProblem, schedule: &[bool], train_freq: &[f64], eta: f64) -> Vec<f64> {
    let mut powers: Vec<f64> = problem.profiles.iter().map(|p| p.p_min).collect();
    let active: Vec<usize> = (0..problem.len()).filter(|&n| schedule[n]).collect();
    if active.is_empty() {
        return powers;
    }
    let train: Vec<f64> = active.iter().map(|&n| problem.train_time(n, train_freq[n])).collect();
    // Upload time and energy at both power limits; in between the upload
    // takes exactly the slack, so the energy is P·slack.
    let ends: Vec<[(f64, f64); 2]> = active
        .iter()
        .map(|&n| {
            let p = &problem.profiles[n];
            [p.p_min, p.p_max].map(|pw| (problem.uplink_time(n, pw), problem.uplink_energy(n, pw)))
        })
        .collect();
    // (power, energy) of client k for a deadline.
    let power_at = |k: usize, deadline: f64| {
        let n = active[k];
        let p = &problem.profiles[n];
        let slack = deadline - train[k];
        let [(slow, slow_energy), (fast, fast_energy)] = ends[k];
        if slack >= slow {
            (p.p_min, slow_energy)
        } else if slack <= fast {
            (p.p_max, fast_energy)
        } else {
            let pw = required_power(problem, n, slack).clamp(p.p_min, p.p_max);
            (pw, pw * slack)
        }
    };
    let lo = (0..active.len()).map(|k| train[k] + ends[k][1].0).fold(0.0, f64::max);
    let hi = (0..active.len()).map(|k| train[k] + ends[k][0].0).fold(0.0, f64::max);
    let objective = |deadline: f64| {
        let energy: f64 = (0..active.len()).map(|k| problem.weight[active[k]] * power_at(k, deadline).1).sum();
        energy - eta * deadline
    };
    // Searched from the long end so that flat objectives settle on the
    // least energy.
    let (neg, _) = golden_min(|s| objective(-s), -hi, -lo, DEADLINE_REL_TOL);
    let deadline = -neg;
    for k in 0..active.len() {
        powers[active[k]] = power_at(k, deadline).0;
    }
    powers
}

pub(crate) fn tx_power_step(problem: &RoundProblem, point: &CommPoint, eta: f64) -> CommPoint {
    CommPoint {
        tx_power: solve_tx_power(problem, &point.schedule, &point.train_freq, eta),
        ..point.clone()
    }
}
