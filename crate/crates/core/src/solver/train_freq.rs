//! Training frequencies with the schedule and transmit powers fixed.
//!
//! Write T for the common deadline `max_n (w_n/f_n + u_n)` over scheduled
//! clients, where `w_n = c_n·K·D_n` and `u_n` is the fixed upload time. For a
//! given T every client should run at the slowest frequency meeting it,
//! `f_n(T) = max(f_min, w_n/(T − u_n))`, so the stage reduces to the scalar
//! problem `min_T Σ Z_n v_n w_n f_n(T)² − η·T` on
//! `[max_n(w_n/f_max + u_n), max_n(w_n/f_min + u_n)]`. Each `f_n(T)²` is
//! convex and nonincreasing in T, so the scalar problem is convex.
//!
//! A single scheduled client has the closed form of [`straggler_freq`].

use super::search::golden_min;
use super::{CommPoint, RoundProblem};

const DEADLINE_REL_TOL: f64 = 1e-13;

/// Minimiser of `e·f² − η·w/f` over `[lo, hi]` where `e = Z·v·w ≥ 0`.
pub fn straggler_freq(e: f64, w: f64, eta: f64, lo: f64, hi: f64) -> f64 {
    if eta >= 0.0 {
        lo
    } else if e == 0.0 {
        hi
    } else {
        (-eta * w / (2.0 * e)).cbrt().clamp(lo, hi)
    }
}

pub fn solve_train_freq(
    problem: &RoundProblem,
    schedule: &[bool],
    tx_power: &[f64],
    eta: f64,
) -> Vec<f64> {
    let mut freqs: Vec<f64> = problem.profiles.iter().map(|p| p.f_min).collect();
    let active: Vec<usize> = (0..problem.len()).filter(|&n| schedule[n]).collect();
    match active.as_slice() {
        [] => {}
        &[n] => {
            let p = &problem.profiles[n];
            let w = problem.cycles[n];
            freqs[n] = straggler_freq(problem.train_coeff(n), w, eta, p.f_min, p.f_max);
        }
        _ => {
            let upload: Vec<f64> = active.iter().map(|&n| problem.uplink_time(n, tx_power[n])).collect();
            let freq_at = |k: usize, deadline: f64| {
                let n = active[k];
                let p = &problem.profiles[n];
                (problem.cycles[n] / (deadline - upload[k])).clamp(p.f_min, p.f_max)
            };
            let lo = active
                .iter()
                .zip(&upload)
                .map(|(&n, u)| problem.cycles[n] / problem.profiles[n].f_max + u)
                .fold(0.0, f64::max);
            let hi = active
                .iter()
                .zip(&upload)
                .map(|(&n, u)| problem.cycles[n] / problem.profiles[n].f_min + u)
                .fold(0.0, f64::max);
            let objective = |deadline: f64| {
                let energy: f64 = (0..active.len())
                    .map(|k| problem.train_coeff(active[k]) * freq_at(k, deadline).powi(2))
                    .sum();
                energy - eta * deadline
            };
            // Searched from the long end so that flat objectives settle on the
            // least energy.
            let (neg, _) = golden_min(|s| objective(-s), -hi, -lo, DEADLINE_REL_TOL);
            let deadline = -neg;
            for k in 0..active.len() {
                freqs[active[k]] = freq_at(k, deadline);
            }
        }
    }
    freqs
}

pub(crate) fn train_freq_step(problem: &RoundProblem, point: &CommPoint, eta: f64) -> CommPoint {
    CommPoint {
        train_freq: solve_train_freq(problem, &point.schedule, &point.tx_power, eta),
        ..point.clone()
    }
}
