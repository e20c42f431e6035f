//! Continuous optimisation for a fixed schedule under a per-round energy
//! budget: minimise τ(t) (and so maximise D(t)/τ(t)) subject to
//! `E_n(t) ≤ E_n^sup·τ(t)` for every client.
//!
//! For a communication deadline `T_c`, each scheduled client spends the least
//! train+upload energy `e_n(T_c)` that meets it. Mining frequencies then
//! have to satisfy `e_n + v_n f_n³·A/S ≤ E_n^sup·(T_c + A/S)` with
//! `S = Σ f_n`, i.e. `f_n ≤ g_n(S) = ((E_n^sup·T_c − e_n)·S/(v_n·A) + E_n^sup/v_n)^{1/3}`.
//! The fastest block comes from the largest S with
//! `Σ min(f_max, g_n(S)) ≥ S`. The outer search over `T_c` is a coarse scan
//! followed by golden-section refinement.

use serde::{Deserialize, Serialize};

use crate::solver::search::{golden_min, linspace};
use crate::solver::tx_power::required_power;
use crate::solver::RoundProblem;
use crate::sysmodel::Action;

const DEADLINE_SCAN: usize = 24;
const SUM_SCAN: usize = 16;
const REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetSolution {
    pub action: Action,
    pub latency: f64,
    /// False when no action meets every budget; the action is then the
    /// least-energy one.
    pub feasible: bool,
}

/// Cheapest way for client n to train and upload within `deadline`:
/// (energy, frequency, power), or None if impossible.
fn cheapest_comm(problem: &RoundProblem, n: usize, deadline: f64) -> Option<(f64, f64, f64)> {
    let p = &problem.profiles[n];
    let w = problem.cycles[n];
    let t_fast = problem.uplink_time(n, p.p_max);
    let t_floor = problem.uplink_time(n, p.p_min);
    let t_slow = t_floor.min(deadline - w / p.f_max);
    if t_slow < t_fast {
        return None;
    }
    // Upload in time t: interior powers take exactly t, so the energy is P·t.
    let at = |t: f64| {
        let (power, upload, upload_energy) = if t >= t_floor {
            (p.p_min, t_floor, p.p_min * t_floor)
        } else if t <= t_fast {
            (p.p_max, t_fast, p.p_max * t_fast)
        } else {
            let pw = required_power(problem, n, t).clamp(p.p_min, p.p_max);
            (pw, t, pw * t)
        };
        let freq = (w / (deadline - upload)).clamp(p.f_min, p.f_max);
        (problem.train_energy(n, freq) + upload_energy, freq, power)
    };
    let (t, _) = golden_min(|t| at(t).0, t_fast, t_slow, REL_TOL);
    Some(at(t))
}

/// Largest feasible total mining frequency for the given per-client comm
/// energies and realised comm time, with the mining frequencies.
fn fastest_mining(problem: &RoundProblem, comm_energy: &[f64], comm_time: f64) -> Option<(f64, Vec<f64>)> {
    let work = problem.work;
    let cap = |n: usize, sum: f64| -> Option<f64> {
        let p = &problem.profiles[n];
        let v = p.switch_cap;
        let cube = (p.energy_supply * comm_time - comm_energy[n]) * sum / (v * work) + p.energy_supply / v;
        let cap = cube.max(0.0).cbrt().min(p.f_max);
        (cap >= p.f_min).then_some(cap)
    };
    let feasible = |sum: f64| {
        let mut total = 0.0;
        for n in 0..problem.len() {
            match cap(n, sum) {
                Some(c) => total += c,
                None => return false,
            }
        }
        total >= sum
    };
    let caps = |sum: f64| (0..problem.len()).map(|n| cap(n, sum)).collect::<Option<Vec<f64>>>();
    let lo: f64 = problem.profiles.iter().map(|p| p.f_min).sum();
    let hi: f64 = problem.profiles.iter().map(|p| p.f_max).sum();

    let grid = linspace(lo, hi, SUM_SCAN);
    let last = grid.iter().rposition(|&s| feasible(s))?;
    let best = if last + 1 == grid.len() {
        hi
    } else {
        let (mut a, mut b) = (grid[last], grid[last + 1]);
        while b - a > REL_TOL * b {
            let mid = 0.5 * (a + b);
            if feasible(mid) {
                a = mid;
            } else {
                b = mid;
            }
        }
        a
    };
    let caps = caps(best)?;
    // Spread the total over the caps; every f_n stays within [f_min, cap_n].
    let floor: f64 = problem.profiles.iter().map(|p| p.f_min).sum();
    let room: f64 = caps.iter().sum::<f64>() - floor;
    let share = if room > 0.0 { ((best - floor) / room).clamp(0.0, 1.0) } else { 0.0 };
    let freqs = caps
        .iter()
        .zip(problem.profiles)
        .map(|(c, p)| p.f_min + (c - p.f_min) * share)
        .collect();
    Some((best, freqs))
}

struct Candidate {
    latency: f64,
    action: Action,
}

fn candidate(problem: &RoundProblem, schedule: &[bool], deadline: f64) -> Option<Candidate> {
    let n = problem.len();
    let mut energy = vec![0.0; n];
    let mut train_freq: Vec<f64> = problem.profiles.iter().map(|p| p.f_min).collect();
    let mut tx_power: Vec<f64> = problem.profiles.iter().map(|p| p.p_min).collect();
    let mut comm_time: f64 = 0.0;
    for i in (0..n).filter(|&i| schedule[i]) {
        let (e, f, pw) = cheapest_comm(problem, i, deadline)?;
        energy[i] = e;
        train_freq[i] = f;
        tx_power[i] = pw;
        comm_time = comm_time.max(problem.comm_time(i, f, pw));
    }
    let (sum, mine_freq) = fastest_mining(problem, &energy, comm_time)?;
    Some(Candidate {
        latency: comm_time + problem.work / sum,
        action: Action { schedule: schedule.to_vec(), tx_power, train_freq, mine_freq },
    })
}

pub fn solve_budget_round(problem: &RoundProblem, schedule: &[bool]) -> BudgetSolution {
    let active: Vec<usize> = (0..problem.len()).filter(|&i| schedule[i]).collect();
    let bound = |fast: bool| {
        active
            .iter()
            .map(|&i| {
                let p = &problem.profiles[i];
                if fast {
                    problem.comm_time(i, p.f_max, p.p_max)
                } else {
                    problem.comm_time(i, p.f_min, p.p_min)
                }
            })
            .fold(0.0, f64::max)
    };
    let (lo, hi) = (bound(true), bound(false));
    let latency_at = |d: f64| candidate(problem, schedule, d).map_or(f64::INFINITY, |c| c.latency);

    let grid = linspace(lo, hi, if hi > lo { DEADLINE_SCAN } else { 1 });
    let values: Vec<f64> = grid.iter().map(|&d| latency_at(d)).collect();
    let k = (0..values.len()).fold(0, |b, i| if values[i] < values[b] { i } else { b });
    let best = if values[k].is_finite() {
        let a = grid[k.saturating_sub(1)];
        let b = grid[(k + 1).min(grid.len() - 1)];
        let (d, v) = golden_min(latency_at, a, b, REL_TOL);
        if v <= values[k] {
            d
        } else {
            grid[k]
        }
    } else {
        f64::NAN
    };
    match (best.is_finite()).then(|| candidate(problem, schedule, best)).flatten() {
        Some(c) => BudgetSolution { latency: c.latency, action: c.action, feasible: true },
        None => {
            let action = Action {
                schedule: schedule.to_vec(),
                tx_power: problem.profiles.iter().map(|p| p.p_min).collect(),
                train_freq: problem.profiles.iter().map(|p| p.f_min).collect(),
                mine_freq: problem.profiles.iter().map(|p| p.f_min).collect(),
            };
            let latency = problem.numerator_and_latency(&action).1;
            BudgetSolution { action, latency, feasible: false }
        }
    }
}
