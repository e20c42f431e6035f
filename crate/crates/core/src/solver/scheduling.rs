//! Client scheduling with the continuous variables fixed.
//!
//! Case j assumes client j is scheduled and is the straggler. Every other
//! client whose train+upload time does not exceed client j's is then
//! scheduled exactly when its score `−V·D_n + Z_n·(E_tra + E_up)` is
//! negative. Scheduling nobody is compared as one extra case. Taken
//! together the cases enumerate every subset's best straggler, so the
//! result is the exact minimiser over `{0,1}^N`.

use super::{CommPoint, RoundProblem};

pub fn solve_scheduling(problem: &RoundProblem, train_freq: &[f64], tx_power: &[f64], eta: f64) -> Vec<bool> {
    let n = problem.len();
    let times: Vec<f64> = (0..n).map(|i| problem.comm_time(i, train_freq[i], tx_power[i])).collect();
    let scores: Vec<f64> = (0..n).map(|i| problem.comm_score(i, train_freq[i], tx_power[i])).collect();

    let mut best_case: Option<usize> = None;
    let mut best_value = f64::INFINITY;
    for j in 0..n {
        let mut value = scores[j] - eta * times[j];
        for i in 0..n {
            if i != j && times[i] <= times[j] && scores[i] < 0.0 {
                value += scores[i];
            }
        }
        if value < best_value {
            best_value = value;
            best_case = Some(j);
        }
    }
    // The empty schedule has g = 0 and only wins strictly.
    match best_case {
        Some(j) if best_value <= 0.0 => (0..n)
            .map(|i| i == j || (times[i] <= times[j] && scores[i] < 0.0))
            .collect(),
        _ => vec![false; n],
    }
}

pub(crate) fn scheduling_step(problem: &RoundProblem, point: &CommPoint, eta: f64) -> CommPoint {
    CommPoint {
        schedule: solve_scheduling(problem, &point.train_freq, &point.tx_power, eta),
        ..point.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::tests::fixture;

    #[test]
    fn zero_backlog_client_is_always_selected() {
        let fx = fixture(3, &[0.0, 0.0, 0.0], 1e4);
        let prob = fx.problem();
        let f: Vec<f64> = fx.profiles.iter().map(|p| p.f_max).collect();
        let pw: Vec<f64> = fx.profiles.iter().map(|p| p.p_max).collect();
        let s = prob.comm_score(2, f[2], pw[2]);
        assert_eq!(s, -1e4 * fx.profiles[2].samples());
        assert_eq!(solve_scheduling(&prob, &f, &pw, -1e7), vec![true; 3]);
    }

    #[test]
    fn dominant_energy_term_excludes_client() {
        let fx = fixture(2, &[0.0, 1e12], 1e4);
        let prob = fx.problem();
        let f: Vec<f64> = fx.profiles.iter().map(|p| p.f_max).collect();
        let pw: Vec<f64> = fx.profiles.iter().map(|p| p.p_max).collect();
        assert_eq!(solve_scheduling(&prob, &f, &pw, -1e3), vec![true, false]);
    }

    #[test]
    fn matches_exhaustive_subsets() {
        for (k, z) in [[0.0, 5e4, 2e5], [1e6, 2e3, 8e5], [3e7, 3e7, 3e7], [0.0, 0.0, 1e8]]
            .iter()
            .enumerate()
        {
            let fx = fixture(3, z, 1e4);
            let prob = fx.problem();
            let f: Vec<f64> = fx.profiles.iter().map(|p| 0.5 * (p.f_min + p.f_max)).collect();
            let pw: Vec<f64> = fx.profiles.iter().map(|p| p.p_min).collect();
            for eta in [-4e7, -1e5, 0.0, 2e6] {
                let got = solve_scheduling(&prob, &f, &pw, eta);
                let value = |s: &[bool]| {
                    prob.g_value(&CommPoint { schedule: s.to_vec(), train_freq: f.clone(), tx_power: pw.clone() }, eta)
                };
                let brute = (0..8u8)
                    .map(|m| value(&[m & 1 != 0, m & 2 != 0, m & 4 != 0]))
                    .fold(f64::INFINITY, f64::min);
                assert!(value(&got) <= brute + 1e-9 * brute.abs(), "instance {k} eta {eta}");
            }
        }
    }
}
