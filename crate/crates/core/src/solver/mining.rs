//! Mining-frequency subproblem.
//!
//! The mining part of the parametric objective is
//! `h(f) = (Σ a_n f_n³ − A·η) / Σ f_n` with `a_n = A·Z_n·v_n` (Z in joule
//! weights) and `A = −α·ln(1−p0)`. It is a single-ratio fractional program,
//! solved by an inner Dinkelbach iteration whose parametric step has the
//! separable closed form in [`mining_freq_at`].

use serde::{Deserialize, Serialize};

use super::{RoundProblem, SolverError, Stage};

pub const MAX_MINING_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningSolution {
    pub freqs: Vec<f64>,
    /// h at `freqs`.
    pub value: f64,
    pub iterations: usize,
}

/// Minimiser of `a·f³ − μ·f` over `[lo, hi]`.
///
/// For `a > 0` this is the clamped stationary point `sqrt(μ/(3a))`. With a
/// zero cubic coefficient the objective is linear, and a tie (`μ = 0`)
/// goes to `hi`.
pub fn mining_freq_at(mu: f64, a: f64, lo: f64, hi: f64) -> f64 {
    if a > 0.0 {
        if mu <= 0.0 {
            lo
        } else {
            (mu / (3.0 * a)).sqrt().clamp(lo, hi)
        }
    } else if mu >= 0.0 {
        hi
    } else {
        lo
    }
}

/// Bounds on h over the frequency box, split on the sign of η.
pub fn mining_bracket(problem: &RoundProblem, eta: f64) -> (f64, f64) {
    let work = problem.work;
    let (mut sum_lo, mut sum_hi, mut cube_lo, mut cube_hi) = (0.0, 0.0, 0.0, 0.0);
    for (n, p) in problem.profiles.iter().enumerate() {
        let a = problem.mining_coeff(n);
        sum_lo += p.f_min;
        sum_hi += p.f_max;
        cube_lo += a * p.f_min.powi(3);
        cube_hi += a * p.f_max.powi(3);
    }
    let offset = -work * eta;
    if eta >= 0.0 {
        (offset / sum_lo + cube_lo / sum_hi, cube_hi / sum_lo + offset / sum_hi)
    } else {
        (cube_lo / sum_hi + offset / sum_hi, cube_hi / sum_lo + offset / sum_lo)
    }
}

pub fn solve_mining_freq(problem: &RoundProblem, eta: f64) -> Result<MiningSolution, SolverError> {
    let (h_min, h_max) = mining_bracket(problem, eta);
    let sum_fmin: f64 = problem.profiles.iter().map(|p| p.f_min).sum();
    let width = (h_max - h_min).max(1e-12 * (h_min.abs() + h_max.abs()));
    let tol = (problem.config.dinkelbach_rel_tol * width * sum_fmin).max(f64::MIN_POSITIVE);

    let mut mu = 0.5 * (h_min + h_max);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for iteration in 1..=MAX_MINING_ITERATIONS {
        let freqs = problem.mining_freqs_at(mu);
        let sum: f64 = freqs.iter().sum();
        let numer = problem.mining_cubic(&freqs) - problem.work * eta;
        let residual = numer - mu * sum;
        let value = numer / sum;
        if best.as_ref().is_none_or(|(_, v)| value < *v) {
            best = Some((freqs, value));
        }
        // After the first step μ is itself an attained ratio, so the
        // residual is nonpositive; once it is within tolerance of zero, μ
        // is the minimum. A ratio that no longer decreases is the same
        // condition below rounding noise (degenerate boxes have zero width).
        if iteration > 1 && (residual >= -tol || value >= mu) {
            let (freqs, value) = best.expect("set above");
            return Ok(MiningSolution { freqs, value, iterations: iteration });
        }
        mu = value;
    }
    Err(SolverError::NonConvergence {
        stage: Stage::Mining,
        iterations: MAX_MINING_ITERATIONS,
        cap: MAX_MINING_ITERATIONS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::tests::fixture;
    use crate::solver::search::linspace;
    use crate::sysmodel::SystemConfig;

    #[test]
    fn interior_point_inverts_closed_form() {
        let cfg = SystemConfig::reference();
        let a = cfg.mining_work() * 1.0 * 1e-28;
        let f = mining_freq_at(55.26, a, 1e9, 4e9);
        assert!((f - 2e9).abs() / 2e9 < 1e-3, "{f}");
    }

    #[test]
    fn huge_backlog_pushes_to_fmin() {
        assert_eq!(mining_freq_at(55.26, 1e30, 1e9, 4e9), 1e9);
    }

    #[test]
    fn zero_coefficient_ties_to_fmax() {
        assert_eq!(mining_freq_at(0.0, 0.0, 1e9, 4e9), 4e9);
        assert_eq!(mining_freq_at(3.0, 0.0, 1e9, 4e9), 4e9);
        assert_eq!(mining_freq_at(-3.0, 0.0, 1e9, 4e9), 1e9);
        assert_eq!(mining_freq_at(-3.0, 2.0, 1e9, 4e9), 1e9);
    }

    #[test]
    fn zero_queues_mine_at_full_speed() {
        let fx = fixture(2, &[0.0, 0.0], 1e4);
        let sol = solve_mining_freq(&fx.problem(), -1e6).unwrap();
        assert!(sol.freqs.iter().zip(&fx.profiles).all(|(f, p)| *f == p.f_max));
    }

    #[test]
    fn degenerate_box_terminates() {
        let mut fx = fixture(2, &[3e3, 9e4], 1e4);
        for p in &mut fx.profiles {
            p.f_max = p.f_min;
        }
        let sol = solve_mining_freq(&fx.problem(), -2e6).unwrap();
        assert_eq!(sol.freqs, vec![1e9, 1e9]);
        assert!(sol.iterations <= 3);
    }

    #[test]
    fn bracket_contains_grid_values() {
        let fx = fixture(2, &[3e3, 9e4], 1e4);
        let prob = fx.problem();
        for eta in [-5e7, -10.0, 0.0, 4e5] {
            let (lo, hi) = mining_bracket(&prob, eta);
            let p = &fx.profiles[0];
            for f0 in linspace(p.f_min, p.f_max, 30) {
                for f1 in linspace(p.f_min, p.f_max, 30) {
                    let h = prob.h_value(&[f0, f1], eta);
                    assert!(lo <= h * (1.0 + 1e-12) + 1e-9 && h <= hi * (1.0 + 1e-12) + 1e-9);
                }
            }
        }
    }

    #[test]
    fn single_client_matches_dense_grid() {
        let fx = fixture(1, &[4e3], 1e4);
        let prob = fx.problem();
        let p = &fx.profiles[0];
        for eta in [-3e8, -2e7, -1e5, 0.0, 7e6] {
            let sol = solve_mining_freq(&prob, eta).unwrap();
            let best = linspace(p.f_min, p.f_max, 10_000)
                .into_iter()
                .map(|f| prob.h_value(&[f], eta))
                .fold(f64::INFINITY, f64::min);
            assert!(sol.value <= best + 1e-4 * best.abs(), "eta {eta}: {} vs {best}", sol.value);
        }
    }
}
