//! Exhaustive grid search over the whole action space, for validation.

use serde::{Deserialize, Serialize};

use super::search::linspace;
use super::{RoundProblem, SolverError};
use crate::sysmodel::Action;

pub const MAX_CLIENTS: usize = 4;
pub const MAX_LEVELS: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteForceResult {
    pub action: Action,
    pub ratio: f64,
    pub evaluated: u64,
}

/// One client's communication choice.
#[derive(Clone, Copy)]
struct Choice {
    on: bool,
    power: f64,
    freq: f64,
    score: f64,
    time: f64,
}

/// Minimum of Δ_V over `{0,1}^N × P-grid^N × f_tra-grid^N × f_bloc-grid^N`,
/// each grid `levels` evenly spaced points including both endpoints.
///
/// The numerator and latency split into a communication part and a mining
/// part, so the two grids are enumerated separately and then paired.
pub fn brute_force_round(problem: &RoundProblem, levels: usize) -> Result<BruteForceResult, SolverError> {
    let n = problem.len();
    if n > MAX_CLIENTS || levels == 0 || levels > MAX_LEVELS {
        return Err(SolverError::BudgetExceeded { clients: n, levels });
    }

    let per_client: Vec<Vec<Choice>> = (0..n)
        .map(|i| {
            let p = &problem.profiles[i];
            let mut choices = vec![Choice { on: false, power: p.p_min, freq: p.f_min, score: 0.0, time: 0.0 }];
            for &power in &linspace(p.p_min, p.p_max, levels) {
                for &freq in &linspace(p.f_min, p.f_max, levels) {
                    choices.push(Choice {
                        on: true,
                        power,
                        freq,
                        score: problem.comm_score(i, freq, power),
                        time: problem.comm_time(i, freq, power),
                    });
                }
            }
            choices
        })
        .collect();

    // (numerator, latency) of each mining grid point.
    let mine_grids: Vec<Vec<f64>> =
        problem.profiles.iter().map(|p| linspace(p.f_min, p.f_max, levels)).collect();
    let mut mining = Vec::new();
    for_each_index(&mine_grids.iter().map(Vec::len).collect::<Vec<_>>(), |idx| {
        let freqs: Vec<f64> = idx.iter().enumerate().map(|(i, &k)| mine_grids[i][k]).collect();
        let time = problem.work / freqs.iter().sum::<f64>();
        let numer = problem.mining_cubic(&freqs) / problem.work * time;
        mining.push((numer, time, freqs));
    });

    let mut best: Option<(f64, Vec<usize>, usize)> = None;
    let mut evaluated = 0u64;
    for_each_index(&per_client.iter().map(Vec::len).collect::<Vec<_>>(), |idx| {
        let mut score = 0.0;
        let mut slowest: f64 = 0.0;
        for (i, &k) in idx.iter().enumerate() {
            let c = &per_client[i][k];
            if c.on {
                score += c.score;
                slowest = slowest.max(c.time);
            }
        }
        for (m, (numer, time, _)) in mining.iter().enumerate() {
            evaluated += 1;
            let ratio = (score + numer) / (slowest + time);
            if best.as_ref().is_none_or(|(r, _, _)| ratio < *r) {
                best = Some((ratio, idx.to_vec(), m));
            }
        }
    });

    let (_, idx, m) = best.expect("grids are nonempty");
    let chosen: Vec<Choice> = idx.iter().enumerate().map(|(i, &k)| per_client[i][k]).collect();
    let action = Action {
        schedule: chosen.iter().map(|c| c.on).collect(),
        tx_power: chosen.iter().map(|c| c.power).collect(),
        train_freq: chosen.iter().map(|c| c.freq).collect(),
        mine_freq: mining[m].2.clone(),
    };
    // Report the ratio through the same path the solver uses.
    Ok(BruteForceResult { ratio: problem.ratio(&action), action, evaluated })
}

/// Calls `f` with every index vector of the mixed-radix counter `sizes`.
fn for_each_index<F: FnMut(&[usize])>(sizes: &[usize], mut f: F) {
    let mut idx = vec![0usize; sizes.len()];
    loop {
        f(&idx);
        let mut pos = 0;
        loop {
            if pos == sizes.len() {
                return;
            }
            idx[pos] += 1;
            if idx[pos] < sizes[pos] {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}
