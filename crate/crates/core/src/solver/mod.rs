//! Per-round minimisation of the drift-plus-penalty ratio.
//!
//! The ratio `(−V·D + Σ Z·E)/τ` is handled by bisection on η over the
//! bracket of [`delta_bounds`]: the parametric objective `U = num − η·τ`
//! is negative at the minimiser exactly when η exceeds the minimum ratio.
//! For fixed η, U separates into a communication part `g(schedule, f_tra, P)`
//! (solved by BCD with restarts) and a mining part `h(f_bloc)` (its own
//! Dinkelbach loop).

pub mod bcd;
pub mod brute_force;
pub mod mining;
pub mod scheduling;
pub mod search;
pub mod train_freq;
pub mod tx_power;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lyapunov::delta_bounds;
use crate::sysmodel::{uplink_rate, Action, ChannelState, ClientProfile, ModelError, SystemConfig};

pub use bcd::{bcd_loop, BcdOutcome};
pub use brute_force::{brute_force_round, BruteForceResult};
pub use mining::{solve_mining_freq, MiningSolution};
pub use scheduling::solve_scheduling;
pub use train_freq::solve_train_freq;
pub use tx_power::solve_tx_power;

pub const MAX_OUTER_ITERATIONS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Outer,
    Bcd,
    Mining,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Outer => "outer bisection",
            Stage::Bcd => "block coordinate descent",
            Stage::Mining => "mining frequency",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{stage} did not converge within {cap} iterations")]
    NonConvergence { stage: Stage, iterations: usize, cap: usize },
    #[error("brute force over {clients} clients with {levels} levels exceeds the budget (N <= 4, levels <= 12)")]
    BudgetExceeded { clients: usize, levels: usize },
    #[error("{0}")]
    InvalidInput(String),
}

/// Schedule, training frequencies and powers: the variables of g.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommPoint {
    pub schedule: Vec<bool>,
    pub train_freq: Vec<f64>,
    pub tx_power: Vec<f64>,
}

impl CommPoint {
    pub fn full_throttle(profiles: &[ClientProfile]) -> Self {
        Self {
            schedule: vec![true; profiles.len()],
            train_freq: profiles.iter().map(|p| p.f_max).collect(),
            tx_power: profiles.iter().map(|p| p.p_max).collect(),
        }
    }

    fn random<R: Rng>(rng: &mut R, profiles: &[ClientProfile]) -> Self {
        let schedule = profiles.iter().map(|_| rng.random_bool(0.5)).collect();
        let train_freq = profiles.iter().map(|p| rng.random_range(p.f_min..=p.f_max)).collect();
        let tx_power = profiles.iter().map(|p| rng.random_range(p.p_min..=p.p_max)).collect();
        Self { schedule, train_freq, tx_power }
    }

    fn with_mining(self, mine_freq: Vec<f64>) -> Action {
        Action { schedule: self.schedule, tx_power: self.tx_power, train_freq: self.train_freq, mine_freq }
    }

    fn of_action(action: &Action) -> Self {
        Self {
            schedule: action.schedule.clone(),
            train_freq: action.train_freq.clone(),
            tx_power: action.tx_power.clone(),
        }
    }
}

/// One round's data, with per-client constants precomputed.
#[derive(Debug, Clone)]
pub struct RoundProblem<'a> {
    pub profiles: &'a [ClientProfile],
    pub config: &'a SystemConfig,
    pub channel: &'a ChannelState,
    pub queues: &'a [f64],
    /// Z_n / energy_unit: the weight of one joule of client n's energy.
    pub weight: Vec<f64>,
    /// c_n·K·D_n.
    pub cycles: Vec<f64>,
    /// −α·ln(1−p0).
    pub work: f64,
    /// Seed for the random BCD starts of this round.
    pub restart_seed: u64,
}

impl<'a> RoundProblem<'a> {
    pub fn new(
        profiles: &'a [ClientProfile],
        config: &'a SystemConfig,
        channel: &'a ChannelState,
        queues: &'a [f64],
    ) -> Result<Self, SolverError> {
        let n = profiles.len();
        if n == 0 {
            return Err(SolverError::InvalidInput("no clients".into()));
        }
        if channel.gain.len() != n || queues.len() != n {
            return Err(SolverError::InvalidInput(format!(
                "{n} clients but {} channel gains and {} queues",
                channel.gain.len(),
                queues.len()
            )));
        }
        for (client, &gain) in channel.gain.iter().enumerate() {
            if !(gain.is_finite() && gain > 0.0) {
                return Err(ModelError::InvalidChannel { client, gain }.into());
            }
        }
        if let Some(z) = queues.iter().find(|z| !(z.is_finite() && **z >= 0.0)) {
            return Err(SolverError::InvalidInput(format!("queue backlog {z} is not a nonnegative number")));
        }
        Ok(Self {
            profiles,
            config,
            channel,
            queues,
            weight: queues.iter().map(|z| z / config.energy_unit).collect(),
            cycles: profiles.iter().map(|p| p.training_cycles(config.local_epochs)).collect(),
            work: config.mining_work(),
            restart_seed: config.rng_seed,
        })
    }

    pub fn with_restart_seed(mut self, seed: u64) -> Self {
        self.restart_seed = seed;
        self
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn train_time(&self, n: usize, freq: f64) -> f64 {
        self.cycles[n] / freq
    }

    pub fn train_energy(&self, n: usize, freq: f64) -> f64 {
        self.profiles[n].switch_cap * self.cycles[n] * freq * freq
    }

    /// Coefficient e_n of f² in the weighted training energy.
    pub fn train_coeff(&self, n: usize) -> f64 {
        self.weight[n] * self.profiles[n].switch_cap * self.cycles[n]
    }

    pub fn uplink_time(&self, n: usize, power: f64) -> f64 {
        self.profiles[n].model_bits / uplink_rate(power, self.channel.gain[n], self.config)
    }

    pub fn uplink_energy(&self, n: usize, power: f64) -> f64 {
        power * self.uplink_time(n, power)
    }

    pub fn comm_time(&self, n: usize, freq: f64, power: f64) -> f64 {
        self.train_time(n, freq) + self.uplink_time(n, power)
    }

    /// −V·D_n + Z_n·(E_tra + E_up): what scheduling client n adds to g.
    pub fn comm_score(&self, n: usize, freq: f64, power: f64) -> f64 {
        -self.config.lyapunov_v * self.profiles[n].samples()
            + self.weight[n] * (self.train_energy(n, freq) + self.uplink_energy(n, power))
    }

    /// Sum of scheduled scores and the slowest scheduled train+upload time.
    pub fn comm_parts(&self, point: &CommPoint) -> (f64, f64) {
        let mut score = 0.0;
        let mut slowest: f64 = 0.0;
        for n in 0..self.len() {
            if point.schedule[n] {
                score += self.comm_score(n, point.train_freq[n], point.tx_power[n]);
                slowest = slowest.max(self.comm_time(n, point.train_freq[n], point.tx_power[n]));
            }
        }
        (score, slowest)
    }

    pub fn g_value(&self, point: &CommPoint, eta: f64) -> f64 {
        let (score, slowest) = self.comm_parts(point);
        score - eta * slowest
    }

    /// a_n = A·Z_n·v_n, the cubic coefficient of the mining part.
    pub fn mining_coeff(&self, n: usize) -> f64 {
        self.work * self.weight[n] * self.profiles[n].switch_cap
    }

    pub fn mining_cubic(&self, freqs: &[f64]) -> f64 {
        freqs.iter().enumerate().map(|(n, f)| self.mining_coeff(n) * f.powi(3)).sum()
    }

    pub fn mining_freqs_at(&self, mu: f64) -> Vec<f64> {
        self.profiles
            .iter()
            .enumerate()
            .map(|(n, p)| mining::mining_freq_at(mu, self.mining_coeff(n), p.f_min, p.f_max))
            .collect()
    }

    pub fn h_value(&self, freqs: &[f64], eta: f64) -> f64 {
        (self.mining_cubic(freqs) - self.work * eta) / freqs.iter().sum::<f64>()
    }

    /// Numerator and latency of an action.
    pub fn numerator_and_latency(&self, action: &Action) -> (f64, f64) {
        let point = CommPoint::of_action(action);
        let (score, slowest) = self.comm_parts(&point);
        let sum: f64 = action.mine_freq.iter().sum();
        let mining_time = self.work / sum;
        (score + self.mining_cubic(&action.mine_freq) / self.work * mining_time, slowest + mining_time)
    }

    pub fn ratio(&self, action: &Action) -> f64 {
        let (numer, latency) = self.numerator_and_latency(action);
        numer / latency
    }

    pub fn u_value(&self, action: &Action, eta: f64) -> f64 {
        let (numer, latency) = self.numerator_and_latency(action);
        numer - eta * latency
    }

    fn starts(&self, fixed: Option<&[bool]>) -> Vec<CommPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.restart_seed);
        let mut starts = vec![CommPoint::full_throttle(self.profiles)];
        for _ in 1..self.config.bcd_restarts {
            starts.push(CommPoint::random(&mut rng, self.profiles));
        }
        if let Some(schedule) = fixed {
            for s in &mut starts {
                s.schedule = schedule.to_vec();
            }
        }
        starts
    }
}

/// Counters accumulated over every BCD and mining call of a solve.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub bcd_calls: usize,
    pub bcd_max_passes: usize,
    pub bcd_regressions: usize,
    pub mining_max_iterations: usize,
}

impl SolveStats {
    fn absorb_bcd(&mut self, out: &BcdOutcome) {
        self.bcd_calls += 1;
        self.bcd_max_passes = self.bcd_max_passes.max(out.passes);
        self.bcd_regressions += out.regressions;
    }
}

/// Minimiser of U at one η.
#[derive(Debug, Clone, PartialEq)]
pub struct InfU {
    pub action: Action,
    pub value: f64,
    /// g trace of the BCD run that produced the communication variables.
    pub trace: Vec<f64>,
}

/// Minimises U at `eta`. `warm` (if any) is an extra BCD start and an extra
/// candidate, which keeps the result consistent with actions already seen.
pub fn inf_u(
    problem: &RoundProblem,
    eta: f64,
    fixed_schedule: Option<&[bool]>,
    warm: Option<&Action>,
    bcd_tol: f64,
    stats: &mut SolveStats,
) -> Result<InfU, SolverError> {
    let mut starts = problem.starts(fixed_schedule);
    if let Some(w) = warm {
        starts.push(CommPoint::of_action(w));
    }
    let mut best: Option<BcdOutcome> = None;
    for start in starts {
        let out = bcd_loop(problem, eta, start, fixed_schedule.is_some(), bcd_tol)?;
        stats.absorb_bcd(&out);
        if best.as_ref().is_none_or(|b| out.value < b.value) {
            best = Some(out);
        }
    }
    let comm = best.expect("at least one start");

    let mine = solve_mining_freq(problem, eta)?;
    stats.mining_max_iterations = stats.mining_max_iterations.max(mine.iterations);
    let mut mine_freq = mine.freqs;
    let mut h = mine.value;
    if let Some(w) = warm {
        let hw = problem.h_value(&w.mine_freq, eta);
        if hw < h {
            h = hw;
            mine_freq = w.mine_freq.clone();
        }
    }
    Ok(InfU { value: comm.value + h, trace: comm.trace, action: comm.point.with_mining(mine_freq) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub action: Action,
    /// Δ_V at `action`.
    pub ratio: f64,
    /// η at termination.
    pub eta: f64,
    /// |inf U| at termination.
    pub residual: f64,
    /// ξ: termination threshold on |inf U|.
    pub tolerance: f64,
    pub initial_bracket: (f64, f64),
    pub final_bracket: (f64, f64),
    pub outer_iterations: usize,
    pub outer_cap: usize,
    pub stats: SolveStats,
    /// g after each BCD sub-step of the last evaluation.
    pub trace: Vec<f64>,
}

pub fn solve_round(problem: &RoundProblem) -> Result<SolveReport, SolverError> {
    solve_inner(problem, None)
}

/// Same as [`solve_round`] with the schedule frozen.
pub fn solve_round_with_schedule(problem: &RoundProblem, schedule: &[bool]) -> Result<SolveReport, SolverError> {
    if schedule.len() != problem.len() {
        return Err(SolverError::InvalidInput("schedule length differs from client count".into()));
    }
    solve_inner(problem, Some(schedule))
}

fn solve_inner(problem: &RoundProblem, fixed: Option<&[bool]>) -> Result<SolveReport, SolverError> {
    let (lo0, hi0) = delta_bounds(problem.queues, problem.profiles, problem.config);
    let width = hi0 - lo0;
    let rel = problem.config.dinkelbach_rel_tol;
    let xi = (rel * width).max(f64::MIN_POSITIVE);
    let outer_cap = if width > 0.0 {
        ((width / xi).log2().ceil() as usize + 5).min(MAX_OUTER_ITERATIONS)
    } else {
        5
    };
    let bcd_tol = 1e-3 * xi;

    let mut stats = SolveStats::default();
    let (mut lo, mut hi) = (lo0, hi0);
    let mut best: Option<(Action, f64)> = None;
    for iteration in 1..=outer_cap {
        let eta = 0.5 * (lo + hi);
        let inf = inf_u(problem, eta, fixed, best.as_ref().map(|(a, _)| a), bcd_tol, &mut stats)?;
        let ratio = problem.ratio(&inf.action);
        if best.as_ref().is_none_or(|(_, r)| ratio < *r) {
            best = Some((inf.action.clone(), ratio));
        }
        if inf.value.abs() <= xi {
            let (action, ratio) = best.expect("set above");
            return Ok(SolveReport {
                action,
                ratio,
                eta,
                residual: inf.value.abs(),
                tolerance: xi,
                initial_bracket: (lo0, hi0),
                final_bracket: (lo, hi),
                outer_iterations: iteration,
                outer_cap,
                stats,
                trace: inf.trace,
            });
        }
        if inf.value > 0.0 {
            lo = eta;
        } else {
            hi = eta;
        }
        // Any attained ratio bounds the minimum from above.
        let attained = best.as_ref().map_or(hi, |(_, r)| *r);
        hi = hi.min(attained).max(lo);
    }
    Err(SolverError::NonConvergence { stage: Stage::Outer, iterations: outer_cap, cap: outer_cap })
}
