//! The round loop: sample the channel, let the policy decide, realise the
//! round, train and aggregate, advance the queues, record.
//!
//! Randomness comes from independent ChaCha8 streams of the configured seed:
//! channel draws, mining draws, synthetic data and BCD restart seeds. Every
//! policy run with the same seed therefore sees the same channels and
//! mining draws, which keeps policy comparisons paired.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fl::{FlEngine, LearningConfig};
use crate::lyapunov::{theorem_gap_bounds, QueueState, TheoremBounds};
use crate::policies::{BaselineMode, Policy, PolicyError, PolicyKind};
use crate::solver::{brute_force_round, RoundProblem};
use crate::sysmodel::{
    evaluate_action_with_mining_time, mining_time, sample_channel, ChannelState, ClientProfile, ModelError,
    RoundOutcome, SystemConfig,
};

const CHANNEL_STREAM: u64 = 1;
const MINING_STREAM: u64 = 2;
const DATA_STREAM: u64 = 3;
const RESTART_STREAM: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub rounds: usize,
    pub policy: PolicyKind,
    #[serde(default)]
    pub baseline_mode: BaselineMode,
    pub system: SystemConfig,
    pub profiles: Vec<ClientProfile>,
    #[serde(default)]
    pub learning: LearningConfig,
    /// Evaluate the FL model every this many rounds (and on the last one).
    /// Zero disables federated training altogether.
    pub metric_every: usize,
    /// Draw the block time from its exponential law instead of using the
    /// p0-quantile.
    #[serde(default)]
    pub stochastic_mining: bool,
    /// Cross-check every DRACS round against a brute-force grid (N ≤ 3).
    #[serde(default)]
    pub oracle: bool,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.rounds == 0 {
            return Err(SimError::Invalid("rounds must be at least 1".into()));
        }
        if self.profiles.is_empty() {
            return Err(SimError::Invalid("at least one client is required".into()));
        }
        if self.oracle && self.profiles.len() > 3 {
            return Err(SimError::Invalid(format!(
                "the brute-force oracle supports at most 3 clients, got {}",
                self.profiles.len()
            )));
        }
        self.system.validate()?;
        for p in &self.profiles {
            p.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("round {round}: {source}")]
    Round { round: usize, source: PolicyError },
}

/// Where CS and EC get the per-round DRACS schedule size from.
#[derive(Debug, Clone, PartialEq)]
pub enum HintSource {
    /// Solve DRACS alongside, on its own queues, with the same randomness.
    Shadow,
    /// Counts from an earlier DRACS run with the same seed.
    Recorded(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based round index.
    pub t: usize,
    pub tau: f64,
    pub data: f64,
    /// Joules per client.
    pub energy: Vec<f64>,
    /// Backlogs after this round's update, in energy units.
    pub queues: Vec<f64>,
    /// Δ_V of the chosen action under the pre-update queues.
    pub delta_v: f64,
    /// NaN when not evaluated this round.
    pub loss: f64,
    pub accuracy: f64,
    pub scheduled: usize,
}

/// Per-run solver health counters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub rounds_solved: usize,
    pub max_outer_iterations: usize,
    /// Rounds whose outer iteration count exceeded its cap.
    pub outer_cap_exceeded: usize,
    /// Rounds that ended with |inf U| above the tolerance.
    pub residual_exceeded: usize,
    /// Largest |inf U|/ξ seen.
    pub worst_residual_ratio: f64,
    pub bcd_calls: usize,
    pub bcd_max_passes: usize,
    pub bcd_regressions: usize,
    pub mining_max_iterations: usize,
    /// Rounds where a baseline could not meet its per-round budget.
    pub budget_misses: usize,
    pub oracle_rounds: usize,
    /// Largest (Δ_solver − Δ_grid)/|Δ_grid|; negative means the solver beat the grid.
    pub oracle_worst_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSeries {
    pub policy: PolicyKind,
    pub seed: u64,
    pub lyapunov_v: f64,
    pub energy_supply: Vec<f64>,
    pub initial_queues: Vec<f64>,
    pub records: Vec<RoundRecord>,
    pub solver: SolverSummary,
    pub bounds: TheoremBounds,
}

impl MetricsSeries {
    pub fn scheduled_counts(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.scheduled).collect()
    }

    /// Long-term averages over the first `rounds` records, from raw sums.
    pub fn lta_prefix(&self, rounds: usize) -> LtaReport {
        let records = &self.records[..rounds.min(self.records.len())];
        let clients = self.energy_supply.len();
        let total_time: f64 = records.iter().map(|r| r.tau).sum();
        let total_data: f64 = records.iter().map(|r| r.data).sum();
        let total_energy: Vec<f64> =
            (0..clients).map(|n| records.iter().map(|r| r.energy[n]).sum()).collect();
        let per_time = |x: f64| if total_time > 0.0 { x / total_time } else { 0.0 };
        LtaReport {
            rounds: records.len(),
            total_time,
            total_data,
            lta_data: per_time(total_data),
            lta_energy: total_energy.iter().map(|&e| per_time(e)).collect(),
            total_energy,
            final_queues: records.last().map_or_else(|| self.initial_queues.clone(), |r| r.queues.clone()),
        }
    }

    /// Per-round check of the energy guarantee: for every prefix length T
    /// and client, `Ē_n(T) − E_n^sup − excess(T)`. Returns the largest value
    /// (≤ 0 means the bound holds everywhere) and where it occurred.
    pub fn worst_energy_bound_margin(&self) -> (f64, usize, usize) {
        let mut worst = (f64::NEG_INFINITY, 0, 0);
        let clients = self.energy_supply.len();
        let mut energy = vec![0.0; clients];
        let mut time = 0.0;
        for (i, r) in self.records.iter().enumerate() {
            time += r.tau;
            let excess =
                theorem_gap_bounds(&self.bounds, self.lyapunov_v, (i + 1) as u64, &self.initial_queues).energy_excess;
            for (n, total) in energy.iter_mut().enumerate() {
                *total += r.energy[n];
                let margin = *total / time - self.energy_supply[n] - excess;
                if margin > worst.0 {
                    worst = (margin, i + 1, n);
                }
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtaReport {
    pub rounds: usize,
    pub total_time: f64,
    pub total_data: f64,
    /// D̄ = ΣD/Στ.
    pub lta_data: f64,
    pub total_energy: Vec<f64>,
    /// Ē_n = ΣE_n/Στ.
    pub lta_energy: Vec<f64>,
    pub final_queues: Vec<f64>,
}

pub fn lta_report(series: &MetricsSeries) -> LtaReport {
    series.lta_prefix(series.records.len())
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// One policy with its queues, stepping on shared randomness.
struct Agent {
    policy: Policy,
    queues: QueueState,
}

struct Step {
    decision: crate::policies::Decision,
    outcome: RoundOutcome,
    delta_v: f64,
}

impl Agent {
    fn step(
        &mut self,
        cfg: &SimConfig,
        channel: &ChannelState,
        mining_draw: Option<f64>,
        restart_seed: u64,
        hint: Option<usize>,
        round: usize,
    ) -> Result<Step, SimError> {
        let problem = RoundProblem::new(&cfg.profiles, &cfg.system, channel, &self.queues.backlog)
            .map_err(|e| SimError::Round { round, source: e.into() })?
            .with_restart_seed(restart_seed);
        let decision = self.policy.decide(&problem, hint).map_err(|source| SimError::Round { round, source })?;
        let delta_v = decision.report.as_ref().map_or_else(|| problem.ratio(&decision.action), |r| r.ratio);
        let quantile = mining_time(&decision.action.mine_freq, &cfg.system)?;
        // The quantile is −ln(1−p0)·α/Σf; an Exp(1) draw replaces −ln(1−p0).
        let tau_bloc = match mining_draw {
            Some(e) => quantile * e / -(-cfg.system.mining_confidence).ln_1p(),
            None => quantile,
        };
        let outcome =
            evaluate_action_with_mining_time(&decision.action, channel, &cfg.profiles, &cfg.system, tau_bloc)?;
        self.queues.advance(&outcome.energy, &cfg.profiles, outcome.latency, &cfg.system);
        self.policy.observe(&outcome.energy, outcome.latency);
        Ok(Step { decision, outcome, delta_v })
    }
}

/// Runs a simulation; CS and EC get their hints from a shadow DRACS run.
pub fn run(cfg: &SimConfig) -> Result<MetricsSeries, SimError> {
    run_with_hints(cfg, HintSource::Shadow)
}

pub fn run_with_hints(cfg: &SimConfig, hints: HintSource) -> Result<MetricsSeries, SimError> {
    cfg.validate()?;
    let n = cfg.profiles.len();
    if let HintSource::Recorded(counts) = &hints {
        if cfg.policy.needs_hint() && counts.len() < cfg.rounds {
            return Err(SimError::Invalid(format!("{} recorded hints for {} rounds", counts.len(), cfg.rounds)));
        }
    }
    let seed = cfg.system.rng_seed;
    let mut channel_rng = stream(seed, CHANNEL_STREAM);
    let mut mining_rng = stream(seed, MINING_STREAM);
    let mut restart_rng = stream(seed, RESTART_STREAM);
    let mut fl = (cfg.metric_every > 0).then(|| {
        let sizes: Vec<usize> = cfg.profiles.iter().map(|p| p.dataset_size as usize).collect();
        FlEngine::synthetic(&sizes, &cfg.learning, stream(seed, DATA_STREAM).next_u64())
    });

    let mut agent = Agent { policy: Policy::new(cfg.policy, cfg.baseline_mode, n), queues: QueueState::zeros(n) };
    let mut shadow = (cfg.policy.needs_hint() && hints == HintSource::Shadow).then(|| Agent {
        policy: Policy::new(PolicyKind::Dracs, cfg.baseline_mode, n),
        queues: QueueState::zeros(n),
    });
    let initial_queues = agent.queues.backlog.clone();
    let bounds = TheoremBounds::compute(&initial_queues, &cfg.profiles, &cfg.system);
    let mut summary = SolverSummary { oracle_worst_gap: f64::NEG_INFINITY, ..Default::default() };
    let mut records = Vec::with_capacity(cfg.rounds);

    for t in 1..=cfg.rounds {
        let channel = sample_channel(&mut channel_rng, &cfg.profiles, &cfg.system);
        let draw: f64 = mining_rng.sample(Exp1);
        let mining_draw = cfg.stochastic_mining.then_some(draw);
        let restart_seed = restart_rng.next_u64();

        let hint = match (&hints, shadow.as_mut()) {
            _ if !cfg.policy.needs_hint() => None,
            (_, Some(s)) => {
                Some(s.step(cfg, &channel, mining_draw, restart_seed, None, t)?.decision.action.scheduled_count())
            }
            (HintSource::Recorded(counts), None) => Some(counts[t - 1]),
            (HintSource::Shadow, None) => unreachable!("shadow agent exists whenever hints are needed"),
        };

        let pre_queues = agent.queues.backlog.clone();
        let step = agent.step(cfg, &channel, mining_draw, restart_seed, hint, t)?;
        if let Some(report) = &step.decision.report {
            summary.rounds_solved += 1;
            summary.max_outer_iterations = summary.max_outer_iterations.max(report.outer_iterations);
            summary.outer_cap_exceeded += usize::from(report.outer_iterations > report.outer_cap);
            summary.residual_exceeded += usize::from(report.residual > report.tolerance);
            if report.tolerance > 0.0 {
                summary.worst_residual_ratio = summary.worst_residual_ratio.max(report.residual / report.tolerance);
            }
            summary.bcd_calls += report.stats.bcd_calls;
            summary.bcd_max_passes = summary.bcd_max_passes.max(report.stats.bcd_max_passes);
            summary.bcd_regressions += report.stats.bcd_regressions;
            summary.mining_max_iterations = summary.mining_max_iterations.max(report.stats.mining_max_iterations);
        }
        summary.budget_misses += usize::from(!step.decision.budget_met);

        if cfg.oracle && cfg.policy == PolicyKind::Dracs {
            let problem = RoundProblem::new(&cfg.profiles, &cfg.system, &channel, &pre_queues)
                .map_err(|e| SimError::Round { round: t, source: e.into() })?;
            let levels = if n <= 2 { 8 } else { 4 };
            let grid = brute_force_round(&problem, levels).map_err(|e| SimError::Round { round: t, source: e.into() })?;
            let gap = (step.delta_v - grid.ratio) / grid.ratio.abs();
            summary.oracle_rounds += 1;
            summary.oracle_worst_gap = summary.oracle_worst_gap.max(gap);
        }

        let (loss, accuracy) = match fl.as_mut() {
            Some(engine) => {
                engine.round(&step.decision.action.schedule, cfg.system.local_epochs, cfg.system.step_size);
                if t % cfg.metric_every == 0 || t == cfg.rounds {
                    engine.evaluate()
                } else {
                    (f64::NAN, f64::NAN)
                }
            }
            None => (f64::NAN, f64::NAN),
        };

        records.push(RoundRecord {
            t,
            tau: step.outcome.latency,
            data: step.outcome.data_size,
            energy: step.outcome.energy,
            queues: agent.queues.backlog.clone(),
            delta_v: step.delta_v,
            loss,
            accuracy,
            scheduled: step.decision.action.scheduled_count(),
        });
    }
    if summary.oracle_rounds == 0 {
        summary.oracle_worst_gap = 0.0;
    }

    Ok(MetricsSeries {
        policy: cfg.policy,
        seed,
        lyapunov_v: cfg.system.lyapunov_v,
        energy_supply: cfg.profiles.iter().map(|p| p.energy_supply).collect(),
        initial_queues,
        records,
        solver: summary,
        bounds,
    })
}
