//! Per-round decision rules: DRACS and the CS / EC / SA baselines.
//!
//! The baselines choose a schedule first: CS takes the `k` clients with the
//! best uplink rate at full power, EC the `k` clients with the lowest
//! running long-term energy rate, SA everyone. `k` is the number of clients
//! DRACS scheduled in the same round. The continuous variables are then
//! optimised for that schedule. By default ([`BaselineMode::SharedQueue`])
//! this reuses the queue-weighted DRACS objective with the schedule frozen;
//! [`BaselineMode::PerRoundBudget`] instead caps each round's energy at
//! `E^sup·τ` (see [`budget`]).

pub mod budget;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::solver::{solve_round, solve_round_with_schedule, RoundProblem, SolveReport, SolverError};
use crate::sysmodel::{uplink_rate, Action};

pub use budget::{solve_budget_round, BudgetSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Dracs,
    Cs,
    Ec,
    Sa,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [PolicyKind::Dracs, PolicyKind::Cs, PolicyKind::Ec, PolicyKind::Sa];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Dracs => "dracs",
            PolicyKind::Cs => "cs",
            PolicyKind::Ec => "ec",
            PolicyKind::Sa => "sa",
        }
    }

    /// Whether the policy needs the DRACS schedule size of the round.
    pub fn needs_hint(self) -> bool {
        matches!(self, PolicyKind::Cs | PolicyKind::Ec)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dracs" => Ok(PolicyKind::Dracs),
            "cs" => Ok(PolicyKind::Cs),
            "ec" => Ok(PolicyKind::Ec),
            "sa" => Ok(PolicyKind::Sa),
            other => Err(PolicyError::UnknownPolicy(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    PerRoundBudget,
    #[default]
    SharedQueue,
}

impl FromStr for BaselineMode {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "per_round_budget" => Ok(BaselineMode::PerRoundBudget),
            "shared_queue" => Ok(BaselineMode::SharedQueue),
            other => Err(PolicyError::UnknownMode(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("policy {0} needs the DRACS schedule size for the round")]
    MissingHint(PolicyKind),
    #[error("schedule size {hint} exceeds the {clients} clients")]
    HintTooLarge { hint: usize, clients: usize },
    #[error("unknown policy {0:?} (expected dracs, cs, ec or sa)")]
    UnknownPolicy(String),
    #[error("unknown baseline mode {0:?} (expected per_round_budget or shared_queue)")]
    UnknownMode(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Indices of the `k` largest values; ties go to the lower index.
fn top_k(values: &[f64], k: usize, largest: bool) -> Vec<bool> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let ord = values[a].total_cmp(&values[b]);
        (if largest { ord.reverse() } else { ord }).then(a.cmp(&b))
    });
    let mut schedule = vec![false; values.len()];
    for &i in order.iter().take(k) {
        schedule[i] = true;
    }
    schedule
}

/// CS: the `k` clients with the highest rates.
pub fn select_by_rate(rates: &[f64], k: usize) -> Vec<bool> {
    top_k(rates, k, true)
}

/// EC: the `k` clients with the lowest long-term energy rates.
pub fn select_by_energy(lta_energy: &[f64], k: usize) -> Vec<bool> {
    top_k(lta_energy, k, false)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub action: Action,
    /// Present when the DRACS solver produced the action.
    pub report: Option<SolveReport>,
    /// False when a per-round budget could not be met.
    pub budget_met: bool,
}

/// A policy together with its running state.
#[derive(Debug, Clone)]
pub struct Policy {
    pub kind: PolicyKind,
    pub mode: BaselineMode,
    energy_sum: Vec<f64>,
    time_sum: f64,
}

impl Policy {
    pub fn new(kind: PolicyKind, mode: BaselineMode, clients: usize) -> Self {
        Self { kind, mode, energy_sum: vec![0.0; clients], time_sum: 0.0 }
    }

    /// Σ_t E_n / Σ_t τ so far; zero before the first round.
    pub fn lta_energy(&self) -> Vec<f64> {
        if self.time_sum > 0.0 {
            self.energy_sum.iter().map(|e| e / self.time_sum).collect()
        } else {
            vec![0.0; self.energy_sum.len()]
        }
    }

    pub fn decide(&self, problem: &RoundProblem, hint: Option<usize>) -> Result<Decision, PolicyError> {
        let n = problem.len();
        let schedule = match self.kind {
            PolicyKind::Dracs => {
                let report = solve_round(problem)?;
                return Ok(Decision { action: report.action.clone(), report: Some(report), budget_met: true });
            }
            PolicyKind::Sa => vec![true; n],
            PolicyKind::Cs | PolicyKind::Ec => {
                let k = hint.ok_or(PolicyError::MissingHint(self.kind))?;
                if k > n {
                    return Err(PolicyError::HintTooLarge { hint: k, clients: n });
                }
                if self.kind == PolicyKind::Cs {
                    let rates: Vec<f64> = (0..n)
                        .map(|i| uplink_rate(problem.profiles[i].p_max, problem.channel.gain[i], problem.config))
                        .collect();
                    select_by_rate(&rates, k)
                } else {
                    select_by_energy(&self.lta_energy(), k)
                }
            }
        };
        match self.mode {
            BaselineMode::PerRoundBudget => {
                let sol = solve_budget_round(problem, &schedule);
                Ok(Decision { action: sol.action, report: None, budget_met: sol.feasible })
            }
            BaselineMode::SharedQueue => {
                let report = solve_round_with_schedule(problem, &schedule)?;
                Ok(Decision { action: report.action.clone(), report: Some(report), budget_met: true })
            }
        }
    }

    /// Records the realised energies and latency of a round.
    pub fn observe(&mut self, energy: &[f64], latency: f64) {
        for (s, e) in self.energy_sum.iter_mut().zip(energy) {
            *s += e;
        }
        self.time_sum += latency;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysmodel::{ChannelState, ClientProfile, SystemConfig};

    #[test]
    fn cs_takes_highest_rates() {
        assert_eq!(select_by_rate(&[5.0, 1.0, 3.0], 2), vec![true, false, true]);
        assert_eq!(select_by_rate(&[2.0, 2.0, 1.0], 1), vec![true, false, false]);
    }

    #[test]
    fn ec_takes_lowest_energy() {
        assert_eq!(select_by_energy(&[0.3, 0.1, 0.5], 1), vec![false, true, false]);
        assert_eq!(select_by_energy(&[0.0, 0.0, 0.0], 2), vec![true, true, false]);
    }

    #[test]
    fn parses_names() {
        assert_eq!("DRACS".parse::<PolicyKind>().unwrap(), PolicyKind::Dracs);
        assert!("xx".parse::<PolicyKind>().is_err());
        assert_eq!("shared-queue".parse::<BaselineMode>().unwrap(), BaselineMode::SharedQueue);
    }

    fn setup() -> (Vec<ClientProfile>, SystemConfig, ChannelState, Vec<f64>) {
        let cfg = SystemConfig::reference();
        let profiles: Vec<ClientProfile> = (0..3)
            .map(|i| ClientProfile {
                id: i,
                dataset_size: 1000,
                cycles_per_sample: 5e4,
                switch_cap: 1e-28,
                model_bits: 1e6,
                distance: 200.0,
                f_min: 1e9,
                f_max: 4e9,
                p_min: 0.2,
                p_max: 1.0,
                energy_supply: 0.4,
            })
            .collect();
        let ch = ChannelState::from_rho(vec![5.0, 1.0, 3.0], &profiles, &cfg);
        (profiles, cfg, ch, vec![100.0; 3])
    }

    #[test]
    fn baselines_respect_hint_and_feasibility() {
        let (profiles, cfg, ch, z) = setup();
        let prob = RoundProblem::new(&profiles, &cfg, &ch, &z).unwrap();
        let cs = Policy::new(PolicyKind::Cs, BaselineMode::PerRoundBudget, 3);
        assert!(matches!(cs.decide(&prob, None), Err(PolicyError::MissingHint(PolicyKind::Cs))));
        let d = cs.decide(&prob, Some(2)).unwrap();
        assert_eq!(d.action.schedule, vec![true, false, true]);
        assert!(d.action.is_feasible(&profiles));

        let mut ec = Policy::new(PolicyKind::Ec, BaselineMode::SharedQueue, 3);
        ec.observe(&[0.3, 0.1, 0.5], 1.0);
        let d = ec.decide(&prob, Some(1)).unwrap();
        assert_eq!(d.action.schedule, vec![false, true, false]);

        let sa = Policy::new(PolicyKind::Sa, BaselineMode::PerRoundBudget, 3);
        assert_eq!(sa.decide(&prob, None).unwrap().action.schedule, vec![true; 3]);
    }
}
