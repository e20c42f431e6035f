//! Virtual energy queues and the drift-plus-penalty machinery.
//!
//! Queue backlogs are kept in units of `SystemConfig::energy_unit` joules.
//! With the default of 1e-3 the queues count millijoules, which keeps the
//! equilibrium backlog at a size the queues reach within tens of rounds for
//! V in the 1e3..1e5 range. The objective numerator is therefore
//! `-V·D + Σ Z·E/unit`.

use serde::{Deserialize, Serialize};

use crate::sysmodel::{
    clamped_exp_mean, evaluate_action, uplink_rate, Action, ChannelState, ClientProfile,
    ModelError, RoundOutcome, SystemConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueState {
    /// Z_n(t), in energy units.
    pub backlog: Vec<f64>,
    pub round: u64,
}

impl QueueState {
    pub fn zeros(n: usize) -> Self {
        Self { backlog: vec![0.0; n], round: 0 }
    }

    pub fn from_backlog(backlog: Vec<f64>) -> Self {
        Self { backlog, round: 0 }
    }

    /// Advances every queue by one round given energies in joules.
    pub fn advance(
        &mut self,
        energy_joules: &[f64],
        profiles: &[ClientProfile],
        latency: f64,
        config: &SystemConfig,
    ) {
        let unit = config.energy_unit;
        for ((z, &e), p) in self.backlog.iter_mut().zip(energy_joules).zip(profiles) {
            *z = queue_update(*z, e / unit, p.energy_supply / unit, latency);
        }
        self.round += 1;
    }

    pub fn sum_squares(&self) -> f64 {
        self.backlog.iter().map(|z| z * z).sum()
    }
}

/// max{Z + E − E^sup·τ, 0}; all energies in the same unit.
pub fn queue_update(z: f64, energy: f64, supply: f64, latency: f64) -> f64 {
    (z + energy - supply * latency).max(0.0)
}

/// −V·D + Σ Z·E, with E converted into queue units.
pub fn penalty_numerator(outcome: &RoundOutcome, queues: &[f64], config: &SystemConfig) -> f64 {
    let weighted: f64 = queues
        .iter()
        .zip(&outcome.energy)
        .map(|(z, e)| z * e)
        .sum::<f64>()
        / config.energy_unit;
    -config.lyapunov_v * outcome.data_size + weighted
}

pub fn ratio_of(outcome: &RoundOutcome, queues: &[f64], config: &SystemConfig) -> f64 {
    penalty_numerator(outcome, queues, config) / outcome.latency
}

/// Δ_V(t) = (−V·D(t) + Σ Z_n·E_n(t)) / τ(t).
pub fn drift_penalty_ratio(
    action: &Action,
    channel: &ChannelState,
    queues: &[f64],
    profiles: &[ClientProfile],
    config: &SystemConfig,
) -> Result<f64, ModelError> {
    let outcome = evaluate_action(action, channel, profiles, config)?;
    Ok(ratio_of(&outcome, queues, config))
}

/// U = −V·D + Σ Z·E − η·τ, the parametric form whose zero locates Δ_V.
pub fn u_value(
    action: &Action,
    channel: &ChannelState,
    queues: &[f64],
    eta: f64,
    profiles: &[ClientProfile],
    config: &SystemConfig,
) -> Result<f64, ModelError> {
    let outcome = evaluate_action(action, channel, profiles, config)?;
    Ok(penalty_numerator(&outcome, queues, config) - eta * outcome.latency)
}

fn rate_at(profile: &ClientProfile, power: f64, rho: f64, config: &SystemConfig) -> f64 {
    uplink_rate(power, config.large_scale_gain(profile) * rho, config)
}

/// Constant H of the one-step drift bound, in squared energy units:
/// ½·Σ_n [E_n,worst² + (E_n^sup·τ_n,worst)²], evaluated at the mean fading gain.
pub fn compute_h(profiles: &[ClientProfile], config: &SystemConfig) -> f64 {
    let unit = config.energy_unit;
    let k = config.local_epochs;
    let work = config.mining_work();
    let sum_fmin: f64 = profiles.iter().map(|p| p.f_min).sum();
    let rho_mean = clamped_exp_mean(config.rho_min, config.rho_max);
    let total: f64 = profiles
        .iter()
        .map(|p| {
            let rate = rate_at(p, p.p_min, rho_mean, config);
            let cycles = p.training_cycles(k);
            let energy = p.switch_cap * cycles * p.f_max.powi(2)
                + p.p_max * p.model_bits / rate
                + p.switch_cap * p.f_max.powi(3) * work / sum_fmin;
            let latency = cycles / p.f_min + work / sum_fmin + p.model_bits / rate;
            (energy / unit).powi(2) + (p.energy_supply * latency / unit).powi(2)
        })
        .sum();
    0.5 * total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauBounds {
    /// Shortest possible round: nobody scheduled, everyone mining at f_max.
    pub min: f64,
    /// Longest possible round: slowest client at (P_min, ρ_min, f_min) and
    /// everyone mining at f_min.
    pub max: f64,
    /// Shortest round when every client is scheduled.
    pub min_all_scheduled: f64,
}

pub fn tau_bounds(profiles: &[ClientProfile], config: &SystemConfig) -> TauBounds {
    let k = config.local_epochs;
    let work = config.mining_work();
    let sum_fmax: f64 = profiles.iter().map(|p| p.f_max).sum();
    let sum_fmin: f64 = profiles.iter().map(|p| p.f_min).sum();
    let fastest = profiles
        .iter()
        .map(|p| {
            p.training_cycles(k) / p.f_max
                + p.model_bits / rate_at(p, p.p_max, config.rho_max, config)
        })
        .fold(0.0, f64::max);
    let slowest = profiles
        .iter()
        .map(|p| {
            p.training_cycles(k) / p.f_min
                + p.model_bits / rate_at(p, p.p_min, config.rho_min, config)
        })
        .fold(0.0, f64::max);
    TauBounds {
        min: work / sum_fmax,
        max: slowest + work / sum_fmin,
        min_all_scheduled: fastest + work / sum_fmax,
    }
}

/// Bracket [Δ_min, Δ_max] containing Δ_V for every feasible action and every
/// channel realisation with ρ in [ρ_min, ρ_max].
pub fn delta_bounds(queues: &[f64], profiles: &[ClientProfile], config: &SystemConfig) -> (f64, f64) {
    let tau = tau_bounds(profiles, config);
    let unit = config.energy_unit;
    let k = config.local_epochs;
    let work = config.mining_work();
    let sum_fmax: f64 = profiles.iter().map(|p| p.f_max).sum();
    let sum_fmin: f64 = profiles.iter().map(|p| p.f_min).sum();
    let total_data: f64 = profiles.iter().map(ClientProfile::samples).sum();

    let mut lo_energy = 0.0;
    let mut hi_energy = 0.0;
    for (p, &z) in profiles.iter().zip(queues) {
        lo_energy += z * p.switch_cap * p.f_min.powi(3) * work / sum_fmax;
        hi_energy += z
            * (p.switch_cap * p.training_cycles(k) * p.f_max.powi(2)
                + p.switch_cap * p.f_max.powi(3) * work / sum_fmin
                + p.p_max * p.model_bits / rate_at(p, p.p_min, config.rho_min, config));
    }
    let numer_lo = -config.lyapunov_v * total_data + lo_energy / unit;
    let numer_hi = hi_energy / unit;
    let lo = if numer_lo < 0.0 { numer_lo / tau.min } else { numer_lo / tau.max };
    (lo, numer_hi / tau.min)
}

/// Constants entering the performance guarantees of the online algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremBounds {
    pub h: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    /// Upper bound on the optimal long-term data rate: Σ D_n / τ_min.
    pub phi_hat: f64,
    /// 2(H + τ_max), as stated alongside the guarantee.
    pub g1: f64,
    /// 2(τ_max·φ̂ − min_n D_n).
    pub g2: f64,
    /// 2(H + τ_max·C), from the derivation.
    pub g1_derivation: f64,
    /// 2(τ_max·φ̂ − Σ D_n), from the derivation.
    pub g2_derivation: f64,
    pub c: f64,
    pub energy_unit: f64,
}

impl TheoremBounds {
    pub fn compute(queues: &[f64], profiles: &[ClientProfile], config: &SystemConfig) -> Self {
        let h = compute_h(profiles, config);
        let tau = tau_bounds(profiles, config);
        let (delta_min, delta_max) = delta_bounds(queues, profiles, config);
        let total_data: f64 = profiles.iter().map(ClientProfile::samples).sum();
        let min_data = profiles.iter().map(ClientProfile::samples).fold(f64::INFINITY, f64::min);
        let phi_hat = total_data / tau.min;
        let c = config.additive_slack;
        Self {
            h,
            tau_min: tau.min,
            tau_max: tau.max,
            delta_min,
            delta_max,
            phi_hat,
            g1: 2.0 * (h + tau.max),
            g2: 2.0 * (tau.max * phi_hat - min_data),
            g1_derivation: 2.0 * (h + tau.max * c),
            g2_derivation: 2.0 * (tau.max * phi_hat - total_data),
            c,
            energy_unit: config.energy_unit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapBounds {
    /// (H/τ_min + C)/V, in objective units.
    pub optimality_gap: f64,
    /// Allowed excess of Ē_n(T) over E_n^sup, in watts.
    pub energy_excess: f64,
    /// Same with the G1 − V·G2 radicand of the derivation; NaN when negative.
    pub energy_excess_derivation: f64,
}

pub fn theorem_gap_bounds(bounds: &TheoremBounds, v: f64, rounds: u64, queues0: &[f64]) -> GapBounds {
    let t = rounds as f64;
    let z0: f64 = queues0.iter().map(|z| z * z).sum();
    let excess = |radicand: f64| {
        let inner = radicand / t + z0 / (t * t);
        if inner < 0.0 {
            f64::NAN
        } else {
            inner.sqrt() / bounds.tau_min * bounds.energy_unit
        }
    };
    GapBounds {
        optimality_gap: (bounds.h / bounds.tau_min + bounds.c) / v,
        energy_excess: excess(bounds.g1 + v * bounds.g2),
        energy_excess_derivation: excess(bounds.g1_derivation - v * bounds.g2_derivation),
    }
}
