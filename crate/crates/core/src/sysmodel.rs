//! Physical model of one communication round: channel gains, local training,
//! uplink transmission and proof-of-work block mining.
//!
//! Everything here is SI (W, J, s, Hz, bits). Conversions from dB/dBm
//! happen once, when a configuration is loaded.

use std::f64::consts::LN_2;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("client {client}: channel gain must be positive and finite, got {gain}")]
    InvalidChannel { client: usize, gain: f64 },
    #[error("total mining frequency must be positive, got {0}")]
    NoMiningPower(f64),
    #[error("client {client}: {reason}")]
    InvalidProfile { client: usize, reason: String },
    #[error("invalid system configuration: {0}")]
    InvalidConfig(String),
    #[error("action has {got} entries but there are {expected} clients")]
    ShapeMismatch { expected: usize, got: usize },
}

/// Static per-client parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientProfile {
    pub id: usize,
    /// Local dataset size D_n (samples).
    pub dataset_size: u64,
    /// CPU cycles needed per sample per local iteration.
    pub cycles_per_sample: f64,
    /// Effective switched capacitance of the chip.
    pub switch_cap: f64,
    /// Size of the local model upload (bits).
    pub model_bits: f64,
    /// Distance to the access point (m).
    pub distance: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    /// Long-term average energy supply (W).
    pub energy_supply: f64,
}

impl ClientProfile {
    pub fn samples(&self) -> f64 {
        self.dataset_size as f64
    }

    /// Cycles for one round of local training: c_n·K·D_n.
    pub fn training_cycles(&self, local_epochs: u32) -> f64 {
        self.cycles_per_sample * f64::from(local_epochs) * self.samples()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |reason: &str| ModelError::InvalidProfile {
            client: self.id,
            reason: reason.to_string(),
        };
        let positive = [
            ("cycles_per_sample", self.cycles_per_sample),
            ("switch_cap", self.switch_cap),
            ("model_bits", self.model_bits),
            ("distance", self.distance),
            ("f_min", self.f_min),
            ("f_max", self.f_max),
            ("p_min", self.p_min),
            ("p_max", self.p_max),
            ("energy_supply", self.energy_supply),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(bad(&format!("{name} must be positive and finite, got {value}")));
            }
        }
        if self.dataset_size == 0 {
            return Err(bad("dataset_size must be at least 1"));
        }
        if self.f_min > self.f_max {
            return Err(bad("f_min exceeds f_max"));
        }
        if self.p_min > self.p_max {
            return Err(bad("p_min exceeds p_max"));
        }
        Ok(())
    }
}

/// Network-wide constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Uplink bandwidth B (Hz).
    pub bandwidth: f64,
    /// Noise power spectral density N0 (W/Hz).
    pub noise_psd: f64,
    /// Path-loss constant h0 (linear).
    pub pathloss_const: f64,
    /// Reference distance d0 (m).
    pub ref_distance: f64,
    /// Path-loss exponent.
    pub pathloss_exp: f64,
    /// Block generation difficulty α (cycles).
    pub mining_difficulty: f64,
    /// Probability p0 that a block exists by the quantile mining time.
    pub mining_confidence: f64,
    /// Local gradient iterations per round.
    pub local_epochs: u32,
    /// Local gradient step size.
    pub step_size: f64,
    /// Drift-plus-penalty weight V.
    pub lyapunov_v: f64,
    /// Outer Dinkelbach tolerance, as a fraction of the initial bracket width.
    pub dinkelbach_rel_tol: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub rng_seed: u64,
    /// Joules per unit of queue backlog. Queues, V and the drift-plus-penalty
    /// objective are accounted in this unit (1e-3 means millijoules).
    pub energy_unit: f64,
    /// Additive slack C of the per-round solver, used only by the bounds.
    pub additive_slack: f64,
    /// Number of block coordinate descent starts per round (first one is
    /// deterministic, the rest random).
    pub bcd_restarts: usize,
}

impl SystemConfig {
    /// Physical constants from the experimental parameter table, with queue
    /// energies accounted in millijoules.
    pub fn reference() -> Self {
        Self {
            bandwidth: 180e3,
            noise_psd: dbm_to_watts(-174.0),
            pathloss_const: db_to_linear(-30.0),
            ref_distance: 1.0,
            pathloss_exp: 2.0,
            mining_difficulty: 2e9,
            mining_confidence: 1.0 - 1e-10,
            local_epochs: 1,
            step_size: 1e-3,
            lyapunov_v: 1e4,
            dinkelbach_rel_tol: 1e-6,
            rho_min: 0.1,
            rho_max: 10.0,
            rng_seed: 1,
            energy_unit: 1e-3,
            additive_slack: 0.0,
            bcd_restarts: 3,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        for (name, value) in [
            ("bandwidth", self.bandwidth),
            ("noise_psd", self.noise_psd),
            ("pathloss_const", self.pathloss_const),
            ("ref_distance", self.ref_distance),
            ("mining_difficulty", self.mining_difficulty),
            ("dinkelbach_rel_tol", self.dinkelbach_rel_tol),
            ("energy_unit", self.energy_unit),
            ("rho_min", self.rho_min),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return bad(format!("{name} must be positive and finite, got {value}"));
            }
        }
        if !(self.mining_confidence > 0.0 && self.mining_confidence < 1.0) {
            return bad(format!(
                "mining_confidence must lie in (0, 1), got {}",
                self.mining_confidence
            ));
        }
        if self.rho_min > self.rho_max {
            return bad("rho_min exceeds rho_max".into());
        }
        if self.local_epochs == 0 {
            return bad("local_epochs must be at least 1".into());
        }
        if !(self.lyapunov_v >= 0.0 && self.lyapunov_v.is_finite()) {
            return bad(format!("lyapunov_v must be nonnegative, got {}", self.lyapunov_v));
        }
        if self.additive_slack < 0.0 {
            return bad("additive_slack must be nonnegative".into());
        }
        if self.bcd_restarts == 0 {
            return bad("bcd_restarts must be at least 1".into());
        }
        Ok(())
    }

    /// −α·ln(1−p0): cycles the network must spend to produce a block with
    /// confidence p0.
    pub fn mining_work(&self) -> f64 {
        -self.mining_difficulty * (1.0 - self.mining_confidence).ln()
    }

    /// Large-scale gain h0·(d0/d)^ν for a client.
    pub fn large_scale_gain(&self, profile: &ClientProfile) -> f64 {
        self.pathloss_const * (self.ref_distance / profile.distance).powf(self.pathloss_exp)
    }

    pub fn noise_power(&self) -> f64 {
        self.bandwidth * self.noise_psd
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Channel realisation for one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    /// Small-scale fading power gain ρ_n(t), clamped.
    pub rho: Vec<f64>,
    /// Uplink power gain h_n(t).
    pub gain: Vec<f64>,
}

impl ChannelState {
    pub fn from_rho(rho: Vec<f64>, profiles: &[ClientProfile], config: &SystemConfig) -> Self {
        let gain = rho
            .iter()
            .zip(profiles)
            .map(|(&r, p)| config.large_scale_gain(p) * r)
            .collect();
        Self { rho, gain }
    }
}

/// Draws ρ_n ~ Exp(1) independently per client and clamps to
/// `[rho_min, rho_max]`.
pub fn sample_channel<R: Rng + ?Sized>(
    rng: &mut R,
    profiles: &[ClientProfile],
    config: &SystemConfig,
) -> ChannelState {
    let rho = profiles
        .iter()
        .map(|_| {
            let draw: f64 = rng.sample(Exp1);
            draw.clamp(config.rho_min, config.rho_max)
        })
        .collect();
    ChannelState::from_rho(rho, profiles, config)
}

/// Mean of an Exp(1) variable clamped to `[lo, hi]`: lo + e^−lo − e^−hi.
pub fn clamped_exp_mean(lo: f64, hi: f64) -> f64 {
    lo + (-lo).exp() - (-hi).exp()
}

/// The decision vector X(t).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub schedule: Vec<bool>,
    pub tx_power: Vec<f64>,
    pub train_freq: Vec<f64>,
    pub mine_freq: Vec<f64>,
}

impl Action {
    /// Everyone scheduled, every knob at its maximum.
    pub fn full_throttle(profiles: &[ClientProfile]) -> Self {
        Self {
            schedule: vec![true; profiles.len()],
            tx_power: profiles.iter().map(|p| p.p_max).collect(),
            train_freq: profiles.iter().map(|p| p.f_max).collect(),
            mine_freq: profiles.iter().map(|p| p.f_max).collect(),
        }
    }

    pub fn scheduled_count(&self) -> usize {
        self.schedule.iter().filter(|&&s| s).count()
    }

    /// Box constraints C1–C4, inclusive.
    pub fn is_feasible(&self, profiles: &[ClientProfile]) -> bool {
        let n = profiles.len();
        if [
            self.schedule.len(),
            self.tx_power.len(),
            self.train_freq.len(),
            self.mine_freq.len(),
        ]
        .iter()
        .any(|&len| len != n)
        {
            return false;
        }
        profiles.iter().enumerate().all(|(i, p)| {
            (p.p_min..=p.p_max).contains(&self.tx_power[i])
                && (p.f_min..=p.f_max).contains(&self.train_freq[i])
                && (p.f_min..=p.f_max).contains(&self.mine_freq[i])
        })
    }

    fn check_shape(&self, n: usize) -> Result<(), ModelError> {
        for len in [
            self.schedule.len(),
            self.tx_power.len(),
            self.train_freq.len(),
            self.mine_freq.len(),
        ] {
            if len != n {
                return Err(ModelError::ShapeMismatch { expected: n, got: len });
            }
        }
        Ok(())
    }
}

/// Time and energy spent by one client in one round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseCost {
    pub train_time: f64,
    pub train_energy: f64,
    pub uplink_time: f64,
    pub uplink_energy: f64,
    pub mining_energy: f64,
}

impl PhaseCost {
    pub fn total_energy(&self) -> f64 {
        client_energy(self.train_energy, self.uplink_energy, self.mining_energy)
    }

    pub fn communication_time(&self) -> f64 {
        self.train_time + self.uplink_time
    }
}

/// Realised cost of an action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    /// τ(t) in seconds.
    pub latency: f64,
    pub mining_time: f64,
    /// E_n(t) in joules.
    pub energy: Vec<f64>,
    /// D(t) in samples.
    pub data_size: f64,
    pub phases: Vec<PhaseCost>,
}

/// log2(1 + SNR), switching to the log domain for very large SNR.
pub fn spectral_efficiency(power: f64, gain: f64, config: &SystemConfig) -> f64 {
    let snr = power * gain / config.noise_power();
    if snr > 1e12 {
        let ln_snr = power.ln() + gain.ln() - config.noise_power().ln();
        (ln_snr + (-ln_snr).exp().ln_1p()) / LN_2
    } else {
        snr.ln_1p() / LN_2
    }
}

pub fn uplink_rate(power: f64, gain: f64, config: &SystemConfig) -> f64 {
    config.bandwidth * spectral_efficiency(power, gain, config)
}

pub fn training_time(profile: &ClientProfile, scheduled: bool, train_freq: f64, local_epochs: u32) -> f64 {
    if !scheduled {
        return 0.0;
    }
    profile.training_cycles(local_epochs) / train_freq
}

pub fn training_energy(profile: &ClientProfile, scheduled: bool, train_freq: f64, local_epochs: u32) -> f64 {
    if !scheduled {
        return 0.0;
    }
    profile.switch_cap * profile.training_cycles(local_epochs) * train_freq * train_freq
}

pub fn uplink_time(
    profile: &ClientProfile,
    power: f64,
    gain: f64,
    config: &SystemConfig,
    scheduled: bool,
) -> Result<f64, ModelError> {
    if !(gain.is_finite() && gain > 0.0) {
        return Err(ModelError::InvalidChannel { client: profile.id, gain });
    }
    if !scheduled {
        return Ok(0.0);
    }
    Ok(profile.model_bits / uplink_rate(power, gain, config))
}

pub fn uplink_energy(
    profile: &ClientProfile,
    power: f64,
    gain: f64,
    config: &SystemConfig,
    scheduled: bool,
) -> Result<f64, ModelError> {
    Ok(power * uplink_time(profile, power, gain, config, scheduled)?)
}

/// Deterministic p0-quantile block mining time −α·ln(1−p0)/Σf.
pub fn mining_time(mine_freqs: &[f64], config: &SystemConfig) -> Result<f64, ModelError> {
    let total: f64 = mine_freqs.iter().sum();
    if !(total > 0.0) {
        return Err(ModelError::NoMiningPower(total));
    }
    Ok(config.mining_work() / total)
}

/// Mean block time θ(t) = α/Σf of the Poisson mining model.
pub fn mean_mining_time(mine_freqs: &[f64], config: &SystemConfig) -> Result<f64, ModelError> {
    let total: f64 = mine_freqs.iter().sum();
    if !(total > 0.0) {
        return Err(ModelError::NoMiningPower(total));
    }
    Ok(config.mining_difficulty / total)
}

pub fn mining_energy(profile: &ClientProfile, mine_freq: f64, mining_time: f64) -> f64 {
    profile.switch_cap * mining_time * mine_freq.powi(3)
}

/// Slowest train+upload time plus the mining time. An empty slice (nobody
/// scheduled) contributes zero.
pub fn round_latency(communication_times: &[f64], mining_time: f64) -> f64 {
    communication_times.iter().copied().fold(0.0, f64::max) + mining_time
}

pub fn client_energy(train: f64, uplink: f64, mining: f64) -> f64 {
    train + uplink + mining
}

/// Evaluates an action with the quantile mining time.
pub fn evaluate_action(
    action: &Action,
    channel: &ChannelState,
    profiles: &[ClientProfile],
    config: &SystemConfig,
) -> Result<RoundOutcome, ModelError> {
    let tau_bloc = mining_time(&action.mine_freq, config)?;
    evaluate_action_with_mining_time(action, channel, profiles, config, tau_bloc)
}

/// Evaluates an action with an externally supplied mining time (used for
/// stochastic mining draws).
pub fn evaluate_action_with_mining_time(
    action: &Action,
    channel: &ChannelState,
    profiles: &[ClientProfile],
    config: &SystemConfig,
    tau_bloc: f64,
) -> Result<RoundOutcome, ModelError> {
    action.check_shape(profiles.len())?;
    let k = config.local_epochs;
    let mut phases = Vec::with_capacity(profiles.len());
    let mut data_size = 0.0;
    for (n, profile) in profiles.iter().enumerate() {
        let on = action.schedule[n];
        let p = action.tx_power[n];
        let h = channel.gain[n];
        let phase = PhaseCost {
            train_time: training_time(profile, on, action.train_freq[n], k),
            train_energy: training_energy(profile, on, action.train_freq[n], k),
            uplink_time: uplink_time(profile, p, h, config, on)?,
            uplink_energy: uplink_energy(profile, p, h, config, on)?,
            mining_energy: mining_energy(profile, action.mine_freq[n], tau_bloc),
        };
        if on {
            data_size += profile.samples();
        }
        phases.push(phase);
    }
    let comm: Vec<f64> = phases
        .iter()
        .zip(&action.schedule)
        .filter(|(_, &on)| on)
        .map(|(ph, _)| ph.communication_time())
        .collect();
    Ok(RoundOutcome {
        latency: round_latency(&comm, tau_bloc),
        mining_time: tau_bloc,
        energy: phases.iter().map(PhaseCost::total_energy).collect(),
        data_size,
        phases,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn profile(dataset_size: u64, cycles: f64) -> ClientProfile {
        ClientProfile {
            id: 0,
            dataset_size,
            cycles_per_sample: cycles,
            switch_cap: 1e-28,
            model_bits: 1e5,
            distance: 200.0,
            f_min: 1e9,
            f_max: 4e9,
            p_min: dbm_to_watts(23.0),
            p_max: 1.0,
            energy_supply: 0.2,
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn identity_geometry_gives_h0() {
        let mut cfg = SystemConfig::reference();
        cfg.pathloss_const = 1e-3;
        let mut p = profile(1000, 2e3);
        p.distance = 1.0;
        let ch = ChannelState::from_rho(vec![1.0], &[p], &cfg);
        assert_eq!(ch.gain[0], 1e-3);
    }

    #[test]
    fn gain_at_200_m() {
        let cfg = SystemConfig::reference();
        let ch = ChannelState::from_rho(vec![1.0], &[profile(1000, 2e3)], &cfg);
        assert!(rel(ch.gain[0], 2.5e-8) < 1e-12);
    }

    #[test]
    fn fading_draws_are_clamped() {
        let mut cfg = SystemConfig::reference();
        cfg.rho_min = 0.5;
        cfg.rho_max = 1.5;
        let profiles = vec![profile(1000, 2e3); 4];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let ch = sample_channel(&mut rng, &profiles, &cfg);
            assert!(ch.rho.iter().all(|r| (0.5..=1.5).contains(r)));
        }
        assert_eq!(15f64.clamp(0.1, 10.0), 10.0);
    }

    #[test]
    fn clamped_fading_mean_matches_closed_form() {
        let cfg = SystemConfig::reference();
        let profiles = vec![profile(1000, 2e3)];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 200_000;
        let sum: f64 = (0..draws)
            .map(|_| sample_channel(&mut rng, &profiles, &cfg).rho[0])
            .sum();
        let mean = sum / draws as f64;
        // Closed form checked against trapezoid quadrature of the clamped density.
        let (a, b) = (cfg.rho_min, cfg.rho_max);
        let steps = 200_000;
        let dx = (b - a) / steps as f64;
        let mut integral = 0.0;
        for i in 0..=steps {
            let x = a + dx * i as f64;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            integral += w * x * (-x).exp() * dx;
        }
        let quad = a * (1.0 - (-a).exp()) + integral + b * (-b).exp();
        assert!(rel(clamped_exp_mean(a, b), quad) < 1e-8);
        assert!(rel(mean, quad) < 0.01);
    }

    #[test]
    fn training_time_and_energy() {
        let p = profile(4000, 5e4);
        assert_eq!(training_time(&p, false, 4e9, 1), 0.0);
        assert_eq!(training_energy(&p, false, 4e9, 1), 0.0);
        assert!(rel(training_time(&p, true, 4e9, 1), 0.05) < 1e-12);
        assert!(rel(training_energy(&p, true, 4e9, 1), 0.32) < 1e-12);
        let q = profile(1000, 2e3);
        assert!(rel(training_time(&q, true, 1e9, 1), 2e-3) < 1e-12);
        assert!(rel(training_energy(&q, true, 1e9, 1), 2e-4) < 1e-12);
    }

    #[test]
    fn uplink_reference_values() {
        let cfg = SystemConfig::reference();
        let p = profile(1000, 2e3);
        // log2(1 + 2.5e-8 / (1.8e5 * 3.981e-21)) evaluated independently.
        let snr: f64 = 2.5e-8 / (1.8e5 * 3.981_071_705_534_97e-21);
        let expected = 1e5 / (1.8e5 * (1.0 + snr).log2());
        let t = uplink_time(&p, 1.0, 2.5e-8, &cfg, true).unwrap();
        assert!(rel(t, expected) < 1e-12);
        assert!((t - 0.0222).abs() < 1e-4);
        let e = uplink_energy(&p, 1.0, 2.5e-8, &cfg, true).unwrap();
        assert!(rel(e, t) < 1e-15);
        assert_eq!(uplink_time(&p, 1.0, 2.5e-8, &cfg, false).unwrap(), 0.0);
        assert_eq!(uplink_energy(&p, 1.0, 2.5e-8, &cfg, false).unwrap(), 0.0);

        let mut big = p.clone();
        big.model_bits *= 2.0;
        let t2 = uplink_time(&big, 1.0, 2.5e-8, &cfg, true).unwrap();
        assert!(rel(t2, 2.0 * t) < 1e-15);
    }

    #[test]
    fn uplink_rejects_bad_gain() {
        let cfg = SystemConfig::reference();
        let p = profile(1000, 2e3);
        assert!(matches!(
            uplink_time(&p, 1.0, 0.0, &cfg, true),
            Err(ModelError::InvalidChannel { .. })
        ));
        assert!(uplink_time(&p, 1.0, -1.0, &cfg, false).is_err());
    }

    #[test]
    fn huge_snr_uses_log_domain() {
        let cfg = SystemConfig::reference();
        let direct = (1.0 + 1e13f64).log2();
        let h = 1e13 * cfg.noise_power();
        assert!(rel(spectral_efficiency(1.0, h, &cfg), direct) < 1e-14);
        assert!(spectral_efficiency(1e300, 1e300, &cfg).is_finite());
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn mining_time_reference_values() {
        let cfg = SystemConfig::reference();
        let t = mining_time(&[1e9; 20], &cfg).unwrap();
        assert!(rel(t, -2e9 * 1e-10f64.ln() / 2e10) < 1e-6);
        assert!((t - 2.3026).abs() < 1e-4);
        let half = mining_time(&[2e9; 20], &cfg).unwrap();
        assert!(rel(half, t / 2.0) < 1e-14);
        let one = mining_time(&[4e9], &cfg).unwrap();
        assert!((one - 11.513).abs() < 1e-3);
        assert!(matches!(mining_time(&[0.0, 0.0], &cfg), Err(ModelError::NoMiningPower(_))));
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn mining_energy_reference_values() {
        let p = profile(1000, 2e3);
        assert!((mining_energy(&p, 1e9, 2.3026) - 0.23026).abs() < 1e-12);
        assert!(rel(mining_energy(&p, 2e9, 1.0), 0.8) < 1e-12);
        assert!(mining_energy(&p, p.f_min, 1.0) < mining_energy(&p, p.f_min * 1.01, 1.0));
    }

    #[test]
    fn latency_composition() {
        assert_eq!(round_latency(&[], 2.3), 2.3);
        assert!((round_latency(&[0.05 + 0.02, 0.01 + 0.01], 2.3) - 2.37).abs() < 1e-12);
        assert_eq!(round_latency(&[0.5], 1.0), 1.5);
    }

    #[test]
    fn energy_is_additive() {
        assert_eq!(client_energy(0.0, 0.2, 0.3), 0.5);
        assert_eq!(client_energy(0.1, 0.0, 0.3), 0.4);
        assert_eq!(client_energy(0.1, 0.2, 0.0), 0.30000000000000004);
    }

    #[test]
    fn unscheduled_clients_only_mine() {
        let cfg = SystemConfig::reference();
        let profiles = vec![profile(1000, 5e4), profile(4000, 5e4)];
        let ch = ChannelState::from_rho(vec![1.0, 1.0], &profiles, &cfg);
        let mut a = Action::full_throttle(&profiles);
        a.schedule = vec![false, false];
        let out = evaluate_action(&a, &ch, &profiles, &cfg).unwrap();
        assert_eq!(out.data_size, 0.0);
        assert_eq!(out.latency, out.mining_time);
        for ph in &out.phases {
            assert_eq!(ph.train_energy + ph.uplink_energy + ph.train_time + ph.uplink_time, 0.0);
            assert!(ph.mining_energy > 0.0);
        }
    }

    #[test]
    fn reference_conversions() {
        assert!(rel(dbm_to_watts(30.0), 1.0) < 1e-15);
        assert!(rel(dbm_to_watts(-174.0), 3.981e-21) < 1e-3);
        assert!(rel(db_to_linear(-30.0), 1e-3) < 1e-15);
        SystemConfig::reference().validate().unwrap();
    }
}
