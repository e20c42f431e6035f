use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dracs_core::config;
use dracs_core::fl::{aggregate, gradient, objective, LearningConfig, LocalDataset, ModelParams};
use dracs_core::lyapunov::queue_update;
use dracs_core::policies::PolicyKind;
use dracs_core::sim::{run, SimConfig};
use dracs_core::solver::{solve_round, RoundProblem};
use dracs_core::sysmodel::{sample_channel, Action};

fn short_sim(policy: PolicyKind, v: f64, seed: u64) -> SimConfig {
    let mut cfg = config::desk();
    cfg.rounds = 6;
    cfg.metric_every = 0;
    cfg.policy = policy;
    cfg.system.lyapunov_v = v;
    cfg.system.rng_seed = seed;
    cfg
}

fn policy() -> impl Strategy<Value = PolicyKind> {
    prop::sample::select(PolicyKind::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn queue_update_is_nonnegative_and_tracks_the_deficit(
        z in 0.0..1e6f64, e in 0.0..1e5f64, s in 0.0..1e3f64, tau in 0.0..1e2f64,
    ) {
        let next = queue_update(z, e, s, tau);
        prop_assert!(next >= 0.0);
        prop_assert!(next >= z + e - s * tau);
    }

    #[test]
    fn aggregate_stays_in_the_hull_of_scheduled_models(
        coords in prop::collection::vec(prop::collection::vec(-10.0..10.0f64, 4), 1..6),
        mask in prop::collection::vec(any::<bool>(), 6),
        sizes in prop::collection::vec(1.0..5000.0f64, 6),
    ) {
        let n = coords.len();
        let models: Vec<ModelParams> =
            coords.iter().map(|c| ModelParams { weights: c[..3].to_vec(), bias: c[3] }).collect();
        let previous = ModelParams { weights: vec![100.0; 3], bias: 100.0 };
        let merged = aggregate(&models, &mask[..n], &sizes[..n], &previous);
        let chosen: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
        if chosen.is_empty() {
            prop_assert_eq!(merged, previous);
        } else {
            for k in 0..4 {
                let value = |m: &ModelParams| if k < 3 { m.weights[k] } else { m.bias };
                let lo = chosen.iter().map(|&i| value(&models[i])).fold(f64::INFINITY, f64::min);
                let hi = chosen.iter().map(|&i| value(&models[i])).fold(f64::NEG_INFINITY, f64::max);
                let x = value(&merged);
                prop_assert!(x >= lo - 1e-9 && x <= hi + 1e-9);
            }
        }
    }

    #[test]
    fn gradient_matches_central_differences(seed in any::<u64>(), scale in 0.01..2.0f64) {
        let cfg = LearningConfig { dim: 5, ..LearningConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = LocalDataset::synthetic(&mut rng, 60, &cfg);
        let params = ModelParams { weights: vec![scale, -scale, 0.5 * scale, 0.0, 0.1], bias: -0.2 * scale };
        let grad = gradient(&params, &data, cfg.reg);
        let h = 1e-6;
        for k in 0..cfg.dim {
            let mut up = params.clone();
            let mut down = params.clone();
            up.weights[k] += h;
            down.weights[k] -= h;
            let numeric = (objective(&up, &data, cfg.reg) - objective(&down, &data, cfg.reg)) / (2.0 * h);
            prop_assert!((grad.weights[k] - numeric).abs() <= 1e-5 * numeric.abs().max(1e-3));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solved_actions_are_feasible_and_beat_full_throttle(
        seed in any::<u64>(),
        queues in prop::collection::vec(prop_oneof![Just(0.0), 0.0..1e5f64], 6),
    ) {
        let cfg = config::desk();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let channel = sample_channel(&mut rng, &cfg.profiles, &cfg.system);
        let problem = RoundProblem::new(&cfg.profiles, &cfg.system, &channel, &queues).unwrap();
        let report = solve_round(&problem).unwrap();
        prop_assert!(report.action.is_feasible(&cfg.profiles));
        let reference = problem.ratio(&Action::full_throttle(&cfg.profiles));
        prop_assert!(report.ratio <= reference + 1e-9 * reference.abs());
    }

    #[test]
    fn scaling_v_and_queues_together_scales_the_optimum(
        seed in any::<u64>(),
        queues in prop::collection::vec(0.0..1e5f64, 6),
        lambda in 0.1..10.0f64,
    ) {
        let cfg = config::desk();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let channel = sample_channel(&mut rng, &cfg.profiles, &cfg.system);
        let base = solve_round(&RoundProblem::new(&cfg.profiles, &cfg.system, &channel, &queues).unwrap()).unwrap();

        let mut scaled_system = cfg.system.clone();
        scaled_system.lyapunov_v *= lambda;
        let scaled_queues: Vec<f64> = queues.iter().map(|z| lambda * z).collect();
        let scaled = RoundProblem::new(&cfg.profiles, &scaled_system, &channel, &scaled_queues).unwrap();
        let solved = solve_round(&scaled).unwrap();
        // Both optima, evaluated on the scaled problem, agree to solver accuracy.
        let cross = scaled.ratio(&base.action);
        prop_assert!((solved.ratio - cross).abs() <= 1e-3 * cross.abs(), "{} vs {}", solved.ratio, cross);
        prop_assert!((solved.ratio - lambda * base.ratio).abs() <= 1e-3 * (lambda * base.ratio).abs());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn simulated_queues_stay_nonnegative(policy in policy(), v in 1e2..1e5f64, seed in 0u64..1000) {
        let series = run(&short_sim(policy, v, seed)).unwrap();
        for record in &series.records {
            prop_assert!(record.queues.iter().all(|&z| z >= 0.0 && z.is_finite()));
            prop_assert!(record.tau > 0.0);
            prop_assert!(record.energy.iter().all(|&e| e >= 0.0));
        }
    }
}
