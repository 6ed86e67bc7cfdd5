use listrep::envs::{make_random, EpisodicEnv, GenerativeEnv};
use listrep::harness::{run_replicated, BlackboxSpec, CanonicalMode, LearnerSpec, Parallelism};
use listrep::learners::{
    derive_constants, strong_learn, weak_learn, Algorithm, AlgorithmConstants, ConstantOverrides,
    ConstantsMode, GenerativeBlackbox, LearnerOptions, Shape,
};
use listrep::planner::SampleSize;
use listrep::TabularMdp;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn shape(m: &TabularMdp) -> Shape {
    Shape {
        num_states: m.num_states(),
        num_actions: m.num_actions(),
        horizon: m.horizon(),
    }
}

fn strong_constants(m: &TabularMdp, w: u64) -> AlgorithmConstants {
    let over = ConstantOverrides {
        c1: Some(1.0),
        eps0: Some(0.02),
        eps1: Some(0.01),
        eta0: Some(0.005),
        w: Some(w),
    };
    derive_constants(shape(m), 0.5, 0.1, Algorithm::Strong, ConstantsMode::Scaled, &over, u64::MAX)
        .unwrap()
}

fn weak_constants(m: &TabularMdp, w: u64) -> AlgorithmConstants {
    let over = ConstantOverrides {
        c1: Some(1.0),
        eps0: Some(0.02),
        eps1: Some(0.01),
        eta0: None,
        w: Some(w),
    };
    derive_constants(shape(m), 0.5, 0.1, Algorithm::Weak, ConstantsMode::Scaled, &over, u64::MAX)
        .unwrap()
}

/// Three states visited in a fixed cycle whatever the action; action 0 pays
/// 1 and action 1 pays nothing.
fn single_path(horizon: usize) -> TabularMdp {
    TabularMdp::from_fn(
        3,
        2,
        horizon,
        0,
        |_, s, _, row| row[(s + 1) % 3] = 1.0,
        |_, _, a| if a == 0 { 1.0 } else { 0.0 },
    )
    .unwrap()
}

#[test]
fn traces_are_reproducible_from_seeds() {
    let m = make_random(3, 2, 3, 5, 0.67).unwrap();
    let strong = strong_constants(&m, 1_000);
    let weak = weak_constants(&m, 1_000);
    for seed in 0..4u64 {
        let run_strong = || {
            let mut env = EpisodicEnv::new(&m, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            strong_learn(&mut env, &mut rng, &strong, &LearnerOptions::default()).unwrap()
        };
        let (a, b) = (run_strong(), run_strong());
        assert_eq!(a.trace, b.trace);
        assert!(a.trace.entries.iter().all(|e| e.episodes == 1_000));

        let run_weak = || {
            let mut env = EpisodicEnv::new(&m, seed);
            let mut bb =
                GenerativeBlackbox::new(GenerativeEnv::new(&m, seed + 7), SampleSize::Fixed(100), u64::MAX);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            weak_learn(&mut env, &mut bb, &mut rng, &weak, &LearnerOptions::default()).unwrap()
        };
        let (a, b) = (run_weak(), run_weak());
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.trace.key(), b.trace.key());
        assert!(a.trace.entries.iter().all(|e| e.episodes == 1_000));
    }
}

#[test]
fn estimated_truncation_grows_with_threshold() {
    // Fixed r_action and the same environment seed, so every batch draws
    // from the same stream; only r_trunc changes.
    for model_seed in 0..20u64 {
        let m = make_random(3, 2, 4, model_seed, 0.67).unwrap();
        let consts = strong_constants(&m, 2_000);
        let run = |r_trunc: f64| {
            let mut env = EpisodicEnv::new(&m, 9);
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let options = LearnerOptions {
                r_action: Some(0.015),
                r_trunc: Some(r_trunc),
            };
            strong_learn(&mut env, &mut rng, &consts, &options).unwrap().profile
        };
        let thresholds = [0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.4, 1.0];
        let profiles: Vec<_> = thresholds.iter().map(|&t| run(t)).collect();
        for (i, w) in profiles.windows(2).enumerate() {
            assert!(
                w[0].is_subset_of(&w[1]),
                "model {model_seed}: {} at {} not inside {} at {}",
                w[0].key(),
                thresholds[i],
                w[1].key(),
                thresholds[i + 1]
            );
        }
    }
}

#[test]
fn single_path_model_has_one_output() {
    let m = single_path(4);
    let par = Parallelism::default();
    let strong = LearnerSpec::Strong {
        constants: strong_constants(&m, 50),
        options: LearnerOptions::default(),
    };
    let weak = LearnerSpec::Weak {
        constants: weak_constants(&m, 50),
        blackbox: BlackboxSpec::Generative { samples: Some(5) },
        options: LearnerOptions::default(),
    };
    for spec in [strong, weak] {
        let rep = run_replicated(&spec, &m, 100, 3, CanonicalMode::FullTable, par).unwrap();
        assert_eq!(rep.completed, 100);
        assert_eq!(rep.distinct_policies, 1, "{}", spec.label());
        assert_eq!(rep.fraction_within(0.0), 1.0);
    }
}

#[test]
fn single_action_weak_learner_is_unique() {
    let m = make_random(3, 1, 3, 4, 1.0).unwrap();
    let spec = LearnerSpec::Weak {
        constants: weak_constants(&m, 200),
        blackbox: BlackboxSpec::Adversarial,
        options: LearnerOptions::default(),
    };
    let rep = run_replicated(&spec, &m, 40, 1, CanonicalMode::FullTable, Parallelism::default()).unwrap();
    assert_eq!(rep.distinct_policies, 1);
}

#[test]
fn unflagged_runs_have_enough_effective_samples() {
    let mut checked = 0;
    for seed in 0..20u64 {
        let m = make_random(3, 2, 3, seed, 0.67).unwrap();
        let consts = strong_constants(&m, 3_000);
        let mut env = EpisodicEnv::new(&m, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = strong_learn(&mut env, &mut rng, &consts, &LearnerOptions::default()).unwrap();
        if out.diagnostics.flagged() {
            continue;
        }
        checked += 1;
        let floor = consts.w as f64 * consts.eta0.unwrap() / 2.0;
        let min = out.diagnostics.min_effective_count.unwrap();
        assert!(min as f64 >= floor, "seed {seed}: {min} < {floor}");
    }
    assert!(checked > 0);
}
