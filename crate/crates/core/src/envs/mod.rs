//! Simulators over a [`TabularMdp`] and the built-in environment generators.
//!
//! [`EpisodicEnv`] only allows interaction through full episodes from the
//! initial state. [`GenerativeEnv`] answers arbitrary `(s, a, h)` queries.
//! Both own their random state, seeded explicitly, so identical seeds yield
//! identical samples.

mod generators;

pub use generators::{
    bandit_arm_policy, chain_failure_state, gridworld_failure_state, gridworld_state,
    make_bandit_embedding, make_chain, make_gridworld, make_gridworld_custom, make_random,
    BanditLayout, GridAction,
};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mdp::{Policy, Step, TabularMdp, Trajectory};

fn row_samplers(m: &TabularMdp) -> Vec<WeightedIndex<f64>> {
    let mut out = Vec::with_capacity(m.horizon() * m.num_states() * m.num_actions());
    for h in 0..m.horizon() {
        for s in 0..m.num_states() {
            for a in 0..m.num_actions() {
                // Rows are validated to sum to one, so construction cannot fail.
                out.push(WeightedIndex::new(m.row(h, s, a)).expect("validated row"));
            }
        }
    }
    out
}

/// Result of one [`EpisodicEnv::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next_state: usize,
    pub reward: f64,
    /// Level of `next_state`; equals the horizon once the episode is over.
    pub level: usize,
}

/// Episodic access: `reset`, then exactly `H` calls to `step`.
#[derive(Debug, Clone)]
pub struct EpisodicEnv<'a> {
    mdp: &'a TabularMdp,
    samplers: Vec<WeightedIndex<f64>>,
    seed: u64,
    rng: ChaCha8Rng,
    state: usize,
    level: usize,
    active: bool,
    episodes: u64,
}

impl<'a> EpisodicEnv<'a> {
    pub fn new(mdp: &'a TabularMdp, seed: u64) -> Self {
        Self {
            mdp,
            samplers: row_samplers(mdp),
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: mdp.initial_state(),
            level: 0,
            active: false,
            episodes: 0,
        }
    }

    pub fn mdp(&self) -> &'a TabularMdp {
        self.mdp
    }

    /// Restarts the random stream at the beginning of stream `key` derived
    /// from the construction seed. Batches that select a stream by a fixed
    /// key see the same samples regardless of what ran before them.
    pub fn select_stream(&mut self, key: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.rng.set_stream(key);
    }

    /// Number of episodes started so far.
    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    pub fn reset(&mut self) -> usize {
        self.state = self.mdp.initial_state();
        self.level = 0;
        self.active = true;
        self.episodes += 1;
        self.state
    }

    pub fn step(&mut self, action: usize) -> Result<StepOutcome> {
        if !self.active {
            return Err(Error::InvalidParameter(
                "step called outside an episode; call reset first".into(),
            ));
        }
        if action >= self.mdp.num_actions() {
            return Err(Error::InvalidAction {
                level: self.level,
                state: self.state,
                action,
            });
        }
        let (h, s) = (self.level, self.state);
        let idx = (h * self.mdp.num_states() + s) * self.mdp.num_actions() + action;
        let next = self.samplers[idx].sample(&mut self.rng);
        let reward = self.mdp.reward(h, s, action);
        self.state = next;
        self.level += 1;
        if self.level == self.mdp.horizon() {
            self.active = false;
        }
        Ok(StepOutcome {
            next_state: next,
            reward,
            level: self.level,
        })
    }
}

/// Plays one full episode of `pi`.
pub fn rollout(env: &mut EpisodicEnv<'_>, pi: &Policy) -> Result<Trajectory> {
    pi.check_for(env.mdp())?;
    let mut state = env.reset();
    let mut steps = Vec::with_capacity(pi.horizon());
    for h in 0..pi.horizon() {
        let action = pi.action(h, state);
        let out = env.step(action)?;
        steps.push(Step {
            state,
            action,
            reward: out.reward,
        });
        state = out.next_state;
    }
    Ok(Trajectory {
        steps,
        final_state: state,
    })
}

/// Generative access: a next-state sample for any `(s, a, h)`.
#[derive(Debug, Clone)]
pub struct GenerativeEnv<'a> {
    mdp: &'a TabularMdp,
    samplers: Vec<WeightedIndex<f64>>,
    rng: ChaCha8Rng,
    samples: u64,
}

impl<'a> GenerativeEnv<'a> {
    pub fn new(mdp: &'a TabularMdp, seed: u64) -> Self {
        Self::from_rng(mdp, ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn from_rng(mdp: &'a TabularMdp, rng: ChaCha8Rng) -> Self {
        Self {
            mdp,
            samplers: row_samplers(mdp),
            rng,
            samples: 0,
        }
    }

    pub fn mdp(&self) -> &'a TabularMdp {
        self.mdp
    }

    /// Total samples drawn so far.
    pub fn samples(&self) -> u64 {
        self.samples
    }

    pub fn sample(&mut self, s: usize, a: usize, h: usize) -> usize {
        self.samples += 1;
        let idx = (h * self.mdp.num_states() + s) * self.mdp.num_actions() + a;
        self.samplers[idx].sample(&mut self.rng)
    }

    /// Next-state counts from `n` samples of `(s, a, h)`.
    pub fn sample_counts(&mut self, s: usize, a: usize, h: usize, n: u64) -> Vec<u64> {
        let mut counts = vec![0u64; self.mdp.num_states()];
        for _ in 0..n {
            counts[self.sample(s, a, h)] += 1;
        }
        counts
    }

    /// Empirical model from `n` samples of every `(s, a, h)`, in level, state,
    /// action order. Rewards are copied from the true model.
    pub fn empirical_model(&mut self, n: u64) -> Result<TabularMdp> {
        if n == 0 {
            return Err(Error::InvalidParameter("samples per pair must be >= 1".into()));
        }
        let m = self.mdp;
        TabularMdp::from_fn(
            m.num_states(),
            m.num_actions(),
            m.horizon(),
            m.initial_state(),
            |h, s, a, row| {
                for (out, c) in row.iter_mut().zip(self.sample_counts(s, a, h, n)) {
                    *out = c as f64 / n as f64;
                }
            },
            |h, s, a| m.reward(h, s, a),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::model_distance;

    #[test]
    fn deterministic_env_ignores_seed() {
        let m = make_gridworld_custom(3, |_, _, _| 1.0).unwrap();
        let pi = Policy::constant(m.horizon(), m.num_states(), 0);
        let a = rollout(&mut EpisodicEnv::new(&m, 1), &pi).unwrap();
        let b = rollout(&mut EpisodicEnv::new(&m, 99), &pi).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.steps.len(), m.horizon());
    }

    #[test]
    fn same_seed_same_trajectory() {
        let m = make_chain(8, 0.02).unwrap();
        let pi = Policy::constant(m.horizon(), m.num_states(), 1);
        let mut e1 = EpisodicEnv::new(&m, 5);
        let mut e2 = EpisodicEnv::new(&m, 5);
        for _ in 0..20 {
            assert_eq!(rollout(&mut e1, &pi).unwrap(), rollout(&mut e2, &pi).unwrap());
        }
        assert_eq!(e1.episodes(), 20);
    }

    #[test]
    fn selected_streams_are_reproducible() {
        let m = make_random(3, 2, 3, 4, 1.0).unwrap();
        let pi = Policy::constant(3, 3, 0);
        let mut env = EpisodicEnv::new(&m, 8);
        env.select_stream(17);
        let first = rollout(&mut env, &pi).unwrap();
        rollout(&mut env, &pi).unwrap();
        env.select_stream(17);
        assert_eq!(rollout(&mut env, &pi).unwrap(), first);
    }

    #[test]
    fn stepping_past_the_horizon_fails() {
        let m = make_chain(2, 0.0).unwrap();
        let mut env = EpisodicEnv::new(&m, 0);
        assert!(env.step(0).is_err());
        env.reset();
        for _ in 0..m.horizon() {
            env.step(0).unwrap();
        }
        assert!(env.step(0).is_err());
    }

    #[test]
    fn deterministic_model_is_estimated_exactly() {
        let m = make_gridworld_custom(3, |_, _, _| 1.0).unwrap();
        let est = GenerativeEnv::new(&m, 3).empirical_model(1).unwrap();
        assert_eq!(model_distance(&m, &est).unwrap(), 0.0);
    }
}
