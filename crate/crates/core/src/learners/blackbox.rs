//! Black-box PAC learners for reaching a single `(s, h)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::DEFAULT_ENUMERATION_CAP;
use crate::dp::max_occupancy_at;
use crate::envs::GenerativeEnv;
use crate::error::{Error, Result};
use crate::mdp::{Policy, TabularMdp};
use crate::planner::{robust_plan, SampleSize};
use crate::truncation::reach_reward_mdp;

/// Cost accounting for a black box.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BlackboxSamples {
    pub calls: u64,
    pub samples: u64,
}

/// A learner that, with probability at least `1 - delta0`, returns a policy
/// reaching `(state, level)` with probability within `eps0` of the best.
pub trait PacLearner {
    fn learn(&mut self, state: usize, level: usize, eps0: f64, delta0: f64) -> Result<Policy>;

    fn name(&self) -> &'static str;

    fn cost(&self) -> BlackboxSamples;
}

fn check_target(m: &TabularMdp, state: usize, level: usize) -> Result<()> {
    if state >= m.num_states() || level >= m.horizon() {
        return Err(Error::InvalidParameter(format!(
            "reach target (s={state}, h={level}) outside the model"
        )));
    }
    Ok(())
}

/// Estimates the prefix `0..h` from generative samples and plans greedily
/// on the reach-reward model.
#[derive(Debug, Clone)]
pub struct GenerativeBlackbox<'a> {
    env: GenerativeEnv<'a>,
    samples: SampleSize,
    budget: u64,
    calls: u64,
}

impl<'a> GenerativeBlackbox<'a> {
    pub fn new(env: GenerativeEnv<'a>, samples: SampleSize, budget: u64) -> Self {
        Self {
            env,
            samples,
            budget,
            calls: 0,
        }
    }

    /// Per-pair sample count making every prefix row accurate to
    /// `eps0 / (2H)` in total variation with probability `1 - delta0`.
    pub fn hoeffding_samples(m: &TabularMdp, eps0: f64, delta0: f64) -> f64 {
        let (s, a, h) = (
            m.num_states() as f64,
            m.num_actions() as f64,
            m.horizon() as f64,
        );
        let tv = eps0 / (2.0 * h);
        (2.0 * s * s * a * h / delta0).ln() * s * s / (2.0 * tv * tv)
    }
}

impl PacLearner for GenerativeBlackbox<'_> {
    fn learn(&mut self, state: usize, level: usize, eps0: f64, delta0: f64) -> Result<Policy> {
        let m = self.env.mdp();
        check_target(m, state, level)?;
        let n = match self.samples {
            SampleSize::Fixed(n) => n as f64,
            SampleSize::Formula => Self::hoeffding_samples(m, eps0, delta0).ceil(),
        };
        if !(n <= self.budget as f64) || n < 1.0 {
            return Err(Error::BudgetExceeded {
                name: "blackbox samples",
                required: n,
                budget: self.budget,
            });
        }
        let n = n as u64;
        self.calls += 1;
        let env = &mut self.env;
        let prefix = TabularMdp::from_fn(
            m.num_states(),
            m.num_actions(),
            m.horizon(),
            m.initial_state(),
            |h, s, a, row| {
                if h < level {
                    for (out, c) in row.iter_mut().zip(env.sample_counts(s, a, h, n)) {
                        *out = c as f64 / n as f64;
                    }
                } else {
                    row[s] = 1.0;
                }
            },
            |_, _, _| 0.0,
        )?;
        let target = reach_reward_mdp(&prefix, state, level)?;
        Ok(robust_plan(&target, 0.0)?.restrict(m.num_states()))
    }

    fn name(&self) -> &'static str {
        "generative"
    }

    fn cost(&self) -> BlackboxSamples {
        BlackboxSamples {
            calls: self.calls,
            samples: self.env.samples(),
        }
    }
}

/// Worst case for replicability: picks uniformly among every policy that
/// meets the accuracy requirement, found by exhaustive enumeration, and plays
/// random actions after the target level.
#[derive(Debug, Clone)]
pub struct AdversarialBlackbox<'a> {
    mdp: &'a TabularMdp,
    rng: ChaCha8Rng,
    cap: u64,
    calls: u64,
}

impl<'a> AdversarialBlackbox<'a> {
    pub fn new(mdp: &'a TabularMdp, seed: u64) -> Self {
        Self {
            mdp,
            rng: ChaCha8Rng::seed_from_u64(seed),
            cap: DEFAULT_ENUMERATION_CAP,
            calls: 0,
        }
    }

    pub fn with_cap(mut self, cap: u64) -> Self {
        self.cap = cap;
        self
    }

    /// Every prefix (actions at levels `< level`, flattened) whose reach
    /// probability is at least `d* - eps0`.
    pub fn accurate_prefixes(&self, state: usize, level: usize, eps0: f64) -> Result<Vec<Vec<usize>>> {
        let m = self.mdp;
        check_target(m, state, level)?;
        let (ns, na) = (m.num_states(), m.num_actions());
        let slots = level * ns;
        let count = (na as f64).powi(slots as i32);
        if count > self.cap as f64 {
            return Err(Error::InstanceTooLarge {
                policies: count,
                cap: self.cap,
            });
        }
        let best = max_occupancy_at(m, state, level);
        let mut prefix = vec![0usize; slots];
        let mut keep = Vec::new();
        loop {
            if reach(m, &prefix, state, level) >= best - eps0 {
                keep.push(prefix.clone());
            }
            // Odometer increment, last slot fastest.
            let mut i = slots;
            loop {
                if i == 0 {
                    return Ok(keep);
                }
                i -= 1;
                prefix[i] += 1;
                if prefix[i] < na {
                    break;
                }
                prefix[i] = 0;
            }
        }
    }
}

/// `Pr[s_level = state]` under the prefix policy.
fn reach(m: &TabularMdp, prefix: &[usize], state: usize, level: usize) -> f64 {
    let ns = m.num_states();
    let mut dist = vec![0.0; ns];
    dist[m.initial_state()] = 1.0;
    for h in 0..level {
        let mut next = vec![0.0; ns];
        for (s, &p) in dist.iter().enumerate() {
            if p > 0.0 {
                let row = m.row(h, s, prefix[h * ns + s]);
                for (n, q) in next.iter_mut().zip(row) {
                    *n += p * q;
                }
            }
        }
        dist = next;
    }
    dist[state]
}

impl PacLearner for AdversarialBlackbox<'_> {
    fn learn(&mut self, state: usize, level: usize, eps0: f64, _delta0: f64) -> Result<Policy> {
        let m = self.mdp;
        let keep = self.accurate_prefixes(state, level, eps0)?;
        self.calls += 1;
        let prefix = &keep[self.rng.random_range(0..keep.len())];
        let (ns, na, hz) = (m.num_states(), m.num_actions(), m.horizon());
        let mut actions = prefix.clone();
        actions.extend((level * ns..hz * ns).map(|_| self.rng.random_range(0..na)));
        Policy::new(hz, ns, na, actions)
    }

    fn name(&self) -> &'static str {
        "adversarial"
    }

    fn cost(&self) -> BlackboxSamples {
        BlackboxSamples {
            calls: self.calls,
            samples: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::policy_occupancy;
    use crate::envs::{make_chain, make_random};

    #[test]
    fn adversarial_choices_are_accurate() {
        let m = make_random(3, 2, 3, 4, 1.0).unwrap();
        let mut bb = AdversarialBlackbox::new(&m, 9);
        for h in 0..3 {
            for s in 0..3 {
                let pi = bb.learn(s, h, 0.05, 0.1).unwrap();
                let d = policy_occupancy(&m, &pi).unwrap().get(s, h);
                assert!(d >= max_occupancy_at(&m, s, h) - 0.05 - 1e-12);
            }
        }
        assert_eq!(bb.cost().calls, 9);
    }

    #[test]
    fn adversarial_respects_cap() {
        let m = make_random(4, 3, 4, 0, 1.0).unwrap();
        let bb = AdversarialBlackbox::new(&m, 0).with_cap(100);
        assert!(matches!(
            bb.accurate_prefixes(0, 3, 0.1),
            Err(Error::InstanceTooLarge { .. })
        ));
    }

    #[test]
    fn generative_blackbox_finds_the_chain_path() {
        let m = make_chain(3, 0.1).unwrap();
        let mut bb = GenerativeBlackbox::new(GenerativeEnv::new(&m, 3), SampleSize::Fixed(400), 1_000);
        let pi = bb.learn(2, 2, 0.1, 0.1).unwrap();
        let d = policy_occupancy(&m, &pi).unwrap().get(2, 2);
        assert!((d - max_occupancy_at(&m, 2, 2)).abs() < 1e-12);
        assert!(matches!(
            GenerativeBlackbox::new(GenerativeEnv::new(&m, 3), SampleSize::Formula, 10).learn(
                2, 2, 0.1, 0.1
            ),
            Err(Error::BudgetExceeded { .. })
        ));
    }
}
