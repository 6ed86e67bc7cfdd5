//! Online learners with list-replicability guarantees.
//!
//! Both learners estimate transitions from batches of `W` episodes,
//! truncate states that look rarely reachable at a randomly drawn threshold,
//! and plan with a randomly drawn action tolerance. The strong learner builds
//! its roll-in policies itself, level by level; the weak learner obtains them
//! from a black-box PAC learner.

mod blackbox;
mod constants;
mod strong;
mod weak;

pub use blackbox::{AdversarialBlackbox, BlackboxSamples, GenerativeBlackbox, PacLearner};
pub use constants::{
    derive_constants, formula_values, Algorithm, AlgorithmConstants, ConstantOverrides,
    ConstantsMode, FormulaValues, Shape,
};
pub use strong::{strong_learn, StrongOutcome};
pub use weak::{weak_learn, WeakOutcome};

use std::fmt::Write as _;

use rand::Rng;
use serde::Serialize;

use crate::envs::EpisodicEnv;
use crate::error::Result;
use crate::mdp::{Policy, TabularMdp};
use crate::planner::{draw_tolerance, Draw};
use crate::truncation::absorbing_model;

/// Tolerances fixed in advance instead of drawn; used to replay a run at a
/// chosen threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LearnerOptions {
    pub r_action: Option<f64>,
    pub r_trunc: Option<f64>,
}

/// How a probing policy modifies its roll-in policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverrideRule {
    /// Play the probed action at every state of every level `>= h`.
    FromLevel,
    /// Play the probed action only at the probed `(s, h)`.
    AtPair,
}

/// A roll-in policy for `(state, level)` and the probing rule applied to it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RollInPolicy {
    pub state: usize,
    pub level: usize,
    pub base: Policy,
    pub rule: OverrideRule,
}

impl RollInPolicy {
    /// The probing policy for `action`.
    pub fn probe(&self, action: usize) -> Policy {
        let mut pi = self.base.clone();
        match self.rule {
            OverrideRule::FromLevel => {
                for h in self.level..pi.horizon() {
                    for s in 0..pi.num_states() {
                        pi.set_action(h, s, action);
                    }
                }
            }
            OverrideRule::AtPair => pi.set_action(self.level, self.state, action),
        }
        pi
    }
}

/// One executed batch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub policy: Policy,
    pub episodes: u64,
}

/// Policies executed, in order, and the returned policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExecutionTrace {
    pub entries: Vec<TraceEntry>,
    pub returned: Policy,
}

impl ExecutionTrace {
    /// Canonical string: `policy*episodes` per batch joined by `;`, then
    /// `=>` and the returned policy.
    pub fn key(&self) -> String {
        let mut out = String::new();
        for (i, e) in self.entries.iter().enumerate() {
            if i > 0 {
                out.push(';');
            }
            let _ = write!(out, "{}*{}", e.policy, e.episodes);
        }
        let _ = write!(out, "=>{}", self.returned);
        out
    }

    pub fn total_episodes(&self) -> u64 {
        self.entries.iter().map(|e| e.episodes).sum()
    }
}

/// Transition counts gathered by a learner.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalModel {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    /// Next-state counts, `[h][s][a][s']`.
    counts: Vec<u64>,
    /// Visits of `(s, a)` at level `h`.
    visits: Vec<u64>,
    /// Reach estimates `d̂(s, h)` (weak learner only).
    pub reach: Option<Vec<f64>>,
}

impl EmpiricalModel {
    pub fn new(num_states: usize, num_actions: usize, horizon: usize) -> Self {
        Self {
            num_states,
            num_actions,
            horizon,
            counts: vec![0; horizon * num_states * num_actions * num_states],
            visits: vec![0; horizon * num_states * num_actions],
            reach: None,
        }
    }

    fn idx(&self, h: usize, s: usize, a: usize) -> usize {
        (h * self.num_states + s) * self.num_actions + a
    }

    pub fn visits(&self, h: usize, s: usize, a: usize) -> u64 {
        self.visits[self.idx(h, s, a)]
    }

    fn record(&mut self, h: usize, s: usize, a: usize, next: usize) {
        let i = self.idx(h, s, a);
        self.visits[i] += 1;
        self.counts[i * self.num_states + next] += 1;
    }

    /// `P̂_h(· | s, a)`, or `None` when `(s, a)` was never observed at
    /// level `h`.
    pub fn row(&self, h: usize, s: usize, a: usize) -> Option<Vec<f64>> {
        let i = self.idx(h, s, a);
        let n = self.visits[i];
        (n > 0).then(|| {
            self.counts[i * self.num_states..][..self.num_states]
                .iter()
                .map(|&c| c as f64 / n as f64)
                .collect()
        })
    }

    /// Model over `S ∪ {s_absorb}` that uses `P̂` at levels `< upto` for
    /// states outside `truncated[h]` and absorbs everywhere else, including
    /// at pairs never observed. Rewards come from `base`.
    fn absorbing(
        &self,
        base: &TabularMdp,
        truncated: &[Vec<usize>],
        upto: usize,
    ) -> Result<TabularMdp> {
        let rows: Vec<Option<Vec<f64>>> = (0..self.horizon)
            .flat_map(|h| (0..self.num_states).map(move |s| (h, s)))
            .flat_map(|(h, s)| (0..self.num_actions).map(move |a| (h, s, a)))
            .map(|(h, s, a)| {
                let kept = h < upto && truncated[h].binary_search(&s).is_err();
                kept.then(|| self.row(h, s, a)).flatten()
            })
            .collect();
        absorbing_model(
            self.num_states,
            self.num_actions,
            self.horizon,
            base.initial_state(),
            |h, s, a| rows[self.idx(h, s, a)].as_deref(),
            |h, s, a| base.reward(h, s, a),
        )
    }

    pub fn reach_estimate(&self, s: usize, h: usize) -> Option<f64> {
        self.reach.as_ref().map(|d| d[h * self.num_states + s])
    }
}

/// Signals that the learner's accuracy event may have failed.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Needed `(h, s, a)` triples with no samples; their rows were replaced
    /// by a point mass on the absorbing state.
    pub zero_count: Vec<(usize, usize, usize)>,
    /// Smallest visit count over the needed triples.
    pub min_effective_count: Option<u64>,
}

impl Diagnostics {
    pub fn flagged(&self) -> bool {
        !self.zero_count.is_empty()
    }

    fn observe(&mut self, h: usize, s: usize, a: usize, visits: u64) {
        if visits == 0 {
            self.zero_count.push((h, s, a));
        }
        self.min_effective_count = Some(self.min_effective_count.map_or(visits, |m| m.min(visits)));
    }
}

/// Stream key for the batch probing `(h, s, a)`; offset by one so that it
/// never coincides with the default stream.
fn stream_key(shape: (usize, usize), tag: u64, h: usize, s: usize, a: usize) -> u64 {
    let (ns, na) = shape;
    1 + tag + 4 * (((h * ns + s) * (na + 1) + a) as u64)
}

/// Runs `w` episodes of `pi` on a fresh stream, recording every transition
/// out of level `level` into `model` when `record` is set. Returns how often
/// `state` was occupied at `level`.
fn run_batch(
    env: &mut EpisodicEnv<'_>,
    pi: &Policy,
    w: u64,
    stream: u64,
    level: usize,
    state: usize,
    mut record: Option<&mut EmpiricalModel>,
) -> Result<u64> {
    env.select_stream(stream);
    let mut hits = 0;
    for _ in 0..w {
        let mut s = env.reset();
        for h in 0..pi.horizon() {
            let a = pi.action(h, s);
            let next = env.step(a)?.next_state;
            if h == level && s == state {
                hits += 1;
                if let Some(m) = record.as_deref_mut() {
                    m.record(h, s, a, next);
                }
            }
            s = next;
        }
    }
    Ok(hits)
}

/// Draws `r_action` then `r_trunc` from their intervals unless fixed.
fn draw_pair<R: Rng + ?Sized>(
    rng: &mut R,
    consts: &AlgorithmConstants,
    options: &LearnerOptions,
) -> Result<(Draw, Draw)> {
    let pick = |rng: &mut R, fixed: Option<f64>, (lo, hi): (f64, f64)| -> Result<Draw> {
        match fixed {
            Some(value) => Ok(Draw { value, lo, hi }),
            None => draw_tolerance(rng, lo, hi),
        }
    };
    let ra = pick(rng, options.r_action, consts.r_action_interval)?;
    let rt = pick(rng, options.r_trunc, consts.r_trunc_interval)?;
    Ok((ra, rt))
}

fn check_shape(m: &TabularMdp, consts: &AlgorithmConstants) -> Result<()> {
    let shape = Shape {
        num_states: m.num_states(),
        num_actions: m.num_actions(),
        horizon: m.horizon(),
    };
    if shape == consts.shape {
        Ok(())
    } else {
        Err(crate::Error::ShapeMismatch {
            expected: format!("{:?}", consts.shape),
            found: format!("{shape:?}"),
        })
    }
}
