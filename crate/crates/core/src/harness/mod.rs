//! Replicability measurement.
//!
//! A learner is run many times against one model with independently seeded
//! randomness; each output is reduced to a canonical key and the keys are
//! tallied. The resulting census estimates the list size of the learner.

mod report;

pub use report::{render_svg, sweep_csv, SweepRow};

use std::collections::{BTreeMap, HashMap};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dp::{backward_dp, policy_value};
use crate::envs::{EpisodicEnv, GenerativeEnv};
use crate::error::{Error, Result};
use crate::learners::{
    strong_learn, weak_learn, AdversarialBlackbox, AlgorithmConstants, GenerativeBlackbox,
    LearnerOptions,
};
use crate::mdp::{Policy, TabularMdp};
use crate::planner::{
    generative_learn, robust_plan, GenerativeOptions, SampleSize, ToleranceRule,
};

/// Black box handed to the weak learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum BlackboxSpec {
    Generative { samples: Option<u64> },
    Adversarial,
}

/// Which learner to replicate and how it is parameterized.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "algo")]
pub enum LearnerSpec {
    /// Plans on the true model; no sampling.
    ExactPlan { r_action: f64 },
    /// `samples` generative draws per pair, then plans at a fixed tolerance.
    RobustPlan { samples: u64, r_action: f64 },
    /// As `RobustPlan` with zero tolerance.
    Greedy { samples: u64 },
    /// The generative learner; the tolerance is drawn unless pinned.
    Generative {
        eps: f64,
        delta: f64,
        samples: Option<u64>,
        budget: u64,
        r_action: Option<f64>,
    },
    Weak {
        constants: AlgorithmConstants,
        blackbox: BlackboxSpec,
        options: LearnerOptions,
    },
    Strong {
        constants: AlgorithmConstants,
        options: LearnerOptions,
    },
}

impl LearnerSpec {
    /// The same learner with its action tolerance pinned to `r`.
    pub fn with_r_action(&self, r: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            LearnerSpec::ExactPlan { r_action } | LearnerSpec::RobustPlan { r_action, .. } => {
                *r_action = r
            }
            LearnerSpec::Greedy { samples } => {
                out = LearnerSpec::RobustPlan {
                    samples: *samples,
                    r_action: r,
                }
            }
            LearnerSpec::Generative { r_action, .. } => *r_action = Some(r),
            LearnerSpec::Weak { options, .. } | LearnerSpec::Strong { options, .. } => {
                options.r_action = Some(r)
            }
        }
        out
    }

    pub fn label(&self) -> &'static str {
        match self {
            LearnerSpec::ExactPlan { .. } => "exact-plan",
            LearnerSpec::RobustPlan { .. } => "robust-plan",
            LearnerSpec::Greedy { .. } => "greedy",
            LearnerSpec::Generative { .. } => "generative",
            LearnerSpec::Weak { .. } => "weak",
            LearnerSpec::Strong { .. } => "strong",
        }
    }
}

/// How a returned policy is reduced to a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CanonicalMode {
    /// The whole action table over the original states.
    #[default]
    FullTable,
    /// The actions taken from the initial state when every transition goes
    /// to its most likely successor, preferring states that are not sinks.
    Rollout,
}

/// A state every action keeps in place at every level without reward.
pub fn sink_states(m: &TabularMdp) -> Vec<bool> {
    (0..m.num_states())
        .map(|s| {
            (0..m.horizon()).all(|h| {
                (0..m.num_actions()).all(|a| m.prob(h, s, a, s) == 1.0 && m.reward(h, s, a) == 0.0)
            })
        })
        .collect()
}

/// Canonical key of `pi` on `m`. Policies over a truncated model are
/// accepted; the absorbing column is dropped.
pub fn canonical_policy(m: &TabularMdp, pi: &Policy, mode: CanonicalMode) -> String {
    let pi = pi.restrict(m.num_states());
    match mode {
        CanonicalMode::FullTable => pi.to_string(),
        CanonicalMode::Rollout => {
            let sinks = sink_states(m);
            let mut s = m.initial_state();
            let mut actions = Vec::with_capacity(m.horizon());
            for h in 0..m.horizon() {
                let a = pi.action(h, s);
                actions.push(a.to_string());
                let row = m.row(h, s, a);
                let pick = |allow: &dyn Fn(usize) -> bool| {
                    (0..row.len())
                        .filter(|&x| allow(x) && row[x] > 0.0)
                        .fold(None, |best: Option<usize>, x| match best {
                            Some(b) if row[b] >= row[x] => Some(b),
                            _ => Some(x),
                        })
                };
                s = pick(&|x| !sinks[x])
                    .or_else(|| pick(&|_| true))
                    .unwrap_or(s);
            }
            actions.join(",")
        }
    }
}

/// Seed of run `index` under `master`. Each run reads from its own stream,
/// so adding runs leaves earlier seeds unchanged.
pub fn child_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

/// Output of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub index: u64,
    pub seed: u64,
    pub policy_key: String,
    pub trace_key: Option<String>,
    /// `V* - V^π` on the true model.
    pub suboptimality: f64,
    pub diagnostics_flagged: bool,
    /// Tolerances the run used, when the learner draws or takes them.
    pub r_action: Option<f64>,
    pub r_trunc: Option<f64>,
}

/// A run that errored; it is excluded from the census.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailedRun {
    pub index: u64,
    pub seed: u64,
    pub error: String,
}

/// What [`run_once`] reports about a single run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutput {
    pub policy_key: String,
    pub trace_key: Option<String>,
    pub suboptimality: f64,
    pub diagnostics_flagged: bool,
    pub r_action: Option<f64>,
    pub r_trunc: Option<f64>,
}

/// Runs `spec` once with all of its randomness derived from `seed`.
pub fn run_once(
    spec: &LearnerSpec,
    m: &TabularMdp,
    seed: u64,
    mode: CanonicalMode,
    optimal_value: f64,
) -> Result<RunOutput> {
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let env_seed = seeds.next_u64();
    let aux_seed = seeds.next_u64();
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.next_u64());
    let (policy, trace, flagged, r_action, r_trunc) = match spec {
        LearnerSpec::ExactPlan { r_action } => {
            (robust_plan(m, *r_action)?, None, false, Some(*r_action), None)
        }
        LearnerSpec::RobustPlan { samples, r_action } => {
            let m_hat = GenerativeEnv::new(m, env_seed).empirical_model(*samples)?;
            (robust_plan(&m_hat, *r_action)?, None, false, Some(*r_action), None)
        }
        LearnerSpec::Greedy { samples } => {
            let m_hat = GenerativeEnv::new(m, env_seed).empirical_model(*samples)?;
            (robust_plan(&m_hat, 0.0)?, None, false, Some(0.0), None)
        }
        LearnerSpec::Generative {
            eps,
            delta,
            samples,
            budget,
            r_action,
        } => {
            let opts = GenerativeOptions {
                samples: samples.map_or(SampleSize::Formula, SampleSize::Fixed),
                tolerance: r_action.map_or(ToleranceRule::Drawn, ToleranceRule::Fixed),
                budget: *budget,
            };
            let mut gen = GenerativeEnv::new(m, env_seed);
            let out = generative_learn(&mut gen, *eps, *delta, &mut rng, &opts)?;
            (out.policy, None, false, Some(out.r_action), None)
        }
        LearnerSpec::Weak {
            constants,
            blackbox,
            options,
        } => {
            let mut env = EpisodicEnv::new(m, env_seed);
            let out = match blackbox {
                BlackboxSpec::Generative { samples } => {
                    let mut bb = GenerativeBlackbox::new(
                        GenerativeEnv::new(m, aux_seed),
                        samples.map_or(SampleSize::Formula, SampleSize::Fixed),
                        crate::config::DEFAULT_SAMPLE_BUDGET,
                    );
                    weak_learn(&mut env, &mut bb, &mut rng, constants, options)?
                }
                BlackboxSpec::Adversarial => {
                    let mut bb = AdversarialBlackbox::new(m, aux_seed);
                    weak_learn(&mut env, &mut bb, &mut rng, constants, options)?
                }
            };
            let (ra, rt) = (out.tolerances.r_action.value, out.tolerances.r_trunc.map(|d| d.value));
            let flagged = out.diagnostics.flagged();
            (out.policy, Some(out.trace.key()), flagged, Some(ra), rt)
        }
        LearnerSpec::Strong { constants, options } => {
            let mut env = EpisodicEnv::new(m, env_seed);
            let out = strong_learn(&mut env, &mut rng, constants, options)?;
            let (ra, rt) = (out.tolerances.r_action.value, out.tolerances.r_trunc.map(|d| d.value));
            let flagged = out.diagnostics.flagged();
            (out.policy, Some(out.trace.key()), flagged, Some(ra), rt)
        }
    };
    let value = policy_value(m, &policy.restrict(m.num_states()))?;
    Ok(RunOutput {
        policy_key: canonical_policy(m, &policy, mode),
        trace_key: trace,
        suboptimality: optimal_value - value,
        diagnostics_flagged: flagged,
        r_action,
        r_trunc,
    })
}

/// Census of canonical keys.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Census {
    /// `(key, count)` by descending count, ties by ascending key.
    pub frequencies: Vec<(String, usize)>,
}

impl Census {
    pub fn from_keys<'k>(keys: impl IntoIterator<Item = &'k str>) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for k in keys {
            *counts.entry(k).or_default() += 1;
        }
        let mut frequencies: Vec<(String, usize)> =
            counts.into_iter().map(|(k, c)| (k.to_string(), c)).collect();
        frequencies.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self { frequencies }
    }

    pub fn total(&self) -> usize {
        self.frequencies.iter().map(|f| f.1).sum()
    }

    pub fn distinct(&self) -> usize {
        self.frequencies.len()
    }

    /// Fewest keys whose runs cover at least a `q` fraction of the total.
    pub fn k_quantile(&self, q: f64) -> usize {
        let need = q * self.total() as f64;
        let mut acc = 0usize;
        for (i, (_, c)) in self.frequencies.iter().enumerate() {
            if acc as f64 >= need {
                return i;
            }
            acc += c;
        }
        self.frequencies.len()
    }

    pub fn top1(&self) -> f64 {
        match self.frequencies.first() {
            Some((_, c)) => *c as f64 / self.total() as f64,
            None => 0.0,
        }
    }
}

/// Quantiles reported in every census.
pub const REPORTED_QUANTILES: [f64; 3] = [0.5, 0.9, 1.0];

/// Outcome of [`run_replicated`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicabilityReport {
    pub learner: LearnerSpec,
    pub canonical: CanonicalMode,
    pub master_seed: u64,
    /// Offset of the first run index; nonzero for sweep cells after the first.
    pub first_index: u64,
    pub runs: usize,
    pub completed: usize,
    pub failed: Vec<FailedRun>,
    pub distinct_policies: usize,
    pub distinct_traces: Option<usize>,
    /// `q` → minimal list size covering a `q` fraction of completed runs.
    pub k_quantile: BTreeMap<String, usize>,
    pub top1_coverage: f64,
    pub policies: Census,
    pub traces: Option<Census>,
    pub optimal_value: f64,
    pub diagnostics_flagged: usize,
    pub records: Vec<RunRecord>,
}

impl ReplicabilityReport {
    pub fn k(&self, q: f64) -> usize {
        self.policies.k_quantile(q)
    }

    /// Fraction of completed runs with suboptimality at most `eps`.
    pub fn fraction_within(&self, eps: f64) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        let ok = self.records.iter().filter(|r| r.suboptimality <= eps).count();
        ok as f64 / self.records.len() as f64
    }
}

/// Parallelism for [`run_replicated`]; `None` uses the global pool.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Parallelism {
    pub jobs: Option<usize>,
}

fn in_pool<T: Send>(par: Parallelism, f: impl FnOnce() -> T + Send) -> Result<T> {
    match par.jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs `spec` on `m` for run indices `first_index..first_index + runs`.
pub fn run_replicated_from(
    spec: &LearnerSpec,
    m: &TabularMdp,
    runs: usize,
    master_seed: u64,
    first_index: u64,
    mode: CanonicalMode,
    par: Parallelism,
) -> Result<ReplicabilityReport> {
    if runs == 0 {
        return Err(Error::InvalidParameter("runs must be >= 1".into()));
    }
    let optimal_value = backward_dp(m).initial_value();
    let outcomes: Vec<(u64, u64, Result<RunOutput>)> = in_pool(par, || {
        (0..runs as u64)
            .into_par_iter()
            .map(|i| {
                let index = first_index + i;
                let seed = child_seed(master_seed, index);
                (index, seed, run_once(spec, m, seed, mode, optimal_value))
            })
            .collect()
    })?;
    // When nothing succeeds the first error is returned as is, so callers
    // can tell a budget overrun from a bad parameter.
    if outcomes.iter().all(|o| o.2.is_err()) {
        if let Some((_, _, Err(e))) = outcomes.into_iter().next() {
            return Err(e);
        }
        unreachable!("runs >= 1");
    }
    let mut records = Vec::with_capacity(runs);
    let mut failed = Vec::new();
    for (index, seed, out) in outcomes {
        match out {
            Ok(o) => records.push(RunRecord {
                index,
                seed,
                policy_key: o.policy_key,
                trace_key: o.trace_key,
                suboptimality: o.suboptimality,
                diagnostics_flagged: o.diagnostics_flagged,
                r_action: o.r_action,
                r_trunc: o.r_trunc,
            }),
            Err(e) => failed.push(FailedRun {
                index,
                seed,
                error: e.to_string(),
            }),
        }
    }
    let policies = Census::from_keys(records.iter().map(|r| r.policy_key.as_str()));
    let traces = records
        .iter()
        .all(|r| r.trace_key.is_some())
        .then(|| Census::from_keys(records.iter().filter_map(|r| r.trace_key.as_deref())));
    let k_quantile = REPORTED_QUANTILES
        .iter()
        .map(|&q| (format!("{q}"), policies.k_quantile(q)))
        .collect();
    Ok(ReplicabilityReport {
        learner: spec.clone(),
        canonical: mode,
        master_seed,
        first_index,
        runs,
        completed: records.len(),
        failed,
        distinct_policies: policies.distinct(),
        distinct_traces: traces.as_ref().map(Census::distinct),
        k_quantile,
        top1_coverage: policies.top1(),
        policies,
        traces,
        optimal_value,
        diagnostics_flagged: records.iter().filter(|r| r.diagnostics_flagged).count(),
        records,
    })
}

/// Runs `spec` on `m` `runs` times with child seeds of `master_seed`.
pub fn run_replicated(
    spec: &LearnerSpec,
    m: &TabularMdp,
    runs: usize,
    master_seed: u64,
    mode: CanonicalMode,
    par: Parallelism,
) -> Result<ReplicabilityReport> {
    run_replicated_from(spec, m, runs, master_seed, 0, mode, par)
}

/// One census per tolerance. Cell `j` uses run indices
/// `j * runs..(j + 1) * runs`, so every cell sees fresh seeds and the first
/// cell equals [`run_replicated`].
pub fn sweep(
    spec: &LearnerSpec,
    m: &TabularMdp,
    r_values: &[f64],
    runs: usize,
    master_seed: u64,
    mode: CanonicalMode,
    par: Parallelism,
) -> Result<Vec<SweepRow>> {
    if r_values.is_empty() {
        return Err(Error::InvalidParameter("sweep needs at least one r value".into()));
    }
    r_values
        .iter()
        .enumerate()
        .map(|(j, &r)| {
            let report = run_replicated_from(
                &spec.with_r_action(r),
                m,
                runs,
                master_seed,
                (j * runs) as u64,
                mode,
                par,
            )?;
            Ok(SweepRow { r_value: Some(r), report })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_chain, make_gridworld_custom, make_random};

    #[test]
    fn census_statistics() {
        let c = Census::from_keys(["b", "a", "b", "c", "b", "a"]);
        assert_eq!(c.frequencies[0], ("b".to_string(), 3));
        assert_eq!(c.frequencies[1], ("a".to_string(), 2));
        assert_eq!(c.k_quantile(0.5), 1);
        assert_eq!(c.k_quantile(0.9), 3);
        assert_eq!(c.k_quantile(1.0), 3);
        assert_eq!(c.top1(), 0.5);
    }

    #[test]
    fn child_seeds_are_prefix_stable() {
        let a: Vec<u64> = (0..5).map(|i| child_seed(7, i)).collect();
        let b: Vec<u64> = (0..8).map(|i| child_seed(7, i)).collect();
        assert_eq!(a[..], b[..5]);
        assert_ne!(child_seed(7, 0), child_seed(8, 0));
    }

    #[test]
    fn canonical_drops_absorbing_column() {
        let m = make_random(2, 2, 2, 0, 1.0).unwrap();
        let p = Policy::new(2, 3, 2, vec![0, 1, 0, 1, 0, 1]).unwrap();
        let q = Policy::new(2, 3, 2, vec![0, 1, 1, 1, 0, 0]).unwrap();
        assert_eq!(
            canonical_policy(&m, &p, CanonicalMode::FullTable),
            canonical_policy(&m, &q, CanonicalMode::FullTable)
        );
    }

    #[test]
    fn rollout_mode_follows_live_states() {
        let m = make_chain(3, 0.1).unwrap();
        let pi = Policy::constant(4, 5, 1);
        assert_eq!(canonical_policy(&m, &pi, CanonicalMode::Rollout), "1,1,1,1");
        assert_eq!(sink_states(&m), vec![false, false, false, false, true]);
    }

    #[test]
    fn deterministic_learner_has_one_output() {
        let m = make_gridworld_custom(3, |_, _, _| 1.0).unwrap();
        let rep = run_replicated(
            &LearnerSpec::Greedy { samples: 3 },
            &m,
            20,
            1,
            CanonicalMode::FullTable,
            Parallelism::default(),
        )
        .unwrap();
        assert_eq!(rep.distinct_policies, 1);
        assert_eq!(rep.completed, 20);
    }

    #[test]
    fn reports_are_reproducible_and_sweeps_extend_runs() {
        let m = make_chain(4, 0.02).unwrap();
        let spec = LearnerSpec::Greedy { samples: 40 };
        let a = run_replicated(&spec, &m, 50, 3, CanonicalMode::FullTable, Parallelism::default())
            .unwrap();
        let b = run_replicated(&spec, &m, 50, 3, CanonicalMode::FullTable, Parallelism { jobs: Some(2) })
            .unwrap();
        assert_eq!(a, b);
        let rows = sweep(&spec, &m, &[0.0], 50, 3, CanonicalMode::FullTable, Parallelism::default())
            .unwrap();
        assert_eq!(rows[0].report.policies, a.policies);
        assert_eq!(a.k(1.0), a.distinct_policies);
    }
}
