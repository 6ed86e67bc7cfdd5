use rand::Rng;
use serde::Serialize;

use super::{
    check_shape, draw_pair, run_batch, stream_key, Algorithm, AlgorithmConstants, Diagnostics,
    EmpiricalModel, ExecutionTrace, LearnerOptions, OverrideRule, RollInPolicy, TraceEntry,
};
use crate::dp::max_occupancy_at;
use crate::envs::EpisodicEnv;
use crate::error::{Error, Result};
use crate::mdp::{Policy, TabularMdp};
use crate::planner::{robust_plan, ToleranceDraw};
use crate::truncation::{reach_reward_on, ProfileFlavor, TruncationProfile};

/// Result of [`strong_learn`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrongOutcome {
    pub policy: Policy,
    pub trace: ExecutionTrace,
    pub constants: AlgorithmConstants,
    pub tolerances: ToleranceDraw,
    /// Estimated truncation sets `Û_h`.
    pub profile: TruncationProfile,
    /// Final estimated model over `S ∪ {s_absorb}`.
    pub model: TabularMdp,
    pub empirical: EmpiricalModel,
    pub diagnostics: Diagnostics,
}

/// Strongly list-replicable learner.
///
/// Level by level, every state not yet truncated is probed with each action
/// from a roll-in policy that reaches it near-optimally. The probes estimate
/// that level's transitions; the estimated prefix model then decides which
/// states of the next level are truncated (reach at most `r_trunc`) and
/// supplies roll-in policies for the rest. The output is the robust plan on
/// the final estimated model.
pub fn strong_learn<R: Rng + ?Sized>(
    env: &mut EpisodicEnv<'_>,
    rng: &mut R,
    consts: &AlgorithmConstants,
    options: &LearnerOptions,
) -> Result<StrongOutcome> {
    if consts.algorithm != Algorithm::Strong {
        return Err(Error::InvalidParameter(
            "strong learner needs constants derived for the strong algorithm".into(),
        ));
    }
    let m = env.mdp();
    check_shape(m, consts)?;
    let (ns, na, hz, s0) = (m.num_states(), m.num_actions(), m.horizon(), m.initial_state());
    let (ra, rt) = draw_pair(rng, consts, options)?;

    let mut truncated: Vec<Vec<usize>> = vec![(0..ns).filter(|&s| s != s0).collect()];
    let mut rollins: Vec<Option<Policy>> = vec![None; ns];
    rollins[s0] = Some(Policy::constant(hz, ns, 0));

    let mut empirical = EmpiricalModel::new(ns, na, hz);
    let mut diagnostics = Diagnostics::default();
    let mut entries = Vec::new();
    let mut model = empirical.absorbing(m, &truncated, 0)?;

    for h in 0..hz.saturating_sub(1) {
        for (s, slot) in rollins.iter_mut().enumerate() {
            let Some(base) = slot.take() else { continue };
            let rollin = RollInPolicy {
                state: s,
                level: h,
                base,
                rule: OverrideRule::FromLevel,
            };
            for a in 0..na {
                let pi = rollin.probe(a);
                let key = stream_key((ns, na), 0, h, s, a);
                run_batch(env, &pi, consts.w, key, h, s, Some(&mut empirical))?;
                diagnostics.observe(h, s, a, empirical.visits(h, s, a));
                entries.push(TraceEntry {
                    policy: pi,
                    episodes: consts.w,
                });
            }
        }
        model = empirical.absorbing(m, &truncated, h + 1)?;
        let next: Vec<usize> = (0..ns)
            .filter(|&s| max_occupancy_at(&model, s, h + 1) <= rt.value)
            .collect();
        for s in 0..ns {
            rollins[s] = if next.binary_search(&s).is_ok() {
                None
            } else {
                let target = reach_reward_on(&model, ns, s, h + 1)?;
                Some(robust_plan(&target, ra.value)?.restrict(ns))
            };
        }
        truncated.push(next);
    }

    let policy = robust_plan(&model, ra.value)?.restrict(ns);
    Ok(StrongOutcome {
        trace: ExecutionTrace {
            entries,
            returned: policy.clone(),
        },
        policy,
        constants: *consts,
        tolerances: ToleranceDraw {
            r_action: ra,
            r_trunc: Some(rt),
        },
        profile: TruncationProfile::new(ProfileFlavor::Estimated, ns, truncated)?,
        model,
        empirical,
        diagnostics,
    })
}
