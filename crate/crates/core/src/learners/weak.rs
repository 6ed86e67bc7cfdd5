use rand::Rng;
use serde::Serialize;

use super::{
    check_shape, draw_pair, run_batch, stream_key, Algorithm, AlgorithmConstants,
    BlackboxSamples, Diagnostics, EmpiricalModel, ExecutionTrace, LearnerOptions, OverrideRule,
    PacLearner, RollInPolicy, TraceEntry,
};
use crate::envs::EpisodicEnv;
use crate::error::{Error, Result};
use crate::mdp::{Policy, TabularMdp};
use crate::planner::{robust_plan, ToleranceDraw};
use crate::truncation::{ProfileFlavor, TruncationProfile};

/// Result of [`weak_learn`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakOutcome {
    pub policy: Policy,
    pub trace: ExecutionTrace,
    pub constants: AlgorithmConstants,
    pub tolerances: ToleranceDraw,
    /// Estimated truncation sets `T̂_h`. The last level is always fully
    /// truncated since its transitions never matter.
    pub profile: TruncationProfile,
    /// Final estimated model over `S ∪ {s_absorb}`.
    pub model: TabularMdp,
    pub empirical: EmpiricalModel,
    pub diagnostics: Diagnostics,
    /// Confidence passed to every black-box call.
    pub delta0: f64,
    pub blackbox: BlackboxSamples,
}

/// Weakly list-replicable learner.
///
/// For every `(s, h)` below the last level a black box supplies a policy
/// that nearly maximizes the reach probability of `(s, h)`. Running it
/// estimates that probability, and running it with each action forced at
/// `(s, h)` estimates the transitions out of `s`. States whose estimated
/// reach is at most `r_trunc` are truncated, and the output is the robust
/// plan on the resulting model.
pub fn weak_learn<R: Rng + ?Sized, B: PacLearner + ?Sized>(
    env: &mut EpisodicEnv<'_>,
    blackbox: &mut B,
    rng: &mut R,
    consts: &AlgorithmConstants,
    options: &LearnerOptions,
) -> Result<WeakOutcome> {
    if consts.algorithm != Algorithm::Weak {
        return Err(Error::InvalidParameter(
            "weak learner needs constants derived for the weak algorithm".into(),
        ));
    }
    let m = env.mdp();
    check_shape(m, consts)?;
    let (ns, na, hz) = (m.num_states(), m.num_actions(), m.horizon());
    let (ra, rt) = draw_pair(rng, consts, options)?;
    let delta0 = consts.delta / (8.0 * (ns * hz) as f64);

    let mut empirical = EmpiricalModel::new(ns, na, hz);
    let mut reach = vec![0.0; ns * hz];
    let mut entries = Vec::new();
    let w = consts.w;

    for h in 0..hz.saturating_sub(1) {
        for s in 0..ns {
            let base = blackbox.learn(s, h, consts.eps0, delta0)?;
            let hits = run_batch(env, &base, w, stream_key((ns, na), 0, h, s, na), h, s, None)?;
            reach[h * ns + s] = hits as f64 / w as f64;
            let rollin = RollInPolicy {
                state: s,
                level: h,
                base,
                rule: OverrideRule::AtPair,
            };
            entries.push(TraceEntry {
                policy: rollin.base.clone(),
                episodes: w,
            });
            for a in 0..na {
                let pi = rollin.probe(a);
                let key = stream_key((ns, na), 0, h, s, a);
                run_batch(env, &pi, w, key, h, s, Some(&mut empirical))?;
                entries.push(TraceEntry {
                    policy: pi,
                    episodes: w,
                });
            }
        }
    }
    empirical.reach = Some(reach);

    let profile = TruncationProfile::from_fn(ProfileFlavor::Estimated, ns, hz, |h, s| {
        h + 1 == hz || empirical.reach_estimate(s, h).is_some_and(|d| d <= rt.value)
    });
    let mut diagnostics = Diagnostics::default();
    for h in 0..hz {
        for s in 0..ns {
            if !profile.contains(h, s) {
                for a in 0..na {
                    diagnostics.observe(h, s, a, empirical.visits(h, s, a));
                }
            }
        }
    }
    let truncated: Vec<Vec<usize>> = (0..hz).map(|h| profile.level(h).to_vec()).collect();
    let model = empirical.absorbing(m, &truncated, hz)?;
    let policy = robust_plan(&model, ra.value)?.restrict(ns);
    Ok(WeakOutcome {
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
        profile,
        model,
        empirical,
        diagnostics,
        delta0,
        blackbox: blackbox.cost(),
    })
}
