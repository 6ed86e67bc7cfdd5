//! Truncated models: per-level sets of states declared unreachable at a
//! threshold `r`, the models that reroute those states to an absorbing sink,
//! and the auxiliary reach-reward models whose optimal value is a maximum
//! occupancy.
//!
//! Two profile flavors are provided. The strong flavor is inductive: the
//! reach probability at level `h` is measured after truncating every earlier
//! level. The weak flavor thresholds the un-truncated maximum occupancy at
//! each level independently.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dp::{max_occupancy, max_occupancy_at};
use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

/// Which definition produced a profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileFlavor {
    /// Inductive sets `U_h(r)`.
    Strong,
    /// Level-independent sets `T_h(r)`.
    Weak,
    /// Sets estimated by a learner from samples.
    Estimated,
}

/// Per-level sorted state sets.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct TruncationProfile {
    flavor: ProfileFlavor,
    num_states: usize,
    levels: Vec<Vec<usize>>,
}

impl TruncationProfile {
    pub fn new(flavor: ProfileFlavor, num_states: usize, mut levels: Vec<Vec<usize>>) -> Result<Self> {
        for (h, set) in levels.iter_mut().enumerate() {
            set.sort_unstable();
            set.dedup();
            if let Some(&s) = set.iter().find(|&&s| s >= num_states) {
                return Err(Error::InvalidParameter(format!(
                    "profile level {h} contains state {s} >= {num_states}"
                )));
            }
        }
        Ok(Self {
            flavor,
            num_states,
            levels,
        })
    }

    /// Builds a profile from a membership predicate.
    pub fn from_fn(
        flavor: ProfileFlavor,
        num_states: usize,
        horizon: usize,
        mut member: impl FnMut(usize, usize) -> bool,
    ) -> Self {
        let levels = (0..horizon)
            .map(|h| (0..num_states).filter(|&s| member(h, s)).collect())
            .collect();
        Self {
            flavor,
            num_states,
            levels,
        }
    }

    pub fn empty(flavor: ProfileFlavor, num_states: usize, horizon: usize) -> Self {
        Self::from_fn(flavor, num_states, horizon, |_, _| false)
    }

    pub fn full(flavor: ProfileFlavor, num_states: usize, horizon: usize) -> Self {
        Self::from_fn(flavor, num_states, horizon, |_, _| true)
    }

    pub fn flavor(&self) -> ProfileFlavor {
        self.flavor
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn horizon(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, h: usize) -> &[usize] {
        &self.levels[h]
    }

    pub fn contains(&self, h: usize, s: usize) -> bool {
        self.levels[h].binary_search(&s).is_ok()
    }

    /// Total number of `(s, h)` members.
    pub fn size(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    /// Level-wise inclusion, ignoring flavor.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.levels.len() == other.levels.len()
            && self
                .levels
                .iter()
                .zip(&other.levels)
                .all(|(a, b)| a.iter().all(|s| b.binary_search(s).is_ok()))
    }

    /// Same sets at every level, ignoring flavor.
    pub fn same_sets(&self, other: &Self) -> bool {
        self.levels == other.levels
    }

    /// Canonical serialization: sorted indices joined by `,` within a level,
    /// levels joined by `|`.
    pub fn key(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for TruncationProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (h, set) in self.levels.iter().enumerate() {
            if h > 0 {
                f.write_str("|")?;
            }
            for (i, s) in set.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{s}")?;
            }
        }
        Ok(())
    }
}

/// How a [`TruncatedMdp`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Construction {
    /// `M^r` from a strong profile.
    Strong,
    /// `M̄^r` from a weak profile.
    Weak,
    /// A learner's estimated model.
    Estimated,
    /// Reach-reward model targeting `(state, level)`.
    ReachReward { state: usize, level: usize },
}

/// A model over `S ∪ {s_absorb}` with `s_absorb = |S|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncatedMdp {
    pub mdp: TabularMdp,
    pub profile: TruncationProfile,
    pub construction: Construction,
}

impl TruncatedMdp {
    /// Index of the absorbing state.
    pub fn absorbing_state(&self) -> usize {
        self.mdp.num_states() - 1
    }

    /// Number of states of the source model.
    pub fn original_states(&self) -> usize {
        self.mdp.num_states() - 1
    }

    /// Reach-reward model on top of this one, reusing its absorbing state.
    pub fn reach_reward(&self, s: usize, h: usize) -> Result<TruncatedMdp> {
        Ok(TruncatedMdp {
            mdp: reach_reward_on(&self.mdp, self.absorbing_state(), s, h)?,
            profile: self.profile.clone(),
            construction: Construction::ReachReward { state: s, level: h },
        })
    }
}

/// Builds a model over `|S| + 1` states whose row `(h, s, a)` is
/// `rows(h, s, a)` when it returns `Some`, and a point mass on the absorbing
/// state otherwise. Original states keep their reward; the absorbing state
/// earns nothing and never leaves.
pub fn absorbing_model<'r>(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    initial_state: usize,
    mut rows: impl FnMut(usize, usize, usize) -> Option<&'r [f64]>,
    reward: impl Fn(usize, usize, usize) -> f64,
) -> Result<TabularMdp> {
    let absorb = num_states;
    TabularMdp::from_fn(
        num_states + 1,
        num_actions,
        horizon,
        initial_state,
        |h, s, a, row| match (s < absorb).then(|| rows(h, s, a)).flatten() {
            Some(src) => row[..absorb].copy_from_slice(src),
            None => row[absorb] = 1.0,
        },
        |h, s, a| if s < absorb { reward(h, s, a) } else { 0.0 },
    )
}

/// Reroutes every profile member to a fresh absorbing state.
pub fn truncate(m: &TabularMdp, profile: &TruncationProfile) -> Result<TruncatedMdp> {
    if profile.horizon() != m.horizon() || profile.num_states() != m.num_states() {
        return Err(Error::ShapeMismatch {
            expected: format!("profile for H={}, |S|={}", m.horizon(), m.num_states()),
            found: format!("H={}, |S|={}", profile.horizon(), profile.num_states()),
        });
    }
    let mdp = absorbing_model(
        m.num_states(),
        m.num_actions(),
        m.horizon(),
        m.initial_state(),
        |h, s, a| (!profile.contains(h, s)).then(|| m.row(h, s, a)),
        |h, s, a| m.reward(h, s, a),
    )?;
    let construction = match profile.flavor() {
        ProfileFlavor::Strong => Construction::Strong,
        ProfileFlavor::Weak => Construction::Weak,
        ProfileFlavor::Estimated => Construction::Estimated,
    };
    Ok(TruncatedMdp {
        mdp,
        profile: profile.clone(),
        construction,
    })
}

fn check_threshold(r: f64) -> Result<()> {
    if (0.0..=1.0).contains(&r) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("threshold r must lie in [0, 1], got {r}")))
    }
}

/// Inductive profile `U(r)`. Level `h` thresholds the maximum occupancy of
/// `(s, h)` in the model truncated by the sets already fixed at levels `< h`.
pub fn strong_profile(m: &TabularMdp, r: f64) -> Result<TruncationProfile> {
    check_threshold(r)?;
    let (ns, hz) = (m.num_states(), m.horizon());
    let mut levels: Vec<Vec<usize>> = Vec::with_capacity(hz);
    levels.push((0..ns).filter(|&s| indicator(s == m.initial_state()) <= r).collect());
    for h in 1..hz {
        let partial = absorbing_model(
            ns,
            m.num_actions(),
            h,
            m.initial_state(),
            |lvl, s, a| (levels[lvl].binary_search(&s).is_err()).then(|| m.row(lvl, s, a)),
            |_, _, _| 0.0,
        )?;
        let set = (0..ns)
            .filter(|&s| reach_in_prefix(&partial, s, h) <= r)
            .collect();
        levels.push(set);
    }
    TruncationProfile::new(ProfileFlavor::Strong, ns, levels)
}

/// `max_π Pr[s_h = s]` where `prefix` holds levels `0..h`.
fn reach_in_prefix(prefix: &TabularMdp, s: usize, h: usize) -> f64 {
    let ns = prefix.num_states();
    let mut v = vec![0.0; ns];
    v[s] = 1.0;
    let mut next = vec![0.0; ns];
    for level in (0..h).rev() {
        std::mem::swap(&mut v, &mut next);
        for (x, out) in v.iter_mut().enumerate() {
            *out = (0..prefix.num_actions())
                .map(|a| prefix.row(level, x, a).iter().zip(&next).map(|(p, w)| p * w).sum())
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }
    v[prefix.initial_state()]
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Level-independent profile `T(r)` from the un-truncated maximum occupancy.
pub fn weak_profile(m: &TabularMdp, r: f64) -> Result<TruncationProfile> {
    check_threshold(r)?;
    let d = max_occupancy(m);
    Ok(TruncationProfile::from_fn(
        ProfileFlavor::Weak,
        m.num_states(),
        m.horizon(),
        |h, s| d.get(s, h) <= r,
    ))
}

/// Profile of the given flavor; `Estimated` is rejected because estimated
/// profiles come from samples.
pub fn profile(m: &TabularMdp, r: f64, flavor: ProfileFlavor) -> Result<TruncationProfile> {
    match flavor {
        ProfileFlavor::Strong => strong_profile(m, r),
        ProfileFlavor::Weak => weak_profile(m, r),
        ProfileFlavor::Estimated => Err(Error::InvalidParameter(
            "estimated profiles cannot be computed from a model".into(),
        )),
    }
}

pub(crate) fn reach_reward_on(base: &TabularMdp, absorb: usize, s: usize, h: usize) -> Result<TabularMdp> {
    if h >= base.horizon() || s >= base.num_states() {
        return Err(Error::InvalidParameter(format!(
            "reach target (s={s}, h={h}) outside the model"
        )));
    }
    TabularMdp::from_fn(
        base.num_states(),
        base.num_actions(),
        base.horizon(),
        base.initial_state(),
        |lvl, x, a, row| {
            if lvl < h {
                row.copy_from_slice(base.row(lvl, x, a));
            } else {
                row[absorb] = 1.0;
            }
        },
        |lvl, x, _| indicator(lvl == h && x == s),
    )
}

/// Reach-reward model for `(s, h)` on a model without an absorbing state:
/// a fresh absorbing state is appended, levels `< h` keep the base rows,
/// levels `>= h` absorb, and the only reward is `1[h' = h, s' = s]`. Its
/// optimal value equals `d*(s, h)` of the base.
pub fn reach_reward_mdp(base: &TabularMdp, s: usize, h: usize) -> Result<TabularMdp> {
    let extended = absorbing_model(
        base.num_states(),
        base.num_actions(),
        base.horizon(),
        base.initial_state(),
        |lvl, x, a| Some(base.row(lvl, x, a)),
        |_, _, _| 0.0,
    )?;
    reach_reward_on(&extended, base.num_states(), s, h)
}

/// One distinct profile in a grid sweep and the maximal runs of grid points
/// that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileCensusEntry {
    pub key: String,
    pub profile: TruncationProfile,
    pub intervals: Vec<(f64, f64)>,
}

/// Distinct profiles over an `r` grid, ordered by first appearance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileCensus {
    pub entries: Vec<ProfileCensusEntry>,
}

impl ProfileCensus {
    pub fn distinct(&self) -> usize {
        self.entries.len()
    }
}

/// Evaluates the profile at every grid point (sorted ascending) and groups
/// equal profiles.
pub fn count_distinct_profiles(
    m: &TabularMdp,
    grid: &[f64],
    flavor: ProfileFlavor,
) -> Result<ProfileCensus> {
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("r grid must be sorted ascending".into()));
    }
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let mut entries: Vec<ProfileCensusEntry> = Vec::new();
    let mut last: Option<usize> = None;
    for &r in grid {
        let p = profile(m, r, flavor)?;
        let key = p.key();
        let idx = *index.entry(key.clone()).or_insert_with(|| {
            entries.push(ProfileCensusEntry {
                key,
                profile: p,
                intervals: Vec::new(),
            });
            entries.len() - 1
        });
        let intervals = &mut entries[idx].intervals;
        if last == Some(idx) {
            intervals.last_mut().expect("open run").1 = r;
        } else {
            intervals.push((r, r));
        }
        last = Some(idx);
    }
    Ok(ProfileCensus { entries })
}

/// `d*` of `(s, h)` in `M^r`, the model truncated by the strong profile.
pub fn truncated_max_occupancy(m: &TabularMdp, r: f64, s: usize, h: usize) -> Result<f64> {
    let t = truncate(m, &strong_profile(m, r)?)?;
    Ok(max_occupancy_at(&t.mdp, s, h))
}
