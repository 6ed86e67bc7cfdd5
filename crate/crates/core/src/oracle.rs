//! Brute-force ground truth for small instances.
//!
//! Everything here is computed by exhaustive policy enumeration and forward
//! simulation of exact distributions, independently of the backward
//! recursions in [`crate::dp`], so the two can be checked against each other.

use serde::Serialize;

use crate::config::{CRITICAL_BISECTION_STEPS, DEFAULT_ENUMERATION_CAP};
use crate::dp::{backward_dp, max_occupancy};
use crate::error::{Error, Result};
use crate::mdp::{OccupancyTable, Policy, TabularMdp};
use crate::truncation::{profile, ProfileFlavor, TruncationProfile};

/// Odometer over action tables; the last entry varies fastest, giving
/// lexicographic order.
#[derive(Debug, Clone)]
pub struct PolicyEnumerator {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    /// Flat `(h, s)` slots that vary; all others stay at action 0.
    slots: Vec<usize>,
    current: Option<Vec<usize>>,
}

impl Iterator for PolicyEnumerator {
    type Item = Policy;

    fn next(&mut self) -> Option<Policy> {
        let table = self.current.as_mut()?;
        let out = Policy::from_table(self.horizon, self.num_states, table.clone());
        let mut carry = true;
        for &slot in self.slots.iter().rev() {
            table[slot] += 1;
            if table[slot] < self.num_actions {
                carry = false;
                break;
            }
            table[slot] = 0;
        }
        if carry {
            self.current = None;
        }
        Some(out)
    }
}

fn enumerator(m: &TabularMdp, slots: Vec<usize>, cap: u64) -> Result<PolicyEnumerator> {
    let count = (m.num_actions() as f64).powi(slots.len() as i32);
    if count > cap as f64 {
        return Err(Error::InstanceTooLarge {
            policies: count,
            cap,
        });
    }
    Ok(PolicyEnumerator {
        horizon: m.horizon(),
        num_states: m.num_states(),
        num_actions: m.num_actions(),
        slots,
        current: Some(vec![0; m.horizon() * m.num_states()]),
    })
}

/// Every deterministic non-stationary policy, in lexicographic order of the
/// level-major action table.
pub fn enumerate_policies(m: &TabularMdp, cap: u64) -> Result<PolicyEnumerator> {
    enumerator(m, (0..m.horizon() * m.num_states()).collect(), cap)
}

/// [`enumerate_policies`] with the default cap.
pub fn all_policies(m: &TabularMdp) -> Result<PolicyEnumerator> {
    enumerate_policies(m, DEFAULT_ENUMERATION_CAP)
}

/// `(h, s)` pairs reachable with positive probability under some policy,
/// found by graph search over positive-probability transitions.
pub fn reachable_pairs(m: &TabularMdp) -> Vec<Vec<bool>> {
    let (ns, hz) = (m.num_states(), m.horizon());
    let mut reach = vec![vec![false; ns]; hz];
    reach[0][m.initial_state()] = true;
    for h in 0..hz.saturating_sub(1) {
        for s in 0..ns {
            if !reach[h][s] {
                continue;
            }
            for a in 0..m.num_actions() {
                for (next, &p) in m.row(h, s, a).iter().enumerate() {
                    if p > 0.0 {
                        reach[h + 1][next] = true;
                    }
                }
            }
        }
    }
    reach
}

/// Policies that differ only on reachable `(h, s)` pairs (all other entries
/// play action 0). Values and occupancies are unaffected by the omitted
/// entries, so maxima over this set equal maxima over all policies.
pub fn enumerate_relevant_policies(m: &TabularMdp, cap: u64) -> Result<PolicyEnumerator> {
    let reach = reachable_pairs(m);
    let slots = (0..m.horizon())
        .flat_map(|h| (0..m.num_states()).map(move |s| (h, s)))
        .filter(|&(h, s)| reach[h][s])
        .map(|(h, s)| h * m.num_states() + s)
        .collect();
    enumerator(m, slots, cap)
}

/// Exact state distribution at every level, propagated forward; states in
/// `killed` lose their mass after being counted at that level.
fn forward(m: &TabularMdp, pi: &Policy, killed: Option<&TruncationProfile>) -> Vec<Vec<f64>> {
    let (ns, hz) = (m.num_states(), m.horizon());
    let mut dist = vec![vec![0.0; ns]; hz];
    dist[0][m.initial_state()] = 1.0;
    for h in 1..hz {
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            let mass = dist[h - 1][s];
            if mass == 0.0 || killed.is_some_and(|k| k.contains(h - 1, s)) {
                continue;
            }
            let row = m.row(h - 1, s, pi.action(h - 1, s));
            for (n, p) in next.iter_mut().zip(row) {
                *n += mass * p;
            }
        }
        dist[h] = next;
    }
    dist
}

/// Expected return of `pi`, summing rewards against forward occupancies.
pub fn forward_value(m: &TabularMdp, pi: &Policy) -> f64 {
    let dist = forward(m, pi, None);
    let mut total = 0.0;
    for (h, level) in dist.iter().enumerate() {
        for (s, &mass) in level.iter().enumerate() {
            total += mass * m.reward(h, s, pi.action(h, s));
        }
    }
    total
}

/// Optimal value and the first policy attaining it, by enumeration over
/// relevant policies.
pub fn brute_optimal_value(m: &TabularMdp, cap: u64) -> Result<(f64, Policy)> {
    let mut best: Option<(f64, Policy)> = None;
    for pi in enumerate_relevant_policies(m, cap)? {
        let v = forward_value(m, &pi);
        if best.as_ref().is_none_or(|(b, _)| v > *b) {
            best = Some((v, pi));
        }
    }
    Ok(best.expect("at least one policy"))
}

/// `max_π d^π(s, h)` for every pair, by enumeration.
pub fn brute_max_occupancy(m: &TabularMdp, cap: u64) -> Result<OccupancyTable> {
    let (ns, hz) = (m.num_states(), m.horizon());
    let mut best = vec![0.0f64; hz * ns];
    for pi in enumerate_relevant_policies(m, cap)? {
        for (h, level) in forward(m, &pi, None).iter().enumerate() {
            for (s, &mass) in level.iter().enumerate() {
                let slot = &mut best[h * ns + s];
                *slot = slot.max(mass);
            }
        }
    }
    Ok(OccupancyTable {
        horizon: hz,
        num_states: ns,
        d: best,
    })
}

/// One element of the gap multiset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapEntry {
    pub level: usize,
    pub state: usize,
    pub action: usize,
    pub gap: f64,
}

/// `V*_h(s) - Q*_h(s, a)` for every triple, duplicates kept.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapSet {
    pub entries: Vec<GapEntry>,
}

impl GapSet {
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.gap)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values().fold(0.0, f64::max)
    }
}

/// The gap multiset of `m`, ordered by level, state, action.
pub fn gap_set(m: &TabularMdp) -> GapSet {
    let vt = backward_dp(m);
    let mut entries = Vec::with_capacity(m.horizon() * m.num_states() * m.num_actions());
    for h in 0..m.horizon() {
        for s in 0..m.num_states() {
            for a in 0..m.num_actions() {
                entries.push(GapEntry {
                    level: h,
                    state: s,
                    action: a,
                    gap: vt.v(h, s) - vt.q(h, s, a),
                });
            }
        }
    }
    GapSet { entries }
}

/// Inductive profile from its literal definition: level `h` thresholds
/// `max_π Pr[s_h = s, s_{h'} ∉ U_{h'} for all h' < h]`, each joint
/// probability computed by forward propagation that drops mass entering an
/// earlier member, and the maximum taken over enumerated policies.
pub fn brute_truncation_profile(m: &TabularMdp, r: f64, cap: u64) -> Result<TruncationProfile> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::InvalidParameter(format!("threshold r must lie in [0, 1], got {r}")));
    }
    let (ns, hz) = (m.num_states(), m.horizon());
    let initial: Vec<usize> = (0..ns)
        .filter(|&s| if s == m.initial_state() { 1.0 <= r } else { true })
        .collect();
    let mut sets = vec![initial];
    let policies: Vec<Policy> = enumerate_relevant_policies(m, cap)?.collect();
    for h in 1..hz {
        let mut partial = sets.clone();
        partial.resize(hz, Vec::new());
        let killed = TruncationProfile::new(ProfileFlavor::Strong, ns, partial)?;
        let mut best = vec![0.0f64; ns];
        for pi in &policies {
            let dist = forward(m, pi, Some(&killed));
            for (b, &mass) in best.iter_mut().zip(&dist[h]) {
                *b = b.max(mass);
            }
        }
        sets.push((0..ns).filter(|&s| best[s] <= r).collect());
    }
    TruncationProfile::new(ProfileFlavor::Strong, ns, sets)
}

/// Critical thresholds `Crit(s, h) = inf {r : s ∈ U_h(r)}` for one profile
/// flavor, stored per `(s, h)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalThresholdTable {
    pub flavor: ProfileFlavor,
    pub horizon: usize,
    pub num_states: usize,
    crit: Vec<f64>,
}

impl CriticalThresholdTable {
    pub fn get(&self, s: usize, h: usize) -> f64 {
        self.crit[h * self.num_states + s]
    }

    pub fn values(&self) -> &[f64] {
        &self.crit
    }
}

/// Critical thresholds by bisection on membership, which is monotone in `r`.
/// Returns the upper end of the final bracket, so a state never truncated
/// below `r = 1` gets exactly 1.
///
/// For the weak flavor membership is `d*(s, h) <= r`, whose infimum is
/// `d*(s, h)` itself; that value is returned directly.
pub fn critical_thresholds(m: &TabularMdp, flavor: ProfileFlavor) -> Result<CriticalThresholdTable> {
    let (ns, hz) = (m.num_states(), m.horizon());
    let crit = match flavor {
        ProfileFlavor::Weak => max_occupancy(m).d,
        ProfileFlavor::Strong => {
            let mut crit = vec![0.0; hz * ns];
            for h in 0..hz {
                for s in 0..ns {
                    let member = |r: f64| -> Result<bool> { Ok(profile(m, r, flavor)?.contains(h, s)) };
                    if member(0.0)? {
                        continue;
                    }
                    let (mut lo, mut hi) = (0.0f64, 1.0f64);
                    for _ in 0..CRITICAL_BISECTION_STEPS {
                        let mid = 0.5 * (lo + hi);
                        if member(mid)? {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    crit[h * ns + s] = hi;
                }
            }
            crit
        }
        ProfileFlavor::Estimated => {
            return Err(Error::InvalidParameter(
                "critical thresholds need a strong or weak flavor".into(),
            ))
        }
    };
    Ok(CriticalThresholdTable {
        flavor,
        horizon: hz,
        num_states: ns,
        crit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_chain, make_random};

    #[test]
    fn enumeration_counts() {
        let one = TabularMdp::from_fn(1, 1, 3, 0, |_, _, _, r| r[0] = 1.0, |_, _, _| 0.0).unwrap();
        assert_eq!(all_policies(&one).unwrap().count(), 1);
        let m = make_random(2, 2, 2, 0, 1.0).unwrap();
        let all: Vec<_> = all_policies(&m).unwrap().collect();
        assert_eq!(all.len(), 16);
        assert!(all.windows(2).all(|w| w[0].actions() < w[1].actions()));
        assert!(matches!(
            enumerate_policies(&m, 15),
            Err(Error::InstanceTooLarge { .. })
        ));
    }

    #[test]
    fn single_action_gaps_vanish() {
        let m = make_random(3, 1, 3, 4, 1.0).unwrap();
        assert!(gap_set(&m).values().all(|g| g == 0.0));
    }

    #[test]
    fn chain_gaps_follow_closed_form() {
        let delta = 0.02;
        let m = make_chain(8, delta).unwrap();
        let g = gap_set(&m);
        let vt = backward_dp(&m);
        for h in 0..8 {
            let next = if h + 1 == 8 { 8 } else { h + 1 };
            let gap = g.entries.iter().find(|e| (e.level, e.state, e.action) == (h, h, 1)).unwrap();
            assert!((gap.gap - 2.0 * delta * vt.v(h + 1, next)).abs() < 1e-15);
        }
        assert!(g.max() <= m.horizon() as f64);
    }

    #[test]
    fn crit_of_initial_state_is_one() {
        let m = make_random(3, 2, 3, 9, 0.5).unwrap();
        let c = critical_thresholds(&m, ProfileFlavor::Strong).unwrap();
        assert_eq!(c.get(0, 0), 1.0);
        assert_eq!(c.get(1, 0), 0.0);
        let w = critical_thresholds(&m, ProfileFlavor::Weak).unwrap();
        assert_eq!(w.get(0, 0), 1.0);
    }
}
