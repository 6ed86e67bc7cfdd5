//! Exact dynamic programming over [`TabularMdp`]: optimal and policy values,
//! occupancies, and the max-TV distance between two models.

use crate::error::{Error, Result};
use crate::mdp::{OccupancyTable, Policy, TabularMdp, ValueTables};

#[inline]
fn expect_next(row: &[f64], v_next: &[f64]) -> f64 {
    row.iter().zip(v_next).map(|(p, v)| p * v).sum()
}

/// Optimal Q and V tables by backward induction, with `V_H = 0`.
pub fn backward_dp(m: &TabularMdp) -> ValueTables {
    let (ns, na, hz) = (m.num_states(), m.num_actions(), m.horizon());
    let mut q = vec![0.0; hz * ns * na];
    let mut v = vec![0.0; (hz + 1) * ns];
    for h in (0..hz).rev() {
        let (head, tail) = v.split_at_mut((h + 1) * ns);
        let v_next = &tail[..ns];
        let v_here = &mut head[h * ns..];
        for s in 0..ns {
            let mut best = f64::NEG_INFINITY;
            for a in 0..na {
                let val = m.reward(h, s, a) + expect_next(m.row(h, s, a), v_next);
                q[(h * ns + s) * na + a] = val;
                best = best.max(val);
            }
            v_here[s] = best;
        }
    }
    ValueTables {
        horizon: hz,
        num_states: ns,
        num_actions: na,
        initial_state: m.initial_state(),
        q,
        v,
    }
}

/// Q^π and V^π for a fixed policy.
pub fn evaluate_policy(m: &TabularMdp, pi: &Policy) -> Result<ValueTables> {
    pi.check_for(m)?;
    let (ns, na, hz) = (m.num_states(), m.num_actions(), m.horizon());
    let mut q = vec![0.0; hz * ns * na];
    let mut v = vec![0.0; (hz + 1) * ns];
    for h in (0..hz).rev() {
        let (head, tail) = v.split_at_mut((h + 1) * ns);
        let v_next = &tail[..ns];
        for s in 0..ns {
            for a in 0..na {
                q[(h * ns + s) * na + a] =
                    m.reward(h, s, a) + expect_next(m.row(h, s, a), v_next);
            }
            head[h * ns + s] = q[(h * ns + s) * na + pi.action(h, s)];
        }
    }
    Ok(ValueTables {
        horizon: hz,
        num_states: ns,
        num_actions: na,
        initial_state: m.initial_state(),
        q,
        v,
    })
}

/// `V^π_0(s0)`.
pub fn policy_value(m: &TabularMdp, pi: &Policy) -> Result<f64> {
    Ok(evaluate_policy(m, pi)?.initial_value())
}

/// Forward state distribution of `pi` from the initial state.
pub fn policy_occupancy(m: &TabularMdp, pi: &Policy) -> Result<OccupancyTable> {
    pi.check_for(m)?;
    let (ns, hz) = (m.num_states(), m.horizon());
    let mut d = vec![0.0; hz * ns];
    d[m.initial_state()] = 1.0;
    for h in 0..hz.saturating_sub(1) {
        let (cur, next) = d.split_at_mut((h + 1) * ns);
        let cur = &cur[h * ns..];
        let next = &mut next[..ns];
        for s in 0..ns {
            let mass = cur[s];
            if mass == 0.0 {
                continue;
            }
            for (n, p) in next.iter_mut().zip(m.row(h, s, pi.action(h, s))) {
                *n += mass * p;
            }
        }
    }
    Ok(OccupancyTable {
        horizon: hz,
        num_states: ns,
        d,
    })
}

/// `d*(s, h) = max_π Pr[s_h = s]` for a single target: the optimal value of
/// the MDP whose only reward is `1[h' = h, s' = s]`.
pub fn max_occupancy_at(m: &TabularMdp, s: usize, h: usize) -> f64 {
    let ns = m.num_states();
    let mut v = vec![0.0; ns];
    v[s] = 1.0;
    let mut next = vec![0.0; ns];
    for level in (0..h).rev() {
        std::mem::swap(&mut v, &mut next);
        for (x, out) in v.iter_mut().enumerate() {
            *out = (0..m.num_actions())
                .map(|a| expect_next(m.row(level, x, a), &next))
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }
    v[m.initial_state()]
}

/// `d*` for every `(s, h)`, one backward pass per target.
pub fn max_occupancy(m: &TabularMdp) -> OccupancyTable {
    let (ns, hz) = (m.num_states(), m.horizon());
    let mut d = Vec::with_capacity(hz * ns);
    for h in 0..hz {
        d.extend((0..ns).map(|s| max_occupancy_at(m, s, h)));
    }
    OccupancyTable {
        horizon: hz,
        num_states: ns,
        d,
    }
}

/// Largest L1 distance between matching transition rows. Two models are
/// ε-related iff the result is at most ε.
pub fn model_distance(m1: &TabularMdp, m2: &TabularMdp) -> Result<f64> {
    m1.check_same_shape(m2)?;
    if m1.initial_state() != m2.initial_state() || m1.rewards_raw() != m2.rewards_raw() {
        return Err(Error::RewardMismatch);
    }
    let mut worst = 0.0f64;
    for h in 0..m1.horizon() {
        for s in 0..m1.num_states() {
            for a in 0..m1.num_actions() {
                let dist: f64 = m1
                    .row(h, s, a)
                    .iter()
                    .zip(m2.row(h, s, a))
                    .map(|(p, q)| (p - q).abs())
                    .sum();
                worst = worst.max(dist);
            }
        }
    }
    Ok(worst)
}

/// Lexicographically smallest argmax policy of the optimal Q table.
pub fn greedy_policy(values: &ValueTables) -> Policy {
    let (ns, na, hz) = (values.num_states, values.num_actions, values.horizon);
    let mut actions = Vec::with_capacity(hz * ns);
    for h in 0..hz {
        for s in 0..ns {
            let v = values.v(h, s);
            let a = (0..na).find(|&a| values.q(h, s, a) >= v).unwrap_or(0);
            actions.push(a);
        }
    }
    Policy::from_table(hz, ns, actions)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(len: usize) -> TabularMdp {
        // Deterministic walk s -> s+1 (clamped) under every action.
        TabularMdp::from_fn(
            len,
            2,
            len,
            0,
            |_, s, _, row| row[(s + 1).min(len - 1)] = 1.0,
            |_, _, _| 0.0,
        )
        .unwrap()
    }

    #[test]
    fn zero_rewards_give_zero_values() {
        let vt = backward_dp(&line(3));
        assert!(vt.v.iter().all(|&v| v == 0.0));
        assert!(vt.q.iter().all(|&q| q == 0.0));
    }

    #[test]
    fn single_state_unit_reward_sums_over_horizon() {
        let m = TabularMdp::from_fn(1, 1, 3, 0, |_, _, _, r| r[0] = 1.0, |_, _, _| 1.0).unwrap();
        assert_eq!(backward_dp(&m).initial_value(), 3.0);
        let pi = Policy::constant(3, 1, 0);
        assert_eq!(policy_value(&m, &pi).unwrap(), 3.0);
    }

    #[test]
    fn deterministic_occupancy_is_a_path_indicator() {
        let m = line(4);
        let occ = policy_occupancy(&m, &Policy::constant(4, 4, 1)).unwrap();
        for h in 0..4 {
            for s in 0..4 {
                assert_eq!(occ.get(s, h), if s == h { 1.0 } else { 0.0 });
            }
        }
        let dstar = max_occupancy(&m);
        assert_eq!(dstar.get(0, 0), 1.0);
        assert_eq!(dstar.get(0, 2), 0.0);
    }

    #[test]
    fn distance_of_disjoint_point_masses_is_two() {
        let a = line(3);
        let b = TabularMdp::from_fn(
            3,
            2,
            3,
            0,
            |h, s, act, row| {
                if (h, s, act) == (1, 1, 0) {
                    row[0] = 1.0
                } else {
                    row[(s + 1).min(2)] = 1.0
                }
            },
            |_, _, _| 0.0,
        )
        .unwrap();
        assert_eq!(model_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(model_distance(&a, &b).unwrap(), 2.0);
        let c = a.with_rewards(|_, _, _| 0.5).unwrap();
        assert!(matches!(model_distance(&a, &c), Err(Error::RewardMismatch)));
        assert!(matches!(
            model_distance(&a, &line(4)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn greedy_prefers_lowest_index_on_ties() {
        let m = line(3);
        let pi = greedy_policy(&backward_dp(&m));
        assert!(pi.actions().iter().all(|&a| a == 0));
    }
}
