use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Policy, TabularMdp};
use crate::perturb::random_simplex;

/// Near-tie chain with `h` decision levels.
///
/// States `0..h` are the live states (live state `k` is occupied at level
/// `k`), state `h` is the goal and `h + 1` the failure sink. Action 0
/// advances with probability `0.5 + delta`, action 1 with `0.5 - delta`;
/// otherwise the episode falls into the sink. The model has `h + 1` levels:
/// the extra final level pays reward 1 in the goal, so the success of the
/// last decision is a sampled transition rather than a known reward.
pub fn make_chain(h: usize, delta: f64) -> Result<TabularMdp> {
    if h == 0 {
        return Err(Error::InvalidParameter("chain needs h >= 1".into()));
    }
    if !(0.0..0.5).contains(&delta) {
        return Err(Error::InvalidParameter(format!(
            "chain delta must lie in [0, 0.5), got {delta}"
        )));
    }
    let goal = h;
    let fail = h + 1;
    TabularMdp::from_fn(
        h + 2,
        2,
        h + 1,
        0,
        |level, s, a, row| {
            if s == level && s < h {
                let p = if a == 0 { 0.5 + delta } else { 0.5 - delta };
                let next = if s + 1 == h { goal } else { s + 1 };
                row[next] = p;
                row[fail] += 1.0 - p;
            } else if s == goal {
                row[goal] = 1.0;
            } else {
                row[fail] = 1.0;
            }
        },
        move |level, s, _| if level == h && s == goal { 1.0 } else { 0.0 },
    )
}

/// Index of the failure sink in [`make_chain`]`(h, _)`.
pub fn chain_failure_state(h: usize) -> usize {
    h + 1
}

/// GridWorld moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridAction {
    Right = 0,
    Up = 1,
}

/// State index of cell `(x, y)` in an `n × n` GridWorld.
pub fn gridworld_state(n: usize, x: usize, y: usize) -> usize {
    y * n + x
}

/// Index of the failure sink in an `n × n` GridWorld.
pub fn gridworld_failure_state(n: usize) -> usize {
    n * n
}

/// `n × n` GridWorld with a checkerboard advantage: on cells with even
/// `x + y`, Right succeeds with probability `0.5 + adv` and Up with
/// `0.5 - adv`; odd cells swap the signs.
pub fn make_gridworld(n: usize, adv: f64) -> Result<TabularMdp> {
    if !(0.0..0.5).contains(&adv) {
        return Err(Error::InvalidParameter(format!(
            "gridworld advantage must lie in [0, 0.5), got {adv}"
        )));
    }
    make_gridworld_custom(n, move |x, y, a| {
        let sign = if (x + y) % 2 == 0 { 1.0 } else { -1.0 };
        match a {
            GridAction::Right => 0.5 + sign * adv,
            GridAction::Up => 0.5 - sign * adv,
        }
    })
}

/// `n × n` GridWorld with caller-chosen success probabilities.
///
/// Start `(0, 0)`, terminal `(n-1, n-1)`, horizon `2(n-1) + 1`. At level `h`
/// only cells with `x + y = h` are live. A move succeeds with
/// `success(x, y, action)` and otherwise drops into the failure sink; moves
/// off the grid fail outright. The final level pays 1 in the terminal cell.
pub fn make_gridworld_custom(
    n: usize,
    success: impl Fn(usize, usize, GridAction) -> f64,
) -> Result<TabularMdp> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("gridworld needs n >= 2, got {n}")));
    }
    let fail = gridworld_failure_state(n);
    let last = 2 * (n - 1);
    let terminal = gridworld_state(n, n - 1, n - 1);
    let mut bad = None;
    let m = TabularMdp::from_fn(
        n * n + 1,
        2,
        last + 1,
        0,
        |h, s, a, row| {
            if s == fail {
                row[fail] = 1.0;
                return;
            }
            let (x, y) = (s % n, s / n);
            if h == last && s == terminal {
                row[terminal] = 1.0;
                return;
            }
            if x + y != h || h == last {
                row[fail] = 1.0;
                return;
            }
            let (action, target) = if a == 0 {
                (GridAction::Right, (x + 1 < n).then(|| gridworld_state(n, x + 1, y)))
            } else {
                (GridAction::Up, (y + 1 < n).then(|| gridworld_state(n, x, y + 1)))
            };
            match target {
                Some(next) => {
                    let p = success(x, y, action);
                    if !(0.0..=1.0).contains(&p) {
                        bad = Some(p);
                        row[fail] = 1.0;
                        return;
                    }
                    row[next] = p;
                    row[fail] += 1.0 - p;
                }
                None => row[fail] = 1.0,
            }
        },
        |h, s, _| if h == last && s == terminal { 1.0 } else { 0.0 },
    )?;
    match bad {
        Some(p) => Err(Error::InvalidParameter(format!(
            "gridworld success probability {p} outside [0, 1]"
        ))),
        None => Ok(m),
    }
}

/// Random model: each row is uniform on the simplex over a random subset of
/// `ceil(support · |S|)` next states; rewards are uniform in `[0, 1)`;
/// the initial state is 0.
pub fn make_random(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    seed: u64,
    support: f64,
) -> Result<TabularMdp> {
    if !(support > 0.0 && support <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "support fraction must lie in (0, 1], got {support}"
        )));
    }
    let k = ((support * num_states as f64).ceil() as usize).clamp(1, num_states.max(1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = horizon * num_states * num_actions;
    let mut transitions = Vec::with_capacity(rows * num_states);
    let mut rewards = Vec::with_capacity(rows);
    for _ in 0..rows {
        let mut idx = sample(&mut rng, num_states, k).into_vec();
        idx.sort_unstable();
        transitions.extend(random_simplex(&mut rng, num_states, &idx));
        rewards.push(rng.random::<f64>());
    }
    TabularMdp::new(num_states, num_actions, horizon, 0, transitions, rewards)
}

/// State layout of [`make_bandit_embedding`].
///
/// Index 0 is the start state; the routing tree follows (depth by depth),
/// then the key states `q_0..q_{m-1}`, then the absorbing success and
/// failure states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BanditLayout {
    pub z: usize,
    pub m: usize,
    pub n: usize,
    /// Tree depth `ceil(log_n m)`.
    pub depth: usize,
    tree_offsets: Vec<usize>,
    tree_counts: Vec<usize>,
    pub key_offset: usize,
    pub success: usize,
    pub failure: usize,
    pub num_states: usize,
    pub horizon: usize,
}

impl BanditLayout {
    pub fn new(z: usize, m: usize, n: usize) -> Result<Self> {
        if z == 0 || m == 0 || n < 2 {
            return Err(Error::InvalidParameter(format!(
                "bandit embedding needs z >= 1, m >= 1, n >= 2 (got z={z}, m={m}, n={n})"
            )));
        }
        let mut depth = 0;
        let mut reach = 1usize;
        while reach < m {
            reach = reach.saturating_mul(n);
            depth += 1;
        }
        // Node k at tree depth t exists iff its subtree holds a key state.
        let mut tree_offsets = Vec::with_capacity(depth);
        let mut tree_counts = Vec::with_capacity(depth);
        let mut next = 1;
        for t in 0..depth {
            let span = n.pow((depth - t) as u32);
            tree_offsets.push(next);
            tree_counts.push(m.div_ceil(span));
            next += m.div_ceil(span);
        }
        let key_offset = next;
        let success = key_offset + m;
        Ok(Self {
            z,
            m,
            n,
            depth,
            tree_offsets,
            tree_counts,
            key_offset,
            success,
            failure: success + 1,
            num_states: success + 2,
            horizon: depth + z + 2,
        })
    }

    /// State of tree node `k` at depth `t`.
    pub fn tree_node(&self, t: usize, k: usize) -> usize {
        self.tree_offsets[t] + k
    }

    /// Level at which key layer `i` is played.
    pub fn key_level(&self, i: usize) -> usize {
        self.depth + 1 + i
    }

    fn locate_tree(&self, s: usize) -> Option<(usize, usize)> {
        (0..self.depth).find_map(|t| {
            let off = self.tree_offsets[t];
            (s >= off && s < off + self.tree_counts[t]).then(|| (t, s - off))
        })
    }

    /// Where entering child `c` of depth `t` leads; `None` means the child does
    /// not exist.
    fn child(&self, t: usize, c: usize) -> Option<usize> {
        if t + 1 == self.depth {
            (c < self.m).then(|| self.key_offset + c)
        } else {
            (c < self.tree_counts[t + 1]).then(|| self.tree_node(t + 1, c))
        }
    }

    /// Where action 0 at the start state leads.
    fn entry(&self) -> usize {
        if self.depth == 0 {
            self.key_offset
        } else {
            self.tree_node(0, 0)
        }
    }
}

/// Builds the BestArm embedding for arm means `means[(i * m + j) * n + l]`,
/// `i < z`, `j < m`, `l < n`.
///
/// At the start state action 1 waits, action 0 enters the routing tree, and
/// any other action falls into the failure state. After waiting `i` steps
/// and routing for `ceil(log_n m)` steps the agent sits in key state `q_j`
/// at key layer `i`, where action `l` succeeds with probability
/// `p_{i,j,l}`. The success state pays 1 at the last level only. Tree
/// actions that lead to a missing child self-loop.
pub fn make_bandit_embedding(means: &[f64], z: usize, m: usize, n: usize) -> Result<TabularMdp> {
    let lay = BanditLayout::new(z, m, n)?;
    if means.len() != z * m * n {
        return Err(Error::ShapeMismatch {
            expected: format!("{} arm means (z*m*n)", z * m * n),
            found: format!("{}", means.len()),
        });
    }
    if let Some(&p) = means.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidParameter(format!("arm mean {p} outside [0, 1]")));
    }
    let last = lay.horizon - 1;
    TabularMdp::from_fn(
        lay.num_states,
        n,
        lay.horizon,
        0,
        |h, s, a, row| {
            if s == 0 {
                match a {
                    0 => row[lay.entry()] = 1.0,
                    1 => row[0] = 1.0,
                    _ => row[lay.failure] = 1.0,
                }
            } else if let Some((t, k)) = lay.locate_tree(s) {
                row[lay.child(t, k * n + a).unwrap_or(s)] = 1.0;
            } else if s >= lay.key_offset && s < lay.success {
                let j = s - lay.key_offset;
                match (0..z).find(|&i| lay.key_level(i) == h) {
                    Some(i) => {
                        let p = means[(i * m + j) * n + a];
                        row[lay.success] = p;
                        row[lay.failure] += 1.0 - p;
                    }
                    None => row[lay.failure] = 1.0,
                }
            } else {
                row[s] = 1.0;
            }
        },
        |h, s, _| if h == last && s == lay.success { 1.0 } else { 0.0 },
    )
}

/// The deterministic policy that pulls arm `(i, j, l)`; unused entries play
/// action 0.
pub fn bandit_arm_policy(lay: &BanditLayout, i: usize, j: usize, l: usize) -> Result<Policy> {
    if i >= lay.z || j >= lay.m || l >= lay.n {
        return Err(Error::InvalidParameter(format!(
            "arm ({i}, {j}, {l}) out of range"
        )));
    }
    let mut pi = Policy::constant(lay.horizon, lay.num_states, 0);
    for h in 0..i {
        pi.set_action(h, 0, 1);
    }
    pi.set_action(i, 0, 0);
    for t in 0..lay.depth {
        let node = j / lay.n.pow((lay.depth - t) as u32);
        let digit = (j / lay.n.pow((lay.depth - 1 - t) as u32)) % lay.n;
        pi.set_action(i + 1 + t, lay.tree_node(t, node), digit);
    }
    pi.set_action(lay.key_level(i), lay.key_offset + j, l);
    Ok(pi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::{backward_dp, max_occupancy, policy_value};

    #[test]
    fn chain_closed_form_value() {
        let m = make_chain(8, 0.02).unwrap();
        assert_eq!(m.horizon(), 9);
        assert_eq!(m.row(0, 0, 0)[1], 0.52);
        let v = policy_value(&m, &Policy::constant(9, 10, 0)).unwrap();
        assert!((v - 0.52f64.powi(8)).abs() < 1e-15);
        assert!((backward_dp(&m).initial_value() - 0.52f64.powi(8)).abs() < 1e-15);
        assert!(make_chain(8, 0.7).is_err());
    }

    #[test]
    fn chain_without_advantage_has_no_gaps() {
        let m = make_chain(4, 0.0).unwrap();
        let vt = backward_dp(&m);
        for h in 0..m.horizon() {
            for s in 0..m.num_states() {
                assert_eq!(vt.q(h, s, 0), vt.q(h, s, 1));
            }
        }
    }

    #[test]
    fn gridworld_shape_and_deterministic_value() {
        let m = make_gridworld(5, 0.02).unwrap();
        assert_eq!(m.num_states(), 26);
        assert_eq!(m.horizon(), 9);
        let det = make_gridworld_custom(5, |_, _, _| 1.0).unwrap();
        assert_eq!(backward_dp(&det).initial_value(), 1.0);
        // Corner cell: only Up stays on the grid.
        let corner = gridworld_state(5, 4, 0);
        assert_eq!(det.row(4, corner, 0)[gridworld_failure_state(5)], 1.0);
        assert!(make_gridworld(1, 0.0).is_err());
    }

    #[test]
    fn random_models_are_reproducible_and_sparse() {
        let a = make_random(4, 2, 3, 7, 1.0).unwrap();
        assert_eq!(a, make_random(4, 2, 3, 7, 1.0).unwrap());
        for h in 0..3 {
            for s in 0..4 {
                for act in 0..2 {
                    assert!((a.row(h, s, act).iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
        }
        let sparse = make_random(6, 1, 4, 3, 0.2).unwrap();
        let d = max_occupancy(&sparse);
        assert!((1..4).any(|h| (0..6).any(|s| d.get(s, h) == 0.0)));
    }

    #[test]
    fn bandit_arm_policies_realize_their_means() {
        let (z, m, n) = (2, 3, 2);
        let means: Vec<f64> = (0..z * m * n).map(|k| k as f64 / 20.0).collect();
        let mdp = make_bandit_embedding(&means, z, m, n).unwrap();
        let lay = BanditLayout::new(z, m, n).unwrap();
        for i in 0..z {
            for j in 0..m {
                for l in 0..n {
                    let pi = bandit_arm_policy(&lay, i, j, l).unwrap();
                    let v = policy_value(&mdp, &pi).unwrap();
                    assert_eq!(v, means[(i * m + j) * n + l]);
                }
            }
        }
        assert_eq!(backward_dp(&mdp).initial_value(), 11.0 / 20.0);
    }

    #[test]
    fn single_good_arm() {
        let mut means = vec![0.0; 8];
        means[5] = 1.0;
        let mdp = make_bandit_embedding(&means, 2, 2, 2).unwrap();
        assert_eq!(backward_dp(&mdp).initial_value(), 1.0);
    }
}
