//! Finite-horizon tabular MDPs, deterministic non-stationary policies, and the
//! tables produced by dynamic programming over them.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ROW_SUM_TOLERANCE;
use crate::error::{Error, Result};

/// A finite-horizon MDP `(S, A, P, R, H, s0)` with level-indexed transitions
/// and deterministic rewards in `[0, 1]`.
///
/// Levels are `0..horizon`. Transitions are stored densely as
/// `P_h(s' | s, a)`; every row is validated on construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpFile", into = "MdpFile")]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    initial_state: usize,
    transitions: Vec<f64>,
    rewards: Vec<f64>,
}

impl TabularMdp {
    /// Builds a model from flat tables laid out as `[h][s][a][s']` and
    /// `[h][s][a]`.
    ///
    /// Rows whose sum drifts from one by less than the row tolerance (but
    /// more than rounding noise) are renormalized; anything larger is
    /// rejected.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        initial_state: usize,
        mut transitions: Vec<f64>,
        rewards: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || horizon == 0 {
            return Err(Error::InvalidParameter(format!(
                "dimensions must be positive (|S|={num_states}, |A|={num_actions}, H={horizon})"
            )));
        }
        let rows = horizon * num_states * num_actions;
        if transitions.len() != rows * num_states {
            return Err(Error::ShapeMismatch {
                expected: format!("{} transition entries", rows * num_states),
                found: format!("{}", transitions.len()),
            });
        }
        if rewards.len() != rows {
            return Err(Error::ShapeMismatch {
                expected: format!("{rows} reward entries"),
                found: format!("{}", rewards.len()),
            });
        }
        if initial_state >= num_states {
            return Err(Error::InvalidInitialState {
                initial: initial_state,
                num_states,
            });
        }
        for (idx, row) in transitions.chunks_mut(num_states).enumerate() {
            let (level, state, action) = split_row_index(idx, num_states, num_actions);
            for &value in row.iter() {
                if !(0.0..=1.0 + ROW_SUM_TOLERANCE).contains(&value) {
                    return Err(Error::InvalidProbability {
                        level,
                        state,
                        action,
                        value,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::InvalidRow {
                    level,
                    state,
                    action,
                    sum,
                });
            }
            // Drift at the level of summation rounding is left alone so that
            // copying a validated row into a new model is exact.
            if (sum - 1.0).abs() > num_states as f64 * f64::EPSILON {
                row.iter_mut().for_each(|p| *p /= sum);
            }
        }
        for (idx, &value) in rewards.iter().enumerate() {
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                let (level, state, action) = split_row_index(idx, num_states, num_actions);
                return Err(Error::RewardOutOfRange {
                    level,
                    state,
                    action,
                    value,
                });
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            horizon,
            initial_state,
            transitions,
            rewards,
        })
    }

    /// Builds a model by filling each transition row and reward through
    /// callbacks. `row` receives a zeroed slice of length `num_states`.
    pub fn from_fn(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        initial_state: usize,
        mut row: impl FnMut(usize, usize, usize, &mut [f64]),
        mut reward: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let rows = horizon * num_states * num_actions;
        let mut transitions = vec![0.0; rows * num_states];
        let mut rewards = vec![0.0; rows];
        if num_states > 0 {
            for (idx, chunk) in transitions.chunks_mut(num_states).enumerate() {
                let (h, s, a) = split_row_index(idx, num_states, num_actions);
                row(h, s, a, chunk);
                rewards[idx] = reward(h, s, a);
            }
        }
        Self::new(
            num_states,
            num_actions,
            horizon,
            initial_state,
            transitions,
            rewards,
        )
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    #[inline]
    fn row_index(&self, h: usize, s: usize, a: usize) -> usize {
        (h * self.num_states + s) * self.num_actions + a
    }

    /// The distribution `P_h(· | s, a)`.
    #[inline]
    pub fn row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let start = self.row_index(h, s, a) * self.num_states;
        &self.transitions[start..start + self.num_states]
    }

    #[inline]
    pub fn prob(&self, h: usize, s: usize, a: usize, next: usize) -> f64 {
        self.row(h, s, a)[next]
    }

    #[inline]
    pub fn reward(&self, h: usize, s: usize, a: usize) -> f64 {
        self.rewards[self.row_index(h, s, a)]
    }

    /// Number of deterministic non-stationary policies, `|A|^(|S| H)`, as a
    /// float so that large instances do not overflow.
    pub fn policy_count(&self) -> f64 {
        (self.num_actions as f64).powf((self.num_states * self.horizon) as f64)
    }

    /// Same transitions and initial state, rewards replaced by `reward`.
    pub fn with_rewards(&self, reward: impl Fn(usize, usize, usize) -> f64) -> Result<Self> {
        Self::from_fn(
            self.num_states,
            self.num_actions,
            self.horizon,
            self.initial_state,
            |h, s, a, row| row.copy_from_slice(self.row(h, s, a)),
            reward,
        )
    }

    /// True when shapes agree.
    pub fn same_shape(&self, other: &Self) -> bool {
        self.num_states == other.num_states
            && self.num_actions == other.num_actions
            && self.horizon == other.horizon
    }

    /// Shape check shared by operations that take a model pair.
    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: self.shape_string(),
                found: other.shape_string(),
            })
        }
    }

    pub(crate) fn shape_string(&self) -> String {
        format!(
            "(|S|={}, |A|={}, H={})",
            self.num_states, self.num_actions, self.horizon
        )
    }

    pub(crate) fn rewards_raw(&self) -> &[f64] {
        &self.rewards
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn split_row_index(idx: usize, num_states: usize, num_actions: usize) -> (usize, usize, usize) {
    let action = idx % num_actions;
    let hs = idx / num_actions;
    (hs / num_states, hs % num_states, action)
}

/// Current version of the on-disk model format.
pub const MDP_FORMAT_VERSION: u32 = 1;

/// On-disk model representation. Nested arrays are indexed
/// `rewards[h][s][a]` and `transitions[h][s][a][s']`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    pub format: u32,
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub initial_state: usize,
    pub rewards: Vec<Vec<Vec<f64>>>,
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
}

impl From<TabularMdp> for MdpFile {
    fn from(m: TabularMdp) -> Self {
        let (s_n, a_n, h_n) = (m.num_states, m.num_actions, m.horizon);
        let rewards = (0..h_n)
            .map(|h| {
                (0..s_n)
                    .map(|s| (0..a_n).map(|a| m.reward(h, s, a)).collect())
                    .collect()
            })
            .collect();
        let transitions = (0..h_n)
            .map(|h| {
                (0..s_n)
                    .map(|s| (0..a_n).map(|a| m.row(h, s, a).to_vec()).collect())
                    .collect()
            })
            .collect();
        MdpFile {
            format: MDP_FORMAT_VERSION,
            num_states: s_n,
            num_actions: a_n,
            horizon: h_n,
            initial_state: m.initial_state,
            rewards,
            transitions,
        }
    }
}

impl TryFrom<MdpFile> for TabularMdp {
    type Error = Error;

    fn try_from(file: MdpFile) -> Result<Self> {
        if file.format != MDP_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format version {} (expected {MDP_FORMAT_VERSION})",
                file.format
            )));
        }
        let (s_n, a_n, h_n) = (file.num_states, file.num_actions, file.horizon);
        let shape_err = |what: &str| Error::Format(format!("{what} has the wrong shape"));
        if file.rewards.len() != h_n || file.transitions.len() != h_n {
            return Err(shape_err("level axis"));
        }
        let mut rewards = Vec::with_capacity(h_n * s_n * a_n);
        for level in &file.rewards {
            if level.len() != s_n || level.iter().any(|r| r.len() != a_n) {
                return Err(shape_err("rewards"));
            }
            rewards.extend(level.iter().flatten());
        }
        let mut transitions = Vec::with_capacity(h_n * s_n * a_n * s_n);
        for level in &file.transitions {
            if level.len() != s_n
                || level
                    .iter()
                    .any(|by_a| by_a.len() != a_n || by_a.iter().any(|row| row.len() != s_n))
            {
                return Err(shape_err("transitions"));
            }
            transitions.extend(level.iter().flatten().flatten());
        }
        TabularMdp::new(s_n, a_n, h_n, file.initial_state, transitions, rewards)
    }
}

/// A deterministic non-stationary policy: one action per `(level, state)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Policy {
    horizon: usize,
    num_states: usize,
    actions: Vec<usize>,
}

impl Policy {
    /// Builds a policy from a level-major action table, checking every entry
    /// against `num_actions`.
    pub fn new(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        actions: Vec<usize>,
    ) -> Result<Self> {
        if actions.len() != horizon * num_states {
            return Err(Error::ShapeMismatch {
                expected: format!("{} policy entries", horizon * num_states),
                found: format!("{}", actions.len()),
            });
        }
        if let Some(idx) = actions.iter().position(|&a| a >= num_actions) {
            return Err(Error::InvalidAction {
                level: idx / num_states,
                state: idx % num_states,
                action: actions[idx],
            });
        }
        Ok(Self {
            horizon,
            num_states,
            actions,
        })
    }

    /// The policy that plays `action` everywhere.
    pub fn constant(horizon: usize, num_states: usize, action: usize) -> Self {
        Self {
            horizon,
            num_states,
            actions: vec![action; horizon * num_states],
        }
    }

    pub(crate) fn from_table(horizon: usize, num_states: usize, actions: Vec<usize>) -> Self {
        debug_assert_eq!(actions.len(), horizon * num_states);
        Self {
            horizon,
            num_states,
            actions,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    #[inline]
    pub fn action(&self, h: usize, s: usize) -> usize {
        self.actions[h * self.num_states + s]
    }

    pub fn set_action(&mut self, h: usize, s: usize, action: usize) {
        self.actions[h * self.num_states + s] = action;
    }

    /// Level-major action table.
    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    /// Keeps only the first `num_states` columns (drops appended states such
    /// as the absorbing state of a truncated model).
    pub fn restrict(&self, num_states: usize) -> Self {
        let keep = num_states.min(self.num_states);
        let mut actions = Vec::with_capacity(self.horizon * keep);
        for h in 0..self.horizon {
            actions.extend_from_slice(&self.actions[h * self.num_states..][..keep]);
        }
        Self {
            horizon: self.horizon,
            num_states: keep,
            actions,
        }
    }

    /// Extends the table with extra states playing action 0.
    pub fn extend(&self, num_states: usize) -> Self {
        if num_states <= self.num_states {
            return self.clone();
        }
        let mut actions = Vec::with_capacity(self.horizon * num_states);
        for h in 0..self.horizon {
            actions.extend_from_slice(&self.actions[h * self.num_states..][..self.num_states]);
            actions.extend(std::iter::repeat_n(0, num_states - self.num_states));
        }
        Self {
            horizon: self.horizon,
            num_states,
            actions,
        }
    }

    /// Checks that the policy fits `m`.
    pub fn check_for(&self, m: &TabularMdp) -> Result<()> {
        if self.horizon != m.horizon() || self.num_states != m.num_states() {
            return Err(Error::ShapeMismatch {
                expected: format!("policy for H={}, |S|={}", m.horizon(), m.num_states()),
                found: format!("H={}, |S|={}", self.horizon, self.num_states),
            });
        }
        if let Some(idx) = self.actions.iter().position(|&a| a >= m.num_actions()) {
            return Err(Error::InvalidAction {
                level: idx / self.num_states,
                state: idx % self.num_states,
                action: self.actions[idx],
            });
        }
        Ok(())
    }
}

impl fmt::Display for Policy {
    /// Levels separated by `|`, actions within a level by `,`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for h in 0..self.horizon {
            if h > 0 {
                f.write_str("|")?;
            }
            for s in 0..self.num_states {
                if s > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{}", self.action(h, s))?;
            }
        }
        Ok(())
    }
}

/// Q and V tables for one model; `v(horizon, ·) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueTables {
    pub(crate) horizon: usize,
    pub(crate) num_states: usize,
    pub(crate) num_actions: usize,
    pub(crate) initial_state: usize,
    pub(crate) q: Vec<f64>,
    pub(crate) v: Vec<f64>,
}

impl ValueTables {
    #[inline]
    pub fn q(&self, h: usize, s: usize, a: usize) -> f64 {
        self.q[(h * self.num_states + s) * self.num_actions + a]
    }

    /// `v(h, s)`; `h` may equal the horizon, where the value is zero.
    #[inline]
    pub fn v(&self, h: usize, s: usize) -> f64 {
        self.v[h * self.num_states + s]
    }

    /// Value of the initial state at level 0.
    pub fn initial_value(&self) -> f64 {
        self.v(0, self.initial_state)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }
}

/// Per-level state distribution `d(s, h)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupancyTable {
    pub(crate) horizon: usize,
    pub(crate) num_states: usize,
    pub(crate) d: Vec<f64>,
}

impl OccupancyTable {
    #[inline]
    pub fn get(&self, s: usize, h: usize) -> f64 {
        self.d[h * self.num_states + s]
    }

    pub fn level(&self, h: usize) -> &[f64] {
        &self.d[h * self.num_states..(h + 1) * self.num_states]
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }
}

/// One environment step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
}

/// A full episode of `H` steps plus the state reached after the last one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub final_state: usize,
}

impl Trajectory {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// State occupied at level `h`; `h == H` gives the final state.
    pub fn state_at(&self, h: usize) -> usize {
        self.steps.get(h).map_or(self.final_state, |s| s.state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> TabularMdp {
        TabularMdp::from_fn(
            2,
            2,
            2,
            0,
            |_, s, a, row| {
                row[(s + a) % 2] = 0.75;
                row[(s + a + 1) % 2] = 0.25;
            },
            |h, s, a| 0.1 * (h + s + a) as f64,
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_rows() {
        let err = TabularMdp::new(1, 1, 1, 0, vec![0.9], vec![0.0]).unwrap_err();
        assert!(matches!(err, Error::InvalidRow { .. }));
        let err = TabularMdp::new(2, 1, 1, 0, vec![1.5, -0.5, 0.0, 1.0], vec![0.0; 2]).unwrap_err();
        assert!(matches!(err, Error::InvalidProbability { .. }));
        let err = TabularMdp::new(1, 1, 1, 0, vec![1.0], vec![1.5]).unwrap_err();
        assert!(matches!(err, Error::RewardOutOfRange { .. }));
        let err = TabularMdp::new(1, 1, 1, 3, vec![1.0], vec![0.0]).unwrap_err();
        assert!(matches!(err, Error::InvalidInitialState { .. }));
    }

    #[test]
    fn renormalizes_tiny_drift_only() {
        let m = TabularMdp::new(2, 1, 1, 0, vec![0.5, 0.5 + 5e-10, 0.0, 1.0], vec![0.0; 2]).unwrap();
        let sum: f64 = m.row(0, 0, 0).iter().sum();
        assert!((sum - 1.0).abs() < 1e-15);
        assert!(TabularMdp::new(2, 1, 1, 0, vec![0.5, 0.5 + 5e-9, 0.0, 1.0], vec![0.0; 2]).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = two_state();
        let text = m.to_json().unwrap();
        assert!(text.contains("\"format\": 1"));
        assert_eq!(TabularMdp::from_json(&text).unwrap(), m);
    }

    #[test]
    fn rejects_unknown_format() {
        let text = two_state().to_json().unwrap().replace("\"format\": 1", "\"format\": 2");
        assert!(TabularMdp::from_json(&text).is_err());
    }

    #[test]
    fn policy_restrict_and_extend() {
        let p = Policy::new(2, 3, 2, vec![0, 1, 1, 1, 0, 1]).unwrap();
        let r = p.restrict(2);
        assert_eq!(r.actions(), &[0, 1, 1, 0]);
        assert_eq!(r.extend(3).actions(), &[0, 1, 0, 1, 0, 0]);
        assert_eq!(p.to_string(), "0,1,1|1,0,1");
        assert!(Policy::new(1, 2, 2, vec![0, 2]).is_err());
    }
}
