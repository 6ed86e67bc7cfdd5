//! Tolerance-based planning and the generative-model learner built on it.
//!
//! The planner picks, at every `(h, s)`, the lowest-index action whose
//! estimated Q-value is within `r_action` of the estimated optimum. With
//! `r_action` away from every gap of the true model, the choice no longer
//! depends on estimation noise.

use rand::Rng;
use serde::Serialize;

use crate::config::DEFAULT_SAMPLE_BUDGET;
use crate::dp::backward_dp;
use crate::envs::GenerativeEnv;
use crate::error::{Error, Result};
use crate::mdp::{Policy, TabularMdp, ValueTables};
use crate::oracle::gap_set;

/// Lowest-index action with `Q*(s, a) >= V*(s) - r_action` at every `(h, s)`.
pub fn robust_plan(m_hat: &TabularMdp, r_action: f64) -> Result<Policy> {
    robust_plan_from_values(&backward_dp(m_hat), r_action)
}

/// [`robust_plan`] on precomputed optimal tables.
pub fn robust_plan_from_values(vt: &ValueTables, r_action: f64) -> Result<Policy> {
    if !(r_action >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "r_action must be >= 0, got {r_action}"
        )));
    }
    let (ns, na, hz) = (vt.num_states(), vt.num_actions(), vt.horizon());
    let mut actions = Vec::with_capacity(hz * ns);
    for h in 0..hz {
        for s in 0..ns {
            let threshold = vt.v(h, s) - r_action;
            // The argmax always qualifies, so the search cannot fall through.
            let a = (0..na)
                .find(|&a| vt.q(h, s, a) >= threshold)
                .expect("argmax satisfies the tolerance test");
            actions.push(a);
        }
    }
    Ok(Policy::from_table(hz, ns, actions))
}

/// Worst-case suboptimality `2 H² ε₀ + r_action H` of a planned policy when
/// the planning model is ε₀-related to the true one.
pub fn suboptimality_bound(horizon: usize, eps0: f64, r_action: f64) -> f64 {
    let h = horizon as f64;
    2.0 * h * h * eps0 + r_action * h
}

/// Union of closed balls `[x - radius, x + radius]`, clipped at 0 and
/// merged into disjoint sorted intervals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BadIntervalSet {
    pub radius: f64,
    pub centers: usize,
    intervals: Vec<(f64, f64)>,
}

impl BadIntervalSet {
    pub fn from_centers(centers: impl IntoIterator<Item = f64>, radius: f64) -> Self {
        let mut raw: Vec<(f64, f64)> = centers
            .into_iter()
            .map(|c| ((c - radius).max(0.0), c + radius))
            .collect();
        let count = raw.len();
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut intervals: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (lo, hi) in raw {
            match intervals.last_mut() {
                Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                _ => intervals.push((lo, hi)),
            }
        }
        Self {
            radius,
            centers: count,
            intervals,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        let idx = self.intervals.partition_point(|&(lo, _)| lo <= x);
        idx > 0 && x <= self.intervals[idx - 1].1
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    /// Total length of the union.
    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|(lo, hi)| hi - lo).sum()
    }

    /// Length of the union inside `[lo, hi]`.
    pub fn measure_within(&self, lo: f64, hi: f64) -> f64 {
        self.intervals
            .iter()
            .map(|&(a, b)| (b.min(hi) - a.max(lo)).max(0.0))
            .sum()
    }
}

/// Tolerances whose planned policy may depend on estimation noise: the
/// union of `Ball(g, 2 H² ε₀)` over the gap multiset of `m`.
pub fn bad_action_set(m: &TabularMdp, eps0: f64) -> Result<BadIntervalSet> {
    if !(eps0 >= 0.0) {
        return Err(Error::InvalidParameter(format!("eps0 must be >= 0, got {eps0}")));
    }
    let h = m.horizon() as f64;
    Ok(BadIntervalSet::from_centers(
        gap_set(m).values(),
        2.0 * h * h * eps0,
    ))
}

/// A uniform draw and the open interval it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Draw {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Tolerances used by one learner run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ToleranceDraw {
    pub r_action: Draw,
    pub r_trunc: Option<Draw>,
}

/// Uniform sample from the open interval `(lo, hi)`.
pub fn draw_tolerance<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> Result<Draw> {
    if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
        return Err(Error::InvalidInterval { lo, hi });
    }
    loop {
        let value = rng.random_range(lo..hi);
        if value > lo {
            return Ok(Draw { value, lo, hi });
        }
    }
}

/// How many samples per `(s, a, h)` the generative learner draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleSize {
    /// Hoeffding plus union bound at accuracy `ε₀ = δε / (20 H³)`.
    Formula,
    Fixed(u64),
}

/// How the generative learner sets `r_action`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ToleranceRule {
    /// Uniform on `(0, ε / (5H))`.
    Drawn,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GenerativeOptions {
    pub samples: SampleSize,
    pub tolerance: ToleranceRule,
    /// Maximum samples per pair.
    pub budget: u64,
}

impl Default for GenerativeOptions {
    fn default() -> Self {
        Self {
            samples: SampleSize::Formula,
            tolerance: ToleranceRule::Drawn,
            budget: DEFAULT_SAMPLE_BUDGET,
        }
    }
}

/// Accuracy target `ε₀ = δε / (20 H³)` and the real-valued per-pair sample
/// count `ln(4 |S|² |A| H / δ) |S|² / (2 ε₀²)` before rounding up.
pub fn generative_sample_size(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    eps: f64,
    delta: f64,
) -> (f64, f64) {
    let (s, a, h) = (num_states as f64, num_actions as f64, horizon as f64);
    let eps0 = delta * eps / (20.0 * h * h * h);
    let n = (4.0 * s * s * a * h / delta).ln() * s * s / (2.0 * eps0 * eps0);
    (eps0, n)
}

/// Output of [`generative_learn`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerativeOutcome {
    pub policy: Policy,
    pub samples_per_pair: u64,
    pub eps0: f64,
    pub r_action: f64,
    pub r_action_draw: Option<Draw>,
}

pub(crate) fn check_unit_open(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must lie in (0, 1), got {x}")))
    }
}

/// Estimates the model from `N` generative samples per `(s, a, h)` and plans
/// on it with a random tolerance.
pub fn generative_learn<R: Rng + ?Sized>(
    gen: &mut GenerativeEnv<'_>,
    eps: f64,
    delta: f64,
    rng: &mut R,
    options: &GenerativeOptions,
) -> Result<GenerativeOutcome> {
    check_unit_open("eps", eps)?;
    check_unit_open("delta", delta)?;
    let m = gen.mdp();
    let (eps0, n_real) =
        generative_sample_size(m.num_states(), m.num_actions(), m.horizon(), eps, delta);
    let n = match options.samples {
        SampleSize::Fixed(n) => n as f64,
        SampleSize::Formula => n_real.ceil(),
    };
    if n > options.budget as f64 {
        return Err(Error::BudgetExceeded {
            name: "N",
            required: n,
            budget: options.budget,
        });
    }
    let (r_action, draw) = match options.tolerance {
        ToleranceRule::Fixed(r) => (r, None),
        ToleranceRule::Drawn => {
            let d = draw_tolerance(rng, 0.0, eps / (5.0 * m.horizon() as f64))?;
            (d.value, Some(d))
        }
    };
    let n = n as u64;
    let m_hat = gen.empirical_model(n)?;
    Ok(GenerativeOutcome {
        policy: robust_plan(&m_hat, r_action)?,
        samples_per_pair: n,
        eps0,
        r_action,
        r_action_draw: draw,
    })
}
