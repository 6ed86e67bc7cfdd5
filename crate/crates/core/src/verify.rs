//! Property battery over seeded random instances.
//!
//! Each check draws its own small models from a child seed of the master
//! seed, compares library results against brute-force oracles or proven
//! inequalities, and counts violations. The CLI `verify` command and the
//! acceptance suite both run this battery.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{BOUNDARY_PROBE, DEFAULT_ENUMERATION_CAP, ORACLE_TOLERANCE};
use crate::dp::{backward_dp, evaluate_policy, max_occupancy, max_occupancy_at, policy_value};
use crate::envs::make_random;
use crate::error::{Error, Result};
use crate::harness::child_seed;
use crate::mdp::{Policy, TabularMdp, ValueTables};
use crate::oracle::{
    brute_max_occupancy, brute_optimal_value, brute_truncation_profile, critical_thresholds,
};
use crate::perturb::perturb;
use crate::planner::{bad_action_set, robust_plan_from_values, suboptimality_bound};
use crate::truncation::{
    count_distinct_profiles, profile, truncate, truncated_max_occupancy, ProfileFlavor,
};

/// Deliberate defects used as negative controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// The planner under test keeps actions whose value is at most
    /// `V - r` instead of at least.
    FlippedTolerance,
}

/// Every check in the battery, in run order.
pub const CHECKS: [(&str, &str); 12] = [
    ("oracle-optimal-value", "backward induction matches exhaustive policy search"),
    ("oracle-max-occupancy", "max occupancy matches exhaustive policy search"),
    ("suboptimality-bound", "robust plan on a related model loses at most 2H²ε₀ + rH"),
    ("plan-stability", "robust plans agree across related models off the bad set"),
    ("plan-list-size", "robust plans over an r grid number at most |S||A|H + 1"),
    ("profile-monotone", "truncation sets grow with r"),
    ("profile-count", "an r grid yields at most |S|H + 1 distinct profiles"),
    ("crit-boundary", "membership flips at the critical threshold"),
    ("occupancy-monotone", "truncated max occupancy does not increase with r"),
    ("membership-identity", "DP profile equals the joint-event oracle"),
    ("crit-bounds", "truncated max occupancy is pinned by the critical threshold"),
    ("perturbation-bounds", "value changes under related models and truncation stay within bounds"),
];

/// Instance counts per check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BatteryScale {
    pub oracle_models: usize,
    pub suboptimality_pairs: usize,
    pub stability_models: usize,
    pub stability_perturbations: usize,
    pub stability_grid: usize,
    pub truncation_models: usize,
    pub profile_grid: usize,
    pub perturbation_triples: usize,
}

impl Default for BatteryScale {
    fn default() -> Self {
        Self {
            oracle_models: 200,
            suboptimality_pairs: 1_000,
            stability_models: 50,
            stability_perturbations: 20,
            stability_grid: 100,
            truncation_models: 100,
            profile_grid: 10_000,
            perturbation_triples: 1_000,
        }
    }
}

impl BatteryScale {
    /// Every model count replaced by `n`; grids and repetition counts keep
    /// their defaults.
    pub fn with_instances(n: usize) -> Self {
        Self {
            oracle_models: n,
            suboptimality_pairs: n,
            stability_models: n,
            truncation_models: n,
            perturbation_triples: n,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct VerifyConfig {
    pub seed: u64,
    pub scale: BatteryScale,
    /// Names of the checks to run; empty runs all.
    pub only: Vec<String>,
    pub fault: Option<Fault>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub description: String,
    pub cases: usize,
    pub violations: usize,
    pub first_violation: Option<String>,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub fault: Option<Fault>,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }
}

/// Tally of one check: `(cases, violations, first message)`.
#[derive(Default)]
struct Tally {
    cases: usize,
    violations: usize,
    first: Option<String>,
}

impl Tally {
    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok {
            self.violations += 1;
            if self.first.is_none() {
                self.first = Some(msg());
            }
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        self.cases += other.cases;
        self.violations += other.violations;
        if self.first.is_none() {
            self.first = other.first;
        }
        self
    }
}

/// A random model small enough for exhaustive enumeration: at most
/// `max_policies` deterministic policies.
pub fn random_small_mdp<R: Rng + ?Sized>(rng: &mut R, max_policies: f64) -> TabularMdp {
    loop {
        let s = rng.random_range(1..=4usize);
        let a = rng.random_range(1..=3usize);
        let h = rng.random_range(1..=4usize);
        if (a as f64).powi((s * h) as i32) > max_policies {
            continue;
        }
        let support = [1.0, 0.5, 0.34][rng.random_range(0..3)];
        return make_random(s, a, h, rng.random(), support).expect("valid random shape");
    }
}

fn random_policy<R: Rng + ?Sized>(rng: &mut R, m: &TabularMdp) -> Policy {
    let actions = (0..m.horizon() * m.num_states())
        .map(|_| rng.random_range(0..m.num_actions()))
        .collect();
    Policy::new(m.horizon(), m.num_states(), m.num_actions(), actions).expect("valid actions")
}

/// Planner under test: the library planner, or a defective one.
fn plan(vt: &ValueTables, r: f64, fault: Option<Fault>) -> Result<Policy> {
    match fault {
        None => robust_plan_from_values(vt, r),
        Some(Fault::FlippedTolerance) => {
            let (hz, ns, na) = (vt.horizon(), vt.num_states(), vt.num_actions());
            let mut pi = Policy::constant(hz, ns, 0);
            for h in 0..hz {
                for s in 0..ns {
                    let v = vt.v(h, s);
                    let a = (0..na)
                        .find(|&a| vt.q(h, s, a) <= v - r)
                        .unwrap_or_else(|| {
                            (0..na)
                                .min_by(|&x, &y| vt.q(h, s, x).total_cmp(&vt.q(h, s, y)))
                                .unwrap_or(0)
                        });
                    pi.set_action(h, s, a);
                }
            }
            Ok(pi)
        }
    }
}

/// Runs `body` once per instance index in parallel with a per-instance rng.
fn per_instance(
    seed: u64,
    salt: u64,
    count: usize,
    body: impl Fn(&mut ChaCha8Rng, &mut Tally) -> Result<()> + Sync,
) -> Result<Tally> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed ^ salt, i));
            let mut t = Tally::default();
            body(&mut rng, &mut t)?;
            Ok(t)
        })
        .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))
}

/// Grid of `n` points evenly covering `[lo, hi]`.
fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

const SMALL: f64 = 4096.0;

fn run_check(name: &str, cfg: &VerifyConfig) -> Result<Tally> {
    let sc = &cfg.scale;
    let seed = cfg.seed;
    let fault = cfg.fault;
    let salt = CHECKS.iter().position(|c| c.0 == name).unwrap_or(0) as u64 * 0x9E37_79B9;
    match name {
        "oracle-optimal-value" => per_instance(seed, salt, sc.oracle_models, |rng, t| {
            let m = random_small_mdp(rng, SMALL);
            let (brute, _) = brute_optimal_value(&m, DEFAULT_ENUMERATION_CAP)?;
            let dp = backward_dp(&m).initial_value();
            t.check((brute - dp).abs() <= ORACLE_TOLERANCE, || {
                format!("dp {dp} vs enumeration {brute} on {}", m.shape_string())
            });
            Ok(())
        }),
        "oracle-max-occupancy" => per_instance(seed, salt, sc.oracle_models, |rng, t| {
            let m = random_small_mdp(rng, SMALL);
            let brute = brute_max_occupancy(&m, DEFAULT_ENUMERATION_CAP)?;
            let dp = max_occupancy(&m);
            let worst = brute
                .d
                .iter()
                .zip(&dp.d)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            t.check(worst <= ORACLE_TOLERANCE, || {
                format!("occupancy differs by {worst} on {}", m.shape_string())
            });
            Ok(())
        }),
        "suboptimality-bound" => per_instance(seed, salt, sc.suboptimality_pairs, |rng, t| {
            let m = random_small_mdp(rng, f64::INFINITY);
            let eps0 = rng.random_range(0.0..0.1);
            let r = rng.random_range(0.0..=0.5);
            let m_hat = perturb(&m, eps0, rng)?;
            let pi = plan(&backward_dp(&m_hat), r, fault)?;
            let loss = backward_dp(&m).initial_value() - policy_value(&m, &pi)?;
            let bound = suboptimality_bound(m.horizon(), eps0, r);
            t.check(loss <= bound + ORACLE_TOLERANCE, || {
                format!("loss {loss} > bound {bound} (eps0 {eps0}, r {r})")
            });
            Ok(())
        }),
        "plan-stability" | "plan-list-size" => {
            let list = name == "plan-list-size";
            per_instance(seed, salt, sc.stability_models, |rng, t| {
                let m = random_small_mdp(rng, f64::INFINITY);
                let eps0 = 10f64.powf(rng.random_range(-5.0..-3.0));
                let bad = bad_action_set(&m, eps0)?;
                let top = crate::oracle::gap_set(&m).max().max(0.1) * 1.2;
                let points: Vec<f64> = grid(0.0, top, sc.stability_grid)
                    .into_iter()
                    .filter(|&r| !bad.contains(r))
                    .collect();
                let models: Vec<ValueTables> = (0..sc.stability_perturbations)
                    .map(|_| perturb(&m, eps0, rng).map(|p| backward_dp(&p)))
                    .collect::<Result<_>>()?;
                if list {
                    let mut seen = std::collections::BTreeSet::new();
                    for &r in &points {
                        seen.insert(plan(&models[0], r, fault)?);
                    }
                    let bound = m.num_states() * m.num_actions() * m.horizon() + 1;
                    t.check(seen.len() <= bound, || {
                        format!("{} policies > {bound} on {}", seen.len(), m.shape_string())
                    });
                } else {
                    for &r in &points {
                        let first = plan(&models[0], r, fault)?;
                        let mut same = true;
                        for vt in &models[1..] {
                            same &= plan(vt, r, fault)? == first;
                        }
                        t.check(same, || format!("plans differ at r = {r} (eps0 {eps0})"));
                    }
                }
                Ok(())
            })
        }
        "profile-monotone" => per_instance(seed, salt, sc.truncation_models, |rng, t| {
            let m = random_small_mdp(rng, f64::INFINITY);
            for _ in 0..100 {
                let (a, b) = (rng.random::<f64>(), rng.random::<f64>());
                let (r1, r2) = (a.min(b), a.max(b));
                for flavor in [ProfileFlavor::Strong, ProfileFlavor::Weak] {
                    let (p1, p2) = (profile(&m, r1, flavor)?, profile(&m, r2, flavor)?);
                    t.check(p1.is_subset_of(&p2), || {
                        format!("{flavor:?} profile at {r1} not inside profile at {r2}")
                    });
                }
            }
            Ok(())
        }),
        "profile-count" => per_instance(seed, salt, sc.truncation_models, |rng, t| {
            let m = random_small_mdp(rng, f64::INFINITY);
            let g = grid(0.0, 1.0, sc.profile_grid);
            let bound = m.num_states() * m.horizon() + 1;
            for flavor in [ProfileFlavor::Strong, ProfileFlavor::Weak] {
                let n = count_distinct_profiles(&m, &g, flavor)?.distinct();
                t.check(n <= bound, || format!("{flavor:?}: {n} profiles > {bound}"));
            }
            Ok(())
        }),
        "crit-boundary" => per_instance(seed, salt, sc.truncation_models, |rng, t| {
            let m = random_small_mdp(rng, f64::INFINITY);
            for flavor in [ProfileFlavor::Strong, ProfileFlavor::Weak] {
                let crit = critical_thresholds(&m, flavor)?;
                for h in 0..m.horizon() {
                    for s in 0..m.num_states() {
                        let c = crit.get(s, h);
                        let (lo, hi) = (c - BOUNDARY_PROBE, c + BOUNDARY_PROBE);
                        if lo > 0.0 && hi < 1.0 {
                            let inside = profile(&m, hi, flavor)?.contains(h, s);
                            let outside = !profile(&m, lo, flavor)?.contains(h, s);
                            t.check(inside && outside, || {
                                format!("{flavor:?} ({s},{h}) crit {c}: in {inside} out {outside}")
                            });
                        }
                    }
                }
            }
            Ok(())
        }),
        "occupancy-monotone" => per_instance(seed, salt, sc.truncation_models, |rng, t| {
            let m = random_small_mdp(rng, f64::INFINITY);
            let g = grid(0.0, 1.0, 101);
            for h in 0..m.horizon() {
                for s in 0..m.num_states() {
                    let mut prev = f64::INFINITY;
                    for &r in &g {
                        let d = truncated_max_occupancy(&m, r, s, h)?;
                        t.check(d <= prev + ORACLE_TOLERANCE, || {
                            format!("({s},{h}) occupancy rose to {d} at r = {r}")
                        });
                        prev = d;
                    }
                }
            }
            Ok(())
        }),
        "membership-identity" => per_instance(seed, salt, sc.truncation_models, |rng, t| {
            let m = random_small_mdp(rng, SMALL);
            for _ in 0..10 {
                let r = rng.random::<f64>();
                let dp = profile(&m, r, ProfileFlavor::Strong)?;
                let brute = brute_truncation_profile(&m, r, DEFAULT_ENUMERATION_CAP)?;
                t.check(dp.same_sets(&brute), || {
                    format!("r = {r}: dp {} vs oracle {}", dp.key(), brute.key())
                });
                let tm = truncate(&m, &dp)?;
                for h in 0..m.horizon() {
                    for s in 0..m.num_states() {
                        let d = max_occupancy_at(&tm.mdp, s, h);
                        t.check((d <= r) == dp.contains(h, s), || {
                            format!("r = {r}: ({s},{h}) d* {d} disagrees with membership")
                        });
                    }
                }
            }
            Ok(())
        }),
        "crit-bounds" => per_instance(seed, salt, sc.truncation_models, |rng, t| {
            let m = random_small_mdp(rng, f64::INFINITY);
            let crit = critical_thresholds(&m, ProfileFlavor::Strong)?;
            for _ in 0..10 {
                let r = rng.random::<f64>();
                for h in 0..m.horizon() {
                    for s in 0..m.num_states() {
                        let c = crit.get(s, h);
                        let d = truncated_max_occupancy(&m, r, s, h)?;
                        if r > c + BOUNDARY_PROBE {
                            t.check(d <= c + ORACLE_TOLERANCE, || {
                                format!("r {r} > crit {c} but d* {d}")
                            });
                        } else if r < c - BOUNDARY_PROBE {
                            t.check(d >= c - ORACLE_TOLERANCE, || {
                                format!("r {r} < crit {c} but d* {d}")
                            });
                        }
                    }
                }
            }
            Ok(())
        }),
        "perturbation-bounds" => per_instance(seed, salt, sc.perturbation_triples, |rng, t| {
            let m = random_small_mdp(rng, f64::INFINITY);
            let (hz, ns, na) = (m.horizon(), m.num_states(), m.num_actions());
            let h2 = (hz * hz) as f64;
            let eps0 = rng.random_range(0.0..0.2);
            let m2 = perturb(&m, eps0, rng)?;
            let (v1, v2) = (backward_dp(&m), backward_dp(&m2));
            let mut worst = 0.0f64;
            for h in 0..hz {
                for s in 0..ns {
                    worst = worst.max((v1.v(h, s) - v2.v(h, s)).abs());
                    for a in 0..na {
                        worst = worst.max((v1.q(h, s, a) - v2.q(h, s, a)).abs());
                    }
                }
            }
            t.check(worst <= h2 * eps0 + ORACLE_TOLERANCE, || {
                format!("optimal values moved {worst} > H²ε₀ = {}", h2 * eps0)
            });
            let pi = random_policy(rng, &m);
            let (e1, e2) = (evaluate_policy(&m, &pi)?, evaluate_policy(&m2, &pi)?);
            let moved = (e1.initial_value() - e2.initial_value()).abs();
            t.check(moved <= h2 * eps0 + ORACLE_TOLERANCE, || {
                format!("policy value moved {moved} > H²ε₀ = {}", h2 * eps0)
            });
            let r = rng.random::<f64>();
            let bound = h2 * ns as f64 * r;
            for flavor in [ProfileFlavor::Strong, ProfileFlavor::Weak] {
                let tm = truncate(&m, &profile(&m, r, flavor)?)?;
                let loss = e1.initial_value() - policy_value(&tm.mdp, &pi.extend(ns + 1))?;
                t.check(loss >= -ORACLE_TOLERANCE && loss <= bound + ORACLE_TOLERANCE, || {
                    format!("{flavor:?} truncation loss {loss} outside [0, {bound}] at r = {r}")
                });
            }
            Ok(())
        }),
        other => Err(Error::InvalidParameter(format!("unknown check {other:?}"))),
    }
}

/// Runs the selected checks.
pub fn run_battery(cfg: &VerifyConfig) -> Result<VerifyReport> {
    for name in &cfg.only {
        if !CHECKS.iter().any(|c| c.0 == name) {
            return Err(Error::InvalidParameter(format!(
                "unknown check {name:?}; known: {}",
                CHECKS.map(|c| c.0).join(", ")
            )));
        }
    }
    let mut checks = Vec::new();
    for (name, description) in CHECKS {
        if !cfg.only.is_empty() && !cfg.only.iter().any(|o| o == name) {
            continue;
        }
        let t = run_check(name, cfg)?;
        checks.push(CheckResult {
            name: name.to_string(),
            description: description.to_string(),
            cases: t.cases,
            violations: t.violations,
            first_violation: t.first,
        });
    }
    Ok(VerifyReport {
        seed: cfg.seed,
        fault: cfg.fault,
        checks,
    })
}
