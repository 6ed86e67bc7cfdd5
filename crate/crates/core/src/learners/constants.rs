use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::check_unit_open;

/// Which online learner the constants are for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Strong,
    Weak,
}

/// `Paper` uses the analysis formulas verbatim; `Scaled` replaces any of
/// them with explicit overrides so runs fit a desk budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstantsMode {
    Paper,
    Scaled,
}

/// Instance dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
}

/// Optional replacements used in scaled mode. Anything left unset is
/// derived from the fields that are set, using the same formulas as paper
/// mode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantOverrides {
    pub c1: Option<f64>,
    pub eps0: Option<f64>,
    pub eps1: Option<f64>,
    pub eta0: Option<f64>,
    pub w: Option<u64>,
}

/// Unrounded formula values, kept for the report in either mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FormulaValues {
    pub c1: f64,
    pub eps0: f64,
    pub eps1: f64,
    /// Strong learner only.
    pub eta0: Option<f64>,
    /// Episodes per batch before rounding up.
    pub w: f64,
}

/// Every derived constant of one learner configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlgorithmConstants {
    pub algorithm: Algorithm,
    pub mode: ConstantsMode,
    pub shape: Shape,
    pub eps: f64,
    pub delta: f64,
    pub c1: f64,
    pub eps0: f64,
    pub eps1: f64,
    pub eta0: Option<f64>,
    /// Episodes per batch.
    pub w: u64,
    /// Formula values for the target `(ε, δ)`, independent of overrides.
    pub paper: FormulaValues,
    /// Interval `r_action` is drawn from.
    pub r_action_interval: (f64, f64),
    /// Interval `r_trunc` is drawn from.
    pub r_trunc_interval: (f64, f64),
}

/// Formula values for `algo`; fields set in `over` replace the
/// corresponding formula and feed into the ones derived after it.
pub fn formula_values(
    algo: Algorithm,
    shape: Shape,
    eps: f64,
    delta: f64,
    over: &ConstantOverrides,
) -> FormulaValues {
    let s = shape.num_states as f64;
    let a = shape.num_actions as f64;
    let h = shape.horizon as f64;
    match algo {
        Algorithm::Strong => {
            let c1 = over.c1.unwrap_or(8.0 * a * s * s * h * h / delta);
            let eps0 = over
                .eps0
                .unwrap_or(eps * delta / (1440.0 * s * s * s * h.powi(7) * a));
            let eps1 = over.eps1.unwrap_or(5.0 * c1 * h * h * eps0);
            let eta0 = over.eta0.unwrap_or(3.0 * eps1 * h);
            let w = s * s * (8.0 * h * s * s * a / delta).ln() / (eps0 * eps0 * eta0);
            FormulaValues {
                c1,
                eps0,
                eps1,
                eta0: Some(eta0),
                w,
            }
        }
        Algorithm::Weak => {
            let c1 = over.c1.unwrap_or(4.0 * a * s * h / delta);
            let eps0 = over
                .eps0
                .unwrap_or(eps * delta / (100.0 * s * h.powi(5) * a));
            let eps1 = over.eps1.unwrap_or(5.0 * c1 * h * h * eps0);
            let w = s * s / (eps0 * eps0 * eps1) * (16.0 * s * s * a * h / delta).ln();
            FormulaValues {
                c1,
                eps0,
                eps1,
                eta0: None,
                w,
            }
        }
    }
}

/// Derives the constants for `algo` on `shape` at target `(eps, delta)`.
///
/// Paper mode ignores `overrides`. Either mode fails with a budget error
/// naming `W` when the episode count per batch exceeds `budget`.
pub fn derive_constants(
    shape: Shape,
    eps: f64,
    delta: f64,
    algo: Algorithm,
    mode: ConstantsMode,
    overrides: &ConstantOverrides,
    budget: u64,
) -> Result<AlgorithmConstants> {
    check_unit_open("eps", eps)?;
    check_unit_open("delta", delta)?;
    if shape.num_states == 0 || shape.num_actions == 0 || shape.horizon == 0 {
        return Err(Error::InvalidParameter("shape dimensions must be positive".into()));
    }
    let paper = formula_values(algo, shape, eps, delta, &ConstantOverrides::default());
    let active = match mode {
        ConstantsMode::Paper => paper,
        ConstantsMode::Scaled => formula_values(algo, shape, eps, delta, overrides),
    };
    for (name, v) in [("c1", active.c1), ("eps0", active.eps0), ("eps1", active.eps1)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
        }
    }
    if let Some(eta0) = active.eta0 {
        if !(eta0 > 0.0 && eta0.is_finite()) {
            return Err(Error::InvalidParameter(format!("eta0 must be positive, got {eta0}")));
        }
    }
    let w_needed = match (mode, overrides.w) {
        (ConstantsMode::Scaled, Some(w)) => w as f64,
        _ => active.w.ceil(),
    };
    if !(w_needed <= budget as f64) {
        return Err(Error::BudgetExceeded {
            name: "W",
            required: w_needed,
            budget,
        });
    }
    let w = (w_needed as u64).max(1);
    let (r_action_interval, r_trunc_interval) = match algo {
        Algorithm::Strong => {
            let eta0 = active.eta0.expect("strong constants carry eta0");
            ((active.eps1, 2.0 * active.eps1), (3.0 * eta0, 6.0 * eta0))
        }
        Algorithm::Weak => (
            (active.eps1, 2.0 * active.eps1),
            (2.0 * active.eps1, 3.0 * active.eps1),
        ),
    };
    Ok(AlgorithmConstants {
        algorithm: algo,
        mode,
        shape,
        eps,
        delta,
        c1: active.c1,
        eps0: active.eps0,
        eps1: active.eps1,
        eta0: active.eta0,
        w,
        paper,
        r_action_interval,
        r_trunc_interval,
    })
}

impl AlgorithmConstants {
    /// Suboptimality these constants certify when the learner's good event
    /// holds: planning error `2 H² ε₀ + r_action H` at the largest
    /// `r_action`, plus truncation loss `H² |S| r_trunc` at the largest
    /// `r_trunc`.
    pub fn implied_epsilon(&self) -> f64 {
        let h = self.shape.horizon as f64;
        let s = self.shape.num_states as f64;
        2.0 * h * h * self.eps0 + self.r_action_interval.1 * h + h * h * s * self.r_trunc_interval.1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SHAPE: Shape = Shape {
        num_states: 2,
        num_actions: 2,
        horizon: 2,
    };

    #[test]
    fn strong_paper_values() {
        let c = derive_constants(
            SHAPE,
            0.1,
            0.1,
            Algorithm::Strong,
            ConstantsMode::Paper,
            &ConstantOverrides::default(),
            u64::MAX,
        );
        // W is astronomically large even on this shape.
        assert!(matches!(c, Err(Error::BudgetExceeded { name: "W", .. })));
        let c = derive_constants(
            SHAPE,
            0.1,
            0.1,
            Algorithm::Strong,
            ConstantsMode::Scaled,
            &ConstantOverrides {
                w: Some(10),
                ..Default::default()
            },
            u64::MAX,
        )
        .unwrap();
        assert!((c.paper.c1 - 2560.0).abs() < 1e-9);
        assert!((c.paper.eps0 - 0.01 / 2_949_120.0).abs() < 1e-20);
        assert_eq!(c.paper.c1, c.c1);
    }

    #[test]
    fn scaled_overrides_are_echoed() {
        let c = derive_constants(
            SHAPE,
            0.1,
            0.1,
            Algorithm::Weak,
            ConstantsMode::Scaled,
            &ConstantOverrides {
                eps0: Some(0.05),
                w: Some(200),
                ..Default::default()
            },
            1_000,
        )
        .unwrap();
        assert_eq!(c.eps0, 0.05);
        assert_eq!(c.w, 200);
        assert_eq!(c.eps1, 5.0 * c.c1 * 4.0 * 0.05);
    }

    #[test]
    fn rejects_degenerate_targets() {
        let r = derive_constants(
            SHAPE,
            0.1,
            0.0,
            Algorithm::Weak,
            ConstantsMode::Paper,
            &ConstantOverrides::default(),
            u64::MAX,
        );
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
    }
}
