//! Built-in environments shared by `gen-env` and `run`.

use clap::ValueEnum;
use listrep::envs::{make_bandit_embedding, make_chain, make_gridworld, make_random};
use listrep::TabularMdp;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    Chain,
    Gridworld,
    Random,
}

/// Parameters of a built-in environment; unset fields take the defaults
/// listed in `--help`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EnvParams {
    pub h: Option<usize>,
    pub delta: Option<f64>,
    pub n: Option<usize>,
    pub adv: Option<f64>,
    pub s: Option<usize>,
    pub a: Option<usize>,
    pub env_seed: Option<u64>,
    pub support: Option<f64>,
}

impl EnvParams {
    /// Rejects parameters that do not belong to `kind`.
    pub fn check_for(&self, kind: EnvKind) -> CliResult<()> {
        let given = [
            ("h", self.h.is_some(), kind != EnvKind::Gridworld),
            ("delta", self.delta.is_some(), kind == EnvKind::Chain),
            ("n", self.n.is_some(), kind == EnvKind::Gridworld),
            ("adv", self.adv.is_some(), kind == EnvKind::Gridworld),
            ("s", self.s.is_some(), kind == EnvKind::Random),
            ("a", self.a.is_some(), kind == EnvKind::Random),
            ("env-seed", self.env_seed.is_some(), kind == EnvKind::Random),
            ("support", self.support.is_some(), kind == EnvKind::Random),
        ];
        match given.iter().find(|(_, set, allowed)| *set && !allowed) {
            Some((name, _, _)) => Err(CliError::config(format!(
                "--{name} does not apply to the {} environment",
                kind.to_possible_value().expect("named").get_name()
            ))),
            None => Ok(()),
        }
    }

    /// Fills every parameter of `kind` with its default.
    pub fn resolved(&self, kind: EnvKind) -> Self {
        match kind {
            EnvKind::Chain => EnvParams {
                h: Some(self.h.unwrap_or(8)),
                delta: Some(self.delta.unwrap_or(0.02)),
                ..Default::default()
            },
            EnvKind::Gridworld => EnvParams {
                n: Some(self.n.unwrap_or(5)),
                adv: Some(self.adv.unwrap_or(0.02)),
                ..Default::default()
            },
            EnvKind::Random => EnvParams {
                h: Some(self.h.unwrap_or(3)),
                s: Some(self.s.unwrap_or(4)),
                a: Some(self.a.unwrap_or(2)),
                env_seed: Some(self.env_seed.unwrap_or(0)),
                support: Some(self.support.unwrap_or(1.0)),
                ..Default::default()
            },
        }
    }

    pub fn build(&self, kind: EnvKind) -> CliResult<TabularMdp> {
        self.check_for(kind)?;
        let p = self.resolved(kind);
        let m = match kind {
            EnvKind::Chain => make_chain(p.h.unwrap(), p.delta.unwrap())?,
            EnvKind::Gridworld => make_gridworld(p.n.unwrap(), p.adv.unwrap())?,
            EnvKind::Random => make_random(
                p.s.unwrap(),
                p.a.unwrap(),
                p.h.unwrap(),
                p.env_seed.unwrap(),
                p.support.unwrap(),
            )?,
        };
        Ok(m)
    }
}

pub fn build_bandit(means: &[f64], z: usize, m: usize, n: usize) -> CliResult<TabularMdp> {
    if means.len() != z * m * n {
        return Err(CliError::config(format!(
            "--means needs z*m*n = {} values, got {}",
            z * m * n,
            means.len()
        )));
    }
    Ok(make_bandit_embedding(means, z, m, n)?)
}
