//! The `run` command: option merging, validation, dispatch and report files.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use listrep::config::DEFAULT_SAMPLE_BUDGET;
use listrep::dp::backward_dp;
use listrep::harness::{
    render_svg, run_replicated, sweep, sweep_csv, BlackboxSpec, CanonicalMode, LearnerSpec,
    Parallelism, SweepRow,
};
use listrep::learners::{
    derive_constants, Algorithm, ConstantOverrides, ConstantsMode, LearnerOptions, Shape,
};
use listrep::TabularMdp;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::envspec::{EnvKind, EnvParams};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    /// Estimate every pair from `--samples` draws, then plan at a fixed tolerance.
    RobustPlan,
    /// Robust planning at zero tolerance.
    #[value(alias = "greedy-baseline")]
    #[serde(alias = "greedy-baseline")]
    Greedy,
    /// Generative-model learner with a drawn tolerance.
    Generative,
    /// Weakly list-replicable episodic learner.
    Weak,
    /// Strongly list-replicable episodic learner.
    Strong,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Constants exactly as the analysis prescribes (usually over budget).
    Paper,
    /// Desk-scale constants; any of --c1/--eps0/--eps1/--eta0/--w override
    /// the defaults 1, 0.02, 0.01, 0.005, 2000.
    Scaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Blackbox {
    Generative,
    Adversarial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Canonical {
    FullTable,
    Rollout,
}

impl From<Canonical> for CanonicalMode {
    fn from(c: Canonical) -> Self {
        match c {
            Canonical::FullTable => CanonicalMode::FullTable,
            Canonical::Rollout => CanonicalMode::Rollout,
        }
    }
}

/// Options of `run`. Every option can also be set in a TOML file passed
/// with `--config` (same names, kebab-case); flags on the command line win.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunArgs {
    /// TOML file with run options.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Learner to replicate.
    #[arg(long, value_enum)]
    pub algo: Option<Algo>,
    /// Built-in environment [default: random, or the file given by --mdp].
    #[arg(long, value_enum)]
    pub env: Option<EnvKind>,
    /// Model file instead of a built-in environment.
    #[arg(long, conflicts_with = "env")]
    pub mdp: Option<PathBuf>,

    /// Decision levels (chain, default 8) or horizon (random, default 3).
    #[arg(long)]
    pub h: Option<usize>,
    /// Chain advantage of action 0 [default: 0.02].
    #[arg(long)]
    pub delta: Option<f64>,
    /// GridWorld side length [default: 5].
    #[arg(long)]
    pub n: Option<usize>,
    /// GridWorld advantage of the good move [default: 0.02].
    #[arg(long)]
    pub adv: Option<f64>,
    /// Random model: number of states [default: 4].
    #[arg(long)]
    pub s: Option<usize>,
    /// Random model: number of actions [default: 2].
    #[arg(long)]
    pub a: Option<usize>,
    /// Random model: generator seed [default: 0].
    #[arg(long)]
    pub env_seed: Option<u64>,
    /// Random model: fraction of states in each row's support [default: 1].
    #[arg(long)]
    pub support: Option<f64>,

    /// Runs per tolerance value [default: 100].
    #[arg(long)]
    pub runs: Option<usize>,
    /// Master seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Pin the action tolerance (robust-plan defaults to 0).
    #[arg(long, conflicts_with = "r_values")]
    pub r_action: Option<f64>,
    /// Sweep the action tolerance over these values (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub r_values: Option<Vec<f64>>,
    /// Pin the truncation threshold (weak and strong learners).
    #[arg(long)]
    pub r_trunc: Option<f64>,
    /// Generative samples per (h, s, a) [default: 40 for robust-plan and
    /// greedy; the Hoeffding formula for generative].
    #[arg(long)]
    pub samples: Option<u64>,

    /// Target accuracy of generative, weak and strong [default: 0.5].
    #[arg(long)]
    pub target_eps: Option<f64>,
    /// Target failure probability of generative, weak and strong [default: 0.1].
    #[arg(long)]
    pub target_delta: Option<f64>,
    /// Constants for weak and strong [default: scaled].
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub c1: Option<f64>,
    #[arg(long)]
    pub eps0: Option<f64>,
    #[arg(long)]
    pub eps1: Option<f64>,
    /// Strong learner only.
    #[arg(long)]
    pub eta0: Option<f64>,
    /// Episodes per batch.
    #[arg(long)]
    pub w: Option<u64>,
    /// Largest sample count a single batch or estimate may request.
    #[arg(long)]
    pub budget: Option<u64>,
    /// Black box of the weak learner [default: generative].
    #[arg(long, value_enum)]
    pub blackbox: Option<Blackbox>,
    /// Samples per pair for the generative black box [default: 200 in
    /// scaled mode, the Hoeffding formula in paper mode].
    #[arg(long)]
    pub blackbox_samples: Option<u64>,

    /// How returned policies are compared [default: full-table].
    #[arg(long, value_enum)]
    pub canonical: Option<Canonical>,
    /// Worker threads [default: logical cores].
    #[arg(long)]
    #[serde(skip_serializing)]
    pub jobs: Option<usize>,
    /// Output root; each invocation writes a fresh timestamped subdirectory.
    #[arg(long, env = "LISTREP_OUT")]
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    /// Write into exactly this directory instead.
    #[arg(long)]
    #[serde(skip_serializing)]
    pub output_dir: Option<PathBuf>,
}

macro_rules! prefer {
    ($top:ident, $base:ident; $($f:ident),*) => {
        RunArgs { config: None, $($f: $top.$f.or($base.$f)),* }
    };
}

impl RunArgs {
    /// Fields set here win over `base`.
    fn over(self, base: RunArgs) -> RunArgs {
        let top = self;
        prefer!(top, base; algo, env, mdp, h, delta, n, adv, s, a, env_seed, support, runs, seed,
            r_action, r_values, r_trunc, samples, target_eps, target_delta, mode, c1, eps0, eps1,
            eta0, w, budget, blackbox, blackbox_samples, canonical, jobs, out, output_dir)
    }

    fn env_params(&self) -> EnvParams {
        EnvParams {
            h: self.h,
            delta: self.delta,
            n: self.n,
            adv: self.adv,
            s: self.s,
            a: self.a,
            env_seed: self.env_seed,
            support: self.support,
        }
    }

    fn overrides(&self) -> ConstantOverrides {
        ConstantOverrides {
            c1: self.c1,
            eps0: self.eps0,
            eps1: self.eps1,
            eta0: self.eta0,
            w: self.w,
        }
    }
}

fn load_config(path: &Path) -> CliResult<RunArgs> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// A fully validated run, ready to execute.
struct Plan {
    args: RunArgs,
    model: TabularMdp,
    env_label: String,
    spec: LearnerSpec,
    r_values: Option<Vec<f64>>,
    runs: usize,
    seed: u64,
    canonical: CanonicalMode,
}

fn reject(cond: bool, msg: &str) -> CliResult<()> {
    if cond {
        Err(CliError::config(msg))
    } else {
        Ok(())
    }
}

fn prepare(args: RunArgs) -> CliResult<Plan> {
    let args = match &args.config {
        Some(path) => {
            let file = load_config(path)?;
            args.over(file)
        }
        None => args,
    };
    let algo = args
        .algo
        .ok_or_else(|| CliError::config("--algo is required (flag or config file)"))?;

    let (model, env_label, mut args) = match &args.mdp {
        Some(path) => {
            reject(args.env_params() != EnvParams::default(), "environment parameters conflict with --mdp")?;
            (TabularMdp::load(path)?, format!("file {}", path.display()), args)
        }
        None => {
            let kind = args.env.unwrap_or(EnvKind::Random);
            let params = args.env_params();
            let model = params.build(kind)?;
            let p = params.resolved(kind);
            let mut a = args.clone();
            (a.env, a.h, a.delta, a.n, a.adv) = (Some(kind), p.h, p.delta, p.n, p.adv);
            (a.s, a.a, a.env_seed, a.support) = (p.s, p.a, p.env_seed, p.support);
            let name = kind.to_possible_value().expect("named").get_name().to_string();
            (model, name, a)
        }
    };

    let runs = *args.runs.get_or_insert(100);
    let seed = *args.seed.get_or_insert(0);
    reject(runs == 0, "--runs must be at least 1")?;
    reject(args.jobs == Some(0), "--jobs must be at least 1")?;
    if let Some(rs) = &args.r_values {
        reject(rs.is_empty(), "--r-values needs at least one value")?;
        reject(rs.iter().any(|r| !(*r >= 0.0 && r.is_finite())), "--r-values must be finite and >= 0")?;
    }
    if let Some(r) = args.r_action {
        reject(!(r >= 0.0 && r.is_finite()), "--r-action must be finite and >= 0")?;
    }
    let canonical: CanonicalMode = args.canonical.get_or_insert(Canonical::FullTable).to_owned().into();

    let episodic = matches!(algo, Algo::Weak | Algo::Strong);
    let targeted = episodic || algo == Algo::Generative;
    let constant_flags = args.overrides() != ConstantOverrides::default();
    reject(!episodic && (args.mode.is_some() || constant_flags), "--mode and constant overrides apply to weak and strong only")?;
    reject(!episodic && args.r_trunc.is_some(), "--r-trunc applies to weak and strong only")?;
    reject(!targeted && (args.target_eps.is_some() || args.target_delta.is_some()), "--target-eps/--target-delta apply to generative, weak and strong only")?;
    reject(algo != Algo::Weak && (args.blackbox.is_some() || args.blackbox_samples.is_some()), "--blackbox options apply to the weak learner only")?;
    reject(episodic && args.samples.is_some(), "--samples does not apply to weak and strong; use --w")?;
    reject(algo == Algo::Greedy && args.r_action.is_some(), "greedy plans at r = 0; use robust-plan to pin a tolerance")?;
    reject(algo != Algo::Strong && args.eta0.is_some(), "--eta0 applies to the strong learner only")?;
    reject(args.blackbox == Some(Blackbox::Adversarial) && args.blackbox_samples.is_some(), "--blackbox-samples needs the generative black box")?;

    let budget = *args.budget.get_or_insert(DEFAULT_SAMPLE_BUDGET);
    let spec = match algo {
        Algo::RobustPlan => LearnerSpec::RobustPlan {
            samples: *args.samples.get_or_insert(40),
            r_action: *args.r_action.get_or_insert(0.0),
        },
        Algo::Greedy => LearnerSpec::Greedy {
            samples: *args.samples.get_or_insert(40),
        },
        Algo::Generative => LearnerSpec::Generative {
            eps: *args.target_eps.get_or_insert(0.5),
            delta: *args.target_delta.get_or_insert(0.1),
            samples: args.samples,
            budget,
            r_action: args.r_action,
        },
        Algo::Weak | Algo::Strong => {
            let algorithm = if algo == Algo::Weak { Algorithm::Weak } else { Algorithm::Strong };
            let mode = *args.mode.get_or_insert(Mode::Scaled);
            reject(mode == Mode::Paper && constant_flags, "constant overrides need --mode scaled")?;
            let overrides = match mode {
                Mode::Paper => ConstantOverrides::default(),
                Mode::Scaled => {
                    let o = args.overrides();
                    ConstantOverrides {
                        c1: Some(o.c1.unwrap_or(1.0)),
                        eps0: Some(o.eps0.unwrap_or(0.02)),
                        eps1: Some(o.eps1.unwrap_or(0.01)),
                        eta0: (algorithm == Algorithm::Strong).then(|| o.eta0.unwrap_or(0.005)),
                        w: Some(o.w.unwrap_or(2_000)),
                    }
                }
            };
            let shape = Shape {
                num_states: model.num_states(),
                num_actions: model.num_actions(),
                horizon: model.horizon(),
            };
            let constants = derive_constants(
                shape,
                *args.target_eps.get_or_insert(0.5),
                *args.target_delta.get_or_insert(0.1),
                algorithm,
                match mode {
                    Mode::Paper => ConstantsMode::Paper,
                    Mode::Scaled => ConstantsMode::Scaled,
                },
                &overrides,
                budget,
            )?;
            (args.c1, args.eps0, args.eps1, args.eta0, args.w) = (
                Some(constants.c1),
                Some(constants.eps0),
                Some(constants.eps1),
                constants.eta0,
                Some(constants.w),
            );
            let options = LearnerOptions {
                r_action: args.r_action,
                r_trunc: args.r_trunc,
            };
            if algorithm == Algorithm::Weak {
                let blackbox = match *args.blackbox.get_or_insert(Blackbox::Generative) {
                    Blackbox::Generative => BlackboxSpec::Generative {
                        samples: match mode {
                            Mode::Scaled => Some(*args.blackbox_samples.get_or_insert(200)),
                            Mode::Paper => args.blackbox_samples,
                        },
                    },
                    Blackbox::Adversarial => BlackboxSpec::Adversarial,
                };
                LearnerSpec::Weak {
                    constants,
                    blackbox,
                    options,
                }
            } else {
                LearnerSpec::Strong { constants, options }
            }
        }
    };
    let r_values = match (&args.r_values, algo) {
        (Some(rs), _) => Some(rs.clone()),
        (None, Algo::RobustPlan) => Some(vec![args.r_action.unwrap_or(0.0)]),
        (None, Algo::Greedy) => Some(vec![0.0]),
        (None, _) => args.r_action.map(|r| vec![r]),
    };
    Ok(Plan {
        args,
        model,
        env_label,
        spec,
        r_values,
        runs,
        seed,
        canonical,
    })
}

fn output_dir(args: &RunArgs, seed: u64) -> CliResult<PathBuf> {
    if let Some(dir) = &args.output_dir {
        return Ok(dir.clone());
    }
    let root = args.out.clone().unwrap_or_else(|| PathBuf::from("listrep-out"));
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let base = format!("{stamp}-seed{seed}");
    let mut dir = root.join(&base);
    let mut k = 1;
    while dir.exists() {
        dir = root.join(format!("{base}-{k}"));
        k += 1;
    }
    Ok(dir)
}

fn write(dir: &Path, name: &str, contents: &str) -> CliResult<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

pub fn cmd_run(args: RunArgs) -> CliResult<()> {
    let plan = prepare(args)?;
    let par = Parallelism {
        jobs: plan.args.jobs,
    };
    let rows = match &plan.r_values {
        Some(rs) => sweep(&plan.spec, &plan.model, rs, plan.runs, plan.seed, plan.canonical, par)?,
        None => vec![SweepRow {
            r_value: None,
            report: run_replicated(&plan.spec, &plan.model, plan.runs, plan.seed, plan.canonical, par)?,
        }],
    };

    let dir = output_dir(&plan.args, plan.seed)?;
    fs::create_dir_all(&dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
    let csv = sweep_csv(&rows)?;
    let title = format!("{} on {}: distinct outputs vs r", plan.spec.label(), plan.env_label);
    let runs: Vec<_> = rows
        .iter()
        .flat_map(|row| {
            row.report.records.iter().map(move |rec| {
                json!({
                    "r_value": row.r_value,
                    "index": rec.index,
                    "seed": rec.seed,
                    "r_action": rec.r_action,
                    "r_trunc": rec.r_trunc,
                    "diagnostics_flagged": rec.diagnostics_flagged,
                    "policy": rec.policy_key,
                    "trace": rec.trace_key,
                })
            })
        })
        .collect();
    let manifest = json!({
        "tool": "listrep",
        "version": env!("CARGO_PKG_VERSION"),
        "command": "run",
        "config": plan.args,
        "environment": {
            "label": plan.env_label,
            "num_states": plan.model.num_states(),
            "num_actions": plan.model.num_actions(),
            "horizon": plan.model.horizon(),
            "optimal_value": backward_dp(&plan.model).initial_value(),
        },
        "learner": plan.spec,
        "canonical": plan.canonical,
        "files": ["manifest.json", "report.csv", "report.json", "chart.svg"],
        "runs": runs,
    });
    write(&dir, "manifest.json", &pretty(&manifest)?)?;
    write(&dir, "report.csv", &csv)?;
    write(&dir, "report.json", &pretty(&rows)?)?;
    write(&dir, "chart.svg", &render_svg(&rows, &title))?;

    print!("{csv}");
    for row in &rows {
        for f in &row.report.failed {
            eprintln!("run {} (seed {}) failed: {}", f.index, f.seed, f.error);
        }
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn pretty<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(listrep::Error::from)?;
    s.push('\n');
    Ok(s)
}
