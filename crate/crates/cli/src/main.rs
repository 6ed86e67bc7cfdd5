//! `listrep`: generate models, plan, replicate learners and run the
//! property battery from the command line.

mod envspec;
mod error;
mod run;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use listrep::dp::{backward_dp, policy_value};
use listrep::planner::robust_plan;
use listrep::verify::{run_battery, BatteryScale, Fault, VerifyConfig, CHECKS};
use listrep::TabularMdp;
use serde_json::json;

use envspec::{build_bandit, EnvKind, EnvParams};
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "listrep", version, about = "List-replicable planning and learning on tabular MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a model file for a built-in environment.
    GenEnv(GenEnvArgs),
    /// Plan on a model file with a fixed action tolerance.
    Plan(PlanArgs),
    /// Replicate a learner and write a report directory.
    Run(Box<run::RunArgs>),
    /// Run the property battery on seeded random small models.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct GenEnvArgs {
    #[command(subcommand)]
    kind: GenEnvKind,
    /// Output file [default: standard output].
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum GenEnvKind {
    /// Near-tie chain.
    Chain {
        /// Decision levels [default: 8].
        #[arg(long)]
        h: Option<usize>,
        /// Advantage of action 0, in [0, 0.5) [default: 0.02].
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Checkerboard GridWorld.
    Gridworld {
        /// Side length [default: 5].
        #[arg(long)]
        n: Option<usize>,
        /// Advantage of the good move [default: 0.02].
        #[arg(long)]
        adv: Option<f64>,
    },
    /// Random sparse model.
    Random {
        /// States [default: 4].
        #[arg(long)]
        s: Option<usize>,
        /// Actions [default: 2].
        #[arg(long)]
        a: Option<usize>,
        /// Horizon [default: 3].
        #[arg(long)]
        h: Option<usize>,
        /// Generator seed [default: 0].
        #[arg(long)]
        seed: Option<u64>,
        /// Fraction of states in each row's support [default: 1].
        #[arg(long)]
        support: Option<f64>,
    },
    /// Best-arm bandit embedded in an MDP.
    Bandit {
        #[arg(long)]
        z: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        /// Arm means in (i, j, l) order, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        means: Vec<f64>,
    },
}

#[derive(Debug, Args)]
struct PlanArgs {
    /// Model file.
    #[arg(long)]
    mdp: PathBuf,
    /// Action tolerance.
    #[arg(long, default_value_t = 0.0)]
    r_action: f64,
    /// Output file [default: standard output].
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FaultArg {
    FlippedTolerance,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Run only these checks (comma separated).
    #[arg(long, value_delimiter = ',')]
    only: Vec<String>,
    /// Instances per check instead of the full-scale defaults.
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print the whole report as JSON.
    #[arg(long)]
    json: bool,
    /// List the available checks and exit.
    #[arg(long)]
    list: bool,
    /// Negative control: run the battery against a deliberately broken planner.
    #[arg(long, value_enum, hide = true)]
    inject_fault: Option<FaultArg>,
}

fn emit(output: Option<&PathBuf>, text: &str) -> CliResult<()> {
    match output {
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::io(format!("writing {}", path.display()), e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_gen_env(args: GenEnvArgs) -> CliResult<()> {
    let m: TabularMdp = match args.kind {
        GenEnvKind::Chain { h, delta } => EnvParams {
            h,
            delta,
            ..Default::default()
        }
        .build(EnvKind::Chain)?,
        GenEnvKind::Gridworld { n, adv } => EnvParams {
            n,
            adv,
            ..Default::default()
        }
        .build(EnvKind::Gridworld)?,
        GenEnvKind::Random {
            s,
            a,
            h,
            seed,
            support,
        } => EnvParams {
            s,
            a,
            h,
            env_seed: seed,
            support,
            ..Default::default()
        }
        .build(EnvKind::Random)?,
        GenEnvKind::Bandit { z, m, n, means } => build_bandit(&means, z, m, n)?,
    };
    let mut text = m.to_json()?;
    text.push('\n');
    emit(args.output.as_ref(), &text)
}

fn cmd_plan(args: PlanArgs) -> CliResult<()> {
    let m = TabularMdp::load(&args.mdp)?;
    let pi = robust_plan(&m, args.r_action)?;
    let table: Vec<Vec<usize>> = (0..m.horizon())
        .map(|h| (0..m.num_states()).map(|s| pi.action(h, s)).collect())
        .collect();
    let out = json!({
        "r_action": args.r_action,
        "optimal_value": backward_dp(&m).initial_value(),
        "policy_value": policy_value(&m, &pi)?,
        "policy": table,
    });
    let mut text = serde_json::to_string_pretty(&out).map_err(listrep::Error::from)?;
    text.push('\n');
    emit(args.output.as_ref(), &text)
}

fn cmd_verify(args: VerifyArgs) -> CliResult<()> {
    if args.list {
        for (name, description) in CHECKS {
            println!("{name:22} {description}");
        }
        return Ok(());
    }
    let scale = match args.instances {
        Some(0) => return Err(CliError::config("--instances must be at least 1")),
        Some(n) => BatteryScale::with_instances(n),
        None => BatteryScale::default(),
    };
    let cfg = VerifyConfig {
        seed: args.seed,
        scale,
        only: args.only,
        fault: args.inject_fault.map(|FaultArg::FlippedTolerance| Fault::FlippedTolerance),
    };
    let report = run_battery(&cfg)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(listrep::Error::from)?);
    } else {
        for c in &report.checks {
            println!(
                "{} {:22} cases={} violations={}  {}",
                if c.passed() { "PASS" } else { "FAIL" },
                c.name,
                c.cases,
                c.violations,
                c.description
            );
            if let Some(v) = &c.first_violation {
                println!("     first violation: {v}");
            }
        }
    }
    let failed = report.checks.iter().filter(|c| !c.passed()).count();
    if failed > 0 {
        return Err(CliError::Verification {
            failed,
            total: report.checks.len(),
        });
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenEnv(a) => cmd_gen_env(a),
        Command::Plan(a) => cmd_plan(a),
        Command::Run(a) => run::cmd_run(*a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
