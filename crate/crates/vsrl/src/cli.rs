//! Command-line interface. Exit codes: 0 when every requested check passes,
//! 1 when a check fails, 2 on usage or configuration errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;
use vsrl_core::backup::solve_fixed_point;
use vsrl_core::environments::{epsilon_crossover, ThreeStateParams};
use vsrl_core::{Mdp, Operator};

use crate::checks;
use crate::config::{EnvSpec, ExperimentConfig};
use crate::envs::{build_env, load_mdp_document, EnvKind};
use crate::error::{HarnessError, Result};
use crate::report::{render, report_run_dir, write_report};
use crate::runner::run_experiment;

#[derive(Debug, Parser)]
#[command(name = "vsrl", version, about = "Tabular RL safety experiments")]
pub struct Cli {
    /// Replace the configured seeds with this one.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Parallel runs (defaults to the number of CPUs).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory (defaults to `$VSRL_OUT/<name>` or `runs/<name>`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Print JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train every seed of a configuration and write the run directory.
    Run { config: PathBuf },
    /// Solve the Bellman fixed point of an MDP document.
    FixedPoint {
        mdp: PathBuf,
        #[command(flatten)]
        operator: OperatorArgs,
        #[arg(long, default_value_t = 1e-12)]
        tolerance: f64,
    },
    /// Property suites.
    #[command(subcommand)]
    Check(CheckCommand),
    /// Smallest non-greedy probability at which `b` becomes optimal in `y`.
    Crossover {
        env: PathBuf,
        #[arg(long, default_value_t = 5e-4)]
        resolution: f64,
    },
    /// Virtuous-safety checklist of a finished run.
    Report { run_dir: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum CheckCommand {
    /// Random-pair and hill-climb search for `|op(q') - op(q)| > max|q' - q|`.
    NonExpansion {
        #[command(flatten)]
        operator: OperatorArgs,
        #[arg(long, default_value_t = 2)]
        actions: usize,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, default_value_t = 20_000)]
        search_budget: usize,
    },
    Nglie { config: PathBuf },
    Resilience { config: PathBuf },
    Interruptibility { config: PathBuf },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OperatorName {
    Max,
    RankAverage,
    Boltzmann,
    Mellowmax,
    RrrMellowmax,
    RankSelect,
}

#[derive(Debug, Args)]
pub struct OperatorArgs {
    #[arg(long, value_enum)]
    pub operator: OperatorName,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub t1: Option<f64>,
    #[arg(long)]
    pub rank: Option<usize>,
    /// Rank weights, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub weights: Vec<f64>,
}

fn need<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| HarnessError::Config {
        path: flag.into(),
        reason: "required by this operator".into(),
    })
}

impl OperatorArgs {
    pub fn operator(&self) -> Result<Operator> {
        Ok(match self.operator {
            OperatorName::Max => Operator::Max,
            OperatorName::RankAverage => {
                if self.weights.is_empty() {
                    return Err(HarnessError::Config {
                        path: "--weights".into(),
                        reason: "required by rank_average".into(),
                    });
                }
                Operator::RankAverage {
                    weights: self.weights.clone(),
                }
            }
            OperatorName::Boltzmann => Operator::Boltzmann {
                beta: need(self.beta, "--beta")?,
            },
            OperatorName::Mellowmax => Operator::Mellowmax {
                omega: need(self.omega, "--omega")?,
            },
            OperatorName::RrrMellowmax => Operator::RrrMellowmax {
                t1: need(self.t1, "--t1")?,
                omega: need(self.omega, "--omega")?,
            },
            OperatorName::RankSelect => Operator::RankSelect {
                rank: need(self.rank, "--rank")?,
            },
        })
    }
}

/// Where `run` writes: `--out`, the config's `out`, `$VSRL_OUT/<name>`, or
/// `runs/<name>`.
pub fn output_dir(flag: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = &config.out {
        return p.clone();
    }
    match std::env::var_os("VSRL_OUT") {
        Some(root) => PathBuf::from(root).join(&config.name),
        None => PathBuf::from("runs").join(&config.name),
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let config = ExperimentConfig::load(path)?;
    Ok(match seed {
        Some(s) => config.with_seeds(vec![s]),
        None => config,
    })
}

fn print<T: serde::Serialize>(json: bool, text: &str, value: &T) -> Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(value)?);
    } else {
        println!("{text}");
    }
    Ok(())
}

fn three_state_params(path: &Path) -> Result<ThreeStateParams<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let toml_hint = path.extension().is_some_and(|e| e == "toml");
    let value: Value = if toml_hint {
        toml::from_str(&text).map_err(|e| HarnessError::Config {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?
    } else {
        serde_json::from_str(&text)?
    };
    let spec_value = value.get("env").cloned().unwrap_or(value);
    let spec: EnvSpec = crate::config::decode(spec_value)?;
    match build_env(&spec)?.kind {
        EnvKind::ThreeState(params) => Ok(params),
        _ => Err(HarnessError::Config {
            path: "env.name".into(),
            reason: "the crossover is defined for three_state".into(),
        }),
    }
}

/// Nine decimals with trailing zeros removed.
fn rounded(v: f64) -> String {
    let s = format!("{v:.9}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

/// Runs a parsed command; `Ok(true)` when every check passed.
pub fn execute(cli: &Cli) -> Result<bool> {
    let jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    match &cli.command {
        Command::Run { config } => {
            let config = load_config(config, cli.seed)?;
            let dir = output_dir(cli.out.as_deref(), &config);
            let result = run_experiment(&config, jobs, &dir)?;
            let last = result.aggregate.last();
            let text = format!(
                "{} seeds -> {}\nfinal mean sup distance to the fixed point: {}",
                result.seeds.len(),
                dir.display(),
                last.map_or(f64::NAN, |r| r.mean[0])
            );
            print(cli.json, &text, &serde_json::json!({"run_dir": dir, "config_hash": result.hash}))?;
            Ok(true)
        }
        Command::FixedPoint { mdp, operator, tolerance } => {
            let doc = load_mdp_document(mdp)?;
            let mdp = Mdp::from_document(&doc).map_err(|e| HarnessError::Config {
                path: "mdp".into(),
                reason: e.to_string(),
            })?;
            let op = operator.operator()?;
            let fp = solve_fixed_point(&mdp, &op, *tolerance, 1_000_000)?;
            let mut text = String::new();
            for s in 0..fp.n_states {
                let row: Vec<String> = fp.row(s).iter().map(|&v| rounded(v)).collect();
                text.push_str(&format!("Q*({s}) = ({})\n", row.join(", ")));
            }
            text.push_str(&format!("{} sweeps, residual {:e}", fp.iterations, fp.residual));
            print(cli.json, &text, &fp)?;
            Ok(true)
        }
        Command::Check(check) => match check {
            CheckCommand::NonExpansion {
                operator,
                actions,
                trials,
                search_budget,
            } => {
                let op = operator.operator()?;
                let out = checks::non_expansion(&op, *actions, *trials, *search_budget, cli.seed.unwrap_or(0))?;
                print(cli.json, &out.summary, &out)?;
                Ok(out.passes)
            }
            CheckCommand::Nglie { config } => {
                let out = checks::nglie(&load_config(config, cli.seed)?)?;
                print(cli.json, &out.summary, &out)?;
                Ok(out.passes)
            }
            CheckCommand::Resilience { config } => {
                let out = checks::resilience(&load_config(config, cli.seed)?)?;
                print(cli.json, &out.summary, &out)?;
                Ok(out.passes)
            }
            CheckCommand::Interruptibility { config } => {
                let mut config = load_config(config, cli.seed)?;
                if let Some(s) = cli.seed {
                    config.analysis.dsi.seed = s;
                }
                let out = checks::interruptibility(&config)?;
                print(cli.json, &out.summary, &out)?;
                Ok(out.passes)
            }
        },
        Command::Crossover { env, resolution } => {
            let params = three_state_params(env)?;
            let eps = epsilon_crossover(&params, *resolution)?;
            let text = match eps {
                Some(e) => format!("epsilon crossover: {e}"),
                None => "epsilon crossover: none (playing a in y stays optimal)".into(),
            };
            print(cli.json, &text, &serde_json::json!({ "epsilon_crossover": eps }))?;
            Ok(true)
        }
        Command::Report { run_dir } => {
            let out = report_run_dir(run_dir)?;
            let config = ExperimentConfig::load(&run_dir.join("config.json"))?;
            write_report(run_dir, &config, &out)?;
            print(cli.json, &render(&out), &out)?;
            Ok(out.report.passes)
        }
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
