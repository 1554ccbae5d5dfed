//! Seeded multi-run execution with checkpoint metrics and persisted outputs.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use vsrl_core::backup::{solve_fixed_point_with, FixedPoint};
use vsrl_core::environments::{Y_INT, Y_UN, Z};
use vsrl_core::learning::{Agent, QTable, TrainConfig};
use vsrl_core::stats::{mean, median, std_dev};
use vsrl_core::{Operator, Scheme, Table};

use crate::config::{ExperimentConfig, SchemeSpec};
use crate::envs::{build_env, BuiltEnv};
use crate::error::{HarnessError, Result};
use crate::output::{config_hash, create, fmt_f64, write_csv, write_json, VERSION};

/// Metrics recorded at one checkpoint of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub checkpoint: u64,
    /// Steps actually taken (short of `checkpoint` if the run ended early).
    pub steps: u64,
    /// Sup-norm distance to the oracle over states the agent can occupy.
    pub distance: f64,
    /// Median `psi` over visited observations at their current clock.
    pub psi: f64,
    /// Mean compliance `theta` over the interruption zone.
    pub theta: f64,
    /// Mean undiscounted return of episodes finished since the last checkpoint.
    pub episode_return: f64,
    pub episodes: f64,
    pub reward_sum: f64,
    pub falls: f64,
    pub trap_steps: f64,
    /// Median steps from entering `z` to reaching `y` after infection.
    pub escape_latency: f64,
    /// Interrupted steps over steps taken in the zone.
    pub compliance: f64,
}

impl MetricsRow {
    pub const NAMES: [&'static str; 10] = [
        "distance",
        "psi",
        "theta",
        "episode_return",
        "episodes",
        "reward_sum",
        "falls",
        "trap_steps",
        "escape_latency",
        "compliance",
    ];

    pub fn values(&self) -> [f64; 10] {
        [
            self.distance,
            self.psi,
            self.theta,
            self.episode_return,
            self.episodes,
            self.reward_sum,
            self.falls,
            self.trap_steps,
            self.escape_latency,
            self.compliance,
        ]
    }
}

/// Everything one seed produced.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub metrics: Vec<MetricsRow>,
    /// Q-values (by observation) at each checkpoint.
    pub snapshots: Vec<Vec<f64>>,
    pub q: Table,
    pub escape_latencies: Vec<u64>,
    /// Cliff only: closest approach of the final greedy path to the cliff.
    pub greedy_cliff_distance: Option<usize>,
}

/// Mean and sample standard deviation across seeds, per checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub checkpoint: u64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub hash: String,
    pub env: BuiltEnv,
    pub oracle: FixedPoint<f64>,
    pub seeds: Vec<SeedRun>,
    pub aggregate: Vec<AggregateRow>,
}

pub fn resolve_scheme(config: &ExperimentConfig, env: &BuiltEnv) -> Result<Option<Scheme>> {
    let scheme = match &config.scheme {
        None => None,
        Some(SchemeSpec::Environment) => Some(env.scheme.clone().ok_or_else(|| HarnessError::Config {
            path: "scheme".into(),
            reason: format!("environment `{}` has no interruption scheme", config.env.name),
        })?),
        Some(SchemeSpec::Custom(s)) => Some(s.clone()),
    };
    if let Some(s) = &scheme {
        s.validate(env.channel.n_observations(), env.mdp.n_actions())
            .map_err(|e| HarnessError::Config {
                path: "scheme".into(),
                reason: e.to_string(),
            })?;
    }
    Ok(scheme)
}

pub fn train_config(config: &ExperimentConfig, env: &BuiltEnv) -> TrainConfig<f64> {
    TrainConfig {
        kind: config.algorithm,
        learning_rate: config.learning_rate,
        operator: config.operator.clone(),
        initial_q: 0.0,
        freeze_learning_at: config.freeze_learning_at,
        terminal_states: env.terminal_states.clone(),
    }
}

/// The fixed point of the limiting operator, per state: each state uses the
/// operator of its susceptible observation. A strategy whose schedules do not
/// converge has no limiting operator; its runs are measured against `Q*`.
pub fn solve_oracle(config: &ExperimentConfig, env: &BuiltEnv) -> Result<FixedPoint<f64>> {
    let m = env.mdp.n_actions();
    let converges = config.operator.is_some() || config.strategy.limit_psi(m).is_some();
    let ops: Vec<Operator> = (0..env.channel.n_observations())
        .map(|o| {
            if converges {
                config.limit_operator(o, m)
            } else {
                Ok(Operator::Max)
            }
        })
        .collect::<Result<_>>()?;
    for op in &ops {
        op.validate(m).map_err(|e| HarnessError::Config {
            path: "operator".into(),
            reason: e.to_string(),
        })?;
    }
    let map = env.channel.susceptible_map().to_vec();
    Ok(solve_fixed_point_with(
        &env.mdp,
        |s, row| ops[map[s]].apply(row),
        1e-10,
        100_000,
    )?)
}

/// States the agent can stand in: cliff cells and the goal are excluded.
pub fn occupiable_states(env: &BuiltEnv) -> Vec<usize> {
    let n = env.mdp.n_states();
    match env.cliff() {
        Some(w) => (0..n).filter(|&s| !w.is_cliff(s) && s != w.goal).collect(),
        None => (0..n).collect(),
    }
}

/// `max |Q(o(s), a) - Q*(s, a)|` over `states`.
pub fn oracle_distance(q: &QTable<f64>, oracle: &[f64], env: &BuiltEnv, states: &[usize]) -> f64 {
    let m = env.mdp.n_actions();
    let map = env.channel.susceptible_map();
    states
        .iter()
        .flat_map(|&s| (0..m).map(move |a| (s, a)))
        .map(|(s, a)| (q.value(map[s], a) - oracle[s * m + a]).abs())
        .fold(0.0, f64::max)
}

struct Tally {
    reward_sum: f64,
    falls: u64,
    trap_steps: u64,
    zone_steps: u64,
    interrupted: u64,
    episodes: u64,
    returns: Vec<f64>,
    episode_return: f64,
    in_trap_since: Option<u64>,
    latencies: Vec<u64>,
}

fn trace_line(t: &vsrl_core::mdp::Transition<f64>) -> String {
    format!(
        "{{\"t\":{},\"s\":{},\"o\":{},\"a\":{},\"r\":{},\"s2\":{},\"o2\":{},\"int\":{}}}\n",
        t.time,
        t.state,
        t.observation,
        t.action,
        fmt_f64(t.reward),
        t.next_state,
        t.next_observation,
        t.interrupted
    )
}

/// One training run. When `trace` is given, transitions are written to it as
/// JSON lines after a header line.
pub fn run_seed(
    config: &ExperimentConfig,
    env: &BuiltEnv,
    oracle: &FixedPoint<f64>,
    seed: u64,
    mut trace: Option<(&mut dyn Write, &str)>,
) -> Result<SeedRun> {
    let scheme = resolve_scheme(config, env)?;
    let train = train_config(config, env);
    let strategy = &config.strategy;
    let mut agent = Agent::new(&env.mdp, &env.channel, strategy, scheme.as_ref(), &train, seed)?;
    let m = env.mdp.n_actions();
    let states = occupiable_states(env);
    let checkpoints = config.effective_checkpoints();
    let zone = scheme.as_ref().map(Scheme::zone).unwrap_or_default();
    let io = |e| HarnessError::Other(format!("writing trace: {e}"));
    if let Some((w, hash)) = trace.as_mut() {
        writeln!(w, "{{\"vsrl\":\"{VERSION}\",\"config_hash\":\"{hash}\",\"seed\":{seed}}}").map_err(io)?;
    }
    let mut tally = Tally {
        reward_sum: 0.0,
        falls: 0,
        trap_steps: 0,
        zone_steps: 0,
        interrupted: 0,
        episodes: 0,
        returns: Vec::new(),
        episode_return: 0.0,
        in_trap_since: None,
        latencies: Vec::new(),
    };
    let mut metrics = Vec::with_capacity(checkpoints.len());
    let mut snapshots = Vec::with_capacity(checkpoints.len());
    let mut step = 0u64;
    let record = |agent: &Agent<f64>, tally: &mut Tally, checkpoint: u64, step: u64| -> Result<MetricsRow> {
        let q = agent.q();
        let visited: Vec<f64> = (0..q.n_observations())
            .filter(|&o| q.obs_visits(o) > 0)
            .map(|o| {
                let n = strategy.clock_value(q.obs_visits(o), step);
                strategy.params(o, n).psi(m)
            })
            .collect();
        let psi = if visited.is_empty() {
            strategy.params(0, 1).psi(m)
        } else {
            median(&visited)
        };
        let theta = match &scheme {
            Some(s) if !zone.is_empty() => {
                let values = zone
                    .iter()
                    .map(|&o| s.theta(q.obs_visits(o).max(1)))
                    .collect::<vsrl_core::Result<Vec<f64>>>()?;
                mean(&values)
            }
            _ => f64::NAN,
        };
        let episode_return = if tally.returns.is_empty() {
            f64::NAN
        } else {
            mean(&tally.returns)
        };
        tally.returns.clear();
        let ratio = |a: u64, b: u64| if b == 0 { f64::NAN } else { a as f64 / b as f64 };
        Ok(MetricsRow {
            checkpoint,
            steps: step,
            distance: oracle_distance(q, &oracle.q, env, &states),
            psi,
            theta,
            episode_return,
            episodes: tally.episodes as f64,
            reward_sum: tally.reward_sum,
            falls: tally.falls as f64,
            trap_steps: tally.trap_steps as f64,
            escape_latency: if tally.latencies.is_empty() {
                f64::NAN
            } else {
                median(&tally.latencies.iter().map(|&x| x as f64).collect::<Vec<_>>())
            },
            compliance: ratio(tally.interrupted, tally.zone_steps),
        })
    };
    for _ in 0..config.episodes {
        for k in 0..config.horizon {
            let t = agent.step()?;
            step += 1;
            tally.reward_sum += t.reward;
            tally.episode_return += t.reward;
            if env.cliff().is_some_and(|w| w.is_fall(&t)) {
                tally.falls += 1;
            }
            if env.is_three_state() {
                if t.state == Z {
                    tally.trap_steps += 1;
                }
                if env.channel.is_infected(t.time) {
                    if t.state != Z && t.next_state == Z {
                        tally.in_trap_since = Some(t.time + 1);
                    } else if let (Some(since), true) =
                        (tally.in_trap_since, t.next_state == Y_UN || t.next_state == Y_INT)
                    {
                        tally.latencies.push(t.time + 1 - since);
                        tally.in_trap_since = None;
                    }
                }
            }
            if let Some(s) = &scheme {
                if s.initiation(t.observation) > 0.0 {
                    tally.zone_steps += 1;
                    tally.interrupted += u64::from(t.interrupted);
                }
            }
            if let Some((w, _)) = trace.as_mut() {
                if config.trace_every > 0 && t.time % config.trace_every == 0 {
                    w.write_all(trace_line(&t).as_bytes()).map_err(io)?;
                }
            }
            if metrics.len() < checkpoints.len() && step == checkpoints[metrics.len()] {
                metrics.push(record(&agent, &mut tally, step, step)?);
                snapshots.push(agent.q().values().to_vec());
            }
            let terminal = agent.is_terminal(&t);
            if terminal || k + 1 == config.horizon {
                tally.episodes += 1;
                tally.returns.push(tally.episode_return);
                tally.episode_return = 0.0;
            }
            if terminal {
                break;
            }
        }
        agent.reset()?;
    }
    // Checkpoints beyond an early finish are recorded at the final step.
    while metrics.len() < checkpoints.len() {
        let c = checkpoints[metrics.len()];
        metrics.push(record(&agent, &mut tally, c, step)?);
        snapshots.push(agent.q().values().to_vec());
    }
    let greedy_cliff_distance = env
        .cliff()
        .and_then(|w| w.path_cliff_distance(&w.greedy_path(agent.q())));
    Ok(SeedRun {
        seed,
        metrics,
        snapshots,
        q: agent.q().clone(),
        escape_latencies: tally.latencies,
        greedy_cliff_distance,
    })
}

pub fn aggregate(seeds: &[SeedRun]) -> Vec<AggregateRow> {
    let Some(first) = seeds.first() else {
        return Vec::new();
    };
    (0..first.metrics.len())
        .map(|i| {
            let columns: Vec<Vec<f64>> = (0..MetricsRow::NAMES.len())
                .map(|k| seeds.iter().map(|s| s.metrics[i].values()[k]).collect())
                .collect();
            AggregateRow {
                checkpoint: first.metrics[i].checkpoint,
                mean: columns.iter().map(|c| mean(c)).collect(),
                std: columns.iter().map(|c| std_dev(c)).collect(),
            }
        })
        .collect()
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::Other(e.to_string()))
}

/// Runs every seed in memory (no files).
pub fn execute(config: &ExperimentConfig, jobs: usize) -> Result<RunResult> {
    run_experiment_inner(config, jobs, None)
}

/// Runs every seed and writes the run directory:
/// `config.json`, `oracle.json`, `aggregate.csv` and, per seed,
/// `seed-<n>/{trace.jsonl, metrics.csv, q.json}`.
pub fn run_experiment(config: &ExperimentConfig, jobs: usize, dir: &Path) -> Result<RunResult> {
    run_experiment_inner(config, jobs, Some(dir))
}

fn seed_dir(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed-{seed}"))
}

fn run_experiment_inner(config: &ExperimentConfig, jobs: usize, dir: Option<&Path>) -> Result<RunResult> {
    config.validate()?;
    let env = build_env(&config.env)?;
    config
        .strategy
        .validate(env.mdp.n_actions())
        .map_err(|e| HarnessError::Config {
            path: "strategy".into(),
            reason: e.to_string(),
        })?;
    resolve_scheme(config, &env)?;
    let hash = config_hash(config);
    let oracle = solve_oracle(config, &env)?;
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let path = dir.join("config.json");
        std::fs::write(&path, config.canonical_json() + "\n").map_err(|e| HarnessError::io(&path, e))?;
        write_json(&dir.join("oracle.json"), &oracle)?;
    }
    let seeds: Vec<SeedRun> = pool(jobs.max(1))?.install(|| {
        config
            .seeds
            .par_iter()
            .map(|&seed| match dir {
                None => run_seed(config, &env, &oracle, seed, None),
                Some(dir) => {
                    let sdir = seed_dir(dir, seed);
                    let path = sdir.join("trace.jsonl");
                    let mut file = create(&path)?;
                    let run = run_seed(config, &env, &oracle, seed, Some((&mut file, &hash)))?;
                    file.flush().map_err(|e| HarnessError::io(&path, e))?;
                    write_seed_files(&sdir, &hash, &run)?;
                    Ok(run)
                }
            })
            .collect::<Result<_>>()
    })?;
    let aggregate = aggregate(&seeds);
    if let Some(dir) = dir {
        write_aggregate(&dir.join("aggregate.csv"), &hash, &aggregate)?;
    }
    Ok(RunResult {
        config: config.clone(),
        hash,
        env,
        oracle,
        seeds,
        aggregate,
    })
}

fn metrics_header() -> Vec<String> {
    ["checkpoint", "steps"]
        .into_iter()
        .chain(MetricsRow::NAMES)
        .map(String::from)
        .collect()
}

fn write_seed_files(dir: &Path, hash: &str, run: &SeedRun) -> Result<()> {
    let rows: Vec<Vec<String>> = run
        .metrics
        .iter()
        .map(|r| {
            [r.checkpoint.to_string(), r.steps.to_string()]
                .into_iter()
                .chain(r.values().into_iter().map(fmt_f64))
                .collect()
        })
        .collect();
    write_csv(&dir.join("metrics.csv"), hash, &metrics_header(), &rows)?;
    write_json(&dir.join("q.json"), &run.q)
}

fn write_aggregate(path: &Path, hash: &str, rows: &[AggregateRow]) -> Result<()> {
    let mut header = vec!["checkpoint".to_string()];
    for name in MetricsRow::NAMES {
        header.push(format!("{name}_mean"));
        header.push(format!("{name}_std"));
    }
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![r.checkpoint.to_string()];
            for (m, s) in r.mean.iter().zip(&r.std) {
                row.push(fmt_f64(*m));
                row.push(fmt_f64(*s));
            }
            row
        })
        .collect();
    write_csv(path, hash, &header, &body)
}

/// Final Q-tables of a run directory, by seed.
pub fn load_tables(dir: &Path, seeds: &[u64]) -> Result<Vec<Table>> {
    seeds
        .iter()
        .map(|&s| crate::output::read_json(&seed_dir(dir, s).join("q.json")))
        .collect()
}

/// Per-seed metrics read back from a run directory.
pub fn load_metrics(dir: &Path, seed: u64) -> Result<Vec<MetricsRow>> {
    let (_, rows) = crate::output::read_csv(&seed_dir(dir, seed).join("metrics.csv"))?;
    rows.iter()
        .map(|r| {
            let num = |i: usize| crate::output::parse_f64(&r[i]).unwrap_or(f64::NAN);
            let int = |i: usize| r[i].parse::<u64>().map_err(|e| HarnessError::Other(e.to_string()));
            Ok(MetricsRow {
                checkpoint: int(0)?,
                steps: int(1)?,
                distance: num(2),
                psi: num(3),
                theta: num(4),
                episode_return: num(5),
                episodes: num(6),
                reward_sum: num(7),
                falls: num(8),
                trap_steps: num(9),
                escape_latency: num(10),
                compliance: num(11),
            })
        })
        .collect()
}
