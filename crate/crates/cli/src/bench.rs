//! Training runs and the benchmark matrix.
//!
//! A matrix file holds `[env]`, `[agent]` and `[run]` sections shared by
//! every cell, plus a `[bench]` section:
//!
//! ```text
//! [bench]
//! seeds = 0 1 2
//! cells = point-mass:2:3:dcac point-mass:2:3:sac
//! final_window = 10
//! workers = 0
//! ```
//!
//! Each cell is `ENV:ALPHA:BETA:AGENT` with constant delays. `final_window`
//! is the number of trailing evaluations averaged into a run's score, and
//! `workers = 0` uses every available core.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use dcac_core::agents::{evaluate, train, AgentKind, EvalMode, MetricsRow, TrainOutcome};
use dcac_core::delay::{channel_simulate, ChannelConfig};
use dcac_core::mdp::Environment;
use dcac_core::policy::Policy;
use dcac_core::rng::stream;

use crate::config::{RawConfig, RunConfig};
use crate::error::{CliError, Result};
use crate::formats::{write_episode_log, MetricsWriter};
use crate::stats::{bootstrap_interval, mean, standard_error, welch_t_test, WelchTest};

pub const BENCH_SECTIONS: &[&str] = &["env", "agent", "run", "bench"];
pub const SUMMARY_HEADER: &str = "env,delay,agent,mean,lo90,hi90";

/// Trains one configuration, streaming metrics rows to `metrics` when given.
pub fn train_run(config: &RunConfig, metrics: Option<&Path>) -> Result<TrainOutcome> {
    let tc = config.train_config()?;
    let env = config.environment()?;
    let mut writer = match metrics {
        Some(path) => {
            let file = File::create(path).map_err(|e| CliError::io(path, e))?;
            Some((MetricsWriter::new(BufWriter::new(file)).map_err(|e| CliError::io(path, e))?, path))
        }
        None => None,
    };
    let mut io_error = None;
    let outcome = train(env, &tc, &mut |row: &MetricsRow| {
        if let Some((w, path)) = writer.as_mut() {
            if let Err(e) = w.write(row) {
                io_error.get_or_insert_with(|| CliError::io(*path, e));
            }
        }
    })?;
    match io_error {
        Some(e) => Err(e),
        None => Ok(outcome),
    }
}

/// One episode of the trained policy through the channel, written as an
/// episode log.
pub fn write_rollout_log(config: &RunConfig, policy: &Policy, path: &Path) -> Result<()> {
    let env = config.environment()?;
    let ticks = config.horizon.unwrap_or_else(|| env.default_horizon()) as u64;
    let mut log = channel_simulate(env, policy, config.channel()?, ticks, config.seed)?;
    if let Some(end) = log.ticks.iter().position(|t| t.terminal) {
        log.ticks.truncate(end + 1);
    }
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    write_episode_log(&mut BufWriter::new(file), &log).map_err(|e| CliError::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cell {
    pub env: String,
    pub alpha: usize,
    pub beta: usize,
    pub agent: AgentKind,
}

impl Cell {
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = || CliError::Config(format!("bench cell `{spec}` is not ENV:ALPHA:BETA:AGENT"));
        let parts: Vec<&str> = spec.split(':').collect();
        let [env, alpha, beta, agent] = parts[..] else { return Err(bad()) };
        Ok(Cell {
            env: env.to_string(),
            alpha: alpha.parse().map_err(|_| bad())?,
            beta: beta.parse().map_err(|_| bad())?,
            agent: AgentKind::parse(agent).map_err(|e| CliError::Config(format!("bench cell `{spec}`: {e}")))?,
        })
    }

    pub fn delay(&self) -> String {
        format!("a{}b{}", self.alpha, self.beta)
    }
}

#[derive(Clone, Debug)]
pub struct BenchPlan {
    pub seeds: Vec<u64>,
    pub cells: Vec<Cell>,
    pub final_window: usize,
    pub workers: usize,
    /// Shared `[env]`, `[agent]` and `[run]` keys.
    shared: RawConfig,
    base_dir: PathBuf,
}

fn list<T: std::str::FromStr>(raw: &mut RawConfig, key: &str) -> Result<Option<Vec<T>>> {
    raw.get_with(key, |v| {
        v.split_whitespace()
            .map(|item| item.parse::<T>().map_err(|_| format!("cannot parse `{item}`")))
            .collect()
    })
}

impl BenchPlan {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        Self::parse(&text, overrides, base).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str, overrides: &[String], base_dir: PathBuf) -> Result<Self> {
        let mut raw = RawConfig::parse(text, BENCH_SECTIONS)?;
        for o in overrides {
            raw.set_override(o, BENCH_SECTIONS)?;
        }
        let seeds = list(&mut raw, "bench.seeds")?.unwrap_or_else(|| vec![0, 1, 2]);
        let cells = list::<String>(&mut raw, "bench.cells")?
            .ok_or_else(|| CliError::Config("`bench.cells` is required".to_string()))?
            .iter()
            .map(|c| Cell::parse(c))
            .collect::<Result<Vec<_>>>()?;
        let final_window = raw.get_parsed("bench.final_window")?.unwrap_or(10);
        let workers = raw.get_parsed("bench.workers")?.unwrap_or(0);
        let rest = raw.remove_section("bench");
        rest.finish(|_| String::new())?;
        if seeds.is_empty() || cells.is_empty() || final_window == 0 {
            return Err(CliError::Config("a benchmark needs seeds, cells and final_window >= 1".to_string()));
        }
        for generated in ["env.id", "agent.id", "run.seed", "run.out"] {
            if !raw.origin_of(generated).is_empty() {
                return Err(CliError::Config(format!(
                    "{}`{generated}` is set by each bench cell and cannot be given",
                    raw.origin_of(generated)
                )));
            }
        }
        let plan = BenchPlan {
            seeds,
            cells,
            final_window,
            workers,
            shared: raw,
            base_dir,
        };
        // surface configuration errors before any training starts
        for cell in &plan.cells {
            plan.run_config(cell, plan.seeds[0])?;
        }
        Ok(plan)
    }

    pub fn run_config(&self, cell: &Cell, seed: u64) -> Result<RunConfig> {
        let mut raw = self.shared.clone();
        raw.set_generated("env.id", &cell.env);
        raw.set_generated("delays.kind", "constant");
        raw.set_generated("delays.alpha", &cell.alpha.to_string());
        raw.set_generated("delays.beta", &cell.beta.to_string());
        raw.set_generated("agent.id", cell.agent.name());
        raw.set_generated("run.seed", &seed.to_string());
        RunConfig::from_raw(raw, self.base_dir.clone())
    }

    fn worker_count(&self, jobs: usize) -> usize {
        let auto = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        let w = if self.workers == 0 { auto } else { self.workers };
        w.clamp(1, jobs.max(1))
    }
}

/// Mean evaluation return over the last `window` rows.
pub fn final_window_score(rows: &[MetricsRow], window: usize) -> f64 {
    let tail = &rows[rows.len().saturating_sub(window)..];
    mean(&tail.iter().map(|r| r.eval_return).collect::<Vec<_>>())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub cell: Cell,
    /// Final-window score per seed, in seed order.
    pub scores: Vec<f64>,
    pub mean: f64,
    pub lo90: f64,
    pub hi90: f64,
}

impl SummaryRow {
    pub fn half_width(&self) -> f64 {
        (self.hi90 - self.lo90) / 2.0
    }
}

pub fn metrics_file_name(cell: &Cell, seed: u64) -> String {
    format!("{}-{}-{}-s{seed}.csv", cell.env, cell.delay(), cell.agent.name())
}

/// Runs every (cell, seed) pair on a worker pool, writes one metrics CSV
/// per run and `summary.csv` into `out_dir`, and returns the summary.
pub fn run_benchmark_suite(plan: &BenchPlan, out_dir: &Path, progress: &(dyn Fn(&str) + Sync)) -> Result<Vec<SummaryRow>> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let jobs: Vec<(usize, u64)> = (0..plan.cells.len())
        .flat_map(|c| plan.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let results: Mutex<Vec<Option<Result<f64>>>> = Mutex::new(jobs.iter().map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..plan.worker_count(jobs.len()) {
            scope.spawn(|| loop {
                let j = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(c, seed)) = jobs.get(j) else { break };
                let cell = &plan.cells[c];
                let name = metrics_file_name(cell, seed);
                let score = plan
                    .run_config(cell, seed)
                    .and_then(|config| train_run(&config, Some(&out_dir.join(&name))))
                    .map(|outcome| final_window_score(&outcome.rows, plan.final_window));
                match &score {
                    Ok(s) => progress(&format!("{name}: final-window return {s:.4}")),
                    Err(e) => progress(&format!("{name}: {e}")),
                }
                results.lock().expect("no worker panicked")[j] = Some(score);
            });
        }
    });
    let results = results.into_inner().expect("no worker panicked");

    let mut summary = Vec::with_capacity(plan.cells.len());
    for (c, cell) in plan.cells.iter().enumerate() {
        let mut scores = Vec::with_capacity(plan.seeds.len());
        for (j, &(jc, _)) in jobs.iter().enumerate() {
            if jc == c {
                match &results[j] {
                    Some(Ok(s)) => scores.push(*s),
                    Some(Err(e)) => return Err(CliError::Failed(format!("{}: {e}", metrics_file_name(cell, jobs[j].1)))),
                    None => return Err(CliError::Failed("a benchmark job did not run".to_string())),
                }
            }
        }
        let (lo90, hi90) = bootstrap_interval(&scores, 0.9, 1000, c as u64);
        summary.push(SummaryRow {
            cell: cell.clone(),
            mean: mean(&scores),
            scores,
            lo90,
            hi90,
        });
    }
    let path = out_dir.join("summary.csv");
    std::fs::write(&path, summary_csv(&summary)).map_err(|e| CliError::io(&path, e))?;
    Ok(summary)
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.cell.env,
            r.cell.delay(),
            r.cell.agent.name(),
            r.mean,
            r.lo90,
            r.hi90
        ));
    }
    s
}

/// Evaluation returns of a policy over `episodes` fresh episodes.
pub fn episode_returns(config: &RunConfig, policy: &Policy, episodes: usize, mode: EvalMode, seed: u64) -> Result<Vec<f64>> {
    let env = config.environment()?;
    let horizon = config.horizon.unwrap_or_else(|| env.default_horizon());
    let channel: ChannelConfig = config.channel()?;
    Ok(evaluate(
        env,
        policy,
        &channel,
        horizon,
        episodes,
        mode,
        &mut stream(seed, 8),
        &mut stream(seed, 9),
        &mut stream(seed, 10),
    )?)
}

/// The comparison of a non-Markov learner and an augmented one against a
/// uniformly random policy.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovCheck {
    pub random_mean: f64,
    pub naive_mean: f64,
    pub augmented_mean: f64,
    /// Naive against random.
    pub naive_test: WelchTest,
    /// `(augmented - random) / combined standard error`.
    pub augmented_z: f64,
}

impl MarkovCheck {
    pub fn pass(&self) -> bool {
        self.naive_test.p_value > 0.05 && self.augmented_z > 3.0
    }
}

/// Trains `naive` and `augmented` (identical except for the agent) on each
/// seed, then compares stochastic episode returns of the trained policies
/// with those of a uniform policy through the same channel.
pub fn markov_check(naive: &RunConfig, augmented: &RunConfig, seeds: &[u64], episodes: usize) -> Result<MarkovCheck> {
    let env = naive.environment()?;
    let uniform = Policy::Uniform(env.action_space());
    let (mut rand, mut nav, mut aug) = (Vec::new(), Vec::new(), Vec::new());
    for &seed in seeds {
        for (config, out) in [(naive, &mut nav), (augmented, &mut aug)] {
            let config = RunConfig { seed, ..config.clone() };
            let outcome = train_run(&config, None)?;
            let policy = Policy::GaussianMlp(outcome.agent.policy().clone());
            out.extend(episode_returns(&config, &policy, episodes, EvalMode::Stochastic, seed)?);
        }
        rand.extend(episode_returns(naive, &uniform, episodes, EvalMode::Stochastic, seed)?);
    }
    let se = (standard_error(&aug).powi(2) + standard_error(&rand).powi(2)).sqrt();
    let diff = mean(&aug) - mean(&rand);
    Ok(MarkovCheck {
        random_mean: mean(&rand),
        naive_mean: mean(&nav),
        augmented_mean: mean(&aug),
        naive_test: welch_t_test(&nav, &rand),
        augmented_z: if se > 0.0 { diff / se } else { diff.signum() * f64::INFINITY },
    })
}
