//! Argument handling and the subcommands.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dcac_core::policy::Policy;

use crate::bench::{run_benchmark_suite, summary_csv, train_run, write_rollout_log, BenchPlan};
use crate::checks;
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::formats::{save_checkpoint, METRICS_HEADER};

#[derive(Parser, Debug)]
#[command(name = "dcac", about = "Delay-correcting actor-critic experiments and self-checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Configuration file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Overrides `run.steps`.
    #[arg(long, value_name = "N")]
    steps: Option<usize>,
    /// Output file, or output directory for `bench`.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// `section.key=value`, applied after the file; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn all_overrides(&self) -> Vec<String> {
        let mut o = self.overrides.clone();
        if let Some(s) = self.seed {
            o.push(format!("run.seed={s}"));
        }
        if let Some(n) = self.steps {
            o.push(format!("run.steps={n}"));
        }
        o
    }

    /// The run configuration, or defaults when no file was given.
    fn run_config(&self) -> Result<RunConfig> {
        match &self.config {
            Some(path) => RunConfig::load_with_overrides(path, &self.all_overrides()),
            None => {
                let mut raw = crate::config::RawConfig::default();
                for o in self.all_overrides() {
                    raw.set_override(&o, crate::config::RUN_SECTIONS)?;
                }
                RunConfig::from_raw(raw, PathBuf::from("."))
            }
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one agent; writes metrics, a policy checkpoint and an episode log.
    Train(Common),
    /// Compare resampled behaviour trajectories with on-policy ones exactly.
    OracleCheck(Common),
    /// Exact bias and unbiasedness checks of the n-step estimators.
    BiasCheck(Common),
    /// Print the resampling walkthrough on the always-left 1D walk.
    ResampleDemo(Common),
    /// Compare loss gradients with finite differences.
    GradientCheck(Common),
    /// Run a benchmark matrix and write `summary.csv`.
    Bench(Common),
}

/// Runs the command line `args` (program name first) and returns the exit
/// code: 0 on success, 1 when a check fails, 2 on usage or config errors.
pub fn run(args: impl IntoIterator<Item = String>, stdout: &mut dyn Write, stderr: &mut (dyn Write + Send)) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { stdout.write_all(text.as_bytes()) } else { stderr.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn emit(text: &str, out: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::io(path, e)),
        None => stdout.write_all(text.as_bytes()).map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

/// Returns whether every check passed.
fn dispatch(command: Command, stdout: &mut dyn Write, stderr: &mut (dyn Write + Send)) -> Result<bool> {
    match command {
        Command::Train(c) => {
            if c.config.is_none() {
                return Err(CliError::Usage("train needs --config PATH".to_string()));
            }
            let mut config = c.run_config()?;
            if let Some(out) = &c.out {
                config.out = Some(out.clone());
            }
            if let Some(w) = config.warning() {
                let _ = writeln!(stderr, "{w}");
            }
            match config.out.clone() {
                Some(out) => {
                    let outcome = train_run(&config, Some(&out))?;
                    let policy = outcome.agent.policy();
                    save_checkpoint(&sibling(&out, ".policy.ckpt"), &policy.net)?;
                    write_rollout_log(&config, &Policy::GaussianMlp(policy.clone()), &sibling(&out, ".episode.csv"))?;
                }
                None => {
                    let outcome = train_run(&config, None)?;
                    let mut text = format!("{METRICS_HEADER}\n");
                    for r in &outcome.rows {
                        text.push_str(&format!(
                            "{},{},{},{},{},{},{}\n",
                            r.step, r.eval_return, r.critic_loss, r.actor_loss, r.mean_n, r.alpha_mean, r.beta_mean
                        ));
                    }
                    emit(&text, None, stdout)?;
                }
            }
            Ok(true)
        }
        Command::OracleCheck(c) => {
            c.run_config()?;
            let rows = checks::oracle_check()?;
            emit(&checks::oracle_csv(&rows), c.out.as_deref(), stdout)?;
            Ok(rows.iter().all(|r| r.pass))
        }
        Command::BiasCheck(c) => {
            let config = c.run_config()?;
            let rows = checks::bias_check(config.params.gamma)?;
            emit(&checks::bias_csv(&rows), c.out.as_deref(), stdout)?;
            Ok(rows.iter().all(|r| r.pass))
        }
        Command::ResampleDemo(c) => {
            c.run_config()?;
            let demo = checks::resample_demo()?;
            emit(&demo.table, c.out.as_deref(), stdout)?;
            Ok(true)
        }
        Command::GradientCheck(c) => {
            let config = c.run_config()?;
            let rows = checks::gradient_check(config.seed)?;
            emit(&checks::gradient_csv(&rows), c.out.as_deref(), stdout)?;
            Ok(rows.iter().all(|r| r.pass))
        }
        Command::Bench(c) => {
            let Some(path) = &c.config else {
                return Err(CliError::Usage("bench needs --config PATH".to_string()));
            };
            let plan = BenchPlan::load(path, &c.all_overrides())?;
            let out = c.out.clone().unwrap_or_else(|| PathBuf::from("bench-out"));
            let log = std::sync::Mutex::new(&mut *stderr);
            let summary = run_benchmark_suite(&plan, &out, &|line| {
                let _ = writeln!(log.lock().expect("progress lock"), "{line}");
            })?;
            emit(&summary_csv(&summary), None, stdout)?;
            Ok(true)
        }
    }
}
