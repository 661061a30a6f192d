//! Run configuration files.
//!
//! The format is flat `key = value` lines under `[env]`, `[delays]`,
//! `[agent]` and `[run]` section headers. Lines starting with `#` are
//! comments. Every key must be known; errors carry the line they come from.
//!
//! ```text
//! [env]
//! id = point-mass
//!
//! [delays]
//! kind = constant
//! alpha = 2
//! beta = 3
//!
//! [agent]
//! id = dcac
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use dcac_core::agents::{AgentConfig, AgentKind, EvalMode, TrainConfig};
use dcac_core::delay::{ChannelConfig, DelayProcess, LatencySource};
use dcac_core::envs::BenchEnv;
use dcac_core::nn::Activation;

use crate::error::{CliError, Result};
use crate::formats::load_delay_histogram;

pub const RUN_SECTIONS: &[&str] = &["env", "delays", "agent", "run"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Origin {
    Line(usize),
    Override,
}

impl Origin {
    fn prefix(self) -> String {
        match self {
            Origin::Line(n) => format!("line {n}: "),
            Origin::Override => "override: ".to_string(),
        }
    }
}

#[derive(Clone, Debug)]
struct RawValue {
    value: String,
    origin: Origin,
}

/// Parsed but untyped `section.key -> value` pairs.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, RawValue>,
}

fn valid_key(k: &str) -> bool {
    !k.is_empty() && k.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

impl RawConfig {
    pub fn parse(text: &str, sections: &[&str]) -> Result<Self> {
        let mut entries: BTreeMap<String, RawValue> = BTreeMap::new();
        let mut section: Option<&str> = None;
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let Some(name) = name.strip_suffix(']') else {
                    return Err(CliError::Config(format!("line {n}: malformed section header `{line}`")));
                };
                let name = name.trim();
                match sections.iter().find(|s| **s == name) {
                    Some(s) => section = Some(s),
                    None => {
                        return Err(CliError::Config(format!(
                            "line {n}: unknown section `[{name}]` (expected {})",
                            sections.iter().map(|s| format!("[{s}]")).collect::<Vec<_>>().join(", ")
                        )))
                    }
                }
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config(format!("line {n}: expected `key = value`, got `{line}`")));
            };
            let (key, value) = (key.trim(), value.trim());
            let Some(section) = section else {
                return Err(CliError::Config(format!("line {n}: `{key}` appears before any section header")));
            };
            if !valid_key(key) {
                return Err(CliError::Config(format!("line {n}: invalid key `{key}`")));
            }
            if value.is_empty() {
                return Err(CliError::Config(format!("line {n}: `{section}.{key}` has no value")));
            }
            let full = format!("{section}.{key}");
            if let Some(prev) = entries.get(&full) {
                return Err(CliError::Config(format!(
                    "line {n}: duplicate key `{full}` (first set at {})",
                    prev.origin.prefix().trim_end_matches(": ")
                )));
            }
            entries.insert(
                full,
                RawValue {
                    value: value.to_string(),
                    origin: Origin::Line(n),
                },
            );
        }
        Ok(RawConfig { entries })
    }

    /// Applies `section.key=value`, replacing any value from the file.
    pub fn set_override(&mut self, spec: &str, sections: &[&str]) -> Result<()> {
        let Some((key, value)) = spec.split_once('=') else {
            return Err(CliError::Usage(format!("override `{spec}` is not of the form section.key=value")));
        };
        let (key, value) = (key.trim(), value.trim());
        match key.split_once('.') {
            Some((s, k)) if sections.contains(&s) && valid_key(k) && !value.is_empty() => {}
            _ => return Err(CliError::Config(format!("override: invalid key or empty value in `{spec}`"))),
        }
        self.set(key, value, Origin::Override);
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str, origin: Origin) {
        self.entries.insert(
            key.to_string(),
            RawValue {
                value: value.to_string(),
                origin,
            },
        );
    }

    pub(crate) fn set_generated(&mut self, key: &str, value: &str) {
        self.set(key, value, Origin::Override);
    }

    pub(crate) fn remove_section(&mut self, section: &str) -> RawConfig {
        let prefix = format!("{section}.");
        let keys: Vec<String> = self.entries.keys().filter(|k| k.starts_with(&prefix)).cloned().collect();
        let mut out = RawConfig::default();
        for k in keys {
            let v = self.entries.remove(&k).expect("listed key");
            out.entries.insert(k, v);
        }
        out
    }

    fn take(&mut self, key: &str) -> Option<RawValue> {
        self.entries.remove(key)
    }

    pub(crate) fn get_parsed<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.take(key) {
            None => Ok(None),
            Some(raw) => raw.value.parse().map(Some).map_err(|e| {
                CliError::Config(format!("{}`{key}` = `{}`: {e}", raw.origin.prefix(), raw.value))
            }),
        }
    }

    pub(crate) fn get_with<T>(&mut self, key: &str, f: impl FnOnce(&str) -> Result<T, String>) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some(raw) => f(&raw.value)
                .map(Some)
                .map_err(|e| CliError::Config(format!("{}`{key}` = `{}`: {e}", raw.origin.prefix(), raw.value))),
        }
    }

    pub(crate) fn origin_of(&self, key: &str) -> String {
        self.entries.get(key).map(|v| v.origin.prefix()).unwrap_or_default()
    }

    /// Fails on the first key nobody consumed.
    pub(crate) fn finish(self, hint: impl Fn(&str) -> String) -> Result<()> {
        let mut leftovers: Vec<_> = self.entries.into_iter().collect();
        leftovers.sort_by_key(|(_, v)| match v.origin {
            Origin::Line(n) => n,
            Origin::Override => usize::MAX,
        });
        match leftovers.first() {
            None => Ok(()),
            Some((k, v)) => Err(CliError::Config(format!("{}unknown key `{k}`{}", v.origin.prefix(), hint(k)))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DelayModel {
    Constant {
        alpha: usize,
        beta: usize,
    },
    /// Independent uniform latencies on the inclusive ranges.
    Uniform {
        alpha: (usize, usize),
        beta: (usize, usize),
    },
    /// Latencies drawn from a histogram file; `action_file` defaults to
    /// `file`. Delays above the maxima are folded into them.
    Histogram {
        file: PathBuf,
        action_file: Option<PathBuf>,
        max_alpha: Option<usize>,
        max_beta: Option<usize>,
    },
}

impl DelayModel {
    fn kind(&self) -> &'static str {
        match self {
            DelayModel::Constant { .. } => "constant",
            DelayModel::Uniform { .. } => "uniform",
            DelayModel::Histogram { .. } => "histogram",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub env: String,
    /// Defaults to the environment's own horizon.
    pub horizon: Option<usize>,
    pub delays: DelayModel,
    /// Defaults to `max_alpha + max_beta`.
    pub buffer_len: Option<usize>,
    pub agent: AgentKind,
    pub params: AgentConfig,
    pub seed: u64,
    pub steps: usize,
    pub out: Option<PathBuf>,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub eval_mode: EvalMode,
    /// Directory that relative file names are resolved against.
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            env: "point-mass".to_string(),
            horizon: None,
            delays: DelayModel::Constant { alpha: 2, beta: 3 },
            buffer_len: None,
            agent: AgentKind::Dcac,
            params: AgentConfig::default(),
            seed: 0,
            steps: 100_000,
            out: None,
            eval_every: 1000,
            eval_episodes: 5,
            eval_mode: EvalMode::Deterministic,
            base_dir: PathBuf::from("."),
        }
    }
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err("expected true or false".to_string()),
    }
}

fn parse_hidden(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| e.to_string()))
        .collect()
}

fn parse_activation(s: &str) -> Result<Activation, String> {
    match s {
        "silu" => Ok(Activation::Silu),
        "tanh" => Ok(Activation::Tanh),
        "relu" => Ok(Activation::Relu),
        _ => Err("expected silu, tanh or relu".to_string()),
    }
}

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Silu => "silu",
        Activation::Tanh => "tanh",
        Activation::Relu => "relu",
    }
}

fn parse_optional_usize(s: &str) -> Result<Option<usize>, String> {
    if s == "none" {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|e: std::num::ParseIntError| e.to_string())
}

fn parse_eval_mode(s: &str) -> Result<EvalMode, String> {
    match s {
        "deterministic" => Ok(EvalMode::Deterministic),
        "stochastic" => Ok(EvalMode::Stochastic),
        _ => Err("expected deterministic or stochastic".to_string()),
    }
}

fn required<T>(value: Option<T>, key: &str, kind: &str) -> Result<T> {
    value.ok_or_else(|| CliError::Config(format!("`{key}` is required when delays.kind = {kind}")))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Self::load_with_overrides(path, &[])
    }

    pub fn load_with_overrides(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut raw = RawConfig::parse(&text, RUN_SECTIONS).map_err(|e| prefix_path(path, e))?;
        for o in overrides {
            raw.set_override(o, RUN_SECTIONS)?;
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        Self::from_raw(raw, base).map_err(|e| prefix_path(path, e))
    }

    pub fn parse_str(text: &str, base_dir: &Path) -> Result<Self> {
        Self::from_raw(RawConfig::parse(text, RUN_SECTIONS)?, base_dir.to_path_buf())
    }

    pub fn from_raw(mut raw: RawConfig, base_dir: PathBuf) -> Result<Self> {
        let d = RunConfig::default();
        let env = raw
            .get_with("env.id", |v| {
                BenchEnv::by_name(v).map_err(|e| e.to_string())?;
                Ok(v.to_string())
            })?
            .unwrap_or(d.env);
        let horizon = raw.get_parsed("env.horizon")?;

        let kind_origin = raw.origin_of("delays.kind");
        let kind: String = raw.get_parsed("delays.kind")?.unwrap_or_else(|| "constant".to_string());
        let buffer_len = raw.get_parsed("delays.buffer_len")?;
        let delays = match kind.as_str() {
            "constant" => DelayModel::Constant {
                alpha: raw.get_parsed("delays.alpha")?.unwrap_or(2),
                beta: raw.get_parsed("delays.beta")?.unwrap_or(3),
            },
            "uniform" => DelayModel::Uniform {
                alpha: (
                    raw.get_parsed("delays.alpha_min")?.unwrap_or(0),
                    required(raw.get_parsed("delays.alpha_max")?, "delays.alpha_max", "uniform")?,
                ),
                beta: (
                    raw.get_parsed("delays.beta_min")?.unwrap_or(1),
                    required(raw.get_parsed("delays.beta_max")?, "delays.beta_max", "uniform")?,
                ),
            },
            "histogram" => DelayModel::Histogram {
                file: required(raw.get_parsed("delays.file")?, "delays.file", "histogram")?,
                action_file: raw.get_parsed("delays.action_file")?,
                max_alpha: raw.get_parsed("delays.max_alpha")?,
                max_beta: raw.get_parsed("delays.max_beta")?,
            },
            other => {
                return Err(CliError::Config(format!(
                    "{kind_origin}`delays.kind` = `{other}`: expected constant, uniform or histogram"
                )))
            }
        };

        let agent = match raw.get_parsed::<String>("agent.id")? {
            None => d.agent,
            Some(s) => AgentKind::parse(&s)?,
        };
        let mut p = AgentConfig::default();
        if let Some(v) = raw.get_parsed("agent.gamma")? {
            p.gamma = v;
        }
        if let Some(v) = raw.get_parsed("agent.lr")? {
            p.lr = v;
        }
        if let Some(v) = raw.get_parsed("agent.batch_size")? {
            p.batch_size = v;
        }
        if let Some(v) = raw.get_parsed("agent.tau")? {
            p.tau = v;
        }
        if let Some(v) = raw.get_parsed("agent.reward_scale")? {
            p.reward_scale = v;
        }
        if let Some(v) = raw.get_parsed("agent.entropy_scale")? {
            p.entropy_scale = v;
        }
        if let Some(v) = raw.get_parsed("agent.warmup")? {
            p.warmup = v;
        }
        if let Some(v) = raw.get_with("agent.hidden", parse_hidden)? {
            p.hidden = v;
        }
        if let Some(v) = raw.get_with("agent.activation", parse_activation)? {
            p.activation = v;
        }
        if let Some(v) = raw.get_parsed("agent.memory_capacity")? {
            p.memory_capacity = v;
        }
        if let Some(v) = raw.get_with("agent.use_kappa", parse_bool)? {
            p.use_kappa = v;
        }
        if let Some(v) = raw.get_with("agent.max_fragment", parse_optional_usize)? {
            p.max_fragment = v;
        }

        let config = RunConfig {
            env,
            horizon,
            delays,
            buffer_len,
            agent,
            params: p,
            seed: raw.get_parsed("run.seed")?.unwrap_or(d.seed),
            steps: raw.get_parsed("run.steps")?.unwrap_or(d.steps),
            out: raw.get_parsed("run.out")?,
            eval_every: raw.get_parsed("run.eval_every")?.unwrap_or(d.eval_every),
            eval_episodes: raw.get_parsed("run.eval_episodes")?.unwrap_or(d.eval_episodes),
            eval_mode: raw.get_with("run.eval_mode", parse_eval_mode)?.unwrap_or(d.eval_mode),
            base_dir,
        };
        raw.finish(|k| {
            if k.starts_with("delays.") {
                format!(" for delays.kind = {kind}")
            } else {
                String::new()
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Checks what can be checked without reading delay histograms.
    pub fn validate(&self) -> Result<()> {
        BenchEnv::by_name(&self.env).map_err(|e| CliError::Config(e.to_string()))?;
        self.params.validate()?;
        if let DelayModel::Uniform { alpha, beta } = &self.delays {
            if alpha.0 > alpha.1 || beta.0 > beta.1 {
                return Err(CliError::Config("uniform delay ranges need min <= max".to_string()));
            }
        }
        if let (Some(k), Some((ma, mb))) = (self.buffer_len, self.declared_maxima()) {
            if k < ma + mb {
                return Err(CliError::Config(format!(
                    "buffer length K = {k} must be at least max_alpha + max_beta = {}",
                    ma + mb
                )));
            }
        }
        if self.steps == 0 || self.eval_every == 0 || self.eval_episodes == 0 || self.horizon == Some(0) {
            return Err(CliError::Config("steps, horizon and evaluation counts must be positive".to_string()));
        }
        Ok(())
    }

    fn declared_maxima(&self) -> Option<(usize, usize)> {
        match &self.delays {
            DelayModel::Constant { alpha, beta } => Some((*alpha, *beta)),
            DelayModel::Uniform { alpha, beta } => Some((alpha.1, beta.1)),
            DelayModel::Histogram {
                max_alpha: Some(a),
                max_beta: Some(b),
                ..
            } => Some((*a, *b)),
            DelayModel::Histogram { .. } => None,
        }
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn channel(&self) -> Result<ChannelConfig> {
        let mut channel = match &self.delays {
            DelayModel::Constant { alpha, beta } => ChannelConfig::constant(*alpha, *beta),
            DelayModel::Uniform { alpha, beta } => ChannelConfig::from_processes(
                DelayProcess::uniform(alpha.0, alpha.1)?,
                DelayProcess::uniform(beta.0, beta.1)?,
            ),
            DelayModel::Histogram {
                file,
                action_file,
                max_alpha,
                max_beta,
            } => {
                let obs = load_delay_histogram(&self.resolve(file), *max_alpha)?;
                let act = load_delay_histogram(&self.resolve(action_file.as_ref().unwrap_or(file)), *max_beta)?;
                let mut c = ChannelConfig::from_processes(obs, act);
                // declared maxima bound the channel even if the data do not reach them
                if let Some(a) = max_alpha {
                    c.max_alpha = *a;
                }
                if let Some(b) = max_beta {
                    c.max_beta = *b;
                }
                c.buffer_len = c.max_alpha + c.max_beta;
                c
            }
        };
        if let Some(k) = self.buffer_len {
            channel.buffer_len = k;
        }
        channel.validate()?;
        Ok(channel)
    }

    pub fn environment(&self) -> Result<BenchEnv> {
        Ok(BenchEnv::by_name(&self.env)?)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let env = self.environment()?;
        let horizon = self.horizon.unwrap_or_else(|| env.default_horizon());
        let mut tc = TrainConfig::new(self.agent, self.channel()?, horizon, self.steps, self.seed);
        tc.agent = self.params.clone();
        tc.eval_every = self.eval_every;
        tc.eval_episodes = self.eval_episodes;
        tc.eval_mode = self.eval_mode;
        tc.validate()?;
        Ok(tc)
    }

    /// Every key with its effective value, in a fixed order.
    pub fn to_canonical_string(&self) -> String {
        let mut s = String::new();
        let p = &self.params;
        let _ = writeln!(s, "[env]\nid = {}", self.env);
        if let Some(h) = self.horizon {
            let _ = writeln!(s, "horizon = {h}");
        }
        let _ = writeln!(s, "\n[delays]\nkind = {}", self.delays.kind());
        match &self.delays {
            DelayModel::Constant { alpha, beta } => {
                let _ = writeln!(s, "alpha = {alpha}\nbeta = {beta}");
            }
            DelayModel::Uniform { alpha, beta } => {
                let _ = writeln!(
                    s,
                    "alpha_min = {}\nalpha_max = {}\nbeta_min = {}\nbeta_max = {}",
                    alpha.0, alpha.1, beta.0, beta.1
                );
            }
            DelayModel::Histogram {
                file,
                action_file,
                max_alpha,
                max_beta,
            } => {
                let _ = writeln!(s, "file = {}", file.display());
                if let Some(f) = action_file {
                    let _ = writeln!(s, "action_file = {}", f.display());
                }
                if let Some(a) = max_alpha {
                    let _ = writeln!(s, "max_alpha = {a}");
                }
                if let Some(b) = max_beta {
                    let _ = writeln!(s, "max_beta = {b}");
                }
            }
        }
        if let Some(k) = self.buffer_len {
            let _ = writeln!(s, "buffer_len = {k}");
        }
        let hidden: Vec<String> = p.hidden.iter().map(|h| h.to_string()).collect();
        let _ = writeln!(
            s,
            "\n[agent]\nid = {}\ngamma = {}\nlr = {}\nbatch_size = {}\ntau = {}\nreward_scale = {}\n\
             entropy_scale = {}\nwarmup = {}\nhidden = {}\nactivation = {}\nmemory_capacity = {}\n\
             use_kappa = {}\nmax_fragment = {}",
            self.agent.name(),
            p.gamma,
            p.lr,
            p.batch_size,
            p.tau,
            p.reward_scale,
            p.entropy_scale,
            p.warmup,
            hidden.join(", "),
            activation_name(p.activation),
            p.memory_capacity,
            p.use_kappa,
            p.max_fragment.map_or("none".to_string(), |m| m.to_string()),
        );
        let _ = writeln!(
            s,
            "\n[run]\nseed = {}\nsteps = {}\neval_every = {}\neval_episodes = {}\neval_mode = {}",
            self.seed,
            self.steps,
            self.eval_every,
            self.eval_episodes,
            match self.eval_mode {
                EvalMode::Deterministic => "deterministic",
                EvalMode::Stochastic => "stochastic",
            }
        );
        if let Some(out) = &self.out {
            let _ = writeln!(s, "out = {}", out.display());
        }
        s
    }

    /// The banner printed before any sac-naive run.
    pub fn warning(&self) -> Option<&'static str> {
        (self.agent == AgentKind::SacNaive).then_some(
            "WARNING: sac-naive sees only the delayed observation. Under delays that input is not \
             Markov, so expect near-random returns; use it only as a baseline.",
        )
    }
}

fn prefix_path(path: &Path, e: CliError) -> CliError {
    match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    }
}

/// Latency processes used by a channel, for reporting.
pub fn describe_channel(c: &ChannelConfig) -> String {
    let d = |l: &LatencySource| match l {
        LatencySource::Process(p) => format!("{:?}", p.kind()),
        LatencySource::Trace(t) => format!("trace({})", t.len()),
    };
    format!(
        "K = {}, max_alpha = {}, max_beta = {}, observation {}, action {}",
        c.buffer_len,
        c.max_alpha,
        c.max_beta,
        d(&c.observation_latency),
        d(&c.action_latency)
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::parse_str(text, Path::new("."))
    }

    fn config_message(r: Result<RunConfig>) -> String {
        match r {
            Err(CliError::Config(m)) => m,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn empty_agent_section_gives_default_hyperparameters() {
        let c = parse("[agent]\n").unwrap();
        assert_eq!(c.params, AgentConfig::default());
        assert_eq!(c.params.gamma, 0.99);
        assert_eq!(c.params.lr, 3e-4);
        assert_eq!(c.params.batch_size, 128);
        assert_eq!(c.params.reward_scale, 5.0);
        assert_eq!(c.params.entropy_scale, 1.0);
        assert_eq!(c.params.tau, 0.005);
    }

    #[test]
    fn histogram_needs_a_file() {
        let m = config_message(parse("[delays]\nkind = histogram\n"));
        assert!(m.contains("delays.file"), "{m}");
    }

    #[test]
    fn unknown_key_names_its_line() {
        let m = config_message(parse("[env]\nid = one-d\n\n[agent]\ngama = 0.9\n"));
        assert!(m.starts_with("line 5:") && m.contains("agent.gama"), "{m}");
    }

    #[test]
    fn key_of_another_delay_kind_is_unknown() {
        let m = config_message(parse("[delays]\nkind = constant\nalpha_max = 3\n"));
        assert!(m.contains("line 3") && m.contains("delays.alpha_max"), "{m}");
    }

    #[test]
    fn bad_value_names_its_line() {
        let m = config_message(parse("[agent]\nbatch_size = many\n"));
        assert!(m.starts_with("line 2:"), "{m}");
    }

    #[test]
    fn structural_errors() {
        assert!(config_message(parse("id = one-d\n")).contains("before any section"));
        assert!(config_message(parse("[bench]\n")).contains("unknown section"));
        assert!(config_message(parse("[env]\nid one-d\n")).contains("key = value"));
        assert!(config_message(parse("[env]\nid = a\nid = b\n")).contains("duplicate"));
        assert!(config_message(parse("[env]\nid = mujoco\n")).contains("unknown environment"));
    }

    #[test]
    fn short_buffer_is_rejected_with_the_constraint() {
        let m = config_message(parse("[delays]\nalpha = 2\nbeta = 3\nbuffer_len = 4\n"));
        assert!(m.contains("max_alpha + max_beta"), "{m}");
    }

    #[test]
    fn canonical_form_is_a_fixed_point() {
        let text = "# comment\n[agent]\nid = sac\nlr = 0.001\nhidden = 32,32\nmax_fragment = 2\n\n\
                    [delays]\nkind = uniform\nalpha_max = 2\nbeta_max = 3\n\n[run]\nseed = 7\nout = x.csv\n";
        let once = parse(text).unwrap().to_canonical_string();
        let twice = parse(&once).unwrap().to_canonical_string();
        assert_eq!(once, twice);
        assert_eq!(parse(&once).unwrap(), parse(text).unwrap());
    }

    #[test]
    fn overrides_replace_file_values() {
        let mut raw = RawConfig::parse("[agent]\nlr = 0.1\n", RUN_SECTIONS).unwrap();
        raw.set_override("agent.lr=0.5", RUN_SECTIONS).unwrap();
        raw.set_override("run.seed = 3", RUN_SECTIONS).unwrap();
        let c = RunConfig::from_raw(raw, PathBuf::from(".")).unwrap();
        assert_eq!((c.params.lr, c.seed), (0.5, 3));
        let mut raw = RawConfig::default();
        assert!(raw.set_override("nosection=1", RUN_SECTIONS).is_err());
    }

    #[test]
    fn sac_naive_carries_a_warning() {
        assert!(parse("[agent]\nid = sac-naive\n").unwrap().warning().is_some());
        assert!(parse("[agent]\nid = sac\n").unwrap().warning().is_none());
    }

    #[test]
    fn rtac_requires_its_channel() {
        let c = parse("[agent]\nid = rtac\n").unwrap();
        assert!(matches!(c.train_config(), Err(CliError::Core(dcac_core::Error::Config(_)))));
        let c = parse("[agent]\nid = rtac\n[delays]\nalpha = 0\nbeta = 1\n").unwrap();
        assert!(c.train_config().is_ok());
    }
}
