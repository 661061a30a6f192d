//! On-disk formats: delay histograms, metrics and episode logs, network
//! checkpoints. CSVs use `\n` line endings and Rust's locale-free float
//! formatting.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use dcac_core::agents::MetricsRow;
use dcac_core::delay::{ChannelLog, DelayProcess};
use dcac_core::nn::{Activation, Mlp};

use crate::error::{CliError, Result};

/// Reads a `delay_ticks,count` histogram. A header line with those names
/// and `#` comment lines are allowed. Delays above `max_delay` are folded
/// into it; without a maximum the largest listed delay is used.
pub fn load_delay_histogram(path: &Path, max_delay: Option<usize>) -> Result<DelayProcess> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_delay_histogram(BufReader::new(file), max_delay)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn parse_delay_histogram(reader: impl BufRead, max_delay: Option<usize>) -> Result<DelayProcess, String> {
    let mut counts = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| format!("line {n}: {e}"))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (counts.is_empty() && line == "delay_ticks,count") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [delay, count] = fields[..] else {
            return Err(format!("line {n}: expected `delay_ticks,count`, got `{line}`"));
        };
        let delay: usize = delay.parse().map_err(|_| format!("line {n}: delay `{delay}` is not a non-negative integer"))?;
        let count: i64 = count.parse().map_err(|_| format!("line {n}: count `{count}` is not an integer"))?;
        if count < 0 {
            return Err(format!("line {n}: negative count {count}"));
        }
        counts.push((delay, count as f64));
    }
    if counts.is_empty() {
        return Err("line 1: the histogram has no rows".to_string());
    }
    let max = max_delay.unwrap_or_else(|| counts.iter().map(|c| c.0).max().unwrap_or(0));
    DelayProcess::from_counts(&counts, max).map_err(|e| e.to_string())
}

pub const METRICS_HEADER: &str = "step,eval_return,critic_loss,actor_loss,mean_n,alpha_mean,beta_mean";

/// Streams metrics rows, flushing after each one.
pub struct MetricsWriter<W: Write> {
    out: W,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(mut out: W) -> std::io::Result<Self> {
        writeln!(out, "{METRICS_HEADER}")?;
        out.flush()?;
        Ok(MetricsWriter { out })
    }

    pub fn write(&mut self, r: &MetricsRow) -> std::io::Result<()> {
        writeln!(
            self.out,
            "{},{},{},{},{},{},{}",
            r.step, r.eval_return, r.critic_loss, r.actor_loss, r.mean_n, r.alpha_mean, r.beta_mean
        )?;
        self.out.flush()
    }
}

pub fn parse_metrics(text: &str) -> Result<Vec<MetricsRow>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err("missing metrics header".to_string());
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(format!("line {}: expected 7 fields", i + 2));
            }
            let num = |k: usize| f[k].parse::<f64>().map_err(|e| format!("line {}: {e}", i + 2));
            Ok(MetricsRow {
                step: f[0].parse().map_err(|e| format!("line {}: {e}", i + 2))?,
                eval_return: num(1)?,
                critic_loss: num(2)?,
                actor_loss: num(3)?,
                mean_n: num(4)?,
                alpha_mean: num(5)?,
                beta_mean: num(6)?,
            })
        })
        .collect()
}

/// `tick,alpha,beta,kappa,reward,terminal`, one line per agent tick; `kappa`
/// is empty when unknown.
pub fn write_episode_log(out: &mut impl Write, log: &ChannelLog) -> std::io::Result<()> {
    writeln!(out, "tick,alpha,beta,kappa,reward,terminal")?;
    for t in &log.ticks {
        let s = &t.next_state;
        let kappa = s.kappa.map(|k| k.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{},{},{}", t.tick, s.alpha, s.beta, kappa, t.reward, u8::from(t.terminal))?;
    }
    out.flush()
}

fn activation_tag(a: Activation) -> &'static str {
    match a {
        Activation::Silu => "silu",
        Activation::Tanh => "tanh",
        Activation::Relu => "relu",
    }
}

/// A text header `dcac-mlp sizes=17,64,64,2 activation=silu` and a newline,
/// then every parameter as a little-endian f64, layer by layer (weights
/// row-major, then biases).
pub fn write_checkpoint(out: &mut impl Write, net: &Mlp) -> std::io::Result<()> {
    let sizes: Vec<String> = net.sizes().iter().map(|s| s.to_string()).collect();
    writeln!(out, "dcac-mlp sizes={} activation={}", sizes.join(","), activation_tag(net.activation()))?;
    for v in net.flat() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()
}

pub fn save_checkpoint(path: &Path, net: &Mlp) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    write_checkpoint(&mut BufWriter::new(file), net).map_err(|e| CliError::io(path, e))
}

pub fn read_checkpoint(input: &mut impl Read) -> Result<Mlp, String> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(|e| e.to_string())?;
    let Some(nl) = bytes.iter().position(|&b| b == b'\n') else {
        return Err("checkpoint has no header line".to_string());
    };
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| "checkpoint header is not UTF-8".to_string())?;
    let mut parts = header.split(' ');
    if parts.next() != Some("dcac-mlp") {
        return Err(format!("unrecognized checkpoint header `{header}`"));
    }
    let (mut sizes, mut activation) = (None, None);
    for p in parts {
        match p.split_once('=') {
            Some(("sizes", v)) => {
                sizes = Some(v.split(',').map(|s| s.parse::<usize>()).collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?)
            }
            Some(("activation", "silu")) => activation = Some(Activation::Silu),
            Some(("activation", "tanh")) => activation = Some(Activation::Tanh),
            Some(("activation", "relu")) => activation = Some(Activation::Relu),
            _ => return Err(format!("unrecognized header field `{p}`")),
        }
    }
    let (Some(sizes), Some(activation)) = (sizes, activation) else {
        return Err("checkpoint header lacks sizes or activation".to_string());
    };
    let body = &bytes[nl + 1..];
    if body.len() % 8 != 0 {
        return Err("checkpoint body is not a whole number of f64 values".to_string());
    }
    let flat: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Mlp::from_flat(&sizes, activation, &flat).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use dcac_core::delay::DelayKind;
    use dcac_core::rng::seeded;

    fn hist(text: &str, max: Option<usize>) -> Result<DelayProcess, String> {
        parse_delay_histogram(text.as_bytes(), max)
    }

    #[test]
    fn counts_are_normalized() {
        let p = hist("delay_ticks,count\n1,50\n2,30\n3,20\n", None).unwrap();
        let DelayKind::Histogram(m) = p.kind() else { panic!() };
        assert_eq!(m.len(), 4);
        for (got, want) in m.iter().zip([0.0, 0.5, 0.3, 0.2]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn long_delays_fold_into_the_maximum() {
        let p = hist("# wifi\n1,1\n10,1\n", Some(4)).unwrap();
        assert_eq!(p.max_delay(), 4);
        assert_eq!(p.pmf(0), vec![(1, 0.5), (4, 0.5)]);
    }

    #[test]
    fn single_row_is_a_dirac() {
        let p = hist("3,7\n", None).unwrap();
        assert_eq!(p.pmf(0), vec![(3, 1.0)]);
    }

    #[test]
    fn malformed_input_names_the_line() {
        assert!(hist("1,2\n2\n", None).unwrap_err().starts_with("line 2"));
        assert!(hist("1,2\n2,-1\n", None).unwrap_err().contains("negative"));
        assert!(hist("# only a comment\n", None).unwrap_err().contains("no rows"));
        assert!(hist("1,x\n", None).unwrap_err().starts_with("line 1"));
    }

    #[test]
    fn checkpoint_round_trips() {
        let net = Mlp::new(&[3, 4, 2], Activation::Tanh, &mut seeded(1)).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &net).unwrap();
        assert!(buf.starts_with(b"dcac-mlp sizes=3,4,2 activation=tanh\n"));
        let back = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(back.flat(), net.flat());
        assert_eq!(back.sizes(), net.sizes());
    }

    #[test]
    fn metrics_round_trip_including_nan() {
        let row = MetricsRow {
            step: 1000,
            eval_return: -1.25,
            critic_loss: f64::NAN,
            actor_loss: 0.1,
            mean_n: 4.5,
            alpha_mean: 2.0,
            beta_mean: 3.0,
        };
        let mut buf = Vec::new();
        MetricsWriter::new(&mut buf).unwrap().write(&row).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, format!("{METRICS_HEADER}\n1000,-1.25,NaN,0.1,4.5,2,3\n"));
        let back = parse_metrics(&text).unwrap();
        assert_eq!(back[0].step, 1000);
        assert!(back[0].critic_loss.is_nan());
    }
}
