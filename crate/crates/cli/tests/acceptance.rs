//! One line per acceptance criterion. Criteria 1 to 7 are exact and
//! asserted; the learning comparisons (8 and 9) are reported, not asserted.
//!
//! Criterion 8 needs 3 x 100k steps per cell. It is read from
//! `results/learning/summary.csv` when that exists, or run here when
//! `DCAC_ACCEPTANCE_FULL=1`.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use dcac_cli::bench::{markov_check, run_benchmark_suite, BenchPlan, SummaryRow};
use dcac_cli::checks;
use dcac_cli::config::RunConfig;
use dcac_core::agents::AgentKind;

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn report(n: usize, pass: bool, detail: String) -> bool {
    println!("criterion {n} {}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn criterion_1() -> bool {
    let (rows, took) = timed(|| checks::oracle_check().unwrap());
    let worst = rows.iter().map(|r| r.max_abs_error).fold(0.0, f64::max);
    let pass = rows.len() == 80 && worst <= 1e-12 && took < Duration::from_secs(60);
    report(1, pass, format!("{} fixtures, max |error| {worst:.1e}, {:.1} s", rows.len(), took.as_secs_f64()))
}

fn bias_rows() -> (Vec<checks::BiasRow>, Duration) {
    timed(|| checks::bias_check(0.99).unwrap())
}

fn criterion_2(rows: &[checks::BiasRow], took: Duration) -> bool {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for check in ["bias-ratio-on-policy", "bias-ratio-resampled"] {
        for n in [1, 2, 3, 5] {
            let row = rows.iter().find(|r| r.check == check && r.n == n).expect("bias row");
            assert!((row.expected - 0.99f64.powi(n as i32)).abs() < 1e-15);
            worst = worst.max((row.value - row.expected).abs());
            count += 1;
        }
    }
    let n3 = rows.iter().find(|r| r.check == "bias-ratio-resampled" && r.n == 3).unwrap().value;
    let pass = count == 8 && worst <= 1e-10 && took < Duration::from_secs(60);
    report(2, pass, format!("n = 1, 2, 3, 5 on and off policy, max |ratio - gamma^n| {worst:.1e}, n = 3 gives {n3:.6}"))
}

fn criterion_3(rows: &[checks::BiasRow]) -> bool {
    let on: Vec<_> = rows.iter().filter(|r| r.check == "unbiased-on-policy").collect();
    let off: Vec<_> = rows.iter().filter(|r| r.check == "unbiased-resampled").collect();
    let worst = on.iter().chain(&off).map(|r| (r.value - r.expected).abs()).fold(0.0, f64::max);
    let pass = on.len() == 80 && !off.is_empty() && worst <= 1e-12;
    report(
        3,
        pass,
        format!(
            "{} fixtures on policy, {} constant-delay fixtures resampled, max |E[v_n] - v| {worst:.1e} \
             (fragments cut at the validity length under random delays are biased; see the decision ledger)",
            on.len(),
            off.len()
        ),
    )
}

fn criterion_4(rows: &[checks::BiasRow]) -> bool {
    let steady: Vec<_> = rows.iter().filter(|r| r.check == "steady-state").collect();
    let worst = steady.iter().map(|r| (r.value - r.expected).abs()).fold(0.0, f64::max);
    report(4, !steady.is_empty() && worst <= 1e-10, format!("{} horizons, max |ratio - gamma^n| {worst:.1e}", steady.len()))
}

fn criterion_5() -> bool {
    use dcac_core::fixtures::{LEFT as L, RIGHT as R};
    let demo = checks::resample_demo().unwrap();
    let pass = demo.validity_length == 2 && demo.resampled == vec![vec![R, L, L], vec![R, R, L]];
    let letters: Vec<String> = demo
        .resampled
        .iter()
        .map(|b| b.iter().map(|&a| if a == R { "R" } else { "L" }).collect::<Vec<_>>().join(","))
        .collect();
    report(5, pass, format!("validity length {}, resampled buffers ({})", demo.validity_length, letters.join("), (")))
}

fn criterion_6() -> bool {
    let c = checks::channel_check().unwrap();
    let pass = c.kernel_mismatches == 0 && c.max_telescoping_error <= 1e-12 && c.growth_violations == 0 && c.growth_ticks >= 1_000_000;
    report(
        6,
        pass,
        format!(
            "{} mismatching of {} kernel ticks, telescoping error {:.1e}, {} growth violations in {} ticks",
            c.kernel_mismatches, c.kernel_ticks, c.max_telescoping_error, c.growth_violations, c.growth_ticks
        ),
    )
}

fn criterion_7() -> bool {
    let (rows, took) = timed(|| checks::gradient_check(0).unwrap());
    let worst = rows.iter().map(|r| r.rel_error).fold(0.0, f64::max);
    let pass = rows.len() == 4 && worst < 1e-3 && took < Duration::from_secs(30);
    report(7, pass, format!("{} losses, max relative error {worst:.1e}, {:.1} s", rows.len(), took.as_secs_f64()))
}

fn find(rows: &[SummaryRow], alpha: usize, beta: usize, agent: AgentKind) -> Option<&SummaryRow> {
    rows.iter().find(|r| r.cell.env == "point-mass" && (r.cell.alpha, r.cell.beta, r.cell.agent) == (alpha, beta, agent))
}

fn parse_summary(text: &str) -> Vec<SummaryRow> {
    text.lines()
        .skip(1)
        .filter_map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            let delay = f.get(1)?.strip_prefix('a')?;
            let (a, b) = delay.split_once('b')?;
            let cell = dcac_cli::bench::Cell::parse(&format!("{}:{a}:{b}:{}", f[0], f[2])).ok()?;
            Some(SummaryRow {
                cell,
                scores: Vec::new(),
                mean: f[3].parse().ok()?,
                lo90: f[4].parse().ok()?,
                hi90: f[5].parse().ok()?,
            })
        })
        .collect()
}

fn criterion_8() -> Option<bool> {
    let config = workspace().join("configs/learning.bench");
    let saved = workspace().join("results/learning/summary.csv");
    let (rows, source) = if std::env::var("DCAC_ACCEPTANCE_FULL").is_ok_and(|v| v == "1") {
        let plan = BenchPlan::load(&config, &[]).unwrap();
        let out = std::env::temp_dir().join("dcac-acceptance-learning");
        let (rows, took) = timed(|| run_benchmark_suite(&plan, &out, &|_| {}).unwrap());
        (rows, format!("run here in {:.0} min", took.as_secs_f64() / 60.0))
    } else if let Ok(text) = std::fs::read_to_string(&saved) {
        (parse_summary(&text), "from results/learning/summary.csv".to_string())
    } else {
        println!("criterion 8 NOT RUN: no results/learning/summary.csv; set DCAC_ACCEPTANCE_FULL=1 (hours on one core)");
        return None;
    };
    let cells = (
        find(&rows, 2, 3, AgentKind::Dcac),
        find(&rows, 2, 3, AgentKind::Sac),
        find(&rows, 0, 1, AgentKind::Rtac),
        find(&rows, 0, 1, AgentKind::Sac),
    );
    let (Some(dcac), Some(sac), Some(rtac), Some(sac01)) = cells else {
        return Some(report(8, false, format!("summary is missing cells ({source})")));
    };
    let margin = dcac.half_width() + sac.half_width();
    let advantage = dcac.mean - sac.mean > margin;
    let non_inferior = rtac.mean + rtac.half_width() + sac01.half_width() >= sac01.mean;
    Some(report(
        8,
        advantage && non_inferior,
        format!(
            "a2b3: dcac {:.3} vs sac {:.3}, needs a gap above {margin:.3}; a0b1: rtac {:.3} +- {:.3} vs sac {:.3} +- {:.3} ({source})",
            dcac.mean,
            sac.mean,
            rtac.mean,
            rtac.half_width(),
            sac01.mean,
            sac01.half_width()
        ),
    ))
}

fn criterion_9() -> bool {
    let path = workspace().join("configs/markov.cfg");
    let augmented = RunConfig::load(&path).unwrap();
    let naive = RunConfig::load_with_overrides(&path, &["agent.id=sac-naive".to_string()]).unwrap();
    let m = markov_check(&naive, &augmented, &[0, 1, 2], 100).unwrap();
    report(
        9,
        m.pass(),
        format!(
            "random {:.3}, sac-naive {:.3} (p = {:.3}), augmented sac {:.3} ({:.1} standard errors above random)",
            m.random_mean, m.naive_mean, m.naive_test.p_value, m.augmented_mean, m.augmented_z
        ),
    )
}

#[test]
fn acceptance() {
    let (bias, took) = bias_rows();
    let exact = [
        criterion_1(),
        criterion_2(&bias, took),
        criterion_3(&bias),
        criterion_4(&bias),
        criterion_5(),
        criterion_6(),
        criterion_7(),
    ];
    criterion_8();
    criterion_9();
    assert!(exact.iter().all(|&p| p), "an exact criterion failed");
}
