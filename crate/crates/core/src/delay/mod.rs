//! Random-delay augmentation of an undelayed environment.
//!
//! An augmented state is `x = <s, u, alpha, beta>`: the most recent delayed
//! observation `s`, the buffer `u` of the last `K` actions sent (newest
//! first), the observation delay `alpha` of `s` and the action delay `beta`
//! of the last action that influenced `s`.

mod channel;
mod kernel;

pub use channel::{
    channel_simulate, ChannelConfig, ChannelLog, ChannelRecord, ChannelSim, ChannelStep, LatencySource,
    TickRecord,
};
pub use kernel::{cdmdp_step, f_delta_sample, initial_state, rdmdp_step, DelayedStep, FDeltaOutcome, Rdmdp};

use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;

use crate::error::{bail, Result};
use crate::mdp::Action;
use crate::rng::sample_categorical;

/// The last `K` actions sent, newest first. Entry 1 is the most recent.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionBuffer {
    entries: Vec<Action>,
}

impl ActionBuffer {
    /// A buffer of `k` copies of `fill`.
    pub fn filled(k: usize, fill: Action) -> Result<Self> {
        if k == 0 {
            bail!(InvalidArgument, "an action buffer needs length at least 1");
        }
        Ok(ActionBuffer { entries: vec![fill; k] })
    }

    /// Builds a buffer from entries listed newest first.
    pub fn from_entries(entries: Vec<Action>) -> Result<Self> {
        if entries.is_empty() {
            bail!(InvalidArgument, "an action buffer needs length at least 1");
        }
        Ok(ActionBuffer { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Entry `i` for `1 <= i <= K`.
    pub fn get(&self, i: usize) -> Option<&Action> {
        if i == 0 {
            None
        } else {
            self.entries.get(i - 1)
        }
    }

    /// Entries newest first.
    pub fn entries(&self) -> &[Action] {
        &self.entries
    }

    /// Returns `(a, u[1], ..., u[K-1])`.
    pub fn push(&self, a: Action) -> ActionBuffer {
        let mut next = self.clone();
        next.push_in_place(a);
        next
    }

    pub fn push_in_place(&mut self, a: Action) {
        self.entries.pop();
        self.entries.insert(0, a);
    }

    /// The action applied by a transition with pending action `a`:
    /// `u[0] = a`, otherwise the buffer entry.
    pub fn applied(&self, index: usize, a: &Action) -> Result<Action> {
        if index == 0 {
            return Ok(a.clone());
        }
        match self.get(index) {
            Some(b) => Ok(b.clone()),
            None => bail!(
                ContractViolation,
                "buffer index {index} outside 0..={}; delay maxima exceed the buffer length",
                self.len()
            ),
        }
    }
}

/// The augmented state `<s, u, alpha, beta>` plus the optional side input
/// `kappa`, the delay of the action that is about to be applied remotely.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedState {
    pub obs: crate::mdp::Observation,
    pub buffer: ActionBuffer,
    pub alpha: usize,
    pub beta: usize,
    pub kappa: Option<usize>,
}

impl AugmentedState {
    pub fn total_delay(&self) -> usize {
        self.alpha + self.beta
    }

    /// Checks the delay bounds against the configured maxima.
    pub fn validate(&self, max_alpha: usize, max_beta: usize) -> Result<()> {
        if self.beta == 0 {
            bail!(InvalidArgument, "action delay must be at least 1");
        }
        if self.alpha > max_alpha || self.beta > max_beta {
            bail!(
                InvalidArgument,
                "delays ({}, {}) exceed maxima ({max_alpha}, {max_beta})",
                self.alpha,
                self.beta
            );
        }
        if self.total_delay() > self.buffer.len() {
            bail!(
                InvalidArgument,
                "total delay {} exceeds buffer length {}",
                self.total_delay(),
                self.buffer.len()
            );
        }
        if let Some(k) = self.kappa {
            if k > self.beta {
                bail!(InvalidArgument, "kappa {k} exceeds beta {}", self.beta);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DelayKind {
    Constant(usize),
    /// `rows[d][d']` is the probability of moving from delay `d` to `d'`.
    Conditional(Vec<Vec<f64>>),
    /// Independent draws from a marginal over `0..=max_delay`.
    Histogram(Vec<f64>),
}

/// A discrete, possibly self-correlated delay distribution with a hard maximum.
#[derive(Clone, Debug, PartialEq)]
pub struct DelayProcess {
    max_delay: usize,
    kind: DelayKind,
}

const ROW_TOLERANCE: f64 = 1e-12;

fn check_row(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        bail!(InvalidArgument, "{what} has a negative or non-finite mass");
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > ROW_TOLERANCE {
        bail!(InvalidArgument, "{what} sums to {total}, not 1");
    }
    Ok(())
}

impl DelayProcess {
    pub fn constant(d: usize) -> Self {
        DelayProcess {
            max_delay: d,
            kind: DelayKind::Constant(d),
        }
    }

    /// A Markov chain on delays `0..rows.len()`.
    pub fn conditional(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            bail!(InvalidArgument, "a conditional delay table needs at least one row");
        }
        let n = rows.len();
        for (d, row) in rows.iter().enumerate() {
            if row.len() != n {
                bail!(InvalidArgument, "delay row {d} has length {}, expected {n}", row.len());
            }
            check_row(row, &alloc::format!("delay row {d}"))?;
        }
        Ok(DelayProcess {
            max_delay: n - 1,
            kind: DelayKind::Conditional(rows),
        })
    }

    /// An iid process from a normalized marginal over `0..masses.len()`.
    pub fn histogram(masses: Vec<f64>) -> Result<Self> {
        if masses.is_empty() {
            bail!(InvalidArgument, "a delay histogram needs at least one bin");
        }
        check_row(&masses, "delay histogram")?;
        let mut masses = masses;
        // trailing empty bins do not raise the maximum
        while masses.len() > 1 && masses[masses.len() - 1] == 0.0 {
            masses.pop();
        }
        Ok(DelayProcess {
            max_delay: masses.len() - 1,
            kind: DelayKind::Histogram(masses),
        })
    }

    /// Normalizes `(delay, count)` pairs, folding delays above `max_delay`
    /// into `max_delay`.
    pub fn from_counts(counts: &[(usize, f64)], max_delay: usize) -> Result<Self> {
        let mut masses = vec![0.0; max_delay + 1];
        let mut total = 0.0;
        for &(d, c) in counts {
            if !c.is_finite() || c < 0.0 {
                bail!(InvalidArgument, "delay count for {d} is negative or non-finite");
            }
            masses[d.min(max_delay)] += c;
            total += c;
        }
        if total <= 0.0 {
            bail!(InvalidArgument, "delay histogram has no mass");
        }
        masses.iter_mut().for_each(|m| *m /= total);
        Self::histogram(masses)
    }

    /// Independent uniform delays on `lo..=hi`.
    pub fn uniform(lo: usize, hi: usize) -> Result<Self> {
        if lo > hi {
            bail!(InvalidArgument, "empty delay range {lo}..={hi}");
        }
        let mut masses = vec![0.0; hi + 1];
        let p = 1.0 / (hi - lo + 1) as f64;
        masses[lo..=hi].iter_mut().for_each(|m| *m = p);
        Self::histogram(masses)
    }

    pub fn max_delay(&self) -> usize {
        self.max_delay
    }

    pub fn kind(&self) -> &DelayKind {
        &self.kind
    }

    /// Smallest delay with positive probability from any state.
    pub fn min_delay(&self) -> usize {
        match &self.kind {
            DelayKind::Constant(d) => *d,
            DelayKind::Histogram(m) => m.iter().position(|p| *p > 0.0).unwrap_or(0),
            DelayKind::Conditional(rows) => rows
                .iter()
                .filter_map(|r| r.iter().position(|p| *p > 0.0))
                .min()
                .unwrap_or(0),
        }
    }

    /// The distribution of the next delay given the current one, as
    /// `(delay, probability)` pairs with positive probability.
    pub fn pmf(&self, current: usize) -> Vec<(usize, f64)> {
        let row: &[f64] = match &self.kind {
            DelayKind::Constant(d) => return vec![(*d, 1.0)],
            DelayKind::Histogram(m) => m,
            DelayKind::Conditional(rows) => &rows[current.min(rows.len() - 1)],
        };
        row.iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(d, p)| (d, *p))
            .collect()
    }

    /// Draws the next delay. Processes with a single support point consume
    /// no randomness.
    pub fn sample(&self, current: usize, rng: &mut dyn RngCore) -> usize {
        let row: &[f64] = match &self.kind {
            DelayKind::Constant(d) => return *d,
            DelayKind::Histogram(m) => m,
            DelayKind::Conditional(rows) => &rows[current.min(rows.len() - 1)],
        };
        let mut support = row.iter().enumerate().filter(|(_, p)| **p > 0.0);
        if let (Some((d, _)), None) = (support.next(), support.next()) {
            return d;
        }
        sample_categorical(row, rng)
    }

    /// Whether `p(d' | d) = 0` whenever `d' > d + 1`, as required of
    /// observation delays.
    pub fn growth_bounded(&self) -> bool {
        match &self.kind {
            DelayKind::Constant(_) => true,
            DelayKind::Histogram(_) => self.max_delay <= self.min_delay() + 1,
            DelayKind::Conditional(rows) => rows
                .iter()
                .enumerate()
                .all(|(d, row)| row.iter().skip(d + 2).all(|p| *p == 0.0)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l() -> Action {
        Action::Discrete(0)
    }
    fn r() -> Action {
        Action::Discrete(1)
    }

    #[test]
    fn push_drops_oldest() {
        let u = ActionBuffer::filled(3, l()).unwrap();
        let pushed = u.push(r());
        assert_eq!(pushed.entries(), &[r(), l(), l()]);
    }

    #[test]
    fn push_on_unit_buffer_replaces() {
        let u = ActionBuffer::filled(1, Action::Discrete(2)).unwrap();
        assert_eq!(u.push(Action::Discrete(5)).entries(), &[Action::Discrete(5)]);
    }

    #[test]
    fn consecutive_pushes_shift() {
        let u = ActionBuffer::from_entries(vec![Action::Discrete(1), Action::Discrete(2)]).unwrap();
        let v = u.push(Action::Discrete(7)).push(Action::Discrete(8));
        assert_eq!(v.entries(), &[Action::Discrete(8), Action::Discrete(7)]);
    }

    #[test]
    fn counts_are_normalized() {
        let p = DelayProcess::from_counts(&[(1, 50.0), (2, 30.0), (3, 20.0)], 3).unwrap();
        assert_eq!(p.pmf(0), vec![(1, 0.5), (2, 0.3), (3, 0.2)]);
    }

    #[test]
    fn over_maximum_counts_fold_into_maximum() {
        let p = DelayProcess::from_counts(&[(1, 1.0), (10, 3.0)], 4).unwrap();
        assert_eq!(p.pmf(0), vec![(1, 0.25), (4, 0.75)]);
        assert_eq!(p.max_delay(), 4);
    }

    #[test]
    fn single_bin_is_dirac() {
        let p = DelayProcess::from_counts(&[(2, 7.0)], 4).unwrap();
        let mut rng = crate::rng::seeded(1);
        assert!((0..100).all(|_| p.sample(0, &mut rng) == 2));
    }

    #[test]
    fn growth_bound_detection() {
        let ok = DelayProcess::conditional(vec![vec![0.5, 0.5, 0.0], vec![0.2, 0.3, 0.5], vec![0.1, 0.1, 0.8]]).unwrap();
        assert!(ok.growth_bounded());
        let jump = DelayProcess::conditional(vec![vec![0.5, 0.0, 0.5], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        assert!(!jump.growth_bounded());
        assert!(!DelayProcess::uniform(0, 2).unwrap().growth_bounded());
    }

    #[test]
    fn validate_rejects_zero_action_delay() {
        let x = AugmentedState {
            obs: crate::mdp::Observation::Discrete(0),
            buffer: ActionBuffer::filled(2, l()).unwrap(),
            alpha: 0,
            beta: 0,
            kappa: None,
        };
        assert!(x.validate(1, 1).is_err());
    }
}
