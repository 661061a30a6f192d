//! Exact computation on small randomly delayed finite MDPs.
//!
//! The augmented state space `S x A^K x {alpha} x {beta}` is indexed densely
//! and its transition kernel is built exactly: the variable-step update is
//! expanded level by level without sampling. Rewards are kept as exact
//! atoms (the `f64` sums produced along each path, keyed by bit pattern),
//! so equalities between trajectory distributions are checked pointwise.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float;

use crate::delay::{ActionBuffer, AugmentedState, DelayProcess};
use crate::error::{bail, Result};
use crate::mdp::{Action, FiniteMdp, Observation};
use crate::policy::Policy;

/// Largest augmented state space the oracle will build.
pub const MAX_AUGMENTED_STATES: usize = 1_000_000;
/// Largest number of trajectories an enumeration may hold.
pub const MAX_TRAJECTORIES: usize = 1_000_000;

/// One successor in an exact transition row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Successor {
    pub next: usize,
    pub reward: f64,
    pub prob: f64,
}

/// Exact outcome distribution of the variable-step update:
/// `((s', beta', reward), probability)`.
pub type FDeltaTable = Vec<((usize, usize, f64), f64)>;

/// A finite MDP augmented with random observation and action delays.
#[derive(Clone, Debug)]
pub struct AugmentedFiniteMdp {
    base: FiniteMdp,
    p_alpha: DelayProcess,
    p_beta: DelayProcess,
    buffer_len: usize,
    alpha_lo: usize,
    alpha_hi: usize,
    beta_lo: usize,
    beta_hi: usize,
    num_states: usize,
    /// `rows[x * A + a]`.
    rows: Vec<Vec<Successor>>,
}

fn reward_key(r: f64) -> u64 {
    // fold -0.0 into 0.0 so equal atoms share a key
    (r + 0.0).to_bits()
}

impl AugmentedFiniteMdp {
    /// Builds the exact kernel with `K = max_alpha + max_beta`.
    pub fn build(base: FiniteMdp, p_alpha: DelayProcess, p_beta: DelayProcess) -> Result<Self> {
        let k = p_alpha.max_delay() + p_beta.max_delay();
        Self::build_with_buffer(base, p_alpha, p_beta, k)
    }

    pub fn build_with_buffer(base: FiniteMdp, p_alpha: DelayProcess, p_beta: DelayProcess, buffer_len: usize) -> Result<Self> {
        let alpha_hi = p_alpha.max_delay();
        let beta_hi = p_beta.max_delay();
        let alpha_lo = p_alpha.min_delay();
        let beta_lo = p_beta.min_delay().max(1);
        if beta_hi == 0 {
            bail!(InvalidArgument, "action delays must be at least 1");
        }
        if buffer_len < alpha_hi + beta_hi {
            bail!(InvalidArgument, "buffer length {buffer_len} below max_alpha + max_beta");
        }
        let a = base.num_actions();
        let mut size = base.num_states();
        for _ in 0..buffer_len {
            size = size.saturating_mul(a);
        }
        size = size.saturating_mul(alpha_hi - alpha_lo + 1).saturating_mul(beta_hi - beta_lo + 1);
        if size > MAX_AUGMENTED_STATES {
            bail!(Capacity, "augmented state space of size {size} exceeds {MAX_AUGMENTED_STATES}");
        }
        let mut aug = AugmentedFiniteMdp {
            base,
            p_alpha,
            p_beta,
            buffer_len,
            alpha_lo,
            alpha_hi,
            beta_lo,
            beta_hi,
            num_states: size,
            rows: Vec::new(),
        };
        let mut rows = Vec::with_capacity(size * a);
        for x in 0..size {
            for action in 0..a {
                rows.push(aug.exact_row(x, action)?);
            }
        }
        aug.rows = rows;
        Ok(aug)
    }

    pub fn base(&self) -> &FiniteMdp {
        &self.base
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.base.num_actions()
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer_len
    }

    pub fn max_alpha(&self) -> usize {
        self.alpha_hi
    }

    pub fn max_beta(&self) -> usize {
        self.beta_hi
    }

    fn buffer_codes(&self) -> usize {
        self.base.num_actions().pow(self.buffer_len as u32)
    }

    /// Dense index of `<s, u, alpha, beta>`.
    pub fn index_of(&self, s: usize, buffer: &[usize], alpha: usize, beta: usize) -> Result<usize> {
        let a = self.base.num_actions();
        if s >= self.base.num_states()
            || buffer.len() != self.buffer_len
            || buffer.iter().any(|&b| b >= a)
            || !(self.alpha_lo..=self.alpha_hi).contains(&alpha)
            || !(self.beta_lo..=self.beta_hi).contains(&beta)
        {
            bail!(InvalidArgument, "state <{s}, {buffer:?}, {alpha}, {beta}> is outside the augmented space");
        }
        let code = buffer.iter().fold(0, |c, &b| c * a + b);
        let nb = self.beta_hi - self.beta_lo + 1;
        let na = self.alpha_hi - self.alpha_lo + 1;
        Ok(((s * self.buffer_codes() + code) * na + (alpha - self.alpha_lo)) * nb + (beta - self.beta_lo))
    }

    pub fn index(&self, x: &AugmentedState) -> Result<usize> {
        let Some(s) = x.obs.as_discrete() else {
            bail!(InvalidArgument, "oracle states have discrete observations");
        };
        let mut buffer = Vec::with_capacity(x.buffer.len());
        for b in x.buffer.entries() {
            match b.as_discrete() {
                Some(i) => buffer.push(i),
                None => bail!(InvalidArgument, "oracle buffers hold discrete actions"),
            }
        }
        self.index_of(s, &buffer, x.alpha, x.beta)
    }

    /// Decodes an index into `(s, buffer, alpha, beta)`.
    pub fn decode(&self, index: usize) -> (usize, Vec<usize>, usize, usize) {
        let a = self.base.num_actions();
        let nb = self.beta_hi - self.beta_lo + 1;
        let na = self.alpha_hi - self.alpha_lo + 1;
        let beta = index % nb + self.beta_lo;
        let rest = index / nb;
        let alpha = rest % na + self.alpha_lo;
        let rest = rest / na;
        let mut code = rest % self.buffer_codes();
        let s = rest / self.buffer_codes();
        let mut buffer = vec![0; self.buffer_len];
        for i in (0..self.buffer_len).rev() {
            buffer[i] = code % a;
            code /= a;
        }
        (s, buffer, alpha, beta)
    }

    pub fn state(&self, index: usize) -> AugmentedState {
        let (s, buffer, alpha, beta) = self.decode(index);
        AugmentedState {
            obs: Observation::Discrete(s),
            buffer: ActionBuffer::from_entries(buffer.into_iter().map(Action::Discrete).collect())
                .expect("buffer length is positive"),
            alpha,
            beta,
            kappa: None,
        }
    }

    pub fn is_terminal(&self, index: usize) -> bool {
        self.base.terminal(self.decode(index).0)
    }

    /// The initial augmented state for base state `s`: null-action buffer
    /// and maximal delays.
    pub fn initial_index(&self, s: usize) -> Result<usize> {
        self.index_of(s, &vec![0; self.buffer_len], self.alpha_hi, self.beta_hi)
    }

    /// Exact variable-step update from `<s, u, alpha, beta>` with pending
    /// action `a` and observation-delay change `delta`.
    pub fn f_delta_exact(&self, s: usize, buffer: &[usize], alpha: usize, beta: usize, a: usize, delta: isize) -> Result<FDeltaTable> {
        if delta < -1 || delta > alpha as isize {
            bail!(InvalidArgument, "delta {delta} out of range for alpha {alpha}");
        }
        let mut dist: Vec<((usize, usize, f64), f64)> = vec![((s, beta, 0.0), 1.0)];
        for level in 0..=delta {
            let mut next: BTreeMap<(usize, usize, u64), (f64, f64)> = BTreeMap::new();
            for &((sc, bc, r), p) in &dist {
                if self.base.terminal(sc) {
                    let e = next.entry((sc, bc, reward_key(r))).or_insert((r, 0.0));
                    e.1 += p;
                    continue;
                }
                for (nb, pb) in self.p_beta.pmf(bc) {
                    let idx = alpha - level as usize + nb;
                    let applied = if idx == 0 {
                        a
                    } else if idx <= buffer.len() {
                        buffer[idx - 1]
                    } else {
                        bail!(ContractViolation, "buffer index {idx} outside 0..={}", buffer.len());
                    };
                    let reward = r + self.base.reward(sc, applied);
                    for (sn, &ps) in self.base.transition_row(sc, applied).iter().enumerate() {
                        if ps == 0.0 {
                            continue;
                        }
                        let e = next.entry((sn, nb, reward_key(reward))).or_insert((reward, 0.0));
                        e.1 += p * pb * ps;
                    }
                }
            }
            dist = next.into_iter().map(|((sn, nb, _), (r, p))| ((sn, nb, r), p)).collect();
        }
        Ok(dist)
    }

    fn exact_row(&self, x: usize, a: usize) -> Result<Vec<Successor>> {
        let (s, buffer, alpha, beta) = self.decode(x);
        let mut pushed = Vec::with_capacity(self.buffer_len);
        pushed.push(a);
        pushed.extend_from_slice(&buffer[..self.buffer_len - 1]);
        let mut merged: BTreeMap<(usize, u64), (f64, f64)> = BTreeMap::new();
        for (na, pa) in self.p_alpha.pmf(alpha) {
            if na > alpha + 1 {
                bail!(ContractViolation, "observation delay can jump from {alpha} to {na}");
            }
            let delta = alpha as isize - na as isize;
            for ((sn, nb, r), pf) in self.f_delta_exact(s, &buffer, alpha, beta, a, delta)? {
                let next = self.index_of(sn, &pushed, na, nb)?;
                let e = merged.entry((next, reward_key(r))).or_insert((r, 0.0));
                e.1 += pa * pf;
            }
        }
        Ok(merged
            .into_iter()
            .map(|((next, _), (reward, prob))| Successor { next, reward, prob })
            .collect())
    }

    /// Exact successors of state `x` under action `a`.
    pub fn row(&self, x: usize, a: usize) -> &[Successor] {
        &self.rows[x * self.base.num_actions() + a]
    }

    /// `pi(. | x)` for every augmented state.
    pub fn policy_table(&self, pi: &Policy) -> Result<Vec<Vec<f64>>> {
        (0..self.num_states)
            .map(|x| pi.distribution(&self.state(x), self.num_actions()))
            .collect()
    }
}

/// Key of one trajectory step: augmented index and reward atom.
pub type StepKey = (usize, u64);

/// Exact distribution over trajectories of at most `n` steps. Trajectories
/// end early at terminal states.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryDistribution {
    pub horizon: usize,
    pub table: BTreeMap<Vec<StepKey>, f64>,
}

impl TrajectoryDistribution {
    pub fn total(&self) -> f64 {
        self.table.values().sum()
    }

    /// Drops the last step of every full-length trajectory.
    pub fn marginalize_last(&self) -> TrajectoryDistribution {
        let mut table = BTreeMap::new();
        for (k, p) in &self.table {
            let key = if k.len() == self.horizon && !k.is_empty() { k[..k.len() - 1].to_vec() } else { k.clone() };
            *table.entry(key).or_insert(0.0) += p;
        }
        TrajectoryDistribution {
            horizon: self.horizon.saturating_sub(1),
            table,
        }
    }

    /// Largest pointwise absolute difference over the union of supports.
    pub fn max_abs_difference(&self, other: &TrajectoryDistribution) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, p) in &self.table {
            worst = worst.max((p - other.table.get(k).copied().unwrap_or(0.0)).abs());
        }
        for (k, q) in &other.table {
            if !self.table.contains_key(k) {
                worst = worst.max(q.abs());
            }
        }
        worst
    }
}

fn check_start(aug: &AugmentedFiniteMdp, x0: usize) -> Result<()> {
    if x0 >= aug.num_states() {
        bail!(InvalidArgument, "start index {x0} out of range");
    }
    Ok(())
}

/// Exact `n`-step state-reward distribution under `pi` from `x0`.
pub fn enumerate_p_n(aug: &AugmentedFiniteMdp, pi: &Policy, x0: usize, n: usize) -> Result<TrajectoryDistribution> {
    check_start(aug, x0)?;
    let policy = aug.policy_table(pi)?;
    let mut frontier: Vec<(Vec<StepKey>, usize, f64)> = vec![(Vec::new(), x0, 1.0)];
    let mut done: BTreeMap<Vec<StepKey>, f64> = BTreeMap::new();
    for _ in 0..n {
        let mut next_frontier = Vec::new();
        for (path, x, p) in frontier {
            if aug.is_terminal(x) {
                *done.entry(path).or_insert(0.0) += p;
                continue;
            }
            let mut branches: BTreeMap<StepKey, f64> = BTreeMap::new();
            for (a, &pa) in policy[x].iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                for succ in aug.row(x, a) {
                    *branches.entry((succ.next, reward_key(succ.reward))).or_insert(0.0) += pa * succ.prob;
                }
            }
            for (step, q) in branches {
                let mut longer = path.clone();
                longer.push(step);
                next_frontier.push((longer, step.0, p * q));
            }
            if next_frontier.len() + done.len() > MAX_TRAJECTORIES {
                bail!(Capacity, "more than {MAX_TRAJECTORIES} trajectories");
            }
        }
        frontier = next_frontier;
    }
    for (path, _, p) in frontier {
        *done.entry(path).or_insert(0.0) += p;
    }
    Ok(TrajectoryDistribution { horizon: n, table: done })
}

/// How [`apply_sigma_exact`] treats behaviour trajectories that break the
/// validity condition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValidityMode {
    /// Any supported trajectory breaking the condition is an error.
    Strict,
    /// Only trajectories satisfying the condition are compared, on both sides.
    Filter,
}

/// Both sides of the resampling identity: the pushforward of the behaviour
/// distribution through resampling, and the on-policy distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaCheck {
    pub lhs: TrajectoryDistribution,
    pub rhs: TrajectoryDistribution,
}

impl SigmaCheck {
    pub fn max_abs_error(&self) -> f64 {
        self.lhs.max_abs_difference(&self.rhs)
    }
}

/// First step `t` of a keyed trajectory whose total delay is below `t`.
fn violation(aug: &AugmentedFiniteMdp, path: &[StepKey]) -> Option<usize> {
    path.iter().enumerate().find_map(|(i, &(x, _))| {
        let (_, _, alpha, beta) = aug.decode(x);
        (alpha + beta < i + 1).then_some(i + 1)
    })
}

/// Computes `E_{tau ~ p^mu_n}[sigma^pi_n(. | x0; tau)]` and `p^pi_n(. | x0)`.
pub fn apply_sigma_exact(
    aug: &AugmentedFiniteMdp,
    pi: &Policy,
    mu: &Policy,
    x0: usize,
    n: usize,
    mode: ValidityMode,
) -> Result<SigmaCheck> {
    let behaviour = enumerate_p_n(aug, mu, x0, n)?;
    let pi_table = aug.policy_table(pi)?;
    let mut lhs: BTreeMap<Vec<StepKey>, f64> = BTreeMap::new();
    let mut kept = 0usize;
    for (path, p) in &behaviour.table {
        if let Some(t) = violation(aug, path) {
            match mode {
                ValidityMode::Strict => bail!(
                    ContractViolation,
                    "validity condition fails at t = {t} for a trajectory with probability {p}"
                ),
                ValidityMode::Filter => continue,
            }
        }
        kept += 1;
        // resampled trajectories: same s, alpha, beta, reward; buffers rebuilt
        let mut partial: Vec<(Vec<StepKey>, usize, f64)> = vec![(Vec::new(), x0, *p)];
        for &(x, r) in path {
            let (s, _, alpha, beta) = aug.decode(x);
            let mut next = Vec::new();
            for (prefix, prev, q) in partial {
                let (_, prev_buf, _, _) = aug.decode(prev);
                for (a, &pa) in pi_table[prev].iter().enumerate() {
                    if pa == 0.0 {
                        continue;
                    }
                    let mut buf = Vec::with_capacity(prev_buf.len());
                    buf.push(a);
                    buf.extend_from_slice(&prev_buf[..prev_buf.len() - 1]);
                    let star = aug.index_of(s, &buf, alpha, beta)?;
                    let mut key = prefix.clone();
                    key.push((star, r));
                    next.push((key, star, q * pa));
                }
            }
            partial = next;
        }
        for (key, _, q) in partial {
            *lhs.entry(key).or_insert(0.0) += q;
        }
    }
    if kept == 0 {
        bail!(ContractViolation, "no behaviour trajectory satisfies the validity condition");
    }
    let mut rhs = enumerate_p_n(aug, pi, x0, n)?;
    if mode == ValidityMode::Filter {
        rhs.table.retain(|path, _| violation(aug, path).is_none());
    }
    Ok(SigmaCheck {
        lhs: TrajectoryDistribution { horizon: n, table: lhs },
        rhs,
    })
}

/// Maximum number of sweeps before value iteration gives up.
pub const MAX_SWEEPS: usize = 1_000_000;

fn evaluate(
    aug: &AugmentedFiniteMdp,
    pi: &Policy,
    gamma: f64,
    entropy_scale: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&gamma) || tol <= 0.0 {
        bail!(InvalidArgument, "value iteration needs 0 <= gamma < 1 and tol > 0");
    }
    let policy = aug.policy_table(pi)?;
    let n = aug.num_states();
    // expected immediate term per state, computed once
    let mut immediate = vec![0.0; n];
    for x in 0..n {
        if aug.is_terminal(x) {
            continue;
        }
        for (a, &pa) in policy[x].iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            let r: f64 = aug.row(x, a).iter().map(|s| s.prob * s.reward).sum();
            immediate[x] += pa * (r - entropy_scale * pa.ln());
        }
    }
    let mut v = vec![0.0; n];
    for _ in 0..MAX_SWEEPS {
        let mut change: f64 = 0.0;
        let mut next = vec![0.0; n];
        for x in 0..n {
            if aug.is_terminal(x) {
                continue;
            }
            let mut tail = 0.0;
            for (a, &pa) in policy[x].iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                let ev: f64 = aug.row(x, a).iter().map(|s| s.prob * v[s.next]).sum();
                tail += pa * ev;
            }
            next[x] = immediate[x] + gamma * tail;
            change = change.max((next[x] - v[x]).abs());
        }
        v = next;
        if change <= tol {
            return Ok(v);
        }
    }
    bail!(Numerical, "value iteration did not converge in {MAX_SWEEPS} sweeps")
}

/// `v^pi` on every augmented state, to sup-norm change `tol`. Terminal
/// states have value 0.
pub fn value_iteration(aug: &AugmentedFiniteMdp, pi: &Policy, gamma: f64, tol: f64) -> Result<Vec<f64>> {
    evaluate(aug, pi, gamma, 0.0, tol)
}

/// Soft value `v(x) = E_a[-c log pi(a|x) + r + gamma v(x')]`.
pub fn soft_value_iteration(
    aug: &AugmentedFiniteMdp,
    pi: &Policy,
    gamma: f64,
    entropy_scale: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    evaluate(aug, pi, gamma, entropy_scale, tol)
}

/// Soft-optimal action values of a finite MDP:
/// `q(s,a) = r(s,a) + gamma E[v(s')]`, `v(s) = c log sum_a exp(q(s,a)/c)`.
pub fn soft_optimal_q(mdp: &FiniteMdp, gamma: f64, entropy_scale: f64, tol: f64) -> Result<Vec<Vec<f64>>> {
    if !(0.0..1.0).contains(&gamma) || entropy_scale <= 0.0 || tol <= 0.0 {
        bail!(InvalidArgument, "soft optimality needs 0 <= gamma < 1, positive scale and tol");
    }
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mut v = vec![0.0; ns];
    let mut q = vec![vec![0.0; na]; ns];
    for _ in 0..MAX_SWEEPS {
        for s in 0..ns {
            for a in 0..na {
                let ev: f64 = mdp.transition_row(s, a).iter().zip(&v).map(|(p, w)| p * w).sum();
                q[s][a] = mdp.reward(s, a) + gamma * ev;
            }
        }
        let mut change: f64 = 0.0;
        for s in 0..ns {
            let nv = if mdp.terminal(s) { 0.0 } else { soft_max(&q[s], entropy_scale) };
            change = change.max((nv - v[s]).abs());
            v[s] = nv;
        }
        if change <= tol {
            return Ok(q);
        }
    }
    bail!(Numerical, "soft value iteration did not converge in {MAX_SWEEPS} sweeps")
}

/// `c log sum exp(q / c)`.
pub fn soft_max(q: &[f64], c: f64) -> f64 {
    let m = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + c * q.iter().map(|x| ((x - m) / c).exp()).sum::<f64>().ln()
}

/// Stationary distribution of the augmented chain under `pi` by power
/// iteration from the uniform distribution.
pub fn steady_state(aug: &AugmentedFiniteMdp, pi: &Policy, tol: f64) -> Result<Vec<f64>> {
    let policy = aug.policy_table(pi)?;
    let n = aug.num_states();
    let mut d = vec![1.0 / n as f64; n];
    for _ in 0..MAX_SWEEPS {
        let mut next = vec![0.0; n];
        for x in 0..n {
            if d[x] == 0.0 {
                continue;
            }
            for (a, &pa) in policy[x].iter().enumerate() {
                for succ in aug.row(x, a) {
                    next[succ.next] += d[x] * pa * succ.prob;
                }
            }
        }
        let change = next.iter().zip(&d).map(|(p, q)| (p - q).abs()).sum::<f64>();
        d = next;
        if change <= tol {
            return Ok(d);
        }
    }
    bail!(Numerical, "power iteration did not converge in {MAX_SWEEPS} sweeps")
}

/// Base states reachable with positive probability from the initial
/// distribution; handy for picking start states.
pub fn initial_support(mdp: &FiniteMdp) -> Vec<usize> {
    (0..mdp.num_states()).filter(|&s| mdp.initial()[s] > 0.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::TabularPolicy;

    fn two_state() -> FiniteMdp {
        FiniteMdp::new(
            vec![1.0, 0.0],
            vec![vec![vec![0.75, 0.25], vec![0.25, 0.75]], vec![vec![0.5, 0.5], vec![0.0, 1.0]]],
            vec![vec![0.0, 1.0], vec![0.5, -1.0]],
            vec![false, false],
        )
        .unwrap()
    }

    #[test]
    fn counts_constant_delay_states() {
        let aug = AugmentedFiniteMdp::build(two_state(), DelayProcess::constant(1), DelayProcess::constant(1)).unwrap();
        assert_eq!(aug.num_states(), 8);
    }

    #[test]
    fn index_round_trip() {
        let aug = AugmentedFiniteMdp::build(
            two_state(),
            DelayProcess::histogram(vec![0.5, 0.5]).unwrap(),
            DelayProcess::histogram(vec![0.0, 0.5, 0.5]).unwrap(),
        )
        .unwrap();
        for x in 0..aug.num_states() {
            assert_eq!(aug.index(&aug.state(x)).unwrap(), x);
        }
    }

    #[test]
    fn rows_are_normalized() {
        let aug = AugmentedFiniteMdp::build(
            two_state(),
            DelayProcess::conditional(vec![vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap(),
            DelayProcess::histogram(vec![0.0, 0.25, 0.75]).unwrap(),
        )
        .unwrap();
        for x in 0..aug.num_states() {
            for a in 0..2 {
                let total: f64 = aug.row(x, a).iter().map(|s| s.prob).sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn size_guard() {
        let err = AugmentedFiniteMdp::build_with_buffer(two_state(), DelayProcess::constant(1), DelayProcess::constant(1), 20);
        assert!(matches!(err, Err(crate::Error::Capacity(_))));
    }

    #[test]
    fn geometric_loop_value() {
        let mdp = FiniteMdp::new(vec![1.0], vec![vec![vec![1.0]]], vec![vec![1.0]], vec![false]).unwrap();
        let aug = AugmentedFiniteMdp::build(mdp, DelayProcess::constant(0), DelayProcess::constant(1)).unwrap();
        let v = value_iteration(&aug, &Policy::Constant(Action::Discrete(0)), 0.5, 1e-14).unwrap();
        assert!(v.iter().all(|x| (x - 2.0).abs() < 1e-12));
    }

    #[test]
    fn soft_value_of_uniform_binary_policy() {
        let mdp = FiniteMdp::new(vec![1.0], vec![vec![vec![1.0], vec![1.0]]], vec![vec![0.0, 0.0]], vec![false]).unwrap();
        let aug = AugmentedFiniteMdp::build(mdp, DelayProcess::constant(0), DelayProcess::constant(1)).unwrap();
        let pi = Policy::Tabular(TabularPolicy::uniform_default(vec![0.5, 0.5]).unwrap());
        let v = soft_value_iteration(&aug, &pi, 0.5, 1.0, 1e-13).unwrap();
        let expected = core::f64::consts::LN_2 / 0.5;
        assert!(v.iter().all(|x| (x - expected).abs() < 1e-10));
        assert!((expected - 1.3863).abs() < 1e-4);
    }
}
