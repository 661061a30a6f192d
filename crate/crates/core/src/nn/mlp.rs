use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float;
use rand::{Rng, RngCore};

use super::{Activation, Matrix, Tape, Var};
use crate::error::{bail, Result};

/// A fully connected network with an activation on every hidden layer and a
/// linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: Activation,
    /// `[W_0, b_0, W_1, b_1, ...]` with `W_i` of shape `in x out` and `b_i`
    /// of shape `1 x out`.
    params: Vec<Matrix>,
}

impl Mlp {
    /// Weights and biases uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new(sizes: &[usize], activation: Activation, rng: &mut dyn RngCore) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            bail!(InvalidArgument, "an MLP needs at least two non-empty layers, got {sizes:?}");
        }
        let mut params = Vec::with_capacity(2 * (sizes.len() - 1));
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-bound..bound)).collect() };
            params.push(Matrix::from_vec(w[0], w[1], draw(w[0] * w[1])));
            params.push(Matrix::from_vec(1, w[1], draw(w[1])));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            activation,
            params,
        })
    }

    /// Rebuilds a network from its layer sizes and flattened parameters.
    pub fn from_flat(sizes: &[usize], activation: Activation, flat: &[f64]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            bail!(InvalidArgument, "an MLP needs at least two non-empty layers, got {sizes:?}");
        }
        let expected: usize = sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum();
        if flat.len() != expected {
            bail!(InvalidArgument, "expected {expected} parameters, got {}", flat.len());
        }
        let mut params = Vec::new();
        let mut at = 0;
        for w in sizes.windows(2) {
            params.push(Matrix::from_vec(w[0], w[1], flat[at..at + w[0] * w[1]].to_vec()));
            at += w[0] * w[1];
            params.push(Matrix::from_vec(1, w[1], flat[at..at + w[1]].to_vec()));
            at += w[1];
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            activation,
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_width(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_width(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn params(&self) -> &[Matrix] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Matrix] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.data.iter().copied()).collect()
    }

    /// Evaluates a batch (one input per row) without recording a tape.
    pub fn forward(&self, input: &Matrix) -> Matrix {
        let layers = self.params.len() / 2;
        let mut h = input.clone();
        for l in 0..layers {
            let mut z = h.matmul(&self.params[2 * l]);
            let b = &self.params[2 * l + 1];
            for row in z.data.chunks_mut(b.cols) {
                row.iter_mut().zip(&b.data).for_each(|(o, b)| *o += b);
            }
            if l + 1 < layers {
                let act = self.activation;
                z.data.iter_mut().for_each(|x| *x = act.apply(*x));
            }
            h = z;
        }
        h
    }

    /// Puts the parameters on a tape, trainable or frozen.
    pub fn to_tape(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| if trainable { tape.param(p.clone()) } else { tape.constant(p.clone()) })
            .collect()
    }

    /// Records a forward pass using parameter nodes from [`Mlp::to_tape`].
    pub fn forward_tape(&self, tape: &mut Tape, params: &[Var], input: Var) -> Var {
        let layers = params.len() / 2;
        let mut h = input;
        for l in 0..layers {
            let z = tape.matmul(h, params[2 * l]);
            let z = tape.add_row(z, params[2 * l + 1]);
            h = if l + 1 < layers { tape.activation(z, self.activation) } else { z };
        }
        h
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(params: &[Matrix], lr: f64) -> Self {
        let zeros = |p: &Matrix| Matrix::zeros(p.rows, p.cols);
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.iter().map(zeros).collect(),
            v: params.iter().map(zeros).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [Matrix], grads: &[Matrix]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            bail!(InvalidArgument, "optimizer state does not match the parameter list");
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            if p.data.len() != g.data.len() {
                bail!(InvalidArgument, "gradient shape does not match its parameter");
            }
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * gi;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m.data[i] / c1;
                let v_hat = v.data[i] / c2;
                p.data[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// `target <- tau * online + (1 - tau) * target`.
pub fn polyak_update(target: &mut Mlp, online: &Mlp, tau: f64) {
    for (t, o) in target.params.iter_mut().zip(&online.params) {
        for (x, y) in t.data.iter_mut().zip(&o.data) {
            *x = tau * y + (1.0 - tau) * *x;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use alloc::vec;

    #[test]
    fn parameter_count_matches_layer_sizes() {
        let net = Mlp::new(&[5, 8, 8, 2], Activation::Silu, &mut seeded(0)).unwrap();
        assert_eq!(net.param_count(), 6 * 8 + 9 * 8 + 9 * 2);
    }

    #[test]
    fn tape_and_plain_forward_agree() {
        let net = Mlp::new(&[3, 4, 2], Activation::Tanh, &mut seeded(1)).unwrap();
        let x = Matrix::from_vec(2, 3, vec![0.1, -0.2, 0.3, 1.0, 0.5, -1.5]);
        let mut tape = Tape::new();
        let p = net.to_tape(&mut tape, true);
        let xi = tape.constant(x.clone());
        let y = net.forward_tape(&mut tape, &p, xi);
        assert_eq!(tape.value(y), &net.forward(&x));
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut p = vec![Matrix::from_vec(1, 1, vec![0.0])];
        let mut adam = Adam::new(&p, 3e-4);
        adam.step(&mut p, &[Matrix::from_vec(1, 1, vec![1.0])]).unwrap();
        assert!((p[0].data[0].abs() - 3e-4).abs() < 1e-6);
    }

    #[test]
    fn adam_ignores_zero_gradient() {
        let mut p = vec![Matrix::from_vec(1, 2, vec![0.5, -0.5])];
        let mut adam = Adam::new(&p, 3e-4);
        adam.step(&mut p, &[Matrix::zeros(1, 2)]).unwrap();
        assert_eq!(p[0].data, vec![0.5, -0.5]);
    }

    #[test]
    fn polyak_extremes() {
        let online = Mlp::from_flat(&[1, 1], Activation::Silu, &[1.0, 1.0]).unwrap();
        let mut target = Mlp::from_flat(&[1, 1], Activation::Silu, &[0.0, 0.0]).unwrap();
        polyak_update(&mut target, &online, 0.005);
        assert_eq!(target.flat(), vec![0.005, 0.005]);
        let before = target.clone();
        polyak_update(&mut target, &online, 0.0);
        assert_eq!(target, before);
        polyak_update(&mut target, &online, 1.0);
        assert_eq!(target.flat(), online.flat());
    }

    #[test]
    fn flat_round_trip() {
        let net = Mlp::new(&[2, 3, 1], Activation::Relu, &mut seeded(4)).unwrap();
        let back = Mlp::from_flat(net.sizes(), Activation::Relu, &net.flat()).unwrap();
        assert_eq!(net, back);
    }
}
