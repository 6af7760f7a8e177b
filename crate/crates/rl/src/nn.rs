//! Dense feed-forward networks with hand-written backpropagation.
//!
//! Batches are row-major `batch × width` slices. Weights are stored
//! `fan_in × fan_out` so both the forward pass and the weight gradient are
//! sequences of contiguous axpy updates.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RlError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub fan_in: usize,
    pub fan_out: usize,
    /// `w[i * fan_out + j]` connects input `i` to output `j`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            fan_in,
            fan_out,
            w: vec![0.0; fan_in * fan_out],
            b: vec![0.0; fan_out],
        }
    }

    pub fn uniform<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, limit: f64, rng: &mut R) -> Self {
        let mut d = Self::zeros(fan_in, fan_out);
        if limit > 0.0 {
            d.w.iter_mut().for_each(|x| *x = rng.gen_range(-limit..limit));
            d.b.iter_mut().for_each(|x| *x = rng.gen_range(-limit..limit));
        }
        d
    }

    fn forward(&self, x: &[f64], batch: usize, out: &mut Vec<f64>) {
        out.clear();
        out.resize(batch * self.fan_out, 0.0);
        for (xr, yr) in x
            .chunks_exact(self.fan_in)
            .zip(out.chunks_exact_mut(self.fan_out))
        {
            yr.copy_from_slice(&self.b);
            for (&xi, wr) in xr.iter().zip(self.w.chunks_exact(self.fan_out)) {
                if xi != 0.0 {
                    axpy(xi, wr, yr);
                }
            }
        }
    }

    fn num_params(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    /// `y_j = scale_j · tanh(z_j)`, so `|y_j| ≤ scale_j` exactly.
    Tanh {
        scale: Vec<f64>,
    },
}

/// Rectifier hidden layers followed by an output squashing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub output: OutputActivation,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    batch: usize,
    /// `acts[0]` is the input; `acts[k]` is the post-activation of layer `k - 1`.
    acts: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Gradients shaped like the network's layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    pub layers: Vec<Dense>,
}

impl Grads {
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(&l.b).copied())
            .collect()
    }
}

impl Mlp {
    /// Hidden layers and biases uniform in `±1/sqrt(fan_in)`; the final layer
    /// uniform in `±final_limit` (zero when `final_limit == 0`).
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        output: OutputActivation,
        final_limit: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(RlError::Config(format!("invalid layer sizes {sizes:?}")));
        }
        let out_dim = sizes[sizes.len() - 1];
        if let OutputActivation::Tanh { scale } = &output {
            if scale.len() != out_dim || scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                return Err(RlError::Config(format!(
                    "output scale must have {out_dim} finite positive entries"
                )));
            }
        }
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let limit = if k == last {
                    final_limit
                } else {
                    1.0 / (w[0] as f64).sqrt()
                };
                Dense::uniform(w[0], w[1], limit, rng)
            })
            .collect();
        Ok(Self { layers, output })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Dense::num_params).sum()
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.fan_out))
            .collect()
    }

    /// Forward pass over a batch, recording activations into `tape`.
    pub fn forward_tape(&self, x: &[f64], batch: usize, tape: &mut Tape) {
        debug_assert_eq!(x.len(), batch * self.input_dim());
        let n = self.layers.len();
        tape.batch = batch;
        tape.acts.resize_with(n + 1, Vec::new);
        tape.acts[0].clear();
        tape.acts[0].extend_from_slice(x);
        for (k, layer) in self.layers.iter().enumerate() {
            let (done, rest) = tape.acts.split_at_mut(k + 1);
            let out = &mut rest[0];
            layer.forward(&done[k], batch, out);
            if k + 1 < n {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            } else if let OutputActivation::Tanh { scale } = &self.output {
                for row in out.chunks_exact_mut(layer.fan_out) {
                    for (v, s) in row.iter_mut().zip(scale) {
                        *v = s * v.tanh();
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &[f64], batch: usize) -> Vec<f64> {
        let mut tape = Tape::default();
        self.forward_tape(x, batch, &mut tape);
        tape.acts.pop().unwrap_or_default()
    }

    /// Backpropagates `d_out = ∂L/∂output` through the taped pass.
    ///
    /// Returns `∂L/∂input`; parameter gradients are written to `grads` when given.
    pub fn backward(&self, tape: &Tape, d_out: &[f64], mut grads: Option<&mut Grads>) -> Vec<f64> {
        let batch = tape.batch;
        let n = self.layers.len();
        let mut delta = d_out.to_vec();
        if let OutputActivation::Tanh { scale } = &self.output {
            let width = self.output_dim();
            for (drow, yrow) in delta
                .chunks_exact_mut(width)
                .zip(tape.acts[n].chunks_exact(width))
            {
                for ((d, &y), &s) in drow.iter_mut().zip(yrow).zip(scale) {
                    let t = y / s;
                    *d *= s * (1.0 - t * t);
                }
            }
        }
        if let Some(g) = grads.as_deref_mut() {
            for l in &mut g.layers {
                l.w.iter_mut().for_each(|x| *x = 0.0);
                l.b.iter_mut().for_each(|x| *x = 0.0);
            }
        }
        for k in (0..n).rev() {
            let layer = &self.layers[k];
            let input = &tape.acts[k];
            if let Some(g) = grads.as_deref_mut() {
                let gl = &mut g.layers[k];
                for (xr, dr) in input
                    .chunks_exact(layer.fan_in)
                    .zip(delta.chunks_exact(layer.fan_out))
                {
                    axpy(1.0, dr, &mut gl.b);
                    for (&xi, gw) in xr.iter().zip(gl.w.chunks_exact_mut(layer.fan_out)) {
                        if xi != 0.0 {
                            axpy(xi, dr, gw);
                        }
                    }
                }
            }
            let mut d_in = vec![0.0; batch * layer.fan_in];
            for (dir, dr) in d_in
                .chunks_exact_mut(layer.fan_in)
                .zip(delta.chunks_exact(layer.fan_out))
            {
                for (di, wr) in dir.iter_mut().zip(layer.w.chunks_exact(layer.fan_out)) {
                    *di = dot(wr, dr);
                }
            }
            if k > 0 {
                // Rectifier derivative, taken as 0 at the kink.
                for (d, &a) in d_in.iter_mut().zip(input) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            delta = d_in;
        }
        delta
    }

    pub fn zero_grads(&self) -> Grads {
        Grads {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.fan_in, l.fan_out))
                .collect(),
        }
    }

    /// `θ_target ← τ·θ + (1 − τ)·θ_target`. `τ = 1` copies exactly.
    pub fn soft_update_into(&self, target: &mut Mlp, tau: f64) {
        for (src, dst) in self.layers.iter().zip(&mut target.layers) {
            if tau == 1.0 {
                dst.w.copy_from_slice(&src.w);
                dst.b.copy_from_slice(&src.b);
            } else if tau != 0.0 {
                for (d, &s) in dst.w.iter_mut().zip(&src.w).chain(dst.b.iter_mut().zip(&src.b)) {
                    *d += tau * (s - *d);
                }
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(&l.b).all(|x| x.is_finite()))
    }

    fn param_mut(&mut self, mut idx: usize) -> &mut f64 {
        for l in &mut self.layers {
            if idx < l.w.len() {
                return &mut l.w[idx];
            }
            idx -= l.w.len();
            if idx < l.b.len() {
                return &mut l.b[idx];
            }
            idx -= l.b.len();
        }
        panic!("parameter index out of range")
    }
}

/// Adam with bias correction, one moment pair per parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Dense>,
    v: Vec<Dense>,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        let zeros: Vec<Dense> = net
            .layers
            .iter()
            .map(|l| Dense::zeros(l.fan_in, l.fan_out))
            .collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Descends along `grads`.
    pub fn step(&mut self, net: &mut Mlp, grads: &Grads) {
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let step = self.lr * c2.sqrt() / c1;
        let eps_hat = self.eps * c2.sqrt();
        let (b1, b2) = (self.beta1, self.beta2);
        for (((layer, g), m), v) in net
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
                for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= step * *m / (v.sqrt() + eps_hat);
                }
            };
            update(&mut layer.w, &g.w, &mut m.w, &mut v.w);
            update(&mut layer.b, &g.b, &mut m.b, &mut v.b);
        }
    }
}

/// Floor of the relative-error denominator in [`gradient_check`], so that
/// parameters whose true gradient vanishes are compared absolutely.
pub const GRADIENT_CHECK_FLOOR: f64 = 1e-6;
pub const GRADIENT_CHECK_STEP: f64 = 1e-5;

/// Maps a network output to `(L, ∂L/∂output)`.
pub type Loss = dyn Fn(&[f64]) -> (f64, Vec<f64>);

/// Outcome of [`gradient_check`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub max_rel_error: f64,
    pub compared: usize,
    /// Components whose `±h` probes flip a rectifier, where the loss is not
    /// differentiable and central differences are meaningless.
    pub skipped_at_kinks: usize,
}

/// Rectifier on/off pattern of every hidden unit for every sample.
fn relu_pattern(tape: &Tape) -> Vec<bool> {
    let n = tape.acts.len() - 1;
    tape.acts[1..n]
        .iter()
        .flat_map(|a| a.iter().map(|&v| v > 0.0))
        .collect()
}

/// Largest relative disagreement between backpropagated and central-difference
/// gradients of `loss(net(x))`, over all parameters and all inputs.
///
/// `loss` maps the network output to `(L, ∂L/∂output)`. The relative error of
/// a component is `|g_a − g_n| / max(|g_a|, |g_n|, GRADIENT_CHECK_FLOOR)`.
pub fn gradient_check(net: &Mlp, x: &[f64], batch: usize, loss: &Loss) -> GradientCheck {
    let h = GRADIENT_CHECK_STEP;
    let mut tape = Tape::default();
    net.forward_tape(x, batch, &mut tape);
    let pattern = relu_pattern(&tape);
    let (_, d_out) = loss(tape.output());
    let mut grads = net.zero_grads();
    let d_in = net.backward(&tape, &d_out, Some(&mut grads));
    let analytic = grads.flat();

    let mut report = GradientCheck {
        max_rel_error: 0.0,
        compared: 0,
        skipped_at_kinks: 0,
    };
    let mut probe_tape = Tape::default();
    let mut eval = |net: &Mlp, x: &[f64]| -> (f64, bool) {
        net.forward_tape(x, batch, &mut probe_tape);
        (loss(probe_tape.output()).0, relu_pattern(&probe_tape) == pattern)
    };
    let mut record = |a: f64, up: (f64, bool), dn: (f64, bool)| {
        if !(up.1 && dn.1) {
            report.skipped_at_kinks += 1;
            return;
        }
        let n = (up.0 - dn.0) / (2.0 * h);
        let rel = (a - n).abs() / a.abs().max(n.abs()).max(GRADIENT_CHECK_FLOOR);
        report.max_rel_error = report.max_rel_error.max(rel);
        report.compared += 1;
    };
    let mut probe = net.clone();
    for (i, &a) in analytic.iter().enumerate() {
        let orig = *probe.param_mut(i);
        *probe.param_mut(i) = orig + h;
        let up = eval(&probe, x);
        *probe.param_mut(i) = orig - h;
        let dn = eval(&probe, x);
        *probe.param_mut(i) = orig;
        record(a, up, dn);
    }
    let mut xp = x.to_vec();
    for (i, &a) in d_in.iter().enumerate() {
        let orig = xp[i];
        xp[i] = orig + h;
        let up = eval(net, &xp);
        xp[i] = orig - h;
        let dn = eval(net, &xp);
        xp[i] = orig;
        record(a, up, dn);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quadratic(y: &[f64]) -> (f64, Vec<f64>) {
        (0.5 * y.iter().map(|v| v * v).sum::<f64>(), y.to_vec())
    }

    fn random_batch(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn forward_matches_hand_computation() {
        let net = Mlp {
            layers: vec![
                Dense {
                    fan_in: 2,
                    fan_out: 2,
                    w: vec![1.0, -1.0, 2.0, 0.5],
                    b: vec![0.0, 0.1],
                },
                Dense {
                    fan_in: 2,
                    fan_out: 1,
                    w: vec![1.0, 2.0],
                    b: vec![-0.5],
                },
            ],
            output: OutputActivation::Identity,
        };
        // Hidden pre-activations: (1·1 + 2·1, −1 + 0.5 + 0.1) = (3, −0.4) → relu (3, 0).
        assert_eq!(net.forward(&[1.0, 1.0], 1), vec![2.5]);
    }

    #[test]
    fn linear_net_gradient_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Mlp::new(&[3, 2], OutputActivation::Identity, 0.5, &mut rng).unwrap();
        let x = random_batch(&mut rng, 5 * 3);
        assert!(gradient_check(&net, &x, 5, &quadratic).max_rel_error <= 1e-8);
    }

    #[test]
    fn deep_actor_gradient_within_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Mlp::new(
            &[4, 16, 16, 1],
            OutputActivation::Tanh { scale: vec![2.0] },
            0.3,
            &mut rng,
        )
        .unwrap();
        let x = random_batch(&mut rng, 8 * 4);
        let gc = gradient_check(&net, &x, 8, &quadratic);
        assert!(gc.max_rel_error <= 1e-4);
        assert!(gc.skipped_at_kinks * 100 <= gc.compared);
    }

    #[test]
    fn zero_input_gives_finite_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let net = Mlp::new(&[4, 8, 8, 1], OutputActivation::Identity, 0.1, &mut rng).unwrap();
        let x = vec![0.0; 4 * 3];
        let mut tape = Tape::default();
        net.forward_tape(&x, 3, &mut tape);
        let mut g = net.zero_grads();
        let d_in = net.backward(&tape, &[1.0; 3], Some(&mut g));
        assert!(g.flat().iter().chain(&d_in).all(|v| v.is_finite()));
    }

    #[test]
    fn tanh_output_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = Mlp::new(
            &[2, 8, 2],
            OutputActivation::Tanh {
                scale: vec![1.5, 0.5],
            },
            10.0,
            &mut rng,
        )
        .unwrap();
        let x: Vec<f64> = (0..2000).map(|_| rng.gen_range(-100.0..100.0)).collect();
        for row in net.forward(&x, 1000).chunks(2) {
            assert!(row[0].abs() <= 1.5 && row[1].abs() <= 0.5);
        }
    }

    #[test]
    fn zero_final_layer_outputs_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net = Mlp::new(
            &[3, 8, 1],
            OutputActivation::Tanh { scale: vec![3.0] },
            0.0,
            &mut rng,
        )
        .unwrap();
        assert_eq!(net.forward(&[0.3, -2.0, 5.0], 1), vec![0.0]);
    }

    #[test]
    fn soft_update_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = Mlp::new(&[2, 4, 1], OutputActivation::Identity, 0.1, &mut rng).unwrap();
        let b = Mlp::new(&[2, 4, 1], OutputActivation::Identity, 0.1, &mut rng).unwrap();
        let mut t = b.clone();
        a.soft_update_into(&mut t, 0.0);
        assert_eq!(t, b);
        a.soft_update_into(&mut t, 1.0);
        assert_eq!(t, a);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut net = Mlp::new(&[2, 1], OutputActivation::Identity, 1.0, &mut rng).unwrap();
        let mut opt = Adam::new(&net, 0.05);
        let x = [1.0, 2.0];
        let mut tape = Tape::default();
        let mut g = net.zero_grads();
        for _ in 0..500 {
            net.forward_tape(&x, 1, &mut tape);
            let y = tape.output()[0];
            net.backward(&tape, &[y - 3.0], Some(&mut g));
            opt.step(&mut net, &g);
        }
        assert!((net.forward(&x, 1)[0] - 3.0).abs() < 1e-3);
    }
}
