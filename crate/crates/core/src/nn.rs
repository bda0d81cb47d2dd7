//! Minimal dense feedforward networks trained by plain SGD.
//!
//! Shared by the gain estimators and the feedforward classifier in the
//! oracle stack. Deliberately tiny: tanh/relu/identity activations, squared
//! or logistic losses built on top by callers, global-norm gradient clipping.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    // derivative expressed from pre-activation z and activation a
    fn deriv(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone)]
struct Layer {
    w: Vec<f64>, // out_dim x in_dim, row-major
    b: Vec<f64>,
    act: Activation,
    in_dim: usize,
    out_dim: usize,
}

impl Layer {
    fn forward(&self, x: &[f64], z: &mut Vec<f64>, a: &mut Vec<f64>) {
        z.clear();
        a.clear();
        for o in 0..self.out_dim {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let s = self.b[o] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
            z.push(s);
            a.push(self.act.apply(s));
        }
    }
}

/// Gradient buffer with the same shape as the network parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    w: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn reset(&mut self) {
        for g in self.w.iter_mut().flatten().chain(self.b.iter_mut().flatten()) {
            *g = 0.0;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.w.iter_mut().flatten().chain(self.b.iter_mut().flatten()) {
            *g *= s;
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.w
            .iter()
            .flatten()
            .chain(self.b.iter().flatten())
            .map(|g| g * g)
            .sum()
    }

    /// Rescales so the global L2 norm does not exceed `max_norm`.
    pub fn clip(&mut self, max_norm: f64) {
        let norm = self.squared_norm().sqrt();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Layer>,
}

impl Mlp {
    /// Builds a network with the given layer widths (`dims[0]` is the input
    /// dimension). Hidden layers use `hidden`, the last layer is linear.
    /// With `zero_output` the final layer starts at exactly zero, so an
    /// untrained network predicts 0 for every input.
    pub fn new(dims: &[usize], hidden: Activation, zero_output: bool, rng: &mut ChaCha8Rng) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for i in 0..dims.len() - 1 {
            let (in_dim, out_dim) = (dims[i], dims[i + 1]);
            let last = i == dims.len() - 2;
            let act = if last { Activation::Identity } else { hidden };
            let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
            let w = (0..in_dim * out_dim)
                .map(|_| {
                    if last && zero_output {
                        // still consume the stream so toggling zero_output
                        // does not shift later draws
                        let _ = rng.random::<f64>();
                        0.0
                    } else {
                        rng.random_range(-bound..bound)
                    }
                })
                .collect();
            layers.push(Layer { w, b: vec![0.0; out_dim], act, in_dim, out_dim });
        }
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let (mut z, mut a) = (Vec::new(), Vec::new());
        for l in &self.layers {
            l.forward(&cur, &mut z, &mut a);
            cur.clone_from(&a);
        }
        cur
    }

    /// Scalar-output convenience.
    pub fn forward1(&self, x: &[f64]) -> f64 {
        self.forward(x)[0]
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            w: self.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            b: self.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        }
    }

    /// Backpropagates `grad_out` (dL/d output) for input `x`, accumulating
    /// parameter gradients into `grads`; returns dL/d input.
    pub fn backward(&self, x: &[f64], grad_out: &[f64], grads: &mut Gradients) -> Vec<f64> {
        let n = self.layers.len();
        // forward pass keeping every layer's input, pre-activation and output
        let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut zs: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut cur = x.to_vec();
        for l in &self.layers {
            let (mut z, mut a) = (Vec::new(), Vec::new());
            l.forward(&cur, &mut z, &mut a);
            inputs.push(cur);
            zs.push(z);
            cur = a;
        }

        let mut delta = grad_out.to_vec();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let z = &zs[i];
            let inp = &inputs[i];
            // fold activation derivative into delta
            for (d, &zv) in delta.iter_mut().zip(z.iter()) {
                *d *= l.act.deriv(zv, l.act.apply(zv));
            }
            let (gw, gb) = (&mut grads.w[i], &mut grads.b[i]);
            let mut grad_in = vec![0.0; l.in_dim];
            for o in 0..l.out_dim {
                gb[o] += delta[o];
                let row = &l.w[o * l.in_dim..(o + 1) * l.in_dim];
                for (j, (&wv, &xv)) in row.iter().zip(inp.iter()).enumerate() {
                    gw[o * l.in_dim + j] += delta[o] * xv;
                    grad_in[j] += delta[o] * wv;
                }
            }
            delta = grad_in;
        }
        delta
    }

    /// One SGD step: `theta -= lr * grad`.
    pub fn apply_gradients(&mut self, grads: &Gradients, lr: f64) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            for (w, g) in l.w.iter_mut().zip(grads.w[i].iter()) {
                *w -= lr * g;
            }
            for (b, g) in l.b.iter_mut().zip(grads.b[i].iter()) {
                *b -= lr * g;
            }
        }
    }

    /// Flat parameter vector (weights then biases, layer by layer).
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<(), usize> {
        if flat.len() != self.param_count() {
            return Err(self.param_count());
        }
        let mut at = 0;
        for l in &mut self.layers {
            let (nw, nb) = (l.w.len(), l.b.len());
            l.w.copy_from_slice(&flat[at..at + nw]);
            at += nw;
            l.b.copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }
}
