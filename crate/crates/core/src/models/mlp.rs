//! Two-hidden-layer perceptron trained by mini-batch Adam.
//!
//! Classification uses a sigmoid output with log loss, regression a linear
//! output with squared loss (clamped to [0, 1] by the caller at predict time).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{sigmoid, Task};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn grad_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => f64::from(u8::from(a > 0.0)),
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::usage(format!("unknown activation {other:?} (relu|tanh)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden: [usize; 2],
    pub activation: Activation,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden: [64, 32],
            activation: Activation::Relu,
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 256,
        }
    }
}

/// Dense layer; `weights` is `outputs × inputs`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let w = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            out.push(self.bias[o] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>());
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub activation: Activation,
    pub layers: Vec<Layer>,
}

impl Network {
    /// Returns the activations of every layer, input included; the last entry
    /// is the pre-link output.
    fn forward_all(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.forward(acts.last().unwrap(), &mut z);
            if i + 1 < self.layers.len() {
                z.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            acts.push(z);
        }
        acts
    }

    pub fn output(&self, x: &[f64]) -> f64 {
        self.forward_all(x).last().unwrap()[0]
    }

    pub fn predict(&self, x: &[f64], task: Task) -> f64 {
        match task {
            Task::Classification => sigmoid(self.output(x)),
            Task::Regression => self.output(x),
        }
    }
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

pub fn fit(task: Task, x: &[Vec<f64>], y: &[f64], p: &MlpParams, seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = x.first().map_or(0, Vec::len);
    let widths = [d, p.hidden[0], p.hidden[1], 1];
    let mut layers = Vec::new();
    for w in widths.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let scale = match p.activation {
            Activation::Relu => (2.0 / fan_in.max(1) as f64).sqrt(),
            Activation::Tanh => (1.0 / fan_in.max(1) as f64).sqrt(),
        };
        let normal = Normal::new(0.0, scale).expect("finite scale");
        layers.push(Layer {
            inputs: fan_in,
            outputs: fan_out,
            weights: (0..fan_in * fan_out).map(|_| normal.sample(&mut rng)).collect(),
            bias: vec![0.0; fan_out],
        });
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    layers[2].bias[0] = match task {
        Task::Regression => mean,
        Task::Classification => {
            let m = mean.clamp(1e-6, 1.0 - 1e-6);
            (m / (1.0 - m)).ln()
        }
    };
    let mut net = Network {
        activation: p.activation,
        layers,
    };

    let param_sizes: Vec<usize> = net
        .layers
        .iter()
        .flat_map(|l| [l.weights.len(), l.bias.len()])
        .collect();
    let zeros = || param_sizes.iter().map(|&s| vec![0.0; s]).collect::<Vec<_>>();
    let mut adam = Adam {
        m: zeros(),
        v: zeros(),
        t: 0,
    };
    let mut order: Vec<usize> = (0..x.len()).collect();
    for _ in 0..p.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(p.batch_size) {
            let mut grads = zeros();
            for &i in batch {
                accumulate_gradient(&net, &x[i], y[i], task, &mut grads);
            }
            let scale = 1.0 / batch.len() as f64;
            adam.t += 1;
            let c1 = 1.0 - BETA1.powi(adam.t);
            let c2 = 1.0 - BETA2.powi(adam.t);
            for (k, layer) in net.layers.iter_mut().enumerate() {
                for (slot, params) in [(2 * k, &mut layer.weights), (2 * k + 1, &mut layer.bias)] {
                    for (j, w) in params.iter_mut().enumerate() {
                        let g = grads[slot][j] * scale;
                        let m = &mut adam.m[slot][j];
                        let v = &mut adam.v[slot][j];
                        *m = BETA1 * *m + (1.0 - BETA1) * g;
                        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                        *w -= p.learning_rate * (*m / c1) / ((*v / c2).sqrt() + EPS);
                    }
                }
            }
        }
    }
    net
}

fn accumulate_gradient(net: &Network, x: &[f64], y: f64, task: Task, grads: &mut [Vec<f64>]) {
    let acts = net.forward_all(x);
    let out = acts.last().unwrap()[0];
    let mut delta = vec![match task {
        Task::Classification => sigmoid(out) - y,
        Task::Regression => out - y,
    }];
    for k in (0..net.layers.len()).rev() {
        let layer = &net.layers[k];
        let input = &acts[k];
        let (gw, rest) = grads[2 * k..].split_at_mut(1);
        let gw = &mut gw[0];
        let gb = &mut rest[0];
        for o in 0..layer.outputs {
            gb[o] += delta[o];
            let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
            for (g, a) in row.iter_mut().zip(input) {
                *g += delta[o] * a;
            }
        }
        if k == 0 {
            break;
        }
        let mut prev = vec![0.0; layer.inputs];
        for o in 0..layer.outputs {
            let w = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
            for (pd, wi) in prev.iter_mut().zip(w) {
                *pd += delta[o] * wi;
            }
        }
        for (pd, a) in prev.iter_mut().zip(input) {
            *pd *= net.activation.grad_from_output(*a);
        }
        delta = prev;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_matches_finite_differences() {
        let x: Vec<Vec<f64>> = vec![vec![0.3, -1.2, 0.8]];
        let y = [1.0];
        let p = MlpParams {
            hidden: [4, 3],
            activation: Activation::Tanh,
            epochs: 1,
            batch_size: 1,
            learning_rate: 1e-9,
        };
        let net = fit(Task::Classification, &x, &y, &p, 3);
        let loss = |n: &Network| {
            let pr = sigmoid(n.output(&x[0]));
            -(y[0] * pr.ln() + (1.0 - y[0]) * (1.0 - pr).ln())
        };
        let mut grads: Vec<Vec<f64>> = net
            .layers
            .iter()
            .flat_map(|l| [vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]])
            .collect();
        accumulate_gradient(&net, &x[0], y[0], Task::Classification, &mut grads);
        let h = 1e-6;
        for k in 0..net.layers.len() {
            for j in 0..net.layers[k].weights.len() {
                let mut a = net.clone();
                a.layers[k].weights[j] += h;
                let mut b = net.clone();
                b.layers[k].weights[j] -= h;
                let fd = (loss(&a) - loss(&b)) / (2.0 * h);
                assert!((fd - grads[2 * k][j]).abs() < 1e-6, "layer {k} w{j}: {fd} vs {}", grads[2 * k][j]);
            }
        }
    }
}
